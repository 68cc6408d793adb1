//! Convex feasibility descriptions over edge-indexed vectors: the design set
//! X, the coordinator set S′ and the attacker polytope P.
//!
//! A set is a box, an optional budget Σ z ≤ cap, optional per-node degree
//! caps, and index sets pinned to the lower bound (`forbidden`) or to one
//! (`fixed_one`).

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::graph::Graph;

/// Absolute tolerance for membership and de-duplication.
pub const MEMBERSHIP_TOL: f64 = 1e-9;

/// Largest number of free coordinates [`LinearConstraintSet::enumerate_binary`] accepts.
pub const MAX_FREE_BINARY: usize = 25;

/// Largest dimension [`LinearConstraintSet::enumerate_vertices`] accepts.
pub const MAX_VERTEX_DIM: usize = 20;

#[derive(Debug, Clone, PartialEq)]
pub struct DegreeCap {
    pub node: usize,
    pub cap: f64,
    pub edges: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinearConstraintSet {
    lower: Vec<f64>,
    upper: Vec<f64>,
    budget: Option<f64>,
    degree_caps: Vec<DegreeCap>,
    forbidden: BTreeSet<usize>,
    fixed_one: BTreeSet<usize>,
}

impl LinearConstraintSet {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        check_len(lower.len(), upper.len())?;
        if let Some(l) = (0..lower.len()).find(|&l| lower[l] > upper[l]) {
            return Err(Error::Domain(format!(
                "lower[{}] = {} exceeds upper = {}",
                l + 1,
                lower[l],
                upper[l]
            )));
        }
        Ok(Self {
            lower,
            upper,
            budget: None,
            degree_caps: Vec::new(),
            forbidden: BTreeSet::new(),
            fixed_one: BTreeSet::new(),
        })
    }

    /// The unit box [0, 1]^m.
    pub fn unit_box(m: usize) -> Self {
        Self::new(vec![0.0; m], vec![1.0; m]).expect("valid box")
    }

    pub fn uniform_box(m: usize, lo: f64, hi: f64) -> Result<Self> {
        Self::new(vec![lo; m], vec![hi; m])
    }

    pub fn with_budget(mut self, cap: f64) -> Self {
        self.budget = Some(cap);
        self
    }

    /// Degree caps keyed by 0-based node.
    pub fn with_degree_caps(mut self, graph: &Graph, caps: &BTreeMap<usize, f64>) -> Result<Self> {
        check_len(self.dim(), graph.m())?;
        for (&node, &cap) in caps {
            if node >= graph.n() {
                return Err(Error::Domain(format!("degree cap on unknown node {}", node + 1)));
            }
            self.degree_caps.push(DegreeCap { node, cap, edges: graph.incident(node) });
        }
        Ok(self)
    }

    pub fn with_forbidden(mut self, idx: impl IntoIterator<Item = usize>) -> Result<Self> {
        for l in idx {
            self.check_index(l)?;
            self.forbidden.insert(l);
        }
        self.check_disjoint()?;
        Ok(self)
    }

    pub fn with_fixed_one(mut self, idx: impl IntoIterator<Item = usize>) -> Result<Self> {
        for l in idx {
            self.check_index(l)?;
            self.fixed_one.insert(l);
        }
        self.check_disjoint()?;
        Ok(self)
    }

    fn check_index(&self, l: usize) -> Result<()> {
        if l >= self.dim() {
            return Err(Error::Domain(format!("edge index {} out of range 1..={}", l + 1, self.dim())));
        }
        Ok(())
    }

    fn check_disjoint(&self) -> Result<()> {
        if let Some(l) = self.forbidden.intersection(&self.fixed_one).next() {
            return Err(Error::Domain(format!("edge {} is both forbidden and fixed", l + 1)));
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn budget(&self) -> Option<f64> {
        self.budget
    }

    pub fn degree_caps(&self) -> &[DegreeCap] {
        &self.degree_caps
    }

    pub fn forbidden(&self) -> &BTreeSet<usize> {
        &self.forbidden
    }

    pub fn fixed_one(&self) -> &BTreeSet<usize> {
        &self.fixed_one
    }

    /// Bounds after applying `forbidden` and `fixed_one`.
    pub fn effective_bounds(&self, l: usize) -> (f64, f64) {
        if self.forbidden.contains(&l) {
            (self.lower[l], self.lower[l])
        } else if self.fixed_one.contains(&l) {
            (1.0, 1.0)
        } else {
            (self.lower[l], self.upper[l])
        }
    }

    pub fn contains(&self, z: &[f64]) -> Result<bool> {
        check_len(self.dim(), z.len())?;
        let tol = MEMBERSHIP_TOL;
        for (l, &zl) in z.iter().enumerate() {
            let (lo, hi) = self.effective_bounds(l);
            if zl < lo - tol || zl > hi + tol {
                return Ok(false);
            }
        }
        if let Some(cap) = self.budget {
            if z.iter().sum::<f64>() > cap + tol {
                return Ok(false);
            }
        }
        for dc in &self.degree_caps {
            if dc.edges.iter().map(|&l| z[l]).sum::<f64>() > dc.cap + tol {
                return Ok(false);
            }
        }
        Ok(true)
    }

    pub fn contains_binary(&self, z: &[u8]) -> Result<bool> {
        let zf: Vec<f64> = z.iter().map(|&b| f64::from(b)).collect();
        self.contains(&zf)
    }

    /// Indices of constraints active at `z` within tolerance, as outward
    /// normals. Used to test that attacker optima sit on the boundary.
    pub fn active_normals(&self, z: &[f64]) -> Result<Vec<Vec<f64>>> {
        check_len(self.dim(), z.len())?;
        let m = self.dim();
        let tol = MEMBERSHIP_TOL;
        let mut normals = Vec::new();
        let unit = |l: usize, sign: f64| {
            let mut a = vec![0.0; m];
            a[l] = sign;
            a
        };
        for (l, &zl) in z.iter().enumerate() {
            let (lo, hi) = self.effective_bounds(l);
            if (zl - lo).abs() <= tol {
                normals.push(unit(l, -1.0));
            }
            if (zl - hi).abs() <= tol {
                normals.push(unit(l, 1.0));
            }
        }
        if let Some(cap) = self.budget {
            if (z.iter().sum::<f64>() - cap).abs() <= tol {
                normals.push(vec![1.0; m]);
            }
        }
        for dc in &self.degree_caps {
            if (dc.edges.iter().map(|&l| z[l]).sum::<f64>() - dc.cap).abs() <= tol {
                let mut a = vec![0.0; m];
                dc.edges.iter().for_each(|&l| a[l] = 1.0);
                normals.push(a);
            }
        }
        Ok(normals)
    }

    /// Exact extreme points of box ∩ {Σ z ≤ cap}, sorted lexicographically.
    ///
    /// Box vertices satisfying the budget, plus every point where the budget
    /// hyperplane crosses a box edge strictly between its endpoints.
    pub fn enumerate_vertices(&self) -> Result<VertexList> {
        if !self.degree_caps.is_empty() {
            return Err(Error::Unsupported(
                "vertex enumeration supports box and budget constraints only".into(),
            ));
        }
        let m = self.dim();
        let bounds: Vec<(f64, f64)> = (0..m).map(|l| self.effective_bounds(l)).collect();
        let free: Vec<usize> = (0..m).filter(|&l| bounds[l].1 - bounds[l].0 > MEMBERSHIP_TOL).collect();
        if free.len() > MAX_VERTEX_DIM {
            return Err(Error::SizeCap {
                what: "vertex enumeration dimension".into(),
                count: free.len() as u128,
                cap: MAX_VERTEX_DIM as u128,
            });
        }
        let base_sum: f64 = (0..m).map(|l| bounds[l].0).sum();
        if let Some(cap) = self.budget {
            if base_sum > cap + MEMBERSHIP_TOL {
                return Err(Error::Infeasible(format!(
                    "budget {cap} is below the sum of lower bounds {base_sum}"
                )));
            }
        }
        let cap = self.budget.unwrap_or(f64::INFINITY);
        let mut out = Vec::new();
        for mask in 0u64..(1u64 << free.len()) {
            let mut z: Vec<f64> = bounds.iter().map(|b| b.0).collect();
            for (bit, &l) in free.iter().enumerate() {
                if mask >> bit & 1 == 1 {
                    z[l] = bounds[l].1;
                }
            }
            let sum: f64 = z.iter().sum();
            if sum <= cap + MEMBERSHIP_TOL {
                // crossings along edges leaving this vertex upward
                for (bit, &l) in free.iter().enumerate() {
                    if mask >> bit & 1 == 0 {
                        let width = bounds[l].1 - bounds[l].0;
                        let slack = cap - sum;
                        if slack > MEMBERSHIP_TOL && slack < width - MEMBERSHIP_TOL {
                            let mut c = z.clone();
                            c[l] = bounds[l].0 + slack;
                            out.push(c);
                        }
                    }
                }
                out.push(z);
            }
        }
        out.sort_by(|a, b| lex_cmp_f64(a, b));
        out.dedup_by(|a, b| a.iter().zip(b.iter()).all(|(x, y)| (x - y).abs() <= MEMBERSHIP_TOL));
        Ok(VertexList { vertices: out })
    }

    /// All binary points of the set in lexicographic order (index 1 most
    /// significant, 0 before 1).
    pub fn enumerate_binary(&self) -> Result<Vec<Vec<u8>>> {
        let m = self.dim();
        let mut choices: Vec<&'static [u8]> = Vec::with_capacity(m);
        for l in 0..m {
            let (lo, hi) = self.effective_bounds(l);
            let zero = lo <= MEMBERSHIP_TOL && hi >= -MEMBERSHIP_TOL;
            let one = lo <= 1.0 + MEMBERSHIP_TOL && hi >= 1.0 - MEMBERSHIP_TOL;
            choices.push(match (zero, one) {
                (true, true) => &[0, 1],
                (true, false) => &[0],
                (false, true) => &[1],
                (false, false) => return Ok(Vec::new()),
            });
        }
        let free = choices.iter().filter(|c| c.len() == 2).count();
        if free > MAX_FREE_BINARY {
            return Err(Error::SizeCap {
                what: "binary enumeration free indices".into(),
                count: free as u128,
                cap: MAX_FREE_BINARY as u128,
            });
        }
        // per-edge list of degree caps touching it, for incremental pruning
        let mut caps_of = vec![Vec::new(); m];
        for (c, dc) in self.degree_caps.iter().enumerate() {
            for &l in &dc.edges {
                caps_of[l].push(c);
            }
        }
        let mut out = Vec::new();
        let mut z = vec![0u8; m];
        let mut cap_load = vec![0.0; self.degree_caps.len()];
        self.dfs(0, &choices, &caps_of, &mut z, 0.0, &mut cap_load, &mut out);
        Ok(out)
    }

    #[allow(clippy::too_many_arguments)]
    fn dfs(
        &self,
        l: usize,
        choices: &[&[u8]],
        caps_of: &[Vec<usize>],
        z: &mut Vec<u8>,
        sum: f64,
        cap_load: &mut Vec<f64>,
        out: &mut Vec<Vec<u8>>,
    ) {
        if l == z.len() {
            out.push(z.clone());
            return;
        }
        for &b in choices[l] {
            if b == 1 {
                if let Some(cap) = self.budget {
                    if sum + 1.0 > cap + MEMBERSHIP_TOL {
                        continue;
                    }
                }
                if caps_of[l]
                    .iter()
                    .any(|&c| cap_load[c] + 1.0 > self.degree_caps[c].cap + MEMBERSHIP_TOL)
                {
                    continue;
                }
                caps_of[l].iter().for_each(|&c| cap_load[c] += 1.0);
            }
            z[l] = b;
            self.dfs(l + 1, choices, caps_of, z, sum + f64::from(b), cap_load, out);
            if b == 1 {
                caps_of[l].iter().for_each(|&c| cap_load[c] -= 1.0);
            }
            z[l] = 0;
        }
    }

    pub fn from_json_str(s: &str, graph: &Graph) -> Result<Self> {
        serde_json::from_str::<ConstraintFile>(s)?.resolve(graph)
    }

    pub fn read_json(path: &Path, graph: &Graph) -> Result<Self> {
        Self::from_json_str(&std::fs::read_to_string(path)?, graph)
    }

    pub fn to_file(&self) -> ConstraintFile {
        ConstraintFile {
            lower: Some(self.lower.clone()),
            upper: Some(self.upper.clone()),
            budget: self.budget,
            degree_caps: if self.degree_caps.is_empty() {
                None
            } else {
                Some(self.degree_caps.iter().map(|dc| (dc.node + 1, dc.cap)).collect())
            },
            forbidden: self.forbidden.iter().map(|l| l + 1).collect(),
            fixed_one: self.fixed_one.iter().map(|l| l + 1).collect(),
        }
    }
}

pub(crate) fn lex_cmp_f64(a: &[f64], b: &[f64]) -> std::cmp::Ordering {
    for (x, y) in a.iter().zip(b) {
        match x.total_cmp(y) {
            std::cmp::Ordering::Equal => continue,
            o => return o,
        }
    }
    a.len().cmp(&b.len())
}

/// On-disk constraint set with 1-based edge and node indices. Missing bounds
/// default to [0, 1].
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct ConstraintFile {
    #[serde(default)]
    pub lower: Option<Vec<f64>>,
    #[serde(default)]
    pub upper: Option<Vec<f64>>,
    #[serde(default)]
    pub budget: Option<f64>,
    #[serde(default)]
    pub degree_caps: Option<BTreeMap<usize, f64>>,
    #[serde(default)]
    pub forbidden: Vec<usize>,
    #[serde(default)]
    pub fixed_one: Vec<usize>,
}

impl ConstraintFile {
    pub fn resolve(self, graph: &Graph) -> Result<LinearConstraintSet> {
        let m = graph.m();
        let lower = self.lower.unwrap_or_else(|| vec![0.0; m]);
        let upper = self.upper.unwrap_or_else(|| vec![1.0; m]);
        check_len(m, lower.len())?;
        check_len(m, upper.len())?;
        let one_based = |v: Vec<usize>| -> Result<Vec<usize>> {
            v.into_iter()
                .map(|l| {
                    l.checked_sub(1)
                        .ok_or_else(|| Error::Domain("edge indices are 1-based".into()))
                })
                .collect()
        };
        let mut cs = LinearConstraintSet::new(lower, upper)?
            .with_forbidden(one_based(self.forbidden)?)?
            .with_fixed_one(one_based(self.fixed_one)?)?;
        if let Some(cap) = self.budget {
            cs = cs.with_budget(cap);
        }
        if let Some(caps) = self.degree_caps {
            let zero_based = caps
                .into_iter()
                .map(|(node, cap)| {
                    node.checked_sub(1)
                        .map(|n| (n, cap))
                        .ok_or_else(|| Error::Domain("node indices are 1-based".into()))
                })
                .collect::<Result<BTreeMap<_, _>>>()?;
            cs = cs.with_degree_caps(graph, &zero_based)?;
        }
        Ok(cs)
    }
}

/// Finite point list whose convex hull is a polytope.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VertexList {
    pub vertices: Vec<Vec<f64>>,
}

impl VertexList {
    pub fn new(mut vertices: Vec<Vec<f64>>) -> Result<Self> {
        let Some(dim) = vertices.first().map(Vec::len) else {
            return Err(Error::Infeasible("empty vertex list".into()));
        };
        for v in &vertices {
            check_len(dim, v.len())?;
        }
        vertices.sort_by(|a, b| lex_cmp_f64(a, b));
        vertices.dedup_by(|a, b| a.iter().zip(b.iter()).all(|(x, y)| (x - y).abs() <= MEMBERSHIP_TOL));
        Ok(Self { vertices })
    }

    pub fn dim(&self) -> usize {
        self.vertices.first().map_or(0, Vec::len)
    }

    pub fn len(&self) -> usize {
        self.vertices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }

    pub fn is_vertex(&self, z: &[f64]) -> bool {
        self.vertices
            .iter()
            .any(|v| v.iter().zip(z).all(|(a, b)| (a - b).abs() <= MEMBERSHIP_TOL))
    }

    /// Centroid of the listed points.
    pub fn centroid(&self) -> Vec<f64> {
        let k = self.len() as f64;
        (0..self.dim())
            .map(|l| self.vertices.iter().map(|v| v[l]).sum::<f64>() / k)
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn box_contains_zero() {
        assert!(LinearConstraintSet::unit_box(4).contains(&[0.0; 4]).unwrap());
    }

    #[test]
    fn attacker_budget_rejects_upper_corner() {
        let p = LinearConstraintSet::uniform_box(11, 0.25, 0.75).unwrap().with_budget(4.25);
        assert!(!p.contains(&[0.75; 11]).unwrap());
        assert!(p.contains(&[0.25; 11]).unwrap());
    }

    #[test]
    fn degree_cap_violation() {
        let g = Graph::complete(3).unwrap();
        let caps = BTreeMap::from([(0, 1.0)]);
        let cs = LinearConstraintSet::unit_box(3).with_degree_caps(&g, &caps).unwrap();
        assert!(!cs.contains(&[1.0, 1.0, 0.0]).unwrap());
        assert!(cs.contains(&[1.0, 0.0, 1.0]).unwrap());
    }

    #[test]
    fn contains_length_mismatch() {
        assert!(matches!(
            LinearConstraintSet::unit_box(3).contains(&[0.0; 2]),
            Err(Error::Dimension { .. })
        ));
    }

    #[test]
    fn forbidden_and_fixed_must_be_disjoint() {
        let cs = LinearConstraintSet::unit_box(3).with_forbidden([1]).unwrap();
        assert!(cs.with_fixed_one([1]).is_err());
    }

    #[test]
    fn vertices_of_unit_square() {
        let v = LinearConstraintSet::unit_box(2).enumerate_vertices().unwrap();
        assert_eq!(v.vertices, vec![vec![0., 0.], vec![0., 1.], vec![1., 0.], vec![1., 1.]]);
    }

    #[test]
    fn vertices_with_budget_through_corners() {
        let v = LinearConstraintSet::uniform_box(2, 0.25, 0.75)
            .unwrap()
            .with_budget(1.0)
            .enumerate_vertices()
            .unwrap();
        assert_eq!(v.vertices, vec![vec![0.25, 0.25], vec![0.25, 0.75], vec![0.75, 0.25]]);
    }

    #[test]
    fn vertices_with_budget_crossing_edges() {
        let v = LinearConstraintSet::unit_box(2).with_budget(0.5).enumerate_vertices().unwrap();
        assert_eq!(v.vertices, vec![vec![0., 0.], vec![0., 0.5], vec![0.5, 0.]]);
    }

    #[test]
    fn vertex_enumeration_errors() {
        let empty = LinearConstraintSet::uniform_box(3, 0.5, 1.0).unwrap().with_budget(1.0);
        assert!(matches!(empty.enumerate_vertices(), Err(Error::Infeasible(_))));
        let g = Graph::complete(3).unwrap();
        let capped = LinearConstraintSet::unit_box(3)
            .with_degree_caps(&g, &BTreeMap::from([(0, 1.0)]))
            .unwrap();
        assert!(matches!(capped.enumerate_vertices(), Err(Error::Unsupported(_))));
    }

    #[test]
    fn binary_enumeration_counts() {
        let cs = LinearConstraintSet::unit_box(3).with_budget(2.0);
        let all = cs.enumerate_binary().unwrap();
        assert_eq!(all.len(), 7);
        assert!(!all.contains(&vec![1, 1, 1]));
        let mut sorted = all.clone();
        sorted.sort();
        assert_eq!(all, sorted);

        let fixed = LinearConstraintSet::unit_box(3).with_fixed_one([0]).unwrap().with_budget(1.0);
        assert_eq!(fixed.enumerate_binary().unwrap(), vec![vec![1, 0, 0]]);

        // Σ_{j=0..5} C(11, j)
        let s = LinearConstraintSet::unit_box(11).with_budget(5.0);
        assert_eq!(s.enumerate_binary().unwrap().len(), 1 + 11 + 55 + 165 + 330 + 462);
    }

    #[test]
    fn binary_enumeration_size_cap() {
        let cs = LinearConstraintSet::unit_box(26);
        assert!(matches!(cs.enumerate_binary(), Err(Error::SizeCap { .. })));
    }

    #[test]
    fn binary_enumeration_respects_degree_caps() {
        let g = Graph::complete(4).unwrap();
        let caps = BTreeMap::from([(0, 1.0), (3, 2.0)]);
        let cs = LinearConstraintSet::unit_box(6).with_degree_caps(&g, &caps).unwrap();
        let all = cs.enumerate_binary().unwrap();
        let brute: Vec<Vec<u8>> = (0u32..64)
            .map(|mask| (0..6).map(|b| (mask >> (5 - b) & 1) as u8).collect::<Vec<u8>>())
            .filter(|z| cs.contains_binary(z).unwrap())
            .collect();
        assert_eq!(all, brute);
    }

    #[test]
    fn constraint_file_roundtrip() {
        let g = Graph::complete(4).unwrap();
        let json = r#"{"lower":[0,0,0,0,0,0],"upper":[1,1,1,1,1,1],"budget":3,
                      "degree_caps":{"2":1},"forbidden":[6],"fixed_one":[1]}"#;
        let cs = LinearConstraintSet::from_json_str(json, &g).unwrap();
        assert_eq!(cs.budget(), Some(3.0));
        assert!(cs.forbidden().contains(&5));
        assert!(cs.fixed_one().contains(&0));
        assert_eq!(cs.degree_caps()[0].node, 1);
        let again = cs.to_file().resolve(&g).unwrap();
        assert_eq!(cs, again);
        assert!(LinearConstraintSet::from_json_str(r#"{"forbidden":[0]}"#, &g).is_err());
        let defaults = LinearConstraintSet::from_json_str("{}", &g).unwrap();
        assert_eq!(defaults, LinearConstraintSet::unit_box(6));
    }
}
