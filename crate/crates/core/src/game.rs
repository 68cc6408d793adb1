//! The coordinator–attacker game over expected Laplacians: best responses on
//! both sides, Nash checks, and the exact preventive max-min value.

use log::warn;
use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::constraints::{LinearConstraintSet, VertexList};
use crate::error::{check_len, Error, Result};
use crate::graph::{expected_weights, Graph};
use crate::relaxation::{RelaxationKind, WeightedRelaxation};
use crate::sdp::{solve, ConicProgram, Sense, SolverSettings};
use crate::spectral::{algebraic_connectivity, grad_alpha_p};

/// Value tolerance of best-response and Nash comparisons.
pub const NASH_TOL: f64 = 1e-8;

/// Largest vertex count accepted for an attacker set.
pub const MAX_VERTICES: usize = 1_000_000;

/// Improvements smaller than this do not displace an earlier candidate.
const IMPROVE_TOL: f64 = 1e-10;

/// Hull-membership slack for vertex-list attacker sets.
const HULL_TOL: f64 = 1e-7;

#[derive(Debug, Clone, PartialEq)]
pub enum AttackerSet {
    /// Box ∩ budget polytope, with its box inside [0, 1]^m.
    Polytope(LinearConstraintSet),
    /// Convex hull of explicit points in [0, 1]^m.
    Vertices(VertexList),
}

#[derive(Debug, Clone)]
pub struct GameInstance {
    graph: Graph,
    s_set: LinearConstraintSet,
    p_set: AttackerSet,
    p_vertices: VertexList,
}

impl GameInstance {
    pub fn new(graph: Graph, s_set: LinearConstraintSet, p_set: AttackerSet) -> Result<Self> {
        let m = graph.m();
        check_len(m, s_set.dim())?;
        let p_vertices = match &p_set {
            AttackerSet::Polytope(cs) => {
                check_len(m, cs.dim())?;
                if (0..m).any(|l| cs.lower()[l] < 0.0 || cs.upper()[l] > 1.0) {
                    return Err(Error::Domain("attacker box must lie inside [0, 1]^m".into()));
                }
                cs.enumerate_vertices()?
            }
            AttackerSet::Vertices(v) => {
                if v.is_empty() {
                    return Err(Error::Infeasible("attacker vertex list is empty".into()));
                }
                check_len(m, v.dim())?;
                if v.vertices.iter().flatten().any(|&x| !(0.0..=1.0).contains(&x)) {
                    return Err(Error::Domain("attacker points must lie in [0, 1]^m".into()));
                }
                v.clone()
            }
        };
        if p_vertices.len() > MAX_VERTICES {
            return Err(Error::SizeCap {
                what: "attacker vertices".into(),
                count: p_vertices.len() as u128,
                cap: MAX_VERTICES as u128,
            });
        }
        if p_vertices.is_empty() {
            return Err(Error::Infeasible("attacker set is empty".into()));
        }
        Ok(Self { graph, s_set, p_set, p_vertices })
    }

    pub fn graph(&self) -> &Graph {
        &self.graph
    }

    pub fn s_set(&self) -> &LinearConstraintSet {
        &self.s_set
    }

    pub fn p_set(&self) -> &AttackerSet {
        &self.p_set
    }

    /// Extreme points of P in lexicographic order.
    pub fn p_vertices(&self) -> &VertexList {
        &self.p_vertices
    }

    pub fn m(&self) -> usize {
        self.graph.m()
    }

    pub fn alpha(&self, s: &[u8], p: &[f64]) -> Result<f64> {
        algebraic_connectivity(&self.graph.laplacian(&expected_weights(s, p)?)?)
    }

    /// Feasible coordinator strategies in lexicographic order.
    pub fn s_points(&self) -> Result<Vec<Vec<u8>>> {
        let pts = self.s_set.enumerate_binary()?;
        if pts.is_empty() {
            return Err(Error::Infeasible("coordinator set has no binary point".into()));
        }
        Ok(pts)
    }

    /// The vector with ones exactly where S forces them; the smallest member
    /// of S when S is nonempty.
    pub fn forced_ones(&self) -> Vec<u8> {
        (0..self.m())
            .map(|l| u8::from(self.s_set.effective_bounds(l).0 > 0.0))
            .collect()
    }

    pub fn contains_s(&self, s: &[u8]) -> Result<bool> {
        if s.iter().any(|&b| b > 1) {
            return Ok(false);
        }
        self.s_set.contains_binary(s)
    }

    pub fn contains_p(&self, p: &[f64]) -> Result<bool> {
        check_len(self.m(), p.len())?;
        match &self.p_set {
            AttackerSet::Polytope(cs) => cs.contains(p),
            AttackerSet::Vertices(v) => Ok(v.is_vertex(p) || in_hull(v, p)),
        }
    }
}

/// min ‖Σ λ_v v − p‖₁ over the simplex, solved as an LP; zero iff p ∈ hull.
fn in_hull(v: &VertexList, p: &[f64]) -> bool {
    let m = p.len();
    let mut prog = ConicProgram::new();
    let lambdas: Vec<_> = (0..v.len()).map(|_| prog.add_scalar(0.0, f64::INFINITY)).collect();
    let mut objective = Vec::new();
    for l in 0..m {
        let up = prog.add_scalar(0.0, f64::INFINITY);
        let down = prog.add_scalar(0.0, f64::INFINITY);
        objective.push((up, -1.0));
        objective.push((down, -1.0));
        let mut terms: Vec<_> = lambdas.iter().zip(&v.vertices).map(|(&lam, x)| (lam, x[l])).collect();
        terms.push((up, 1.0));
        terms.push((down, -1.0));
        prog.add_row(terms, Sense::Eq, p[l]);
    }
    prog.add_row(lambdas.iter().map(|&lam| (lam, 1.0)).collect(), Sense::Eq, 1.0);
    prog.maximize(objective);
    let sol = solve(&prog, &SolverSettings::default());
    sol.objective_value.is_finite() && -sol.objective_value <= HULL_TOL
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GameValue {
    pub s_star: Vec<u8>,
    pub p_star: Vec<f64>,
    pub alpha: f64,
}

/// Index of the first maximum, where later entries must win by more than
/// [`IMPROVE_TOL`].
fn first_max(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] + IMPROVE_TOL {
            best = i;
        }
    }
    best
}

fn first_min(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v < values[best] - IMPROVE_TOL {
            best = i;
        }
    }
    best
}

/// Coordinator best response to a known p, by enumeration of S. Ties go to
/// the lexicographically smallest s.
pub fn solve_p2(gi: &GameInstance, p: &[f64]) -> Result<(Vec<u8>, f64)> {
    check_len(gi.m(), p.len())?;
    let points = gi.s_points()?;
    let values = points
        .par_iter()
        .map(|s| gi.alpha(s, p))
        .collect::<Result<Vec<f64>>>()?;
    let i = first_max(&values);
    Ok((points[i].clone(), values[i]))
}

/// Coordinator response from the lifted relaxation in s, rounded by adding
/// edges in decreasing order of relaxed value while S stays satisfied. Not
/// guaranteed optimal; used when S is too large to enumerate.
pub fn solve_p2_relaxed(gi: &GameInstance, p: &[f64], settings: &SolverSettings) -> Result<(Vec<u8>, f64)> {
    check_len(gi.m(), p.len())?;
    let out = WeightedRelaxation::protection(&gi.graph, &gi.s_set, p).solve(RelaxationKind::Lifted, settings, 0)?;
    let mut order: Vec<usize> = (0..gi.m()).collect();
    order.sort_by(|&a, &b| out.x[b].total_cmp(&out.x[a]).then(a.cmp(&b)));
    let mut s = gi.forced_ones();
    for l in order {
        if s[l] == 0 {
            s[l] = 1;
            if !gi.s_set.contains_binary(&s)? {
                s[l] = 0;
            }
        }
    }
    let alpha = gi.alpha(&s, p)?;
    Ok((s, alpha))
}

/// [`solve_p2`], falling back to [`solve_p2_relaxed`] when S exceeds the
/// enumeration cap. The flag is false for the fallback.
pub fn coordinator_response(gi: &GameInstance, p: &[f64]) -> Result<(Vec<u8>, f64, bool)> {
    match solve_p2(gi, p) {
        Ok((s, a)) => Ok((s, a, true)),
        Err(Error::SizeCap { .. }) => {
            warn!("coordinator set too large to enumerate; using the relaxed response");
            let (s, a) = solve_p2_relaxed(gi, p, &SolverSettings::default())?;
            Ok((s, a, false))
        }
        Err(e) => Err(e),
    }
}

/// Attacker best response: λ₂ is concave in p, so its minimum over P is
/// attained at a vertex. Ties go to the lexicographically smallest vertex.
pub fn solve_p3(gi: &GameInstance, s: &[u8]) -> Result<(Vec<f64>, f64)> {
    check_len(gi.m(), s.len())?;
    let values = gi
        .p_vertices
        .vertices
        .par_iter()
        .map(|p| gi.alpha(s, p))
        .collect::<Result<Vec<f64>>>()?;
    let i = first_min(&values);
    Ok((gi.p_vertices.vertices[i].clone(), values[i]))
}

/// True iff s is a best response to p and p is a best response to s, both
/// within [`NASH_TOL`].
pub fn check_nash(gi: &GameInstance, s: &[u8], p: &[f64]) -> Result<bool> {
    if !gi.contains_s(s)? {
        return Err(Error::Domain("s is not in S".into()));
    }
    if !gi.contains_p(p)? {
        return Err(Error::Domain("p is not in P".into()));
    }
    let value = gi.alpha(s, p)?;
    let (_, best_s) = solve_p2(gi, p)?;
    let (_, best_p) = solve_p3(gi, s)?;
    Ok(best_s <= value + NASH_TOL && best_p >= value - NASH_TOL)
}

/// Whether the protected edges alone connect every node.
pub fn deterministic_connectivity(gi: &GameInstance, s: &[u8]) -> Result<bool> {
    check_len(gi.m(), s.len())?;
    let keep: Vec<bool> = s.iter().map(|&b| b == 1).collect();
    Ok(gi.graph.is_connected_with(&keep))
}

/// Exact max over s ∈ S of min over vertices of P of α(s, p).
pub fn preventive_oracle(gi: &GameInstance) -> Result<GameValue> {
    let points = gi.s_points()?;
    let worst = points
        .par_iter()
        .map(|s| solve_p3(gi, s))
        .collect::<Result<Vec<_>>>()?;
    let values: Vec<f64> = worst.iter().map(|w| w.1).collect();
    let i = first_max(&values);
    Ok(GameValue { s_star: points[i].clone(), p_star: worst[i].0.clone(), alpha: values[i] })
}

/// Norm of ∇_p α projected onto the orthogonal complement of the active
/// constraint normals of a polytope P at p. `None` when p is a vertex, where
/// the projection is trivially zero.
pub fn face_stationarity_residual(gi: &GameInstance, s: &[u8], p: &[f64]) -> Result<Option<f64>> {
    let AttackerSet::Polytope(cs) = &gi.p_set else {
        return Err(Error::Unsupported("face residual needs an explicit polytope".into()));
    };
    let m = gi.m();
    let normals = cs.active_normals(p)?;
    let sf: Vec<f64> = s.iter().map(|&b| f64::from(b)).collect();
    let grad = DVector::from_vec(grad_alpha_p(&gi.graph, &sf, p)?.values);
    if normals.is_empty() {
        return Ok(Some(grad.norm()));
    }
    let n = DMatrix::from_fn(m, normals.len(), |r, c| normals[c][r]);
    let svd = n.clone().svd(true, true);
    if svd.rank(1e-9) == m {
        return Ok(None);
    }
    let coef = svd.solve(&grad, 1e-9).map_err(|e| Error::Domain(e.to_string()))?;
    Ok(Some((grad - n * coef).norm()))
}

/// Whether any constraint of P is active at p (p on the boundary).
pub fn on_boundary(gi: &GameInstance, p: &[f64]) -> Result<bool> {
    match &gi.p_set {
        AttackerSet::Polytope(cs) => Ok(!cs.active_normals(p)?.is_empty()),
        AttackerSet::Vertices(v) => Ok(v.is_vertex(p)),
    }
}
