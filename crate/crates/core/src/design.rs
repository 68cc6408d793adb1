//! Edge-addition topology design: add up to k edges of K_n to an initial edge
//! set, staying inside a constraint set X, to maximize λ₂.

use std::path::Path;

use log::{debug, warn};
use serde::{Deserialize, Serialize};

use crate::constraints::LinearConstraintSet;
use crate::error::{check_len, Error, Result};
use crate::graph::Graph;
use crate::relaxation::{RelaxationKind, WeightedRelaxation};
use crate::sdp::SolverSettings;
use crate::spectral::{algebraic_connectivity, edge_scores};

/// Largest number of subsets [`brute_force_design`] will evaluate.
pub const BRUTE_FORCE_CAP: u128 = 2_000_000;

/// Relaxed edge values within this of the maximum count as ties.
pub const RELAXED_TIE_TOL: f64 = 1e-6;

const SCORE_TIE_TOL: f64 = 1e-9;

#[derive(Debug, Clone)]
pub struct DesignProblem {
    graph: Graph,
    initial_edges: Vec<usize>,
    k: usize,
    x_set: LinearConstraintSet,
}

impl DesignProblem {
    /// `initial_edges` are indices into the edge order of K_n. They are added
    /// to the fixed-one set of `x_set`.
    pub fn new(n: usize, initial_edges: &[usize], k: usize, x_set: LinearConstraintSet) -> Result<Self> {
        let graph = Graph::complete(n)?;
        let m = graph.m();
        check_len(m, x_set.dim())?;
        let mut init = initial_edges.to_vec();
        init.sort_unstable();
        if init.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::Domain("initial edges must be distinct".into()));
        }
        if init.last().is_some_and(|&l| l >= m) {
            return Err(Error::Domain(format!("initial edge index out of range 1..={m}")));
        }
        if k + init.len() > m {
            return Err(Error::Domain(format!("k + |E0| = {} exceeds m = {m}", k + init.len())));
        }
        let x_set = x_set.with_fixed_one(init.iter().copied())?;
        let mut x = vec![0.0; m];
        init.iter().for_each(|&l| x[l] = 1.0);
        if !x_set.contains(&x)? {
            return Err(Error::Infeasible("initial topology violates X".into()));
        }
        Ok(Self { graph, initial_edges: init, k, x_set })
    }

    /// Unconstrained X = [0, 1]^m, with `initial` given as 0-based node pairs.
    pub fn free(n: usize, initial: &[(usize, usize)], k: usize) -> Result<Self> {
        let graph = Graph::complete(n)?;
        let idx = initial
            .iter()
            .map(|&(i, j)| {
                graph
                    .edge_index(i, j)
                    .ok_or_else(|| Error::Domain(format!("({}, {}) is not an edge of K_{n}", i + 1, j + 1)))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(n, &idx, k, LinearConstraintSet::unit_box(graph.m()))
    }

    pub fn graph(&self) -> &Graph {
        &self.graph
    }

    pub fn initial_edges(&self) -> &[usize] {
        &self.initial_edges
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn x_set(&self) -> &LinearConstraintSet {
        &self.x_set
    }

    /// Σ x ≤ k + |E₀|.
    pub fn budget(&self) -> usize {
        self.k + self.initial_edges.len()
    }

    pub fn initial_indicator(&self) -> Vec<u8> {
        let mut x = vec![0u8; self.graph.m()];
        self.initial_edges.iter().for_each(|&l| x[l] = 1);
        x
    }

    pub fn lambda2_of(&self, x: &[u8]) -> Result<f64> {
        algebraic_connectivity(&self.graph.indicator_laplacian(x)?)
    }

    /// Absent edges whose addition keeps the indicator in X and within budget.
    pub fn feasible_additions(&self, x: &[u8]) -> Result<Vec<usize>> {
        let used: usize = x.iter().map(|&b| b as usize).sum();
        if used >= self.budget() {
            return Ok(Vec::new());
        }
        let mut out = Vec::new();
        let mut trial = x.to_vec();
        for l in 0..x.len() {
            if x[l] == 0 {
                trial[l] = 1;
                if self.x_set.contains_binary(&trial)? {
                    out.push(l);
                }
                trial[l] = 0;
            }
        }
        Ok(out)
    }

    /// Same instance with `added` folded into E₀ and k reduced accordingly.
    pub fn with_added(&self, added: &[usize]) -> Result<Self> {
        let mut init = self.initial_edges.clone();
        init.extend_from_slice(added);
        let k = self
            .k
            .checked_sub(added.len())
            .ok_or_else(|| Error::Domain("more additions than k".into()))?;
        Self::new(self.graph.n(), &init, k, self.x_set.clone())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignResult {
    pub added_edges: Vec<usize>,
    pub lambda2_trace: Vec<f64>,
    pub final_lambda2: f64,
}

impl DesignResult {
    pub fn final_indicator(&self, dp: &DesignProblem) -> Vec<u8> {
        let mut x = dp.initial_indicator();
        self.added_edges.iter().for_each(|&l| x[l] = 1);
        x
    }

    pub fn write_json(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)? + "\n")?;
        Ok(())
    }
}

/// Per-iteration record of [`sdp_relax_with`] and [`convex_hull_relax_with`].
#[derive(Debug, Clone)]
pub struct RelaxedRun {
    pub result: DesignResult,
    /// Relaxed optimum α* at each outer iteration.
    pub relaxed_values: Vec<f64>,
    /// Solver dual bound at each outer iteration.
    pub dual_bounds: Vec<f64>,
}

/// Lowest index whose value is within `tol` of the maximum over `candidates`.
fn argmax_lowest(candidates: &[usize], value: impl Fn(usize) -> f64, tol: f64) -> Option<usize> {
    let best = candidates.iter().map(|&l| value(l)).fold(f64::NEG_INFINITY, f64::max);
    candidates.iter().copied().find(|&l| value(l) >= best - tol)
}

fn iterate(dp: &DesignProblem, mut pick: impl FnMut(usize, &[u8], &[usize]) -> Result<usize>) -> Result<DesignResult> {
    let mut x = dp.initial_indicator();
    let mut added = Vec::new();
    let mut trace = Vec::new();
    for t in 0..dp.k {
        let candidates = dp.feasible_additions(&x)?;
        if candidates.is_empty() {
            warn!("no feasible edge left after {t} of {} additions", dp.k);
            break;
        }
        let l = pick(t, &x, &candidates)?;
        x[l] = 1;
        added.push(l);
        trace.push(dp.lambda2_of(&x)?);
    }
    let final_lambda2 = match trace.last() {
        Some(&v) => v,
        None => dp.lambda2_of(&x)?,
    };
    Ok(DesignResult { added_edges: added, lambda2_trace: trace, final_lambda2 })
}

/// Adds, one at a time, the feasible absent edge with the largest squared
/// Fiedler-vector difference across its endpoints.
pub fn greedy_fiedler(dp: &DesignProblem) -> Result<DesignResult> {
    iterate(dp, |_, x, candidates| {
        let scores = edge_scores(&dp.graph, x)?;
        Ok(argmax_lowest(candidates, |l| scores[l], SCORE_TIE_TOL).expect("nonempty"))
    })
}

fn relaxed_design(dp: &DesignProblem, kind: RelaxationKind, settings: &SolverSettings) -> Result<RelaxedRun> {
    let mut relaxed_values = Vec::new();
    let mut dual_bounds = Vec::new();
    let budget = dp.budget() as f64;
    let result = iterate(dp, |t, x, candidates| {
        let mut set = dp.x_set.clone();
        let current: Vec<usize> = (0..x.len()).filter(|&l| x[l] == 1).collect();
        set = set.with_fixed_one(current)?;
        let out = WeightedRelaxation::indicator(&dp.graph, &set, Some(budget)).solve(kind, settings, t)?;
        debug!("{kind:?} iteration {t}: α* = {:.9}", out.alpha);
        relaxed_values.push(out.alpha);
        dual_bounds.push(out.dual_bound);
        Ok(argmax_lowest(candidates, |l| out.x[l], RELAXED_TIE_TOL).expect("nonempty"))
    })?;
    Ok(RelaxedRun { result, relaxed_values, dual_bounds })
}

/// Iterated hull relaxation: solve over [0, 1]^m ∩ X, add the absent feasible
/// edge with the largest fractional value, repeat.
pub fn convex_hull_relax(dp: &DesignProblem) -> Result<DesignResult> {
    Ok(convex_hull_relax_with(dp, &SolverSettings::default())?.result)
}

pub fn convex_hull_relax_with(dp: &DesignProblem, settings: &SolverSettings) -> Result<RelaxedRun> {
    relaxed_design(dp, RelaxationKind::Hull, settings)
}

/// Iterated rank-relaxed lift in y = 2x − 1: solve, read y from the Gram
/// factor of Ỹ, add the absent feasible edge with the largest y_l, repeat.
pub fn sdp_relax(dp: &DesignProblem) -> Result<DesignResult> {
    Ok(sdp_relax_with(dp, &SolverSettings::default())?.result)
}

pub fn sdp_relax_with(dp: &DesignProblem, settings: &SolverSettings) -> Result<RelaxedRun> {
    relaxed_design(dp, RelaxationKind::Lifted, settings)
}

fn binomial(n: usize, k: usize) -> u128 {
    let k = k.min(n.saturating_sub(k));
    (0..k).fold(1u128, |acc, i| acc * (n - i) as u128 / (i + 1) as u128)
}

/// Exact optimum by enumerating every addition set of size ≤ k. Ties go to
/// the larger set, then the lexicographically smallest one.
pub fn brute_force_design(dp: &DesignProblem) -> Result<DesignResult> {
    let x0 = dp.initial_indicator();
    let absent: Vec<usize> = (0..x0.len()).filter(|&l| x0[l] == 0 && dp.x_set.effective_bounds(l).1 >= 1.0).collect();
    let kmax = dp.k.min(absent.len());
    let count: u128 = (0..=kmax).map(|j| binomial(absent.len(), j)).sum();
    if count > BRUTE_FORCE_CAP {
        return Err(Error::SizeCap { what: "design subsets".into(), count, cap: BRUTE_FORCE_CAP });
    }

    let mut best: Option<(f64, Vec<usize>)> = None;
    let mut x = x0.clone();
    let mut chosen = Vec::new();
    search(dp, &absent, 0, kmax, &mut x, &mut chosen, &mut best)?;
    let (_, set) = best.ok_or_else(|| Error::Infeasible("no feasible design".into()))?;
    let mut x = x0;
    let mut trace = Vec::new();
    for &l in &set {
        x[l] = 1;
        trace.push(dp.lambda2_of(&x)?);
    }
    let final_lambda2 = match trace.last() {
        Some(&v) => v,
        None => dp.lambda2_of(&x)?,
    };
    Ok(DesignResult { added_edges: set, lambda2_trace: trace, final_lambda2 })
}

fn search(
    dp: &DesignProblem,
    absent: &[usize],
    start: usize,
    left: usize,
    x: &mut Vec<u8>,
    chosen: &mut Vec<usize>,
    best: &mut Option<(f64, Vec<usize>)>,
) -> Result<()> {
    if dp.x_set.contains_binary(x)? {
        let value = dp.lambda2_of(x)?;
        let better = match best {
            None => true,
            Some((bv, bs)) => {
                value > *bv + 1e-10 || ((value - *bv).abs() <= 1e-10 && (chosen.len() > bs.len() || (chosen.len() == bs.len() && chosen < bs)))
            }
        };
        if better {
            *best = Some((value, chosen.clone()));
        }
    }
    if left == 0 {
        return Ok(());
    }
    for p in start..absent.len() {
        let l = absent[p];
        x[l] = 1;
        chosen.push(l);
        search(dp, absent, p + 1, left - 1, x, chosen, best)?;
        chosen.pop();
        x[l] = 0;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn triangle_from_edge() -> DesignProblem {
        DesignProblem::free(3, &[(0, 1)], 2).unwrap()
    }

    #[test]
    fn all_strategies_complete_the_triangle() {
        let dp = triangle_from_edge();
        for r in [
            greedy_fiedler(&dp).unwrap(),
            convex_hull_relax(&dp).unwrap(),
            sdp_relax(&dp).unwrap(),
            brute_force_design(&dp).unwrap(),
        ] {
            let mut added = r.added_edges.clone();
            added.sort_unstable();
            assert_eq!(added, vec![1, 2]);
            assert!((r.final_lambda2 - 3.0).abs() < 1e-9);
        }
    }

    #[test]
    fn zero_budget_adds_nothing() {
        let dp = DesignProblem::free(4, &[(0, 1), (1, 2), (2, 3)], 0).unwrap();
        let base = dp.lambda2_of(&dp.initial_indicator()).unwrap();
        for r in [greedy_fiedler(&dp).unwrap(), convex_hull_relax(&dp).unwrap(), sdp_relax(&dp).unwrap()] {
            assert!(r.added_edges.is_empty());
            assert!((r.final_lambda2 - base).abs() < 1e-12);
        }
    }

    #[test]
    fn forbidden_edge_is_respected() {
        // K3 edge order (1,2), (1,3), (2,3); forbid (1,3)
        let set = LinearConstraintSet::unit_box(3).with_forbidden([1]).unwrap();
        let dp = DesignProblem::new(3, &[0], 1, set).unwrap();
        for r in [greedy_fiedler(&dp).unwrap(), convex_hull_relax(&dp).unwrap(), sdp_relax(&dp).unwrap()] {
            assert_eq!(r.added_edges, vec![2]);
        }
    }

    #[test]
    fn star_tie_breaks_to_lowest_leaf_pair() {
        let dp = DesignProblem::free(4, &[(0, 1), (0, 2), (0, 3)], 1).unwrap();
        let r = sdp_relax(&dp).unwrap();
        assert_eq!(dp.graph().edge(r.added_edges[0]), (1, 2));
        let bf = brute_force_design(&dp).unwrap();
        assert_eq!(dp.graph().edge(bf.added_edges[0]), (1, 2));
        assert!((r.final_lambda2 - bf.final_lambda2).abs() < 1e-9);
    }

    #[test]
    fn early_stop_when_nothing_is_feasible() {
        let set = LinearConstraintSet::unit_box(3).with_forbidden([1, 2]).unwrap();
        let dp = DesignProblem::new(3, &[0], 2, set).unwrap();
        let r = greedy_fiedler(&dp).unwrap();
        assert!(r.added_edges.is_empty());
        assert!((r.final_lambda2 - 0.0).abs() < 1e-12);
    }

    #[test]
    fn relaxed_values_bound_the_optimum() {
        let dp = DesignProblem::free(5, &[(0, 1), (1, 2), (2, 3), (3, 4)], 2).unwrap();
        let opt = brute_force_design(&dp).unwrap().final_lambda2;
        let run = sdp_relax_with(&dp, &SolverSettings::default()).unwrap();
        assert!(run.relaxed_values[0] >= opt - 1e-6);
        assert!(opt >= run.result.final_lambda2 - 1e-9);
        for w in run.result.lambda2_trace.windows(2) {
            assert!(w[1] >= w[0] - 1e-12);
        }
    }

    #[test]
    fn problem_validation() {
        assert!(DesignProblem::free(3, &[(0, 1)], 3).is_err());
        assert!(DesignProblem::new(3, &[0, 0], 1, LinearConstraintSet::unit_box(3)).is_err());
        let forb = LinearConstraintSet::unit_box(3).with_forbidden([0]).unwrap();
        assert!(DesignProblem::new(3, &[0], 1, forb).is_err());
    }

    #[test]
    fn binomial_values() {
        assert_eq!(binomial(5, 2), 10);
        assert_eq!(binomial(63, 25), 244_382_877_832_924_467);
        assert_eq!(binomial(3, 0), 1);
    }
}
