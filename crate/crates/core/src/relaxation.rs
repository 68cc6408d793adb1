//! Convex relaxations of "maximize λ₂ of a Laplacian with affine edge weights
//! w_l = a_l + b_l x_l over binary x in a constraint set".
//!
//! Two variants share one builder:
//! - the hull relaxation keeps x_l as scalars in [0, 1] ∩ X;
//! - the lifted relaxation substitutes y = 2x − 1 and introduces the unit
//!   diagonal PSD matrix Ỹ = [Y y; yᵀ 1] with the rank-one constraint dropped.
//!
//! Both encode L(x) ⪰ α(I − 11ᵀ/n) as L(x) − α(I − 11ᵀ/n) + 11ᵀ/n ⪰ 0, which
//! has the same solutions and admits strictly feasible points.

use log::warn;
use nalgebra::DMatrix;

use crate::constraints::{LinearConstraintSet, MEMBERSHIP_TOL};
use crate::error::{check_len, Error, Result};
use crate::graph::Graph;
use crate::sdp::{gram_factor, solve, ConicProgram, ConicSolution, Lmi, Sense, SolverSettings, Status, SymEntries, Var};

/// Eigenvalues of Ỹ below this (relative to its largest) are dropped before
/// reading y off the Gram vectors.
pub const RANK_TOL: f64 = 1e-6;

/// Residual level at which an iteration-capped solve is still accepted.
const LOOSE_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RelaxationKind {
    Hull,
    Lifted,
}

/// Affine expression c0 + c1 · var for one edge variable.
#[derive(Debug, Clone, Copy)]
enum XExpr {
    Const(f64),
    Affine(f64, Var, f64),
}

#[derive(Debug, Clone)]
pub struct RelaxationOutcome {
    /// Relaxed edge values in x-space (for the lift, (1 + y)/2 with y read
    /// from the Gram factor).
    pub x: Vec<f64>,
    /// Primal optimal value α*.
    pub alpha: f64,
    /// Dual objective, an upper bound on α* up to solver tolerance.
    pub dual_bound: f64,
    /// Ỹ for the lifted variant, indexed over the free edges then the
    /// homogenizing coordinate.
    pub lift: Option<DMatrix<f64>>,
    /// Edge index of each row of `lift` except the last.
    pub free_edges: Vec<usize>,
    pub status: Status,
}

/// Problem data for one relaxation solve.
#[derive(Debug, Clone)]
pub struct WeightedRelaxation<'a> {
    pub graph: &'a Graph,
    pub offset: Vec<f64>,
    pub slope: Vec<f64>,
    pub set: &'a LinearConstraintSet,
    /// Additional Σ x ≤ cap, on top of any budget carried by `set`.
    pub extra_budget: Option<f64>,
}

impl<'a> WeightedRelaxation<'a> {
    /// Edge-indicator weights w_l = x_l.
    pub fn indicator(graph: &'a Graph, set: &'a LinearConstraintSet, budget: Option<f64>) -> Self {
        let m = graph.m();
        Self { graph, offset: vec![0.0; m], slope: vec![1.0; m], set, extra_budget: budget }
    }

    /// Expected weights (s_l − 1) p_l + 1 = (1 − p_l) + p_l s_l.
    pub fn protection(graph: &'a Graph, set: &'a LinearConstraintSet, p: &[f64]) -> Self {
        Self {
            graph,
            offset: p.iter().map(|pl| 1.0 - pl).collect(),
            slope: p.to_vec(),
            set,
            extra_budget: None,
        }
    }

    pub fn solve(&self, kind: RelaxationKind, settings: &SolverSettings, iteration: usize) -> Result<RelaxationOutcome> {
        let m = self.graph.m();
        check_len(m, self.set.dim())?;
        check_len(m, self.offset.len())?;
        check_len(m, self.slope.len())?;
        let n = self.graph.n();

        let mut prog = ConicProgram::new();
        let alpha = prog.add_free();
        let mut exprs = Vec::with_capacity(m);
        let mut free_edges = Vec::new();
        let mut lift_block = None;

        match kind {
            RelaxationKind::Lifted => {
                let mut domains = Vec::with_capacity(m);
                for l in 0..m {
                    let (lo, hi) = self.set.effective_bounds(l);
                    let zero = lo <= MEMBERSHIP_TOL && hi >= -MEMBERSHIP_TOL;
                    let one = lo <= 1.0 + MEMBERSHIP_TOL && hi >= 1.0 - MEMBERSHIP_TOL;
                    match (zero, one) {
                        (true, true) => free_edges.push(l),
                        (false, false) => {
                            return Err(Error::Infeasible(format!("edge {} admits neither 0 nor 1", l + 1)))
                        }
                        _ => {}
                    }
                    domains.push((zero, one));
                }
                let f = free_edges.len();
                let block = prog.add_psd(f + 1);
                for i in 0..=f {
                    prog.add_row(vec![(prog.entry(block, i, i), 1.0)], Sense::Eq, 1.0);
                }
                let mut next = 0;
                for &(zero, one) in &domains {
                    exprs.push(match (zero, one) {
                        (true, true) => {
                            next += 1;
                            XExpr::Affine(0.5, prog.entry(block, next - 1, f), 0.5)
                        }
                        (false, true) => XExpr::Const(1.0),
                        _ => XExpr::Const(0.0),
                    });
                }
                lift_block = Some(block);
            }
            RelaxationKind::Hull => {
                for l in 0..m {
                    let (lo, hi) = self.set.effective_bounds(l);
                    let (lo, hi) = (lo.max(0.0), hi.min(1.0));
                    if lo > hi + MEMBERSHIP_TOL {
                        return Err(Error::Infeasible(format!("edge {} has an empty range within [0, 1]", l + 1)));
                    }
                    if hi - lo <= 1e-12 {
                        exprs.push(XExpr::Const(lo));
                    } else {
                        free_edges.push(l);
                        exprs.push(XExpr::Affine(0.0, prog.add_scalar(lo, hi), 1.0));
                    }
                }
            }
        }

        // Σ_{l ∈ idx} x_l ≤ cap
        let sum_row = |prog: &mut ConicProgram, idx: &mut dyn Iterator<Item = usize>, cap: f64| {
            let mut terms = Vec::new();
            let mut rhs = cap;
            for l in idx {
                match exprs[l] {
                    XExpr::Const(c) => rhs -= c,
                    XExpr::Affine(c0, v, c1) => {
                        rhs -= c0;
                        terms.push((v, c1));
                    }
                }
            }
            if terms.is_empty() {
                if rhs < -MEMBERSHIP_TOL {
                    return Err(Error::Infeasible(format!("fixed edges exceed a cap of {cap}")));
                }
                return Ok(());
            }
            prog.add_row(terms, Sense::Le, rhs);
            Ok(())
        };
        for cap in [self.set.budget(), self.extra_budget].into_iter().flatten() {
            sum_row(&mut prog, &mut (0..m), cap)?;
        }
        for dc in self.set.degree_caps() {
            sum_row(&mut prog, &mut dc.edges.iter().copied(), dc.cap)?;
        }

        let inv_n = 1.0 / n as f64;
        let mut constant = DMatrix::from_element(n, n, inv_n);
        let mut lmi_terms: Vec<(Var, SymEntries)> = Vec::new();
        for (l, &(i, j)) in self.graph.edges().iter().enumerate() {
            let (c0, var) = match exprs[l] {
                XExpr::Const(c) => (self.offset[l] + self.slope[l] * c, None),
                XExpr::Affine(c0, v, c1) => (self.offset[l] + self.slope[l] * c0, Some((v, self.slope[l] * c1))),
            };
            constant[(i, i)] += c0;
            constant[(j, j)] += c0;
            constant[(i, j)] -= c0;
            constant[(j, i)] -= c0;
            if let Some((v, w)) = var {
                if w != 0.0 {
                    lmi_terms.push((v, vec![(i, i, w), (j, j, w), (i, j, -w)]));
                }
            }
        }
        let mut lmi = Lmi::new(constant);
        let mut pseudo_identity = Vec::new();
        for a in 0..n {
            pseudo_identity.push((a, a, -(1.0 - inv_n)));
            for b in a + 1..n {
                pseudo_identity.push((a, b, inv_n));
            }
        }
        lmi.add_term(alpha, pseudo_identity);
        for (v, e) in lmi_terms {
            lmi.add_term(v, e);
        }
        prog.add_lmi(lmi);
        prog.maximize(vec![(alpha, 1.0)]);

        let sol = solve(&prog, settings);
        accept(&sol, iteration)?;

        let mut x: Vec<f64> = exprs
            .iter()
            .map(|e| match *e {
                XExpr::Const(c) => c,
                XExpr::Affine(c0, v, c1) => c0 + c1 * sol.value(v),
            })
            .collect();
        let lift = lift_block.map(|b| sol.matrices[b].clone());
        if let Some(ref ytilde) = lift {
            let y = extract_from_lift(ytilde, RANK_TOL)?;
            for (k, &l) in free_edges.iter().enumerate() {
                x[l] = 0.5 * (1.0 + y[k]);
            }
        }
        Ok(RelaxationOutcome {
            x,
            alpha: sol.value(alpha),
            dual_bound: sol.dual_objective,
            lift,
            free_edges,
            status: sol.status,
        })
    }
}

fn accept(sol: &ConicSolution, iteration: usize) -> Result<()> {
    match sol.status {
        Status::Optimal => Ok(()),
        Status::MaxIters | Status::Stalled
            if sol.primal_residual < LOOSE_TOL && sol.dual_residual < LOOSE_TOL && sol.gap < LOOSE_TOL =>
        {
            warn!(
                "relaxation at iteration {iteration} stopped with {:?}; residuals {:.1e}/{:.1e}, gap {:.1e}",
                sol.status, sol.primal_residual, sol.dual_residual, sol.gap
            );
            Ok(())
        }
        status => Err(Error::Solver {
            iteration,
            reason: format!(
                "{status:?} (primal residual {:.1e}, dual residual {:.1e}, gap {:.1e})",
                sol.primal_residual, sol.dual_residual, sol.gap
            ),
        }),
    }
}

/// y = 2x − 1.
pub fn x_to_y(x: &[f64]) -> Vec<f64> {
    x.iter().map(|v| 2.0 * v - 1.0).collect()
}

/// x = (y + 1) / 2.
pub fn y_to_x(y: &[f64]) -> Vec<f64> {
    y.iter().map(|v| 0.5 * (v + 1.0)).collect()
}

/// Ỹ = [y; 1][y; 1]ᵀ.
pub fn lift_point(y: &[f64]) -> DMatrix<f64> {
    let mut v = y.to_vec();
    v.push(1.0);
    let v = nalgebra::DVector::from_vec(v);
    &v * v.transpose()
}

/// y_l = ⟨u_l, u_last⟩ over the Gram vectors of Ỹ after eigenvalue filtering.
pub fn extract_from_lift(ytilde: &DMatrix<f64>, rank_tol: f64) -> Result<Vec<f64>> {
    let u = gram_factor(ytilde, rank_tol)?;
    let last = u.ncols() - 1;
    Ok((0..last).map(|l| u.column(l).dot(&u.column(last))).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn binary_roundtrip_and_rank_one_extraction() {
        let x = [1.0, 0.0, 0.0, 1.0, 1.0];
        let y = x_to_y(&x);
        assert_eq!(y_to_x(&y), x.to_vec());
        let yt = lift_point(&y);
        assert_eq!(gram_factor(&yt, RANK_TOL).unwrap().nrows(), 1);
        let back = extract_from_lift(&yt, RANK_TOL).unwrap();
        for (a, b) in back.iter().zip(&y) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn triangle_relaxations_reach_three() {
        let g = Graph::complete(3).unwrap();
        let set = LinearConstraintSet::unit_box(3);
        for kind in [RelaxationKind::Hull, RelaxationKind::Lifted] {
            let out = WeightedRelaxation::indicator(&g, &set, Some(3.0))
                .solve(kind, &SolverSettings::default(), 0)
                .unwrap();
            assert!((out.alpha - 3.0).abs() < 1e-6, "{kind:?}: {}", out.alpha);
            assert!(out.x.iter().all(|v| (v - 1.0).abs() < 1e-4), "{:?}", out.x);
        }
    }

    #[test]
    fn path_completion_relaxation() {
        // one edge allowed on top of the path 1-2-3: the relaxation puts it on (1,3)
        let g = Graph::complete(3).unwrap();
        let set = LinearConstraintSet::unit_box(3).with_fixed_one([0, 2]).unwrap();
        for kind in [RelaxationKind::Hull, RelaxationKind::Lifted] {
            let out = WeightedRelaxation::indicator(&g, &set, Some(3.0))
                .solve(kind, &SolverSettings::default(), 0)
                .unwrap();
            assert!((out.alpha - 3.0).abs() < 1e-6);
            assert_eq!(out.free_edges, vec![1]);
        }
    }

    #[test]
    fn half_budget_gives_fractional_hull_bound() {
        // K3 with Σx ≤ 1.5: symmetric x = 1/2 gives λ₂ = 1.5
        let g = Graph::complete(3).unwrap();
        let set = LinearConstraintSet::unit_box(3);
        let out = WeightedRelaxation::indicator(&g, &set, Some(1.5))
            .solve(RelaxationKind::Hull, &SolverSettings::default(), 0)
            .unwrap();
        assert!((out.alpha - 1.5).abs() < 1e-6, "{}", out.alpha);
        assert!(out.dual_bound >= out.alpha - 1e-7);
    }

    #[test]
    fn protection_weights_with_full_budget() {
        let g = Graph::complete(3).unwrap();
        let set = LinearConstraintSet::unit_box(3).with_budget(3.0);
        let out = WeightedRelaxation::protection(&g, &set, &[1.0, 0.0, 0.0])
            .solve(RelaxationKind::Lifted, &SolverSettings::default(), 0)
            .unwrap();
        assert!((out.alpha - 3.0).abs() < 1e-6);
    }
}
