//! Small dense semidefinite programs.
//!
//! A [`ConicProgram`] maximizes a linear objective over scalar variables (each
//! with an optional box) and symmetric PSD matrix variables, subject to linear
//! rows and affine matrix inequalities F₀ + Σ zᵢ Fᵢ ⪰ 0. [`solve`] runs a
//! primal-dual interior-point method on the equivalent standard form.

mod gram;
mod ipm;

use std::collections::BTreeMap;

use nalgebra::DMatrix;

pub use gram::gram_factor;
pub use ipm::solve;

/// A decision variable: a scalar, or the (row, col) entry of a PSD matrix
/// variable with `row <= col`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Var {
    Scalar(usize),
    Entry { block: usize, row: usize, col: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sense {
    Eq,
    Le,
    Ge,
}

#[derive(Debug, Clone)]
pub struct LinearRow {
    pub terms: Vec<(Var, f64)>,
    pub sense: Sense,
    pub rhs: f64,
}

/// Symmetric matrix stored by its upper-triangle entries `(row, col, value)`,
/// `row <= col`.
pub type SymEntries = Vec<(usize, usize, f64)>;

/// F₀ + Σ coefficient(var) · Fᵥ ⪰ 0 with symmetric `d × d` matrices.
#[derive(Debug, Clone)]
pub struct Lmi {
    pub constant: DMatrix<f64>,
    pub terms: Vec<(Var, SymEntries)>,
}

impl Lmi {
    pub fn new(constant: DMatrix<f64>) -> Self {
        Self { constant, terms: Vec::new() }
    }

    pub fn dim(&self) -> usize {
        self.constant.nrows()
    }

    pub fn add_term(&mut self, var: Var, coeff: SymEntries) {
        self.terms.push((var, coeff));
    }

    /// The affine map evaluated at a solution.
    pub fn evaluate(&self, sol: &ConicSolution) -> DMatrix<f64> {
        let mut f = self.constant.clone();
        for (var, entries) in &self.terms {
            let z = sol.value(*var);
            for &(r, c, v) in entries {
                f[(r, c)] += z * v;
                if r != c {
                    f[(c, r)] += z * v;
                }
            }
        }
        f
    }
}

#[derive(Debug, Clone, Default)]
pub struct ConicProgram {
    pub(crate) scalar_bounds: Vec<(f64, f64)>,
    pub(crate) psd_dims: Vec<usize>,
    pub(crate) objective: Vec<(Var, f64)>,
    pub(crate) rows: Vec<LinearRow>,
    pub(crate) lmis: Vec<Lmi>,
}

impl ConicProgram {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds a scalar with bounds; use infinities for unbounded sides.
    pub fn add_scalar(&mut self, lower: f64, upper: f64) -> Var {
        assert!(lower <= upper, "scalar bounds out of order");
        self.scalar_bounds.push((lower, upper));
        Var::Scalar(self.scalar_bounds.len() - 1)
    }

    pub fn add_free(&mut self) -> Var {
        self.add_scalar(f64::NEG_INFINITY, f64::INFINITY)
    }

    /// Adds a `dim × dim` PSD matrix variable and returns its block index.
    pub fn add_psd(&mut self, dim: usize) -> usize {
        assert!(dim > 0);
        self.psd_dims.push(dim);
        self.psd_dims.len() - 1
    }

    pub fn entry(&self, block: usize, i: usize, j: usize) -> Var {
        assert!(block < self.psd_dims.len() && i.max(j) < self.psd_dims[block]);
        Var::Entry { block, row: i.min(j), col: i.max(j) }
    }

    /// Sets the objective to maximize Σ coeff · var.
    pub fn maximize(&mut self, terms: Vec<(Var, f64)>) {
        self.objective = terms;
    }

    pub fn add_row(&mut self, terms: Vec<(Var, f64)>, sense: Sense, rhs: f64) {
        self.rows.push(LinearRow { terms, sense, rhs });
    }

    pub fn add_lmi(&mut self, lmi: Lmi) {
        self.lmis.push(lmi);
    }

    pub fn num_scalars(&self) -> usize {
        self.scalar_bounds.len()
    }

    pub fn psd_dims(&self) -> &[usize] {
        &self.psd_dims
    }

    pub fn lmis(&self) -> &[Lmi] {
        &self.lmis
    }
}

pub(crate) fn merge_terms(terms: &[(Var, f64)]) -> Vec<(Var, f64)> {
    let mut acc: BTreeMap<Var, f64> = BTreeMap::new();
    for &(v, c) in terms {
        *acc.entry(v).or_default() += c;
    }
    acc.into_iter().filter(|(_, c)| *c != 0.0).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Optimal,
    Infeasible,
    Unbounded,
    MaxIters,
    /// Steps collapsed before the tolerances were met.
    Stalled,
}

#[derive(Debug, Clone, Copy)]
pub struct SolverSettings {
    pub tol: f64,
    pub max_iters: usize,
}

impl Default for SolverSettings {
    fn default() -> Self {
        Self { tol: 1e-8, max_iters: 200 }
    }
}

#[derive(Debug, Clone)]
pub struct ConicSolution {
    pub status: Status,
    pub scalars: Vec<f64>,
    pub matrices: Vec<DMatrix<f64>>,
    pub objective_value: f64,
    /// Dual objective of the final iterate; brackets the optimum together
    /// with `objective_value`.
    pub dual_objective: f64,
    pub primal_residual: f64,
    pub dual_residual: f64,
    pub gap: f64,
    /// Smallest eigenvalue over PSD variables and evaluated LMIs.
    pub psd_violation: f64,
    pub iterations: usize,
}

impl ConicSolution {
    pub fn value(&self, var: Var) -> f64 {
        match var {
            Var::Scalar(i) => self.scalars[i],
            Var::Entry { block, row, col } => self.matrices[block][(row, col)],
        }
    }

    pub fn is_optimal(&self) -> bool {
        self.status == Status::Optimal
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn settings() -> SolverSettings {
        SolverSettings::default()
    }

    #[test]
    fn diagonal_lmi_gives_min_eigenvalue() {
        let mut prog = ConicProgram::new();
        let a = prog.add_free();
        prog.maximize(vec![(a, 1.0)]);
        let mut lmi = Lmi::new(DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![1.0, 3.0])));
        lmi.add_term(a, vec![(0, 0, -1.0), (1, 1, -1.0)]);
        prog.add_lmi(lmi);
        let sol = solve(&prog, &settings());
        assert!(sol.is_optimal(), "{sol:?}");
        assert!((sol.value(a) - 1.0).abs() < 1e-6);
        assert!(sol.primal_residual < 1e-6 && sol.dual_residual < 1e-6);
        assert!(sol.psd_violation > -1e-7);
    }

    #[test]
    fn contradictory_bounds_are_infeasible() {
        let mut prog = ConicProgram::new();
        let a = prog.add_free();
        prog.maximize(vec![(a, 1.0)]);
        prog.add_row(vec![(a, 1.0)], Sense::Le, 0.0);
        prog.add_row(vec![(a, 1.0)], Sense::Ge, 1.0);
        let sol = solve(&prog, &settings());
        assert_eq!(sol.status, Status::Infeasible, "{sol:?}");
    }

    #[test]
    fn unbounded_objective_detected() {
        let mut prog = ConicProgram::new();
        let a = prog.add_scalar(0.0, f64::INFINITY);
        prog.maximize(vec![(a, 1.0)]);
        let sol = solve(&prog, &settings());
        assert_eq!(sol.status, Status::Unbounded, "{sol:?}");
    }

    #[test]
    fn small_lp() {
        // max x + 2y s.t. x + y <= 4, x <= 3, y in [0, 2.5], x >= 0
        let mut prog = ConicProgram::new();
        let x = prog.add_scalar(0.0, 3.0);
        let y = prog.add_scalar(0.0, 2.5);
        prog.maximize(vec![(x, 1.0), (y, 2.0)]);
        prog.add_row(vec![(x, 1.0), (y, 1.0)], Sense::Le, 4.0);
        let sol = solve(&prog, &settings());
        assert!(sol.is_optimal(), "{sol:?}");
        assert!((sol.objective_value - 6.5).abs() < 1e-6);
        assert!((sol.value(x) - 1.5).abs() < 1e-6);
    }

    #[test]
    fn maxcut_style_unit_diagonal() {
        // max ⟨W, X⟩ with X ⪰ 0, diag X = 1 for W = -(J - I) on 3 nodes:
        // optimum 3 (three unit vectors at 120°)
        let mut prog = ConicProgram::new();
        let b = prog.add_psd(3);
        let mut obj = Vec::new();
        for i in 0..3 {
            prog.add_row(vec![(prog.entry(b, i, i), 1.0)], Sense::Eq, 1.0);
            for j in i + 1..3 {
                obj.push((prog.entry(b, i, j), -2.0));
            }
        }
        prog.maximize(obj);
        let sol = solve(&prog, &settings());
        assert!(sol.is_optimal(), "{sol:?}");
        assert!((sol.objective_value - 3.0).abs() < 1e-6, "{}", sol.objective_value);
        for i in 0..3 {
            for j in i + 1..3 {
                assert!((sol.matrices[b][(i, j)] + 0.5).abs() < 1e-5);
            }
        }
    }

    #[test]
    fn fixed_scalar_is_substituted() {
        let mut prog = ConicProgram::new();
        let a = prog.add_scalar(2.0, 2.0);
        let b = prog.add_scalar(0.0, 10.0);
        prog.maximize(vec![(b, 1.0)]);
        prog.add_row(vec![(a, 1.0), (b, 1.0)], Sense::Le, 5.0);
        let sol = solve(&prog, &settings());
        assert!(sol.is_optimal());
        assert_eq!(sol.value(a), 2.0);
        assert!((sol.value(b) - 3.0).abs() < 1e-6);
    }
}
