//! Infeasible-start primal-dual interior-point method (HKM direction with
//! Mehrotra predictor-corrector) for
//!
//! ```text
//! min ⟨C, X⟩ + c_fᵀ x_f   s.t.  𝒜(X) + A_f x_f = b,  X ∈ K
//! ```
//!
//! where K is a product of PSD blocks and one nonnegative orthant and `x_f`
//! are free variables. Free variables enter the Newton system through a
//! bordered Schur complement instead of being split.

use std::collections::BTreeMap;

use log::debug;
use nalgebra::{DMatrix, DVector};

use super::{merge_terms, ConicProgram, ConicSolution, Sense, SolverSettings, Status, SymEntries, Var};

const STEP_FRACTION: f64 = 0.98;
const CERTIFICATE_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy)]
enum StdVar {
    Free(usize),
    Lp(usize),
}

/// user scalar = offset + sign · std var
#[derive(Debug, Clone, Copy)]
struct ScalarMap {
    offset: f64,
    var: Option<(StdVar, f64)>,
}

#[derive(Debug, Clone, Default)]
struct StdRow {
    /// (block, row, col, v) with row <= col; contributes v · X[row, col]
    psd: Vec<(usize, usize, usize, f64)>,
    lp: Vec<(usize, f64)>,
    free: Vec<(usize, f64)>,
    b: f64,
}

#[derive(Debug, Default)]
struct StdForm {
    psd_dims: Vec<usize>,
    n_lp: usize,
    n_free: usize,
    rows: Vec<StdRow>,
    c_psd: Vec<DMatrix<f64>>,
    c_lp: Vec<f64>,
    c_free: Vec<f64>,
    obj_offset: f64,
    scalar_map: Vec<ScalarMap>,
    n_user_psd: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum Key {
    Psd(usize, usize, usize),
    Lp(usize),
    Free(usize),
}

impl StdForm {
    fn build(prog: &ConicProgram) -> StdForm {
        let mut sf = StdForm {
            psd_dims: prog.psd_dims.clone(),
            n_user_psd: prog.psd_dims.len(),
            ..Default::default()
        };
        let mut bound_rows = Vec::new();
        for &(lo, hi) in &prog.scalar_bounds {
            let map = match (lo.is_finite(), hi.is_finite()) {
                (false, false) => {
                    sf.n_free += 1;
                    ScalarMap { offset: 0.0, var: Some((StdVar::Free(sf.n_free - 1), 1.0)) }
                }
                (true, false) => ScalarMap { offset: lo, var: Some((StdVar::Lp(sf.new_lp()), 1.0)) },
                (false, true) => ScalarMap { offset: hi, var: Some((StdVar::Lp(sf.new_lp()), -1.0)) },
                (true, true) if lo == hi => ScalarMap { offset: lo, var: None },
                (true, true) => {
                    let u = sf.new_lp();
                    let w = sf.new_lp();
                    bound_rows.push(StdRow { lp: vec![(u, 1.0), (w, 1.0)], b: hi - lo, ..Default::default() });
                    ScalarMap { offset: lo, var: Some((StdVar::Lp(u), 1.0)) }
                }
            };
            sf.scalar_map.push(map);
        }

        for row in &prog.rows {
            let mut acc = BTreeMap::new();
            let mut rhs = row.rhs;
            sf.push_terms(&merge_terms(&row.terms), 1.0, &mut acc, &mut rhs);
            match row.sense {
                Sense::Eq => {}
                Sense::Le => {
                    acc.insert(Key::Lp(sf.new_lp()), 1.0);
                }
                Sense::Ge => {
                    acc.insert(Key::Lp(sf.new_lp()), -1.0);
                }
            }
            sf.rows.push(make_row(acc, rhs));
        }
        sf.rows.extend(bound_rows);

        for lmi in &prog.lmis {
            let d = lmi.dim();
            sf.psd_dims.push(d);
            let slack = sf.psd_dims.len() - 1;
            let mut per_entry: BTreeMap<(usize, usize), Vec<(Var, f64)>> = BTreeMap::new();
            for (var, entries) in &lmi.terms {
                for &(r, c, v) in entries {
                    per_entry.entry((r.min(c), r.max(c))).or_default().push((*var, v));
                }
            }
            for a in 0..d {
                for b in a..d {
                    // S_ab − Σ v · var = F0_ab
                    let mut acc = BTreeMap::new();
                    acc.insert(Key::Psd(slack, a, b), 1.0);
                    let mut rhs = lmi.constant[(a, b)];
                    if let Some(terms) = per_entry.get(&(a, b)) {
                        sf.push_terms(&merge_terms(terms), -1.0, &mut acc, &mut rhs);
                    }
                    sf.rows.push(make_row(acc, rhs));
                }
            }
        }

        sf.c_psd = sf.psd_dims.iter().map(|&d| DMatrix::zeros(d, d)).collect();
        sf.c_lp = vec![0.0; sf.n_lp];
        sf.c_free = vec![0.0; sf.n_free];
        for &(var, c) in &merge_terms(&prog.objective) {
            // maximize c·var  ->  minimize −c·var
            match var {
                Var::Scalar(i) => {
                    let map = sf.scalar_map[i];
                    sf.obj_offset -= c * map.offset;
                    match map.var {
                        Some((StdVar::Lp(k), s)) => sf.c_lp[k] -= c * s,
                        Some((StdVar::Free(k), s)) => sf.c_free[k] -= c * s,
                        None => {}
                    }
                }
                Var::Entry { block, row, col } => {
                    if row == col {
                        sf.c_psd[block][(row, row)] -= c;
                    } else {
                        sf.c_psd[block][(row, col)] -= 0.5 * c;
                        sf.c_psd[block][(col, row)] -= 0.5 * c;
                    }
                }
            }
        }
        sf
    }

    fn new_lp(&mut self) -> usize {
        self.n_lp += 1;
        self.n_lp - 1
    }

    fn push_terms(&self, terms: &[(Var, f64)], scale: f64, acc: &mut BTreeMap<Key, f64>, rhs: &mut f64) {
        for &(var, c) in terms {
            let c = c * scale;
            match var {
                Var::Scalar(i) => {
                    let map = self.scalar_map[i];
                    *rhs -= c * map.offset;
                    match map.var {
                        Some((StdVar::Lp(k), s)) => *acc.entry(Key::Lp(k)).or_default() += c * s,
                        Some((StdVar::Free(k), s)) => *acc.entry(Key::Free(k)).or_default() += c * s,
                        None => {}
                    }
                }
                Var::Entry { block, row, col } => {
                    *acc.entry(Key::Psd(block, row, col)).or_default() += c;
                }
            }
        }
    }
}

fn make_row(acc: BTreeMap<Key, f64>, b: f64) -> StdRow {
    let mut row = StdRow { b, ..Default::default() };
    for (k, v) in acc {
        if v == 0.0 {
            continue;
        }
        match k {
            Key::Psd(bk, r, c) => row.psd.push((bk, r, c, v)),
            Key::Lp(j) => row.lp.push((j, v)),
            Key::Free(j) => row.free.push((j, v)),
        }
    }
    row
}

/// Iterate of the standard-form problem.
#[derive(Debug, Clone)]
struct Iterate {
    x: Vec<DMatrix<f64>>,
    z: Vec<DMatrix<f64>>,
    x_lp: Vec<f64>,
    z_lp: Vec<f64>,
    x_free: Vec<f64>,
    y: Vec<f64>,
}

struct Residuals {
    rp: Vec<f64>,
    rd: Vec<DMatrix<f64>>,
    rd_lp: Vec<f64>,
    rf: Vec<f64>,
    pobj: f64,
    dobj: f64,
    pinf: f64,
    dinf: f64,
    gap: f64,
}

struct Problem {
    sf: StdForm,
    /// rows expanded to both triangles, grouped by block: (row, a, b, w)
    expanded: Vec<Vec<(usize, SymEntries)>>,
    lp_cols: Vec<Vec<(usize, f64)>>,
    b_norm: f64,
    c_norm: f64,
}

impl Problem {
    fn new(mut sf: StdForm) -> Result<Problem, usize> {
        // unit-norm row scaling
        let mut keep = Vec::with_capacity(sf.rows.len());
        for (i, row) in sf.rows.iter_mut().enumerate() {
            let norm2: f64 = row
                .psd
                .iter()
                .map(|&(_, r, c, v)| if r == c { v * v } else { 0.5 * v * v })
                .chain(row.lp.iter().map(|&(_, v)| v * v))
                .chain(row.free.iter().map(|&(_, v)| v * v))
                .sum();
            let norm = norm2.sqrt();
            if norm == 0.0 {
                if row.b.abs() > 1e-12 {
                    return Err(i);
                }
                keep.push(false);
                continue;
            }
            keep.push(true);
            row.psd.iter_mut().for_each(|t| t.3 /= norm);
            row.lp.iter_mut().for_each(|t| t.1 /= norm);
            row.free.iter_mut().for_each(|t| t.1 /= norm);
            row.b /= norm;
        }
        let mut it = keep.iter();
        sf.rows.retain(|_| *it.next().unwrap());

        let mut expanded: Vec<Vec<(usize, SymEntries)>> = vec![Vec::new(); sf.psd_dims.len()];
        for (i, row) in sf.rows.iter().enumerate() {
            let mut per_block: BTreeMap<usize, Vec<(usize, usize, f64)>> = BTreeMap::new();
            for &(bk, r, c, v) in &row.psd {
                let e = per_block.entry(bk).or_default();
                if r == c {
                    e.push((r, r, v));
                } else {
                    e.push((r, c, 0.5 * v));
                    e.push((c, r, 0.5 * v));
                }
            }
            for (bk, list) in per_block {
                expanded[bk].push((i, list));
            }
        }
        let mut lp_cols = vec![Vec::new(); sf.n_lp];
        for (i, row) in sf.rows.iter().enumerate() {
            for &(j, v) in &row.lp {
                lp_cols[j].push((i, v));
            }
        }
        let b_norm = sf.rows.iter().map(|r| r.b * r.b).sum::<f64>().sqrt();
        let c_norm = (sf.c_psd.iter().map(|c| c.norm_squared()).sum::<f64>()
            + sf.c_lp.iter().map(|v| v * v).sum::<f64>()
            + sf.c_free.iter().map(|v| v * v).sum::<f64>())
        .sqrt();
        Ok(Problem { sf, expanded, lp_cols, b_norm, c_norm })
    }

    fn m(&self) -> usize {
        self.sf.rows.len()
    }

    /// 𝒜 applied to (possibly nonsymmetric) block matrices: ⟨Aᵢ, G⟩.
    fn apply(&self, g: &[DMatrix<f64>], g_lp: &[f64], g_free: Option<&[f64]>) -> Vec<f64> {
        let mut out = vec![0.0; self.m()];
        for (i, row) in self.sf.rows.iter().enumerate() {
            let mut s = 0.0;
            for &(bk, r, c, v) in &row.psd {
                s += if r == c { v * g[bk][(r, r)] } else { 0.5 * v * (g[bk][(r, c)] + g[bk][(c, r)]) };
            }
            for &(j, v) in &row.lp {
                s += v * g_lp[j];
            }
            if let Some(gf) = g_free {
                for &(j, v) in &row.free {
                    s += v * gf[j];
                }
            }
            out[i] = s;
        }
        out
    }

    /// 𝒜*(y) on the PSD blocks and the LP block, and A_fᵀ y.
    fn adjoint(&self, y: &[f64]) -> (Vec<DMatrix<f64>>, Vec<f64>, Vec<f64>) {
        let mut mats: Vec<DMatrix<f64>> = self.sf.psd_dims.iter().map(|&d| DMatrix::zeros(d, d)).collect();
        let mut lp = vec![0.0; self.sf.n_lp];
        let mut fr = vec![0.0; self.sf.n_free];
        for (i, row) in self.sf.rows.iter().enumerate() {
            let yi = y[i];
            if yi == 0.0 {
                continue;
            }
            for &(bk, r, c, v) in &row.psd {
                if r == c {
                    mats[bk][(r, r)] += yi * v;
                } else {
                    mats[bk][(r, c)] += 0.5 * yi * v;
                    mats[bk][(c, r)] += 0.5 * yi * v;
                }
            }
            for &(j, v) in &row.lp {
                lp[j] += yi * v;
            }
            for &(j, v) in &row.free {
                fr[j] += yi * v;
            }
        }
        (mats, lp, fr)
    }

    fn residuals(&self, it: &Iterate) -> Residuals {
        let sf = &self.sf;
        let ax = self.apply(&it.x, &it.x_lp, Some(&it.x_free));
        let rp: Vec<f64> = sf.rows.iter().zip(&ax).map(|(r, a)| r.b - a).collect();
        let (aty, aty_lp, aty_f) = self.adjoint(&it.y);
        let rd: Vec<DMatrix<f64>> = (0..sf.psd_dims.len()).map(|k| &sf.c_psd[k] - &aty[k] - &it.z[k]).collect();
        let rd_lp: Vec<f64> = (0..sf.n_lp).map(|j| sf.c_lp[j] - aty_lp[j] - it.z_lp[j]).collect();
        let rf: Vec<f64> = (0..sf.n_free).map(|j| sf.c_free[j] - aty_f[j]).collect();
        let pobj = sf.c_psd.iter().zip(&it.x).map(|(c, x)| c.dot(x)).sum::<f64>()
            + dotv(&sf.c_lp, &it.x_lp)
            + dotv(&sf.c_free, &it.x_free);
        let dobj = sf.rows.iter().zip(&it.y).map(|(r, y)| r.b * y).sum::<f64>();
        let pinf = norm(&rp) / (1.0 + self.b_norm);
        let dinf = (rd.iter().map(|m| m.norm_squared()).sum::<f64>() + norm2(&rd_lp) + norm2(&rf)).sqrt()
            / (1.0 + self.c_norm);
        let gap = (pobj - dobj).abs() / (1.0 + pobj.abs() + dobj.abs());
        Residuals { rp, rd, rd_lp, rf, pobj, dobj, pinf, dinf, gap }
    }

    fn initial(&self) -> Iterate {
        let sf = &self.sf;
        let m = self.m();
        let mut x = Vec::new();
        let mut z = Vec::new();
        for (bk, &d) in sf.psd_dims.iter().enumerate() {
            let df = d as f64;
            let mut xi: f64 = 10f64.max(df.sqrt());
            for (i, _) in &self.expanded[bk] {
                xi = xi.max(df * (1.0 + sf.rows[*i].b.abs()));
            }
            let eta = 10f64.max(df.sqrt()).max(1.0 + sf.c_psd[bk].norm());
            x.push(DMatrix::identity(d, d) * xi);
            z.push(DMatrix::identity(d, d) * eta);
        }
        let bmax = sf.rows.iter().map(|r| r.b.abs()).fold(0.0, f64::max);
        let cmax = sf.c_lp.iter().map(|c| c.abs()).fold(0.0, f64::max);
        Iterate {
            x,
            z,
            x_lp: vec![10f64.max(1.0 + bmax); sf.n_lp],
            z_lp: vec![10f64.max(1.0 + cmax); sf.n_lp],
            x_free: vec![0.0; sf.n_free],
            y: vec![0.0; m],
        }
    }

    fn nu(&self) -> f64 {
        (self.sf.psd_dims.iter().sum::<usize>() + self.sf.n_lp) as f64
    }

    fn complementarity(&self, it: &Iterate) -> f64 {
        let s = it.x.iter().zip(&it.z).map(|(x, z)| x.dot(z)).sum::<f64>() + dotv(&it.x_lp, &it.z_lp);
        s / self.nu().max(1.0)
    }

    /// Bordered Schur system [M A_f; A_fᵀ 0].
    fn schur(&self, it: &Iterate, zinv: &[DMatrix<f64>]) -> DMatrix<f64> {
        let m = self.m();
        let nf = self.sf.n_free;
        let mut k = DMatrix::zeros(m + nf, m + nf);
        for (bk, rows) in self.expanded.iter().enumerate() {
            let x = &it.x[bk];
            let zi = &zinv[bk];
            for (p, (i, ai)) in rows.iter().enumerate() {
                for (j, aj) in rows[..=p].iter() {
                    // tr(Aᵢ X Aⱼ Z⁻¹) = Σ w u X[b, c] Z⁻¹[d, a]
                    let mut s = 0.0;
                    for &(a, b, w) in ai {
                        for &(c, d, u) in aj {
                            s += w * u * x[(b, c)] * zi[(d, a)];
                        }
                    }
                    k[(*i, *j)] += s;
                    if i != j {
                        k[(*j, *i)] += s;
                    }
                }
            }
        }
        for (jcol, col) in self.lp_cols.iter().enumerate() {
            let ratio = it.x_lp[jcol] / it.z_lp[jcol];
            for &(i, vi) in col {
                for &(j, vj) in col {
                    k[(i, j)] += vi * vj * ratio;
                }
            }
        }
        for (i, row) in self.sf.rows.iter().enumerate() {
            for &(j, v) in &row.free {
                k[(i, m + j)] += v;
                k[(m + j, i)] += v;
            }
        }
        k
    }
}

fn dotv(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm2(a: &[f64]) -> f64 {
    a.iter().map(|x| x * x).sum()
}

fn norm(a: &[f64]) -> f64 {
    norm2(a).sqrt()
}

fn sym(m: DMatrix<f64>) -> DMatrix<f64> {
    (&m + m.transpose()) * 0.5
}

/// Largest step t with X + t·dX ⪰ 0 (infinite when dX ⪰ 0).
fn max_step_psd(x: &DMatrix<f64>, dx: &DMatrix<f64>) -> Option<f64> {
    let chol = x.clone().cholesky()?;
    let l = chol.l();
    let a = l.solve_lower_triangular(dx)?;
    let w = l.solve_lower_triangular(&a.transpose())?;
    let w = sym(w);
    let lmin = w.symmetric_eigenvalues().min();
    Some(if lmin < 0.0 { -1.0 / lmin } else { f64::INFINITY })
}

fn max_step_lp(x: &[f64], dx: &[f64]) -> f64 {
    x.iter()
        .zip(dx)
        .filter(|(_, &d)| d < 0.0)
        .map(|(&xi, &d)| -xi / d)
        .fold(f64::INFINITY, f64::min)
}

struct Direction {
    dx: Vec<DMatrix<f64>>,
    dz: Vec<DMatrix<f64>>,
    dx_lp: Vec<f64>,
    dz_lp: Vec<f64>,
    dx_free: Vec<f64>,
    dy: Vec<f64>,
}

impl Problem {
    #[allow(clippy::too_many_arguments)]
    fn direction(
        &self,
        it: &Iterate,
        res: &Residuals,
        zinv: &[DMatrix<f64>],
        lu: &nalgebra::LU<f64, nalgebra::Dyn, nalgebra::Dyn>,
        rc: &[DMatrix<f64>],
        rc_lp: &[f64],
    ) -> Option<Direction> {
        let m = self.m();
        let nb = self.sf.psd_dims.len();
        // G = R_c Z⁻¹ − X R_d Z⁻¹
        let g: Vec<DMatrix<f64>> = (0..nb)
            .map(|k| (&rc[k] - &it.x[k] * &res.rd[k]) * &zinv[k])
            .collect();
        let g_lp: Vec<f64> = (0..self.sf.n_lp)
            .map(|j| (rc_lp[j] - it.x_lp[j] * res.rd_lp[j]) / it.z_lp[j])
            .collect();
        let ag = self.apply(&g, &g_lp, None);
        let mut rhs = DVector::zeros(m + self.sf.n_free);
        for i in 0..m {
            rhs[i] = res.rp[i] - ag[i];
        }
        for j in 0..self.sf.n_free {
            rhs[m + j] = res.rf[j];
        }
        let sol = lu.solve(&rhs)?;
        if sol.iter().any(|v| !v.is_finite()) {
            return None;
        }
        let dy: Vec<f64> = sol.rows(0, m).iter().copied().collect();
        let dx_free: Vec<f64> = sol.rows(m, self.sf.n_free).iter().copied().collect();
        let (ady, ady_lp, _) = self.adjoint(&dy);
        let dz: Vec<DMatrix<f64>> = (0..nb).map(|k| &res.rd[k] - &ady[k]).collect();
        let dx: Vec<DMatrix<f64>> = (0..nb)
            .map(|k| sym((&rc[k] - &it.x[k] * &dz[k]) * &zinv[k]))
            .collect();
        let dz_lp: Vec<f64> = (0..self.sf.n_lp).map(|j| res.rd_lp[j] - ady_lp[j]).collect();
        let dx_lp: Vec<f64> = (0..self.sf.n_lp)
            .map(|j| (rc_lp[j] - it.x_lp[j] * dz_lp[j]) / it.z_lp[j])
            .collect();
        Some(Direction { dx, dz, dx_lp, dz_lp, dx_free, dy })
    }

    fn step_lengths(&self, it: &Iterate, d: &Direction) -> Option<(f64, f64)> {
        let mut ap = max_step_lp(&it.x_lp, &d.dx_lp);
        let mut ad = max_step_lp(&it.z_lp, &d.dz_lp);
        for k in 0..it.x.len() {
            ap = ap.min(max_step_psd(&it.x[k], &d.dx[k])?);
            ad = ad.min(max_step_psd(&it.z[k], &d.dz[k])?);
        }
        Some((ap, ad))
    }
}

fn certificate_infeasible(p: &Problem, it: &Iterate, res: &Residuals) -> bool {
    // dual ray: bᵀy → ∞ while 𝒜*(y) + Z and A_fᵀy stay bounded
    if res.dobj <= 0.0 {
        return false;
    }
    let (aty, aty_lp, aty_f) = p.adjoint(&it.y);
    let s2: f64 = aty.iter().zip(&it.z).map(|(a, z)| (a + z).norm_squared()).sum::<f64>()
        + aty_lp.iter().zip(&it.z_lp).map(|(a, z)| (a + z).powi(2)).sum::<f64>()
        + norm2(&aty_f);
    s2.sqrt() < CERTIFICATE_TOL * res.dobj
}

fn certificate_unbounded(p: &Problem, it: &Iterate, res: &Residuals) -> bool {
    // primal ray: ⟨C, X⟩ → −∞ while 𝒜(X) stays bounded
    if res.pobj >= 0.0 {
        return false;
    }
    let ax = p.apply(&it.x, &it.x_lp, Some(&it.x_free));
    norm(&ax) < CERTIFICATE_TOL * (-res.pobj)
}

/// Solves `prog` to relative tolerance `settings.tol`.
pub fn solve(prog: &ConicProgram, settings: &SolverSettings) -> ConicSolution {
    let sf = StdForm::build(prog);
    let problem = match Problem::new(sf) {
        Ok(p) => p,
        Err(row) => {
            debug!("row {row} reads 0 = b with b != 0");
            return finish(prog, None, Status::Infeasible, 0);
        }
    };
    let nb = problem.sf.psd_dims.len();
    let mut it = problem.initial();
    let mut best: Option<(f64, Iterate)> = None;
    let mut status = Status::MaxIters;
    let mut iterations = 0;
    let mut tiny_steps = 0;

    for iter in 0..settings.max_iters {
        iterations = iter;
        let res = problem.residuals(&it);
        let merit = res.pinf.max(res.dinf).max(res.gap);
        if best.as_ref().is_none_or(|(b, _)| merit < *b) {
            best = Some((merit, it.clone()));
        }
        debug!(
            "iter {iter}: pobj {:.9e} dobj {:.9e} pinf {:.2e} dinf {:.2e} gap {:.2e}",
            res.pobj, res.dobj, res.pinf, res.dinf, res.gap
        );
        if res.pinf < settings.tol && res.dinf < settings.tol && res.gap < settings.tol {
            status = Status::Optimal;
            break;
        }
        if certificate_infeasible(&problem, &it, &res) {
            status = Status::Infeasible;
            break;
        }
        if certificate_unbounded(&problem, &it, &res) {
            status = Status::Unbounded;
            break;
        }

        let mu = problem.complementarity(&it);
        let zinv: Option<Vec<DMatrix<f64>>> = it.z.iter().map(|z| z.clone().cholesky().map(|c| c.inverse())).collect();
        let Some(zinv) = zinv else {
            status = Status::Stalled;
            break;
        };
        let mut k = problem.schur(&it, &zinv);
        let m = problem.m();
        let scale = (0..m).map(|i| k[(i, i)].abs()).fold(0.0, f64::max).max(1.0);
        for i in 0..m {
            k[(i, i)] += 1e-14 * scale;
        }
        let lu = k.lu();

        // predictor
        let rc_aff: Vec<DMatrix<f64>> = (0..nb).map(|b| -(&it.x[b] * &it.z[b])).collect();
        let rc_aff_lp: Vec<f64> = it.x_lp.iter().zip(&it.z_lp).map(|(x, z)| -x * z).collect();
        let Some(aff) = problem.direction(&it, &res, &zinv, &lu, &rc_aff, &rc_aff_lp) else {
            status = Status::Stalled;
            break;
        };
        let Some((ap, ad)) = problem.step_lengths(&it, &aff) else {
            status = Status::Stalled;
            break;
        };
        let (ap, ad) = (ap.min(1.0), ad.min(1.0));
        let mut mu_aff = 0.0;
        for b in 0..nb {
            mu_aff += (&it.x[b] + &aff.dx[b] * ap).dot(&(&it.z[b] + &aff.dz[b] * ad));
        }
        for j in 0..problem.sf.n_lp {
            mu_aff += (it.x_lp[j] + ap * aff.dx_lp[j]) * (it.z_lp[j] + ad * aff.dz_lp[j]);
        }
        mu_aff /= problem.nu().max(1.0);
        let sigma = if mu > 0.0 { (mu_aff / mu).clamp(0.0, 1.0).powi(3) } else { 0.0 };

        // corrector
        let rc: Vec<DMatrix<f64>> = (0..nb)
            .map(|b| {
                let d = it.x[b].nrows();
                DMatrix::identity(d, d) * (sigma * mu) - &it.x[b] * &it.z[b] - &aff.dx[b] * &aff.dz[b]
            })
            .collect();
        let rc_lp: Vec<f64> = (0..problem.sf.n_lp)
            .map(|j| sigma * mu - it.x_lp[j] * it.z_lp[j] - aff.dx_lp[j] * aff.dz_lp[j])
            .collect();
        let Some(dir) = problem.direction(&it, &res, &zinv, &lu, &rc, &rc_lp) else {
            status = Status::Stalled;
            break;
        };
        let Some((ap, ad)) = problem.step_lengths(&it, &dir) else {
            status = Status::Stalled;
            break;
        };
        let ap = (STEP_FRACTION * ap).min(1.0);
        let ad = (STEP_FRACTION * ad).min(1.0);
        if ap < 1e-10 && ad < 1e-10 {
            tiny_steps += 1;
            if tiny_steps >= 3 {
                status = Status::Stalled;
                break;
            }
        } else {
            tiny_steps = 0;
        }
        for b in 0..nb {
            it.x[b] += &dir.dx[b] * ap;
            it.z[b] += &dir.dz[b] * ad;
        }
        for j in 0..problem.sf.n_lp {
            it.x_lp[j] += ap * dir.dx_lp[j];
            it.z_lp[j] += ad * dir.dz_lp[j];
        }
        for j in 0..problem.sf.n_free {
            it.x_free[j] += ap * dir.dx_free[j];
        }
        for i in 0..m {
            it.y[i] += ad * dir.dy[i];
        }
        iterations = iter + 1;
    }

    let final_it = match status {
        Status::Optimal | Status::Infeasible | Status::Unbounded => it,
        _ => best.map(|(_, b)| b).unwrap_or(it),
    };
    let res = problem.residuals(&final_it);
    finish(prog, Some((&problem, &final_it, &res)), status, iterations)
}

fn finish(
    prog: &ConicProgram,
    state: Option<(&Problem, &Iterate, &Residuals)>,
    status: Status,
    iterations: usize,
) -> ConicSolution {
    let Some((p, it, res)) = state else {
        return ConicSolution {
            status,
            scalars: prog.scalar_bounds.iter().map(|_| f64::NAN).collect(),
            matrices: prog.psd_dims.iter().map(|&d| DMatrix::from_element(d, d, f64::NAN)).collect(),
            objective_value: f64::NAN,
            dual_objective: f64::NAN,
            primal_residual: f64::INFINITY,
            dual_residual: f64::INFINITY,
            gap: f64::INFINITY,
            psd_violation: f64::NEG_INFINITY,
            iterations,
        };
    };
    let scalars: Vec<f64> = p
        .sf
        .scalar_map
        .iter()
        .map(|map| match map.var {
            None => map.offset,
            Some((StdVar::Lp(k), s)) => map.offset + s * it.x_lp[k],
            Some((StdVar::Free(k), s)) => map.offset + s * it.x_free[k],
        })
        .collect();
    let matrices: Vec<DMatrix<f64>> = it.x[..p.sf.n_user_psd].to_vec();
    let mut sol = ConicSolution {
        status,
        scalars,
        matrices,
        objective_value: 0.0,
        dual_objective: -(res.dobj + p.sf.obj_offset),
        primal_residual: res.pinf,
        dual_residual: res.dinf,
        gap: res.gap,
        psd_violation: f64::INFINITY,
        iterations,
    };
    sol.objective_value = prog.objective.iter().map(|&(v, c)| c * sol.value(v)).sum();
    let mut min_eig = f64::INFINITY;
    for m in &sol.matrices {
        min_eig = min_eig.min(m.clone().symmetric_eigenvalues().min());
    }
    for lmi in &prog.lmis {
        min_eig = min_eig.min(lmi.evaluate(&sol).symmetric_eigenvalues().min());
    }
    sol.psd_violation = min_eig;
    sol
}
