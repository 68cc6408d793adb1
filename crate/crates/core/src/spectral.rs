//! Fiedler eigenpairs of (weighted) Laplacians and the analytic gradients of
//! the algebraic connectivity with respect to protection and attack vectors.

use nalgebra::DMatrix;

use crate::error::{check_len, Error, Result};
use crate::graph::{effective_weight, Graph};

/// Off-diagonal magnitude below which the Jacobi iteration stops.
pub const JACOBI_TOL: f64 = 1e-11;
const JACOBI_MAX_SWEEPS: usize = 100;

/// Symmetry and positive-semidefiniteness tolerance for Laplacian inputs.
pub const MATRIX_TOL: f64 = 1e-9;

/// Eigenvalue gaps at or below this are treated as a repeated Fiedler value.
pub const DEGENERACY_TOL: f64 = 1e-7;

/// Eigenvalues (ascending) and, optionally, the matching unit eigenvectors as
/// columns.
#[derive(Debug, Clone)]
pub struct EigenDecomposition {
    pub values: Vec<f64>,
    pub vectors: Option<DMatrix<f64>>,
}

/// Cyclic Jacobi eigensolver for dense symmetric matrices.
///
/// Sweeps visit pivots (p, q), p < q, in row-major order, so the result is a
/// deterministic function of the input. Converges when every off-diagonal
/// entry is below [`JACOBI_TOL`] in magnitude.
pub fn jacobi_eigen(a: &DMatrix<f64>, want_vectors: bool) -> Result<EigenDecomposition> {
    let n = a.nrows();
    if a.ncols() != n {
        return Err(Error::Dimension { expected: n, found: a.ncols() });
    }
    // row-major working copy, symmetrized
    let mut w = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            w[i * n + j] = 0.5 * (a[(i, j)] + a[(j, i)]);
        }
    }
    let mut v = if want_vectors {
        let mut id = vec![0.0; n * n];
        for i in 0..n {
            id[i * n + i] = 1.0;
        }
        Some(id)
    } else {
        None
    };

    let mut converged = false;
    for _ in 0..JACOBI_MAX_SWEEPS {
        let mut off = 0.0f64;
        for p in 0..n {
            for q in p + 1..n {
                off = off.max(w[p * n + q].abs());
            }
        }
        if off < JACOBI_TOL {
            converged = true;
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = w[p * n + q];
                if apq == 0.0 {
                    continue;
                }
                let theta = (w[q * n + q] - w[p * n + p]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                // A <- A J
                for k in 0..n {
                    let akp = w[k * n + p];
                    let akq = w[k * n + q];
                    w[k * n + p] = c * akp - s * akq;
                    w[k * n + q] = s * akp + c * akq;
                }
                // A <- Jᵀ A
                for k in 0..n {
                    let apk = w[p * n + k];
                    let aqk = w[q * n + k];
                    w[p * n + k] = c * apk - s * aqk;
                    w[q * n + k] = s * apk + c * aqk;
                }
                w[p * n + q] = 0.0;
                w[q * n + p] = 0.0;
                if let Some(v) = v.as_mut() {
                    for k in 0..n {
                        let vkp = v[k * n + p];
                        let vkq = v[k * n + q];
                        v[k * n + p] = c * vkp - s * vkq;
                        v[k * n + q] = s * vkp + c * vkq;
                    }
                }
            }
        }
    }
    if !converged {
        return Err(Error::NoConvergence(JACOBI_MAX_SWEEPS));
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| w[i * n + i].total_cmp(&w[j * n + j]));
    let values = order.iter().map(|&i| w[i * n + i]).collect();
    let vectors = v.map(|v| DMatrix::from_fn(n, n, |r, c| v[r * n + order[c]]));
    Ok(EigenDecomposition { values, vectors })
}

/// Fiedler eigenpair of a Laplacian.
#[derive(Debug, Clone)]
pub struct SpectralResult {
    pub lambda2: f64,
    /// Unit eigenvector for `lambda2`, orthogonal to the all-ones vector.
    pub vector: Vec<f64>,
    /// λ₃ − λ₂; infinite for two-node graphs.
    pub multiplicity_gap: f64,
}

impl SpectralResult {
    pub fn is_degenerate(&self) -> bool {
        self.multiplicity_gap <= DEGENERACY_TOL
    }
}

fn validate_laplacian(lap: &DMatrix<f64>) -> Result<()> {
    let n = lap.nrows();
    if lap.ncols() != n {
        return Err(Error::Dimension { expected: n, found: lap.ncols() });
    }
    if n < 2 {
        return Err(Error::Domain("Fiedler value needs at least 2 nodes".into()));
    }
    for i in 0..n {
        for j in i + 1..n {
            if (lap[(i, j)] - lap[(j, i)]).abs() > MATRIX_TOL {
                return Err(Error::Domain(format!(
                    "matrix is not symmetric at ({}, {})",
                    i + 1,
                    j + 1
                )));
            }
        }
    }
    Ok(())
}

fn check_psd(values: &[f64]) -> Result<()> {
    if values[0] < -MATRIX_TOL {
        return Err(Error::Domain(format!(
            "matrix is indefinite (min eigenvalue {:e})",
            values[0]
        )));
    }
    Ok(())
}

/// Second-smallest eigenvalue only. Cheaper than [`fiedler`]; used by the
/// enumeration oracles.
pub fn algebraic_connectivity(lap: &DMatrix<f64>) -> Result<f64> {
    validate_laplacian(lap)?;
    let eig = jacobi_eigen(lap, false)?;
    check_psd(&eig.values)?;
    Ok(eig.values[1])
}

/// Fiedler value and vector of a symmetric PSD matrix.
///
/// λ₂ is the second entry of the ascending spectrum (no deflation of the ones
/// vector), so a disconnected graph yields exactly its zero eigenvalue. When
/// λ₂ is repeated, the eigenspace basis is projected onto 1⊥,
/// orthonormalized, sign-normalized, and the lexicographically smallest
/// vector is returned.
pub fn fiedler(lap: &DMatrix<f64>) -> Result<SpectralResult> {
    validate_laplacian(lap)?;
    let n = lap.nrows();
    let eig = jacobi_eigen(lap, true)?;
    check_psd(&eig.values)?;
    let vals = &eig.values;
    let vecs = eig.vectors.expect("vectors requested");
    let lambda2 = vals[1];
    let multiplicity_gap = if n > 2 { vals[2] - lambda2 } else { f64::INFINITY };

    let cluster: Vec<usize> = (0..n)
        .filter(|&i| (vals[i] - lambda2).abs() <= DEGENERACY_TOL)
        .collect();
    let mut basis: Vec<Vec<f64>> = Vec::new();
    for &i in &cluster {
        let mut u: Vec<f64> = vecs.column(i).iter().copied().collect();
        center(&mut u);
        for b in &basis {
            let d = dot(&u, b);
            u.iter_mut().zip(b).for_each(|(x, y)| *x -= d * y);
        }
        let norm = dot(&u, &u).sqrt();
        if norm > 1e-6 {
            u.iter_mut().for_each(|x| *x /= norm);
            basis.push(u);
        }
    }
    let mut candidates: Vec<Vec<f64>> = basis
        .into_iter()
        .map(|mut u| {
            // second pass tightens orthogonality to the ones vector
            center(&mut u);
            let norm = dot(&u, &u).sqrt();
            u.iter_mut().for_each(|x| *x /= norm);
            sign_normalize(&mut u);
            u
        })
        .collect();
    candidates.sort_by(|a, b| lex_cmp(a, b));
    let vector = candidates
        .into_iter()
        .next()
        .ok_or_else(|| Error::Domain("no Fiedler vector orthogonal to ones".into()))?;
    Ok(SpectralResult { lambda2, vector, multiplicity_gap })
}

fn center(u: &mut [f64]) {
    let mean = u.iter().sum::<f64>() / u.len() as f64;
    u.iter_mut().for_each(|x| *x -= mean);
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// First component with magnitude above 1e-9 becomes positive.
fn sign_normalize(u: &mut [f64]) {
    if let Some(&first) = u.iter().find(|x| x.abs() > 1e-9) {
        if first < 0.0 {
            u.iter_mut().for_each(|x| *x = -*x);
        }
    }
}

fn lex_cmp(a: &[f64], b: &[f64]) -> std::cmp::Ordering {
    for (x, y) in a.iter().zip(b) {
        match x.total_cmp(y) {
            std::cmp::Ordering::Equal => continue,
            o => return o,
        }
    }
    std::cmp::Ordering::Equal
}

/// α(s, p): Fiedler value of the expected Laplacian, with `s` allowed to be
/// fractional.
pub fn alpha(g: &Graph, s: &[f64], p: &[f64]) -> Result<f64> {
    algebraic_connectivity(&expected_laplacian(g, s, p)?)
}

/// Binary-protection shorthand for [`alpha`].
pub fn alpha_binary(g: &Graph, s: &[u8], p: &[f64]) -> Result<f64> {
    let s: Vec<f64> = s.iter().map(|&b| f64::from(b)).collect();
    alpha(g, &s, p)
}

pub fn expected_laplacian(g: &Graph, s: &[f64], p: &[f64]) -> Result<DMatrix<f64>> {
    check_len(g.m(), s.len())?;
    check_len(g.m(), p.len())?;
    if let Some((l, &pl)) = p.iter().enumerate().find(|(_, &pl)| !(0.0..=1.0).contains(&pl)) {
        return Err(Error::Domain(format!("p[{}] = {pl} outside [0, 1]", l + 1)));
    }
    let w: Vec<f64> = s.iter().zip(p).map(|(&sl, &pl)| effective_weight(sl, pl)).collect();
    g.laplacian(&w)
}

/// A gradient of α; `degenerate` marks a repeated Fiedler value, in which case
/// the vector is only a supergradient.
#[derive(Debug, Clone)]
pub struct Gradient {
    pub values: Vec<f64>,
    pub degenerate: bool,
}

fn squared_differences(g: &Graph, v: &[f64]) -> Vec<f64> {
    g.edges().iter().map(|&(i, j)| (v[i] - v[j]).powi(2)).collect()
}

/// ∂α/∂s_l = p_l (v_i − v_j)².
pub fn grad_alpha_s(g: &Graph, s: &[f64], p: &[f64]) -> Result<Gradient> {
    let f = fiedler(&expected_laplacian(g, s, p)?)?;
    let values = squared_differences(g, &f.vector)
        .into_iter()
        .zip(p)
        .map(|(d, &pl)| pl * d)
        .collect();
    Ok(Gradient { values, degenerate: f.is_degenerate() })
}

/// ∂α/∂p_l = (s_l − 1)(v_i − v_j)², i.e. −(v_i − v_j)² for unprotected edges
/// and 0 for protected ones.
pub fn grad_alpha_p(g: &Graph, s: &[f64], p: &[f64]) -> Result<Gradient> {
    let f = fiedler(&expected_laplacian(g, s, p)?)?;
    let values = squared_differences(g, &f.vector)
        .into_iter()
        .zip(s)
        .map(|(d, &sl)| if sl == 1.0 { 0.0 } else { (sl - 1.0) * d })
        .collect();
    Ok(Gradient { values, degenerate: f.is_degenerate() })
}

/// (v₂,ᵢ − v₂,ⱼ)² for every edge of `g`, with v₂ the Fiedler vector of the
/// subgraph selected by `x`.
pub fn edge_scores(g: &Graph, x: &[u8]) -> Result<Vec<f64>> {
    let f = fiedler(&g.indicator_laplacian(x)?)?;
    Ok(squared_differences(g, &f.vector))
}
