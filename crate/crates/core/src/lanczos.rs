//! Lowest eigenpairs of large symmetric operators.
//!
//! Lanczos with full reorthogonalization and explicit restarts from the
//! current Ritz vector. Converged vectors are locked and projected out, one
//! target at a time, so degenerate levels are returned with multiplicity.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::sparse::CsrMatrix;

/// Real symmetric operator usable by [`lanczos_lowest`].
pub trait SymmetricOperator: Sync {
    fn dim(&self) -> usize;
    fn apply(&self, x: &[f64], y: &mut [f64]);
    /// Upper bound on the spectral norm, used to scale tolerances.
    fn norm_estimate(&self) -> f64;
}

impl SymmetricOperator for CsrMatrix {
    fn dim(&self) -> usize {
        CsrMatrix::dim(self)
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        self.matvec(x, y)
    }

    fn norm_estimate(&self) -> f64 {
        self.norm_inf()
    }
}

impl SymmetricOperator for DMatrix<f64> {
    fn dim(&self) -> usize {
        self.nrows()
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        for (i, yi) in y.iter_mut().enumerate() {
            *yi = self.row(i).iter().zip(x).map(|(a, b)| a * b).sum();
        }
    }

    fn norm_estimate(&self) -> f64 {
        self.row_iter()
            .map(|r| r.iter().map(|v| v.abs()).sum::<f64>())
            .fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LanczosOptions {
    /// Relative residual tolerance: `|Hv - θv| <= tol * norm_estimate`.
    pub tol: f64,
    pub seed: u64,
    /// Krylov basis size before a restart.
    pub krylov_dim: usize,
    pub max_restarts: usize,
}

impl Default for LanczosOptions {
    fn default() -> Self {
        Self {
            tol: 1e-12,
            seed: 0x5EED,
            krylov_dim: 100,
            max_restarts: 300,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Eigenpair {
    pub value: f64,
    /// `|Hv - θv|` for the unit vector `v`.
    pub residual: f64,
    pub vector: Vec<f64>,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn project_out(basis: &[Vec<f64>], w: &mut [f64]) {
    for _ in 0..2 {
        for b in basis {
            let c = dot(b, w);
            axpy(-c, b, w);
        }
    }
}

/// Rayleigh quotient and residual norm of a unit vector.
fn rayleigh(op: &dyn SymmetricOperator, v: &[f64]) -> (f64, f64) {
    let mut hv = vec![0.0; v.len()];
    op.apply(v, &mut hv);
    let theta = dot(v, &hv);
    axpy(-theta, v, &mut hv);
    (theta, norm(&hv))
}

/// Eigenvector of the lowest eigenvalue of the tridiagonal matrix.
fn lowest_ritz(alphas: &[f64], betas: &[f64]) -> Vec<f64> {
    let m = alphas.len();
    let t = DMatrix::from_fn(m, m, |i, j| {
        if i == j {
            alphas[i]
        } else if i + 1 == j {
            betas[i]
        } else if j + 1 == i {
            betas[j]
        } else {
            0.0
        }
    });
    let eig = t.symmetric_eigen();
    let idx = eig.eigenvalues.imin();
    eig.eigenvectors.column(idx).iter().copied().collect()
}

/// The `count` lowest eigenpairs in ascending order.
pub fn lanczos_lowest(
    op: &dyn SymmetricOperator,
    count: usize,
    opts: &LanczosOptions,
) -> Result<Vec<Eigenpair>> {
    let n = op.dim();
    if count > n {
        return Err(Error::InvalidParameter(format!(
            "requested {count} eigenvalues of a {n}-dimensional operator"
        )));
    }
    let scale = op.norm_estimate().max(f64::MIN_POSITIVE);
    let threshold = opts.tol * scale;
    let mut locked: Vec<Vec<f64>> = Vec::with_capacity(count);
    let mut found: Vec<Eigenpair> = Vec::with_capacity(count);

    for target in 0..count {
        let available = n - locked.len();
        let mut rng = ChaCha8Rng::seed_from_u64(opts.seed.wrapping_add(target as u64));
        let mut start: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let mut best = f64::INFINITY;
        let mut accepted = None;

        'restarts: for _ in 0..opts.max_restarts {
            project_out(&locked, &mut start);
            let s = norm(&start);
            if s == 0.0 {
                return Err(Error::ConvergenceFailure {
                    residuals: residual_report(&found, best),
                });
            }
            start.iter_mut().for_each(|x| *x /= s);
            let mut q = vec![start.clone()];
            let mut alphas = Vec::new();
            let mut betas: Vec<f64> = Vec::new();
            loop {
                let j = q.len() - 1;
                let mut w = vec![0.0; n];
                op.apply(&q[j], &mut w);
                project_out(&locked, &mut w);
                let alpha = dot(&q[j], &w);
                alphas.push(alpha);
                axpy(-alpha, &q[j], &mut w);
                if j > 0 {
                    axpy(-betas[j - 1], &q[j - 1], &mut w);
                }
                project_out(&q, &mut w);
                project_out(&locked, &mut w);
                let beta = norm(&w);
                let m = alphas.len();
                let exhausted = beta <= 1e-13 * scale || m >= available;
                if exhausted || m >= opts.krylov_dim || m % 5 == 0 {
                    let y = lowest_ritz(&alphas, &betas);
                    let estimate = beta * y[m - 1].abs();
                    if exhausted || m >= opts.krylov_dim || estimate <= threshold {
                        let mut v = vec![0.0; n];
                        for (yi, qi) in y.iter().zip(&q) {
                            axpy(*yi, qi, &mut v);
                        }
                        let vn = norm(&v);
                        v.iter_mut().for_each(|x| *x /= vn);
                        let (value, residual) = rayleigh(op, &v);
                        best = best.min(residual);
                        if residual <= threshold {
                            accepted = Some(Eigenpair {
                                value,
                                residual,
                                vector: v,
                            });
                            break 'restarts;
                        }
                        start = v;
                        continue 'restarts;
                    }
                }
                betas.push(beta);
                w.iter_mut().for_each(|x| *x /= beta);
                q.push(w);
            }
        }

        match accepted {
            Some(pair) => {
                locked.push(pair.vector.clone());
                found.push(pair);
            }
            None => {
                return Err(Error::ConvergenceFailure {
                    residuals: residual_report(&found, best),
                })
            }
        }
    }
    found.sort_by(|a, b| a.value.total_cmp(&b.value));
    Ok(found)
}

fn residual_report(found: &[Eigenpair], best: f64) -> Vec<f64> {
    found.iter().map(|p| p.residual).chain([best]).collect()
}
