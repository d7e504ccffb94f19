//! Matrix-free conjugate gradients for the implicit sub-steps.
//!
//! Every implicit system here has the form `(c I - dt kappa Lap) x = b` with
//! `c >= 1` and a symmetric negative (semi)definite Laplacian, so plain CG on
//! the Euclidean inner product applies. Tolerances are absolute on the
//! residual norm; the systems are so well conditioned at desk scale that a
//! handful of iterations suffices.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CgError {
    #[error("CG did not converge: residual {residual:.3e} after {iterations} iterations (tol {tol:.1e})")]
    DidNotConverge {
        residual: f64,
        iterations: usize,
        tol: f64,
    },
}

/// Solver knobs shared by every implicit solve.
#[derive(Debug, Clone, Copy)]
pub struct CgParams {
    /// Absolute tolerance on the Euclidean residual norm.
    pub tol: f64,
    /// Iteration cap as a multiple of the unknown count.
    pub max_iter_factor: usize,
}

impl Default for CgParams {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            max_iter_factor: 10,
        }
    }
}

impl CgParams {
    /// Tight setting used by derivative/adjoint diagnostics, where solver
    /// noise must sit well below the quantities being measured.
    pub fn tight() -> Self {
        Self {
            tol: 1e-13,
            max_iter_factor: 20,
        }
    }
}

/// Solves `A x = b` for symmetric positive definite `A`, warm-started from
/// the current contents of `x`.
///
/// `apply` must compute `out = A v` and may not alias its arguments.
pub fn solve(
    apply: impl Fn(&[f64], &mut [f64]),
    b: &[f64],
    x: &mut [f64],
    params: &CgParams,
) -> Result<usize, CgError> {
    let n = b.len();
    assert_eq!(x.len(), n);
    let max_iter = params.max_iter_factor.max(1) * n;

    let mut r = vec![0.0; n];
    let mut p = vec![0.0; n];
    let mut ap = vec![0.0; n];

    apply(x, &mut ap);
    for i in 0..n {
        r[i] = b[i] - ap[i];
    }
    let mut rr: f64 = r.iter().map(|v| v * v).sum();
    if rr.sqrt() <= params.tol {
        return Ok(0);
    }
    p.copy_from_slice(&r);

    for k in 1..=max_iter {
        apply(&p, &mut ap);
        let pap: f64 = p.iter().zip(&ap).map(|(a, b)| a * b).sum();
        let alpha = rr / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        let rr_new: f64 = r.iter().map(|v| v * v).sum();
        if rr_new.sqrt() <= params.tol {
            return Ok(k);
        }
        let beta = rr_new / rr;
        rr = rr_new;
        for i in 0..n {
            p[i] = r[i] + beta * p[i];
        }
    }
    Err(CgError::DidNotConverge {
        residual: rr.sqrt(),
        iterations: max_iter,
        tol: params.tol,
    })
}
