//! Finite-dimensional trial subspaces for regularised reconstruction.
//!
//! The basis is built from tensor-product trigonometric modes sampled at cell
//! centres: sine modes for the phase slot (they vanish on the domain boundary,
//! matching its Dirichlet condition) and cosine modes, including the constant,
//! for the nutrient and PSA slots (zero-flux compatible). Each basis element
//! populates exactly one slot of a [`StateTriple`], so a per-axis order `k`
//! yields `3 k^dim` elements.
//!
//! The sampled modes are exact eigenvectors of the discrete Laplacians, hence
//! already orthogonal; modified Gram-Schmidt in the product-L2 inner product
//! is still run to pin the Gram matrix to the identity at machine precision.

use crate::grid::{Field, Grid, StateTriple};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum BasisError {
    #[error(
        "requested {requested} modes per axis, grid has only {available} cells on axis {axis}"
    )]
    TooManyModes {
        requested: usize,
        available: usize,
        axis: usize,
    },
    #[error("modes per axis must be positive")]
    Empty,
    #[error("Gram-Schmidt hit a numerically dependent mode (norm {0:.3e})")]
    DependentMode(f64),
}

/// Orthonormal basis of state triples in the discrete product-L2 inner
/// product.
#[derive(Debug, Clone)]
pub struct SubspaceBasis {
    elements: Vec<StateTriple>,
    grid: Grid,
    modes_per_axis: usize,
}

impl SubspaceBasis {
    pub fn elements(&self) -> &[StateTriple] {
        &self.elements
    }

    pub fn len(&self) -> usize {
        self.elements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }

    pub fn grid(&self) -> Grid {
        self.grid
    }

    pub fn modes_per_axis(&self) -> usize {
        self.modes_per_axis
    }

    /// Orthogonal projection onto the span. Contractive, idempotent.
    ///
    /// # Panics
    /// If `v` lives on a different grid.
    pub fn project(&self, v: &StateTriple) -> StateTriple {
        assert_eq!(v.grid(), self.grid, "projection input on a different grid");
        let mut out = StateTriple::zeros(self.grid);
        for e in &self.elements {
            out.axpy(v.inner(e), e);
        }
        out
    }

    /// Coefficients `<v, e_i>` of a state against the basis.
    pub fn coefficients(&self, v: &StateTriple) -> Vec<f64> {
        assert_eq!(v.grid(), self.grid, "input on a different grid");
        self.elements.iter().map(|e| v.inner(e)).collect()
    }

    /// Reassembles a state from coefficients.
    pub fn combine(&self, coeffs: &[f64]) -> StateTriple {
        assert_eq!(coeffs.len(), self.elements.len());
        let mut out = StateTriple::zeros(self.grid);
        for (c, e) in coeffs.iter().zip(&self.elements) {
            out.axpy(*c, e);
        }
        out
    }

    /// Gram matrix in the product-L2 inner product (row-major).
    pub fn gram(&self) -> Vec<f64> {
        let n = self.elements.len();
        let mut g = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                g[i * n + j] = self.elements[i].inner(&self.elements[j]);
            }
        }
        g
    }

    /// Largest ratio `|v|_V / |v|_H` over the span: the norm-equivalence
    /// constant of the subspace.
    ///
    /// With the basis L2-orthonormal this is the square root of the largest
    /// eigenvalue of the H1 Gram matrix, found by power iteration on that
    /// small dense matrix.
    pub fn v_over_h_ratio(&self) -> f64 {
        let n = self.elements.len();
        let mut g = vec![0.0; n * n];
        for i in 0..n {
            for j in i..n {
                let v = self.elements[i].h1_inner(&self.elements[j]);
                g[i * n + j] = v;
                g[j * n + i] = v;
            }
        }
        // deterministic power iteration on the SPD Gram matrix
        let mut x = vec![1.0; n];
        let mut lambda = 0.0;
        for _ in 0..2000 {
            let mut y = vec![0.0; n];
            for i in 0..n {
                let mut s = 0.0;
                for j in 0..n {
                    s += g[i * n + j] * x[j];
                }
                y[i] = s;
            }
            let norm = y.iter().map(|v| v * v).sum::<f64>().sqrt();
            for v in &mut y {
                *v /= norm;
            }
            let mut new_lambda = 0.0;
            for i in 0..n {
                let mut s = 0.0;
                for j in 0..n {
                    s += g[i * n + j] * y[j];
                }
                new_lambda += s * y[i];
            }
            let done = (new_lambda - lambda).abs() <= 1e-13 * new_lambda.abs();
            lambda = new_lambda;
            x = y;
            if done {
                break;
            }
        }
        lambda.sqrt()
    }
}

/// Builds the tensor-product coarse basis: `modes_per_axis^dim` sine modes in
/// the phase slot and as many cosine modes in each of the other two slots.
pub fn build_coarse_basis(grid: Grid, modes_per_axis: usize) -> Result<SubspaceBasis, BasisError> {
    if modes_per_axis == 0 {
        return Err(BasisError::Empty);
    }
    for axis in 0..grid.dim() {
        if modes_per_axis > grid.cells(axis) {
            return Err(BasisError::TooManyModes {
                requested: modes_per_axis,
                available: grid.cells(axis),
                axis,
            });
        }
    }

    let sine = |k: usize, axis: usize| {
        let freq = (k + 1) as f64 * std::f64::consts::PI / grid.extent(axis);
        move |x: f64| (freq * x).sin()
    };
    let cosine = |k: usize, axis: usize| {
        let freq = k as f64 * std::f64::consts::PI / grid.extent(axis);
        move |x: f64| (freq * x).cos()
    };

    let mut elements = Vec::new();
    for slot in 0..3usize {
        for ky in 0..if grid.dim() == 2 { modes_per_axis } else { 1 } {
            for kx in 0..modes_per_axis {
                let field = Field::from_fn(grid, |x| {
                    let fx = if slot == 0 {
                        sine(kx, 0)(x[0])
                    } else {
                        cosine(kx, 0)(x[0])
                    };
                    let fy = if grid.dim() == 2 {
                        if slot == 0 {
                            sine(ky, 1)(x[1])
                        } else {
                            cosine(ky, 1)(x[1])
                        }
                    } else {
                        1.0
                    };
                    fx * fy
                });
                let mut t = StateTriple::zeros(grid);
                match slot {
                    0 => t.phi = field,
                    1 => t.sigma = field,
                    _ => t.psa = field,
                }
                elements.push(t);
            }
        }
    }

    // modified Gram-Schmidt in the product-L2 inner product
    let mut ortho: Vec<StateTriple> = Vec::with_capacity(elements.len());
    for mut e in elements {
        for q in &ortho {
            let c = e.inner(q);
            e.axpy(-c, q);
        }
        let n = e.norm();
        if n < 1e-12 {
            return Err(BasisError::DependentMode(n));
        }
        e.scale(1.0 / n);
        ortho.push(e);
    }

    Ok(SubspaceBasis {
        elements: ortho,
        grid,
        modes_per_axis,
    })
}
