//! Uniform cell-centred grids, scalar fields, and discrete calculus.
//!
//! The domain is a rectangle (or interval) discretised with `n` cells per
//! axis; each field value lives at a cell centre `x_i = (i + 1/2) h`, so the
//! unknown count is exactly the product of the cell counts and the extent is
//! `n * h` per axis. Second-order 3/5-point Laplacians handle the two boundary
//! conditions through ghost values mirrored across the boundary *face*:
//!
//! - [`Field::laplacian_dirichlet`] uses an odd mirror (`ghost = -first`),
//!   pinning the value to zero on the face itself. Sampled sine modes
//!   `sin(k pi x / L)` are exact eigenvectors of the discrete operator.
//! - [`Field::laplacian_neumann`] uses an even mirror (`ghost = first`),
//!   a zero-flux face. Constants are annihilated exactly and the plain sum of
//!   the output telescopes to zero, so explicit diffusion conserves mass to
//!   machine precision. Sampled cosine modes are exact eigenvectors.
//!
//! Both operators are symmetric in the discrete L2 inner product (plain sum
//! times the uniform cell volume), which is what the exact-adjoint machinery
//! downstream leans on.
//!
//! Discrete H1 norms use forward differences on interior faces; only norm
//! ratios enter the stability constants, so the one-sided choice is a
//! documented convention rather than a correctness point.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum GridError {
    #[error("grid dimension must be 1 or 2, got {0}")]
    BadDim(usize),
    #[error("cells per axis must be positive, got {0}")]
    BadCells(usize),
    #[error("spacing must be positive and finite, got {0}")]
    BadSpacing(f64),
}

/// Uniform cell-centred grid on a rectangle, 1D or 2D.
///
/// Copyable by design: a `Grid` is a handful of scalars, and every field
/// carries its own copy so mismatches are detectable without shared state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    dim: usize,
    n: [usize; 2],
    h: [f64; 2],
}

impl Grid {
    /// 1D grid with `n` cells of width `h`; extent `n * h`.
    pub fn new_1d(n: usize, h: f64) -> Result<Self, GridError> {
        Self::build(1, [n, 1], [h, 1.0])
    }

    /// 2D grid with `nx * ny` cells of size `hx * hy`.
    pub fn new_2d(nx: usize, ny: usize, hx: f64, hy: f64) -> Result<Self, GridError> {
        Self::build(2, [nx, ny], [hx, hy])
    }

    /// Grid over `[0,1]^dim` with `n` cells per axis.
    pub fn unit(dim: usize, n: usize) -> Result<Self, GridError> {
        let h = 1.0 / n as f64;
        match dim {
            1 => Self::new_1d(n, h),
            2 => Self::new_2d(n, n, h, h),
            d => Err(GridError::BadDim(d)),
        }
    }

    fn build(dim: usize, n: [usize; 2], h: [f64; 2]) -> Result<Self, GridError> {
        if dim != 1 && dim != 2 {
            return Err(GridError::BadDim(dim));
        }
        for ax in 0..dim {
            if n[ax] == 0 {
                return Err(GridError::BadCells(n[ax]));
            }
            if !(h[ax].is_finite() && h[ax] > 0.0) {
                return Err(GridError::BadSpacing(h[ax]));
            }
        }
        Ok(Self { dim, n, h })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Cells along one axis (equals the node count on that axis).
    pub fn cells(&self, axis: usize) -> usize {
        self.n[axis]
    }

    pub fn spacing(&self, axis: usize) -> f64 {
        self.h[axis]
    }

    /// Domain extent along one axis, `cells * spacing`.
    pub fn extent(&self, axis: usize) -> f64 {
        self.n[axis] as f64 * self.h[axis]
    }

    /// Total unknown count, the product of cells per axis.
    pub fn len(&self) -> usize {
        self.n[0] * self.n[1]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Volume of one cell (the uniform quadrature weight).
    pub fn cell_volume(&self) -> f64 {
        if self.dim == 1 {
            self.h[0]
        } else {
            self.h[0] * self.h[1]
        }
    }

    /// Flat index of the cell `(ix, iy)`; row-major with x fastest.
    #[inline]
    pub fn index(&self, ix: usize, iy: usize) -> usize {
        debug_assert!(ix < self.n[0] && iy < self.n[1]);
        iy * self.n[0] + ix
    }

    /// Inverse of [`index`](Self::index).
    #[inline]
    pub fn multi_index(&self, idx: usize) -> (usize, usize) {
        (idx % self.n[0], idx / self.n[0])
    }

    /// Physical coordinates of the cell centre at flat index `idx`.
    #[inline]
    pub fn coord(&self, idx: usize) -> [f64; 2] {
        let (ix, iy) = self.multi_index(idx);
        [(ix as f64 + 0.5) * self.h[0], (iy as f64 + 0.5) * self.h[1]]
    }
}

/// Scalar field: one value per grid cell, all finite.
#[derive(Debug, Clone, PartialEq)]
pub struct Field {
    grid: Grid,
    values: Vec<f64>,
}

impl Field {
    pub fn zeros(grid: Grid) -> Self {
        Self {
            grid,
            values: vec![0.0; grid.len()],
        }
    }

    pub fn constant(grid: Grid, c: f64) -> Self {
        Self {
            grid,
            values: vec![c; grid.len()],
        }
    }

    /// Samples `f` at every cell centre.
    pub fn from_fn(grid: Grid, f: impl Fn([f64; 2]) -> f64) -> Self {
        let values = (0..grid.len()).map(|i| f(grid.coord(i))).collect();
        Self { grid, values }
    }

    pub fn from_values(grid: Grid, values: Vec<f64>) -> Self {
        assert_eq!(values.len(), grid.len(), "value count must match grid");
        Self { grid, values }
    }

    pub fn grid(&self) -> Grid {
        self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0f64, |a, v| a.max(v.abs()))
    }

    /// Quadrature of the field, `sum * cell volume`.
    pub fn integral(&self) -> f64 {
        self.values.iter().sum::<f64>() * self.grid.cell_volume()
    }

    fn check_same_grid(&self, other: &Field) {
        assert_eq!(self.grid, other.grid, "fields live on different grids");
    }

    /// Discrete L2 inner product: `sum(a_i b_i) * cell volume`.
    ///
    /// # Panics
    /// On grid mismatch.
    pub fn inner(&self, other: &Field) -> f64 {
        self.check_same_grid(other);
        let s: f64 = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| a * b)
            .sum();
        s * self.grid.cell_volume()
    }

    pub fn norm(&self) -> f64 {
        self.inner(self).sqrt()
    }

    /// Discrete H1 inner product: L2 part plus forward-difference gradients
    /// paired over interior faces.
    pub fn h1_inner(&self, other: &Field) -> f64 {
        self.check_same_grid(other);
        let g = self.grid;
        let vol = g.cell_volume();
        let mut s = self.inner(other);
        for axis in 0..g.dim() {
            let stride = if axis == 0 { 1 } else { g.cells(0) };
            let inv_h = 1.0 / g.spacing(axis);
            let (nx, ny) = (g.cells(0), g.cells(1));
            let (lim_x, lim_y) = if axis == 0 {
                (nx - 1, ny)
            } else {
                (nx, ny - 1)
            };
            for iy in 0..lim_y {
                for ix in 0..lim_x {
                    let i = g.index(ix, iy);
                    let da = (self.values[i + stride] - self.values[i]) * inv_h;
                    let db = (other.values[i + stride] - other.values[i]) * inv_h;
                    s += da * db * vol;
                }
            }
        }
        s
    }

    pub fn norm_h1(&self) -> f64 {
        self.h1_inner(self).sqrt()
    }

    /// Second-order Laplacian with the value pinned to zero on the boundary
    /// faces (odd-mirror ghosts). Symmetric negative definite.
    pub fn laplacian_dirichlet(&self) -> Field {
        self.laplacian(BoundaryKind::Dirichlet)
    }

    /// Second-order Laplacian with zero normal flux through the boundary
    /// faces (even-mirror ghosts). Symmetric negative semidefinite; constants
    /// map to zero exactly and the output values sum to zero exactly.
    pub fn laplacian_neumann(&self) -> Field {
        self.laplacian(BoundaryKind::Neumann)
    }

    fn laplacian(&self, bc: BoundaryKind) -> Field {
        let mut out = Field::zeros(self.grid);
        self.add_laplacian_into(bc, 1.0, &mut out);
        out
    }

    /// `out += coeff * Lap_bc(self)`, allocation-free core shared by the
    /// solvers.
    pub(crate) fn add_laplacian_into(&self, bc: BoundaryKind, coeff: f64, out: &mut Field) {
        self.check_same_grid(out);
        add_scaled_laplacian(self.grid, bc, coeff, &self.values, &mut out.values);
    }

    /// `self += alpha * other`.
    pub fn axpy(&mut self, alpha: f64, other: &Field) {
        self.check_same_grid(other);
        for (a, b) in self.values.iter_mut().zip(&other.values) {
            *a += alpha * b;
        }
    }

    pub fn scale(&mut self, alpha: f64) {
        for a in &mut self.values {
            *a *= alpha;
        }
    }

    pub fn scaled(&self, alpha: f64) -> Field {
        let mut out = self.clone();
        out.scale(alpha);
        out
    }

    pub fn sub(&self, other: &Field) -> Field {
        self.check_same_grid(other);
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| a - b)
            .collect();
        Field {
            grid: self.grid,
            values,
        }
    }

    pub fn add(&self, other: &Field) -> Field {
        self.check_same_grid(other);
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| a + b)
            .collect();
        Field {
            grid: self.grid,
            values,
        }
    }

    /// Pointwise product, `self_i * other_i`.
    pub fn hadamard(&self, other: &Field) -> Field {
        self.check_same_grid(other);
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| a * b)
            .collect();
        Field {
            grid: self.grid,
            values,
        }
    }

    pub fn clamp(&mut self, lo: f64, hi: f64) {
        for v in &mut self.values {
            *v = v.clamp(lo, hi);
        }
    }
}

/// Boundary condition selector for the discrete Laplacians.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoundaryKind {
    /// Zero value on the boundary face.
    Dirichlet,
    /// Zero normal flux through the boundary face.
    Neumann,
}

/// Slice-level stencil: `out += coeff * Lap_bc(v)`.
///
/// Ghost values mirror across the boundary face, with the sign selecting the
/// boundary condition (odd for Dirichlet, even for Neumann).
pub(crate) fn add_scaled_laplacian(
    g: Grid,
    bc: BoundaryKind,
    coeff: f64,
    v: &[f64],
    out: &mut [f64],
) {
    debug_assert_eq!(v.len(), g.len());
    debug_assert_eq!(out.len(), g.len());
    let sign = match bc {
        BoundaryKind::Dirichlet => -1.0,
        BoundaryKind::Neumann => 1.0,
    };
    for axis in 0..g.dim() {
        let stride = if axis == 0 { 1 } else { g.cells(0) };
        let n_ax = g.cells(axis);
        let w = coeff / (g.spacing(axis) * g.spacing(axis));
        let (nx, ny) = (g.cells(0), g.cells(1));
        let (lim_x, lim_y) = if axis == 0 {
            (1usize, ny)
        } else {
            (nx, 1usize)
        };
        // iterate over grid lines running along `axis`
        for iy in 0..lim_y {
            for ix in 0..lim_x {
                let base = g.index(ix, iy);
                for k in 0..n_ax {
                    let i = base + k * stride;
                    let left = if k > 0 { v[i - stride] } else { sign * v[i] };
                    let right = if k + 1 < n_ax {
                        v[i + stride]
                    } else {
                        sign * v[i]
                    };
                    out[i] += w * (left + right - 2.0 * v[i]);
                }
            }
        }
    }
}

/// One snapshot of the three model fields (or of perturbations of them) on a
/// shared grid.
#[derive(Debug, Clone, PartialEq)]
pub struct StateTriple {
    pub phi: Field,
    pub sigma: Field,
    pub psa: Field,
}

impl StateTriple {
    pub fn new(phi: Field, sigma: Field, psa: Field) -> Self {
        assert_eq!(phi.grid(), sigma.grid(), "triple components share a grid");
        assert_eq!(phi.grid(), psa.grid(), "triple components share a grid");
        Self { phi, sigma, psa }
    }

    pub fn zeros(grid: Grid) -> Self {
        Self {
            phi: Field::zeros(grid),
            sigma: Field::zeros(grid),
            psa: Field::zeros(grid),
        }
    }

    pub fn grid(&self) -> Grid {
        self.phi.grid()
    }

    pub fn is_finite(&self) -> bool {
        self.phi.is_finite() && self.sigma.is_finite() && self.psa.is_finite()
    }

    /// Product-L2 inner product (the discrete `H x H x H` pairing).
    pub fn inner(&self, other: &StateTriple) -> f64 {
        self.phi.inner(&other.phi) + self.sigma.inner(&other.sigma) + self.psa.inner(&other.psa)
    }

    pub fn norm(&self) -> f64 {
        self.inner(self).sqrt()
    }

    /// Product-H1 inner product (the discrete `V0 x V x V` pairing).
    pub fn h1_inner(&self, other: &StateTriple) -> f64 {
        self.phi.h1_inner(&other.phi)
            + self.sigma.h1_inner(&other.sigma)
            + self.psa.h1_inner(&other.psa)
    }

    pub fn norm_h1(&self) -> f64 {
        self.h1_inner(self).sqrt()
    }

    pub fn axpy(&mut self, alpha: f64, other: &StateTriple) {
        self.phi.axpy(alpha, &other.phi);
        self.sigma.axpy(alpha, &other.sigma);
        self.psa.axpy(alpha, &other.psa);
    }

    pub fn scale(&mut self, alpha: f64) {
        self.phi.scale(alpha);
        self.sigma.scale(alpha);
        self.psa.scale(alpha);
    }

    pub fn scaled(&self, alpha: f64) -> StateTriple {
        let mut out = self.clone();
        out.scale(alpha);
        out
    }

    pub fn sub(&self, other: &StateTriple) -> StateTriple {
        StateTriple {
            phi: self.phi.sub(&other.phi),
            sigma: self.sigma.sub(&other.sigma),
            psa: self.psa.sub(&other.psa),
        }
    }

    pub fn add(&self, other: &StateTriple) -> StateTriple {
        StateTriple {
            phi: self.phi.add(&other.phi),
            sigma: self.sigma.add(&other.sigma),
            psa: self.psa.add(&other.psa),
        }
    }
}
