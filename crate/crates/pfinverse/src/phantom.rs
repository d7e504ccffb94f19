//! Synthetic tumour states and seeded measurement noise.
//!
//! Phantoms stand in for segmented imaging data: a phase field in `[0,1]`
//! with smooth tanh interface profiles, a nutrient field relaxed to its
//! steady balance given that phase, and a PSA field relaxed the same way.
//! All randomness (bump centres, radii, noise draws) flows from one explicit
//! seed, so a phantom is a pure function of `(grid, spec, params)`.

use crate::cg::{self, CgParams};
use crate::forward::{project_admissible, AdmissibleBounds, SolverError};
use crate::grid::{add_scaled_laplacian, BoundaryKind, Field, Grid, StateTriple};
use crate::model::ModelParams;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Phantom geometry families.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PhantomKind {
    /// One roughly circular lesion.
    GaussianBump,
    /// Two separated lesions.
    TwoFoci,
    /// A ring-shaped lesion.
    Annulus,
}

/// Recipe for a synthetic initial state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhantomSpec {
    pub kind: PhantomKind,
    pub seed: u64,
    /// Width of the tanh edge profile, in domain units.
    pub interface_width: f64,
}

impl Default for PhantomSpec {
    fn default() -> Self {
        Self {
            kind: PhantomKind::GaussianBump,
            seed: 0,
            interface_width: 0.05,
        }
    }
}

/// Builds a phantom state: tanh-profiled phase in `[0,1]`, then nutrient and
/// PSA relaxed to the steady balance consistent with that phase, clamped to
/// the admissible bounds.
pub fn make_phantom(
    grid: Grid,
    spec: &PhantomSpec,
    params: &ModelParams,
) -> Result<StateTriple, SolverError> {
    params.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let w = spec.interface_width.max(1e-6);
    let lx = grid.extent(0);
    let ly = if grid.dim() == 2 { grid.extent(1) } else { lx };

    // jittered geometry, kept away from the boundary
    let centre = [
        lx * rng.gen_range(0.35..0.65),
        ly * rng.gen_range(0.35..0.65),
    ];
    let r0 = lx.min(ly) * rng.gen_range(0.10..0.18);

    let dist = |x: [f64; 2], c: [f64; 2]| -> f64 {
        if grid.dim() == 2 {
            ((x[0] - c[0]).powi(2) + (x[1] - c[1]).powi(2)).sqrt()
        } else {
            (x[0] - c[0]).abs()
        }
    };

    let phi = match spec.kind {
        PhantomKind::GaussianBump => {
            Field::from_fn(grid, |x| 0.5 * (1.0 - ((dist(x, centre) - r0) / w).tanh()))
        }
        PhantomKind::TwoFoci => {
            let offset = r0 * 1.8;
            let c1 = [centre[0] - offset, centre[1] - offset * 0.4];
            let c2 = [centre[0] + offset, centre[1] + offset * 0.4];
            let r1 = r0 * rng.gen_range(0.7..0.9);
            Field::from_fn(grid, |x| {
                let a = 0.5 * (1.0 - ((dist(x, c1) - r0) / w).tanh());
                let b = 0.5 * (1.0 - ((dist(x, c2) - r1) / w).tanh());
                a.max(b)
            })
        }
        PhantomKind::Annulus => {
            let r_in = r0 * 0.55;
            Field::from_fn(grid, |x| {
                let d = dist(x, centre);
                0.5 * (((d - r_in) / w).tanh() - ((d - r0 * 1.4) / w).tanh())
            })
        }
    };
    let mut phi = phi;
    phi.clamp(0.0, 1.0);

    let sigma = steady_nutrient(&phi, params)?;
    let psa = steady_psa(&phi, params)?;

    let raw = StateTriple::new(phi, sigma, psa);
    Ok(project_admissible(
        &raw,
        &AdmissibleBounds::from_params(params),
    ))
}

/// Steady nutrient balance for a frozen phase:
/// `(gamma_h + gamma_ch phi) sigma - eta Lap_N sigma = S_h + S_ch phi`.
fn steady_nutrient(phi: &Field, p: &ModelParams) -> Result<Field, SolverError> {
    let grid = phi.grid();
    let n = grid.len();
    let uptake: Vec<f64> = phi
        .values()
        .iter()
        .map(|&f| p.gamma_h + p.gamma_ch() * f)
        .collect();
    let rhs: Vec<f64> = phi.values().iter().map(|&f| p.s_h + p.s_ch() * f).collect();
    // uptake can vanish in degenerate regimes; fall back to the mean supply
    if uptake.iter().any(|&u| u <= 1e-12) {
        return Ok(Field::constant(grid, rhs.iter().sum::<f64>() / n as f64));
    }
    let mut x: Vec<f64> = rhs.iter().zip(&uptake).map(|(r, u)| r / u).collect();
    cg::solve(
        |v, out| {
            for i in 0..n {
                out[i] = uptake[i] * v[i];
            }
            add_scaled_laplacian(grid, BoundaryKind::Neumann, -p.eta, v, out);
        },
        &rhs,
        &mut x,
        &CgParams::default(),
    )
    .map_err(|source| SolverError::ImplicitSolve {
        var: "phantom nutrient",
        t: 0.0,
        source,
    })?;
    Ok(Field::from_values(grid, x))
}

/// Steady PSA balance for a frozen phase:
/// `gamma_p psa - D Lap_N psa = alpha_h + alpha_ch phi`.
fn steady_psa(phi: &Field, p: &ModelParams) -> Result<Field, SolverError> {
    let grid = phi.grid();
    let n = grid.len();
    let rhs: Vec<f64> = phi
        .values()
        .iter()
        .map(|&f| p.alpha_h + p.alpha_ch() * f)
        .collect();
    if p.gamma_p <= 1e-12 {
        return Ok(Field::constant(grid, rhs.iter().sum::<f64>() / n as f64));
    }
    let mut x: Vec<f64> = rhs.iter().map(|r| r / p.gamma_p).collect();
    cg::solve(
        |v, out| {
            for i in 0..n {
                out[i] = p.gamma_p * v[i];
            }
            add_scaled_laplacian(grid, BoundaryKind::Neumann, -p.d_p, v, out);
        },
        &rhs,
        &mut x,
        &CgParams::default(),
    )
    .map_err(|source| SolverError::ImplicitSolve {
        var: "phantom psa",
        t: 0.0,
        source,
    })?;
    Ok(Field::from_values(grid, x))
}

/// Adds seeded Gaussian noise, per field scaled by `level * max|field|`, then
/// clips back to admissibility. `level = 0` is the identity.
pub fn add_noise(v: &StateTriple, level: f64, seed: u64, bounds: &AdmissibleBounds) -> StateTriple {
    if level == 0.0 {
        return v.clone();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut noisy = v.clone();
    for field in [&mut noisy.phi, &mut noisy.sigma, &mut noisy.psa] {
        let std = level * field.max_abs();
        for val in field.values_mut() {
            *val += std * standard_normal(&mut rng);
        }
    }
    project_admissible(&noisy, bounds)
}

/// Box-Muller standard normal draw.
fn standard_normal(rng: &mut ChaCha8Rng) -> f64 {
    let u1: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
    let u2: f64 = rng.gen_range(0.0..1.0);
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}
