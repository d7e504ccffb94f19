//! Phase-field tumour growth: forward simulation, exact discrete
//! sensitivities, backward reconstruction, and stability diagnostics.
//!
//! The library is organised around one forward map: integrate a
//! reaction-diffusion system for the tumour phase, a nutrient, and tissue PSA
//! from an initial state to a terminal one. Everything else consumes that map:
//!
//! - [`model`] — scalar nonlinearities and parameter validation,
//! - [`grid`] — cell-centred fields, discrete Laplacians, inner products,
//! - [`basis`] — trigonometric trial subspaces for regularisation,
//! - [`forward`] — the IMEX integrator and terminal-state operator,
//! - [`linearised`] — the frozen-coefficient derivative of the discrete map
//!   and its exact transpose,
//! - [`inverse`] — projected Landweber reconstruction of the initial state
//!   from a terminal measurement, with discrepancy stopping,
//! - [`phantom`] — synthetic tumour states and seeded measurement noise,
//! - [`stability`] — decay-exponent fits, log-convexity diagnostics, and the
//!   closed-form stability constant chain,
//! - [`config`] / [`cli`] — batch runs driven by JSON configs.
//!
//! Each major capability has a runnable example:
//!
//! ```bash
//! cargo run --release --example forward_growth          # seeded lesion growth
//! cargo run --release --example phantom_gallery         # synthetic lesions + noise
//! cargo run --release --example derivative_checks       # Taylor / adjoint / |DR|
//! cargo run --release --example backward_reconstruction # noiseless recovery
//! cargo run --release --example noisy_reconstruction    # semiconvergence + discrepancy
//! cargo run --release --example stability_constants     # the constant chain vs T
//! ```
//!
//! The `pfinverse` binary exposes the same pipelines as batch subcommands
//! (`simulate | phantom | check | reconstruct | stability`) driven by JSON
//! configs; see [`cli`] and the `configs/` directory.
//!
//! A minimal round trip — simulate a lesion forward, then recover it from
//! the terminal snapshot:
//!
//! ```
//! use pfinverse::basis::build_coarse_basis;
//! use pfinverse::forward::{solution_operator, AdmissibleBounds, ForwardOptions, TimeGrid};
//! use pfinverse::inverse::{project_admissible_subspace, Landweber, ReconstructionConfig};
//! use pfinverse::phantom::{make_phantom, PhantomSpec};
//! use pfinverse::{Grid, ModelParams};
//!
//! # fn main() -> Result<(), Box<dyn std::error::Error>> {
//! let grid = Grid::unit(2, 16)?;
//! let params = ModelParams::default();
//! let bounds = AdmissibleBounds::from_params(&params);
//! let horizon = TimeGrid::new(0.1, 50)?;
//!
//! // ground truth inside a 12-mode trial subspace, pushed to time T
//! let basis = build_coarse_basis(grid, 2)?;
//! let lesion = make_phantom(grid, &PhantomSpec::default(), &params)?;
//! let truth = project_admissible_subspace(&lesion, &basis, &bounds, 100);
//! let measurement = solution_operator(&truth, &params, horizon, &ForwardOptions::dense())?;
//!
//! // projected Landweber iteration back to t = 0
//! let cfg = ReconstructionConfig { max_iterations: 40, ..Default::default() };
//! let result = Landweber::new(&params, horizon, cfg, bounds)
//!     .with_subspace(&basis)
//!     .with_ground_truth(&truth)
//!     .reconstruct(&measurement)?;
//! assert!(result.final_error.unwrap() < 1e-2);
//! # Ok(())
//! # }
//! ```

pub mod basis;
pub mod cg;
pub mod cli;
pub mod config;
pub mod forward;
pub mod grid;
pub mod inverse;
pub mod io;
pub mod linearised;
pub mod model;
pub mod phantom;
pub mod stability;

pub use grid::{Field, Grid, StateTriple};
pub use model::ModelParams;
