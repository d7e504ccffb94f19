//! Derivative diagnostics on a desk-scale problem: Taylor remainder order,
//! the exact-adjoint identity, and the operator norm of the terminal-state
//! derivative.
//!
//! These are the checks the backward reconstruction relies on: the Landweber
//! gradient is only trustworthy if `<DR u, g> = <u, DR* g>` holds to solver
//! precision and the remainder of the linearisation is genuinely quadratic.
//!
//! ```bash
//! cargo run --release --example derivative_checks
//! ```

use pfinverse::cg::CgParams;
use pfinverse::forward::TimeGrid;
use pfinverse::grid::Grid;
use pfinverse::linearised::{linearise_at, random_triple, taylor_remainder_test};
use pfinverse::model::ModelParams;
use pfinverse::phantom::{make_phantom, PhantomSpec};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let grid = Grid::unit(2, 32)?;
    let params = ModelParams::default();
    let tg = TimeGrid::new(0.2, 100)?;
    let cg = CgParams::tight();

    let base = make_phantom(grid, &PhantomSpec::default(), &params)?;
    let (_, op) = linearise_at(&base, &params, tg, cg)?;

    // adjoint identity over random pairs
    let mut worst = 0.0f64;
    for k in 0..20 {
        let u = random_triple(grid, 2 * k);
        let g = random_triple(grid, 2 * k + 1);
        let lhs = op.apply(&u)?.inner(&g);
        let rhs = u.inner(&op.apply_adjoint(&g)?);
        worst = worst.max((lhs - rhs).abs() / (u.norm() * g.norm()));
    }
    println!("adjoint identity: worst relative mismatch {worst:.3e} over 20 pairs");

    // Taylor remainder along a random direction
    let dir = random_triple(grid, 42);
    let rep = taylor_remainder_test(&base, &dir, &params, tg, &[1e-1, 1e-2, 1e-3, 1e-4], cg)?;
    println!("\nTaylor remainder r(eps) = |R(x+eps h) - R(x) - eps DR[h]|:");
    for (e, r) in rep.epsilons.iter().zip(&rep.remainders) {
        println!("  eps {e:>7.0e}   r {r:.6e}   r/eps^2 {:.4}", r / (e * e));
    }
    println!(
        "log-log slope {:.4} (2.0 = exact quadratic remainder)",
        rep.slope
    );

    // operator norm by power iteration
    let est = op.operator_norm(None, 7)?;
    println!(
        "\n|DR| ~ {:.6} ({} power iterations, converged: {})",
        est.norm, est.iterations, est.converged
    );
    println!(
        "suggested Landweber step 0.9/|DR|^2 = {:.4}",
        0.9 / (est.norm * est.norm)
    );
    Ok(())
}
