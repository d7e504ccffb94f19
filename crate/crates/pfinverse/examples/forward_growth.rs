//! Forward simulation of a nutrient-driven tumour seed on the unit square.
//!
//! Seeds a small lesion, runs the coupled phase/nutrient/PSA system for half
//! a time unit, prints the mass history, and writes a full run directory
//! (binary fields, metrics CSV) under `target/example_out/forward_growth`.
//!
//! ```bash
//! cargo run --release --example forward_growth
//! ```

use pfinverse::forward::{solve_forward, ForwardOptions, TimeGrid};
use pfinverse::grid::Grid;
use pfinverse::io::{write_csv_slice, write_field};
use pfinverse::model::ModelParams;
use pfinverse::phantom::{make_phantom, PhantomKind, PhantomSpec};
use std::path::Path;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let grid = Grid::unit(2, 64)?;
    let params = ModelParams::default();
    let tg = TimeGrid::new(0.5, 500)?;

    let spec = PhantomSpec {
        kind: PhantomKind::GaussianBump,
        seed: 7,
        interface_width: 0.04,
    };
    let s0 = make_phantom(grid, &spec, &params)?;
    println!(
        "seeded lesion: mass {:.4}, peak phi {:.3}, nutrient range [{:.3}, {:.3}]",
        s0.phi.integral(),
        s0.phi.max(),
        s0.sigma.min(),
        s0.sigma.max()
    );

    let traj = solve_forward(&s0, &params, tg, &ForwardOptions::default(), None)?;

    println!("\n   t      mass(phi)   max(phi)   min(sigma)   mean PSA");
    let stride = (traj.len() / 8).max(1);
    for (i, (t, s)) in traj.times().iter().zip(traj.states()).enumerate() {
        if i % stride == 0 || i + 1 == traj.len() {
            println!(
                "  {t:.3}    {:.5}     {:.4}     {:.4}       {:.4}",
                s.phi.integral(),
                s.phi.max(),
                s.sigma.min(),
                s.psa.integral()
            );
        }
    }
    let growth = traj.final_state().phi.integral() / traj.initial_state().phi.integral();
    println!(
        "\ntumour mass grew by a factor of {growth:.3} over T = {}",
        tg.t_final()
    );
    for w in &traj.monitor.warnings {
        println!("monitor: {w}");
    }

    let out = Path::new("target/example_out/forward_growth");
    std::fs::create_dir_all(out)?;
    write_field(out.join("phi_final.pff"), &traj.final_state().phi)?;
    write_csv_slice(out.join("phi_final_slice.csv"), &traj.final_state().phi)?;
    println!("final phase field written to {}", out.display());
    Ok(())
}
