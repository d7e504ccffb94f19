//! Reconstruction from a 1%-noise measurement: semiconvergence and the
//! discrepancy principle.
//!
//! Running past the discrepancy point shows the classical behaviour of
//! iterative regularisation: the error against the ground truth first
//! decreases, then the iteration starts fitting noise and the error climbs
//! back up. The discrepancy rule stops close to the turning point without
//! ever seeing the truth.
//!
//! ```bash
//! cargo run --release --example noisy_reconstruction
//! ```

use pfinverse::forward::{solution_operator, AdmissibleBounds, ForwardOptions, TimeGrid};
use pfinverse::grid::Grid;
use pfinverse::inverse::{discrepancy_stop, Landweber, ReconstructionConfig, StepSize};
use pfinverse::model::ModelParams;
use pfinverse::phantom::{add_noise, make_phantom, PhantomKind, PhantomSpec};
use std::path::Path;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let grid = Grid::unit(2, 24)?;
    let params = ModelParams::default();
    let bounds = AdmissibleBounds::from_params(&params);
    let tg = TimeGrid::new(0.3, 100)?;
    let tau_dp = 1.2;

    let truth = make_phantom(
        grid,
        &PhantomSpec {
            kind: PhantomKind::GaussianBump,
            seed: 1,
            interface_width: 0.06,
        },
        &params,
    )?;
    let y_clean = solution_operator(&truth, &params, tg, &ForwardOptions::dense())?;
    let y = add_noise(&y_clean, 0.01, 500, &bounds);
    let delta = y.sub(&y_clean).norm();
    println!("measurement with 1% noise: delta = {delta:.4e}");

    // run well past the discrepancy point to expose the whole curve
    let cfg = ReconstructionConfig {
        step_size: StepSize::Auto,
        max_iterations: 120,
        noise_level: 0.0,
        stagnation_tol: 0.0,
        ..Default::default()
    };
    let lw = Landweber::new(&params, tg, cfg, bounds).with_ground_truth(&truth);
    let result = lw.reconstruct(&y)?;

    let errors: Vec<f64> = result
        .history
        .iter()
        .map(|r| r.error_vs_truth.unwrap())
        .collect();
    let k_dp = result
        .history
        .iter()
        .position(|r| discrepancy_stop(r.residual, delta, tau_dp))
        .expect("noise level never reached");
    let best = errors.iter().cloned().fold(f64::INFINITY, f64::min);
    let k_best = errors.iter().position(|&e| e == best).unwrap();

    println!("\n  iter   residual      error vs truth");
    for rec in result.history.iter().step_by(10) {
        let mark = if rec.iteration == k_dp {
            "  <- discrepancy stop"
        } else {
            ""
        };
        println!(
            "  {:>4}   {:.4e}    {:.4e}{mark}",
            rec.iteration,
            rec.residual,
            rec.error_vs_truth.unwrap()
        );
    }
    println!(
        "\nbest error {best:.4e} at iteration {k_best}; discrepancy rule stops at {k_dp} \
         with error {:.4e} (x{:.2} of best)",
        errors[k_dp],
        errors[k_dp] / best
    );
    println!(
        "error at the final iteration {:.4e}: semiconvergence{}",
        errors.last().unwrap(),
        if *errors.last().unwrap() > best {
            " visible"
        } else {
            " not yet visible"
        }
    );

    let out = Path::new("target/example_out/noisy_reconstruction");
    std::fs::create_dir_all(out)?;
    let mut csv = String::from("iter,residual,error_vs_truth\n");
    for r in &result.history {
        csv.push_str(&format!(
            "{},{},{}\n",
            r.iteration,
            r.residual,
            r.error_vs_truth.unwrap()
        ));
    }
    std::fs::write(out.join("semiconvergence.csv"), csv)?;
    println!("curve written to {}", out.display());
    Ok(())
}
