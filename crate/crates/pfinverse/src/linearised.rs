//! Exact derivative of the discrete forward map and its transpose.
//!
//! The derivative is taken *after* discretisation: each IMEX step of the
//! nonlinear solver is differentiated exactly, with the coefficient fields
//! frozen at the same time levels the nonlinear step used. One linearised
//! step reads
//!
//! ```text
//! (I - dt lambda Lap_D) Y' = Y - dt (c_n Y - e_n Z)
//! ((1+dt gamma_h) I - dt eta Lap_N) Z' = Z + dt (s_n Y - g_n Z)
//! ((1+dt gamma_p) I - dt D Lap_N)   P' = P + dt alpha_ch Y
//! ```
//!
//! with `c_n = F''(phi_n) - m(sigma_n) h''(phi_n)`, `e_n = m'(sigma_n)
//! h'(phi_n)`, `s_n = S_ch - gamma_ch sigma_n` and `g_n = gamma_ch phi_n`.
//!
//! Because each step is `solve o (diagonal couplings)` with symmetric
//! implicit matrices, the adjoint is the reverse-time sweep with the coupling
//! block transposed and the same implicit solves. The pairing
//! `<DR u, g> = <u, DR* g>` then holds at the level of floating point and CG
//! tolerance rather than O(dt) — which is what lets an iterative
//! reconstruction trust its gradient.

use crate::cg::{self, CgParams};
use crate::forward::{solve_forward, ForwardOptions, SolverError, TimeGrid, Trajectory};
use crate::grid::{add_scaled_laplacian, BoundaryKind, Field, Grid, StateTriple};
use crate::model::ModelParams;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

/// The linearisation of the discrete forward map around a stored base
/// trajectory. Immutable once built; applications allocate private scratch
/// and may run concurrently.
pub struct LinearisedOperator {
    grid: Grid,
    tg: TimeGrid,
    params: ModelParams,
    cg: CgParams,
    // per-step frozen coefficient fields, step index 0..n_steps-1
    c: Vec<Vec<f64>>,
    e: Vec<Vec<f64>>,
    s: Vec<Vec<f64>>,
    g: Vec<Vec<f64>>,
}

impl LinearisedOperator {
    /// Builds the operator from a *dense* base trajectory (every step
    /// stored); the coefficients of step `n` are evaluated at the base state
    /// of step `n`, mirroring the nonlinear stepper.
    pub fn new(base: &Trajectory, params: &ModelParams, cg: CgParams) -> Result<Self, SolverError> {
        if !base.is_dense() {
            return Err(SolverError::TrajectoryMismatch(
                "linearisation needs the base trajectory at every step".into(),
            ));
        }
        params.validate()?;
        let grid = base.initial_state().grid();
        let n_steps = base.time_grid().n_steps();
        let n = grid.len();
        let (gamma_ch, s_ch) = (params.gamma_ch(), params.s_ch());

        let mut c = Vec::with_capacity(n_steps);
        let mut e = Vec::with_capacity(n_steps);
        let mut s = Vec::with_capacity(n_steps);
        let mut g = Vec::with_capacity(n_steps);
        for step in 0..n_steps {
            let state = &base.states()[step];
            let phi = state.phi.values();
            let sigma = state.sigma.values();
            let mut cs = vec![0.0; n];
            let mut es = vec![0.0; n];
            let mut ss = vec![0.0; n];
            let mut gs = vec![0.0; n];
            for i in 0..n {
                cs[i] = params.double_well_d2(phi[i])
                    - params.tilting(sigma[i]) * params.interp_d2(phi[i]);
                es[i] = params.tilting_d1(sigma[i]) * params.interp_d1(phi[i]);
                ss[i] = s_ch - gamma_ch * sigma[i];
                gs[i] = gamma_ch * phi[i];
            }
            c.push(cs);
            e.push(es);
            s.push(ss);
            g.push(gs);
        }
        Ok(Self {
            grid,
            tg: base.time_grid(),
            params: *params,
            cg,
            c,
            e,
            s,
            g,
        })
    }

    pub fn grid(&self) -> Grid {
        self.grid
    }

    pub fn time_grid(&self) -> TimeGrid {
        self.tg
    }

    fn check_input(&self, v: &StateTriple) -> Result<(), SolverError> {
        if v.grid() != self.grid {
            return Err(SolverError::TrajectoryMismatch(
                "perturbation lives on a different grid than the base trajectory".into(),
            ));
        }
        Ok(())
    }

    fn solve(
        &self,
        bc: BoundaryKind,
        mass: f64,
        diff: f64,
        rhs: &[f64],
        out: &mut Vec<f64>,
    ) -> Result<(), SolverError> {
        let grid = self.grid;
        out.clear();
        out.extend(rhs.iter().map(|v| v / mass));
        cg::solve(
            |v, o| {
                for (oi, vi) in o.iter_mut().zip(v) {
                    *oi = mass * vi;
                }
                add_scaled_laplacian(grid, bc, -diff, v, o);
            },
            rhs,
            out,
            &self.cg,
        )
        .map_err(|source| SolverError::ImplicitSolve {
            var: "linearised",
            t: f64::NAN,
            source,
        })?;
        Ok(())
    }

    /// Applies the derivative: integrates the linearised system from the
    /// perturbation `hkw` and returns its terminal state. Linear in `hkw`.
    pub fn apply(&self, hkw: &StateTriple) -> Result<StateTriple, SolverError> {
        self.apply_with_stats(hkw).map(|(out, _)| out)
    }

    /// Like [`apply`](Self::apply), also returning in-sweep norms used by the
    /// stability diagnostics: the max-in-time product-L2 norm and the
    /// discrete `H^1(0,T; H)` norm accumulated from step differences.
    pub fn apply_with_stats(
        &self,
        hkw: &StateTriple,
    ) -> Result<(StateTriple, SweepStats), SolverError> {
        self.check_input(hkw)?;
        let p = &self.params;
        let dt = self.tg.dt();
        let n = self.grid.len();
        let alpha_ch = p.alpha_ch();

        let mut y = hkw.phi.values().to_vec();
        let mut z = hkw.sigma.values().to_vec();
        let mut w = hkw.psa.values().to_vec();
        let mut rhs_y = vec![0.0; n];
        let mut rhs_z = vec![0.0; n];
        let mut rhs_w = vec![0.0; n];

        let mut stats = SweepStats::observe_first(self.grid, &y, &z, &w);

        for step in 0..self.tg.n_steps() {
            let (c, e, s, g) = (&self.c[step], &self.e[step], &self.s[step], &self.g[step]);
            for i in 0..n {
                rhs_y[i] = y[i] - dt * (c[i] * y[i] - e[i] * z[i]);
                rhs_z[i] = z[i] + dt * (s[i] * y[i] - g[i] * z[i]);
                rhs_w[i] = w[i] + dt * alpha_ch * y[i];
            }
            let (y_old, z_old, w_old) = (y.clone(), z.clone(), w.clone());
            self.solve(
                BoundaryKind::Dirichlet,
                1.0,
                dt * p.lambda_phi,
                &rhs_y,
                &mut y,
            )?;
            self.solve(
                BoundaryKind::Neumann,
                1.0 + dt * p.gamma_h,
                dt * p.eta,
                &rhs_z,
                &mut z,
            )?;
            self.solve(
                BoundaryKind::Neumann,
                1.0 + dt * p.gamma_p,
                dt * p.d_p,
                &rhs_w,
                &mut w,
            )?;
            stats.observe_step(self.grid, dt, &y, &z, &w, &y_old, &z_old, &w_old);
        }

        let out = StateTriple::new(
            Field::from_values(self.grid, y),
            Field::from_values(self.grid, z),
            Field::from_values(self.grid, w),
        );
        Ok((out, stats))
    }

    /// Applies the exact transpose of [`apply`](Self::apply) in the discrete
    /// product-L2 inner product: a reverse-time sweep with the coupling
    /// blocks transposed; the implicit solves are their own transpose.
    pub fn apply_adjoint(&self, gin: &StateTriple) -> Result<StateTriple, SolverError> {
        self.check_input(gin)?;
        let p = &self.params;
        let dt = self.tg.dt();
        let n = self.grid.len();
        let alpha_ch = p.alpha_ch();

        let mut uy = gin.phi.values().to_vec();
        let mut uz = gin.sigma.values().to_vec();
        let mut uw = gin.psa.values().to_vec();
        let mut vy = vec![0.0; n];
        let mut vz = vec![0.0; n];
        let mut vw = vec![0.0; n];

        for step in (0..self.tg.n_steps()).rev() {
            self.solve(
                BoundaryKind::Dirichlet,
                1.0,
                dt * p.lambda_phi,
                &uy,
                &mut vy,
            )?;
            self.solve(
                BoundaryKind::Neumann,
                1.0 + dt * p.gamma_h,
                dt * p.eta,
                &uz,
                &mut vz,
            )?;
            self.solve(
                BoundaryKind::Neumann,
                1.0 + dt * p.gamma_p,
                dt * p.d_p,
                &uw,
                &mut vw,
            )?;
            let (c, e, s, g) = (&self.c[step], &self.e[step], &self.s[step], &self.g[step]);
            for i in 0..n {
                uy[i] = vy[i] - dt * c[i] * vy[i] + dt * s[i] * vz[i] + dt * alpha_ch * vw[i];
                uz[i] = dt * e[i] * vy[i] + vz[i] - dt * g[i] * vz[i];
                uw[i] = vw[i];
            }
        }

        Ok(StateTriple::new(
            Field::from_values(self.grid, uy),
            Field::from_values(self.grid, uz),
            Field::from_values(self.grid, uw),
        ))
    }

    /// Operator norm estimate by power iteration on `DR* o DR`.
    ///
    /// Stops when successive Rayleigh quotients agree to `1e-4` relatively,
    /// capped at 200 iterations (the estimate is still returned, flagged as
    /// unconverged). `start` seeds the iteration; `None` draws a seeded
    /// random state.
    pub fn operator_norm(
        &self,
        start: Option<&StateTriple>,
        seed: u64,
    ) -> Result<OperatorNormEstimate, SolverError> {
        let mut v = match start {
            Some(s) => {
                self.check_input(s)?;
                s.clone()
            }
            None => random_triple(self.grid, seed),
        };
        let nv = v.norm();
        assert!(nv > 0.0, "power iteration needs a nonzero start");
        v.scale(1.0 / nv);

        // The Rayleigh quotients of power iterates increase geometrically to
        // the top eigenvalue. The ratio of successive increments estimates
        // the geometric factor, which turns the last increment into a bound
        // on the remaining bias; convergence is declared at 1e-4 relative on
        // that bound and the extrapolated limit is returned. Without this,
        // a small spectral gap stalls the plain increment test well away
        // from the true norm.
        let mut rayleigh = 0.0;
        let mut prev_diff = f64::INFINITY;
        let mut converged = false;
        let mut iterations = 0;
        for k in 1..=200 {
            iterations = k;
            let av = self.apply(&v)?;
            let rq = av.inner(&av); // <T v, v> for unit v, T = DR* DR
            let mut next = self.apply_adjoint(&av)?;
            let nn = next.norm();
            if nn == 0.0 {
                // v is in the kernel; norm estimate is 0 along this start
                return Ok(OperatorNormEstimate {
                    norm: 0.0,
                    iterations: k,
                    converged: true,
                });
            }
            next.scale(1.0 / nn);
            v = next;

            let diff = rq - rayleigh;
            if k > 2 && diff >= 0.0 && prev_diff > 0.0 {
                let q = (diff / prev_diff).min(0.999);
                let remaining = diff * q / (1.0 - q);
                if remaining.abs() <= 1e-4 * rq.abs() {
                    rayleigh = rq + remaining.max(0.0);
                    converged = true;
                    break;
                }
            }
            prev_diff = diff;
            rayleigh = rq;
        }
        if !converged {
            log::warn!("operator-norm power iteration hit the 200-iteration cap");
        }
        Ok(OperatorNormEstimate {
            norm: rayleigh.sqrt(),
            iterations,
            converged,
        })
    }
}

/// Norm bookkeeping accumulated during one linearised sweep.
#[derive(Debug, Clone, Serialize)]
pub struct SweepStats {
    /// Max over time levels of the product-L2 norm.
    pub max_h_norm: f64,
    /// Discrete `H^1(0,T; H)` norm: `sqrt(sum dt (|u|^2 + |du/dt|^2))` over
    /// steps.
    pub h1_time_norm: f64,
    /// Product-L2 norm at every time level, `t = 0` first.
    pub norm_history: Vec<f64>,
}

impl SweepStats {
    fn observe_first(grid: Grid, y: &[f64], z: &[f64], w: &[f64]) -> Self {
        let n0 = triple_norm(grid, y, z, w);
        Self {
            max_h_norm: n0,
            h1_time_norm: 0.0,
            norm_history: vec![n0],
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn observe_step(
        &mut self,
        grid: Grid,
        dt: f64,
        y: &[f64],
        z: &[f64],
        w: &[f64],
        y0: &[f64],
        z0: &[f64],
        w0: &[f64],
    ) {
        let norm = triple_norm(grid, y, z, w);
        self.max_h_norm = self.max_h_norm.max(norm);
        self.norm_history.push(norm);
        let vol = grid.cell_volume();
        let mut diff_sq = 0.0;
        for i in 0..y.len() {
            diff_sq += (y[i] - y0[i]).powi(2) + (z[i] - z0[i]).powi(2) + (w[i] - w0[i]).powi(2);
        }
        diff_sq *= vol / (dt * dt);
        self.h1_time_norm = (self.h1_time_norm.powi(2) + dt * (norm * norm + diff_sq)).sqrt();
    }
}

fn triple_norm(grid: Grid, y: &[f64], z: &[f64], w: &[f64]) -> f64 {
    let vol = grid.cell_volume();
    let s: f64 = y
        .iter()
        .zip(z)
        .zip(w)
        .map(|((a, b), c)| a * a + b * b + c * c)
        .sum();
    (s * vol).sqrt()
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct OperatorNormEstimate {
    pub norm: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Seeded random unit triple used for power-iteration starts and probe sets.
pub fn random_triple(grid: Grid, seed: u64) -> StateTriple {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let f = |rng: &mut ChaCha8Rng| {
        Field::from_values(
            grid,
            (0..grid.len()).map(|_| rng.gen_range(-1.0..1.0)).collect(),
        )
    };
    let mut t = StateTriple::new(f(&mut rng), f(&mut rng), f(&mut rng));
    let n = t.norm();
    t.scale(1.0 / n);
    t
}

/// Builds the operator by running a dense forward solve from `s0` first.
pub fn linearise_at(
    s0: &StateTriple,
    params: &ModelParams,
    tg: TimeGrid,
    cg: CgParams,
) -> Result<(Trajectory, LinearisedOperator), SolverError> {
    let opts = ForwardOptions {
        snapshots: crate::forward::SnapshotPolicy::EveryStep,
        cg,
        quiet_monitor: true,
    };
    let base = solve_forward(s0, params, tg, &opts, None)?;
    let op = LinearisedOperator::new(&base, params, cg)?;
    Ok((base, op))
}

/// Remainder decay of `R(s0 + eps h) - R(s0) - eps DR[h]` across a sweep of
/// perturbation sizes.
#[derive(Debug, Clone, Serialize)]
pub struct TaylorReport {
    pub epsilons: Vec<f64>,
    pub remainders: Vec<f64>,
    /// Log-log least-squares slope of remainder vs epsilon; 2 for an exact
    /// first-order derivative with quadratic remainder.
    pub slope: f64,
}

/// Runs the Taylor remainder test at one base point along one direction.
pub fn taylor_remainder_test(
    s0: &StateTriple,
    direction: &StateTriple,
    params: &ModelParams,
    tg: TimeGrid,
    epsilons: &[f64],
    cg: CgParams,
) -> Result<TaylorReport, SolverError> {
    let opts = ForwardOptions {
        snapshots: crate::forward::SnapshotPolicy::Stride(usize::MAX),
        cg,
        quiet_monitor: true,
    };
    let (_, op) = linearise_at(s0, params, tg, cg)?;
    let r0 = solve_forward(s0, params, tg, &opts, None)?
        .final_state()
        .clone();
    let dr_h = op.apply(direction)?;

    let mut remainders = Vec::with_capacity(epsilons.len());
    for &eps in epsilons {
        let mut s = s0.clone();
        s.axpy(eps, direction);
        let r_eps = solve_forward(&s, params, tg, &opts, None)?
            .final_state()
            .clone();
        let mut rem = r_eps.sub(&r0);
        rem.axpy(-eps, &dr_h);
        remainders.push(rem.norm());
    }
    let slope = log_log_slope(epsilons, &remainders);
    Ok(TaylorReport {
        epsilons: epsilons.to_vec(),
        remainders,
        slope,
    })
}

/// Least-squares slope of `log y` against `log x`.
pub fn log_log_slope(x: &[f64], y: &[f64]) -> f64 {
    let pts: Vec<(f64, f64)> = x
        .iter()
        .zip(y)
        .filter(|(_, &yi)| yi > 0.0)
        .map(|(&xi, &yi)| (xi.ln(), yi.ln()))
        .collect();
    let n = pts.len() as f64;
    if pts.len() < 2 {
        return f64::NAN;
    }
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let cov: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let var: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    cov / var
}

/// How fast the derivative itself moves between two base points, probed along
/// a fixed direction set.
#[derive(Debug, Clone, Serialize)]
pub struct DerivativeLipschitzReport {
    /// `sup_h |(DR(a) - DR(b))[h]|_H / |h|_V` over the probes.
    pub sup_ratio: f64,
    /// Product-L2 distance of the two base points.
    pub base_distance: f64,
    /// Squared-form constant: `sup_ratio^2 / base_distance^2`.
    pub c0: f64,
}

/// Measures the derivative's Lipschitz behaviour between base points `a` and
/// `b`; `probes` are normalised internally in the product-H1 norm.
pub fn derivative_lipschitz_check(
    a: &StateTriple,
    b: &StateTriple,
    params: &ModelParams,
    tg: TimeGrid,
    probes: &[StateTriple],
    cg: CgParams,
) -> Result<DerivativeLipschitzReport, SolverError> {
    let (_, op_a) = linearise_at(a, params, tg, cg)?;
    let (_, op_b) = linearise_at(b, params, tg, cg)?;
    let mut sup_ratio: f64 = 0.0;
    for h in probes {
        let nv = h.norm_h1();
        if nv == 0.0 {
            continue;
        }
        let da = op_a.apply(h)?;
        let db = op_b.apply(h)?;
        sup_ratio = sup_ratio.max(da.sub(&db).norm() / nv);
    }
    let base_distance = a.sub(b).norm();
    let c0 = if base_distance > 0.0 {
        (sup_ratio / base_distance).powi(2)
    } else {
        0.0
    };
    Ok(DerivativeLipschitzReport {
        sup_ratio,
        base_distance,
        c0,
    })
}
