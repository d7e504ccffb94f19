//! Time integration of the nonlinear growth system and its solution operator.
//!
//! One step of the scheme treats diffusion and the linear decay terms
//! implicitly and evaluates every nonlinear reaction term at the old state
//! (first-order IMEX):
//!
//! ```text
//! (I - dt lambda Lap_D)            phi'   = phi - dt (F'(phi) - m(sigma) h'(phi))
//! ((1 + dt gamma_h) I - dt eta Lap_N) sigma' = sigma + dt (S_h + S_ch phi - gamma_ch sigma phi)
//! ((1 + dt gamma_p) I - dt D Lap_N)   psa'   = psa + dt (alpha_h + alpha_ch phi)
//! ```
//!
//! Each implicit system is symmetric positive definite and solved by
//! conjugate gradients. The scheme is deterministic: equal inputs produce
//! bit-identical trajectories.
//!
//! The terminal-state map `(phi0, sigma0, p0) -> (phi(T), sigma(T), p(T))`
//! implemented by [`solution_operator`] is the object the inverse machinery
//! differentiates and inverts.
//!
//! Optional manufactured source terms can be attached to every equation,
//! which is how the convergence verification drives the solver against known
//! exact solutions.

use crate::cg::{self, CgError, CgParams};
use crate::grid::{add_scaled_laplacian, BoundaryKind, Field, Grid, StateTriple};
use crate::model::{ModelError, ModelParams};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SolverError {
    #[error("time grid: {0}")]
    BadTimeGrid(String),
    #[error("model parameters: {0}")]
    Model(#[from] ModelError),
    #[error("{var} solve failed at t = {t}: {source}")]
    ImplicitSolve {
        var: &'static str,
        t: f64,
        source: CgError,
    },
    #[error("non-finite {var} detected at t = {t}")]
    NonFinite { var: &'static str, t: f64 },
    #[error("trajectory mismatch: {0}")]
    TrajectoryMismatch(String),
}

/// Discretisation of the time interval `[0, T]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    t_final: f64,
    n_steps: usize,
}

impl TimeGrid {
    pub fn new(t_final: f64, n_steps: usize) -> Result<Self, SolverError> {
        if !(t_final.is_finite() && t_final >= 0.0) {
            return Err(SolverError::BadTimeGrid(format!(
                "final time must be finite and nonnegative, got {t_final}"
            )));
        }
        if n_steps == 0 && t_final != 0.0 {
            return Err(SolverError::BadTimeGrid(
                "n_steps = 0 is only allowed for the identity map (T = 0)".into(),
            ));
        }
        Ok(Self { t_final, n_steps })
    }

    /// The identity map `T = 0`.
    pub fn instant() -> Self {
        Self {
            t_final: 0.0,
            n_steps: 0,
        }
    }

    pub fn t_final(&self) -> f64 {
        self.t_final
    }

    pub fn n_steps(&self) -> usize {
        self.n_steps
    }

    pub fn dt(&self) -> f64 {
        if self.n_steps == 0 {
            0.0
        } else {
            self.t_final / self.n_steps as f64
        }
    }
}

/// Largest explicit-stable step suggested for a parameter set: `safety`
/// divided by the fastest reaction rate. The reaction Lipschitz bound uses
/// `sup |F'' - m h''|` over the phase range together with the decay rates.
pub fn stable_dt(params: &ModelParams, safety: f64) -> f64 {
    let m_max = params.m_ref.abs() * params.rho.abs().max(params.a_apop.abs());
    let reaction = 2.0 * params.m_pot.abs() + 6.0 * params.m_pot.abs() * m_max;
    let rate = reaction
        .max(params.gamma_h.abs())
        .max(params.gamma_c.abs())
        .max(params.gamma_p.abs())
        .max(1e-12);
    safety / rate
}

/// Pointwise bounds of the admissible set.
#[derive(Debug, Clone)]
pub struct AdmissibleBounds {
    pub sigma_max: Bound,
    pub psa_max: Bound,
}

/// A bound that is either one constant or a full field.
#[derive(Debug, Clone)]
pub enum Bound {
    Uniform(f64),
    PerNode(Field),
}

impl Bound {
    fn value(&self, idx: usize) -> f64 {
        match self {
            Bound::Uniform(c) => *c,
            Bound::PerNode(f) => f.values()[idx],
        }
    }

    pub fn is_nonnegative(&self) -> bool {
        match self {
            Bound::Uniform(c) => *c >= 0.0,
            Bound::PerNode(f) => f.min() >= 0.0,
        }
    }
}

impl AdmissibleBounds {
    pub fn new(sigma_max: Bound, psa_max: Bound) -> Self {
        assert!(sigma_max.is_nonnegative() && psa_max.is_nonnegative());
        Self { sigma_max, psa_max }
    }

    /// Generous uniform bounds derived from the healthy steady levels.
    pub fn from_params(p: &ModelParams) -> Self {
        let sigma_steady = if p.gamma_h > 0.0 {
            p.s_h / p.gamma_h
        } else {
            1.0
        };
        let sigma_steady_c = if p.gamma_c > 0.0 {
            p.s_c / p.gamma_c
        } else {
            1.0
        };
        let psa_steady = if p.gamma_p > 0.0 {
            p.alpha_h.max(p.alpha_c) / p.gamma_p
        } else {
            1.0
        };
        Self {
            sigma_max: Bound::Uniform(2.0 * sigma_steady.max(sigma_steady_c).max(0.5)),
            psa_max: Bound::Uniform(2.0 * psa_steady.max(0.5)),
        }
    }
}

/// Pointwise clamp onto the admissible set: `phi` to `[0,1]`, `sigma` to
/// `[0, sigma_max]`, `psa` to `[0, psa_max]`. Idempotent.
///
/// The phase field's zero boundary value is built into the discrete operator
/// (the grid stores no on-boundary nodes), so no separate boundary forcing
/// applies here.
pub fn project_admissible(v: &StateTriple, b: &AdmissibleBounds) -> StateTriple {
    let mut out = v.clone();
    out.phi.clamp(0.0, 1.0);
    for (i, s) in out.sigma.values_mut().iter_mut().enumerate() {
        *s = s.clamp(0.0, b.sigma_max.value(i));
    }
    for (i, s) in out.psa.values_mut().iter_mut().enumerate() {
        *s = s.clamp(0.0, b.psa_max.value(i));
    }
    out
}

/// Manufactured forcing terms, one per equation, evaluated at cell centres.
pub trait Sources {
    /// Returns `(g_phi, g_sigma, g_psa)` at position `x` and time `t`.
    fn eval(&self, x: [f64; 2], t: f64) -> [f64; 3];
}

impl<F> Sources for F
where
    F: Fn([f64; 2], f64) -> [f64; 3],
{
    fn eval(&self, x: [f64; 2], t: f64) -> [f64; 3] {
        self(x, t)
    }
}

/// Extrema and positivity excursions observed over *every* step of a run,
/// not just the stored snapshots.
#[derive(Debug, Clone)]
pub struct RunMonitor {
    pub phi_min: f64,
    pub phi_max: f64,
    pub sigma_min: f64,
    pub psa_min: f64,
    pub warnings: Vec<String>,
}

impl RunMonitor {
    fn new() -> Self {
        Self {
            phi_min: f64::INFINITY,
            phi_max: f64::NEG_INFINITY,
            sigma_min: f64::INFINITY,
            psa_min: f64::INFINITY,
            warnings: Vec::new(),
        }
    }

    fn observe(&mut self, s: &StateTriple) {
        self.phi_min = self.phi_min.min(s.phi.min());
        self.phi_max = self.phi_max.max(s.phi.max());
        self.sigma_min = self.sigma_min.min(s.sigma.min());
        self.psa_min = self.psa_min.min(s.psa.min());
    }

    fn finalize(&mut self) {
        if self.phi_min < -1e-2 || self.phi_max > 1.0 + 1e-2 {
            self.warnings.push(format!(
                "phase bound excursion: phi in [{:.3e}, {:.3e}]",
                self.phi_min, self.phi_max
            ));
        }
        if self.sigma_min < -1e-8 {
            self.warnings.push(format!(
                "nutrient went negative: min {:.3e}",
                self.sigma_min
            ));
        }
        if self.psa_min < -1e-8 {
            self.warnings
                .push(format!("PSA went negative: min {:.3e}", self.psa_min));
        }
    }
}

/// Snapshot retention policy for [`solve_forward`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SnapshotPolicy {
    /// About 32 snapshots regardless of the step count.
    Auto,
    /// Store every step (required by the linearisation and the dense
    /// diagnostics).
    EveryStep,
    /// Store every `k`-th step (plus the first and last).
    Stride(usize),
}

#[derive(Debug, Clone)]
pub struct ForwardOptions {
    pub snapshots: SnapshotPolicy,
    pub cg: CgParams,
    /// Record monitor warnings without logging them; set by callers that
    /// iterate over mildly inadmissible states on purpose.
    pub quiet_monitor: bool,
}

impl Default for ForwardOptions {
    fn default() -> Self {
        Self {
            snapshots: SnapshotPolicy::Auto,
            cg: CgParams::default(),
            quiet_monitor: false,
        }
    }
}

impl ForwardOptions {
    pub fn dense() -> Self {
        Self {
            snapshots: SnapshotPolicy::EveryStep,
            ..Self::default()
        }
    }
}

/// Time-indexed sequence of states produced by a forward or linearised run.
/// Always contains the initial and terminal states.
#[derive(Debug, Clone)]
pub struct Trajectory {
    time_grid: TimeGrid,
    steps: Vec<usize>,
    states: Vec<StateTriple>,
    pub monitor: RunMonitor,
}

impl Trajectory {
    pub fn time_grid(&self) -> TimeGrid {
        self.time_grid
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    /// Step indices of the stored states (monotone, starts at 0, ends at
    /// `n_steps`).
    pub fn steps(&self) -> &[usize] {
        &self.steps
    }

    pub fn times(&self) -> Vec<f64> {
        let dt = self.time_grid.dt();
        self.steps.iter().map(|&s| s as f64 * dt).collect()
    }

    pub fn states(&self) -> &[StateTriple] {
        &self.states
    }

    pub fn initial_state(&self) -> &StateTriple {
        &self.states[0]
    }

    pub fn final_state(&self) -> &StateTriple {
        self.states.last().expect("trajectory is never empty")
    }

    /// Whether every integration step was stored.
    pub fn is_dense(&self) -> bool {
        self.steps.len() == self.time_grid.n_steps + 1
            && self.steps.iter().enumerate().all(|(i, &s)| i == s)
    }

    #[cfg(test)]
    pub(crate) fn replace_states_for_test(&mut self, states: Vec<StateTriple>) {
        assert_eq!(states.len(), self.states.len());
        self.states = states;
    }

    /// Snapshot-wise difference of two runs on matching grids and times.
    pub fn difference(&self, other: &Trajectory) -> Result<Trajectory, SolverError> {
        if self.time_grid != other.time_grid || self.steps != other.steps {
            return Err(SolverError::TrajectoryMismatch(
                "trajectories have different time grids or snapshot sets".into(),
            ));
        }
        let states = self
            .states
            .iter()
            .zip(&other.states)
            .map(|(a, b)| a.sub(b))
            .collect();
        Ok(Trajectory {
            time_grid: self.time_grid,
            steps: self.steps.clone(),
            states,
            monitor: RunMonitor::new(),
        })
    }
}

/// One IMEX integrator instance. Owns its scratch space; create one per
/// concurrent run.
pub struct ImexStepper {
    params: ModelParams,
    grid: Grid,
    dt: f64,
    cg: CgParams,
}

impl ImexStepper {
    pub fn new(
        params: &ModelParams,
        grid: Grid,
        dt: f64,
        cg: CgParams,
    ) -> Result<Self, SolverError> {
        params.validate()?;
        if !(dt.is_finite() && dt > 0.0) {
            return Err(SolverError::BadTimeGrid(format!(
                "step size must be positive, got {dt}"
            )));
        }
        if dt > stable_dt(params, 0.5) {
            log::warn!(
                "dt = {dt} exceeds the suggested explicit-reaction cap {:.3e}",
                stable_dt(params, 0.5)
            );
        }
        Ok(Self {
            params: *params,
            grid,
            dt,
            cg,
        })
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    /// Advances the state from time `t` to `t + dt`.
    pub fn step(
        &self,
        s: &StateTriple,
        t: f64,
        sources: Option<&dyn Sources>,
    ) -> Result<StateTriple, SolverError> {
        let p = &self.params;
        let g = self.grid;
        let dt = self.dt;
        let n = g.len();
        let (gamma_ch, s_ch, alpha_ch) = (p.gamma_ch(), p.s_ch(), p.alpha_ch());

        let mut rhs_phi = vec![0.0; n];
        let mut rhs_sigma = vec![0.0; n];
        let mut rhs_psa = vec![0.0; n];
        let phi = s.phi.values();
        let sigma = s.sigma.values();
        let psa = s.psa.values();
        for i in 0..n {
            rhs_phi[i] = phi[i] - dt * p.reaction(phi[i], sigma[i]);
            rhs_sigma[i] = sigma[i] + dt * (p.s_h + s_ch * phi[i] - gamma_ch * sigma[i] * phi[i]);
            rhs_psa[i] = psa[i] + dt * (p.alpha_h + alpha_ch * phi[i]);
        }
        if let Some(src) = sources {
            for i in 0..n {
                let gval = src.eval(g.coord(i), t);
                rhs_phi[i] += dt * gval[0];
                rhs_sigma[i] += dt * gval[1];
                rhs_psa[i] += dt * gval[2];
            }
        }

        let phi_new = self.implicit_solve(
            "phi",
            t,
            BoundaryKind::Dirichlet,
            1.0,
            dt * p.lambda_phi,
            rhs_phi,
        )?;
        let sigma_new = self.implicit_solve(
            "sigma",
            t,
            BoundaryKind::Neumann,
            1.0 + dt * p.gamma_h,
            dt * p.eta,
            rhs_sigma,
        )?;
        let psa_new = self.implicit_solve(
            "psa",
            t,
            BoundaryKind::Neumann,
            1.0 + dt * p.gamma_p,
            dt * p.d_p,
            rhs_psa,
        )?;

        Ok(StateTriple::new(
            Field::from_values(g, phi_new),
            Field::from_values(g, sigma_new),
            Field::from_values(g, psa_new),
        ))
    }

    /// Solves `(mass I - diff Lap_bc) x = rhs`, warm-started at `rhs / mass`.
    fn implicit_solve(
        &self,
        var: &'static str,
        t: f64,
        bc: BoundaryKind,
        mass: f64,
        diff: f64,
        rhs: Vec<f64>,
    ) -> Result<Vec<f64>, SolverError> {
        let g = self.grid;
        let mut x: Vec<f64> = rhs.iter().map(|v| v / mass).collect();
        cg::solve(
            |v, out| {
                for (o, vi) in out.iter_mut().zip(v) {
                    *o = mass * vi;
                }
                add_scaled_laplacian(g, bc, -diff, v, out);
            },
            &rhs,
            &mut x,
            &self.cg,
        )
        .map_err(|source| SolverError::ImplicitSolve { var, t, source })?;
        if !x.iter().all(|v| v.is_finite()) {
            return Err(SolverError::NonFinite { var, t });
        }
        Ok(x)
    }
}

/// Integrates the system from `s0` over `tg`, recording snapshots per the
/// options. Inadmissible initial data are accepted with a warning.
pub fn solve_forward(
    s0: &StateTriple,
    params: &ModelParams,
    tg: TimeGrid,
    opts: &ForwardOptions,
    sources: Option<&dyn Sources>,
) -> Result<Trajectory, SolverError> {
    let mut monitor = RunMonitor::new();
    for violation in params.assumption_violations() {
        log::debug!("parameter assumption: {violation}");
    }
    if s0.phi.min() < 0.0 || s0.phi.max() > 1.0 || s0.sigma.min() < 0.0 || s0.psa.min() < 0.0 {
        monitor
            .warnings
            .push("initial data outside the admissible set".to_string());
    }

    let n_steps = tg.n_steps();
    let stride = match opts.snapshots {
        SnapshotPolicy::Auto => (n_steps.max(1)).div_ceil(31).max(1),
        SnapshotPolicy::EveryStep => 1,
        SnapshotPolicy::Stride(k) => k.max(1),
    };

    let mut steps = vec![0usize];
    let mut states = vec![s0.clone()];
    monitor.observe(s0);

    if n_steps == 0 {
        monitor.finalize();
        return Ok(Trajectory {
            time_grid: tg,
            steps,
            states,
            monitor,
        });
    }

    let stepper = ImexStepper::new(params, s0.grid(), tg.dt(), opts.cg)?;
    let mut current = s0.clone();
    for k in 0..n_steps {
        let t = k as f64 * tg.dt();
        current = stepper.step(&current, t, sources)?;
        if !current.is_finite() {
            return Err(SolverError::NonFinite {
                var: "state",
                t: (k + 1) as f64 * tg.dt(),
            });
        }
        monitor.observe(&current);
        if (k + 1) % stride == 0 || k + 1 == n_steps {
            steps.push(k + 1);
            states.push(current.clone());
        }
    }
    monitor.finalize();
    if !opts.quiet_monitor {
        for w in &monitor.warnings {
            log::warn!("{w}");
        }
    }
    Ok(Trajectory {
        time_grid: tg,
        steps,
        states,
        monitor,
    })
}

/// The terminal-state map: runs the forward solver and returns only the state
/// at the final time. With `n_steps = 0` this is the identity.
pub fn solution_operator(
    s0: &StateTriple,
    params: &ModelParams,
    tg: TimeGrid,
    opts: &ForwardOptions,
) -> Result<StateTriple, SolverError> {
    if tg.n_steps() == 0 {
        return Ok(s0.clone());
    }
    // terminal state only: keep the lightest snapshot set
    let light = ForwardOptions {
        snapshots: SnapshotPolicy::Stride(usize::MAX),
        ..opts.clone()
    };
    Ok(solve_forward(s0, params, tg, &light, None)?
        .final_state()
        .clone())
}
