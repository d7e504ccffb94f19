//! Stability diagnostics for the backward problem.
//!
//! Forward diffusion smooths; running it backwards amplifies. This module
//! measures how badly, in three escalating regimes:
//!
//! 1. **Decay-exponent (Hoelder) fits.** For two runs with different initial
//!    data, the difference norm `d(t)` is conditionally bounded by
//!    `C1 * M^(1-lambda(t)) * d(T)^lambda(t)` with exponent profiles
//!    `lambda_1(t) = (1 - e^(-gamma t))/(1 - e^(-gamma T))` or
//!    `lambda_2(t) = (e^(gamma t) - 1)/(e^(gamma T) - 1)`. The fit chooses
//!    `gamma` to minimise the worst violation and reports the smallest
//!    admissible `C1` per template, selecting between the two by
//!    least-squares residual of the implied exponent curve.
//! 2. **Initial-data estimates.** From the fitted constants, the closed-form
//!    chain `beta = gamma/(e^(gamma T)-1)`,
//!    `C2 = 2 M1 M sqrt(C1)/sqrt(beta) + 3 M1^2/(4 beta C1)` bounds the
//!    initial error by `C2 / sqrt(|log eps|)` — logarithmic, i.e. barely
//!    anything, which is the honest difficulty of the problem.
//! 3. **Finite-dimensional Lipschitz constants.** Restricted to a subspace
//!    with norm-equivalence constant `C_Lambda`, the chain
//!    `m0 = (L / C_Lambda) e^(-Q2^2)`,
//!    `C_s = max( (2 Cbar / M) e^(16 C0^2 C2 / m0), 2/m0 )` gives a linear
//!    error bound whose constant explodes exponentially in the subspace
//!    dimension and doubly exponentially in the horizon. `C_s` is therefore
//!    reported in log scale with a saturation flag.
//!
//! A log-convexity diagnostic backs the first regime: for a difference
//! trajectory, `l(t) = log |psi(t)|^2` must satisfy the discrete inequality
//! `l'' + c |l'| + c >= 0`, and the minimal such `c` is measured directly.

use crate::basis::{build_coarse_basis, BasisError};
use crate::cg::CgParams;
use crate::forward::{
    project_admissible, solve_forward, AdmissibleBounds, ForwardOptions, ImexStepper,
    SnapshotPolicy, SolverError, TimeGrid, Trajectory,
};
use crate::grid::{Field, Grid, StateTriple};
use crate::linearised::{
    derivative_lipschitz_check, linearise_at, random_triple, LinearisedOperator,
};
use crate::model::ModelParams;
use crate::phantom::{make_phantom, PhantomKind, PhantomSpec};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum StabilityError {
    #[error("trajectories are numerically identical at the final time; backward uniqueness leaves nothing to fit")]
    IdenticalTrajectories,
    #[error("terminal difference {d_t:.3e} is not below the a-priori bound {m:.3e}; the conditional estimate does not apply")]
    DifferenceExceedsBound { d_t: f64, m: f64 },
    #[error("probe set is empty")]
    EmptyProbeSet,
    #[error(
        "difference norm vanished at an interior snapshot; log-convexity diagnostic undefined"
    )]
    VanishingInterior,
    #[error("log-convexity diagnostic needs a dense (stride 1) trajectory")]
    NeedsDense,
    #[error("solver: {0}")]
    Solver(#[from] SolverError),
    #[error("basis: {0}")]
    Basis(#[from] BasisError),
    #[error("{0}")]
    BadInput(String),
}

// ---------------------------------------------------------------------------
// exponent weights
// ---------------------------------------------------------------------------

/// The three exponent weights at time `t`: the concave profile, the convex
/// profile, and the tangent line `beta t` that minorises both.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LambdaWeights {
    pub lambda1: f64,
    pub lambda2: f64,
    pub tangent: f64,
}

/// Evaluates the exponent weights. Stable down to `gamma -> 0+`, where all
/// three collapse to `t/T`.
///
/// # Panics
/// If `t` is outside `[0, T]` or `gamma <= 0`.
pub fn lambda_weights(t: f64, t_final: f64, gamma: f64) -> LambdaWeights {
    assert!(
        (0.0..=t_final).contains(&t),
        "t = {t} outside [0, {t_final}]"
    );
    assert!(gamma > 0.0, "gamma must be positive, got {gamma}");
    let denom1 = -(-gamma * t_final).exp_m1(); // 1 - e^{-gamma T}
    let denom2 = (gamma * t_final).exp_m1(); // e^{gamma T} - 1
    LambdaWeights {
        lambda1: -(-gamma * t).exp_m1() / denom1,
        lambda2: (gamma * t).exp_m1() / denom2,
        tangent: gamma / denom2 * t,
    }
}

/// `beta = gamma / (e^(gamma T) - 1)`, the slope of the tangent minorant.
pub fn beta_constant(gamma: f64, t_final: f64) -> f64 {
    assert!(gamma > 0.0 && t_final > 0.0);
    gamma / (gamma * t_final).exp_m1()
}

// ---------------------------------------------------------------------------
// decay-exponent fits
// ---------------------------------------------------------------------------

/// Which exponent profile a fit refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Template {
    Lambda1,
    Lambda2,
}

fn template_value(template: Template, t: f64, t_final: f64, gamma: f64) -> f64 {
    let w = lambda_weights(t, t_final, gamma);
    match template {
        Template::Lambda1 => w.lambda1,
        Template::Lambda2 => w.lambda2,
    }
}

/// One difference-norm curve `d(t)` at snapshot times, `t = T` last.
#[derive(Debug, Clone)]
pub struct DecayCurve {
    pub times: Vec<f64>,
    pub values: Vec<f64>,
}

impl DecayCurve {
    /// Difference-norm curve of two trajectories with matching snapshots.
    pub fn from_pair(a: &Trajectory, b: &Trajectory) -> Result<Self, StabilityError> {
        let diff = a.difference(b)?;
        Ok(Self {
            times: diff.times(),
            values: diff.states().iter().map(|s| s.norm()).collect(),
        })
    }

    /// Norm curve of a single (difference or linearised) trajectory.
    pub fn from_trajectory(t: &Trajectory) -> Self {
        Self {
            times: t.times(),
            values: t.states().iter().map(|s| s.norm()).collect(),
        }
    }
}

/// Result of fitting one exponent template to a set of decay curves.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct TemplateFit {
    pub template: Template,
    pub gamma: f64,
    /// Smallest prefactor making the estimate hold at every snapshot of
    /// every curve (always `>= 1`).
    pub c1: f64,
    /// Sum of squared deviations between the implied exponent curve and the
    /// template.
    pub residual: f64,
}

/// Joint fit over one or more decay curves.
#[derive(Debug, Clone, Serialize)]
pub struct HolderFit {
    pub m_bound: f64,
    pub by_template: [TemplateFit; 2],
    pub selected: Template,
    /// Implied exponent curves `lambda_emp(t_i)` per input curve, under the
    /// selected template's fit.
    pub lambda_emp: Vec<Vec<f64>>,
}

impl HolderFit {
    pub fn gamma(&self) -> f64 {
        self.fit().gamma
    }

    pub fn c1(&self) -> f64 {
        self.fit().c1
    }

    fn fit(&self) -> &TemplateFit {
        match self.selected {
            Template::Lambda1 => &self.by_template[0],
            Template::Lambda2 => &self.by_template[1],
        }
    }
}

/// Worst violation of the estimate in log scale for a given template and
/// `gamma`: the smallest admissible `log C1`.
fn required_log_c1(
    curves: &[DecayCurve],
    m_bound: f64,
    t_final: f64,
    template: Template,
    gamma: f64,
) -> f64 {
    let mut worst = 0.0f64; // t = T forces C1 >= 1
    for curve in curves {
        let d_t = *curve.values.last().unwrap();
        let log_eps = (d_t / m_bound).ln();
        for (&t, &d) in curve.times.iter().zip(&curve.values) {
            if d <= 0.0 {
                continue;
            }
            let lam = template_value(template, t, t_final, gamma);
            worst = worst.max((d / m_bound).ln() - lam * log_eps);
        }
    }
    worst
}

fn fit_template(
    curves: &[DecayCurve],
    m_bound: f64,
    t_final: f64,
    template: Template,
) -> TemplateFit {
    // coarse deterministic scan in log(gamma T), then golden-section refine
    let lo = (1e-3 / t_final).ln();
    let hi = (50.0 / t_final).ln();
    let n_scan = 240;
    let mut best_g = lo;
    let mut best_v = f64::INFINITY;
    for i in 0..=n_scan {
        let lg = lo + (hi - lo) * i as f64 / n_scan as f64;
        let v = required_log_c1(curves, m_bound, t_final, template, lg.exp());
        if v < best_v {
            best_v = v;
            best_g = lg;
        }
    }
    let span = (hi - lo) / n_scan as f64;
    let (mut a, mut b) = (best_g - span, best_g + span);
    let phi = (5.0f64.sqrt() - 1.0) / 2.0;
    for _ in 0..60 {
        let c = b - phi * (b - a);
        let d = a + phi * (b - a);
        let fc = required_log_c1(curves, m_bound, t_final, template, c.exp());
        let fd = required_log_c1(curves, m_bound, t_final, template, d.exp());
        if fc <= fd {
            b = d;
        } else {
            a = c;
        }
    }
    let gamma = (0.5 * (a + b)).exp();
    let log_c1 = required_log_c1(curves, m_bound, t_final, template, gamma);
    let c1 = log_c1.exp();

    // residual of the implied exponent curve against the template
    let mut residual = 0.0;
    for curve in curves {
        let d_t = *curve.values.last().unwrap();
        let log_eps = (d_t / m_bound).ln();
        for (&t, &d) in curve.times.iter().zip(&curve.values) {
            if d <= 0.0 {
                continue;
            }
            let emp = ((d / (c1 * m_bound)).ln()) / log_eps;
            let lam = template_value(template, t, t_final, gamma);
            residual += (emp - lam).powi(2);
        }
    }
    TemplateFit {
        template,
        gamma,
        c1,
        residual,
    }
}

/// Fits both exponent templates jointly over the curves against the a-priori
/// bound `m_bound`, returning the per-template fits and the one with the
/// smaller exponent-curve residual.
pub fn fit_holder(
    curves: &[DecayCurve],
    m_bound: f64,
    t_final: f64,
) -> Result<HolderFit, StabilityError> {
    if curves.is_empty() {
        return Err(StabilityError::EmptyProbeSet);
    }
    for curve in curves {
        let d_t = *curve.values.last().unwrap();
        if d_t <= 0.0 {
            return Err(StabilityError::IdenticalTrajectories);
        }
        if d_t >= m_bound {
            return Err(StabilityError::DifferenceExceedsBound { d_t, m: m_bound });
        }
    }
    let f1 = fit_template(curves, m_bound, t_final, Template::Lambda1);
    let f2 = fit_template(curves, m_bound, t_final, Template::Lambda2);
    let selected = if f1.residual <= f2.residual {
        Template::Lambda1
    } else {
        Template::Lambda2
    };
    let sel = if selected == Template::Lambda1 {
        &f1
    } else {
        &f2
    };
    let lambda_emp = curves
        .iter()
        .map(|curve| {
            let d_t = *curve.values.last().unwrap();
            let log_eps = (d_t / m_bound).ln();
            curve
                .values
                .iter()
                .map(|&d| ((d / (sel.c1 * m_bound)).ln()) / log_eps)
                .collect()
        })
        .collect();
    Ok(HolderFit {
        m_bound,
        by_template: [f1, f2],
        selected,
        lambda_emp,
    })
}

/// Convenience wrapper over [`fit_holder`] for one trajectory pair. The
/// a-priori bound is taken as the largest snapshot norm seen in either run —
/// a computable stand-in for the supremum over all admissible data.
pub fn holder_fit(
    a: &Trajectory,
    b: &Trajectory,
) -> Result<(HolderFit, DecayCurve), StabilityError> {
    let m_bound = a
        .states()
        .iter()
        .chain(b.states())
        .map(|s| s.norm())
        .fold(0.0f64, f64::max);
    let curve = DecayCurve::from_pair(a, b)?;
    let fit = fit_holder(
        std::slice::from_ref(&curve),
        m_bound,
        a.time_grid().t_final(),
    )?;
    Ok((fit, curve))
}

// ---------------------------------------------------------------------------
// log-convexity diagnostic
// ---------------------------------------------------------------------------

/// Discrete check of the differential inequality behind backward uniqueness.
#[derive(Debug, Clone, Serialize)]
pub struct LogConvexityReport {
    /// Smallest `c >= 0` with `l'' + c |l'| + c >= 0` at every interior time.
    pub c_min: f64,
    /// `log |psi(t)|^2` at the step times.
    pub l_hat: Vec<f64>,
    /// Smallest second difference of `l_hat` (nonnegative means convex).
    pub min_second_diff: f64,
}

/// Runs the diagnostic on a dense difference trajectory.
pub fn log_convexity_diagnostic(diff: &Trajectory) -> Result<LogConvexityReport, StabilityError> {
    if !diff.is_dense() {
        return Err(StabilityError::NeedsDense);
    }
    let dt = diff.time_grid().dt();
    let q: Vec<f64> = diff.states().iter().map(|s| s.inner(s)).collect();
    if q.iter().any(|&v| v <= 0.0) {
        return Err(StabilityError::VanishingInterior);
    }
    let l_hat: Vec<f64> = q.iter().map(|v| v.ln()).collect();
    let mut c_min = 0.0f64;
    let mut min_second = f64::INFINITY;
    for i in 1..l_hat.len() - 1 {
        let second = (l_hat[i + 1] - 2.0 * l_hat[i] + l_hat[i - 1]) / (dt * dt);
        let first = (l_hat[i + 1] - l_hat[i - 1]) / (2.0 * dt);
        min_second = min_second.min(second);
        if second < 0.0 {
            c_min = c_min.max(-second / (first.abs() + 1.0));
        }
    }
    Ok(LogConvexityReport {
        c_min,
        l_hat,
        min_second_diff: min_second,
    })
}

// ---------------------------------------------------------------------------
// closed-form constant chains
// ---------------------------------------------------------------------------

/// Constants of the logarithmic initial-data estimate.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct LogConstants {
    pub beta: f64,
    pub c2: f64,
    /// Largest terminal-over-bound ratio for which the estimate is claimed.
    pub eps_threshold: f64,
}

/// Evaluates `beta`, `C2` and the smallness threshold from the measured
/// bounds. Pure and deterministic.
///
/// # Panics
/// If any input is not strictly positive.
pub fn compute_log_constants(
    m_bound: f64,
    m1_bound: f64,
    c1: f64,
    gamma: f64,
    t_final: f64,
) -> LogConstants {
    for (name, v) in [
        ("m_bound", m_bound),
        ("m1_bound", m1_bound),
        ("c1", c1),
        ("gamma", gamma),
        ("t_final", t_final),
    ] {
        assert!(v > 0.0, "{name} must be positive, got {v}");
    }
    let beta = beta_constant(gamma, t_final);
    let c2 = 2.0 * m1_bound * m_bound * c1.sqrt() / beta.sqrt()
        + 3.0 * m1_bound * m1_bound / (4.0 * beta * c1);
    let arg = (4.0 * 3.0f64.sqrt() * m_bound * c1.powf(1.5) / (9.0 * m1_bound)).min(1.0);
    let eps_threshold = (-1.0 / arg).exp();
    LogConstants {
        beta,
        c2,
        eps_threshold,
    }
}

/// Smallest root of `x sqrt(1-x) = r` with its analytic bracket
/// `[r, sqrt(3) r]`.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct XBracket {
    pub lower: f64,
    pub root: f64,
    pub upper: f64,
}

/// Solves `x sqrt(1-x) = r` for the smallest root by bisection on the
/// increasing branch `(0, 2/3]`.
pub fn solve_x_bracket(r: f64) -> Result<XBracket, StabilityError> {
    let max_r = 2.0 * 3.0f64.sqrt() / 9.0;
    if r.is_nan() || r <= 0.0 {
        return Err(StabilityError::BadInput(format!(
            "r must be positive, got {r}"
        )));
    }
    if r > max_r * (1.0 + 1e-14) {
        return Err(StabilityError::BadInput(format!(
            "r = {r} exceeds the maximum 2*sqrt(3)/9 = {max_r}; no solution exists"
        )));
    }
    let f = |x: f64| x * (1.0 - x).sqrt();
    let (mut a, mut b) = (0.0f64, 2.0 / 3.0);
    for _ in 0..200 {
        let mid = 0.5 * (a + b);
        if f(mid) < r {
            a = mid;
        } else {
            b = mid;
        }
    }
    let root = 0.5 * (a + b);
    Ok(XBracket {
        lower: r,
        root,
        upper: (3.0f64.sqrt() * r).min(2.0 / 3.0),
    })
}

/// Inputs of the finite-dimensional Lipschitz constant chain.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct LipschitzChainInput {
    /// Lipschitz constant of the derivative (squared-norm form).
    pub c0: f64,
    /// Logarithmic constant of the linearised estimate.
    pub q2: f64,
    /// Sup-in-time bound of linearised solutions over unit probes.
    pub l_bound: f64,
    /// Norm-equivalence constant of the subspace.
    pub c_lambda: f64,
    /// Sup-in-time bound of nonlinear solutions over admissible data.
    pub m_bound: f64,
    /// Logarithmic constant of the nonlinear estimate.
    pub c2: f64,
    /// A-priori bound on the initial data in the product-H1 norm.
    pub c_bar: f64,
    /// Optional directly-measured lower bound for `m0`, used in place of the
    /// closed form when supplied.
    pub measured_m0: Option<f64>,
}

/// Output of the chain, kept in log scale because the constants overflow for
/// any realistic horizon.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct LipschitzChain {
    pub m0: f64,
    pub log_m0: f64,
    /// `log(C_s)`; infinite when even the log overflows (see `saturated`).
    pub log_c_s: f64,
    /// `C_s` itself; usually infinite in floating point.
    pub c_s: f64,
    /// `log(16 C0^2 C2 / m0)`: the doubly-exponential driver of `log(C_s)`,
    /// always finite and the right quantity to compare across horizons once
    /// `log_c_s` saturates.
    pub chain_exponent: f64,
    pub saturated: bool,
}

/// Evaluates `m0 = (L / C_Lambda) e^(-Q2^2)` and
/// `C_s = max( (2 Cbar / M) e^(16 C0^2 C2 / m0), 2 / m0 )`.
///
/// # Panics
/// If a required input is not strictly positive (`q2` may be zero).
pub fn compute_lipschitz_chain(input: &LipschitzChainInput) -> LipschitzChain {
    for (name, v) in [
        ("c0", input.c0),
        ("l_bound", input.l_bound),
        ("c_lambda", input.c_lambda),
        ("m_bound", input.m_bound),
        ("c2", input.c2),
        ("c_bar", input.c_bar),
    ] {
        assert!(v > 0.0, "{name} must be positive, got {v}");
    }
    assert!(input.q2 >= 0.0, "q2 must be nonnegative");

    let log_m0 = match input.measured_m0 {
        Some(m) => {
            assert!(m > 0.0, "measured m0 must be positive");
            m.ln()
        }
        None => (input.l_bound / input.c_lambda).ln() - input.q2 * input.q2,
    };
    let m0 = log_m0.exp(); // may underflow to zero; log_m0 stays exact

    let chain_exponent = (16.0 * input.c0 * input.c0 * input.c2).ln() - log_m0;
    let first_branch = (2.0 * input.c_bar / input.m_bound).ln() + chain_exponent.exp();
    let second_branch = 2.0f64.ln() - log_m0;
    let log_c_s = first_branch.max(second_branch);
    let saturated = !log_c_s.is_finite();
    LipschitzChain {
        m0,
        log_m0,
        log_c_s,
        c_s: log_c_s.exp(),
        chain_exponent,
        saturated,
    }
}

// ---------------------------------------------------------------------------
// linearised stability measurements
// ---------------------------------------------------------------------------

/// Constants of the linearised estimate, measured over a probe set.
#[derive(Debug, Clone, Serialize)]
pub struct LinearisedStabilityReport {
    /// Max-in-time product-L2 norm over unit probes.
    pub l_bound: f64,
    /// Discrete `H^1(0,T;H)` norm over unit probes.
    pub l1_bound: f64,
    /// Fitted prefactor of the linearised decay estimate.
    pub q1: f64,
    /// Fitted exponent rate.
    pub gamma: f64,
    /// `Q2`, the `C2`-analogue under the substitution `(M, M1, C1) ->
    /// (L, L1, Q1)`.
    pub q2: f64,
}

/// Measures `L`, `L1` and fits `Q1` from linearised runs over `probes`
/// (normalised to unit product-H1 norm), then assembles `Q2` through the
/// same closed form as the nonlinear constants.
pub fn linearised_stability_report(
    op: &LinearisedOperator,
    probes: &[StateTriple],
) -> Result<LinearisedStabilityReport, StabilityError> {
    if probes.is_empty() {
        return Err(StabilityError::EmptyProbeSet);
    }
    let t_final = op.time_grid().t_final();
    let dt = op.time_grid().dt();
    let mut l_bound = 0.0f64;
    let mut l1_bound = 0.0f64;
    let mut curves = Vec::new();
    for probe in probes {
        let nv = probe.norm_h1();
        if nv == 0.0 {
            continue;
        }
        let unit = probe.scaled(1.0 / nv);
        let (_, stats) = op.apply_with_stats(&unit)?;
        l_bound = l_bound.max(stats.max_h_norm);
        l1_bound = l1_bound.max(stats.h1_time_norm);
        let times: Vec<f64> = (0..stats.norm_history.len())
            .map(|i| i as f64 * dt)
            .collect();
        curves.push(DecayCurve {
            times,
            values: stats.norm_history.clone(),
        });
    }
    if curves.is_empty() {
        return Err(StabilityError::EmptyProbeSet);
    }
    let fit = fit_holder(&curves, l_bound * (1.0 + 1e-9), t_final)?;
    let q1 = fit.c1();
    let gamma = fit.gamma();
    let q2 = compute_log_constants(l_bound, l1_bound, q1, gamma, t_final).c2;
    Ok(LinearisedStabilityReport {
        l_bound,
        l1_bound,
        q1,
        gamma,
        q2,
    })
}

// ---------------------------------------------------------------------------
// full study
// ---------------------------------------------------------------------------

/// Knobs of the end-to-end stability study.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StabilityStudyConfig {
    /// Admissible states sampled for the sup-norm measurements.
    pub ensemble_size: usize,
    pub ensemble_seed: u64,
    /// Trajectory pairs entering the decay-exponent fit.
    pub n_pairs: usize,
    /// Basis order per axis for the subspace constants.
    pub modes_per_axis: usize,
    /// Probe directions for the linearised measurements beyond the leading
    /// basis elements.
    pub random_probes: usize,
}

impl Default for StabilityStudyConfig {
    fn default() -> Self {
        Self {
            ensemble_size: 32,
            ensemble_seed: 0,
            n_pairs: 10,
            modes_per_axis: 3,
            random_probes: 8,
        }
    }
}

/// Every constant the study pins down, in one serialisable block.
///
/// The sup-type bounds (`m_bound`, `m1_bound`, `l_bound`, `l1_bound`,
/// `c_bar`) are maximised over a finite seeded ensemble, so each is a lower
/// bound of the true supremum over all admissible data.
#[derive(Debug, Clone, Serialize)]
pub struct StabilityReport {
    pub m_bound: f64,
    pub m1_bound: f64,
    pub c_bar: f64,
    pub gamma_fit: f64,
    pub c1_fit: f64,
    pub template: Template,
    pub fit_residuals: [f64; 2],
    pub beta: f64,
    pub c2: f64,
    pub eps_threshold: f64,
    pub l_bound: f64,
    pub l1_bound: f64,
    pub q1: f64,
    pub q2: f64,
    pub c_lambda: f64,
    pub c0: f64,
    pub m0: f64,
    pub log_m0: f64,
    pub log_c_s: f64,
    pub chain_exponent: f64,
    pub saturated: bool,
    pub log_convexity_c: f64,
    pub ensemble_seed: u64,
}

/// Study output: the report plus the curves behind it, ready for CSV export.
#[derive(Debug, Clone)]
pub struct StabilityStudy {
    pub report: StabilityReport,
    /// `d(t)` per fitted pair.
    pub decay_curves: Vec<DecayCurve>,
    /// Implied exponent curves per pair under the selected template.
    pub lambda_emp: Vec<Vec<f64>>,
    /// `log |psi|^2` over time for the first pair (dense).
    pub l_hat: Vec<f64>,
    pub l_hat_times: Vec<f64>,
}

/// Seeded ensemble of smooth admissible states: phantom lesions perturbed by
/// low-frequency modes and clamped back to the admissible set.
pub fn admissible_ensemble(
    grid: Grid,
    params: &ModelParams,
    bounds: &AdmissibleBounds,
    count: usize,
    seed: u64,
) -> Result<Vec<StateTriple>, SolverError> {
    let kinds = [
        PhantomKind::GaussianBump,
        PhantomKind::TwoFoci,
        PhantomKind::Annulus,
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
    let mut out = Vec::with_capacity(count);
    for i in 0..count {
        let spec = PhantomSpec {
            kind: kinds[i % kinds.len()],
            seed: seed.wrapping_add(i as u64),
            interface_width: 0.04 + 0.02 * (i % 3) as f64,
        };
        let mut s = make_phantom(grid, &spec, params)?;
        // low-frequency admissible jitter
        let amp: f64 = rng.gen_range(0.0..0.15);
        let kx = rng.gen_range(1..4) as f64;
        let ky = rng.gen_range(1..4) as f64;
        let pert = Field::from_fn(grid, |x| {
            let fx = (kx * std::f64::consts::PI * x[0] / grid.extent(0)).sin();
            let fy = if grid.dim() == 2 {
                (ky * std::f64::consts::PI * x[1] / grid.extent(1)).sin()
            } else {
                1.0
            };
            amp * fx * fy
        });
        s.phi.axpy(1.0, &pert);
        s.sigma.axpy(rng.gen_range(-0.2..0.2), &pert);
        s.psa.axpy(rng.gen_range(-0.1..0.1), &pert);
        out.push(project_admissible(&s, bounds));
    }
    Ok(out)
}

/// Streams one forward run, accumulating the sup-in-time norm and the
/// discrete `H^1(0,T;H)` norm without storing the trajectory.
pub fn forward_sweep_norms(
    s0: &StateTriple,
    params: &ModelParams,
    tg: TimeGrid,
    cg: CgParams,
) -> Result<(f64, f64), SolverError> {
    let stepper = ImexStepper::new(params, s0.grid(), tg.dt(), cg)?;
    let dt = tg.dt();
    let mut current = s0.clone();
    let mut max_norm = current.norm();
    let mut h1_sq = 0.0;
    for k in 0..tg.n_steps() {
        let next = stepper.step(&current, k as f64 * dt, None)?;
        let norm = next.norm();
        max_norm = max_norm.max(norm);
        let rate = next.sub(&current).norm() / dt;
        h1_sq += dt * (norm * norm + rate * rate);
        current = next;
    }
    Ok((max_norm, h1_sq.sqrt()))
}

/// Runs the full measurement pipeline on one grid/parameter/horizon triple.
pub fn stability_study(
    grid: Grid,
    params: &ModelParams,
    tg: TimeGrid,
    cfg: &StabilityStudyConfig,
) -> Result<StabilityStudy, StabilityError> {
    if cfg.n_pairs == 0 {
        return Err(StabilityError::BadInput(
            "the study needs at least one trajectory pair".into(),
        ));
    }
    if cfg.ensemble_size < 2 * cfg.n_pairs {
        return Err(StabilityError::BadInput(format!(
            "ensemble of {} cannot supply {} disjoint pairs",
            cfg.ensemble_size, cfg.n_pairs
        )));
    }
    let bounds = AdmissibleBounds::from_params(params);
    let ensemble =
        admissible_ensemble(grid, params, &bounds, cfg.ensemble_size, cfg.ensemble_seed)?;
    let cg = CgParams::default();

    // sup bounds over the ensemble
    let mut m_bound = 0.0f64;
    let mut m1_bound = 0.0f64;
    let mut c_bar = 0.0f64;
    for member in &ensemble {
        let (mx, h1) = forward_sweep_norms(member, params, tg, cg)?;
        m_bound = m_bound.max(mx);
        m1_bound = m1_bound.max(h1);
        c_bar = c_bar.max(member.norm_h1());
    }

    // decay curves over disjoint pairs
    let opts = ForwardOptions::default();
    let mut curves = Vec::with_capacity(cfg.n_pairs);
    let mut pair_trajs = Vec::new();
    for i in 0..cfg.n_pairs {
        let a = solve_forward(&ensemble[2 * i], params, tg, &opts, None)?;
        let b = solve_forward(&ensemble[2 * i + 1], params, tg, &opts, None)?;
        curves.push(DecayCurve::from_pair(&a, &b)?);
        if i == 0 {
            pair_trajs = vec![ensemble[0].clone(), ensemble[1].clone()];
        }
    }
    let fit = fit_holder(&curves, m_bound, tg.t_final())?;
    let log_consts = compute_log_constants(m_bound, m1_bound, fit.c1(), fit.gamma(), tg.t_final());

    // dense first pair for the log-convexity diagnostic
    let dense = ForwardOptions {
        snapshots: SnapshotPolicy::EveryStep,
        cg,
        quiet_monitor: true,
    };
    let da = solve_forward(&pair_trajs[0], params, tg, &dense, None)?;
    let db = solve_forward(&pair_trajs[1], params, tg, &dense, None)?;
    let diff = da.difference(&db)?;
    let convexity = log_convexity_diagnostic(&diff)?;
    let l_hat_times = diff.times();

    // linearised constants around the first ensemble member
    let basis = build_coarse_basis(grid, cfg.modes_per_axis)?;
    let (_, op) = linearise_at(&ensemble[0], params, tg, cg)?;
    let mut probes: Vec<StateTriple> = basis.elements().iter().take(8).cloned().collect();
    for s in 0..cfg.random_probes {
        probes.push(random_triple(
            grid,
            cfg.ensemble_seed.wrapping_add(1000 + s as u64),
        ));
    }
    let lin = linearised_stability_report(&op, &probes)?;

    // derivative Lipschitz constant over the first pairs
    let mut c0 = 0.0f64;
    let lip_probes: Vec<StateTriple> = probes.iter().take(6).cloned().collect();
    for i in 0..cfg.n_pairs.min(3) {
        let rep = derivative_lipschitz_check(
            &ensemble[2 * i],
            &ensemble[2 * i + 1],
            params,
            tg,
            &lip_probes,
            cg,
        )?;
        c0 = c0.max(rep.c0);
    }

    let c_lambda = basis.v_over_h_ratio();
    let chain = compute_lipschitz_chain(&LipschitzChainInput {
        c0: c0.max(1e-12),
        q2: lin.q2,
        l_bound: lin.l_bound,
        c_lambda,
        m_bound,
        c2: log_consts.c2,
        c_bar,
        measured_m0: None,
    });

    let report = StabilityReport {
        m_bound,
        m1_bound,
        c_bar,
        gamma_fit: fit.gamma(),
        c1_fit: fit.c1(),
        template: fit.selected,
        fit_residuals: [fit.by_template[0].residual, fit.by_template[1].residual],
        beta: log_consts.beta,
        c2: log_consts.c2,
        eps_threshold: log_consts.eps_threshold,
        l_bound: lin.l_bound,
        l1_bound: lin.l1_bound,
        q1: lin.q1,
        q2: lin.q2,
        c_lambda,
        c0,
        m0: chain.m0,
        log_m0: chain.log_m0,
        log_c_s: chain.log_c_s,
        chain_exponent: chain.chain_exponent,
        saturated: chain.saturated,
        log_convexity_c: convexity.c_min,
        ensemble_seed: cfg.ensemble_seed,
    };
    Ok(StabilityStudy {
        report,
        decay_curves: curves,
        lambda_emp: fit.lambda_emp,
        l_hat: convexity.l_hat,
        l_hat_times,
    })
}
