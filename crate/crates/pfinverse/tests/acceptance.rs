//! Acceptance suite: one test per criterion, each printing a pass line with
//! the measured numbers. Run with `cargo test --test acceptance`.

use pfinverse::basis::build_coarse_basis;
use pfinverse::cg::CgParams;
use pfinverse::forward::{
    solution_operator, solve_forward, AdmissibleBounds, ForwardOptions, SnapshotPolicy, TimeGrid,
};
use pfinverse::grid::{Field, Grid, StateTriple};
use pfinverse::inverse::{
    discrepancy_stop, project_admissible_subspace, Landweber, ReconstructionConfig, StepSize,
};
use pfinverse::linearised::{linearise_at, random_triple, taylor_remainder_test};
use pfinverse::model::ModelParams;
use pfinverse::phantom::{add_noise, make_phantom, PhantomKind, PhantomSpec};
use pfinverse::stability::{
    admissible_ensemble, compute_lipschitz_chain, compute_log_constants, fit_holder, holder_fit,
    lambda_weights, solve_x_bracket, stability_study, DecayCurve, LipschitzChainInput,
    StabilityStudyConfig, Template,
};
use std::f64::consts::PI;
use std::time::Instant;

fn pass(criterion: &str, detail: String) {
    println!("PASS {criterion}: {detail}");
}

/// Manufactured source terms forcing the smooth exact solution
/// `phi* = sin(pi x) e^-t`, `sigma* = psa* = cos(pi x) e^-t` on `[0,1]`.
struct Manufactured {
    p: ModelParams,
}

impl Manufactured {
    fn exact(&self, x: f64, t: f64) -> [f64; 3] {
        let decay = (-t).exp();
        [
            (PI * x).sin() * decay,
            (PI * x).cos() * decay,
            (PI * x).cos() * decay,
        ]
    }

    fn exact_state(&self, grid: Grid, t: f64) -> StateTriple {
        StateTriple::new(
            Field::from_fn(grid, |x| self.exact(x[0], t)[0]),
            Field::from_fn(grid, |x| self.exact(x[0], t)[1]),
            Field::from_fn(grid, |x| self.exact(x[0], t)[2]),
        )
    }
}

impl pfinverse::forward::Sources for Manufactured {
    fn eval(&self, x: [f64; 2], t: f64) -> [f64; 3] {
        let p = &self.p;
        let [phi, sigma, psa] = self.exact(x[0], t);
        let pi2 = PI * PI;
        // d/dt u* = -u*, Lap u* = -pi^2 u* for each component
        let g_phi = -phi + p.lambda_phi * pi2 * phi + p.reaction(phi, sigma);
        let g_sigma = -sigma + p.eta * pi2 * sigma
            - (p.s_h + p.s_ch() * phi - p.gamma_h * sigma - p.gamma_ch() * sigma * phi);
        let g_psa = -psa + p.d_p * pi2 * psa + p.gamma_p * psa - (p.alpha_h + p.alpha_ch() * phi);
        [g_phi, g_sigma, g_psa]
    }
}

fn mms_params() -> ModelParams {
    // larger diffusivities keep the spatial truncation error well above the
    // linear-solver noise floor on fine grids
    ModelParams {
        lambda_phi: 0.1,
        eta: 0.1,
        d_p: 0.1,
        ..ModelParams::default()
    }
}

fn mms_error(n: usize, n_steps: usize, t_final: f64) -> f64 {
    let grid = Grid::unit(1, n).unwrap();
    let m = Manufactured { p: mms_params() };
    let s0 = m.exact_state(grid, 0.0);
    let tg = TimeGrid::new(t_final, n_steps).unwrap();
    let opts = ForwardOptions {
        snapshots: SnapshotPolicy::Stride(usize::MAX),
        cg: CgParams::tight(),
        quiet_monitor: true,
    };
    let traj = solve_forward(&s0, &m.p, tg, &opts, Some(&m)).unwrap();
    traj.final_state().sub(&m.exact_state(grid, t_final)).norm()
}

#[test]
fn criterion_01_manufactured_solution_convergence() {
    let start = Instant::now();
    let t_final = 0.25;

    // spatial sweep with dt scaled as h^2 so both error sources shrink at
    // second order together
    let spatial: Vec<f64> = [(128, 625), (256, 2500), (512, 10000)]
        .iter()
        .map(|&(n, steps)| mms_error(n, steps, t_final))
        .collect();
    let s_orders: Vec<f64> = spatial.windows(2).map(|w| (w[0] / w[1]).log2()).collect();

    // temporal sweep against a same-grid fine-step reference
    let grid = Grid::unit(1, 256).unwrap();
    let m = Manufactured { p: mms_params() };
    let s0 = m.exact_state(grid, 0.0);
    let opts = ForwardOptions {
        snapshots: SnapshotPolicy::Stride(usize::MAX),
        cg: CgParams::tight(),
        quiet_monitor: true,
    };
    let reference = solve_forward(
        &s0,
        &m.p,
        TimeGrid::new(t_final, 2560).unwrap(),
        &opts,
        Some(&m),
    )
    .unwrap()
    .final_state()
    .clone();
    let temporal: Vec<f64> = [40usize, 80, 160]
        .iter()
        .map(|&steps| {
            let traj = solve_forward(
                &s0,
                &m.p,
                TimeGrid::new(t_final, steps).unwrap(),
                &opts,
                Some(&m),
            )
            .unwrap();
            traj.final_state().sub(&reference).norm()
        })
        .collect();
    let t_orders: Vec<f64> = temporal.windows(2).map(|w| (w[0] / w[1]).log2()).collect();

    let elapsed = start.elapsed().as_secs_f64();
    for o in &s_orders {
        assert!(*o >= 1.9, "spatial order {o} < 1.9 (errors {spatial:?})");
    }
    for o in &t_orders {
        assert!(*o >= 0.9, "temporal order {o} < 0.9 (errors {temporal:?})");
    }
    assert!(elapsed < 120.0, "runtime {elapsed:.1}s exceeds 2 min");
    pass(
        "criterion 1 (manufactured-solution convergence)",
        format!("spatial orders {s_orders:.2?}, temporal orders {t_orders:.2?}, {elapsed:.1}s"),
    );
}

#[test]
fn criterion_02_decoupled_analytic_limits() {
    let g = Grid::unit(1, 16).unwrap();
    let p = ModelParams {
        m_pot: 0.0,
        s_h: 1.0,
        s_c: 1.0,
        gamma_h: 1.0,
        gamma_c: 1.0,
        alpha_h: 0.0,
        alpha_c: 0.0,
        gamma_p: 2.0,
        ..ModelParams::default()
    };
    let s0 = StateTriple::new(Field::zeros(g), Field::zeros(g), Field::constant(g, 1.0));
    let tg = TimeGrid::new(1.0, 1000).unwrap(); // dt = 1e-3
    let traj = solve_forward(&s0, &p, tg, &ForwardOptions::default(), None).unwrap();
    let mut worst_sigma = 0.0f64;
    let mut worst_psa = 0.0f64;
    for (t, snap) in traj.times().iter().zip(traj.states()) {
        let sig_exact = 1.0 - (-t).exp();
        let psa_exact = (-2.0 * t).exp();
        for &v in snap.sigma.values() {
            worst_sigma = worst_sigma.max((v - sig_exact).abs());
        }
        for &v in snap.psa.values() {
            worst_psa = worst_psa.max((v - psa_exact).abs());
        }
    }
    assert!(worst_sigma < 1e-3, "nutrient error {worst_sigma}");
    assert!(worst_psa < 1e-3, "PSA error {worst_psa}");
    pass(
        "criterion 2 (decoupled analytic limits)",
        format!("max nutrient error {worst_sigma:.2e}, max PSA error {worst_psa:.2e} at dt=1e-3"),
    );
}

#[test]
fn criterion_03_phase_bound_over_seeded_runs() {
    let g = Grid::unit(2, 32).unwrap();
    let p = ModelParams::default();
    let bounds = AdmissibleBounds::from_params(&p);
    let members = admissible_ensemble(g, &p, &bounds, 10, 42).unwrap();
    let tg = TimeGrid::new(0.5, 250).unwrap();
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for s0 in &members {
        let traj = solve_forward(s0, &p, tg, &ForwardOptions::default(), None).unwrap();
        lo = lo.min(traj.monitor.phi_min);
        hi = hi.max(traj.monitor.phi_max);
        assert!(
            traj.monitor.phi_min >= -1e-2 && traj.monitor.phi_max <= 1.0 + 1e-2,
            "phase bound violated: [{}, {}]",
            traj.monitor.phi_min,
            traj.monitor.phi_max
        );
        assert!(traj.monitor.sigma_min >= -1e-8 && traj.monitor.psa_min >= -1e-8);
    }
    pass(
        "criterion 3 (phase bound)",
        format!("phi within [{lo:.3e}, {hi:.6}] over 10 seeded runs"),
    );
}

#[test]
fn criterion_04_frechet_taylor_slopes() {
    let start = Instant::now();
    let g = Grid::unit(2, 32).unwrap();
    let p = ModelParams::default();
    let bounds = AdmissibleBounds::from_params(&p);
    let bases = admissible_ensemble(g, &p, &bounds, 5, 7).unwrap();
    let basis = build_coarse_basis(g, 3).unwrap();
    let tg = TimeGrid::new(0.2, 100).unwrap();
    let epsilons = [1e-1, 1e-2, 1e-3, 1e-4];

    // directions: leading phase and nutrient modes plus seeded random
    // triples (pure-PSA directions are excluded: the map is exactly linear
    // in them and the remainder vanishes identically)
    let mut directions: Vec<StateTriple> = Vec::new();
    directions.extend(basis.elements()[0..4].iter().cloned()); // phi modes
    directions.extend(basis.elements()[9..11].iter().cloned()); // sigma modes
    directions.push(random_triple(g, 1001));
    directions.push(random_triple(g, 1002));

    let mut slopes = Vec::new();
    for base in &bases {
        for dir in &directions {
            let rep =
                taylor_remainder_test(base, dir, &p, tg, &epsilons, CgParams::tight()).unwrap();
            slopes.push(rep.slope);
        }
    }
    let elapsed = start.elapsed().as_secs_f64();
    let (lo, hi) = slopes
        .iter()
        .fold((f64::INFINITY, 0.0f64), |(l, h), &s| (l.min(s), h.max(s)));
    for s in &slopes {
        assert!(
            (1.9..=2.1).contains(s),
            "taylor slope {s} outside [1.9, 2.1] (all: {slopes:?})"
        );
    }
    assert!(elapsed < 300.0, "runtime {elapsed:.1}s exceeds 5 min");
    pass(
        "criterion 4 (Taylor remainder)",
        format!("40 slopes in [{lo:.3}, {hi:.3}], {elapsed:.1}s"),
    );
}

#[test]
fn criterion_05_exact_discrete_adjoint() {
    let g = Grid::unit(2, 32).unwrap();
    let p = ModelParams::default();
    let base = make_phantom(g, &PhantomSpec::default(), &p).unwrap();
    let tg = TimeGrid::new(0.2, 200).unwrap();
    let (_, op) = linearise_at(&base, &p, tg, CgParams::tight()).unwrap();
    let mut worst = 0.0f64;
    for k in 0..50 {
        let u = random_triple(g, 3000 + 2 * k);
        let w = random_triple(g, 3001 + 2 * k);
        let lhs = op.apply(&u).unwrap().inner(&w);
        let rhs = u.inner(&op.apply_adjoint(&w).unwrap());
        worst = worst.max((lhs - rhs).abs() / (u.norm() * w.norm()));
    }
    assert!(worst < 1e-8, "adjoint mismatch {worst}");
    pass(
        "criterion 5 (exact discrete adjoint)",
        format!("worst relative mismatch {worst:.3e} over 50 pairs (32x32, 200 steps)"),
    );
}

#[test]
fn criterion_06_holder_stability() {
    // ten admissible pairs at default desk parameters
    let g = Grid::unit(2, 24).unwrap();
    let p = ModelParams::default();
    let bounds = AdmissibleBounds::from_params(&p);
    let members = admissible_ensemble(g, &p, &bounds, 20, 5).unwrap();
    let tg = TimeGrid::new(0.3, 150).unwrap();
    let opts = ForwardOptions::default();
    let mut trajs = Vec::new();
    for m in &members {
        trajs.push(solve_forward(m, &p, tg, &opts, None).unwrap());
    }
    let m_bound = trajs
        .iter()
        .flat_map(|t| t.states())
        .map(|s| s.norm())
        .fold(0.0f64, f64::max);
    let mut curves = Vec::new();
    for i in 0..10 {
        curves.push(DecayCurve::from_pair(&trajs[2 * i], &trajs[2 * i + 1]).unwrap());
    }
    let fit = fit_holder(&curves, m_bound, tg.t_final()).unwrap();

    // independent verification: the fitted (gamma, C1) must satisfy the
    // estimate at every snapshot of every pair, zero violations
    let mut violations = 0usize;
    let mut checked = 0usize;
    for curve in &curves {
        let d_t = *curve.values.last().unwrap();
        for (&t, &d) in curve.times.iter().zip(&curve.values) {
            let w = lambda_weights(t, tg.t_final(), fit.gamma());
            let lam = match fit.selected {
                Template::Lambda1 => w.lambda1,
                Template::Lambda2 => w.lambda2,
            };
            let bound = fit.c1() * m_bound.powf(1.0 - lam) * d_t.powf(lam);
            checked += 1;
            if d > bound * (1.0 + 1e-9) {
                violations += 1;
            }
        }
    }
    assert_eq!(
        violations, 0,
        "estimate violated at {violations}/{checked} snapshots"
    );
    assert!(fit.c1() >= 1.0);

    // single-mode decoupled case against the closed-form exponent
    let g1 = Grid::unit(1, 32).unwrap();
    let mut pd = ModelParams::default();
    pd.m_pot = 0.0;
    pd.gamma_c = pd.gamma_h;
    pd.s_c = pd.s_h;
    pd.alpha_c = pd.alpha_h;
    let steady = StateTriple::new(
        Field::zeros(g1),
        Field::constant(g1, 1.0),
        Field::constant(g1, 0.3),
    );
    let mut perturbed = steady.clone();
    let amp = 0.05;
    perturbed
        .sigma
        .axpy(amp, &Field::from_fn(g1, |x| (PI * x[0]).cos()));
    let tg1 = TimeGrid::new(0.5, 500).unwrap();
    let ta = solve_forward(&perturbed, &pd, tg1, &opts, None).unwrap();
    let tb = solve_forward(&steady, &pd, tg1, &opts, None).unwrap();
    let (fit1, curve1) = holder_fit(&ta, &tb).unwrap();

    // closed form: the difference is a single discrete cosine eigenmode with
    // per-step factor 1/(1 + dt (gamma_h + eta mu_1)); lambda_emp follows
    let h = g1.spacing(0);
    let mu1 = (2.0 - 2.0 * (PI * h).cos()) / (h * h);
    let rho = 1.0 / (1.0 + tg1.dt() * (pd.gamma_h + pd.eta * mu1));
    let m_local = ta
        .states()
        .iter()
        .chain(tb.states())
        .map(|s| s.norm())
        .fold(0.0f64, f64::max);
    let d0 = amp * Field::from_fn(g1, |x| (PI * x[0]).cos()).norm();
    let d_t_exact = d0 * rho.powi(tg1.n_steps() as i32);
    let log_eps = (d_t_exact / m_local).ln();
    let mut worst_emp = 0.0f64;
    for ((&t, &d), emp) in curve1
        .times
        .iter()
        .zip(&curve1.values)
        .zip(&fit1.lambda_emp[0])
    {
        let d_exact = d0 * rho.powf(t / tg1.dt());
        assert!(
            (d - d_exact).abs() < 1e-8 * d_exact,
            "decay not single-mode"
        );
        let analytic = (d_exact / (fit1.c1() * m_local)).ln() / log_eps;
        worst_emp = worst_emp.max((emp - analytic).abs());
    }
    assert!(worst_emp < 1e-3, "empirical exponent off by {worst_emp}");
    pass(
        "criterion 6 (Hoelder stability)",
        format!(
            "C1 {:.4}, gamma {:.3}, 0/{checked} violations; single-mode exponent off by {worst_emp:.2e}",
            fit.c1(),
            fit.gamma()
        ),
    );
}

// Independent scalar oracles for criterion 7, written directly from the
// closed forms with a different operation order than the library.
mod oracle {
    pub fn beta(gamma: f64, t: f64) -> f64 {
        gamma / ((gamma * t).exp() - 1.0)
    }

    pub fn c2(m: f64, m1: f64, c1: f64, gamma: f64, t: f64) -> f64 {
        let b = beta(gamma, t);
        (2.0 * m1 * m) * (c1 / b).sqrt() + (0.75 * m1 * m1) / (b * c1)
    }

    pub fn eps_threshold(m: f64, m1: f64, c1: f64) -> f64 {
        let v = 4.0 * 3.0f64.sqrt() * m * (c1 * c1 * c1).sqrt() / (9.0 * m1);
        (-(1.0 / v.min(1.0))).exp()
    }

    pub fn chain(
        c0: f64,
        q2: f64,
        l: f64,
        c_lambda: f64,
        m: f64,
        c2: f64,
        c_bar: f64,
    ) -> (f64, f64) {
        let log_m0 = (l).ln() - c_lambda.ln() - q2 * q2;
        let log_cs = ((2.0 * c_bar / m).ln() + (16.0 * c0 * c0 * c2 / log_m0.exp()))
            .max(2.0f64.ln() - log_m0);
        (log_m0, log_cs)
    }
}

#[test]
fn criterion_07_constant_formulas_match_independent_oracle() {
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    // frozen spot values (independent scalar script)
    let lc = compute_log_constants(1.0, 1.0, 1.0, 1.0, 1.0);
    assert!((lc.beta - 1.0 / (std::f64::consts::E - 1.0)).abs() < 1e-15);
    assert!((lc.c2 - 3.910376360208456).abs() < 1e-12);
    let xb = solve_x_bracket(2.0 * 3.0f64.sqrt() / 9.0).unwrap();
    assert!((xb.root - 2.0 / 3.0).abs() < 1e-7);

    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let m = rng.gen_range(0.5..5.0);
        let m1 = rng.gen_range(0.5..5.0);
        let c1 = rng.gen_range(1.0..5.0);
        let gamma = rng.gen_range(0.05..5.0);
        let t = rng.gen_range(0.1..2.0);
        let lib = compute_log_constants(m, m1, c1, gamma, t);
        let scale = |x: f64| x.abs().max(1.0);
        let db = (lib.beta - oracle::beta(gamma, t)).abs() / scale(lib.beta);
        let dc = (lib.c2 - oracle::c2(m, m1, c1, gamma, t)).abs() / scale(lib.c2);
        let de =
            (lib.eps_threshold - oracle::eps_threshold(m, m1, c1)).abs() / scale(lib.eps_threshold);
        worst = worst.max(db).max(dc).max(de);

        let c0 = rng.gen_range(0.5..3.0);
        let q2 = rng.gen_range(0.0..2.5);
        let l = rng.gen_range(0.5..2.0);
        let c_lambda = rng.gen_range(1.0..20.0);
        let c_bar = rng.gen_range(0.5..5.0);
        let chain = compute_lipschitz_chain(&LipschitzChainInput {
            c0,
            q2,
            l_bound: l,
            c_lambda,
            m_bound: m,
            c2: lib.c2,
            c_bar,
            measured_m0: None,
        });
        let (log_m0_o, log_cs_o) = oracle::chain(c0, q2, l, c_lambda, m, lib.c2, c_bar);
        worst = worst.max((chain.log_m0 - log_m0_o).abs() / scale(log_m0_o));
        worst = worst.max((chain.log_c_s - log_cs_o).abs() / scale(log_cs_o));

        // x-bracket self-check on random admissible r
        let r = rng.gen_range(0.01..1.0) * 2.0 * 3.0f64.sqrt() / 9.0;
        let xb = solve_x_bracket(r).unwrap();
        assert!((xb.root * (1.0 - xb.root).sqrt() - r).abs() < 1e-10);
        assert!(xb.lower - 1e-12 <= xb.root && xb.root <= xb.upper + 1e-12);
    }
    assert!(worst < 1e-12, "oracle disagreement {worst}");
    pass(
        "criterion 7 (constant formulas)",
        format!("worst relative disagreement {worst:.2e} over 100 random inputs"),
    );
}

#[test]
fn criterion_08_noiseless_reconstruction() {
    // subspace phantom on 32x32, T = 0.2, subspace dimension 27
    let g = Grid::unit(2, 32).unwrap();
    let p = ModelParams::default();
    let bounds = AdmissibleBounds::from_params(&p);
    let basis = build_coarse_basis(g, 3).unwrap();
    assert_eq!(basis.len(), 27);
    let tg = TimeGrid::new(0.2, 100).unwrap();

    let phantom = make_phantom(
        g,
        &PhantomSpec {
            kind: PhantomKind::GaussianBump,
            seed: 5,
            interface_width: 0.06,
        },
        &p,
    )
    .unwrap();
    let truth = project_admissible_subspace(&phantom, &basis, &bounds, 200);
    let y = solution_operator(&truth, &p, tg, &ForwardOptions::dense()).unwrap();

    let cfg = ReconstructionConfig {
        step_size: StepSize::Auto,
        max_iterations: 500,
        noise_level: 0.0,
        ..Default::default()
    };
    let lw = Landweber::new(&p, tg, cfg, bounds)
        .with_subspace(&basis)
        .with_ground_truth(&truth);
    let out = lw.reconstruct(&y).unwrap();
    let err = out.final_error.unwrap();
    assert!(
        err <= 5e-2,
        "relative error {err} exceeds 5e-2 after {} iterations",
        out.history.len() - 1
    );

    // linear decoupled regime against closed-form spectral inversion
    let g1 = Grid::unit(1, 32).unwrap();
    let mut pd = ModelParams::default();
    pd.m_pot = 0.0;
    pd.gamma_c = pd.gamma_h;
    pd.s_c = pd.s_h;
    pd.alpha_c = pd.alpha_h;
    let basis1 = build_coarse_basis(g1, 3).unwrap();
    let tg1 = TimeGrid::new(0.2, 100).unwrap();
    let coeffs: Vec<f64> = (0..basis1.len())
        .map(|i| match i {
            0 => 0.12,
            1 => 0.03,
            3 => 1.0,
            4 => 0.05,
            6 => 0.3,
            7 => 0.02,
            _ => 0.0,
        })
        .collect();
    let truth1 = basis1.combine(&coeffs);
    let y1 = solution_operator(&truth1, &pd, tg1, &ForwardOptions::dense()).unwrap();
    let r0 =
        solution_operator(&StateTriple::zeros(g1), &pd, tg1, &ForwardOptions::dense()).unwrap();
    let lw1 = Landweber::new(
        &pd,
        tg1,
        ReconstructionConfig {
            max_iterations: 400,
            ..Default::default()
        },
        AdmissibleBounds::from_params(&pd),
    )
    .with_subspace(&basis1);
    let out1 = lw1.reconstruct(&y1).unwrap();

    let h = g1.spacing(0);
    let dt = tg1.dt();
    let n_steps = tg1.n_steps() as i32;
    let disc_mu = |k: f64| (2.0 - 2.0 * (k * PI * h).cos()) / (h * h);
    let y_c = basis1.coefficients(&y1);
    let r0_c = basis1.coefficients(&r0);
    let got = basis1.coefficients(&out1.reconstruction);
    let modes = basis1.len() / 3;
    let mut worst_mode = 0.0f64;
    for i in 0..basis1.len() {
        let (slot, mode) = (i / modes, (i % modes) as f64);
        let factor = match slot {
            0 => (1.0 + dt * pd.lambda_phi * disc_mu(mode + 1.0)).powi(-n_steps),
            1 => (1.0 + dt * (pd.gamma_h + pd.eta * disc_mu(mode))).powi(-n_steps),
            _ => (1.0 + dt * (pd.gamma_p + pd.d_p * disc_mu(mode))).powi(-n_steps),
        };
        let spectral = (y_c[i] - r0_c[i]) / factor;
        worst_mode = worst_mode.max((got[i] - spectral).abs());
    }
    assert!(worst_mode < 1e-3, "spectral mismatch {worst_mode}");
    pass(
        "criterion 8 (noiseless reconstruction)",
        format!(
            "subspace error {err:.2e} in {} iterations; spectral-inverse mismatch {worst_mode:.2e}",
            out.history.len() - 1
        ),
    );
}

#[test]
fn criterion_09_noisy_reconstruction_discrepancy() {
    let g = Grid::unit(2, 24).unwrap();
    let p = ModelParams::default();
    let bounds = AdmissibleBounds::from_params(&p);
    let tg = TimeGrid::new(0.3, 100).unwrap();
    let tau_dp = 1.2;
    let out_dir = std::path::Path::new(env!("CARGO_TARGET_TMPDIR")).join("semiconvergence");
    std::fs::create_dir_all(&out_dir).unwrap();

    let mut ratios = Vec::new();
    let mut interior_minima = 0usize;
    for seed in 0..5u64 {
        let truth = make_phantom(
            g,
            &PhantomSpec {
                kind: PhantomKind::GaussianBump,
                seed,
                interface_width: 0.06,
            },
            &p,
        )
        .unwrap();
        let y_clean = solution_operator(&truth, &p, tg, &ForwardOptions::dense()).unwrap();
        let y = add_noise(&y_clean, 0.01, 900 + seed, &bounds);
        let delta = y.sub(&y_clean).norm();

        // full-grid reconstruction, run past the discrepancy point so the
        // whole semiconvergence curve is visible
        let cfg = ReconstructionConfig {
            step_size: StepSize::Auto,
            max_iterations: 120,
            noise_level: 0.0,
            stagnation_tol: 0.0,
            ..Default::default()
        };
        let lw = Landweber::new(&p, tg, cfg, bounds.clone()).with_ground_truth(&truth);
        let out = lw.reconstruct(&y).unwrap();

        let errors: Vec<f64> = out
            .history
            .iter()
            .map(|r| r.error_vs_truth.unwrap())
            .collect();
        let residuals: Vec<f64> = out.history.iter().map(|r| r.residual).collect();
        let k_dp = residuals
            .iter()
            .position(|&r| discrepancy_stop(r, delta, tau_dp))
            .expect("discrepancy level never reached");
        let best = errors.iter().cloned().fold(f64::INFINITY, f64::min);
        let k_best = errors.iter().position(|&e| e == best).unwrap();
        let ratio = errors[k_dp] / best;
        assert!(
            ratio <= 1.5,
            "seed {seed}: discrepancy iterate error {} vs best {} (x{ratio:.2})",
            errors[k_dp],
            best
        );
        ratios.push(ratio);
        if k_best > 0 && *errors.last().unwrap() > best {
            interior_minima += 1;
        }

        let mut csv = String::from("iter,residual,error_vs_truth\n");
        for r in &out.history {
            csv.push_str(&format!(
                "{},{},{}\n",
                r.iteration,
                r.residual,
                r.error_vs_truth.unwrap()
            ));
        }
        std::fs::write(out_dir.join(format!("seed_{seed}.csv")), csv).unwrap();
    }
    // semiconvergence: most seeds show an interior error minimum
    assert!(
        interior_minima >= 3,
        "only {interior_minima}/5 seeds show semiconvergence"
    );
    pass(
        "criterion 9 (noisy reconstruction)",
        format!(
            "discrepancy/best error ratios {:?} (max {:.2}); curves in {}",
            ratios
                .iter()
                .map(|r| (r * 100.0).round() / 100.0)
                .collect::<Vec<_>>(),
            ratios.iter().cloned().fold(0.0f64, f64::max),
            out_dir.display()
        ),
    );
}

#[test]
fn criterion_10_ill_posedness_grows_with_horizon() {
    let g = Grid::unit(2, 20).unwrap();
    let p = ModelParams::default();
    let bounds = AdmissibleBounds::from_params(&p);
    let basis = build_coarse_basis(g, 3).unwrap();
    let horizons = [0.1, 0.3, 0.6, 1.0];
    let dt = 2e-3;

    // (a) reconstruction error at a fixed iteration budget, 3-seed median
    let mut medians = Vec::new();
    for &t_final in &horizons {
        let tg = TimeGrid::new(t_final, (t_final / dt).round() as usize).unwrap();
        let mut errs = Vec::new();
        for seed in [11u64, 12, 13] {
            let phantom = make_phantom(
                g,
                &PhantomSpec {
                    kind: PhantomKind::GaussianBump,
                    seed,
                    interface_width: 0.06,
                },
                &p,
            )
            .unwrap();
            let truth = project_admissible_subspace(&phantom, &basis, &bounds, 200);
            let y = solution_operator(&truth, &p, tg, &ForwardOptions::dense()).unwrap();
            let cfg = ReconstructionConfig {
                step_size: StepSize::Auto,
                max_iterations: 20,
                noise_level: 0.0,
                stagnation_tol: 0.0,
                ..Default::default()
            };
            let lw = Landweber::new(&p, tg, cfg, bounds.clone())
                .with_subspace(&basis)
                .with_ground_truth(&truth);
            errs.push(lw.reconstruct(&y).unwrap().final_error.unwrap());
        }
        errs.sort_by(|a, b| a.partial_cmp(b).unwrap());
        medians.push(errs[1]);
    }
    for w in medians.windows(2) {
        assert!(
            w[1] > w[0],
            "fixed-budget error is not monotone in T: {medians:?}"
        );
    }

    // (b) measured log C_s grows superlinearly in T
    let study_cfg = StabilityStudyConfig {
        ensemble_size: 8,
        ensemble_seed: 21,
        n_pairs: 3,
        modes_per_axis: 3,
        random_probes: 4,
    };
    let gs = Grid::unit(2, 16).unwrap();
    let mut log_cs = Vec::new();
    let mut exponents = Vec::new();
    for &t_final in &horizons {
        let tg = TimeGrid::new(t_final, (t_final / dt).round() as usize).unwrap();
        let study = stability_study(gs, &p, tg, &study_cfg).unwrap();
        log_cs.push(study.report.log_c_s);
        exponents.push(study.report.chain_exponent);
    }
    // superlinear growth of log C_s: strictly increasing with strictly
    // increasing slopes. Slopes are compared in log scale; when log C_s
    // saturates the dominant-term exponent supplies the same comparison
    // (log C_s ~ e^chain_exponent there).
    for w in log_cs.windows(2) {
        assert!(w[1] > w[0], "log C_s not increasing: {log_cs:?}");
    }
    let log_slope = |i: usize| -> f64 {
        let dt_h = horizons[i] - horizons[i - 1];
        if log_cs[i].is_finite() && log_cs[i - 1].is_finite() {
            ((log_cs[i] - log_cs[i - 1]) / dt_h).ln()
        } else {
            exponents[i] - dt_h.ln()
        }
    };
    for i in 2..horizons.len() {
        assert!(
            log_slope(i) > log_slope(i - 1),
            "log C_s growth not superlinear: {log_cs:?} over {horizons:?}"
        );
    }
    let medians_str: Vec<String> = medians.iter().map(|e| format!("{e:.2e}")).collect();
    pass(
        "criterion 10 (ill-posedness trend)",
        format!("fixed-budget errors {medians_str:?} over T in {horizons:?}; log C_s {log_cs:.3?}"),
    );
}
