//! Model coefficients and nonlinear reaction terms.
//!
//! The growth model couples three scalar fields: the tumour phase `phi`
//! (0 = host tissue, 1 = tumour), a generic nutrient `sigma`, and the tissue
//! PSA density `p`. Its nonlinear structure lives in three scalar functions:
//!
//! - the double-well potential `F(s) = M s^2 (1-s)^2`, whose minima at 0 and 1
//!   let the two tissue phases coexist,
//! - the interpolation function `h(s) = M s^2 (3-2s)`, with `h'(0) = h'(1) = 0`
//!   so that pure phases are equilibria,
//! - the tilting function `m(sigma)`, a bounded arctan ramp representing the
//!   nutrient-dependent net proliferation rate.
//!
//! The reaction term driving the phase equation is the phi-derivative of the
//! tilted potential `G(phi, sigma) = F(phi) - m(sigma) h(phi)`. When
//! `|m(sigma)| < M/3`, `G` keeps two local minima at 0 and 1; higher tilts
//! make one phase globally favourable.
//!
//! Everything here is pure scalar arithmetic and safe to call concurrently.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Parameter validation failure.
#[derive(Debug, Error)]
pub enum ModelError {
    #[error("parameter `{0}` must be finite, got {1}")]
    NonFinite(&'static str, f64),
    #[error("parameter `{0}` must be strictly positive, got {1}")]
    NonPositive(&'static str, f64),
}

/// Physical coefficients of the growth model.
///
/// Serialized as a flat JSON object whose keys are the ASCII names of the
/// usual symbols (`lambda`, `eta`, `D`, `gamma_h`, ..., `sigma_l`, `sigma_r`).
/// Derived differences (`gamma_ch`, `s_ch`, `alpha_ch`) are computed, never
/// stored.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelParams {
    /// Diffusivity of the tumour phase (length^2/time).
    #[serde(rename = "lambda")]
    pub lambda_phi: f64,
    /// Diffusivity of the nutrient.
    pub eta: f64,
    /// Diffusivity of tissue PSA.
    #[serde(rename = "D")]
    pub d_p: f64,
    /// Nutrient uptake rate in host tissue (1/time).
    pub gamma_h: f64,
    /// Nutrient uptake rate in tumour tissue (1/time).
    pub gamma_c: f64,
    /// Nutrient supply rate in host tissue (concentration/time).
    #[serde(rename = "S_h")]
    pub s_h: f64,
    /// Nutrient supply rate in tumour tissue (concentration/time).
    #[serde(rename = "S_c")]
    pub s_c: f64,
    /// PSA decay rate (1/time).
    pub gamma_p: f64,
    /// PSA production rate in host tissue.
    pub alpha_h: f64,
    /// PSA production rate in tumour tissue.
    pub alpha_c: f64,
    /// Energy scale of the double well and interpolation function.
    #[serde(rename = "M")]
    pub m_pot: f64,
    /// Overall strength of the tilting function.
    pub m_ref: f64,
    /// Proliferation index (upper arctan plateau is `m_ref * rho`).
    pub rho: f64,
    /// Apoptosis index (lower arctan plateau is `m_ref * A`); physically
    /// non-positive, so only a compliance warning is raised for any sign.
    #[serde(rename = "A")]
    pub a_apop: f64,
    /// Nutrient threshold where the tilt crosses its midpoint.
    pub sigma_l: f64,
    /// Nutrient scale of the arctan ramp.
    pub sigma_r: f64,
}

impl Default for ModelParams {
    /// Desk-scale defaults: unit square domain, O(1) reaction rates, small
    /// diffusivities, and a tilt range `m_ref * [A, rho] = [-0.125, 0.25]`
    /// that keeps the tilted potential a double well at every nutrient level.
    fn default() -> Self {
        Self {
            lambda_phi: 2.0e-3,
            eta: 1.0e-2,
            d_p: 1.0e-2,
            gamma_h: 1.0,
            gamma_c: 2.0,
            s_h: 1.0,
            s_c: 0.6,
            gamma_p: 1.0,
            alpha_h: 0.3,
            alpha_c: 1.5,
            m_pot: 1.0,
            m_ref: 0.25,
            rho: 1.0,
            a_apop: -0.5,
            sigma_l: 0.6,
            sigma_r: 0.25,
        }
    }
}

impl ModelParams {
    /// Difference of uptake rates, `gamma_c - gamma_h`.
    pub fn gamma_ch(&self) -> f64 {
        self.gamma_c - self.gamma_h
    }

    /// Difference of supply rates, `S_c - S_h`.
    pub fn s_ch(&self) -> f64 {
        self.s_c - self.s_h
    }

    /// Difference of PSA production rates, `alpha_c - alpha_h`.
    pub fn alpha_ch(&self) -> f64 {
        self.alpha_c - self.alpha_h
    }

    /// Hard validation: every field finite, and the constants the formulas
    /// divide by (`sigma_r`) or scale with (`m_ref`) strictly positive.
    ///
    /// Assumption compliance beyond that (all rates positive, `M > 0`,
    /// `rho, A > 0`) is deliberately *not* a hard error: the decoupled
    /// diagnostic regimes set several rates to zero on purpose. Use
    /// [`assumption_violations`](Self::assumption_violations) to inspect it.
    pub fn validate(&self) -> Result<(), ModelError> {
        for (name, v) in self.named_fields() {
            if !v.is_finite() {
                return Err(ModelError::NonFinite(name, v));
            }
        }
        if self.sigma_r <= 0.0 {
            return Err(ModelError::NonPositive("sigma_r", self.sigma_r));
        }
        if self.m_ref <= 0.0 {
            return Err(ModelError::NonPositive("m_ref", self.m_ref));
        }
        Ok(())
    }

    /// Lists the standing-assumption conditions this parameter set violates.
    /// Empty means fully compliant. Violations are legitimate in diagnostic
    /// regimes (e.g. `M = 0` switches the reaction off) and are reported as
    /// warnings by the solvers, not rejected.
    pub fn assumption_violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        let positive = [
            ("lambda", self.lambda_phi),
            ("eta", self.eta),
            ("gamma_h", self.gamma_h),
            ("gamma_c", self.gamma_c),
            ("S_h", self.s_h),
            ("S_c", self.s_c),
            ("D", self.d_p),
            ("gamma_p", self.gamma_p),
            ("alpha_h", self.alpha_h),
            ("alpha_c", self.alpha_c),
            ("M", self.m_pot),
            ("rho", self.rho),
            ("A", self.a_apop),
            ("sigma_l", self.sigma_l),
        ];
        for (name, v) in positive {
            if v <= 0.0 {
                out.push(format!("{name} = {v} is not strictly positive"));
            }
        }
        out
    }

    fn named_fields(&self) -> [(&'static str, f64); 16] {
        [
            ("lambda", self.lambda_phi),
            ("eta", self.eta),
            ("D", self.d_p),
            ("gamma_h", self.gamma_h),
            ("gamma_c", self.gamma_c),
            ("S_h", self.s_h),
            ("S_c", self.s_c),
            ("gamma_p", self.gamma_p),
            ("alpha_h", self.alpha_h),
            ("alpha_c", self.alpha_c),
            ("M", self.m_pot),
            ("m_ref", self.m_ref),
            ("rho", self.rho),
            ("A", self.a_apop),
            ("sigma_l", self.sigma_l),
            ("sigma_r", self.sigma_r),
        ]
    }

    /// Double-well potential `F(s) = M s^2 (1-s)^2`.
    #[inline]
    pub fn double_well(&self, s: f64) -> f64 {
        assert!(s.is_finite(), "double_well: non-finite input {s}");
        let t = 1.0 - s;
        self.m_pot * s * s * t * t
    }

    /// `F'(s) = 2 M s (1-s) (1-2s)`.
    #[inline]
    pub fn double_well_d1(&self, s: f64) -> f64 {
        assert!(s.is_finite(), "double_well_d1: non-finite input {s}");
        2.0 * self.m_pot * s * (1.0 - s) * (1.0 - 2.0 * s)
    }

    /// `F''(s) = M (12 s^2 - 12 s + 2)`.
    #[inline]
    pub fn double_well_d2(&self, s: f64) -> f64 {
        assert!(s.is_finite(), "double_well_d2: non-finite input {s}");
        self.m_pot * (12.0 * s * s - 12.0 * s + 2.0)
    }

    /// Interpolation function `h(s) = M s^2 (3 - 2s)`.
    #[inline]
    pub fn interp(&self, s: f64) -> f64 {
        assert!(s.is_finite(), "interp: non-finite input {s}");
        self.m_pot * s * s * (3.0 - 2.0 * s)
    }

    /// `h'(s) = 6 M s (1-s)`; vanishes at both pure phases.
    #[inline]
    pub fn interp_d1(&self, s: f64) -> f64 {
        assert!(s.is_finite(), "interp_d1: non-finite input {s}");
        6.0 * self.m_pot * s * (1.0 - s)
    }

    /// `h''(s) = 6 M (1 - 2s)`.
    #[inline]
    pub fn interp_d2(&self, s: f64) -> f64 {
        assert!(s.is_finite(), "interp_d2: non-finite input {s}");
        6.0 * self.m_pot * (1.0 - 2.0 * s)
    }

    /// Tilting function
    /// `m(s) = m_ref ((rho + A)/2 + (rho - A)/pi * atan((s - sigma_l)/sigma_r))`.
    ///
    /// Bounded between `m_ref * A` and `m_ref * rho`, with the `1/pi`
    /// normalisation making the arctan limits land exactly on those plateaus.
    #[inline]
    pub fn tilting(&self, s: f64) -> f64 {
        assert!(s.is_finite(), "tilting: non-finite input {s}");
        let mid = 0.5 * (self.rho + self.a_apop);
        let amp = (self.rho - self.a_apop) / std::f64::consts::PI;
        self.m_ref * (mid + amp * ((s - self.sigma_l) / self.sigma_r).atan())
    }

    /// `m'(s) = m_ref (rho - A) / (pi sigma_r (1 + ((s - sigma_l)/sigma_r)^2))`.
    #[inline]
    pub fn tilting_d1(&self, s: f64) -> f64 {
        assert!(s.is_finite(), "tilting_d1: non-finite input {s}");
        let u = (s - self.sigma_l) / self.sigma_r;
        let amp = (self.rho - self.a_apop) / std::f64::consts::PI;
        self.m_ref * amp / (self.sigma_r * (1.0 + u * u))
    }

    /// `m''(s) = -2 m_ref (rho - A) u / (pi sigma_r^2 (1 + u^2)^2)` with
    /// `u = (s - sigma_l)/sigma_r`.
    #[inline]
    pub fn tilting_d2(&self, s: f64) -> f64 {
        assert!(s.is_finite(), "tilting_d2: non-finite input {s}");
        let u = (s - self.sigma_l) / self.sigma_r;
        let amp = (self.rho - self.a_apop) / std::f64::consts::PI;
        let d = 1.0 + u * u;
        -2.0 * self.m_ref * amp * u / (self.sigma_r * self.sigma_r * d * d)
    }

    /// Tilted potential `G(phi, sigma) = F(phi) - m(sigma) h(phi)`.
    #[inline]
    pub fn tilted_potential(&self, phi: f64, sigma: f64) -> f64 {
        self.double_well(phi) - self.tilting(sigma) * self.interp(phi)
    }

    /// Reaction term of the phase equation,
    /// `dG/dphi = F'(phi) - m(sigma) h'(phi)`.
    #[inline]
    pub fn reaction(&self, phi: f64, sigma: f64) -> f64 {
        self.double_well_d1(phi) - self.tilting(sigma) * self.interp_d1(phi)
    }

    /// Whether the tilted potential keeps two local minima at 0 and 1 at this
    /// nutrient level, i.e. `|m(sigma)/M| < 1/3` (strict).
    #[inline]
    pub fn is_double_well(&self, sigma: f64) -> bool {
        3.0 * self.tilting(sigma).abs() < self.m_pot
    }
}
