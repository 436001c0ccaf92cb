//! Static event-triggering condition and tuning diagnostics.

use crate::error::{ensure, SpecError};
use crate::escore::{LoopSpec, MapSpec};

/// Parameters of the static triggering rule
/// `sqrt(sigma) |G| - alpha |e| < 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TriggerSpec {
    sigma: f64,
    alpha: f64,
}

impl TriggerSpec {
    pub fn new(sigma: f64, alpha: f64) -> Result<Self, SpecError> {
        ensure(sigma > 0.0 && sigma < 1.0, "trigger.sigma", "lie in (0,1)", sigma)?;
        ensure(alpha.is_finite() && alpha > 0.0, "trigger.alpha", "be positive", alpha)?;
        Ok(Self { sigma, alpha })
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }
}

/// Tuning diagnostics for a (map, loop, trigger) triple.
///
/// Violations are reported, never raised: a simulation may still be run
/// with a configuration that fails these checks.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AssumptionReport {
    /// Stability factor `1 - epsilon a^2 H* K / 2`.
    pub rho0: f64,
    pub rho0_in_unit_interval: bool,
    /// `sign(K) == sign(H*)`.
    pub sign_match: bool,
    /// Lower bound on `alpha`; `None` when `|rho0| >= 1` makes it undefined.
    pub alpha_min: Option<f64>,
    pub alpha: f64,
    pub alpha_satisfies: bool,
}

impl AssumptionReport {
    pub fn all_satisfied(&self) -> bool {
        self.rho0_in_unit_interval && self.sign_match && self.alpha_satisfies
    }
}

/// `epsilon a^2 H* K / 2`, the per-step decrement of the averaged gradient
/// under a freshly refreshed hold.
pub fn averaged_coupling(map: &MapSpec, lp: &LoopSpec) -> f64 {
    let a = lp.amplitude_a();
    lp.epsilon() * a * a * map.h_star() * lp.gain_k() / 2.0
}

pub fn stability_factor(map: &MapSpec, lp: &LoopSpec) -> f64 {
    1.0 - averaged_coupling(map, lp)
}

/// `e = G[k_l] - G[k]`.
pub fn measurement_error(held_gradient: f64, gradient: f64) -> f64 {
    held_gradient - gradient
}

/// Fires on strict inequality only; a tie does not trigger.
pub fn should_trigger(trig: &TriggerSpec, gradient: f64, error: f64) -> bool {
    trig.sigma.sqrt() * gradient.abs() - trig.alpha * error.abs() < 0.0
}

pub fn validate_assumption(map: &MapSpec, lp: &LoopSpec, trig: &TriggerSpec) -> AssumptionReport {
    let rho0 = stability_factor(map, lp);
    let a = lp.amplitude_a();
    let denom = 1.0 - rho0 * rho0;
    let alpha_min = (denom > 0.0).then(|| {
        let scale = lp.epsilon() * a * a * map.h_star().abs() * lp.gain_k().abs()
            / std::f64::consts::SQRT_2;
        scale * (1.0 + 7.0 * rho0 * rho0).sqrt() / denom
    });
    AssumptionReport {
        rho0,
        rho0_in_unit_interval: rho0.abs() > 0.0 && rho0.abs() < 1.0,
        sign_match: lp.gain_k().signum() == map.h_star().signum(),
        alpha_min,
        alpha: trig.alpha,
        alpha_satisfies: alpha_min.is_some_and(|m| trig.alpha > m),
    }
}
