//! Verification oracles and report-producing diagnostics.
//!
//! Nothing in here fails loudly. Every check returns a report that records
//! what was checked and the first place it broke, so a run that violates a
//! bound can still be documented end to end.

use crate::average::{self, AvgTrajectory};
use crate::escore::{self, LoopSpec, MapSpec, Trajectory};
use crate::trigger::{self, TriggerSpec};

/// Absolute slack granted to the Lyapunov and envelope inequalities.
pub const CHECK_SLACK: f64 = 1e-12;

/// A triggering instant and the values latched there.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Event {
    pub index: usize,
    pub k: u64,
    pub gradient: f64,
    pub control: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EventLog {
    pub events: Vec<Event>,
    pub n_iters: usize,
    pub epsilon: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GapStats {
    pub mean_gap_iters: f64,
    pub mean_gap_seconds: f64,
    pub min_gap_iters: u64,
    pub max_gap_iters: u64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EventStats {
    pub count: usize,
    /// Absent when fewer than two events occurred.
    pub gaps: Option<GapStats>,
    /// Horizon length in seconds divided by the number of events.
    pub horizon_seconds_per_event: f64,
}

/// Four-term decomposition of the demodulated gradient.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExpansionTerms {
    /// `-H* cos(2 omega epsilon k)`.
    pub delta_h: f64,
    /// Dither-only part, independent of the parameter error.
    pub delta_k: f64,
    pub linear_term: f64,
    pub quadratic_term: f64,
}

impl ExpansionTerms {
    pub fn total(&self) -> f64 {
        self.linear_term + self.quadratic_term + self.delta_k
    }
}

/// Exact trigonometric expansion of `a sin(wek) Q(theta* + theta_tilde + a sin(wek))`.
pub fn gradient_expansion(map: &MapSpec, lp: &LoopSpec, k: u64, theta_tilde: f64) -> ExpansionTerms {
    let a = lp.amplitude_a();
    let h = map.h_star();
    let phase = lp.phase(k);
    let delta_h = -h * (2.0 * phase).cos();
    let delta_k = (a * map.q_star() + 3.0 * a * a * a * h / 8.0) * phase.sin()
        - a * a * a * h / 8.0 * (3.0 * phase).sin();
    ExpansionTerms {
        delta_h,
        delta_k,
        linear_term: a * a / 2.0 * (h + delta_h) * theta_tilde,
        quadratic_term: a * h / 2.0 * phase.sin() * theta_tilde * theta_tilde,
    }
}

/// The expansion with the quadratic term dropped.
pub fn truncated_gradient(map: &MapSpec, lp: &LoopSpec, k: u64, theta_tilde: f64) -> f64 {
    let terms = gradient_expansion(map, lp, k, theta_tilde);
    terms.linear_term + terms.delta_k
}

/// Largest `|G[k] - expansion total|` over a true-loop trajectory.
pub fn expansion_residual(traj: &Trajectory) -> f64 {
    traj.records
        .iter()
        .map(|r| {
            let theta_tilde = r.theta_hat - traj.map.theta_star();
            let oracle = gradient_expansion(&traj.map, &traj.lp, r.k, theta_tilde).total();
            (r.gradient - oracle).abs()
        })
        .fold(0.0, f64::max)
}

pub fn lyapunov_sequence(g_av: &[f64]) -> Vec<f64> {
    g_av.iter().map(|g| g * g).collect()
}

/// Per-step Lyapunov contraction `1 - (1 - rho0^2)(1 - sigma)/2`.
pub fn decay_rate(map: &MapSpec, lp: &LoopSpec, trig: &TriggerSpec) -> f64 {
    let rho0 = trigger::validate_assumption(map, lp, trig).rho0;
    1.0 - (1.0 - rho0 * rho0) * (1.0 - trig.sigma()) / 2.0
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecayViolation {
    pub k: usize,
    pub v: f64,
    pub v_next: f64,
    pub bound: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecayReport {
    pub rho: f64,
    pub steps_checked: usize,
    pub violations: usize,
    pub first_violation: Option<DecayViolation>,
    /// Largest `V[k+1] / V[k]` over steps with `V[k] > 0`.
    pub max_ratio: Option<f64>,
}

impl DecayReport {
    pub fn passed(&self) -> bool {
        self.violations == 0
    }
}

/// `value <= bound`, false if either is NaN.
fn within(value: f64, bound: f64) -> bool {
    matches!(value.partial_cmp(&bound), Some(std::cmp::Ordering::Less | std::cmp::Ordering::Equal))
}

/// Checks `V[k+1] <= rho V[k] + CHECK_SLACK` at every step.
pub fn check_decay(v: &[f64], map: &MapSpec, lp: &LoopSpec, trig: &TriggerSpec) -> DecayReport {
    let rho = decay_rate(map, lp, trig);
    let mut report = DecayReport {
        rho,
        steps_checked: v.len().saturating_sub(1),
        violations: 0,
        first_violation: None,
        max_ratio: None,
    };
    for (k, w) in v.windows(2).enumerate() {
        let bound = rho * w[0] + CHECK_SLACK;
        if !within(w[1], bound) {
            report.violations += 1;
            report.first_violation.get_or_insert(DecayViolation {
                k,
                v: w[0],
                v_next: w[1],
                bound,
            });
        }
        if w[0] > 0.0 {
            let ratio = w[1] / w[0];
            report.max_ratio = Some(report.max_ratio.map_or(ratio, |m: f64| m.max(ratio)));
        }
    }
    report
}

/// Outcome of one `|x[k]| <= bound[k]` family.
#[derive(Debug, Clone, PartialEq)]
pub struct EnvelopeCheck {
    pub name: &'static str,
    pub checked: usize,
    pub violations: usize,
    pub first_violation: Option<usize>,
    /// Largest `|x[k]| - bound[k]`; negative means every point had margin.
    pub max_excess: f64,
}

impl EnvelopeCheck {
    fn from_pairs(name: &'static str, pairs: impl Iterator<Item = (f64, f64)>) -> Self {
        let mut check = Self {
            name,
            checked: 0,
            violations: 0,
            first_violation: None,
            max_excess: f64::NEG_INFINITY,
        };
        for (k, (value, bound)) in pairs.enumerate() {
            check.checked += 1;
            let excess = value - bound;
            if !within(value, bound) {
                check.violations += 1;
                check.first_violation.get_or_insert(k);
            }
            if excess > check.max_excess || excess.is_nan() {
                check.max_excess = excess;
            }
        }
        check
    }

    pub fn passed(&self) -> bool {
        self.violations == 0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnvelopeReport {
    pub rho: f64,
    pub offset_constant: f64,
    pub checks: Vec<EnvelopeCheck>,
}

impl EnvelopeReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(EnvelopeCheck::passed)
    }

    pub fn check(&self, name: &str) -> Option<&EnvelopeCheck> {
        self.checks.iter().find(|c| c.name == name)
    }
}

/// `rho^(k/2) x0` for `k = 0..n`.
pub fn envelope_sequence(rho: f64, x0: f64, n: usize) -> Vec<f64> {
    let root = rho.sqrt();
    (0..n).map(|k| root.powi(k as i32) * x0.abs()).collect()
}

/// Practical-stability envelopes of the true loop, widened by a
/// caller-supplied offset:
///
/// - `|theta[k] - theta*| <= rho^(k/2) |theta[0] - theta*| + offset`
/// - `|y[k] - Q*| <= 2 rho^k |y[0] - Q*| + offset^2`
pub fn true_loop_envelopes(traj: &Trajectory, trig: &TriggerSpec, offset_constant: f64) -> EnvelopeReport {
    let (map, lp) = (&traj.map, &traj.lp);
    let rho = decay_rate(map, lp, trig);
    let Some(first) = traj.records.first() else {
        return EnvelopeReport { rho, offset_constant, checks: Vec::new() };
    };
    let theta0 = (first.theta - map.theta_star()).abs();
    let y0 = (first.y - map.q_star()).abs();

    let theta = EnvelopeCheck::from_pairs(
        "theta",
        traj.records.iter().map(|r| {
            let bound = rho.powf(r.k as f64 / 2.0) * theta0 + offset_constant;
            ((r.theta - map.theta_star()).abs(), bound)
        }),
    );
    let output = EnvelopeCheck::from_pairs(
        "output",
        traj.records.iter().map(|r| {
            let bound = 2.0 * rho.powf(r.k as f64) * y0 + offset_constant * offset_constant;
            ((r.y - map.q_star()).abs(), bound)
        }),
    );
    EnvelopeReport { rho, offset_constant, checks: vec![theta, output] }
}

/// Exact envelopes of the averaged loop:
///
/// - `gradient`: `|G_av[k]| <= rho^(k/2) |G_av[0]|`
/// - `theta`: `|theta_av[k]| <= rho^(k/2) |theta_av[0]|`
/// - `proportionality`: `| |theta_av[k]| - |G_av[k]| / |H*| | <= slack`
///
/// each with [`CHECK_SLACK`] absolute slack.
pub fn average_envelopes(
    avg: &AvgTrajectory,
    map: &MapSpec,
    lp: &LoopSpec,
    trig: &TriggerSpec,
) -> EnvelopeReport {
    let rho = decay_rate(map, lp, trig);
    let g = avg.gradients();
    let t = avg.theta_errors();
    let g_env = envelope_sequence(rho, g[0], g.len());
    let t_env = envelope_sequence(rho, t[0], t.len());
    let h = map.h_star().abs();

    let gradient = EnvelopeCheck::from_pairs(
        "gradient",
        g.iter().zip(&g_env).map(|(x, b)| (x.abs(), b + CHECK_SLACK)),
    );
    let theta = EnvelopeCheck::from_pairs(
        "theta",
        t.iter().zip(&t_env).map(|(x, b)| (x.abs(), b + CHECK_SLACK)),
    );
    let proportionality = EnvelopeCheck::from_pairs(
        "proportionality",
        g.iter().zip(&t).map(|(g, t)| ((t.abs() - g.abs() / h).abs(), CHECK_SLACK)),
    );
    EnvelopeReport { rho, offset_constant: 0.0, checks: vec![gradient, theta, proportionality] }
}

/// Largest deviation between the averaged recursion and the closed-form
/// inter-event iteration, relative to the gradient latched at each event.
///
/// Each stretch `[k_l, k_{l+1}]` compares `G_av` at every point including the
/// next event instant, and the applied error at every point before it.
pub fn closed_form_residual(avg: &AvgTrajectory, map: &MapSpec, lp: &LoopSpec) -> f64 {
    let g = avg.gradients();
    let horizon = avg.records.len() as u64;
    let mut worst = 0.0f64;
    for (l, &start) in avg.events.iter().enumerate() {
        let end = avg.events.get(l + 1).copied().unwrap_or(horizon);
        let g_event = g[start as usize];
        let scale = g_event.abs();
        if scale == 0.0 {
            // a zero latch keeps the loop at rest
            worst = worst.max(g[start as usize..=end as usize].iter().fold(0.0, |m, x| m.max(x.abs())));
            continue;
        }
        for k in start..=end {
            let (g_cf, e_cf) = average::closed_form_between_events(map, lp, g_event, k - start);
            worst = worst.max((g[k as usize] - g_cf).abs() / scale);
            if k < end {
                worst = worst.max((avg.records[k as usize].error - e_cf).abs() / scale);
            }
        }
    }
    worst
}

pub fn event_statistics(log: &EventLog) -> EventStats {
    let gaps: Vec<u64> = log.events.windows(2).map(|w| w[1].k - w[0].k).collect();
    let gap_stats = (!gaps.is_empty()).then(|| {
        let mean = gaps.iter().sum::<u64>() as f64 / gaps.len() as f64;
        GapStats {
            mean_gap_iters: mean,
            mean_gap_seconds: mean * log.epsilon,
            min_gap_iters: *gaps.iter().min().unwrap(),
            max_gap_iters: *gaps.iter().max().unwrap(),
        }
    });
    let count = log.events.len();
    EventStats {
        count,
        gaps: gap_stats,
        horizon_seconds_per_event: if count == 0 {
            f64::NAN
        } else {
            log.n_iters as f64 * log.epsilon / count as f64
        },
    }
}

/// Checks the structural event invariants of a true-loop trajectory and
/// returns the first broken one, if any:
///
/// - the applied control is constant between consecutive events;
/// - at every fired instant the pre-reset error satisfied the firing rule
///   and the error recomputed against the refreshed hold is exactly zero;
/// - at every other instant `sqrt(sigma)|G| >= alpha|e|`.
pub fn event_invariant_violation(traj: &Trajectory, log: &EventLog) -> Option<String> {
    let trig = &traj.trig;
    let root_sigma = trig.sigma().sqrt();
    let mut held = log.events.first().map(|e| e.gradient)?;
    let mut control = None;
    for r in &traj.records {
        if r.triggered {
            if !trigger::should_trigger(trig, r.gradient, r.error) {
                return Some(format!("k={}: fired without a violated condition", r.k));
            }
            if r.error != held - r.gradient {
                return Some(format!("k={}: recorded error is not the pre-reset error", r.k));
            }
            held = r.gradient;
            if trigger::measurement_error(held, r.gradient) != 0.0 {
                return Some(format!("k={}: error not reset at event", r.k));
            }
            control = Some(r.control);
        } else {
            if root_sigma * r.gradient.abs() - trig.alpha() * r.error.abs() < 0.0 {
                return Some(format!("k={}: condition violated without an event", r.k));
            }
            match control {
                Some(u) if u.to_bits() != r.control.to_bits() => {
                    return Some(format!("k={}: control changed between events", r.k));
                }
                _ => control = Some(r.control),
            }
        }
    }
    let fired: Vec<u64> = traj.records.iter().filter(|r| r.triggered).map(|r| r.k).collect();
    let logged: Vec<u64> = log.events.iter().skip(1).map(|e| e.k).collect();
    if fired != logged {
        return Some("event log disagrees with fired records".to_string());
    }
    None
}

/// Demodulated gradient at parameter error `theta_tilde`, computed through
/// the true-loop primitives rather than the expansion.
pub fn demodulated_gradient(map: &MapSpec, lp: &LoopSpec, k: u64, theta_tilde: f64) -> f64 {
    let theta = map.theta_star() + theta_tilde + escore::dither(lp, k);
    escore::demodulate(lp, k, escore::eval_map(map, theta))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn reference() -> (MapSpec, LoopSpec, TriggerSpec) {
        (
            MapSpec::new(2.0, -0.7, 3.0).unwrap(),
            LoopSpec::new(0.1, 7.0, 0.18, -240.0).unwrap(),
            TriggerSpec::new(0.7, 0.74).unwrap(),
        )
    }

    fn log_at(ks: &[u64], eps: f64, n: usize) -> EventLog {
        EventLog {
            events: ks
                .iter()
                .enumerate()
                .map(|(index, &k)| Event { index, k, gradient: 0.0, control: 0.0 })
                .collect(),
            n_iters: n,
            epsilon: eps,
        }
    }

    #[test]
    fn expansion_at_zero_phase() {
        let (map, lp, _) = reference();
        let t = gradient_expansion(&map, &lp, 0, -2.5);
        assert_eq!(t.linear_term, 0.0);
        assert_eq!(t.quadratic_term, 0.0);
        assert_eq!(t.delta_k, 0.0);
        assert_eq!(t.total(), demodulated_gradient(&map, &lp, 0, -2.5));
    }

    #[test]
    fn expansion_zero_error_is_dither_term() {
        let (map, lp, _) = reference();
        for k in 0..20 {
            let t = gradient_expansion(&map, &lp, k, 0.0);
            assert_eq!(t.total(), t.delta_k);
            assert!((t.total() - demodulated_gradient(&map, &lp, k, 0.0)).abs() < 1e-15);
        }
    }

    #[test]
    fn expansion_matches_demodulation_reference_point() {
        let (map, lp, _) = reference();
        let direct = 0.1 * (1.26f64).sin() * escore::eval_map(&map, 0.5 + escore::dither(&lp, 1));
        let total = gradient_expansion(&map, &lp, 1, -2.5).total();
        assert!((total - direct).abs() < 1e-15);
    }

    #[test]
    fn truncation_residual_value() {
        let (map, lp, _) = reference();
        let full = gradient_expansion(&map, &lp, 1, 0.1).total();
        let residual = full - truncated_gradient(&map, &lp, 1, 0.1);
        assert!((residual + 3.332_316_195_566_805e-4).abs() < 1e-15);
        assert_eq!(truncated_gradient(&map, &lp, 3, 0.0), gradient_expansion(&map, &lp, 3, 0.0).total());
        assert_eq!(truncated_gradient(&map, &lp, 0, 4.0), gradient_expansion(&map, &lp, 0, 4.0).total());
    }

    #[test]
    fn lyapunov_values() {
        assert_eq!(lyapunov_sequence(&[0.0, 0.0]), vec![0.0, 0.0]);
        assert_eq!(lyapunov_sequence(&[2.0]), vec![4.0]);
        assert_eq!(lyapunov_sequence(&[-3.0]), vec![9.0]);
    }

    #[test]
    fn decay_examples() {
        let (map, lp, trig) = reference();
        let zeros = check_decay(&[0.0; 10], &map, &lp, &trig);
        assert!(zeros.passed());
        assert!((zeros.rho - 0.958_069_216).abs() < 1e-12);

        let flat = check_decay(&[1.0, 1.0], &map, &lp, &trig);
        assert!(!flat.passed());
        assert_eq!(flat.first_violation.unwrap().k, 0);

        let avg = average::avg_run(&map, &lp, &trig, -2.5, 1000);
        assert!(check_decay(&lyapunov_sequence(&avg.gradients()), &map, &lp, &trig).passed());
    }

    #[test]
    fn decay_rate_uses_assumption_rho0() {
        let (map, lp, trig) = reference();
        let rho0 = trigger::validate_assumption(&map, &lp, &trig).rho0;
        assert_eq!(decay_rate(&map, &lp, &trig), 1.0 - (1.0 - rho0 * rho0) * (1.0 - trig.sigma()) / 2.0);
    }

    #[test]
    fn average_gradient_envelope_holds() {
        let (map, lp, trig) = reference();
        let avg = average::avg_run(&map, &lp, &trig, -2.5, 1000);
        let report = average_envelopes(&avg, &map, &lp, &trig);
        assert!(report.check("gradient").unwrap().passed());
        assert_eq!(report.check("gradient").unwrap().checked, 1001);
    }

    #[test]
    fn envelope_sequence_non_increasing() {
        let env = envelope_sequence(0.958, 3.0, 200);
        assert_eq!(env[0], 3.0);
        assert!(env.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn stats_examples() {
        let stats = event_statistics(&log_at(&[0, 100, 300], 0.18, 1000));
        assert_eq!(stats.count, 3);
        let gaps = stats.gaps.unwrap();
        assert_eq!(gaps.mean_gap_iters, 150.0);
        assert!((gaps.mean_gap_seconds - 27.0).abs() < 1e-12);
        assert_eq!((gaps.min_gap_iters, gaps.max_gap_iters), (100, 200));
        assert!((stats.horizon_seconds_per_event - 60.0).abs() < 1e-12);

        let single = event_statistics(&log_at(&[0], 0.18, 10));
        assert_eq!(single.count, 1);
        assert_eq!(single.gaps, None);
    }

    #[test]
    fn nineteen_events_over_the_horizon() {
        // 1000 iterations of 0.18 s spread over 19 updates
        let ks: Vec<u64> = (0..19).map(|i| i * 52).collect();
        let stats = event_statistics(&log_at(&ks, 0.18, 1000));
        assert!((stats.horizon_seconds_per_event - 9.473_684_210_526_315).abs() < 1e-12);
    }

    #[test]
    fn closed_form_residual_small_on_reference_run() {
        let (map, lp, trig) = reference();
        let avg = average::avg_run(&map, &lp, &trig, -2.5, 1000);
        assert!(closed_form_residual(&avg, &map, &lp) <= 1e-12);
    }

    proptest! {
        #[test]
        fn expansion_exact(k in 0u64..=10_000, theta_tilde in -10f64..10.0) {
            let (map, lp, _) = reference();
            let g = demodulated_gradient(&map, &lp, k, theta_tilde);
            let total = gradient_expansion(&map, &lp, k, theta_tilde).total();
            prop_assert!((g - total).abs() <= 1e-12 * g.abs().max(1.0));
        }

        #[test]
        fn truncation_residual_exact(k in 0u64..=10_000, theta_tilde in -10f64..10.0) {
            let (map, lp, _) = reference();
            let full = gradient_expansion(&map, &lp, k, theta_tilde).total();
            let truncated = truncated_gradient(&map, &lp, k, theta_tilde);
            let quad = 0.1 * -0.7 / 2.0 * lp.phase(k).sin() * theta_tilde * theta_tilde;
            prop_assert!((full - truncated - quad).abs() <= 1e-14);
        }
    }
}
