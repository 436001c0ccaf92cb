//! Averaged closed loop with its own static trigger.
//!
//! Between events the averaged gradient obeys
//! `G[k+1] = (1 - c) G[k] - c e[k]` with `c = epsilon a^2 H* K / 2`, and the
//! averaged parameter error obeys `theta[k+1] = (1 - c) theta[k] - epsilon K e[k]`.
//! The step ordering mirrors [`crate::escore::step`], so the error fed to
//! both recursions is the one left after a possible reset.

use crate::escore::{LoopSpec, MapSpec};
use crate::trigger::{self, TriggerSpec};

/// Search cap for [`min_inter_event_estimate`].
pub const ZENO_SEARCH_LIMIT: u64 = 1_000_000;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AvgState {
    pub k: u64,
    pub g_av: f64,
    pub theta_tilde_av: f64,
    pub held_g_av: f64,
    pub last_event_k: u64,
}

impl AvgState {
    /// Consistent seed: `G_av[0] = H* theta_av[0]`, with `k = 0` an event.
    pub fn seeded(map: &MapSpec, theta_tilde0: f64) -> Self {
        let g = map.h_star() * theta_tilde0;
        Self {
            k: 0,
            g_av: g,
            theta_tilde_av: theta_tilde0,
            held_g_av: g,
            last_event_k: 0,
        }
    }

    pub fn error(&self) -> f64 {
        trigger::measurement_error(self.held_g_av, self.g_av)
    }
}

/// Values observed at iteration `k` of the averaged loop.
///
/// `error` and `control` are the values applied in the update (after a
/// possible reset); `pre_reset_error` is what the trigger saw.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AvgRecord {
    pub k: u64,
    pub g_av: f64,
    pub theta_tilde_av: f64,
    pub pre_reset_error: f64,
    pub error: f64,
    pub control: f64,
    pub triggered: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AvgTrajectory {
    pub records: Vec<AvgRecord>,
    pub final_state: AvgState,
    /// Event instants, starting with `k = 0`.
    pub events: Vec<u64>,
}

impl AvgTrajectory {
    /// `G_av[0..=n]`, including the state after the last step.
    pub fn gradients(&self) -> Vec<f64> {
        self.records
            .iter()
            .map(|r| r.g_av)
            .chain(std::iter::once(self.final_state.g_av))
            .collect()
    }

    /// `theta_av[0..=n]`, including the state after the last step.
    pub fn theta_errors(&self) -> Vec<f64> {
        self.records
            .iter()
            .map(|r| r.theta_tilde_av)
            .chain(std::iter::once(self.final_state.theta_tilde_av))
            .collect()
    }

    pub fn min_gap(&self) -> Option<u64> {
        self.events.windows(2).map(|w| w[1] - w[0]).min()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ZenoEstimate {
    pub k_star: u64,
    pub epsilon_term: f64,
}

fn advance(map: &MapSpec, lp: &LoopSpec, trig: &TriggerSpec, state: &AvgState) -> (AvgState, AvgRecord) {
    let c = trigger::averaged_coupling(map, lp);
    let k = state.k;
    let pre_reset_error = state.error();

    let mut next = *state;
    let triggered = trigger::should_trigger(trig, state.g_av, pre_reset_error);
    if triggered {
        next.held_g_av = state.g_av;
        next.last_event_k = k;
    }
    let error = trigger::measurement_error(next.held_g_av, state.g_av);

    next.g_av = (1.0 - c) * state.g_av - c * error;
    next.theta_tilde_av = (1.0 - c) * state.theta_tilde_av - lp.epsilon() * lp.gain_k() * error;
    next.k = k + 1;

    let record = AvgRecord {
        k,
        g_av: state.g_av,
        theta_tilde_av: state.theta_tilde_av,
        pre_reset_error,
        error,
        control: -lp.gain_k() * next.held_g_av,
        triggered,
    };
    (next, record)
}

pub fn avg_step(map: &MapSpec, lp: &LoopSpec, trig: &TriggerSpec, state: &AvgState) -> AvgState {
    advance(map, lp, trig, state).0
}

pub fn avg_run(
    map: &MapSpec,
    lp: &LoopSpec,
    trig: &TriggerSpec,
    theta_tilde0: f64,
    n_iters: usize,
) -> AvgTrajectory {
    let mut state = AvgState::seeded(map, theta_tilde0);
    let mut records = Vec::with_capacity(n_iters);
    let mut events = vec![0];
    for _ in 0..n_iters {
        let (next, record) = advance(map, lp, trig, &state);
        if record.triggered {
            events.push(record.k);
        }
        records.push(record);
        state = next;
    }
    AvgTrajectory {
        records,
        final_state: state,
        events,
    }
}

/// `(G_av, e_av)` after `n` steps of a hold loaded with `g_at_event`.
pub fn closed_form_between_events(map: &MapSpec, lp: &LoopSpec, g_at_event: f64, n: u64) -> (f64, f64) {
    let c = trigger::averaged_coupling(map, lp);
    let n = n as f64;
    ((1.0 - n * c) * g_at_event, n * c * g_at_event)
}

/// Smallest `n >= 1` at which the error upper bound (scaled by `alpha`)
/// overtakes the gradient lower bound (scaled by `sqrt(sigma)`), each bound
/// widened by `epsilon_term`.
///
/// Returns `None` if no `n` up to [`ZENO_SEARCH_LIMIT`] qualifies, which can
/// happen when `alpha <= sqrt(sigma)` and the hold never crosses zero.
pub fn min_inter_event_estimate(
    map: &MapSpec,
    lp: &LoopSpec,
    trig: &TriggerSpec,
    g_at_event: f64,
    epsilon_term: f64,
) -> Option<ZenoEstimate> {
    assert!(epsilon_term >= 0.0, "epsilon_term must be non-negative");
    let c = trigger::averaged_coupling(map, lp);
    let root_sigma = trig.sigma().sqrt();
    (1..=ZENO_SEARCH_LIMIT)
        .find(|&n| {
            let n = n as f64;
            let error_bound = (n * c * g_at_event).abs() + epsilon_term;
            let gradient_bound = (((1.0 - n * c) * g_at_event).abs() - epsilon_term).abs();
            trig.alpha() * error_bound >= root_sigma * gradient_bound
        })
        .map(|k_star| ZenoEstimate { k_star, epsilon_term })
}
