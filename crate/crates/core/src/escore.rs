//! The true (non-averaged) closed loop.
//!
//! One iteration measures the map at the dithered input, demodulates the
//! output into a gradient estimate, lets the trigger decide whether the held
//! gradient is refreshed, applies the held control and integrates.

use std::f64::consts::TAU;

use crate::analysis::{Event, EventLog};
use crate::error::{ensure, SpecError};
use crate::trigger::{self, TriggerSpec};

/// Parameters of the unknown quadratic map `Q* + (H*/2)(theta - theta*)^2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MapSpec {
    q_star: f64,
    h_star: f64,
    theta_star: f64,
}

impl MapSpec {
    pub fn new(q_star: f64, h_star: f64, theta_star: f64) -> Result<Self, SpecError> {
        ensure(q_star.is_finite(), "map.q_star", "be finite", q_star)?;
        ensure(
            h_star.is_finite() && h_star != 0.0,
            "map.h_star",
            "be finite and nonzero",
            h_star,
        )?;
        ensure(theta_star.is_finite(), "map.theta_star", "be finite", theta_star)?;
        Ok(Self { q_star, h_star, theta_star })
    }

    pub fn q_star(&self) -> f64 {
        self.q_star
    }

    pub fn h_star(&self) -> f64 {
        self.h_star
    }

    pub fn theta_star(&self) -> f64 {
        self.theta_star
    }
}

/// What the controller knows: dither amplitude and frequency, sampling step
/// and feedback gain.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LoopSpec {
    amplitude_a: f64,
    omega: f64,
    epsilon: f64,
    gain_k: f64,
}

impl LoopSpec {
    pub fn new(amplitude_a: f64, omega: f64, epsilon: f64, gain_k: f64) -> Result<Self, SpecError> {
        ensure(
            amplitude_a.is_finite() && amplitude_a > 0.0,
            "loop.amplitude_a",
            "be positive",
            amplitude_a,
        )?;
        ensure(omega.is_finite() && omega > 0.0, "loop.omega", "be positive", omega)?;
        ensure(
            epsilon.is_finite() && epsilon > 0.0,
            "loop.epsilon",
            "be positive",
            epsilon,
        )?;
        ensure(
            gain_k.is_finite() && gain_k != 0.0,
            "loop.gain_k",
            "be finite and nonzero",
            gain_k,
        )?;
        Ok(Self { amplitude_a, omega, epsilon, gain_k })
    }

    pub fn amplitude_a(&self) -> f64 {
        self.amplitude_a
    }

    pub fn omega(&self) -> f64 {
        self.omega
    }

    /// Sampling step in seconds; also the integrator step.
    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn gain_k(&self) -> f64 {
        self.gain_k
    }

    /// Dither period `2 pi / omega`, in seconds.
    pub fn period(&self) -> f64 {
        TAU / self.omega
    }

    /// Dither phase `omega * epsilon * k` in radians.
    pub fn phase(&self, k: u64) -> f64 {
        self.omega * self.epsilon * k as f64
    }
}

/// Closed-loop state at the start of iteration `k`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimState {
    pub k: u64,
    pub theta_hat: f64,
    pub held_gradient: f64,
    pub held_control: f64,
    pub last_event_k: u64,
}

impl SimState {
    /// State at `k = 0`, which is a triggering instant: the hold is loaded
    /// with the gradient estimate measured at `theta_hat0`.
    pub fn initial(map: &MapSpec, lp: &LoopSpec, theta_hat0: f64) -> Self {
        let theta = theta_hat0 + dither(lp, 0);
        let gradient = demodulate(lp, 0, eval_map(map, theta));
        Self {
            k: 0,
            theta_hat: theta_hat0,
            held_gradient: gradient,
            held_control: -lp.gain_k * gradient,
            last_event_k: 0,
        }
    }
}

/// Everything observed during one iteration.
///
/// `error` is the measurement error before a possible reset, and `triggered`
/// is true only when the triggering condition fired at this `k`. The initial
/// instant `k = 0` is an event by definition but never fires.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepRecord {
    pub k: u64,
    pub theta_hat: f64,
    pub theta: f64,
    pub y: f64,
    pub gradient: f64,
    pub error: f64,
    pub control: f64,
    pub triggered: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub map: MapSpec,
    pub lp: LoopSpec,
    pub trig: TriggerSpec,
    pub records: Vec<StepRecord>,
    /// State after the last recorded step.
    pub final_state: SimState,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }
}

pub fn eval_map(map: &MapSpec, theta: f64) -> f64 {
    let d = theta - map.theta_star;
    map.q_star + 0.5 * map.h_star * d * d
}

pub fn dither(lp: &LoopSpec, k: u64) -> f64 {
    lp.amplitude_a * lp.phase(k).sin()
}

/// Gradient estimate `a sin(omega epsilon k) y`.
pub fn demodulate(lp: &LoopSpec, k: u64, y: f64) -> f64 {
    dither(lp, k) * y
}

/// Forward-Euler integrator `theta_hat + epsilon u`.
pub fn integrate(lp: &LoopSpec, theta_hat: f64, u: f64) -> f64 {
    theta_hat + lp.epsilon * u
}

/// One iteration: measure, demodulate, check trigger, maybe refresh the
/// hold, apply the held control, integrate.
pub fn step(
    map: &MapSpec,
    lp: &LoopSpec,
    trig: &TriggerSpec,
    state: &SimState,
) -> (SimState, StepRecord) {
    let k = state.k;
    let theta = state.theta_hat + dither(lp, k);
    let y = eval_map(map, theta);
    let gradient = demodulate(lp, k, y);
    let error = trigger::measurement_error(state.held_gradient, gradient);

    let mut next = *state;
    let triggered = trigger::should_trigger(trig, gradient, error);
    if triggered {
        next.last_event_k = k;
        next.held_gradient = gradient;
        next.held_control = -lp.gain_k * gradient;
    }
    let control = next.held_control;
    next.theta_hat = integrate(lp, state.theta_hat, control);
    next.k = k + 1;

    let record = StepRecord {
        k,
        theta_hat: state.theta_hat,
        theta,
        y,
        gradient,
        error,
        control,
        triggered,
    };
    (next, record)
}

/// Runs `n_iters` iterations from `theta_hat0`, starting at `k = 0`.
pub fn run(
    map: &MapSpec,
    lp: &LoopSpec,
    trig: &TriggerSpec,
    theta_hat0: f64,
    n_iters: usize,
) -> Result<(Trajectory, EventLog), SpecError> {
    ensure(n_iters >= 1, "run.n_iters", "be at least 1", n_iters as f64)?;
    ensure(theta_hat0.is_finite(), "run.theta_hat0", "be finite", theta_hat0)?;

    let mut state = SimState::initial(map, lp, theta_hat0);
    let mut events = vec![Event {
        index: 0,
        k: 0,
        gradient: state.held_gradient,
        control: state.held_control,
    }];
    let mut records = Vec::with_capacity(n_iters);
    for _ in 0..n_iters {
        let (next, record) = step(map, lp, trig, &state);
        if record.triggered {
            events.push(Event {
                index: events.len(),
                k: record.k,
                gradient: next.held_gradient,
                control: next.held_control,
            });
        }
        records.push(record);
        state = next;
    }

    let trajectory = Trajectory {
        map: *map,
        lp: *lp,
        trig: *trig,
        records,
        final_state: state,
    };
    let log = EventLog {
        events,
        n_iters,
        epsilon: lp.epsilon,
    };
    Ok((trajectory, log))
}
