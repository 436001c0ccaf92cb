//! Discrete-time event-triggered extremum seeking on a scalar quadratic map.
//!
//! The crate is split the same way the closed loop is analysed:
//!
//! - [`escore`]: the true closed loop (map, dither, demodulation, integrator,
//!   and the per-iteration step that consults the trigger).
//! - [`trigger`]: the static triggering condition, the measurement error and
//!   the tuning diagnostics (stability factor, minimal `alpha`).
//! - [`average`]: the averaged closed loop with its own trigger, the
//!   closed-form inter-event iteration and the minimum inter-event estimate.
//! - [`analysis`]: oracles and report-producing checks (trigonometric
//!   gradient expansion, Lyapunov decay, geometric envelopes, event stats).
//! - [`config`] and [`experiment`]: configuration ingestion and the
//!   experiment driver behind the `etes` binary.

pub mod analysis;
pub mod average;
pub mod config;
pub mod error;
pub mod escore;
pub mod experiment;
pub mod trigger;

pub use analysis::{EventLog, EventStats};
pub use average::{AvgState, AvgTrajectory, ZenoEstimate};
pub use error::SpecError;
pub use escore::{LoopSpec, MapSpec, SimState, StepRecord, Trajectory};
pub use trigger::{AssumptionReport, TriggerSpec};
