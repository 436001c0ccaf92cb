//! Experiment orchestration and file outputs.
//!
//! One experiment writes into one fresh directory:
//!
//! - `trajectory.csv`: `k,theta_hat,theta,y,g_hat,e,u,triggered`
//! - `events.csv`: `l,k_l,g_hat_held,u_held`
//! - `avg_trajectory.csv`: `k,g_av,theta_tilde_av,e_av,u_av,v,triggered`
//! - `report.txt`: diagnostics and check results
//!
//! The first two are written when the true loop runs, the third when the
//! averaged loop runs. Numbers use the shortest representation that
//! round-trips to the same `f64`, so identical configurations produce
//! byte-identical files.

use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use thiserror::Error;

use crate::analysis::{self, DecayReport, EnvelopeCheck, EnvelopeReport, EventLog, EventStats};
use crate::average::{self, AvgTrajectory, ZenoEstimate};
use crate::config::{self, ConfigError, ExperimentConfig, RawConfig, SWEEPABLE_KEYS};
use crate::escore::{self, Trajectory};
use crate::trigger::{self, AssumptionReport};

pub const TRAJECTORY_HEADER: &str = "k,theta_hat,theta,y,g_hat,e,u,triggered";
pub const EVENTS_HEADER: &str = "l,k_l,g_hat_held,u_held";
pub const AVG_TRAJECTORY_HEADER: &str = "k,g_av,theta_tilde_av,e_av,u_av,v,triggered";
pub const SUMMARY_HEADER: &str = "value,event_count,mean_gap_seconds,final_theta_error,decay_pass,rho0";

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("unknown sweep parameter `{0}`; sweepable keys: {keys}", keys = SWEEPABLE_KEYS.join(", "))]
    UnknownParameter(String),
    #[error("sweep needs at least one value")]
    EmptySweep,
    #[error("{key} = {value}: {source}")]
    SweepEntry {
        key: &'static str,
        value: String,
        source: ConfigError,
    },
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: io::Error },
    #[error("{}: output directory already holds results", .0.display())]
    OutputExists(PathBuf),
}

impl ExperimentError {
    /// 1 for configuration problems, 2 for filesystem problems.
    pub fn exit_code(&self) -> i32 {
        match self {
            ExperimentError::Io { .. } | ExperimentError::OutputExists(_) => 2,
            _ => 1,
        }
    }

    fn io(path: &Path, source: io::Error) -> Self {
        ExperimentError::Io { path: path.to_path_buf(), source }
    }
}

/// True-loop results and their diagnostics.
#[derive(Debug, Clone)]
pub struct TrueLoopOutcome {
    pub trajectory: Trajectory,
    pub log: EventLog,
    pub stats: EventStats,
    pub expansion_residual: f64,
    pub envelopes: EnvelopeReport,
    pub invariant_violation: Option<String>,
}

impl TrueLoopOutcome {
    /// `|theta - theta*|` at the last recorded step.
    pub fn final_theta_error(&self) -> f64 {
        let last = self.trajectory.records.last().expect("runs have at least one step");
        (last.theta - self.trajectory.map.theta_star()).abs()
    }
}

#[derive(Debug, Clone)]
pub struct AverageOutcome {
    pub trajectory: AvgTrajectory,
    pub decay: DecayReport,
    pub envelopes: EnvelopeReport,
    pub closed_form_residual: f64,
    pub zeno: Option<ZenoEstimate>,
}

#[derive(Debug, Clone)]
pub struct Outcome {
    pub config: ExperimentConfig,
    pub assumption: AssumptionReport,
    pub true_loop: Option<TrueLoopOutcome>,
    pub average: Option<AverageOutcome>,
}

/// Runs whatever the configured mode asks for, without touching the disk.
pub fn simulate(config: &ExperimentConfig) -> Outcome {
    let (map, lp, trig) = (&config.map, &config.lp, &config.trig);
    let assumption = trigger::validate_assumption(map, lp, trig);

    let true_loop = config.mode.runs_true_loop().then(|| {
        let (trajectory, log) = escore::run(map, lp, trig, config.theta_hat0, config.n_iters)
            .expect("validated configuration");
        TrueLoopOutcome {
            stats: analysis::event_statistics(&log),
            expansion_residual: analysis::expansion_residual(&trajectory),
            envelopes: analysis::true_loop_envelopes(&trajectory, trig, config.offset_constant),
            invariant_violation: analysis::event_invariant_violation(&trajectory, &log),
            trajectory,
            log,
        }
    });

    let average = config.mode.runs_average().then(|| {
        let trajectory = average::avg_run(map, lp, trig, config.theta_tilde0(), config.n_iters);
        let v = analysis::lyapunov_sequence(&trajectory.gradients());
        AverageOutcome {
            decay: analysis::check_decay(&v, map, lp, trig),
            envelopes: analysis::average_envelopes(&trajectory, map, lp, trig),
            closed_form_residual: analysis::closed_form_residual(&trajectory, map, lp),
            zeno: average::min_inter_event_estimate(map, lp, trig, trajectory.records[0].g_av, 0.0),
            trajectory,
        }
    });

    Outcome { config: config.clone(), assumption, true_loop, average }
}

/// Simulates and writes every output file into `out_dir`, which must be
/// absent or empty.
pub fn run_experiment(config: &ExperimentConfig, out_dir: &Path) -> Result<Outcome, ExperimentError> {
    prepare_output_dir(out_dir)?;
    let outcome = simulate(config);
    write_outputs(&outcome, out_dir)?;
    Ok(outcome)
}

fn prepare_output_dir(dir: &Path) -> Result<(), ExperimentError> {
    if dir.exists() {
        let mut entries = fs::read_dir(dir).map_err(|e| ExperimentError::io(dir, e))?;
        if entries.next().is_some() {
            return Err(ExperimentError::OutputExists(dir.to_path_buf()));
        }
    }
    fs::create_dir_all(dir).map_err(|e| ExperimentError::io(dir, e))
}

fn write_file(dir: &Path, name: &str, contents: &str) -> Result<(), ExperimentError> {
    let path = dir.join(name);
    fs::write(&path, contents).map_err(|e| ExperimentError::io(&path, e))
}

pub fn write_outputs(outcome: &Outcome, dir: &Path) -> Result<(), ExperimentError> {
    if let Some(t) = &outcome.true_loop {
        write_file(dir, "trajectory.csv", &trajectory_csv(&t.trajectory))?;
        write_file(dir, "events.csv", &events_csv(&t.log))?;
    }
    if let Some(a) = &outcome.average {
        write_file(dir, "avg_trajectory.csv", &avg_trajectory_csv(&a.trajectory))?;
    }
    write_file(dir, "report.txt", &render_report(outcome))
}

/// Shortest round-trip rendering of an `f64`.
pub fn num(x: f64) -> String {
    format!("{x:?}")
}

fn flag(b: bool) -> &'static str {
    if b {
        "1"
    } else {
        "0"
    }
}

pub fn trajectory_csv(traj: &Trajectory) -> String {
    let mut out = String::with_capacity(traj.len() * 128);
    out.push_str(TRAJECTORY_HEADER);
    out.push('\n');
    for r in &traj.records {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            r.k,
            num(r.theta_hat),
            num(r.theta),
            num(r.y),
            num(r.gradient),
            num(r.error),
            num(r.control),
            flag(r.triggered)
        );
    }
    out
}

pub fn events_csv(log: &EventLog) -> String {
    let mut out = String::from(EVENTS_HEADER);
    out.push('\n');
    for e in &log.events {
        let _ = writeln!(out, "{},{},{},{}", e.index, e.k, num(e.gradient), num(e.control));
    }
    out
}

pub fn avg_trajectory_csv(traj: &AvgTrajectory) -> String {
    let mut out = String::with_capacity(traj.records.len() * 112);
    out.push_str(AVG_TRAJECTORY_HEADER);
    out.push('\n');
    for r in &traj.records {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{}",
            r.k,
            num(r.g_av),
            num(r.theta_tilde_av),
            num(r.error),
            num(r.control),
            num(r.g_av * r.g_av),
            flag(r.triggered)
        );
    }
    out
}

fn verdict(passed: bool) -> &'static str {
    if passed {
        "pass"
    } else {
        "FAIL"
    }
}

fn envelope_line(out: &mut String, prefix: &str, c: &EnvelopeCheck) {
    let first = c.first_violation.map_or("none".to_string(), |k| k.to_string());
    let _ = writeln!(
        out,
        "{prefix}{} = {} (checked={}, violations={}, first_violation_k={}, max_excess={})",
        c.name,
        verdict(c.passed()),
        c.checked,
        c.violations,
        first,
        num(c.max_excess)
    );
}

pub fn render_assumption(r: &AssumptionReport) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "[assumption]");
    let _ = writeln!(out, "rho0 = {}", num(r.rho0));
    let _ = writeln!(out, "rho0_in_unit_interval = {}", r.rho0_in_unit_interval);
    let _ = writeln!(out, "sign_match = {}", r.sign_match);
    let _ = writeln!(out, "alpha = {}", num(r.alpha));
    match r.alpha_min {
        Some(m) => {
            let _ = writeln!(out, "alpha_min = {}", num(m));
        }
        None => {
            let _ = writeln!(out, "alpha_min = undefined (|rho0| >= 1)");
        }
    }
    let _ = writeln!(out, "alpha_satisfies = {}", r.alpha_satisfies);
    if !r.all_satisfied() {
        let _ = writeln!(out, "warning = tuning assumption violated; simulation proceeds regardless");
    }
    out
}

pub fn render_report(outcome: &Outcome) -> String {
    let cfg = &outcome.config;
    let mut out = String::new();
    let _ = writeln!(out, "[config]");
    let _ = writeln!(out, "map.q_star = {}", num(cfg.map.q_star()));
    let _ = writeln!(out, "map.h_star = {}", num(cfg.map.h_star()));
    let _ = writeln!(out, "map.theta_star = {}", num(cfg.map.theta_star()));
    let _ = writeln!(out, "loop.amplitude_a = {}", num(cfg.lp.amplitude_a()));
    let _ = writeln!(out, "loop.omega = {}", num(cfg.lp.omega()));
    let _ = writeln!(out, "loop.epsilon = {}", num(cfg.lp.epsilon()));
    let _ = writeln!(out, "loop.gain_k = {}", num(cfg.lp.gain_k()));
    let _ = writeln!(out, "loop.period_seconds = {}", num(cfg.lp.period()));
    let _ = writeln!(out, "trigger.sigma = {}", num(cfg.trig.sigma()));
    let _ = writeln!(out, "trigger.alpha = {}", num(cfg.trig.alpha()));
    let _ = writeln!(out, "run.theta_hat0 = {}", num(cfg.theta_hat0));
    let _ = writeln!(out, "run.n_iters = {}", cfg.n_iters);
    let _ = writeln!(out, "run.mode = {}", cfg.mode);
    let _ = writeln!(out, "run.offset_constant = {}", num(cfg.offset_constant));
    out.push('\n');
    out.push_str(&render_assumption(&outcome.assumption));

    if let Some(t) = &outcome.true_loop {
        out.push('\n');
        let _ = writeln!(out, "[true_loop]");
        let _ = writeln!(out, "event_count = {}", t.stats.count);
        match &t.stats.gaps {
            Some(g) => {
                let _ = writeln!(out, "mean_gap_iters = {}", num(g.mean_gap_iters));
                let _ = writeln!(out, "mean_gap_seconds = {}", num(g.mean_gap_seconds));
                let _ = writeln!(out, "min_gap_iters = {}", g.min_gap_iters);
                let _ = writeln!(out, "max_gap_iters = {}", g.max_gap_iters);
            }
            None => {
                let _ = writeln!(out, "gaps = none (fewer than two events)");
            }
        }
        let _ = writeln!(out, "horizon_seconds_per_event = {}", num(t.stats.horizon_seconds_per_event));
        let _ = writeln!(out, "final_theta_error = {}", num(t.final_theta_error()));
        let _ = writeln!(out, "expansion_max_residual = {}", num(t.expansion_residual));
        let _ = writeln!(
            out,
            "event_invariants = {}",
            t.invariant_violation.as_deref().unwrap_or("pass")
        );
        let _ = writeln!(out, "decay_rate = {}", num(t.envelopes.rho));
        for c in &t.envelopes.checks {
            envelope_line(&mut out, "envelope.", c);
        }
    }

    if let Some(a) = &outcome.average {
        out.push('\n');
        let _ = writeln!(out, "[average]");
        let _ = writeln!(out, "theta_tilde0 = {}", num(cfg.theta_tilde0()));
        let _ = writeln!(out, "event_count = {}", a.trajectory.events.len());
        match a.trajectory.min_gap() {
            Some(g) => {
                let _ = writeln!(out, "min_gap_iters = {g}");
            }
            None => {
                let _ = writeln!(out, "min_gap_iters = none");
            }
        }
        match &a.zeno {
            Some(z) => {
                let _ = writeln!(out, "min_inter_event_estimate = {}", z.k_star);
            }
            None => {
                let _ = writeln!(out, "min_inter_event_estimate = none");
            }
        }
        let _ = writeln!(out, "decay_rate = {}", num(a.decay.rho));
        let first = a.decay.first_violation.map_or("none".to_string(), |v| v.k.to_string());
        let max_ratio = a.decay.max_ratio.map_or("none".to_string(), num);
        let _ = writeln!(
            out,
            "decay = {} (steps={}, violations={}, first_violation_k={}, max_ratio={})",
            verdict(a.decay.passed()),
            a.decay.steps_checked,
            a.decay.violations,
            first,
            max_ratio
        );
        for c in &a.envelopes.checks {
            envelope_line(&mut out, "envelope.", c);
        }
        let _ = writeln!(out, "closed_form_max_relative_residual = {}", num(a.closed_form_residual));
    }
    out
}

/// One row of a sweep summary.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub value: String,
    pub event_count: usize,
    pub mean_gap_seconds: Option<f64>,
    pub final_theta_error: f64,
    pub decay_pass: bool,
    pub rho0: f64,
}

/// Runs one independent experiment per value of `param`, each in its own
/// subdirectory of `out_dir`, and writes `summary.csv`.
pub fn sweep(
    raw: &RawConfig,
    param: &str,
    values: &[String],
    out_dir: &Path,
) -> Result<Vec<SweepRow>, ExperimentError> {
    let key = config::resolve_sweep_key(param)
        .ok_or_else(|| ExperimentError::UnknownParameter(param.to_string()))?;
    if values.is_empty() {
        return Err(ExperimentError::EmptySweep);
    }

    let mut configs = Vec::with_capacity(values.len());
    for value in values {
        let mut entry = raw.clone();
        entry.set(key, value.as_str());
        entry.set("run.mode", "both");
        let cfg = ExperimentConfig::from_raw(&entry).map_err(|source| ExperimentError::SweepEntry {
            key,
            value: value.clone(),
            source,
        })?;
        configs.push(cfg);
    }

    prepare_output_dir(out_dir)?;
    let rows = configs
        .par_iter()
        .zip(values.par_iter())
        .enumerate()
        .map(|(idx, (cfg, value))| {
            let dir = out_dir.join(format!("{idx:03}_{key}={value}"));
            let outcome = run_experiment(cfg, &dir)?;
            let t = outcome.true_loop.as_ref().expect("sweeps run both loops");
            let a = outcome.average.as_ref().expect("sweeps run both loops");
            Ok(SweepRow {
                value: value.clone(),
                event_count: t.stats.count,
                mean_gap_seconds: t.stats.gaps.map(|g| g.mean_gap_seconds),
                final_theta_error: t.final_theta_error(),
                decay_pass: a.decay.passed(),
                rho0: outcome.assumption.rho0,
            })
        })
        .collect::<Result<Vec<_>, ExperimentError>>()?;

    write_file(out_dir, "summary.csv", &summary_csv(&rows))?;
    Ok(rows)
}

pub fn summary_csv(rows: &[SweepRow]) -> String {
    let mut out = String::from(SUMMARY_HEADER);
    out.push('\n');
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{}",
            r.value,
            r.event_count,
            r.mean_gap_seconds.map_or(String::new(), num),
            num(r.final_theta_error),
            r.decay_pass,
            num(r.rho0)
        );
    }
    out
}
