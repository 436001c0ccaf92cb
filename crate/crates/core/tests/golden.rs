//! Bundled configuration reproduces the committed outputs byte for byte.

use etes::config::ExperimentConfig;
use etes::experiment::{self, simulate};

const GOLDEN_TRAJECTORY: &str = include_str!("golden/trajectory.csv");
const GOLDEN_EVENTS: &str = include_str!("golden/events.csv");
const GOLDEN_AVG: &str = include_str!("golden/avg_trajectory.csv");
const GOLDEN_REPORT: &str = include_str!("golden/report.txt");

#[test]
fn reference_outputs_match_golden_files() {
    let outcome = simulate(&ExperimentConfig::reference());
    let t = outcome.true_loop.as_ref().unwrap();
    let a = outcome.average.as_ref().unwrap();
    assert_eq!(experiment::trajectory_csv(&t.trajectory), GOLDEN_TRAJECTORY);
    assert_eq!(experiment::events_csv(&t.log), GOLDEN_EVENTS);
    assert_eq!(experiment::avg_trajectory_csv(&a.trajectory), GOLDEN_AVG);
    assert_eq!(experiment::render_report(&outcome), GOLDEN_REPORT);
}

#[test]
fn golden_files_round_trip_to_the_same_numbers() {
    let outcome = simulate(&ExperimentConfig::reference());
    let records = &outcome.true_loop.unwrap().trajectory.records;
    for (line, r) in GOLDEN_TRAJECTORY.lines().skip(1).zip(records) {
        let cols: Vec<&str> = line.split(',').collect();
        assert_eq!(cols[0].parse::<u64>().unwrap(), r.k);
        assert_eq!(cols[2].parse::<f64>().unwrap().to_bits(), r.theta.to_bits());
        assert_eq!(cols[4].parse::<f64>().unwrap().to_bits(), r.gradient.to_bits());
    }
}

#[test]
fn headers_are_fixed() {
    assert_eq!(GOLDEN_TRAJECTORY.lines().next(), Some("k,theta_hat,theta,y,g_hat,e,u,triggered"));
    assert_eq!(GOLDEN_EVENTS.lines().next(), Some("l,k_l,g_hat_held,u_held"));
    assert_eq!(GOLDEN_AVG.lines().next(), Some("k,g_av,theta_tilde_av,e_av,u_av,v,triggered"));
    assert_eq!(GOLDEN_TRAJECTORY.lines().count(), 1001);
}
