// Copyright (c) 2026 The Everlasting Database Contributors
// SPDX-License-Identifier: Apache-2.0

//! The calibration oracle behind `calibration::REFERENCE_CALIBRATION`.
//!
//! Sweeps the sign-aggregation attack's probe count against the
//! unprotected empirical-mean baseline, looking for the smallest
//! `k <= 400` whose overfit rate (signed error above `tau / 2`) reaches
//! 0.9 over the calibration trials, then replays the frozen attacker
//! against the priced validation mechanism on the same seed schedule.
//!
//! Run with `cargo run --release --example calibrate_attack`. The printed
//! fixture block is what `src/calibration.rs` pins; if it drifts, update
//! the fixture and bump `CALIBRATION_VERSION` together.

use everlasting::calibration::{CalibrationDesign, PROBE_GRID, REFERENCE_CALIBRATION};
use everlasting::harness::run_campaign;

fn main() {
    let reference = REFERENCE_CALIBRATION;
    let design = reference.design;
    println!(
        "calibration sweep: domain {}, n = {}, tau = {}, {} trials, seed {}",
        design.domain_size, design.sample_size, design.tau, design.trials, design.master_seed
    );
    println!("overfit bar: signed error > tau/2 = {}", design.tau / 2.0);
    println!();
    println!("{:>6} {:>14} {:>14} {:>12} {:>12}", "k", "overfit rate", "violation rate", "mean peak", "max peak");

    let mut chosen: Option<u64> = None;
    let mut frozen_rate = 0.0;
    let mut frozen_trial0 = 0.0;
    for &k in &PROBE_GRID {
        let swept = CalibrationDesign { probes: k, ..design };
        let campaign = run_campaign(&swept.baseline_config()).expect("baseline campaign runs");
        let agg = &campaign.report.aggregate;
        let peaks: Vec<f64> = campaign
            .report
            .trials
            .iter()
            .map(|t| t.max_signed_error.expect("baseline answers every query"))
            .collect();
        let mean_peak = peaks.iter().sum::<f64>() / peaks.len() as f64;
        let max_peak = peaks.iter().cloned().fold(f64::MIN, f64::max);
        println!(
            "{:>6} {:>14.4} {:>14.4} {:>12.4} {:>12.4}",
            k, agg.overfit_trial_fraction, agg.tau_violation_fraction, mean_peak, max_peak
        );
        if chosen.is_none() && agg.overfit_trial_fraction >= 0.9 {
            chosen = Some(k);
        }
        if k == design.probes {
            frozen_rate = agg.overfit_trial_fraction;
            frozen_trial0 = campaign.report.trials[0]
                .max_signed_error
                .expect("trial 0 answers every query");
        }
    }
    println!();
    match chosen {
        Some(k) => println!("smallest k <= 400 reaching 0.9: {k}"),
        None => println!(
            "no k <= 400 reaches 0.9; freezing k = {} (strongest admitted) with its measured rate",
            design.probes
        ),
    }

    let ev = run_campaign(&design.everlasting_config()).expect("priced campaign runs");
    let agg = &ev.report.aggregate;
    let attacker = &agg.per_user[0];
    println!();
    println!("replay against the priced mechanism (same attacker, same seed schedule):");
    println!("  premature-halt trial fraction: {:.4}", agg.premature_halt_fraction);
    println!("  trials with a charged restart: {}", attacker.trials_with_charged_restart);
    println!("  total restart charges across trials: {:.6}", attacker.total_restart_cost);
    println!("  validity-violation trials: {}", agg.tau_violation_trials);
    println!(
        "  noise magnitude / holdout deviation ceilings: {:.6} / {:.6}",
        agg.max_noise_magnitude.unwrap_or(f64::NAN),
        agg.max_holdout_deviation.unwrap_or(f64::NAN)
    );

    println!();
    println!("fixture block for src/calibration.rs:");
    println!("    baseline_overfit_rate: {frozen_rate:?},");
    println!("    baseline_trial0_peak: {frozen_trial0:?},");
    println!("    ev_premature_halt_rate: {:?},", agg.premature_halt_fraction);

    let drift = (frozen_rate - reference.baseline_overfit_rate).abs() > f64::EPSILON
        || (frozen_trial0 - reference.baseline_trial0_peak).abs() > f64::EPSILON
        || (agg.premature_halt_fraction - reference.ev_premature_halt_rate).abs() > f64::EPSILON;
    if drift {
        println!();
        println!("NOTE: measured values differ from the pinned fixture; update it and bump CALIBRATION_VERSION.");
        std::process::exit(1);
    }
}
