// Copyright (c) 2026 The Everlasting Database Contributors
// SPDX-License-Identifier: Apache-2.0

//! Frozen calibration of the sign-aggregation attack.
//!
//! The attack's strength depends on its probe count `k`, and the targets it
//! is held to (overfit the unprotected baseline by more than `tau / 2` in
//! at least 90% of trials) are artifact-defined, so the chosen `k` and the
//! rates it actually achieves are pinned here as a versioned fixture. The
//! numbers are produced by the sweep in `examples/calibrate_attack.rs`
//! (`cargo run --release --example calibrate_attack`); fixture and oracle
//! must be changed together, bumping [`CALIBRATION_VERSION`].
//!
//! Version 1 findings:
//!
//! - No probe count within the contract range `k <= 400` reaches the 0.9
//!   overfit target against the baseline at `n = 500`, `tau = 0.4`. The
//!   majority vote over the `~k/2` selected probes lifts the training mean
//!   by roughly `sqrt(k/n)` standard units, which crosses `tau / 2` in
//!   about 42% of trials at `k = 400` and would need `k` near 570 to cross
//!   it in 90% of them. The fixture freezes `k = 400` — the strongest
//!   attack the contract admits — with the rates it measurably achieves,
//!   and the acceptance gate reports the 0.9 target as unmet rather than
//!   quietly weakening it.
//! - Replayed against the priced validation mechanism, the same attacker
//!   triggers **zero** premature halts: round 0's answer cap (239 at these
//!   parameters) is smaller than the probe count, so the mechanism
//!   naturally retires its data mid-probe-phase, and the aggregate faces a
//!   fresh answering set that only ~160 of its probes ever touched. The
//!   cap is doing exactly the adaptivity-bounding job it exists for.

use crate::error::Result;
use crate::harness::{
    DistributionSpec, Interleaving, MechanismSpec, OutputSpec, RunConfig, StrategySpec, UserSpec,
};
use crate::strategies::SignAggregationAttack;

/// Bumped whenever the oracle or the frozen numbers change.
pub const CALIBRATION_VERSION: u32 = 1;

/// The swept parameters: everything needed to rebuild the calibration
/// campaigns except the measured outcomes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CalibrationDesign {
    /// Domain size; large so probe tables are far from exhausting it.
    pub domain_size: usize,
    /// Baseline training-set size (and the scale the attack is tuned to).
    pub sample_size: u64,
    /// Validity threshold; overfit means signed error above `tau / 2`.
    pub tau: f64,
    /// Failure budget of the priced mechanism the attack is replayed on.
    pub ev_beta: f64,
    /// Probe queries before the aggregate.
    pub probes: u64,
    /// Aggregate submissions after the probes.
    pub aggregates: u64,
    pub trials: u64,
    pub master_seed: u64,
}

impl CalibrationDesign {
    /// The attacker user spec at this design point.
    pub fn attacker(&self) -> UserSpec {
        UserSpec {
            tag: "attacker".into(),
            strategy: StrategySpec::SignAggregationAttack {
                probes: self.probes,
                aggregates: self.aggregates,
            },
        }
    }

    /// The attack campaign against the unprotected empirical-mean answerer.
    pub fn baseline_config(&self) -> RunConfig {
        RunConfig {
            mechanism: MechanismSpec::NaiveBaseline {
                tau: self.tau,
                sample_size: self.sample_size,
            },
            distribution: DistributionSpec::Uniform { domain_size: self.domain_size },
            users: vec![self.attacker()],
            interleaving: Interleaving::Sequential,
            trials: self.trials,
            master_seed: self.master_seed,
            output: OutputSpec::default(),
        }
    }

    /// The same attacker and seed schedule replayed against the priced
    /// validation mechanism. The per-user stream split guarantees the
    /// attacker draws identical probes in both campaigns.
    pub fn everlasting_config(&self) -> RunConfig {
        RunConfig {
            mechanism: MechanismSpec::Everlasting {
                tau: self.tau,
                beta: self.ev_beta,
                sample_unit_cost: 1.0,
                double_charge_on_restart: true,
            },
            distribution: DistributionSpec::Uniform { domain_size: self.domain_size },
            users: vec![self.attacker()],
            interleaving: Interleaving::Sequential,
            trials: self.trials,
            master_seed: self.master_seed,
            output: OutputSpec::default(),
        }
    }

    /// A standalone copy of the reference attack strategy, for callers that
    /// drive mechanisms directly rather than through a campaign.
    pub fn attack_strategy(&self, tag: &str) -> Result<SignAggregationAttack> {
        let domain = crate::data::Domain::indexed(self.domain_size)?;
        SignAggregationAttack::new(tag, domain, self.probes, self.aggregates)
    }
}

/// The frozen fixture: the design plus the rates version 1 of the oracle
/// measured for it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AttackCalibration {
    pub version: u32,
    pub design: CalibrationDesign,
    /// Fraction of baseline trials whose aggregate overshot `tau / 2`.
    pub baseline_overfit_rate: f64,
    /// Trial 0's largest signed error against the baseline, bit-exact;
    /// cheap reproducibility anchor for the whole pipeline.
    pub baseline_trial0_peak: f64,
    /// Fraction of priced-mechanism trials with a premature round halt.
    pub ev_premature_halt_rate: f64,
}

/// The version-1 calibration. Measured numbers come from the oracle run
/// recorded in `examples/calibrate_attack.rs`.
pub const REFERENCE_CALIBRATION: AttackCalibration = AttackCalibration {
    version: CALIBRATION_VERSION,
    design: CalibrationDesign {
        domain_size: 16384,
        sample_size: 500,
        tau: 0.4,
        ev_beta: 0.1,
        probes: 400,
        aggregates: 1,
        trials: 100,
        master_seed: 271828,
    },
    baseline_overfit_rate: 0.42,
    baseline_trial0_peak: 0.20507128906250005,
    ev_premature_halt_rate: 0.0,
};

/// The overfit bar the calibration targets: signed training error above
/// `tau / 2`. Kept next to [`validity_violation`] so both report bars stay
/// defined in one place.
pub fn overfits(answer: f64, true_mean: f64, tau: f64) -> bool {
    answer - true_mean > tau / 2.0
}

/// The validity bar: absolute error above `tau`.
pub fn validity_violation(answer: f64, true_mean: f64, tau: f64) -> bool {
    (answer - true_mean).abs() > tau
}

/// The probe grid the oracle sweeps; the contract caps `k` at 400.
pub const PROBE_GRID: [u64; 5] = [50, 100, 200, 300, 400];
