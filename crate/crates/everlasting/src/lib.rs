// Copyright (c) 2026 The Everlasting Database Contributors
// SPDX-License-Identifier: Apache-2.0

//! Mechanisms that answer statistical queries against finite datasets while
//! keeping every answer close to the queried distribution's truth — forever,
//! funded by the queriers themselves.
//!
//! The crate provides:
//!
//! - [`data`]: finite domains, distributions, statistical queries in
//!   `[0, 1]`, histogram datasets, and CSV/transcript formats.
//! - [`noise`]: truncated-Gaussian and Laplace samplers with pinned draw
//!   counts for reproducibility.
//! - [`round`]: a single validation round — answer while the training and
//!   holdout means agree, halt otherwise.
//! - [`everlasting_validation`]: the tripling mechanism — chained rounds
//!   with harmonic low prices, restart surcharges, and an exact ledger.
//! - [`thresholdout`]: the budget-limited reusable holdout.
//! - [`everlasting_to`]: the growing-holdout mechanism — chained holdout
//!   rounds over exponentially growing data with dual pricing, plus numeric
//!   verification of its feasibility inequalities.
//! - [`strategies`]: user models — pre-registered query tables, the
//!   autonomous sign-aggregation overfitter, and history-replaying
//!   adversaries.
//! - [`calibration`]: the frozen attack-calibration fixture and the
//!   campaign configs it pins.
//! - [`harness`]: seeded Monte Carlo campaigns over any mechanism and user
//!   mix, with CSV transcripts, JSON reports, and JSONL event logs.
//! - [`kahan`]: compensated summation used wherever money or probability
//!   accumulates.
//! - [`tolerances`]: frozen reference constants and statistical allowances
//!   shared by the test suites.

pub mod calibration;
pub mod data;
pub mod error;
pub mod everlasting_to;
pub mod everlasting_validation;
pub mod harness;
pub mod kahan;
pub mod noise;
pub mod round;
pub mod strategies;
pub mod thresholdout;
pub mod tolerances;

pub use calibration::{AttackCalibration, CalibrationDesign, REFERENCE_CALIBRATION};
pub use data::{Dataset, Distribution, Domain, Query, Transcript, TranscriptEntry};
pub use error::{Error, Result};
pub use everlasting_to::{
    growth_round, startup_requirement, verify_growth_lemmas, EverlastingThresholdout,
    GrowthConfig, GrowthLemmaReport, GrowthReceipt, GrowthRound, StartupBound,
    StartupRequirement, FULL_ANALYSIS_CONSTANT,
};
pub use everlasting_validation::{
    answer_price, initial_round_size, round_plan, startup_subsidy, EventKind,
    EverlastingValidation, Ledger, MechanismConfig, MechanismEvent, Purchase, RestartCharge,
    RetiredRound, RoundPlan, SubmitReceipt,
};
pub use harness::{
    run_campaign, Aggregate, Campaign, DistributionSpec, Interleaving, MechanismSpec, OutputSpec,
    Quantiles, Report, RunConfig, StrategySpec, TrialEvent, TrialRecord, UserAggregate, UserSpec,
    UserTrialStats,
};
pub use noise::{Laplace, TruncatedGaussian};
pub use round::{answer_cap, RoundConfig, RoundOutcome, ValidationRound};
pub use strategies::{
    EchoLast, Exchange, FixedRandomQueries, SignAggregationAttack, Strategy, StrategyKind,
};
pub use thresholdout::{
    holdout_feasibility, HoldoutConfig, HoldoutFeasibility, HoldoutOutcome, Thresholdout,
};
