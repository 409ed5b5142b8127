// Copyright (c) 2026 The Everlasting Database Contributors
// SPDX-License-Identifier: Apache-2.0

//! Seeded Monte Carlo campaigns: mechanisms under configured user traffic.
//!
//! A campaign runs `trials` independent trials of one mechanism serving one
//! or more [`Strategy`] users over a configured distribution, and folds the
//! per-trial records into an aggregate [`Report`]. Everything is
//! deterministic given the config and master seed.
//!
//! # Randomness layout
//!
//! All randomness comes from ChaCha8 streams derived from the master seed.
//! Stream `trial * 1024 + channel` is assigned per trial as follows:
//!
//! - channel `0`: the mechanism's data purchases (and, for holdout-based
//!   mechanisms, holdout initialization);
//! - channel `1`: reserved;
//! - channel `2 + 2u`: strategy randomness of user `u` (probe draws);
//! - channel `3 + 2u`: answer-noise randomness consumed on behalf of user
//!   `u`'s submissions.
//!
//! Giving every user its own noise and strategy channels means a user's
//! random inputs do not shift when other users' traffic interleaves, which
//! is what makes autonomy testable: an autonomous user's query stream is a
//! function of its own channels and its own history alone.
//!
//! # Output files
//!
//! [`Campaign::write`] honors the config's [`OutputSpec`]; the
//! `EVERLASTING_OUT_DIR` environment variable overrides the output
//! directory. The transcript CSV has the fixed column set
//! `trial,i,t,user_tag,query_id,answer,price,overfit_flag,capital`; the
//! report is versioned JSON; the event log is one JSON object per line.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, Distribution, Domain, Query, Transcript, TranscriptEntry};
use crate::error::{Error, Result};
use crate::everlasting_to::{growth_round, startup_requirement, EverlastingThresholdout, GrowthConfig};
use crate::everlasting_validation::{
    initial_round_size, EventKind, EverlastingValidation, Ledger, MechanismConfig, MechanismEvent,
};
use crate::kahan::KahanSum;
use crate::round::RoundConfig;
use crate::strategies::{
    EchoLast, Exchange, FixedRandomQueries, SignAggregationAttack, Strategy, StrategyKind,
};
use crate::thresholdout::{HoldoutConfig, HoldoutOutcome, Thresholdout};

/// Version stamp embedded in every report, bumped on schema changes.
pub const REPORT_SCHEMA_VERSION: u32 = 1;

/// Environment variable that overrides the configured output directory.
pub const OUTPUT_DIR_ENV: &str = "EVERLASTING_OUT_DIR";

/// Streams per trial in the ChaCha8 stream layout.
pub const STREAM_BLOCK: u64 = 1024;

/// Stream channel feeding the mechanism's data purchases.
pub const DATA_CHANNEL: u64 = 0;

/// Stream channel feeding user `u`'s strategy.
pub fn strategy_channel(user: usize) -> u64 {
    2 + 2 * user as u64
}

/// Stream channel feeding answer noise for user `u`'s submissions.
pub fn noise_channel(user: usize) -> u64 {
    3 + 2 * user as u64
}

/// The ChaCha8 stream for one (trial, channel) slot: the master seed keys
/// the cipher, and the slot selects the stream.
pub fn stream_rng(master_seed: u64, trial: u64, channel: u64) -> ChaCha8Rng {
    debug_assert!(channel < STREAM_BLOCK);
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(trial * STREAM_BLOCK + channel);
    rng
}

fn default_unit_cost() -> f64 {
    1.0
}

fn default_true() -> bool {
    true
}

fn default_analysis_constant() -> f64 {
    1.0
}

/// Which mechanism a campaign drives.
///
/// The growing-holdout mechanism defaults to `analysis_constant = 1`
/// (simulation mode): at the full constant its startup sizes sit far beyond
/// desk scale, which is precisely what the feasibility report documents.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum MechanismSpec {
    /// Priced validation rounds with tripling data refreshes.
    Everlasting {
        tau: f64,
        beta: f64,
        #[serde(default = "default_unit_cost")]
        sample_unit_cost: f64,
        #[serde(default = "default_true")]
        double_charge_on_restart: bool,
    },
    /// Chained reusable holdouts with exponentially growing data.
    GrowingHoldout {
        tau: f64,
        beta: f64,
        exponent: f64,
        initial_size: u64,
        #[serde(default = "default_analysis_constant")]
        analysis_constant: f64,
        #[serde(default = "default_unit_cost")]
        sample_unit_cost: f64,
    },
    /// A single standalone reusable holdout (no pricing, no data growth).
    HoldoutOnly {
        tau: f64,
        beta: f64,
        query_allotment: u64,
        budget: u64,
        sample_size: u64,
    },
    /// Answers every query with the raw sample mean: no checks, no noise,
    /// no prices. `tau` only sets the report's validity threshold.
    NaiveBaseline { tau: f64, sample_size: u64 },
}

impl MechanismSpec {
    /// The validity threshold used for violation accounting in reports.
    pub fn tau(&self) -> f64 {
        match self {
            MechanismSpec::Everlasting { tau, .. }
            | MechanismSpec::GrowingHoldout { tau, .. }
            | MechanismSpec::HoldoutOnly { tau, .. }
            | MechanismSpec::NaiveBaseline { tau, .. } => *tau,
        }
    }

    /// Validates parameters without sampling any data, so infeasible
    /// configurations fail before any trial runs.
    pub fn validate(&self) -> Result<()> {
        match *self {
            MechanismSpec::Everlasting { tau, beta, sample_unit_cost, double_charge_on_restart } => {
                let cfg = MechanismConfig::new(tau, beta)?
                    .with_sample_unit_cost(sample_unit_cost)?
                    .with_double_charge(double_charge_on_restart);
                let n0 = initial_round_size(cfg.tau, cfg.beta)?;
                RoundConfig::new(cfg.tau, cfg.beta / 2.0, n0)?;
            }
            MechanismSpec::GrowingHoldout {
                tau,
                beta,
                exponent,
                initial_size,
                analysis_constant,
                sample_unit_cost,
            } => {
                let cfg = GrowthConfig::new(tau, beta, exponent, initial_size)?
                    .with_analysis_constant(analysis_constant)?
                    .with_sample_unit_cost(sample_unit_cost)?;
                startup_requirement(tau, beta, exponent, analysis_constant)?.check(initial_size)?;
                growth_round(&cfg, 0)?;
            }
            MechanismSpec::HoldoutOnly { tau, beta, query_allotment, budget, sample_size } => {
                HoldoutConfig::new(tau, beta, query_allotment, budget)?;
                if sample_size == 0 {
                    return Err(Error::Config("holdout sample size must be at least 1".into()));
                }
            }
            MechanismSpec::NaiveBaseline { tau, sample_size } => {
                if !(tau > 0.0 && tau < 1.0) {
                    return Err(Error::Config(format!("tau must lie in (0, 1), got {tau}")));
                }
                if sample_size == 0 {
                    return Err(Error::Config("baseline sample size must be at least 1".into()));
                }
            }
        }
        Ok(())
    }
}

/// The population queries are asked about.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum DistributionSpec {
    /// Uniform over an indexed domain `x0000..`.
    Uniform { domain_size: usize },
    /// Explicit probabilities over an indexed domain of matching size.
    Weighted { probabilities: Vec<f64> },
}

impl DistributionSpec {
    pub fn build(&self) -> Result<Distribution> {
        match self {
            DistributionSpec::Uniform { domain_size } => {
                Ok(Distribution::uniform(Domain::indexed(*domain_size)?))
            }
            DistributionSpec::Weighted { probabilities } => {
                Distribution::new(Domain::indexed(probabilities.len())?, probabilities.clone())
            }
        }
    }
}

/// One configured user: a tag and the strategy behind it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserSpec {
    pub tag: String,
    pub strategy: StrategySpec,
}

/// Strategy constructors reachable from a config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum StrategySpec {
    /// Non-adaptive: `queries` random table queries fixed up front.
    FixedRandomQueries { queries: u64 },
    /// Autonomous overfitter: `probes` coin queries, then the sign-majority
    /// aggregate submitted `aggregates` times.
    SignAggregationAttack { probes: u64, aggregates: u64 },
    /// Arbitrary: replays the latest query from the full history `queries`
    /// times.
    EchoLast { queries: u64 },
}

impl StrategySpec {
    fn build(&self, tag: &str, domain: &Arc<Domain>) -> Result<Box<dyn Strategy>> {
        Ok(match *self {
            StrategySpec::FixedRandomQueries { queries } => {
                Box::new(FixedRandomQueries::new(tag, Arc::clone(domain), queries)?)
            }
            StrategySpec::SignAggregationAttack { probes, aggregates } => {
                Box::new(SignAggregationAttack::new(tag, Arc::clone(domain), probes, aggregates)?)
            }
            StrategySpec::EchoLast { queries } => {
                Box::new(EchoLast::new(tag, Arc::clone(domain), queries)?)
            }
        })
    }
}

/// How users take turns within a trial.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Interleaving {
    /// Each user submits its whole plan before the next user starts.
    Sequential,
    /// Users alternate one query at a time, skipping exhausted plans.
    #[default]
    RoundRobin,
}

/// Where campaign artifacts are written. Only named files are produced;
/// everything lands in `directory` (or the `EVERLASTING_OUT_DIR` override).
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct OutputSpec {
    #[serde(default)]
    pub directory: Option<PathBuf>,
    #[serde(default)]
    pub transcript_csv: Option<String>,
    #[serde(default)]
    pub report_json: Option<String>,
    #[serde(default)]
    pub events_jsonl: Option<String>,
}

/// A full campaign description; serializable as JSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub mechanism: MechanismSpec,
    pub distribution: DistributionSpec,
    pub users: Vec<UserSpec>,
    #[serde(default)]
    pub interleaving: Interleaving,
    pub trials: u64,
    pub master_seed: u64,
    #[serde(default)]
    pub output: OutputSpec,
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text)
            .map_err(|e| Error::Config(format!("could not parse run config: {e}")))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serialization is infallible")
    }

    pub fn validate(&self) -> Result<()> {
        if self.trials < 1 {
            return Err(Error::Config("a campaign needs at least one trial".into()));
        }
        if self.users.is_empty() {
            return Err(Error::Config("a campaign needs at least one user".into()));
        }
        let max_users = ((STREAM_BLOCK - 3) / 2) as usize;
        if self.users.len() > max_users {
            return Err(Error::Config(format!(
                "at most {max_users} users fit the per-trial stream block, got {}",
                self.users.len()
            )));
        }
        for (i, user) in self.users.iter().enumerate() {
            if user.tag.is_empty() {
                return Err(Error::Config(format!("user {i} has an empty tag")));
            }
            if self.users[..i].iter().any(|u| u.tag == user.tag) {
                return Err(Error::Config(format!("duplicate user tag `{}`", user.tag)));
            }
        }
        self.trials
            .checked_mul(STREAM_BLOCK)
            .ok_or(Error::Overflow("trial stream index"))?;
        self.mechanism.validate()?;
        self.distribution.build()?;
        Ok(())
    }
}

/// Per-user outcome of one trial.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserTrialStats {
    pub tag: String,
    pub kind: StrategyKind,
    pub submissions: u64,
    pub answered: u64,
    /// Queries the mechanism refused (standalone holdout after its halt).
    pub refused: u64,
    /// Per-answer prices paid.
    pub answer_cost: f64,
    /// Restart shortfalls billed to this user's submissions.
    pub restart_cost: f64,
    pub total_cost: f64,
    /// Restarts billed at a strictly positive amount.
    pub charged_restarts: u64,
    pub premature_halts_triggered: u64,
    pub natural_halts_triggered: u64,
    pub flagged_answers: u64,
    /// Answers with `|answer - E[q]| > tau`.
    pub tau_violations: u64,
    pub max_abs_error: Option<f64>,
    /// Largest signed `answer - E[q]` (overfit direction).
    pub max_signed_error: Option<f64>,
}

impl UserTrialStats {
    fn new(tag: &str, kind: StrategyKind) -> Self {
        Self {
            tag: tag.to_string(),
            kind,
            submissions: 0,
            answered: 0,
            refused: 0,
            answer_cost: 0.0,
            restart_cost: 0.0,
            total_cost: 0.0,
            charged_restarts: 0,
            premature_halts_triggered: 0,
            natural_halts_triggered: 0,
            flagged_answers: 0,
            tau_violations: 0,
            max_abs_error: None,
            max_signed_error: None,
        }
    }
}

/// Everything measured in one trial. Reports are pure folds of these.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub trial: u64,
    /// Validity threshold used for violation accounting.
    pub tau: f64,
    pub submissions: u64,
    pub answered: u64,
    pub refused: u64,
    pub max_abs_error: Option<f64>,
    pub max_signed_error: Option<f64>,
    /// Answered queries with `|answer - E[q]| > tau`.
    pub tau_violations: u64,
    /// Answered queries with signed error above `tau / 2` (the overfit
    /// scale the attack calibration targets).
    pub overfit_answers: u64,
    pub rounds_opened: u64,
    pub premature_halts: u64,
    pub natural_halts: u64,
    /// Tag of the user whose submission triggered each round turnover, in
    /// order; lets a paired-run analysis detect turnover coupling.
    pub turnover_triggers: Vec<String>,
    /// Largest `|answer - sample mean|` over answered queries, where the
    /// mechanism reports it (the noise magnitude, capped at `tau / 4`).
    pub max_noise_magnitude: Option<f64>,
    /// Largest `|answer - holdout mean|` over answered queries, where the
    /// mechanism reports it (capped at `3 tau / 4` by the agreement check).
    pub max_holdout_deviation: Option<f64>,
    /// Naturally-ended rounds that still billed a positive shortfall
    /// (must stay zero: natural ends are fully funded).
    pub natural_halt_charges: u64,
    /// Smallest `capital - next purchase cost` over natural round ends.
    pub min_natural_margin: Option<f64>,
    pub subsidy: f64,
    pub revenue: f64,
    pub spending: f64,
    pub final_capital: f64,
    /// `|subsidy + revenue - spending - capital|` under compensated
    /// summation.
    pub conservation_residual: f64,
    pub samples_bought: u64,
    /// Smallest ledger capital observed right after a data purchase.
    pub min_capital_after_purchase: Option<f64>,
    pub users: Vec<UserTrialStats>,
}

/// Five-number summary plus mean, by nearest-rank on the sorted values.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Quantiles {
    pub min: f64,
    pub p25: f64,
    pub median: f64,
    pub p75: f64,
    pub max: f64,
    pub mean: f64,
}

impl Quantiles {
    fn of(values: &[f64]) -> Self {
        assert!(!values.is_empty(), "quantiles need at least one value");
        let mut sorted = values.to_vec();
        sorted.sort_by(|a, b| a.partial_cmp(b).expect("costs are finite"));
        let rank = |q: f64| {
            let k = ((q * sorted.len() as f64).ceil() as usize).clamp(1, sorted.len());
            sorted[k - 1]
        };
        let mut sum = KahanSum::new();
        for v in &sorted {
            sum.add(*v);
        }
        Self {
            min: sorted[0],
            p25: rank(0.25),
            median: rank(0.5),
            p75: rank(0.75),
            max: sorted[sorted.len() - 1],
            mean: sum.total() / sorted.len() as f64,
        }
    }
}

/// Cross-trial summary for one user.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserAggregate {
    pub tag: String,
    pub kind: StrategyKind,
    pub answered: u64,
    pub total_cost: Quantiles,
    pub total_restart_cost: f64,
    pub trials_with_charged_restart: u64,
    pub trials_with_flagged_answer: u64,
    pub trials_with_tau_violation: u64,
    pub trials_with_premature_halt: u64,
}

/// Campaign-level summary; a pure fold of the trial records.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub trials: u64,
    pub answered: u64,
    pub max_abs_error: Option<f64>,
    /// Trials containing any `|answer - E[q]| > tau`.
    pub tau_violation_trials: u64,
    pub tau_violation_fraction: f64,
    /// Trials containing any signed error above `tau / 2`.
    pub overfit_trials: u64,
    pub overfit_trial_fraction: f64,
    pub premature_halt_trials: u64,
    pub premature_halt_fraction: f64,
    pub max_noise_magnitude: Option<f64>,
    pub max_holdout_deviation: Option<f64>,
    pub natural_halt_charge_trials: u64,
    pub max_conservation_residual: f64,
    pub min_capital_after_purchase: Option<f64>,
    pub min_natural_margin: Option<f64>,
    pub total_samples_bought: u64,
    pub per_user: Vec<UserAggregate>,
}

fn fold_min(acc: &mut Option<f64>, v: Option<f64>) {
    if let Some(v) = v {
        *acc = Some(acc.map_or(v, |a| a.min(v)));
    }
}

fn fold_max(acc: &mut Option<f64>, v: Option<f64>) {
    if let Some(v) = v {
        *acc = Some(acc.map_or(v, |a| a.max(v)));
    }
}

impl Aggregate {
    /// Recomputes the aggregate from scratch; [`Report::new`] uses this and
    /// nothing else, so stored aggregates are always reproducible.
    pub fn fold(trials: &[TrialRecord]) -> Self {
        assert!(!trials.is_empty(), "a report needs at least one trial");
        let n = trials.len() as u64;
        let mut answered = 0;
        let mut max_abs_error = None;
        let mut tau_violation_trials = 0;
        let mut overfit_trials = 0;
        let mut premature_halt_trials = 0;
        let mut max_noise = None;
        let mut max_holdout = None;
        let mut natural_halt_charge_trials = 0;
        let mut max_residual: f64 = 0.0;
        let mut min_capital = None;
        let mut min_margin = None;
        let mut samples = 0u64;
        for t in trials {
            answered += t.answered;
            fold_max(&mut max_abs_error, t.max_abs_error);
            tau_violation_trials += u64::from(t.tau_violations > 0);
            overfit_trials += u64::from(t.overfit_answers > 0);
            premature_halt_trials += u64::from(t.premature_halts > 0);
            fold_max(&mut max_noise, t.max_noise_magnitude);
            fold_max(&mut max_holdout, t.max_holdout_deviation);
            natural_halt_charge_trials += u64::from(t.natural_halt_charges > 0);
            max_residual = max_residual.max(t.conservation_residual.abs());
            fold_min(&mut min_capital, t.min_capital_after_purchase);
            fold_min(&mut min_margin, t.min_natural_margin);
            samples += t.samples_bought;
        }
        let per_user = trials[0]
            .users
            .iter()
            .enumerate()
            .map(|(u, first)| {
                let series: Vec<&UserTrialStats> = trials.iter().map(|t| &t.users[u]).collect();
                let costs: Vec<f64> = series.iter().map(|s| s.total_cost).collect();
                let mut restart_cost = KahanSum::new();
                for s in &series {
                    restart_cost.add(s.restart_cost);
                }
                UserAggregate {
                    tag: first.tag.clone(),
                    kind: first.kind,
                    answered: series.iter().map(|s| s.answered).sum(),
                    total_cost: Quantiles::of(&costs),
                    total_restart_cost: restart_cost.total(),
                    trials_with_charged_restart: series
                        .iter()
                        .filter(|s| s.charged_restarts > 0)
                        .count() as u64,
                    trials_with_flagged_answer: series
                        .iter()
                        .filter(|s| s.flagged_answers > 0)
                        .count() as u64,
                    trials_with_tau_violation: series
                        .iter()
                        .filter(|s| s.tau_violations > 0)
                        .count() as u64,
                    trials_with_premature_halt: series
                        .iter()
                        .filter(|s| s.premature_halts_triggered > 0)
                        .count() as u64,
                }
            })
            .collect();
        Self {
            trials: n,
            answered,
            max_abs_error,
            tau_violation_trials,
            tau_violation_fraction: tau_violation_trials as f64 / n as f64,
            overfit_trials,
            overfit_trial_fraction: overfit_trials as f64 / n as f64,
            premature_halt_trials,
            premature_halt_fraction: premature_halt_trials as f64 / n as f64,
            max_noise_magnitude: max_noise,
            max_holdout_deviation: max_holdout,
            natural_halt_charge_trials,
            max_conservation_residual: max_residual,
            min_capital_after_purchase: min_capital,
            min_natural_margin: min_margin,
            total_samples_bought: samples,
            per_user,
        }
    }
}

/// The versioned campaign report: config echo, per-trial records, and their
/// aggregate fold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub schema_version: u32,
    pub config: RunConfig,
    pub aggregate: Aggregate,
    pub trials: Vec<TrialRecord>,
}

impl Report {
    pub fn new(config: RunConfig, trials: Vec<TrialRecord>) -> Self {
        let aggregate = Aggregate::fold(&trials);
        Self { schema_version: REPORT_SCHEMA_VERSION, config, aggregate, trials }
    }

    /// Deterministic serialized form (pretty JSON plus trailing newline).
    pub fn to_json_bytes(&self) -> Vec<u8> {
        let mut bytes =
            serde_json::to_vec_pretty(self).expect("report serialization is infallible");
        bytes.push(b'\n');
        bytes
    }
}

/// One mechanism event annotated with its trial.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrialEvent {
    pub trial: u64,
    #[serde(flatten)]
    pub event: MechanismEvent,
}

/// Everything a campaign produced, before any file is written.
#[derive(Debug, Clone)]
pub struct Campaign {
    pub report: Report,
    pub transcript: Transcript,
    pub events: Vec<TrialEvent>,
}

impl Campaign {
    /// Writes the artifacts named in the config's [`OutputSpec`] and
    /// returns their paths. The `EVERLASTING_OUT_DIR` environment variable
    /// overrides the configured directory.
    pub fn write(&self) -> Result<Vec<PathBuf>> {
        let spec = &self.report.config.output;
        let dir = match std::env::var_os(OUTPUT_DIR_ENV) {
            Some(d) => PathBuf::from(d),
            None => spec.directory.clone().unwrap_or_else(|| PathBuf::from(".")),
        };
        let mut written = Vec::new();
        if spec.transcript_csv.is_none() && spec.report_json.is_none() && spec.events_jsonl.is_none()
        {
            return Ok(written);
        }
        std::fs::create_dir_all(&dir)?;
        if let Some(name) = &spec.transcript_csv {
            let path = dir.join(name);
            let mut buf = Vec::new();
            self.transcript.write_csv(&mut buf)?;
            write_atomically(&path, &buf)?;
            written.push(path);
        }
        if let Some(name) = &spec.report_json {
            let path = dir.join(name);
            write_atomically(&path, &self.report.to_json_bytes())?;
            written.push(path);
        }
        if let Some(name) = &spec.events_jsonl {
            let path = dir.join(name);
            let mut buf = Vec::new();
            for event in &self.events {
                serde_json::to_writer(&mut buf, event)
                    .map_err(|e| Error::Config(format!("event serialization failed: {e}")))?;
                buf.push(b'\n');
            }
            write_atomically(&path, &buf)?;
            written.push(path);
        }
        Ok(written)
    }
}

fn write_atomically(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension("tmp");
    std::fs::write(&tmp, bytes)?;
    std::fs::rename(&tmp, path)?;
    Ok(())
}

/// What one submission did, unified across mechanisms.
struct Submission {
    answer: Option<f64>,
    answer_price: f64,
    restart_cost: f64,
    flagged: bool,
    round: u64,
    index: u64,
    capital: Option<f64>,
    /// `(|answer - sample mean|, |answer - holdout mean|)` where reported.
    sandwich: Option<(f64, f64)>,
    /// Round turnovers this submission triggered: `(premature, charge)`.
    halts: Vec<(bool, f64)>,
}

/// A mechanism behind a uniform submit interface.
enum Engine {
    Everlasting(Box<EverlastingValidation<ChaCha8Rng>>),
    Growing(Box<EverlastingThresholdout<ChaCha8Rng>>),
    Holdout { mech: Box<Thresholdout>, next_index: u64, halt_seen: bool, samples: u64 },
    Naive { sample: Dataset, next_index: u64 },
}

impl Engine {
    fn build(
        spec: &MechanismSpec,
        distribution: &Distribution,
        mut data_rng: ChaCha8Rng,
    ) -> Result<Self> {
        Ok(match *spec {
            MechanismSpec::Everlasting { tau, beta, sample_unit_cost, double_charge_on_restart } => {
                let cfg = MechanismConfig::new(tau, beta)?
                    .with_sample_unit_cost(sample_unit_cost)?
                    .with_double_charge(double_charge_on_restart);
                Engine::Everlasting(Box::new(EverlastingValidation::new(
                    cfg,
                    distribution.clone(),
                    data_rng,
                )?))
            }
            MechanismSpec::GrowingHoldout {
                tau,
                beta,
                exponent,
                initial_size,
                analysis_constant,
                sample_unit_cost,
            } => {
                let cfg = GrowthConfig::new(tau, beta, exponent, initial_size)?
                    .with_analysis_constant(analysis_constant)?
                    .with_sample_unit_cost(sample_unit_cost)?;
                Engine::Growing(Box::new(EverlastingThresholdout::new(
                    cfg,
                    distribution.clone(),
                    data_rng,
                )?))
            }
            MechanismSpec::HoldoutOnly { tau, beta, query_allotment, budget, sample_size } => {
                let cfg = HoldoutConfig::new(tau, beta, query_allotment, budget)?;
                let answer_set = distribution.sample_dataset(sample_size, &mut data_rng);
                let check_set = distribution.sample_dataset(sample_size, &mut data_rng);
                let mech = Thresholdout::new(cfg, answer_set, check_set, &mut data_rng)?;
                Engine::Holdout {
                    mech: Box::new(mech),
                    next_index: 1,
                    halt_seen: false,
                    samples: 2 * sample_size,
                }
            }
            MechanismSpec::NaiveBaseline { sample_size, .. } => Engine::Naive {
                sample: distribution.sample_dataset(sample_size, &mut data_rng),
                next_index: 1,
            },
        })
    }

    fn submit(&mut self, query: &Query, noise_rng: &mut ChaCha8Rng) -> Result<Submission> {
        match self {
            Engine::Everlasting(m) => {
                let r = m.submit(query, noise_rng)?;
                let mut restart_cost = KahanSum::new();
                let halts = r
                    .restart_charges
                    .iter()
                    .map(|c| {
                        restart_cost.add(c.amount);
                        (c.premature, c.amount)
                    })
                    .collect();
                Ok(Submission {
                    answer: Some(r.answer),
                    answer_price: r.low_price,
                    restart_cost: restart_cost.total(),
                    flagged: r.restart_charges.iter().any(|c| c.premature),
                    round: r.round,
                    index: r.index,
                    capital: Some(m.ledger().capital()),
                    sandwich: Some((r.answer_margin, r.holdout_margin)),
                    halts,
                })
            }
            Engine::Growing(m) => {
                let before = m.round();
                let r = m.submit(query, noise_rng)?;
                let rolls = m.round() - before;
                let mut halts: Vec<(bool, f64)> =
                    (0..r.restarts).map(|_| (true, 0.0)).collect();
                if rolls > r.restarts {
                    // The filling answer also rolled the round (cap reached).
                    halts.push((false, 0.0));
                }
                Ok(Submission {
                    answer: Some(r.answer),
                    answer_price: r.price,
                    restart_cost: 0.0,
                    flagged: r.flagged,
                    round: r.round,
                    index: r.submission,
                    capital: Some(m.ledger().capital()),
                    sandwich: None,
                    halts,
                })
            }
            Engine::Holdout { mech, next_index, halt_seen, .. } => {
                let index = *next_index;
                match mech.answer(query, noise_rng)? {
                    HoldoutOutcome::Answered { answer, flagged } => {
                        *next_index += 1;
                        Ok(Submission {
                            answer: Some(answer),
                            answer_price: 0.0,
                            restart_cost: 0.0,
                            flagged,
                            round: 0,
                            index,
                            capital: None,
                            sandwich: None,
                            halts: Vec::new(),
                        })
                    }
                    HoldoutOutcome::Halted => {
                        let halts =
                            if *halt_seen { Vec::new() } else { vec![(true, 0.0)] };
                        *halt_seen = true;
                        Ok(Submission {
                            answer: None,
                            answer_price: 0.0,
                            restart_cost: 0.0,
                            flagged: false,
                            round: 0,
                            index,
                            capital: None,
                            sandwich: None,
                            halts,
                        })
                    }
                }
            }
            Engine::Naive { sample, next_index } => {
                let index = *next_index;
                *next_index += 1;
                Ok(Submission {
                    answer: Some(sample.empirical_mean(query)?),
                    answer_price: 0.0,
                    restart_cost: 0.0,
                    flagged: false,
                    round: 0,
                    index,
                    capital: None,
                    sandwich: None,
                    halts: Vec::new(),
                })
            }
        }
    }

    fn ledger(&self) -> Option<&Ledger> {
        match self {
            Engine::Everlasting(m) => Some(m.ledger()),
            Engine::Growing(m) => Some(m.ledger()),
            _ => None,
        }
    }

    fn rounds_opened(&self) -> u64 {
        match self {
            Engine::Everlasting(m) => m.round_index() + 1,
            Engine::Growing(m) => m.round() + 1,
            _ => 1,
        }
    }

    fn samples_bought(&self) -> u64 {
        match self {
            Engine::Everlasting(m) => m.ledger().samples_bought(),
            Engine::Growing(m) => m.ledger().samples_bought(),
            Engine::Holdout { samples, .. } => *samples,
            Engine::Naive { sample, .. } => sample.n(),
        }
    }

    fn take_events(&mut self) -> Vec<MechanismEvent> {
        match self {
            Engine::Everlasting(m) => m.take_events(),
            Engine::Growing(m) => m.take_events(),
            _ => Vec::new(),
        }
    }
}

struct TrialOutput {
    record: TrialRecord,
    entries: Vec<TranscriptEntry>,
    events: Vec<MechanismEvent>,
}

fn track_error(stats: &mut UserTrialStats, err: f64, tau: f64) {
    fold_max(&mut stats.max_abs_error, Some(err.abs()));
    fold_max(&mut stats.max_signed_error, Some(err));
    if err.abs() > tau {
        stats.tau_violations += 1;
    }
}

fn run_trial(
    config: &RunConfig,
    distribution: &Distribution,
    domain: &Arc<Domain>,
    trial: u64,
) -> Result<TrialOutput> {
    let tau = config.mechanism.tau();
    let data_rng = stream_rng(config.master_seed, trial, DATA_CHANNEL);
    let mut engine = Engine::build(&config.mechanism, distribution, data_rng)?;

    let mut strategies: Vec<Box<dyn Strategy>> = Vec::with_capacity(config.users.len());
    let mut strategy_rngs = Vec::with_capacity(config.users.len());
    let mut noise_rngs = Vec::with_capacity(config.users.len());
    for (u, user) in config.users.iter().enumerate() {
        strategies.push(user.strategy.build(&user.tag, domain)?);
        strategy_rngs.push(stream_rng(config.master_seed, trial, strategy_channel(u)));
        noise_rngs.push(stream_rng(config.master_seed, trial, noise_channel(u)));
    }

    let mut users: Vec<UserTrialStats> = strategies
        .iter()
        .map(|s| UserTrialStats::new(s.tag(), s.kind()))
        .collect();
    let mut user_costs: Vec<(KahanSum, KahanSum)> =
        (0..users.len()).map(|_| (KahanSum::new(), KahanSum::new())).collect();
    let mut own_history: Vec<Vec<Exchange>> = vec![Vec::new(); users.len()];
    let mut full_history: Vec<Exchange> = Vec::new();

    let mut entries = Vec::new();
    let mut record = TrialRecord {
        trial,
        tau,
        submissions: 0,
        answered: 0,
        refused: 0,
        max_abs_error: None,
        max_signed_error: None,
        tau_violations: 0,
        overfit_answers: 0,
        rounds_opened: 0,
        premature_halts: 0,
        natural_halts: 0,
        turnover_triggers: Vec::new(),
        max_noise_magnitude: None,
        max_holdout_deviation: None,
        natural_halt_charges: 0,
        min_natural_margin: None,
        subsidy: 0.0,
        revenue: 0.0,
        spending: 0.0,
        final_capital: 0.0,
        conservation_residual: 0.0,
        samples_bought: 0,
        min_capital_after_purchase: None,
        users: Vec::new(),
    };

    let schedule = build_schedule(config.interleaving, &strategies);
    for u in schedule {
        let strategy = &mut strategies[u];
        let visible: &[Exchange] = match strategy.kind() {
            StrategyKind::NonAdaptive => &[],
            StrategyKind::Autonomous => &own_history[u],
            StrategyKind::Arbitrary => &full_history,
        };
        debug_assert!(
            strategy.kind() != StrategyKind::NonAdaptive || visible.is_empty(),
            "a non-adaptive strategy must not see history"
        );
        let query = strategy.next_query(visible, &mut strategy_rngs[u])?;
        let truth = distribution.true_mean(&query)?;
        let sub = engine.submit(&query, &mut noise_rngs[u])?;

        let stats = &mut users[u];
        stats.submissions += 1;
        record.submissions += 1;
        match sub.answer {
            Some(a) => {
                let err = a - truth;
                stats.answered += 1;
                record.answered += 1;
                track_error(stats, err, tau);
                fold_max(&mut record.max_abs_error, Some(err.abs()));
                fold_max(&mut record.max_signed_error, Some(err));
                if err.abs() > tau {
                    record.tau_violations += 1;
                }
                if err > tau / 2.0 {
                    record.overfit_answers += 1;
                }
                if sub.flagged {
                    stats.flagged_answers += 1;
                }
                if let Some((noise, holdout)) = sub.sandwich {
                    fold_max(&mut record.max_noise_magnitude, Some(noise));
                    fold_max(&mut record.max_holdout_deviation, Some(holdout));
                }
            }
            None => {
                stats.refused += 1;
                record.refused += 1;
            }
        }
        user_costs[u].0.add(sub.answer_price);
        user_costs[u].1.add(sub.restart_cost);
        for &(premature, charge) in &sub.halts {
            record.turnover_triggers.push(stats.tag.clone());
            if premature {
                record.premature_halts += 1;
                stats.premature_halts_triggered += 1;
            } else {
                record.natural_halts += 1;
                stats.natural_halts_triggered += 1;
            }
            if charge > 0.0 {
                stats.charged_restarts += 1;
            }
        }

        entries.push(TranscriptEntry {
            trial,
            index: sub.index,
            round: sub.round,
            user_tag: stats.tag.clone(),
            query_id: query.id().to_string(),
            answer: sub.answer,
            price: sub.answer_price + sub.restart_cost,
            overfit_flag: sub.flagged,
            capital: sub.capital,
        });
        let exchange = Exchange {
            user_tag: stats.tag.clone(),
            query: Arc::new(query),
            answer: sub.answer,
            price: sub.answer_price + sub.restart_cost,
        };
        own_history[u].push(exchange.clone());
        full_history.push(exchange);
    }

    for (u, stats) in users.iter_mut().enumerate() {
        stats.answer_cost = user_costs[u].0.total();
        stats.restart_cost = user_costs[u].1.total();
        let mut total = user_costs[u].0;
        total.add(stats.restart_cost);
        stats.total_cost = total.total();
    }

    record.rounds_opened = engine.rounds_opened();
    record.samples_bought = engine.samples_bought();
    if let Some(ledger) = engine.ledger() {
        record.subsidy = ledger.subsidy();
        record.revenue = ledger.revenue();
        record.spending = ledger.spending();
        record.final_capital = ledger.capital();
        record.conservation_residual = ledger.conservation_residual();
    }
    let events = engine.take_events();
    for (k, event) in events.iter().enumerate() {
        match event.event {
            EventKind::Purchased => {
                fold_min(&mut record.min_capital_after_purchase, Some(event.capital));
            }
            EventKind::HaltedNatural => {
                if event.p > 0.0 {
                    record.natural_halt_charges += 1;
                }
                if let Some(next) = events.get(k + 1) {
                    if next.event == EventKind::Purchased {
                        fold_min(&mut record.min_natural_margin, Some(event.capital - next.p));
                    }
                }
            }
            _ => {}
        }
    }
    record.users = users;
    Ok(TrialOutput { record, entries, events })
}

/// The submission order: user indices, one per planned query.
fn build_schedule(interleaving: Interleaving, strategies: &[Box<dyn Strategy>]) -> Vec<usize> {
    let plans: Vec<u64> = strategies.iter().map(|s| s.planned_queries()).collect();
    let total: u64 = plans.iter().sum();
    let mut order = Vec::with_capacity(total as usize);
    match interleaving {
        Interleaving::Sequential => {
            for (u, &p) in plans.iter().enumerate() {
                order.extend(std::iter::repeat_n(u, p as usize));
            }
        }
        Interleaving::RoundRobin => {
            let mut left = plans;
            let mut remaining = total;
            while remaining > 0 {
                for (u, l) in left.iter_mut().enumerate() {
                    if *l > 0 {
                        *l -= 1;
                        remaining -= 1;
                        order.push(u);
                    }
                }
            }
        }
    }
    order
}

/// Runs every trial of a campaign and folds the report. Pure given the
/// config: no files are touched (see [`Campaign::write`]).
pub fn run_campaign(config: &RunConfig) -> Result<Campaign> {
    config.validate()?;
    let distribution = config.distribution.build()?;
    let domain = Arc::clone(distribution.domain());
    let mut trials = Vec::with_capacity(config.trials as usize);
    let mut transcript = Transcript::new();
    let mut events = Vec::new();
    for trial in 0..config.trials {
        let out = run_trial(config, &distribution, &domain, trial)?;
        trials.push(out.record);
        for entry in out.entries {
            transcript.push(entry);
        }
        events.extend(out.events.into_iter().map(|event| TrialEvent { trial, event }));
    }
    Ok(Campaign { report: Report::new(config.clone(), trials), transcript, events })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::everlasting_validation::answer_price;
    use crate::tolerances::{pinned, LEDGER_ABS};

    /// Money formulas carry last-digit double-rounding dust against the
    /// correctly rounded pinned reals.
    fn assert_close(actual: f64, expected: f64, relative: f64) {
        let scale = expected.abs().max(1e-300);
        assert!(
            (actual - expected).abs() <= relative * scale,
            "expected {expected}, got {actual}"
        );
    }

    fn naive_config(users: Vec<UserSpec>, interleaving: Interleaving) -> RunConfig {
        RunConfig {
            mechanism: MechanismSpec::NaiveBaseline { tau: 0.4, sample_size: 100 },
            distribution: DistributionSpec::Uniform { domain_size: 16 },
            users,
            interleaving,
            trials: 2,
            master_seed: 11,
            output: OutputSpec::default(),
        }
    }

    fn table_user(tag: &str, queries: u64) -> UserSpec {
        UserSpec { tag: tag.into(), strategy: StrategySpec::FixedRandomQueries { queries } }
    }

    #[test]
    fn stream_split_is_disjoint_and_stable() {
        use rand::Rng;
        let mut a = stream_rng(7, 0, 0);
        let mut b = stream_rng(7, 0, 1);
        let mut c = stream_rng(7, 1, 0);
        let mut a2 = stream_rng(7, 0, 0);
        let xa: u64 = a.gen();
        assert_ne!(xa, b.gen::<u64>(), "channels are distinct streams");
        assert_ne!(xa, c.gen::<u64>(), "trials are distinct streams");
        assert_eq!(xa, a2.gen::<u64>(), "streams are reproducible");
    }

    #[test]
    fn schedules_cover_every_plan_in_the_documented_order() {
        let round_robin =
            run_campaign(&naive_config(vec![table_user("a", 2), table_user("b", 3)], Interleaving::RoundRobin))
                .unwrap();
        let tags: Vec<&str> = round_robin
            .transcript
            .entries
            .iter()
            .filter(|e| e.trial == 0)
            .map(|e| e.user_tag.as_str())
            .collect();
        assert_eq!(tags, ["a", "b", "a", "b", "b"]);

        let sequential =
            run_campaign(&naive_config(vec![table_user("a", 2), table_user("b", 3)], Interleaving::Sequential))
                .unwrap();
        let tags: Vec<&str> = sequential
            .transcript
            .entries
            .iter()
            .filter(|e| e.trial == 0)
            .map(|e| e.user_tag.as_str())
            .collect();
        assert_eq!(tags, ["a", "a", "b", "b", "b"]);
    }

    #[test]
    fn config_validation_names_the_problem() {
        let mut cfg = naive_config(vec![table_user("a", 2)], Interleaving::RoundRobin);
        cfg.trials = 0;
        assert!(cfg.validate().is_err());
        let cfg = naive_config(vec![], Interleaving::RoundRobin);
        assert!(cfg.validate().is_err());
        let cfg = naive_config(vec![table_user("a", 2), table_user("a", 1)], Interleaving::RoundRobin);
        assert!(cfg.validate().is_err());
        // Infeasible mechanism parameters fail before any trial runs.
        let mut cfg = naive_config(vec![table_user("a", 2)], Interleaving::RoundRobin);
        cfg.mechanism = MechanismSpec::HoldoutOnly {
            tau: 0.4,
            beta: 0.1,
            query_allotment: 0,
            budget: 20,
            sample_size: 100,
        };
        assert!(cfg.validate().is_err());
        let mut cfg = naive_config(vec![table_user("a", 2)], Interleaving::RoundRobin);
        cfg.mechanism = MechanismSpec::NaiveBaseline { tau: 1.5, sample_size: 100 };
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn run_config_round_trips_through_json() {
        let cfg = RunConfig {
            mechanism: MechanismSpec::Everlasting {
                tau: 0.4,
                beta: 0.1,
                sample_unit_cost: 1.0,
                double_charge_on_restart: true,
            },
            distribution: DistributionSpec::Uniform { domain_size: 64 },
            users: vec![
                table_user("table", 5),
                UserSpec {
                    tag: "adv".into(),
                    strategy: StrategySpec::SignAggregationAttack { probes: 3, aggregates: 2 },
                },
                UserSpec { tag: "copy".into(), strategy: StrategySpec::EchoLast { queries: 1 } },
            ],
            interleaving: Interleaving::RoundRobin,
            trials: 1,
            master_seed: 3,
            output: OutputSpec {
                directory: Some(PathBuf::from("out")),
                transcript_csv: Some("t.csv".into()),
                report_json: Some("r.json".into()),
                events_jsonl: Some("e.jsonl".into()),
            },
        };
        let parsed = RunConfig::from_json(&cfg.to_json()).unwrap();
        assert_eq!(parsed, cfg);
        // Defaults fill in omitted optional fields.
        let minimal = r#"{
            "mechanism": {"kind": "everlasting", "tau": 0.4, "beta": 0.1},
            "distribution": {"kind": "uniform", "domain_size": 8},
            "users": [{"tag": "u", "strategy": {"kind": "fixed-random-queries", "queries": 2}}],
            "trials": 1,
            "master_seed": 0
        }"#;
        let parsed = RunConfig::from_json(minimal).unwrap();
        match parsed.mechanism {
            MechanismSpec::Everlasting { sample_unit_cost, double_charge_on_restart, .. } => {
                assert_eq!(sample_unit_cost, 1.0);
                assert!(double_charge_on_restart);
            }
            other => panic!("wrong mechanism: {other:?}"),
        }
        assert_eq!(parsed.interleaving, Interleaving::RoundRobin);
    }

    #[test]
    fn everlasting_campaign_books_and_prices_exactly() {
        let cfg = RunConfig {
            mechanism: MechanismSpec::Everlasting {
                tau: 0.4,
                beta: 0.1,
                sample_unit_cost: 1.0,
                double_charge_on_restart: true,
            },
            distribution: DistributionSpec::Uniform { domain_size: 16 },
            users: vec![table_user("table", 10)],
            interleaving: Interleaving::Sequential,
            trials: 1,
            master_seed: 5,
            output: OutputSpec::default(),
        };
        let campaign = run_campaign(&cfg).unwrap();
        let trial = &campaign.report.trials[0];
        assert_eq!(trial.answered, 10);
        assert_close(trial.subsidy, pinned::SUBSIDY_TAU04_BETA01, 1e-12);
        assert!(trial.conservation_residual.abs() <= LEDGER_ABS);
        let mut expect = KahanSum::new();
        for i in 1..=10u64 {
            expect.add(answer_price(0.4, i));
        }
        let user = &trial.users[0];
        assert_eq!(user.answer_cost, expect.total());
        assert_eq!(user.total_cost, user.answer_cost + user.restart_cost);
        assert_eq!(campaign.report.aggregate.tau_violation_trials, 0);
        // Ten answers stay well inside round 0's cap of 239.
        assert_eq!(trial.rounds_opened, 1);
        assert_eq!(trial.natural_halts + trial.premature_halts, 0);
        // The event stream carries the purchase and ten answers.
        assert_eq!(campaign.events.len(), 11);
        assert_eq!(campaign.events[0].event.event, EventKind::Purchased);
    }

    #[test]
    fn reports_are_pure_folds_and_reruns_are_byte_identical() {
        let cfg = naive_config(
            vec![
                table_user("table", 4),
                UserSpec {
                    tag: "adv".into(),
                    strategy: StrategySpec::SignAggregationAttack { probes: 3, aggregates: 1 },
                },
                UserSpec { tag: "copy".into(), strategy: StrategySpec::EchoLast { queries: 2 } },
            ],
            Interleaving::RoundRobin,
        );
        let one = run_campaign(&cfg).unwrap();
        let two = run_campaign(&cfg).unwrap();
        assert_eq!(Aggregate::fold(&one.report.trials), one.report.aggregate);
        assert_eq!(one.report.to_json_bytes(), two.report.to_json_bytes());
        let mut csv_one = Vec::new();
        one.transcript.write_csv(&mut csv_one).unwrap();
        let mut csv_two = Vec::new();
        two.transcript.write_csv(&mut csv_two).unwrap();
        assert_eq!(csv_one, csv_two);
    }

    #[test]
    fn holdout_only_refusals_are_recorded_not_fatal() {
        // Budget 1 and rigged-small samples: the first flagged answer burns
        // the budget; the halt is announced on a later query and everything
        // after is refused.
        let cfg = RunConfig {
            mechanism: MechanismSpec::HoldoutOnly {
                tau: 0.2,
                beta: 0.1,
                query_allotment: 50,
                budget: 1,
                sample_size: 3,
            },
            distribution: DistributionSpec::Uniform { domain_size: 4 },
            users: vec![table_user("table", 50)],
            interleaving: Interleaving::Sequential,
            trials: 1,
            master_seed: 2,
            output: OutputSpec::default(),
        };
        let campaign = run_campaign(&cfg).unwrap();
        let trial = &campaign.report.trials[0];
        assert_eq!(trial.submissions, 50);
        assert_eq!(trial.answered + trial.refused, 50);
        if trial.refused > 0 {
            assert_eq!(trial.premature_halts, 1, "the halt is announced exactly once");
            let user = &trial.users[0];
            assert!(user.flagged_answers >= 1, "a flag must precede the halt");
        }
    }
}
