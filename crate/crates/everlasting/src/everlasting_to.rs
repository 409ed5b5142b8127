// Copyright (c) 2026 The Everlasting Database Contributors
// SPDX-License-Identifier: Apache-2.0

//! A forever-running mechanism built from chained budget-limited holdout
//! rounds over exponentially growing datasets.
//!
//! Round `t` runs a [`Thresholdout`] on two fresh datasets of size
//! `N_t = ceil(n e^t)` with failure share `beta_t = ((e-1) beta / e) e^{-t}`,
//! overfit budget
//! `B_t = tau^4 N_t^{2-2p} / (8 c^2 ln(1664 ln(208/tau) / (tau beta_t)))`,
//! and answer cap `M_t = (beta_t / 4) exp(2 N_t^p)`, where `c` is the
//! analysis constant (see below) and `p` the growth exponent. Plain answers
//! cost `2 N_{t+1} / floor(M_t)` and flagged answers `2 N_{t+1} / floor(B_t)`
//! (times the per-sample cost), so a round that ends — by budget exhaustion
//! or because `floor(M_t)` queries were answered — has always collected at
//! least the `2 N_{t+1}` samples the next round's purchase costs.
//! Sustainability is deterministic; only the startup purchase is subsidized,
//! and there are no surcharges beyond the per-answer prices.
//!
//! The analysis constant defaults to [`FULL_ANALYSIS_CONSTANT`], under which
//! the startup-size requirements are astronomically large (hundreds of
//! billions of samples at moderate widths). [`GrowthConfig`] therefore
//! allows overriding it downward — *simulation mode* — so end-to-end runs
//! fit desk scale; every requirement report carries the constant and mode
//! label that produced it, and [`startup_requirement`] still reports the
//! full-constant sizes honestly when asked.
//!
//! Randomness is split the same way as in the tripling mechanism: the
//! mechanism-owned RNG covers data purchases *and* per-round holdout
//! initialization (the sticky threshold shift drawn when a round starts),
//! while per-query noise comes from the RNG passed to
//! [`EverlastingThresholdout::submit`]. Rolling a round therefore never
//! touches any submitter's noise stream, so mechanism state evolution is
//! independent of which user triggered the roll.
//!
//! Event-stream vocabulary: `halted_premature` marks a budget-exhaustion
//! round end (the halting query is resubmitted to the new round, consuming
//! no randomness), `halted_natural` marks an answer-cap round end (rolled
//! immediately after the cap-hitting answer).

use std::fmt;

use rand::Rng;
use serde::Serialize;

use crate::data::{Dataset, Distribution, Query};
use crate::error::{Error, Result};
use crate::everlasting_validation::{
    EventKind, Ledger, MechanismEvent, Purchase, RetiredRound,
};
use crate::kahan::KahanSum;
use crate::noise::validate_tau_beta;
use crate::round::CAP_SATURATED;
use crate::thresholdout::{HoldoutConfig, HoldoutOutcome, Thresholdout};
use crate::tolerances::ROUNDOFF_GUARD;

/// The analysis constant appearing in the overfit-budget schedule and the
/// startup-size bounds. Configurations using any smaller constant are in
/// simulation mode.
pub const FULL_ANALYSIS_CONSTANT: f64 = 9984.0;

/// Static configuration of the growing-holdout mechanism.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GrowthConfig {
    tau: f64,
    beta: f64,
    exponent: f64,
    initial_size: u64,
    analysis_constant: f64,
    sample_unit_cost: f64,
}

impl GrowthConfig {
    /// Validates ranges only. Whether `initial_size` meets the startup-size
    /// bounds is checked by [`EverlastingThresholdout::new`], so that the
    /// schedule calculator stays usable for honest feasibility reporting at
    /// any size.
    pub fn new(tau: f64, beta: f64, exponent: f64, initial_size: u64) -> Result<Self> {
        validate_tau_beta(tau, beta)?;
        if !(exponent > 0.0 && exponent < 2.0 / 3.0) {
            return Err(Error::Config(format!(
                "growth exponent must lie in (0, 2/3), got {exponent}"
            )));
        }
        if initial_size == 0 {
            return Err(Error::Config("initial size must be at least 1".into()));
        }
        Ok(Self {
            tau,
            beta,
            exponent,
            initial_size,
            analysis_constant: FULL_ANALYSIS_CONSTANT,
            sample_unit_cost: 1.0,
        })
    }

    /// Overrides the analysis constant (simulation mode when below the
    /// full value). Allowed range is `[1, 9984]`.
    pub fn with_analysis_constant(mut self, analysis_constant: f64) -> Result<Self> {
        if !analysis_constant.is_finite()
            || !(1.0..=FULL_ANALYSIS_CONSTANT).contains(&analysis_constant)
        {
            return Err(Error::Config(format!(
                "analysis constant must lie in [1, {FULL_ANALYSIS_CONSTANT}], got {analysis_constant}"
            )));
        }
        self.analysis_constant = analysis_constant;
        Ok(self)
    }

    /// Sets the price of one sample in account units (default 1).
    pub fn with_sample_unit_cost(mut self, cost: f64) -> Result<Self> {
        if !cost.is_finite() || cost <= 0.0 {
            return Err(Error::Config(format!(
                "sample unit cost must be positive and finite, got {cost}"
            )));
        }
        self.sample_unit_cost = cost;
        Ok(self)
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    /// Growth exponent `p` of the per-round answer cap `exp(2 N_t^p)`.
    pub fn exponent(&self) -> f64 {
        self.exponent
    }

    /// Startup dataset size `n` (= `N_0`).
    pub fn initial_size(&self) -> u64 {
        self.initial_size
    }

    pub fn analysis_constant(&self) -> f64 {
        self.analysis_constant
    }

    pub fn sample_unit_cost(&self) -> f64 {
        self.sample_unit_cost
    }

    /// True when the analysis constant has been reduced below the full
    /// value to make runs tractable.
    pub fn is_simulation_mode(&self) -> bool {
        self.analysis_constant < FULL_ANALYSIS_CONSTANT
    }

    /// Label attached to reports: `"standard"` or `"simulation"`.
    pub fn mode(&self) -> &'static str {
        mode_label(self.analysis_constant)
    }
}

fn mode_label(analysis_constant: f64) -> &'static str {
    if analysis_constant < FULL_ANALYSIS_CONSTANT {
        "simulation"
    } else {
        "standard"
    }
}

/// Which of the three startup-size lower bounds binds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum StartupBound {
    /// Answer-accuracy requirement (the `21632`-term).
    Accuracy,
    /// Overfit-budget feasibility, `B_t >= 1` for all rounds (the
    /// `(2-2p)`-root term).
    Budget,
    /// Cap-dominance shape floor `((3-2p)/2p)^{(3-2p)/p}`, ensuring
    /// `B_t <= M_t` for all rounds.
    Shape,
}

impl fmt::Display for StartupBound {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            StartupBound::Accuracy => "accuracy",
            StartupBound::Budget => "budget-feasibility",
            StartupBound::Shape => "shape",
        })
    }
}

/// The three startup-size lower bounds and their maximum, evaluated at a
/// given analysis constant. The accuracy bound scales linearly in the
/// constant and the budget bound replaces the squared constant; the shape
/// floor is constant-free.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StartupRequirement {
    pub tau: f64,
    pub beta: f64,
    pub exponent: f64,
    pub analysis_constant: f64,
    /// `"standard"` or `"simulation"`, per the constant used.
    pub mode: &'static str,
    pub accuracy_bound: f64,
    pub budget_bound: f64,
    pub shape_bound: f64,
    /// Maximum of the three bounds.
    pub required: f64,
    /// Which bound attains the maximum.
    pub binding: StartupBound,
}

impl StartupRequirement {
    /// Whether a startup size satisfies all three bounds.
    pub fn admits(&self, initial_size: u64) -> bool {
        initial_size as f64 >= self.required
    }

    /// Errors on the first violated bound, naming it.
    pub fn check(&self, initial_size: u64) -> Result<()> {
        let n = initial_size as f64;
        for (bound, value) in [
            (StartupBound::Accuracy, self.accuracy_bound),
            (StartupBound::Budget, self.budget_bound),
            (StartupBound::Shape, self.shape_bound),
        ] {
            if n < value {
                return Err(Error::Config(format!(
                    "initial size {initial_size} is below the {bound} lower bound \
                     {value:.6e} (analysis constant {}, {} mode)",
                    self.analysis_constant, self.mode,
                )));
            }
        }
        Ok(())
    }
}

/// Evaluates the three startup-size lower bounds.
pub fn startup_requirement(
    tau: f64,
    beta: f64,
    exponent: f64,
    analysis_constant: f64,
) -> Result<StartupRequirement> {
    validate_tau_beta(tau, beta)?;
    if !(exponent > 0.0 && exponent < 1.0) {
        return Err(Error::Config(format!(
            "growth exponent must lie in (0, 1), got {exponent}"
        )));
    }
    if !analysis_constant.is_finite()
        || !(1.0..=FULL_ANALYSIS_CONSTANT).contains(&analysis_constant)
    {
        return Err(Error::Config(format!(
            "analysis constant must lie in [1, {FULL_ANALYSIS_CONSTANT}], got {analysis_constant}"
        )));
    }
    let e = std::f64::consts::E;
    let p = exponent;
    let log208 = (208.0 / tau).ln();
    let tau2 = tau * tau;
    let tau4 = tau2 * tau2;
    let scale = analysis_constant / FULL_ANALYSIS_CONSTANT;
    let accuracy_bound =
        scale * 21632.0 * (6656.0 * e * e * log208 / ((e - 1.0) * tau * beta)).ln() / tau2;
    let b = (1664.0 * e * log208 / ((e - 1.0) * tau * beta)).ln();
    let c2 = analysis_constant * analysis_constant;
    let budget_bound = (8.0 * c2 * b / tau4 + 4.0 * c2 / ((1.0 - p) * tau4))
        .powf(1.0 / (2.0 - 2.0 * p));
    let shape_bound = ((3.0 - 2.0 * p) / (2.0 * p)).powf((3.0 - 2.0 * p) / p);
    let (required, binding) = [
        (accuracy_bound, StartupBound::Accuracy),
        (budget_bound, StartupBound::Budget),
        (shape_bound, StartupBound::Shape),
    ]
    .into_iter()
    .max_by(|x, y| x.0.total_cmp(&y.0))
    .expect("three candidates");
    Ok(StartupRequirement {
        tau,
        beta,
        exponent,
        analysis_constant,
        mode: mode_label(analysis_constant),
        accuracy_bound,
        budget_bound,
        shape_bound,
        required,
        binding,
    })
}

/// Dataset size of round `t`, `ceil(n e^t)`.
fn growth_size(initial_size: u64, round: u64) -> Result<u64> {
    let size = (initial_size as f64 * (round as f64).exp()).ceil();
    if !size.is_finite() || size > CAP_SATURATED as f64 {
        return Err(Error::Overflow("round size"));
    }
    Ok(size as u64)
}

/// Failure share of round `t`, `((e - 1) beta / e) e^{-t}`.
fn growth_beta(beta: f64, round: u64) -> f64 {
    beta * (1.0 - (-1.0f64).exp()) * (-(round as f64)).exp()
}

/// The complete round-`t` schedule: sizes, failure share, overfit budget,
/// answer cap, noise scale, and both prices. Serialized field names follow
/// the schedule notation (`N_t`, `beta_t`, `B_t`, `M_t`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GrowthRound {
    #[serde(rename = "t")]
    pub round: u64,
    /// Per-dataset size `N_t`.
    #[serde(rename = "N_t")]
    pub round_size: u64,
    /// Per-dataset size `N_{t+1}` of the round this one must pay for.
    #[serde(rename = "N_next")]
    pub next_round_size: u64,
    /// Failure share `beta_t`.
    #[serde(rename = "beta_t")]
    pub round_beta: f64,
    /// Overfit budget `B_t` before flooring.
    #[serde(rename = "B_t")]
    pub overfit_budget: f64,
    /// `floor(B_t)`, the live budget.
    #[serde(rename = "B_t_floor")]
    pub budget_floor: f64,
    /// Answer cap `M_t` before flooring. Infinite when it overflows the
    /// float range (serialized as null then).
    #[serde(rename = "M_t")]
    pub answer_cap: f64,
    /// `ln M_t`, always finite.
    #[serde(rename = "ln_M_t")]
    pub ln_answer_cap: f64,
    /// `floor(M_t)` saturated at `2^62`; the in-round answer counter is
    /// compared against this.
    #[serde(rename = "M_t_floor")]
    pub answer_cap_floor: f64,
    /// Base noise scale `sigma_t = tau / (48 ln(4 floor(M_t) / beta_t))`.
    #[serde(rename = "sigma_t")]
    pub noise_scale: f64,
    /// Disagreement threshold `3 tau / 4`.
    pub threshold: f64,
    /// Price of a plain answer, `2 N_{t+1} / floor(M_t)` times the sample
    /// unit cost. May underflow to zero for astronomical caps.
    pub unflagged_price: f64,
    /// Price of a flagged answer, `2 N_{t+1} / floor(B_t)` times the
    /// sample unit cost.
    pub flagged_price: f64,
}

/// Computes the round-`t` schedule, erring when the round is infeasible:
/// `floor(B_t) < 1`, `M_t < 1`, or `B_t > M_t`.
pub fn growth_round(config: &GrowthConfig, round: u64) -> Result<GrowthRound> {
    let round_size = growth_size(config.initial_size, round)?;
    let next_round_size = growth_size(config.initial_size, round + 1)?;
    let round_beta = growth_beta(config.beta, round);
    if round_beta < f64::MIN_POSITIVE {
        return Err(Error::Config(format!(
            "failure share underflowed in round {round}"
        )));
    }
    let tau = config.tau;
    let n_t = round_size as f64;
    let c = config.analysis_constant;
    let budget_log = (1664.0 * (208.0 / tau).ln() / (tau * round_beta)).ln();
    let overfit_budget =
        tau.powi(4) * n_t.powf(2.0 - 2.0 * config.exponent) / (8.0 * c * c * budget_log);
    let budget_floor = overfit_budget.floor();
    if budget_floor < 1.0 {
        return Err(Error::Config(format!(
            "overfit budget {overfit_budget:.6} is below 1 in round {round}: the initial \
             size fails the budget-feasibility bound (analysis constant {c})"
        )));
    }
    let cap_exponent = 2.0 * n_t.powf(config.exponent);
    let ln_answer_cap = (round_beta / 4.0).ln() + cap_exponent;
    if ln_answer_cap < 0.0 {
        return Err(Error::Config(format!(
            "answer cap is below 1 in round {round}"
        )));
    }
    if overfit_budget.ln() > ln_answer_cap {
        return Err(Error::Config(format!(
            "overfit budget {overfit_budget:.6} exceeds the answer cap (ln cap \
             {ln_answer_cap:.6}) in round {round}: the initial size fails the shape bound"
        )));
    }
    // exp overflows just above 709; the cap stays representable while the
    // exponent is comfortably below that.
    let cap_is_finite = cap_exponent < 700.0;
    let answer_cap = if cap_is_finite {
        (round_beta / 4.0) * cap_exponent.exp()
    } else {
        f64::INFINITY
    };
    let true_floor = answer_cap.floor(); // INFINITY when the cap overflows
    let answer_cap_floor = true_floor.min(CAP_SATURATED as f64);
    let ln_cap_floor = if cap_is_finite { true_floor.ln() } else { ln_answer_cap };
    let noise_scale = tau / (48.0 * (4.0f64.ln() + ln_cap_floor - round_beta.ln()));
    let revenue_target = 2.0 * next_round_size as f64 * config.sample_unit_cost;
    let unflagged_price = if cap_is_finite {
        revenue_target / true_floor
    } else {
        (revenue_target.ln() - ln_answer_cap).exp()
    };
    let flagged_price = revenue_target / budget_floor;
    Ok(GrowthRound {
        round,
        round_size,
        next_round_size,
        round_beta,
        overfit_budget,
        budget_floor,
        answer_cap,
        ln_answer_cap,
        answer_cap_floor,
        noise_scale,
        threshold: 3.0 * tau / 4.0,
        unflagged_price,
        flagged_price,
    })
}

/// What one submission to the growing mechanism produced.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GrowthReceipt {
    pub answer: f64,
    /// True when the holdout stepped in (overfit-corrected answer).
    pub flagged: bool,
    /// Price collected for this answer.
    pub price: f64,
    /// Round that produced the answer.
    pub round: u64,
    /// Global 1-based ordinal of this answer.
    pub submission: u64,
    /// Rounds rolled before this answer could be produced (the same query
    /// is resubmitted across a budget-exhaustion roll).
    pub restarts: u64,
}

/// The growing-holdout mechanism: chained holdout rounds, dual pricing,
/// and the ledger.
#[derive(Debug)]
pub struct EverlastingThresholdout<R: Rng> {
    config: GrowthConfig,
    distribution: Distribution,
    data_rng: R,
    ledger: Ledger,
    holdout: Thresholdout,
    plan: GrowthRound,
    answered_in_round: f64,
    submissions: u64,
    retired: Vec<RetiredRound>,
    events: Vec<MechanismEvent>,
}

impl<R: Rng> EverlastingThresholdout<R> {
    /// Checks the startup-size bounds at the configured analysis constant,
    /// buys the round-0 datasets with the startup subsidy (booked so that
    /// capital starts at exactly zero), and starts round 0.
    pub fn new(config: GrowthConfig, distribution: Distribution, mut data_rng: R) -> Result<Self> {
        let requirement = startup_requirement(
            config.tau,
            config.beta,
            config.exponent,
            config.analysis_constant,
        )?;
        requirement.check(config.initial_size)?;
        let plan = growth_round(&config, 0)?;
        let answer_set = distribution.sample_dataset(plan.round_size, &mut data_rng);
        let check_set = distribution.sample_dataset(plan.round_size, &mut data_rng);
        let holdout = build_holdout(&config, &plan, answer_set, check_set, &mut data_rng)?;
        let subsidy = 2.0 * plan.round_size as f64 * config.sample_unit_cost;
        let mut ledger = Ledger::new(subsidy);
        ledger.spend(Purchase {
            round: 0,
            samples: 2 * plan.round_size,
            cost: subsidy,
        })?;
        let events = vec![MechanismEvent {
            event: EventKind::Purchased,
            i: None,
            t: 0,
            a: None,
            p: subsidy,
            n_t: plan.round_size,
            capital: ledger.capital(),
            flagged: None,
        }];
        Ok(Self {
            config,
            distribution,
            data_rng,
            ledger,
            holdout,
            plan,
            answered_in_round: 0.0,
            submissions: 0,
            retired: Vec::new(),
            events,
        })
    }

    /// Answers one query. A budget-exhaustion halt rolls the round and
    /// resubmits the same query to the fresh round; an answer that fills
    /// the answer cap rolls the round immediately after being served.
    pub fn submit<N: Rng + ?Sized>(&mut self, query: &Query, noise_rng: &mut N) -> Result<GrowthReceipt> {
        let mut restarts = 0u64;
        loop {
            match self.holdout.answer(query, noise_rng)? {
                HoldoutOutcome::Answered { answer, flagged } => {
                    let price = if flagged {
                        self.plan.flagged_price
                    } else {
                        self.plan.unflagged_price
                    };
                    self.ledger.collect(price);
                    self.answered_in_round += 1.0;
                    self.submissions += 1;
                    self.events.push(MechanismEvent {
                        event: EventKind::Answered,
                        i: Some(self.submissions),
                        t: self.plan.round,
                        a: Some(answer),
                        p: price,
                        n_t: self.plan.round_size,
                        capital: self.ledger.capital(),
                        flagged: Some(flagged),
                    });
                    let receipt = GrowthReceipt {
                        answer,
                        flagged,
                        price,
                        round: self.plan.round,
                        submission: self.submissions,
                        restarts,
                    };
                    if self.answered_in_round >= self.plan.answer_cap_floor {
                        self.advance_round(false)?;
                    }
                    return Ok(receipt);
                }
                HoldoutOutcome::Halted => {
                    self.advance_round(true)?;
                    restarts += 1;
                }
            }
        }
    }

    /// Ends the current round: buys the two `N_{t+1}`-sized datasets out of
    /// the round's collected revenue, retires the old data, and installs
    /// round `t + 1`. `exhausted` marks budget-driven ends; the answer cap
    /// is the other trigger.
    fn advance_round(&mut self, exhausted: bool) -> Result<()> {
        let ended = self.plan.round;
        let next_plan = growth_round(&self.config, ended + 1)?;
        debug_assert_eq!(next_plan.round_size, self.plan.next_round_size);
        let cost = 2.0 * next_plan.round_size as f64 * self.config.sample_unit_cost;
        self.events.push(MechanismEvent {
            event: if exhausted {
                EventKind::HaltedPremature
            } else {
                EventKind::HaltedNatural
            },
            i: exhausted.then(|| self.submissions + 1),
            t: ended,
            a: None,
            p: 0.0,
            n_t: self.plan.round_size,
            capital: self.ledger.capital(),
            flagged: None,
        });
        let answer_set = self
            .distribution
            .sample_dataset(next_plan.round_size, &mut self.data_rng);
        let check_set = self
            .distribution
            .sample_dataset(next_plan.round_size, &mut self.data_rng);
        let next_holdout =
            build_holdout(&self.config, &next_plan, answer_set, check_set, &mut self.data_rng)?;
        let old = std::mem::replace(&mut self.holdout, next_holdout);
        let (answer_set, check_set) = old.into_datasets();
        self.retired.push(RetiredRound {
            round: ended,
            answer_set,
            check_set,
        });
        self.ledger.spend(Purchase {
            round: ended + 1,
            samples: 2 * next_plan.round_size,
            cost,
        })?;
        self.plan = next_plan;
        self.answered_in_round = 0.0;
        self.events.push(MechanismEvent {
            event: EventKind::Purchased,
            i: None,
            t: self.plan.round,
            a: None,
            p: cost,
            n_t: self.plan.round_size,
            capital: self.ledger.capital(),
            flagged: None,
        });
        Ok(())
    }

    pub fn config(&self) -> &GrowthConfig {
        &self.config
    }

    /// The live round's schedule.
    pub fn plan(&self) -> &GrowthRound {
        &self.plan
    }

    /// Index of the live round.
    pub fn round(&self) -> u64 {
        self.plan.round
    }

    pub fn ledger(&self) -> &Ledger {
        &self.ledger
    }

    /// The live round's holdout (budget, flag, and halt state).
    pub fn holdout(&self) -> &Thresholdout {
        &self.holdout
    }

    /// Total answers produced across all rounds.
    pub fn submissions(&self) -> u64 {
        self.submissions
    }

    /// Datasets of ended rounds, now public.
    pub fn retired_rounds(&self) -> &[RetiredRound] {
        &self.retired
    }

    pub fn events(&self) -> &[MechanismEvent] {
        &self.events
    }

    /// Drains the accumulated event stream (e.g. after a finished trial).
    pub fn take_events(&mut self) -> Vec<MechanismEvent> {
        std::mem::take(&mut self.events)
    }

    /// Replaces the live round's datasets (fresh budget and threshold
    /// shift), so tests can stage disagreement states directly.
    #[cfg(test)]
    pub(crate) fn rig_round_data(&mut self, answer_set: Dataset, check_set: Dataset) -> Result<()> {
        self.holdout =
            build_holdout(&self.config, &self.plan, answer_set, check_set, &mut self.data_rng)?;
        Ok(())
    }

    /// Overrides the live round's answer cap and plain-answer price
    /// consistently, so tests can reach the cap-driven roll.
    #[cfg(test)]
    pub(crate) fn rig_answer_cap(&mut self, answer_cap_floor: f64, unflagged_price: f64) {
        self.plan.answer_cap_floor = answer_cap_floor;
        self.plan.unflagged_price = unflagged_price;
    }
}

fn build_holdout<R: Rng>(
    config: &GrowthConfig,
    plan: &GrowthRound,
    answer_set: Dataset,
    check_set: Dataset,
    rng: &mut R,
) -> Result<Thresholdout> {
    let allotment = plan.answer_cap_floor.min(u64::MAX as f64) as u64;
    let budget = plan.budget_floor.min(u64::MAX as f64) as u64;
    let holdout_config = HoldoutConfig::with_noise_scale(
        config.tau,
        plan.round_beta,
        allotment,
        budget,
        plan.noise_scale,
    )?;
    Thresholdout::new(holdout_config, answer_set, check_set, rng)
}

/// Numeric verification of the two schedule-feasibility inequalities and
/// the failure-share identity over a round grid.
#[derive(Debug, Clone, Serialize)]
pub struct GrowthLemmaReport {
    pub tau: f64,
    pub beta: f64,
    pub exponent: f64,
    pub startup_size: u64,
    /// Rounds checked: `t = 0..=rounds`.
    pub rounds: u64,
    /// Minimum over the grid of (log-space) slack in
    /// `e^{-t} (a(t+b))^{1/(2-2p)} <= (a(b + 1/(2-2p)))^{1/(2-2p)}`.
    pub sup_margin_min: f64,
    /// Slack of the same bound at the interior critical point
    /// `t = 1/(2-2p) - b`, present only when that point is nonnegative.
    pub critical_point_margin: Option<f64>,
    /// Minimum over the grid of slack in
    /// `2n^p e^{pt} - (3-2p)t - (2-2p)ln n >= min(first, second)` where
    /// `first = ln n - ((3-2p)/p) ln((3-2p)/(2ep))` and
    /// `second = 2n^p - (2-2p)ln n`.
    pub branch_margin_min: f64,
    /// Size threshold `((3-2p)/2p)^{1/p}` above which the first branch
    /// term is the smaller one.
    pub branch_threshold: f64,
    /// Whether `first <= second`, evaluated only at sizes above the
    /// threshold.
    pub first_term_is_minimizer: Option<bool>,
    /// `|sum_{t=0..rounds} beta_t - beta (1 - e^{-(rounds+1)})|`.
    pub beta_share_residual: f64,
    /// Human-readable descriptions of any failed check. Empty means all
    /// inequalities held on the grid.
    pub violations: Vec<String>,
}

impl GrowthLemmaReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Evaluates both schedule-feasibility inequalities on `t = 0..=rounds`
/// (always at the full analysis constant — the inequalities are stated for
/// it) plus the failure-share geometric identity. Any reported violation
/// means a transcription bug, not a tolerance issue: the margins are far
/// above roundoff everywhere on sane grids.
pub fn verify_growth_lemmas(
    tau: f64,
    beta: f64,
    exponent: f64,
    startup_size: u64,
    rounds: u64,
) -> Result<GrowthLemmaReport> {
    validate_tau_beta(tau, beta)?;
    if !(exponent > 0.0 && exponent < 1.0) {
        return Err(Error::Config(format!(
            "growth exponent must lie in (0, 1), got {exponent}"
        )));
    }
    if startup_size == 0 {
        return Err(Error::Config("startup size must be at least 1".into()));
    }
    let e = std::f64::consts::E;
    let p = exponent;
    let mut violations = Vec::new();

    // Sup bound, in log space.
    let a = 8.0 * FULL_ANALYSIS_CONSTANT * FULL_ANALYSIS_CONSTANT / tau.powi(4);
    let b = (1664.0 * e * (208.0 / tau).ln() / ((e - 1.0) * tau * beta)).ln();
    let cc = 1.0 / (2.0 - 2.0 * p);
    let rhs_log = cc * (a * (b + cc)).ln();
    let sup_tolerance = ROUNDOFF_GUARD * rhs_log.abs().max(1.0);
    let mut sup_margin_min = f64::INFINITY;
    for t in 0..=rounds {
        let tf = t as f64;
        let margin = rhs_log - (-tf + cc * (a * (tf + b)).ln());
        sup_margin_min = sup_margin_min.min(margin);
        if margin < -sup_tolerance {
            violations.push(format!("sup bound violated at t = {t}: margin {margin:.3e}"));
        }
    }
    let critical_point_margin = (cc >= b).then(|| rhs_log - ((b - cc) + cc * (a * cc).ln()));
    if let Some(margin) = critical_point_margin {
        if margin < -sup_tolerance {
            violations.push(format!(
                "sup bound violated at its critical point: margin {margin:.3e}"
            ));
        }
    }

    // Branch bound, evaluated directly.
    let n = startup_size as f64;
    let first = n.ln() - ((3.0 - 2.0 * p) / p) * ((3.0 - 2.0 * p) / (2.0 * e * p)).ln();
    let second = 2.0 * n.powf(p) - (2.0 - 2.0 * p) * n.ln();
    let rhs = first.min(second);
    let mut branch_margin_min = f64::INFINITY;
    for t in 0..=rounds {
        let tf = t as f64;
        let lhs = 2.0 * n.powf(p) * (p * tf).exp() - (3.0 - 2.0 * p) * tf - (2.0 - 2.0 * p) * n.ln();
        let margin = lhs - rhs;
        branch_margin_min = branch_margin_min.min(margin);
        if margin < -ROUNDOFF_GUARD * lhs.abs().max(rhs.abs()).max(1.0) {
            violations.push(format!(
                "branch bound violated at t = {t}: margin {margin:.3e}"
            ));
        }
    }
    let branch_threshold = ((3.0 - 2.0 * p) / (2.0 * p)).powf(1.0 / p);
    let first_term_is_minimizer =
        (n >= branch_threshold).then(|| first <= second + ROUNDOFF_GUARD * second.abs().max(1.0));
    if first_term_is_minimizer == Some(false) {
        violations.push(
            "first branch term fails to be the minimizer above the size threshold".into(),
        );
    }

    // Failure-share geometric identity.
    let coefficient = beta * (1.0 - (-1.0f64).exp());
    let mut share = KahanSum::new();
    for t in 0..=rounds {
        share.add(coefficient * (-(t as f64)).exp());
    }
    let target = beta * (1.0 - (-(rounds as f64 + 1.0)).exp());
    let beta_share_residual = (share.total() - target).abs();
    if beta_share_residual > ROUNDOFF_GUARD {
        violations.push(format!(
            "failure-share sum misses the geometric identity by {beta_share_residual:.3e}"
        ));
    }
    if share.total() > beta + ROUNDOFF_GUARD {
        violations.push("failure-share sum exceeds the total failure share".into());
    }

    Ok(GrowthLemmaReport {
        tau,
        beta,
        exponent,
        startup_size,
        rounds,
        sup_margin_min,
        critical_point_margin,
        branch_margin_min,
        branch_threshold,
        first_term_is_minimizer,
        beta_share_residual,
        violations,
    })
}
