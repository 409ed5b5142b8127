// Copyright (c) 2026 The Everlasting Database Contributors
// SPDX-License-Identifier: Apache-2.0

//! A priced validation service that answers statistical queries forever.
//!
//! The mechanism runs a sequence of validation rounds over freshly purchased
//! data. Round `t` uses two datasets of size `N_t = 3^t N_0` and failure
//! share `beta_t = beta / 2^(t+1)`, so round sizes triple while failure
//! shares halve; the total failure probability stays below `beta` and the
//! per-round answer caps grow so fast that the service never runs out of
//! rounds to sell.
//!
//! Money flows through an internal ledger denominated in data cost:
//!
//! * A one-time startup subsidy of `36 ln(8/beta) / tau^2` (times the unit
//!   sample cost) pays for the first two datasets.
//! * The `i`-th answered query ever costs its asker `96 / (tau^2 i)` (times
//!   unit cost): prices decay harmonically, so any fixed user's lifetime
//!   spend grows only logarithmically.
//! * When a round halts, the asker whose query halted it is charged the
//!   shortfall between current capital and the cost of the next two
//!   datasets, `max(0, 6 N_t c - capital)`. A round that ends naturally (its
//!   answer cap exhausted) has already collected enough low prices, so the
//!   clamp makes that charge exactly zero; only queries that *prematurely*
//!   halt a round - the signature of overfitting attempts - pay real money.
//! * The halting query is resubmitted to the new round automatically at the
//!   same global index. By default it also pays the regular per-answer price
//!   when finally answered ("double charge"); configurations may waive it.
//!
//! Retired datasets are moved to a public log: once a round is over, its
//! data is spent and may be disclosed.

use rand::Rng;
use serde::Serialize;

use crate::data::{Dataset, Distribution, Query};
use crate::error::{Error, Result};
use crate::kahan::KahanSum;
use crate::noise::validate_tau_beta;
use crate::round::{RoundConfig, RoundOutcome, ValidationRound};
use crate::tolerances::LEDGER_ABS;

/// Startup subsidy `36 ln(8/beta) / tau^2`, in sample units.
pub fn startup_subsidy(tau: f64, beta: f64) -> Result<f64> {
    validate_tau_beta(tau, beta)?;
    Ok(36.0 * (8.0 / beta).ln() / (tau * tau))
}

/// Size of each round-0 dataset: `ceil(subsidy / 2)`.
pub fn initial_round_size(tau: f64, beta: f64) -> Result<u64> {
    let half = startup_subsidy(tau, beta)? / 2.0;
    let n0 = half.ceil();
    if n0 >= (1u64 << 53) as f64 {
        return Err(Error::Overflow("initial round size"));
    }
    Ok(n0 as u64)
}

/// Price of the `i`-th answered query (1-based): `96 / (tau^2 i)`, in
/// sample units.
pub fn answer_price(tau: f64, i: u64) -> f64 {
    assert!(i >= 1, "answer indices are 1-based");
    96.0 / (tau * tau * i as f64)
}

/// The deterministic round schedule: exact sizes, failure shares, caps.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RoundPlan {
    pub round: u64,
    /// `3^t * N_0`, exact.
    pub round_size: u128,
    /// `beta / 2^(t+1)`, exact (power-of-two scaling).
    pub round_beta: f64,
    /// Per-round answer cap, saturated at [`crate::round::CAP_SATURATED`].
    pub answer_cap: u64,
    pub noise_variance: f64,
}

/// Computes round `t` of the schedule without running a mechanism.
pub fn round_plan(tau: f64, beta: f64, t: u64) -> Result<RoundPlan> {
    let n0 = initial_round_size(tau, beta)? as u128;
    let growth = 3u128
        .checked_pow(u32::try_from(t).map_err(|_| Error::Overflow("round index"))?)
        .ok_or(Error::Overflow("round size"))?;
    let round_size = n0.checked_mul(growth).ok_or(Error::Overflow("round size"))?;
    let round_beta = beta / 2f64.powi(i32::try_from(t + 1).map_err(|_| Error::Overflow("round index"))?);
    if round_beta <= 0.0 {
        return Err(Error::Overflow("round failure share underflowed"));
    }
    let n_f = round_size as f64;
    // Cap and noise variance via the same closed forms as a live round,
    // evaluated in f64 so sizes beyond u64 still plan correctly.
    let answer_cap = crate::round::cap_from_log((round_beta / 4.0).ln() + n_f * tau * tau / 8.0)?;
    let noise_variance = tau * tau / (32.0 * (8.0 * n_f * n_f / round_beta).ln());
    Ok(RoundPlan { round: t, round_size, round_beta, answer_cap, noise_variance })
}

/// Static configuration of the mechanism.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, serde::Deserialize)]
pub struct MechanismConfig {
    pub tau: f64,
    pub beta: f64,
    /// Cost of one sample; all monetary quantities scale linearly with it.
    pub sample_unit_cost: f64,
    /// When true (the default), a query that restarts the round also pays
    /// the regular per-answer price once answered; when false, that price
    /// is waived for the resubmitted query.
    pub double_charge_on_restart: bool,
}

impl MechanismConfig {
    pub fn new(tau: f64, beta: f64) -> Result<Self> {
        validate_tau_beta(tau, beta)?;
        Ok(Self {
            tau,
            beta,
            sample_unit_cost: 1.0,
            double_charge_on_restart: true,
        })
    }

    pub fn with_sample_unit_cost(mut self, cost: f64) -> Result<Self> {
        if !cost.is_finite() || cost <= 0.0 {
            return Err(Error::Config(format!("sample unit cost {cost} must be positive")));
        }
        self.sample_unit_cost = cost;
        Ok(self)
    }

    pub fn with_double_charge(mut self, double_charge: bool) -> Self {
        self.double_charge_on_restart = double_charge;
        self
    }
}

/// One data purchase booked by the ledger.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Purchase {
    pub round: u64,
    pub samples: u64,
    pub cost: f64,
}

/// The mechanism's accounting: subsidy in, prices in, data out.
///
/// Arithmetic discipline: collections that must raise capital to a target
/// assign the target directly (`collect_up_to`), and every purchase spends
/// exactly that target, so `capital >= 0` holds exactly in floating point,
/// not merely within a tolerance.
#[derive(Debug, Clone)]
pub struct Ledger {
    capital: f64,
    subsidy: f64,
    revenue: KahanSum,
    spending: KahanSum,
    purchases: Vec<Purchase>,
}

impl Ledger {
    pub(crate) fn new(subsidy: f64) -> Self {
        Self {
            capital: subsidy,
            subsidy,
            revenue: KahanSum::new(),
            spending: KahanSum::new(),
            purchases: Vec::new(),
        }
    }

    /// Collects a fixed payment.
    pub(crate) fn collect(&mut self, amount: f64) {
        debug_assert!(amount >= 0.0);
        self.revenue.add(amount);
        self.capital += amount;
    }

    /// Charges exactly the shortfall to reach `needed`; afterwards capital
    /// is at least `needed` exactly. Returns the amount charged.
    fn collect_up_to(&mut self, needed: f64) -> f64 {
        let charged = (needed - self.capital).max(0.0);
        if charged > 0.0 {
            self.revenue.add(charged);
            self.capital = needed;
        }
        charged
    }

    /// Books a purchase. Capital may not go negative beyond rounding dust.
    pub(crate) fn spend(&mut self, purchase: Purchase) -> Result<()> {
        let next = self.capital - purchase.cost;
        if next < -LEDGER_ABS {
            return Err(Error::Ledger(format!(
                "purchase of {} exceeds capital {} in round {}",
                purchase.cost, self.capital, purchase.round
            )));
        }
        self.capital = next.max(0.0);
        self.spending.add(purchase.cost);
        self.purchases.push(purchase);
        Ok(())
    }

    pub fn capital(&self) -> f64 {
        self.capital
    }

    /// The one-time startup subsidy.
    pub fn subsidy(&self) -> f64 {
        self.subsidy
    }

    /// Total collected from users.
    pub fn revenue(&self) -> f64 {
        self.revenue.total()
    }

    /// Total spent on data.
    pub fn spending(&self) -> f64 {
        self.spending.total()
    }

    pub fn purchases(&self) -> &[Purchase] {
        &self.purchases
    }

    /// Total samples ever bought.
    pub fn samples_bought(&self) -> u64 {
        self.purchases.iter().map(|p| p.samples).sum()
    }

    /// `capital - (subsidy + revenue - spending)`: zero in exact arithmetic.
    pub fn conservation_residual(&self) -> f64 {
        self.capital - (self.subsidy + self.revenue.total() - self.spending.total())
    }
}

/// Kind discriminator for [`MechanismEvent`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    Answered,
    HaltedPremature,
    HaltedNatural,
    Purchased,
}

/// One line of the mechanism's event stream (serialized as JSON).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MechanismEvent {
    pub event: EventKind,
    /// Global answer index: the index answered, or the index at which a
    /// halted query will be resubmitted. Absent for purchases.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub i: Option<u64>,
    /// Round the event belongs to.
    pub t: u64,
    /// The produced answer, for `answered` events.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub a: Option<f64>,
    /// Money moved: price collected, restart charge, or purchase cost.
    pub p: f64,
    /// Per-dataset size of the round the event refers to.
    #[serde(rename = "N_t")]
    pub n_t: u64,
    /// Ledger capital after the event.
    pub capital: f64,
    /// Whether the answer was flagged as overfit. Only present for
    /// `answered` events of mechanisms that flag answers.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub flagged: Option<bool>,
}

/// The extra charge levied when a submission restarts the round.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RestartCharge {
    /// The round that ended.
    pub round: u64,
    /// Amount actually charged, after clamping at current capital.
    pub amount: f64,
    /// True when the round halted inside its answer cap (disagreement),
    /// false when the cap was simply exhausted.
    pub premature: bool,
    /// Global answer index at which the halt occurred (and at which the
    /// query is resubmitted).
    pub at_index: u64,
}

/// Everything the mechanism tells the asker about one submission.
#[derive(Debug, Clone, PartialEq)]
pub struct SubmitReceipt {
    pub answer: f64,
    /// Global 1-based answer index.
    pub index: u64,
    /// Round that produced the answer.
    pub round: u64,
    /// Per-answer price paid (zero if waived after a restart).
    pub low_price: f64,
    /// Restart charges incurred on the way to this answer, oldest first.
    pub restart_charges: Vec<RestartCharge>,
    /// Total charged for this submission.
    pub price: f64,
    /// Diagnostic: `|answer - sample mean|` (noise magnitude). For auditing
    /// only; not part of the user-visible exchange.
    pub answer_margin: f64,
    /// Diagnostic: `|answer - holdout mean|`. For auditing only.
    pub holdout_margin: f64,
}

/// A retired round's datasets, released to the public log.
#[derive(Debug, Clone)]
pub struct RetiredRound {
    pub round: u64,
    pub answer_set: Dataset,
    pub check_set: Dataset,
}

/// The everlasting mechanism: rounds, pricing, and the ledger.
///
/// `R` is the mechanism-owned RNG used exclusively for data purchases;
/// answer noise comes from the RNG passed to [`submit`](Self::submit), so a
/// harness can give each user an independent noise stream.
#[derive(Debug)]
pub struct EverlastingValidation<R: Rng> {
    config: MechanismConfig,
    distribution: Distribution,
    data_rng: R,
    ledger: Ledger,
    round: ValidationRound,
    round_index: u64,
    round_size: u64,
    round_beta: f64,
    next_index: u64,
    retired: Vec<RetiredRound>,
    events: Vec<MechanismEvent>,
}

impl<R: Rng> EverlastingValidation<R> {
    /// Stands up the service: books the subsidy, buys round 0's two
    /// datasets (answering set first, then holdout), and opens for queries.
    ///
    /// The round-0 purchase is booked at exactly the subsidy - the supplier
    /// absorbs the rounding from `ceil(subsidy / 2)` - so capital starts at
    /// exactly zero and every later balance is user-funded.
    pub fn new(config: MechanismConfig, distribution: Distribution, mut data_rng: R) -> Result<Self> {
        let subsidy_units = startup_subsidy(config.tau, config.beta)?;
        let n0 = initial_round_size(config.tau, config.beta)?;
        debug_assert!(
            n0 as f64 >= 18.0 * std::f64::consts::LN_2 / (config.tau * config.tau),
            "round-0 size is always above the agreement-concentration floor"
        );
        let round_cfg = RoundConfig::new(config.tau, config.beta / 2.0, n0)?;
        let answer_set = distribution.sample_dataset(n0, &mut data_rng);
        let check_set = distribution.sample_dataset(n0, &mut data_rng);
        let round = ValidationRound::new(round_cfg, answer_set, check_set)?;
        let subsidy = subsidy_units * config.sample_unit_cost;
        let mut ledger = Ledger::new(subsidy);
        ledger.spend(Purchase { round: 0, samples: 2 * n0, cost: subsidy })?;
        let events = vec![MechanismEvent {
            event: EventKind::Purchased,
            i: None,
            t: 0,
            a: None,
            p: subsidy,
            n_t: n0,
            capital: ledger.capital(),
            flagged: None,
        }];
        Ok(Self {
            config,
            distribution,
            data_rng,
            ledger,
            round,
            round_index: 0,
            round_size: n0,
            round_beta: config.beta / 2.0,
            next_index: 1,
            retired: Vec::new(),
            events,
        })
    }

    /// Answers one query, restarting rounds as needed. Never refuses: a
    /// halt only triggers a data refresh (and its charge), after which the
    /// same query is resubmitted at the same global index.
    pub fn submit<N: Rng + ?Sized>(&mut self, query: &Query, noise_rng: &mut N) -> Result<SubmitReceipt> {
        let mut restart_charges: Vec<RestartCharge> = Vec::new();
        loop {
            match self.round.answer(query, noise_rng)? {
                RoundOutcome::Answered { answer, sample_mean, holdout_mean, .. } => {
                    let index = self.next_index;
                    let waived = !self.config.double_charge_on_restart && !restart_charges.is_empty();
                    let low_price = if waived {
                        0.0
                    } else {
                        self.config.sample_unit_cost * answer_price(self.config.tau, index)
                    };
                    if low_price > 0.0 {
                        self.ledger.collect(low_price);
                    }
                    self.next_index += 1;
                    self.events.push(MechanismEvent {
                        event: EventKind::Answered,
                        i: Some(index),
                        t: self.round_index,
                        a: Some(answer),
                        p: low_price,
                        n_t: self.round_size,
                        capital: self.ledger.capital(),
                        flagged: None,
                    });
                    let mut price = KahanSum::new();
                    price.add(low_price);
                    for c in &restart_charges {
                        price.add(c.amount);
                    }
                    return Ok(SubmitReceipt {
                        answer,
                        index,
                        round: self.round_index,
                        low_price,
                        price: price.total(),
                        restart_charges,
                        answer_margin: (answer - sample_mean).abs(),
                        holdout_margin: (answer - holdout_mean).abs(),
                    });
                }
                RoundOutcome::Halted { premature, .. } => {
                    let charge = self.advance_round(premature)?;
                    restart_charges.push(charge);
                }
            }
        }
    }

    /// Ends the current round: charges the shortfall for the next two
    /// datasets, buys them, retires the old data, and installs round `t+1`.
    fn advance_round(&mut self, premature: bool) -> Result<RestartCharge> {
        let ended = self.round_index;
        let next_size = self.round_size.checked_mul(3).ok_or(Error::Overflow("round size"))?;
        let cost = 2.0 * next_size as f64 * self.config.sample_unit_cost;
        let amount = self.ledger.collect_up_to(cost);
        let at_index = self.next_index;
        self.events.push(MechanismEvent {
            event: if premature { EventKind::HaltedPremature } else { EventKind::HaltedNatural },
            i: Some(at_index),
            t: ended,
            a: None,
            p: amount,
            n_t: self.round_size,
            capital: self.ledger.capital(),
            flagged: None,
        });

        let next_beta = self.round_beta / 2.0;
        let round_cfg = RoundConfig::new(self.config.tau, next_beta, next_size)?;
        let answer_set = self.distribution.sample_dataset(next_size, &mut self.data_rng);
        let check_set = self.distribution.sample_dataset(next_size, &mut self.data_rng);
        let new_round = ValidationRound::new(round_cfg, answer_set, check_set)?;
        let old_round = std::mem::replace(&mut self.round, new_round);
        let (answer_set, check_set) = old_round.into_datasets();
        self.retired.push(RetiredRound { round: ended, answer_set, check_set });
        self.ledger.spend(Purchase { round: ended + 1, samples: 2 * next_size, cost })?;
        self.round_index = ended + 1;
        self.round_size = next_size;
        self.round_beta = next_beta;
        self.events.push(MechanismEvent {
            event: EventKind::Purchased,
            i: None,
            t: self.round_index,
            a: None,
            p: cost,
            n_t: next_size,
            capital: self.ledger.capital(),
            flagged: None,
        });
        Ok(RestartCharge { round: ended, amount, premature, at_index })
    }

    pub fn config(&self) -> &MechanismConfig {
        &self.config
    }

    pub fn ledger(&self) -> &Ledger {
        &self.ledger
    }

    /// Current round number `t`.
    pub fn round_index(&self) -> u64 {
        self.round_index
    }

    /// Per-dataset size `N_t` of the current round.
    pub fn round_size(&self) -> u64 {
        self.round_size
    }

    /// Failure share `beta_t` of the current round.
    pub fn round_beta(&self) -> f64 {
        self.round_beta
    }

    /// Global index the next answer will carry.
    pub fn next_index(&self) -> u64 {
        self.next_index
    }

    /// Total queries answered so far.
    pub fn answered(&self) -> u64 {
        self.next_index - 1
    }

    pub fn current_round(&self) -> &ValidationRound {
        &self.round
    }

    /// Datasets of all completed rounds (the public log).
    pub fn retired(&self) -> &[RetiredRound] {
        &self.retired
    }

    pub fn events(&self) -> &[MechanismEvent] {
        &self.events
    }

    /// Drains the accumulated event stream.
    pub fn take_events(&mut self) -> Vec<MechanismEvent> {
        std::mem::take(&mut self.events)
    }

    /// Test-only: installs a handcrafted round-0 dataset pair, keeping the
    /// schedule and accounting untouched. Lets unit tests force halts that
    /// honest sampling would essentially never produce.
    #[cfg(test)]
    pub(crate) fn rig_round_data(&mut self, answer_set: Dataset, check_set: Dataset) -> Result<()> {
        let cfg = *self.round.config();
        self.round = ValidationRound::new(cfg, answer_set, check_set)?;
        Ok(())
    }
}
