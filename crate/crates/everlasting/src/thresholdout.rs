// Copyright (c) 2026 The Everlasting Database Contributors
// SPDX-License-Identifier: Apache-2.0

//! A budget-limited reusable holdout.
//!
//! The mechanism keeps a training set and a holdout set. Each query is
//! normally answered with the training-set mean, *exactly* and at no cost to
//! the overfit budget. Only when the two empirical means disagree beyond a
//! noisy threshold does the holdout step in: the answer is then the holdout
//! mean plus Laplace noise, the noisy threshold is redrawn, and one unit of
//! the overfit budget is consumed. When the budget is gone the mechanism
//! halts permanently; the halt is announced at the top of the next
//! submission, which consumes no randomness.
//!
//! Noise layout for validity width `tau`, failure share `beta`, and a
//! declared allotment of `m` queries: base scale
//! `sigma = tau / (48 ln(4m / beta))`, threshold `zeta = 3 tau / 4`,
//! per-query threshold perturbation `Lap(4 sigma)`, sticky threshold shift
//! `Lap(2 sigma)` (redrawn only on corrections), answer noise `Lap(sigma)`.
//! These scales give per-query tail bounds of exactly `beta / (4m)` for the
//! events `|Lap(4 sigma)| > tau / 12` and `|Lap(2 sigma)| > tau / 24`.
//!
//! Draw order is pinned for reproducibility: threshold perturbation first
//! (every non-halted query), then, only on a correction, answer noise
//! followed by the fresh threshold shift.
//!
//! The declared allotment `m` is advisory here: it sets the noise scale,
//! and [`holdout_feasibility`] reports the dataset sizes the analysis wants,
//! but the simulator answers however many queries callers submit.

use rand::Rng;
use serde::Serialize;

use crate::data::{Dataset, Query};
use crate::error::{Error, Result};
use crate::noise::{validate_tau_beta, Laplace};

/// Static configuration of the reusable holdout.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HoldoutConfig {
    tau: f64,
    beta: f64,
    query_allotment: u64,
    budget: u64,
    threshold: f64,
    noise_scale: f64,
}

impl HoldoutConfig {
    pub fn new(tau: f64, beta: f64, query_allotment: u64, budget: u64) -> Result<Self> {
        validate_tau_beta(tau, beta)?;
        if query_allotment == 0 {
            return Err(Error::Config("query allotment must be at least 1".into()));
        }
        let noise_scale = tau / (48.0 * (4.0 * query_allotment as f64 / beta).ln());
        Ok(Self {
            tau,
            beta,
            query_allotment,
            budget,
            threshold: 3.0 * tau / 4.0,
            noise_scale,
        })
    }

    /// Builds a config with an externally supplied noise scale, bypassing
    /// the `m`-derived formula. Used by the growing mechanism, whose answer
    /// caps (and hence scales) come from log-space quantities too large for
    /// direct arithmetic. The allotment is informational there.
    pub(crate) fn with_noise_scale(
        tau: f64,
        beta: f64,
        query_allotment: u64,
        budget: u64,
        noise_scale: f64,
    ) -> Result<Self> {
        validate_tau_beta(tau, beta)?;
        if query_allotment == 0 {
            return Err(Error::Config("query allotment must be at least 1".into()));
        }
        if !noise_scale.is_finite() || noise_scale <= 0.0 {
            return Err(Error::Config(format!(
                "noise scale must be positive and finite, got {noise_scale}"
            )));
        }
        Ok(Self {
            tau,
            beta,
            query_allotment,
            budget,
            threshold: 3.0 * tau / 4.0,
            noise_scale,
        })
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    /// Declared number of queries `m` (drives the noise scale only).
    pub fn query_allotment(&self) -> u64 {
        self.query_allotment
    }

    /// Overfit budget `B`.
    pub fn budget(&self) -> u64 {
        self.budget
    }

    /// Disagreement threshold `zeta = 3 tau / 4`.
    pub fn threshold(&self) -> f64 {
        self.threshold
    }

    /// Base Laplace scale `sigma`.
    pub fn noise_scale(&self) -> f64 {
        self.noise_scale
    }
}

/// Dataset sizes required by the privacy analyses, for a given config.
/// Purely advisory: construction does not enforce them.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HoldoutFeasibility {
    /// Holdout size under the pure-privacy analysis:
    /// `768 B ln(4m/beta) / tau^2`.
    pub pure_min_n: f64,
    /// Holdout size under the approximate-privacy analysis: the larger of
    /// [`approx_first_term`](Self::approx_first_term) and
    /// [`approx_second_term`](Self::approx_second_term).
    pub approx_min_n: f64,
    /// `9984 ln(4m/beta) sqrt(32 B ln(1664 ln(208/tau) / (beta tau))) / tau^2`.
    pub approx_first_term: f64,
    /// `21632 ln(6656 ln(208/tau) / (beta tau)) / tau^2`.
    pub approx_second_term: f64,
}

/// Evaluates both privacy-analysis size requirements for a configuration.
pub fn holdout_feasibility(
    tau: f64,
    beta: f64,
    query_allotment: u64,
    budget: u64,
) -> Result<HoldoutFeasibility> {
    validate_tau_beta(tau, beta)?;
    if query_allotment == 0 {
        return Err(Error::Config("query allotment must be at least 1".into()));
    }
    let m = query_allotment as f64;
    let b = budget as f64;
    let l = (4.0 * m / beta).ln();
    let tau2 = tau * tau;
    let pure_min_n = 768.0 * b * l / tau2;
    let inner = (1664.0 * (208.0 / tau).ln() / (beta * tau)).ln();
    let approx_first_term = 9984.0 * l * (32.0 * b * inner).sqrt() / tau2;
    let approx_second_term = 21632.0 * (6656.0 * (208.0 / tau).ln() / (beta * tau)).ln() / tau2;
    Ok(HoldoutFeasibility {
        pure_min_n,
        approx_min_n: approx_first_term.max(approx_second_term),
        approx_first_term,
        approx_second_term,
    })
}

/// What the holdout did with one submitted query.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum HoldoutOutcome {
    /// `flagged` marks a holdout correction (noisy holdout mean, one budget
    /// unit consumed). Unflagged answers are the training-set mean, exactly.
    Answered { answer: f64, flagged: bool },
    /// The overfit budget is exhausted; this and all future submissions go
    /// unanswered.
    Halted,
}

/// A live reusable holdout.
#[derive(Debug, Clone)]
pub struct Thresholdout {
    config: HoldoutConfig,
    answer_set: Dataset,
    check_set: Dataset,
    budget_left: u64,
    shift: f64,
    halted: bool,
    answered: u64,
    flags: u64,
    perturbation_noise: Laplace,
    answer_noise: Laplace,
    shift_noise: Laplace,
}

impl Thresholdout {
    /// Builds the holdout over a training set and a holdout set on the same
    /// domain, drawing the initial threshold shift from `Lap(2 sigma)`.
    pub fn new<R: Rng + ?Sized>(
        config: HoldoutConfig,
        answer_set: Dataset,
        check_set: Dataset,
        rng: &mut R,
    ) -> Result<Self> {
        crate::data::ensure_same_domain(answer_set.domain(), check_set.domain(), "holdout datasets")?;
        if answer_set.n() == 0 || check_set.n() == 0 {
            return Err(Error::EmptyDataset("holdout needs nonempty datasets".into()));
        }
        let sigma = config.noise_scale();
        let perturbation_noise = Laplace::new(4.0 * sigma)?;
        let answer_noise = Laplace::new(sigma)?;
        let shift_noise = Laplace::new(2.0 * sigma)?;
        let shift = shift_noise.sample(rng);
        Ok(Self {
            config,
            answer_set,
            check_set,
            budget_left: config.budget(),
            shift,
            halted: false,
            answered: 0,
            flags: 0,
            perturbation_noise,
            answer_noise,
            shift_noise,
        })
    }

    /// Processes one query. Halting (and being already halted) consumes no
    /// randomness and is idempotent.
    pub fn answer<R: Rng + ?Sized>(&mut self, query: &Query, rng: &mut R) -> Result<HoldoutOutcome> {
        if self.halted {
            return Ok(HoldoutOutcome::Halted);
        }
        if self.budget_left < 1 {
            self.halted = true;
            return Ok(HoldoutOutcome::Halted);
        }
        let sample_mean = self.answer_set.empirical_mean(query)?;
        let holdout_mean = self.check_set.empirical_mean(query)?;
        let lambda = self.perturbation_noise.sample(rng);
        if (sample_mean - holdout_mean).abs() > self.config.threshold() + self.shift + lambda {
            let xi = self.answer_noise.sample(rng);
            self.shift = self.shift_noise.sample(rng);
            self.budget_left -= 1;
            self.flags += 1;
            self.answered += 1;
            Ok(HoldoutOutcome::Answered { answer: holdout_mean + xi, flagged: true })
        } else {
            self.answered += 1;
            Ok(HoldoutOutcome::Answered { answer: sample_mean, flagged: false })
        }
    }

    pub fn config(&self) -> &HoldoutConfig {
        &self.config
    }

    /// Remaining overfit budget.
    pub fn budget_left(&self) -> u64 {
        self.budget_left
    }

    /// Queries answered (flagged or not).
    pub fn answered(&self) -> u64 {
        self.answered
    }

    /// Corrections issued so far.
    pub fn flags(&self) -> u64 {
        self.flags
    }

    /// True once the budget-exhaustion halt has been announced.
    pub fn is_halted(&self) -> bool {
        self.halted
    }

    /// Consumes the holdout, releasing its datasets.
    pub fn into_datasets(self) -> (Dataset, Dataset) {
        (self.answer_set, self.check_set)
    }
}
