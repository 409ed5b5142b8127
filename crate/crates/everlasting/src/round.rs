// Copyright (c) 2026 The Everlasting Database Contributors
// SPDX-License-Identifier: Apache-2.0

//! A single validation round over one pair of fresh datasets.
//!
//! The round holds an answering dataset and a same-size holdout. Each
//! incoming query is answered with the answering-set mean plus truncated
//! Gaussian noise, but only while two conditions hold: the two empirical
//! means agree within `tau / 2` (compared exactly, no epsilon), and the
//! running answer count stays within the round's answer cap. The first query
//! that breaks either condition halts the round permanently; a halt is
//! *premature* when it arrives at an index still inside the cap, i.e. it was
//! caused by disagreement rather than cap exhaustion. A halting query never
//! consumes a noise draw, which keeps RNG stream positions deterministic for
//! replay.

use rand::Rng;

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::noise::{answer_noise_variance, validate_tau_beta, TruncatedGaussian};
use crate::tolerances::CAP_SNAP_REL;

/// Sentinel cap for configurations whose real-valued cap exceeds `2^62`:
/// effectively unbounded, kept finite so arithmetic on counts stays in u64.
pub const CAP_SATURATED: u64 = 1 << 62;

/// Answer cap `floor((beta / 4) exp(n tau^2 / 8))`.
///
/// Evaluated in log space so large configurations saturate to
/// [`CAP_SATURATED`] instead of overflowing, and snapped to an adjacent
/// integer within a relative `1e-9` so exact-boundary configurations floor
/// correctly. Errors when the cap is below one answer.
pub fn answer_cap(tau: f64, beta: f64, n: u64) -> Result<u64> {
    validate_tau_beta(tau, beta)?;
    if n == 0 {
        return Err(Error::Config("dataset size must be at least 1".into()));
    }
    cap_from_log((beta / 4.0).ln() + n as f64 * tau * tau / 8.0)
}

/// Shared floor-with-snap evaluation of a cap given in log space; also used
/// by schedule planners whose round sizes may exceed u64.
pub(crate) fn cap_from_log(ln_cap: f64) -> Result<u64> {
    if ln_cap >= 62.0 * std::f64::consts::LN_2 {
        return Ok(CAP_SATURATED);
    }
    let real = ln_cap.exp();
    let nearest = real.round();
    let snapped = if (real - nearest).abs() <= CAP_SNAP_REL * nearest.max(1.0) {
        nearest
    } else {
        real
    };
    if snapped < 1.0 {
        return Err(Error::Config(format!(
            "answer cap {real:.6} is below 1; increase n or beta, or decrease tau"
        )));
    }
    Ok(snapped as u64)
}

/// Parameters of one validation round.
#[derive(Debug, Clone, Copy)]
pub struct RoundConfig {
    tau: f64,
    beta: f64,
    n: u64,
    noise_variance: f64,
    noise_bound: f64,
    answer_cap: u64,
}

impl RoundConfig {
    pub fn new(tau: f64, beta: f64, n: u64) -> Result<Self> {
        let noise_variance = answer_noise_variance(tau, beta, n)?;
        let answer_cap = answer_cap(tau, beta, n)?;
        Ok(Self {
            tau,
            beta,
            n,
            noise_variance,
            noise_bound: tau / 4.0,
            answer_cap,
        })
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    /// Size of each of the two datasets.
    pub fn n(&self) -> u64 {
        self.n
    }

    pub fn noise_variance(&self) -> f64 {
        self.noise_variance
    }

    /// Support half-width of the answer noise (`tau / 4`).
    pub fn noise_bound(&self) -> f64 {
        self.noise_bound
    }

    pub fn answer_cap(&self) -> u64 {
        self.answer_cap
    }
}

/// What the round did with one submitted query.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RoundOutcome {
    /// The query was answered; `index` is its 1-based position among the
    /// round's answers. The two empirical means are simulator diagnostics:
    /// they are visible to the harness for auditing but must never be
    /// forwarded to query-issuing strategies.
    Answered {
        answer: f64,
        index: u64,
        sample_mean: f64,
        holdout_mean: f64,
    },
    /// The query halted the round at 1-based index `at_index` (no answer,
    /// no noise draw). `premature` is true when the halt happened within
    /// the answer cap, i.e. the empirical means disagreed.
    Halted { at_index: u64, premature: bool },
}

/// A live validation round.
#[derive(Debug, Clone)]
pub struct ValidationRound {
    config: RoundConfig,
    answer_set: Dataset,
    check_set: Dataset,
    noise: TruncatedGaussian,
    answered: u64,
    halt: Option<(u64, bool)>,
}

impl ValidationRound {
    /// Builds a round over an answering dataset and a holdout, both of the
    /// configured size.
    pub fn new(config: RoundConfig, answer_set: Dataset, check_set: Dataset) -> Result<Self> {
        if answer_set.n() != config.n() || check_set.n() != config.n() {
            return Err(Error::Config(format!(
                "round expects two datasets of size {}, got {} and {}",
                config.n(),
                answer_set.n(),
                check_set.n()
            )));
        }
        crate::data::ensure_same_domain(answer_set.domain(), check_set.domain(), "round datasets")?;
        let noise = TruncatedGaussian::new(config.noise_variance(), config.noise_bound())?;
        Ok(Self {
            config,
            answer_set,
            check_set,
            noise,
            answered: 0,
            halt: None,
        })
    }

    pub fn config(&self) -> &RoundConfig {
        &self.config
    }

    /// Number of queries answered so far.
    pub fn answered(&self) -> u64 {
        self.answered
    }

    /// `Some((halt_index, premature))` once the round has halted.
    pub fn halt(&self) -> Option<(u64, bool)> {
        self.halt
    }

    pub fn is_halted(&self) -> bool {
        self.halt.is_some()
    }

    /// Processes one query. Errors if the round has already halted.
    pub fn answer<R: Rng + ?Sized>(&mut self, query: &crate::data::Query, rng: &mut R) -> Result<RoundOutcome> {
        if self.halt.is_some() {
            return Err(Error::AlreadyHalted);
        }
        let sample_mean = self.answer_set.empirical_mean(query)?;
        let holdout_mean = self.check_set.empirical_mean(query)?;
        let index = self.answered + 1;
        let agrees = (sample_mean - holdout_mean).abs() <= self.config.tau() / 2.0;
        if agrees && index <= self.config.answer_cap() {
            let noise = self.noise.sample(rng)?;
            self.answered = index;
            Ok(RoundOutcome::Answered {
                answer: sample_mean + noise,
                index,
                sample_mean,
                holdout_mean,
            })
        } else {
            let premature = index <= self.config.answer_cap();
            self.halt = Some((index, premature));
            Ok(RoundOutcome::Halted { at_index: index, premature })
        }
    }

    /// Consumes the round, releasing its datasets (e.g. for a public log of
    /// retired data).
    pub fn into_datasets(self) -> (Dataset, Dataset) {
        (self.answer_set, self.check_set)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{Dataset, Domain, Query};
    use crate::tolerances::{pinned, ROUNDOFF_GUARD};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::sync::Arc;

    #[test]
    fn cap_matches_pinned_references() {
        assert_eq!(answer_cap(0.4, 0.1, 500).unwrap(), 550);
        assert_eq!(answer_cap(0.4, 0.05, 493).unwrap(), 239);
        let cfg = RoundConfig::new(0.4, 0.1, 500).unwrap();
        assert!((cfg.noise_variance() - pinned::NOISE_VARIANCE_TAU04_BETA01_N500).abs() <= 1e-19);
        assert_eq!(cfg.noise_bound(), 0.1);
        let cfg0 = RoundConfig::new(0.4, 0.05, 493).unwrap();
        assert!((cfg0.noise_variance() - pinned::ROUND0_NOISE_VARIANCE_TAU04_BETA01).abs() <= 1e-19);
    }

    #[test]
    fn cap_below_one_is_a_config_error() {
        // (0.1/4) exp(100 * 0.01 / 8) = 0.0283.
        assert!(matches!(answer_cap(0.1, 0.1, 100), Err(Error::Config(_))));
    }

    #[test]
    fn cap_saturates_instead_of_overflowing() {
        assert_eq!(answer_cap(1.0, 0.5, 1_000_000).unwrap(), CAP_SATURATED);
    }

    #[test]
    fn cap_snaps_at_exact_boundaries() {
        // Choose n * tau^2 / 8 = ln(4 / beta) so the real cap is exactly 1.
        let beta = 0.1;
        let n = 100u64;
        let tau = (8.0 * (4.0f64 / beta).ln() / n as f64).sqrt();
        assert_eq!(answer_cap(tau, beta, n).unwrap(), 1);
        // One fewer record pushes the cap below 1.
        assert!(answer_cap(tau, beta, n - 1).is_err());
    }

    fn two_point() -> Arc<Domain> {
        Domain::new(vec!["a".into(), "b".into()]).unwrap()
    }

    /// A round whose datasets are point masses on different elements, so the
    /// mean gap of a query is exactly `q(a) - q(b)`.
    fn rigged_round(tau: f64, beta: f64, n: u64) -> ValidationRound {
        let d = two_point();
        let s = Dataset::from_counts(Arc::clone(&d), vec![n, 0]).unwrap();
        let t = Dataset::from_counts(Arc::clone(&d), vec![0, n]).unwrap();
        ValidationRound::new(RoundConfig::new(tau, beta, n).unwrap(), s, t).unwrap()
    }

    /// A round whose two datasets are identical, so every query agrees.
    fn agreeing_round(tau: f64, beta: f64, n: u64) -> ValidationRound {
        let d = two_point();
        let s = Dataset::from_counts(Arc::clone(&d), vec![n, 0]).unwrap();
        ValidationRound::new(RoundConfig::new(tau, beta, n).unwrap(), s.clone(), s).unwrap()
    }

    #[test]
    fn agreement_threshold_is_an_exact_comparison() {
        // tau = 0.5: the threshold tau/2 = 0.25 is dyadic, and so are the
        // query values, so the gap is computed exactly.
        let mut round = rigged_round(0.5, 0.1, 1000);
        let d = round.answer_set.domain().clone();
        let mut rng = ChaCha8Rng::seed_from_u64(0);

        let at_threshold = Query::new("eq", Arc::clone(&d), vec![0.75, 0.5]).unwrap();
        match round.answer(&at_threshold, &mut rng).unwrap() {
            RoundOutcome::Answered { .. } => {}
            other => panic!("gap exactly tau/2 must answer, got {other:?}"),
        }

        let epsilon_over = Query::new("over", d, vec![0.75 + f64::EPSILON, 0.5]).unwrap();
        match round.answer(&epsilon_over, &mut rng).unwrap() {
            RoundOutcome::Halted { at_index: 2, premature: true } => {}
            other => panic!("gap one ulp over tau/2 must halt prematurely, got {other:?}"),
        }
    }

    #[test]
    fn natural_halt_fires_just_past_the_cap() {
        // tau = 1, beta = 0.5, n = 24: cap = floor(0.125 e^3) = 2.
        let mut round = agreeing_round(1.0, 0.5, 24);
        assert_eq!(round.config().answer_cap(), 2);
        let d = round.answer_set.domain().clone();
        let q = Query::new("q", d, vec![0.5, 0.5]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for want in 1..=2u64 {
            match round.answer(&q, &mut rng).unwrap() {
                RoundOutcome::Answered { index, .. } => assert_eq!(index, want),
                other => panic!("expected answer, got {other:?}"),
            }
        }
        match round.answer(&q, &mut rng).unwrap() {
            RoundOutcome::Halted { at_index: 3, premature: false } => {}
            other => panic!("expected natural halt at 3, got {other:?}"),
        }
        assert!(matches!(round.answer(&q, &mut rng), Err(Error::AlreadyHalted)));
        assert_eq!(round.halt(), Some((3, false)));
    }

    #[test]
    fn halting_query_consumes_no_randomness() {
        let mut round = rigged_round(0.4, 0.1, 500);
        let d = round.answer_set.domain().clone();
        let disagreeing = Query::new("d", d, vec![1.0, 0.0]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let mut witness = rng.clone();
        assert!(matches!(
            round.answer(&disagreeing, &mut rng).unwrap(),
            RoundOutcome::Halted { at_index: 1, premature: true }
        ));
        assert_eq!(rng.gen::<u64>(), witness.gen::<u64>(), "halt must not advance the RNG");
    }

    #[test]
    fn mismatched_dataset_sizes_are_rejected() {
        let d = two_point();
        let s = Dataset::from_counts(Arc::clone(&d), vec![10, 0]).unwrap();
        let t = Dataset::from_counts(Arc::clone(&d), vec![0, 9]).unwrap();
        let cfg = RoundConfig::new(1.0, 0.5, 24).unwrap();
        assert!(ValidationRound::new(cfg, s, t).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn every_answer_satisfies_the_sandwich(seed in 0u64..5000) {
            // Random agreeing-ish datasets; every produced answer must sit
            // within tau/4 of the sample mean (noise support, exact) and
            // within 3 tau/4 of the holdout mean (agreement + support).
            let tau = 0.4;
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let d = Domain::indexed(8).unwrap();
            let dist = crate::data::Distribution::uniform(Arc::clone(&d));
            let s = dist.sample_dataset(500, &mut rng);
            let t = dist.sample_dataset(500, &mut rng);
            let cfg = RoundConfig::new(tau, 0.1, 500).unwrap();
            let mut round = ValidationRound::new(cfg, s, t).unwrap();
            for k in 0..40u32 {
                let values: Vec<f64> = (0..8).map(|_| rng.gen::<f64>()).collect();
                let q = Query::new(format!("q{k}"), Arc::clone(&d), values).unwrap();
                match round.answer(&q, &mut rng) {
                    Ok(RoundOutcome::Answered { answer, sample_mean, holdout_mean, .. }) => {
                        prop_assert!((answer - sample_mean).abs() <= tau / 4.0);
                        prop_assert!(
                            (answer - holdout_mean).abs() <= 3.0 * tau / 4.0 + ROUNDOFF_GUARD
                        );
                    }
                    Ok(RoundOutcome::Halted { at_index, premature }) => {
                        prop_assert_eq!(premature, at_index <= round.config().answer_cap());
                        break;
                    }
                    Err(e) => return Err(TestCaseError::fail(format!("{e}"))),
                }
            }
            prop_assert!(round.answered() <= round.config().answer_cap());
        }
    }
}
