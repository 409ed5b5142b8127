// Copyright (c) 2026 The Everlasting Database Contributors
// SPDX-License-Identifier: Apache-2.0

//! User models that drive the mechanisms.
//!
//! A strategy is an untrusted query generator. It never touches a mechanism
//! directly: the harness calls [`Strategy::next_query`] with exactly the
//! history slice the strategy's declared [`StrategyKind`] entitles it to see,
//! submits the returned query itself, and appends the outcome to the
//! appropriate histories. Visibility is therefore enforced by the caller, by
//! construction - a strategy cannot request more than it is handed.
//!
//! Three strategies are provided:
//!
//! - [`FixedRandomQueries`]: a pre-registered batch of random table queries,
//!   drawn in full on the first call so the sequence is fixed before any
//!   answer arrives (the non-adaptive user model).
//! - [`SignAggregationAttack`]: an autonomous overfitter. Phase one submits
//!   `probes` i.i.d. uniform {0,1}-valued queries; phase two submits the
//!   sign-majority aggregate of the probes whose answers exceeded one half.
//!   Majority aggregation is used rather than mean aggregation because the
//!   mean's training-set bias stays at the single-probe scale `Θ(1/√n)` no
//!   matter how many probes are drawn, while a majority vote amplifies the
//!   per-probe selection bias to `Θ(√(k/n))`.
//! - [`EchoLast`]: an arbitrary adaptive user that replays the most recent
//!   query from the full cross-user history, exercising the widest
//!   visibility class.

use std::sync::Arc;

use rand::RngCore;

use crate::data::{Domain, Query};
use crate::error::{Error, Result};

/// How much history a strategy is entitled to observe.
///
/// The harness, not the strategy, enforces this: a `NonAdaptive` strategy is
/// handed an empty slice, an `Autonomous` strategy only its own completed
/// exchanges, and an `Arbitrary` strategy the full cross-user history.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum StrategyKind {
    /// The query sequence is fixed before any answer arrives.
    NonAdaptive,
    /// May adapt, but only to its own (query, answer, price) history.
    Autonomous,
    /// May adapt to everything every user has seen.
    Arbitrary,
}

impl std::fmt::Display for StrategyKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            StrategyKind::NonAdaptive => "non-adaptive",
            StrategyKind::Autonomous => "autonomous",
            StrategyKind::Arbitrary => "arbitrary",
        })
    }
}

/// One completed exchange as seen by strategies: the query, what the
/// mechanism said, and what it charged. `answer` is `None` when the
/// mechanism refused the query (a standalone holdout that has halted).
#[derive(Debug, Clone)]
pub struct Exchange {
    pub user_tag: String,
    pub query: Arc<Query>,
    pub answer: Option<f64>,
    pub price: f64,
}

/// An untrusted query generator driven by the harness.
pub trait Strategy {
    /// Label used in transcripts and reports.
    fn tag(&self) -> &str;

    /// Visibility class; the harness slices history accordingly.
    fn kind(&self) -> StrategyKind;

    /// Total number of queries this strategy intends to submit.
    fn planned_queries(&self) -> u64;

    /// Produces the next query. `visible` holds exactly the exchanges the
    /// strategy's kind entitles it to see, oldest first; `rng` is the
    /// strategy's own dedicated stream.
    fn next_query(&mut self, visible: &[Exchange], rng: &mut dyn RngCore) -> Result<Query>;
}

/// A non-adaptive user: `count` table queries with i.i.d. uniform `[0,1)`
/// values per domain element, all drawn on the first call.
#[derive(Debug, Clone)]
pub struct FixedRandomQueries {
    tag: String,
    domain: Arc<Domain>,
    count: u64,
    queries: Vec<Query>,
    emitted: u64,
}

impl FixedRandomQueries {
    pub fn new(tag: impl Into<String>, domain: Arc<Domain>, count: u64) -> Result<Self> {
        if count == 0 {
            return Err(Error::Config("a strategy must plan at least one query".into()));
        }
        Ok(Self { tag: tag.into(), domain, count, queries: Vec::new(), emitted: 0 })
    }
}

impl Strategy for FixedRandomQueries {
    fn tag(&self) -> &str {
        &self.tag
    }

    fn kind(&self) -> StrategyKind {
        StrategyKind::NonAdaptive
    }

    fn planned_queries(&self) -> u64 {
        self.count
    }

    fn next_query(&mut self, _visible: &[Exchange], rng: &mut dyn RngCore) -> Result<Query> {
        if self.queries.is_empty() {
            let mut queries = Vec::with_capacity(self.count as usize);
            for j in 0..self.count {
                let values: Vec<f64> = (0..self.domain.len()).map(|_| rand::Rng::gen::<f64>(&mut *rng)).collect();
                queries.push(Query::new(
                    format!("{}-q{j:04}", self.tag),
                    Arc::clone(&self.domain),
                    values,
                )?);
            }
            self.queries = queries;
        }
        if self.emitted >= self.count {
            return Err(Error::Config(format!(
                "{} has already emitted all {} planned queries",
                self.tag, self.count
            )));
        }
        let q = self.queries[self.emitted as usize].clone();
        self.emitted += 1;
        Ok(q)
    }
}

/// The autonomous sign-aggregation overfitter.
///
/// Phase one submits `probes` queries whose value at each domain element is
/// an independent fair coin in {0,1}; each probe's population mean is 1/2 in
/// expectation by symmetry. Phase two selects `J = {j : a_j > 1/2}` from its
/// own answers and submits, `aggregates` times, the majority query
///
/// ```text
/// q*(x) = 1  iff  sum_{j in J} (2 q_j(x) - 1) > 0,
/// ```
///
/// which is biased toward elements overrepresented in the answering set. An
/// unanswered probe is treated as unselected. The aggregate is built once
/// and memoized; repeat submissions carry fresh ids but identical values.
#[derive(Debug, Clone)]
pub struct SignAggregationAttack {
    tag: String,
    domain: Arc<Domain>,
    probes: u64,
    aggregates: u64,
    probe_bits: Vec<Vec<bool>>,
    aggregate_values: Option<Vec<f64>>,
    emitted: u64,
}

impl SignAggregationAttack {
    pub fn new(
        tag: impl Into<String>,
        domain: Arc<Domain>,
        probes: u64,
        aggregates: u64,
    ) -> Result<Self> {
        if probes == 0 {
            return Err(Error::Config("the attack needs at least one probe".into()));
        }
        if aggregates == 0 {
            return Err(Error::Config("the attack needs at least one aggregate submission".into()));
        }
        Ok(Self {
            tag: tag.into(),
            domain,
            probes,
            aggregates,
            probe_bits: Vec::new(),
            aggregate_values: None,
            emitted: 0,
        })
    }

    /// Number of probe queries (phase one).
    pub fn probes(&self) -> u64 {
        self.probes
    }

    fn build_aggregate(&self, visible: &[Exchange]) -> Vec<f64> {
        let selected: Vec<usize> = (0..self.probe_bits.len())
            .filter(|&j| {
                visible
                    .get(j)
                    .and_then(|e| e.answer)
                    .map(|a| a > 0.5)
                    .unwrap_or(false)
            })
            .collect();
        let threshold = selected.len();
        (0..self.domain.len())
            .map(|x| {
                let ones = selected.iter().filter(|&&j| self.probe_bits[j][x]).count();
                // 2*ones - |J| > 0, rearranged to stay in unsigned arithmetic.
                if 2 * ones > threshold {
                    1.0
                } else {
                    0.0
                }
            })
            .collect()
    }
}

impl Strategy for SignAggregationAttack {
    fn tag(&self) -> &str {
        &self.tag
    }

    fn kind(&self) -> StrategyKind {
        StrategyKind::Autonomous
    }

    fn planned_queries(&self) -> u64 {
        self.probes + self.aggregates
    }

    fn next_query(&mut self, visible: &[Exchange], rng: &mut dyn RngCore) -> Result<Query> {
        let j = self.emitted;
        if j >= self.planned_queries() {
            return Err(Error::Config(format!(
                "{} has already emitted all {} planned queries",
                self.tag,
                self.planned_queries()
            )));
        }
        self.emitted += 1;
        if j < self.probes {
            let bits: Vec<bool> =
                (0..self.domain.len()).map(|_| rand::Rng::gen::<bool>(&mut *rng)).collect();
            let values: Vec<f64> = bits.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect();
            self.probe_bits.push(bits);
            return Query::new(format!("{}-probe{j:04}", self.tag), Arc::clone(&self.domain), values);
        }
        if self.aggregate_values.is_none() {
            self.aggregate_values = Some(self.build_aggregate(visible));
        }
        Query::new(
            format!("{}-aggregate{:02}", self.tag, j - self.probes),
            Arc::clone(&self.domain),
            self.aggregate_values.clone().expect("just built"),
        )
    }
}

/// An arbitrary adaptive user: replays the most recent query anyone asked,
/// or a constant one-half query when the history is still empty.
#[derive(Debug, Clone)]
pub struct EchoLast {
    tag: String,
    domain: Arc<Domain>,
    count: u64,
    emitted: u64,
}

impl EchoLast {
    pub fn new(tag: impl Into<String>, domain: Arc<Domain>, count: u64) -> Result<Self> {
        if count == 0 {
            return Err(Error::Config("a strategy must plan at least one query".into()));
        }
        Ok(Self { tag: tag.into(), domain, count, emitted: 0 })
    }
}

impl Strategy for EchoLast {
    fn tag(&self) -> &str {
        &self.tag
    }

    fn kind(&self) -> StrategyKind {
        StrategyKind::Arbitrary
    }

    fn planned_queries(&self) -> u64 {
        self.count
    }

    fn next_query(&mut self, visible: &[Exchange], _rng: &mut dyn RngCore) -> Result<Query> {
        if self.emitted >= self.count {
            return Err(Error::Config(format!(
                "{} has already emitted all {} planned queries",
                self.tag, self.count
            )));
        }
        let j = self.emitted;
        self.emitted += 1;
        let values = match visible.last() {
            Some(exchange) => exchange.query.values().to_vec(),
            None => vec![0.5; self.domain.len()],
        };
        Query::new(format!("{}-echo{j:03}", self.tag), Arc::clone(&self.domain), values)
    }
}
