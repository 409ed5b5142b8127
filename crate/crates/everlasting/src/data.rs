// Copyright (c) 2026 The Everlasting Database Contributors
// SPDX-License-Identifier: Apache-2.0

//! Core data model: finite domains, distributions over them, bounded queries,
//! histogram datasets, and exchange transcripts.
//!
//! Datasets are stored as per-element counts rather than element lists, so a
//! dataset of any size costs `O(domain)` memory and every empirical mean is
//! an exact compensated fold over at most `domain` terms. All serialized
//! forms are plain CSV with floats written in shortest round-trip decimal,
//! which makes file output byte-stable across runs and platforms.

use std::collections::HashSet;
use std::hash::{Hash, Hasher};
use std::io::{Read, Write};
use std::sync::Arc;

use rand::Rng;

use crate::error::{Error, Result};
use crate::kahan::KahanSum;

/// Hard ceiling on domain cardinality.
pub const MAX_DOMAIN: usize = 1 << 20;

/// A finite universe of distinct, named elements.
///
/// Domains are shared through `Arc`, so the usual identity check is a
/// pointer comparison; structurally equal domains compare equal too.
#[derive(Debug)]
pub struct Domain {
    ids: Vec<String>,
    fingerprint: u64,
}

impl Domain {
    pub fn new(ids: Vec<String>) -> Result<Arc<Self>> {
        if ids.is_empty() {
            return Err(Error::Config("domain must contain at least one element".into()));
        }
        if ids.len() > MAX_DOMAIN {
            return Err(Error::Config(format!(
                "domain has {} elements, above the cap of {MAX_DOMAIN}",
                ids.len()
            )));
        }
        let mut seen = HashSet::with_capacity(ids.len());
        for id in &ids {
            if !seen.insert(id.as_str()) {
                return Err(Error::Config(format!("duplicate domain element {id:?}")));
            }
        }
        let mut hasher = std::collections::hash_map::DefaultHasher::new();
        ids.hash(&mut hasher);
        let fingerprint = hasher.finish();
        Ok(Arc::new(Self { ids, fingerprint }))
    }

    /// A domain of `size` synthetic elements `x0000000 .. x<size-1>`.
    pub fn indexed(size: usize) -> Result<Arc<Self>> {
        Self::new((0..size).map(|i| format!("x{i:07}")).collect())
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn id(&self, index: usize) -> &str {
        &self.ids[index]
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }
}

impl PartialEq for Domain {
    fn eq(&self, other: &Self) -> bool {
        self.fingerprint == other.fingerprint && self.ids == other.ids
    }
}

impl Eq for Domain {}

/// Errors unless `a` and `b` are the same domain (by pointer or structure).
pub(crate) fn ensure_same_domain(a: &Arc<Domain>, b: &Arc<Domain>, context: &str) -> Result<()> {
    if Arc::ptr_eq(a, b) || **a == **b {
        Ok(())
    } else {
        Err(Error::DomainMismatch(format!(
            "{context}: domains of size {} and {} differ",
            a.len(),
            b.len()
        )))
    }
}

/// A probability distribution over a [`Domain`], with a precomputed CDF for
/// inverse-transform sampling.
#[derive(Debug, Clone)]
pub struct Distribution {
    domain: Arc<Domain>,
    probabilities: Vec<f64>,
    cdf: Vec<f64>,
}

/// Slack allowed on `sum(probabilities) - 1`; rounding dust only, inputs are
/// expected to be normalized.
const PROBABILITY_SUM_ABS: f64 = 1e-9;

impl Distribution {
    pub fn new(domain: Arc<Domain>, probabilities: Vec<f64>) -> Result<Self> {
        if probabilities.len() != domain.len() {
            return Err(Error::Config(format!(
                "{} probabilities for a domain of {} elements",
                probabilities.len(),
                domain.len()
            )));
        }
        let mut total = KahanSum::new();
        for &p in &probabilities {
            if !p.is_finite() || p < 0.0 {
                return Err(Error::Config(format!("probability {p} is not in [0, 1]")));
            }
            total.add(p);
        }
        if (total.total() - 1.0).abs() > PROBABILITY_SUM_ABS {
            return Err(Error::Config(format!(
                "probabilities sum to {}, not 1",
                total.total()
            )));
        }
        let mut cdf = Vec::with_capacity(probabilities.len());
        let mut running = KahanSum::new();
        for &p in &probabilities {
            running.add(p);
            cdf.push(running.total());
        }
        // Pin the last step to exactly 1 so a uniform draw always lands.
        if let Some(last) = cdf.last_mut() {
            *last = 1.0;
        }
        Ok(Self { domain, probabilities, cdf })
    }

    /// The uniform distribution over `domain`.
    pub fn uniform(domain: Arc<Domain>) -> Self {
        let p = 1.0 / domain.len() as f64;
        let probabilities = vec![p; domain.len()];
        Self::new(domain, probabilities).expect("uniform probabilities are valid")
    }

    pub fn domain(&self) -> &Arc<Domain> {
        &self.domain
    }

    pub fn probabilities(&self) -> &[f64] {
        &self.probabilities
    }

    /// Exact expectation of `query` under this distribution.
    pub fn true_mean(&self, query: &Query) -> Result<f64> {
        ensure_same_domain(&self.domain, &query.domain, "true mean")?;
        Ok(crate::kahan::dot(&self.probabilities, &query.values))
    }

    /// Draws one element index by inverse-transform sampling.
    pub fn sample_index<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let u: f64 = rng.gen();
        self.cdf.partition_point(|&c| c <= u)
    }

    /// Draws `n` i.i.d. elements and returns them as a histogram dataset.
    pub fn sample_dataset<R: Rng + ?Sized>(&self, n: u64, rng: &mut R) -> Dataset {
        let mut counts = vec![0u64; self.domain.len()];
        for _ in 0..n {
            counts[self.sample_index(rng)] += 1;
        }
        Dataset::from_counts(Arc::clone(&self.domain), counts)
            .expect("histogram drawn from the domain is valid")
    }

    /// Writes `element,probability` rows in domain order.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["element", "probability"]).map_err(csv_err)?;
        for (id, p) in self.domain.ids().iter().zip(&self.probabilities) {
            w.write_record([id.as_str(), &p.to_string()]).map_err(csv_err)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Reads a distribution (and its domain) from `element,probability` rows.
    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut r = csv::Reader::from_reader(reader);
        expect_headers(&mut r, &["element", "probability"])?;
        let mut ids = Vec::new();
        let mut probabilities = Vec::new();
        for record in r.records() {
            let record = record.map_err(csv_err)?;
            let (id, value) = two_fields(&record)?;
            ids.push(id.to_string());
            probabilities.push(parse_f64(value)?);
        }
        Self::new(Domain::new(ids)?, probabilities)
    }
}

/// A statistical query: one value in `[0, 1]` per domain element.
#[derive(Debug, Clone)]
pub struct Query {
    id: String,
    domain: Arc<Domain>,
    values: Vec<f64>,
}

impl Query {
    pub fn new(id: impl Into<String>, domain: Arc<Domain>, values: Vec<f64>) -> Result<Self> {
        let id = id.into();
        if values.len() != domain.len() {
            return Err(Error::Config(format!(
                "query {id:?} has {} values for a domain of {} elements",
                values.len(),
                domain.len()
            )));
        }
        for &v in &values {
            if !v.is_finite() || !(0.0..=1.0).contains(&v) {
                return Err(Error::Config(format!(
                    "query {id:?} takes value {v}, outside [0, 1]"
                )));
            }
        }
        Ok(Self { id, domain, values })
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn domain(&self) -> &Arc<Domain> {
        &self.domain
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn value(&self, index: usize) -> f64 {
        self.values[index]
    }

    /// Writes `query_id,element,value` rows in domain order.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["query_id", "element", "value"]).map_err(csv_err)?;
        for (id, v) in self.domain.ids().iter().zip(&self.values) {
            w.write_record([self.id.as_str(), id.as_str(), &v.to_string()])
                .map_err(csv_err)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Reads a query (and its domain) from `query_id,element,value` rows.
    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut r = csv::Reader::from_reader(reader);
        expect_headers(&mut r, &["query_id", "element", "value"])?;
        let mut query_id: Option<String> = None;
        let mut ids = Vec::new();
        let mut values = Vec::new();
        for record in r.records() {
            let record = record.map_err(csv_err)?;
            if record.len() != 3 {
                return Err(Error::Parse(format!("expected 3 fields, got {}", record.len())));
            }
            match &query_id {
                None => query_id = Some(record[0].to_string()),
                Some(existing) if existing != &record[0] => {
                    return Err(Error::Parse(format!(
                        "file mixes query ids {existing:?} and {:?}",
                        &record[0]
                    )));
                }
                Some(_) => {}
            }
            ids.push(record[1].to_string());
            values.push(parse_f64(&record[2])?);
        }
        let id = query_id.ok_or_else(|| Error::Parse("query file has no rows".into()))?;
        Self::new(id, Domain::new(ids)?, values)
    }
}

/// A multiset of domain elements stored as per-element counts.
#[derive(Debug, Clone)]
pub struct Dataset {
    domain: Arc<Domain>,
    counts: Vec<u64>,
    n: u64,
}

impl Dataset {
    pub fn from_counts(domain: Arc<Domain>, counts: Vec<u64>) -> Result<Self> {
        if counts.len() != domain.len() {
            return Err(Error::Config(format!(
                "{} counts for a domain of {} elements",
                counts.len(),
                domain.len()
            )));
        }
        let mut n: u64 = 0;
        for &c in &counts {
            n = n.checked_add(c).ok_or(Error::Overflow("dataset size"))?;
        }
        Ok(Self { domain, counts, n })
    }

    pub fn domain(&self) -> &Arc<Domain> {
        &self.domain
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    /// Number of records in the multiset.
    pub fn n(&self) -> u64 {
        self.n
    }

    /// Exact mean of `query` over the dataset, as a compensated fold.
    pub fn empirical_mean(&self, query: &Query) -> Result<f64> {
        ensure_same_domain(&self.domain, &query.domain, "empirical mean")?;
        if self.n == 0 {
            return Err(Error::EmptyDataset(
                "empirical mean of an empty dataset is undefined".into(),
            ));
        }
        let mut acc = KahanSum::new();
        for (&count, &value) in self.counts.iter().zip(&query.values) {
            if count > 0 {
                acc.add(count as f64 * value);
            }
        }
        Ok(acc.total() / self.n as f64)
    }

    /// Writes `element,count` rows in domain order.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["element", "count"]).map_err(csv_err)?;
        for (id, c) in self.domain.ids().iter().zip(&self.counts) {
            w.write_record([id.as_str(), &c.to_string()]).map_err(csv_err)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Reads a dataset (and its domain) from `element,count` rows.
    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut r = csv::Reader::from_reader(reader);
        expect_headers(&mut r, &["element", "count"])?;
        let mut ids = Vec::new();
        let mut counts = Vec::new();
        for record in r.records() {
            let record = record.map_err(csv_err)?;
            let (id, value) = two_fields(&record)?;
            ids.push(id.to_string());
            counts.push(
                value
                    .parse::<u64>()
                    .map_err(|e| Error::Parse(format!("bad count {value:?}: {e}")))?,
            );
        }
        Self::from_counts(Domain::new(ids)?, counts)
    }
}

/// One answered (or refused) submission in a simulation transcript.
#[derive(Debug, Clone, PartialEq)]
pub struct TranscriptEntry {
    pub trial: u64,
    /// Global answer index within the mechanism, 1-based; equals the
    /// submission ordinal for mechanisms without a global price index.
    pub index: u64,
    /// Data-refresh round the answer was produced in.
    pub round: u64,
    pub user_tag: String,
    pub query_id: String,
    /// `None` when the mechanism refused (terminal halt).
    pub answer: Option<f64>,
    /// Total amount charged for this submission.
    pub price: f64,
    /// Whether the mechanism flagged this answer as holdout-corrected, or,
    /// for priced mechanisms, whether this submission triggered a restart.
    pub overfit_flag: bool,
    /// Mechanism capital after the exchange, for ledgered mechanisms.
    pub capital: Option<f64>,
}

/// An ordered record of exchanges, serializable to a fixed CSV schema.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Transcript {
    pub entries: Vec<TranscriptEntry>,
}

const TRANSCRIPT_HEADERS: [&str; 9] = [
    "trial", "i", "t", "user_tag", "query_id", "answer", "price", "overfit_flag", "capital",
];

impl Transcript {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, entry: TranscriptEntry) {
        self.entries.push(entry);
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(TRANSCRIPT_HEADERS).map_err(csv_err)?;
        for e in &self.entries {
            w.write_record([
                e.trial.to_string(),
                e.index.to_string(),
                e.round.to_string(),
                e.user_tag.clone(),
                e.query_id.clone(),
                e.answer.map(|a| a.to_string()).unwrap_or_default(),
                e.price.to_string(),
                e.overfit_flag.to_string(),
                e.capital.map(|c| c.to_string()).unwrap_or_default(),
            ])
            .map_err(csv_err)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut r = csv::Reader::from_reader(reader);
        expect_headers(&mut r, &TRANSCRIPT_HEADERS)?;
        let mut entries = Vec::new();
        for record in r.records() {
            let record = record.map_err(csv_err)?;
            if record.len() != TRANSCRIPT_HEADERS.len() {
                return Err(Error::Parse(format!(
                    "expected {} fields, got {}",
                    TRANSCRIPT_HEADERS.len(),
                    record.len()
                )));
            }
            entries.push(TranscriptEntry {
                trial: parse_u64(&record[0])?,
                index: parse_u64(&record[1])?,
                round: parse_u64(&record[2])?,
                user_tag: record[3].to_string(),
                query_id: record[4].to_string(),
                answer: if record[5].is_empty() { None } else { Some(parse_f64(&record[5])?) },
                price: parse_f64(&record[6])?,
                overfit_flag: record[7]
                    .parse::<bool>()
                    .map_err(|e| Error::Parse(format!("bad flag {:?}: {e}", &record[7])))?,
                capital: if record[8].is_empty() { None } else { Some(parse_f64(&record[8])?) },
            });
        }
        Ok(Self { entries })
    }
}

fn csv_err(e: csv::Error) -> Error {
    Error::Parse(e.to_string())
}

fn parse_f64(s: &str) -> Result<f64> {
    s.parse::<f64>()
        .map_err(|e| Error::Parse(format!("bad number {s:?}: {e}")))
}

fn parse_u64(s: &str) -> Result<u64> {
    s.parse::<u64>()
        .map_err(|e| Error::Parse(format!("bad integer {s:?}: {e}")))
}

fn expect_headers<R: Read>(reader: &mut csv::Reader<R>, expected: &[&str]) -> Result<()> {
    let headers = reader.headers().map_err(csv_err)?;
    let got: Vec<&str> = headers.iter().collect();
    if got != expected {
        return Err(Error::Parse(format!(
            "unexpected headers {got:?}, expected {expected:?}"
        )));
    }
    Ok(())
}

fn two_fields(record: &csv::StringRecord) -> Result<(&str, &str)> {
    if record.len() != 2 {
        return Err(Error::Parse(format!("expected 2 fields, got {}", record.len())));
    }
    Ok((&record[0], &record[1]))
}
