// Copyright (c) 2026 The Everlasting Database Contributors
// SPDX-License-Identifier: Apache-2.0

//! Crate-wide error type and result alias.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// A parameter is outside its documented range, or derived quantities
    /// (answer caps, overfit budgets) are infeasible for the given config.
    #[error("invalid configuration: {0}")]
    Config(String),

    /// Two values that must share a domain do not.
    #[error("domain mismatch: {0}")]
    DomainMismatch(String),

    /// An operation that needs data received an empty dataset.
    #[error("empty dataset: {0}")]
    EmptyDataset(String),

    /// A query was submitted to a mechanism that has already halted.
    #[error("mechanism already halted")]
    AlreadyHalted,

    /// The rejection sampler failed to accept within its iteration cap.
    #[error("rejection sampler exceeded {0} iterations without accepting")]
    RejectionCap(usize),

    /// Integer arithmetic left the representable range.
    #[error("arithmetic overflow: {0}")]
    Overflow(&'static str),

    /// The internal ledger detected an accounting inconsistency.
    #[error("ledger inconsistency: {0}")]
    Ledger(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("malformed record: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, Error>;
