// Copyright (c) 2026 The Everlasting Database Contributors
// SPDX-License-Identifier: Apache-2.0

//! Compensated (Neumaier) summation.
//!
//! Every mean, ledger fold, and probability accumulation in this crate runs
//! through [`KahanSum`] so that results do not drift with input ordering or
//! dataset size. The compensation term recovers the low-order bits that a
//! naive running sum discards, which keeps accumulated error near one ulp
//! even for millions of addends.

/// A running sum with Neumaier compensation.
#[derive(Debug, Clone, Copy, Default)]
pub struct KahanSum {
    sum: f64,
    compensation: f64,
}

impl KahanSum {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds one value, folding the rounding error into the compensation term.
    pub fn add(&mut self, value: f64) {
        let t = self.sum + value;
        if self.sum.abs() >= value.abs() {
            self.compensation += (self.sum - t) + value;
        } else {
            self.compensation += (value - t) + self.sum;
        }
        self.sum = t;
    }

    /// The compensated total.
    pub fn total(&self) -> f64 {
        self.sum + self.compensation
    }
}

/// Sums an iterator of values with compensation.
pub fn sum<I: IntoIterator<Item = f64>>(values: I) -> f64 {
    let mut acc = KahanSum::new();
    for v in values {
        acc.add(v);
    }
    acc.total()
}

/// Compensated dot product of two equal-length slices.
///
/// Panics if the lengths differ; callers validate lengths at construction.
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len(), "dot product requires equal lengths");
    let mut acc = KahanSum::new();
    for (x, y) in a.iter().zip(b) {
        acc.add(x * y);
    }
    acc.total()
}
