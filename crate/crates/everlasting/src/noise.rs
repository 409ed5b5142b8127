// Copyright (c) 2026 The Everlasting Database Contributors
// SPDX-License-Identifier: Apache-2.0

//! Noise primitives: bound-truncated Gaussian and Laplace samplers.
//!
//! The truncated Gaussian is drawn by rejection: sample `N(0, sigma^2)` and
//! retry until the draw lands inside `[-bound, bound]`, erroring out after
//! [`REJECTION_CAP`] attempts. At every configuration this crate uses, the
//! bound sits several sigma out, so the per-draw rejection probability is
//! negligible and the cap exists purely to convert a misconfiguration into a
//! diagnosable error instead of a hang.
//!
//! The Laplace sampler uses the inverse CDF: with `v` uniform on the open
//! interval (0, 1), the draw is `scale * ln(2v)` when `v < 1/2` and
//! `-scale * ln(2(1-v))` otherwise. One uniform variate per draw, so RNG
//! stream positions are easy to reason about in tests.

use rand::Rng;
use rand_distr::{Distribution as RandDistribution, Normal, Open01};

use crate::error::{Error, Result};

/// Maximum rejection-sampling attempts before giving up.
pub const REJECTION_CAP: usize = 1000;

/// A centered Gaussian conditioned on `[-bound, bound]`.
#[derive(Debug, Clone, Copy)]
pub struct TruncatedGaussian {
    normal: Normal<f64>,
    variance: f64,
    bound: f64,
}

impl TruncatedGaussian {
    pub fn new(variance: f64, bound: f64) -> Result<Self> {
        if !variance.is_finite() || variance <= 0.0 {
            return Err(Error::Config(format!("noise variance {variance} must be positive")));
        }
        if !bound.is_finite() || bound <= 0.0 {
            return Err(Error::Config(format!("truncation bound {bound} must be positive")));
        }
        let normal = Normal::new(0.0, variance.sqrt())
            .map_err(|e| Error::Config(format!("gaussian setup failed: {e}")))?;
        Ok(Self { normal, variance, bound })
    }

    pub fn variance(&self) -> f64 {
        self.variance
    }

    pub fn bound(&self) -> f64 {
        self.bound
    }

    /// One draw; errors if [`REJECTION_CAP`] proposals are all rejected.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<f64> {
        self.sample_counted(rng).map(|(x, _)| x)
    }

    /// One draw plus the number of proposals it took (at least 1).
    pub fn sample_counted<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<(f64, u32)> {
        for attempt in 1..=REJECTION_CAP {
            let x = self.normal.sample(rng);
            if x.abs() <= self.bound {
                return Ok((x, attempt as u32));
            }
        }
        Err(Error::RejectionCap(REJECTION_CAP))
    }
}

/// A centered Laplace distribution with the given scale.
#[derive(Debug, Clone, Copy)]
pub struct Laplace {
    scale: f64,
}

impl Laplace {
    pub fn new(scale: f64) -> Result<Self> {
        if !scale.is_finite() || scale <= 0.0 {
            return Err(Error::Config(format!("laplace scale {scale} must be positive")));
        }
        Ok(Self { scale })
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    /// One inverse-CDF draw, consuming exactly one uniform variate.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let v: f64 = Open01.sample(rng);
        if v < 0.5 {
            self.scale * (2.0 * v).ln()
        } else {
            -self.scale * (2.0 * (1.0 - v)).ln()
        }
    }
}

/// Per-answer noise variance `tau^2 / (32 ln(8 n^2 / beta))` for a round
/// over datasets of size `n` at validity width `tau` and failure share
/// `beta`.
pub fn answer_noise_variance(tau: f64, beta: f64, n: u64) -> Result<f64> {
    validate_tau_beta(tau, beta)?;
    if n == 0 {
        return Err(Error::Config("dataset size must be at least 1".into()));
    }
    let n = n as f64;
    Ok(tau * tau / (32.0 * (8.0 * n * n / beta).ln()))
}

pub(crate) fn validate_tau_beta(tau: f64, beta: f64) -> Result<()> {
    if !tau.is_finite() || tau <= 0.0 || tau > 1.0 {
        return Err(Error::Config(format!("tau = {tau} must lie in (0, 1]")));
    }
    if !beta.is_finite() || beta <= 0.0 || beta >= 1.0 {
        return Err(Error::Config(format!("beta = {beta} must lie in (0, 1)")));
    }
    Ok(())
}
