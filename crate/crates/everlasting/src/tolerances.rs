// Copyright (c) 2026 The Everlasting Database Contributors
// SPDX-License-Identifier: Apache-2.0

//! Centralized numeric tolerances and pinned reference values.
//!
//! Every tolerance used by the test suites lives here so that a reviewer can
//! audit the full error budget in one place. Two distinct kinds of slack
//! appear and must not be confused:
//!
//! * **Float dust** ([`ROUNDOFF_GUARD`], [`LEDGER_ABS`]): allowance for
//!   64-bit rounding in quantities that are mathematically exact. These are
//!   not statistical tolerances and adding them never weakens a guarantee.
//! * **Monte Carlo allowances** ([`binomial_upper_count`] and friends):
//!   three-sigma bands around expected event counts, so a correct
//!   implementation fails a seeded run with probability well under 1e-2.
//!
//! The `pinned` module holds reference values computed once with 50-digit
//! interval arithmetic and frozen here at full f64 precision. Tests compare
//! the crate's own arithmetic against these constants; the constants are
//! never fed back into the implementation.

/// Absolute slack for ledger identities (capital conservation, cost sums).
/// Pure float dust: the folds are exact in real arithmetic.
pub const LEDGER_ABS: f64 = 1e-9;

/// Relative slack when comparing a computed cost against an independently
/// evaluated closed form.
pub const COST_REL: f64 = 1e-9;

/// Slack for per-answer interval identities (noise support, answer
/// sandwiches) that hold with zero statistical tolerance. Covers only the
/// rounding of a handful of f64 operations.
pub const ROUNDOFF_GUARD: f64 = 1e-12;

/// Error bound when checking compensated sums against an independent
/// pairwise-summation oracle, per unit of accumulated magnitude.
pub const SUMMATION_ORACLE_REL: f64 = 1e-12;

/// Relative slack when snapping an exponentiated answer cap to an adjacent
/// integer, so exact-boundary configurations floor correctly.
pub const CAP_SNAP_REL: f64 = 1e-9;

/// Upper allowance for the number of "successes" among `trials` independent
/// events of probability at most `p`: mean plus three standard deviations.
/// A correct implementation exceeds this with probability < 1.4e-3.
pub fn binomial_upper_count(trials: u64, p: f64) -> f64 {
    let t = trials as f64;
    t * p + 3.0 * (t * p * (1.0 - p)).sqrt()
}

/// Lower allowance for an empirical success rate whose true probability is
/// at least `p`: mean minus three standard deviations.
pub fn binomial_lower_rate(trials: u64, p: f64) -> f64 {
    let t = trials as f64;
    p - 3.0 * (p * (1.0 - p) / t).sqrt()
}

/// Two-sided deviation allowance for an empirical mean of `trials` values
/// bounded in `[lo, hi]`, from Hoeffding's inequality at failure probability
/// `delta`: `(hi - lo) * sqrt(ln(2/delta) / (2 * trials))`.
pub fn hoeffding_mean_band(trials: u64, lo: f64, hi: f64, delta: f64) -> f64 {
    (hi - lo) * ((2.0 / delta).ln() / (2.0 * trials as f64)).sqrt()
}

/// Reference values frozen from a 50-digit computation.
///
/// Naming convention: quantity, then the parameters it was evaluated at.
pub mod pinned {
    /// Per-answer noise variance `tau^2 / (32 ln(8 n^2 / beta))`
    /// at `tau = 0.4`, `beta = 0.1`, `n = 500`.
    pub const NOISE_VARIANCE_TAU04_BETA01_N500: f64 = 0.00029742000934195284;

    /// Square root of [`NOISE_VARIANCE_TAU04_BETA01_N500`].
    pub const NOISE_SIGMA_TAU04_BETA01_N500: f64 = 0.01724586934143805;

    /// Real-valued answer cap `(beta/4) exp(n tau^2 / 8)` at
    /// `tau = 0.4`, `beta = 0.1`, `n = 500`; floors to 550.
    pub const ANSWER_CAP_TAU04_BETA01_N500: f64 = 550.661644870168;

    /// Startup subsidy `36 ln(8/beta) / tau^2` at `tau = 0.4`, `beta = 0.1`.
    pub const SUBSIDY_TAU04_BETA01: f64 = 985.9559928016233;

    /// Initial round size `ceil(subsidy / 2)` at `tau = 0.4`, `beta = 0.1`.
    pub const ROUND0_SIZE_TAU04_BETA01: u64 = 493;

    /// Real-valued answer cap of round 0 (`beta_0 = 0.05`, `n = 493`);
    /// floors to 239.
    pub const ROUND0_CAP_TAU04_BETA01: f64 = 239.36111794306652;

    /// Round-0 noise variance (`tau = 0.4`, `beta_0 = 0.05`, `n = 493`).
    pub const ROUND0_NOISE_VARIANCE_TAU04_BETA01: f64 = 0.0002861035146142707;

    /// Sum of the first 500 per-answer prices `96 / (tau^2 i)` at `tau = 0.4`.
    pub const PRICE_SUM_500_TAU04: f64 = 4075.694057994315;

    /// Closed-form upper bound `(96 / tau^2)(1 + ln 500)` on that sum.
    pub const PRICE_SUM_500_BOUND_TAU04: f64 = 4328.764859053315;

    /// Lower bound `18 ln 2 / tau^2` on the round-0 size at `tau = 0.4`.
    pub const ROUND0_SIZE_FLOOR_TAU04: f64 = 77.97905781299384;

    /// Holdout noise scale `tau / (48 ln(4 m / beta))` at
    /// `tau = 0.2`, `beta = 0.05`, `m = 1000`.
    pub const HOLDOUT_SIGMA_TAU02_BETA005_M1000: f64 = 0.00036906529271630163;

    /// Holdout noise scale at `tau = 0.4`, `beta = 0.1`, `m = 200`.
    pub const HOLDOUT_SIGMA_TAU04_BETA01_M200: f64 = 0.0009272450019314834;

    /// Pure-privacy holdout size floor `768 B ln(4 m / beta) / tau^2` at
    /// `tau = 0.2`, `beta = 0.05`, `m = 1000`, `B = 4`.
    pub const HOLDOUT_PURE_MIN_N_TAU02_BETA005_M1000_B4: f64 = 867055.2509687822;

    /// Per-query tail probability `beta / (4 m)` at `beta = 0.1`, `m = 200`.
    pub const HOLDOUT_TAIL_BETA01_M200: f64 = 1.25e-4;

    /// Growing-holdout round-0 failure share `(e - 1) beta / e` at `beta = 0.1`.
    pub const GROWTH_BETA0_BETA01: f64 = 0.06321205588285576;

    /// Growing-holdout round-0 answer cap `(beta_0 / 4) exp(2 n^p)` at
    /// `n = 100`, `p = 0.5`, `beta = 0.1`.
    pub const GROWTH_CAP0_N100_P05_BETA01: f64 = 7667072.361165076;

    /// Growing-holdout round-2 size `ceil(100 e^2)`.
    pub const GROWTH_SIZE2_N100: u64 = 739;

    /// Startup-size lower bounds at `tau = 0.5`, `beta = 0.2`, `p = 0.5`,
    /// analysis constant 9984: accuracy bound, budget-feasibility bound,
    /// and the constant-free shape floor. The budget bound binds.
    pub const GROWTH_MIN_N_ACCURACY_TAU05_BETA02_P05: f64 = 1242662.7750516804;
    pub const GROWTH_MIN_N_BUDGET_TAU05_BETA02_P05: f64 = 165550251526.6238;
    pub const GROWTH_MIN_N_SHAPE_P05: f64 = 16.0;

    /// The same accuracy and budget bounds rescaled to analysis constant 1
    /// (simulation mode): accuracy scales linearly in the constant, the
    /// budget bound replaces the squared constant.
    pub const GROWTH_MIN_N_ACCURACY_TAU05_BETA02_P05_C1: f64 = 124.46542218065709;
    pub const GROWTH_MIN_N_BUDGET_TAU05_BETA02_P05_C1: f64 = 1660.8128647525125;

    /// Round-0 schedule at `tau = 0.99`, `beta = 0.1`, `p = 0.5`, constant 1,
    /// startup size 100 (per-round feasible): overfit budget
    /// `tau^4 n / (8 ln(1664 ln(208/tau) / (tau beta_0)))`, the noise scale
    /// `tau / (48 ln(4 floor(M_0) / beta_0))`, and the unflagged price
    /// `2 N_1 / floor(M_0)` with `N_1 = ceil(100 e) = 272`.
    pub const GROWTH_B0_N100_TAU099_C1: f64 = 1.0120113783042908;
    pub const GROWTH_SIGMA0_N100_TAU099_C1: f64 = 0.001031250002428903;
    pub const GROWTH_UNFLAGGED_PRICE_N100_TAU099_C1: f64 = 7.095277049700328e-05;

    /// Round-0 schedule for the end-to-end simulation configuration
    /// `tau = 0.5`, `beta = 0.2`, `p = 0.5`, constant 1, startup size 2048:
    /// overfit budget, log answer cap `ln(beta_0/4) + 2 sqrt(2048)`, noise
    /// scale, and the log-space unflagged price `exp(ln(2*5568) - ln M_0)`.
    pub const SIM_B0_TAU05_BETA02_P05_C1_N2048: f64 = 1.3361056963275615;
    pub const SIM_LN_CAP0_TAU05_BETA02_P05_N2048: f64 = 87.05526057293702;
    pub const SIM_SIGMA0_TAU05_BETA02_P05_C1_N2048: f64 = 0.00011508899433374797;
    pub const SIM_UNFLAGGED_PRICE_TAU05_C1_N2048: f64 = 1.7342429384110642e-34;

    /// Hoeffding band for 1e5 draws in [0, 1] at failure probability 1e-6.
    pub const HOEFFDING_BAND_1E5_1EM6: f64 = 0.008517234803187071;

    /// Two-sample Kolmogorov-Smirnov acceptance threshold at
    /// `n = m = 1e5`, significance 1e-4: `c(alpha) sqrt((n + m) / (n m))`
    /// with `c(1e-4) = sqrt(ln(2/alpha)/2)`.
    pub const KS_TWO_SAMPLE_1E5_ALPHA1EM4: f64 = 0.009951626777836942;

    /// Probability that one standard draw lands outside three standard
    /// deviations (rejection probability of the truncation sampler at the
    /// reference bound-to-sigma ratio is far smaller; this is a coarse
    /// ceiling used by the acceptance-rate test).
    pub const NORMAL_TAIL_3SIGMA: f64 = 0.002699796063260189;

    /// Variance shrink factor of a centered normal truncated at three
    /// standard deviations: `1 - 6 phi(3) / (2 Phi(3) - 1)`.
    pub const TRUNC_VAR_RATIO_3SIGMA: f64 = 0.9733369246625415;
}
