// Copyright (c) 2026 The Everlasting Database Contributors
// SPDX-License-Identifier: Apache-2.0

//! The acceptance gate: every release criterion, one verdict line each.
//!
//! Run `cargo test -p everlasting --test acceptance -- --nocapture` to see
//! the lines; each test prints its verdict before asserting, so a failing
//! criterion still reports its measured numbers.
//!
//! Reference configuration: `tau = 0.4`, `beta = 0.1`, uniform distribution
//! over a 64-element domain, fixed master seed. The attack campaigns run on
//! the frozen calibration design (16384-element domain, the largest probe
//! count the calibration contract admits).
//!
//! Criterion 6 is expected RED: the frozen attack cannot reach the 0.9
//! targets (see `calibration`'s module docs for the measured ceiling and
//! why the priced mechanism's answer cap defeats the replay entirely).

use std::sync::OnceLock;

use everlasting::harness::{
    run_campaign, Campaign, DistributionSpec, Interleaving, MechanismSpec, OutputSpec, RunConfig,
    StrategySpec, UserSpec,
};
use everlasting::tolerances::{binomial_upper_count, pinned, LEDGER_ABS, ROUNDOFF_GUARD};
use everlasting::{
    growth_round, startup_requirement, verify_growth_lemmas, GrowthConfig, Laplace,
    TruncatedGaussian, REFERENCE_CALIBRATION,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const TAU: f64 = 0.4;
const BETA: f64 = 0.1;
const DOMAIN: usize = 64;
const MASTER_SEED: u64 = 1729;

fn verdict(number: u32, name: &str, pass: bool, detail: &str) {
    let mark = if pass { "PASS" } else { "FAIL" };
    println!("criterion {number:02} {mark} ({name}): {detail}");
}

fn everlasting_mechanism() -> MechanismSpec {
    MechanismSpec::Everlasting {
        tau: TAU,
        beta: BETA,
        sample_unit_cost: 1.0,
        double_charge_on_restart: true,
    }
}

fn table_user(tag: &str, queries: u64) -> UserSpec {
    UserSpec { tag: tag.into(), strategy: StrategySpec::FixedRandomQueries { queries } }
}

/// 200 trials of the mixed workload: 500 non-adaptive queries interleaved
/// with the calibrated attacker, on the priced mechanism.
fn mixed_config() -> RunConfig {
    RunConfig {
        mechanism: everlasting_mechanism(),
        distribution: DistributionSpec::Uniform { domain_size: DOMAIN },
        users: vec![table_user("table", 500), REFERENCE_CALIBRATION.design.attacker()],
        interleaving: Interleaving::RoundRobin,
        trials: 200,
        master_seed: MASTER_SEED,
        output: OutputSpec::default(),
    }
}

/// 200 trials of a single non-adaptive 500-query user (no attacker).
fn solo_config() -> RunConfig {
    RunConfig {
        mechanism: everlasting_mechanism(),
        distribution: DistributionSpec::Uniform { domain_size: DOMAIN },
        users: vec![table_user("table", 500)],
        interleaving: Interleaving::Sequential,
        trials: 200,
        master_seed: MASTER_SEED + 1,
        output: OutputSpec::default(),
    }
}

/// 100 trials, 200 non-adaptive queries against a standalone holdout whose
/// sample size satisfies the non-adaptive feasibility inequality
/// `2 exp(-tau^2 n / 8) <= beta / (4 m)` (needs `n >= 485` here).
fn holdout_config() -> RunConfig {
    RunConfig {
        mechanism: MechanismSpec::HoldoutOnly {
            tau: TAU,
            beta: BETA,
            query_allotment: 200,
            budget: 4,
            sample_size: 500,
        },
        distribution: DistributionSpec::Uniform { domain_size: DOMAIN },
        users: vec![table_user("table", 200)],
        interleaving: Interleaving::Sequential,
        trials: 100,
        master_seed: MASTER_SEED + 2,
        output: OutputSpec::default(),
    }
}

fn mixed_campaign() -> &'static Campaign {
    static CAMPAIGN: OnceLock<Campaign> = OnceLock::new();
    CAMPAIGN.get_or_init(|| run_campaign(&mixed_config()).expect("mixed campaign runs"))
}

fn solo_campaign() -> &'static Campaign {
    static CAMPAIGN: OnceLock<Campaign> = OnceLock::new();
    CAMPAIGN.get_or_init(|| run_campaign(&solo_config()).expect("solo campaign runs"))
}

fn baseline_attack_campaign() -> &'static Campaign {
    static CAMPAIGN: OnceLock<Campaign> = OnceLock::new();
    CAMPAIGN.get_or_init(|| {
        run_campaign(&REFERENCE_CALIBRATION.design.baseline_config())
            .expect("baseline attack campaign runs")
    })
}

fn ev_attack_campaign() -> &'static Campaign {
    static CAMPAIGN: OnceLock<Campaign> = OnceLock::new();
    CAMPAIGN.get_or_init(|| {
        run_campaign(&REFERENCE_CALIBRATION.design.everlasting_config())
            .expect("priced attack campaign runs")
    })
}

fn holdout_campaign() -> &'static Campaign {
    static CAMPAIGN: OnceLock<Campaign> = OnceLock::new();
    CAMPAIGN.get_or_init(|| run_campaign(&holdout_config()).expect("holdout campaign runs"))
}

/// Every campaign that runs the priced validation mechanism.
fn priced_campaigns() -> [(&'static str, &'static Campaign); 3] {
    [
        ("mixed", mixed_campaign()),
        ("solo", solo_campaign()),
        ("attack-replay", ev_attack_campaign()),
    ]
}

#[test]
fn criterion_01_deterministic_sandwich() {
    let mut max_noise: f64 = 0.0;
    let mut max_holdout: f64 = 0.0;
    let mut answered = 0u64;
    for (_, campaign) in priced_campaigns() {
        let agg = &campaign.report.aggregate;
        max_noise = max_noise.max(agg.max_noise_magnitude.expect("answers exist"));
        max_holdout = max_holdout.max(agg.max_holdout_deviation.expect("answers exist"));
        answered += agg.answered;
    }
    let pass = max_noise <= TAU / 4.0 && max_holdout <= 3.0 * TAU / 4.0;
    let detail = format!(
        "{answered} answers across 500 trials: max |a - E_S[q]| = {max_noise:.6} (bound {}), \
         max |a - E_T[q]| = {max_holdout:.6} (bound {}), zero tolerance",
        TAU / 4.0,
        3.0 * TAU / 4.0
    );
    verdict(1, "deterministic sandwich", pass, &detail);
    assert!(pass, "{detail}");
}

#[test]
fn criterion_02_validity_monte_carlo() {
    let campaign = mixed_campaign();
    let agg = &campaign.report.aggregate;
    // Round 0 runs at failure share beta/2, hence the allowance's p.
    let allowed = binomial_upper_count(200, BETA / 2.0);
    let pass = (agg.tau_violation_trials as f64) <= allowed;
    let detail = format!(
        "{} of 200 mixed-workload trials contain any |a - E[q]| > {TAU} \
         (allowance {allowed:.2}, typical observation 0-3)",
        agg.tau_violation_trials
    );
    verdict(2, "validity Monte Carlo", pass, &detail);
    assert!(pass, "{detail}");
}

#[test]
fn criterion_03_sustainability_exact() {
    let mut worst_subsidy_err: f64 = 0.0;
    let mut min_capital = f64::INFINITY;
    let mut worst_residual: f64 = 0.0;
    let mut trials = 0u64;
    for (_, campaign) in priced_campaigns() {
        for trial in &campaign.report.trials {
            trials += 1;
            worst_subsidy_err =
                worst_subsidy_err.max((trial.subsidy - pinned::SUBSIDY_TAU04_BETA01).abs());
            min_capital =
                min_capital.min(trial.min_capital_after_purchase.expect("every trial purchases"));
            worst_residual = worst_residual.max(trial.conservation_residual.abs());
        }
    }
    let pass =
        worst_subsidy_err <= LEDGER_ABS && min_capital >= 0.0 && worst_residual <= LEDGER_ABS;
    let detail = format!(
        "{trials} trials: |subsidy - {:.6}| <= {worst_subsidy_err:.2e} (tolerance 1e-9), \
         min capital after any purchase {min_capital:.6} (>= 0), \
         worst ledger residual {worst_residual:.2e}",
        pinned::SUBSIDY_TAU04_BETA01
    );
    verdict(3, "sustainability exact", pass, &detail);
    assert!(pass, "{detail}");
}

#[test]
fn criterion_04_non_adaptive_cost() {
    let campaign = solo_campaign();
    let mut worst_err: f64 = 0.0;
    let mut max_cost: f64 = 0.0;
    for trial in &campaign.report.trials {
        let user = &trial.users[0];
        worst_err = worst_err.max((user.total_cost - pinned::PRICE_SUM_500_TAU04).abs());
        max_cost = max_cost.max(user.total_cost);
    }
    let premature = campaign.report.aggregate.premature_halt_trials;
    let halt_allowance = binomial_upper_count(200, BETA);
    let pass = worst_err <= 1e-6
        && max_cost <= pinned::PRICE_SUM_500_BOUND_TAU04
        && (premature as f64) <= halt_allowance;
    let detail = format!(
        "500-query cost = {:.10} +- {worst_err:.2e} across 200 trials (frozen sum, tolerance \
         1e-6), <= bound {:.4}; premature-halt trials {premature} (allowance {halt_allowance:.2})",
        pinned::PRICE_SUM_500_TAU04,
        pinned::PRICE_SUM_500_BOUND_TAU04
    );
    verdict(4, "non-adaptive cost", pass, &detail);
    assert!(pass, "{detail}");
}

#[test]
fn criterion_05_revenue_lemma() {
    let mut natural_halts = 0u64;
    let mut charged = 0u64;
    let mut min_margin = f64::INFINITY;
    for (_, campaign) in priced_campaigns() {
        for trial in &campaign.report.trials {
            natural_halts += trial.natural_halts;
            charged += trial.natural_halt_charges;
            if let Some(margin) = trial.min_natural_margin {
                min_margin = min_margin.min(margin);
            }
        }
    }
    let pass = charged == 0 && (natural_halts == 0 || min_margin >= 0.0);
    let detail = format!(
        "{natural_halts} naturally-ended rounds across 500 trials: {charged} billed a positive \
         shortfall; min (capital - next purchase cost) at the end instant = {min_margin:.6}, \
         zero tolerance"
    );
    verdict(5, "revenue at natural round ends", pass, &detail);
    assert!(pass, "{detail}");
}

#[test]
fn criterion_06_attack_demonstration() {
    let baseline = baseline_attack_campaign();
    let replay = ev_attack_campaign();
    let cal = REFERENCE_CALIBRATION;

    let baseline_rate = baseline.report.aggregate.overfit_trial_fraction;
    let halt_rate = replay.report.aggregate.premature_halt_fraction;
    let charged_trials = replay.report.aggregate.per_user[0].trials_with_charged_restart;
    // The fixture must reproduce bit-for-bit before the thresholds mean
    // anything; drift here means the oracle and fixture are out of sync.
    assert_eq!(baseline_rate, cal.baseline_overfit_rate, "calibration fixture drifted");
    assert_eq!(halt_rate, cal.ev_premature_halt_rate, "calibration fixture drifted");

    let trials = cal.design.trials as f64;
    let required = 0.9 - 3.0 * (0.9 * 0.1 / trials).sqrt();
    let sandwich_ok = replay.report.aggregate.max_noise_magnitude.expect("answers exist")
        <= TAU / 4.0
        && replay.report.aggregate.max_holdout_deviation.expect("answers exist")
            <= 3.0 * TAU / 4.0;
    let pass = baseline_rate >= required && halt_rate >= required && sandwich_ok;
    let detail = format!(
        "k = {} (strongest the calibration contract admits; no k <= 400 qualifies): \
         baseline overfit-trial fraction {baseline_rate:.2} vs required {required:.2}; \
         priced-mechanism premature-halt fraction {halt_rate:.2} vs required {required:.2} \
         ({charged_trials} trials with a charged restart — the answer cap retires the data \
         mid-probe-phase, so the aggregate never overfits the live set); \
         sandwich still holds: {sandwich_ok}",
        cal.design.probes
    );
    verdict(6, "attack demonstration", pass, &detail);
    assert!(pass, "{detail}");
}

#[test]
fn criterion_07_holdout_flag_rate() {
    let campaign = holdout_campaign();
    let user = &campaign.report.aggregate.per_user[0];
    let allowed = binomial_upper_count(100, BETA);
    let refused = campaign.report.trials.iter().map(|t| t.refused).sum::<u64>();
    let pass = (user.trials_with_flagged_answer as f64) <= allowed && refused == 0;
    let detail = format!(
        "{} of 100 trials flagged any of 200 non-adaptive queries (allowance {allowed:.2}); \
         {refused} refusals",
        user.trials_with_flagged_answer
    );
    verdict(7, "holdout flags on non-adaptive load", pass, &detail);
    assert!(pass, "{detail}");
}

#[test]
fn criterion_08_noise_samplers() {
    use statrs::distribution::{ContinuousCDF, Normal};
    const DRAWS: usize = 1_000_000;

    // Truncated Gaussian at the reference round configuration.
    let variance = pinned::NOISE_VARIANCE_TAU04_BETA01_N500;
    let sigma = variance.sqrt();
    let bound = TAU / 4.0;
    let gauss = TruncatedGaussian::new(variance, bound).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(MASTER_SEED + 8);
    let mut sum = everlasting::kahan::KahanSum::new();
    let mut escaped = 0u64;
    let mut draws = Vec::with_capacity(DRAWS);
    for _ in 0..DRAWS {
        let x = gauss.sample(&mut rng).unwrap();
        if x.abs() > bound {
            escaped += 1;
        }
        sum.add(x);
        draws.push(x);
    }
    let mean = sum.total() / DRAWS as f64;
    let mean_band = 4.0 * sigma / (DRAWS as f64).sqrt();

    // One-sample KS statistic against the truncated-normal CDF.
    draws.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let std = Normal::new(0.0, 1.0).unwrap();
    let lo = std.cdf(-bound / sigma);
    let span = std.cdf(bound / sigma) - lo;
    let mut ks: f64 = 0.0;
    for (i, x) in draws.iter().enumerate() {
        let f = (std.cdf(x / sigma) - lo) / span;
        ks = ks.max((f - i as f64 / DRAWS as f64).abs());
        ks = ks.max(((i + 1) as f64 / DRAWS as f64 - f).abs());
    }
    let ks_critical = ((2.0 / 1e-4f64).ln() / (2.0 * DRAWS as f64)).sqrt();

    // Laplace tail mass at the scale the reference holdout would use.
    let scale = 4.0 * pinned::HOLDOUT_SIGMA_TAU04_BETA01_M200;
    let laplace = Laplace::new(scale).unwrap();
    let cut = scale * 100f64.ln();
    let mut tail = 0u64;
    for _ in 0..DRAWS {
        if laplace.sample(&mut rng).abs() > cut {
            tail += 1;
        }
    }
    let tail_rate = tail as f64 / DRAWS as f64;

    let pass = escaped == 0
        && mean.abs() <= mean_band
        && ks <= ks_critical
        && (tail_rate - 0.01).abs() <= 0.003;
    let detail = format!(
        "10^6 truncated draws: {escaped} outside [-{bound}, {bound}], mean {mean:.2e} \
         (band {mean_band:.2e}), KS {ks:.6} (critical {ks_critical:.6}); 10^6 Laplace draws: \
         P(|X| > b ln 100) = {tail_rate:.4} (0.01 +- 0.003)"
    );
    verdict(8, "noise samplers", pass, &detail);
    assert!(pass, "{detail}");
}

#[test]
fn criterion_09_growth_schedule_lemmas() {
    let mut worst_sup = f64::INFINITY;
    let mut worst_branch = f64::INFINITY;
    let mut worst_beta_residual: f64 = 0.0;
    let mut violations = Vec::new();
    for &tau in &[0.2, 0.5] {
        for &beta in &[0.05, 0.2] {
            for &p in &[0.1, 0.3, 0.5] {
                for &n in &[1u64, 16, 100, 1_000_000, 1_000_000_000_000] {
                    let report = verify_growth_lemmas(tau, beta, p, n, 60).unwrap();
                    violations.extend(report.violations.iter().cloned());
                    worst_sup = worst_sup.min(report.sup_margin_min);
                    worst_branch = worst_branch.min(report.branch_margin_min);
                    worst_beta_residual = worst_beta_residual.max(report.beta_share_residual);
                }
            }
        }
    }

    // Live schedules in simulation mode: budget never exceeds the cap.
    let mut schedule_ok = true;
    let config = GrowthConfig::new(0.5, 0.2, 0.5, 2048)
        .unwrap()
        .with_analysis_constant(1.0)
        .unwrap();
    for t in 0..=20 {
        let round = growth_round(&config, t).unwrap();
        schedule_ok &= round.budget_floor >= 1.0 && round.budget_floor <= round.answer_cap_floor;
    }

    // Feasibility at the full analysis constant: the startup size needed
    // for a first overfit budget of 1 is astronomical, and the report must
    // say so rather than scale anything silently.
    let requirement = startup_requirement(0.5, 0.2, 0.5, 9984.0).unwrap();
    let frozen = pinned::GROWTH_MIN_N_BUDGET_TAU05_BETA02_P05;
    let feasibility_ok = requirement.required >= 1e11
        && requirement.required < 1e12
        && (requirement.budget_bound - frozen).abs() <= 1e-9 * frozen
        && !requirement.admits(100_000)
        && requirement.check(100_000).is_err();

    let pass = violations.is_empty()
        && worst_sup >= 0.0
        && worst_branch >= 0.0
        && worst_beta_residual <= ROUNDOFF_GUARD
        && schedule_ok
        && feasibility_ok;
    let detail = format!(
        "60-round sweep over tau x beta x p x n grid (120 reports): {} violations, min margins \
         {worst_sup:.3} / {worst_branch:.3}, worst failure-share residual \
         {worst_beta_residual:.2e} (tolerance 1e-12); simulation schedule keeps \
         1 <= floor(B_t) <= floor(M_t) through t = 20: {schedule_ok}; full-constant startup \
         needs n >= {:.4e} (frozen {frozen:.4e}, flags the 1e11 scale): {feasibility_ok}",
        violations.len(),
        requirement.required
    );
    verdict(9, "growth schedule + lemma sweep", pass, &detail);
    assert!(pass, "{detail}");
}

#[test]
fn criterion_10_reproducibility() {
    let first = mixed_campaign();
    let second = run_campaign(&mixed_config()).expect("rerun");
    let mut csv_first = Vec::new();
    first.transcript.write_csv(&mut csv_first).unwrap();
    let mut csv_second = Vec::new();
    second.transcript.write_csv(&mut csv_second).unwrap();
    let csv_identical = csv_first == csv_second;
    let report_identical = first.report.to_json_bytes() == second.report.to_json_bytes();

    let solo_again = run_campaign(&solo_config()).expect("rerun");
    let mut solo_csv_a = Vec::new();
    solo_campaign().transcript.write_csv(&mut solo_csv_a).unwrap();
    let mut solo_csv_b = Vec::new();
    solo_again.transcript.write_csv(&mut solo_csv_b).unwrap();
    let solo_identical = solo_csv_a == solo_csv_b;

    let pass = csv_identical && report_identical && solo_identical;
    let detail = format!(
        "mixed campaign rerun: CSV byte-identical {csv_identical} ({} bytes), report \
         byte-identical {report_identical}; solo campaign rerun: CSV byte-identical \
         {solo_identical}",
        csv_first.len()
    );
    verdict(10, "byte-identical reruns", pass, &detail);
    assert!(pass, "{detail}");
}
