// Copyright (c) 2026 The Everlasting Database Contributors
// SPDX-License-Identifier: Apache-2.0

//! Command-line front end for the `everlasting` library.
//!
//! * `run` — execute a campaign described by a JSON config file and write
//!   its transcript, report, and event-log artifacts.
//! * `attack-demo` — the canned comparison: the calibrated sign-aggregation
//!   overfitter against the unguarded baseline and against the priced
//!   validation mechanism, on the same seeds.
//! * `params` — print mechanism schedules: startup subsidy, round sizes,
//!   answer caps, noise scales, and growth feasibility.
//! * `lemma-check` — evaluate the growth-schedule inequalities and the
//!   failure-share identity on a numeric grid.
//! * `noise-test` — draw from both noise samplers and check support, mean,
//!   and tail mass.
//!
//! Exit codes: `0` when every embedded check passes, `1` when a check or a
//! started run fails, `2` for usage and configuration errors.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use everlasting::harness::OUTPUT_DIR_ENV;
use everlasting::kahan::KahanSum;
use everlasting::noise::answer_noise_variance;
use everlasting::round::CAP_SATURATED;
use everlasting::tolerances::binomial_upper_count;
use everlasting::{
    answer_price, growth_round, initial_round_size, round_plan, run_campaign, startup_requirement,
    startup_subsidy, verify_growth_lemmas, Campaign, GrowthConfig, Laplace, RoundConfig, RunConfig,
    TruncatedGaussian, FULL_ANALYSIS_CONSTANT, REFERENCE_CALIBRATION,
};

#[derive(Parser)]
#[command(name = "everlasting-cli", version, about = "Everlasting-validity query answering: campaigns, demos, schedules, checks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a campaign from a JSON config file and write its artifacts.
    Run(RunArgs),
    /// Replay the calibrated overfitter against the baseline and the priced mechanism.
    AttackDemo(AttackDemoArgs),
    /// Print a mechanism's schedule and feasibility numbers.
    Params(ParamsArgs),
    /// Check the growth-schedule inequalities numerically.
    LemmaCheck(LemmaArgs),
    /// Draw from the noise samplers and check support, mean, and tails.
    NoiseTest(NoiseArgs),
}

/// How a failed invocation exits: usage and configuration problems are
/// distinguished from checks that ran and failed.
enum Failure {
    Usage(String),
    Check(String),
}

fn usage(e: everlasting::Error) -> Failure {
    Failure::Usage(e.to_string())
}

fn check(e: everlasting::Error) -> Failure {
    Failure::Check(e.to_string())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Run(args) => cmd_run(args),
        Command::AttackDemo(args) => cmd_attack_demo(args),
        Command::Params(args) => cmd_params(args),
        Command::LemmaCheck(args) => cmd_lemma_check(args),
        Command::NoiseTest(args) => cmd_noise_test(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Check(msg)) => {
            eprintln!("failed: {msg}");
            ExitCode::from(1)
        }
    }
}

#[derive(Args)]
struct RunArgs {
    /// Path to a JSON campaign description.
    #[arg(long)]
    config: PathBuf,
}

fn cmd_run(args: &RunArgs) -> Result<(), Failure> {
    let text = std::fs::read_to_string(&args.config)
        .map_err(|e| Failure::Usage(format!("cannot read {}: {e}", args.config.display())))?;
    let config = RunConfig::from_json(&text).map_err(usage)?;
    config.validate().map_err(usage)?;
    let campaign = run_campaign(&config).map_err(check)?;
    print_run_summary(&campaign);
    let paths = campaign.write().map_err(check)?;
    if paths.is_empty() {
        println!(
            "no output files configured; name them in the config's \"output\" block \
             (the {OUTPUT_DIR_ENV} environment variable overrides the directory)"
        );
    }
    for path in &paths {
        println!("wrote {}", path.display());
    }
    Ok(())
}

fn print_run_summary(campaign: &Campaign) {
    let report = &campaign.report;
    let agg = &report.aggregate;
    let tau = report.config.mechanism.tau();
    let refused: u64 = report.trials.iter().map(|t| t.refused).sum();
    println!("trials run: {}", agg.trials);
    println!("answers: {} given, {refused} refused", agg.answered);
    match agg.max_abs_error {
        Some(err) => println!("max |answer - E[q]|: {err:.6} (tau = {tau})"),
        None => println!("max |answer - E[q]|: n/a (nothing answered)"),
    }
    println!("tau-violation trials: {} / {}", agg.tau_violation_trials, agg.trials);
    println!("premature-halt trials: {} / {}", agg.premature_halt_trials, agg.trials);
    println!("samples bought: {}", agg.total_samples_bought);
    for user in &agg.per_user {
        println!(
            "user {} ({:?}): {} answers, spend min {:.4} / median {:.4} / max {:.4}",
            user.tag,
            user.kind,
            user.answered,
            user.total_cost.min,
            user.total_cost.median,
            user.total_cost.max,
        );
    }
}

#[derive(Args)]
struct AttackDemoArgs {
    /// Probe count for the sign-aggregation attacker (default: frozen calibration design).
    #[arg(long)]
    probes: Option<u64>,
    /// Monte Carlo trials per mechanism (default: frozen calibration design).
    #[arg(long)]
    trials: Option<u64>,
}

fn cmd_attack_demo(args: &AttackDemoArgs) -> Result<(), Failure> {
    let mut design = REFERENCE_CALIBRATION.design;
    if let Some(probes) = args.probes {
        design.probes = probes;
    }
    if let Some(trials) = args.trials {
        design.trials = trials;
    }
    let frozen = design == REFERENCE_CALIBRATION.design;

    let baseline_config = design.baseline_config();
    let priced_config = design.everlasting_config();
    baseline_config.validate().map_err(usage)?;
    priced_config.validate().map_err(usage)?;

    println!(
        "sign-aggregation attacker: {} probes + {} aggregate submission(s), \
         domain {}, sample size {}, tau {}, {} trials, master seed {}",
        design.probes,
        design.aggregates,
        design.domain_size,
        design.sample_size,
        design.tau,
        design.trials,
        design.master_seed,
    );
    println!();

    let baseline = run_campaign(&baseline_config).map_err(check)?;
    let base = &baseline.report.aggregate;
    println!("unguarded baseline (raw sample means, no noise, no checks):");
    println!(
        "  trials overfit past tau/2 = {}: {} / {} ({:.4})",
        design.tau / 2.0,
        base.overfit_trials,
        base.trials,
        base.overfit_trial_fraction,
    );
    println!(
        "  trials with a validity violation past tau: {} / {} ({:.4})",
        base.tau_violation_trials, base.trials, base.tau_violation_fraction,
    );
    if let Some(err) = base.max_abs_error {
        println!("  worst |answer - E[q]|: {err:.6}");
    }
    println!();

    let priced = run_campaign(&priced_config).map_err(check)?;
    let ev = &priced.report.aggregate;
    let attacker = ev
        .per_user
        .iter()
        .find(|u| u.tag == "attacker")
        .ok_or_else(|| Failure::Check("attacker missing from the priced report".into()))?;
    println!("priced validation mechanism, same attacker and seeds:");
    println!(
        "  trials with a validity violation past tau: {} / {}",
        ev.tau_violation_trials, ev.trials,
    );
    println!(
        "  trials halted prematurely: {} / {} ({:.4})",
        ev.premature_halt_trials, ev.trials, ev.premature_halt_fraction,
    );
    println!(
        "  trials with a charged restart: {}, with a flagged answer: {}",
        attacker.trials_with_charged_restart, attacker.trials_with_flagged_answer,
    );
    if let (Some(noise), Some(holdout)) = (ev.max_noise_magnitude, ev.max_holdout_deviation) {
        println!(
            "  worst noise magnitude {noise:.6} (bound {:.6}), worst holdout deviation {holdout:.6} (bound {:.6})",
            design.tau / 4.0,
            3.0 * design.tau / 4.0,
        );
    }
    println!(
        "  attacker spend: min {:.2} / median {:.2} / max {:.2}",
        attacker.total_cost.min, attacker.total_cost.median, attacker.total_cost.max,
    );
    println!();

    let mut failures = Vec::new();
    if let Some(noise) = ev.max_noise_magnitude {
        if noise > design.tau / 4.0 {
            failures.push(format!("noise magnitude {noise} escaped tau/4"));
        }
    }
    if let Some(holdout) = ev.max_holdout_deviation {
        if holdout > 3.0 * design.tau / 4.0 {
            failures.push(format!("holdout deviation {holdout} escaped 3 tau/4"));
        }
    }
    let violation_allowance = binomial_upper_count(design.trials, design.ev_beta);
    if (ev.tau_violation_trials as f64) > violation_allowance {
        failures.push(format!(
            "{} priced trials violated tau (allowance {violation_allowance:.2})",
            ev.tau_violation_trials,
        ));
    }
    if frozen {
        if base.overfit_trial_fraction != REFERENCE_CALIBRATION.baseline_overfit_rate {
            failures.push(format!(
                "baseline overfit rate {} drifted from the frozen {}; rerun the calibration example",
                base.overfit_trial_fraction, REFERENCE_CALIBRATION.baseline_overfit_rate,
            ));
        }
        if ev.premature_halt_fraction != REFERENCE_CALIBRATION.ev_premature_halt_rate {
            failures.push(format!(
                "premature-halt rate {} drifted from the frozen {}; rerun the calibration example",
                ev.premature_halt_fraction, REFERENCE_CALIBRATION.ev_premature_halt_rate,
            ));
        }
    }
    if failures.is_empty() {
        println!("all embedded checks passed");
        Ok(())
    } else {
        Err(Failure::Check(failures.join("; ")))
    }
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum MechChoice {
    /// Priced validation rounds with tripling data refreshes.
    Ev,
    /// Growing reusable holdouts.
    To,
    /// One standalone validation round.
    Round,
}

#[derive(Args)]
struct ParamsArgs {
    #[arg(long, value_enum)]
    mech: MechChoice,
    /// Validity threshold.
    #[arg(long, default_value_t = 0.4)]
    tau: f64,
    /// Failure budget.
    #[arg(long, default_value_t = 0.1)]
    beta: f64,
    /// Rounds of the schedule to print.
    #[arg(long, default_value_t = 4)]
    rounds: u64,
    /// Dataset size: the standalone round's size, or the growth startup size.
    #[arg(long)]
    n: Option<u64>,
    /// Growth exponent (growing holdouts only).
    #[arg(long)]
    p: Option<f64>,
    /// Growth analysis constant; 1 selects simulation mode.
    #[arg(long, default_value_t = FULL_ANALYSIS_CONSTANT)]
    constant: f64,
}

fn saturated_cap(cap: u64) -> String {
    if cap >= CAP_SATURATED {
        "saturated".into()
    } else {
        cap.to_string()
    }
}

fn cmd_params(args: &ParamsArgs) -> Result<(), Failure> {
    match args.mech {
        MechChoice::Ev => {
            let subsidy = startup_subsidy(args.tau, args.beta).map_err(usage)?;
            let n0 = initial_round_size(args.tau, args.beta).map_err(usage)?;
            println!("priced validation mechanism at tau = {}, beta = {}", args.tau, args.beta);
            println!("startup subsidy Gamma = {subsidy:.6} sample units");
            println!("round-0 dataset size N_0 = {n0} (two datasets per round)");
            println!(
                "answer price at global index i: {:.6} / i",
                answer_price(args.tau, 1),
            );
            println!("{:>3} {:>16} {:>12} {:>12} {:>14}", "t", "N_t", "beta_t", "cap I_t", "sigma_t^2");
            for t in 0..args.rounds {
                let plan = round_plan(args.tau, args.beta, t).map_err(usage)?;
                println!(
                    "{:>3} {:>16} {:>12.3e} {:>12} {:>14.6e}",
                    plan.round,
                    plan.round_size,
                    plan.round_beta,
                    saturated_cap(plan.answer_cap),
                    plan.noise_variance,
                );
            }
        }
        MechChoice::Round => {
            let n = args
                .n
                .ok_or_else(|| Failure::Usage("--mech round needs --n (dataset size)".into()))?;
            let config = RoundConfig::new(args.tau, args.beta, n).map_err(usage)?;
            println!(
                "standalone validation round at tau = {}, beta = {}, n = {n}",
                args.tau, args.beta,
            );
            println!("answer cap I = {}", saturated_cap(config.answer_cap()));
            println!("noise variance sigma^2 = {:.6e}", config.noise_variance());
            println!("noise support bound = {:.6} (tau / 4)", config.noise_bound());
        }
        MechChoice::To => {
            let p = args
                .p
                .ok_or_else(|| Failure::Usage("--mech to needs --p (growth exponent)".into()))?;
            let requirement =
                startup_requirement(args.tau, args.beta, p, args.constant).map_err(usage)?;
            println!(
                "growing holdouts at tau = {}, beta = {}, exponent p = {p}, constant c = {} ({} mode)",
                args.tau, args.beta, requirement.analysis_constant, requirement.mode,
            );
            println!(
                "startup bounds: accuracy {:.6e}, budget {:.6e}, shape {:.6e}",
                requirement.accuracy_bound, requirement.budget_bound, requirement.shape_bound,
            );
            println!(
                "required N_0 >= {:.6e} (binding: {})",
                requirement.required, requirement.binding,
            );
            let Some(n) = args.n else {
                println!("pass --n to check a startup size and print its schedule");
                return Ok(());
            };
            match requirement.check(n) {
                Ok(()) => println!("N_0 = {n} admitted"),
                Err(e) => {
                    println!("N_0 = {n} rejected: {e}");
                    return Ok(());
                }
            }
            let config = GrowthConfig::new(args.tau, args.beta, p, n)
                .and_then(|c| c.with_analysis_constant(args.constant))
                .map_err(usage)?;
            println!(
                "{:>3} {:>14} {:>14} {:>10} {:>10} {:>14} {:>12} {:>12} {:>12}",
                "t", "N_t", "N_next", "beta_t", "B_t", "M_t", "sigma_t", "price", "flag price",
            );
            for t in 0..args.rounds {
                match growth_round(&config, t) {
                    Ok(round) => println!(
                        "{:>3} {:>14} {:>14} {:>10.3e} {:>10} {:>14} {:>12.3e} {:>12.3e} {:>12.3e}",
                        round.round,
                        round.round_size,
                        round.next_round_size,
                        round.round_beta,
                        round.budget_floor,
                        if round.answer_cap_floor >= CAP_SATURATED as f64 {
                            "saturated".into()
                        } else {
                            format!("{}", round.answer_cap_floor)
                        },
                        round.noise_scale,
                        round.unflagged_price,
                        round.flagged_price,
                    ),
                    Err(e) => {
                        println!("{t:>3} infeasible: {e}");
                        break;
                    }
                }
            }
        }
    }
    Ok(())
}

#[derive(Args)]
struct LemmaArgs {
    /// Validity threshold.
    #[arg(long)]
    tau: f64,
    /// Failure budget.
    #[arg(long)]
    beta: f64,
    /// Growth exponent.
    #[arg(long)]
    p: f64,
    /// Startup size the branch inequality is evaluated at.
    #[arg(long, default_value_t = 100)]
    n: u64,
    /// Highest round index in the sweep.
    #[arg(long, default_value_t = 40)]
    rounds: u64,
}

fn cmd_lemma_check(args: &LemmaArgs) -> Result<(), Failure> {
    let report =
        verify_growth_lemmas(args.tau, args.beta, args.p, args.n, args.rounds).map_err(usage)?;
    println!(
        "grid: t = 0..={} at tau = {}, beta = {}, p = {}, startup size {}",
        report.rounds, report.tau, report.beta, report.exponent, report.startup_size,
    );
    println!("supremum-bound margin (min over grid): {:.6e}", report.sup_margin_min);
    match report.critical_point_margin {
        Some(margin) => println!("interior critical-point margin: {margin:.6e}"),
        None => println!("interior critical point: none in range"),
    }
    println!("branch-bound margin (min over grid): {:.6e}", report.branch_margin_min);
    match report.first_term_is_minimizer {
        Some(first) => println!(
            "branch threshold {:.6e}: first term minimizes = {first}",
            report.branch_threshold,
        ),
        None => println!(
            "branch threshold {:.6e}: startup size below it, comparison skipped",
            report.branch_threshold,
        ),
    }
    println!("failure-share identity residual: {:.6e}", report.beta_share_residual);
    if report.passed() {
        println!("violations: none");
        Ok(())
    } else {
        for v in &report.violations {
            println!("violation: {v}");
        }
        Err(Failure::Check(format!("{} inequality violation(s)", report.violations.len())))
    }
}

#[derive(Args)]
struct NoiseArgs {
    /// Draws per sampler.
    #[arg(long, default_value_t = 1_000_000)]
    draws: u64,
    #[arg(long, default_value_t = 6021023)]
    seed: u64,
    /// Validity threshold the answer-noise variance is computed for.
    #[arg(long, default_value_t = 0.4)]
    tau: f64,
    /// Failure budget the answer-noise variance is computed for.
    #[arg(long, default_value_t = 0.1)]
    beta: f64,
    /// Dataset size the answer-noise variance is computed for.
    #[arg(long, default_value_t = 493)]
    n: u64,
    /// Scale of the two-sided-exponential sampler.
    #[arg(long, default_value_t = 1.0)]
    scale: f64,
}

fn cmd_noise_test(args: &NoiseArgs) -> Result<(), Failure> {
    if args.draws == 0 {
        return Err(Failure::Usage("--draws must be at least 1".into()));
    }
    let variance = answer_noise_variance(args.tau, args.beta, args.n).map_err(usage)?;
    let bound = args.tau / 4.0;
    let gaussian = TruncatedGaussian::new(variance, bound).map_err(usage)?;
    let laplace = Laplace::new(args.scale).map_err(usage)?;

    let mut rng = ChaCha8Rng::seed_from_u64(args.seed);
    rng.set_stream(0);
    let mut outside = 0u64;
    let mut mean = KahanSum::new();
    let mut max_abs = 0.0f64;
    for _ in 0..args.draws {
        let x = gaussian.sample(&mut rng).map_err(check)?;
        if x.abs() > bound {
            outside += 1;
        }
        max_abs = max_abs.max(x.abs());
        mean.add(x);
    }
    let mean = mean.total() / args.draws as f64;
    let mean_allowance = 4.0 * variance.sqrt() / (args.draws as f64).sqrt();
    println!(
        "truncated gaussian: variance {variance:.6e} (tau {}, beta {}, n {}), bound {bound:.6}",
        args.tau, args.beta, args.n,
    );
    println!(
        "  {} draws: {outside} outside the support, mean {mean:.3e} (allowance {mean_allowance:.3e}), max |x| {max_abs:.6}",
        args.draws,
    );

    let mut rng = ChaCha8Rng::seed_from_u64(args.seed);
    rng.set_stream(1);
    let tail_cut = args.scale * 100f64.ln();
    let mut tail = 0u64;
    for _ in 0..args.draws {
        if laplace.sample(&mut rng).abs() > tail_cut {
            tail += 1;
        }
    }
    let tail_rate = tail as f64 / args.draws as f64;
    println!(
        "two-sided exponential (scale {}): P(|X| > scale ln 100) = {tail_rate:.4} (expected 0.0100)",
        args.scale,
    );

    let mut failures = Vec::new();
    if outside > 0 {
        failures.push(format!("{outside} draws escaped the truncation bound"));
    }
    if mean.abs() > mean_allowance {
        failures.push(format!("gaussian mean {mean:.3e} exceeds the {mean_allowance:.3e} allowance"));
    }
    if (tail_rate - 0.01).abs() > 0.003 {
        failures.push(format!("exponential tail rate {tail_rate:.4} is not 0.0100 +/- 0.0030"));
    }
    if failures.is_empty() {
        println!("all embedded checks passed");
        Ok(())
    } else {
        Err(Failure::Check(failures.join("; ")))
    }
}
