// Copyright (c) 2026 The Everlasting Database Contributors
// SPDX-License-Identifier: Apache-2.0

//! Interleaving invariance for autonomous users.
//!
//! Every user draws its queries and its answer noise from private random
//! streams, and the answering set refreshes on a schedule driven only by
//! the global answer count. Two consequences are pinned here:
//!
//! * While interleaved third-party traffic does not push a data refresh
//!   into a user's stream, that user receives bit-identical answers with
//!   or without the traffic. Only prices move, because the price decays
//!   with the global submission index.
//! * Once combined traffic does cross the refresh threshold mid-stream,
//!   later answers genuinely diverge — which is what makes the equality
//!   above meaningful rather than vacuous.
//!
//! Both runs of each pair share one master seed; the per-user channel
//! layout alone is what keeps the overlapping streams aligned.

use everlasting::harness::{
    run_campaign, Campaign, DistributionSpec, Interleaving, MechanismSpec, OutputSpec, RunConfig,
    StrategySpec, UserSpec,
};
use everlasting::kahan::KahanSum;
use everlasting::{answer_cap, initial_round_size, TranscriptEntry};

const TAU: f64 = 0.4;
const BETA: f64 = 0.1;
const DOMAIN: usize = 64;
const MASTER_SEED: u64 = 24601;

fn priced_mechanism() -> MechanismSpec {
    MechanismSpec::Everlasting {
        tau: TAU,
        beta: BETA,
        sample_unit_cost: 1.0,
        double_charge_on_restart: true,
    }
}

fn config(users: Vec<UserSpec>, trials: u64) -> RunConfig {
    RunConfig {
        mechanism: priced_mechanism(),
        distribution: DistributionSpec::Uniform { domain_size: DOMAIN },
        users,
        interleaving: Interleaving::RoundRobin,
        trials,
        master_seed: MASTER_SEED,
        output: OutputSpec::default(),
    }
}

/// Round-0 answer budget at the test parameters (the failure share halves
/// each round, so round 0 runs at `beta / 2`). Workload sizes in the tests
/// are chosen on either side of it.
fn round_zero_cap() -> u64 {
    let n0 = initial_round_size(TAU, BETA).expect("valid parameters");
    answer_cap(TAU, BETA / 2.0, n0).expect("valid parameters")
}

fn entries_for<'a>(campaign: &'a Campaign, trial: u64, tag: &str) -> Vec<&'a TranscriptEntry> {
    campaign
        .transcript
        .entries
        .iter()
        .filter(|e| e.trial == trial && e.user_tag == tag)
        .collect()
}

/// Re-derives each user's reported spend from its transcript rows, in
/// submission order, with the same compensated summation the harness uses.
/// Exact equality is the contract; the workloads here never incur restart
/// charges, which the helper also pins so the price column stays a pure
/// per-answer price.
fn reconcile_costs(campaign: &Campaign) {
    for record in &campaign.report.trials {
        for stats in &record.users {
            let mut prices = KahanSum::new();
            for entry in campaign
                .transcript
                .entries
                .iter()
                .filter(|e| e.trial == record.trial && e.user_tag == stats.tag)
            {
                prices.add(entry.price);
            }
            assert_eq!(stats.restart_cost, 0.0, "workload sized to avoid restart charges");
            assert_eq!(
                prices.total(),
                stats.total_cost,
                "transcript prices must account exactly for {}'s reported spend",
                stats.tag
            );
        }
    }
}

#[test]
fn third_party_traffic_leaves_an_autonomous_users_answers_unchanged() {
    let adaptive = UserSpec {
        tag: "adaptive".into(),
        strategy: StrategySpec::SignAggregationAttack { probes: 60, aggregates: 1 },
    };
    let table = UserSpec {
        tag: "table".into(),
        strategy: StrategySpec::FixedRandomQueries { queries: 150 },
    };
    assert!(61 + 150 < round_zero_cap(), "sized to finish inside round 0");

    let solo = run_campaign(&config(vec![adaptive.clone()], 2)).expect("solo campaign runs");
    let mixed = run_campaign(&config(vec![adaptive, table], 2)).expect("mixed campaign runs");

    for trial in 0..2u64 {
        let solo_record = &solo.report.trials[trial as usize];
        let mixed_record = &mixed.report.trials[trial as usize];
        assert_eq!(solo_record.rounds_opened, 1);
        assert_eq!(mixed_record.rounds_opened, 1);
        assert!(mixed_record.turnover_triggers.is_empty());

        let alone = entries_for(&solo, trial, "adaptive");
        let interleaved = entries_for(&mixed, trial, "adaptive");
        assert_eq!(alone.len(), 61);
        assert_eq!(alone.len(), interleaved.len());

        let mut moved_prices = 0;
        for (a, b) in alone.iter().zip(&interleaved) {
            assert_eq!(a.query_id, b.query_id);
            assert_eq!(a.answer, b.answer, "answers must not depend on unrelated traffic");
            assert_eq!(a.overfit_flag, b.overfit_flag);
            assert_eq!(a.round, b.round);
            if a.price != b.price {
                moved_prices += 1;
            }
        }
        // Round-robin moves this user's k-th submission from global index k
        // to 2k - 1, so every price after the first one shifts.
        assert_eq!(alone[0].price, interleaved[0].price);
        assert_eq!(moved_prices, 60);
    }

    reconcile_costs(&solo);
    reconcile_costs(&mixed);
}

#[test]
fn a_refresh_pushed_in_by_third_party_traffic_changes_later_answers() {
    let observer = UserSpec {
        tag: "observer".into(),
        strategy: StrategySpec::FixedRandomQueries { queries: 150 },
    };
    let bulk = UserSpec {
        tag: "bulk".into(),
        strategy: StrategySpec::FixedRandomQueries { queries: 300 },
    };
    let cap = round_zero_cap();
    assert!(150 < cap && 450 > cap, "solo fits in round 0, combined traffic does not");

    let solo = run_campaign(&config(vec![observer.clone()], 1)).expect("solo campaign runs");
    let mixed = run_campaign(&config(vec![observer, bulk], 1)).expect("mixed campaign runs");

    let solo_record = &solo.report.trials[0];
    let mixed_record = &mixed.report.trials[0];
    assert_eq!(solo_record.rounds_opened, 1);
    assert_eq!(solo_record.natural_halts, 0);
    assert_eq!(mixed_record.rounds_opened, 2);
    assert_eq!(mixed_record.natural_halts, 1);
    assert_eq!(mixed_record.premature_halts, 0);
    assert_eq!(mixed_record.turnover_triggers.len(), 1);

    let alone = entries_for(&solo, 0, "observer");
    let interleaved = entries_for(&mixed, 0, "observer");
    assert_eq!(alone.len(), 150);
    assert_eq!(interleaved.len(), 150);
    assert!(alone.iter().all(|e| e.round == 0), "solo run never leaves round 0");

    // The query stream itself stays bit-identical even across the refresh:
    // per-user channels are untouched by the extra traffic.
    for (a, b) in alone.iter().zip(&interleaved) {
        assert_eq!(a.query_id, b.query_id);
    }

    // Answers agree up to the refresh and genuinely diverge after it
    // (fresh data, fresh noise scale).
    let refresh = interleaved
        .iter()
        .position(|e| e.round > 0)
        .expect("the refresh lands inside the observer's stream");
    assert!(refresh < 150);
    for k in 0..refresh {
        assert_eq!(alone[k].answer, interleaved[k].answer, "answer {k} precedes the refresh");
    }
    assert!(
        alone[refresh..]
            .iter()
            .zip(&interleaved[refresh..])
            .any(|(a, b)| a.answer != b.answer),
        "post-refresh answers must differ somewhere"
    );

    reconcile_costs(&solo);
    reconcile_costs(&mixed);
}
