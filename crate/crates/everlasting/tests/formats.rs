// Copyright (c) 2026 The Everlasting Database Contributors
// SPDX-License-Identifier: Apache-2.0

//! Campaign artifact formats: the fixed-column transcript CSV, the
//! versioned report JSON, and the per-trial event JSONL, including the
//! output-directory override taken from the environment.

use std::path::PathBuf;

use everlasting::harness::{
    run_campaign, DistributionSpec, Interleaving, MechanismSpec, OutputSpec, Report, RunConfig,
    StrategySpec, UserSpec, OUTPUT_DIR_ENV, REPORT_SCHEMA_VERSION,
};
use everlasting::Transcript;

fn small_config(output: OutputSpec) -> RunConfig {
    RunConfig {
        mechanism: MechanismSpec::Everlasting {
            tau: 0.4,
            beta: 0.1,
            sample_unit_cost: 1.0,
            double_charge_on_restart: true,
        },
        distribution: DistributionSpec::Uniform { domain_size: 32 },
        users: vec![
            UserSpec { tag: "table".into(), strategy: StrategySpec::FixedRandomQueries { queries: 6 } },
            UserSpec {
                tag: "adv".into(),
                strategy: StrategySpec::SignAggregationAttack { probes: 4, aggregates: 1 },
            },
            UserSpec { tag: "copy".into(), strategy: StrategySpec::EchoLast { queries: 2 } },
        ],
        interleaving: Interleaving::RoundRobin,
        trials: 3,
        master_seed: 99,
        output,
    }
}

#[test]
fn transcript_csv_round_trips_and_keeps_the_fixed_columns() {
    let campaign = run_campaign(&small_config(OutputSpec::default())).unwrap();
    let mut bytes = Vec::new();
    campaign.transcript.write_csv(&mut bytes).unwrap();
    let text = String::from_utf8(bytes.clone()).unwrap();
    assert!(
        text.starts_with("trial,i,t,user_tag,query_id,answer,price,overfit_flag,capital\n"),
        "unexpected header: {}",
        text.lines().next().unwrap_or("")
    );
    let parsed = Transcript::read_csv(bytes.as_slice()).unwrap();
    assert_eq!(parsed, campaign.transcript);
    // Row count: one line per submission plus the header.
    assert_eq!(text.lines().count(), campaign.transcript.entries.len() + 1);
}

#[test]
fn report_json_round_trips_with_its_schema_version() {
    let campaign = run_campaign(&small_config(OutputSpec::default())).unwrap();
    let bytes = campaign.report.to_json_bytes();
    assert_eq!(bytes.last(), Some(&b'\n'), "reports end with a newline");
    let parsed: Report = serde_json::from_slice(&bytes).unwrap();
    assert_eq!(parsed.schema_version, REPORT_SCHEMA_VERSION);
    assert_eq!(parsed, campaign.report);
    // The config echo inside the report is itself a loadable run config.
    assert_eq!(parsed.config, small_config(OutputSpec::default()));
}

#[test]
fn written_artifacts_match_memory_and_honor_the_env_override() {
    // Single test for everything that touches the filesystem or the
    // environment, so no parallel test races on the process-global var.
    let configured = tempfile::tempdir().unwrap();
    let output = OutputSpec {
        directory: Some(configured.path().to_path_buf()),
        transcript_csv: Some("transcript.csv".into()),
        report_json: Some("report.json".into()),
        events_jsonl: Some("events.jsonl".into()),
    };
    let campaign = run_campaign(&small_config(output)).unwrap();

    std::env::remove_var(OUTPUT_DIR_ENV);
    let written = campaign.write().unwrap();
    assert_eq!(
        written,
        vec![
            configured.path().join("transcript.csv"),
            configured.path().join("report.json"),
            configured.path().join("events.jsonl"),
        ]
    );

    let csv_bytes = std::fs::read(&written[0]).unwrap();
    let mut expected_csv = Vec::new();
    campaign.transcript.write_csv(&mut expected_csv).unwrap();
    assert_eq!(csv_bytes, expected_csv);

    let report_bytes = std::fs::read(&written[1]).unwrap();
    assert_eq!(report_bytes, campaign.report.to_json_bytes());
    let parsed: Report = serde_json::from_slice(&report_bytes).unwrap();
    assert_eq!(parsed, campaign.report);

    let events_text = std::fs::read_to_string(&written[2]).unwrap();
    let lines: Vec<&str> = events_text.lines().collect();
    assert_eq!(lines.len(), campaign.events.len());
    for (line, event) in lines.iter().zip(&campaign.events) {
        let value: serde_json::Value = serde_json::from_str(line).unwrap();
        assert_eq!(value["trial"].as_u64().unwrap(), event.trial);
        assert!(value["event"].is_string(), "event kind is a string: {line}");
        assert!(value["capital"].is_number());
        assert!(value["N_t"].is_number());
    }
    // Purchases appear in every trial (round 0 is always bought).
    let purchases = lines.iter().filter(|l| l.contains("\"purchased\"")).count();
    assert!(purchases >= 3, "expected at least one purchase per trial, saw {purchases}");

    // The environment override redirects everything, leaving the
    // configured directory untouched.
    let overridden = tempfile::tempdir().unwrap();
    std::env::set_var(OUTPUT_DIR_ENV, overridden.path());
    let redirected = campaign.write().unwrap();
    std::env::remove_var(OUTPUT_DIR_ENV);
    assert!(redirected.iter().all(|p| p.starts_with(overridden.path())));
    assert_eq!(std::fs::read(&redirected[0]).unwrap(), expected_csv);

    // No file names configured means nothing is written at all.
    let silent = run_campaign(&small_config(OutputSpec {
        directory: Some(PathBuf::from("/nonexistent/never-created")),
        ..OutputSpec::default()
    }))
    .unwrap();
    assert!(silent.write().unwrap().is_empty());
    assert!(!PathBuf::from("/nonexistent/never-created").exists());
}

#[test]
fn refused_queries_serialize_with_empty_answer_cells() {
    // A starved standalone holdout refuses queries after its halt; the CSV
    // must keep those rows with an empty answer field and read them back.
    let config = RunConfig {
        mechanism: MechanismSpec::HoldoutOnly {
            tau: 0.2,
            beta: 0.1,
            query_allotment: 40,
            budget: 1,
            sample_size: 3,
        },
        distribution: DistributionSpec::Uniform { domain_size: 4 },
        users: vec![UserSpec {
            tag: "table".into(),
            strategy: StrategySpec::FixedRandomQueries { queries: 40 },
        }],
        interleaving: Interleaving::Sequential,
        trials: 4,
        master_seed: 7,
        output: OutputSpec::default(),
    };
    let campaign = run_campaign(&config).unwrap();
    let refused: u64 = campaign.report.trials.iter().map(|t| t.refused).sum();
    assert!(refused > 0, "fixture should produce refusals");
    let mut bytes = Vec::new();
    campaign.transcript.write_csv(&mut bytes).unwrap();
    let parsed = Transcript::read_csv(bytes.as_slice()).unwrap();
    assert_eq!(parsed, campaign.transcript);
    let none_rows = parsed.entries.iter().filter(|e| e.answer.is_none()).count() as u64;
    assert_eq!(none_rows, refused);
}
