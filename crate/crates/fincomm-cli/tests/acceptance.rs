//! Acceptance suite: nine criteria covering the data anchor, the algebraic
//! identities, brute-force equivalence, baseline round-trips, fault
//! detectability, chain propagation, end-to-end determinism, wire
//! conformance, and the batch harness. Each test prints one pass/fail line.
//!
//! Run with: cargo test -p fincomm-cli --test acceptance -- --nocapture

use std::collections::BTreeSet;
use std::panic::{catch_unwind, UnwindSafe};
use std::path::{Path, PathBuf};
use std::process::Command;

use fincomm_core::claims::{build_lexicon, parse_summary, EntityRef};
use fincomm_core::eval_harness::{batch_evaluate, chain_fault_experiment, metrics_csv};
use fincomm_core::ledger::{
    compute_contributions, compute_delta_table, load_observations, render_prompt_table,
    write_preaggregated_csv, DeltaTable, LoadedData, ObservationRow, ObservationSet, SchemaMode,
    TableStyle,
};
use fincomm_core::llm_gateway::{
    cloud_body, complete, local_body, BackendConfig, ChatMessage, FaultClass, FaultProfile,
};
use fincomm_core::trend_oracle::{analyze, baseline_summary, OracleConfig, TrendDirection};
use fincomm_core::validator::{validate, RuleConfig, RuleId};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn workspace_root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../..")
        .canonicalize()
        .expect("workspace root")
}

fn criterion(number: u32, description: &str, body: impl FnOnce() + UnwindSafe) {
    let result = catch_unwind(body);
    match &result {
        Ok(()) => println!("[PASS] criterion {number}: {description}"),
        Err(_) => println!("[FAIL] criterion {number}: {description}"),
    }
    if let Err(panic) = result {
        std::panic::resume_unwind(panic);
    }
}

const LINE_POOL: [&str; 6] = ["PL-A", "PL-B", "PL-C", "PL-D", "PL-E", "PL-F"];
const REGION_POOL: [&str; 4] = ["AMER", "EMEA", "APAC", "LATAM"];

/// Random delta table with integer cell values (exact in f64).
fn random_table(rng: &mut ChaCha8Rng, all_zero: bool) -> DeltaTable {
    let lines = rng.random_range(2..=LINE_POOL.len());
    let regions = rng.random_range(1..=REGION_POOL.len());
    let mut rows = Vec::new();
    for line in LINE_POOL.iter().take(lines) {
        for region in REGION_POOL.iter().take(regions) {
            if rng.random_range(0..5) == 0 {
                continue; // sparse tables
            }
            let delta = if all_zero {
                0.0
            } else {
                rng.random_range(-1_000_000_000i64..=1_000_000_000) as f64
            };
            rows.push((line.to_string(), region.to_string(), delta));
        }
    }
    if rows.is_empty() {
        rows.push(("PL-A".into(), "AMER".into(), if all_zero { 0.0 } else { 1.0 }));
    }
    compute_contributions(DeltaTable::from_deltas(rows, "period_a", "period_b"))
}

/// Random table with a dominant positive cell, so the overall trend is an
/// increase, the main driver is the top-ranked row, and the baseline always
/// has a headline to corrupt.
fn random_driver_table(rng: &mut ChaCha8Rng) -> DeltaTable {
    let mut table = loop {
        let t = random_table(rng, false);
        if t.rows.len() >= 2 {
            break t;
        }
    };
    let others: f64 = table.rows[1..].iter().map(|r| r.total_difference.abs()).sum();
    table.rows[0].total_difference = others + rng.random_range(1_000i64..1_000_000) as f64;
    compute_contributions(DeltaTable::from_deltas(
        table
            .rows
            .into_iter()
            .map(|r| (r.product_line, r.region, r.total_difference)),
        "period_a",
        "period_b",
    ))
}

fn table_messages(table: &DeltaTable) -> Vec<ChatMessage> {
    let text = render_prompt_table(table, TableStyle::Markdown).unwrap();
    vec![
        ChatMessage::system("You are a financial analyst."),
        ChatMessage::user(format!("Data: {text}\n\nSummarize the detected trends.")),
    ]
}

#[test]
fn criterion_1_example_dataset_anchor() {
    criterion(1, "example dataset anchor: driver, detractor, and direction", || {
        let path = workspace_root().join("fixtures/order_intake_deltas.csv");
        let LoadedData::Preaggregated(table) =
            load_observations(&path, SchemaMode::Preaggregated).unwrap()
        else {
            panic!("expected preaggregated fixture");
        };
        assert_eq!(table.rows.len(), 18);
        let analysis = analyze(&table, &OracleConfig::default());
        assert_eq!(
            analysis.main_driver,
            Some(("CCVE".to_string(), "AMER - Americas".to_string()))
        );
        assert_eq!(
            analysis.main_detractor,
            Some(("CCVE".to_string(), "APAC - Asia/Pacific".to_string()))
        );
        assert_eq!(analysis.overall_direction, TrendDirection::Increase);
        assert_eq!(analysis.net_total, 118_833_297.0);
    });
}

#[test]
fn criterion_2_contribution_identity() {
    criterion(2, "contribution identity on 1,000 random tables", || {
        let mut rng = ChaCha8Rng::seed_from_u64(0xC0FFEE);
        for i in 0..1_000 {
            let all_zero = i % 10 == 0;
            let table = random_table(&mut rng, all_zero);
            let total: f64 = table.rows.iter().map(|r| r.contribution_pct).sum();
            if table.abs_total > 0.0 {
                let expected = 100.0 * table.net_total / table.abs_total;
                let tolerance = 1e-9 * expected.abs().max(1.0);
                assert!(
                    (total - expected).abs() <= tolerance,
                    "table {i}: {total} vs {expected}"
                );
            } else {
                assert!(
                    table.rows.iter().all(|r| r.contribution_pct == 0.0),
                    "table {i}: zero table must have zero contributions"
                );
            }
        }
    });
}

fn random_observation_set(rng: &mut ChaCha8Rng) -> ObservationSet {
    let rows = rng.random_range(0..=200);
    let mut out = Vec::new();
    let mut periods: BTreeSet<String> = BTreeSet::new();
    periods.insert("P1".into());
    periods.insert("P2".into());
    for _ in 0..rows {
        let line = LINE_POOL[rng.random_range(0..LINE_POOL.len())];
        let region = REGION_POOL[rng.random_range(0..REGION_POOL.len())];
        let period = if rng.random_bool(0.5) { "P1" } else { "P2" };
        out.push(ObservationRow {
            business_area: "BA".into(),
            product_line: line.into(),
            region: region.into(),
            period: period.into(),
            value: rng.random_range(-10_000_000i64..=10_000_000) as f64,
        });
    }
    ObservationSet {
        rows: out,
        periods,
    }
}

#[test]
fn criterion_3_brute_force_equivalence() {
    criterion(3, "aggregation and ranking match brute force on 1,000 sets", || {
        let mut rng = ChaCha8Rng::seed_from_u64(0xBEEF);
        for i in 0..1_000 {
            let obs = random_observation_set(&mut rng);
            let table =
                compute_contributions(compute_delta_table(&obs, "P1", "P2").unwrap());

            // Brute-force aggregation: filter rows per key and period.
            let mut keys: BTreeSet<(String, String)> = BTreeSet::new();
            for r in &obs.rows {
                keys.insert((r.product_line.clone(), r.region.clone()));
            }
            assert_eq!(table.rows.len(), keys.len(), "set {i}: key count");
            for (pl, rg) in &keys {
                let sum = |p: &str| -> f64 {
                    obs.rows
                        .iter()
                        .filter(|r| &r.product_line == pl && &r.region == rg && r.period == p)
                        .map(|r| r.value)
                        .sum()
                };
                let expected = sum("P2") - sum("P1");
                let got = table.row(pl, rg).unwrap().total_difference;
                assert!(
                    (got - expected).abs() <= 1e-6 * expected.abs().max(1.0),
                    "set {i}: ({pl}, {rg}) {got} vs {expected}"
                );
            }

            // Brute-force oracle scan.
            let analysis = analyze(&table, &OracleConfig::default());
            let driver = table
                .rows
                .iter()
                .filter(|r| r.contribution_pct > 0.0)
                .map(|r| {
                    (
                        -r.contribution_pct,
                        r.product_line.clone(),
                        r.region.clone(),
                    )
                })
                .min_by(|a, b| a.partial_cmp(b).unwrap())
                .map(|(_, pl, rg)| (pl, rg));
            let detractor = table
                .rows
                .iter()
                .filter(|r| r.contribution_pct < 0.0)
                .map(|r| (r.contribution_pct, r.product_line.clone(), r.region.clone()))
                .min_by(|a, b| a.partial_cmp(b).unwrap())
                .map(|(_, pl, rg)| (pl, rg));
            assert_eq!(analysis.main_driver, driver, "set {i}: driver");
            assert_eq!(analysis.main_detractor, detractor, "set {i}: detractor");

            let mut expected_rank: Vec<(String, String)> = table
                .rows
                .iter()
                .map(|r| (r.product_line.clone(), r.region.clone()))
                .collect();
            expected_rank.sort_by(|a, b| {
                let ca = table.row(&a.0, &a.1).unwrap().contribution_pct.abs();
                let cb = table.row(&b.0, &b.1).unwrap().contribution_pct.abs();
                cb.partial_cmp(&ca).unwrap().then_with(|| a.cmp(b))
            });
            let got_rank: Vec<(String, String)> = analysis
                .ranked_rows
                .iter()
                .map(|r| (r.product_line.clone(), r.region.clone()))
                .collect();
            assert_eq!(got_rank, expected_rank, "set {i}: ranking");
        }
    });
}

#[test]
fn criterion_4_baseline_round_trip() {
    criterion(4, "baseline summaries parse clean on 200 random tables", || {
        let mut rng = ChaCha8Rng::seed_from_u64(0xFACADE);
        for i in 0..200 {
            let table = random_table(&mut rng, false);
            let analysis = analyze(&table, &OracleConfig::default());
            let summary = baseline_summary(&analysis, 4);
            let report = validate(&summary, &table, &analysis, &RuleConfig::default());
            assert!(
                report.violations.is_empty(),
                "table {i}: {:?} for {summary:?}",
                report.violations
            );
            if !summary.is_empty() {
                assert_eq!(report.faithfulness, 1.0, "table {i}");
            }
            let lexicon = build_lexicon(&table, None).unwrap();
            let parsed = parse_summary(&summary, &lexicon);
            assert!(parsed.unparsed.is_empty(), "table {i}: {:?}", parsed.unparsed);
            assert!(parsed.claims.len() <= 4, "table {i}");
            let sentence_count =
                fincomm_core::claims::segment_sentences(&summary, Some(&lexicon)).len();
            assert!(sentence_count <= 4, "table {i}: {sentence_count} sentences");
            // Digits only inside entity names; pool names carry none.
            let masked: String = summary
                .chars()
                .filter(|c| c.is_ascii_digit())
                .collect();
            assert!(masked.is_empty(), "table {i}: digits in {summary:?}");
        }
    });
}

#[test]
fn criterion_5_fault_detectability() {
    criterion(5, "each fault class flagged by its mapped rule on 100 tables", || {
        let mut rng = ChaCha8Rng::seed_from_u64(0xFA011);
        for i in 0..100 {
            let table = random_driver_table(&mut rng);
            let analysis = analyze(&table, &OracleConfig::default());
            let rules = RuleConfig::default();
            let messages = table_messages(&table);

            let clean = complete(&BackendConfig::mock(), &messages).unwrap();
            let clean_report = validate(&clean.content, &table, &analysis, &rules);
            assert!(clean_report.violations.is_empty(), "table {i} clean run");

            for class in FaultClass::ALL {
                let mut cfg = BackendConfig::mock();
                cfg.fault_profile = Some(FaultProfile::single(class, 1.0, i as u64));
                let corrupted = complete(&cfg, &messages).unwrap();
                let report = validate(&corrupted.content, &table, &analysis, &rules);
                let detected = match class {
                    FaultClass::DropTopDriver => report.coverage_top_k < 1.0,
                    FaultClass::InjectUngroundedEntity => {
                        report.violations.iter().any(|v| v.rule_id == RuleId::E1)
                    }
                    FaultClass::InjectNumeral => {
                        report.violations.iter().any(|v| v.rule_id == RuleId::S2)
                    }
                    FaultClass::RepeatProductLine => {
                        report.violations.iter().any(|v| v.rule_id == RuleId::U1)
                    }
                    FaultClass::ContradictDirection => {
                        report.violations.iter().any(|v| v.rule_id == RuleId::F1)
                    }
                    FaultClass::EmitCodeBlock => report.unparsed > 0 && report.parsed_claims == 0,
                };
                assert!(
                    detected,
                    "table {i}, {class:?} undetected: {:?} -> {report:?}",
                    corrupted.content
                );
            }
        }

        // The L2 logic rule, triggered by a summary naming both headline
        // kinds, mirrors the structural failure seen in review excerpts.
        let mut rng = ChaCha8Rng::seed_from_u64(0x12);
        let table = random_driver_table(&mut rng);
        let analysis = analyze(&table, &OracleConfig::default());
        let driver = analysis.main_driver.clone().unwrap();
        let summary = format!(
            "{} in {} as main growth driver. {} in {} as main detractor.",
            driver.0, driver.1, driver.0, driver.1
        );
        let report = validate(&summary, &table, &analysis, &RuleConfig::default());
        assert!(report.violations.iter().any(|v| v.rule_id == RuleId::L2));
    });
}

#[test]
fn criterion_6_chain_error_propagation() {
    criterion(6, "chain corruption matches 1-0.9^4 and is monotone in depth", || {
        let result = chain_fault_experiment(4, 0.1, 2_000, 42);
        let expected = 1.0 - 0.9f64.powi(4);
        assert!(
            (result.corrupted_fraction - expected).abs() <= result.ci95_halfwidth.max(0.021),
            "corrupted {} vs expected {expected} (ci {})",
            result.corrupted_fraction,
            result.ci95_halfwidth
        );

        let mut previous = 0.0;
        for stages in 1..=4 {
            let r = chain_fault_experiment(stages, 0.1, 2_000, 42);
            assert!(
                r.corrupted_fraction >= previous,
                "stages {stages}: {} < {previous}",
                r.corrupted_fraction
            );
            previous = r.corrupted_fraction;
        }
    });
}

fn run_generate(dir: &Path, workflow: &str, tag: &str) -> (Vec<u8>, Vec<u8>) {
    let root = workspace_root();
    let out = dir.join(format!("{workflow}-{tag}.txt"));
    let runlog = dir.join(format!("{workflow}-{tag}.jsonl"));
    let status = Command::new(env!("CARGO_BIN_EXE_fincomm"))
        .current_dir(&root)
        .args([
            "generate",
            "--deltas",
            "fixtures/order_intake_deltas.csv",
            "--workflow",
            workflow,
            "--backend",
            "mock",
            "--out",
            out.to_str().unwrap(),
            "--runlog",
            runlog.to_str().unwrap(),
        ])
        .status()
        .expect("binary runs");
    assert!(status.success(), "{workflow} run failed");
    (
        std::fs::read(out).expect("summary written"),
        std::fs::read(runlog).expect("runlog written"),
    )
}

#[test]
fn criterion_7_end_to_end_determinism() {
    criterion(7, "generate is byte-identical across runs for WF-A/B/C", || {
        let dir = tempfile::tempdir().unwrap();
        for workflow in ["WF-A", "WF-B", "WF-C"] {
            let (summary_1, runlog_1) = run_generate(dir.path(), workflow, "first");
            let (summary_2, runlog_2) = run_generate(dir.path(), workflow, "second");
            assert_eq!(summary_1, summary_2, "{workflow} summary bytes");
            assert_eq!(runlog_1, runlog_2, "{workflow} runlog bytes");
            if workflow == "WF-B" {
                let text = String::from_utf8(summary_1.clone()).unwrap();
                assert!(
                    text.starts_with("CCVE in AMER - Americas as main growth driver."),
                    "golden prefix, got {text:?}"
                );
            }
        }
    });
}

/// Minimal HTTP stub recording the exact request body.
mod stub {
    use std::io::{Read, Write};
    use std::net::TcpListener;

    pub struct Stub {
        pub url: String,
        pub body: std::sync::mpsc::Receiver<String>,
        handle: Option<std::thread::JoinHandle<()>>,
    }

    pub fn serve(response_body: &'static str) -> Stub {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let url = format!("http://{}", listener.local_addr().unwrap());
        let (tx, rx) = std::sync::mpsc::channel();
        let handle = std::thread::spawn(move || {
            let Ok((mut stream, _)) = listener.accept() else {
                return;
            };
            let mut buf = Vec::new();
            let mut tmp = [0u8; 8192];
            let mut header_end = 0;
            let mut content_length = 0;
            loop {
                let n = stream.read(&mut tmp).unwrap_or(0);
                if n == 0 {
                    break;
                }
                buf.extend_from_slice(&tmp[..n]);
                if header_end == 0 {
                    if let Some(pos) = buf.windows(4).position(|w| w == b"\r\n\r\n") {
                        header_end = pos + 4;
                        for line in String::from_utf8_lossy(&buf[..pos]).lines() {
                            if let Some(v) = line
                                .to_ascii_lowercase()
                                .strip_prefix("content-length:")
                                .map(str::trim)
                                .and_then(|v| v.parse().ok())
                            {
                                content_length = v;
                            }
                        }
                    }
                }
                if header_end > 0 && buf.len() >= header_end + content_length {
                    break;
                }
            }
            if header_end > 0 {
                let body = &buf[header_end..header_end + content_length];
                let _ = tx.send(String::from_utf8_lossy(body).to_string());
            }
            let response = format!(
                "HTTP/1.1 200 OK\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{response_body}",
                response_body.len()
            );
            let _ = stream.write_all(response.as_bytes());
        });
        Stub {
            url,
            body: rx,
            handle: Some(handle),
        }
    }

    impl Drop for Stub {
        fn drop(&mut self) {
            if let Some(h) = self.handle.take() {
                let _ = std::net::TcpStream::connect(self.url.trim_start_matches("http://"));
                let _ = h.join();
            }
        }
    }
}

#[test]
fn criterion_8_wire_conformance() {
    criterion(8, "cloud and local protocols emit the exact canonical bodies", || {
        let messages = vec![
            ChatMessage::system("You are a financial analyst."),
            ChatMessage::user("Summarize the table."),
        ];

        // Cloud protocol.
        let cloud_stub = stub::serve(
            r#"{"choices":[{"message":{"role":"assistant","content":"ok"}}]}"#,
        );
        let mut cloud_cfg = BackendConfig::cloud(cloud_stub.url.clone(), "gpt-test");
        cloud_cfg.api_key_env = "FINCOMM_ACCEPTANCE_KEY".into();
        std::env::set_var("FINCOMM_ACCEPTANCE_KEY", "sk-acceptance");
        let completion = complete(&cloud_cfg, &messages).unwrap();
        assert_eq!(completion.content, "ok");
        let sent = cloud_stub.body.recv().unwrap();
        let expected = cloud_body(&cloud_cfg, &messages);
        assert_eq!(sent, expected, "cloud body byte diff");
        let value: serde_json::Value = serde_json::from_str(&sent).unwrap();
        let keys: BTreeSet<&str> = value.as_object().unwrap().keys().map(String::as_str).collect();
        let want: BTreeSet<&str> = ["model", "messages", "temperature", "max_tokens"]
            .into_iter()
            .collect();
        assert_eq!(keys, want, "cloud body key set");

        // Local protocol.
        let local_stub = stub::serve(
            r#"{"model":"m","message":{"role":"assistant","content":"ok"},"done":true}"#,
        );
        let local_cfg = BackendConfig::local(local_stub.url.clone(), "llama-test");
        let completion = complete(&local_cfg, &messages).unwrap();
        assert_eq!(completion.content, "ok");
        let sent = local_stub.body.recv().unwrap();
        let expected = local_body(&local_cfg, &messages);
        assert_eq!(sent, expected, "local body byte diff");
        let value: serde_json::Value = serde_json::from_str(&sent).unwrap();
        let keys: BTreeSet<&str> = value.as_object().unwrap().keys().map(String::as_str).collect();
        let want: BTreeSet<&str> = ["model", "messages", "stream", "options"].into_iter().collect();
        assert_eq!(keys, want, "local body key set");
        assert_eq!(value["stream"], serde_json::Value::Bool(false));
    });
}

#[test]
fn criterion_9_batch_harness() {
    criterion(9, "batch harness: 20 synthetic pairs, stable output", || {
        let dir = tempfile::tempdir().unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(20_240_601);
        for i in 0..20 {
            let table = random_driver_table(&mut rng);
            let analysis = analyze(&table, &OracleConfig::default());
            let reference = baseline_summary(&analysis, 4);

            // Half the generated summaries carry an injected fault so the
            // aggregate exercises both verdicts.
            let mut cfg = BackendConfig::mock();
            if i % 2 == 1 {
                let class = FaultClass::ALL[i % FaultClass::ALL.len()];
                cfg.fault_profile = Some(FaultProfile::single(class, 1.0, i as u64));
            }
            let generated = complete(&cfg, &table_messages(&table)).unwrap().content;

            let name = format!("pair{i:02}");
            std::fs::write(dir.path().join(format!("{name}.gen.txt")), &generated).unwrap();
            std::fs::write(dir.path().join(format!("{name}.ref.txt")), &reference).unwrap();
            let mut buf = Vec::new();
            write_preaggregated_csv(&table, &mut buf).unwrap();
            std::fs::write(dir.path().join(format!("{name}.table.csv")), buf).unwrap();
        }

        let run = || {
            let result = batch_evaluate(
                dir.path(),
                dir.path(),
                &OracleConfig::default(),
                &RuleConfig::default(),
            )
            .unwrap();
            (result.rows.len(), metrics_csv(&result))
        };
        let (rows_1, csv_1) = run();
        let (rows_2, csv_2) = run();
        assert_eq!(rows_1, 20);
        assert_eq!(rows_2, 20);
        assert_eq!(csv_1, csv_2, "batch output must be identical across runs");
        assert_eq!(csv_1.lines().count(), 22, "header + 20 rows + aggregate");
        assert!(csv_1.lines().last().unwrap().starts_with("AGGREGATE,"));

        // Spot sanity: grounded entities in references resolve.
        let table = random_driver_table(&mut rng);
        let lexicon = build_lexicon(&table, None).unwrap();
        let parsed = parse_summary(
            &baseline_summary(&analyze(&table, &OracleConfig::default()), 4),
            &lexicon,
        );
        assert!(parsed.claims.iter().all(|c| matches!(c.subject, EntityRef::Grounded(_))));
    });
}
