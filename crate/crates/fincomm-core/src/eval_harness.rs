//! Batch comparison of generated vs. reference summaries, and the
//! Monte-Carlo study of error propagation through chained stages.
//!
//! Pair metrics are orthogonal: entity overlap and coverage penalize
//! missing subjects, direction agreement judges only subjects both texts
//! mention. The chain experiment couples all trials through common random
//! numbers, so corruption rates are exactly monotone in depth and fault
//! rate.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::claims::{build_lexicon, parse_summary, EntityRef, Lexicon};
use crate::ledger::{compute_contributions, load_observations, DeltaTable, LoadedData, SchemaMode};
use crate::llm_gateway::mock::apply_fault_class;
use crate::llm_gateway::FaultClass;
use crate::trend_oracle::{analyze, baseline_summary, Direction, OracleConfig, TrendAnalysis};
use crate::validator::{
    score_faithfulness, validate_with_lexicon, RuleConfig, RuleId, ValidationReport, Verdict,
};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("missing counterpart for pair {0:?}")]
    MissingCounterpart(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("table load for pair {name:?}: {source}")]
    Table {
        name: String,
        source: crate::ledger::LedgerError,
    },
}

/// Metrics for one generated/reference pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairMetrics {
    /// Jaccard overlap of grounded product-line mentions.
    pub entity_overlap: f64,
    /// Agreeing shared-subject claims over shared subjects; vacuously 1.
    pub direction_agreement: f64,
    pub coverage_top_k_gen: f64,
    pub coverage_top_k_ref: f64,
    pub violation_counts: BTreeMap<RuleId, usize>,
    pub verdict: Verdict,
}

fn grounded_lines(parsed: &crate::claims::ParseResult) -> BTreeSet<String> {
    parsed
        .claims
        .iter()
        .filter_map(|c| match &c.subject {
            EntityRef::Grounded(l) => Some(l.clone()),
            EntityRef::Ungrounded(_) => None,
        })
        .collect()
}

fn first_direction(parsed: &crate::claims::ParseResult, line: &str) -> Option<Direction> {
    parsed
        .claims
        .iter()
        .find(|c| matches!(&c.subject, EntityRef::Grounded(l) if l == line))
        .map(|c| c.direction)
}

/// Compare one generated summary against its reference over the same table.
/// The validator verdict applies to the generated text only.
pub fn evaluate_pair(
    generated: &str,
    reference: &str,
    table: &DeltaTable,
    oracle_cfg: &OracleConfig,
    rules: &RuleConfig,
) -> PairMetrics {
    let lexicon = build_lexicon(table, None).expect("lexicon from table cannot fail");
    evaluate_pair_with_lexicon(generated, reference, &lexicon, &analyze(table, oracle_cfg), rules)
}

/// Same as [`evaluate_pair`] with a shared lexicon and analysis, so batch
/// callers build them once per table.
pub fn evaluate_pair_with_lexicon(
    generated: &str,
    reference: &str,
    lexicon: &Lexicon,
    analysis: &TrendAnalysis,
    rules: &RuleConfig,
) -> PairMetrics {
    let gen_parsed = parse_summary(generated, lexicon);
    let ref_parsed = parse_summary(reference, lexicon);

    let gen_lines = grounded_lines(&gen_parsed);
    let ref_lines = grounded_lines(&ref_parsed);
    let union = gen_lines.union(&ref_lines).count();
    let intersection: Vec<&String> = gen_lines.intersection(&ref_lines).collect();
    let entity_overlap = if union == 0 {
        1.0
    } else {
        intersection.len() as f64 / union as f64
    };

    let direction_agreement = if intersection.is_empty() {
        1.0
    } else {
        let agreeing = intersection
            .iter()
            .filter(|line| {
                first_direction(&gen_parsed, line) == first_direction(&ref_parsed, line)
            })
            .count();
        agreeing as f64 / intersection.len() as f64
    };

    let gen_score = score_faithfulness(&gen_parsed.claims, analysis, rules.coverage_top_k);
    let ref_score = score_faithfulness(&ref_parsed.claims, analysis, rules.coverage_top_k);
    let report = validate_with_lexicon(generated, lexicon, analysis, rules);

    PairMetrics {
        entity_overlap,
        direction_agreement,
        coverage_top_k_gen: gen_score.coverage_top_k,
        coverage_top_k_ref: ref_score.coverage_top_k,
        violation_counts: report.count_by_rule(),
        verdict: report.verdict,
    }
}

/// One row of a batch run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchRow {
    pub name: String,
    pub metrics: PairMetrics,
}

/// Unweighted means over a batch, plus total violation counts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchAggregate {
    pub pairs: usize,
    pub entity_overlap: f64,
    pub direction_agreement: f64,
    pub coverage_top_k_gen: f64,
    pub coverage_top_k_ref: f64,
    pub violation_counts: BTreeMap<RuleId, usize>,
    pub pass_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchResult {
    pub rows: Vec<BatchRow>,
    pub aggregate: BatchAggregate,
}

/// Evaluate every `<name>.gen.txt` / `<name>.ref.txt` pair under
/// `pairs_dir`, with `<name>.table.csv` (preaggregated schema) found in
/// `table_dir`. Rows come out in filename order.
pub fn batch_evaluate(
    pairs_dir: &Path,
    table_dir: &Path,
    oracle_cfg: &OracleConfig,
    rules: &RuleConfig,
) -> Result<BatchResult, EvalError> {
    let mut names: Vec<String> = Vec::new();
    if pairs_dir.is_dir() {
        for entry in std::fs::read_dir(pairs_dir)? {
            let entry = entry?;
            let file_name = entry.file_name();
            let Some(file_name) = file_name.to_str() else {
                continue;
            };
            if let Some(name) = file_name.strip_suffix(".gen.txt") {
                names.push(name.to_string());
            }
        }
    }
    names.sort();

    let inputs: Vec<(String, String, String, DeltaTable)> = names
        .into_iter()
        .map(|name| {
            let gen_path = pairs_dir.join(format!("{name}.gen.txt"));
            let ref_path = pairs_dir.join(format!("{name}.ref.txt"));
            let table_path = table_dir.join(format!("{name}.table.csv"));
            if !ref_path.is_file() || !table_path.is_file() {
                return Err(EvalError::MissingCounterpart(name));
            }
            let generated = std::fs::read_to_string(gen_path)?;
            let reference = std::fs::read_to_string(ref_path)?;
            let table = match load_observations(&table_path, SchemaMode::Preaggregated) {
                Ok(LoadedData::Preaggregated(t)) => t,
                Ok(LoadedData::Raw(_)) => unreachable!("preaggregated mode"),
                Err(source) => return Err(EvalError::Table { name, source }),
            };
            Ok((name, generated, reference, table))
        })
        .collect::<Result<_, _>>()?;

    // Pair evaluations are independent; order is restored by collection.
    let rows: Vec<BatchRow> = inputs
        .par_iter()
        .map(|(name, generated, reference, table)| BatchRow {
            name: name.clone(),
            metrics: evaluate_pair(generated, reference, table, oracle_cfg, rules),
        })
        .collect();

    let aggregate = aggregate_rows(&rows);
    Ok(BatchResult { rows, aggregate })
}

fn aggregate_rows(rows: &[BatchRow]) -> BatchAggregate {
    let n = rows.len();
    let mean = |f: fn(&PairMetrics) -> f64| -> f64 {
        if n == 0 {
            0.0
        } else {
            rows.iter().map(|r| f(&r.metrics)).sum::<f64>() / n as f64
        }
    };
    let mut violation_counts: BTreeMap<RuleId, usize> = BTreeMap::new();
    for row in rows {
        for (rule, count) in &row.metrics.violation_counts {
            *violation_counts.entry(*rule).or_insert(0) += count;
        }
    }
    let pass_rate = if n == 0 {
        0.0
    } else {
        rows.iter()
            .filter(|r| r.metrics.verdict == Verdict::Pass)
            .count() as f64
            / n as f64
    };
    BatchAggregate {
        pairs: n,
        entity_overlap: mean(|m| m.entity_overlap),
        direction_agreement: mean(|m| m.direction_agreement),
        coverage_top_k_gen: mean(|m| m.coverage_top_k_gen),
        coverage_top_k_ref: mean(|m| m.coverage_top_k_ref),
        violation_counts,
        pass_rate,
    }
}

fn fmt_score(v: f64) -> String {
    format!("{v:.4}")
}

/// The batch result as CSV: one header, one row per pair, one final
/// AGGREGATE row.
pub fn metrics_csv(result: &BatchResult) -> String {
    let mut wtr = csv::Writer::from_writer(Vec::new());
    let mut header = vec![
        "name".to_string(),
        "entity_overlap".to_string(),
        "direction_agreement".to_string(),
        "coverage_top_k_gen".to_string(),
        "coverage_top_k_ref".to_string(),
    ];
    header.extend(RuleId::ALL.iter().map(|r| r.as_str().to_string()));
    header.push("verdict".to_string());
    wtr.write_record(&header).expect("csv write");

    let violation_cells = |counts: &BTreeMap<RuleId, usize>| -> Vec<String> {
        RuleId::ALL
            .iter()
            .map(|r| counts.get(r).copied().unwrap_or(0).to_string())
            .collect()
    };

    for row in &result.rows {
        let m = &row.metrics;
        let mut record = vec![
            row.name.clone(),
            fmt_score(m.entity_overlap),
            fmt_score(m.direction_agreement),
            fmt_score(m.coverage_top_k_gen),
            fmt_score(m.coverage_top_k_ref),
        ];
        record.extend(violation_cells(&m.violation_counts));
        record.push(
            match m.verdict {
                Verdict::Pass => "pass",
                Verdict::Fail => "fail",
            }
            .to_string(),
        );
        wtr.write_record(&record).expect("csv write");
    }

    let a = &result.aggregate;
    let mut record = vec![
        "AGGREGATE".to_string(),
        fmt_score(a.entity_overlap),
        fmt_score(a.direction_agreement),
        fmt_score(a.coverage_top_k_gen),
        fmt_score(a.coverage_top_k_ref),
    ];
    record.extend(violation_cells(&a.violation_counts));
    record.push(fmt_score(a.pass_rate));
    wtr.write_record(&record).expect("csv write");

    String::from_utf8(wtr.into_inner().expect("csv flush")).expect("utf8")
}

/// A short human-readable report alongside the CSV.
pub fn markdown_report(result: &BatchResult) -> String {
    let a = &result.aggregate;
    let mut out = String::new();
    let _ = writeln!(out, "# Batch evaluation");
    let _ = writeln!(out);
    let _ = writeln!(out, "Pairs evaluated: {}", a.pairs);
    let _ = writeln!(out, "Pass rate: {}", fmt_score(a.pass_rate));
    let _ = writeln!(out);
    let _ = writeln!(out, "| pair | overlap | dir. agreement | cov(gen) | cov(ref) | verdict |");
    let _ = writeln!(out, "|---|---|---|---|---|---|");
    for row in &result.rows {
        let m = &row.metrics;
        let _ = writeln!(
            out,
            "| {} | {} | {} | {} | {} | {} |",
            row.name,
            fmt_score(m.entity_overlap),
            fmt_score(m.direction_agreement),
            fmt_score(m.coverage_top_k_gen),
            fmt_score(m.coverage_top_k_ref),
            match m.verdict {
                Verdict::Pass => "pass",
                Verdict::Fail => "fail",
            }
        );
    }
    let _ = writeln!(
        out,
        "| AGGREGATE | {} | {} | {} | {} | {} |",
        fmt_score(a.entity_overlap),
        fmt_score(a.direction_agreement),
        fmt_score(a.coverage_top_k_gen),
        fmt_score(a.coverage_top_k_ref),
        fmt_score(a.pass_rate)
    );
    out
}

/// Result of the chain fault experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentResult {
    pub stages: usize,
    pub fault_rate: f64,
    pub trials: usize,
    pub corrupted_fraction: f64,
    pub ci95_halfwidth: f64,
}

/// Fixed input table for the chain experiment: four product lines across
/// three regions with a clear driver and detractor.
pub fn reference_table() -> DeltaTable {
    compute_contributions(DeltaTable::from_deltas(
        [
            ("Alpha Pumps", "AMER", 4_800_000.0),
            ("Alpha Pumps", "EMEA", 1_500_000.0),
            ("Alpha Pumps", "APAC", 700_000.0),
            ("Beta Filters", "AMER", -2_100_000.0),
            ("Beta Filters", "EMEA", -900_000.0),
            ("Beta Filters", "APAC", -400_000.0),
            ("Gamma Valves", "AMER", 950_000.0),
            ("Gamma Valves", "EMEA", -350_000.0),
            ("Gamma Valves", "APAC", 220_000.0),
            ("Delta Sensors", "AMER", 180_000.0),
            ("Delta Sensors", "EMEA", 260_000.0),
            ("Delta Sensors", "APAC", -120_000.0),
        ]
        .map(|(pl, rg, d)| (pl.to_string(), rg.to_string(), d)),
        "period_a",
        "period_b",
    ))
}

fn trial_rng(seed: u64, trial: usize) -> ChaCha8Rng {
    let mut hasher = Sha256::new();
    hasher.update(seed.to_le_bytes());
    hasher.update((trial as u64).to_le_bytes());
    let bytes: [u8; 32] = hasher.finalize().into();
    ChaCha8Rng::from_seed(bytes)
}

/// Monte-Carlo error propagation through a mock chain.
///
/// Each trial runs a chain of `stages` echo stages over the reference
/// table's baseline summary. A stage corrupts independently with
/// `fault_rate` by injecting an ungrounded-entity claim, a fault that never
/// cancels out downstream. A trial counts as corrupted when the validator
/// detects anything wrong with the final text. Trials share random numbers
/// across parameter settings: the per-stage uniforms depend only on (seed,
/// trial, stage), so the corrupted fraction is non-decreasing in both
/// `stages` and `fault_rate`.
pub fn chain_fault_experiment(
    stages: usize,
    fault_rate: f64,
    trials: usize,
    seed: u64,
) -> ExperimentResult {
    assert!(stages >= 1, "stages must be at least 1");
    assert!((0.0..=1.0).contains(&fault_rate), "fault_rate must be in [0,1]");
    assert!(trials >= 1, "trials must be at least 1");

    let table = reference_table();
    let analysis = analyze(&table, &OracleConfig::default());
    let clean = baseline_summary(&analysis, 4);
    let lexicon = build_lexicon(&table, None).expect("lexicon from table cannot fail");
    let rules = RuleConfig::default();

    let corrupted: usize = (0..trials)
        .into_par_iter()
        .map(|trial| {
            let mut rng = trial_rng(seed, trial);
            let mut content = clean.clone();
            for _stage in 0..stages {
                let u: f64 = rng.random();
                if u < fault_rate {
                    content = apply_fault_class(FaultClass::InjectUngroundedEntity, &content);
                }
            }
            let report = validate_with_lexicon(&content, &lexicon, &analysis, &rules);
            usize::from(detected_corruption(&report))
        })
        .sum();

    let p = corrupted as f64 / trials as f64;
    ExperimentResult {
        stages,
        fault_rate,
        trials,
        corrupted_fraction: p,
        ci95_halfwidth: 1.96 * (p * (1.0 - p) / trials as f64).sqrt(),
    }
}

fn detected_corruption(report: &ValidationReport) -> bool {
    !report.violations.is_empty() || report.unparsed > 0
}
