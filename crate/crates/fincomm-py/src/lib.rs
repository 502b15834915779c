//! Python bindings for the financial commentary pipeline.
//!
//! Exposes the delta table, trend analysis, validation report, and the
//! high-level operations (load, analyze, generate via the mock workflow,
//! validate, chain simulation) as an in-process `fincomm` module.
//!
//! Usage from Python:
//!
//!     import fincomm
//!     table = fincomm.load_deltas("fixtures/order_intake_deltas.csv")
//!     analysis = fincomm.analyze(table)
//!     print(analysis.baseline_summary())
//!     report = fincomm.validate_summary("CCSE up in all regions.", table)
//!     print(report.passed, report.faithfulness)

use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;

use fincomm_core::claims;
use fincomm_core::eval_harness;
use fincomm_core::ledger;
use fincomm_core::orchestrator;
use fincomm_core::trend_oracle;
use fincomm_core::validator;

fn io_err(err: impl std::fmt::Display) -> PyErr {
    PyIOError::new_err(err.to_string())
}

fn value_err(err: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(err.to_string())
}

fn parse_style(style: &str) -> PyResult<ledger::TableStyle> {
    match style {
        "markdown" => Ok(ledger::TableStyle::Markdown),
        "aligned-text" => Ok(ledger::TableStyle::AlignedText),
        other => Err(value_err(format!(
            "unknown style {other:?}; expected \"markdown\" or \"aligned-text\""
        ))),
    }
}

/// A per-(product line, region) two-period delta table.
#[pyclass(name = "DeltaTable", from_py_object)]
#[derive(Clone)]
struct PyDeltaTable {
    inner: ledger::DeltaTable,
}

#[pymethods]
impl PyDeltaTable {
    /// Build a table from (product_line, region, total_difference) triples;
    /// contributions are computed immediately.
    #[new]
    fn new(rows: Vec<(String, String, f64)>) -> Self {
        PyDeltaTable {
            inner: ledger::compute_contributions(ledger::DeltaTable::from_deltas(
                rows, "period_a", "period_b",
            )),
        }
    }

    /// Rows as (product_line, region, total_difference, contribution_pct).
    fn rows(&self) -> Vec<(String, String, f64, f64)> {
        self.inner
            .rows
            .iter()
            .map(|r| {
                (
                    r.product_line.clone(),
                    r.region.clone(),
                    r.total_difference,
                    r.contribution_pct,
                )
            })
            .collect()
    }

    #[getter]
    fn net_total(&self) -> f64 {
        self.inner.net_total
    }

    #[getter]
    fn abs_total(&self) -> f64 {
        self.inner.abs_total
    }

    /// Prompt-ready text; style is "markdown" or "aligned-text".
    #[pyo3(signature = (style = "markdown"))]
    fn render(&self, style: &str) -> PyResult<String> {
        ledger::render_prompt_table(&self.inner, parse_style(style)?).map_err(value_err)
    }

    fn __len__(&self) -> usize {
        self.inner.rows.len()
    }

    fn __repr__(&self) -> String {
        format!(
            "DeltaTable(rows={}, net_total={}, abs_total={})",
            self.inner.rows.len(),
            self.inner.net_total,
            self.inner.abs_total
        )
    }
}

/// Deterministic trend analysis of one table.
#[pyclass(name = "TrendAnalysis")]
struct PyTrendAnalysis {
    inner: trend_oracle::TrendAnalysis,
}

#[pymethods]
impl PyTrendAnalysis {
    #[getter]
    fn overall_direction(&self) -> &'static str {
        match self.inner.overall_direction {
            trend_oracle::TrendDirection::Increase => "increase",
            trend_oracle::TrendDirection::Decrease => "decrease",
            trend_oracle::TrendDirection::Flat => "flat",
        }
    }

    #[getter]
    fn net_total(&self) -> f64 {
        self.inner.net_total
    }

    #[getter]
    fn main_driver(&self) -> Option<(String, String)> {
        self.inner.main_driver.clone()
    }

    #[getter]
    fn main_detractor(&self) -> Option<(String, String)> {
        self.inner.main_detractor.clone()
    }

    /// Lines moving one way across all regions, as (product_line, "up"/"down").
    fn consistent_lines(&self) -> Vec<(String, &'static str)> {
        self.inner
            .consistent_lines
            .iter()
            .map(|c| {
                (
                    c.product_line.clone(),
                    match c.direction {
                        trend_oracle::Direction::Up => "up",
                        trend_oracle::Direction::Down => "down",
                    },
                )
            })
            .collect()
    }

    /// The deterministic template summary.
    #[pyo3(signature = (max_sentences = 4))]
    fn baseline_summary(&self, max_sentences: usize) -> String {
        trend_oracle::baseline_summary(&self.inner, max_sentences)
    }

    fn to_json(&self) -> String {
        self.inner.to_json()
    }

    fn __repr__(&self) -> String {
        format!(
            "TrendAnalysis(direction={}, driver={:?}, detractor={:?})",
            self.overall_direction(),
            self.inner.main_driver,
            self.inner.main_detractor
        )
    }
}

/// The validator's verdict on one summary.
#[pyclass(name = "ValidationReport")]
struct PyValidationReport {
    inner: validator::ValidationReport,
}

#[pymethods]
impl PyValidationReport {
    #[getter]
    fn passed(&self) -> bool {
        self.inner.passed()
    }

    #[getter]
    fn faithfulness(&self) -> f64 {
        self.inner.faithfulness
    }

    #[getter]
    fn coverage_top_k(&self) -> f64 {
        self.inner.coverage_top_k
    }

    #[getter]
    fn parsed_claims(&self) -> usize {
        self.inner.parsed_claims
    }

    #[getter]
    fn unparsed(&self) -> usize {
        self.inner.unparsed
    }

    /// Violations as (rule_id, sentence_index, detail); index 0 means the
    /// whole summary.
    fn violations(&self) -> Vec<(String, usize, String)> {
        self.inner
            .violations
            .iter()
            .map(|v| (v.rule_id.as_str().to_string(), v.sentence_index, v.detail.clone()))
            .collect()
    }

    fn to_json(&self) -> String {
        self.inner.to_json()
    }

    fn __repr__(&self) -> String {
        format!(
            "ValidationReport(passed={}, faithfulness={}, violations={})",
            self.passed(),
            self.inner.faithfulness,
            self.inner.violations.len()
        )
    }
}

/// Load a preaggregated delta CSV (product_line,region,total_difference).
#[pyfunction]
fn load_deltas(path: &str) -> PyResult<PyDeltaTable> {
    match ledger::load_observations(std::path::Path::new(path), ledger::SchemaMode::Preaggregated)
    {
        Ok(ledger::LoadedData::Preaggregated(table)) => Ok(PyDeltaTable { inner: table }),
        Ok(ledger::LoadedData::Raw(_)) => unreachable!("preaggregated mode"),
        Err(e) => Err(io_err(e)),
    }
}

/// Aggregate a raw observation CSV into a delta table.
#[pyfunction]
fn load_raw(path: &str, period_a: &str, period_b: &str) -> PyResult<PyDeltaTable> {
    let data = ledger::load_observations(std::path::Path::new(path), ledger::SchemaMode::Raw)
        .map_err(io_err)?;
    let ledger::LoadedData::Raw(obs) = data else {
        unreachable!("raw mode")
    };
    let table = ledger::compute_delta_table(&obs, period_a, period_b).map_err(value_err)?;
    Ok(PyDeltaTable {
        inner: ledger::compute_contributions(table),
    })
}

/// Run the trend oracle over a table.
#[pyfunction]
#[pyo3(signature = (table, major_threshold_pct = 10.0, flat_epsilon = 0.0))]
fn analyze(table: &PyDeltaTable, major_threshold_pct: f64, flat_epsilon: f64) -> PyTrendAnalysis {
    let cfg = trend_oracle::OracleConfig {
        major_threshold_pct,
        flat_epsilon,
    };
    PyTrendAnalysis {
        inner: trend_oracle::analyze(&table.inner, &cfg),
    }
}

/// Validate a summary against its source table with default rules.
#[pyfunction]
#[pyo3(signature = (summary, table, max_sentences = 4))]
fn validate_summary(summary: &str, table: &PyDeltaTable, max_sentences: usize) -> PyValidationReport {
    let analysis = trend_oracle::analyze(&table.inner, &trend_oracle::OracleConfig::default());
    let rules = validator::RuleConfig {
        max_sentences,
        ..validator::RuleConfig::default()
    };
    PyValidationReport {
        inner: validator::validate(summary, &table.inner, &analysis, &rules),
    }
}

/// Parse a summary into claims; returns the parse result as JSON.
#[pyfunction]
fn parse_claims(summary: &str, table: &PyDeltaTable) -> PyResult<String> {
    let lexicon = claims::build_lexicon(&table.inner, None).map_err(value_err)?;
    let parsed = claims::parse_summary(summary, &lexicon);
    serde_json::to_string_pretty(&parsed).map_err(value_err)
}

/// Run a workflow (WF-A, WF-B, or WF-C) over a table on the offline mock
/// backend and return the final summary.
#[pyfunction]
#[pyo3(signature = (table, workflow = "WF-B", template_dir = "templates"))]
fn generate_summary(table: &PyDeltaTable, workflow: &str, template_dir: &str) -> PyResult<String> {
    let id: orchestrator::WorkflowId = workflow.parse().map_err(value_err)?;
    let spec = orchestrator::WorkflowSpec::standard(id, "mock");
    let cfg = orchestrator::RunConfig::offline(template_dir);
    let record = orchestrator::run_workflow(&spec, &table.inner, &cfg).map_err(value_err)?;
    Ok(record.final_summary)
}

/// Monte-Carlo chain fault propagation; returns
/// (corrupted_fraction, ci95_halfwidth).
#[pyfunction]
#[pyo3(signature = (stages, fault_rate, trials, seed = 42))]
fn simulate_chain(stages: usize, fault_rate: f64, trials: usize, seed: u64) -> PyResult<(f64, f64)> {
    if stages < 1 || trials < 1 || !(0.0..=1.0).contains(&fault_rate) {
        return Err(value_err(
            "require stages >= 1, trials >= 1, fault_rate in [0, 1]",
        ));
    }
    let result = eval_harness::chain_fault_experiment(stages, fault_rate, trials, seed);
    Ok((result.corrupted_fraction, result.ci95_halfwidth))
}

/// Compare a generated summary against a reference over the same table;
/// returns metrics as JSON.
#[pyfunction]
fn evaluate_pair(generated: &str, reference: &str, table: &PyDeltaTable) -> PyResult<String> {
    let metrics = eval_harness::evaluate_pair(
        generated,
        reference,
        &table.inner,
        &trend_oracle::OracleConfig::default(),
        &validator::RuleConfig::default(),
    );
    serde_json::to_string_pretty(&metrics).map_err(value_err)
}

#[pymodule]
fn fincomm(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyDeltaTable>()?;
    m.add_class::<PyTrendAnalysis>()?;
    m.add_class::<PyValidationReport>()?;
    m.add_function(wrap_pyfunction!(load_deltas, m)?)?;
    m.add_function(wrap_pyfunction!(load_raw, m)?)?;
    m.add_function(wrap_pyfunction!(analyze, m)?)?;
    m.add_function(wrap_pyfunction!(validate_summary, m)?)?;
    m.add_function(wrap_pyfunction!(parse_claims, m)?)?;
    m.add_function(wrap_pyfunction!(generate_summary, m)?)?;
    m.add_function(wrap_pyfunction!(simulate_chain, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate_pair, m)?)?;
    Ok(())
}
