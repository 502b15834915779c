//! Sequential prompt-chained workflow execution.
//!
//! Three workflow shapes are built in: WF-A, the four-agent chain (analyst,
//! business analyst, report writer, validator agent); WF-B, the single-shot
//! prompt; WF-C, the refined two-step chain whose writer receives both the
//! raw table and the analyst's output. Every stage is recorded; the final
//! summary is the last non-validator stage's response. Passive validation
//! attaches a report without touching the summary.

use std::collections::BTreeMap;
use std::fmt;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::claims::segment_sentences;
use crate::ledger::{render_prompt_table, DeltaTable, TableStyle};
use crate::llm_gateway::{self, BackendConfig, BackendKind, ChatMessage, GatewayError};
use crate::prompt_engine::{load_template, render_parts, Binding, TemplateError};
use crate::trend_oracle::{analyze, OracleConfig};
use crate::validator::{validate, RuleConfig, ValidationReport, Verdict};

/// The three built-in workflow shapes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum WorkflowId {
    WfA,
    WfB,
    WfC,
}

impl WorkflowId {
    pub fn label(&self) -> &'static str {
        match self {
            WorkflowId::WfA => "WF-A",
            WorkflowId::WfB => "WF-B",
            WorkflowId::WfC => "WF-C",
        }
    }

    fn expected_stages(&self) -> usize {
        match self {
            WorkflowId::WfA => 4,
            WorkflowId::WfB => 1,
            WorkflowId::WfC => 2,
        }
    }
}

impl fmt::Display for WorkflowId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for WorkflowId {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_uppercase().as_str() {
            "WF-A" | "WFA" | "A" => Ok(WorkflowId::WfA),
            "WF-B" | "WFB" | "B" => Ok(WorkflowId::WfB),
            "WF-C" | "WFC" | "C" => Ok(WorkflowId::WfC),
            other => Err(format!("unknown workflow: {other}")),
        }
    }
}

/// Where a placeholder's value comes from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum BindingSource {
    /// The rendered delta table.
    TableText,
    /// The trend analysis as JSON.
    AnalysisJson,
    /// The response of an earlier stage (0-based).
    StageOutput(usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageSpec {
    pub name: String,
    pub template_id: String,
    pub template_version: Option<u32>,
    pub binding_plan: BTreeMap<String, BindingSource>,
    /// Backend name resolved through the run config.
    pub backend: String,
    /// Validator-agent stages never provide the final summary.
    pub is_validator: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ValidationMode {
    Passive,
    Off,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorkflowSpec {
    pub id: WorkflowId,
    pub stages: Vec<StageSpec>,
    pub validation_mode: ValidationMode,
}

fn stage(
    name: &str,
    template_id: &str,
    backend: &str,
    bindings: &[(&str, BindingSource)],
    is_validator: bool,
) -> StageSpec {
    StageSpec {
        name: name.into(),
        template_id: template_id.into(),
        template_version: None,
        binding_plan: bindings
            .iter()
            .map(|(k, v)| (k.to_string(), v.clone()))
            .collect(),
        backend: backend.into(),
        is_validator,
    }
}

impl WorkflowSpec {
    /// The canonical spec for a workflow id, with every stage on `backend`.
    ///
    /// WF-A chains each agent on the previous agent's output only; use
    /// [`WorkflowSpec::wf_a_with_table`] to also hand every agent the table.
    pub fn standard(id: WorkflowId, backend: &str) -> WorkflowSpec {
        let stages = match id {
            WorkflowId::WfA => vec![
                stage(
                    "analyst",
                    "cycle1_step1",
                    backend,
                    &[("table_summary", BindingSource::TableText)],
                    false,
                ),
                stage(
                    "business_analyst",
                    "cycle1_step2",
                    backend,
                    &[("prior_output", BindingSource::StageOutput(0))],
                    false,
                ),
                stage(
                    "report_writer",
                    "cycle1_step3",
                    backend,
                    &[("prior_output", BindingSource::StageOutput(1))],
                    false,
                ),
                stage(
                    "validator",
                    "cycle1_step4",
                    backend,
                    &[("prior_output", BindingSource::StageOutput(2))],
                    true,
                ),
            ],
            WorkflowId::WfB => vec![stage(
                "summarize",
                "cycle2_singleshot",
                backend,
                &[("data_block", BindingSource::TableText)],
                false,
            )],
            WorkflowId::WfC => vec![
                stage(
                    "analyst",
                    "refined_analyst",
                    backend,
                    &[("data_block", BindingSource::TableText)],
                    false,
                ),
                stage(
                    "report_writer",
                    "refined_writer",
                    backend,
                    &[
                        ("analysis", BindingSource::StageOutput(0)),
                        ("data_block", BindingSource::TableText),
                    ],
                    false,
                ),
            ],
        };
        WorkflowSpec {
            id,
            stages,
            validation_mode: ValidationMode::Passive,
        }
    }

    /// WF-A with the original table injected into every stage in addition to
    /// the prior output.
    pub fn wf_a_with_table(backend: &str) -> WorkflowSpec {
        let mut spec = WorkflowSpec::standard(WorkflowId::WfA, backend);
        for (i, s) in spec.stages.iter_mut().enumerate() {
            if i > 0 {
                // Takes effect with templates that declare the placeholder;
                // plans may carry more sources than a template uses.
                s.binding_plan
                    .insert("table_summary".into(), BindingSource::TableText);
            }
        }
        spec
    }

    /// Structural checks: stage count per shape, backward-only references.
    pub fn check(&self) -> Result<(), String> {
        if self.stages.len() != self.id.expected_stages() {
            return Err(format!(
                "{} requires {} stages, got {}",
                self.id,
                self.id.expected_stages(),
                self.stages.len()
            ));
        }
        for (i, s) in self.stages.iter().enumerate() {
            for (placeholder, source) in &s.binding_plan {
                if let BindingSource::StageOutput(j) = source {
                    if *j >= i {
                        return Err(format!(
                            "stage {i} placeholder {placeholder} references stage {j}, which is not earlier"
                        ));
                    }
                }
            }
        }
        Ok(())
    }
}

/// Per-stage execution record; one run-log line per entry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub stage_index: usize,
    pub stage_name: String,
    pub template_id: String,
    pub template_version: u32,
    pub backend: String,
    pub model: String,
    pub request_digest: String,
    pub response_text: String,
    pub latency_ms: u64,
    /// Unix seconds; zero in deterministic traces.
    pub timestamp: u64,
}

/// The full trace of one workflow run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub run_id: String,
    pub workflow: String,
    pub stage_records: Vec<StageRecord>,
    pub final_summary: String,
    pub validation: Option<ValidationReport>,
}

/// Everything a run needs besides the workflow spec and the table.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub template_dir: PathBuf,
    pub backends: BTreeMap<String, BackendConfig>,
    pub oracle: OracleConfig,
    pub rules: RuleConfig,
    pub table_style: TableStyle,
    /// Zero timestamps/latencies and derive the run id from the inputs, so
    /// identical runs produce identical logs. Defaults to on when every
    /// referenced backend is a mock.
    pub deterministic_trace: Option<bool>,
    /// Bounded evaluator-optimizer loop: regenerate up to this many times
    /// when passive validation fails. Off by default.
    pub max_regenerations: u32,
}

impl RunConfig {
    pub fn offline(template_dir: impl Into<PathBuf>) -> RunConfig {
        let mut backends = BTreeMap::new();
        backends.insert("mock".to_string(), BackendConfig::mock());
        RunConfig {
            template_dir: template_dir.into(),
            backends,
            oracle: OracleConfig::default(),
            rules: RuleConfig::default(),
            table_style: TableStyle::Markdown,
            deterministic_trace: None,
            max_regenerations: 0,
        }
    }
}

#[derive(Debug, Error)]
pub enum StageCause {
    #[error(transparent)]
    Template(#[from] TemplateError),
    #[error(transparent)]
    Backend(#[from] GatewayError),
    #[error("binding: {0}")]
    Binding(String),
}

/// Failure at one stage; stages after it never ran. Carries the partial
/// trace (exactly `stage_index` records).
#[derive(Debug, Error)]
#[error("stage {stage_index} ({stage_name}) failed: {cause}")]
pub struct StageFailure {
    pub stage_index: usize,
    pub stage_name: String,
    pub cause: StageCause,
    pub records: Vec<StageRecord>,
}

fn now_unix() -> u64 {
    std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

fn deterministic_run_id(spec: &WorkflowSpec, table_text: &str) -> String {
    let mut hasher = Sha256::new();
    hasher.update(spec.id.label().as_bytes());
    hasher.update(table_text.as_bytes());
    format!("run-{}", &hex::encode(hasher.finalize())[..16])
}

fn wallclock_run_id() -> String {
    let nanos = std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_nanos())
        .unwrap_or(0);
    // Process-unique suffix is enough at desk scale.
    let salt: u32 = rand::random();
    format!("run-{nanos:x}-{salt:08x}")
}

/// Execute a workflow over a delta table.
///
/// Stages run strictly in order; each stage's prompt is rendered from its
/// binding plan (the table text, the analysis JSON, or earlier outputs). A
/// failing stage aborts the run and surfaces the partial trace.
pub fn run_workflow(
    spec: &WorkflowSpec,
    table: &DeltaTable,
    cfg: &RunConfig,
) -> Result<RunRecord, StageFailure> {
    let fail0 = |cause: StageCause| StageFailure {
        stage_index: 0,
        stage_name: spec.stages.first().map(|s| s.name.clone()).unwrap_or_default(),
        cause,
        records: Vec::new(),
    };
    spec.check().map_err(|e| fail0(StageCause::Binding(e)))?;

    let table_text = render_prompt_table(table, cfg.table_style)
        .map_err(|e| fail0(StageCause::Binding(format!("table render: {e}"))))?;
    let analysis = analyze(table, &cfg.oracle);
    let analysis_json = analysis.to_json();

    let deterministic = cfg.deterministic_trace.unwrap_or_else(|| {
        spec.stages.iter().all(|s| {
            cfg.backends
                .get(&s.backend)
                .map(|b| b.kind == BackendKind::Mock)
                .unwrap_or(false)
        })
    });
    let run_id = if deterministic {
        deterministic_run_id(spec, &table_text)
    } else {
        wallclock_run_id()
    };

    let attempts = 1 + cfg.max_regenerations;
    let mut last: Option<RunRecord> = None;
    for _ in 0..attempts {
        let mut records: Vec<StageRecord> = Vec::new();
        let mut outputs: Vec<String> = Vec::new();

        for (i, stage) in spec.stages.iter().enumerate() {
            let fail = |cause: StageCause, records: Vec<StageRecord>| StageFailure {
                stage_index: i,
                stage_name: stage.name.clone(),
                cause,
                records,
            };

            let template = match load_template(&cfg.template_dir, &stage.template_id, stage.template_version)
            {
                Ok(t) => t,
                Err(e) => return Err(fail(e.into(), records)),
            };

            let mut binding = Binding::new();
            for (placeholder, source) in &stage.binding_plan {
                // Plans may carry more sources than a template declares
                // (table-override shapes); only declared placeholders bind.
                if !template.placeholders.contains(placeholder) {
                    continue;
                }
                let value = match source {
                    BindingSource::TableText => table_text.clone(),
                    BindingSource::AnalysisJson => analysis_json.clone(),
                    BindingSource::StageOutput(j) => outputs[*j].clone(),
                };
                binding.insert(placeholder.clone(), value);
            }

            let rendered = match render_parts(&template, &binding) {
                Ok(r) => r,
                Err(e) => return Err(fail(e.into(), records)),
            };
            let mut messages = Vec::new();
            if !rendered.role.is_empty() {
                messages.push(ChatMessage::system(rendered.role.clone()));
            }
            messages.push(ChatMessage::user(rendered.body()));

            let backend_cfg = match cfg.backends.get(&stage.backend) {
                Some(b) => b,
                None => {
                    return Err(fail(
                        StageCause::Binding(format!("unknown backend: {}", stage.backend)),
                        records,
                    ))
                }
            };
            let completion = match llm_gateway::complete(backend_cfg, &messages) {
                Ok(c) => c,
                Err(e) => return Err(fail(e.into(), records)),
            };

            outputs.push(completion.content.clone());
            records.push(StageRecord {
                stage_index: i,
                stage_name: stage.name.clone(),
                template_id: stage.template_id.clone(),
                template_version: template.version,
                backend: stage.backend.clone(),
                model: completion.model,
                request_digest: completion.request_digest,
                response_text: completion.content,
                latency_ms: if deterministic {
                    0
                } else {
                    completion.latency.as_millis() as u64
                },
                timestamp: if deterministic { 0 } else { now_unix() },
            });
        }

        let final_summary = spec
            .stages
            .iter()
            .zip(outputs.iter())
            .filter(|(s, _)| !s.is_validator)
            .map(|(_, o)| o.trim().to_string())
            .next_back()
            .unwrap_or_default();

        let validation = match spec.validation_mode {
            ValidationMode::Passive => Some(validate(&final_summary, table, &analysis, &cfg.rules)),
            ValidationMode::Off => None,
        };
        let passed = validation
            .as_ref()
            .map(|v| v.verdict == Verdict::Pass)
            .unwrap_or(true);

        last = Some(RunRecord {
            run_id: run_id.clone(),
            workflow: spec.id.label().to_string(),
            stage_records: records,
            final_summary,
            validation,
        });
        if passed {
            break;
        }
    }
    Ok(last.expect("at least one attempt"))
}

/// Sentence split plus the `summary_id,sentence_index,sentence` CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct Postprocessed {
    pub sentences: Vec<String>,
    pub csv: String,
}

/// Split a summary into sentences and lay them out as CSV rows, indices
/// starting at 1. An empty summary yields a header-only CSV.
pub fn postprocess(summary: &str, summary_id: &str) -> Postprocessed {
    let sentences = segment_sentences(summary, None);
    let mut wtr = csv::Writer::from_writer(Vec::new());
    wtr.write_record(["summary_id", "sentence_index", "sentence"])
        .expect("csv write");
    for (i, s) in sentences.iter().enumerate() {
        wtr.write_record([summary_id, &(i + 1).to_string(), s])
            .expect("csv write");
    }
    let csv = String::from_utf8(wtr.into_inner().expect("csv flush")).expect("utf8");
    Postprocessed { sentences, csv }
}

#[derive(Serialize)]
struct RunLogLine<'a> {
    run_id: &'a str,
    workflow: &'a str,
    stage_index: usize,
    stage_name: &'a str,
    template_id: &'a str,
    template_version: u32,
    backend: &'a str,
    model: &'a str,
    request_digest: &'a str,
    response_text: &'a str,
    latency_ms: u64,
    timestamp: u64,
}

/// Append one JSON line per stage record to the run log. The buffer is
/// written in a single call and flushed before returning, so concurrent
/// runs interleave at line granularity only.
pub fn append_runlog(record: &RunRecord, path: &Path) -> std::io::Result<()> {
    let mut buffer = Vec::new();
    for sr in &record.stage_records {
        let line = RunLogLine {
            run_id: &record.run_id,
            workflow: &record.workflow,
            stage_index: sr.stage_index,
            stage_name: &sr.stage_name,
            template_id: &sr.template_id,
            template_version: sr.template_version,
            backend: &sr.backend,
            model: &sr.model,
            request_digest: &sr.request_digest,
            response_text: &sr.response_text,
            latency_ms: sr.latency_ms,
            timestamp: sr.timestamp,
        };
        serde_json::to_writer(&mut buffer, &line)?;
        buffer.push(b'\n');
    }
    let mut file = std::fs::OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)?;
    file.write_all(&buffer)?;
    file.flush()
}
