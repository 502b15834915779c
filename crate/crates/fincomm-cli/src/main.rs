//! Command-line entry point wiring the pipeline end to end: ingest raw
//! observations, analyze deltas, generate summaries through a workflow,
//! validate them against the data, batch-evaluate pairs, and simulate chain
//! fault propagation.
//!
//! Exit codes follow sysexits conventions: 0 success, 2 validation fail,
//! 64 usage, 70 internal, 74 I/O.

mod config;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};
use fincomm_core::claims::add_aliases_from;
use fincomm_core::eval_harness::{batch_evaluate, chain_fault_experiment, markdown_report, metrics_csv};
use fincomm_core::ledger::{
    compute_contributions, compute_delta_table, load_observations, write_preaggregated_csv,
    DeltaTable, LoadedData, SchemaMode, TableStyle,
};
use fincomm_core::orchestrator::{
    append_runlog, postprocess, run_workflow, RunConfig, WorkflowId, WorkflowSpec,
};
use fincomm_core::trend_oracle::analyze;
use fincomm_core::validator::validate_with_lexicon;

use config::AppConfig;

const EXIT_VALIDATION_FAIL: u8 = 2;
const EXIT_USAGE: u8 = 64;
const EXIT_INTERNAL: u8 = 70;
const EXIT_IO: u8 = 74;

#[derive(Parser)]
#[command(
    name = "fincomm",
    version,
    about = "Two-period financial commentary: generation workflows and deterministic validation"
)]
struct Cli {
    /// Path to a TOML config file.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Aggregate raw observations into a preaggregated delta CSV.
    Ingest(IngestArgs),
    /// Analyze a delta CSV and emit the trend analysis as JSON.
    Analyze(AnalyzeArgs),
    /// Run a workflow over a delta CSV and write the summary.
    Generate(GenerateArgs),
    /// Validate a summary file against a delta CSV.
    Validate(ValidateArgs),
    /// Evaluate generated/reference summary pairs in a directory.
    Evaluate(EvaluateArgs),
    /// Monte-Carlo fault propagation through a mock chain.
    SimulateChain(SimulateChainArgs),
}

#[derive(Args)]
struct IngestArgs {
    /// Input CSV file.
    #[arg(long, value_name = "PATH")]
    input: PathBuf,
    /// Input schema: raw observations or preaggregated deltas.
    #[arg(long, default_value = "raw", value_parser = ["raw", "preaggregated"])]
    schema: String,
    /// Earlier period label (raw schema).
    #[arg(long, value_name = "LABEL")]
    period_a: Option<String>,
    /// Later period label (raw schema).
    #[arg(long, value_name = "LABEL")]
    period_b: Option<String>,
    /// Output delta CSV path.
    #[arg(long, value_name = "PATH")]
    out: PathBuf,
}

#[derive(Args)]
struct AnalyzeArgs {
    /// Preaggregated delta CSV.
    #[arg(long, value_name = "PATH")]
    deltas: PathBuf,
    /// Output JSON path; stdout when omitted.
    #[arg(long, value_name = "PATH")]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct GenerateArgs {
    /// Preaggregated delta CSV.
    #[arg(long, value_name = "PATH")]
    deltas: PathBuf,
    /// Workflow shape: WF-A, WF-B, or WF-C.
    #[arg(long, value_name = "ID")]
    workflow: String,
    /// Backend name from the config (every stage uses it).
    #[arg(long, default_value = "mock", value_name = "NAME")]
    backend: String,
    /// Summary output path.
    #[arg(long, value_name = "PATH")]
    out: PathBuf,
    /// Sentence CSV path; defaults to <out>.sentences.csv.
    #[arg(long, value_name = "PATH")]
    sentences_csv: Option<PathBuf>,
    /// Run log path; defaults to the configured one.
    #[arg(long, value_name = "PATH")]
    runlog: Option<PathBuf>,
    /// Table rendering style injected into prompts.
    #[arg(long, default_value = "markdown", value_parser = ["markdown", "aligned-text"])]
    table_style: String,
}

#[derive(Args)]
struct ValidateArgs {
    /// Summary text file.
    #[arg(long, value_name = "PATH")]
    summary: PathBuf,
    /// Preaggregated delta CSV.
    #[arg(long, value_name = "PATH")]
    deltas: PathBuf,
    /// Report JSON path; stdout when omitted.
    #[arg(long, value_name = "PATH")]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct EvaluateArgs {
    /// Directory of <name>.gen.txt / <name>.ref.txt pairs.
    #[arg(long, value_name = "DIR")]
    pairs: PathBuf,
    /// Directory of <name>.table.csv files; defaults to the pairs directory.
    #[arg(long, value_name = "DIR")]
    tables: Option<PathBuf>,
    /// Metrics CSV output path; stdout when omitted.
    #[arg(long, value_name = "PATH")]
    out: Option<PathBuf>,
    /// Optional markdown report path.
    #[arg(long, value_name = "PATH")]
    report: Option<PathBuf>,
}

#[derive(Args)]
struct SimulateChainArgs {
    /// Chain depth.
    #[arg(long)]
    stages: usize,
    /// Per-stage corruption probability.
    #[arg(long)]
    fault_rate: f64,
    /// Number of Monte-Carlo trials.
    #[arg(long)]
    trials: usize,
    /// RNG seed.
    #[arg(long, default_value_t = 42)]
    seed: u64,
    /// Result JSON path; stdout when omitted.
    #[arg(long, value_name = "PATH")]
    out: Option<PathBuf>,
}

enum CliError {
    Usage(String),
    Io(String),
    Internal(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Io(_) => EXIT_IO,
            CliError::Internal(_) => EXIT_INTERNAL,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Usage(m) | CliError::Io(m) | CliError::Internal(m) => m,
        }
    }
}

fn io_err(context: &str, err: impl std::fmt::Display) -> CliError {
    CliError::Io(format!("{context}: {err}"))
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            return match err.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    print!("{err}");
                    ExitCode::SUCCESS
                }
                _ => {
                    eprint!("{err}");
                    ExitCode::from(EXIT_USAGE)
                }
            };
        }
    };

    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(err) => {
            eprintln!("fincomm: {}", err.message());
            ExitCode::from(err.exit_code())
        }
    }
}

fn run(cli: Cli) -> Result<u8, CliError> {
    let app = AppConfig::load(cli.config.as_deref()).map_err(CliError::Io)?;
    match cli.command {
        Command::Ingest(args) => cmd_ingest(args),
        Command::Analyze(args) => cmd_analyze(&app, args),
        Command::Generate(args) => cmd_generate(&app, args),
        Command::Validate(args) => cmd_validate(&app, args),
        Command::Evaluate(args) => cmd_evaluate(&app, args),
        Command::SimulateChain(args) => cmd_simulate_chain(args),
    }
}

fn load_deltas(path: &Path) -> Result<DeltaTable, CliError> {
    match load_observations(path, SchemaMode::Preaggregated) {
        Ok(LoadedData::Preaggregated(table)) => Ok(table),
        Ok(LoadedData::Raw(_)) => unreachable!("preaggregated mode"),
        Err(e) => Err(io_err(&format!("loading {}", path.display()), e)),
    }
}

fn write_output(path: Option<&Path>, content: &str) -> Result<(), CliError> {
    match path {
        Some(path) => std::fs::write(path, content)
            .map_err(|e| io_err(&format!("writing {}", path.display()), e)),
        None => {
            println!("{content}");
            Ok(())
        }
    }
}

fn cmd_ingest(args: IngestArgs) -> Result<u8, CliError> {
    let table = match args.schema.as_str() {
        "raw" => {
            let (Some(period_a), Some(period_b)) = (&args.period_a, &args.period_b) else {
                return Err(CliError::Usage(
                    "--period-a and --period-b are required for the raw schema".into(),
                ));
            };
            let data = load_observations(&args.input, SchemaMode::Raw)
                .map_err(|e| io_err(&format!("loading {}", args.input.display()), e))?;
            let LoadedData::Raw(obs) = data else {
                unreachable!("raw mode")
            };
            let table = compute_delta_table(&obs, period_a, period_b)
                .map_err(|e| io_err("aggregating", e))?;
            compute_contributions(table)
        }
        "preaggregated" => load_deltas(&args.input)?,
        _ => unreachable!("value_parser"),
    };
    let mut buf = Vec::new();
    write_preaggregated_csv(&table, &mut buf).map_err(|e| io_err("serializing deltas", e))?;
    std::fs::write(&args.out, buf)
        .map_err(|e| io_err(&format!("writing {}", args.out.display()), e))?;
    eprintln!("fincomm: wrote {} rows to {}", table.rows.len(), args.out.display());
    Ok(0)
}

fn cmd_analyze(app: &AppConfig, args: AnalyzeArgs) -> Result<u8, CliError> {
    let table = load_deltas(&args.deltas)?;
    let analysis = analyze(&table, &app.oracle);
    write_output(args.out.as_deref(), &analysis.to_json())?;
    Ok(0)
}

fn build_lexicon_with_aliases(
    app: &AppConfig,
    table: &DeltaTable,
) -> Result<fincomm_core::claims::Lexicon, CliError> {
    let mut lexicon = fincomm_core::claims::build_lexicon(table, None)
        .map_err(|e| CliError::Internal(e.to_string()))?;
    if let Some(alias_path) = &app.alias_file {
        let file = std::fs::File::open(alias_path)
            .map_err(|e| io_err(&format!("opening {}", alias_path.display()), e))?;
        add_aliases_from(&mut lexicon, file)
            .map_err(|e| io_err(&format!("reading {}", alias_path.display()), e))?;
    }
    Ok(lexicon)
}

fn cmd_generate(app: &AppConfig, args: GenerateArgs) -> Result<u8, CliError> {
    let workflow: WorkflowId = args
        .workflow
        .parse()
        .map_err(|e: String| CliError::Usage(e))?;
    if !app.backends.contains_key(&args.backend) {
        return Err(CliError::Usage(format!(
            "unknown backend {:?}; configured: {}",
            args.backend,
            app.backends.keys().cloned().collect::<Vec<_>>().join(", ")
        )));
    }
    let table = load_deltas(&args.deltas)?;
    let spec = WorkflowSpec::standard(workflow, &args.backend);
    let run_config = RunConfig {
        template_dir: app.template_dir.clone(),
        backends: app.backends.clone(),
        oracle: app.oracle.clone(),
        rules: app.rules.clone(),
        table_style: match args.table_style.as_str() {
            "aligned-text" => TableStyle::AlignedText,
            _ => TableStyle::Markdown,
        },
        deterministic_trace: None,
        max_regenerations: 0,
    };

    let record = run_workflow(&spec, &table, &run_config)
        .map_err(|e| CliError::Internal(e.to_string()))?;

    std::fs::write(&args.out, &record.final_summary)
        .map_err(|e| io_err(&format!("writing {}", args.out.display()), e))?;

    let sentences_path = args
        .sentences_csv
        .clone()
        .unwrap_or_else(|| args.out.with_extension("sentences.csv"));
    let post = postprocess(&record.final_summary, &record.run_id);
    std::fs::write(&sentences_path, &post.csv)
        .map_err(|e| io_err(&format!("writing {}", sentences_path.display()), e))?;

    let runlog_path = args.runlog.as_ref().unwrap_or(&app.runlog_path);
    append_runlog(&record, runlog_path)
        .map_err(|e| io_err(&format!("appending {}", runlog_path.display()), e))?;

    if let Some(report) = &record.validation {
        eprintln!(
            "fincomm: {} [{}] -> {} ({} sentences, faithfulness {:.2}, {})",
            record.run_id,
            record.workflow,
            args.out.display(),
            post.sentences.len(),
            report.faithfulness,
            if report.passed() { "pass" } else { "fail" },
        );
    }
    Ok(0)
}

fn cmd_validate(app: &AppConfig, args: ValidateArgs) -> Result<u8, CliError> {
    let table = load_deltas(&args.deltas)?;
    let summary = std::fs::read_to_string(&args.summary)
        .map_err(|e| io_err(&format!("reading {}", args.summary.display()), e))?;
    let lexicon = build_lexicon_with_aliases(app, &table)?;
    let analysis = analyze(&table, &app.oracle);
    let report = validate_with_lexicon(summary.trim_end(), &lexicon, &analysis, &app.rules);
    write_output(args.out.as_deref(), &report.to_json())?;
    Ok(if report.passed() { 0 } else { EXIT_VALIDATION_FAIL })
}

fn cmd_evaluate(app: &AppConfig, args: EvaluateArgs) -> Result<u8, CliError> {
    let tables_dir = args.tables.as_ref().unwrap_or(&args.pairs);
    let result = batch_evaluate(&args.pairs, tables_dir, &app.oracle, &app.rules).map_err(|e| {
        match e {
            fincomm_core::eval_harness::EvalError::MissingCounterpart(_) => {
                CliError::Usage(e.to_string())
            }
            other => io_err("evaluating pairs", other),
        }
    })?;
    write_output(args.out.as_deref(), &metrics_csv(&result))?;
    if let Some(report_path) = &args.report {
        std::fs::write(report_path, markdown_report(&result))
            .map_err(|e| io_err(&format!("writing {}", report_path.display()), e))?;
    }
    Ok(0)
}

fn cmd_simulate_chain(args: SimulateChainArgs) -> Result<u8, CliError> {
    if args.stages < 1 {
        return Err(CliError::Usage("--stages must be at least 1".into()));
    }
    if !(0.0..=1.0).contains(&args.fault_rate) {
        return Err(CliError::Usage("--fault-rate must be in [0, 1]".into()));
    }
    if args.trials < 1 {
        return Err(CliError::Usage("--trials must be at least 1".into()));
    }
    let result = chain_fault_experiment(args.stages, args.fault_rate, args.trials, args.seed);
    let json = serde_json::to_string_pretty(&result).expect("result serializes");
    write_output(args.out.as_deref(), &json)?;
    Ok(0)
}
