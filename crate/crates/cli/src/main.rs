use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use anyhow::{anyhow, Context};
use clap::{Parser, Subcommand, ValueEnum};
use specprobe_core::expand::Requirement;
use specprobe_core::gateway::GatewayMode;
use specprobe_core::harness::{classify, execute, ChainOutcome, ExecuteOptions, ManualLabel};
use specprobe_core::ingest::{load_spec, serialize, serialize_document, simplify};
use specprobe_core::mock_server::{MockServer, Scenario};
use specprobe_core::orchestrator::{
    annotate_record, compute_metrics, eval_flow, generate_flow, improve_flow, load_record, render_table, rows_from_dir,
    AttemptRecord, Config, FlowMode, OrchestratorError, Pipeline, PreparedSpec, Suite, SuiteEntry,
};
use specprobe_core::parser::{static_check, CheckError};

#[derive(Parser)]
#[command(name = "specprobe", version, about = "Generate, run and classify API integration tests from requirements")]
struct Cli {
    /// TOML configuration file; built-in defaults otherwise.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Live,
    Record,
    Replay,
}

#[derive(clap::Args)]
struct LlmArgs {
    /// Override the configured completion mode.
    #[arg(long, value_enum)]
    mode: Option<ModeArg>,
    /// Transcript file for record and replay modes.
    #[arg(long)]
    transcript: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a test script for one requirement, retrying unusable output.
    Generate {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long, conflicts_with = "requirement_file", required_unless_present = "requirement_file")]
        requirement: Option<String>,
        #[arg(long)]
        requirement_file: Option<PathBuf>,
        #[arg(long, default_value = "REQ-1")]
        id: String,
        /// API label used in reports; the spec file name otherwise.
        #[arg(long)]
        api: Option<String>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        /// Keep each attempt's working directory next to its record.
        #[arg(long)]
        keep_artifacts: bool,
        #[command(flatten)]
        llm: LlmArgs,
    },
    /// Revise a previous attempt using its execution results.
    Improve {
        /// Attempt record to improve on, e.g. out/REQ-1/attempt-01.json.
        #[arg(long)]
        record: PathBuf,
        #[arg(long)]
        spec: PathBuf,
        #[arg(long, conflicts_with = "feedback_file")]
        feedback: Option<String>,
        #[arg(long)]
        feedback_file: Option<PathBuf>,
        #[arg(long)]
        keep_artifacts: bool,
        #[command(flatten)]
        llm: LlmArgs,
    },
    /// Run an existing script through the configured runner and classify it.
    Execute {
        #[arg(long)]
        script: PathBuf,
        #[arg(long)]
        keep_artifacts: Option<PathBuf>,
    },
    /// Run every requirement of a suite manifest and print the metrics table.
    Eval {
        #[arg(long)]
        suite: PathBuf,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        #[arg(long)]
        json: bool,
        #[command(flatten)]
        llm: LlmArgs,
    },
    /// Record a manual verdict for a failed-test attempt.
    Annotate {
        #[arg(long)]
        record: PathBuf,
        /// api_defect, insufficient_documentation, environment_issue or invalid_semantics.
        #[arg(long)]
        label: String,
        #[arg(long, default_value = "")]
        note: String,
    },
    /// Recompute the metrics table from an output directory.
    Report {
        #[arg(long, default_value = "out")]
        out: PathBuf,
        #[arg(long)]
        json: bool,
    },
    /// Print the simplified, canonical form of a specification.
    Simplify {
        #[arg(long)]
        spec: PathBuf,
        /// Print the canonical original without applying any rule.
        #[arg(long)]
        raw: bool,
    },
    /// Syntax-check a script with the configured checker.
    Check {
        #[arg(long)]
        script: PathBuf,
    },
    /// Serve a mock API scenario until interrupted.
    ServeMock {
        /// `petstore-faithful`, `petstore-defect` or a scenario file.
        #[arg(long, default_value = "petstore-faithful")]
        scenario: String,
        #[arg(long, default_value = "127.0.0.1:8080")]
        addr: String,
        #[arg(long, default_value_t = 4)]
        workers: usize,
    },
}

/// Exit status: 0 success, 1 pipeline failure, 2 configuration error.
struct Failure {
    code: u8,
    error: anyhow::Error,
}

impl Failure {
    fn config(error: impl Into<anyhow::Error>) -> Self {
        Self { code: 2, error: error.into() }
    }
}

impl From<OrchestratorError> for Failure {
    fn from(e: OrchestratorError) -> Self {
        Self { code: if e.is_config() { 2 } else { 1 }, error: e.into() }
    }
}

type Outcome = Result<bool, Failure>;

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "warn".into()))
        .with_writer(std::io::stderr)
        .init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(f) => {
            eprintln!("error: {:#}", f.error);
            ExitCode::from(f.code)
        }
    }
}

fn load_config(path: Option<&Path>, llm: Option<&LlmArgs>) -> Result<Config, Failure> {
    let mut config = match path {
        Some(p) => Config::load(p)?,
        None => Config::default(),
    };
    if let Some(llm) = llm {
        if let Some(m) = llm.mode {
            config.llm.mode = match m {
                ModeArg::Live => GatewayMode::Live,
                ModeArg::Record => GatewayMode::Record,
                ModeArg::Replay => GatewayMode::Replay,
            };
        }
        if let Some(t) = &llm.transcript {
            config.llm.transcript = Some(t.clone());
        }
    }
    config.validate()?;
    Ok(config)
}

fn pipeline(config: Config, keep_artifacts: bool) -> Result<Pipeline, Failure> {
    let mut p = Pipeline::from_config(config)?;
    p.keep_artifacts = keep_artifacts;
    Ok(p)
}

fn read(path: &Path) -> Result<String, Failure> {
    std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display())).map_err(Failure::config)
}

fn print_record(r: &AttemptRecord) {
    let mut line = format!("{}-{:02}: {}", kind_prefix(r), r.attempt_index, r.outcome.auto);
    if let Some(m) = r.outcome.manual {
        line.push_str(&format!(" ({m:?})"));
    }
    line.push_str(&format!(" - {}", r.outcome.rationale));
    println!("{line}");
}

fn kind_prefix(r: &AttemptRecord) -> &'static str {
    match r.kind {
        specprobe_core::orchestrator::AttemptKind::Generate => "attempt",
        specprobe_core::orchestrator::AttemptKind::Improve => "improve",
    }
}

fn run(cli: Cli) -> Outcome {
    let config_path = cli.config.as_deref();
    match cli.command {
        Command::Generate { spec, requirement, requirement_file, id, api, out, keep_artifacts, llm } => {
            let text = match (requirement, requirement_file) {
                (Some(t), _) => t,
                (None, Some(f)) => read(&f)?.trim().to_string(),
                (None, None) => return Err(Failure::config(anyhow!("a requirement is needed"))),
            };
            if text.trim().is_empty() {
                return Err(Failure::config(anyhow!("the requirement is empty")));
            }
            let p = pipeline(load_config(config_path, Some(&llm))?, keep_artifacts)?;
            let api = api.unwrap_or_else(|| spec.file_stem().and_then(|s| s.to_str()).unwrap_or("api").to_string());
            let entry = SuiteEntry::new(Requirement::new(id, text), api, spec.clone());
            let prepared = PreparedSpec::prepare(&spec, &p)?;
            let result = generate_flow(&p, &entry, &prepared, &out, FlowMode::StopOnSuccess)?;
            for r in &result.records {
                print_record(r);
            }
            match result.final_script() {
                Some(s) if result.succeeded() => println!("script: {}", s.display()),
                _ => println!("no executable script after {} attempt(s)", result.records.len()),
            }
            Ok(result.succeeded())
        }
        Command::Improve { record, spec, feedback, feedback_file, keep_artifacts, llm } => {
            let feedback = match (feedback, feedback_file) {
                (Some(f), _) => Some(f),
                (None, Some(p)) => Some(read(&p)?),
                (None, None) => None,
            };
            let p = pipeline(load_config(config_path, Some(&llm))?, keep_artifacts)?;
            let prepared = PreparedSpec::prepare(&spec, &p)?;
            let r = improve_flow(&p, &record, &prepared, feedback.as_deref())?;
            print_record(&r);
            if let Some(a) = &r.artifact {
                println!("script: {}", record.with_file_name(&a.script_file).display());
            }
            use specprobe_core::harness::AutoClass::*;
            Ok(matches!(r.outcome.auto, Passed | TestFailed))
        }
        Command::Execute { script, keep_artifacts } => {
            let config = load_config(config_path, None)?;
            let timeout = Duration::from_secs_f64(config.runner.timeout_s);
            let p = pipeline(config, false)?;
            let text = read(&script)?;
            let chain = match static_check(&text, p.checker.as_deref()) {
                Ok(c) if !c.ok => ChainOutcome::SyntaxRejected { diagnostics: c.syntax_errors },
                Ok(_) => {
                    let opts = ExecuteOptions { timeout, keep_artifacts };
                    match execute(&text, &p.env, p.runner.as_ref(), &opts) {
                        Ok(report) => {
                            print!("{}", report.render_for_prompt());
                            ChainOutcome::Executed { report }
                        }
                        Err(e) => ChainOutcome::RunnerUnavailable { message: e.to_string() },
                    }
                }
                Err(CheckError::EmptyScript) => ChainOutcome::EmptyScript { reason: "script file is blank".into() },
                Err(e) => return Err(Failure { code: 1, error: e.into() }),
            };
            let outcome = classify(&chain);
            println!("outcome: {} - {}", outcome.auto, outcome.rationale);
            use specprobe_core::harness::AutoClass::*;
            Ok(matches!(outcome.auto, Passed | TestFailed))
        }
        Command::Eval { suite, out, json, llm } => {
            let p = pipeline(load_config(config_path, Some(&llm))?, false)?;
            let suite = Suite::load(&suite)?;
            let res = eval_flow(&p, &suite, &out)?;
            if json {
                println!("{}", serialize_document(&serde_json::to_value(&res.report).expect("report serializes")));
            } else {
                print!("{}", render_table(&res.report));
            }
            Ok(res.report.errors.is_empty())
        }
        Command::Annotate { record, label, note } => {
            let label: ManualLabel = label.parse().map_err(|e: String| Failure::config(anyhow!(e)))?;
            let outcome = annotate_record(&record, label, &note)?;
            let r = load_record(&record)?;
            print_record(&r);
            let row = outcome.table_row().map(|r| r.letter().to_string()).unwrap_or_default();
            println!("row: {row}");
            Ok(true)
        }
        Command::Report { out, json } => {
            let rows = rows_from_dir(&out)?;
            let report = compute_metrics(&rows)?;
            if json {
                println!("{}", serialize_document(&serde_json::to_value(&report).expect("report serializes")));
            } else {
                print!("{}", render_table(&report));
            }
            Ok(true)
        }
        Command::Simplify { spec, raw } => {
            let config = load_config(config_path, None)?;
            let loaded = load_spec(&spec).map_err(|e| Failure::from(OrchestratorError::from(e)))?;
            if raw {
                print!("{}", serialize_document(&loaded.document));
            } else {
                let s = simplify(&loaded, &config.simplification);
                print!("{}", serialize(&s));
                for (category, n) in s.report.by_category() {
                    if n > 0 {
                        eprintln!("removed {n} {category}");
                    }
                }
            }
            Ok(true)
        }
        Command::Check { script } => {
            let p = pipeline(load_config(config_path, None)?, false)?;
            let text = read(&script)?;
            match static_check(&text, p.checker.as_deref()) {
                Ok(r) => {
                    for d in &r.syntax_errors {
                        println!("{}:{}:{}: {}", script.display(), d.line, d.column, d.message);
                    }
                    if r.ok {
                        println!("ok{}", if r.structural_only { " (structural check)" } else { "" });
                    }
                    Ok(r.ok)
                }
                Err(CheckError::EmptyScript) => {
                    println!("{}: empty script", script.display());
                    Ok(false)
                }
                Err(e) => Err(Failure::config(e)),
            }
        }
        Command::ServeMock { scenario, addr, workers } => {
            let s = match scenario.as_str() {
                "petstore-faithful" => Scenario::petstore_faithful(),
                "petstore-defect" => Scenario::petstore_defect(),
                path => Scenario::load(Path::new(path)).map_err(Failure::config)?,
            };
            let name = s.name.clone();
            let server = MockServer::start(s, &addr, workers).map_err(Failure::config)?;
            println!("serving {name} at {}", server.base_url());
            server.join();
            Ok(true)
        }
    }
}
