//! `spurious`: runs the full analysis pipeline on one delimited file and
//! writes a JSON report.
//!
//! Exit codes: 0 success, 2 validation error (bad flags, names, rules or
//! input), 3 the data cannot support the requested analysis.

mod summary;

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::Parser;
use serde_json::{json, Value};
use spurious_core::{
    load_table, run_report, Analysis, CliReport, Error, ErrorBody, ErrorClass, LoadOptions,
    PartitionRequest, ReportOptions, TreeConfig,
};

pub const EXIT_VALIDATION: u8 = 2;
pub const EXIT_DEGENERATE: u8 = 3;

#[derive(Debug, Parser)]
#[command(
    name = "spurious",
    version,
    about = "Detect and diagnose spurious cause-outcome associations"
)]
struct Args {
    /// Delimited input file with a header row.
    #[arg(long)]
    data: PathBuf,
    /// Cause column
    #[arg(long)]
    cause: String,
    /// Outcome column
    #[arg(long)]
    outcome: String,
    /// Comma-separated confounder selection.
    #[arg(long, value_delimiter = ',')]
    confounders: Vec<String>,
    /// JSON file of manual partition rules.
    #[arg(long, conflicts_with = "auto_k")]
    partition: Option<PathBuf>,
    /// Grow a propensity tree with this many leaves.
    #[arg(long, requires = "min_size")]
    auto_k: Option<usize>,
    /// Minimum leaf size for --auto-k.
    #[arg(long, requires = "auto_k")]
    min_size: Option<usize>,
    /// Comma-separated tree features for --auto-k; defaults to all covariates.
    #[arg(long, value_delimiter = ',', requires = "auto_k")]
    features: Vec<String>,
    /// Storyboard cause bins.
    #[arg(long, default_value_t = spurious_core::storyboard::DEFAULT_BINS)]
    bins: usize,
    /// Bootstrap replicates.
    #[arg(long, default_value_t = spurious_core::stats::DEFAULT_REPLICATES)]
    boot: usize,
    /// Seed for the bootstrap and recorded in the report
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Report path
    #[arg(long, default_value = "report.json")]
    out: PathBuf,
    /// Field delimiter of the input file.
    #[arg(long, default_value_t = ',')]
    delimiter: char,
    /// Suppress the summary on standard output.
    #[arg(long)]
    quiet: bool,
}

/// A failure with the exit code it maps to.
struct Failure {
    code: u8,
    body: ErrorBody,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e.class() {
            ErrorClass::Degenerate => EXIT_DEGENERATE,
            _ => EXIT_VALIDATION,
        };
        Failure {
            code,
            body: ErrorBody::from(&e),
        }
    }
}

fn io_failure(path: &Path, e: std::io::Error) -> Failure {
    Failure {
        code: EXIT_VALIDATION,
        body: ErrorBody::new(
            "io_error",
            format!("{}: {e}", path.display()),
            json!({ "path": path.display().to_string() }),
        ),
    }
}

/// Accepts `{"manual": {"rules": [...]}}`, `{"rules": [...]}` or a bare
/// array of rules.
fn parse_partition_file(text: &str) -> Result<PartitionRequest, Failure> {
    let bad = |m: String| Failure {
        code: EXIT_VALIDATION,
        body: ErrorBody::new("rule_error", m, json!({})),
    };
    let v: Value =
        serde_json::from_str(text).map_err(|e| bad(format!("partition file is not JSON: {e}")))?;
    let v = match v {
        Value::Array(_) => json!({ "manual": { "rules": v } }),
        Value::Object(ref m) if m.contains_key("rules") => json!({ "manual": v }),
        other => other,
    };
    match serde_json::from_value::<PartitionRequest>(v) {
        Ok(PartitionRequest::Manual { rules }) => Ok(PartitionRequest::Manual { rules }),
        Ok(PartitionRequest::Auto(_)) => Err(bad("use --auto-k for tree partitions".into())),
        Err(e) => Err(bad(format!("invalid partition rules: {e}"))),
    }
}

fn build_report(args: &Args) -> Result<CliReport, Failure> {
    let bytes = std::fs::read(&args.data).map_err(|e| io_failure(&args.data, e))?;
    if !args.delimiter.is_ascii() {
        return Err(Error::Config(format!("delimiter `{}` is not ASCII", args.delimiter)).into());
    }
    let ds = load_table(
        &bytes,
        LoadOptions {
            delimiter: args.delimiter as u8,
            ..LoadOptions::default()
        },
    )?;
    let mut analysis =
        Analysis::with_defaults(Arc::new(ds), &args.cause, &args.outcome, None, args.seed)?;
    if !args.confounders.is_empty() {
        analysis.set_confounders(args.confounders.clone())?;
    }
    let partition = match (&args.partition, args.auto_k, args.min_size) {
        (Some(path), _, _) => {
            let text = std::fs::read_to_string(path).map_err(|e| io_failure(path, e))?;
            Some(parse_partition_file(&text)?)
        }
        (None, Some(k), Some(m)) => Some(PartitionRequest::Auto(TreeConfig {
            target_leaves: k,
            min_leaf_size: m,
            features: args.features.clone(),
        })),
        _ => None,
    };
    let opts = ReportOptions {
        partition,
        bins: args.bins,
        replicates: args.boot,
    };
    Ok(run_report(analysis, &opts)?)
}

fn run(args: &Args) -> Result<CliReport, Failure> {
    let report = build_report(args)?;
    let mut bytes = serde_json::to_vec(&report).map_err(|e| Failure {
        code: EXIT_VALIDATION,
        body: ErrorBody::new("serialization_error", e.to_string(), json!({})),
    })?;
    bytes.push(b'\n');
    std::fs::write(&args.out, bytes).map_err(|e| io_failure(&args.out, e))?;
    Ok(report)
}

fn main() -> ExitCode {
    let args = Args::parse();
    match run(&args) {
        Ok(report) => {
            if !args.quiet {
                print!("{}", summary::render(&report));
                println!("report written to {}", args.out.display());
            }
            ExitCode::SUCCESS
        }
        Err(f) => {
            eprintln!(
                "{}",
                serde_json::to_string(&f.body).unwrap_or_else(|_| f.body.message.clone())
            );
            ExitCode::from(f.code)
        }
    }
}
