//! `pdhp` command-line driver: generate corpora, fit them, run sweeps,
//! score fits and aggregate sweep results.
//!
//! Every verb accepts `--config FILE` (flat TOML keys) and repeated
//! `--set key=value` overrides using the same keys; overrides win over the
//! file, which wins over built-in defaults.
//!
//! Exit codes: 0 success, 1 usage error, 2 data error, 3 internal error.

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use pdhp::config::FlatConfig;
use pdhp::corpus::{generate, read_spec, write_jsonl, write_spec};
use pdhp::eval::{ingest, score_run, SweepGrid, SweepOptions, SweepResult};
use pdhp::{CorpusSpec, PdhpError, SmcConfig, StreamResult};

#[derive(Parser)]
#[command(name = "pdhp", version, about = "Powered Dirichlet-Hawkes streaming clustering")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Flat TOML config file
    #[arg(short, long, global = true)]
    config: Option<PathBuf>,
    /// Override one config key, e.g. `--set pdhp.r=0.5` (repeatable)
    #[arg(short = 's', long = "set", value_name = "KEY=VALUE", global = true)]
    overrides: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic corpus: writes corpus.jsonl, spec.json, run.json
    Generate {
        #[arg(short, long)]
        out: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Fit a corpus: writes result.json and run.json
    Fit {
        /// Corpus JSONL; a spec.json beside it fixes the vocabulary size
        #[arg(long)]
        corpus: PathBuf,
        #[arg(short, long)]
        out: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Run a sweep grid: writes results.csv and run.json
    Sweep {
        /// Grid JSON (r_values, vocab_overlaps, temporal_overlaps,
        /// decorrelate_fractions, n_datasets, base_seed, corpus)
        #[arg(long)]
        grid: PathBuf,
        #[arg(short, long)]
        out: PathBuf,
        /// Leave runtime_ms empty so the CSV is byte-reproducible
        #[arg(long)]
        no_runtime: bool,
        #[command(flatten)]
        common: Common,
    },
    /// Score a fit against the corpus ground truth; prints JSON
    Score {
        #[arg(long)]
        result: PathBuf,
        #[arg(long)]
        corpus: PathBuf,
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
    /// Aggregate a sweep CSV: writes aggregate.json and long.csv
    Report {
        #[arg(long)]
        csv: PathBuf,
        #[arg(short, long)]
        out: PathBuf,
    },
}

#[derive(Debug)]
enum CliError {
    Usage(String),
    Data(String),
    Internal(String),
}

impl From<PdhpError> for CliError {
    fn from(e: PdhpError) -> Self {
        match e {
            PdhpError::Config(_) => CliError::Usage(e.to_string()),
            PdhpError::Integrity(_) => CliError::Internal(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Data(e.to_string())
    }
}

type CliResult<T> = Result<T, CliError>;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(CliError::Data(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(CliError::Internal(msg)) => {
            eprintln!("internal error: {msg}");
            ExitCode::from(3)
        }
    }
}

fn run(command: Command) -> CliResult<()> {
    let started = Instant::now();
    match command {
        Command::Generate { out, common } => {
            let flat = load_config(&common)?;
            let mut spec = CorpusSpec::default();
            flat.apply_to_corpus(&mut spec)?;
            std::fs::create_dir_all(&out)?;
            let corpus = generate(&spec)?;
            write_jsonl(&out.join("corpus.jsonl"), &corpus.documents)?;
            write_spec(&out.join("spec.json"), &spec)?;
            let extra = json!({
                "n_events": corpus.documents.len(),
                "shifts": corpus.shifts,
                "vocab_size": corpus.vocabularies.global_size,
            });
            write_metadata(&out, spec.seed, started, extra)
        }
        Command::Fit { corpus, out, common } => {
            let flat = load_config(&common)?;
            let mut smc = SmcConfig::default();
            flat.apply_to_smc(&mut smc)?;
            if smc.vocab_size.is_none() {
                let spec_path = corpus.with_file_name("spec.json");
                if spec_path.exists() {
                    smc.vocab_size = Some(read_spec(&spec_path)?.global_vocab_size());
                }
            }
            let docs = ingest(&corpus, smc.vocab_size)?;
            let result = pdhp::run_stream(&docs, &smc)?;
            std::fs::create_dir_all(&out)?;
            write_json(&out.join("result.json"), &result)?;
            let extra = json!({
                "n_events": docs.len(),
                "n_clusters": result.n_clusters,
                "replacements": result.replacements.len(),
                "peak_history_len": result.diagnostics.peak_history_len,
                "config": smc,
            });
            write_metadata(&out, smc.seed, started, extra)
        }
        Command::Sweep { grid, out, no_runtime, common } => {
            let flat = load_config(&common)?;
            let mut grid = SweepGrid::load(&grid)?;
            flat.apply_to_corpus(&mut grid.corpus)?;
            let mut smc = SmcConfig::default();
            flat.apply_to_smc(&mut smc)?;
            let options = SweepOptions { workers: flat.workers()?, record_runtime: !no_runtime };
            let result = pdhp::eval::sweep(&grid, &smc, &options)?;
            std::fs::create_dir_all(&out)?;
            std::fs::write(out.join("results.csv"), result.to_csv()?)?;
            let failed = result.rows.iter().filter(|r| r.error.is_some()).count();
            if failed > 0 {
                eprintln!("warning: {failed} of {} runs failed; see the error column", result.rows.len());
            }
            let extra = json!({ "rows": result.rows.len(), "failed": failed, "grid": grid, "config": smc });
            write_metadata(&out, grid.base_seed, started, extra)
        }
        Command::Score { result, corpus, out } => {
            let result: StreamResult = serde_json::from_str(&std::fs::read_to_string(&result)?)?;
            let docs = ingest(&corpus, None)?;
            let score = score_run(&result, &docs)?;
            let text = serde_json::to_string_pretty(&score)?;
            match out {
                Some(path) => std::fs::write(path, text)?,
                None => println!("{text}"),
            }
            Ok(())
        }
        Command::Report { csv, out } => {
            let result = SweepResult::from_csv(&std::fs::read_to_string(&csv)?)?;
            std::fs::create_dir_all(&out)?;
            write_json(&out.join("aggregate.json"), &result.aggregate())?;
            std::fs::write(out.join("long.csv"), result.long_format_csv()?)?;
            Ok(())
        }
    }
}

fn load_config(common: &Common) -> CliResult<FlatConfig> {
    let mut flat = match &common.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
            FlatConfig::from_toml_str(&text)?
        }
        None => FlatConfig::new(),
    };
    let mut cli = FlatConfig::new();
    for kv in &common.overrides {
        let (key, value) =
            kv.split_once('=').ok_or_else(|| CliError::Usage(format!("expected KEY=VALUE, got `{kv}`")))?;
        cli.set(key.trim(), value.trim())?;
    }
    flat.merge(&cli);
    Ok(flat)
}

fn write_json<T: serde::Serialize + ?Sized>(path: &Path, value: &T) -> CliResult<()> {
    std::fs::write(path, serde_json::to_string_pretty(value)?)?;
    Ok(())
}

fn write_metadata(dir: &Path, seed: u64, started: Instant, extra: serde_json::Value) -> CliResult<()> {
    let mut meta = json!({
        "versions": {
            "pdhp": pdhp::VERSION,
            "pdhp-cli": env!("CARGO_PKG_VERSION"),
        },
        "seed": seed,
        "wall_ms": started.elapsed().as_millis() as u64,
    });
    if let (Some(m), serde_json::Value::Object(e)) = (meta.as_object_mut(), extra) {
        m.extend(e);
    }
    write_json(&dir.join("run.json"), &meta)
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;

    #[test]
    fn cli_definition_is_consistent() {
        Cli::command().debug_assert();
    }
}
