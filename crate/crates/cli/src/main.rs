use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

mod commands;
mod config;
mod error;
mod io;

use commands::synth::SynthArgs;
use config::RunConfig;
use error::CliError;

/// Learning-free image classification over precomputed embeddings.
#[derive(Debug, Parser)]
#[command(name = "embclass", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, clap::Args)]
struct RunArgs {
    /// TOML run config. Relative paths inside it resolve against its directory.
    #[arg(short, long)]
    config: Option<PathBuf>,
    /// Override a config key, e.g. `--set eval.k=7`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads; 0 uses every hardware thread. EMBCLASS_THREADS wins.
    #[arg(long)]
    threads: Option<usize>,
    #[arg(short, long)]
    output: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Check every referenced store, bank and prediction file.
    Validate(RunArgs),
    /// Classify the eval split with one classifier and score it.
    Eval(RunArgs),
    /// Train the precision-based fusion and score all three classifiers.
    Fuse(RunArgs),
    /// Class- and image-level oracles over variant families.
    Oracle(RunArgs),
    /// Few-shot k-NN with confidence intervals.
    Fewshot(RunArgs),
    /// k-NN accuracy over a k grid, per-class best k and class shifts.
    Sweep(RunArgs),
    /// Gather the reports in the output directory into one text file.
    Report(RunArgs),
    /// Write a synthetic dataset and a run config for it.
    Synth(SynthArgs),
}

impl RunArgs {
    fn load(&self) -> Result<RunConfig, CliError> {
        let mut overrides = Vec::new();
        if let Some(s) = self.seed {
            overrides.push(format!("seed={s}"));
        }
        if let Some(t) = self.threads {
            overrides.push(format!("threads={t}"));
        }
        if let Some(o) = &self.output {
            overrides.push(format!("output={}", toml_string(&o.to_string_lossy())));
        }
        overrides.extend(self.set.iter().cloned());
        RunConfig::load(self.config.as_deref(), &overrides)
    }
}

fn toml_string(s: &str) -> String {
    toml::Value::String(s.to_string()).to_string()
}

fn init_threads(cfg: &RunConfig) -> Result<(), CliError> {
    let n = cfg.thread_count()?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::Config(format!("thread pool: {e}")))
}

fn run(cli: Cli) -> Result<i32, CliError> {
    let (args, cmd): (&RunArgs, fn(&RunConfig) -> Result<i32, CliError>) = match &cli.command {
        Command::Synth(a) => return commands::synth::run(a),
        Command::Validate(a) => (a, commands::validate::run),
        Command::Eval(a) => (a, commands::eval::run),
        Command::Fuse(a) => (a, commands::fuse::run),
        Command::Oracle(a) => (a, commands::oracle::run),
        Command::Fewshot(a) => (a, commands::fewshot::run),
        Command::Sweep(a) => (a, commands::sweep::run),
        Command::Report(a) => (a, commands::report::run),
    };
    let cfg = args.load()?;
    init_threads(&cfg)?;
    cmd(&cfg)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
