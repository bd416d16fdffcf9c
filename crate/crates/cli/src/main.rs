//! `polex` command-line runner.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use polex::experiment::{
    emit_plots, run_counterexample, run_estimator_study, run_strong_sweep, run_weak_sweep,
    ExperimentConfig, Report, Study,
};
use polex::PolexError;

#[derive(Parser)]
#[command(name = "polex", version, about = "Monte Carlo study of stochastic policy execution")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Weak error against the number of grid points.
    WeakSweep(RunArgs),
    /// Strong error against the number of grid points.
    StrongSweep(RunArgs),
    /// Bias tables of the reinforcement-learning estimators.
    EstimatorStudy {
        #[command(flatten)]
        run: RunArgs,
        /// value, cond-value, td, pg, qv, shared-vs-naive or cond-weak.
        #[arg(long)]
        study: Option<String>,
    },
    /// Strong error of the controlled-volatility counterexample.
    Counterexample(RunArgs),
    /// Write a plotting script for the result tables in a directory.
    Plots {
        #[arg(long)]
        config: Option<PathBuf>,
        /// Directory holding the result tables.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct RunArgs {
    /// TOML experiment file; defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    preset: Option<String>,
    /// Fewer paths and runs.
    #[arg(long)]
    fast: bool,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Record wall-clock times in the tables.
    #[arg(long)]
    timing: bool,
}

fn load(path: Option<&PathBuf>) -> polex::Result<ExperimentConfig> {
    match path {
        Some(p) => ExperimentConfig::load(p),
        None => Ok(ExperimentConfig::default()),
    }
}

impl RunArgs {
    fn config(&self) -> polex::Result<ExperimentConfig> {
        let mut config = load(self.config.as_ref())?;
        if self.fast {
            config = config.fast();
        }
        if let Some(p) = &self.preset {
            config.preset = Some(p.clone());
        }
        if let Some(seed) = self.seed {
            config.master_seed = seed;
        }
        if let Some(out) = &self.out {
            config.output_dir = out.clone();
        }
        config.timing |= self.timing;
        config.validate()?;
        Ok(config)
    }
}

fn finish(report: Report, config: &ExperimentConfig) -> polex::Result<()> {
    for line in report.summary() {
        println!("{line}");
    }
    for path in report.write(&config.output_dir, config)? {
        println!("wrote {}", path.display());
    }
    Ok(())
}

fn run(cli: Cli) -> polex::Result<()> {
    match cli.command {
        Command::WeakSweep(args) => {
            let config = args.config()?;
            finish(run_weak_sweep(&config)?, &config)
        }
        Command::StrongSweep(args) => {
            let config = args.config()?;
            finish(run_strong_sweep(&config)?, &config)
        }
        Command::Counterexample(args) => {
            let config = args.config()?;
            finish(run_counterexample(&config)?, &config)
        }
        Command::EstimatorStudy { run, study } => {
            let config = run.config()?;
            let study = match study {
                Some(s) => s.parse::<Study>()?,
                None => config.study.ok_or_else(|| {
                    PolexError::Config("no study given (use --study or `study` in the config)".into())
                })?,
            };
            finish(run_estimator_study(&config, study)?, &config)
        }
        Command::Plots { config, out } => {
            let dir = match out {
                Some(dir) => dir,
                None => load(config.as_ref())?.output_dir,
            };
            let (script, studies) = emit_plots(&dir)?;
            println!("studies: {}", studies.join(", "));
            println!("wrote {}", script.display());
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_numerical() { 3 } else { 2 })
        }
    }
}
