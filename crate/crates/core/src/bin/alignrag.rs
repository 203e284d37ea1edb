use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};

use alignrag::cda::CdaMode;
use alignrag::commands::{self, CommandError, Overrides};
use alignrag::critique_synthesis::SynthesisMode;

#[derive(Parser)]
#[command(name = "alignrag", version, about = "Critique-driven alignment pipeline for retrieval-augmented QA")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Run configuration (TOML).
    #[arg(short, long)]
    config: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads.
    #[arg(long)]
    jobs: Option<usize>,
    /// Output directory, overriding `data.out_dir`.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Label instances and sample the granularity hierarchy.
    BuildCorpus(Common),
    /// Synthesize critiques and write training files.
    SynthCritiques {
        #[command(flatten)]
        common: Common,
        /// contrastive | vanilla
        #[arg(long)]
        mode: Option<SynthesisMode>,
        /// Prefix targets with [Good]/[Bad].
        #[arg(long)]
        auto_labels: bool,
    },
    /// Re-export training files from stored synthesis records.
    ExportTrain {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        auto_labels: bool,
    },
    /// Run critique-driven refinement and write trajectories plus a report.
    RunCda {
        #[command(flatten)]
        common: Common,
        /// fixed:T | auto:T
        #[arg(long, value_parser = parse_mode)]
        mode: Option<CdaMode>,
    },
    /// Score stored trajectories.
    Evaluate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        trajectories: Option<PathBuf>,
    },
    /// Draw iteration curves as SVG.
    Plot {
        /// iteration_curve.csv from a report.
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
    },
}

fn parse_mode(s: &str) -> Result<CdaMode, String> {
    s.parse().map_err(|e: alignrag::cda::CdaError| e.to_string())
}

fn overrides(c: &Common) -> Overrides {
    Overrides { seed: c.seed, jobs: c.jobs, out_dir: c.out.clone() }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::BuildCorpus(c) => {
            let cfg = commands::load_config(&c.config, &overrides(&c))?;
            let manifest = commands::build_corpus(&cfg)?;
            println!("{}", serde_json::to_string_pretty(&manifest.counts)?);
        }
        Command::SynthCritiques { common, mode, auto_labels } => {
            let cfg = commands::load_config(&common.config, &overrides(&common))?;
            let summary = commands::synth_critiques(&cfg, mode, auto_labels)?;
            println!("{}", serde_json::to_string_pretty(&summary)?);
        }
        Command::ExportTrain { common, auto_labels } => {
            let cfg = commands::load_config(&common.config, &overrides(&common))?;
            let summary = commands::export_train(&cfg, auto_labels.then_some(true))?;
            println!("{}", serde_json::to_string_pretty(&summary)?);
        }
        Command::RunCda { common, mode } => {
            let cfg = commands::load_config(&common.config, &overrides(&common))?;
            let summary = commands::run_cda(&cfg, mode)?;
            println!("{}", serde_json::to_string_pretty(&summary)?);
        }
        Command::Evaluate { common, trajectories } => {
            let cfg = commands::load_config(&common.config, &overrides(&common))?;
            commands::evaluate(&cfg, trajectories.as_deref())?;
        }
        Command::Plot { input, output } => commands::plot(&input, &output)?,
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            let code = e.downcast_ref::<CommandError>().map_or(1, CommandError::exit_code);
            ExitCode::from(code as u8)
        }
    }
}
