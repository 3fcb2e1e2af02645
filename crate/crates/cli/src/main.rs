use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use toral_rigidity_cli::config::Stages;
use toral_rigidity_cli::report::class_name;
use toral_rigidity_cli::{presets, run, ConfigError, ExperimentConfig};

#[derive(Parser)]
#[command(name = "toral-rigidity", version, about = "Lyapunov-exponent rigidity experiments on tori")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// TOML config; a top-level `preset` key picks the base configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Base preset when no config file is given.
    #[arg(long, default_value = "cat-linear")]
    preset: String,
    /// Output directory (overrides the config).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads; 0 uses every core.
    #[arg(long, default_value_t = 0)]
    workers: usize,
    /// Random seed (overrides the config).
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Spectrum, irreducibility and periodic point counts of L.
    AnalyzeLinear(Common),
    /// Finite-time exponent field and its regularity verdict.
    Field(Common),
    /// Continued periodic orbits and their exponent data.
    Periodic(Common),
    /// Obstruction test and transfer function of the first unstable flag.
    Livsic(Common),
    /// Conjugacy series and residuals.
    Conjugacy(Common),
    /// Hölder exponent of the conjugacy.
    Regularity(Common),
    /// Leaf volume growth and separated sets.
    Entropy(Common),
    /// Every enabled stage and the rigidity verdict.
    Full(Common),
    /// Print the known presets.
    Presets,
}

fn load(c: &Common, only: Option<&str>) -> Result<ExperimentConfig, ConfigError> {
    let mut cfg = match &c.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => presets::preset(&c.preset)?,
    };
    if let Some(stage) = only {
        cfg.stages = Stages::only(stage).expect("known stage");
    }
    if let Some(out) = &c.out {
        cfg.out = out.clone();
    }
    if let Some(seed) = c.seed {
        cfg.seed = seed;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (common, only) = match &cli.command {
        Command::AnalyzeLinear(c) => (c, Some("linear")),
        Command::Field(c) => (c, Some("field")),
        Command::Periodic(c) => (c, Some("periodic")),
        Command::Livsic(c) => (c, Some("livsic")),
        Command::Conjugacy(c) => (c, Some("conjugacy")),
        Command::Regularity(c) => (c, Some("regularity")),
        Command::Entropy(c) => (c, Some("entropy")),
        Command::Full(c) => (c, None),
        Command::Presets => {
            for name in presets::NAMES {
                println!("{name}");
            }
            return ExitCode::SUCCESS;
        }
    };
    let cfg = match load(common, only) {
        Ok(cfg) => cfg,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    if common.workers > 0 {
        // Fails only if a pool already exists, which cannot happen here.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(common.workers).build_global();
    }
    match run(&cfg, &cfg.out) {
        Ok(report) => {
            print!("{}", report.to_text());
            if let Some(v) = &report.verdict {
                eprintln!("{}: {}", cfg.name, class_name(v));
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
