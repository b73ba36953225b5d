use std::path::PathBuf;
use std::sync::Arc;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use netdml::config::{Experiment, SimConfig};
use netdml::emit::{emit_tables, render_text, Format};
use netdml::presets::Preset;
use netdml::{harness, io, validate_config, RayonExecutor};
use netdml_core::dgp::{gen_er_network, gen_interference_data, true_ate, InterferenceDgpConfig};
use netdml_core::rng::{derive_seed, tag};

const PRESETS: [&str; 4] = ["table1", "table1-desk", "table2", "stability"];

#[derive(Parser)]
#[command(
    name = "netdml",
    version,
    about = "Network DML simulations: bias/std tables, fold sizes, stability"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment (default preset: table1-desk).
    Run(RunArgs),
    /// Monte Carlo estimate of the true ATE.
    TrueAte(TrueAteArgs),
    /// Neighborhood-stability scaling (default preset: stability).
    Stability(RunArgs),
    /// Cross-fitting training-set sizes (default preset: table2).
    FoldSizes(RunArgs),
    /// Parse and check a configuration, reporting every problem.
    Validate(ValidateArgs),
    /// Write one network as an edge list and its data as CSV.
    Generate(GenerateArgs),
}

#[derive(Args)]
struct RunArgs {
    /// TOML configuration file.
    #[arg(long, conflicts_with = "preset")]
    config: Option<PathBuf>,
    #[arg(long, value_parser = PRESETS)]
    preset: Option<String>,
    /// Master seed.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    reps: Option<usize>,
    /// Comma-separated sample sizes.
    #[arg(long = "n", value_delimiter = ',')]
    n_grid: Option<Vec<usize>>,
    /// Worker threads (0 = all cores).
    #[arg(long)]
    workers: Option<usize>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Comma-separated output formats.
    #[arg(long, value_delimiter = ',', default_value = "csv,json,text", value_parser = ["csv", "json", "text"])]
    format: Vec<String>,
}

#[derive(Args)]
struct TrueAteArgs {
    #[arg(long)]
    n: usize,
    #[arg(long, default_value_t = 3.0)]
    delta: f64,
    /// Networks to average over.
    #[arg(long, default_value_t = 10_000)]
    reps: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 0)]
    workers: usize,
}

#[derive(Args)]
struct ValidateArgs {
    #[arg(long)]
    config: PathBuf,
}

#[derive(Args)]
struct GenerateArgs {
    #[arg(long)]
    n: usize,
    #[arg(long, default_value_t = 3.0)]
    delta: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

fn load(args: &RunArgs, default: Preset) -> anyhow::Result<SimConfig> {
    let mut config = match (&args.config, &args.preset) {
        (Some(path), _) => validate_config(path)?,
        (None, Some(name)) => Preset::from_name(name).context("unknown preset")?.config(),
        (None, None) => default.config(),
    };
    if let Some(s) = args.seed {
        config.master_seed = s;
    }
    if let Some(r) = args.reps {
        config.reps = r;
    }
    if let Some(n) = &args.n_grid {
        config.n_grid = n.clone();
    }
    if let Some(w) = args.workers {
        config.parallelism = w;
    }
    if let Some(o) = &args.out {
        config.output_dir = o.clone();
    }
    Ok(config)
}

fn formats(names: &[String]) -> Vec<Format> {
    names
        .iter()
        .map(|n| match n.as_str() {
            "csv" => Format::Csv,
            "json" => Format::Json,
            _ => Format::Text,
        })
        .collect()
}

fn run(args: RunArgs, default: Preset, force: Option<Experiment>) -> anyhow::Result<()> {
    let mut config = load(&args, default)?;
    if let Some(e) = force {
        if config.experiment != e && args.config.is_some() {
            bail!(
                "{} describes a {:?} experiment",
                args.config.unwrap().display(),
                config.experiment
            );
        }
        config.experiment = e;
    }
    let exec = RayonExecutor::new(config.parallelism);
    eprintln!(
        "running {:?}: n = {:?}, {} replications, seed {}, {} workers",
        config.experiment,
        config.n_grid,
        config.reps,
        config.master_seed,
        exec.workers()
    );
    let result = harness::run_experiment(&config, &exec)?;
    print!("{}", render_text(&result));
    for path in emit_tables(&result, &config.output_dir, &formats(&args.format))? {
        eprintln!("wrote {}", path.display());
    }
    Ok(())
}

fn main() -> anyhow::Result<()> {
    match Cli::parse().command {
        Command::Run(a) => run(a, Preset::Table1Desk, None),
        Command::Stability(a) => run(a, Preset::Stability, Some(Experiment::Stability)),
        Command::FoldSizes(a) => run(a, Preset::Table2, Some(Experiment::Table2)),
        Command::TrueAte(a) => {
            let exec = RayonExecutor::new(a.workers);
            let t = true_ate(
                &InterferenceDgpConfig::new(a.n, a.delta, a.seed),
                a.reps,
                &exec,
            )?;
            println!(
                "theta0 = {:.6} (se {:.6}, {} networks)",
                t.theta0, t.std_error, t.reps
            );
            Ok(())
        }
        Command::Validate(a) => {
            let c = validate_config(&a.config)?;
            println!(
                "{}: valid {:?} configuration",
                a.config.display(),
                c.experiment
            );
            Ok(())
        }
        Command::Generate(a) => {
            let cfg = InterferenceDgpConfig::new(a.n, a.delta, derive_seed(a.seed, tag::DATA, 0));
            cfg.validate()?;
            let space = Arc::new(gen_er_network(
                a.n,
                a.delta,
                derive_seed(a.seed, tag::NETWORK, 0),
            )?);
            let data = gen_interference_data(&cfg, Arc::clone(&space))?;
            std::fs::create_dir_all(&a.out).with_context(|| a.out.display().to_string())?;
            io::save_edge_list(
                space.as_graph().context("graph space")?,
                &a.out.join("network.txt"),
            )?;
            io::save_dataset(&data, &a.out.join("data.csv"))?;
            eprintln!(
                "wrote {} and {}",
                a.out.join("network.txt").display(),
                a.out.join("data.csv").display()
            );
            Ok(())
        }
    }
}
