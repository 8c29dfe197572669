//! Command-line experiment harness.

use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use mgbench::algos::AlgoId;
use mgbench::bench::{
    dump_schedule, prepare_context, run_cumulative_eval, run_oracle_only, run_sensitivity,
    run_test_table, run_training_experiment, DataSource, ExperimentSpec,
};
use mgbench::env::config::load_system_config;
use mgbench::env::SystemConfig;

#[derive(Parser)]
#[command(
    name = "mgbench",
    about = "Microgrid scheduling benchmark: DRL agents vs an exact lattice solver",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train agents and emit per-episode curve files (mean and min/max band
    /// across seeds).
    Train(CommonArgs),
    /// Evaluate trained agents and the oracle cumulatively over consecutive
    /// days.
    Evaluate(CommonArgs),
    /// Per-day evaluation table with 95% confidence intervals over seeds.
    Table(CommonArgs),
    /// Penalty-coefficient sweep: full training per (algorithm, sigma2,
    /// seed).
    Sensitivity(CommonArgs),
    /// Side-by-side hourly schedule of one trained policy and the oracle.
    Schedule(CommonArgs),
    /// Solve days with the exact lattice solver only.
    Oracle(CommonArgs),
}

#[derive(Args)]
struct CommonArgs {
    /// System configuration file (key = value lines); defaults baked in.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Data source: a profile CSV path or `synth:SEED` for a synthetic year.
    #[arg(long, default_value = "synth:7")]
    data: String,
    /// Comma-separated algorithms (ddpg, td3, sac, ppo).
    #[arg(long, value_delimiter = ',', default_values_t = AlgoId::ALL.map(|a| a.to_string()))]
    algos: Vec<String>,
    /// Comma-separated training seeds.
    #[arg(long, value_delimiter = ',', default_values_t = vec![1u64, 2, 3, 4, 5])]
    seeds: Vec<u64>,
    /// Comma-separated sigma2 values for the sensitivity sweep.
    #[arg(long, value_delimiter = ',', default_values_t = vec![20.0, 50.0, 100.0])]
    sigma2: Vec<f64>,
    /// Comma-separated evaluation day indices; defaults to the first ten
    /// test days.
    #[arg(long, value_delimiter = ',')]
    days: Option<Vec<usize>>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Worker threads for independent runs (0 = all cores).
    #[arg(long, default_value_t = 0)]
    jobs: usize,
    /// Episode-count override for quick runs (default: 1000).
    #[arg(long)]
    episodes: Option<usize>,
}

fn parse_data_source(text: &str) -> Result<DataSource> {
    if let Some(seed) = text.strip_prefix("synth:") {
        let seed: u64 = seed
            .parse()
            .with_context(|| format!("bad synthetic seed in `{text}`"))?;
        Ok(DataSource::Synthetic { seed, days: 365 })
    } else {
        Ok(DataSource::Csv(PathBuf::from(text)))
    }
}

fn build_spec(args: &CommonArgs) -> Result<(ExperimentSpec, SystemConfig, bool)> {
    let mut algos = Vec::new();
    for name in &args.algos {
        match name.parse::<AlgoId>() {
            Ok(a) => algos.push(a),
            Err(e) => bail!(e),
        }
    }
    let (sys, keep_scales) = match &args.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .with_context(|| format!("cannot read config {}", path.display()))?;
            let explicit_scales = text.contains("pv_scale") || text.contains("load_scale");
            (
                load_system_config(path).context("invalid system configuration")?,
                explicit_scales,
            )
        }
        None => (SystemConfig::default(), false),
    };
    let mut spec = ExperimentSpec::new(parse_data_source(&args.data)?, args.out.clone());
    spec.algos = algos;
    spec.seeds = args.seeds.clone();
    spec.sigma2_values = args.sigma2.clone();
    spec.eval_days = args.days.clone();
    spec.jobs = args.jobs;
    spec.episodes = args.episodes;
    Ok((spec, sys, keep_scales))
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    let (args, label): (&CommonArgs, &str) = match &cli.command {
        Command::Train(a) => (a, "train"),
        Command::Evaluate(a) => (a, "evaluate"),
        Command::Table(a) => (a, "table"),
        Command::Sensitivity(a) => (a, "sensitivity"),
        Command::Schedule(a) => (a, "schedule"),
        Command::Oracle(a) => (a, "oracle"),
    };
    let (spec, sys, keep_scales) = build_spec(args)?;
    let ctx = prepare_context(&spec, &sys, keep_scales).context("experiment setup failed")?;
    eprintln!(
        "{label}: {} days of data, {} train / {} test; output -> {}",
        ctx.profile.num_days(),
        ctx.split.train_days.len(),
        ctx.split.test_days.len(),
        spec.out_dir.display()
    );

    match &cli.command {
        Command::Train(_) => {
            let curves = run_training_experiment(&spec, &ctx)?;
            for c in &curves {
                let last = c.reward.last();
                eprintln!(
                    "  {}: {} episodes, final mean reward {:.3}",
                    c.algo,
                    c.reward.len(),
                    last.map_or(f64::NAN, |p| p.mean)
                );
            }
        }
        Command::Evaluate(_) => {
            let result = run_cumulative_eval(&spec, &ctx)?;
            for (algo, evals) in &result.per_algo {
                let cost: f64 = evals.iter().map(|e| e.cost).sum();
                let unb: f64 = evals.iter().map(|e| e.unbalance).sum();
                eprintln!("  {algo}: cumulative cost {cost:.1} $, unbalance {unb:.1} kW");
            }
            let oracle_cost: f64 = result.oracle.penalty.iter().map(|s| s.total_cost).sum();
            eprintln!("  oracle (penalty objective): cumulative cost {oracle_cost:.1} $");
        }
        Command::Table(_) => {
            let table = run_test_table(&spec, &ctx)?;
            eprintln!("  {} table rows written", table.rows.len());
        }
        Command::Sensitivity(_) => {
            let cells = run_sensitivity(&spec, &ctx)?;
            for c in &cells {
                eprintln!(
                    "  {} sigma2={}: terminal unbalance {:.2} kW",
                    c.algo, c.sigma2, c.terminal_unbalance
                );
            }
        }
        Command::Schedule(_) => {
            let path = dump_schedule(&spec, &ctx)?;
            eprintln!("  wrote {}", path.display());
        }
        Command::Oracle(_) => {
            let files = run_oracle_only(&spec, &ctx)?;
            eprintln!("  wrote {} files", files.len());
        }
    }
    Ok(())
}
