//! Experiment harness: training curves, cumulative oracle comparisons, test
//! tables with confidence intervals, penalty sweeps, and schedule dumps.
//!
//! Every experiment is a deterministic function of its spec: training runs
//! are seeded, the harness fans independent (algorithm, seed, sigma2) runs
//! out to worker threads, and aggregation always happens in key order after
//! all workers finish.

pub mod stats;

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::algos::{
    evaluate_policy, train, AlgoConfig, AlgoError, AlgoId, DayEval, PolicySnapshot, TrainReport,
};
use crate::data::{load_profiles, synthesize_profiles, DaySlice, Profile, SplitSpec};
use crate::env::SystemConfig;
use crate::oracle::{solve_day, DPSolution, DayOutcome, Discretization, Objective, OracleError};
use crate::util::fmt_sig6;
use stats::{confidence_interval, ConfidenceInterval, StatsError};

#[derive(Debug, thiserror::Error)]
pub enum BenchError {
    #[error("invalid experiment spec: {0}")]
    BadSpec(String),
    #[error("cannot write experiment output: {0}")]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Algo(#[from] AlgoError),
    #[error(transparent)]
    Data(#[from] crate::data::DataError),
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error(transparent)]
    Stats(#[from] StatsError),
    #[error("cannot parse table {path}: line {line}: {reason}")]
    TableParse {
        path: PathBuf,
        line: usize,
        reason: String,
    },
}

/// Where the exogenous profiles come from.
#[derive(Debug, Clone)]
pub enum DataSource {
    Csv(PathBuf),
    Synthetic { seed: u64, days: usize },
}

impl DataSource {
    pub fn load(&self) -> Result<Profile, BenchError> {
        Ok(match self {
            DataSource::Csv(path) => load_profiles(path)?,
            DataSource::Synthetic { seed, days } => synthesize_profiles(*seed, *days)?,
        })
    }
}

/// Parameters shared by all experiment kinds.
#[derive(Debug, Clone)]
pub struct ExperimentSpec {
    pub algos: Vec<AlgoId>,
    pub seeds: Vec<u64>,
    pub data: DataSource,
    pub sigma2_values: Vec<f64>,
    /// Evaluation day indices; defaults to the first ten test days.
    pub eval_days: Option<Vec<usize>>,
    pub disc: Discretization,
    pub out_dir: PathBuf,
    /// Worker threads for independent runs; 0 = all cores.
    pub jobs: usize,
    /// Episode-count override, mainly for desk-scale smoke runs.
    pub episodes: Option<usize>,
}

impl ExperimentSpec {
    pub fn new(data: DataSource, out_dir: impl Into<PathBuf>) -> Self {
        Self {
            algos: AlgoId::ALL.to_vec(),
            seeds: vec![1, 2, 3, 4, 5],
            data,
            sigma2_values: vec![20.0, 50.0, 100.0],
            eval_days: None,
            disc: Discretization::default(),
            out_dir: out_dir.into(),
            jobs: 0,
            episodes: None,
        }
    }

    fn validate(&self) -> Result<(), BenchError> {
        if self.seeds.is_empty() {
            return Err(BenchError::BadSpec("seed list is empty".into()));
        }
        if self.algos.is_empty() {
            return Err(BenchError::BadSpec("algorithm list is empty".into()));
        }
        Ok(())
    }

    fn algo_config(&self, algo: AlgoId, seed: u64) -> AlgoConfig {
        let mut cfg = AlgoConfig::new(algo, seed);
        if let Some(e) = self.episodes {
            cfg.episodes = e;
        }
        cfg
    }
}

/// Loaded data plus the system configuration with observation scales set.
pub struct ExperimentContext {
    pub profile: Profile,
    pub split: SplitSpec,
    pub sys: SystemConfig,
}

/// Loads the data source, splits it, and anchors the observation scales to
/// the profile maxima unless the caller's config pinned them already.
pub fn prepare_context(
    spec: &ExperimentSpec,
    sys: &SystemConfig,
    keep_scales: bool,
) -> Result<ExperimentContext, BenchError> {
    spec.validate()?;
    let profile = spec.data.load()?;
    let split = crate::data::split_train_test(&profile)?;
    let sys = if keep_scales {
        sys.clone()
    } else {
        sys.clone().with_profile_scales(&profile)
    };
    if let Some(days) = &spec.eval_days {
        for &d in days {
            if d >= profile.num_days() {
                return Err(BenchError::BadSpec(format!(
                    "evaluation day {d} outside the {}-day profile",
                    profile.num_days()
                )));
            }
        }
    }
    Ok(ExperimentContext {
        profile,
        split,
        sys,
    })
}

fn eval_days(spec: &ExperimentSpec, ctx: &ExperimentContext) -> Result<Vec<DaySlice>, BenchError> {
    let indices: Vec<usize> = match &spec.eval_days {
        Some(d) => d.clone(),
        None => ctx.split.test_days.iter().take(10).cloned().collect(),
    };
    if indices.is_empty() {
        return Err(BenchError::BadSpec("no evaluation days".into()));
    }
    indices
        .into_iter()
        .map(|d| ctx.profile.day(d).map_err(BenchError::from))
        .collect()
}

/// Runs independent jobs over `keys`, in parallel when the feature and the
/// jobs setting allow it, and returns results in key order.
fn run_many<K, R, F>(jobs: usize, keys: &[K], f: F) -> Result<Vec<R>, BenchError>
where
    K: Sync,
    R: Send,
    F: Fn(&K) -> Result<R, BenchError> + Sync,
{
    #[cfg(feature = "parallel")]
    {
        if jobs != 1 {
            use rayon::prelude::*;
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(if jobs == 0 { 0 } else { jobs })
                .build()
                .map_err(|e| BenchError::BadSpec(format!("thread pool: {e}")))?;
            return pool.install(|| keys.par_iter().map(&f).collect());
        }
    }
    keys.iter().map(|k| f(k)).collect()
}

/// One aggregated curve sample across seeds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurvePoint {
    pub mean: f64,
    pub min: f64,
    pub max: f64,
}

/// Per-algorithm training curves aggregated across seeds.
#[derive(Debug, Clone)]
pub struct TrainingCurves {
    pub algo: AlgoId,
    pub reward: Vec<CurvePoint>,
    pub cost: Vec<CurvePoint>,
    pub unbalance: Vec<CurvePoint>,
    pub per_seed: Vec<TrainReport>,
}

fn aggregate_curves(algo: AlgoId, reports: Vec<TrainReport>) -> TrainingCurves {
    let episodes = reports.first().map_or(0, |r| r.episodes.len());
    let collect = |field: fn(&crate::algos::EpisodeStats) -> f64| -> Vec<CurvePoint> {
        (0..episodes)
            .map(|e| {
                let mut mean = 0.0;
                let mut min = f64::INFINITY;
                let mut max = f64::NEG_INFINITY;
                for r in &reports {
                    let v = field(&r.episodes[e]);
                    mean += v;
                    min = min.min(v);
                    max = max.max(v);
                }
                CurvePoint {
                    mean: mean / reports.len() as f64,
                    min,
                    max,
                }
            })
            .collect()
    };
    TrainingCurves {
        algo,
        reward: collect(|s| s.reward),
        cost: collect(|s| s.cost),
        unbalance: collect(|s| s.unbalance),
        per_seed: reports,
    }
}

fn write_curves(curves: &TrainingCurves, path: &Path) -> Result<(), BenchError> {
    let mut out = String::from(
        "episode,reward_mean,reward_min,reward_max,cost_mean,cost_min,cost_max,\
         unbalance_mean,unbalance_min,unbalance_max\n",
    );
    for e in 0..curves.reward.len() {
        let (r, c, u) = (&curves.reward[e], &curves.cost[e], &curves.unbalance[e]);
        let _ = writeln!(
            out,
            "{e},{},{},{},{},{},{},{},{},{}",
            fmt_sig6(r.mean),
            fmt_sig6(r.min),
            fmt_sig6(r.max),
            fmt_sig6(c.mean),
            fmt_sig6(c.min),
            fmt_sig6(c.max),
            fmt_sig6(u.mean),
            fmt_sig6(u.min),
            fmt_sig6(u.max),
        );
    }
    std::fs::write(path, out)?;
    Ok(())
}

/// Trains every (algorithm, seed) pair and writes one aggregated curve file
/// per algorithm (`train_<algo>.csv`).
pub fn run_training_experiment(
    spec: &ExperimentSpec,
    ctx: &ExperimentContext,
) -> Result<Vec<TrainingCurves>, BenchError> {
    std::fs::create_dir_all(&spec.out_dir)?;
    let keys: Vec<(AlgoId, u64)> = spec
        .algos
        .iter()
        .flat_map(|&a| spec.seeds.iter().map(move |&s| (a, s)))
        .collect();
    let outputs = run_many(spec.jobs, &keys, |&(algo, seed)| {
        let cfg = spec.algo_config(algo, seed);
        Ok(train(&ctx.profile, &ctx.split, &ctx.sys, &cfg)?.report)
    })?;
    let mut result = Vec::new();
    for (ai, &algo) in spec.algos.iter().enumerate() {
        let reports: Vec<TrainReport> = outputs
            .iter()
            .enumerate()
            .filter(|(i, _)| i / spec.seeds.len() == ai)
            .map(|(_, r)| r.clone())
            .collect();
        let curves = aggregate_curves(algo, reports);
        write_curves(&curves, &spec.out_dir.join(format!("train_{algo}.csv")))?;
        result.push(curves);
    }
    Ok(result)
}

fn train_policy(
    spec: &ExperimentSpec,
    ctx: &ExperimentContext,
    algo: AlgoId,
    seed: u64,
) -> Result<PolicySnapshot, BenchError> {
    let cfg = spec.algo_config(algo, seed);
    Ok(train(&ctx.profile, &ctx.split, &ctx.sys, &cfg)?.policy)
}

/// Per-day oracle references for a set of evaluation days.
pub struct OracleColumn {
    pub penalty: Vec<DPSolution>,
    pub hard: Vec<Option<DPSolution>>,
}

fn solve_oracle_column(
    spec: &ExperimentSpec,
    ctx: &ExperimentContext,
    days: &[DaySlice],
    soc_init: f64,
) -> Result<OracleColumn, BenchError> {
    let mut penalty = Vec::with_capacity(days.len());
    let mut hard = Vec::with_capacity(days.len());
    for slice in days {
        match solve_day(slice, &ctx.sys, &spec.disc, soc_init, Objective::CostWithPenalty)? {
            DayOutcome::Solved(s) => penalty.push(s),
            DayOutcome::Infeasible { .. } => {
                return Err(BenchError::BadSpec(
                    "penalty objective cannot be infeasible".into(),
                ))
            }
        }
        match solve_day(slice, &ctx.sys, &spec.disc, soc_init, Objective::CostHardBalance)? {
            DayOutcome::Solved(s) => hard.push(Some(s)),
            DayOutcome::Infeasible { .. } => hard.push(None),
        }
    }
    Ok(OracleColumn { penalty, hard })
}

/// Cumulative evaluation of every algorithm (first seed) and both oracle
/// objectives over consecutive evaluation days.
pub struct CumulativeResult {
    pub day_indices: Vec<usize>,
    pub per_algo: Vec<(AlgoId, Vec<DayEval>)>,
    pub oracle: OracleColumn,
}

/// Runs the cumulative cost/unbalance comparison and writes
/// `cumulative_cost.csv` and `cumulative_unbalance.csv`.
pub fn run_cumulative_eval(
    spec: &ExperimentSpec,
    ctx: &ExperimentContext,
) -> Result<CumulativeResult, BenchError> {
    std::fs::create_dir_all(&spec.out_dir)?;
    let days = eval_days(spec, ctx)?;
    let soc_init = ctx.sys.ess.e_max / 2.0;
    let policies = run_many(spec.jobs, &spec.algos, |&algo| {
        train_policy(spec, ctx, algo, spec.seeds[0])
    })?;
    let mut per_algo = Vec::new();
    for (algo, policy) in spec.algos.iter().zip(policies) {
        let evals = evaluate_policy(&policy, &days, soc_init, &ctx.sys)?;
        per_algo.push((*algo, evals));
    }
    let oracle = solve_oracle_column(spec, ctx, &days, soc_init)?;

    for (file, field, oracle_penalty, oracle_hard) in [
        (
            "cumulative_cost.csv",
            Box::new(|e: &DayEval| e.cost) as Box<dyn Fn(&DayEval) -> f64>,
            oracle.penalty.iter().map(|s| s.total_cost).collect::<Vec<_>>(),
            oracle
                .hard
                .iter()
                .map(|s| s.as_ref().map(|x| x.total_cost))
                .collect::<Vec<_>>(),
        ),
        (
            "cumulative_unbalance.csv",
            Box::new(|e: &DayEval| e.unbalance),
            oracle
                .penalty
                .iter()
                .map(|s| s.total_unbalance)
                .collect::<Vec<_>>(),
            oracle
                .hard
                .iter()
                .map(|s| s.as_ref().map(|x| x.total_unbalance))
                .collect::<Vec<_>>(),
        ),
    ] {
        let mut out = String::from("day");
        for (algo, _) in &per_algo {
            let _ = write!(out, ",{algo}");
        }
        out.push_str(",oracle_penalty,oracle_hard\n");
        let mut running: Vec<f64> = vec![0.0; per_algo.len()];
        let mut run_pen = 0.0;
        let mut run_hard = Some(0.0);
        for d in 0..days.len() {
            let _ = write!(out, "{}", days[d].day_index);
            for (i, (_, evals)) in per_algo.iter().enumerate() {
                running[i] += field(&evals[d]);
                let _ = write!(out, ",{}", fmt_sig6(running[i]));
            }
            run_pen += oracle_penalty[d];
            let _ = write!(out, ",{}", fmt_sig6(run_pen));
            run_hard = match (run_hard, oracle_hard[d]) {
                (Some(acc), Some(v)) => Some(acc + v),
                _ => None,
            };
            match run_hard {
                Some(acc) => {
                    let _ = writeln!(out, ",{}", fmt_sig6(acc));
                }
                None => {
                    let _ = writeln!(out, ",infeasible");
                }
            }
        }
        std::fs::write(spec.out_dir.join(file), out)?;
    }

    Ok(CumulativeResult {
        day_indices: days.iter().map(|d| d.day_index).collect(),
        per_algo,
        oracle,
    })
}

/// One row of the evaluation table.
#[derive(Debug, Clone)]
pub struct TableRow {
    pub day: usize,
    pub algo: AlgoId,
    pub cost: ConfidenceInterval,
    pub unbalance: ConfidenceInterval,
    pub oracle_cost: f64,
}

/// Evaluation table over (day, algorithm) cells with per-seed confidence
/// intervals and the oracle cost column.
#[derive(Debug)]
pub struct MetricsTable {
    pub rows: Vec<TableRow>,
}

impl MetricsTable {
    pub fn get(&self, day: usize, algo: AlgoId) -> Option<&TableRow> {
        self.rows.iter().find(|r| r.day == day && r.algo == algo)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from(
            "day,algorithm,cost_mean,cost_lower,cost_upper,\
             unbalance_mean,unbalance_lower,unbalance_upper,oracle_cost\n",
        );
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{}",
                r.day,
                r.algo,
                fmt_sig6(r.cost.mean),
                fmt_sig6(r.cost.lower),
                fmt_sig6(r.cost.upper),
                fmt_sig6(r.unbalance.mean),
                fmt_sig6(r.unbalance.lower),
                fmt_sig6(r.unbalance.upper),
                fmt_sig6(r.oracle_cost),
            );
        }
        out
    }
}

/// Parses a table emitted by [`MetricsTable::to_csv`]; numbers are recovered
/// exactly at the emitted six-significant-digit precision.
pub fn parse_metrics_table(path: &Path) -> Result<MetricsTable, BenchError> {
    let text = std::fs::read_to_string(path)?;
    let mut rows = Vec::new();
    for (i, line) in text.lines().enumerate().skip(1) {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        let parse_err = |reason: String| BenchError::TableParse {
            path: path.to_path_buf(),
            line: i + 1,
            reason,
        };
        if fields.len() != 9 {
            return Err(parse_err(format!("expected 9 fields, got {}", fields.len())));
        }
        let day: usize = fields[0].parse().map_err(|e| parse_err(format!("{e}")))?;
        let algo: AlgoId = fields[1].parse().map_err(parse_err)?;
        let num = |idx: usize| -> Result<f64, BenchError> {
            fields[idx].parse().map_err(|e| parse_err(format!("{e}")))
        };
        rows.push(TableRow {
            day,
            algo,
            cost: ConfidenceInterval {
                mean: num(2)?,
                lower: num(3)?,
                upper: num(4)?,
                n: 0,
            },
            unbalance: ConfidenceInterval {
                mean: num(5)?,
                lower: num(6)?,
                upper: num(7)?,
                n: 0,
            },
            oracle_cost: num(8)?,
        });
    }
    Ok(MetricsTable { rows })
}

/// Trains every (algorithm, seed) pair, evaluates each policy on the chosen
/// days, and writes `table.csv` with 95% confidence intervals plus the
/// oracle cost column.
pub fn run_test_table(
    spec: &ExperimentSpec,
    ctx: &ExperimentContext,
) -> Result<MetricsTable, BenchError> {
    if spec.seeds.len() < 2 {
        return Err(BenchError::BadSpec(
            "test table requires at least two seeds for nondegenerate intervals".into(),
        ));
    }
    std::fs::create_dir_all(&spec.out_dir)?;
    let days = eval_days(spec, ctx)?;
    let soc_init = ctx.sys.ess.e_max / 2.0;

    let keys: Vec<(AlgoId, u64)> = spec
        .algos
        .iter()
        .flat_map(|&a| spec.seeds.iter().map(move |&s| (a, s)))
        .collect();
    // Train and evaluate inside the worker so policy memory is released.
    let evals = run_many(spec.jobs, &keys, |&(algo, seed)| {
        let policy = train_policy(spec, ctx, algo, seed)?;
        Ok(evaluate_policy(&policy, &days, soc_init, &ctx.sys)?)
    })?;
    let oracle = solve_oracle_column(spec, ctx, &days, soc_init)?;

    let mut rows = Vec::new();
    for (d, slice) in days.iter().enumerate() {
        for (ai, &algo) in spec.algos.iter().enumerate() {
            let seed_evals: Vec<&Vec<DayEval>> = (0..spec.seeds.len())
                .map(|si| &evals[ai * spec.seeds.len() + si])
                .collect();
            let costs: Vec<f64> = seed_evals.iter().map(|e| e[d].cost).collect();
            let unbalances: Vec<f64> = seed_evals.iter().map(|e| e[d].unbalance).collect();
            rows.push(TableRow {
                day: slice.day_index,
                algo,
                cost: confidence_interval(&costs)?,
                unbalance: confidence_interval(&unbalances)?.floored_at_zero(),
                oracle_cost: oracle.penalty[d].total_cost,
            });
        }
    }
    let table = MetricsTable { rows };
    std::fs::write(spec.out_dir.join("table.csv"), table.to_csv())?;
    Ok(table)
}

/// Aggregated sensitivity sweep entry.
pub struct SensitivityCell {
    pub algo: AlgoId,
    pub sigma2: f64,
    pub curves: TrainingCurves,
    /// Mean per-episode unbalance over the final 100 episodes, averaged
    /// across seeds.
    pub terminal_unbalance: f64,
}

/// Full training per (algorithm, sigma2, seed); writes one curve file per
/// (algorithm, sigma2) pair.
pub fn run_sensitivity(
    spec: &ExperimentSpec,
    ctx: &ExperimentContext,
) -> Result<Vec<SensitivityCell>, BenchError> {
    if spec.sigma2_values.is_empty() {
        return Err(BenchError::BadSpec("sigma2 list is empty".into()));
    }
    std::fs::create_dir_all(&spec.out_dir)?;
    let keys: Vec<(AlgoId, u64, u64)> = spec
        .algos
        .iter()
        .flat_map(|&a| {
            spec.sigma2_values.iter().enumerate().flat_map(move |(vi, _)| {
                spec.seeds.iter().map(move |&s| (a, vi as u64, s))
            })
        })
        .collect();
    let outputs = run_many(spec.jobs, &keys, |&(algo, vi, seed)| {
        let mut sys = ctx.sys.clone();
        sys.sigma2 = spec.sigma2_values[vi as usize];
        let cfg = spec.algo_config(algo, seed);
        Ok(train(&ctx.profile, &ctx.split, &sys, &cfg)?.report)
    })?;

    let mut cells = Vec::new();
    let seeds_n = spec.seeds.len();
    let sigmas_n = spec.sigma2_values.len();
    for (ai, &algo) in spec.algos.iter().enumerate() {
        for (vi, &sigma2) in spec.sigma2_values.iter().enumerate() {
            let base = ai * sigmas_n * seeds_n + vi * seeds_n;
            let reports: Vec<TrainReport> =
                (0..seeds_n).map(|si| outputs[base + si].clone()).collect();
            let curves = aggregate_curves(algo, reports);
            let tail = curves.unbalance.len().saturating_sub(100);
            let terminal: f64 = if curves.unbalance.is_empty() {
                0.0
            } else {
                curves.unbalance[tail..].iter().map(|p| p.mean).sum::<f64>()
                    / (curves.unbalance.len() - tail) as f64
            };
            write_curves(
                &curves,
                &spec
                    .out_dir
                    .join(format!("sensitivity_{algo}_sigma2_{sigma2}.csv")),
            )?;
            cells.push(SensitivityCell {
                algo,
                sigma2,
                curves,
                terminal_unbalance: terminal,
            });
        }
    }
    Ok(cells)
}

/// Hourly side-by-side dump of a trained policy and the oracle on one day:
/// exogenous columns, then per-contender SOC, DG powers, storage, and grid.
pub fn dump_schedule(
    spec: &ExperimentSpec,
    ctx: &ExperimentContext,
) -> Result<PathBuf, BenchError> {
    std::fs::create_dir_all(&spec.out_dir)?;
    let days = eval_days(spec, ctx)?;
    let slice = &days[0];
    let algo = spec.algos[0];
    let soc_init = ctx.sys.ess.e_max / 2.0;

    let policy = train_policy(spec, ctx, algo, spec.seeds[0])?;
    let eval = evaluate_policy(&policy, std::slice::from_ref(slice), soc_init, &ctx.sys)?
        .pop()
        .expect("one day in, one eval out");
    let oracle_sol = solve_day(
        slice,
        &ctx.sys,
        &spec.disc,
        soc_init,
        Objective::CostWithPenalty,
    )?
    .expect_solution("penalty objective is total");

    let n = ctx.sys.num_dg();
    let mut out = String::from("hour,price,load_kw,pv_kw");
    for tag in ["policy", "oracle"] {
        let _ = write!(out, ",{tag}_soc_kwh");
        for i in 1..=n {
            let _ = write!(out, ",{tag}_dg{i}_kw");
        }
        let _ = write!(out, ",{tag}_ess_kw,{tag}_grid_kw,{tag}_unbalance_kw");
    }
    out.push('\n');
    for t in 0..ctx.sys.horizon {
        let _ = write!(
            out,
            "{t},{},{},{}",
            fmt_sig6(slice.price[t]),
            fmt_sig6(slice.load[t]),
            fmt_sig6(slice.pv[t]),
        );
        for sched in [&eval.schedule, &oracle_sol.schedule] {
            let step = &sched.steps[t];
            let _ = write!(out, ",{}", fmt_sig6(step.soc_after));
            for p in &step.dg_power {
                let _ = write!(out, ",{}", fmt_sig6(*p));
            }
            let _ = write!(
                out,
                ",{},{},{}",
                fmt_sig6(step.ess_power),
                fmt_sig6(step.grid_power),
                fmt_sig6(step.unbalance),
            );
        }
        out.push('\n');
    }
    let path = spec
        .out_dir
        .join(format!("schedule_{algo}_day{}.csv", slice.day_index));
    std::fs::write(&path, out)?;
    Ok(path)
}

/// Oracle-only run: per-day schedules under the penalty objective plus a
/// summary of both objectives.
pub fn run_oracle_only(
    spec: &ExperimentSpec,
    ctx: &ExperimentContext,
) -> Result<Vec<PathBuf>, BenchError> {
    std::fs::create_dir_all(&spec.out_dir)?;
    let days = eval_days(spec, ctx)?;
    let soc_init = ctx.sys.ess.e_max / 2.0;
    let oracle = solve_oracle_column(spec, ctx, &days, soc_init)?;
    let mut written = Vec::new();
    let mut summary = String::from(
        "day,cost,unbalance,objective,states_expanded,max_soc_snap_error,\
         hard_feasible,hard_cost\n",
    );
    for (d, slice) in days.iter().enumerate() {
        let sol = &oracle.penalty[d];
        let path = spec
            .out_dir
            .join(format!("oracle_day{}.csv", slice.day_index));
        crate::oracle::write_schedule_csv(&sol.schedule, &path)?;
        written.push(path);
        let (hard_feasible, hard_cost) = match &oracle.hard[d] {
            Some(h) => ("yes", fmt_sig6(h.total_cost)),
            None => ("no", String::from("")),
        };
        let _ = writeln!(
            summary,
            "{},{},{},{},{},{},{},{}",
            slice.day_index,
            fmt_sig6(sol.total_cost),
            fmt_sig6(sol.total_unbalance),
            fmt_sig6(sol.objective_value),
            sol.states_expanded,
            fmt_sig6(sol.max_soc_snap_error),
            hard_feasible,
            hard_cost,
        );
    }
    let summary_path = spec.out_dir.join("oracle_summary.csv");
    std::fs::write(&summary_path, summary)?;
    written.push(summary_path);
    Ok(written)
}
