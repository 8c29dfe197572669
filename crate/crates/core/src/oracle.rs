//! Exact day-ahead solver on a discretized lattice.
//!
//! The scheduling program is solved by finite-horizon backward induction over
//! the joint state (step, SOC level, previous power level of every DG unit).
//! Action enumeration is pruned to ramp-reachable DG levels and SOC-feasible
//! storage levels. The result is optimal among all lattice-feasible schedules
//! for the configured objective and serves as the optimality reference for
//! the learned policies.
//!
//! `brute_force_day` enumerates every lattice schedule outright and exists to
//! cross-check the induction on small instances.

use std::fmt::Write as _;
use std::path::Path;

use crate::data::DaySlice;
use crate::env::{exchange_cost, soc_transition, SystemConfig};

#[derive(Debug, thiserror::Error)]
pub enum OracleError {
    #[error("discretization invalid: {0}")]
    BadDiscretization(String),
    #[error("DG unit {unit}: ramp limits are not whole multiples of dg_step")]
    RampOffGrid { unit: usize },
    #[error("enumeration budget of {budget} nodes exceeded")]
    GuardExceeded { budget: u64 },
    #[error("schedule has {got} steps, expected {expected}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("lattice dimension exceeds index range")]
    TooManyLevels,
    #[error(transparent)]
    Env(#[from] crate::env::EnvError),
}

/// Grid spacing of the discretized decision space.
#[derive(Debug, Clone, PartialEq)]
pub struct Discretization {
    pub dg_step: f64,
    pub ess_step: f64,
    pub soc_step: f64,
}

impl Default for Discretization {
    fn default() -> Self {
        Self {
            dg_step: 25.0,
            ess_step: 25.0,
            soc_step: 20.0,
        }
    }
}

/// Which objective the solver minimizes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Objective {
    /// Operating cost plus the reward-consistent unbalance penalty
    /// `(sigma2 / sigma1) * unbalance`.
    CostWithPenalty,
    /// Operating cost with any positive unbalance treated as infeasible.
    CostHardBalance,
}

/// Discretized decision space plus precomputed reachability.
#[derive(Debug, Clone)]
pub struct Lattice {
    /// Per unit: level powers; index 0 is the off level (0 kW), committed
    /// levels ascend from p_min to p_max.
    pub dg_levels: Vec<Vec<f64>>,
    /// Operating cost at each level (0 for off).
    pub dg_costs: Vec<Vec<f64>>,
    /// Per unit, per previous level: reachable next levels in ascending index
    /// order (off first). Commitment toggling bypasses ramps.
    pub dg_reach: Vec<Vec<Vec<u16>>>,
    /// Storage setpoints, symmetric about zero.
    pub ess_levels: Vec<f64>,
    /// SOC levels from e_min to e_max.
    pub soc_levels: Vec<f64>,
    /// Per SOC level: feasible storage moves as
    /// (ess index, next SOC index, power, snap error).
    pub ess_opts: Vec<Vec<EssMove>>,
}

#[derive(Debug, Clone, Copy)]
pub struct EssMove {
    pub ess_idx: u16,
    pub next_soc: u16,
    pub power: f64,
    pub snap_err: f64,
}

const GRID_EPS: f64 = 1e-9;

/// Builds the per-unit level sets, storage levels, SOC levels, and the
/// reachability tables.
pub fn build_lattice(cfg: &SystemConfig, disc: &Discretization) -> Result<Lattice, OracleError> {
    if !(disc.dg_step > 0.0 && disc.ess_step > 0.0 && disc.soc_step > 0.0) {
        return Err(OracleError::BadDiscretization(
            "all steps must be positive".into(),
        ));
    }
    cfg.validate()?;

    let mut dg_levels = Vec::new();
    let mut dg_costs = Vec::new();
    let mut dg_reach = Vec::new();
    for (i, unit) in cfg.dg_units.iter().enumerate() {
        for ramp in [unit.ramp_up, unit.ramp_down] {
            let ratio = ramp / disc.dg_step;
            if (ratio - ratio.round()).abs() > GRID_EPS {
                return Err(OracleError::RampOffGrid { unit: i });
            }
        }
        let mut levels = vec![0.0];
        let mut k = 0u32;
        loop {
            let p = unit.p_min + k as f64 * disc.dg_step;
            if p >= unit.p_max - GRID_EPS {
                break;
            }
            levels.push(p);
            k += 1;
        }
        levels.push(unit.p_max);
        if levels.len() > u16::MAX as usize {
            return Err(OracleError::TooManyLevels);
        }
        let costs: Vec<f64> = levels
            .iter()
            .map(|&p| {
                if p == 0.0 {
                    0.0
                } else {
                    unit.a * p * p + unit.b * p + unit.c
                }
            })
            .collect();

        let mut reach = Vec::with_capacity(levels.len());
        for (a, &prev) in levels.iter().enumerate() {
            let mut next = Vec::new();
            if a == 0 {
                // From off, any level (including staying off).
                next.extend(0..levels.len() as u16);
            } else {
                next.push(0);
                let lo = prev - unit.ramp_down - GRID_EPS;
                let hi = prev + unit.ramp_up + GRID_EPS;
                for (b, &q) in levels.iter().enumerate().skip(1) {
                    if q >= lo && q <= hi {
                        next.push(b as u16);
                    }
                }
            }
            reach.push(next);
        }
        dg_levels.push(levels);
        dg_costs.push(costs);
        dg_reach.push(reach);
    }

    let k_max = ((cfg.ess.p_limit + GRID_EPS) / disc.ess_step).floor() as i64;
    let ess_levels: Vec<f64> = (-k_max..=k_max)
        .map(|k| k as f64 * disc.ess_step)
        .collect();

    let mut soc_levels = Vec::new();
    let mut k = 0u32;
    loop {
        let s = cfg.ess.e_min + k as f64 * disc.soc_step;
        if s >= cfg.ess.e_max - GRID_EPS {
            break;
        }
        soc_levels.push(s);
        k += 1;
    }
    soc_levels.push(cfg.ess.e_max);
    if soc_levels.len() > u16::MAX as usize || ess_levels.len() > u16::MAX as usize {
        return Err(OracleError::TooManyLevels);
    }

    let mut ess_opts = Vec::with_capacity(soc_levels.len());
    for &s in &soc_levels {
        let mut opts = Vec::new();
        for (e, &p) in ess_levels.iter().enumerate() {
            let raw = soc_transition(&cfg.ess, s, p, cfg.delta_t);
            if raw < cfg.ess.e_min - GRID_EPS || raw > cfg.ess.e_max + GRID_EPS {
                continue;
            }
            let (next, err) = nearest_level(&soc_levels, raw);
            opts.push(EssMove {
                ess_idx: e as u16,
                next_soc: next as u16,
                power: p,
                snap_err: err,
            });
        }
        ess_opts.push(opts);
    }

    Ok(Lattice {
        dg_levels,
        dg_costs,
        dg_reach,
        ess_levels,
        soc_levels,
        ess_opts,
    })
}

/// Nearest level index and absolute snap error; ties go to the lower index.
fn nearest_level(levels: &[f64], value: f64) -> (usize, f64) {
    let mut best = 0;
    let mut best_err = (levels[0] - value).abs();
    for (i, &l) in levels.iter().enumerate().skip(1) {
        let err = (l - value).abs();
        if err < best_err {
            best = i;
            best_err = err;
        }
    }
    (best, best_err)
}

/// One scheduled step.
#[derive(Debug, Clone, PartialEq)]
pub struct ScheduleStep {
    pub dg_on: Vec<bool>,
    pub dg_power: Vec<f64>,
    /// Storage setpoint, positive = charging.
    pub ess_power: f64,
    pub grid_power: f64,
    pub unbalance: f64,
    /// Dollar cost of the step: (DG cost + exchange cost) * delta_t.
    pub step_cost: f64,
    pub soc_after: f64,
}

/// A full-day schedule anchored at an initial SOC.
#[derive(Debug, Clone, PartialEq)]
pub struct Schedule {
    pub soc_init: f64,
    pub steps: Vec<ScheduleStep>,
    /// Allowed gap between the stored SOC column and the storage law replay.
    /// Zero for exact rollouts; half a SOC step for lattice solutions.
    pub soc_snap_tol: f64,
}

impl Schedule {
    pub fn total_cost(&self) -> f64 {
        self.steps.iter().map(|s| s.step_cost).sum()
    }

    pub fn total_unbalance(&self) -> f64 {
        self.steps.iter().map(|s| s.unbalance).sum()
    }
}

/// Solver output for one day.
#[derive(Debug, Clone)]
pub struct DPSolution {
    pub schedule: Schedule,
    pub total_cost: f64,
    pub total_unbalance: f64,
    /// Minimized objective value (equals total_cost under hard balance).
    pub objective_value: f64,
    /// State-action pairs examined across all stages.
    pub states_expanded: u64,
    pub max_soc_snap_error: f64,
}

#[derive(Debug, Clone)]
pub enum DayOutcome {
    Solved(DPSolution),
    /// No balanced schedule exists under `CostHardBalance`.
    Infeasible { states_expanded: u64 },
}

impl DayOutcome {
    pub fn solution(&self) -> Option<&DPSolution> {
        match self {
            DayOutcome::Solved(s) => Some(s),
            DayOutcome::Infeasible { .. } => None,
        }
    }

    pub fn expect_solution(self, what: &str) -> DPSolution {
        match self {
            DayOutcome::Solved(s) => s,
            DayOutcome::Infeasible { .. } => panic!("{what}: day is infeasible"),
        }
    }
}

/// Per-step cost pieces shared by the solver, the brute-force check, and the
/// schedule evaluator.
#[derive(Debug, Clone, Copy)]
struct StepTerms {
    grid_power: f64,
    unbalance: f64,
    step_cost: f64,
}

#[inline]
fn step_terms(
    price: f64,
    pv: f64,
    load: f64,
    dg_power: f64,
    dg_cost: f64,
    ess_power: f64,
    cfg: &SystemConfig,
) -> StepTerms {
    let residual = load + ess_power - dg_power - pv;
    let cap = cfg.grid.p_exchange_max;
    let grid_power = residual.clamp(-cap, cap);
    let unbalance = (residual - grid_power).abs();
    let exchange = exchange_cost(price, grid_power, cfg.grid.sell_coefficient);
    let step_cost = (dg_cost + exchange) * cfg.delta_t;
    StepTerms {
        grid_power,
        unbalance,
        step_cost,
    }
}

#[inline]
fn stage_weight(terms: &StepTerms, hard: bool, penalty_weight: f64) -> Option<f64> {
    if hard {
        if terms.unbalance > 0.0 {
            return None;
        }
        Some(terms.step_cost)
    } else {
        Some(terms.step_cost + penalty_weight * terms.unbalance)
    }
}

struct Problem<'a> {
    lat: &'a Lattice,
    cfg: &'a SystemConfig,
    slice: &'a DaySlice,
    hard: bool,
    penalty_weight: f64,
    /// Per-unit index stride inside the flattened DG state block.
    strides: Vec<usize>,
    dg_block: usize,
}

impl<'a> Problem<'a> {
    fn new(
        lat: &'a Lattice,
        cfg: &'a SystemConfig,
        slice: &'a DaySlice,
        objective: Objective,
    ) -> Self {
        let n = lat.dg_levels.len();
        let mut strides = vec![1usize; n];
        for i in (0..n.saturating_sub(1)).rev() {
            strides[i] = strides[i + 1] * lat.dg_levels[i + 1].len();
        }
        let dg_block = strides.first().map_or(1, |s| s * lat.dg_levels[0].len());
        Self {
            lat,
            cfg,
            slice,
            hard: objective == Objective::CostHardBalance,
            penalty_weight: cfg.sigma2 / cfg.sigma1,
            strides,
            dg_block,
        }
    }
}

/// Recursively enumerates DG level choices in lexicographic index order, then
/// storage moves, keeping the best weight + continuation value. Strict
/// improvement keeps the first (lexicographically smallest) optimal action.
struct StateScan<'a, 'p> {
    prob: &'p Problem<'a>,
    reach: Vec<&'p [u16]>,
    ess_opts: &'p [EssMove],
    value_next: &'p [f64],
    price: f64,
    pv: f64,
    load: f64,
    action_buf: Vec<u16>,
    best: f64,
    best_action: Vec<u16>,
    evals: u64,
}

impl StateScan<'_, '_> {
    fn run(&mut self) {
        self.best = f64::INFINITY;
        self.best_action.fill(u16::MAX);
        self.descend(0, 0.0, 0.0, 0);
    }

    fn descend(&mut self, depth: usize, power: f64, cost: f64, offset: usize) {
        let n = self.prob.strides.len();
        if depth == n {
            for mv in self.ess_opts {
                self.evals += 1;
                let terms = step_terms(
                    self.price, self.pv, self.load, power, cost, mv.power, self.prob.cfg,
                );
                let Some(w) = stage_weight(&terms, self.prob.hard, self.prob.penalty_weight)
                else {
                    continue;
                };
                let v = w + self.value_next[mv.next_soc as usize * self.prob.dg_block + offset];
                if v < self.best {
                    self.best = v;
                    self.action_buf[n] = mv.ess_idx;
                    self.best_action.copy_from_slice(&self.action_buf);
                }
            }
            return;
        }
        let stride = self.prob.strides[depth];
        let levels = &self.prob.lat.dg_levels[depth];
        let costs = &self.prob.lat.dg_costs[depth];
        for &next in self.reach[depth] {
            self.action_buf[depth] = next;
            self.descend(
                depth + 1,
                power + levels[next as usize],
                cost + costs[next as usize],
                offset + next as usize * stride,
            );
        }
    }
}

/// Backward-induction solve; parallel across SOC levels when the `parallel`
/// feature is active.
pub fn solve_day(
    slice: &DaySlice,
    cfg: &SystemConfig,
    disc: &Discretization,
    soc_init: f64,
    objective: Objective,
) -> Result<DayOutcome, OracleError> {
    solve_day_impl(slice, cfg, disc, soc_init, objective, cfg!(feature = "parallel"))
}

/// Backward-induction solve on a single thread, regardless of features.
pub fn solve_day_sequential(
    slice: &DaySlice,
    cfg: &SystemConfig,
    disc: &Discretization,
    soc_init: f64,
    objective: Objective,
) -> Result<DayOutcome, OracleError> {
    solve_day_impl(slice, cfg, disc, soc_init, objective, false)
}

fn solve_day_impl(
    slice: &DaySlice,
    cfg: &SystemConfig,
    disc: &Discretization,
    soc_init: f64,
    objective: Objective,
    parallel: bool,
) -> Result<DayOutcome, OracleError> {
    let lat = build_lattice(cfg, disc)?;
    let prob = Problem::new(&lat, cfg, slice, objective);
    let n = cfg.num_dg();
    let block = prob.dg_block;
    let states = lat.soc_levels.len() * block;
    let horizon = cfg.horizon;

    let mut value_next = vec![0.0f64; states];
    let mut value_cur = vec![0.0f64; states];
    // Per stage, per state: chosen next level per unit plus the ESS index.
    let mut actions: Vec<Vec<u16>> = vec![vec![u16::MAX; states * (n + 1)]; horizon];
    let mut expanded: u64 = 0;

    for t in (0..horizon).rev() {
        let (price, pv, load) = (slice.price[t], slice.pv[t], slice.load[t]);
        let value_next_ref = &value_next;
        let prob_ref = &prob;
        let lat_ref = &lat;
        let scan_soc = move |soc_idx: usize, values: &mut [f64], acts: &mut [u16]| -> u64 {
            let mut scan = StateScan {
                prob: prob_ref,
                reach: vec![&[][..]; n],
                ess_opts: &lat_ref.ess_opts[soc_idx],
                value_next: value_next_ref,
                price,
                pv,
                load,
                action_buf: vec![0; n + 1],
                best: f64::INFINITY,
                best_action: vec![u16::MAX; n + 1],
                evals: 0,
            };
            for flat in 0..block {
                let mut rem = flat;
                for (i, stride) in prob_ref.strides.iter().enumerate() {
                    let level = rem / stride;
                    rem %= stride;
                    scan.reach[i] = &lat_ref.dg_reach[i][level];
                }
                scan.run();
                values[flat] = scan.best;
                acts[flat * (n + 1)..(flat + 1) * (n + 1)].copy_from_slice(&scan.best_action);
            }
            scan.evals
        };

        let stage_actions = &mut actions[t];
        #[cfg(feature = "parallel")]
        let stage_evals: u64 = if parallel {
            use rayon::prelude::*;
            value_cur
                .par_chunks_mut(block)
                .zip(stage_actions.par_chunks_mut(block * (n + 1)))
                .enumerate()
                .map(|(soc_idx, (values, acts))| scan_soc(soc_idx, values, acts))
                .sum()
        } else {
            value_cur
                .chunks_mut(block)
                .zip(stage_actions.chunks_mut(block * (n + 1)))
                .enumerate()
                .map(|(soc_idx, (values, acts))| scan_soc(soc_idx, values, acts))
                .sum()
        };
        #[cfg(not(feature = "parallel"))]
        let stage_evals: u64 = {
            let _ = parallel;
            value_cur
                .chunks_mut(block)
                .zip(stage_actions.chunks_mut(block * (n + 1)))
                .enumerate()
                .map(|(soc_idx, (values, acts))| scan_soc(soc_idx, values, acts))
                .sum()
        };
        expanded += stage_evals;
        std::mem::swap(&mut value_cur, &mut value_next);
    }

    let (soc0, _) = nearest_level(&lat.soc_levels, soc_init);
    let v0 = value_next[soc0 * block];
    if !v0.is_finite() {
        return Ok(DayOutcome::Infeasible {
            states_expanded: expanded,
        });
    }

    // Forward replay of the stored argmin actions.
    let mut action_seq = Vec::with_capacity(horizon);
    let mut soc_idx = soc0;
    let mut offset = 0usize;
    for stage in actions.iter() {
        let state = soc_idx * block + offset;
        let act = &stage[state * (n + 1)..(state + 1) * (n + 1)];
        debug_assert!(act[0] != u16::MAX, "optimal path hit an unsolved state");
        action_seq.push(act.to_vec());
        offset = act[..n]
            .iter()
            .enumerate()
            .map(|(i, &lvl)| lvl as usize * prob.strides[i])
            .sum();
        let mv = ess_move(&lat, soc_idx, act[n]);
        soc_idx = mv.next_soc as usize;
    }
    let solution = assemble_solution(&prob, soc0, &action_seq, v0, expanded, disc);
    Ok(DayOutcome::Solved(solution))
}

fn ess_move(lat: &Lattice, soc_idx: usize, ess_idx: u16) -> EssMove {
    *lat.ess_opts[soc_idx]
        .iter()
        .find(|m| m.ess_idx == ess_idx)
        .expect("replayed ESS move must be feasible")
}

fn assemble_solution(
    prob: &Problem<'_>,
    soc0: usize,
    action_seq: &[Vec<u16>],
    objective_value: f64,
    states_expanded: u64,
    disc: &Discretization,
) -> DPSolution {
    let lat = prob.lat;
    let n = prob.strides.len();
    let mut steps = Vec::with_capacity(action_seq.len());
    let mut soc_idx = soc0;
    let mut max_snap = 0.0f64;
    for (t, act) in action_seq.iter().enumerate() {
        let mut dg_on = Vec::with_capacity(n);
        let mut dg_power = Vec::with_capacity(n);
        let mut power = 0.0;
        let mut cost = 0.0;
        for i in 0..n {
            let lvl = act[i] as usize;
            dg_on.push(lvl != 0);
            dg_power.push(lat.dg_levels[i][lvl]);
            power += lat.dg_levels[i][lvl];
            cost += lat.dg_costs[i][lvl];
        }
        let mv = ess_move(lat, soc_idx, act[n]);
        let terms = step_terms(
            prob.slice.price[t],
            prob.slice.pv[t],
            prob.slice.load[t],
            power,
            cost,
            mv.power,
            prob.cfg,
        );
        max_snap = max_snap.max(mv.snap_err);
        soc_idx = mv.next_soc as usize;
        steps.push(ScheduleStep {
            dg_on,
            dg_power,
            ess_power: mv.power,
            grid_power: terms.grid_power,
            unbalance: terms.unbalance,
            step_cost: terms.step_cost,
            soc_after: lat.soc_levels[soc_idx],
        });
    }
    let schedule = Schedule {
        soc_init: lat.soc_levels[soc0],
        steps,
        soc_snap_tol: disc.soc_step * 0.5 + 1e-9,
    };
    DPSolution {
        total_cost: schedule.total_cost(),
        total_unbalance: schedule.total_unbalance(),
        schedule,
        objective_value,
        states_expanded,
        max_soc_snap_error: max_snap,
    }
}

/// Enumeration budget for [`brute_force_day`].
pub const BRUTE_FORCE_BUDGET: u64 = 10_000_000;

/// Exhaustive enumeration of every lattice schedule. Ties resolve to the
/// lexicographically smallest action index sequence, which coincides with the
/// induction's per-stage tie-break.
pub fn brute_force_day(
    slice: &DaySlice,
    cfg: &SystemConfig,
    disc: &Discretization,
    soc_init: f64,
    objective: Objective,
) -> Result<DayOutcome, OracleError> {
    let lat = build_lattice(cfg, disc)?;
    let prob = Problem::new(&lat, cfg, slice, objective);
    let n = cfg.num_dg();
    let (soc0, _) = nearest_level(&lat.soc_levels, soc_init);

    struct Dfs<'a, 'p> {
        prob: &'p Problem<'a>,
        nodes: u64,
    }

    impl Dfs<'_, '_> {
        /// Minimal cost-to-go plus its action sequence; None when no feasible
        /// completion exists. Sums are accumulated leaf-to-root so the value
        /// matches the induction bit for bit.
        fn go(
            &mut self,
            t: usize,
            soc_idx: usize,
            prev: &[u16],
        ) -> Result<Option<(f64, Vec<Vec<u16>>)>, OracleError> {
            if t == self.prob.cfg.horizon {
                return Ok(Some((0.0, Vec::new())));
            }
            let n = prev.len();
            let lat = self.prob.lat;
            let (price, pv, load) = (
                self.prob.slice.price[t],
                self.prob.slice.pv[t],
                self.prob.slice.load[t],
            );
            let reach: Vec<&[u16]> = (0..n)
                .map(|i| lat.dg_reach[i][prev[i] as usize].as_slice())
                .collect();
            let mut best: Option<(f64, Vec<Vec<u16>>)> = None;
            let mut cursor = vec![0usize; n];
            'outer: loop {
                let mut next = vec![0u16; n];
                let mut power = 0.0;
                let mut cost = 0.0;
                for i in 0..n {
                    let lvl = reach[i][cursor[i]];
                    next[i] = lvl;
                    power += lat.dg_levels[i][lvl as usize];
                    cost += lat.dg_costs[i][lvl as usize];
                }
                for mv in &lat.ess_opts[soc_idx] {
                    self.nodes += 1;
                    if self.nodes > BRUTE_FORCE_BUDGET {
                        return Err(OracleError::GuardExceeded {
                            budget: BRUTE_FORCE_BUDGET,
                        });
                    }
                    let terms = step_terms(price, pv, load, power, cost, mv.power, self.prob.cfg);
                    let Some(w) = stage_weight(&terms, self.prob.hard, self.prob.penalty_weight)
                    else {
                        continue;
                    };
                    if let Some((sub, sub_path)) = self.go(t + 1, mv.next_soc as usize, &next)? {
                        let val = w + sub;
                        if best.as_ref().is_none_or(|(b, _)| val < *b) {
                            let mut act = next.clone();
                            act.push(mv.ess_idx);
                            let mut path = Vec::with_capacity(sub_path.len() + 1);
                            path.push(act);
                            path.extend(sub_path);
                            best = Some((val, path));
                        }
                    }
                }
                let mut d = n;
                while d > 0 {
                    d -= 1;
                    cursor[d] += 1;
                    if cursor[d] < reach[d].len() {
                        continue 'outer;
                    }
                    cursor[d] = 0;
                }
                break;
            }
            Ok(best)
        }
    }

    let mut dfs = Dfs {
        prob: &prob,
        nodes: 0,
    };
    let prev0 = vec![0u16; n];
    match dfs.go(0, soc0, &prev0)? {
        None => Ok(DayOutcome::Infeasible {
            states_expanded: dfs.nodes,
        }),
        Some((best, path)) => {
            let solution = assemble_solution(&prob, soc0, &path, best, dfs.nodes, disc);
            Ok(DayOutcome::Solved(solution))
        }
    }
}

/// Recomputed totals and hard-constraint verdict for any schedule.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScheduleEval {
    pub total_cost: f64,
    pub total_unbalance: f64,
    pub feasible: bool,
}

impl ScheduleEval {
    /// The solver objective this schedule scores under `CostWithPenalty`.
    pub fn penalty_objective(&self, cfg: &SystemConfig) -> f64 {
        self.total_cost + cfg.sigma2 / cfg.sigma1 * self.total_unbalance
    }
}

const FEAS_EPS: f64 = 1e-9;

/// Recomputes costs and unbalance from first principles and checks every hard
/// constraint: commitment consistency, generation limits, ramps between
/// committed steps, storage power limit, SOC bounds, and the SOC law within
/// the schedule's snap tolerance. Power balance stays soft.
pub fn evaluate_schedule(
    schedule: &Schedule,
    slice: &DaySlice,
    cfg: &SystemConfig,
) -> Result<ScheduleEval, OracleError> {
    if schedule.steps.len() != cfg.horizon {
        return Err(OracleError::LengthMismatch {
            expected: cfg.horizon,
            got: schedule.steps.len(),
        });
    }
    let n = cfg.num_dg();
    let mut feasible = true;
    let mut total_cost = 0.0;
    let mut total_unbalance = 0.0;
    let mut prev_power = vec![0.0; n];
    let mut prev_soc = schedule.soc_init;
    if prev_soc < cfg.ess.e_min - FEAS_EPS || prev_soc > cfg.ess.e_max + FEAS_EPS {
        feasible = false;
    }
    for (t, step) in schedule.steps.iter().enumerate() {
        let mut power = 0.0;
        let mut cost = 0.0;
        for i in 0..n {
            let p = step.dg_power[i];
            let unit = &cfg.dg_units[i];
            if step.dg_on[i] {
                if p < unit.p_min - FEAS_EPS || p > unit.p_max + FEAS_EPS {
                    feasible = false;
                }
                if prev_power[i] > 0.0 {
                    let (lo, hi) = unit.ramp_window(prev_power[i]);
                    if p < lo - FEAS_EPS || p > hi + FEAS_EPS {
                        feasible = false;
                    }
                }
                cost += unit.a * p * p + unit.b * p + unit.c;
            } else if p != 0.0 {
                feasible = false;
            }
            power += p;
        }
        if step.ess_power.abs() > cfg.ess.p_limit + FEAS_EPS {
            feasible = false;
        }
        let expected_soc = soc_transition(&cfg.ess, prev_soc, step.ess_power, cfg.delta_t);
        if (step.soc_after - expected_soc).abs() > schedule.soc_snap_tol + FEAS_EPS {
            feasible = false;
        }
        if step.soc_after < cfg.ess.e_min - FEAS_EPS || step.soc_after > cfg.ess.e_max + FEAS_EPS {
            feasible = false;
        }
        let terms = step_terms(
            slice.price[t],
            slice.pv[t],
            slice.load[t],
            power,
            cost,
            step.ess_power,
            cfg,
        );
        total_cost += terms.step_cost;
        total_unbalance += terms.unbalance;
        prev_power.copy_from_slice(&step.dg_power);
        prev_soc = step.soc_after;
    }
    Ok(ScheduleEval {
        total_cost,
        total_unbalance,
        feasible,
    })
}

/// Sequentially snaps an arbitrary schedule onto the lattice, respecting
/// ramps and SOC feasibility step by step. The result is lattice-feasible, so
/// the solver's optimum bounds its objective from below.
pub fn project_schedule_to_lattice(
    schedule: &Schedule,
    slice: &DaySlice,
    cfg: &SystemConfig,
    disc: &Discretization,
) -> Result<Schedule, OracleError> {
    let lat = build_lattice(cfg, disc)?;
    let n = cfg.num_dg();
    let (soc0, _) = nearest_level(&lat.soc_levels, schedule.soc_init);
    let mut soc_idx = soc0;
    let mut prev_levels = vec![0u16; n];
    let mut steps = Vec::with_capacity(schedule.steps.len());
    for (t, step) in schedule.steps.iter().enumerate() {
        let mut levels = vec![0u16; n];
        let mut dg_on = Vec::with_capacity(n);
        let mut dg_power = Vec::with_capacity(n);
        let mut power = 0.0;
        let mut cost = 0.0;
        for i in 0..n {
            let reach = &lat.dg_reach[i][prev_levels[i] as usize];
            let lvl = if step.dg_on[i] {
                *reach
                    .iter()
                    .filter(|&&b| b != 0)
                    .min_by(|&&a, &&b| {
                        let da = (lat.dg_levels[i][a as usize] - step.dg_power[i]).abs();
                        let db = (lat.dg_levels[i][b as usize] - step.dg_power[i]).abs();
                        da.partial_cmp(&db).unwrap().then(a.cmp(&b))
                    })
                    .expect("committed window is never empty")
            } else {
                0
            };
            levels[i] = lvl;
            dg_on.push(lvl != 0);
            dg_power.push(lat.dg_levels[i][lvl as usize]);
            power += lat.dg_levels[i][lvl as usize];
            cost += lat.dg_costs[i][lvl as usize];
        }
        let mv = *lat.ess_opts[soc_idx]
            .iter()
            .min_by(|a, b| {
                let da = (a.power - step.ess_power).abs();
                let db = (b.power - step.ess_power).abs();
                da.partial_cmp(&db).unwrap().then(a.ess_idx.cmp(&b.ess_idx))
            })
            .expect("idle storage is always feasible");
        let terms = step_terms(
            slice.price[t],
            slice.pv[t],
            slice.load[t],
            power,
            cost,
            mv.power,
            cfg,
        );
        soc_idx = mv.next_soc as usize;
        prev_levels = levels;
        steps.push(ScheduleStep {
            dg_on,
            dg_power,
            ess_power: mv.power,
            grid_power: terms.grid_power,
            unbalance: terms.unbalance,
            step_cost: terms.step_cost,
            soc_after: lat.soc_levels[soc_idx],
        });
    }
    Ok(Schedule {
        soc_init: lat.soc_levels[soc0],
        steps,
        soc_snap_tol: disc.soc_step * 0.5 + 1e-9,
    })
}

/// Writes a schedule as CSV: hour, per-unit power, storage, grid, unbalance,
/// step cost.
pub fn write_schedule_csv(schedule: &Schedule, path: impl AsRef<Path>) -> std::io::Result<()> {
    let n = schedule.steps.first().map_or(0, |s| s.dg_power.len());
    let mut out = String::from("hour");
    for i in 1..=n {
        let _ = write!(out, ",dg{i}_kw");
    }
    out.push_str(",ess_kw,grid_kw,unbalance_kw,cost\n");
    for (t, step) in schedule.steps.iter().enumerate() {
        let _ = write!(out, "{t}");
        for p in &step.dg_power {
            let _ = write!(out, ",{}", crate::util::fmt_sig6(*p));
        }
        let _ = writeln!(
            out,
            ",{},{},{},{}",
            crate::util::fmt_sig6(step.ess_power),
            crate::util::fmt_sig6(step.grid_power),
            crate::util::fmt_sig6(step.unbalance),
            crate::util::fmt_sig6(step.step_cost),
        );
    }
    std::fs::write(path, out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{DGUnit, ESSUnit, GridLink, SocMode};

    fn tiny_cfg() -> SystemConfig {
        SystemConfig {
            dg_units: vec![DGUnit {
                a: 0.0034,
                b: 3.0,
                c: 30.0,
                p_min: 100.0,
                p_max: 100.0,
                ramp_up: 100.0,
                ramp_down: 100.0,
            }],
            ess: ESSUnit {
                p_limit: 10.0,
                e_min: 100.0,
                e_max: 500.0,
                efficiency: 0.9,
                soc_mode: SocMode::Literal,
            },
            grid: GridLink {
                p_exchange_max: 100.0,
                sell_coefficient: 0.5,
            },
            delta_t: 1.0,
            sigma1: 0.01,
            sigma2: 50.0,
            horizon: 1,
            commit_threshold: -0.9,
            include_time_feature: true,
            pv_scale: 400.0,
            load_scale: 1300.0,
        }
    }

    #[test]
    fn lattice_levels_match_spacing() {
        let cfg = SystemConfig::default();
        let disc = Discretization {
            dg_step: 35.0,
            ess_step: 50.0,
            soc_step: 100.0,
        };
        // ramps 100/100/200 are not multiples of 35 for unit 1? 100/35 is not
        // integral, so expect the configuration error.
        assert!(matches!(
            build_lattice(&cfg, &disc),
            Err(OracleError::RampOffGrid { unit: 0 })
        ));

        let mut cfg = cfg;
        for u in &mut cfg.dg_units {
            u.ramp_up = 140.0;
            u.ramp_down = 140.0;
        }
        let lat = build_lattice(&cfg, &disc).unwrap();
        assert_eq!(lat.dg_levels[0], vec![0.0, 10.0, 45.0, 80.0, 115.0, 150.0]);
        assert_eq!(lat.ess_levels, vec![-100.0, -50.0, 0.0, 50.0, 100.0]);
        assert_eq!(lat.soc_levels, vec![100.0, 200.0, 300.0, 400.0, 500.0]);
    }

    #[test]
    fn lattice_short_top_interval() {
        let mut cfg = tiny_cfg();
        cfg.dg_units[0].p_min = 10.0;
        cfg.dg_units[0].p_max = 150.0;
        let disc = Discretization {
            dg_step: 50.0,
            ess_step: 25.0,
            soc_step: 100.0,
        };
        let lat = build_lattice(&cfg, &disc).unwrap();
        // 10, 60, 110 then the short hop to 150.
        assert_eq!(lat.dg_levels[0], vec![0.0, 10.0, 60.0, 110.0, 150.0]);
    }

    #[test]
    fn one_step_commit_beats_expensive_import() {
        // Import at 5 $/kWh would cost 500; running the unit costs 364.
        let cfg = tiny_cfg();
        let disc = Discretization {
            dg_step: 100.0,
            ess_step: 50.0, // > p_limit, so storage stays idle
            soc_step: 400.0,
        };
        let slice = DaySlice::constant(0.0, 100.0, 5.0);
        let out = solve_day(&slice, &cfg, &disc, 300.0, Objective::CostWithPenalty)
            .unwrap()
            .expect_solution("one-step");
        assert!(out.schedule.steps[0].dg_on[0]);
        assert!((out.total_cost - 364.0).abs() < 1e-9);
        assert_eq!(out.total_unbalance, 0.0);
    }

    #[test]
    fn zero_demand_day_costs_nothing() {
        let mut cfg = tiny_cfg();
        cfg.horizon = 3;
        let disc = Discretization::default();
        let slice = DaySlice::constant(0.0, 0.0, 5.0);
        let out = solve_day(&slice, &cfg, &disc, 300.0, Objective::CostWithPenalty)
            .unwrap()
            .expect_solution("zero-demand");
        assert_eq!(out.total_cost, 0.0);
        assert_eq!(out.total_unbalance, 0.0);
        for step in &out.schedule.steps {
            assert!(!step.dg_on[0]);
            assert_eq!(step.ess_power, 0.0);
        }
    }

    #[test]
    fn hard_balance_reports_infeasible() {
        // Load far beyond generation plus the grid cap.
        let cfg = tiny_cfg();
        let disc = Discretization {
            dg_step: 100.0,
            ess_step: 50.0,
            soc_step: 400.0,
        };
        let slice = DaySlice::constant(0.0, 500.0, 1.0);
        let out = solve_day(&slice, &cfg, &disc, 300.0, Objective::CostHardBalance).unwrap();
        assert!(matches!(out, DayOutcome::Infeasible { .. }));
        let bf = brute_force_day(&slice, &cfg, &disc, 300.0, Objective::CostHardBalance).unwrap();
        assert!(matches!(bf, DayOutcome::Infeasible { .. }));
        // The penalty objective still returns a schedule.
        let pen = solve_day(&slice, &cfg, &disc, 300.0, Objective::CostWithPenalty).unwrap();
        assert!(pen.solution().is_some());
    }

    #[test]
    fn dp_equals_brute_force_on_two_step_toy() {
        let mut cfg = tiny_cfg();
        cfg.horizon = 2;
        cfg.dg_units[0].p_min = 50.0;
        cfg.dg_units[0].p_max = 150.0;
        cfg.ess.p_limit = 100.0;
        let disc = Discretization {
            dg_step: 50.0,
            ess_step: 50.0,
            soc_step: 50.0,
        };
        let mut slice = DaySlice::constant(0.0, 120.0, 2.0);
        slice.load[1] = 260.0;
        for objective in [Objective::CostWithPenalty, Objective::CostHardBalance] {
            let dp = solve_day(&slice, &cfg, &disc, 250.0, objective).unwrap();
            let bf = brute_force_day(&slice, &cfg, &disc, 250.0, objective).unwrap();
            match (dp, bf) {
                (DayOutcome::Solved(a), DayOutcome::Solved(b)) => {
                    assert_eq!(a.objective_value, b.objective_value, "{objective:?}");
                }
                (DayOutcome::Infeasible { .. }, DayOutcome::Infeasible { .. }) => {}
                other => panic!("outcome mismatch: {other:?}"),
            }
        }
    }

    #[test]
    fn sequential_matches_parallel() {
        let cfg = SystemConfig::default();
        let disc = Discretization {
            dg_step: 50.0,
            ess_step: 50.0,
            soc_step: 50.0,
        };
        let mut cfg = cfg;
        cfg.horizon = 6;
        let profile = crate::data::synthesize_profiles(3, 2).unwrap();
        let slice = profile.day(1).unwrap();
        let a = solve_day(&slice, &cfg, &disc, 250.0, Objective::CostWithPenalty)
            .unwrap()
            .expect_solution("par");
        let b = solve_day_sequential(&slice, &cfg, &disc, 250.0, Objective::CostWithPenalty)
            .unwrap()
            .expect_solution("seq");
        assert_eq!(a.objective_value, b.objective_value);
        assert_eq!(a.schedule, b.schedule);
    }

    #[test]
    fn brute_force_guard_trips() {
        let mut cfg = SystemConfig::default();
        cfg.horizon = 24;
        let disc = Discretization::default();
        let slice = DaySlice::constant(0.0, 500.0, 0.5);
        assert!(matches!(
            brute_force_day(&slice, &cfg, &disc, 250.0, Objective::CostWithPenalty),
            Err(OracleError::GuardExceeded { .. })
        ));
    }

    #[test]
    fn evaluate_schedule_self_consistency() {
        let mut cfg = tiny_cfg();
        cfg.horizon = 4;
        cfg.dg_units[0].p_min = 50.0;
        cfg.dg_units[0].p_max = 150.0;
        cfg.ess.p_limit = 100.0;
        let disc = Discretization {
            dg_step: 25.0,
            ess_step: 25.0,
            soc_step: 20.0,
        };
        let slice = DaySlice::constant(20.0, 180.0, 0.6);
        let sol = solve_day(&slice, &cfg, &disc, 250.0, Objective::CostWithPenalty)
            .unwrap()
            .expect_solution("toy");
        let eval = evaluate_schedule(&sol.schedule, &slice, &cfg).unwrap();
        assert!(eval.feasible, "oracle schedule must satisfy hard constraints");
        assert!((eval.total_cost - sol.total_cost).abs() < 1e-9);
        assert!((eval.total_unbalance - sol.total_unbalance).abs() < 1e-9);
    }

    #[test]
    fn evaluate_schedule_flags_violations() {
        let cfg = tiny_cfg();
        let slice = DaySlice::constant(0.0, 150.0, 0.5);
        // All-off schedule with load beyond the grid cap: positive unbalance
        // but still feasible, balance is soft.
        let all_off = Schedule {
            soc_init: 300.0,
            steps: vec![ScheduleStep {
                dg_on: vec![false],
                dg_power: vec![0.0],
                ess_power: 0.0,
                grid_power: 100.0,
                unbalance: 50.0,
                step_cost: 50.0,
                soc_after: 300.0,
            }],
            soc_snap_tol: 0.0,
        };
        let eval = evaluate_schedule(&all_off, &slice, &cfg).unwrap();
        assert!(eval.feasible);
        assert_eq!(eval.total_unbalance, 50.0);

        // Ramp violation across two committed steps.
        let mut cfg2 = tiny_cfg();
        cfg2.horizon = 2;
        cfg2.dg_units[0].p_min = 10.0;
        cfg2.dg_units[0].p_max = 300.0;
        cfg2.dg_units[0].ramp_up = 50.0;
        let bad = Schedule {
            soc_init: 300.0,
            steps: vec![
                ScheduleStep {
                    dg_on: vec![true],
                    dg_power: vec![10.0],
                    ess_power: 0.0,
                    grid_power: 0.0,
                    unbalance: 0.0,
                    step_cost: 0.0,
                    soc_after: 300.0,
                },
                ScheduleStep {
                    dg_on: vec![true],
                    dg_power: vec![300.0],
                    ess_power: 0.0,
                    grid_power: 0.0,
                    unbalance: 0.0,
                    step_cost: 0.0,
                    soc_after: 300.0,
                },
            ],
            soc_snap_tol: 0.0,
        };
        let slice2 = DaySlice::constant(0.0, 100.0, 0.5);
        let eval = evaluate_schedule(&bad, &slice2, &cfg2).unwrap();
        assert!(!eval.feasible);

        let wrong_len = Schedule {
            soc_init: 300.0,
            steps: vec![],
            soc_snap_tol: 0.0,
        };
        assert!(matches!(
            evaluate_schedule(&wrong_len, &slice, &cfg).unwrap_err(),
            OracleError::LengthMismatch { .. }
        ));
    }

    #[test]
    fn projection_yields_feasible_lattice_schedule() {
        let mut cfg = SystemConfig::default();
        cfg.horizon = 6;
        let disc = Discretization::default();
        let profile = crate::data::synthesize_profiles(9, 1).unwrap();
        let slice = profile.day(0).unwrap();
        // A deliberately off-lattice schedule.
        let steps: Vec<ScheduleStep> = (0..6)
            .map(|t| ScheduleStep {
                dg_on: vec![true, t % 2 == 0, false],
                dg_power: vec![37.3 + t as f64, if t % 2 == 0 { 91.1 } else { 0.0 }, 0.0],
                ess_power: 13.7 - t as f64 * 3.0,
                grid_power: 0.0,
                unbalance: 0.0,
                step_cost: 0.0,
                soc_after: 250.0,
            })
            .collect();
        let rough = Schedule {
            soc_init: 243.0,
            steps,
            soc_snap_tol: 1e9, // not meaningful for this synthetic input
        };
        let projected = project_schedule_to_lattice(&rough, &slice, &cfg, &disc).unwrap();
        let eval = evaluate_schedule(&projected, &slice, &cfg).unwrap();
        assert!(eval.feasible);
        // Projected powers sit on lattice levels.
        let lat = build_lattice(&cfg, &disc).unwrap();
        for step in &projected.steps {
            for (i, &p) in step.dg_power.iter().enumerate() {
                assert!(lat.dg_levels[i].iter().any(|&l| l == p));
            }
            assert!(lat.ess_levels.iter().any(|&l| l == step.ess_power));
        }
    }

    #[test]
    fn schedule_csv_has_expected_shape() {
        let cfg = tiny_cfg();
        let disc = Discretization {
            dg_step: 100.0,
            ess_step: 50.0,
            soc_step: 400.0,
        };
        let slice = DaySlice::constant(0.0, 100.0, 5.0);
        let sol = solve_day(&slice, &cfg, &disc, 300.0, Objective::CostWithPenalty)
            .unwrap()
            .expect_solution("csv");
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("sched.csv");
        write_schedule_csv(&sol.schedule, &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let mut lines = text.lines();
        assert_eq!(
            lines.next().unwrap(),
            "hour,dg1_kw,ess_kw,grid_kw,unbalance_kw,cost"
        );
        assert_eq!(lines.count(), 1);
    }
}
