//! Deterministic episodic microgrid environment.
//!
//! One episode is a 24-step day. The agent picks normalized setpoints for the
//! dispatchable generators and the storage unit; the environment projects them
//! onto the feasible set (commitment, capacity, ramp, storage bounds), settles
//! the residual against the grid link up to its exchange limit, and returns a
//! reward that trades operating cost against the remaining power unbalance.
//!
//! Everything except the power balance is enforced as a hard constraint by
//! projection; the balance itself is soft and penalized in the reward.

pub mod config;

use crate::data::DaySlice;

#[derive(Debug, thiserror::Error)]
pub enum EnvError {
    #[error("DG unit {unit}: power {power} outside committed range [{lo}, {hi}]")]
    PowerOutOfRange {
        unit: usize,
        power: f64,
        lo: f64,
        hi: f64,
    },
    #[error("DG unit {unit}: committed-off unit has nonzero power {power}")]
    OffUnitNonzeroPower { unit: usize, power: f64 },
    #[error("state of charge {soc} outside [{lo}, {hi}]")]
    SocOutOfBounds { soc: f64, lo: f64, hi: f64 },
    #[error("episode already finished (t = horizon)")]
    EpisodeFinished,
    #[error("invalid system configuration: {0}")]
    BadConfig(String),
}

/// Dispatchable generator with quadratic fuel cost and ramp limits.
#[derive(Debug, Clone, PartialEq)]
pub struct DGUnit {
    /// Quadratic cost coefficient, $/kW^2 h.
    pub a: f64,
    /// Linear cost coefficient, $/kWh.
    pub b: f64,
    /// Fixed cost while committed, $/h.
    pub c: f64,
    pub p_min: f64,
    pub p_max: f64,
    pub ramp_up: f64,
    pub ramp_down: f64,
}

impl DGUnit {
    fn validate(&self, idx: usize) -> Result<(), EnvError> {
        let ok = self.p_min >= 0.0
            && self.p_min <= self.p_max
            && self.a >= 0.0
            && self.ramp_up > 0.0
            && self.ramp_down > 0.0;
        if ok {
            Ok(())
        } else {
            Err(EnvError::BadConfig(format!("DG unit {idx} violates 0 <= p_min <= p_max, a >= 0, ramps > 0")))
        }
    }

    /// Ramp window for a transition between two committed steps.
    pub fn ramp_window(&self, prev_power: f64) -> (f64, f64) {
        (
            (prev_power - self.ramp_down).max(self.p_min),
            (prev_power + self.ramp_up).min(self.p_max),
        )
    }
}

/// How storage efficiency enters the SOC update.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SocMode {
    /// Efficiency multiplies the power for both charge and discharge.
    Literal,
    /// Efficiency multiplies charging; discharging divides by it.
    Physical,
}

/// Battery storage with symmetric power limit and capacity bounds.
#[derive(Debug, Clone, PartialEq)]
pub struct ESSUnit {
    pub p_limit: f64,
    pub e_min: f64,
    pub e_max: f64,
    pub efficiency: f64,
    pub soc_mode: SocMode,
}

impl ESSUnit {
    fn validate(&self) -> Result<(), EnvError> {
        let ok = self.e_min >= 0.0
            && self.e_min < self.e_max
            && self.efficiency > 0.0
            && self.efficiency <= 1.0
            && self.p_limit > 0.0;
        if ok {
            Ok(())
        } else {
            Err(EnvError::BadConfig(
                "ESS violates 0 <= e_min < e_max, 0 < efficiency <= 1, p_limit > 0".into(),
            ))
        }
    }
}

/// Connection to the main grid: exchange limit and sell-back coefficient.
#[derive(Debug, Clone, PartialEq)]
pub struct GridLink {
    pub p_exchange_max: f64,
    /// Fraction of the purchase price paid for exports, in [0, 1].
    pub sell_coefficient: f64,
}

impl GridLink {
    fn validate(&self) -> Result<(), EnvError> {
        if self.p_exchange_max > 0.0 && (0.0..=1.0).contains(&self.sell_coefficient) {
            Ok(())
        } else {
            Err(EnvError::BadConfig(
                "grid violates p_exchange_max > 0, sell_coefficient in [0,1]".into(),
            ))
        }
    }
}

/// All physical and reward parameters of the system.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemConfig {
    pub dg_units: Vec<DGUnit>,
    pub ess: ESSUnit,
    pub grid: GridLink,
    /// Step length in hours.
    pub delta_t: f64,
    /// Reward scale on the cost term.
    pub sigma1: f64,
    /// Penalty coefficient on the power unbalance.
    pub sigma2: f64,
    /// Steps per episode, at most 24.
    pub horizon: usize,
    /// Normalized DG action below this value switches the unit off.
    pub commit_threshold: f64,
    pub include_time_feature: bool,
    /// Min-max normalization scale for the PV observation feature
    /// (typically the profile's PV maximum).
    pub pv_scale: f64,
    /// Min-max normalization scale for the load observation feature.
    pub load_scale: f64,
}

impl Default for SystemConfig {
    /// Three-generator system with a 100 kW / 500 kWh battery and a 100 kW
    /// grid link; sell-back at half price, sigma1 = 0.01, sigma2 = 50.
    fn default() -> Self {
        Self {
            dg_units: vec![
                DGUnit {
                    a: 0.0034,
                    b: 3.0,
                    c: 30.0,
                    p_min: 10.0,
                    p_max: 150.0,
                    ramp_up: 100.0,
                    ramp_down: 100.0,
                },
                DGUnit {
                    a: 0.001,
                    b: 10.0,
                    c: 40.0,
                    p_min: 50.0,
                    p_max: 375.0,
                    ramp_up: 100.0,
                    ramp_down: 100.0,
                },
                DGUnit {
                    a: 0.001,
                    b: 15.0,
                    c: 70.0,
                    p_min: 100.0,
                    p_max: 500.0,
                    ramp_up: 200.0,
                    ramp_down: 200.0,
                },
            ],
            ess: ESSUnit {
                p_limit: 100.0,
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
            horizon: 24,
            commit_threshold: -0.9,
            include_time_feature: true,
            pv_scale: 400.0,
            load_scale: 1300.0,
        }
    }
}

impl SystemConfig {
    pub fn validate(&self) -> Result<(), EnvError> {
        if self.dg_units.is_empty() {
            return Err(EnvError::BadConfig("at least one DG unit required".into()));
        }
        for (i, dg) in self.dg_units.iter().enumerate() {
            dg.validate(i)?;
        }
        self.ess.validate()?;
        self.grid.validate()?;
        let ok = self.delta_t > 0.0
            && self.sigma1 > 0.0
            && self.sigma2 >= 0.0
            && (1..=crate::data::HOURS_PER_DAY).contains(&self.horizon)
            && self.commit_threshold > -1.0
            && self.commit_threshold < 1.0;
        if ok {
            Ok(())
        } else {
            Err(EnvError::BadConfig(
                "require delta_t > 0, sigma1 > 0, sigma2 >= 0, 1 <= horizon <= 24, commit_threshold in (-1,1)".into(),
            ))
        }
    }

    /// Sets the observation scales from a profile's maxima.
    pub fn with_profile_scales(mut self, profile: &crate::data::Profile) -> Self {
        self.pv_scale = profile.max_pv().max(1e-9);
        self.load_scale = profile.max_load().max(1e-9);
        self
    }

    pub fn num_dg(&self) -> usize {
        self.dg_units.len()
    }

    /// Observation vector length produced by [`observe`].
    pub fn obs_dim(&self) -> usize {
        3 + self.num_dg() + usize::from(self.include_time_feature)
    }

    /// Action vector length: one entry per DG plus the ESS.
    pub fn action_dim(&self) -> usize {
        self.num_dg() + 1
    }
}

/// MDP state: step index, current exogenous PV/load, previous DG powers, SOC.
#[derive(Debug, Clone, PartialEq)]
pub struct EnvState {
    pub t: usize,
    pub pv: f64,
    pub load: f64,
    pub prev_dg_power: Vec<f64>,
    pub soc: f64,
}

/// Normalized agent action, all entries in [-1, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct RawAction {
    pub dg: Vec<f64>,
    pub ess: f64,
}

impl RawAction {
    /// Splits a flat vector (DG entries first, ESS last), clamping every
    /// entry into [-1, 1].
    pub fn from_vec(v: &[f64], num_dg: usize) -> Self {
        assert_eq!(v.len(), num_dg + 1, "action vector length mismatch");
        Self {
            dg: v[..num_dg].iter().map(|x| x.clamp(-1.0, 1.0)).collect(),
            ess: v[num_dg].clamp(-1.0, 1.0),
        }
    }
}

/// Feasible action after projection: per-unit commitment and power, plus the
/// storage setpoint (positive = charging).
#[derive(Debug, Clone, PartialEq)]
pub struct AppliedAction {
    pub dg_power: Vec<f64>,
    pub dg_on: Vec<bool>,
    pub ess_power: f64,
}

/// One transition's outputs.
#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub next_state: EnvState,
    pub reward: f64,
    /// Total DG operating cost over the step, $/h.
    pub dg_cost: f64,
    /// Grid transaction cost (negative = revenue), $/h.
    pub exchange_cost: f64,
    /// Grid exchange, kW, positive = import.
    pub grid_power: f64,
    /// Unserved residual after the grid limit, kW.
    pub unbalance: f64,
    pub done: bool,
}

/// Quadratic operating cost of one DG unit. Committed-off units cost nothing
/// and must sit at zero power.
pub fn dg_cost(unit: &DGUnit, p: f64, on: bool) -> Result<f64, EnvError> {
    if !on {
        if p != 0.0 {
            return Err(EnvError::OffUnitNonzeroPower { unit: 0, power: p });
        }
        return Ok(0.0);
    }
    if p < unit.p_min || p > unit.p_max {
        return Err(EnvError::PowerOutOfRange {
            unit: 0,
            power: p,
            lo: unit.p_min,
            hi: unit.p_max,
        });
    }
    Ok(unit.a * p * p + unit.b * p + unit.c)
}

/// Grid transaction cost at the given price: imports pay full price, exports
/// earn the sell-back fraction.
pub fn exchange_cost(price: f64, grid_power: f64, sell_coefficient: f64) -> f64 {
    if grid_power > 0.0 {
        price * grid_power
    } else if grid_power < 0.0 {
        sell_coefficient * price * grid_power
    } else {
        0.0
    }
}

/// State-of-charge update. `Literal` applies the efficiency to both signs;
/// `Physical` applies it to charging and its inverse to discharging. The
/// result is not clipped; feasibility is the projection's job.
pub fn soc_transition(ess: &ESSUnit, soc: f64, ess_power: f64, delta_t: f64) -> f64 {
    match ess.soc_mode {
        SocMode::Literal => soc + ess.efficiency * ess_power * delta_t,
        SocMode::Physical => {
            if ess_power >= 0.0 {
                soc + ess.efficiency * ess_power * delta_t
            } else {
                soc + ess_power * delta_t / ess.efficiency
            }
        }
    }
}

/// Largest storage setpoint magnitude-compatible with the SOC bounds,
/// starting from `desired`. Nudges by ULPs so the resulting transition is
/// in-bounds under floating-point arithmetic, not just in exact math.
fn clip_ess_power(ess: &ESSUnit, soc: f64, desired: f64, delta_t: f64) -> f64 {
    let span = ess.efficiency * delta_t;
    let (lo, hi) = match ess.soc_mode {
        SocMode::Literal => ((ess.e_min - soc) / span, (ess.e_max - soc) / span),
        SocMode::Physical => (
            (ess.e_min - soc) * ess.efficiency / delta_t,
            (ess.e_max - soc) / span,
        ),
    };
    let mut p = desired.clamp(lo.min(0.0), hi.max(0.0));
    loop {
        let next = soc_transition(ess, soc, p, delta_t);
        if next >= ess.e_min && next <= ess.e_max {
            return p;
        }
        // Rounding pushed the transition out by an ULP; step toward idle.
        p = if p > 0.0 {
            f64::from_bits(p.to_bits() - 1)
        } else if p < 0.0 {
            -f64::from_bits((-p).to_bits() - 1)
        } else {
            return 0.0;
        };
    }
}

/// Maps a normalized action onto the feasible set. Total: every raw action in
/// [-1, 1] yields a feasible applied action.
///
/// Per DG: below the commit threshold the unit is off; otherwise the entry is
/// mapped affinely onto [p_min, p_max] and, when the unit was already
/// committed, clipped into the ramp window. Commitment toggling is exempt
/// from ramps. The ESS entry maps onto [-p_limit, p_limit] and is clipped so
/// the SOC transition stays within capacity.
pub fn project_action(raw: &RawAction, state: &EnvState, cfg: &SystemConfig) -> AppliedAction {
    let n = cfg.num_dg();
    assert_eq!(raw.dg.len(), n, "raw action has wrong DG count");
    let mut dg_power = Vec::with_capacity(n);
    let mut dg_on = Vec::with_capacity(n);
    for (i, unit) in cfg.dg_units.iter().enumerate() {
        let r = raw.dg[i].clamp(-1.0, 1.0);
        if r < cfg.commit_threshold {
            dg_on.push(false);
            dg_power.push(0.0);
            continue;
        }
        let mut p = unit.p_min + (r + 1.0) * 0.5 * (unit.p_max - unit.p_min);
        p = p.clamp(unit.p_min, unit.p_max);
        let prev = state.prev_dg_power[i];
        if prev > 0.0 {
            let (lo, hi) = unit.ramp_window(prev);
            p = p.clamp(lo, hi);
        }
        dg_on.push(true);
        dg_power.push(p);
    }
    let desired = raw.ess.clamp(-1.0, 1.0) * cfg.ess.p_limit;
    let ess_power = clip_ess_power(&cfg.ess, state.soc, desired, cfg.delta_t);
    AppliedAction {
        dg_power,
        dg_on,
        ess_power,
    }
}

/// Settles the residual against the grid: exchange is clamped to the link
/// limit and whatever remains is the unbalance.
pub fn grid_exchange(residual: f64, grid: &GridLink) -> (f64, f64) {
    let grid_power = residual.clamp(-grid.p_exchange_max, grid.p_exchange_max);
    let unbalance = (residual - grid_power).abs();
    (grid_power, unbalance)
}

/// Residual demand seen by the grid: load plus charging minus generation.
pub fn residual_demand(state: &EnvState, applied: &AppliedAction) -> f64 {
    let dg_total: f64 = applied.dg_power.iter().sum();
    state.load + applied.ess_power - dg_total - state.pv
}

/// Advances the MDP one step, returning the applied action alongside the
/// outcome.
pub fn step_applied(
    state: &EnvState,
    raw: &RawAction,
    slice: &DaySlice,
    cfg: &SystemConfig,
) -> Result<(StepOutcome, AppliedAction), EnvError> {
    if state.t >= cfg.horizon {
        return Err(EnvError::EpisodeFinished);
    }
    let applied = project_action(raw, state, cfg);
    let residual = residual_demand(state, &applied);
    let (grid_power, unbalance) = grid_exchange(residual, &cfg.grid);

    let mut dg_total = 0.0;
    for (i, unit) in cfg.dg_units.iter().enumerate() {
        dg_total += dg_cost(unit, applied.dg_power[i], applied.dg_on[i])
            .map_err(|e| tag_unit(e, i))?;
    }
    let price = slice.price[state.t];
    let exch = exchange_cost(price, grid_power, cfg.grid.sell_coefficient);
    let reward = -cfg.sigma1 * (dg_total + exch) * cfg.delta_t - cfg.sigma2 * unbalance;

    let soc = soc_transition(&cfg.ess, state.soc, applied.ess_power, cfg.delta_t)
        .clamp(cfg.ess.e_min, cfg.ess.e_max);
    let t_next = state.t + 1;
    let done = t_next == cfg.horizon;
    let (pv, load) = if done {
        (0.0, 0.0)
    } else {
        (slice.pv[t_next], slice.load[t_next])
    };
    let next_state = EnvState {
        t: t_next,
        pv,
        load,
        prev_dg_power: applied.dg_power.clone(),
        soc,
    };
    Ok((
        StepOutcome {
            next_state,
            reward,
            dg_cost: dg_total,
            exchange_cost: exch,
            grid_power,
            unbalance,
            done,
        },
        applied,
    ))
}

fn tag_unit(e: EnvError, i: usize) -> EnvError {
    match e {
        EnvError::PowerOutOfRange { power, lo, hi, .. } => EnvError::PowerOutOfRange {
            unit: i,
            power,
            lo,
            hi,
        },
        EnvError::OffUnitNonzeroPower { power, .. } => {
            EnvError::OffUnitNonzeroPower { unit: i, power }
        }
        other => other,
    }
}

/// Advances the MDP one step.
pub fn step(
    state: &EnvState,
    raw: &RawAction,
    slice: &DaySlice,
    cfg: &SystemConfig,
) -> Result<StepOutcome, EnvError> {
    step_applied(state, raw, slice, cfg).map(|(o, _)| o)
}

/// Initial state for an episode: hour 0 exogenous data, all units off, the
/// given state of charge.
pub fn reset(slice: &DaySlice, soc_init: f64, cfg: &SystemConfig) -> Result<EnvState, EnvError> {
    if soc_init < cfg.ess.e_min || soc_init > cfg.ess.e_max {
        return Err(EnvError::SocOutOfBounds {
            soc: soc_init,
            lo: cfg.ess.e_min,
            hi: cfg.ess.e_max,
        });
    }
    Ok(EnvState {
        t: 0,
        pv: slice.pv[0],
        load: slice.load[0],
        prev_dg_power: vec![0.0; cfg.num_dg()],
        soc: soc_init,
    })
}

/// Min-max normalized feature vector:
/// `[pv, load, prev_dg_power.., soc]` plus the episode fraction when the time
/// feature is enabled.
pub fn observe(state: &EnvState, cfg: &SystemConfig) -> Vec<f64> {
    let mut v = Vec::with_capacity(cfg.obs_dim());
    v.push(state.pv / cfg.pv_scale.max(1e-9));
    v.push(state.load / cfg.load_scale.max(1e-9));
    for (i, unit) in cfg.dg_units.iter().enumerate() {
        v.push(state.prev_dg_power[i] / unit.p_max.max(1e-9));
    }
    v.push(state.soc / cfg.ess.e_max.max(1e-9));
    if cfg.include_time_feature {
        v.push(state.t as f64 / cfg.horizon as f64);
    }
    v
}

/// Checks every applied-action invariant against the state it was projected
/// from, using the same window arithmetic as the projection.
pub fn validate_applied(
    applied: &AppliedAction,
    state: &EnvState,
    cfg: &SystemConfig,
) -> Result<(), EnvError> {
    for (i, unit) in cfg.dg_units.iter().enumerate() {
        let p = applied.dg_power[i];
        if !applied.dg_on[i] {
            if p != 0.0 {
                return Err(EnvError::OffUnitNonzeroPower { unit: i, power: p });
            }
            continue;
        }
        let prev = state.prev_dg_power[i];
        let (lo, hi) = if prev > 0.0 {
            unit.ramp_window(prev)
        } else {
            (unit.p_min, unit.p_max)
        };
        if p < lo || p > hi || p < unit.p_min || p > unit.p_max {
            return Err(EnvError::PowerOutOfRange {
                unit: i,
                power: p,
                lo,
                hi,
            });
        }
    }
    if applied.ess_power.abs() > cfg.ess.p_limit {
        return Err(EnvError::BadConfig(format!(
            "ess power {} exceeds limit {}",
            applied.ess_power, cfg.ess.p_limit
        )));
    }
    let next_soc = soc_transition(&cfg.ess, state.soc, applied.ess_power, cfg.delta_t);
    if next_soc < cfg.ess.e_min || next_soc > cfg.ess.e_max {
        return Err(EnvError::SocOutOfBounds {
            soc: next_soc,
            lo: cfg.ess.e_min,
            hi: cfg.ess.e_max,
        });
    }
    Ok(())
}

/// Owned episode wrapper over the stateless step functions.
#[derive(Debug, Clone)]
pub struct Microgrid<'a> {
    cfg: &'a SystemConfig,
    slice: DaySlice,
    state: EnvState,
}

impl<'a> Microgrid<'a> {
    pub fn reset(cfg: &'a SystemConfig, slice: DaySlice, soc_init: f64) -> Result<Self, EnvError> {
        let state = reset(&slice, soc_init, cfg)?;
        Ok(Self { cfg, slice, state })
    }

    pub fn state(&self) -> &EnvState {
        &self.state
    }

    pub fn slice(&self) -> &DaySlice {
        &self.slice
    }

    pub fn observe(&self) -> Vec<f64> {
        observe(&self.state, self.cfg)
    }

    pub fn done(&self) -> bool {
        self.state.t >= self.cfg.horizon
    }

    pub fn step(&mut self, raw: &RawAction) -> Result<StepOutcome, EnvError> {
        let (outcome, _) = self.step_applied(raw)?;
        Ok(outcome)
    }

    pub fn step_applied(
        &mut self,
        raw: &RawAction,
    ) -> Result<(StepOutcome, AppliedAction), EnvError> {
        let (outcome, applied) = step_applied(&self.state, raw, &self.slice, self.cfg)?;
        self.state = outcome.next_state.clone();
        Ok((outcome, applied))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn cfg() -> SystemConfig {
        SystemConfig::default()
    }

    fn state_at(cfg: &SystemConfig, soc: f64) -> EnvState {
        EnvState {
            t: 0,
            pv: 50.0,
            load: 400.0,
            prev_dg_power: vec![0.0; cfg.num_dg()],
            soc,
        }
    }

    #[test]
    fn dg_cost_matches_quadratic_model() {
        let cfg = cfg();
        let dg1 = &cfg.dg_units[0];
        assert!((dg_cost(dg1, 10.0, true).unwrap() - 60.34).abs() < 1e-9);
        assert!((dg_cost(dg1, 150.0, true).unwrap() - 556.5).abs() < 1e-9);
        assert_eq!(dg_cost(dg1, 0.0, false).unwrap(), 0.0);
    }

    #[test]
    fn dg_cost_rejects_out_of_range() {
        let cfg = cfg();
        let dg1 = &cfg.dg_units[0];
        assert!(dg_cost(dg1, 5.0, true).is_err());
        assert!(dg_cost(dg1, 151.0, true).is_err());
        assert!(dg_cost(dg1, 1.0, false).is_err());
    }

    #[test]
    fn dg_cost_is_increasing_on_range() {
        let cfg = cfg();
        for unit in &cfg.dg_units {
            let mut prev = f64::NEG_INFINITY;
            let mut p = unit.p_min;
            while p <= unit.p_max {
                let c = dg_cost(unit, p, true).unwrap();
                assert!(c > prev);
                prev = c;
                p += 1.0;
            }
        }
    }

    #[test]
    fn exchange_cost_examples() {
        assert!((exchange_cost(0.5, 100.0, 0.5) - 50.0).abs() < 1e-12);
        assert!((exchange_cost(0.5, -100.0, 0.5) + 25.0).abs() < 1e-12);
        assert_eq!(exchange_cost(0.5, 0.0, 0.5), 0.0);
    }

    #[test]
    fn soc_transition_modes() {
        let cfg = cfg();
        assert!((soc_transition(&cfg.ess, 250.0, 100.0, 1.0) - 340.0).abs() < 1e-12);
        assert!((soc_transition(&cfg.ess, 250.0, -100.0, 1.0) - 160.0).abs() < 1e-12);
        assert_eq!(soc_transition(&cfg.ess, 250.0, 0.0, 1.0), 250.0);

        let mut phys = cfg.ess.clone();
        phys.soc_mode = SocMode::Physical;
        assert!((soc_transition(&phys, 250.0, 100.0, 1.0) - 340.0).abs() < 1e-12);
        assert!(
            (soc_transition(&phys, 250.0, -90.0, 1.0) - 150.0).abs() < 1e-12,
            "discharge divides by efficiency"
        );
    }

    #[test]
    fn projection_commit_threshold() {
        let cfg = cfg();
        let state = state_at(&cfg, 250.0);
        let raw = RawAction {
            dg: vec![-1.0, -0.95, -0.9],
            ess: 0.0,
        };
        let applied = project_action(&raw, &state, &cfg);
        assert!(!applied.dg_on[0]);
        assert!(!applied.dg_on[1]);
        assert!(applied.dg_on[2], "at the threshold counts as committed");
        assert_eq!(applied.dg_power[0], 0.0);
        // -0.9 maps affinely onto [100, 500]: 100 + 0.05 * 400.
        assert!((applied.dg_power[2] - 120.0).abs() < 1e-12);
    }

    #[test]
    fn projection_clips_ess_to_capacity() {
        let cfg = cfg();
        let state = state_at(&cfg, 480.0);
        let raw = RawAction {
            dg: vec![-1.0; 3],
            ess: 1.0,
        };
        let applied = project_action(&raw, &state, &cfg);
        assert!((applied.ess_power - 20.0 / 0.9).abs() < 1e-9);
        let next = soc_transition(&cfg.ess, state.soc, applied.ess_power, cfg.delta_t);
        assert!(next <= cfg.ess.e_max);
    }

    #[test]
    fn projection_applies_ramp_between_committed_steps() {
        let cfg = cfg();
        let mut state = state_at(&cfg, 250.0);
        state.prev_dg_power[1] = 50.0;
        let raw = RawAction {
            dg: vec![-1.0, 1.0, -1.0],
            ess: 0.0,
        };
        let applied = project_action(&raw, &state, &cfg);
        assert!((applied.dg_power[1] - 150.0).abs() < 1e-12, "clipped to prev + ramp_up");

        // From off, the same action jumps straight to p_max.
        state.prev_dg_power[1] = 0.0;
        let applied = project_action(&raw, &state, &cfg);
        assert!((applied.dg_power[1] - 375.0).abs() < 1e-12);
    }

    #[test]
    fn grid_exchange_clamps_and_reports_excess() {
        let grid = cfg().grid;
        assert_eq!(grid_exchange(150.0, &grid), (100.0, 50.0));
        assert_eq!(grid_exchange(-150.0, &grid), (-100.0, 50.0));
        assert_eq!(grid_exchange(0.0, &grid), (0.0, 0.0));
        assert_eq!(grid_exchange(80.0, &grid), (80.0, 0.0));
    }

    #[test]
    fn reset_validates_soc() {
        let cfg = cfg();
        let slice = DaySlice::constant(10.0, 20.0, 0.3);
        let s = reset(&slice, cfg.ess.e_min, &cfg).unwrap();
        assert_eq!(s.soc, cfg.ess.e_min);
        assert_eq!(s.t, 0);
        assert_eq!(s.pv, 10.0);
        assert_eq!(s.load, 20.0);
        assert!(s.prev_dg_power.iter().all(|&p| p == 0.0));
        assert!(reset(&slice, cfg.ess.e_max + 1.0, &cfg).is_err());
    }

    #[test]
    fn reset_echoes_synthetic_day_zero() {
        let profile = crate::data::synthesize_profiles(1, 2).unwrap();
        let slice = profile.day(0).unwrap();
        let cfg = cfg();
        let s = reset(&slice, 250.0, &cfg).unwrap();
        assert_eq!(s.pv, profile.pv()[0]);
        assert_eq!(s.load, profile.load()[0]);
    }

    #[test]
    fn observe_normalization_and_time_feature() {
        let mut cfg = cfg();
        cfg.include_time_feature = true;
        let slice = DaySlice::constant(0.0, 0.0, 0.3);
        let mut s = reset(&slice, cfg.ess.e_max, &cfg).unwrap();
        let v = observe(&s, &cfg);
        assert_eq!(v.len(), cfg.obs_dim());
        assert_eq!(v[2 + cfg.num_dg()], 1.0, "soc at e_max normalizes to 1");
        s.soc = cfg.ess.e_min;
        s.t = 12;
        let v = observe(&s, &cfg);
        assert!((v[2 + cfg.num_dg()] - cfg.ess.e_min / cfg.ess.e_max).abs() < 1e-12);
        assert_eq!(*v.last().unwrap(), 0.5);
    }

    #[test]
    fn step_reward_decomposition_examples() {
        // Construct a step whose cost is exactly 500 $ and unbalance 0:
        // all DGs off, no PV, load 80 (grid imports 80), price 6.25.
        let mut cfg = cfg();
        cfg.sigma2 = 50.0;
        let slice = DaySlice::constant(0.0, 80.0, 6.25);
        let state = reset(&slice, 250.0, &cfg).unwrap();
        let raw = RawAction {
            dg: vec![-1.0; 3],
            ess: 0.0,
        };
        let out = step(&state, &raw, &slice, &cfg).unwrap();
        assert!((out.exchange_cost - 500.0).abs() < 1e-9);
        assert_eq!(out.unbalance, 0.0);
        assert!((out.reward + 5.0).abs() < 1e-9);

        // Load 110: grid clamps at 100, unbalance 10, cost 100 * 6.25 = 625.
        let slice = DaySlice::constant(0.0, 110.0, 6.25);
        let state = reset(&slice, 250.0, &cfg).unwrap();
        let out = step(&state, &raw, &slice, &cfg).unwrap();
        assert_eq!(out.unbalance, 10.0);
        assert!((out.reward - (-0.01 * 625.0 - 50.0 * 10.0)).abs() < 1e-9);
    }

    #[test]
    fn step_zero_demand_zero_reward() {
        let cfg = cfg();
        let slice = DaySlice::constant(0.0, 0.0, 0.5);
        let state = reset(&slice, 250.0, &cfg).unwrap();
        let raw = RawAction {
            dg: vec![-1.0; 3],
            ess: 0.0,
        };
        let out = step(&state, &raw, &slice, &cfg).unwrap();
        assert_eq!(out.reward, 0.0);
        assert_eq!(out.grid_power, 0.0);
    }

    #[test]
    fn step_rejects_finished_episode() {
        let cfg = cfg();
        let slice = DaySlice::constant(0.0, 0.0, 0.5);
        let mut state = reset(&slice, 250.0, &cfg).unwrap();
        state.t = cfg.horizon;
        let raw = RawAction {
            dg: vec![-1.0; 3],
            ess: 0.0,
        };
        assert!(matches!(
            step(&state, &raw, &slice, &cfg).unwrap_err(),
            EnvError::EpisodeFinished
        ));
    }

    #[test]
    fn episode_runs_to_done() {
        let cfg = cfg();
        let slice = DaySlice::constant(50.0, 300.0, 0.4);
        let mut env = Microgrid::reset(&cfg, slice, 250.0).unwrap();
        let raw = RawAction {
            dg: vec![0.0; 3],
            ess: 0.3,
        };
        let mut steps = 0;
        while !env.done() {
            let out = env.step(&raw).unwrap();
            steps += 1;
            assert_eq!(out.done, steps == cfg.horizon);
        }
        assert_eq!(steps, cfg.horizon);
        assert!(env.step(&raw).is_err());
    }

    #[test]
    fn determinism_bitwise() {
        let cfg = cfg();
        let slice = DaySlice::constant(35.0, 410.0, 0.5);
        let state = reset(&slice, 333.0, &cfg).unwrap();
        let raw = RawAction {
            dg: vec![0.17, -0.4, 0.92],
            ess: -0.66,
        };
        let a = step(&state, &raw, &slice, &cfg).unwrap();
        let b = step(&state, &raw, &slice, &cfg).unwrap();
        assert_eq!(a, b);
    }

    /// Randomized feasibility sweep; mirrors the larger acceptance fuzz.
    #[test]
    fn projection_fuzz_is_exactly_feasible() {
        let cfg = cfg();
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        for _ in 0..2000 {
            let soc = rng.random_range(cfg.ess.e_min..=cfg.ess.e_max);
            let mut state = state_at(&cfg, soc);
            for (i, unit) in cfg.dg_units.iter().enumerate() {
                state.prev_dg_power[i] = if rng.random::<f64>() < 0.4 {
                    0.0
                } else {
                    rng.random_range(unit.p_min..=unit.p_max)
                };
            }
            let raw = RawAction {
                dg: (0..3).map(|_| rng.random_range(-1.0..=1.0)).collect(),
                ess: rng.random_range(-1.0..=1.0),
            };
            let applied = project_action(&raw, &state, &cfg);
            validate_applied(&applied, &state, &cfg).unwrap();
        }
    }

    #[test]
    fn energy_accounting_closes() {
        let cfg = cfg();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let slice = DaySlice::constant(60.0, 700.0, 0.5);
        for _ in 0..500 {
            let state = EnvState {
                t: 0,
                pv: rng.random_range(0.0..400.0),
                load: rng.random_range(0.0..1500.0),
                prev_dg_power: vec![0.0; 3],
                soc: rng.random_range(cfg.ess.e_min..=cfg.ess.e_max),
            };
            let raw = RawAction {
                dg: (0..3).map(|_| rng.random_range(-1.0..=1.0)).collect(),
                ess: rng.random_range(-1.0..=1.0),
            };
            let (out, applied) = step_applied(&state, &raw, &slice, &cfg).unwrap();
            let dg_total: f64 = applied.dg_power.iter().sum();
            let residual = state.load + applied.ess_power - dg_total - state.pv;
            let sign = if residual >= 0.0 { 1.0 } else { -1.0 };
            let closure =
                dg_total + state.pv + out.grid_power - applied.ess_power - state.load
                    + sign * out.unbalance;
            assert!(closure.abs() < 1e-9, "closure {closure}");
        }
    }
}
