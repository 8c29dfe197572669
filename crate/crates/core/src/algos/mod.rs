//! Policy-gradient agents and their training loops.
//!
//! Four actor-critic algorithms share the same environment interface: DDPG
//! and TD3 (deterministic, off-policy, replay-based) and SAC and PPO
//! (stochastic). One training run is single-threaded and fully determined by
//! its seed; the harness parallelizes across runs, never inside one.

pub mod ddpg;
pub mod ppo;
pub mod sac;
pub mod td3;

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::data::{sample_training_day, DaySlice, Profile, SplitSpec};
use crate::env::{Microgrid, RawAction, SystemConfig};
use crate::nn::{Mat, Mlp, NnError};
use crate::oracle::{evaluate_schedule, Schedule, ScheduleStep};

#[derive(Debug, thiserror::Error)]
pub enum AlgoError {
    #[error("non-finite value in {0}, aborting update")]
    NonFinite(&'static str),
    #[error("invalid algorithm configuration: {0}")]
    BadConfig(String),
    #[error(transparent)]
    Env(#[from] crate::env::EnvError),
    #[error(transparent)]
    Data(#[from] crate::data::DataError),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Oracle(#[from] crate::oracle::OracleError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum AlgoId {
    Ddpg,
    Td3,
    Sac,
    Ppo,
}

impl AlgoId {
    pub const ALL: [AlgoId; 4] = [AlgoId::Ddpg, AlgoId::Td3, AlgoId::Sac, AlgoId::Ppo];

    pub fn name(self) -> &'static str {
        match self {
            AlgoId::Ddpg => "ddpg",
            AlgoId::Td3 => "td3",
            AlgoId::Sac => "sac",
            AlgoId::Ppo => "ppo",
        }
    }
}

impl fmt::Display for AlgoId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for AlgoId {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "ddpg" => Ok(AlgoId::Ddpg),
            "td3" => Ok(AlgoId::Td3),
            "sac" => Ok(AlgoId::Sac),
            "ppo" => Ok(AlgoId::Ppo),
            other => Err(format!("unknown algorithm `{other}` (expected ddpg|td3|sac|ppo)")),
        }
    }
}

/// SAC entropy temperature handling.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AlphaMode {
    Fixed(f64),
    /// Tune toward a target entropy; `None` means -action_dim.
    Auto { target_entropy: Option<f64> },
}

/// Hyperparameters for all four algorithms; fields irrelevant to an
/// algorithm are simply unused by it.
#[derive(Debug, Clone, PartialEq)]
pub struct AlgoConfig {
    pub algo: AlgoId,
    pub gamma: f64,
    pub tau: f64,
    pub batch_size: usize,
    pub buffer_capacity: usize,
    pub warmup_steps: usize,
    /// DDPG/TD3 exploration noise std, decayed linearly from start to end
    /// over the whole run.
    pub expl_noise_start: f64,
    pub expl_noise_end: f64,
    pub target_noise_std: f64,
    pub target_noise_clip: f64,
    pub policy_delay: usize,
    pub alpha: AlphaMode,
    pub clip_ratio: f64,
    pub gae_lambda: f64,
    pub epochs: usize,
    pub rollout_len: usize,
    pub minibatch: usize,
    pub value_weight: f64,
    pub entropy_bonus: f64,
    pub lr_actor: f64,
    pub lr_critic: f64,
    pub hidden: Vec<usize>,
    pub episodes: usize,
    pub seed: u64,
}

impl AlgoConfig {
    pub fn new(algo: AlgoId, seed: u64) -> Self {
        // The off-policy critics regress to targets on the raw reward scale
        // (thousands per step under the default penalty weights), which needs
        // a faster critic than PPO's normalized advantages do.
        let (lr_actor, lr_critic) = match algo {
            AlgoId::Ppo => (3e-4, 3e-4),
            AlgoId::Ddpg | AlgoId::Td3 | AlgoId::Sac => (1e-3, 3e-3),
        };
        Self {
            algo,
            gamma: 0.99,
            tau: 0.005,
            batch_size: 128,
            buffer_capacity: 100_000,
            warmup_steps: 500,
            expl_noise_start: 0.1,
            expl_noise_end: 0.01,
            target_noise_std: 0.2,
            target_noise_clip: 0.5,
            policy_delay: 2,
            alpha: AlphaMode::Auto {
                target_entropy: None,
            },
            clip_ratio: 0.2,
            gae_lambda: 0.95,
            epochs: 10,
            rollout_len: 240,
            minibatch: 60,
            value_weight: 0.5,
            entropy_bonus: 0.01,
            lr_actor,
            lr_critic,
            hidden: vec![64, 64],
            episodes: 1000,
            seed,
        }
    }

    pub fn validate(&self) -> Result<(), AlgoError> {
        let ok = self.gamma > 0.0
            && self.gamma <= 1.0
            && self.tau > 0.0
            && self.tau <= 1.0
            && self.clip_ratio > 0.0
            && self.batch_size > 0
            && self.minibatch > 0
            && self.rollout_len > 0
            && self.policy_delay > 0;
        if ok {
            Ok(())
        } else {
            Err(AlgoError::BadConfig(
                "require gamma,tau in (0,1], clip_ratio > 0, positive batch/rollout sizes".into(),
            ))
        }
    }
}

/// One experience tuple.
#[derive(Debug, Clone)]
pub struct Transition {
    pub obs: Vec<f64>,
    pub action: Vec<f64>,
    pub reward: f64,
    pub next_obs: Vec<f64>,
    pub done: bool,
}

/// Bounded FIFO of transitions with uniform sampling.
#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    data: Vec<Transition>,
    capacity: usize,
    next: usize,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0);
        Self {
            data: Vec::with_capacity(capacity.min(4096)),
            capacity,
            next: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn push(&mut self, t: Transition) {
        if self.data.len() < self.capacity {
            self.data.push(t);
        } else {
            self.data[self.next] = t;
        }
        self.next = (self.next + 1) % self.capacity;
    }

    pub fn get(&self, idx: usize) -> &Transition {
        &self.data[idx]
    }

    /// Uniform sample with replacement. The training loops additionally gate
    /// on `len() >= batch_size` before updating.
    pub fn sample_indices(&self, batch: usize, rng: &mut impl Rng) -> Vec<usize> {
        assert!(!self.data.is_empty(), "cannot sample an empty buffer");
        (0..batch)
            .map(|_| rng.random_range(0..self.data.len()))
            .collect()
    }
}

/// Bootstrapped regression targets `r + gamma * (1 - done) * next_q`.
pub fn td_target(rewards: &[f64], dones: &[f64], next_q: &[f64], gamma: f64) -> Vec<f64> {
    rewards
        .iter()
        .zip(dones)
        .zip(next_q)
        .map(|((r, d), q)| r + gamma * (1.0 - d) * q)
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpisodeStats {
    pub reward: f64,
    /// Operating cost over the episode, $.
    pub cost: f64,
    /// Summed power unbalance over the episode, kW.
    pub unbalance: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UpdateStats {
    pub critic_loss: f64,
    pub actor_loss: f64,
}

/// Per-run training record. Wall time is informational and excluded from
/// determinism comparisons and serialization.
#[derive(Debug, Clone)]
pub struct TrainReport {
    pub algo: AlgoId,
    pub seed: u64,
    pub episodes: Vec<EpisodeStats>,
    pub updates: Vec<UpdateStats>,
    pub wall_time_s: f64,
}

impl TrainReport {
    /// CSV rows `episode,reward,cost,unbalance`, full precision.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("episode,reward,cost,unbalance\n");
        for (i, e) in self.episodes.iter().enumerate() {
            out.push_str(&format!("{},{},{},{}\n", i, e.reward, e.cost, e.unbalance));
        }
        out
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> std::io::Result<()> {
        std::fs::write(path, self.to_csv())
    }
}

/// Frozen policy sufficient for deterministic evaluation rollouts.
#[derive(Debug, Clone)]
pub struct PolicySnapshot {
    pub algo: AlgoId,
    pub actor: Mlp,
    /// PPO's state-independent log standard deviations (unused for acting).
    pub log_std: Option<Vec<f64>>,
}

impl PolicySnapshot {
    /// Deterministic action in [-1, 1]^act: the actor output for DDPG/TD3,
    /// the squashed mean for SAC and PPO.
    pub fn act(&self, obs: &[f64]) -> Vec<f64> {
        match self.algo {
            AlgoId::Ddpg | AlgoId::Td3 => self.actor.infer(obs),
            AlgoId::Ppo => self.actor.infer(obs).iter().map(|m| m.tanh()).collect(),
            AlgoId::Sac => {
                let out = self.actor.infer(obs);
                let k = out.len() / 2;
                out[..k].iter().map(|m| m.tanh()).collect()
            }
        }
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), NnError> {
        let mut text = format!("policy {}\n", self.algo);
        match &self.log_std {
            Some(ls) => {
                let joined: Vec<String> = ls.iter().map(|x| format!("{x}")).collect();
                text.push_str(&format!("log_std: {}\n", joined.join(" ")));
            }
            None => text.push_str("log_std: -\n"),
        }
        text.push_str(&self.actor.save_string());
        std::fs::write(path, text)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, NnError> {
        let text = std::fs::read_to_string(path)?;
        let mut lines = text.splitn(3, '\n');
        let header = lines
            .next()
            .ok_or_else(|| NnError::Format("empty policy file".into()))?;
        let algo = header
            .strip_prefix("policy ")
            .and_then(|s| AlgoId::from_str(s.trim()).ok())
            .ok_or_else(|| NnError::Format(format!("bad policy header `{header}`")))?;
        let ls_line = lines
            .next()
            .ok_or_else(|| NnError::Format("missing log_std line".into()))?;
        let ls_body = ls_line
            .strip_prefix("log_std:")
            .ok_or_else(|| NnError::Format("missing log_std line".into()))?
            .trim();
        let log_std = if ls_body == "-" {
            None
        } else {
            Some(
                ls_body
                    .split_whitespace()
                    .map(|t| t.parse().map_err(|e| NnError::Format(format!("{e}"))))
                    .collect::<Result<Vec<f64>, _>>()?,
            )
        };
        let actor = Mlp::load_string(lines.next().unwrap_or(""))?;
        Ok(Self {
            algo,
            actor,
            log_std,
        })
    }
}

/// Per-step behavior each algorithm plugs into the shared training loop.
pub(crate) trait Agent {
    /// Exploration action in [-1, 1]^act. `progress` is the fraction of
    /// planned environment steps already taken.
    fn select_action(&mut self, obs: &[f64], progress: f64, rng: &mut ChaCha8Rng) -> Vec<f64>;

    /// Consumes a transition; returns stats for any gradient updates run.
    fn observe_step(
        &mut self,
        transition: Transition,
        rng: &mut ChaCha8Rng,
    ) -> Result<Vec<UpdateStats>, AlgoError>;

    fn snapshot(&self) -> PolicySnapshot;
}

pub struct TrainOutput {
    pub report: TrainReport,
    pub policy: PolicySnapshot,
}

/// Trains one agent on the profile's training days. Every episode samples a
/// training day and a uniform initial SOC; off-policy agents update every
/// environment step after warmup, PPO once per full rollout. The result is a
/// deterministic function of the configuration (wall time aside).
pub fn train(
    profile: &Profile,
    split: &SplitSpec,
    sys: &SystemConfig,
    cfg: &AlgoConfig,
) -> Result<TrainOutput, AlgoError> {
    cfg.validate()?;
    sys.validate()?;
    let started = std::time::Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let obs_dim = sys.obs_dim();
    let act_dim = sys.action_dim();

    let mut agent: Box<dyn Agent> = match cfg.algo {
        AlgoId::Ddpg => Box::new(ddpg::DdpgAgent::new(obs_dim, act_dim, cfg, &mut rng)),
        AlgoId::Td3 => Box::new(td3::Td3Agent::new(obs_dim, act_dim, cfg, &mut rng)),
        AlgoId::Sac => Box::new(sac::SacAgent::new(obs_dim, act_dim, cfg, &mut rng)),
        AlgoId::Ppo => Box::new(ppo::PpoAgent::new(obs_dim, act_dim, cfg, &mut rng)),
    };

    let total_steps = (cfg.episodes * sys.horizon).max(1);
    let mut steps_taken = 0usize;
    let mut episodes = Vec::with_capacity(cfg.episodes);
    let mut updates = Vec::new();

    for _ in 0..cfg.episodes {
        let day = sample_training_day(split, &mut rng)?;
        let slice = profile.day(day)?;
        let soc0 = rng.random_range(sys.ess.e_min..=sys.ess.e_max);
        let mut env = Microgrid::reset(sys, slice, soc0)?;
        let mut stats = EpisodeStats {
            reward: 0.0,
            cost: 0.0,
            unbalance: 0.0,
        };
        while !env.done() {
            let obs = env.observe();
            let progress = steps_taken as f64 / total_steps as f64;
            let action = agent.select_action(&obs, progress, &mut rng);
            let raw = RawAction::from_vec(&action, sys.num_dg());
            let outcome = env.step(&raw)?;
            steps_taken += 1;
            stats.reward += outcome.reward;
            stats.cost += (outcome.dg_cost + outcome.exchange_cost) * sys.delta_t;
            stats.unbalance += outcome.unbalance;
            let transition = Transition {
                obs,
                action,
                reward: outcome.reward,
                next_obs: env.observe(),
                done: outcome.done,
            };
            updates.extend(agent.observe_step(transition, &mut rng)?);
        }
        episodes.push(stats);
    }

    Ok(TrainOutput {
        report: TrainReport {
            algo: cfg.algo,
            seed: cfg.seed,
            episodes,
            updates,
            wall_time_s: started.elapsed().as_secs_f64(),
        },
        policy: agent.snapshot(),
    })
}

/// Per-day result of a deterministic evaluation rollout.
#[derive(Debug, Clone)]
pub struct DayEval {
    pub day_index: usize,
    pub cost: f64,
    pub unbalance: f64,
    pub schedule: Schedule,
}

/// Rolls the frozen policy through each day (mean action, no exploration)
/// and rescores the resulting schedule from first principles.
pub fn evaluate_policy(
    policy: &PolicySnapshot,
    days: &[DaySlice],
    soc_init: f64,
    sys: &SystemConfig,
) -> Result<Vec<DayEval>, AlgoError> {
    let mut out = Vec::with_capacity(days.len());
    for slice in days {
        let day_index = slice.day_index;
        let mut env = Microgrid::reset(sys, slice.clone(), soc_init)?;
        let mut steps = Vec::with_capacity(sys.horizon);
        while !env.done() {
            let obs = env.observe();
            let action = policy.act(&obs);
            let raw = RawAction::from_vec(&action, sys.num_dg());
            let (outcome, applied) = env.step_applied(&raw)?;
            steps.push(ScheduleStep {
                dg_on: applied.dg_on.clone(),
                dg_power: applied.dg_power.clone(),
                ess_power: applied.ess_power,
                grid_power: outcome.grid_power,
                unbalance: outcome.unbalance,
                step_cost: (outcome.dg_cost + outcome.exchange_cost) * sys.delta_t,
                soc_after: outcome.next_state.soc,
            });
        }
        let schedule = Schedule {
            soc_init,
            steps,
            soc_snap_tol: 0.0,
        };
        let eval = evaluate_schedule(&schedule, slice, sys)?;
        debug_assert!(eval.feasible, "projected rollouts satisfy hard constraints");
        out.push(DayEval {
            day_index,
            cost: eval.total_cost,
            unbalance: eval.total_unbalance,
            schedule,
        });
    }
    Ok(out)
}

// ---- shared batch plumbing ----

pub(crate) fn rows_to_mat<'a>(rows: impl ExactSizeIterator<Item = &'a [f64]>) -> Mat {
    let n = rows.len();
    let mut data = Vec::new();
    let mut cols = 0;
    for r in rows {
        cols = r.len();
        data.extend_from_slice(r);
    }
    Mat {
        rows: n,
        cols,
        data,
    }
}

pub(crate) fn concat_cols(a: &Mat, b: &Mat) -> Mat {
    assert_eq!(a.rows, b.rows);
    let mut m = Mat::zeros(a.rows, a.cols + b.cols);
    for i in 0..a.rows {
        m.row_mut(i)[..a.cols].copy_from_slice(a.row(i));
        m.row_mut(i)[a.cols..].copy_from_slice(b.row(i));
    }
    m
}

/// Column range of a matrix as a new matrix.
pub(crate) fn col_slice(m: &Mat, from: usize, to: usize) -> Mat {
    let mut out = Mat::zeros(m.rows, to - from);
    for i in 0..m.rows {
        out.row_mut(i).copy_from_slice(&m.row(i)[from..to]);
    }
    out
}

/// Replay batch in matrix form.
pub(crate) struct Batch {
    pub obs: Mat,
    pub act: Mat,
    pub rewards: Vec<f64>,
    pub dones: Vec<f64>,
    pub next_obs: Mat,
}

pub(crate) fn assemble_batch(buffer: &ReplayBuffer, indices: &[usize]) -> Batch {
    Batch {
        obs: rows_to_mat(indices.iter().map(|&i| buffer.get(i).obs.as_slice())),
        act: rows_to_mat(indices.iter().map(|&i| buffer.get(i).action.as_slice())),
        rewards: indices.iter().map(|&i| buffer.get(i).reward).collect(),
        dones: indices
            .iter()
            .map(|&i| f64::from(u8::from(buffer.get(i).done)))
            .collect(),
        next_obs: rows_to_mat(indices.iter().map(|&i| buffer.get(i).next_obs.as_slice())),
    }
}

pub(crate) fn check_finite(value: f64, what: &'static str) -> Result<f64, AlgoError> {
    if value.is_finite() {
        Ok(value)
    } else {
        Err(AlgoError::NonFinite(what))
    }
}

/// Stochastic-policy action draw (the squashed sample only).
pub(crate) fn gaussian_action(head: &crate::nn::GaussianHead, rng: &mut ChaCha8Rng) -> Vec<f64> {
    crate::nn::gaussian_sample(head, rng).action
}

/// In-place Fisher-Yates shuffle driven by the training RNG.
pub(crate) fn shuffle_indices(n: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        let j = rng.random_range(0..=i);
        idx.swap(i, j);
    }
    idx
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{split_train_test, synthesize_profiles};
    use crate::nn::Activation;

    #[test]
    fn td_target_examples() {
        assert_eq!(td_target(&[-5.0], &[1.0], &[99.0], 0.99), vec![-5.0]);
        assert_eq!(td_target(&[3.0], &[0.0], &[99.0], 0.0), vec![3.0]);
        let y = td_target(&[1.0], &[0.0], &[10.0], 0.99);
        assert!((y[0] - 10.9).abs() < 1e-12);
    }

    #[test]
    fn replay_buffer_ring_semantics() {
        let mut buf = ReplayBuffer::new(3);
        let t = |r: f64| Transition {
            obs: vec![0.0],
            action: vec![0.0],
            reward: r,
            next_obs: vec![0.0],
            done: false,
        };
        for i in 0..5 {
            buf.push(t(i as f64));
        }
        assert_eq!(buf.len(), 3);
        let rewards: Vec<f64> = (0..3).map(|i| buf.get(i).reward).collect();
        // Oldest two were overwritten.
        assert_eq!(rewards, vec![3.0, 4.0, 2.0]);
    }

    #[test]
    fn replay_sampling_covers_indices() {
        let mut buf = ReplayBuffer::new(200);
        for i in 0..100 {
            buf.push(Transition {
                obs: vec![i as f64],
                action: vec![0.0],
                reward: 0.0,
                next_obs: vec![0.0],
                done: false,
            });
        }
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut counts = vec![0u32; 100];
        let draws = 100_000usize;
        for idx in buf.sample_indices(draws, &mut rng) {
            counts[idx] += 1;
        }
        // Chi-square against uniform; 5-sigma bound for 99 dof.
        let expect = draws as f64 / 100.0;
        let chi2: f64 = counts
            .iter()
            .map(|&c| {
                let d = c as f64 - expect;
                d * d / expect
            })
            .sum();
        let dof = 99.0f64;
        assert!(chi2 < dof + 5.0 * (2.0 * dof).sqrt(), "chi2 {chi2}");
        assert!(counts.iter().all(|&c| c > 0));
    }

    #[test]
    fn soft_update_geometric_convergence() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let online = Mlp::init(&[3, 8, 2], Activation::Relu, Activation::Tanh, &mut rng);
        let init = Mlp::init(&[3, 8, 2], Activation::Relu, Activation::Tanh, &mut rng);
        let mut target = init.clone();
        let tau = 0.1;
        let k = 25;
        for _ in 0..k {
            target.soft_update_from(&online, tau);
        }
        let w = (1.0f64 - tau).powi(k);
        for l in 0..target.weights.len() {
            for i in 0..target.weights[l].data.len() {
                let expect = w * init.weights[l].data[i] + (1.0 - w) * online.weights[l].data[i];
                assert!((target.weights[l].data[i] - expect).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn zero_episodes_gives_empty_report() {
        let profile = synthesize_profiles(1, 31).unwrap();
        let split = split_train_test(&profile).unwrap();
        let sys = SystemConfig::default().with_profile_scales(&profile);
        let mut cfg = AlgoConfig::new(AlgoId::Ddpg, 1);
        cfg.episodes = 0;
        let out = train(&profile, &split, &sys, &cfg).unwrap();
        assert!(out.report.episodes.is_empty());
        assert!(out.report.updates.is_empty());
    }

    #[test]
    fn training_is_bit_deterministic() {
        let profile = synthesize_profiles(3, 31).unwrap();
        let split = split_train_test(&profile).unwrap();
        let sys = SystemConfig::default().with_profile_scales(&profile);
        for algo in AlgoId::ALL {
            let mut cfg = AlgoConfig::new(algo, 17);
            cfg.episodes = 3;
            cfg.warmup_steps = 20;
            cfg.rollout_len = 48;
            cfg.minibatch = 24;
            cfg.epochs = 2;
            let a = train(&profile, &split, &sys, &cfg).unwrap();
            let b = train(&profile, &split, &sys, &cfg).unwrap();
            assert_eq!(a.report.to_csv(), b.report.to_csv(), "{algo}");
            assert_eq!(
                a.report.updates.len(),
                b.report.updates.len(),
                "{algo} update counts"
            );
            for (x, y) in a.report.updates.iter().zip(&b.report.updates) {
                assert_eq!(x.critic_loss, y.critic_loss, "{algo}");
                assert_eq!(x.actor_loss, y.actor_loss, "{algo}");
            }
            let obs = vec![0.1; sys.obs_dim()];
            assert_eq!(a.policy.act(&obs), b.policy.act(&obs), "{algo} policy");
        }
    }

    #[test]
    fn evaluate_policy_zero_demand_costs_nothing() {
        let sys = SystemConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        // An untrained DDPG-style actor biased fully off.
        let mut actor = Mlp::init(
            &[sys.obs_dim(), 8, sys.action_dim()],
            Activation::Relu,
            Activation::Tanh,
            &mut rng,
        );
        actor.scale_last_layer(0.0);
        for b in actor.biases.last_mut().unwrap().iter_mut() {
            *b = -20.0; // tanh saturates to -1: all units off, storage idle wish
        }
        let policy = PolicySnapshot {
            algo: AlgoId::Ddpg,
            actor,
            log_std: None,
        };
        let slice = DaySlice::constant(0.0, 0.0, 0.5);
        // Storage action -1 would discharge; with zero demand it exports for
        // revenue, so use a day with zero price to pin cost at exactly 0.
        let slice = DaySlice {
            price: [0.0; 24],
            ..slice
        };
        let evals = evaluate_policy(&policy, &[slice], 250.0, &sys).unwrap();
        assert_eq!(evals[0].cost, 0.0);
        assert_eq!(evals[0].unbalance, 0.0);
    }

    #[test]
    fn rollout_rescoring_is_consistent() {
        let profile = synthesize_profiles(11, 31).unwrap();
        let split = split_train_test(&profile).unwrap();
        let sys = SystemConfig::default().with_profile_scales(&profile);
        let mut cfg = AlgoConfig::new(AlgoId::Ppo, 3);
        cfg.episodes = 2;
        cfg.rollout_len = 48;
        cfg.minibatch = 24;
        cfg.epochs = 2;
        let out = train(&profile, &split, &sys, &cfg).unwrap();
        let day = profile.day(split.test_days[0]).unwrap();
        let evals = evaluate_policy(&out.policy, &[day.clone()], 250.0, &sys).unwrap();
        // Accumulating the schedule's own step costs matches the rescoring.
        let manual: f64 = evals[0].schedule.steps.iter().map(|s| s.step_cost).sum();
        assert!((manual - evals[0].cost).abs() < 1e-9);
    }

    #[test]
    fn policy_snapshot_roundtrip() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let actor = Mlp::init(&[4, 8, 3], Activation::Relu, Activation::Identity, &mut rng);
        let snap = PolicySnapshot {
            algo: AlgoId::Ppo,
            actor,
            log_std: Some(vec![-0.5, -0.25, 0.0]),
        };
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("policy.txt");
        snap.save(&path).unwrap();
        let back = PolicySnapshot::load(&path).unwrap();
        assert_eq!(back.algo, AlgoId::Ppo);
        assert_eq!(back.actor, snap.actor);
        assert_eq!(back.log_std, snap.log_std);
        let obs = vec![0.3, -0.1, 0.7, 0.2];
        assert_eq!(snap.act(&obs), back.act(&obs));
    }
}
