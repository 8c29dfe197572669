//! Proximal policy optimization with clipped surrogate objective and
//! generalized advantage estimation.
//!
//! The policy is a tanh-squashed Gaussian with a state-independent learnable
//! log-std vector. Rollouts of a fixed length are collected on-policy, then
//! optimized for several epochs over shuffled minibatches.

use rand_chacha::ChaCha8Rng;

use crate::nn::{
    adam_step, gaussian_log_prob, gaussian_sample, AdamState, Activation, GaussianHead, Gradients,
    Mat, Mlp, VecAdam, LOG_STD_MAX, LOG_STD_MIN,
};

use super::{
    check_finite, rows_to_mat, Agent, AlgoConfig, AlgoError, AlgoId, PolicySnapshot, Transition,
    UpdateStats,
};

/// Generalized advantage estimation with per-episode truncation at done
/// flags. `next_value` bootstraps the step after the last entry and is
/// ignored when that entry terminates an episode.
pub fn gae(
    rewards: &[f64],
    values: &[f64],
    dones: &[bool],
    next_value: f64,
    gamma: f64,
    lambda: f64,
) -> (Vec<f64>, Vec<f64>) {
    let n = rewards.len();
    let mut advantages = vec![0.0; n];
    let mut acc = 0.0;
    for t in (0..n).rev() {
        let not_done = if dones[t] { 0.0 } else { 1.0 };
        let v_next = if t + 1 < n { values[t + 1] } else { next_value };
        let delta = rewards[t] + gamma * not_done * v_next - values[t];
        acc = delta + gamma * lambda * not_done * acc;
        advantages[t] = acc;
    }
    let returns = advantages
        .iter()
        .zip(values)
        .map(|(a, v)| a + v)
        .collect();
    (advantages, returns)
}

struct RolloutEntry {
    obs: Vec<f64>,
    pre_squash: Vec<f64>,
    logp_old: f64,
    value_old: f64,
    reward: f64,
    done: bool,
    next_obs: Vec<f64>,
}

struct Pending {
    pre_squash: Vec<f64>,
    logp: f64,
    value: f64,
}

pub struct PpoAgent {
    actor: Mlp,
    value: Mlp,
    log_std: Vec<f64>,
    adam_actor: AdamState,
    adam_value: AdamState,
    adam_log_std: VecAdam,
    rollout: Vec<RolloutEntry>,
    pending: Option<Pending>,
    cfg: AlgoConfig,
    act_dim: usize,
}

impl PpoAgent {
    pub fn new(obs_dim: usize, act_dim: usize, cfg: &AlgoConfig, rng: &mut ChaCha8Rng) -> Self {
        let mut actor_sizes = vec![obs_dim];
        actor_sizes.extend(&cfg.hidden);
        actor_sizes.push(act_dim);
        let mut value_sizes = vec![obs_dim];
        value_sizes.extend(&cfg.hidden);
        value_sizes.push(1);

        let mut actor = Mlp::init(&actor_sizes, Activation::Relu, Activation::Identity, rng);
        actor.scale_last_layer(1e-2);
        let value = Mlp::init(&value_sizes, Activation::Relu, Activation::Identity, rng);
        Self {
            adam_actor: AdamState::new(&actor, cfg.lr_actor),
            adam_value: AdamState::new(&value, cfg.lr_critic),
            adam_log_std: VecAdam::new(act_dim, cfg.lr_actor),
            actor,
            value,
            log_std: vec![-0.5; act_dim],
            rollout: Vec::with_capacity(cfg.rollout_len),
            pending: None,
            cfg: cfg.clone(),
            act_dim,
        }
    }

    fn head(&self, mean: Vec<f64>) -> GaussianHead {
        GaussianHead::new(mean, self.log_std.clone())
    }

    /// Clipped-surrogate loss and gradients for one minibatch under the given
    /// actor and log-std parameters. A pure function of its inputs; the tests
    /// difference it numerically.
    #[allow(clippy::too_many_arguments)]
    fn policy_terms(
        &self,
        actor: &Mlp,
        log_std: &[f64],
        obs: &Mat,
        pre_squash: &[&[f64]],
        logp_old: &[f64],
        advantages: &[f64],
    ) -> Result<(f64, Gradients, Vec<f64>), AlgoError> {
        let b = obs.rows;
        let k = self.act_dim;
        let clip = self.cfg.clip_ratio;
        let (means, tape) = actor.forward_batch(obs)?;
        let mut loss = 0.0;
        let mut out_grad = Mat::zeros(b, k);
        let mut d_log_std = vec![0.0; k];
        let inv_b = 1.0 / b as f64;
        for i in 0..b {
            let head = GaussianHead::new(means.row(i).to_vec(), log_std.to_vec());
            let logp_new = gaussian_log_prob(&head, pre_squash[i]);
            let ratio = (logp_new - logp_old[i]).exp();
            if !ratio.is_finite() {
                return Err(AlgoError::NonFinite("ppo probability ratio"));
            }
            let a = advantages[i];
            let surr1 = ratio * a;
            let surr2 = ratio.clamp(1.0 - clip, 1.0 + clip) * a;
            loss -= surr1.min(surr2);
            // Gradient of the min: zero once the clipped branch is active and
            // the ratio sits outside the band.
            let coeff = if surr1 <= surr2 || (1.0 - clip..=1.0 + clip).contains(&ratio) {
                ratio * a
            } else {
                0.0
            };
            let dlogp = -coeff * inv_b;
            for j in 0..k {
                let std = head.log_std[j].exp();
                let z = (pre_squash[i][j] - head.mean[j]) / std;
                out_grad.row_mut(i)[j] = dlogp * z / std;
                d_log_std[j] += dlogp * (z * z - 1.0);
            }
        }
        let loss = check_finite(loss * inv_b, "ppo policy loss")?;
        // Entropy bonus on the pre-squash Gaussian; only log-std carries it.
        for g in d_log_std.iter_mut() {
            *g -= self.cfg.entropy_bonus;
        }
        let grads = actor.backward_batch(&tape, &out_grad)?;
        Ok((loss, grads, d_log_std))
    }

    fn update(&mut self, rng: &mut ChaCha8Rng) -> Result<Vec<UpdateStats>, AlgoError> {
        let n = self.rollout.len();
        let last = self.rollout.last().expect("rollout not empty");
        let next_value = if last.done {
            0.0
        } else {
            self.value.infer(&last.next_obs)[0]
        };
        let rewards: Vec<f64> = self.rollout.iter().map(|e| e.reward).collect();
        let values: Vec<f64> = self.rollout.iter().map(|e| e.value_old).collect();
        let dones: Vec<bool> = self.rollout.iter().map(|e| e.done).collect();
        let (advantages, returns) = gae(
            &rewards,
            &values,
            &dones,
            next_value,
            self.cfg.gamma,
            self.cfg.gae_lambda,
        );
        let mean = advantages.iter().sum::<f64>() / n as f64;
        let var = advantages.iter().map(|a| (a - mean) * (a - mean)).sum::<f64>() / n as f64;
        let std = var.sqrt().max(1e-8);
        let adv_norm: Vec<f64> = advantages.iter().map(|a| (a - mean) / std).collect();

        let mut stats = Vec::new();
        for _ in 0..self.cfg.epochs {
            let order = super::shuffle_indices(n, rng);
            for chunk in order.chunks(self.cfg.minibatch) {
                let obs = rows_to_mat(chunk.iter().map(|&i| self.rollout[i].obs.as_slice()));
                let pre: Vec<&[f64]> = chunk
                    .iter()
                    .map(|&i| self.rollout[i].pre_squash.as_slice())
                    .collect();
                let logp_old: Vec<f64> = chunk.iter().map(|&i| self.rollout[i].logp_old).collect();
                let adv: Vec<f64> = chunk.iter().map(|&i| adv_norm[i]).collect();
                let ret: Vec<f64> = chunk.iter().map(|&i| returns[i]).collect();

                let (pi_loss, actor_grads, ls_grads) =
                    self.policy_terms(&self.actor, &self.log_std, &obs, &pre, &logp_old, &adv)?;
                adam_step(&mut self.actor, &actor_grads, &mut self.adam_actor)?;
                self.adam_log_std.step(&mut self.log_std, &ls_grads)?;
                for l in self.log_std.iter_mut() {
                    *l = l.clamp(LOG_STD_MIN, LOG_STD_MAX);
                }

                let (v, tape_v) = self.value.forward_batch(&obs)?;
                let mut grad = Mat::zeros(v.rows, 1);
                let mut v_loss = 0.0;
                let inv = 1.0 / v.rows as f64;
                for i in 0..v.rows {
                    let diff = v.data[i] - ret[i];
                    v_loss += self.cfg.value_weight * diff * diff;
                    grad.data[i] = 2.0 * self.cfg.value_weight * diff * inv;
                }
                let v_loss = check_finite(v_loss * inv, "ppo value loss")?;
                let v_grads = self.value.backward_batch(&tape_v, &grad)?;
                adam_step(&mut self.value, &v_grads, &mut self.adam_value)?;

                stats.push(UpdateStats {
                    critic_loss: v_loss,
                    actor_loss: pi_loss,
                });
            }
        }
        self.rollout.clear();
        Ok(stats)
    }
}

impl Agent for PpoAgent {
    fn select_action(&mut self, obs: &[f64], _progress: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
        let mean = self.actor.infer(obs);
        let head = self.head(mean);
        let sample = gaussian_sample(&head, rng);
        self.pending = Some(Pending {
            pre_squash: sample.pre_squash,
            logp: sample.log_prob,
            value: self.value.infer(obs)[0],
        });
        sample.action
    }

    fn observe_step(
        &mut self,
        transition: Transition,
        rng: &mut ChaCha8Rng,
    ) -> Result<Vec<UpdateStats>, AlgoError> {
        let pending = self
            .pending
            .take()
            .expect("observe_step follows select_action");
        self.rollout.push(RolloutEntry {
            obs: transition.obs,
            pre_squash: pending.pre_squash,
            logp_old: pending.logp,
            value_old: pending.value,
            reward: transition.reward,
            done: transition.done,
            next_obs: transition.next_obs,
        });
        if self.rollout.len() >= self.cfg.rollout_len {
            self.update(rng)
        } else {
            Ok(Vec::new())
        }
    }

    fn snapshot(&self) -> PolicySnapshot {
        PolicySnapshot {
            algo: AlgoId::Ppo,
            actor: self.actor.clone(),
            log_std: Some(self.log_std.clone()),
        }
    }
}
