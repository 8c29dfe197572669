//! Twin delayed deep deterministic policy gradient.
//!
//! DDPG plus the three usual fixes: twin critics regressing to a shared
//! min-based target, Gaussian smoothing noise on target actions, and a
//! delayed actor update.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::nn::{adam_step, AdamState, Activation, Mat, Mlp};

use super::{
    assemble_batch, check_finite, col_slice, concat_cols, td_target, Agent, AlgoConfig, AlgoError,
    AlgoId, PolicySnapshot, ReplayBuffer, Transition, UpdateStats,
};

pub struct Td3Agent {
    actor: Mlp,
    actor_target: Mlp,
    critic1: Mlp,
    critic2: Mlp,
    critic1_target: Mlp,
    critic2_target: Mlp,
    adam_actor: AdamState,
    adam_critic1: AdamState,
    adam_critic2: AdamState,
    buffer: ReplayBuffer,
    cfg: AlgoConfig,
    obs_dim: usize,
    act_dim: usize,
    total_steps: usize,
    critic_updates: usize,
    last_actor_loss: f64,
}

impl Td3Agent {
    pub fn new(obs_dim: usize, act_dim: usize, cfg: &AlgoConfig, rng: &mut ChaCha8Rng) -> Self {
        let mut actor_sizes = vec![obs_dim];
        actor_sizes.extend(&cfg.hidden);
        actor_sizes.push(act_dim);
        let mut critic_sizes = vec![obs_dim + act_dim];
        critic_sizes.extend(&cfg.hidden);
        critic_sizes.push(1);

        let mut actor = Mlp::init(&actor_sizes, Activation::Relu, Activation::Tanh, rng);
        actor.scale_last_layer(1e-2);
        let critic1 = Mlp::init(&critic_sizes, Activation::Relu, Activation::Identity, rng);
        let critic2 = Mlp::init(&critic_sizes, Activation::Relu, Activation::Identity, rng);
        Self {
            actor_target: actor.clone(),
            critic1_target: critic1.clone(),
            critic2_target: critic2.clone(),
            adam_actor: AdamState::new(&actor, cfg.lr_actor),
            adam_critic1: AdamState::new(&critic1, cfg.lr_critic),
            adam_critic2: AdamState::new(&critic2, cfg.lr_critic),
            actor,
            critic1,
            critic2,
            buffer: ReplayBuffer::new(cfg.buffer_capacity),
            cfg: cfg.clone(),
            obs_dim,
            act_dim,
            total_steps: 0,
            critic_updates: 0,
            last_actor_loss: 0.0,
        }
    }

    pub fn actor_update_count(&self) -> usize {
        self.critic_updates / self.cfg.policy_delay
    }

    fn noise_std(&self, progress: f64) -> f64 {
        let p = progress.clamp(0.0, 1.0);
        self.cfg.expl_noise_start + (self.cfg.expl_noise_end - self.cfg.expl_noise_start) * p
    }

    fn update(&mut self, rng: &mut ChaCha8Rng) -> Result<UpdateStats, AlgoError> {
        let idx = self.buffer.sample_indices(self.cfg.batch_size, rng);
        let batch = assemble_batch(&self.buffer, &idx);
        let b = idx.len();

        // Smoothed target actions: clip(pi'(s') + clip(noise)) into [-1, 1].
        let (mut next_act, _) = self.actor_target.forward_batch(&batch.next_obs)?;
        for v in next_act.data.iter_mut() {
            let eps: f64 = StandardNormal.sample(rng);
            let noise = (self.cfg.target_noise_std * eps)
                .clamp(-self.cfg.target_noise_clip, self.cfg.target_noise_clip);
            *v = (*v + noise).clamp(-1.0, 1.0);
        }
        let next_in = concat_cols(&batch.next_obs, &next_act);
        let (q1t, _) = self.critic1_target.forward_batch(&next_in)?;
        let (q2t, _) = self.critic2_target.forward_batch(&next_in)?;
        let min_q: Vec<f64> = q1t
            .data
            .iter()
            .zip(&q2t.data)
            .map(|(a, c)| a.min(*c))
            .collect();
        let y = td_target(&batch.rewards, &batch.dones, &min_q, self.cfg.gamma);

        let sa = concat_cols(&batch.obs, &batch.act);
        let mut critic_loss_total = 0.0;
        for (critic, adam) in [
            (&mut self.critic1, &mut self.adam_critic1),
            (&mut self.critic2, &mut self.adam_critic2),
        ] {
            let (q, tape) = critic.forward_batch(&sa)?;
            let mut grad = Mat::zeros(b, 1);
            let mut loss = 0.0;
            for i in 0..b {
                let diff = q.data[i] - y[i];
                loss += diff * diff;
                grad.data[i] = 2.0 * diff / b as f64;
            }
            critic_loss_total += check_finite(loss / b as f64, "td3 critic loss")?;
            let grads = critic.backward_batch(&tape, &grad)?;
            adam_step(critic, &grads, adam)?;
        }
        self.critic_updates += 1;

        // Delayed actor and target refresh.
        if self.critic_updates % self.cfg.policy_delay == 0 {
            let (act, tape_a) = self.actor.forward_batch(&batch.obs)?;
            let sa_pi = concat_cols(&batch.obs, &act);
            let (q_pi, tape_q) = self.critic1.forward_batch(&sa_pi)?;
            self.last_actor_loss = check_finite(
                -q_pi.data.iter().sum::<f64>() / b as f64,
                "td3 actor loss",
            )?;
            let neg = Mat {
                rows: b,
                cols: 1,
                data: vec![-1.0 / b as f64; b],
            };
            let through = self.critic1.backward_batch(&tape_q, &neg)?;
            let d_action = col_slice(&through.dx, self.obs_dim, self.obs_dim + self.act_dim);
            let actor_grads = self.actor.backward_batch(&tape_a, &d_action)?;
            adam_step(&mut self.actor, &actor_grads, &mut self.adam_actor)?;

            self.actor_target.soft_update_from(&self.actor, self.cfg.tau);
            self.critic1_target
                .soft_update_from(&self.critic1, self.cfg.tau);
            self.critic2_target
                .soft_update_from(&self.critic2, self.cfg.tau);
        }

        Ok(UpdateStats {
            critic_loss: critic_loss_total / 2.0,
            actor_loss: self.last_actor_loss,
        })
    }
}

impl Agent for Td3Agent {
    fn select_action(&mut self, obs: &[f64], progress: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
        if self.total_steps < self.cfg.warmup_steps {
            return (0..self.act_dim).map(|_| rng.random_range(-1.0..=1.0)).collect();
        }
        let std = self.noise_std(progress);
        self.actor
            .infer(obs)
            .into_iter()
            .map(|a| {
                let eps: f64 = StandardNormal.sample(rng);
                (a + std * eps).clamp(-1.0, 1.0)
            })
            .collect()
    }

    fn observe_step(
        &mut self,
        transition: Transition,
        rng: &mut ChaCha8Rng,
    ) -> Result<Vec<UpdateStats>, AlgoError> {
        self.buffer.push(transition);
        self.total_steps += 1;
        if self.total_steps >= self.cfg.warmup_steps && self.buffer.len() >= self.cfg.batch_size {
            Ok(vec![self.update(rng)?])
        } else {
            Ok(Vec::new())
        }
    }

    fn snapshot(&self) -> PolicySnapshot {
        PolicySnapshot {
            algo: AlgoId::Td3,
            actor: self.actor.clone(),
            log_std: None,
        }
    }
}
