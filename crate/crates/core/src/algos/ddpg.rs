//! Deep deterministic policy gradient.
//!
//! Deterministic tanh actor plus a single Q critic, trained off-policy from a
//! replay buffer with soft target networks. Exploration adds Gaussian action
//! noise whose scale decays linearly over the run.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::nn::{adam_step, AdamState, Activation, Mat, Mlp};

use super::{
    assemble_batch, check_finite, col_slice, concat_cols, td_target, Agent, AlgoConfig, AlgoError,
    AlgoId, PolicySnapshot, ReplayBuffer, Transition, UpdateStats,
};

pub struct DdpgAgent {
    actor: Mlp,
    actor_target: Mlp,
    critic: Mlp,
    critic_target: Mlp,
    adam_actor: AdamState,
    adam_critic: AdamState,
    buffer: ReplayBuffer,
    cfg: AlgoConfig,
    obs_dim: usize,
    act_dim: usize,
    total_steps: usize,
}

impl DdpgAgent {
    pub fn new(obs_dim: usize, act_dim: usize, cfg: &AlgoConfig, rng: &mut ChaCha8Rng) -> Self {
        let mut actor_sizes = vec![obs_dim];
        actor_sizes.extend(&cfg.hidden);
        actor_sizes.push(act_dim);
        let mut critic_sizes = vec![obs_dim + act_dim];
        critic_sizes.extend(&cfg.hidden);
        critic_sizes.push(1);

        let mut actor = Mlp::init(&actor_sizes, Activation::Relu, Activation::Tanh, rng);
        actor.scale_last_layer(1e-2);
        let critic = Mlp::init(&critic_sizes, Activation::Relu, Activation::Identity, rng);
        let actor_target = actor.clone();
        let critic_target = critic.clone();
        let adam_actor = AdamState::new(&actor, cfg.lr_actor);
        let adam_critic = AdamState::new(&critic, cfg.lr_critic);
        Self {
            actor,
            actor_target,
            critic,
            critic_target,
            adam_actor,
            adam_critic,
            buffer: ReplayBuffer::new(cfg.buffer_capacity),
            cfg: cfg.clone(),
            obs_dim,
            act_dim,
            total_steps: 0,
        }
    }

    fn noise_std(&self, progress: f64) -> f64 {
        let p = progress.clamp(0.0, 1.0);
        self.cfg.expl_noise_start + (self.cfg.expl_noise_end - self.cfg.expl_noise_start) * p
    }

    fn update(&mut self, rng: &mut ChaCha8Rng) -> Result<UpdateStats, AlgoError> {
        let idx = self.buffer.sample_indices(self.cfg.batch_size, rng);
        let batch = assemble_batch(&self.buffer, &idx);
        let b = idx.len();

        // Critic regression toward the bootstrapped target.
        let (next_act, _) = self.actor_target.forward_batch(&batch.next_obs)?;
        let next_in = concat_cols(&batch.next_obs, &next_act);
        let (next_q, _) = self.critic_target.forward_batch(&next_in)?;
        let y = td_target(&batch.rewards, &batch.dones, &next_q.data, self.cfg.gamma);

        let sa = concat_cols(&batch.obs, &batch.act);
        let (q, tape_c) = self.critic.forward_batch(&sa)?;
        let mut grad = Mat::zeros(b, 1);
        let mut loss = 0.0;
        for i in 0..b {
            let diff = q.data[i] - y[i];
            loss += diff * diff;
            grad.data[i] = 2.0 * diff / b as f64;
        }
        let critic_loss = check_finite(loss / b as f64, "ddpg critic loss")?;
        let grads = self.critic.backward_batch(&tape_c, &grad)?;
        adam_step(&mut self.critic, &grads, &mut self.adam_critic)?;

        // Actor ascends Q(s, pi(s)) through the critic's action gradient.
        let (act, tape_a) = self.actor.forward_batch(&batch.obs)?;
        let sa = concat_cols(&batch.obs, &act);
        let (q_pi, tape_q) = self.critic.forward_batch(&sa)?;
        let actor_loss =
            check_finite(-q_pi.data.iter().sum::<f64>() / b as f64, "ddpg actor loss")?;
        let neg = Mat {
            rows: b,
            cols: 1,
            data: vec![-1.0 / b as f64; b],
        };
        let through_critic = self.critic.backward_batch(&tape_q, &neg)?;
        let d_action = col_slice(&through_critic.dx, self.obs_dim, self.obs_dim + self.act_dim);
        let actor_grads = self.actor.backward_batch(&tape_a, &d_action)?;
        adam_step(&mut self.actor, &actor_grads, &mut self.adam_actor)?;

        self.actor_target.soft_update_from(&self.actor, self.cfg.tau);
        self.critic_target
            .soft_update_from(&self.critic, self.cfg.tau);

        Ok(UpdateStats {
            critic_loss,
            actor_loss,
        })
    }
}

impl Agent for DdpgAgent {
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
            algo: AlgoId::Ddpg,
            actor: self.actor.clone(),
            log_std: None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn mk_agent(cfg: &AlgoConfig) -> (DdpgAgent, ChaCha8Rng) {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let agent = DdpgAgent::new(4, 2, cfg, &mut rng);
        (agent, rng)
    }

    fn push_transitions(agent: &mut DdpgAgent, n: usize, rng: &mut ChaCha8Rng) {
        for _ in 0..n {
            let obs: Vec<f64> = (0..4).map(|_| rng.random_range(-1.0..1.0)).collect();
            let t = Transition {
                obs: obs.clone(),
                action: (0..2).map(|_| rng.random_range(-1.0..1.0)).collect(),
                reward: 0.0,
                next_obs: obs,
                done: false,
            };
            agent.buffer.push(t);
        }
    }

    #[test]
    fn tau_one_copies_online_into_targets() {
        let mut cfg = AlgoConfig::new(AlgoId::Ddpg, 0);
        cfg.tau = 1.0;
        cfg.batch_size = 8;
        let (mut agent, mut rng) = mk_agent(&cfg);
        push_transitions(&mut agent, 16, &mut rng);
        agent.update(&mut rng).unwrap();
        assert_eq!(agent.actor, agent.actor_target);
        assert_eq!(agent.critic, agent.critic_target);
    }

    #[test]
    fn critic_regresses_to_zero_on_null_rewards() {
        // gamma = 0 and zero rewards make the target identically zero, so the
        // critic loss must shrink over repeated updates.
        let mut cfg = AlgoConfig::new(AlgoId::Ddpg, 1);
        cfg.gamma = 0.0;
        cfg.batch_size = 16;
        cfg.lr_critic = 3e-3;
        let (mut agent, mut rng) = mk_agent(&cfg);
        push_transitions(&mut agent, 64, &mut rng);
        let first = agent.update(&mut rng).unwrap().critic_loss;
        let mut last = first;
        for _ in 0..100 {
            last = agent.update(&mut rng).unwrap().critic_loss;
        }
        assert!(
            last < first * 0.5,
            "critic loss should decrease: {first} -> {last}"
        );
    }

    #[test]
    fn update_sequence_is_deterministic() {
        let mut cfg = AlgoConfig::new(AlgoId::Ddpg, 7);
        cfg.batch_size = 8;
        let run = || {
            let (mut agent, mut rng) = mk_agent(&cfg);
            push_transitions(&mut agent, 32, &mut rng);
            (0..5)
                .map(|_| agent.update(&mut rng).unwrap().critic_loss)
                .collect::<Vec<_>>()
        };
        assert_eq!(run(), run());
    }
}
