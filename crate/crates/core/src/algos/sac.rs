//! Soft actor-critic with twin critics and a tanh-squashed Gaussian policy.
//!
//! The actor head emits means and state-dependent log standard deviations;
//! samples are reparameterized so the critic's action gradient flows back
//! through the squash into the network. The entropy temperature is either
//! fixed or tuned toward a target entropy.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::nn::{
    adam_step, AdamState, Activation, GaussianHead, Gradients, Mat, Mlp, VecAdam, LOG_STD_MAX,
    LOG_STD_MIN, TANH_EPS,
};

use super::{
    assemble_batch, check_finite, col_slice, concat_cols, gaussian_action, td_target, Agent,
    AlgoConfig, AlgoError, AlgoId, AlphaMode, PolicySnapshot, ReplayBuffer, Transition,
    UpdateStats,
};

const LN_2PI: f64 = 1.8378770664093453;

pub struct SacAgent {
    actor: Mlp,
    critic1: Mlp,
    critic2: Mlp,
    critic1_target: Mlp,
    critic2_target: Mlp,
    adam_actor: AdamState,
    adam_critic1: AdamState,
    adam_critic2: AdamState,
    log_alpha: Vec<f64>,
    alpha_adam: VecAdam,
    target_entropy: f64,
    buffer: ReplayBuffer,
    cfg: AlgoConfig,
    obs_dim: usize,
    act_dim: usize,
    total_steps: usize,
}

impl SacAgent {
    pub fn new(obs_dim: usize, act_dim: usize, cfg: &AlgoConfig, rng: &mut ChaCha8Rng) -> Self {
        let mut actor_sizes = vec![obs_dim];
        actor_sizes.extend(&cfg.hidden);
        actor_sizes.push(2 * act_dim);
        let mut critic_sizes = vec![obs_dim + act_dim];
        critic_sizes.extend(&cfg.hidden);
        critic_sizes.push(1);

        let mut actor = Mlp::init(&actor_sizes, Activation::Relu, Activation::Identity, rng);
        actor.scale_last_layer(1e-2);
        let critic1 = Mlp::init(&critic_sizes, Activation::Relu, Activation::Identity, rng);
        let critic2 = Mlp::init(&critic_sizes, Activation::Relu, Activation::Identity, rng);
        let target_entropy = match cfg.alpha {
            AlphaMode::Auto { target_entropy } => target_entropy.unwrap_or(-(act_dim as f64)),
            AlphaMode::Fixed(_) => 0.0,
        };
        let init_alpha: f64 = match cfg.alpha {
            AlphaMode::Fixed(a) => a,
            AlphaMode::Auto { .. } => 0.2,
        };
        Self {
            critic1_target: critic1.clone(),
            critic2_target: critic2.clone(),
            adam_actor: AdamState::new(&actor, cfg.lr_actor),
            adam_critic1: AdamState::new(&critic1, cfg.lr_critic),
            adam_critic2: AdamState::new(&critic2, cfg.lr_critic),
            actor,
            critic1,
            critic2,
            log_alpha: vec![init_alpha.max(1e-8).ln()],
            alpha_adam: VecAdam::new(1, cfg.lr_actor),
            target_entropy,
            buffer: ReplayBuffer::new(cfg.buffer_capacity),
            cfg: cfg.clone(),
            obs_dim,
            act_dim,
            total_steps: 0,
        }
    }

    pub fn alpha(&self) -> f64 {
        self.log_alpha[0].exp()
    }

    fn head(&self, out_row: &[f64]) -> GaussianHead {
        let k = self.act_dim;
        GaussianHead::new(out_row[..k].to_vec(), out_row[k..].to_vec())
    }

    /// Actor objective `mean(alpha * log pi - min(Q1, Q2))` under fixed noise
    /// plus its gradients with respect to the given actor's parameters.
    /// Taking the noise matrix explicitly keeps the computation a pure
    /// function, which the tests probe with finite differences.
    fn actor_terms(
        &self,
        actor: &Mlp,
        obs: &Mat,
        eps: &Mat,
        alpha: f64,
    ) -> Result<(f64, Gradients, Vec<f64>), AlgoError> {
        let b = obs.rows;
        let k = self.act_dim;
        let (out, tape_a) = actor.forward_batch(obs)?;
        let mut act = Mat::zeros(b, k);
        let mut stds = Mat::zeros(b, k);
        let mut clamp_mask = vec![1.0; b * k];
        let mut logp = vec![0.0; b];
        for i in 0..b {
            let row = out.row(i);
            for j in 0..k {
                let raw_ls = row[k + j];
                if !(LOG_STD_MIN..=LOG_STD_MAX).contains(&raw_ls) {
                    clamp_mask[i * k + j] = 0.0;
                }
                let ls = raw_ls.clamp(LOG_STD_MIN, LOG_STD_MAX);
                let std = ls.exp();
                let e = eps.row(i)[j];
                let u = row[j] + std * e;
                let a = u.tanh();
                act.row_mut(i)[j] = a;
                stds.row_mut(i)[j] = std;
                logp[i] += -0.5 * e * e - ls - 0.5 * LN_2PI - (1.0 - a * a + TANH_EPS).ln();
            }
        }
        let sa = concat_cols(obs, &act);
        let (q1, tape1) = self.critic1.forward_batch(&sa)?;
        let (q2, tape2) = self.critic2.forward_batch(&sa)?;

        let mut loss = 0.0;
        let mut g1 = Mat::zeros(b, 1);
        let mut g2 = Mat::zeros(b, 1);
        let inv_b = 1.0 / b as f64;
        for i in 0..b {
            loss += alpha * logp[i] - q1.data[i].min(q2.data[i]);
            if q1.data[i] <= q2.data[i] {
                g1.data[i] = -inv_b;
            } else {
                g2.data[i] = -inv_b;
            }
        }
        let loss = check_finite(loss * inv_b, "sac actor loss")?;
        let back1 = self.critic1.backward_batch(&tape1, &g1)?;
        let back2 = self.critic2.backward_batch(&tape2, &g2)?;
        let dq1 = col_slice(&back1.dx, self.obs_dim, self.obs_dim + k);
        let dq2 = col_slice(&back2.dx, self.obs_dim, self.obs_dim + k);

        let mut out_grad = Mat::zeros(b, 2 * k);
        for i in 0..b {
            for j in 0..k {
                let a = act.row(i)[j];
                let sech2 = 1.0 - a * a;
                let dlogp_du = 2.0 * a * sech2 / (sech2 + TANH_EPS);
                // The critic backward rows already carry the -1/B scaling.
                let dq_da = dq1.row(i)[j] + dq2.row(i)[j];
                let du = alpha * dlogp_du * inv_b + dq_da * sech2;
                let s_eps = stds.row(i)[j] * eps.row(i)[j];
                out_grad.row_mut(i)[j] = du;
                out_grad.row_mut(i)[k + j] = (du * s_eps - alpha * inv_b) * clamp_mask[i * k + j];
            }
        }
        let grads = actor.backward_batch(&tape_a, &out_grad)?;
        Ok((loss, grads, logp))
    }

    fn update(&mut self, rng: &mut ChaCha8Rng) -> Result<UpdateStats, AlgoError> {
        let idx = self.buffer.sample_indices(self.cfg.batch_size, rng);
        let batch = assemble_batch(&self.buffer, &idx);
        let b = idx.len();
        let k = self.act_dim;
        let alpha = self.alpha();

        // Entropy-regularized twin-min target.
        let (next_out, _) = self.actor.forward_batch(&batch.next_obs)?;
        let mut next_act = Mat::zeros(b, k);
        let mut next_logp = vec![0.0; b];
        for i in 0..b {
            let head = self.head(next_out.row(i));
            let s = crate::nn::gaussian_sample(&head, rng);
            next_act.row_mut(i).copy_from_slice(&s.action);
            next_logp[i] = s.log_prob;
        }
        let next_in = concat_cols(&batch.next_obs, &next_act);
        let (q1t, _) = self.critic1_target.forward_batch(&next_in)?;
        let (q2t, _) = self.critic2_target.forward_batch(&next_in)?;
        let soft_q: Vec<f64> = (0..b)
            .map(|i| q1t.data[i].min(q2t.data[i]) - alpha * next_logp[i])
            .collect();
        let y = td_target(&batch.rewards, &batch.dones, &soft_q, self.cfg.gamma);

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
            critic_loss_total += check_finite(loss / b as f64, "sac critic loss")?;
            let grads = critic.backward_batch(&tape, &grad)?;
            adam_step(critic, &grads, adam)?;
        }

        // Reparameterized actor step.
        let mut eps = Mat::zeros(b, k);
        for v in eps.data.iter_mut() {
            *v = StandardNormal.sample(rng);
        }
        let (actor_loss, actor_grads, logp) =
            self.actor_terms(&self.actor, &batch.obs, &eps, alpha)?;
        adam_step(&mut self.actor, &actor_grads, &mut self.adam_actor)?;

        if let AlphaMode::Auto { .. } = self.cfg.alpha {
            let mean_term = logp.iter().map(|l| l + self.target_entropy).sum::<f64>() / b as f64;
            self.alpha_adam.step(&mut self.log_alpha, &[-mean_term])?;
        }

        self.critic1_target
            .soft_update_from(&self.critic1, self.cfg.tau);
        self.critic2_target
            .soft_update_from(&self.critic2, self.cfg.tau);

        Ok(UpdateStats {
            critic_loss: critic_loss_total / 2.0,
            actor_loss,
        })
    }
}

impl Agent for SacAgent {
    fn select_action(&mut self, obs: &[f64], _progress: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
        if self.total_steps < self.cfg.warmup_steps {
            return (0..self.act_dim).map(|_| rng.random_range(-1.0..=1.0)).collect();
        }
        let out = self.actor.infer(obs);
        gaussian_action(&self.head(&out), rng)
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
            algo: AlgoId::Sac,
            actor: self.actor.clone(),
            log_std: None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn mk_agent(cfg: &AlgoConfig) -> (SacAgent, ChaCha8Rng) {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let agent = SacAgent::new(4, 2, cfg, &mut rng);
        (agent, rng)
    }

    fn push_transitions(agent: &mut SacAgent, n: usize, rng: &mut ChaCha8Rng) {
        for _ in 0..n {
            let obs: Vec<f64> = (0..4).map(|_| rng.random_range(-1.0..1.0)).collect();
            agent.buffer.push(Transition {
                obs: obs.clone(),
                action: (0..2).map(|_| rng.random_range(-0.9..0.9)).collect(),
                reward: rng.random_range(-1.0..1.0),
                next_obs: obs,
                done: false,
            });
        }
    }

    #[test]
    fn alpha_decreases_when_entropy_exceeds_target() {
        // A freshly initialized head has std near 1, so the policy's entropy
        // sits far above a very low target; the temperature must shrink.
        let mut cfg = AlgoConfig::new(AlgoId::Sac, 2);
        cfg.batch_size = 16;
        cfg.alpha = AlphaMode::Auto {
            target_entropy: Some(-20.0),
        };
        let (mut agent, mut rng) = mk_agent(&cfg);
        push_transitions(&mut agent, 32, &mut rng);
        let before = agent.alpha();
        for _ in 0..10 {
            agent.update(&mut rng).unwrap();
        }
        assert!(agent.alpha() < before, "{} !< {before}", agent.alpha());
    }

    #[test]
    fn fixed_alpha_stays_put() {
        let mut cfg = AlgoConfig::new(AlgoId::Sac, 4);
        cfg.batch_size = 8;
        cfg.alpha = AlphaMode::Fixed(0.37);
        let (mut agent, mut rng) = mk_agent(&cfg);
        push_transitions(&mut agent, 16, &mut rng);
        for _ in 0..5 {
            agent.update(&mut rng).unwrap();
        }
        assert!((agent.alpha() - 0.37).abs() < 1e-12);
    }

    #[test]
    fn updates_are_deterministic() {
        let mut cfg = AlgoConfig::new(AlgoId::Sac, 6);
        cfg.batch_size = 8;
        let run = || {
            let (mut agent, mut rng) = mk_agent(&cfg);
            push_transitions(&mut agent, 16, &mut rng);
            (0..5)
                .map(|_| agent.update(&mut rng).unwrap().actor_loss)
                .collect::<Vec<_>>()
        };
        assert_eq!(run(), run());
    }

    /// Finite differences over actor parameters of the fixed-noise objective,
    /// covering the squash, the clamped log-std head, and the critic routing.
    #[test]
    fn actor_gradient_matches_finite_difference() {
        let mut cfg = AlgoConfig::new(AlgoId::Sac, 9);
        cfg.batch_size = 4;
        let (mut agent, mut rng) = mk_agent(&cfg);
        // Smooth activations keep the finite-difference probe clean.
        agent.actor = Mlp::init(&[4, 8, 4], Activation::Tanh, Activation::Identity, &mut rng);
        agent.actor.scale_last_layer(0.2);
        agent.critic1 = Mlp::init(&[6, 8, 1], Activation::Tanh, Activation::Identity, &mut rng);
        agent.critic2 = Mlp::init(&[6, 8, 1], Activation::Tanh, Activation::Identity, &mut rng);
        push_transitions(&mut agent, 8, &mut rng);

        let idx = agent.buffer.sample_indices(4, &mut rng);
        let batch = assemble_batch(&agent.buffer, &idx);
        let mut eps = Mat::zeros(4, 2);
        for v in eps.data.iter_mut() {
            *v = StandardNormal.sample(&mut rng);
        }
        let alpha = 0.3;
        let (_, grads, _) = agent
            .actor_terms(&agent.actor, &batch.obs, &eps, alpha)
            .unwrap();

        let h = 1e-6;
        for (layer, widx) in [(0usize, 0usize), (0, 9), (1, 3), (1, 17)] {
            let mut probe = agent.actor.clone();
            let orig = probe.weights[layer].data[widx];
            probe.weights[layer].data[widx] = orig + h;
            let (up, _, _) = agent.actor_terms(&probe, &batch.obs, &eps, alpha).unwrap();
            probe.weights[layer].data[widx] = orig - h;
            let (down, _, _) = agent.actor_terms(&probe, &batch.obs, &eps, alpha).unwrap();
            let fd = (up - down) / (2.0 * h);
            let an = grads.dw[layer].data[widx];
            assert!(
                (an - fd).abs() / an.abs().max(fd.abs()).max(1e-4) < 1e-3,
                "layer {layer} idx {widx}: analytic {an} vs fd {fd}"
            );
        }
    }
}
