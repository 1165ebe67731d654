use serde::{Deserialize, Serialize};

use super::{critic_action_grad, critic_input, critic_step, ActMode, ActionBounds, Batch, GaussianActor, Transition};
use crate::error::Result;
use crate::linalg::Matrix;
use crate::nn::{Activation, Adam, Mlp};
use crate::rng::Rng;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DdpgConfig {
    pub hidden: usize,
    pub layers: usize,
    pub activation: Activation,
    pub lr: f64,
    pub gamma: f64,
    pub tau: f64,
    /// Additive Gaussian exploration noise on top of the actor's own sample.
    pub explore_noise: bool,
    pub noise_start: f64,
    pub noise_end: f64,
}

impl Default for DdpgConfig {
    fn default() -> Self {
        DdpgConfig {
            hidden: 256,
            layers: 2,
            activation: Activation::Silu,
            lr: 1e-3,
            gamma: 0.99,
            tau: 0.005,
            explore_noise: false,
            noise_start: 1.0,
            noise_end: 0.1,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DdpgLosses {
    pub q_loss: f64,
    pub actor_loss: f64,
}

/// DDPG whose actor is a tanh-squashed Gaussian.
///
/// Acting samples from the actor; the critic bootstraps from the target
/// critic at the online actor's mean action; the actor ascends
/// `Q(s, squash(μ + σ·ε))` through the reparameterization.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DdpgAgent {
    pub cfg: DdpgConfig,
    pub actor: GaussianActor,
    pub q: Mlp,
    pub q_target: Mlp,
    progress: f64,
    actor_opt: Adam,
    q_opt: Adam,
}

impl DdpgAgent {
    pub fn new(obs_dim: usize, bounds: ActionBounds, cfg: DdpgConfig, rng: &mut Rng) -> Result<Self> {
        let qd = bounds.dim();
        let actor = GaussianActor::new(obs_dim, bounds, cfg.hidden, cfg.layers, cfg.activation, rng)?;
        let q = Mlp::with_hidden(obs_dim + qd, cfg.hidden, cfg.layers, 1, cfg.activation, rng)?;
        Ok(DdpgAgent {
            actor_opt: Adam::new(actor.net.n_params(), cfg.lr),
            q_opt: Adam::new(q.n_params(), cfg.lr),
            q_target: q.clone(),
            q,
            actor,
            progress: 0.0,
            cfg,
        })
    }

    pub fn set_progress(&mut self, progress: f64) {
        self.progress = progress.clamp(0.0, 1.0);
    }

    /// Current scale of the additive exploration noise (0 when disabled).
    pub fn noise_scale(&self) -> f64 {
        if !self.cfg.explore_noise {
            return 0.0;
        }
        self.cfg.noise_start + (self.cfg.noise_end - self.cfg.noise_start) * self.progress
    }

    pub fn act(&self, state: &[f64], mode: ActMode, rng: &mut Rng) -> Result<Vec<f64>> {
        match mode {
            ActMode::Evaluate => self.actor.mean_action(state),
            ActMode::Explore => {
                let mut a = self.actor.sample_action(state, rng)?;
                let sigma = self.noise_scale();
                if sigma > 0.0 {
                    for (j, v) in a.iter_mut().enumerate() {
                        *v += sigma * self.actor.bounds.half(j) * rng.normal();
                    }
                    self.actor.bounds.clip(&mut a);
                }
                Ok(a)
            }
        }
    }

    /// `r + γ(1−d)·Q̄(s', squash(μ(s')))`.
    pub fn q_targets(&self, batch: &[&Transition]) -> Result<Vec<f64>> {
        let b = Batch::from_transitions(batch)?;
        self.targets_for(&b)
    }

    fn targets_for(&self, b: &Batch) -> Result<Vec<f64>> {
        let zeros = Matrix::zeros(b.len(), self.actor.act_dim());
        let next = self.actor.sample_batch(&b.next_states, zeros)?;
        let q = self.q_target.forward_batch(&critic_input(&b.next_states, &next.actions))?;
        Ok((0..b.len()).map(|i| b.rewards[i] + self.cfg.gamma * b.not_done[i] * q.get(i, 0)).collect())
    }

    /// `−mean Q(s, squash(μ + σ·eps))` and its actor-parameter gradient.
    pub fn actor_loss_and_grad(&self, states: &Matrix, eps: Matrix) -> Result<(f64, Vec<f64>)> {
        let s = self.actor.sample_batch(states, eps)?;
        let (q, g) = critic_action_grad(&self.q, states, &s.actions)?;
        let n = states.rows() as f64;
        let loss = -q.iter().sum::<f64>() / n;
        let dl_da = g.scale(-1.0 / n);
        let mut grads = vec![0.0; self.actor.net.n_params()];
        self.actor.backward(&s, &dl_da, &vec![0.0; states.rows()], &mut grads)?;
        Ok((loss, grads))
    }

    pub fn update_critic(&mut self, batch: &[&Transition]) -> Result<f64> {
        let b = Batch::from_transitions(batch)?;
        let targets = self.targets_for(&b)?;
        critic_step(&mut self.q, &mut self.q_opt, &critic_input(&b.states, &b.actions), &targets)
    }

    pub fn update_actor(&mut self, states: &Matrix, rng: &mut Rng) -> Result<f64> {
        let eps = Matrix::from_fn(states.rows(), self.actor.act_dim(), |_, _| rng.normal());
        let (loss, grads) = self.actor_loss_and_grad(states, eps)?;
        self.actor_opt.step(self.actor.net.params_mut(), &grads);
        Ok(loss)
    }

    pub fn update(&mut self, batch: &[&Transition], rng: &mut Rng) -> Result<DdpgLosses> {
        let q_loss = self.update_critic(batch)?;
        let states = Batch::from_transitions(batch)?.states;
        let actor_loss = self.update_actor(&states, rng)?;
        self.q_target.soft_update_from(&self.q, self.cfg.tau);
        Ok(DdpgLosses { q_loss, actor_loss })
    }
}
