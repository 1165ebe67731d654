use serde::{Deserialize, Serialize};

use super::{critic_action_grad, critic_input, critic_step, ActMode, ActionBounds, Batch, GaussianActor, Transition};
use crate::error::Result;
use crate::linalg::Matrix;
use crate::nn::{Activation, Adam, Mlp};
use crate::rng::Rng;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SacConfig {
    pub hidden: usize,
    pub layers: usize,
    pub activation: Activation,
    pub lr: f64,
    pub gamma: f64,
    pub tau: f64,
    pub init_alpha: f64,
    /// Defaults to `−dim(action)`.
    pub target_entropy: Option<f64>,
}

impl Default for SacConfig {
    fn default() -> Self {
        SacConfig {
            hidden: 256,
            layers: 2,
            activation: Activation::Silu,
            lr: 1e-3,
            gamma: 0.99,
            tau: 0.005,
            init_alpha: 1.0,
            target_entropy: None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SacLosses {
    pub q1_loss: f64,
    pub q2_loss: f64,
    pub actor_loss: f64,
    pub alpha_loss: f64,
    pub alpha: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SacAgent {
    pub cfg: SacConfig,
    pub actor: GaussianActor,
    pub q1: Mlp,
    pub q2: Mlp,
    pub q1_target: Mlp,
    pub q2_target: Mlp,
    pub log_alpha: f64,
    actor_opt: Adam,
    q1_opt: Adam,
    q2_opt: Adam,
    alpha_opt: Adam,
}

impl SacAgent {
    pub fn new(obs_dim: usize, bounds: ActionBounds, cfg: SacConfig, rng: &mut Rng) -> Result<Self> {
        let q = bounds.dim();
        let actor = GaussianActor::new(obs_dim, bounds, cfg.hidden, cfg.layers, cfg.activation, rng)?;
        let q1 = Mlp::with_hidden(obs_dim + q, cfg.hidden, cfg.layers, 1, cfg.activation, rng)?;
        let q2 = Mlp::with_hidden(obs_dim + q, cfg.hidden, cfg.layers, 1, cfg.activation, rng)?;
        Ok(SacAgent {
            actor_opt: Adam::new(actor.net.n_params(), cfg.lr),
            q1_opt: Adam::new(q1.n_params(), cfg.lr),
            q2_opt: Adam::new(q2.n_params(), cfg.lr),
            alpha_opt: Adam::new(1, cfg.lr),
            log_alpha: cfg.init_alpha.ln(),
            q1_target: q1.clone(),
            q2_target: q2.clone(),
            q1,
            q2,
            actor,
            cfg,
        })
    }

    pub fn alpha(&self) -> f64 {
        self.log_alpha.exp()
    }

    pub fn target_entropy(&self) -> f64 {
        self.cfg.target_entropy.unwrap_or(-(self.actor.act_dim() as f64))
    }

    pub fn act(&self, state: &[f64], mode: ActMode, rng: &mut Rng) -> Result<Vec<f64>> {
        match mode {
            ActMode::Explore => self.actor.sample_action(state, rng),
            ActMode::Evaluate => self.actor.mean_action(state),
        }
    }

    /// Soft Bellman targets `r + γ(1−d)(min Q̄(s', a') − α log π(a'|s'))` with
    /// `a' = squash(μ(s') + σ(s')·eps)`, computed from target critics only.
    pub fn q_targets(&self, batch: &[&Transition], eps: Matrix) -> Result<Vec<f64>> {
        let b = Batch::from_transitions(batch)?;
        self.targets_for(&b, eps)
    }

    fn targets_for(&self, b: &Batch, eps: Matrix) -> Result<Vec<f64>> {
        let next = self.actor.sample_batch(&b.next_states, eps)?;
        let x = critic_input(&b.next_states, &next.actions);
        let q1 = self.q1_target.forward_batch(&x)?;
        let q2 = self.q2_target.forward_batch(&x)?;
        let alpha = self.alpha();
        Ok((0..b.len())
            .map(|i| {
                let soft = q1.get(i, 0).min(q2.get(i, 0)) - alpha * next.log_prob[i];
                b.rewards[i] + self.cfg.gamma * b.not_done[i] * soft
            })
            .collect())
    }

    /// `mean[α log π(ã|s) − min Q(s, ã)]` for reparameterized `ã` and its
    /// gradient with respect to the actor parameters.
    pub fn actor_loss_and_grad(&self, states: &Matrix, eps: Matrix) -> Result<(f64, Vec<f64>)> {
        let s = self.actor.sample_batch(states, eps)?;
        let (q1, g1) = critic_action_grad(&self.q1, states, &s.actions)?;
        let (q2, g2) = critic_action_grad(&self.q2, states, &s.actions)?;
        let n = states.rows() as f64;
        let alpha = self.alpha();
        let mut loss = 0.0;
        let mut dl_da = Matrix::zeros(states.rows(), self.actor.act_dim());
        for i in 0..states.rows() {
            let (q, g) = if q1[i] <= q2[i] { (q1[i], &g1) } else { (q2[i], &g2) };
            loss += (alpha * s.log_prob[i] - q) / n;
            for j in 0..self.actor.act_dim() {
                dl_da.set(i, j, -g.get(i, j) / n);
            }
        }
        let dl_dlogp = vec![alpha / n; states.rows()];
        let mut grads = vec![0.0; self.actor.net.n_params()];
        self.actor.backward(&s, &dl_da, &dl_dlogp, &mut grads)?;
        Ok((loss, grads))
    }

    pub fn update(&mut self, batch: &[&Transition], rng: &mut Rng) -> Result<SacLosses> {
        let b = Batch::from_transitions(batch)?;
        let q = self.actor.act_dim();
        let eps_next = Matrix::from_fn(b.len(), q, |_, _| rng.normal());
        let targets = self.targets_for(&b, eps_next)?;
        let x = critic_input(&b.states, &b.actions);
        let q1_loss = critic_step(&mut self.q1, &mut self.q1_opt, &x, &targets)?;
        let q2_loss = critic_step(&mut self.q2, &mut self.q2_opt, &x, &targets)?;

        let eps = Matrix::from_fn(b.len(), q, |_, _| rng.normal());
        let (actor_loss, grads) = self.actor_loss_and_grad(&b.states, eps.clone())?;
        self.actor_opt.step(self.actor.net.params_mut(), &grads);

        // temperature: minimize −log α · mean(log π + H̄)
        let sample = self.actor.sample_batch(&b.states, eps)?;
        let mean_logp = sample.log_prob.iter().sum::<f64>() / b.len() as f64;
        let gap = mean_logp + self.target_entropy();
        let alpha_loss = -self.log_alpha * gap;
        let mut la = [self.log_alpha];
        self.alpha_opt.step(&mut la, &[-gap]);
        self.log_alpha = la[0].clamp(-20.0, 5.0);

        self.q1_target.soft_update_from(&self.q1, self.cfg.tau);
        self.q2_target.soft_update_from(&self.q2, self.cfg.tau);
        Ok(SacLosses { q1_loss, q2_loss, actor_loss, alpha_loss, alpha: self.alpha() })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn agent(seed: u64) -> SacAgent {
        let cfg = SacConfig { hidden: 6, layers: 1, activation: Activation::Tanh, ..Default::default() };
        SacAgent::new(3, ActionBounds::symmetric(2, 1.0), cfg, &mut Rng::seed_from(seed)).unwrap()
    }

    fn batch(n: usize, reward: f64, rng: &mut Rng) -> Vec<Transition> {
        (0..n)
            .map(|_| Transition {
                state: rng.normals(3),
                action: vec![rng.uniform_range(-1.0, 1.0), rng.uniform_range(-1.0, 1.0)],
                next_state: rng.normals(3),
                reward,
                terminal: false,
            })
            .collect()
    }

    #[test]
    fn zero_reward_zero_discount_targets_vanish() {
        let mut a = agent(0);
        a.cfg.gamma = 0.0;
        let mut rng = Rng::seed_from(1);
        let data = batch(8, 0.0, &mut rng);
        let refs: Vec<&Transition> = data.iter().collect();
        let t = a.q_targets(&refs, Matrix::from_fn(8, 2, |_, _| rng.normal())).unwrap();
        assert!(t.iter().all(|&v| v == 0.0));
        let x = critic_input(&Batch::from_transitions(&refs).unwrap().states, &Batch::from_transitions(&refs).unwrap().actions);
        let q = a.q1.forward_batch(&x).unwrap();
        let expected: f64 = q.data().iter().map(|v| v * v).sum::<f64>() / 8.0;
        let losses = a.update(&refs, &mut rng).unwrap();
        assert!((losses.q1_loss - expected).abs() < 1e-12);
    }

    #[test]
    fn actor_gradient_matches_finite_differences() {
        let a = agent(2);
        let mut rng = Rng::seed_from(3);
        let states = Matrix::from_fn(4, 3, |_, _| rng.normal());
        let eps = Matrix::from_fn(4, 2, |_, _| rng.normal());
        let (_, g) = a.actor_loss_and_grad(&states, eps.clone()).unwrap();
        let mut probe = a.clone();
        for i in 0..g.len() {
            let h = 1e-6;
            let orig = probe.actor.net.params()[i];
            probe.actor.net.params_mut()[i] = orig + h;
            let lp = probe.actor_loss_and_grad(&states, eps.clone()).unwrap().0;
            probe.actor.net.params_mut()[i] = orig - h;
            let lm = probe.actor_loss_and_grad(&states, eps.clone()).unwrap().0;
            probe.actor.net.params_mut()[i] = orig;
            let fd = (lp - lm) / (2.0 * h);
            let rel = (g[i] - fd).abs() / g[i].abs().max(fd.abs()).max(1e-6);
            assert!(rel < 1e-4, "param {i}: {} vs {fd}", g[i]);
        }
    }

    #[test]
    fn low_entropy_raises_temperature() {
        let mut a = agent(4);
        // a near-deterministic actor: push the log-std biases to the floor
        let q = a.actor.act_dim();
        let (_, bias) = a.actor.net.layer_mut(1);
        for b in &mut bias[q..] {
            *b = -20.0;
        }
        let mut rng = Rng::seed_from(5);
        let data = batch(16, 0.0, &mut rng);
        let refs: Vec<&Transition> = data.iter().collect();
        let before = a.alpha();
        a.update(&refs, &mut rng).unwrap();
        assert!(a.alpha() > before);
    }

    #[test]
    fn targets_ignore_online_critics() {
        let a = agent(6);
        let mut rng = Rng::seed_from(7);
        let data = batch(5, 1.0, &mut rng);
        let refs: Vec<&Transition> = data.iter().collect();
        let eps = Matrix::from_fn(5, 2, |_, _| rng.normal());
        let t1 = a.q_targets(&refs, eps.clone()).unwrap();
        let mut b = a.clone();
        b.q1.params_mut().iter_mut().for_each(|p| *p += 1.0);
        b.q2.params_mut().iter_mut().for_each(|p| *p -= 1.0);
        assert_eq!(t1, b.q_targets(&refs, eps).unwrap());
    }

    #[test]
    fn evaluate_is_deterministic_and_bounded() {
        let a = agent(8);
        let mut rng = Rng::seed_from(9);
        for _ in 0..200 {
            let s: Vec<f64> = rng.normals(3).iter().map(|v| v * 100.0).collect();
            let e1 = a.act(&s, ActMode::Evaluate, &mut rng).unwrap();
            let e2 = a.act(&s, ActMode::Evaluate, &mut rng).unwrap();
            assert_eq!(e1, e2);
            let x = a.act(&s, ActMode::Explore, &mut rng).unwrap();
            assert!(x.iter().chain(&e1).all(|v| (-1.0..=1.0).contains(v)));
        }
    }

    #[test]
    fn polyak_drift_is_tau_times_gap() {
        let mut a = agent(10);
        let mut rng = Rng::seed_from(11);
        a.q1_target.params_mut().iter_mut().for_each(|p| *p += 0.5);
        let data = batch(4, 0.3, &mut rng);
        let refs: Vec<&Transition> = data.iter().collect();
        let before = a.q1_target.clone();
        a.update(&refs, &mut rng).unwrap();
        for i in 0..before.n_params() {
            let expected = before.params()[i] + a.cfg.tau * (a.q1.params()[i] - before.params()[i]);
            assert!((a.q1_target.params()[i] - expected).abs() < 1e-15);
        }
    }
}
