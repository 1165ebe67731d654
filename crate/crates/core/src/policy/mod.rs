//! Policy search on hallucinated data: replay buffers, SAC and a DDPG variant
//! whose actor is a Gaussian.

mod buffer;
mod ddpg;
mod sac;

use serde::{Deserialize, Serialize};

pub use buffer::{Transition, TransitionBuffer};
pub use ddpg::{DdpgAgent, DdpgConfig, DdpgLosses};
pub use sac::{SacAgent, SacConfig, SacLosses};

use crate::error::Result;
use crate::linalg::Matrix;
use crate::nn::{soft_clamp, soft_clamp_grad, Activation, ForwardCache, Mlp};
use crate::rng::Rng;

const HALF_LN_2PI: f64 = 0.918_938_533_204_672_8;
const LN_2: f64 = std::f64::consts::LN_2;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ActMode {
    Explore,
    Evaluate,
}

/// Box action space; actions are `mid + half·tanh(u)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ActionBounds {
    pub low: Vec<f64>,
    pub high: Vec<f64>,
}

impl ActionBounds {
    pub fn new(low: Vec<f64>, high: Vec<f64>) -> Self {
        assert_eq!(low.len(), high.len(), "action bound lengths");
        assert!(low.iter().zip(&high).all(|(l, h)| l < h), "empty action interval");
        ActionBounds { low, high }
    }

    pub fn symmetric(dim: usize, limit: f64) -> Self {
        Self::new(vec![-limit; dim], vec![limit; dim])
    }

    pub fn dim(&self) -> usize {
        self.low.len()
    }

    pub fn mid(&self, j: usize) -> f64 {
        0.5 * (self.low[j] + self.high[j])
    }

    pub fn half(&self, j: usize) -> f64 {
        0.5 * (self.high[j] - self.low[j])
    }

    pub fn squash(&self, j: usize, u: f64) -> f64 {
        (self.mid(j) + self.half(j) * u.tanh()).clamp(self.low[j], self.high[j])
    }

    pub fn clip(&self, a: &mut [f64]) {
        for (j, v) in a.iter_mut().enumerate() {
            *v = v.clamp(self.low[j], self.high[j]);
        }
    }

    pub fn uniform(&self, rng: &mut Rng) -> Vec<f64> {
        (0..self.dim()).map(|j| rng.uniform_range(self.low[j], self.high[j])).collect()
    }
}

/// `ln(1 − tanh²u)` without cancellation for large `|u|`.
pub fn log_one_minus_tanh_sq(u: f64) -> f64 {
    2.0 * (LN_2 - u - crate::nn::softplus(-2.0 * u))
}

/// Observation → `[μ, raw log σ]` network with a tanh-squashed Gaussian on top.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GaussianActor {
    pub net: Mlp,
    pub bounds: ActionBounds,
    pub logstd_min: f64,
    pub logstd_max: f64,
}

/// Reparameterized actions for a batch and everything needed to
/// backpropagate through them.
pub struct ActorSample {
    pub cache: ForwardCache,
    pub raw: Matrix,
    pub eps: Matrix,
    pub u: Matrix,
    pub actions: Matrix,
    /// `log π(a|s)` per row, tanh and scaling corrections included.
    pub log_prob: Vec<f64>,
}

impl GaussianActor {
    pub fn new(obs_dim: usize, bounds: ActionBounds, hidden: usize, layers: usize, act: Activation, rng: &mut Rng) -> Result<Self> {
        let net = Mlp::with_hidden(obs_dim, hidden, layers, 2 * bounds.dim(), act, rng)?;
        Ok(GaussianActor { net, bounds, logstd_min: -5.0, logstd_max: 2.0 })
    }

    pub fn act_dim(&self) -> usize {
        self.bounds.dim()
    }

    pub fn logstd(&self, raw: f64) -> f64 {
        soft_clamp(raw, self.logstd_min, self.logstd_max)
    }

    pub fn logstd_grad(&self, raw: f64) -> f64 {
        soft_clamp_grad(raw, self.logstd_min, self.logstd_max)
    }

    /// `(μ, σ)` in pre-squash space for one state.
    pub fn distribution(&self, state: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        let out = self.net.forward(state)?;
        let q = self.act_dim();
        let sd = out[q..].iter().map(|&r| self.logstd(r).exp()).collect();
        Ok((out[..q].to_vec(), sd))
    }

    pub fn mean_action(&self, state: &[f64]) -> Result<Vec<f64>> {
        let (mu, _) = self.distribution(state)?;
        Ok(mu.iter().enumerate().map(|(j, &u)| self.bounds.squash(j, u)).collect())
    }

    pub fn sample_action(&self, state: &[f64], rng: &mut Rng) -> Result<Vec<f64>> {
        let (mu, sd) = self.distribution(state)?;
        Ok((0..self.act_dim()).map(|j| self.bounds.squash(j, mu[j] + sd[j] * rng.normal())).collect())
    }

    /// Log density of the squashed action obtained from pre-squash `u`.
    pub fn log_prob_from_u(&self, mu: &[f64], sd: &[f64], u: &[f64]) -> f64 {
        (0..u.len())
            .map(|j| {
                let z = (u[j] - mu[j]) / sd[j];
                -0.5 * z * z - sd[j].ln() - HALF_LN_2PI - log_one_minus_tanh_sq(u[j]) - self.bounds.half(j).ln()
            })
            .sum()
    }

    /// Batched reparameterized sample with caller-provided noise `eps`.
    pub fn sample_batch(&self, states: &Matrix, eps: Matrix) -> Result<ActorSample> {
        let (raw, cache) = self.net.forward_cached(states)?;
        let (b, q) = (states.rows(), self.act_dim());
        let mut u = Matrix::zeros(b, q);
        let mut actions = Matrix::zeros(b, q);
        let mut log_prob = vec![0.0; b];
        for i in 0..b {
            let row = raw.row(i);
            let mu = &row[..q];
            let sd: Vec<f64> = row[q..].iter().map(|&r| self.logstd(r).exp()).collect();
            for j in 0..q {
                let uj = mu[j] + sd[j] * eps.get(i, j);
                u.set(i, j, uj);
                actions.set(i, j, self.bounds.mid(j) + self.bounds.half(j) * uj.tanh());
            }
            log_prob[i] = self.log_prob_from_u(mu, &sd, u.row(i));
        }
        Ok(ActorSample { cache, raw, eps, u, actions, log_prob })
    }

    /// Backpropagate `dL/da` (per row) and `dL/d log π` (per row) through a
    /// sample into parameter gradients.
    pub fn backward(&self, s: &ActorSample, dl_da: &Matrix, dl_dlogp: &[f64], grads: &mut [f64]) -> Result<()> {
        let (b, q) = (s.u.rows(), self.act_dim());
        let mut up = Matrix::zeros(b, 2 * q);
        for i in 0..b {
            for j in 0..q {
                let u = s.u.get(i, j);
                let t = u.tanh();
                let h = self.bounds.half(j);
                let raw = s.raw.get(i, q + j);
                let sd = self.logstd(raw).exp();
                // log π = Σ −½ε² − log σ − ½ln2π − ln(1−t²) − ln h, with ε held fixed
                let dl_du = dl_da.get(i, j) * h * (1.0 - t * t) + dl_dlogp[i] * 2.0 * t;
                let dl_dsd = dl_du * s.eps.get(i, j) - dl_dlogp[i] / sd;
                up.set(i, j, dl_du);
                up.set(i, q + j, dl_dsd * sd * self.logstd_grad(raw));
            }
        }
        self.net.backward_batch(&s.cache, &up, grads)?;
        Ok(())
    }
}

/// Stacked `[s, a]` critic inputs.
pub(crate) fn critic_input(states: &Matrix, actions: &Matrix) -> Matrix {
    let (p, q) = (states.cols(), actions.cols());
    Matrix::from_fn(states.rows(), p + q, |i, j| if j < p { states.get(i, j) } else { actions.get(i, j - p) })
}

/// `dQ/da` per row for a scalar critic.
pub(crate) fn critic_action_grad(critic: &Mlp, states: &Matrix, actions: &Matrix) -> Result<(Vec<f64>, Matrix)> {
    let x = critic_input(states, actions);
    let (q, cache) = critic.forward_cached(&x)?;
    let ones = Matrix::from_fn(x.rows(), 1, |_, _| 1.0);
    let mut scratch = vec![0.0; critic.n_params()];
    let dx = critic.backward_batch(&cache, &ones, &mut scratch)?;
    let p = states.cols();
    let da = Matrix::from_fn(x.rows(), actions.cols(), |i, j| dx.get(i, p + j));
    Ok((q.into_vec(), da))
}

/// Columns of a transition batch.
pub(crate) struct Batch {
    pub states: Matrix,
    pub actions: Matrix,
    pub rewards: Vec<f64>,
    pub next_states: Matrix,
    pub not_done: Vec<f64>,
}

impl Batch {
    pub fn from_transitions(ts: &[&Transition]) -> Result<Self> {
        let rows = |f: &dyn Fn(&Transition) -> &Vec<f64>| -> Result<Matrix> {
            Matrix::from_rows(&ts.iter().map(|t| f(t).clone()).collect::<Vec<_>>())
        };
        Ok(Batch {
            states: rows(&|t| &t.state)?,
            actions: rows(&|t| &t.action)?,
            rewards: ts.iter().map(|t| t.reward).collect(),
            next_states: rows(&|t| &t.next_state)?,
            not_done: ts.iter().map(|t| if t.terminal { 0.0 } else { 1.0 }).collect(),
        })
    }

    pub fn len(&self) -> usize {
        self.rewards.len()
    }
}

/// Mean-squared Bellman regression of a scalar critic; returns the loss.
pub(crate) fn critic_step(critic: &mut Mlp, opt: &mut crate::nn::Adam, inputs: &Matrix, targets: &[f64]) -> Result<f64> {
    let (q, cache) = critic.forward_cached(inputs)?;
    let n = targets.len() as f64;
    let mut loss = 0.0;
    let up = Matrix::from_fn(targets.len(), 1, |i, _| {
        let e = q.get(i, 0) - targets[i];
        loss += e * e / n;
        2.0 * e / n
    });
    let mut g = vec![0.0; critic.n_params()];
    critic.backward_batch(&cache, &up, &mut g)?;
    opt.step(critic.params_mut(), &g);
    Ok(loss)
}

/// The two policy-search algorithms behind one interface.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[allow(clippy::large_enum_variant)]
pub enum Agent {
    Sac(SacAgent),
    Ddpg(DdpgAgent),
}

impl Agent {
    pub fn act(&self, state: &[f64], mode: ActMode, rng: &mut Rng) -> Result<Vec<f64>> {
        match self {
            Agent::Sac(a) => a.act(state, mode, rng),
            Agent::Ddpg(a) => a.act(state, mode, rng),
        }
    }

    /// One gradient update; returns the critic loss for logging.
    pub fn update(&mut self, batch: &[&Transition], rng: &mut Rng) -> Result<f64> {
        match self {
            Agent::Sac(a) => a.update(batch, rng).map(|l| l.q1_loss),
            Agent::Ddpg(a) => a.update(batch, rng).map(|l| l.q_loss),
        }
    }

    /// Training progress in `[0, 1]`, used by annealed exploration noise.
    pub fn set_progress(&mut self, progress: f64) {
        if let Agent::Ddpg(a) = self {
            a.set_progress(progress);
        }
    }

    pub fn actor(&self) -> &GaussianActor {
        match self {
            Agent::Sac(a) => &a.actor,
            Agent::Ddpg(a) => &a.actor,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stable_log_one_minus_tanh_sq() {
        for u in [-30.0, -3.0, -0.2, 0.0, 0.7, 4.0, 25.0] {
            let direct = (1.0 - f64::tanh(u).powi(2)).ln();
            let stable = log_one_minus_tanh_sq(u);
            if u.abs() < 5.0 {
                assert!((direct - stable).abs() < 1e-12);
            }
            assert!(stable.is_finite());
        }
        // ln(4) − 2|u| asymptotically
        assert!((log_one_minus_tanh_sq(50.0) - (4f64.ln() - 100.0)).abs() < 1e-12);
    }

    #[test]
    fn log_prob_matches_change_of_variables() {
        let mut rng = Rng::seed_from(5);
        let bounds = ActionBounds::new(vec![-2.0, 0.0], vec![2.0, 1.0]);
        let actor = GaussianActor::new(3, bounds.clone(), 8, 1, Activation::Tanh, &mut rng).unwrap();
        for _ in 0..50 {
            let s = rng.normals(3);
            let (mu, sd) = actor.distribution(&s).unwrap();
            let u: Vec<f64> = (0..2).map(|j| mu[j] + sd[j] * rng.normal()).collect();
            let analytic = actor.log_prob_from_u(&mu, &sd, &u);
            // density of u, divided by |da/du| estimated by central differences
            let mut numeric = 0.0;
            for j in 0..2 {
                let z = (u[j] - mu[j]) / sd[j];
                let log_pu = -0.5 * z * z - sd[j].ln() - HALF_LN_2PI;
                let h = 1e-6;
                let a = |x: f64| bounds.mid(j) + bounds.half(j) * x.tanh();
                let jac = (a(u[j] + h) - a(u[j] - h)) / (2.0 * h);
                numeric += log_pu - jac.ln();
            }
            assert!((analytic - numeric).abs() < 1e-6, "{analytic} vs {numeric}");
        }
    }

    #[test]
    fn squashed_actions_respect_bounds() {
        let b = ActionBounds::new(vec![-1.0, 2.0], vec![1.0, 3.0]);
        for u in [-1e9, -3.0, 0.0, 3.0, 1e9] {
            for j in 0..2 {
                let a = b.squash(j, u);
                assert!(a >= b.low[j] && a <= b.high[j]);
            }
        }
        assert_eq!(b.squash(1, 0.0), 2.5);
    }
}
