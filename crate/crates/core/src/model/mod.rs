//! The learned joint belief over (next state, reward).
//!
//! Inputs are the full observation followed by the action. Targets are the
//! change in each dynamic observation component followed by the reward, so the
//! reward always sits at index `D − 1`.

mod ensemble;
mod gp;

use serde::{Deserialize, Serialize};

pub use ensemble::{gaussian_nll_and_grad, BootstrapMode, EnsembleConfig, EnsembleJointModel};
pub use gp::{matern52, optimize_hyper, GpConfig, GpHyper, GpJointModel, LmcPosterior};

use crate::error::{shape, Error, Result};
use crate::gaussian::MvNormal;
use crate::linalg::{cholesky, Matrix};
use crate::policy::Transition;
use crate::rng::Rng;

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Per-column affine maps to zero mean and unit variance.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub x_mean: Vec<f64>,
    pub x_std: Vec<f64>,
    pub y_mean: Vec<f64>,
    pub y_std: Vec<f64>,
}

fn column_stats(m: &Matrix) -> (Vec<f64>, Vec<f64>) {
    let n = m.rows() as f64;
    (0..m.cols())
        .map(|j| {
            let mean = (0..m.rows()).map(|i| m.get(i, j)).sum::<f64>() / n;
            let var = (0..m.rows()).map(|i| (m.get(i, j) - mean).powi(2)).sum::<f64>() / n;
            let sd = var.sqrt();
            // constant columns (static observation parts, sparse rewards before
            // the first success) are only centred
            (mean, if sd > 1e-8 { sd } else { 1.0 })
        })
        .unzip()
}

impl Standardizer {
    pub fn from_data(x: &Matrix, y: &Matrix) -> Self {
        let (x_mean, x_std) = column_stats(x);
        let (y_mean, y_std) = column_stats(y);
        Standardizer { x_mean, x_std, y_mean, y_std }
    }

    pub fn x(&self, j: usize, v: f64) -> f64 {
        (v - self.x_mean[j]) / self.x_std[j]
    }

    pub fn y(&self, j: usize, v: f64) -> f64 {
        (v - self.y_mean[j]) / self.y_std[j]
    }

    pub fn y_inv(&self, j: usize, v: f64) -> f64 {
        v * self.y_std[j] + self.y_mean[j]
    }
}

/// Predictive distribution over `(Δ dynamic state, reward)` at one input.
#[derive(Clone, Debug, PartialEq)]
pub struct JointPrediction {
    dist: MvNormal,
}

impl JointPrediction {
    pub fn new(mean: Vec<f64>, cov: Matrix) -> Result<Self> {
        if mean.len() < 2 {
            return Err(shape("a joint prediction needs at least one state dimension and the reward"));
        }
        Ok(JointPrediction { dist: MvNormal::new(mean, cov)? })
    }

    pub fn dist(&self) -> &MvNormal {
        &self.dist
    }

    pub fn dim(&self) -> usize {
        self.dist.dim()
    }

    pub fn reward_index(&self) -> usize {
        self.dim() - 1
    }

    pub fn state_dim(&self) -> usize {
        self.dim() - 1
    }

    pub fn mean(&self) -> &[f64] {
        self.dist.mean()
    }

    pub fn cov(&self) -> &Matrix {
        self.dist.cov()
    }

    pub fn state_mean(&self) -> &[f64] {
        &self.mean()[..self.state_dim()]
    }

    pub fn reward_mean(&self) -> f64 {
        self.mean()[self.reward_index()]
    }

    pub fn reward_std(&self) -> f64 {
        self.dist.variance(self.reward_index()).max(0.0).sqrt()
    }

    pub fn state_std(&self) -> Vec<f64> {
        (0..self.state_dim()).map(|i| self.dist.variance(i).max(0.0).sqrt()).collect()
    }

    /// `Σ_sr`: covariance between each state dimension and the reward.
    pub fn cross_cov(&self) -> Vec<f64> {
        let r = self.reward_index();
        (0..self.state_dim()).map(|i| self.cov().get(i, r)).collect()
    }
}

/// Stack transitions into model inputs `[s, a]` and targets `[Δs_dyn, r]`.
pub fn training_arrays(data: &[Transition], dynamic: &[usize]) -> Result<(Matrix, Matrix)> {
    let first = data.first().ok_or_else(|| Error::DegenerateData("no transitions".into()))?;
    let (p, q) = (first.state.len(), first.action.len());
    let d = dynamic.len() + 1;
    let mut x = Matrix::zeros(data.len(), p + q);
    let mut y = Matrix::zeros(data.len(), d);
    for (i, t) in data.iter().enumerate() {
        if t.state.len() != p || t.action.len() != q || t.next_state.len() != p {
            return Err(shape("transitions of mixed dimensions"));
        }
        let row = x.row_mut(i);
        row[..p].copy_from_slice(&t.state);
        row[p..].copy_from_slice(&t.action);
        let out = y.row_mut(i);
        for (k, &j) in dynamic.iter().enumerate() {
            out[k] = t.next_state[j] - t.state[j];
        }
        out[d - 1] = t.reward;
    }
    if !x.is_finite() || !y.is_finite() {
        return Err(Error::NonFinite("training transitions".into()));
    }
    Ok((x, y))
}

fn model_input(state: &[f64], action: &[f64]) -> Vec<f64> {
    state.iter().chain(action).copied().collect()
}

/// Log density of `y` under `N(mean, cov)`.
pub fn gaussian_log_pdf(y: &[f64], mean: &[f64], cov: &Matrix) -> Result<f64> {
    let chol = cholesky(cov, 0.0)?;
    let diff: Vec<f64> = y.iter().zip(mean).map(|(a, b)| a - b).collect();
    let z = chol.forward(&diff);
    let quad: f64 = z.iter().map(|v| v * v).sum();
    Ok(-0.5 * quad - 0.5 * chol.log_det() - 0.5 * y.len() as f64 * LN_2PI)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[allow(clippy::large_enum_variant)]
pub enum JointModel {
    Gp(GpJointModel),
    Ensemble(EnsembleJointModel),
}

impl JointModel {
    pub fn is_fitted(&self) -> bool {
        match self {
            JointModel::Gp(m) => m.is_fitted(),
            JointModel::Ensemble(m) => m.is_fitted(),
        }
    }

    pub fn fit(&mut self, data: &[Transition], dynamic: &[usize], rng: &mut Rng) -> Result<()> {
        let (x, y) = training_arrays(data, dynamic)?;
        match self {
            JointModel::Gp(m) => m.fit_arrays(&x, &y, rng),
            JointModel::Ensemble(m) => m.fit_arrays(&x, &y, rng),
        }
    }

    /// Predictive belief at `(state, action)`; the ensemble uses its bootstrap
    /// mean.
    pub fn predict(&self, state: &[f64], action: &[f64]) -> Result<JointPrediction> {
        let x = model_input(state, action);
        let (mean, cov) = match self {
            JointModel::Gp(m) => m.predict(&x)?,
            JointModel::Ensemble(m) => m.predict(&x, BootstrapMode::Mean)?,
        };
        JointPrediction::new(mean, cov)
    }

    /// Mean negative log likelihood per transition of observed targets,
    /// observation noise included.
    pub fn heldout_nll(&self, data: &[Transition], dynamic: &[usize]) -> Result<f64> {
        let (x, y) = training_arrays(data, dynamic)?;
        let mut total = 0.0;
        for i in 0..x.rows() {
            let (mean, mut cov) = match self {
                JointModel::Gp(m) => m.predict(x.row(i))?,
                JointModel::Ensemble(m) => m.predict(x.row(i), BootstrapMode::Mean)?,
            };
            if let JointModel::Gp(m) = self {
                for (a, n) in m.noise_variances().into_iter().enumerate() {
                    cov.set(a, a, cov.get(a, a) + n);
                }
            }
            total -= gaussian_log_pdf(y.row(i), &mean, &cov)?;
        }
        Ok(total / x.rows() as f64)
    }

    /// Rebuild caches that are not serialized.
    pub fn restore_cache(&mut self) -> Result<()> {
        match self {
            JointModel::Gp(m) => m.restore_cache(),
            JointModel::Ensemble(_) => Ok(()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn transition(s: [f64; 3], a: f64, s2: [f64; 3], r: f64) -> Transition {
        Transition { state: s.to_vec(), action: vec![a], next_state: s2.to_vec(), reward: r, terminal: false }
    }

    #[test]
    fn arrays_hold_deltas_of_dynamic_components_and_reward_last() {
        let data = [transition([1.0, 2.0, 9.0], 0.5, [1.5, 1.0, 9.0], 0.25)];
        let (x, y) = training_arrays(&data, &[0, 1]).unwrap();
        assert_eq!(x.row(0), &[1.0, 2.0, 9.0, 0.5]);
        assert_eq!(y.row(0), &[0.5, -1.0, 0.25]);
    }

    #[test]
    fn standardizer_handles_constant_columns() {
        let x = Matrix::from_rows(&[vec![1.0, 5.0], vec![3.0, 5.0]]).unwrap();
        let s = Standardizer::from_data(&x, &x);
        assert_eq!(s.x_std, vec![1.0, 1.0]);
        assert_eq!(s.x(0, 3.0), 1.0);
        assert_eq!(s.x(1, 5.0), 0.0);
        assert_eq!(s.y_inv(0, s.y(0, 7.5)), 7.5);
    }

    #[test]
    fn log_pdf_of_standard_normal() {
        let lp = gaussian_log_pdf(&[0.0, 0.0], &[0.0, 0.0], &Matrix::identity(2)).unwrap();
        assert!((lp + LN_2PI).abs() < 1e-14);
    }

    #[test]
    fn prediction_accessors() {
        let cov = Matrix::from_rows(&[vec![1.0, 0.0, 0.3], vec![0.0, 4.0, 0.0], vec![0.3, 0.0, 0.25]]).unwrap();
        let p = JointPrediction::new(vec![1.0, 2.0, 3.0], cov).unwrap();
        assert_eq!(p.reward_index(), 2);
        assert_eq!(p.state_mean(), &[1.0, 2.0]);
        assert_eq!(p.reward_mean(), 3.0);
        assert_eq!(p.reward_std(), 0.5);
        assert_eq!(p.state_std(), vec![1.0, 2.0]);
        assert_eq!(p.cross_cov(), vec![0.3, 0.0]);
    }
}
