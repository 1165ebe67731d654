use serde::{Deserialize, Serialize};

use super::gp::shuffle;
use super::Standardizer;
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::nn::{Activation, Adam, GaussianHead, Mlp};
use crate::rng::Rng;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnsembleConfig {
    pub members: usize,
    pub hidden: usize,
    pub layers: usize,
    pub activation: Activation,
    pub epochs: usize,
    pub lr: f64,
    pub batch: usize,
    /// Rows drawn (with replacement) per member and refit.
    pub sample_cap: usize,
    pub bootstrap: bool,
    pub head: GaussianHead,
}

impl Default for EnsembleConfig {
    fn default() -> Self {
        EnsembleConfig {
            members: 7,
            hidden: 200,
            layers: 4,
            activation: Activation::Silu,
            epochs: 20,
            lr: 1e-3,
            batch: 128,
            sample_cap: 2000,
            bootstrap: true,
            head: GaussianHead::default(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BootstrapMode {
    /// Moment-matched mixture of all members.
    Mean,
    /// One member's diagonal Gaussian.
    Member(usize),
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EnsembleJointModel {
    cfg: EnsembleConfig,
    input_dim: usize,
    outputs: usize,
    members: Vec<Mlp>,
    opts: Vec<Adam>,
    scaler: Option<Standardizer>,
}

/// Mean over rows of `½Σ_d [(y−μ)²e^{−lv} + lv]` for a network emitting
/// `[μ, raw lv]`, and its gradient with respect to the raw outputs.
pub fn gaussian_nll_and_grad(out: &Matrix, y: &Matrix, head: &GaussianHead) -> (f64, Matrix) {
    let d = y.cols();
    let n = y.rows() as f64;
    let mut loss = 0.0;
    let mut grad = Matrix::zeros(out.rows(), out.cols());
    for i in 0..y.rows() {
        let row = out.row(i);
        for j in 0..d {
            let raw = row[d + j];
            let lv = head.logvar(raw);
            let inv = (-lv).exp();
            let e = y.get(i, j) - row[j];
            loss += 0.5 * (e * e * inv + lv);
            grad.set(i, j, -e * inv / n);
            grad.set(i, d + j, 0.5 * (1.0 - e * e * inv) * head.logvar_grad(raw) / n);
        }
    }
    (loss / n, grad)
}

impl EnsembleJointModel {
    pub fn new(input_dim: usize, outputs: usize, cfg: EnsembleConfig) -> Self {
        EnsembleJointModel { cfg, input_dim, outputs, members: Vec::new(), opts: Vec::new(), scaler: None }
    }

    pub fn config(&self) -> &EnsembleConfig {
        &self.cfg
    }

    pub fn is_fitted(&self) -> bool {
        self.scaler.is_some() && !self.members.is_empty()
    }

    pub fn members(&self) -> &[Mlp] {
        &self.members
    }

    pub fn members_mut(&mut self) -> &mut [Mlp] {
        &mut self.members
    }

    /// Each member trains on its own resample of the data by Gaussian NLL.
    pub fn fit_arrays(&mut self, x: &Matrix, y: &Matrix, rng: &mut Rng) -> Result<()> {
        let n = x.rows();
        if n < 2 {
            return Err(Error::DegenerateData(format!("ensemble fit needs at least 2 transitions, got {n}")));
        }
        if x.cols() != self.input_dim || y.cols() != self.outputs || y.rows() != n {
            return Err(crate::error::shape("ensemble training arrays"));
        }
        if self.members.is_empty() {
            for _ in 0..self.cfg.members {
                let net = Mlp::with_hidden(
                    self.input_dim,
                    self.cfg.hidden,
                    self.cfg.layers,
                    2 * self.outputs,
                    self.cfg.activation,
                    rng,
                )?;
                self.opts.push(Adam::new(net.n_params(), self.cfg.lr));
                self.members.push(net);
            }
        }
        let scaler = Standardizer::from_data(x, y);
        let xs = Matrix::from_fn(n, x.cols(), |i, j| scaler.x(j, x.get(i, j)));
        let ys = Matrix::from_fn(n, y.cols(), |i, j| scaler.y(j, y.get(i, j)));
        let rows = n.min(self.cfg.sample_cap);
        let xcols: Vec<usize> = (0..xs.cols()).collect();
        let ycols: Vec<usize> = (0..ys.cols()).collect();
        for (net, opt) in self.members.iter_mut().zip(&mut self.opts) {
            let idx: Vec<usize> = if self.cfg.bootstrap {
                (0..rows).map(|_| rng.below(n)).collect()
            } else if rows < n {
                rng.choose_distinct(n, rows)
            } else {
                (0..n).collect()
            };
            let xb_all = xs.select(&idx, &xcols);
            let yb_all = ys.select(&idx, &ycols);
            let mut order: Vec<usize> = (0..idx.len()).collect();
            let mut grads = vec![0.0; net.n_params()];
            for _ in 0..self.cfg.epochs {
                shuffle(&mut order, rng);
                for chunk in order.chunks(self.cfg.batch.max(1)) {
                    let xb = xb_all.select(chunk, &xcols);
                    let yb = yb_all.select(chunk, &ycols);
                    let (out, cache) = net.forward_cached(&xb)?;
                    let (_, up) = gaussian_nll_and_grad(&out, &yb, &self.cfg.head);
                    grads.iter_mut().for_each(|g| *g = 0.0);
                    net.backward_batch(&cache, &up, &mut grads)?;
                    opt.step(net.params_mut(), &grads);
                }
            }
            if !net.is_finite() {
                return Err(Error::NonFinite("ensemble member parameters".into()));
            }
        }
        self.scaler = Some(scaler);
        Ok(())
    }

    /// Per-member means and variances in output units.
    pub fn member_moments(&self, x: &[f64]) -> Result<Vec<(Vec<f64>, Vec<f64>)>> {
        let scaler = self.scaler.as_ref().ok_or(Error::ModelNotFitted)?;
        if x.len() != self.input_dim {
            return Err(crate::error::shape("ensemble input width"));
        }
        let xs: Vec<f64> = x.iter().enumerate().map(|(j, v)| scaler.x(j, *v)).collect();
        self.members
            .iter()
            .map(|net| {
                let out = net.forward(&xs)?;
                let (mean, lv) = self.cfg.head.split(&out);
                let mean = mean.iter().enumerate().map(|(j, m)| scaler.y_inv(j, *m)).collect();
                let var = lv.iter().enumerate().map(|(j, l)| l.exp() * scaler.y_std[j].powi(2)).collect();
                Ok((mean, var))
            })
            .collect()
    }

    pub fn predict(&self, x: &[f64], mode: BootstrapMode) -> Result<(Vec<f64>, Matrix)> {
        let moments = self.member_moments(x)?;
        match mode {
            BootstrapMode::Member(e) => {
                let (mean, var) = moments.into_iter().nth(e).ok_or_else(|| {
                    Error::Domain(format!("member {e} of an ensemble of {}", self.members.len()))
                })?;
                Ok((mean, Matrix::from_diag(&var)))
            }
            BootstrapMode::Mean => Ok(mix_moments(&moments)),
        }
    }

    /// A uniformly chosen member's prediction.
    pub fn predict_member(&self, x: &[f64], rng: &mut Rng) -> Result<(Vec<f64>, Matrix)> {
        if self.members.is_empty() {
            return Err(Error::ModelNotFitted);
        }
        let e = rng.below(self.members.len());
        self.predict(x, BootstrapMode::Member(e))
    }
}

/// Law of total variance over equally weighted diagonal Gaussians.
pub(crate) fn mix_moments(moments: &[(Vec<f64>, Vec<f64>)]) -> (Vec<f64>, Matrix) {
    let e = moments.len() as f64;
    let d = moments[0].0.len();
    let mut mean = vec![0.0; d];
    let mut var = vec![0.0; d];
    for (m, v) in moments {
        for j in 0..d {
            mean[j] += m[j] / e;
            var[j] += v[j] / e;
        }
    }
    for (m, _) in moments {
        for j in 0..d {
            var[j] += (m[j] - mean[j]).powi(2) / e;
        }
    }
    (mean, Matrix::from_diag(&var))
}
