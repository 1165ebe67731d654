//! Coregionalized GP over (state delta, reward) with an MLP mean.
//!
//! Residuals `R (n×D)` of the standardized targets around the mean network
//! share one Matern-5/2 ARD kernel `K` over inputs and are mixed across
//! outputs by `B = L·Lᵀ + diag(d)`, so `Cov(vec R) = B ⊗ K + σ²I` with `vec`
//! stacking columns. With `B = UΛUᵀ` and `K = VSVᵀ` every solve against that
//! `nD×nD` matrix reduces to elementwise division in the joint eigenbasis.

use serde::{Deserialize, Serialize};

use super::Standardizer;
use crate::error::{Error, Result};
use crate::linalg::{symmetric_eigen, Matrix, SymEigen};
use crate::nn::{Activation, Adam, Mlp};
use crate::rng::Rng;

const LN_2PI: f64 = 1.837_877_066_409_345_5;
const SQRT5: f64 = 2.236_067_977_499_79;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GpConfig {
    pub subsample_cap: usize,
    pub mean_hidden: usize,
    pub mean_layers: usize,
    pub mean_activation: Activation,
    pub mean_epochs: usize,
    pub mean_lr: f64,
    pub mean_batch: usize,
    pub kernel_steps: usize,
    pub kernel_lr: f64,
    /// Zero cross-output covariance: `L` is kept diagonal.
    pub diagonal: bool,
    pub noise_floor: f64,
}

impl Default for GpConfig {
    fn default() -> Self {
        GpConfig {
            subsample_cap: 500,
            mean_hidden: 200,
            mean_layers: 4,
            mean_activation: Activation::Silu,
            mean_epochs: 20,
            mean_lr: 1e-3,
            mean_batch: 128,
            kernel_steps: 50,
            kernel_lr: 0.01,
            diagonal: false,
            noise_floor: 1e-6,
        }
    }
}

/// Kernel, mixing and noise hyperparameters in their unconstrained form.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GpHyper {
    pub log_lengthscales: Vec<f64>,
    pub log_signal: f64,
    /// Lower triangle of `L`, row-major: `(0,0), (1,0), (1,1), (2,0), …`.
    pub mix: Vec<f64>,
    pub log_diag: Vec<f64>,
    /// `σ² = noise_floor + exp(noise_raw)`.
    pub noise_raw: f64,
    pub noise_floor: f64,
}

fn tri_index(i: usize, j: usize) -> usize {
    i * (i + 1) / 2 + j
}

impl GpHyper {
    pub fn initial(input_dim: usize, outputs: usize, noise_floor: f64) -> Self {
        let mut mix = vec![0.0; outputs * (outputs + 1) / 2];
        for a in 0..outputs {
            mix[tri_index(a, a)] = 0.5f64.sqrt();
        }
        GpHyper {
            log_lengthscales: vec![0.0; input_dim],
            log_signal: 0.0,
            mix,
            log_diag: vec![0.5f64.ln(); outputs],
            noise_raw: (0.1 - noise_floor).ln(),
            noise_floor,
        }
    }

    pub fn input_dim(&self) -> usize {
        self.log_lengthscales.len()
    }

    pub fn outputs(&self) -> usize {
        self.log_diag.len()
    }

    pub fn len(&self) -> usize {
        self.input_dim() + 1 + self.mix.len() + self.outputs() + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn noise(&self) -> f64 {
        self.noise_floor + self.noise_raw.exp()
    }

    pub fn signal(&self) -> f64 {
        self.log_signal.exp()
    }

    pub fn lengthscales(&self) -> Vec<f64> {
        self.log_lengthscales.iter().map(|l| l.exp()).collect()
    }

    pub fn mix_factor(&self) -> Matrix {
        let d = self.outputs();
        Matrix::from_fn(d, d, |i, j| if j <= i { self.mix[tri_index(i, j)] } else { 0.0 })
    }

    pub fn coregionalization(&self) -> Matrix {
        let l = self.mix_factor();
        let mut b = l.matmul_t(&l);
        for a in 0..self.outputs() {
            let v = b.get(a, a) + self.log_diag[a].exp();
            b.set(a, a, v);
        }
        b
    }

    /// Zero every off-diagonal entry of `L`.
    pub fn make_diagonal(&mut self) {
        for i in 0..self.outputs() {
            for j in 0..i {
                self.mix[tri_index(i, j)] = 0.0;
            }
        }
    }

    pub fn to_flat(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.len());
        v.extend(&self.log_lengthscales);
        v.push(self.log_signal);
        v.extend(&self.mix);
        v.extend(&self.log_diag);
        v.push(self.noise_raw);
        v
    }

    pub fn set_flat(&mut self, v: &[f64]) {
        assert_eq!(v.len(), self.len(), "hyperparameter vector length");
        let (m, t, d) = (self.input_dim(), self.mix.len(), self.outputs());
        self.log_lengthscales.copy_from_slice(&v[..m]);
        self.log_signal = v[m];
        self.mix.copy_from_slice(&v[m + 1..m + 1 + t]);
        self.log_diag.copy_from_slice(&v[m + 1 + t..m + 1 + t + d]);
        self.noise_raw = v[m + 1 + t + d];
    }

    /// Flat mask that freezes the off-diagonal mixing entries.
    pub fn diagonal_mask(&self) -> Vec<bool> {
        let mut mask = vec![true; self.len()];
        let m = self.input_dim();
        for i in 0..self.outputs() {
            for j in 0..i {
                mask[m + 1 + tri_index(i, j)] = false;
            }
        }
        mask
    }
}

/// Matern-5/2 ARD covariance `σf²(1 + √5r + 5r²/3)·e^{−√5r}`.
pub fn matern52(a: &[f64], b: &[f64], lengthscales: &[f64], signal: f64) -> f64 {
    let r2: f64 = a.iter().zip(b).zip(lengthscales).map(|((x, y), l)| ((x - y) / l).powi(2)).sum();
    let r = r2.sqrt();
    signal * (1.0 + SQRT5 * r + 5.0 / 3.0 * r2) * (-SQRT5 * r).exp()
}

fn kernel_matrix(x: &Matrix, ls: &[f64], signal: f64) -> Matrix {
    let n = x.rows();
    let mut k = Matrix::zeros(n, n);
    for i in 0..n {
        k.set(i, i, signal);
        for j in 0..i {
            let v = matern52(x.row(i), x.row(j), ls, signal);
            k.set(i, j, v);
            k.set(j, i, v);
        }
    }
    k
}

/// Exact posterior of the Kronecker-structured GP on fixed, standardized data.
#[derive(Clone, Debug)]
pub struct LmcPosterior {
    x: Matrix,
    r: Matrix,
    hyper: GpHyper,
    b: Matrix,
    k: Matrix,
    eig_b: SymEigen,
    eig_k: SymEigen,
    /// `C⁻¹ vec(R)` reshaped to `n×D`.
    alpha: Matrix,
}

impl LmcPosterior {
    pub fn new(x: Matrix, r: Matrix, hyper: GpHyper) -> Result<Self> {
        if x.rows() != r.rows() {
            return Err(crate::error::shape("inputs and residuals differ in row count"));
        }
        if x.cols() != hyper.input_dim() || r.cols() != hyper.outputs() {
            return Err(crate::error::shape("hyperparameters do not match the data dimensions"));
        }
        if hyper.to_flat().iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("GP hyperparameters".into()));
        }
        let b = hyper.coregionalization();
        let k = kernel_matrix(&x, &hyper.lengthscales(), hyper.signal());
        let mut eig_b = symmetric_eigen(&b)?;
        let mut eig_k = symmetric_eigen(&k)?;
        // both are PSD in exact arithmetic; round-off can leave tiny negatives
        eig_b.values.iter_mut().for_each(|v| *v = v.max(0.0));
        eig_k.values.iter_mut().for_each(|v| *v = v.max(0.0));

        let noise = hyper.noise();
        let (u, v) = (&eig_b.vectors, &eig_k.vectors);
        let mut w = v.t_matmul(&r).matmul(u);
        for i in 0..w.rows() {
            for a in 0..w.cols() {
                let scaled = w.get(i, a) / (eig_k.values[i] * eig_b.values[a] + noise);
                w.set(i, a, scaled);
            }
        }
        let alpha = v.matmul(&w).matmul_t(u);
        Ok(LmcPosterior { x, r, hyper, b, k, eig_b, eig_k, alpha })
    }

    pub fn hyper(&self) -> &GpHyper {
        &self.hyper
    }

    pub fn n(&self) -> usize {
        self.x.rows()
    }

    pub fn outputs(&self) -> usize {
        self.r.cols()
    }

    pub fn coregionalization(&self) -> &Matrix {
        &self.b
    }

    pub fn alpha(&self) -> &Matrix {
        &self.alpha
    }

    fn denominators(&self) -> impl Iterator<Item = f64> + '_ {
        let noise = self.hyper.noise();
        self.eig_b
            .values
            .iter()
            .flat_map(move |&l| self.eig_k.values.iter().map(move |&s| l * s + noise))
    }

    pub fn log_marginal_likelihood(&self) -> f64 {
        let fit: f64 = self.r.data().iter().zip(self.alpha.data()).map(|(a, b)| a * b).sum();
        let logdet: f64 = self.denominators().map(f64::ln).sum();
        let nd = (self.n() * self.outputs()) as f64;
        -0.5 * fit - 0.5 * logdet - 0.5 * nd * LN_2PI
    }

    /// Gradient of the log marginal likelihood with respect to
    /// [`GpHyper::to_flat`].
    pub fn gradient(&self) -> Vec<f64> {
        let (n, d, m) = (self.n(), self.outputs(), self.x.cols());
        let noise = self.hyper.noise();
        let (lam, s) = (&self.eig_b.values, &self.eig_k.values);
        let (u, v) = (&self.eig_b.vectors, &self.eig_k.vectors);
        let a = &self.alpha;

        // G_B = ½(AᵀKA − U diag(w) Uᵀ), w_a = Σ_i s_i / (λ_a s_i + σ²)
        let w: Vec<f64> = lam.iter().map(|&l| s.iter().map(|&si| si / (l * si + noise)).sum()).collect();
        let ka = self.k.matmul(a);
        let mut g_b = a.t_matmul(&ka);
        let uw = Matrix::from_fn(d, d, |i, j| u.get(i, j) * w[j]);
        g_b = g_b.sub(&uw.matmul_t(u)).scale(0.5);

        // G_K = ½(ABAᵀ − V diag(z) Vᵀ), z_i = Σ_a λ_a / (λ_a s_i + σ²)
        let z: Vec<f64> = s.iter().map(|&si| lam.iter().map(|&l| l / (l * si + noise)).sum()).collect();
        let aba = a.matmul(&self.b).matmul_t(a);
        let vz = Matrix::from_fn(n, n, |i, j| v.get(i, j) * z[j]);
        let g_k = aba.sub(&vz.matmul_t(v)).scale(0.5);

        let mut grad = Vec::with_capacity(self.hyper.len());
        let ls = self.hyper.lengthscales();
        let signal = self.hyper.signal();
        let mut g_ls = vec![0.0; m];
        let mut g_signal = 0.0;
        for i in 0..n {
            g_signal += g_k.get(i, i) * signal;
            for j in 0..i {
                let (xi, xj) = (self.x.row(i), self.x.row(j));
                let r2: f64 = xi.iter().zip(xj).zip(&ls).map(|((p, q), l)| ((p - q) / l).powi(2)).sum();
                let r = r2.sqrt();
                let e = (-SQRT5 * r).exp();
                let gk = 2.0 * g_k.get(i, j);
                g_signal += gk * signal * (1.0 + SQRT5 * r + 5.0 / 3.0 * r2) * e;
                let common = gk * 5.0 / 3.0 * signal * (1.0 + SQRT5 * r) * e;
                for (dim, g) in g_ls.iter_mut().enumerate() {
                    let delta = (xi[dim] - xj[dim]) / ls[dim];
                    *g += common * delta * delta;
                }
            }
        }
        grad.extend(g_ls);
        grad.push(g_signal);

        // ∂/∂L = 2·G_B·L, lower triangle
        let gl = g_b.matmul(&self.hyper.mix_factor()).scale(2.0);
        for i in 0..d {
            for j in 0..=i {
                grad.push(gl.get(i, j));
            }
        }
        for (aa, ld) in self.hyper.log_diag.iter().enumerate() {
            grad.push(g_b.get(aa, aa) * ld.exp());
        }

        let alpha_sq: f64 = a.data().iter().map(|x| x * x).sum();
        let inv_trace: f64 = self.denominators().map(|x| 1.0 / x).sum();
        grad.push(0.5 * (noise - self.hyper.noise_floor) * (alpha_sq - inv_trace));
        grad
    }

    fn cross_kernel(&self, xs: &[f64]) -> Vec<f64> {
        let ls = self.hyper.lengthscales();
        let signal = self.hyper.signal();
        (0..self.n()).map(|i| matern52(self.x.row(i), xs, &ls, signal)).collect()
    }

    /// Prior covariance `B·k(x, x)` of the latent outputs at one input.
    pub fn prior_cov(&self) -> Matrix {
        self.b.scale(self.hyper.signal())
    }

    /// Posterior mean residual and latent covariance at one standardized input.
    pub fn predict(&self, xs: &[f64]) -> (Vec<f64>, Matrix) {
        let d = self.outputs();
        let ks = self.cross_kernel(xs);
        let atk = self.alpha.t_matvec(&ks);
        let mean = self.b.matvec(&atk);

        let g = self.eig_k.vectors.t_matvec(&ks);
        let noise = self.hyper.noise();
        let lam = &self.eig_b.values;
        let h: Vec<f64> = lam
            .iter()
            .map(|&l| {
                g.iter()
                    .zip(&self.eig_k.values)
                    .map(|(gi, si)| gi * gi / (l * si + noise))
                    .sum::<f64>()
            })
            .collect();
        let u = &self.eig_b.vectors;
        let scaled = Matrix::from_fn(d, d, |i, c| u.get(i, c) * lam[c] * lam[c] * h[c]);
        let mut cov = self.prior_cov().sub(&scaled.matmul_t(u));
        cov.symmetrize();
        (mean, cov)
    }
}

/// Adam ascent on the log marginal likelihood for fixed residuals. Returns the
/// posterior at the final hyperparameters.
pub fn optimize_hyper(
    x: &Matrix,
    r: &Matrix,
    hyper: GpHyper,
    steps: usize,
    opt: &mut Adam,
    mask: Option<&[bool]>,
) -> Result<LmcPosterior> {
    let mut post = LmcPosterior::new(x.clone(), r.clone(), hyper)?;
    for _ in 0..steps {
        let mut grad = post.gradient();
        if let Some(mask) = mask {
            for (g, keep) in grad.iter_mut().zip(mask) {
                if !keep {
                    *g = 0.0;
                }
            }
        }
        if grad.iter().any(|g| !g.is_finite()) {
            log::warn!("non-finite marginal-likelihood gradient; stopping hyperparameter search");
            break;
        }
        // Adam minimizes, so feed the negated gradient
        let neg: Vec<f64> = grad.iter().map(|g| -g).collect();
        let mut flat = post.hyper().to_flat();
        opt.step(&mut flat, &neg);
        // keep log-parameters in a numerically sane range
        let mut hyper = post.hyper().clone();
        hyper.set_flat(&flat);
        for l in hyper.log_lengthscales.iter_mut() {
            *l = l.clamp(-7.0, 7.0);
        }
        hyper.log_signal = hyper.log_signal.clamp(-10.0, 10.0);
        for l in hyper.log_diag.iter_mut() {
            *l = l.clamp(-20.0, 10.0);
        }
        hyper.noise_raw = hyper.noise_raw.clamp(-40.0, 5.0);
        post = LmcPosterior::new(x.clone(), r.clone(), hyper)?;
    }
    Ok(post)
}

/// GP backend state. Everything except the cached posterior is serialized;
/// [`GpJointModel::restore_cache`] rebuilds the cache after loading.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GpJointModel {
    cfg: GpConfig,
    input_dim: usize,
    outputs: usize,
    mean: Option<Mlp>,
    mean_opt: Option<Adam>,
    hyper: GpHyper,
    hyper_opt: Option<Adam>,
    scaler: Option<Standardizer>,
    train_x: Option<Matrix>,
    train_r: Option<Matrix>,
    #[serde(skip)]
    posterior: Option<LmcPosterior>,
}

impl GpJointModel {
    pub fn new(input_dim: usize, outputs: usize, cfg: GpConfig) -> Self {
        let mut hyper = GpHyper::initial(input_dim, outputs, cfg.noise_floor);
        if cfg.diagonal {
            hyper.make_diagonal();
        }
        GpJointModel {
            cfg,
            input_dim,
            outputs,
            mean: None,
            mean_opt: None,
            hyper,
            hyper_opt: None,
            scaler: None,
            train_x: None,
            train_r: None,
            posterior: None,
        }
    }

    pub fn config(&self) -> &GpConfig {
        &self.cfg
    }

    pub fn is_fitted(&self) -> bool {
        self.posterior.is_some()
    }

    pub fn posterior(&self) -> Option<&LmcPosterior> {
        self.posterior.as_ref()
    }

    pub fn hyper(&self) -> &GpHyper {
        &self.hyper
    }

    pub fn mean_net(&self) -> Option<&Mlp> {
        self.mean.as_ref()
    }

    pub fn scaler(&self) -> Option<&Standardizer> {
        self.scaler.as_ref()
    }

    /// Standardized noise variance mapped back to output units (diagonal).
    pub fn noise_variances(&self) -> Vec<f64> {
        let noise = self.hyper.noise();
        match &self.scaler {
            Some(s) => s.y_std.iter().map(|sd| noise * sd * sd).collect(),
            None => vec![noise; self.outputs],
        }
    }

    /// Fit to raw inputs `x (N×m)` and targets `y (N×D)`.
    ///
    /// Statistics for standardization come from all rows; the mean network and
    /// the kernel are trained on a random subsample of at most
    /// `subsample_cap` rows.
    pub fn fit_arrays(&mut self, x: &Matrix, y: &Matrix, rng: &mut Rng) -> Result<()> {
        let n = x.rows();
        if n < 2 {
            return Err(Error::DegenerateData(format!("GP fit needs at least 2 transitions, got {n}")));
        }
        if x.cols() != self.input_dim || y.cols() != self.outputs || y.rows() != n {
            return Err(crate::error::shape("GP training arrays"));
        }
        let scaler = Standardizer::from_data(x, y);
        let mut idx: Vec<usize> = if n > self.cfg.subsample_cap {
            rng.choose_distinct(n, self.cfg.subsample_cap)
        } else {
            (0..n).collect()
        };
        idx.sort_unstable();
        let xs = Matrix::from_fn(idx.len(), x.cols(), |i, j| scaler.x(j, x.get(idx[i], j)));
        let ys = Matrix::from_fn(idx.len(), y.cols(), |i, j| scaler.y(j, y.get(idx[i], j)));

        if self.mean.is_none() {
            let net = Mlp::with_hidden(
                self.input_dim,
                self.cfg.mean_hidden,
                self.cfg.mean_layers,
                self.outputs,
                self.cfg.mean_activation,
                rng,
            )?;
            self.mean_opt = Some(Adam::new(net.n_params(), self.cfg.mean_lr));
            self.mean = Some(net);
        }
        let net = self.mean.as_mut().expect("mean network initialised");
        let opt = self.mean_opt.as_mut().expect("mean optimizer initialised");
        train_mse(net, opt, &xs, &ys, self.cfg.mean_epochs, self.cfg.mean_batch, rng)?;

        let pred = net.forward_batch(&xs)?;
        let r = ys.sub(&pred);
        let hyper_opt = self
            .hyper_opt
            .get_or_insert_with(|| Adam::new(self.hyper.len(), self.cfg.kernel_lr));
        let mask = self.cfg.diagonal.then(|| self.hyper.diagonal_mask());
        let post =
            optimize_hyper(&xs, &r, self.hyper.clone(), self.cfg.kernel_steps, hyper_opt, mask.as_deref())?;
        self.hyper = post.hyper().clone();
        self.scaler = Some(scaler);
        self.train_x = Some(xs);
        self.train_r = Some(r);
        self.posterior = Some(post);
        Ok(())
    }

    /// Rebuild the eigendecomposition cache from the serialized state.
    pub fn restore_cache(&mut self) -> Result<()> {
        if let (Some(x), Some(r)) = (&self.train_x, &self.train_r) {
            self.posterior = Some(LmcPosterior::new(x.clone(), r.clone(), self.hyper.clone())?);
        }
        Ok(())
    }

    /// Latent predictive mean and covariance in output units.
    pub fn predict(&self, x: &[f64]) -> Result<(Vec<f64>, Matrix)> {
        let post = self.posterior.as_ref().ok_or(Error::ModelNotFitted)?;
        let scaler = self.scaler.as_ref().ok_or(Error::ModelNotFitted)?;
        let net = self.mean.as_ref().ok_or(Error::ModelNotFitted)?;
        if x.len() != self.input_dim {
            return Err(crate::error::shape(format!("GP input of width {} for {}", x.len(), self.input_dim)));
        }
        let xs: Vec<f64> = x.iter().enumerate().map(|(j, v)| scaler.x(j, *v)).collect();
        let m = net.forward(&xs)?;
        let (resid, cov) = post.predict(&xs);
        let mean: Vec<f64> = m.iter().zip(&resid).enumerate().map(|(j, (a, b))| scaler.y_inv(j, a + b)).collect();
        let cov = Matrix::from_fn(self.outputs, self.outputs, |i, j| cov.get(i, j) * scaler.y_std[i] * scaler.y_std[j]);
        Ok((mean, cov))
    }
}

/// Mini-batch MSE training; the loss is the per-sample mean over the batch.
pub(crate) fn train_mse(
    net: &mut Mlp,
    opt: &mut Adam,
    x: &Matrix,
    y: &Matrix,
    epochs: usize,
    batch: usize,
    rng: &mut Rng,
) -> Result<()> {
    let n = x.rows();
    let batch = batch.max(1).min(n);
    let mut order: Vec<usize> = (0..n).collect();
    let mut grads = vec![0.0; net.n_params()];
    for _ in 0..epochs {
        shuffle(&mut order, rng);
        for chunk in order.chunks(batch) {
            let xb = x.select(chunk, &(0..x.cols()).collect::<Vec<_>>());
            let yb = y.select(chunk, &(0..y.cols()).collect::<Vec<_>>());
            let (out, cache) = net.forward_cached(&xb)?;
            let scale = 2.0 / chunk.len() as f64;
            let up = out.sub(&yb).scale(scale);
            grads.iter_mut().for_each(|g| *g = 0.0);
            net.backward_batch(&cache, &up, &mut grads)?;
            opt.step(net.params_mut(), &grads);
        }
    }
    if !net.is_finite() {
        return Err(Error::NonFinite("mean network parameters".into()));
    }
    Ok(())
}

pub(crate) fn shuffle(v: &mut [usize], rng: &mut Rng) {
    for i in (1..v.len()).rev() {
        let j = rng.below(i + 1);
        v.swap(i, j);
    }
}
