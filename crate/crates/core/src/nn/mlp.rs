use serde::{Deserialize, Serialize};

use super::head::{sigmoid, softplus};
use crate::error::{shape, Error, Result};
use crate::linalg::{gemm, Matrix};
use crate::rng::Rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Silu,
    Mish,
    Relu,
    Tanh,
    Identity,
}

impl Activation {
    pub const ALL: [Activation; 5] =
        [Activation::Silu, Activation::Mish, Activation::Relu, Activation::Tanh, Activation::Identity];

    #[inline]
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Silu => x * sigmoid(x),
            Activation::Mish => x * softplus(x).tanh(),
            Activation::Relu => x.max(0.0),
            Activation::Tanh => x.tanh(),
            Activation::Identity => x,
        }
    }

    #[inline]
    pub fn derivative(self, x: f64) -> f64 {
        match self {
            Activation::Silu => {
                let s = sigmoid(x);
                s * (1.0 + x * (1.0 - s))
            }
            Activation::Mish => {
                let t = softplus(x).tanh();
                t + x * (1.0 - t * t) * sigmoid(x)
            }
            Activation::Relu => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => {
                let t = x.tanh();
                1.0 - t * t
            }
            Activation::Identity => 1.0,
        }
    }
}

impl std::str::FromStr for Activation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "silu" => Ok(Activation::Silu),
            "mish" => Ok(Activation::Mish),
            "relu" => Ok(Activation::Relu),
            "tanh" => Ok(Activation::Tanh),
            "identity" | "linear" => Ok(Activation::Identity),
            other => Err(Error::Config(format!("unknown activation `{other}`"))),
        }
    }
}

/// Multi-layer perceptron with a linear output layer.
///
/// All weights and biases live in one flat vector, layer by layer: an
/// `in×out` row-major weight block followed by `out` biases. Rows of a batch
/// are samples, so a layer computes `Z = X·W + 1·bᵀ`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    widths: Vec<usize>,
    activations: Vec<Activation>,
    params: Vec<f64>,
}

/// Gradient of a scalar with respect to every parameter, flat like
/// [`Mlp::params`].
pub type ParamGradients = Vec<f64>;

/// Per-layer inputs and hidden pre-activations kept from a batched forward pass.
#[derive(Clone, Debug)]
pub struct ForwardCache {
    inputs: Vec<Matrix>,
    pre: Vec<Matrix>,
}

impl Mlp {
    /// Zero-initialised network. `activations` has one entry per hidden layer.
    pub fn zeros(widths: &[usize], activations: &[Activation]) -> Result<Self> {
        if widths.len() < 2 {
            return Err(shape("an MLP needs at least input and output widths"));
        }
        if activations.len() != widths.len() - 2 {
            return Err(shape(format!(
                "{} activations for {} hidden layers",
                activations.len(),
                widths.len() - 2
            )));
        }
        let n: usize = widths.windows(2).map(|w| w[0] * w[1] + w[1]).sum();
        Ok(Mlp { widths: widths.to_vec(), activations: activations.to_vec(), params: vec![0.0; n] })
    }

    /// Uniform `±√(6/(fan_in+fan_out))` weights, zero biases.
    pub fn new(widths: &[usize], activations: &[Activation], rng: &mut Rng) -> Result<Self> {
        let mut net = Self::zeros(widths, activations)?;
        let mut off = 0;
        for w in widths.windows(2) {
            let (fan_in, fan_out) = (w[0], w[1]);
            let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
            for p in &mut net.params[off..off + fan_in * fan_out] {
                *p = rng.uniform_range(-bound, bound);
            }
            off += fan_in * fan_out + fan_out;
        }
        Ok(net)
    }

    /// `depth` hidden layers of `hidden` units, all with `act`.
    pub fn with_hidden(
        input: usize,
        hidden: usize,
        depth: usize,
        output: usize,
        act: Activation,
        rng: &mut Rng,
    ) -> Result<Self> {
        let mut widths = vec![input];
        widths.extend(std::iter::repeat_n(hidden, depth));
        widths.push(output);
        Self::new(&widths, &vec![act; depth], rng)
    }

    pub fn widths(&self) -> &[usize] {
        &self.widths
    }

    pub fn activations(&self) -> &[Activation] {
        &self.activations
    }

    pub fn input_dim(&self) -> usize {
        self.widths[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.widths.last().expect("at least two widths")
    }

    pub fn n_layers(&self) -> usize {
        self.widths.len() - 1
    }

    pub fn n_params(&self) -> usize {
        self.params.len()
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    fn offset(&self, layer: usize) -> usize {
        self.widths[..=layer].windows(2).map(|w| w[0] * w[1] + w[1]).sum()
    }

    /// Weight block and biases of one layer.
    pub fn layer(&self, layer: usize) -> (&[f64], &[f64]) {
        let off = self.offset(layer);
        let (i, o) = (self.widths[layer], self.widths[layer + 1]);
        (&self.params[off..off + i * o], &self.params[off + i * o..off + i * o + o])
    }

    pub fn layer_mut(&mut self, layer: usize) -> (&mut [f64], &mut [f64]) {
        let off = self.offset(layer);
        let (i, o) = (self.widths[layer], self.widths[layer + 1]);
        let (w, rest) = self.params[off..off + i * o + o].split_at_mut(i * o);
        (w, rest)
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        let m = Matrix::from_vec(1, x.len(), x.to_vec())?;
        Ok(self.forward_batch(&m)?.into_vec())
    }

    pub fn forward_batch(&self, x: &Matrix) -> Result<Matrix> {
        self.check_input(x)?;
        let mut a = x.clone();
        for l in 0..self.n_layers() {
            let mut z = self.affine(l, &a);
            if l + 1 < self.n_layers() {
                let act = self.activations[l];
                z.data_mut().iter_mut().for_each(|v| *v = act.apply(*v));
            }
            a = z;
        }
        Ok(a)
    }

    /// Batched forward pass that keeps what [`Mlp::backward_batch`] needs.
    pub fn forward_cached(&self, x: &Matrix) -> Result<(Matrix, ForwardCache)> {
        self.check_input(x)?;
        let mut inputs = Vec::with_capacity(self.n_layers());
        let mut pre = Vec::with_capacity(self.n_layers() - 1);
        let mut a = x.clone();
        for l in 0..self.n_layers() {
            let z = self.affine(l, &a);
            inputs.push(a);
            if l + 1 < self.n_layers() {
                let act = self.activations[l];
                let mut out = z.clone();
                out.data_mut().iter_mut().for_each(|v| *v = act.apply(*v));
                pre.push(z);
                a = out;
            } else {
                a = z;
            }
        }
        Ok((a, ForwardCache { inputs, pre }))
    }

    /// Reverse mode for `Σ ⟨upstream_row, f(x_row)⟩` over the batch.
    ///
    /// Gradients are accumulated into `grads` (flat, like the parameters) and
    /// the gradient with respect to the batch input is returned.
    pub fn backward_batch(
        &self,
        cache: &ForwardCache,
        upstream: &Matrix,
        grads: &mut [f64],
    ) -> Result<Matrix> {
        let batch = cache.inputs[0].rows();
        if upstream.rows() != batch || upstream.cols() != self.output_dim() {
            return Err(shape(format!(
                "upstream gradient {}x{} for batch {} and output {}",
                upstream.rows(),
                upstream.cols(),
                batch,
                self.output_dim()
            )));
        }
        if grads.len() != self.n_params() {
            return Err(shape("gradient buffer length"));
        }
        let mut delta = upstream.clone();
        for l in (0..self.n_layers()).rev() {
            let (fan_in, fan_out) = (self.widths[l], self.widths[l + 1]);
            let off = self.offset(l);
            let a = &cache.inputs[l];
            // dW += aᵀ·δ
            gemm(
                fan_in, batch, fan_out, 1.0,
                a.data(), true, delta.data(), false, 1.0,
                &mut grads[off..off + fan_in * fan_out],
            );
            let gb = &mut grads[off + fan_in * fan_out..off + fan_in * fan_out + fan_out];
            for r in 0..batch {
                for (g, d) in gb.iter_mut().zip(delta.row(r)) {
                    *g += d;
                }
            }
            // δ_prev = δ·Wᵀ
            let (w, _) = self.layer(l);
            let mut prev = Matrix::zeros(batch, fan_in);
            gemm(batch, fan_out, fan_in, 1.0, delta.data(), false, w, true, 0.0, prev.data_mut());
            if l > 0 {
                let act = self.activations[l - 1];
                let z = &cache.pre[l - 1];
                for (p, zv) in prev.data_mut().iter_mut().zip(z.data()) {
                    *p *= act.derivative(*zv);
                }
            }
            delta = prev;
        }
        Ok(delta)
    }

    /// Gradient of `⟨upstream, f(x)⟩` for a single input.
    pub fn backward(&self, x: &[f64], upstream: &[f64]) -> Result<ParamGradients> {
        let xm = Matrix::from_vec(1, x.len(), x.to_vec())?;
        let (_, cache) = self.forward_cached(&xm)?;
        let up = Matrix::from_vec(1, upstream.len(), upstream.to_vec())?;
        let mut g = vec![0.0; self.n_params()];
        self.backward_batch(&cache, &up, &mut g)?;
        Ok(g)
    }

    /// Polyak averaging `self ← (1 − tau)·self + tau·source`.
    pub fn soft_update_from(&mut self, source: &Mlp, tau: f64) {
        assert_eq!(self.widths, source.widths, "polyak update between different architectures");
        for (t, s) in self.params.iter_mut().zip(&source.params) {
            *t = (1.0 - tau) * *t + tau * s;
        }
    }

    pub fn is_finite(&self) -> bool {
        self.params.iter().all(|p| p.is_finite())
    }

    fn check_input(&self, x: &Matrix) -> Result<()> {
        if x.cols() != self.input_dim() {
            return Err(shape(format!("input width {} for a network expecting {}", x.cols(), self.input_dim())));
        }
        Ok(())
    }

    fn affine(&self, l: usize, a: &Matrix) -> Matrix {
        let (fan_in, fan_out) = (self.widths[l], self.widths[l + 1]);
        let (w, b) = self.layer(l);
        let mut z = Matrix::zeros(a.rows(), fan_out);
        for r in 0..a.rows() {
            z.row_mut(r).copy_from_slice(b);
        }
        gemm(a.rows(), fan_in, fan_out, 1.0, a.data(), false, w, false, 1.0, z.data_mut());
        z
    }
}
