//! Feed-forward networks with hand-written reverse mode, Adam, and the
//! clamped Gaussian output head.

mod adam;
mod head;
mod mlp;

pub use adam::Adam;
pub use head::{soft_clamp, soft_clamp_grad, softplus, sigmoid, GaussianHead};
pub use mlp::{Activation, ForwardCache, Mlp, ParamGradients};
