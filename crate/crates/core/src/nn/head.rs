use serde::{Deserialize, Serialize};

pub fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Smoothly squash `raw` into `[lo, hi]`: `hi − softplus(hi − raw)`, then
/// `lo + softplus(· − lo)`. The second softplus can overshoot `hi` by at most
/// `e^{lo−hi}`, which the final `min` removes.
pub fn soft_clamp(raw: f64, lo: f64, hi: f64) -> f64 {
    let upper = hi - softplus(hi - raw);
    (lo + softplus(upper - lo)).min(hi)
}

/// Derivative of [`soft_clamp`] with respect to `raw`.
pub fn soft_clamp_grad(raw: f64, lo: f64, hi: f64) -> f64 {
    let upper = hi - softplus(hi - raw);
    sigmoid(hi - raw) * sigmoid(upper - lo)
}

/// Splits a network output of width `2·d` into a mean and a soft-clamped
/// log-variance.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GaussianHead {
    pub logvar_min: f64,
    pub logvar_max: f64,
}

impl Default for GaussianHead {
    fn default() -> Self {
        GaussianHead { logvar_min: -10.0, logvar_max: 0.5 }
    }
}

impl GaussianHead {
    pub fn logvar(&self, raw: f64) -> f64 {
        soft_clamp(raw, self.logvar_min, self.logvar_max)
    }

    pub fn logvar_grad(&self, raw: f64) -> f64 {
        soft_clamp_grad(raw, self.logvar_min, self.logvar_max)
    }

    /// `(mean, logvar)` from one output row laid out as `[mean…, raw logvar…]`.
    pub fn split(&self, out: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let d = out.len() / 2;
        let mean = out[..d].to_vec();
        let lv = out[d..].iter().map(|&r| self.logvar(r)).collect();
        (mean, lv)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn clamp_stays_in_bounds() {
        let h = GaussianHead::default();
        for raw in [-1e6, -50.0, -10.0, 0.0, 0.5, 3.0, 1e6] {
            let v = h.logvar(raw).exp();
            assert!(v >= h.logvar_min.exp() && v <= h.logvar_max.exp(), "raw {raw}");
        }
    }

    #[test]
    fn clamp_gradient_matches_difference() {
        let h = GaussianHead::default();
        for raw in [-12.0, -3.0, 0.0, 0.4, 2.0] {
            let e = 1e-6;
            let fd = (h.logvar(raw + e) - h.logvar(raw - e)) / (2.0 * e);
            assert!((fd - h.logvar_grad(raw)).abs() < 1e-7);
        }
    }

    #[test]
    fn softplus_is_stable() {
        assert!((softplus(800.0) - 800.0).abs() < 1e-12);
        assert!(softplus(-800.0) >= 0.0 && softplus(-800.0) < 1e-300);
        assert!((softplus(0.0) - std::f64::consts::LN_2).abs() < 1e-15);
    }
}
