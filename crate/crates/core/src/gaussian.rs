//! Scalar normal distribution functions, multivariate-normal conditioning and
//! truncated-normal sampling by inverse transform.

use serde::{Deserialize, Serialize};

use crate::error::{shape, Error, Result};
use crate::linalg::{cholesky, Matrix};
use crate::rng::Rng;

const SQRT_2PI: f64 = 2.506_628_274_631_000_7;

pub fn std_normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / SQRT_2PI
}

pub fn std_normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / std::f64::consts::SQRT_2)
}

// Acklam's rational approximation, relative error below 1.2e-9 before refinement.
const A: [f64; 6] = [
    -3.969_683_028_665_376e1,
    2.209_460_984_245_205e2,
    -2.759_285_104_469_687e2,
    1.383_577_518_672_69e2,
    -3.066_479_806_614_716e1,
    2.506_628_277_459_239,
];
const B: [f64; 5] = [
    -5.447_609_879_822_406e1,
    1.615_858_368_580_409e2,
    -1.556_989_798_598_866e2,
    6.680_131_188_771_972e1,
    -1.328_068_155_288_572e1,
];
const C: [f64; 6] = [
    -7.784_894_002_430_293e-3,
    -3.223_964_580_411_365e-1,
    -2.400_758_277_161_838,
    -2.549_732_539_343_734,
    4.374_664_141_464_968,
    2.938_163_982_698_783,
];
const D: [f64; 4] = [
    7.784_695_709_041_462e-3,
    3.224_671_290_700_398e-1,
    2.445_134_137_142_996,
    3.754_408_661_907_416,
];
const P_LOW: f64 = 0.024_25;

fn acklam_lower(p: f64) -> f64 {
    debug_assert!(p > 0.0 && p <= 0.5);
    if p < P_LOW {
        let q = (-2.0 * p.ln()).sqrt();
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    } else {
        let q = p - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    }
}

/// Φ⁻¹(p) for `p ∈ (0, 1)`.
///
/// The rational approximation is refined with one Newton step on the lower
/// tail; the upper half is obtained by symmetry so that the residual
/// `Φ(x) − p` is always computed where it has full relative precision.
pub fn std_normal_quantile(p: f64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::Domain(format!("normal quantile of {p}")));
    }
    let (tail, sign) = if p <= 0.5 { (p, 1.0) } else { (1.0 - p, -1.0) };
    let mut x = acklam_lower(tail);
    let pdf = std_normal_pdf(x);
    if pdf > 0.0 {
        x -= (std_normal_cdf(x) - tail) / pdf;
    }
    Ok(sign * x)
}

/// `mu + sigma · Φ⁻¹(u)` for a caller-chosen `u ∈ (0, 1)`.
pub fn truncated_normal_at(mu: f64, sigma: f64, u: f64) -> Result<f64> {
    if sigma == 0.0 {
        return Ok(mu);
    }
    Ok(mu + sigma * std_normal_quantile(u)?)
}

/// Draw from `N(mu, sigma²)` restricted to values above its `lower_quantile`
/// quantile, by drawing `u ~ Uniform(lower_quantile, 1)` and inverting Φ.
pub fn truncated_normal_sample(mu: f64, sigma: f64, lower_quantile: f64, rng: &mut Rng) -> f64 {
    assert!(sigma >= 0.0, "negative sigma");
    assert!((0.0..1.0).contains(&lower_quantile), "lower quantile outside [0, 1)");
    if sigma == 0.0 {
        return mu;
    }
    let mut u = lower_quantile + (1.0 - lower_quantile) * rng.uniform_open();
    if u >= 1.0 {
        u = 1.0 - f64::EPSILON / 2.0;
    }
    if u <= lower_quantile {
        u = lower_quantile.max(f64::MIN_POSITIVE);
    }
    let x = mu + sigma * std_normal_quantile(u).expect("u is inside (0, 1)");
    if lower_quantile > 0.0 {
        let bound = mu + sigma * std_normal_quantile(lower_quantile).expect("q inside (0, 1)");
        x.max(bound)
    } else {
        x
    }
}

/// Multivariate normal with a dense covariance.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MvNormal {
    mean: Vec<f64>,
    cov: Matrix,
}

impl MvNormal {
    /// Checks dimensions, finiteness and symmetry (1e-9 relative).
    pub fn new(mean: Vec<f64>, cov: Matrix) -> Result<Self> {
        if cov.rows() != mean.len() || !cov.is_square() {
            return Err(shape(format!(
                "mean of length {} with a {}x{} covariance",
                mean.len(),
                cov.rows(),
                cov.cols()
            )));
        }
        if mean.iter().any(|v| !v.is_finite()) || !cov.is_finite() {
            return Err(Error::NonFinite("multivariate normal parameters".into()));
        }
        if !cov.is_symmetric(1e-9) {
            return Err(Error::Domain("covariance is not symmetric".into()));
        }
        Ok(MvNormal { mean, cov })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn cov(&self) -> &Matrix {
        &self.cov
    }

    pub fn variance(&self, i: usize) -> f64 {
        self.cov.get(i, i)
    }

    /// Joint draw `mean + L·z` using a jittered Cholesky factor.
    ///
    /// Coordinates with zero variance are returned at their mean (in a PSD
    /// matrix their covariances vanish too), so degenerate beliefs draw exactly.
    pub fn sample(&self, rng: &mut Rng) -> Result<Vec<f64>> {
        let active: Vec<usize> = (0..self.dim()).filter(|&i| self.cov.get(i, i) > 0.0).collect();
        let mut out = self.mean.clone();
        if active.is_empty() {
            return Ok(out);
        }
        let chol = cholesky(&self.cov.select(&active, &active), 0.0)?;
        let z = rng.normals(active.len());
        let l = chol.l();
        for (a, &i) in active.iter().enumerate() {
            out[i] += (0..=a).map(|k| l.get(a, k) * z[k]).sum::<f64>();
        }
        Ok(out)
    }
}

/// Condition a joint Gaussian on `x[observed_idx] = observed_vals`.
///
/// Returns the distribution of the remaining coordinates, in ascending index
/// order: `N(μ_a + Σ_ab Σ_bb⁻¹ (v − μ_b), Σ_aa − Σ_ab Σ_bb⁻¹ Σ_ba)`.
pub fn gaussian_condition(
    joint: &MvNormal,
    observed_idx: &[usize],
    observed_vals: &[f64],
) -> Result<MvNormal> {
    let d = joint.dim();
    if observed_idx.len() != observed_vals.len() {
        return Err(shape("observed indices and values differ in length"));
    }
    let mut seen = vec![false; d];
    for &i in observed_idx {
        if i >= d || seen[i] {
            return Err(Error::Domain(format!("observed index {i} invalid or repeated")));
        }
        seen[i] = true;
    }
    let rest: Vec<usize> = (0..d).filter(|&i| !seen[i]).collect();
    if observed_idx.is_empty() {
        return MvNormal::new(
            rest.iter().map(|&i| joint.mean[i]).collect(),
            joint.cov.select(&rest, &rest),
        );
    }

    let s_bb = joint.cov.select(observed_idx, observed_idx);
    let s_ab = joint.cov.select(&rest, observed_idx);
    let s_aa = joint.cov.select(&rest, &rest);
    let chol = cholesky(&s_bb, 0.0)?;

    let resid: Vec<f64> = observed_idx
        .iter()
        .zip(observed_vals)
        .map(|(&i, &v)| v - joint.mean[i])
        .collect();
    let w = chol.solve(&resid);
    let shift = s_ab.matvec(&w);
    let mean: Vec<f64> = rest.iter().zip(shift).map(|(&i, s)| joint.mean[i] + s).collect();

    // Σ_ab Σ_bb⁻¹ Σ_ba = (L⁻¹ Σ_ba)ᵀ (L⁻¹ Σ_ba)
    let half: Vec<Vec<f64>> = (0..rest.len()).map(|a| chol.forward(s_ab.row(a))).collect();
    let mut cov = s_aa;
    for a in 0..rest.len() {
        for b in 0..=a {
            let reduction: f64 = half[a].iter().zip(&half[b]).map(|(x, y)| x * y).sum();
            let v = cov.get(a, b) - reduction;
            cov.set(a, b, v);
            cov.set(b, a, v);
        }
    }
    for a in 0..rest.len() {
        if cov.get(a, a) < 0.0 {
            cov.set(a, a, 0.0);
        }
    }
    MvNormal::new(mean, cov)
}
