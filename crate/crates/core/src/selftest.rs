//! Oracle suites that check the numerical core against independent
//! reference computations: Monte-Carlo conditioning, a truncated-normal KS
//! test, a dense exact-GP reference, finite-difference gradients and
//! strategy identities.
//!
//! The references deliberately avoid the library's own numerics: they carry
//! their own Cholesky, Matern kernel, normal CDF and loss formulas.

use std::time::Instant;

use crate::envs::ArmSpec;
use crate::error::Result;
use crate::gaussian::{gaussian_condition, truncated_normal_sample, MvNormal};
use crate::linalg::Matrix;
use crate::model::{gaussian_nll_and_grad, GpHyper, JointPrediction, LmcPosterior};
use crate::nn::{Activation, GaussianHead, Mlp};
use crate::policy::{ActionBounds, DdpgAgent, DdpgConfig, SacAgent, SacConfig};
use crate::rng::Rng;
use crate::strategy::{
    hallucinate, hallucinate_hotgp, hallucinate_optimistic_diagonal, Hallucination, StepContext, StrategyKind,
};

pub const SUITES: [&str; 5] = ["conditioning", "truncated_normal", "gp_equivalence", "gradients", "strategy_identities"];

/// Kolmogorov–Smirnov critical value at significance 0.01 for the
/// Stephens-modified statistic `D·(√n + 0.12 + 0.11/√n)`.
pub const KS_CRITICAL_001: f64 = 1.628;

#[derive(Clone, Debug)]
pub struct SuiteResult {
    pub name: String,
    pub passed: bool,
    /// Worst observed statistic and its limit, human readable.
    pub detail: String,
    pub seconds: f64,
}

impl SuiteResult {
    fn new(name: &str, passed: bool, detail: String, started: Instant) -> Self {
        SuiteResult { name: name.to_string(), passed, detail, seconds: started.elapsed().as_secs_f64() }
    }

    fn failed(name: &str, err: impl std::fmt::Display, started: Instant) -> Self {
        Self::new(name, false, format!("error: {err}"), started)
    }
}

pub type ConditionFn = fn(&MvNormal, &[usize], &[f64]) -> Result<MvNormal>;
pub type TruncatedSampler = fn(f64, f64, f64, &mut Rng) -> f64;

/// Run one suite by name at its full size.
pub fn run_suite(name: &str) -> Option<SuiteResult> {
    Some(match name {
        "conditioning" => conditioning_suite(gaussian_condition, 50, 1_000_000, 11),
        "truncated_normal" => truncated_normal_suite(truncated_normal_sample, 10_000, 12),
        "gp_equivalence" => gp_equivalence_suite(20, 13),
        "gradients" => gradient_suite(14),
        "strategy_identities" => strategy_suite(10_000, 15),
        _ => return None,
    })
}

pub fn run_all() -> Vec<SuiteResult> {
    SUITES.iter().map(|s| run_suite(s).expect("known suite")).collect()
}

// ---------------------------------------------------------------------------
// reference numerics

/// Textbook Cholesky–Banachiewicz; `None` when a pivot is not positive.
fn ref_cholesky(a: &[Vec<f64>]) -> Option<Vec<Vec<f64>>> {
    let n = a.len();
    let mut l = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..=i {
            let s: f64 = (0..j).map(|k| l[i][k] * l[j][k]).sum();
            if i == j {
                let d = a[i][i] - s;
                if d <= 0.0 {
                    return None;
                }
                l[i][i] = d.sqrt();
            } else {
                l[i][j] = (a[i][j] - s) / l[j][j];
            }
        }
    }
    Some(l)
}

/// Solve `A x = b` given the Cholesky factor of `A`.
fn ref_solve(l: &[Vec<f64>], b: &[f64]) -> Vec<f64> {
    let n = l.len();
    let mut z = vec![0.0; n];
    for i in 0..n {
        let s: f64 = (0..i).map(|k| l[i][k] * z[k]).sum();
        z[i] = (b[i] - s) / l[i][i];
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let s: f64 = (i + 1..n).map(|k| l[k][i] * x[k]).sum();
        x[i] = (z[i] - s) / l[i][i];
    }
    x
}

fn ref_normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / std::f64::consts::SQRT_2)
}

fn ref_matern52(a: &[f64], b: &[f64], ls: &[f64], signal: f64) -> f64 {
    let r = a.iter().zip(b).zip(ls).map(|((x, y), l)| ((x - y) / l).powi(2)).sum::<f64>().sqrt();
    let s5 = 5f64.sqrt() * r;
    signal * (1.0 + s5 + s5 * s5 / 3.0) * (-s5).exp()
}

fn random_spd(d: usize, rng: &mut Rng) -> Vec<Vec<f64>> {
    let a: Vec<Vec<f64>> = (0..d).map(|_| rng.normals(d)).collect();
    (0..d)
        .map(|i| (0..d).map(|j| (0..d).map(|k| a[i][k] * a[j][k]).sum::<f64>() / d as f64 + if i == j { 0.1 } else { 0.0 }).collect())
        .collect()
}

fn to_matrix(rows: &[Vec<f64>]) -> Matrix {
    Matrix::from_rows(rows).expect("rectangular")
}

// ---------------------------------------------------------------------------
// conditioning

/// Compare `cond` with rejection sampling: draw from the joint, keep draws
/// whose observed coordinate falls within `±0.02·σ` of the observed value,
/// and check the kept draws' mean and variance of every other coordinate
/// within 4 standard errors.
pub fn conditioning_suite(cond: ConditionFn, joints: usize, samples: usize, seed: u64) -> SuiteResult {
    const NAME: &str = "conditioning";
    const WINDOW: f64 = 0.02;
    const Z_LIMIT: f64 = 4.0;
    let started = Instant::now();
    let mut rng = Rng::seed_from(seed);
    let mut worst = 0.0f64;
    let mut min_kept = usize::MAX;
    for case in 0..joints {
        let d = 2 + case % 5;
        let cov = random_spd(d, &mut rng);
        let mean = rng.normals(d);
        let b = rng.below(d);
        let sd_b = cov[b][b].sqrt();
        let v = mean[b] + sd_b * rng.uniform_range(-1.5, 1.5);
        let joint = match MvNormal::new(mean.clone(), to_matrix(&cov)) {
            Ok(j) => j,
            Err(e) => return SuiteResult::failed(NAME, e, started),
        };
        let c = match cond(&joint, &[b], &[v]) {
            Ok(c) => c,
            Err(e) => return SuiteResult::failed(NAME, e, started),
        };
        let rest: Vec<usize> = (0..d).filter(|&i| i != b).collect();
        if c.dim() != rest.len() {
            return SuiteResult::new(NAME, false, format!("case {case}: conditional has dim {}", c.dim()), started);
        }

        let l = ref_cholesky(&cov).expect("SPD by construction");
        let mut sum = vec![0.0; d];
        let mut sumsq = vec![0.0; d];
        let mut kept = 0usize;
        let mut z = vec![0.0; d];
        let mut x = vec![0.0; d];
        for _ in 0..samples {
            for zi in z.iter_mut() {
                *zi = rng.normal();
            }
            for i in 0..d {
                x[i] = mean[i] + (0..=i).map(|k| l[i][k] * z[k]).sum::<f64>();
            }
            if (x[b] - v).abs() < WINDOW * sd_b {
                kept += 1;
                for i in 0..d {
                    sum[i] += x[i];
                    sumsq[i] += x[i] * x[i];
                }
            }
        }
        min_kept = min_kept.min(kept);
        if kept < 100 {
            return SuiteResult::new(NAME, false, format!("case {case}: only {kept} draws accepted"), started);
        }
        let n = kept as f64;
        for (k, &i) in rest.iter().enumerate() {
            let m = sum[i] / n;
            let var = (sumsq[i] - n * m * m) / (n - 1.0);
            let (cm, cv) = (c.mean()[k], c.variance(k));
            let z_mean = (m - cm).abs() / (cv / n).sqrt();
            let z_var = (var - cv).abs() / (cv * (2.0 / (n - 1.0)).sqrt());
            worst = worst.max(z_mean).max(z_var);
        }
    }
    let passed = worst < Z_LIMIT;
    SuiteResult::new(
        NAME,
        passed,
        format!("{joints} joints, worst |z| = {worst:.2} (limit {Z_LIMIT}), fewest accepted draws {min_kept}"),
        started,
    )
}

// ---------------------------------------------------------------------------
// truncated normal

/// KS statistic of `samples` against `cdf`.
pub fn ks_statistic(samples: &mut [f64], cdf: impl Fn(f64) -> f64) -> f64 {
    samples.sort_by(f64::total_cmp);
    let n = samples.len() as f64;
    samples
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            (f - i as f64 / n).max((i + 1) as f64 / n - f)
        })
        .fold(0.0, f64::max)
}

pub fn truncated_normal_suite(sampler: TruncatedSampler, samples: usize, seed: u64) -> SuiteResult {
    const NAME: &str = "truncated_normal";
    let started = Instant::now();
    let (mu, sigma) = (0.3, 1.7);
    let mut rng = Rng::seed_from(seed);
    let mut worst = 0.0f64;
    let mut parts = Vec::new();
    for q in [0.0, 0.3, 0.5, 0.7, 0.9] {
        let mut xs: Vec<f64> = (0..samples).map(|_| sampler(mu, sigma, q, &mut rng)).collect();
        let d = ks_statistic(&mut xs, |x| ((ref_normal_cdf((x - mu) / sigma) - q) / (1.0 - q)).clamp(0.0, 1.0));
        let rn = (samples as f64).sqrt();
        let stat = d * (rn + 0.12 + 0.11 / rn);
        worst = worst.max(stat);
        parts.push(format!("q={q}: {stat:.3}"));
    }
    let passed = worst < KS_CRITICAL_001;
    SuiteResult::new(NAME, passed, format!("{} (critical {KS_CRITICAL_001})", parts.join(", ")), started)
}

// ---------------------------------------------------------------------------
// GP equivalence

fn ref_coregionalization(h: &GpHyper) -> Vec<Vec<f64>> {
    let d = h.log_diag.len();
    let mut l = vec![vec![0.0; d]; d];
    let mut idx = 0;
    for (i, row) in l.iter_mut().enumerate() {
        for v in row.iter_mut().take(i + 1) {
            *v = h.mix[idx];
            idx += 1;
        }
    }
    (0..d)
        .map(|i| {
            (0..d)
                .map(|j| (0..d).map(|k| l[i][k] * l[j][k]).sum::<f64>() + if i == j { h.log_diag[i].exp() } else { 0.0 })
                .collect()
        })
        .collect()
}

/// Dense exact GP over the `nD` stacked outputs, ordered output-major.
struct DenseGp {
    x: Vec<Vec<f64>>,
    b: Vec<Vec<f64>>,
    ls: Vec<f64>,
    signal: f64,
    l: Vec<Vec<f64>>,
    alpha: Vec<f64>,
    y: Vec<f64>,
}

impl DenseGp {
    fn new(x: &Matrix, r: &Matrix, h: &GpHyper) -> Option<Self> {
        let (n, d) = (x.rows(), r.cols());
        let xs: Vec<Vec<f64>> = (0..n).map(|i| x.row(i).to_vec()).collect();
        let b = ref_coregionalization(h);
        let ls: Vec<f64> = h.log_lengthscales.iter().map(|v| v.exp()).collect();
        let signal = h.log_signal.exp();
        let noise = h.noise_floor + h.noise_raw.exp();
        let mut c = vec![vec![0.0; n * d]; n * d];
        for a in 0..d {
            for i in 0..n {
                for bb in 0..d {
                    for j in 0..n {
                        let mut v = b[a][bb] * ref_matern52(&xs[i], &xs[j], &ls, signal);
                        if a == bb && i == j {
                            v += noise;
                        }
                        c[a * n + i][bb * n + j] = v;
                    }
                }
            }
        }
        let l = ref_cholesky(&c)?;
        let y: Vec<f64> = (0..d).flat_map(|a| (0..n).map(move |i| (a, i))).map(|(a, i)| r.get(i, a)).collect();
        let alpha = ref_solve(&l, &y);
        Some(DenseGp { x: xs, b, ls, signal, l, alpha, y })
    }

    fn lml(&self) -> f64 {
        let m = self.y.len() as f64;
        let fit: f64 = self.y.iter().zip(&self.alpha).map(|(a, b)| a * b).sum();
        let logdet: f64 = 2.0 * self.l.iter().enumerate().map(|(i, row)| row[i].ln()).sum::<f64>();
        -0.5 * fit - 0.5 * logdet - 0.5 * m * (2.0 * std::f64::consts::PI).ln()
    }

    fn predict(&self, xs: &[f64]) -> (Vec<f64>, Vec<Vec<f64>>) {
        let (n, d) = (self.x.len(), self.b.len());
        let k: Vec<f64> = self.x.iter().map(|xi| ref_matern52(xs, xi, &self.ls, self.signal)).collect();
        // column c of the cross covariance between f(xs) and the stacked outputs
        let cross: Vec<Vec<f64>> = (0..d)
            .map(|c| (0..d).flat_map(|a| (0..n).map(move |i| (a, i))).map(|(a, i)| self.b[c][a] * k[i]).collect())
            .collect();
        let mean = cross.iter().map(|col| col.iter().zip(&self.alpha).map(|(p, q)| p * q).sum()).collect();
        let solved: Vec<Vec<f64>> = cross.iter().map(|col| ref_solve(&self.l, col)).collect();
        let cov = (0..d)
            .map(|c| {
                (0..d)
                    .map(|e| self.b[c][e] * self.signal - cross[c].iter().zip(&solved[e]).map(|(p, q)| p * q).sum::<f64>())
                    .collect()
            })
            .collect();
        (mean, cov)
    }
}

fn random_hyper(m: usize, d: usize, rng: &mut Rng) -> GpHyper {
    let mut h = GpHyper::initial(m, d, 1e-6);
    for l in h.log_lengthscales.iter_mut() {
        *l = rng.uniform_range(-0.5, 0.7);
    }
    h.log_signal = rng.uniform_range(-0.5, 0.5);
    for v in h.mix.iter_mut() {
        *v = 0.6 * rng.normal();
    }
    for v in h.log_diag.iter_mut() {
        *v = rng.uniform_range(-3.0, -0.5);
    }
    h.noise_raw = rng.uniform_range(0.01, 0.3f64).ln();
    h
}

pub fn gp_equivalence_suite(instances: usize, seed: u64) -> SuiteResult {
    const NAME: &str = "gp_equivalence";
    const MEAN_TOL: f64 = 1e-8;
    const COV_TOL: f64 = 1e-6;
    const GRAD_REL_TOL: f64 = 1e-3;
    let started = Instant::now();
    let mut rng = Rng::seed_from(seed);
    let (mut worst_mean, mut worst_cov, mut worst_grad) = (0.0f64, 0.0f64, 0.0f64);
    for case in 0..instances {
        let n = 5 + rng.below(26);
        let d = 1 + case % 4;
        let m = 1 + rng.below(3);
        let x = Matrix::from_fn(n, m, |_, _| rng.normal());
        let r = Matrix::from_fn(n, d, |_, _| rng.normal());
        let h = random_hyper(m, d, &mut rng);
        let post = match LmcPosterior::new(x.clone(), r.clone(), h.clone()) {
            Ok(p) => p,
            Err(e) => return SuiteResult::failed(NAME, e, started),
        };
        let Some(dense) = DenseGp::new(&x, &r, &h) else {
            return SuiteResult::new(NAME, false, format!("case {case}: reference covariance not SPD"), started);
        };
        let mut queries: Vec<Vec<f64>> = (0..3).map(|_| rng.normals(m)).collect();
        queries.push(x.row(0).to_vec());
        for q in &queries {
            let (pm, pc) = post.predict(q);
            let (dm, dc) = dense.predict(q);
            for a in 0..d {
                worst_mean = worst_mean.max((pm[a] - dm[a]).abs());
                for b in 0..d {
                    worst_cov = worst_cov.max((pc.get(a, b) - dc[a][b]).abs());
                }
            }
        }
        let lml_gap = (post.log_marginal_likelihood() - dense.lml()).abs() / dense.lml().abs().max(1.0);
        if lml_gap > 1e-8 {
            return SuiteResult::new(NAME, false, format!("case {case}: log marginal likelihood off by {lml_gap:e}"), started);
        }

        let grad = post.gradient();
        let flat = h.to_flat();
        let step = 1e-5;
        for (p, g) in grad.iter().enumerate() {
            let eval = |delta: f64| {
                let mut v = flat.clone();
                v[p] += delta;
                let mut hh = h.clone();
                hh.set_flat(&v);
                DenseGp::new(&x, &r, &hh).map(|g| g.lml())
            };
            let (Some(up), Some(down)) = (eval(step), eval(-step)) else {
                return SuiteResult::new(NAME, false, format!("case {case}: perturbed covariance not SPD"), started);
            };
            let fd = (up - down) / (2.0 * step);
            // relative error, with unit-scale floor for near-zero components
            let rel = (g - fd).abs() / g.abs().max(fd.abs()).max(1e-2);
            worst_grad = worst_grad.max(rel);
        }
    }
    let passed = worst_mean < MEAN_TOL && worst_cov < COV_TOL && worst_grad < GRAD_REL_TOL;
    SuiteResult::new(
        NAME,
        passed,
        format!(
            "{instances} instances: mean gap {worst_mean:.1e} (tol {MEAN_TOL:e}), cov gap {worst_cov:.1e} (tol {COV_TOL:e}), \
             gradient rel err {worst_grad:.1e} (tol {GRAD_REL_TOL:e})"
        ),
        started,
    )
}

// ---------------------------------------------------------------------------
// gradients

const FD_STEP: f64 = 1e-6;
const FD_REL_TOL: f64 = 1e-3;

fn rel_err(analytic: f64, fd: f64) -> f64 {
    (analytic - fd).abs() / analytic.abs().max(fd.abs()).max(1e-6)
}

/// Worst relative error between `grad` and central differences of `loss`
/// over the parameters of `net`.
fn check_params(net: &mut Mlp, grad: &[f64], loss: impl Fn(&Mlp) -> f64) -> f64 {
    let mut worst = 0.0f64;
    for (i, &g) in grad.iter().enumerate() {
        let orig = net.params()[i];
        net.params_mut()[i] = orig + FD_STEP;
        let up = loss(net);
        net.params_mut()[i] = orig - FD_STEP;
        let down = loss(net);
        net.params_mut()[i] = orig;
        worst = worst.max(rel_err(g, (up - down) / (2.0 * FD_STEP)));
    }
    worst
}

fn mlp_case(act: Activation, rng: &mut Rng) -> Result<f64> {
    let widths = [3, 5, 4, 2];
    let mut net = Mlp::new(&widths, &[act, act], rng)?;
    let x = Matrix::from_fn(4, 3, |_, _| rng.normal());
    let w = Matrix::from_fn(4, 2, |_, _| rng.normal());
    let (_, cache) = net.forward_cached(&x)?;
    let mut grad = vec![0.0; net.n_params()];
    net.backward_batch(&cache, &w, &mut grad)?;
    Ok(check_params(&mut net, &grad, |n| {
        let out = n.forward_batch(&x).expect("shapes fixed");
        out.data().iter().zip(w.data()).map(|(a, b)| a * b).sum()
    }))
}

fn ref_gaussian_nll(out: &Matrix, y: &Matrix, head: &GaussianHead) -> f64 {
    let d = y.cols();
    let mut total = 0.0;
    for i in 0..y.rows() {
        for j in 0..d {
            let mu = out.get(i, j);
            let lv = head.logvar(out.get(i, d + j));
            total += 0.5 * ((y.get(i, j) - mu).powi(2) / lv.exp() + lv);
        }
    }
    total / y.rows() as f64
}

fn ensemble_case(rng: &mut Rng) -> Result<f64> {
    let head = GaussianHead::default();
    let mut net = Mlp::new(&[3, 6, 4], &[Activation::Silu], rng)?;
    let x = Matrix::from_fn(5, 3, |_, _| rng.normal());
    let y = Matrix::from_fn(5, 2, |_, _| rng.normal());
    let (out, cache) = net.forward_cached(&x)?;
    let (_, upstream) = gaussian_nll_and_grad(&out, &y, &head);
    let mut grad = vec![0.0; net.n_params()];
    net.backward_batch(&cache, &upstream, &mut grad)?;
    Ok(check_params(&mut net, &grad, |n| ref_gaussian_nll(&n.forward_batch(&x).expect("shapes fixed"), &y, &head)))
}

/// Reparameterized action and tanh-corrected log density, computed inline.
fn ref_squashed(mu: &[f64], sd: &[f64], eps: &[f64], bounds: &ActionBounds) -> (Vec<f64>, f64) {
    let mut a = Vec::with_capacity(mu.len());
    let mut logp = 0.0;
    for j in 0..mu.len() {
        let u = mu[j] + sd[j] * eps[j];
        let (mid, half) = (0.5 * (bounds.low[j] + bounds.high[j]), 0.5 * (bounds.high[j] - bounds.low[j]));
        a.push(mid + half * u.tanh());
        logp += -0.5 * eps[j] * eps[j] - sd[j].ln() - 0.5 * (2.0 * std::f64::consts::PI).ln();
        logp -= (half * (1.0 - u.tanh().powi(2))).ln();
    }
    (a, logp)
}

fn q_value(q: &Mlp, s: &[f64], a: &[f64]) -> f64 {
    let mut x = s.to_vec();
    x.extend_from_slice(a);
    q.forward(&x).expect("shapes fixed")[0]
}

fn sac_case(rng: &mut Rng) -> Result<f64> {
    let cfg = SacConfig { hidden: 4, layers: 1, init_alpha: 0.7, ..SacConfig::default() };
    let bounds = ActionBounds::new(vec![-1.0, -0.5], vec![1.0, 2.0]);
    let mut agent = SacAgent::new(3, bounds.clone(), cfg, rng)?;
    let states = Matrix::from_fn(4, 3, |_, _| rng.normal());
    let eps = Matrix::from_fn(4, 2, |_, _| rng.normal());
    let (_, grad) = agent.actor_loss_and_grad(&states, eps.clone())?;
    let (q1, q2, alpha) = (agent.q1.clone(), agent.q2.clone(), agent.alpha());
    let actor_template = agent.actor.clone();
    Ok(check_params(&mut agent.actor.net, &grad, |net| {
        let mut actor = actor_template.clone();
        actor.net = net.clone();
        let mut total = 0.0;
        for i in 0..states.rows() {
            let (mu, sd) = actor.distribution(states.row(i)).expect("shapes fixed");
            let (a, logp) = ref_squashed(&mu, &sd, eps.row(i), &bounds);
            let q = q_value(&q1, states.row(i), &a).min(q_value(&q2, states.row(i), &a));
            total += alpha * logp - q;
        }
        total / states.rows() as f64
    }))
}

fn ddpg_case(rng: &mut Rng) -> Result<f64> {
    let cfg = DdpgConfig { hidden: 4, layers: 1, ..DdpgConfig::default() };
    let bounds = ActionBounds::symmetric(2, 0.25);
    let mut agent = DdpgAgent::new(3, bounds.clone(), cfg, rng)?;
    let states = Matrix::from_fn(4, 3, |_, _| rng.normal());
    let eps = Matrix::from_fn(4, 2, |_, _| rng.normal());
    let (_, grad) = agent.actor_loss_and_grad(&states, eps.clone())?;
    let q = agent.q.clone();
    let actor_template = agent.actor.clone();
    Ok(check_params(&mut agent.actor.net, &grad, |net| {
        let mut actor = actor_template.clone();
        actor.net = net.clone();
        let mut total = 0.0;
        for i in 0..states.rows() {
            let (mu, sd) = actor.distribution(states.row(i)).expect("shapes fixed");
            let (a, _) = ref_squashed(&mu, &sd, eps.row(i), &bounds);
            total -= q_value(&q, states.row(i), &a);
        }
        total / states.rows() as f64
    }))
}

pub fn gradient_suite(seed: u64) -> SuiteResult {
    const NAME: &str = "gradients";
    let started = Instant::now();
    let mut rng = Rng::seed_from(seed);
    let mut parts = Vec::new();
    let mut worst = 0.0f64;
    let mut record = |label: String, r: Result<f64>| -> std::result::Result<(), String> {
        let e = r.map_err(|e| format!("{label}: {e}"))?;
        worst = worst.max(e);
        parts.push(format!("{label} {e:.1e}"));
        Ok(())
    };
    let outcome = (|| {
        for act in Activation::ALL {
            record(format!("mlp/{act:?}").to_lowercase(), mlp_case(act, &mut rng))?;
        }
        record("ensemble_nll".into(), ensemble_case(&mut rng))?;
        record("sac_actor".into(), sac_case(&mut rng))?;
        record("ddpg_actor".into(), ddpg_case(&mut rng))
    })();
    if let Err(e) = outcome {
        return SuiteResult::failed(NAME, e, started);
    }
    SuiteResult::new(
        NAME,
        worst < FD_REL_TOL,
        format!("worst rel err {worst:.1e} (tol {FD_REL_TOL:e}): {}", parts.join(", ")),
        started,
    )
}

// ---------------------------------------------------------------------------
// strategy identities

fn random_prediction(d: usize, rng: &mut Rng, cross: bool) -> JointPrediction {
    let mut cov = random_spd(d, rng);
    if !cross {
        let r = d - 1;
        for i in 0..r {
            cov[i][r] = 0.0;
            cov[r][i] = 0.0;
        }
    }
    JointPrediction::new(rng.normals(d), to_matrix(&cov)).expect("valid prediction")
}

fn same(a: &Hallucination, b: &Hallucination) -> bool {
    a.reward == b.reward && a.delta == b.delta
}

pub fn strategy_suite(draws: usize, seed: u64) -> SuiteResult {
    const NAME: &str = "strategy_identities";
    let started = Instant::now();
    let mut rng = Rng::seed_from(seed);
    let arm = ArmSpec::default();
    let state = [1.0, 0.0, 1.0, 0.0, 0.4, 0.3, 0.7, 0.2];
    let action = [0.3, -0.2];
    let dynamic = [0usize, 1, 2, 3, 6, 7];
    let compose = |delta: &[f64]| {
        let mut s = state.to_vec();
        for (k, &j) in dynamic.iter().enumerate() {
            s[j] += delta[k];
        }
        s
    };
    let oracle = |_: &[f64], a: &[f64], n: &[f64]| arm.reward([n[6], n[7]], [n[4], n[5]], a);
    let ctx = StepContext { state: &state, action: &action, compose: &compose, reward_oracle: Some(&oracle) };
    let mut failures = Vec::new();

    // (a) r_min = 0 leaves the state mean unbiased
    let pred = random_prediction(7, &mut rng, true);
    let mut sum = [0.0; 6];
    let mut sumsq = [0.0; 6];
    for _ in 0..draws {
        match hallucinate_hotgp(&pred, 0.0, &mut rng) {
            Ok(h) => {
                for (k, v) in h.delta.iter().enumerate() {
                    sum[k] += v;
                    sumsq[k] += v * v;
                }
            }
            Err(e) => return SuiteResult::failed(NAME, e, started),
        }
    }
    let n = draws as f64;
    let mut worst_z = 0.0f64;
    for k in 0..6 {
        let m = sum[k] / n;
        let sd = ((sumsq[k] - n * m * m) / (n - 1.0)).max(0.0).sqrt();
        let z = (m - pred.state_mean()[k]).abs() / (sd / n.sqrt()).max(1e-300);
        worst_z = worst_z.max(z);
    }
    if worst_z >= 4.0 {
        failures.push(format!("(a) worst |z| {worst_z:.2}"));
    }

    // (b) without state-reward covariance HOT-GP is the diagonal variant
    let pred = random_prediction(7, &mut rng, false);
    for i in 0..1000u64 {
        let r_min = (i % 10) as f64 / 10.0;
        let a = hallucinate_hotgp(&pred, r_min, &mut Rng::seed_from(i));
        let b = hallucinate_optimistic_diagonal(&pred, r_min, &mut Rng::seed_from(i));
        if !a.as_ref().is_ok_and(|a| same(a, &b)) {
            failures.push(format!("(b) draw {i} differs"));
            break;
        }
    }

    // (c) zero covariance: every rule is greedy; (d) β = 0 H-UCRL is greedy
    let zero = JointPrediction::new(rng.normals(7), Matrix::zeros(7, 7)).expect("valid prediction");
    let random = random_prediction(7, &mut rng, true);
    let kinds = [
        StrategyKind::ThompsonSampling,
        StrategyKind::HotGp,
        StrategyKind::OptimisticDiagonal,
        StrategyKind::HucrlApprox { beta: 0.01, samples: 5 },
        StrategyKind::HucrlKnownReward { beta: 0.01, samples: 5 },
    ];
    let run = |kind: &StrategyKind, p: &JointPrediction, seed: u64| {
        hallucinate(kind, p, 0.7, &ctx, &mut Rng::seed_from(seed))
    };
    for i in 0..50u64 {
        let greedy = run(&StrategyKind::Greedy, &zero, i);
        let greedy_known = run(&StrategyKind::GreedyKnownReward, &zero, i);
        for kind in &kinds {
            let reference = if kind.needs_reward_oracle() { &greedy_known } else { &greedy };
            let got = run(kind, &zero, i);
            if !matches!((&got, reference), (Ok(a), Ok(b)) if same(a, b)) {
                failures.push(format!("(c) {} differs from greedy", kind.name()));
            }
        }
        for (kind, reference) in [
            (StrategyKind::HucrlApprox { beta: 0.0, samples: 5 }, StrategyKind::Greedy),
            (StrategyKind::HucrlKnownReward { beta: 0.0, samples: 5 }, StrategyKind::GreedyKnownReward),
        ] {
            let (a, b) = (run(&kind, &random, i), run(&reference, &random, i));
            let ok = match (&a, &b) {
                (Ok(a), Ok(b)) => {
                    a.delta == b.delta && (a.reward - b.reward).abs() <= 1e-12 * b.reward.abs().max(1.0)
                }
                _ => false,
            };
            if !ok {
                failures.push(format!("(d) {} with beta 0 differs from greedy", kind.name()));
            }
        }
        if !failures.is_empty() {
            break;
        }
    }

    let passed = failures.is_empty();
    let detail = if passed {
        format!("(a) worst |z| {worst_z:.2} over {draws} draws; (b), (c), (d) exact")
    } else {
        failures.join("; ")
    };
    SuiteResult::new(NAME, passed, detail, started)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_cholesky_and_solve() {
        let a = vec![vec![4.0, 2.0], vec![2.0, 3.0]];
        let l = ref_cholesky(&a).unwrap();
        assert_eq!(l[0], vec![2.0, 0.0]);
        assert!((l[1][1] - 2f64.sqrt()).abs() < 1e-15);
        let x = ref_solve(&l, &[8.0, 7.0]);
        assert!((x[0] - 1.25).abs() < 1e-14 && (x[1] - 1.5).abs() < 1e-14);
        assert!(ref_cholesky(&[vec![1.0, 2.0], vec![2.0, 1.0]]).is_none());
    }

    #[test]
    fn ks_of_exact_quantiles_is_small() {
        let n = 1000;
        let mut xs: Vec<f64> = (0..n).map(|i| (i as f64 + 0.5) / n as f64).collect();
        assert!(ks_statistic(&mut xs, |x| x) <= 0.5 / n as f64 + 1e-15);
    }

    #[test]
    fn small_suites_pass() {
        assert!(conditioning_suite(gaussian_condition, 5, 200_000, 1).passed);
        assert!(truncated_normal_suite(truncated_normal_sample, 2000, 2).passed);
        let gp = gp_equivalence_suite(4, 3);
        assert!(gp.passed, "{}", gp.detail);
        let g = gradient_suite(4);
        assert!(g.passed, "{}", g.detail);
        let s = strategy_suite(2000, 5);
        assert!(s.passed, "{}", s.detail);
    }

    #[test]
    fn shifted_sampler_fails_ks() {
        fn shifted(mu: f64, sigma: f64, q: f64, rng: &mut Rng) -> f64 {
            truncated_normal_sample(mu, sigma, q, rng) + 0.1 * sigma
        }
        assert!(!truncated_normal_suite(shifted, 10_000, 2).passed);
    }
}
