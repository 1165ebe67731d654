//! Hallucination rules: how a joint prediction becomes a simulated
//! (state delta, reward) pair inside a model rollout.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gaussian::{gaussian_condition, truncated_normal_at, truncated_normal_sample, MvNormal};
use crate::model::JointPrediction;
use crate::rng::Rng;

/// Linear ramp of the reward quantile threshold `r_min` over training.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OptimismSchedule {
    pub r_min_start: f64,
    pub r_min_end: f64,
    pub total_env_steps: u64,
}

impl OptimismSchedule {
    pub fn new(r_min_start: f64, r_min_end: f64, total_env_steps: u64) -> Result<Self> {
        if !(0.0 <= r_min_start && r_min_start <= r_min_end && r_min_end < 1.0) {
            return Err(Error::Config(format!(
                "optimism schedule needs 0 <= start <= end < 1, got {r_min_start} -> {r_min_end}"
            )));
        }
        Ok(OptimismSchedule { r_min_start, r_min_end, total_env_steps })
    }

    pub fn r_min_at(&self, steps: u64) -> f64 {
        if self.total_env_steps == 0 {
            return self.r_min_end;
        }
        let frac = steps as f64 / self.total_env_steps as f64;
        (self.r_min_start + (self.r_min_end - self.r_min_start) * frac).clamp(self.r_min_start, self.r_min_end)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum StrategyKind {
    Greedy,
    GreedyKnownReward,
    ThompsonSampling,
    HotGp,
    OptimisticDiagonal,
    HucrlApprox { beta: f64, samples: usize },
    HucrlKnownReward { beta: f64, samples: usize },
}

impl StrategyKind {
    pub const NAMES: [&'static str; 7] = [
        "greedy",
        "greedy_known_reward",
        "thompson",
        "hot_gp",
        "optimistic_diagonal",
        "hucrl_approx",
        "hucrl_known_reward",
    ];

    /// Parse a strategy name, attaching H-UCRL parameters where relevant.
    pub fn from_name(name: &str, beta: f64, samples: usize) -> Result<Self> {
        let kind = match name {
            "greedy" => StrategyKind::Greedy,
            "greedy_known_reward" => StrategyKind::GreedyKnownReward,
            "thompson" | "thompson_sampling" => StrategyKind::ThompsonSampling,
            "hot_gp" | "hotgp" => StrategyKind::HotGp,
            "optimistic_diagonal" => StrategyKind::OptimisticDiagonal,
            "hucrl_approx" => StrategyKind::HucrlApprox { beta, samples },
            "hucrl_known_reward" => StrategyKind::HucrlKnownReward { beta, samples },
            other => {
                return Err(Error::Config(format!(
                    "unknown strategy `{other}` (expected one of {})",
                    Self::NAMES.join(", ")
                )))
            }
        };
        kind.validate()?;
        Ok(kind)
    }

    pub fn name(&self) -> &'static str {
        match self {
            StrategyKind::Greedy => "greedy",
            StrategyKind::GreedyKnownReward => "greedy_known_reward",
            StrategyKind::ThompsonSampling => "thompson",
            StrategyKind::HotGp => "hot_gp",
            StrategyKind::OptimisticDiagonal => "optimistic_diagonal",
            StrategyKind::HucrlApprox { .. } => "hucrl_approx",
            StrategyKind::HucrlKnownReward { .. } => "hucrl_known_reward",
        }
    }

    pub fn validate(&self) -> Result<()> {
        if let StrategyKind::HucrlApprox { beta, samples } | StrategyKind::HucrlKnownReward { beta, samples } = *self {
            if !(beta > 0.0) || samples < 1 {
                return Err(Error::Config(format!("H-UCRL needs beta > 0 and samples >= 1, got {beta}, {samples}")));
            }
        }
        Ok(())
    }

    pub fn needs_reward_oracle(&self) -> bool {
        matches!(self, StrategyKind::GreedyKnownReward | StrategyKind::HucrlKnownReward { .. })
    }
}

impl fmt::Display for StrategyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for StrategyKind {
    type Err = Error;

    /// Names only; H-UCRL variants get the default `β = 0.01`, `Z = 5`.
    fn from_str(s: &str) -> Result<Self> {
        Self::from_name(s, 0.01, 5)
    }
}

/// A simulated step: change of the dynamic state components and reward.
#[derive(Clone, Debug, PartialEq)]
pub struct Hallucination {
    pub delta: Vec<f64>,
    pub reward: f64,
}

/// `r(s, a, s')`.
pub type RewardFn<'a> = dyn Fn(&[f64], &[f64], &[f64]) -> f64 + 'a;

/// What a strategy may know about the step besides the prediction.
pub struct StepContext<'a> {
    pub state: &'a [f64],
    pub action: &'a [f64],
    /// Full next observation for a dynamic-state delta (composition and
    /// clipping are the caller's business).
    pub compose: &'a dyn Fn(&[f64]) -> Vec<f64>,
    /// Ground-truth reward `r(s, a, s')`, for the known-reward variants.
    pub reward_oracle: Option<&'a RewardFn<'a>>,
}

fn split_mean(pred: &JointPrediction) -> Hallucination {
    Hallucination { delta: pred.state_mean().to_vec(), reward: pred.reward_mean() }
}

pub fn hallucinate_greedy(pred: &JointPrediction) -> Hallucination {
    split_mean(pred)
}

/// Optimistic reward: the reward marginal truncated below its `r_min`
/// quantile.
pub fn optimistic_reward(pred: &JointPrediction, r_min: f64, rng: &mut Rng) -> f64 {
    truncated_normal_sample(pred.reward_mean(), pred.reward_std(), r_min, rng)
}

/// Distribution of the state delta given the reward coordinate equals `r_hat`.
pub fn condition_on_reward(pred: &JointPrediction, r_hat: f64) -> Result<MvNormal> {
    if pred.reward_std() == 0.0 {
        // a degenerate reward marginal carries no information about the state
        let idx: Vec<usize> = (0..pred.state_dim()).collect();
        return MvNormal::new(pred.state_mean().to_vec(), pred.cov().select(&idx, &idx));
    }
    gaussian_condition(pred.dist(), &[pred.reward_index()], &[r_hat])
}

/// HOT-GP with a caller-chosen reward; the state is the conditional mean.
pub fn hotgp_given_reward(pred: &JointPrediction, r_hat: f64) -> Result<Hallucination> {
    let cond = condition_on_reward(pred, r_hat)?;
    Ok(Hallucination { delta: cond.mean().to_vec(), reward: r_hat })
}

/// HOT-GP with the truncated draw made at a fixed uniform `u ∈ [r_min, 1)`.
pub fn hotgp_at_quantile(pred: &JointPrediction, u: f64) -> Result<Hallucination> {
    let r_hat = truncated_normal_at(pred.reward_mean(), pred.reward_std(), u)?;
    hotgp_given_reward(pred, r_hat)
}

pub fn hallucinate_hotgp(pred: &JointPrediction, r_min: f64, rng: &mut Rng) -> Result<Hallucination> {
    let r_hat = optimistic_reward(pred, r_min, rng);
    hotgp_given_reward(pred, r_hat)
}

/// Like HOT-GP, but the state is sampled from the conditional rather than
/// set to its mean.
pub fn hallucinate_thompson(pred: &JointPrediction, r_min: f64, rng: &mut Rng) -> Result<Hallucination> {
    let r_hat = optimistic_reward(pred, r_min, rng);
    let cond = condition_on_reward(pred, r_hat)?;
    Ok(Hallucination { delta: cond.sample(rng)?, reward: r_hat })
}

/// Optimistic reward, unconditioned mean state.
pub fn hallucinate_optimistic_diagonal(pred: &JointPrediction, r_min: f64, rng: &mut Rng) -> Hallucination {
    let reward = optimistic_reward(pred, r_min, rng);
    Hallucination { delta: pred.state_mean().to_vec(), reward }
}

/// Candidate deltas `μ_s + β·σ_s∘η` for given perturbations `η ∈ [−1, 1]^p`.
pub fn hucrl_candidates(pred: &JointPrediction, beta: f64, etas: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let mu = pred.state_mean();
    let sd = pred.state_std();
    etas.iter()
        .map(|eta| (0..mu.len()).map(|i| mu[i] + beta * sd[i] * eta[i]).collect())
        .collect()
}

/// Index of the highest-scoring candidate (first on ties) and its score.
pub fn argmax_candidate(candidates: &[Vec<f64>], score: impl Fn(&[f64]) -> Result<f64>) -> Result<(usize, f64)> {
    let mut best = (0, f64::NEG_INFINITY);
    for (j, c) in candidates.iter().enumerate() {
        let v = score(c)?;
        if v > best.1 {
            best = (j, v);
        }
    }
    Ok(best)
}

pub fn hucrl_etas(dim: usize, samples: usize, rng: &mut Rng) -> Vec<Vec<f64>> {
    (0..samples).map(|_| (0..dim).map(|_| rng.uniform_range(-1.0, 1.0)).collect()).collect()
}

/// Expected reward under the model given the state delta `delta`.
pub fn model_reward_given_state(pred: &JointPrediction, delta: &[f64]) -> Result<f64> {
    let idx: Vec<usize> = (0..pred.state_dim()).collect();
    let cond = gaussian_condition(pred.dist(), &idx, delta)?;
    Ok(cond.mean()[0])
}

/// H-UCRL with a known reward: each candidate is scored by the true reward of
/// landing there; the reported reward is that of the chosen candidate.
pub fn hucrl_known_reward(
    pred: &JointPrediction,
    etas: &[Vec<f64>],
    beta: f64,
    ctx: &StepContext<'_>,
) -> Result<Hallucination> {
    let oracle = ctx
        .reward_oracle
        .ok_or_else(|| Error::Config("known-reward strategy without a reward oracle".into()))?;
    let candidates = hucrl_candidates(pred, beta, etas);
    let score = |d: &[f64]| Ok(oracle(ctx.state, ctx.action, &(ctx.compose)(d)));
    let (j, reward) = argmax_candidate(&candidates, score)?;
    Ok(Hallucination { delta: candidates[j].clone(), reward })
}

/// H-UCRL with the model's reward: candidates are scored by the model's
/// conditional reward mean given that state.
pub fn hucrl_approx(pred: &JointPrediction, etas: &[Vec<f64>], beta: f64) -> Result<Hallucination> {
    let candidates = hucrl_candidates(pred, beta, etas);
    let (j, reward) = argmax_candidate(&candidates, |d| model_reward_given_state(pred, d))?;
    Ok(Hallucination { delta: candidates[j].clone(), reward })
}

/// Apply the configured rule to one prediction.
pub fn hallucinate(
    kind: &StrategyKind,
    pred: &JointPrediction,
    r_min: f64,
    ctx: &StepContext<'_>,
    rng: &mut Rng,
) -> Result<Hallucination> {
    match *kind {
        StrategyKind::Greedy => Ok(hallucinate_greedy(pred)),
        StrategyKind::GreedyKnownReward => {
            let oracle = ctx
                .reward_oracle
                .ok_or_else(|| Error::Config("known-reward strategy without a reward oracle".into()))?;
            let delta = pred.state_mean().to_vec();
            let reward = oracle(ctx.state, ctx.action, &(ctx.compose)(&delta));
            Ok(Hallucination { delta, reward })
        }
        StrategyKind::ThompsonSampling => hallucinate_thompson(pred, r_min, rng),
        StrategyKind::HotGp => hallucinate_hotgp(pred, r_min, rng),
        StrategyKind::OptimisticDiagonal => Ok(hallucinate_optimistic_diagonal(pred, r_min, rng)),
        StrategyKind::HucrlApprox { beta, samples } => {
            let etas = hucrl_etas(pred.state_dim(), samples, rng);
            hucrl_approx(pred, &etas, beta)
        }
        StrategyKind::HucrlKnownReward { beta, samples } => {
            let etas = hucrl_etas(pred.state_dim(), samples, rng);
            hucrl_known_reward(pred, &etas, beta, ctx)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gaussian::std_normal_quantile;
    use crate::linalg::Matrix;

    fn pred(mean: Vec<f64>, rows: &[Vec<f64>]) -> JointPrediction {
        JointPrediction::new(mean, Matrix::from_rows(rows).unwrap()).unwrap()
    }

    fn identity_compose(d: &[f64]) -> Vec<f64> {
        d.to_vec()
    }

    #[test]
    fn schedule_endpoints_and_midpoint() {
        let s = OptimismSchedule::new(0.1, 0.7, 1000).unwrap();
        assert_eq!(s.r_min_at(0), 0.1);
        assert!((s.r_min_at(500) - 0.4).abs() < 1e-15);
        assert_eq!(s.r_min_at(1000), 0.7);
        assert_eq!(s.r_min_at(5000), 0.7);
        assert!(OptimismSchedule::new(0.5, 0.3, 10).is_err());
        assert!(OptimismSchedule::new(0.1, 1.0, 10).is_err());
    }

    #[test]
    fn names_round_trip() {
        for name in StrategyKind::NAMES {
            let k: StrategyKind = name.parse().unwrap();
            assert_eq!(k.name(), name);
        }
        assert!("ucb".parse::<StrategyKind>().is_err());
        assert!(StrategyKind::from_name("hucrl_approx", 0.0, 5).is_err());
    }

    #[test]
    fn forced_quantile_hotgp() {
        let p = pred(vec![0.0, 0.0], &[vec![1.0, 0.8], vec![0.8, 1.0]]);
        let h = hotgp_at_quantile(&p, 0.75).unwrap();
        let r = std_normal_quantile(0.75).unwrap();
        assert!((h.reward - r).abs() < 1e-15);
        assert!((h.delta[0] - 0.8 * r).abs() < 1e-12);
    }

    #[test]
    fn zero_cross_covariance_keeps_the_mean_state() {
        let p = pred(vec![1.0, -2.0, 0.5], &[vec![1.0, 0.2, 0.0], vec![0.2, 2.0, 0.0], vec![0.0, 0.0, 0.3]]);
        let mut rng = Rng::seed_from(0);
        for _ in 0..20 {
            let h = hallucinate_hotgp(&p, 0.7, &mut rng).unwrap();
            assert_eq!(h.delta, vec![1.0, -2.0]);
            let d = hallucinate_optimistic_diagonal(&p, 0.7, &mut rng);
            assert_eq!(d.delta, h.delta);
        }
    }

    #[test]
    fn degenerate_reward_marginal() {
        let p = pred(vec![0.4, 1.5], &[vec![1.0, 0.0], vec![0.0, 0.0]]);
        let h = hallucinate_hotgp(&p, 0.9, &mut Rng::seed_from(1)).unwrap();
        assert_eq!(h, Hallucination { delta: vec![0.4], reward: 1.5 });
    }

    #[test]
    fn truncation_lower_bound_holds() {
        let p = pred(vec![0.0, 1.0], &[vec![1.0, 0.5], vec![0.5, 4.0]]);
        let bound = 1.0 + 2.0 * std_normal_quantile(0.7).unwrap();
        let mut rng = Rng::seed_from(2);
        for _ in 0..1000 {
            assert!(hallucinate_optimistic_diagonal(&p, 0.7, &mut rng).reward >= bound);
        }
    }

    #[test]
    fn thompson_equals_hotgp_without_conditional_spread() {
        // state fully determined by reward: conditional covariance is zero
        let p = pred(vec![0.0, 0.0], &[vec![1.0, 1.0], vec![1.0, 1.0 + 1e-12]]);
        let mut r1 = Rng::seed_from(3);
        let mut r2 = Rng::seed_from(3);
        let a = hallucinate_hotgp(&p, 0.3, &mut r1).unwrap();
        let b = hallucinate_thompson(&p, 0.3, &mut r2).unwrap();
        assert_eq!(a.reward, b.reward);
        assert!((a.delta[0] - b.delta[0]).abs() < 1e-5);
    }

    #[test]
    fn hucrl_zero_beta_is_greedy() {
        let p = pred(vec![0.3, -0.1, 2.0], &[vec![1.0, 0.0, 0.5], vec![0.0, 1.0, 0.1], vec![0.5, 0.1, 1.0]]);
        let mut rng = Rng::seed_from(4);
        let etas = hucrl_etas(2, 5, &mut rng);
        let h = hucrl_approx(&p, &etas, 0.0).unwrap();
        assert_eq!(h.delta, hallucinate_greedy(&p).delta);
    }

    #[test]
    fn hucrl_single_candidate() {
        let p = pred(vec![0.0, 0.0, 0.0], &[vec![4.0, 0.0, 0.0], vec![0.0, 1.0, 0.0], vec![0.0, 0.0, 1.0]]);
        let etas = vec![vec![0.5, -1.0]];
        let h = hucrl_approx(&p, &etas, 0.1).unwrap();
        assert_eq!(h.delta, vec![0.1 * 2.0 * 0.5, -0.1]);
    }

    #[test]
    fn hucrl_known_reward_picks_the_best_candidate() {
        // unit std, linear reward 3·x₀ − x₁ of the landing state
        let p = pred(vec![0.0, 0.0, 0.0], &[vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0], vec![0.0, 0.0, 1.0]]);
        let etas = vec![vec![0.1, 0.0], vec![-0.5, 0.5], vec![0.4, 0.9], vec![0.3, -0.8], vec![-1.0, -1.0]];
        // scores: 0.3, −2.0, 0.3, 1.7, −2.0 → candidate 3
        let oracle = |_: &[f64], _: &[f64], s2: &[f64]| 3.0 * s2[0] - s2[1];
        let ctx = StepContext { state: &[], action: &[], compose: &identity_compose, reward_oracle: Some(&oracle) };
        let h = hucrl_known_reward(&p, &etas, 1.0, &ctx).unwrap();
        assert_eq!(h.delta, vec![0.3, -0.8]);
        assert!((h.reward - 1.7).abs() < 1e-12);
    }

    #[test]
    fn known_reward_greedy_uses_the_oracle() {
        let p = pred(vec![0.5, 9.0], &[vec![1.0, 0.0], vec![0.0, 1.0]]);
        let oracle = |s: &[f64], a: &[f64], s2: &[f64]| s[0] + a[0] + s2[0];
        let ctx = StepContext {
            state: &[1.0],
            action: &[2.0],
            compose: &|d: &[f64]| vec![1.0 + d[0]],
            reward_oracle: Some(&oracle),
        };
        let h = hallucinate(&StrategyKind::GreedyKnownReward, &p, 0.0, &ctx, &mut Rng::seed_from(0)).unwrap();
        assert_eq!(h, Hallucination { delta: vec![0.5], reward: 4.5 });
    }

    #[test]
    fn predictions_are_not_modified() {
        let p = pred(vec![0.1, 0.2, 0.3], &[vec![1.0, 0.3, 0.2], vec![0.3, 1.0, 0.4], vec![0.2, 0.4, 1.0]]);
        let copy = p.clone();
        let oracle = |_: &[f64], _: &[f64], s2: &[f64]| s2[0];
        let ctx = StepContext { state: &[], action: &[], compose: &identity_compose, reward_oracle: Some(&oracle) };
        let mut rng = Rng::seed_from(5);
        for name in StrategyKind::NAMES {
            let kind: StrategyKind = name.parse().unwrap();
            hallucinate(&kind, &p, 0.5, &ctx, &mut rng).unwrap();
            assert_eq!(p, copy);
        }
    }

    #[test]
    fn zero_covariance_makes_every_strategy_greedy() {
        let p = pred(vec![0.1, -0.2, 0.7], &[vec![0.0; 3], vec![0.0; 3], vec![0.0; 3]]);
        let greedy = hallucinate_greedy(&p);
        let oracle = |_: &[f64], _: &[f64], _: &[f64]| 0.7;
        let ctx = StepContext { state: &[], action: &[], compose: &identity_compose, reward_oracle: Some(&oracle) };
        let mut rng = Rng::seed_from(6);
        for name in StrategyKind::NAMES {
            let kind: StrategyKind = name.parse().unwrap();
            let h = hallucinate(&kind, &p, 0.5, &ctx, &mut rng).unwrap();
            assert_eq!(h.delta, greedy.delta, "{name}");
            assert!((h.reward - greedy.reward).abs() < 1e-12, "{name}");
        }
    }
}
