//! Episodic sparse-reward tasks with a common interface.

mod arm;
mod coverage;
mod maze;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use arm::{ArmEnv, ArmSpec};
pub use coverage::{CoverageEnv, CoverageSpec};
pub use maze::{MazeEnv, MazeSpec, MEDIUM_MAZE, U_MAZE};

use crate::error::{Error, Result};
use crate::policy::ActionBounds;
use crate::rng::Rng;

/// Observation and action layout of one task.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnvSpec {
    pub name: String,
    pub obs_dim: usize,
    /// Observation components that change within an episode (the modelled ones).
    pub dynamic: Vec<usize>,
    pub action_bounds: ActionBounds,
    pub horizon: usize,
    pub obs_low: Vec<f64>,
    pub obs_high: Vec<f64>,
}

impl EnvSpec {
    pub fn act_dim(&self) -> usize {
        self.action_bounds.dim()
    }

    /// Next observation for a dynamic-state delta: static components are
    /// copied from `state`, dynamic ones shifted, everything clipped to the
    /// observation box.
    pub fn compose(&self, state: &[f64], delta: &[f64]) -> Vec<f64> {
        let mut next = state.to_vec();
        for (k, &j) in self.dynamic.iter().enumerate() {
            next[j] += delta[k];
        }
        for (j, v) in next.iter_mut().enumerate() {
            *v = v.clamp(self.obs_low[j], self.obs_high[j]);
        }
        next
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct StepOutcome {
    pub obs: Vec<f64>,
    pub reward: f64,
    pub done: bool,
}

pub trait Environment: Send + Sync {
    fn spec(&self) -> &EnvSpec;

    /// Start a new episode and return the first observation.
    fn reset(&mut self, rng: &mut Rng) -> Vec<f64>;

    fn step(&mut self, action: &[f64]) -> StepOutcome;

    /// The task's reward for `s → s'` under `a`, evaluated against the
    /// environment's current internal state without advancing it.
    fn reward_oracle(&self, state: &[f64], action: &[f64], next: &[f64]) -> f64;

    /// Reward for a hallucinated transition, using only what the two
    /// observations carry. Equals [`Environment::reward_oracle`] for tasks
    /// without hidden episode state.
    fn hallucination_reward(&self, state: &[f64], action: &[f64], next: &[f64]) -> f64 {
        self.reward_oracle(state, action, next)
    }

    /// Total `step` calls over the instance's lifetime.
    fn steps_taken(&self) -> u64;

    fn boxed_clone(&self) -> Box<dyn Environment>;
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnvName {
    UMaze,
    MediumMaze,
    Coverage,
    SparseArm,
}

impl EnvName {
    pub const ALL: [EnvName; 4] = [EnvName::UMaze, EnvName::MediumMaze, EnvName::Coverage, EnvName::SparseArm];

    pub fn as_str(&self) -> &'static str {
        match self {
            EnvName::UMaze => "u_maze",
            EnvName::MediumMaze => "medium_maze",
            EnvName::Coverage => "coverage",
            EnvName::SparseArm => "sparse_arm",
        }
    }
}

impl fmt::Display for EnvName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for EnvName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        EnvName::ALL
            .into_iter()
            .find(|e| e.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown environment `{s}`")))
    }
}

/// Task-specific knobs that are not part of the learning setup.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct EnvOptions {
    pub horizon: Option<usize>,
    pub maze_grid: Option<String>,
    pub arm_rho: Option<f64>,
    pub arm_literal_penalty_sign: bool,
    pub coverage_grid: Option<usize>,
}

pub fn make_env(name: EnvName, opts: &EnvOptions) -> Result<Box<dyn Environment>> {
    let horizon = opts.horizon.unwrap_or(150);
    Ok(match name {
        EnvName::UMaze | EnvName::MediumMaze => {
            let default = if name == EnvName::UMaze { U_MAZE } else { MEDIUM_MAZE };
            let grid = opts.maze_grid.as_deref().unwrap_or(default);
            Box::new(MazeEnv::new(MazeSpec::parse(grid)?, name.as_str(), horizon))
        }
        EnvName::Coverage => {
            let spec = CoverageSpec { grid: opts.coverage_grid.unwrap_or(20), ..CoverageSpec::default() };
            Box::new(CoverageEnv::new(spec, horizon)?)
        }
        EnvName::SparseArm => {
            let mut spec = ArmSpec { literal_penalty_sign: opts.arm_literal_penalty_sign, ..ArmSpec::default() };
            if let Some(rho) = opts.arm_rho {
                spec.rho = rho;
            }
            Box::new(ArmEnv::new(spec, horizon))
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names_round_trip() {
        for e in EnvName::ALL {
            assert_eq!(e.as_str().parse::<EnvName>().unwrap(), e);
        }
        assert!("half_cheetah".parse::<EnvName>().is_err());
    }

    #[test]
    fn consistency_of_oracle_and_step() {
        for name in EnvName::ALL {
            let mut env = make_env(name, &EnvOptions::default()).unwrap();
            let mut rng = Rng::seed_from(17);
            let mut s = env.reset(&mut rng);
            for t in 0..2000 {
                if t % env.spec().horizon == 0 {
                    s = env.reset(&mut rng);
                }
                let a = env.spec().action_bounds.uniform(&mut rng);
                let mut probe = env.boxed_clone();
                let out = probe.step(&a);
                let oracle = env.reward_oracle(&s, &a, &out.obs);
                let real = env.step(&a);
                assert_eq!(real, out, "{name}");
                assert!((oracle - real.reward).abs() < 1e-12, "{name} step {t}: {oracle} vs {}", real.reward);
                s = real.obs;
            }
        }
    }

    #[test]
    fn observations_stay_in_their_box() {
        for name in EnvName::ALL {
            let mut env = make_env(name, &EnvOptions::default()).unwrap();
            let mut rng = Rng::seed_from(3);
            for _ in 0..3 {
                let mut s = env.reset(&mut rng);
                for _ in 0..env.spec().horizon {
                    let spec = env.spec();
                    assert!(s.iter().enumerate().all(|(j, v)| v.is_finite() && *v >= spec.obs_low[j] && *v <= spec.obs_high[j]));
                    let a = spec.action_bounds.uniform(&mut rng);
                    s = env.step(&a).obs;
                }
            }
        }
    }

    #[test]
    fn compose_keeps_static_parts() {
        let env = make_env(EnvName::UMaze, &EnvOptions::default()).unwrap();
        let spec = env.spec();
        let next = spec.compose(&[1.5, 1.5, 1.5, 3.5], &[0.2, -0.1]);
        assert_eq!(next, vec![1.7, 1.4, 1.5, 3.5]);
        let clipped = spec.compose(&[1.5, 1.5, 1.5, 3.5], &[100.0, -100.0]);
        assert_eq!(clipped[0], spec.obs_high[0]);
        assert_eq!(clipped[1], spec.obs_low[1]);
    }

    #[test]
    fn determinism_given_seed_and_actions() {
        for name in EnvName::ALL {
            let run = || {
                let mut env = make_env(name, &EnvOptions::default()).unwrap();
                let mut rng = Rng::seed_from(5);
                let mut traj = vec![env.reset(&mut rng)];
                let mut act_rng = Rng::seed_from(6);
                for _ in 0..50 {
                    let a = env.spec().action_bounds.uniform(&mut act_rng);
                    let out = env.step(&a);
                    traj.push(out.obs);
                    traj.push(vec![out.reward]);
                }
                traj
            };
            assert_eq!(run(), run());
        }
    }

    #[test]
    fn episode_length_is_the_horizon() {
        for name in EnvName::ALL {
            let mut env = make_env(name, &EnvOptions { horizon: Some(40), ..Default::default() }).unwrap();
            let mut rng = Rng::seed_from(1);
            env.reset(&mut rng);
            let mut steps = 0;
            loop {
                let a = env.spec().action_bounds.uniform(&mut rng);
                steps += 1;
                if env.step(&a).done {
                    break;
                }
            }
            assert_eq!(steps, 40);
            assert_eq!(env.steps_taken(), 40);
        }
    }
}
