//! Run configuration: one flat record, built-in task presets, and a layered
//! TOML loader.
//!
//! Layering, later layers winning: the preset of the selected task, top-level
//! keys of the file, the file's table named after the task (`[coverage]`, ...),
//! then `key=value` overrides.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::envs::{EnvName, EnvOptions};
use crate::error::{Error, Result};
use crate::model::{EnsembleConfig, GpConfig, JointModel};
use crate::model::{EnsembleJointModel, GpJointModel};
use crate::nn::{Activation, GaussianHead};
use crate::policy::{Agent, DdpgAgent, DdpgConfig, SacAgent, SacConfig};
use crate::rng::Rng;
use crate::strategy::{OptimismSchedule, StrategyKind};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelBackend {
    Gp,
    Ensemble,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PolicyAlgo {
    Sac,
    Ddpg,
}

/// Largest seed a configuration file can hold.
pub const MAX_SEED: u64 = i64::MAX as u64;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub env: EnvName,
    pub seed: u64,

    pub strategy: String,
    pub r_min_start: f64,
    pub r_min_end: f64,
    pub hucrl_beta: f64,
    pub hucrl_samples: usize,

    /// Real environment steps `N`.
    pub total_env_steps: u64,
    /// Episode length `T`.
    pub horizon: usize,
    /// Hallucinated rollouts per real episode `M`.
    pub model_rollouts: usize,
    /// Steps per hallucinated rollout `K`.
    pub rollout_length: usize,
    pub batch_size: usize,
    pub gamma: f64,
    pub lr: f64,
    pub tau: f64,
    /// Capacity of the hallucinated-data buffer; 0 means unlimited.
    pub buffer_capacity: usize,
    /// Policy gradient steps per real environment step `G`.
    pub updates_per_step: usize,

    pub model: ModelBackend,
    pub subsample_cap: usize,
    pub model_hidden: usize,
    pub model_layers: usize,
    pub model_activation: Activation,
    pub model_epochs: usize,
    pub model_lr: f64,
    pub model_batch: usize,
    pub kernel_steps: usize,
    pub kernel_lr: f64,
    /// Drop state-reward correlation (diagonal coregionalization).
    pub diagonal_covariance: bool,
    pub ensemble_members: usize,
    pub ensemble_sample_cap: usize,
    pub logvar_min: f64,
    pub logvar_max: f64,

    pub policy: PolicyAlgo,
    pub policy_hidden: usize,
    pub policy_layers: usize,
    pub policy_activation: Activation,
    pub init_alpha: f64,
    pub ddpg_explore_noise: bool,
    pub ddpg_noise_start: f64,
    pub ddpg_noise_end: f64,

    /// Evaluate after every `eval_every` real episodes.
    pub eval_every: usize,
    pub eval_episodes: usize,
    pub checkpoint_every: usize,
    pub keep_checkpoints: usize,
    /// Write elapsed seconds into metrics; off keeps metrics byte-reproducible.
    pub record_wall_time: bool,

    #[serde(skip_serializing_if = "Option::is_none")]
    pub maze_grid: Option<String>,
    pub coverage_grid: usize,
    pub arm_rho: f64,
    pub arm_literal_penalty_sign: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig::preset(EnvName::UMaze)
    }
}

impl RunConfig {
    pub fn preset(env: EnvName) -> Self {
        let base = RunConfig {
            env,
            seed: 0,
            strategy: "hot_gp".into(),
            r_min_start: 0.1,
            r_min_end: 0.5,
            hucrl_beta: 0.01,
            hucrl_samples: 5,
            total_env_steps: 150_000,
            horizon: 150,
            model_rollouts: 400,
            rollout_length: 1,
            batch_size: 256,
            gamma: 0.99,
            lr: 1e-3,
            tau: 0.005,
            buffer_capacity: 0,
            updates_per_step: 5,
            model: ModelBackend::Gp,
            subsample_cap: 500,
            model_hidden: 200,
            model_layers: 4,
            model_activation: Activation::Silu,
            model_epochs: 20,
            model_lr: 1e-3,
            model_batch: 128,
            kernel_steps: 50,
            kernel_lr: 0.01,
            diagonal_covariance: false,
            ensemble_members: 7,
            ensemble_sample_cap: 2000,
            logvar_min: -10.0,
            logvar_max: 0.5,
            policy: PolicyAlgo::Sac,
            policy_hidden: 256,
            policy_layers: 2,
            policy_activation: Activation::Silu,
            init_alpha: 1.0,
            ddpg_explore_noise: false,
            ddpg_noise_start: 1.0,
            ddpg_noise_end: 0.1,
            eval_every: 5,
            eval_episodes: 5,
            checkpoint_every: 10,
            keep_checkpoints: 2,
            record_wall_time: false,
            maze_grid: None,
            coverage_grid: 20,
            arm_rho: 0.1,
            arm_literal_penalty_sign: false,
        };
        match env {
            EnvName::UMaze => base,
            EnvName::MediumMaze => RunConfig { total_env_steps: 300_000, r_min_end: 0.7, ..base },
            EnvName::Coverage => RunConfig {
                total_env_steps: 200_000,
                model_rollouts: 150,
                batch_size: 150,
                gamma: 0.9,
                lr: 5e-5,
                buffer_capacity: 20_000,
                model_layers: 2,
                model_activation: Activation::Mish,
                policy: PolicyAlgo::Ddpg,
                ddpg_explore_noise: true,
                ..base
            },
            EnvName::SparseArm => RunConfig { total_env_steps: 40_000, ..base },
        }
    }

    /// Layered load from TOML text. `overrides` are `key=value` strings whose
    /// values are TOML literals; a bare word is taken as a string.
    pub fn from_toml_str(text: &str, overrides: &[String]) -> Result<Self> {
        let file: toml::Table = text.parse().map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        let over = parse_overrides(overrides)?;

        let mut top = toml::Table::new();
        let mut blocks = toml::Table::new();
        for (k, v) in file {
            if k.parse::<EnvName>().is_ok() {
                if !v.is_table() {
                    return Err(Error::Config(format!("`{k}` must be a table of settings")));
                }
                blocks.insert(k, v);
            } else {
                top.insert(k, v);
            }
        }

        let pick_env = |t: &toml::Table| -> Result<Option<EnvName>> {
            match t.get("env") {
                None => Ok(None),
                Some(toml::Value::String(s)) => s.parse().map(Some),
                Some(other) => Err(Error::Config(format!("`env` must be a string, got {other}"))),
            }
        };
        let env = match pick_env(&over)? {
            Some(e) => e,
            None => pick_env(&top)?.unwrap_or(EnvName::UMaze),
        };

        // every task block must form a valid configuration for its task
        for (name, block) in &blocks {
            let e: EnvName = name.parse()?;
            if e != env {
                let table = block.as_table().expect("checked above");
                let mut top_for_block = top.clone();
                top_for_block.remove("env");
                Self::layered(e, &top_for_block, Some(table), &toml::Table::new())
                    .map_err(|err| Error::Config(format!("[{name}]: {err}")))?;
            }
        }
        let block = blocks.get(env.as_str()).and_then(|b| b.as_table());
        let mut over = over;
        over.remove("env");
        top.remove("env");
        Self::layered(env, &top, block, &over)
    }

    fn layered(env: EnvName, top: &toml::Table, block: Option<&toml::Table>, over: &toml::Table) -> Result<Self> {
        let preset = toml::Table::try_from(RunConfig::preset(env)).map_err(|e| Error::Serde(e.to_string()))?;
        let mut merged = preset;
        for layer in [Some(top), block, Some(over)].into_iter().flatten() {
            if layer.contains_key("env") {
                return Err(Error::Config("`env` cannot be set inside a task table".into()));
            }
            for (k, v) in layer {
                merged.insert(k.clone(), v.clone());
            }
        }
        let cfg: RunConfig = merged.try_into().map_err(|e: toml::de::Error| Error::Config(e.message().to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_path(path: &Path, overrides: &[String]) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
        Self::from_toml_str(&text, overrides)
    }

    /// Apply overrides to an existing configuration.
    pub fn with_overrides(&self, overrides: &[String]) -> Result<Self> {
        let over = parse_overrides(overrides)?;
        let mut merged = toml::Table::try_from(self).map_err(|e| Error::Serde(e.to_string()))?;
        for (k, v) in over {
            merged.insert(k, v);
        }
        let cfg: RunConfig = merged.try_into().map_err(|e: toml::de::Error| Error::Config(e.message().to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Canonical serialized form (the run-directory snapshot).
    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Serde(e.to_string()))
    }

    /// Parse a snapshot written by [`RunConfig::to_toml`]; no preset layering.
    pub fn from_snapshot(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.message().to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        self.strategy_kind()?.validate()?;
        self.schedule()?;
        // TOML integers are signed 64-bit
        if self.seed > MAX_SEED {
            return fail(format!("seed must be at most {MAX_SEED}"));
        }
        if self.horizon == 0 {
            return fail("horizon must be at least 1".into());
        }
        if self.rollout_length == 0 {
            return fail("rollout_length (K) must be at least 1".into());
        }
        for (name, v) in [
            ("batch_size", self.batch_size),
            ("eval_every", self.eval_every),
            ("eval_episodes", self.eval_episodes),
            ("checkpoint_every", self.checkpoint_every),
            ("keep_checkpoints", self.keep_checkpoints),
            ("subsample_cap", self.subsample_cap),
            ("model_hidden", self.model_hidden),
            ("model_batch", self.model_batch),
            ("ensemble_members", self.ensemble_members),
            ("ensemble_sample_cap", self.ensemble_sample_cap),
            ("policy_hidden", self.policy_hidden),
            ("coverage_grid", self.coverage_grid),
        ] {
            if v == 0 {
                return fail(format!("{name} must be positive"));
            }
        }
        if self.subsample_cap < 2 {
            return fail("subsample_cap must be at least 2".into());
        }
        if !(0.0..=1.0).contains(&self.gamma) {
            return fail(format!("gamma must lie in [0, 1], got {}", self.gamma));
        }
        if !(0.0..=1.0).contains(&self.tau) {
            return fail(format!("tau must lie in [0, 1], got {}", self.tau));
        }
        for (name, v) in [("lr", self.lr), ("model_lr", self.model_lr), ("kernel_lr", self.kernel_lr), ("init_alpha", self.init_alpha)]
        {
            if !(v.is_finite() && v > 0.0) {
                return fail(format!("{name} must be positive, got {v}"));
            }
        }
        if !(self.logvar_min < self.logvar_max) {
            return fail("logvar_min must be below logvar_max".into());
        }
        if !(self.arm_rho >= 0.0) {
            return fail("arm_rho must be non-negative".into());
        }
        if !(self.ddpg_noise_start >= 0.0 && self.ddpg_noise_end >= 0.0) {
            return fail("DDPG noise scales must be non-negative".into());
        }
        if let Some(grid) = &self.maze_grid {
            if !matches!(self.env, EnvName::UMaze | EnvName::MediumMaze) {
                return fail("maze_grid only applies to maze tasks".into());
            }
            crate::envs::MazeSpec::parse(grid)?;
        }
        Ok(())
    }

    pub fn strategy_kind(&self) -> Result<StrategyKind> {
        StrategyKind::from_name(&self.strategy, self.hucrl_beta, self.hucrl_samples)
    }

    pub fn schedule(&self) -> Result<OptimismSchedule> {
        OptimismSchedule::new(self.r_min_start, self.r_min_end, self.total_env_steps)
    }

    pub fn env_options(&self) -> EnvOptions {
        EnvOptions {
            horizon: Some(self.horizon),
            maze_grid: self.maze_grid.clone(),
            arm_rho: Some(self.arm_rho),
            arm_literal_penalty_sign: self.arm_literal_penalty_sign,
            coverage_grid: Some(self.coverage_grid),
        }
    }

    pub fn gp_config(&self) -> GpConfig {
        GpConfig {
            subsample_cap: self.subsample_cap,
            mean_hidden: self.model_hidden,
            mean_layers: self.model_layers,
            mean_activation: self.model_activation,
            mean_epochs: self.model_epochs,
            mean_lr: self.model_lr,
            mean_batch: self.model_batch,
            kernel_steps: self.kernel_steps,
            kernel_lr: self.kernel_lr,
            diagonal: self.diagonal_covariance,
            ..GpConfig::default()
        }
    }

    pub fn ensemble_config(&self) -> EnsembleConfig {
        EnsembleConfig {
            members: self.ensemble_members,
            hidden: self.model_hidden,
            layers: self.model_layers,
            activation: self.model_activation,
            epochs: self.model_epochs,
            lr: self.model_lr,
            batch: self.model_batch,
            sample_cap: self.ensemble_sample_cap,
            head: GaussianHead { logvar_min: self.logvar_min, logvar_max: self.logvar_max },
            ..EnsembleConfig::default()
        }
    }

    pub fn sac_config(&self) -> SacConfig {
        SacConfig {
            hidden: self.policy_hidden,
            layers: self.policy_layers,
            activation: self.policy_activation,
            lr: self.lr,
            gamma: self.gamma,
            tau: self.tau,
            init_alpha: self.init_alpha,
            target_entropy: None,
        }
    }

    pub fn ddpg_config(&self) -> DdpgConfig {
        DdpgConfig {
            hidden: self.policy_hidden,
            layers: self.policy_layers,
            activation: self.policy_activation,
            lr: self.lr,
            gamma: self.gamma,
            tau: self.tau,
            explore_noise: self.ddpg_explore_noise,
            noise_start: self.ddpg_noise_start,
            noise_end: self.ddpg_noise_end,
        }
    }

    pub fn buffer_capacity(&self) -> Option<usize> {
        (self.buffer_capacity > 0).then_some(self.buffer_capacity)
    }

    pub fn build_model(&self, input_dim: usize, outputs: usize) -> JointModel {
        match self.model {
            ModelBackend::Gp => JointModel::Gp(GpJointModel::new(input_dim, outputs, self.gp_config())),
            ModelBackend::Ensemble => {
                JointModel::Ensemble(EnsembleJointModel::new(input_dim, outputs, self.ensemble_config()))
            }
        }
    }

    pub fn build_agent(&self, obs_dim: usize, bounds: crate::policy::ActionBounds, rng: &mut Rng) -> Result<Agent> {
        Ok(match self.policy {
            PolicyAlgo::Sac => Agent::Sac(SacAgent::new(obs_dim, bounds, self.sac_config(), rng)?),
            PolicyAlgo::Ddpg => Agent::Ddpg(DdpgAgent::new(obs_dim, bounds, self.ddpg_config(), rng)?),
        })
    }
}

fn parse_overrides(overrides: &[String]) -> Result<toml::Table> {
    let mut table = toml::Table::new();
    for o in overrides {
        let (k, v) = o
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("override `{o}` is not of the form key=value")))?;
        let (k, v) = (k.trim(), v.trim());
        if k.is_empty() {
            return Err(Error::Config(format!("override `{o}` has an empty key")));
        }
        let value = match format!("v = {v}").parse::<toml::Table>() {
            Ok(mut t) => t.remove("v").expect("parsed key"),
            Err(_) => toml::Value::String(v.to_string()),
        };
        table.insert(k.to_string(), value);
    }
    Ok(table)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_are_valid_and_round_trip() {
        for env in EnvName::ALL {
            let cfg = RunConfig::preset(env);
            cfg.validate().unwrap();
            let text = cfg.to_toml().unwrap();
            assert_eq!(RunConfig::from_snapshot(&text).unwrap(), cfg);
        }
    }

    #[test]
    fn table_values() {
        let cov = RunConfig::preset(EnvName::Coverage);
        assert_eq!((cov.gamma, cov.lr, cov.batch_size, cov.buffer_capacity), (0.9, 5e-5, 150, 20_000));
        assert_eq!((cov.model_rollouts, cov.policy, cov.model_activation), (150, PolicyAlgo::Ddpg, Activation::Mish));
        let maze = RunConfig::preset(EnvName::UMaze);
        assert_eq!((maze.gamma, maze.lr, maze.tau, maze.batch_size, maze.horizon), (0.99, 1e-3, 0.005, 256, 150));
        assert_eq!(maze.rollout_length, 1);
        assert_eq!(RunConfig::preset(EnvName::MediumMaze).total_env_steps, 300_000);
        assert_eq!(RunConfig::preset(EnvName::SparseArm).total_env_steps, 40_000);
    }

    #[test]
    fn layering_order() {
        let text = r#"
            env = "coverage"
            seed = 3
            gamma = 0.5
            [coverage]
            gamma = 0.7
            [u_maze]
            lr = 0.002
        "#;
        let cfg = RunConfig::from_toml_str(text, &[]).unwrap();
        assert_eq!(cfg.env, EnvName::Coverage);
        assert_eq!((cfg.seed, cfg.gamma, cfg.lr), (3, 0.7, 5e-5));
        let cfg = RunConfig::from_toml_str(text, &["gamma=0.8".into(), "strategy=greedy".into()]).unwrap();
        assert_eq!(cfg.gamma, 0.8);
        assert_eq!(cfg.strategy, "greedy");
        let cfg = RunConfig::from_toml_str(text, &["env=u_maze".into()]).unwrap();
        assert_eq!((cfg.env, cfg.lr, cfg.gamma), (EnvName::UMaze, 0.002, 0.5));
    }

    #[test]
    fn rejects_bad_input() {
        assert!(RunConfig::from_toml_str("gama = 0.9", &[]).is_err());
        assert!(RunConfig::from_toml_str("rollout_length = 0", &[]).is_err());
        assert!(RunConfig::from_toml_str("strategy = \"ucb\"", &[]).is_err());
        assert!(RunConfig::from_toml_str("[coverage]\nrollout_length = 0", &[]).is_err());
        assert!(RunConfig::from_toml_str("[coverage]\nbogus = 1", &[]).is_err());
        assert!(RunConfig::from_toml_str("", &["nokey".into()]).is_err());
        assert!(RunConfig::from_toml_str("r_min_start = 0.8\nr_min_end = 0.3", &[]).is_err());
        assert!(RunConfig::from_toml_str("env = \"coverage\"\nmaze_grid = \"###\"", &[]).is_err());
    }

    #[test]
    fn overrides_reach_the_snapshot() {
        let cfg = RunConfig::default().with_overrides(&["strategy=greedy".into(), "model=ensemble".into()]).unwrap();
        let back = RunConfig::from_snapshot(&cfg.to_toml().unwrap()).unwrap();
        assert_eq!(back.strategy, "greedy");
        assert_eq!(back.model, ModelBackend::Ensemble);
    }

    #[test]
    fn custom_maze_grid_survives_the_snapshot() {
        let grid = "#####\n#S..#\n#.#.#\n#..G#\n#####";
        let cfg = RunConfig { maze_grid: Some(grid.into()), ..RunConfig::default() };
        cfg.validate().unwrap();
        let back = RunConfig::from_snapshot(&cfg.to_toml().unwrap()).unwrap();
        assert_eq!(back.maze_grid.as_deref(), Some(grid));
    }
}
