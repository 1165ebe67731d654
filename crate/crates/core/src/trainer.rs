//! The outer model-based loop: hallucinated rollouts, policy updates, one real
//! episode, model refit, periodic evaluation.

use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::envs::{make_env, Environment};
use crate::error::{Error, Result};
use crate::model::JointModel;
use crate::policy::{ActMode, Agent, Transition, TransitionBuffer};
use crate::rng::Rng;
use crate::strategy::{hallucinate, OptimismSchedule, StepContext, StrategyKind};

pub const METRICS_HEADER: &str = "env_steps,mean_eval_return,eval_return_std,model_nll,r_min,wall_seconds";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub env_steps: u64,
    pub mean_eval_return: f64,
    pub eval_return_std: f64,
    /// Empty until the model has been scored on an unseen episode.
    pub model_nll: Option<f64>,
    pub r_min: f64,
    pub wall_seconds: f64,
}

/// Everything needed to continue a run exactly.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TrainerState {
    pub episode: u64,
    pub env_steps: u64,
    pub d_env: TransitionBuffer,
    pub d_model: TransitionBuffer,
    pub model: JointModel,
    pub agent: Agent,
    pub last_nll: Option<f64>,
    pub metrics: Vec<MetricsRow>,
    pub policy_updates: u64,
    pub elapsed_seconds: f64,
}

/// What one outer iteration did, for tests and logging.
#[derive(Clone, Debug, PartialEq)]
pub struct IterationReport {
    pub episode: u64,
    pub rollouts: Vec<Vec<Transition>>,
    pub policy_updates: usize,
    pub real_steps: usize,
    pub real_return: f64,
    pub model_nll: f64,
    pub r_min: f64,
    pub evaluated: Option<(f64, f64)>,
}

/// Sample mean and sample standard deviation (`n − 1`), 0 for one value.
pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Run `episodes` full episodes of `policy` and return the mean and sample
/// standard deviation of their returns.
pub fn evaluate(
    mut policy: impl FnMut(&[f64]) -> Result<Vec<f64>>,
    env: &mut dyn Environment,
    episodes: usize,
    rng: &mut Rng,
) -> Result<(f64, f64)> {
    if episodes == 0 {
        return Err(Error::Config("evaluation needs at least one episode".into()));
    }
    let mut returns = Vec::with_capacity(episodes);
    for _ in 0..episodes {
        let mut s = env.reset(rng);
        let mut total = 0.0;
        loop {
            let a = policy(&s)?;
            let out = env.step(&a);
            total += out.reward;
            s = out.obs;
            if out.done {
                break;
            }
        }
        returns.push(total);
    }
    Ok(mean_std(&returns))
}

/// One `K`-step model rollout from `s0`.
#[allow(clippy::too_many_arguments)]
pub fn hallucinate_rollout(
    model: &JointModel,
    agent: &Agent,
    kind: &StrategyKind,
    r_min: f64,
    env: &dyn Environment,
    s0: &[f64],
    k: usize,
    rng: &mut Rng,
) -> Result<Vec<Transition>> {
    if !model.is_fitted() {
        return Err(Error::ModelNotFitted);
    }
    let spec = env.spec();
    let oracle = |s: &[f64], a: &[f64], n: &[f64]| env.hallucination_reward(s, a, n);
    let mut out = Vec::with_capacity(k);
    let mut s = s0.to_vec();
    for _ in 0..k {
        let a = agent.act(&s, ActMode::Explore, rng)?;
        let pred = model.predict(&s, &a)?;
        let compose = |d: &[f64]| spec.compose(&s, d);
        let ctx = StepContext { state: &s, action: &a, compose: &compose, reward_oracle: Some(&oracle) };
        let h = hallucinate(kind, &pred, r_min, &ctx, rng)?;
        let next = spec.compose(&s, &h.delta);
        if !h.reward.is_finite() || next.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("hallucinated transition".into()));
        }
        out.push(Transition { state: s, action: a, next_state: next.clone(), reward: h.reward, terminal: false });
        s = next;
    }
    Ok(out)
}

pub struct Trainer {
    cfg: RunConfig,
    kind: StrategyKind,
    schedule: OptimismSchedule,
    env: Box<dyn Environment>,
    eval_env: Box<dyn Environment>,
    state: TrainerState,
    dir: Option<PathBuf>,
    clock: Instant,
    clock_offset: f64,
}

impl Trainer {
    /// Fresh trainer; nothing has touched the environment yet.
    pub fn new(cfg: RunConfig) -> Result<Self> {
        cfg.validate()?;
        let kind = cfg.strategy_kind()?;
        let schedule = cfg.schedule()?;
        let env = make_env(cfg.env, &cfg.env_options())?;
        let eval_env = env.boxed_clone();
        let spec = env.spec().clone();
        let model = cfg.build_model(spec.obs_dim + spec.act_dim(), spec.dynamic.len() + 1);
        let mut rng = Rng::substream(cfg.seed, "agent-init", 0, 0);
        let agent = cfg.build_agent(spec.obs_dim, spec.action_bounds.clone(), &mut rng)?;
        let state = TrainerState {
            episode: 0,
            env_steps: 0,
            d_env: TransitionBuffer::new(None),
            d_model: TransitionBuffer::new(cfg.buffer_capacity()),
            model,
            agent,
            last_nll: None,
            metrics: Vec::new(),
            policy_updates: 0,
            elapsed_seconds: 0.0,
        };
        Ok(Trainer { cfg, kind, schedule, env, eval_env, state, dir: None, clock: Instant::now(), clock_offset: 0.0 })
    }

    /// Trainer that writes a run directory (config snapshot, metrics,
    /// checkpoints). The directory must not already hold a run.
    pub fn create(cfg: RunConfig, dir: &Path) -> Result<Self> {
        if dir.join("config.toml").exists() {
            return Err(Error::Config(format!("{} already holds a run; use resume", dir.display())));
        }
        fs::create_dir_all(dir)?;
        fs::write(dir.join("config.toml"), cfg.to_toml()?)?;
        let mut t = Trainer::new(cfg)?;
        t.dir = Some(dir.to_path_buf());
        t.write_metrics()?;
        Ok(t)
    }

    /// Continue a run from its latest checkpoint (or from scratch when none
    /// was written yet).
    pub fn resume(dir: &Path) -> Result<Self> {
        let cfg = RunConfig::from_snapshot(&fs::read_to_string(dir.join("config.toml"))?)?;
        let mut t = Trainer::new(cfg)?;
        t.dir = Some(dir.to_path_buf());
        if let Some(ckpt) = latest_checkpoint(dir)? {
            let text = fs::read_to_string(ckpt.join("state.json"))?;
            let mut state: TrainerState = serde_json::from_str(&text)?;
            state.model.restore_cache()?;
            t.clock_offset = state.elapsed_seconds;
            t.state = state;
        }
        t.write_metrics()?;
        Ok(t)
    }

    pub fn config(&self) -> &RunConfig {
        &self.cfg
    }

    pub fn state(&self) -> &TrainerState {
        &self.state
    }

    pub fn env(&self) -> &dyn Environment {
        self.env.as_ref()
    }

    /// Steps taken on the training environment by this process.
    pub fn real_env_steps(&self) -> u64 {
        self.env.steps_taken()
    }

    pub fn is_done(&self) -> bool {
        self.state.env_steps >= self.cfg.total_env_steps && self.state.episode > 0
    }

    pub fn r_min(&self) -> f64 {
        self.schedule.r_min_at(self.state.env_steps)
    }

    fn elapsed(&self) -> f64 {
        self.clock_offset + self.clock.elapsed().as_secs_f64()
    }

    /// Roll out one real episode, appending to `D_env`. Random actions when
    /// `random` is set.
    fn real_episode(&mut self, random: bool) -> Result<(Vec<Transition>, f64)> {
        let ep = self.state.episode;
        let mut reset_rng = Rng::substream(self.cfg.seed, "env-reset", ep, 0);
        let mut act_rng = Rng::substream(self.cfg.seed, "act", ep, 0);
        let mut s = self.env.reset(&mut reset_rng);
        let mut episode = Vec::with_capacity(self.cfg.horizon);
        let mut total = 0.0;
        loop {
            let a = if random {
                self.env.spec().action_bounds.uniform(&mut act_rng)
            } else {
                self.state.agent.act(&s, ActMode::Explore, &mut act_rng)?
            };
            let out = self.env.step(&a);
            total += out.reward;
            episode.push(Transition {
                state: s,
                action: a,
                next_state: out.obs.clone(),
                reward: out.reward,
                terminal: false,
            });
            s = out.obs;
            if out.done {
                break;
            }
        }
        self.state.d_env.extend(episode.iter().cloned());
        self.state.env_steps += episode.len() as u64;
        self.state.episode += 1;
        Ok((episode, total))
    }

    fn refit(&mut self) -> Result<()> {
        let mut rng = Rng::substream(self.cfg.seed, "model-fit", self.state.episode, 0);
        let dynamic = self.env.spec().dynamic.clone();
        self.state.model.fit(self.state.d_env.as_slice(), &dynamic, &mut rng)
    }

    /// Uniform-random first episode and the first model fit.
    pub fn bootstrap(&mut self) -> Result<()> {
        if self.state.episode > 0 {
            return Ok(());
        }
        self.real_episode(true)?;
        self.refit()?;
        self.maybe_evaluate()?;
        self.maybe_checkpoint()?;
        Ok(())
    }

    fn maybe_evaluate(&mut self) -> Result<Option<(f64, f64)>> {
        let ep = self.state.episode;
        let last = self.is_done();
        if !ep.is_multiple_of(self.cfg.eval_every as u64) && !last {
            return Ok(None);
        }
        if self.state.metrics.last().is_some_and(|r| r.env_steps == self.state.env_steps) {
            return Ok(None);
        }
        let agent = &self.state.agent;
        let mut rng = Rng::substream(self.cfg.seed, "eval", ep, 0);
        // evaluation actions are deterministic; this stream is never drawn from
        let mut unused = Rng::seed_from(0);
        let policy = |s: &[f64]| agent.act(s, ActMode::Evaluate, &mut unused);
        let (mean, std) = evaluate(policy, self.eval_env.as_mut(), self.cfg.eval_episodes, &mut rng)?;
        let wall = if self.cfg.record_wall_time { self.elapsed() } else { 0.0 };
        self.state.metrics.push(MetricsRow {
            env_steps: self.state.env_steps,
            mean_eval_return: mean,
            eval_return_std: std,
            model_nll: self.state.last_nll,
            r_min: self.r_min(),
            wall_seconds: wall,
        });
        self.write_metrics()?;
        log::info!("steps {} eval {mean:.4} ± {std:.4}", self.state.env_steps);
        Ok(Some((mean, std)))
    }

    /// Phases (a) to (d) plus evaluation and checkpointing.
    pub fn iteration(&mut self) -> Result<IterationReport> {
        if self.state.episode == 0 {
            self.bootstrap()?;
        }
        let ep = self.state.episode;
        let seed = self.cfg.seed;
        let r_min = self.r_min();
        self.state.agent.set_progress(self.state.env_steps as f64 / self.cfg.total_env_steps.max(1) as f64);

        let t0 = Instant::now();
        // (a) hallucinated rollouts, branched from real states
        let rollouts: Vec<Vec<Transition>> = {
            let (model, agent, d_env) = (&self.state.model, &self.state.agent, &self.state.d_env);
            let env = self.env.as_ref();
            let (kind, k) = (&self.kind, self.cfg.rollout_length);
            (0..self.cfg.model_rollouts)
                .into_par_iter()
                .map(|m| {
                    let mut rng = Rng::substream(seed, "rollout", ep, m as u64);
                    let s0 = &d_env.get(rng.below(d_env.len())).state;
                    hallucinate_rollout(model, agent, kind, r_min, env, s0, k, &mut rng)
                })
                .collect::<Result<_>>()?
        };
        for r in &rollouts {
            self.state.d_model.extend(r.iter().cloned());
        }

        let t_rollouts = t0.elapsed().as_secs_f64();

        // (b) policy updates on hallucinated data only
        let mut updates = 0;
        if !self.state.d_model.is_empty() {
            let n = self.cfg.updates_per_step * self.cfg.horizon;
            let mut rng = Rng::substream(seed, "update", ep, 0);
            for _ in 0..n {
                let batch = self.state.d_model.sample(self.cfg.batch_size, &mut rng);
                let loss = self.state.agent.update(&batch, &mut rng)?;
                if !loss.is_finite() {
                    return Err(Error::NonFinite(format!("critic loss at episode {ep}")));
                }
            }
            updates = n;
            self.state.policy_updates += n as u64;
        }

        let t_updates = t0.elapsed().as_secs_f64();

        // (c) one real episode
        let (episode, real_return) = self.real_episode(false)?;

        // (d) score the model on unseen data, then refit
        let dynamic = self.env.spec().dynamic.clone();
        let nll = self.state.model.heldout_nll(&episode, &dynamic)?;
        self.state.last_nll = Some(nll);
        let t_nll = t0.elapsed().as_secs_f64();
        self.refit()?;
        let t_fit = t0.elapsed().as_secs_f64();

        let evaluated = self.maybe_evaluate()?;
        self.maybe_checkpoint()?;
        log::debug!(
            "episode {ep}: rollouts {t_rollouts:.2}s, updates {:.2}s, real episode and nll {:.2}s, refit {:.2}s, eval and checkpoint {:.2}s",
            t_updates - t_rollouts,
            t_nll - t_updates,
            t_fit - t_nll,
            t0.elapsed().as_secs_f64() - t_fit
        );
        Ok(IterationReport {
            episode: ep,
            rollouts,
            policy_updates: updates,
            real_steps: episode.len(),
            real_return,
            model_nll: nll,
            r_min,
            evaluated,
        })
    }

    pub fn run_to_completion(&mut self) -> Result<()> {
        self.bootstrap()?;
        while !self.is_done() {
            self.iteration()?;
        }
        self.maybe_evaluate()?;
        self.checkpoint()?;
        Ok(())
    }

    fn write_metrics(&self) -> Result<()> {
        let Some(dir) = &self.dir else { return Ok(()) };
        let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
        w.write_record(METRICS_HEADER.split(','))?;
        for row in &self.state.metrics {
            w.serialize(row)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Serde(e.to_string()))?;
        write_atomic(&dir.join("metrics.csv"), &bytes)
    }

    fn maybe_checkpoint(&mut self) -> Result<()> {
        if self.state.episode.is_multiple_of(self.cfg.checkpoint_every as u64) {
            self.checkpoint()?;
        }
        Ok(())
    }

    /// Persist the full state under `checkpoints/step_<env_steps>`.
    pub fn checkpoint(&mut self) -> Result<()> {
        let Some(dir) = self.dir.clone() else { return Ok(()) };
        self.state.elapsed_seconds = self.elapsed();
        let root = dir.join("checkpoints");
        let target = root.join(format!("step_{}", self.state.env_steps));
        fs::create_dir_all(&target)?;
        write_atomic(&target.join("state.json"), serde_json::to_string(&self.state)?.as_bytes())?;
        let mut all = list_checkpoints(&dir)?;
        while all.len() > self.cfg.keep_checkpoints {
            let (_, old) = all.remove(0);
            fs::remove_dir_all(old)?;
        }
        Ok(())
    }
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension("tmp");
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(tmp, path)?;
    Ok(())
}

fn list_checkpoints(dir: &Path) -> Result<Vec<(u64, PathBuf)>> {
    let root = dir.join("checkpoints");
    if !root.exists() {
        return Ok(Vec::new());
    }
    let mut out = Vec::new();
    for entry in fs::read_dir(root)? {
        let path = entry?.path();
        let steps = path
            .file_name()
            .and_then(|n| n.to_str())
            .and_then(|n| n.strip_prefix("step_"))
            .and_then(|n| n.parse::<u64>().ok());
        if let Some(steps) = steps {
            if path.join("state.json").exists() {
                out.push((steps, path));
            }
        }
    }
    out.sort();
    Ok(out)
}

pub fn latest_checkpoint(dir: &Path) -> Result<Option<PathBuf>> {
    Ok(list_checkpoints(dir)?.pop().map(|(_, p)| p))
}

/// Train to completion in `dir`. Failures are also written to `error.log`.
pub fn run(cfg: RunConfig, dir: &Path) -> Result<PathBuf> {
    let result = Trainer::create(cfg, dir).and_then(|mut t| t.run_to_completion());
    finish(dir, result)
}

/// Continue the run stored in `dir` to completion.
pub fn resume(dir: &Path) -> Result<PathBuf> {
    let result = Trainer::resume(dir).and_then(|mut t| t.run_to_completion());
    finish(dir, result)
}

fn finish(dir: &Path, result: Result<()>) -> Result<PathBuf> {
    match result {
        Ok(()) => Ok(dir.to_path_buf()),
        Err(e) => {
            if dir.exists() {
                let _ = fs::write(dir.join("error.log"), format!("{e}\n"));
            }
            Err(e)
        }
    }
}

/// Parse a metrics file written by the trainer.
pub fn read_metrics(path: &Path) -> Result<Vec<MetricsRow>> {
    let mut r = csv::Reader::from_path(path)?;
    let headers = r.headers()?.iter().collect::<Vec<_>>().join(",");
    if headers != METRICS_HEADER {
        return Err(Error::Serde(format!("{}: unexpected header `{headers}`", path.display())));
    }
    r.deserialize().map(|row| row.map_err(Error::from)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::{EnvName, EnvOptions};

    pub(crate) fn tiny(env: EnvName) -> RunConfig {
        RunConfig {
            total_env_steps: 120,
            horizon: 30,
            model_rollouts: 8,
            batch_size: 16,
            updates_per_step: 1,
            subsample_cap: 60,
            model_hidden: 16,
            model_layers: 1,
            model_epochs: 3,
            kernel_steps: 5,
            policy_hidden: 16,
            policy_layers: 1,
            eval_every: 2,
            eval_episodes: 2,
            checkpoint_every: 1,
            ..RunConfig::preset(env)
        }
    }

    #[test]
    fn mean_std_conventions() {
        assert_eq!(mean_std(&[3.0]), (3.0, 0.0));
        let (m, s) = mean_std(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(m, 2.5);
        assert!((s - (5.0f64 / 3.0).sqrt()).abs() < 1e-15);
    }

    #[test]
    fn idle_maze_policy_scores_zero() {
        let mut env = make_env(EnvName::UMaze, &EnvOptions::default()).unwrap();
        let mut rng = Rng::seed_from(0);
        let (m, s) = evaluate(|_| Ok(vec![0.0, 0.0]), env.as_mut(), 3, &mut rng).unwrap();
        assert_eq!((m, s), (0.0, 0.0));
    }

    #[test]
    fn scripted_u_maze_route_collects_reward() {
        // right along the top corridor, down the right column, left to the goal
        let mut env = make_env(EnvName::UMaze, &EnvOptions::default()).unwrap();
        let mut rng = Rng::seed_from(1);
        let policy = |s: &[f64]| -> Result<Vec<f64>> {
            let (x, y) = (s[0], s[1]);
            Ok(if y < 3.0 && x < 3.4 {
                vec![0.25, 0.0]
            } else if y < 3.5 {
                vec![0.0, 0.25]
            } else {
                vec![(s[2] - x).clamp(-0.25, 0.25), (s[3] - y).clamp(-0.25, 0.25)]
            })
        };
        let (m, _) = evaluate(policy, env.as_mut(), 1, &mut rng).unwrap();
        // about 8 steps right, 8 down, 8 left: the goal pays for most of 150 steps
        assert!(m > 100.0, "{m}");
        let mut again = Rng::seed_from(1);
        let (single, s) = evaluate(policy, env.as_mut(), 1, &mut again).unwrap();
        assert_eq!((single, s), (m, 0.0));
    }

    #[test]
    fn unfitted_model_is_refused() {
        let cfg = tiny(EnvName::UMaze);
        let t = Trainer::new(cfg).unwrap();
        let mut rng = Rng::seed_from(0);
        let err = hallucinate_rollout(
            &t.state.model,
            &t.state.agent,
            &StrategyKind::Greedy,
            0.1,
            t.env(),
            &[1.5, 1.5, 1.5, 3.5],
            1,
            &mut rng,
        );
        assert!(matches!(err, Err(Error::ModelNotFitted)));
    }

    #[test]
    fn loop_bookkeeping() {
        let mut t = Trainer::new(RunConfig { rollout_length: 3, ..tiny(EnvName::UMaze) }).unwrap();
        t.bootstrap().unwrap();
        assert_eq!(t.state.d_env.len(), 30);
        assert_eq!(t.real_env_steps(), 30);
        let rep = t.iteration().unwrap();
        assert_eq!(rep.rollouts.len(), 8);
        assert!(rep.rollouts.iter().all(|r| r.len() == 3));
        assert_eq!(t.state.d_model.len(), 24);
        assert_eq!(t.state.d_env.len(), 60);
        assert_eq!(t.real_env_steps(), 60);
        assert_eq!(rep.policy_updates, 30);
        // chained rollouts: each state is the previous next state
        for r in &rep.rollouts {
            for w in r.windows(2) {
                assert_eq!(w[0].next_state, w[1].state);
            }
        }
        // branched starts are real states
        for r in &rep.rollouts {
            assert!(t.state.d_env.as_slice()[..30].iter().any(|x| x.state == r[0].state));
        }
    }

    #[test]
    fn no_model_data_means_no_updates() {
        let mut t = Trainer::new(RunConfig { model_rollouts: 0, total_env_steps: 30, ..tiny(EnvName::UMaze) }).unwrap();
        t.run_to_completion().unwrap();
        assert_eq!(t.state.d_model.len(), 0);
        assert_eq!(t.state.policy_updates, 0);
        assert_eq!(t.state.env_steps, 30);
    }

    #[test]
    fn branch_starts_do_not_depend_on_k() {
        let starts = |k: usize| {
            let mut t = Trainer::new(RunConfig { rollout_length: k, ..tiny(EnvName::UMaze) }).unwrap();
            t.bootstrap().unwrap();
            t.iteration().unwrap().rollouts.iter().map(|r| r[0].state.clone()).collect::<Vec<_>>()
        };
        assert_eq!(starts(1), starts(5));
    }

    #[test]
    fn greedy_k1_rollout_is_the_model_mean() {
        let mut t = Trainer::new(RunConfig { strategy: "greedy".into(), ..tiny(EnvName::UMaze) }).unwrap();
        t.bootstrap().unwrap();
        let s0 = t.state.d_env.get(7).state.clone();
        let mut rng = Rng::seed_from(3);
        let tr = hallucinate_rollout(&t.state.model, &t.state.agent, &StrategyKind::Greedy, 0.3, t.env(), &s0, 1, &mut rng)
            .unwrap();
        let pred = t.state.model.predict(&s0, &tr[0].action).unwrap();
        assert_eq!(tr[0].next_state, t.env().spec().compose(&s0, pred.state_mean()));
        assert_eq!(tr[0].reward, pred.reward_mean());
    }

    #[test]
    fn run_dir_layout_and_resume() {
        let dir = tempfile::tempdir().unwrap();
        let full = dir.path().join("full");
        run(tiny(EnvName::UMaze), &full).unwrap();
        let metrics = fs::read_to_string(full.join("metrics.csv")).unwrap();
        assert!(metrics.starts_with(METRICS_HEADER));
        let rows = read_metrics(&full.join("metrics.csv")).unwrap();
        assert!(rows.windows(2).all(|w| w[0].env_steps < w[1].env_steps));
        assert_eq!(rows.last().unwrap().env_steps, 120);
        let snapshot = fs::read_to_string(full.join("config.toml")).unwrap();
        assert_eq!(RunConfig::from_snapshot(&snapshot).unwrap(), tiny(EnvName::UMaze));
        assert_eq!(list_checkpoints(&full).unwrap().len(), 2);

        // interrupt after two iterations, then resume
        let part = dir.path().join("part");
        let mut t = Trainer::create(tiny(EnvName::UMaze), &part).unwrap();
        t.bootstrap().unwrap();
        t.iteration().unwrap();
        drop(t);
        resume(&part).unwrap();
        assert_eq!(fs::read(part.join("metrics.csv")).unwrap(), metrics.as_bytes());
    }

    #[test]
    fn rewards_in_metrics_follow_the_schedule() {
        let mut t = Trainer::new(tiny(EnvName::UMaze)).unwrap();
        t.run_to_completion().unwrap();
        let sched = t.cfg.schedule().unwrap();
        for row in &t.state.metrics {
            assert_eq!(row.r_min, sched.r_min_at(row.env_steps));
            assert_eq!(row.wall_seconds, 0.0);
        }
    }

    #[test]
    fn evaluation_before_any_heldout_score_leaves_nll_empty() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = RunConfig { eval_every: 1, total_env_steps: 60, ..tiny(EnvName::UMaze) };
        run(cfg, dir.path()).unwrap();
        let rows = read_metrics(&dir.path().join("metrics.csv")).unwrap();
        assert_eq!(rows.len(), 2);
        assert_eq!(rows[0].model_nll, None);
        assert!(rows[1].model_nll.unwrap().is_finite());
        Trainer::resume(dir.path()).unwrap();
    }
}
