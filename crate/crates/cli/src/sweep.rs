//! Seed sweeps: one child `train` process per seed, then aggregation.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Stdio};
use std::sync::Mutex;

use anyhow::Context;

use crate::aggregate::{aggregate, load_runs, write_aggregate};
use crate::{load_config, run_root, Exit, TrainArgs};

/// Seed whose worker is killed right after it starts (fault-injection hook).
pub const FAULT_INJECT_VAR: &str = "HOTGP_FAULT_INJECT_SEED";

/// Inclusive `a..b`, or a single seed.
pub fn parse_seeds(s: &str) -> anyhow::Result<Vec<u64>> {
    let bad = || Exit::new(2, format!("bad seed range `{s}`; expected a..b"));
    let (a, b) = match s.split_once("..") {
        Some((a, b)) => (a.trim().parse().map_err(|_| bad())?, b.trim().parse().map_err(|_| bad())?),
        None => {
            let a = s.trim().parse().map_err(|_| bad())?;
            (a, a)
        }
    };
    if a > b {
        return Err(bad().into());
    }
    Ok((a..=b).collect())
}

#[derive(Clone, Debug)]
pub struct SweepArgs {
    pub config: PathBuf,
    pub seeds: Vec<u64>,
    pub parallel: usize,
    pub out: Option<PathBuf>,
    pub overrides: Vec<String>,
}

#[derive(Clone, Debug, Default)]
pub struct SweepReport {
    pub dir: PathBuf,
    pub completed: Vec<u64>,
    pub failed: Vec<(u64, String)>,
}

pub fn seed_dir(out: &Path, seed: u64) -> PathBuf {
    out.join(format!("seed_{seed}"))
}

/// Launch the sweep using `exe` as the worker binary.
pub fn sweep(exe: &Path, args: &SweepArgs) -> anyhow::Result<SweepReport> {
    let cfg = load_config(&TrainArgs { config: args.config.clone(), overrides: args.overrides.clone(), ..Default::default() })?;
    let out = args
        .out
        .clone()
        .unwrap_or_else(|| run_root().join(format!("sweep_{}_{}", cfg.env, cfg.strategy)));
    fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
    let inject: Option<u64> = std::env::var(FAULT_INJECT_VAR).ok().and_then(|v| v.trim().parse().ok());

    let queue = Mutex::new(args.seeds.iter().copied());
    let results = Mutex::new(Vec::new());
    std::thread::scope(|scope| {
        for _ in 0..args.parallel.clamp(1, args.seeds.len().max(1)) {
            scope.spawn(|| loop {
                let Some(seed) = queue.lock().unwrap().next() else { break };
                let outcome = run_worker(exe, args, &out, seed, inject == Some(seed));
                results.lock().unwrap().push((seed, outcome));
            });
        }
    });

    let mut results = results.into_inner().unwrap();
    results.sort_by_key(|(s, _)| *s);
    let mut report = SweepReport { dir: out.clone(), ..Default::default() };
    for (seed, outcome) in results {
        match outcome {
            Ok(()) => report.completed.push(seed),
            Err(msg) => {
                log::warn!("seed {seed} failed: {msg}");
                report.failed.push((seed, msg));
            }
        }
    }

    let dirs: Vec<PathBuf> = report.completed.iter().map(|&s| seed_dir(&out, s)).collect();
    let runs = load_runs(&dirs.iter().map(PathBuf::as_path).collect::<Vec<_>>())?;
    write_aggregate(&out.join("aggregate.csv"), &aggregate(&runs))?;
    let failures: String = report.failed.iter().map(|(s, m)| format!("seed {s}: {m}\n")).collect();
    fs::write(out.join("failures.txt"), failures)?;
    Ok(report)
}

fn run_worker(exe: &Path, args: &SweepArgs, out: &Path, seed: u64, kill: bool) -> Result<(), String> {
    let dir = seed_dir(out, seed);
    let log = fs::File::create(out.join(format!("seed_{seed}.log"))).map_err(|e| e.to_string())?;
    let mut cmd = Command::new(exe);
    cmd.arg("train").arg("--config").arg(&args.config).arg("--seed").arg(seed.to_string()).arg("--out").arg(&dir);
    for o in &args.overrides {
        cmd.arg("--override").arg(o);
    }
    let stderr = log.try_clone().map_err(|e| e.to_string())?;
    let mut child = cmd
        .stdin(Stdio::null())
        .stdout(log)
        .stderr(stderr)
        .env_remove(FAULT_INJECT_VAR)
        .spawn()
        .map_err(|e| format!("cannot start worker: {e}"))?;
    if kill {
        let _ = child.kill();
    }
    let status = child.wait().map_err(|e| e.to_string())?;
    if status.success() && dir.join("metrics.csv").is_file() {
        return Ok(());
    }
    let detail = fs::read_to_string(dir.join("error.log")).unwrap_or_default();
    let detail = detail.trim();
    Err(match status.code() {
        Some(c) if !detail.is_empty() => format!("exit code {c}: {detail}"),
        Some(c) => format!("exit code {c}"),
        None => "worker killed by a signal".into(),
    })
}
