//! Command implementations behind the `hotgp` binary.

use std::fmt;
use std::path::{Path, PathBuf};

pub mod aggregate;
pub mod plot;
pub mod sweep;

use hotgp::RunConfig;

/// Error carrying the process exit code it should map to.
#[derive(Debug)]
pub struct Exit {
    pub code: u8,
    pub message: String,
}

impl Exit {
    pub fn new(code: u8, message: impl Into<String>) -> Self {
        Exit { code, message: message.into() }
    }
}

impl fmt::Display for Exit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl std::error::Error for Exit {}

pub const RUN_ROOT_VAR: &str = "HOTGP_RUN_ROOT";

/// Root for run directories when `--out` is not given.
pub fn run_root() -> PathBuf {
    std::env::var_os(RUN_ROOT_VAR).map(PathBuf::from).unwrap_or_else(|| PathBuf::from("runs"))
}

#[derive(Clone, Debug, Default)]
pub struct TrainArgs {
    pub config: PathBuf,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub overrides: Vec<String>,
}

/// Materialize the configuration a `train` invocation would run.
pub fn load_config(args: &TrainArgs) -> anyhow::Result<RunConfig> {
    if !args.config.is_file() {
        return Err(Exit::new(2, format!("config file not found: {}", args.config.display())).into());
    }
    let mut overrides = args.overrides.clone();
    if let Some(seed) = args.seed {
        overrides.push(format!("seed={seed}"));
    }
    RunConfig::from_path(&args.config, &overrides).map_err(|e| Exit::new(2, e.to_string()).into())
}

pub fn default_run_dir(cfg: &RunConfig) -> PathBuf {
    run_root().join(format!("{}_{}_seed{}", cfg.env, cfg.strategy, cfg.seed))
}

pub fn train(args: &TrainArgs) -> anyhow::Result<PathBuf> {
    let cfg = load_config(args)?;
    let dir = args.out.clone().unwrap_or_else(|| default_run_dir(&cfg));
    log::info!("training {} / {} seed {} into {}", cfg.env, cfg.strategy, cfg.seed, dir.display());
    Ok(hotgp::trainer::run(cfg, &dir)?)
}

pub fn resume(dir: &Path) -> anyhow::Result<PathBuf> {
    if !dir.join("config.toml").is_file() {
        return Err(Exit::new(2, format!("no run to resume in {}", dir.display())).into());
    }
    Ok(hotgp::trainer::resume(dir)?)
}

/// Run every oracle suite, or only the named ones. Returns the failures.
pub fn selftest(only: &[String], out: &mut impl std::io::Write) -> anyhow::Result<Vec<String>> {
    let names: Vec<&str> = if only.is_empty() {
        hotgp::selftest::SUITES.to_vec()
    } else {
        only.iter().map(String::as_str).collect()
    };
    let mut failed = Vec::new();
    for name in names {
        let r = hotgp::selftest::run_suite(name)
            .ok_or_else(|| Exit::new(2, format!("unknown suite `{name}`; known: {}", hotgp::selftest::SUITES.join(", "))))?;
        let tag = if r.passed { "pass" } else { "FAIL" };
        writeln!(out, "{tag} {:<20} {:>6.1}s  {}", r.name, r.seconds, r.detail)?;
        if !r.passed {
            failed.push(r.name);
        }
    }
    Ok(failed)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn missing_config_exits_2_and_names_path() {
        let args = TrainArgs { config: "/nonexistent/run.toml".into(), ..TrainArgs::default() };
        let err = load_config(&args).unwrap_err();
        let exit = err.downcast_ref::<Exit>().unwrap();
        assert_eq!(exit.code, 2);
        assert!(exit.message.contains("/nonexistent/run.toml"));
    }

    #[test]
    fn seed_flag_and_overrides_apply() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.toml");
        std::fs::write(&path, "env = \"coverage\"\nseed = 3\n").unwrap();
        let args = TrainArgs {
            config: path,
            seed: Some(9),
            overrides: vec!["strategy=greedy".into()],
            ..TrainArgs::default()
        };
        let cfg = load_config(&args).unwrap();
        assert_eq!((cfg.seed, cfg.strategy.as_str()), (9, "greedy"));
        assert!(default_run_dir(&cfg).ends_with("coverage_greedy_seed9"));
    }

    #[test]
    fn unknown_suite_is_rejected() {
        let err = selftest(&["nope".into()], &mut Vec::new()).unwrap_err();
        assert_eq!(err.downcast_ref::<Exit>().unwrap().code, 2);
    }
}
