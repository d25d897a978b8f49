use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};
use serde::Deserialize;

use renpop_core::{burn_in, MarkDistribution};

use crate::Failure;

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Json,
    Csv,
    Dot,
}

/// Flags shared by every subcommand.
#[derive(Args, Debug, Default)]
pub struct Common {
    /// Mark law, e.g. geometric:0.5, twopoint:0.5,2, zeta:2.5,1000, empirical:1=0.5,3=0.5
    #[arg(long, global = true)]
    pub dist: Option<String>,
    /// Window length (nodes 0..N-1)
    #[arg(long, global = true)]
    pub window: Option<u64>,
    /// Burn-in tolerance
    #[arg(long, global = true)]
    pub eps: Option<f64>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Independent replications
    #[arg(long, global = true)]
    pub reps: Option<u64>,
    /// Write output here instead of stdout
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    pub format: Option<Format>,
    /// JSON file with any of the flags above; flags win
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Worker threads for replications (default: available parallelism)
    #[arg(long, global = true)]
    pub threads: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    dist: Option<String>,
    window: Option<u64>,
    eps: Option<f64>,
    seed: Option<u64>,
    reps: Option<u64>,
    out: Option<PathBuf>,
    format: Option<Format>,
    threads: Option<usize>,
}

fn read_file(path: &Path) -> Result<FileConfig, Failure> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Failure::config(format!("config: cannot read {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| Failure::config(format!("config: {e}")))
}

/// Flags merged over the config file.
#[derive(Debug)]
pub struct RunConfig {
    pub dist: Option<String>,
    pub window: Option<u64>,
    pub eps: f64,
    pub seed: Option<u64>,
    pub reps: u64,
    pub out: Option<PathBuf>,
    pub format: Option<Format>,
    pub threads: Option<usize>,
}

pub const DEFAULT_EPS: f64 = 1e-9;

impl RunConfig {
    pub fn resolve(flags: &Common) -> Result<Self, Failure> {
        let file = match &flags.config {
            Some(p) => read_file(p)?,
            None => FileConfig::default(),
        };
        let cfg = RunConfig {
            dist: flags.dist.clone().or(file.dist),
            window: flags.window.or(file.window),
            eps: flags.eps.or(file.eps).unwrap_or(DEFAULT_EPS),
            seed: flags.seed.or(file.seed),
            reps: flags.reps.or(file.reps).unwrap_or(1),
            out: flags.out.clone().or(file.out),
            format: flags.format.or(file.format),
            threads: flags.threads.or(file.threads),
        };
        if !(cfg.eps > 0.0 && cfg.eps < 1.0) {
            return Err(Failure::config(format!("eps: must lie in (0, 1), got {}", cfg.eps)));
        }
        if cfg.reps == 0 {
            return Err(Failure::config("reps: must be at least 1".into()));
        }
        if cfg.threads == Some(0) {
            return Err(Failure::config("threads: must be at least 1".into()));
        }
        Ok(cfg)
    }

    pub fn dist(&self) -> Result<MarkDistribution, Failure> {
        let spec = self.dist.as_deref().ok_or_else(|| Failure::config("dist: required".into()))?;
        MarkDistribution::parse(spec).map_err(|e| Failure::config(format!("dist: {e}")))
    }

    pub fn seed(&self) -> Result<u64, Failure> {
        self.seed.ok_or_else(|| Failure::config("seed: required for simulation".into()))
    }

    /// Window length, checked against ten burn-in lengths.
    pub fn window(&self, dist: &MarkDistribution) -> Result<u64, Failure> {
        let len = self.window.ok_or_else(|| Failure::config("window: required for simulation".into()))?;
        let needed = 10 * burn_in(dist, self.eps).max(1);
        if len < needed {
            return Err(Failure::window(format!(
                "window: length {len} is shorter than {needed} (ten burn-in lengths at eps = {})",
                self.eps
            )));
        }
        Ok(len)
    }

    pub fn format(&self, default: Format, allowed: &[Format]) -> Result<Format, Failure> {
        let f = self.format.unwrap_or(default);
        if allowed.contains(&f) {
            Ok(f)
        } else {
            Err(Failure::config(format!("format: {f:?} is not available here")))
        }
    }
}
