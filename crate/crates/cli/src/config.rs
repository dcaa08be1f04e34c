use std::path::{Path, PathBuf};

use ptm_catalog::evaluation::Averaging;
use ptm_catalog::filter::Combine;
use serde::Deserialize;

use crate::error::CliError;

pub const DEFAULT_SEED: u64 = 42;
pub const DEFAULT_OUT_DIR: &str = "artifacts";

/// Classifiers a command should run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ClassifierChoice {
    Cnb,
    Svc,
    Both,
}

impl std::str::FromStr for ClassifierChoice {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "cnb" => Ok(Self::Cnb),
            "svc" => Ok(Self::Svc),
            "both" => Ok(Self::Both),
            _ => Err(format!("unknown classifier {s:?} (expected cnb, svc or both)")),
        }
    }
}

/// Keys accepted in the `--config` file. Every key is optional.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub registry: Option<PathBuf>,
    pub taxonomy: Option<PathBuf>,
    pub evidence: Option<PathBuf>,
    pub out_dir: Option<PathBuf>,
    pub combine: Option<String>,
    pub alpha: Option<f64>,
    pub beta: Option<f64>,
    pub min_df: Option<usize>,
    pub stemming: Option<bool>,
    pub classifier: Option<String>,
    pub smoothing: Option<f64>,
    pub normalize_weights: Option<bool>,
    pub c: Option<f64>,
    pub epochs: Option<usize>,
    pub k: Option<usize>,
    pub seed: Option<u64>,
    pub averaging: Option<String>,
    pub threshold: Option<f64>,
    pub strict: Option<bool>,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {}", path.display(), e.message())))
    }
}

/// Resolved settings for one invocation.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    /// `None` selects the bundled fixture registry.
    pub registry: Option<PathBuf>,
    pub taxonomy: Option<PathBuf>,
    pub evidence: Option<PathBuf>,
    pub out_dir: PathBuf,
    pub combine: Combine,
    pub alpha: Option<f64>,
    pub beta: Option<f64>,
    pub min_df: usize,
    pub stemming: bool,
    pub classifier: ClassifierChoice,
    pub smoothing: f64,
    pub normalize_weights: bool,
    pub c: f64,
    pub epochs: usize,
    pub k: usize,
    pub seed: u64,
    pub averaging: Averaging,
    pub threshold: f64,
    pub strict: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            registry: None,
            taxonomy: None,
            evidence: None,
            out_dir: PathBuf::from(DEFAULT_OUT_DIR),
            combine: Combine::And,
            alpha: None,
            beta: None,
            min_df: 2,
            stemming: false,
            classifier: ClassifierChoice::Both,
            smoothing: 1.0,
            normalize_weights: false,
            c: 1.0,
            epochs: 50,
            k: 10,
            seed: DEFAULT_SEED,
            averaging: Averaging::Weighted,
            threshold: ptm_catalog::mapping::DEFAULT_THRESHOLD,
            strict: false,
        }
    }
}

fn parse<T: std::str::FromStr<Err = String>>(key: &str, value: Option<String>) -> Result<Option<T>, CliError> {
    value
        .map(|v| v.parse().map_err(|e: String| CliError::Config(format!("{key}: {e}"))))
        .transpose()
}

impl RunConfig {
    /// Applies file values over the defaults. Flags are applied afterwards
    /// by the caller.
    pub fn from_file(file: FileConfig) -> Result<Self, CliError> {
        let d = Self::default();
        Ok(Self {
            registry: file.registry,
            taxonomy: file.taxonomy,
            evidence: file.evidence,
            out_dir: file.out_dir.unwrap_or(d.out_dir),
            combine: parse("combine", file.combine)?.unwrap_or(d.combine),
            alpha: file.alpha,
            beta: file.beta,
            min_df: file.min_df.unwrap_or(d.min_df),
            stemming: file.stemming.unwrap_or(d.stemming),
            classifier: parse("classifier", file.classifier)?.unwrap_or(d.classifier),
            smoothing: file.smoothing.unwrap_or(d.smoothing),
            normalize_weights: file.normalize_weights.unwrap_or(d.normalize_weights),
            c: file.c.unwrap_or(d.c),
            epochs: file.epochs.unwrap_or(d.epochs),
            k: file.k.unwrap_or(d.k),
            seed: file.seed.unwrap_or(d.seed),
            averaging: parse("averaging", file.averaging)?.unwrap_or(d.averaging),
            threshold: file.threshold.unwrap_or(d.threshold),
            strict: file.strict.unwrap_or(d.strict),
        })
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let fail = |msg: String| Err(CliError::Config(msg));
        if self.k < 2 {
            return fail(format!("k must be at least 2, got {}", self.k));
        }
        if !(self.threshold > 0.0 && self.threshold <= 1.0) {
            return fail(format!("threshold must be in (0, 1], got {}", self.threshold));
        }
        if self.min_df == 0 {
            return fail("min_df must be at least 1".into());
        }
        if !(self.smoothing.is_finite() && self.smoothing > 0.0) {
            return fail(format!("smoothing must be positive, got {}", self.smoothing));
        }
        if !(self.c.is_finite() && self.c > 0.0) {
            return fail(format!("c must be positive, got {}", self.c));
        }
        if self.epochs == 0 {
            return fail("epochs must be at least 1".into());
        }
        for (key, v) in [("alpha", self.alpha), ("beta", self.beta)] {
            if let Some(v) = v {
                if !(v.is_finite() && v >= 0.0) {
                    return fail(format!("{key} must be a non-negative number, got {v}"));
                }
            }
        }
        Ok(())
    }
}
