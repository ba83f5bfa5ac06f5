//! Experiment configuration files (TOML).

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use anyhow::{bail, ensure, Context, Result};
use cvcim::{CimParams, PolicyConfig};
use serde::Deserialize;

pub const DEFAULT_SAMPLES: usize = 50;
pub const DEFAULT_STRIDE: usize = 10;
pub const DEFAULT_PERCENTILES: [f64; 4] = [5.0, 10.0, 25.0, 50.0];
pub const DEFAULT_SUCCESS_THRESHOLD: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(untagged)]
pub enum InstanceSource {
    File { file: PathBuf },
    Generated { n: usize, kappa: f64, seed: u64 },
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
pub struct PolicyEntry {
    /// Output name; defaults to the policy kind.
    #[serde(default)]
    pub name: Option<String>,
    #[serde(flatten)]
    pub config: PolicyConfig,
}

impl PolicyEntry {
    pub fn name(&self) -> &str {
        self.name.as_deref().unwrap_or(self.config.name())
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OracleBudget {
    #[serde(default = "default_starts")]
    pub starts: usize,
    #[serde(default = "default_max_iters")]
    pub max_iters: usize,
}

fn default_starts() -> usize {
    1000
}
fn default_max_iters() -> usize {
    10_000
}

impl Default for OracleBudget {
    fn default() -> Self {
        Self { starts: default_starts(), max_iters: default_max_iters() }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepAxes {
    #[serde(default = "default_sweep_n")]
    pub n: usize,
    #[serde(default = "default_kappas")]
    pub kappa: Vec<f64>,
    #[serde(default = "default_lambdas")]
    pub lambda: Vec<f64>,
    #[serde(default = "default_instances_per_kappa")]
    pub instances_per_kappa: usize,
}

fn default_sweep_n() -> usize {
    20
}
fn default_kappas() -> Vec<f64> {
    vec![1.0, 10.0, 100.0, 1000.0]
}
fn default_lambdas() -> Vec<f64> {
    vec![0.04, 326.0, 701.0, 1076.0]
}
fn default_instances_per_kappa() -> usize {
    1
}

impl Default for SweepAxes {
    fn default() -> Self {
        Self {
            n: default_sweep_n(),
            kappa: default_kappas(),
            lambda: default_lambdas(),
            instances_per_kappa: default_instances_per_kappa(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub name: Option<String>,
    #[serde(default)]
    pub master_seed: u64,
    #[serde(default = "default_samples")]
    pub samples: usize,
    #[serde(default = "default_stride")]
    pub stride: usize,
    #[serde(default)]
    pub out: Option<PathBuf>,
    /// Reference table (`label,value`) for file instances.
    #[serde(default)]
    pub reference: Option<PathBuf>,
    #[serde(default = "default_percentiles")]
    pub percentiles: Vec<f64>,
    #[serde(default = "default_success_threshold")]
    pub success_threshold: f64,
    #[serde(default)]
    pub params: CimParams,
    pub policies: Vec<PolicyEntry>,
    #[serde(default)]
    pub instances: Vec<InstanceSource>,
    #[serde(default)]
    pub oracle: OracleBudget,
    #[serde(default)]
    pub sweep: Option<SweepAxes>,
    /// Directory that relative paths are resolved against.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

fn default_samples() -> usize {
    DEFAULT_SAMPLES
}
fn default_stride() -> usize {
    DEFAULT_STRIDE
}
fn default_percentiles() -> Vec<f64> {
    DEFAULT_PERCENTILES.to_vec()
}
fn default_success_threshold() -> f64 {
    DEFAULT_SUCCESS_THRESHOLD
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Run,
    Sweep,
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).context("invalid experiment config")?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        let mut cfg = Self::parse(&text).with_context(|| format!("in {}", path.display()))?;
        cfg.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(cfg)
    }

    pub fn resolve(&self, path: &Path) -> PathBuf {
        if path.is_absolute() {
            path.to_path_buf()
        } else {
            self.base_dir.join(path)
        }
    }

    pub fn validate(&self, mode: Mode) -> Result<()> {
        ensure!(!self.policies.is_empty(), "config lists no policies");
        ensure!(self.samples > 0, "samples must be positive");
        ensure!(self.stride > 0, "stride must be positive");
        ensure!(
            self.success_threshold.is_finite() && self.success_threshold >= 0.0,
            "success_threshold must be non-negative"
        );
        for &x in &self.percentiles {
            ensure!(x > 0.0 && x < 100.0, "percentile {x} outside (0, 100)");
        }
        ensure!(self.oracle.starts > 0, "oracle.starts must be positive");
        self.params.validate()?;
        let mut names = BTreeSet::new();
        for p in &self.policies {
            p.config.validate()?;
            ensure!(names.insert(p.name().to_string()), "duplicate policy name `{}`", p.name());
        }
        match mode {
            Mode::Run => {
                ensure!(!self.instances.is_empty(), "config lists no instances");
                for src in &self.instances {
                    match src {
                        InstanceSource::File { file } => {
                            let p = self.resolve(file);
                            ensure!(p.is_file(), "instance file {} does not exist", p.display());
                        }
                        InstanceSource::Generated { n, kappa, .. } => {
                            ensure!(*n >= 2, "generated instances need n >= 2");
                            ensure!(*kappa >= 1.0, "kappa must be >= 1");
                        }
                    }
                }
            }
            Mode::Sweep => {
                let Some(sweep) = &self.sweep else {
                    bail!("sweep mode needs a [sweep] table");
                };
                ensure!(!sweep.lambda.is_empty(), "sweep lambda list is empty");
                ensure!(!sweep.kappa.is_empty(), "sweep kappa list is empty");
                ensure!(sweep.n >= 2, "sweep n must be >= 2");
                ensure!(sweep.instances_per_kappa > 0, "instances_per_kappa must be positive");
                for &k in &sweep.kappa {
                    ensure!(k >= 1.0 && k.is_finite(), "kappa {k} must be >= 1");
                }
                for &l in &sweep.lambda {
                    ensure!(l >= 0.0 && l.is_finite(), "lambda {l} must be non-negative");
                }
            }
        }
        if let Some(r) = &self.reference {
            let p = self.resolve(r);
            ensure!(p.is_file(), "reference file {} does not exist", p.display());
        }
        Ok(())
    }
}
