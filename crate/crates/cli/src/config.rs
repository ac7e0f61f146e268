//! Experiment configuration: a flat TOML table of typed keys.
//!
//! See `docs/config.md` for the full key reference.

use std::path::{Path, PathBuf};

use condreg::genmodel::{CvaeArch, SigmaBounds, TrainConfig};
use condreg::networks::{LayerWidths, Regime};
use condreg::synthdata::PerturbSpec;
use serde::Deserialize;

/// Keys whose values are lists by nature and never count as sweep axes.
pub const LIST_KEYS: [&str; 3] = ["split", "encoder_widths", "decoder_widths"];

pub const EXPERIMENTS: [&str; 6] = ["fd1", "fd2", "fd3", "m1", "m2", "mnist"];

/// A configuration problem tied to one key.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("{field}: {msg}")]
pub struct FieldError {
    pub field: String,
    pub msg: String,
}

impl FieldError {
    pub fn new(field: impl Into<String>, msg: impl Into<String>) -> Self {
        Self {
            field: field.into(),
            msg: msg.into(),
        }
    }
}

/// All diagnostics found while loading a config.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("invalid configuration:\n{}", .0.iter().map(|e| format!("  {e}")).collect::<Vec<_>>().join("\n"))]
pub struct ConfigError(pub Vec<FieldError>);

impl ConfigError {
    fn one(field: impl Into<String>, msg: impl Into<String>) -> Self {
        Self(vec![FieldError::new(field, msg)])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RegimeName {
    Sparse,
    FullyConnected,
}

impl From<RegimeName> for Regime {
    fn from(r: RegimeName) -> Self {
        match r {
            RegimeName::Sparse => Regime::Sparse,
            RegimeName::FullyConnected => Regime::FullyConnected,
        }
    }
}

fn d_n() -> usize {
    5000
}
fn d_split() -> [u32; 2] {
    [4, 1]
}
fn d_regime() -> RegimeName {
    RegimeName::FullyConnected
}
fn d_output_bound() -> f64 {
    1000.0
}
fn d_epochs() -> usize {
    300
}
fn d_batch() -> usize {
    64
}
fn d_lr() -> f64 {
    1e-3
}
fn d_one() -> usize {
    1
}
fn d_beta1() -> f64 {
    0.9
}
fn d_beta2() -> f64 {
    0.999
}
fn d_adam_eps() -> f64 {
    1e-8
}
fn d_sigma_min() -> f64 {
    0.01
}
fn d_sigma_max() -> f64 {
    2.0
}
fn d_sigma_star() -> f64 {
    0.2
}
fn d_unit() -> f64 {
    1.0
}
fn d_mc() -> usize {
    1000
}
fn d_w1_samples() -> usize {
    1000
}
fn d_reg_scale() -> f64 {
    0.01
}
fn d_tol() -> f64 {
    1e-4
}
fn d_max_iter() -> usize {
    20_000
}
fn d_norm() -> f64 {
    2.0
}
fn d_hellinger_points() -> usize {
    200
}
fn d_hellinger_steps() -> usize {
    2001
}
fn d_ckde_grid() -> usize {
    12
}
fn d_true() -> bool {
    true
}
fn d_out() -> PathBuf {
    PathBuf::from("out")
}
fn d_mnist_dir() -> PathBuf {
    PathBuf::from("data/mnist")
}

/// One experiment: data, model, optimisation, metrics and bookkeeping.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: String,
    #[serde(default = "d_n")]
    pub n: usize,
    #[serde(default = "d_split")]
    pub split: [u32; 2],

    pub encoder_widths: Vec<usize>,
    pub decoder_widths: Vec<usize>,
    #[serde(default = "d_regime")]
    pub regime: RegimeName,
    #[serde(default)]
    pub sparsity: Option<usize>,
    #[serde(default = "d_output_bound")]
    pub output_bound: f64,

    #[serde(default = "d_epochs")]
    pub epochs: usize,
    #[serde(default = "d_batch")]
    pub batch_size: usize,
    #[serde(default = "d_lr")]
    pub learning_rate: f64,
    #[serde(default = "d_one")]
    pub mc_latent_draws_per_item: usize,
    #[serde(default = "d_beta1")]
    pub adam_beta1: f64,
    #[serde(default = "d_beta2")]
    pub adam_beta2: f64,
    #[serde(default = "d_adam_eps")]
    pub adam_eps: f64,

    #[serde(default = "d_sigma_min")]
    pub sigma_min: f64,
    #[serde(default = "d_sigma_max")]
    pub sigma_max: f64,

    /// Observation noise of the manifold generators.
    #[serde(default = "d_sigma_star")]
    pub sigma_star: f64,
    #[serde(default)]
    pub perturb: bool,
    #[serde(default = "d_unit")]
    pub beta_star: f64,
    #[serde(default = "d_unit")]
    pub t_star: f64,

    /// Draws per test point for Monte-Carlo moments.
    #[serde(default = "d_mc")]
    pub mc_samples: usize,
    /// Cap on evaluated test points; all when absent.
    #[serde(default)]
    pub max_test_points: Option<usize>,
    #[serde(default = "d_true")]
    pub w1: bool,
    #[serde(default = "d_w1_samples")]
    pub w1_samples: usize,
    /// Sinkhorn `ε` as a multiple of the median pairwise cost.
    #[serde(default = "d_reg_scale")]
    pub sinkhorn_reg_scale: f64,
    #[serde(default = "d_tol")]
    pub sinkhorn_tol: f64,
    #[serde(default = "d_max_iter")]
    pub sinkhorn_max_iter: usize,
    #[serde(default = "d_norm")]
    pub ground_norm: f64,
    #[serde(default)]
    pub hellinger: bool,
    #[serde(default = "d_hellinger_points")]
    pub hellinger_points: usize,
    #[serde(default = "d_hellinger_steps")]
    pub hellinger_grid_steps: usize,
    #[serde(default)]
    pub ckde: bool,
    #[serde(default = "d_ckde_grid")]
    pub ckde_grid_size: usize,

    #[serde(default = "d_one")]
    pub replicates: usize,
    #[serde(default)]
    pub base_seed: u64,
    #[serde(default = "d_out")]
    pub output_dir: PathBuf,
    #[serde(default = "d_mnist_dir")]
    pub mnist_dir: PathBuf,
    /// Use only the first `mnist_limit` images.
    #[serde(default)]
    pub mnist_limit: Option<usize>,
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, ConfigError> {
        let table: toml::Table = text
            .parse()
            .map_err(|e: toml::de::Error| ConfigError::one("<file>", e.message().to_string()))?;
        Self::from_table(table)
    }

    pub fn from_table(table: toml::Table) -> Result<Self, ConfigError> {
        let cfg: Self = toml::Value::Table(table).try_into().map_err(|e: toml::de::Error| {
            let msg = e.message().to_string();
            let field = msg
                .split('`')
                .nth(1)
                .map(String::from)
                .unwrap_or_else(|| "<file>".into());
            ConfigError::one(field, msg)
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError::one("<file>", format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    pub fn is_fd(&self) -> bool {
        self.experiment.starts_with("fd")
    }

    pub fn is_manifold(&self) -> bool {
        matches!(self.experiment.as_str(), "m1" | "m2")
    }

    /// `(D, p)` implied by the experiment.
    pub fn dims(&self) -> (usize, usize) {
        match self.experiment.as_str() {
            "fd1" => (1, 1),
            "fd2" | "fd3" => (1, 5),
            "m1" | "m2" => (2, 1),
            _ => (784, 10),
        }
    }

    /// Checks every key and reports all problems at once.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let mut errs = Vec::new();
        let mut bad = |f: &str, m: String| errs.push(FieldError::new(f, m));
        if !EXPERIMENTS.contains(&self.experiment.as_str()) {
            bad(
                "experiment",
                format!("unknown experiment '{}', expected one of {EXPERIMENTS:?}", self.experiment),
            );
        }
        if self.n < 2 {
            bad("n", format!("need at least 2 samples, got {}", self.n));
        }
        if self.split.iter().any(|v| *v == 0) {
            bad("split", "both parts of the ratio must be positive".into());
        }
        if self.replicates == 0 {
            bad("replicates", "must be >= 1".into());
        }
        if self.epochs == 0 {
            bad("epochs", "must be >= 1".into());
        }
        if self.batch_size == 0 {
            bad("batch_size", "must be >= 1".into());
        }
        if !(self.learning_rate > 0.0) {
            bad("learning_rate", "must be > 0".into());
        }
        if self.mc_latent_draws_per_item == 0 {
            bad("mc_latent_draws_per_item", "must be >= 1".into());
        }
        if !(self.sigma_min > 0.0 && self.sigma_min <= self.sigma_max && self.sigma_max.is_finite()) {
            bad("sigma_min", format!("need 0 < sigma_min <= sigma_max, got {} and {}", self.sigma_min, self.sigma_max));
        }
        if !(self.sigma_star >= 0.0) {
            bad("sigma_star", "must be >= 0".into());
        }
        if self.perturb && !(self.beta_star > 0.0 && self.t_star > 0.0) {
            bad("beta_star", "beta_star and t_star must be positive".into());
        }
        if !(self.output_bound > 0.0) {
            bad("output_bound", "must be > 0".into());
        }
        if self.mc_samples < 2 {
            bad("mc_samples", "must be >= 2".into());
        }
        if self.w1_samples == 0 {
            bad("w1_samples", "must be >= 1".into());
        }
        if !(self.sinkhorn_reg_scale > 0.0) {
            bad("sinkhorn_reg_scale", "must be > 0".into());
        }
        if !(self.sinkhorn_tol > 0.0) {
            bad("sinkhorn_tol", "must be > 0".into());
        }
        if !(self.ground_norm >= 1.0) {
            bad("ground_norm", "must be >= 1".into());
        }
        if self.hellinger_grid_steps < 2 {
            bad("hellinger_grid_steps", "must be >= 2".into());
        }
        if self.ckde_grid_size == 0 {
            bad("ckde_grid_size", "must be >= 1".into());
        }
        if self.ckde && !self.is_fd() {
            bad("ckde", "the kernel baseline needs a scalar response (fd1, fd2, fd3)".into());
        }
        if self.hellinger && !self.is_fd() {
            bad("hellinger", "Hellinger evaluation needs a known scalar density (fd1, fd2, fd3)".into());
        }
        if self.regime == RegimeName::Sparse && self.sparsity.is_none() {
            bad("sparsity", "regime = \"sparse\" needs a sparsity budget".into());
        }
        if EXPERIMENTS.contains(&self.experiment.as_str()) {
            let (d, p) = self.dims();
            match self.arch() {
                Ok(arch) => {
                    if let Err(e) = arch.validate(d, p) {
                        bad("encoder_widths", e.to_string());
                    }
                }
                Err(e) => bad(&e.field, e.msg),
            }
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(ConfigError(errs))
        }
    }

    pub fn arch(&self) -> Result<CvaeArch, FieldError> {
        let enc = LayerWidths::new(self.encoder_widths.clone())
            .map_err(|e| FieldError::new("encoder_widths", e.to_string()))?;
        let dec = LayerWidths::new(self.decoder_widths.clone())
            .map_err(|e| FieldError::new("decoder_widths", e.to_string()))?;
        Ok(CvaeArch {
            encoder: enc,
            decoder: dec,
            sparsity: self.sparsity,
            output_bound: self.output_bound,
        })
    }

    pub fn train_config(&self, seed: u64) -> TrainConfig {
        TrainConfig {
            batch_size: self.batch_size,
            learning_rate: self.learning_rate,
            epochs: self.epochs,
            seed,
            mc_latent_draws_per_item: self.mc_latent_draws_per_item,
            adam_beta1: self.adam_beta1,
            adam_beta2: self.adam_beta2,
            adam_eps: self.adam_eps,
        }
    }

    pub fn sigma_bounds(&self) -> SigmaBounds {
        SigmaBounds {
            min: self.sigma_min,
            max: self.sigma_max,
        }
    }

    pub fn perturb_spec(&self) -> Option<PerturbSpec> {
        self.perturb.then_some(PerturbSpec {
            beta_star: self.beta_star,
            t_star: self.t_star,
        })
    }
}

/// A config whose single list-valued scalar key defines a sweep axis.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    pub field: String,
    pub values: Vec<toml::Value>,
    pub cells: Vec<ExperimentConfig>,
}

/// Splits a sweep config into one config per value of its list-valued key.
pub fn parse_sweep(text: &str) -> Result<SweepSpec, ConfigError> {
    let table: toml::Table = text
        .parse()
        .map_err(|e: toml::de::Error| ConfigError::one("<file>", e.message().to_string()))?;
    let axes: Vec<String> = table
        .iter()
        .filter(|(k, v)| v.is_array() && !LIST_KEYS.contains(&k.as_str()))
        .map(|(k, _)| k.clone())
        .collect();
    let field = match axes.as_slice() {
        [one] => one.clone(),
        [] => return Err(ConfigError::one("<sweep>", "no list-valued key to sweep over")),
        many => {
            return Err(ConfigError::one(
                "<sweep>",
                format!("exactly one key may be list-valued, found {}", many.join(", ")),
            ))
        }
    };
    let values = table[&field].as_array().cloned().unwrap_or_default();
    if values.is_empty() {
        return Err(ConfigError::one(field, "sweep list is empty"));
    }
    let cells = values
        .iter()
        .map(|v| {
            let mut t = table.clone();
            t.insert(field.clone(), v.clone());
            ExperimentConfig::from_table(t)
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(SweepSpec { field, values, cells })
}

/// Renders a sweep value for CSV output.
pub fn value_label(v: &toml::Value) -> String {
    match v {
        toml::Value::String(s) => s.clone(),
        toml::Value::Float(f) => format!("{f}"),
        other => other.to_string(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const FD1: &str = r#"
experiment = "fd1"
encoder_widths = [2, 10, 10]
decoder_widths = [11, 10, 1]
"#;

    #[test]
    fn parses_with_defaults() {
        let c = ExperimentConfig::from_toml_str(FD1).unwrap();
        assert_eq!(c.n, 5000);
        assert_eq!(c.split, [4, 1]);
        assert_eq!(c.batch_size, 64);
        assert_eq!(c.replicates, 1);
        assert!(!c.ckde);
    }

    #[test]
    fn unknown_experiment_is_a_field_error() {
        let err = ExperimentConfig::from_toml_str(&FD1.replace("fd1", "fd9")).unwrap_err();
        assert_eq!(err.0[0].field, "experiment");
    }

    #[test]
    fn unknown_key_is_named() {
        let err = ExperimentConfig::from_toml_str(&format!("{FD1}\nepochz = 3\n")).unwrap_err();
        assert!(err.to_string().contains("epochz"), "{err}");
    }

    #[test]
    fn width_mismatch_reported() {
        let err = ExperimentConfig::from_toml_str(&FD1.replace("[11, 10, 1]", "[12, 10, 1]")).unwrap_err();
        assert_eq!(err.0[0].field, "encoder_widths");
    }

    #[test]
    fn collects_several_errors() {
        let text = format!("{FD1}\nreplicates = 0\nepochs = 0\n");
        let err = ExperimentConfig::from_toml_str(&text).unwrap_err();
        let fields: Vec<_> = err.0.iter().map(|e| e.field.as_str()).collect();
        assert!(fields.contains(&"replicates") && fields.contains(&"epochs"));
    }

    #[test]
    fn sweep_splits_cells() {
        let text = r#"
experiment = "m1"
encoder_widths = [3, 8, 2]
decoder_widths = [3, 8, 2]
sigma_star = [0.5, 0.2, 0.05]
"#;
        let s = parse_sweep(text).unwrap();
        assert_eq!(s.field, "sigma_star");
        assert_eq!(s.cells.len(), 3);
        assert_eq!(s.cells[2].sigma_star, 0.05);
        assert_eq!(value_label(&s.values[1]), "0.2");
    }

    #[test]
    fn sweep_rejects_zero_two_or_empty_axes() {
        assert!(parse_sweep(FD1).is_err());
        let two = format!("{FD1}\nsigma_star = [0.1, 0.2]\nepochs = [1, 2]\n");
        assert!(parse_sweep(&two).unwrap_err().to_string().contains("exactly one"));
        let empty = format!("{FD1}\nsigma_star = []\n");
        assert!(parse_sweep(&empty).unwrap_err().to_string().contains("empty"));
    }
}
