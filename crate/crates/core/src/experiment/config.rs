use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::augment::{MixupConfig, ZooConfig};
use crate::data::WindowSpec;
use crate::error::{Error, Result};
use crate::model::{DpConfig, TrainConfig};
use crate::synth::GeneratorConfig;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Baseline,
    Zoo,
    ZooPca,
    Mixup,
    DpSgd,
}

impl Method {
    pub fn as_str(&self) -> &'static str {
        match self {
            Method::Baseline => "baseline",
            Method::Zoo => "zoo",
            Method::ZooPca => "zoo_pca",
            Method::Mixup => "mixup",
            Method::DpSgd => "dp_sgd",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s.replace('-', "_").as_str() {
            "baseline" => Ok(Method::Baseline),
            "zoo" => Ok(Method::Zoo),
            "zoo_pca" => Ok(Method::ZooPca),
            "mixup" => Ok(Method::Mixup),
            "dp_sgd" | "dp" => Ok(Method::DpSgd),
            other => Err(Error::Config(format!("unknown method `{other}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WindowConfig {
    pub stride: usize,
    pub max_start: usize,
}

impl Default for WindowConfig {
    fn default() -> Self {
        Self { stride: 4, max_start: 96 }
    }
}

/// Thresholds of the model-update gate.
#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GateConfig {
    pub eps_priv: f64,
    pub eps_mse: f64,
    pub beta: f64,
}

impl Default for GateConfig {
    fn default() -> Self {
        Self { eps_priv: 0.005, eps_mse: 0.005, beta: 3.0 }
    }
}

/// Everything a run needs. Field names are the config-file keys.
#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub method: Method,
    pub run_id: Option<String>,
    /// Triplet CSV.
    pub data: PathBuf,
    pub out_dir: PathBuf,
    /// Baseline checkpoint; defaults to `<out_dir>/checkpoint_baseline`.
    pub checkpoint: Option<PathBuf>,
    pub n_vars: usize,
    /// Split and run seed.
    pub seed: u64,
    /// Train / held-out / test fractions of episodes.
    pub split: [f64; 3],
    pub rounds: usize,
    /// Synthetic points per round; `min(32000, |train| / 2)` when unset.
    pub samples_per_round: Option<usize>,
    pub retrain_epochs: usize,
    /// Learning rate of the retraining passes; the training rate when unset.
    pub retrain_learning_rate: Option<f64>,
    pub pca_ratio: f64,
    pub dp_sigmas: Vec<f64>,
    /// Epochs for DP-SGD training from scratch; `train.max_epochs` when unset.
    pub dp_epochs: Option<usize>,
    pub windows: WindowConfig,
    pub train: TrainConfig,
    pub zoo: ZooConfig,
    pub mixup: MixupConfig,
    pub dp: DpConfig,
    pub gate: GateConfig,
    pub generator: GeneratorConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            method: Method::Baseline,
            run_id: None,
            data: PathBuf::from("triplets.csv"),
            out_dir: PathBuf::from("runs"),
            checkpoint: None,
            n_vars: 16,
            seed: 0,
            split: [0.6, 0.2, 0.2],
            rounds: 10,
            samples_per_round: None,
            retrain_epochs: 1,
            retrain_learning_rate: None,
            pca_ratio: 0.7,
            dp_sigmas: vec![1.1, 1.5, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0],
            dp_epochs: None,
            windows: WindowConfig::default(),
            train: TrainConfig::default(),
            zoo: ZooConfig::default(),
            mixup: MixupConfig::default(),
            dp: DpConfig::default(),
            gate: GateConfig::default(),
            generator: GeneratorConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => Error::MissingFile(path.to_path_buf()),
            _ => Error::Io(e),
        })?;
        Self::from_toml_str(&text)
    }

    pub fn window_spec(&self) -> WindowSpec {
        WindowSpec {
            input_len: self.train.input_len,
            horizon: self.train.horizon,
            stride: self.windows.stride,
            max_start: self.windows.max_start,
        }
    }

    pub fn checkpoint_path(&self) -> PathBuf {
        self.checkpoint.clone().unwrap_or_else(|| self.out_dir.join("checkpoint_baseline"))
    }

    pub fn samples_per_round(&self, train_len: usize) -> usize {
        self.samples_per_round.unwrap_or(32_000).min(train_len / 2)
    }

    /// The α (ZOO), β (MixUp) or σ (DP-SGD) this run is tagged with.
    pub fn knob(&self) -> f64 {
        match self.method {
            Method::Zoo | Method::ZooPca => self.zoo.alpha,
            Method::Mixup => self.mixup.beta,
            Method::DpSgd => self.dp.noise_multiplier,
            Method::Baseline => 0.0,
        }
    }

    pub fn run_id(&self) -> String {
        if let Some(id) = &self.run_id {
            return id.clone();
        }
        match self.method {
            Method::Baseline => "baseline".to_string(),
            Method::Zoo => format!("zoo_a{}", self.zoo.alpha),
            Method::ZooPca => format!("zoo_pca_a{}_r{}", self.zoo.alpha, self.pca_ratio),
            Method::Mixup => format!("mixup_b{}", self.mixup.beta),
            Method::DpSgd => format!("dp_sgd_c{}", self.dp.clip_norm),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.train.validate()?;
        self.zoo.validate()?;
        self.dp.validate()?;
        if !(self.mixup.beta > 0.0) {
            return Err(Error::Config("mixup.beta must be positive".into()));
        }
        if !(self.pca_ratio > 0.0 && self.pca_ratio <= 1.0) {
            return Err(Error::Config("pca_ratio must lie in (0, 1]".into()));
        }
        if self.windows.stride == 0 {
            return Err(Error::Config("windows.stride must be >= 1".into()));
        }
        let g = &self.gate;
        if !(g.eps_priv >= 0.0 && g.eps_mse >= 0.0 && g.beta >= 0.0) {
            return Err(Error::Config("gate thresholds must be non-negative".into()));
        }
        if self.run_id().contains(',') {
            return Err(Error::Config("run_id may not contain commas".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn toml_keys_mirror_fields() {
        let cfg = RunConfig::from_toml_str(
            r#"
            method = "zoo_pca"
            seed = 7
            rounds = 3
            pca_ratio = 0.5
            [zoo]
            alpha = 0.25
            [train]
            hidden_dim = 8
            "#,
        )
        .unwrap();
        assert_eq!(cfg.method, Method::ZooPca);
        assert_eq!(cfg.zoo.alpha, 0.25);
        assert_eq!(cfg.zoo.lambda, 3000.0);
        assert_eq!(cfg.train.hidden_dim, 8);
        assert_eq!(cfg.run_id(), "zoo_pca_a0.25_r0.5");
        assert!(RunConfig::from_toml_str("nonsense_key = 1").is_err());
    }

    #[test]
    fn desk_scale_round_size() {
        let cfg = RunConfig::default();
        assert_eq!(cfg.samples_per_round(100_000), 32_000);
        assert_eq!(cfg.samples_per_round(1_000), 500);
    }

    #[test]
    fn method_names() {
        assert_eq!(Method::parse("zoo-pca").unwrap(), Method::ZooPca);
        assert!(Method::parse("gan").is_err());
    }
}
