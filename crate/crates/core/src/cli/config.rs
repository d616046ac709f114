//! Run configuration: JSON file, flag overrides and validation.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{Architecture, EncodingConfig, ModelVariant, DEFAULT_LEAKY_SLOPE};
use crate::guidance::{RetryPolicy, ScheduleSpec};
use crate::training::{ShapeKind, TrainConfig};

/// Environment variable overriding the guidance service URL.
pub const GUIDANCE_URL_ENV: &str = "IMPLICIT_LAYERS_GUIDANCE_URL";

pub const DEFAULT_LAYERS: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelChoice {
    #[serde(rename = "12k")]
    Large,
    #[serde(rename = "1k")]
    Small,
    Custom {
        width: usize,
        depth: usize,
        octaves: usize,
    },
}

impl ModelChoice {
    pub fn architecture(&self, layers: usize) -> Result<Architecture> {
        let arch = match *self {
            ModelChoice::Large => ModelVariant::Large.architecture(layers),
            ModelChoice::Small => ModelVariant::Small.architecture(layers),
            ModelChoice::Custom { width, depth, octaves } => Architecture {
                depth,
                width,
                outputs: layers,
                encoding: EncodingConfig::new(octaves)?,
                leaky_slope: DEFAULT_LEAKY_SLOPE,
            },
        };
        arch.validate()?;
        Ok(arch)
    }

    /// Learning rate of the model card.
    pub fn learning_rate(&self) -> f64 {
        match self {
            ModelChoice::Small => ModelVariant::Small.mlp_learning_rate(),
            _ => ModelVariant::Large.mlp_learning_rate(),
        }
    }
}

impl FromStr for ModelChoice {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "12k" => Ok(ModelChoice::Large),
            "1k" => Ok(ModelChoice::Small),
            other => Err(Error::Config(format!(
                "unknown model {other:?}; use 12k, 1k, or --width/--depth/--octaves"
            ))),
        }
    }
}

/// Source for the distillation stage of `generate`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum InitStrategy {
    RgbGenerator,
    DdpmSample,
    Random,
    Shapes(Vec<ShapeKind>),
}

impl fmt::Display for InitStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            InitStrategy::RgbGenerator => f.write_str("rgb-generator"),
            InitStrategy::DdpmSample => f.write_str("ddpm-sample"),
            InitStrategy::Random => f.write_str("random"),
            InitStrategy::Shapes(kinds) => {
                let names: Vec<&str> = kinds
                    .iter()
                    .map(|k| match k {
                        ShapeKind::Box => "box",
                        ShapeKind::Ellipse => "ellipse",
                        ShapeKind::Blob => "blob",
                    })
                    .collect();
                write!(f, "shapes:{}", names.join(","))
            }
        }
    }
}

impl FromStr for InitStrategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "rgb-generator" => Ok(InitStrategy::RgbGenerator),
            "ddpm-sample" => Ok(InitStrategy::DdpmSample),
            "random" => Ok(InitStrategy::Random),
            _ => match s.strip_prefix("shapes:") {
                Some(list) => {
                    let kinds = list.split(',').map(ShapeKind::from_str).collect::<Result<Vec<_>>>()?;
                    if kinds.is_empty() {
                        return Err(Error::Config("shapes: needs at least one shape".into()));
                    }
                    Ok(InitStrategy::Shapes(kinds))
                }
                None => Err(Error::Config(format!(
                    "unknown init {s:?}; use rgb-generator, ddpm-sample, random or shapes:<box|ellipse|blob,...>"
                ))),
            },
        }
    }
}

impl TryFrom<String> for InitStrategy {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<InitStrategy> for String {
    fn from(s: InitStrategy) -> String {
        s.to_string()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProviderKind {
    Stub,
    Remote,
    Oracle,
}

impl FromStr for ProviderKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "stub" => Ok(ProviderKind::Stub),
            "remote" => Ok(ProviderKind::Remote),
            "oracle" => Ok(ProviderKind::Oracle),
            other => Err(Error::Config(format!("unknown guidance provider {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GuidanceConfig {
    pub provider: ProviderKind,
    /// Service URL for the remote provider.
    pub endpoint: Option<String>,
    /// Target image for the reconstruction oracle.
    pub oracle_target: Option<PathBuf>,
    pub oracle_strength: f64,
    /// Local schedule; a remote service's advertised schedule takes precedence.
    pub schedule: ScheduleSpec,
    pub retry_backoff_secs: Vec<f64>,
    pub timeout_secs: f64,
}

impl Default for GuidanceConfig {
    fn default() -> Self {
        let retry = RetryPolicy::default();
        Self {
            provider: ProviderKind::Stub,
            endpoint: None,
            oracle_target: None,
            oracle_strength: 1.0,
            schedule: ScheduleSpec::default(),
            retry_backoff_secs: retry.backoff.iter().map(Duration::as_secs_f64).collect(),
            timeout_secs: retry.timeout.as_secs_f64(),
        }
    }
}

impl GuidanceConfig {
    pub fn retry_policy(&self) -> Result<RetryPolicy> {
        let secs = |v: f64| {
            Duration::try_from_secs_f64(v).map_err(|_| Error::Config(format!("invalid duration {v} s")))
        };
        Ok(RetryPolicy {
            backoff: self.retry_backoff_secs.iter().map(|&v| secs(v)).collect::<Result<_>>()?,
            timeout: secs(self.timeout_secs)?,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelChoice,
    pub layers: usize,
    pub seed: u64,
    pub init: InitStrategy,
    pub guidance: GuidanceConfig,
    /// Write render and gradient snapshots during fine-tuning.
    pub snapshot_grads: bool,
    pub output_dir: PathBuf,
    /// `fit` reports whether its final per-pixel MSE falls below this.
    pub max_final_mse: Option<f64>,
    /// Resolution of the final PNG render.
    pub final_render_size: usize,
    pub train: TrainConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            model: ModelChoice::Large,
            layers: DEFAULT_LAYERS,
            seed: 0,
            init: InitStrategy::RgbGenerator,
            guidance: GuidanceConfig::default(),
            snapshot_grads: false,
            output_dir: PathBuf::from("runs/latest"),
            max_final_mse: Some(5e-3),
            final_render_size: 256,
            train: TrainConfig::default(),
        }
    }
}

impl RunConfig {
    /// Reads a config file. Fields it leaves out keep their defaults, except
    /// that an absent `train.lr_mlp` follows the chosen model card.
    pub fn from_json(text: &str) -> Result<Self> {
        let value: serde_json::Value =
            serde_json::from_str(text).map_err(|e| Error::Config(format!("config is not valid JSON: {e}")))?;
        let has_lr = value.get("train").and_then(|t| t.get("lr_mlp")).is_some();
        let mut cfg: RunConfig =
            serde_json::from_value(value).map_err(|e| Error::Config(format!("invalid config: {e}")))?;
        if !has_lr {
            cfg.train.lr_mlp = cfg.model.learning_rate();
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    /// Copies the run seed into the training config and validates.
    pub fn resolve(mut self) -> Result<Self> {
        self.train.seed = self.seed;
        if !self.snapshot_grads {
            self.train.snapshot_every = None;
        } else if self.train.snapshot_every.is_none() {
            self.train.snapshot_every = TrainConfig::default().snapshot_every;
        }
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if self.layers == 0 {
            return Err(Error::Config("layers must be at least 1".into()));
        }
        self.model.architecture(self.layers)?;
        self.train.validate()?;
        if self.final_render_size == 0 {
            return Err(Error::Config("final_render_size must be positive".into()));
        }
        if !(self.guidance.oracle_strength > 0.0) {
            return Err(Error::Config("oracle_strength must be positive".into()));
        }
        if let InitStrategy::Shapes(kinds) = &self.init {
            if kinds.len() > self.layers {
                return Err(Error::Config(format!(
                    "{} shapes for {} layers",
                    kinds.len(),
                    self.layers
                )));
            }
        }
        self.guidance.retry_policy()?;
        Ok(())
    }

    /// Config echo stored in checkpoints: everything but the output location,
    /// so identical runs in different directories write identical files.
    pub fn echo(&self) -> Result<serde_json::Value> {
        let mut v = serde_json::to_value(self)?;
        if let Some(map) = v.as_object_mut() {
            map.remove("output_dir");
        }
        Ok(v)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip() {
        let cfg = RunConfig::default();
        let text = serde_json::to_string(&cfg).unwrap();
        assert_eq!(RunConfig::from_json(&text).unwrap(), cfg);
    }

    #[test]
    fn lr_follows_model_card_unless_given() {
        let cfg = RunConfig::from_json(r#"{"model": "1k"}"#).unwrap();
        assert_eq!(cfg.train.lr_mlp, 1e-3);
        let cfg = RunConfig::from_json(r#"{"model": "1k", "train": {"lr_mlp": 0.5}}"#).unwrap();
        assert_eq!(cfg.train.lr_mlp, 0.5);
    }

    #[test]
    fn custom_model_parses() {
        let cfg = RunConfig::from_json(r#"{"model": {"custom": {"width": 16, "depth": 3, "octaves": 2}}, "layers": 2}"#)
            .unwrap();
        assert_eq!(cfg.model.architecture(2).unwrap().width, 16);
    }

    #[test]
    fn init_strategies() {
        for s in ["rgb-generator", "ddpm-sample", "random", "shapes:box,ellipse"] {
            assert_eq!(s.parse::<InitStrategy>().unwrap().to_string(), s);
        }
        assert!("shapes:star".parse::<InitStrategy>().is_err());
        assert!("nope".parse::<InitStrategy>().is_err());
    }

    #[test]
    fn zero_layers_is_config_error() {
        let cfg = RunConfig {
            layers: 0,
            ..Default::default()
        };
        assert!(matches!(cfg.resolve(), Err(Error::Config(_))));
    }

    #[test]
    fn unknown_fields_rejected() {
        assert!(matches!(RunConfig::from_json(r#"{"layer": 3}"#), Err(Error::Config(_))));
    }

    #[test]
    fn echo_omits_output_dir() {
        let echo = RunConfig::default().echo().unwrap();
        assert!(echo.get("output_dir").is_none());
        assert!(echo.get("train").is_some());
    }
}
