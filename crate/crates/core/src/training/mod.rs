//! Optimization: losses, gradients, AdamW and the three training stages.
//!
//! 1. [`stage_init_rgb`] fits a low-frequency implicit RGB generator to the
//!    prompt by score distillation.
//! 2. [`stage_distill`] fits the layered field to a raster target (the
//!    generator's render, a diffusion sample, or handcrafted masks) with the
//!    reconstruction loss.
//! 3. [`stage_finetune`] optimizes the layered field directly with score
//!    distillation plus the entropy regularizer.

mod adamw;
mod grad;
mod observer;
mod sampling;
mod sds;
mod stages;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::guidance::{WeightMode, DEFAULT_GUIDANCE_SCALE};

pub use adamw::{AdamW, AdamWConfig};
pub use grad::{
    backward, backward_into, forward, loss_rec, loss_rec_at, loss_rec_terms, pixel_centers, CompositeForward,
    GradientBundle, RecTerms,
};
pub use observer::{grad_snapshot, NullObserver, StepRecord, TrainObserver};
pub use sampling::sample_jittered_grid;
pub use sds::{distillation_residual, sds_step, sds_step_rgb, Residual, SdsOutcome};
pub use stages::{
    kmeans_palette, stage_distill, stage_finetune, stage_init_rgb, FieldOptimizer, InitSource, RgbGenerator,
    ShapeKind, ShapeMask,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    /// Fine-tuning iterations.
    pub iterations: u64,
    /// Images rendered per score-distillation step.
    pub batch_size: usize,
    /// Square render resolution fed to the guidance provider.
    pub render_size: usize,
    pub lr_mlp: f64,
    pub lr_color: f64,
    /// Entropy weight in the fine-tuning loss (per-pixel mean).
    pub lambda: f64,
    /// Entropy weight in the reconstruction loss (per-pixel sum).
    pub lambda_prime: f64,
    pub guidance_scale: f64,
    pub seed: u64,
    /// Half-pixel jitter of query points during score distillation.
    pub jitter: bool,
    /// Half-pixel jitter during reconstruction distillation.
    pub jitter_distill: bool,
    pub t_min: f64,
    pub t_max: f64,
    pub weight_mode: WeightMode,
    pub adamw: AdamWConfig,
    /// Reconstruction iterations of the distillation stage.
    pub distill_iterations: u64,
    /// Resolution of the generator render used as distillation target.
    pub distill_size: usize,
    /// Score-distillation iterations of the RGB generator stage.
    pub init_iterations: u64,
    pub lr_rgb: f64,
    /// Octaves of the RGB generator encoding (at most 6).
    pub rgb_octaves: usize,
    /// Gradient snapshot cadence; `None` disables snapshots.
    pub snapshot_every: Option<u64>,
    /// Checkpoint cadence; `None` writes only the final checkpoint.
    pub checkpoint_every: Option<u64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            iterations: 8000,
            batch_size: 3,
            render_size: 64,
            lr_mlp: 1e-2,
            lr_color: 5e-3,
            lambda: 1e-5,
            lambda_prime: 1e-4,
            guidance_scale: DEFAULT_GUIDANCE_SCALE,
            seed: 0,
            jitter: true,
            jitter_distill: true,
            t_min: 0.02,
            t_max: 0.98,
            weight_mode: WeightMode::SigmaSquared,
            adamw: AdamWConfig::default(),
            distill_iterations: 1000,
            distill_size: 128,
            init_iterations: 2000,
            lr_rgb: 1e-2,
            rgb_octaves: 6,
            snapshot_every: Some(100),
            checkpoint_every: Some(1000),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("lr_mlp", self.lr_mlp),
            ("lr_color", self.lr_color),
            ("lr_rgb", self.lr_rgb),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{name} must be positive, got {v}")));
            }
        }
        if self.iterations == 0 {
            return Err(Error::Config("iterations must be at least 1".into()));
        }
        if self.batch_size == 0 || self.render_size == 0 || self.distill_size == 0 {
            return Err(Error::Config("batch and render sizes must be positive".into()));
        }
        if !(0.0 <= self.t_min && self.t_min < self.t_max && self.t_max <= 1.0) {
            return Err(Error::Config(format!("need 0 ≤ t_min < t_max ≤ 1, got {} and {}", self.t_min, self.t_max)));
        }
        if self.lambda < 0.0 || self.lambda_prime < 0.0 {
            return Err(Error::Config("entropy weights must be nonnegative".into()));
        }
        if self.rgb_octaves == 0 || self.rgb_octaves > 6 {
            return Err(Error::Config(format!("rgb_octaves must be in 1..=6, got {}", self.rgb_octaves)));
        }
        if self.snapshot_every == Some(0) || self.checkpoint_every == Some(0) {
            return Err(Error::Config("cadences must be positive".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_follow_model_card() {
        let c = TrainConfig::default();
        assert_eq!(c.batch_size, 3);
        assert_eq!(c.iterations, 8000);
        assert_eq!(c.guidance_scale, 14.0);
        assert_eq!(c.lambda, 1e-5);
        assert_eq!(c.lambda_prime, 1e-4);
        assert_eq!(c.lr_color, 5e-3);
        assert_eq!(c.snapshot_every, Some(100));
        assert_eq!(c.rgb_octaves, 6);
        c.validate().unwrap();
    }

    #[test]
    fn invalid_configs_rejected() {
        for bad in [
            TrainConfig { lr_mlp: 0.0, ..Default::default() },
            TrainConfig { iterations: 0, ..Default::default() },
            TrainConfig { t_min: 0.5, t_max: 0.4, ..Default::default() },
            TrainConfig { rgb_octaves: 7, ..Default::default() },
        ] {
            assert!(bad.validate().is_err());
        }
    }

    #[test]
    fn config_json_round_trip() {
        let c = TrainConfig::default();
        let back: TrainConfig = serde_json::from_str(&serde_json::to_string(&c).unwrap()).unwrap();
        assert_eq!(back, c);
    }
}
