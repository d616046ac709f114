//! Noise-prediction providers for score distillation.
//!
//! Every provider answers the same question: given a noised render `z_t`,
//! its timestep and the prompt, what noise `ε̂` does the model predict? The
//! training loop only ever sees `ε̂ − ε`, so swapping providers changes
//! values but never shapes or types.

mod remote;
mod schedule;
pub mod wire;

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::raster::RasterImage;

pub use remote::{RemoteProvider, RetryPolicy};
pub use schedule::{perturb, NoiseSchedule, ScheduleSpec, WeightMode};

/// Default classifier-free guidance scale.
pub const DEFAULT_GUIDANCE_SCALE: f64 = 14.0;

#[derive(Debug, Clone)]
pub struct GuidanceRequest {
    /// The noised image `z_t`.
    pub image: RasterImage,
    /// Continuous timestep in `(0,1)`.
    pub t: f64,
    pub prompt: String,
    pub guidance_scale: f64,
    /// Seed of the injected noise; see [`noise_from_seed`].
    pub seed: u64,
}

impl GuidanceRequest {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.t) {
            return Err(Error::Guidance(format!("timestep {} outside [0,1]", self.t)));
        }
        if self.image.data().iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("guidance request image".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProviderMeta {
    pub model_id: String,
    pub latency_ms: f64,
    /// Discrete schedule index the timestep was mapped to.
    pub timestep_index: Option<usize>,
}

#[derive(Debug, Clone)]
pub struct GuidanceResponse {
    /// Predicted noise, same `H×W×3` layout as the request image.
    pub eps_hat: Vec<f64>,
    pub meta: ProviderMeta,
}

impl GuidanceResponse {
    pub(crate) fn check_against(&self, req: &GuidanceRequest) -> Result<()> {
        if self.eps_hat.len() != req.image.data().len() {
            return Err(Error::Guidance(format!(
                "provider returned {} values for a {}×{}×3 request",
                self.eps_hat.len(),
                req.image.width(),
                req.image.height()
            )));
        }
        if self.eps_hat.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("predicted noise".into()));
        }
        Ok(())
    }
}

/// Source of `ε̂ = ε_φ(z_t; y, t)` predictions.
pub trait GuidanceProvider: Send + Sync {
    fn name(&self) -> &str;

    fn predict_eps(&self, req: &GuidanceRequest) -> Result<GuidanceResponse>;

    /// A full reverse-diffusion sample for the prompt, if the provider can
    /// produce one.
    fn sample(&self, prompt: &str, size: usize, seed: u64) -> Result<RasterImage> {
        let _ = (prompt, size, seed);
        Err(Error::UnavailableSource(format!("provider {} cannot sample images", self.name())))
    }

    /// The provider's authoritative schedule, when it advertises one.
    fn schedule(&self) -> Option<NoiseSchedule> {
        None
    }
}

/// Standard-normal noise of length `len`, reproducible from `seed`.
pub fn noise_from_seed(seed: u64, len: usize) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..len).map(|_| rng.sample(StandardNormal)).collect()
}

/// Seeded smooth procedural image: a few low-frequency sinusoids per
/// channel around mid-grey. Values stay in `[0,1]`.
pub fn procedural_image(size: usize, seed: u64) -> Result<RasterImage> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let waves: Vec<[(f64, f64, f64, f64); 3]> = (0..3)
        .map(|_| {
            std::array::from_fn(|_| {
                (
                    rng.gen_range(0.05..0.16),
                    rng.gen_range(-2.0..2.0),
                    rng.gen_range(-2.0..2.0),
                    rng.gen_range(0.0..std::f64::consts::TAU),
                )
            })
        })
        .collect();
    RasterImage::from_fn(size, size, |p| {
        std::array::from_fn(|c| {
            let v: f64 = waves[c]
                .iter()
                .map(|&(amp, fx, fy, phase)| amp * (std::f64::consts::TAU * (fx * p.x + fy * p.y) + phase).sin())
                .sum();
            (0.5 + v).clamp(0.0, 1.0)
        })
    })
}

/// Returns exactly the injected noise, so `ε̂ − ε = 0`.
#[derive(Debug, Clone, Default)]
pub struct StubProvider;

impl GuidanceProvider for StubProvider {
    fn name(&self) -> &str {
        "stub"
    }

    fn predict_eps(&self, req: &GuidanceRequest) -> Result<GuidanceResponse> {
        req.validate()?;
        let start = Instant::now();
        let eps_hat = noise_from_seed(req.seed, req.image.data().len());
        Ok(GuidanceResponse {
            eps_hat,
            meta: ProviderMeta {
                model_id: "stub".into(),
                latency_ms: start.elapsed().as_secs_f64() * 1e3,
                timestep_index: None,
            },
        })
    }

    fn sample(&self, _prompt: &str, size: usize, seed: u64) -> Result<RasterImage> {
        procedural_image(size, seed)
    }
}

/// Offline stand-in for a diffusion model that "prefers" one fixed image.
///
/// It answers `ε̂ = ε + c·(α_t/σ_t)·(x̂₀ − ẑ)` with `x̂₀ = (z_t − σ_t ε)/α_t`,
/// so the distillation residual is proportional to `g − ẑ` and score
/// distillation becomes scaled L2 descent toward `ẑ`.
#[derive(Debug, Clone)]
pub struct ReconstructionOracle {
    target: RasterImage,
    schedule: NoiseSchedule,
    strength: f64,
}

impl ReconstructionOracle {
    pub fn new(target: RasterImage, schedule: NoiseSchedule, strength: f64) -> Self {
        Self {
            target,
            schedule,
            strength,
        }
    }

    pub fn target(&self) -> &RasterImage {
        &self.target
    }
}

impl GuidanceProvider for ReconstructionOracle {
    fn name(&self) -> &str {
        "oracle"
    }

    fn predict_eps(&self, req: &GuidanceRequest) -> Result<GuidanceResponse> {
        req.validate()?;
        if !req.image.same_shape(&self.target) {
            return Err(Error::Guidance(format!(
                "oracle target is {}×{} but request is {}×{}",
                self.target.width(),
                self.target.height(),
                req.image.width(),
                req.image.height()
            )));
        }
        let start = Instant::now();
        let (alpha, sigma) = self.schedule.coefficients(req.t);
        let eps = noise_from_seed(req.seed, req.image.data().len());
        let gain = self.strength * alpha / sigma;
        let eps_hat = req
            .image
            .data()
            .iter()
            .zip(&eps)
            .zip(self.target.data())
            .map(|((&z, &e), &target)| {
                let denoised = (z - sigma * e) / alpha;
                e + gain * (denoised - target)
            })
            .collect();
        Ok(GuidanceResponse {
            eps_hat,
            meta: ProviderMeta {
                model_id: "reconstruction-oracle".into(),
                latency_ms: start.elapsed().as_secs_f64() * 1e3,
                timestep_index: Some(self.schedule.index(req.t)),
            },
        })
    }

    fn sample(&self, _prompt: &str, size: usize, _seed: u64) -> Result<RasterImage> {
        if size == self.target.width() && size == self.target.height() {
            Ok(self.target.clone())
        } else {
            self.target.resample_nearest(size, size)
        }
    }

    fn schedule(&self) -> Option<NoiseSchedule> {
        Some(self.schedule.clone())
    }
}
