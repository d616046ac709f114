//! Score-distillation steps.
//!
//! The distillation gradient injects `w(t)·(ε̂ − ε)` as the cotangent of the
//! rendered image and backpropagates it through the renderer; the
//! denoiser's own Jacobian is never formed.

use rand::Rng;

use super::grad::{self, GradientBundle};
use super::sampling::sample_jittered_grid;
use super::stages::RgbGenerator;
use super::TrainConfig;
use crate::compositor::Palette;
use crate::error::{Error, Result};
use crate::field::{FieldParams, MlpGrad};
use crate::guidance::{noise_from_seed, perturb, GuidanceProvider, GuidanceRequest, NoiseSchedule};
use crate::raster::RasterImage;

/// Per-image distillation residual `w(t)·(ε̂ − ε)`.
#[derive(Debug, Clone)]
pub struct Residual {
    pub adjoint: Vec<f64>,
    pub t: f64,
    pub seed: u64,
}

impl Residual {
    pub fn mean_square(&self) -> f64 {
        self.adjoint.iter().map(|v| v * v).sum::<f64>() / self.adjoint.len().max(1) as f64
    }
}

/// Draws `t` and the noise seed from `rng`, perturbs `render`, queries the
/// provider and returns the weighted residual.
pub fn distillation_residual<R: Rng + ?Sized>(
    render: &RasterImage,
    guidance: &dyn GuidanceProvider,
    schedule: &NoiseSchedule,
    prompt: &str,
    cfg: &TrainConfig,
    rng: &mut R,
) -> Result<Residual> {
    let t = rng.gen_range(cfg.t_min..cfg.t_max);
    let seed: u64 = rng.gen();
    let eps = noise_from_seed(seed, render.data().len());
    let req = GuidanceRequest {
        image: perturb(render, schedule, t, &eps)?,
        t,
        prompt: prompt.to_string(),
        guidance_scale: cfg.guidance_scale,
        seed,
    };
    let resp = guidance.predict_eps(&req)?;
    resp.check_against(&req)?;
    let w = schedule.weight(t, cfg.weight_mode);
    let adjoint: Vec<f64> = resp.eps_hat.iter().zip(&eps).map(|(h, e)| w * (h - e)).collect();
    if adjoint.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("distillation residual".into()));
    }
    Ok(Residual { adjoint, t, seed })
}

#[derive(Debug, Clone)]
pub struct SdsOutcome {
    pub grad: GradientBundle,
    pub residuals: Vec<Residual>,
    pub renders: Vec<RasterImage>,
    /// Mean per-pixel entropy over the batch.
    pub entropy: f64,
}

/// One batch of score-distillation gradients for the layered field,
/// averaged over the batch, plus `λ·∇(mean-pixel entropy)`.
pub fn sds_step<R: Rng + ?Sized>(
    params: &FieldParams,
    palette: &Palette,
    guidance: &dyn GuidanceProvider,
    schedule: &NoiseSchedule,
    prompt: &str,
    cfg: &TrainConfig,
    rng: &mut R,
) -> Result<SdsOutcome> {
    let n = cfg.render_size;
    let batch = cfg.batch_size as f64;
    let entropy_weight = cfg.lambda / (n * n) as f64 / batch;
    let mut grad = GradientBundle::zeros(params, palette);
    let mut residuals = Vec::with_capacity(cfg.batch_size);
    let mut renders = Vec::with_capacity(cfg.batch_size);
    let mut entropy = 0.0;
    for _ in 0..cfg.batch_size {
        let points = sample_jittered_grid(n, n, cfg.jitter, rng);
        let fwd = grad::forward(params, palette, &points)?;
        let render = RasterImage::new(n, n, fwd.rgb.clone())?;
        let residual = distillation_residual(&render, guidance, schedule, prompt, cfg, rng)?;
        let adjoint: Vec<f64> = residual.adjoint.iter().map(|v| v / batch).collect();
        grad::backward_into(params, palette, &fwd, &adjoint, entropy_weight, &mut grad)?;
        entropy += fwd.entropy_sum() / (n * n) as f64 / batch;
        residuals.push(residual);
        renders.push(render);
    }
    Ok(SdsOutcome {
        grad,
        residuals,
        renders,
        entropy,
    })
}

/// Score-distillation gradients for the implicit RGB generator.
pub fn sds_step_rgb<R: Rng + ?Sized>(
    generator: &RgbGenerator,
    guidance: &dyn GuidanceProvider,
    schedule: &NoiseSchedule,
    prompt: &str,
    cfg: &TrainConfig,
    rng: &mut R,
) -> Result<(MlpGrad, Vec<Residual>, Vec<RasterImage>)> {
    let n = cfg.render_size;
    let batch = cfg.batch_size as f64;
    let mut grad = MlpGrad::zeros_like(&generator.net);
    let mut residuals = Vec::with_capacity(cfg.batch_size);
    let mut renders = Vec::with_capacity(cfg.batch_size);
    for _ in 0..cfg.batch_size {
        let points = sample_jittered_grid(n, n, cfg.jitter, rng);
        let (cache, rgb) = generator.forward_cached(&points);
        let render = RasterImage::new(n, n, rgb)?;
        let residual = distillation_residual(&render, guidance, schedule, prompt, cfg, rng)?;
        let adjoint: Vec<f64> = residual.adjoint.iter().map(|v| v / batch).collect();
        generator.backward_into(&cache, render.data(), &adjoint, &mut grad)?;
        residuals.push(residual);
        renders.push(render);
    }
    Ok((grad, residuals, renders))
}
