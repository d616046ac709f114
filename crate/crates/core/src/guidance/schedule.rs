use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::RasterImage;

/// Discrete DDPM noise schedule with `ᾱ_t = ∏_{i≤t}(1−β_i)`.
///
/// Continuous timesteps `t ∈ [0,1]` map to the nearest table index.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseSchedule {
    alpha_bar: Vec<f64>,
    beta_start: f64,
    beta_end: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScheduleSpec {
    #[serde(rename = "T")]
    pub steps: usize,
    pub beta_start: f64,
    pub beta_end: f64,
}

impl Default for ScheduleSpec {
    fn default() -> Self {
        Self {
            steps: 1000,
            beta_start: 1e-4,
            beta_end: 0.02,
        }
    }
}

/// How the distillation residual is weighted per timestep.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum WeightMode {
    /// `w(t) = σ_t²`.
    #[default]
    SigmaSquared,
    /// `w(t) = 1`.
    Constant,
}

impl NoiseSchedule {
    /// Linear β ramp from `beta_start` to `beta_end` over `steps` entries.
    pub fn linear(steps: usize, beta_start: f64, beta_end: f64) -> Result<Self> {
        if steps < 2 {
            return Err(Error::Config(format!("schedule needs at least 2 steps, got {steps}")));
        }
        if !(0.0 < beta_start && beta_start < beta_end && beta_end < 1.0) {
            return Err(Error::Config(format!(
                "need 0 < beta_start < beta_end < 1, got {beta_start} and {beta_end}"
            )));
        }
        let mut alpha_bar = Vec::with_capacity(steps);
        let mut acc = 1.0;
        for i in 0..steps {
            let beta = beta_start + (beta_end - beta_start) * i as f64 / (steps - 1) as f64;
            acc *= 1.0 - beta;
            alpha_bar.push(acc);
        }
        Ok(Self {
            alpha_bar,
            beta_start,
            beta_end,
        })
    }

    pub fn from_spec(spec: ScheduleSpec) -> Result<Self> {
        Self::linear(spec.steps, spec.beta_start, spec.beta_end)
    }

    pub fn spec(&self) -> ScheduleSpec {
        ScheduleSpec {
            steps: self.alpha_bar.len(),
            beta_start: self.beta_start,
            beta_end: self.beta_end,
        }
    }

    pub fn steps(&self) -> usize {
        self.alpha_bar.len()
    }

    pub fn alpha_bar(&self) -> &[f64] {
        &self.alpha_bar
    }

    /// Nearest table index for a continuous timestep.
    pub fn index(&self, t: f64) -> usize {
        let last = self.alpha_bar.len() - 1;
        ((t.clamp(0.0, 1.0) * last as f64).round() as usize).min(last)
    }

    /// `(α_t, σ_t)` with `α_t = √ᾱ_t`, `σ_t = √(1−ᾱ_t)`.
    pub fn coefficients(&self, t: f64) -> (f64, f64) {
        let ab = self.alpha_bar[self.index(t)];
        (ab.sqrt(), (1.0 - ab).sqrt())
    }

    pub fn weight(&self, t: f64, mode: WeightMode) -> f64 {
        match mode {
            WeightMode::SigmaSquared => {
                let (_, sigma) = self.coefficients(t);
                sigma * sigma
            }
            WeightMode::Constant => 1.0,
        }
    }
}

impl Default for NoiseSchedule {
    fn default() -> Self {
        Self::from_spec(ScheduleSpec::default()).expect("default schedule is valid")
    }
}

/// Forward-diffuses `image` to timestep `t`: `z_t = α_t·image + σ_t·noise`.
pub fn perturb(image: &RasterImage, schedule: &NoiseSchedule, t: f64, noise: &[f64]) -> Result<RasterImage> {
    if noise.len() != image.data().len() {
        return Err(Error::DimensionMismatch(format!(
            "noise has {} values, image {}",
            noise.len(),
            image.data().len()
        )));
    }
    let (alpha, sigma) = schedule.coefficients(t);
    let data = image.data().iter().zip(noise).map(|(x, e)| alpha * x + sigma * e).collect();
    RasterImage::new(image.width(), image.height(), data)
}
