use serde::Serialize;

use crate::compositor::Palette;
use crate::error::Result;
use crate::field::FieldParams;
use crate::raster::RasterImage;

/// One line of the metrics log.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StepRecord {
    pub stage: &'static str,
    pub iteration: u64,
    /// Optimized objective (reconstruction) or mean squared residual (distillation).
    pub loss: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub l2: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub entropy: Option<f64>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub t: Vec<f64>,
    pub grad_norm_mlp: f64,
    pub grad_norm_color: f64,
}

/// Receives progress from the training stages.
pub trait TrainObserver {
    fn on_step(&mut self, _record: &StepRecord) -> Result<()> {
        Ok(())
    }

    fn on_snapshot(&mut self, _iteration: u64, _render: &RasterImage, _gradient: &RasterImage) -> Result<()> {
        Ok(())
    }

    fn on_checkpoint(&mut self, _stage: &str, _iteration: u64, _field: &FieldParams, _palette: &Palette) -> Result<()> {
        Ok(())
    }

    /// Called with the last finite state before a stage aborts on NaN.
    fn on_abort(&mut self, _stage: &str, _iteration: u64, _field: &FieldParams, _palette: &Palette) -> Result<()> {
        Ok(())
    }
}

#[derive(Debug, Default, Clone, Copy)]
pub struct NullObserver;

impl TrainObserver for NullObserver {}

/// Maps a per-pixel residual image affinely to `[0,1]` per channel.
/// A channel with zero range maps to 0.5.
pub fn grad_snapshot(residual: &[f64], width: usize, height: usize) -> Result<RasterImage> {
    let mut lo = [f64::INFINITY; 3];
    let mut hi = [f64::NEG_INFINITY; 3];
    for px in residual.chunks_exact(3) {
        for c in 0..3 {
            lo[c] = lo[c].min(px[c]);
            hi[c] = hi[c].max(px[c]);
        }
    }
    let data = residual
        .chunks_exact(3)
        .flat_map(|px| {
            std::array::from_fn::<f64, 3, _>(|c| {
                let range = hi[c] - lo[c];
                if range > 0.0 {
                    (px[c] - lo[c]) / range
                } else {
                    0.5
                }
            })
        })
        .collect();
    RasterImage::new(width, height, data)
}
