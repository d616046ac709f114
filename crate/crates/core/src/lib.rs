//! Layered neural implicit vector graphics.
//!
//! An image is a stack of `L` occupancy layers produced by one small
//! positional-encoded MLP, composited front to back over a background with
//! one flat color per layer. The crate covers the full loop:
//!
//! - [`field`]: the implicit field and its reverse-mode gradients;
//! - [`compositor`]: mixing coefficients, compositing, rendering, entropy;
//! - [`training`]: reconstruction and score-distillation losses, AdamW and
//!   the initialization / distillation / fine-tuning stages;
//! - [`guidance`]: noise schedule and the pluggable noise-prediction providers;
//! - [`extraction`]: marching squares, cubic Bézier fitting and SVG output;
//! - [`checkpoint`]: the `.nivel.json` parameter format.

pub mod checkpoint;
pub mod cli;
pub mod compositor;
pub mod error;
pub mod extraction;
pub mod field;
pub mod fixtures;
pub mod guidance;
pub mod raster;
pub mod training;

pub use checkpoint::{Checkpoint, CheckpointMeta};
pub use compositor::{Palette, Rgb};
pub use error::{Error, Result};
pub use field::{FieldParams, ModelVariant, OccupancyField, Point2};
pub use raster::RasterImage;
