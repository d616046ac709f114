//! Conversion of implicit layers into layered cubic-Bézier SVG.
//!
//! Each layer is sampled on an `n × n` grid, traced at the 0.5 iso-level with
//! marching squares, fitted with closed cubic Bézier paths and emitted as one
//! even-odd `<path>` per layer. Layers whose occupancy never reaches the
//! discard threshold are dropped.

mod bezier;
mod contour;
mod svg;

pub use bezier::{fit_beziers, fit_beziers_with, fit_open, BezierPath, CubicSegment, DEFAULT_CORNER_ANGLE_DEG};
pub use contour::{
    marching_squares, marching_squares_with, sample_grid, sample_grids, Contour, ContourSet, ScalarGrid, DEFAULT_ISO,
    MIN_GRID,
};
pub use svg::{
    emit_svg, hex_color, iou, rasterize_masks, rasterize_paths, read_svg, LayeredVectorDoc, SvgStyle, VectorLayer,
};

use crate::compositor::{check_layers, Palette};
use crate::error::{Error, Result};
use crate::field::OccupancyField;

pub const DEFAULT_GRID: usize = 2048;
pub const DEFAULT_DISCARD_THRESHOLD: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExtractOptions {
    pub n: usize,
    pub iso: f64,
    /// Fit tolerance in unit-square units; `None` means `2/n`.
    pub tol: Option<f64>,
    pub corner_angle_deg: f64,
    pub discard_threshold: f64,
}

impl Default for ExtractOptions {
    fn default() -> Self {
        Self {
            n: DEFAULT_GRID,
            iso: DEFAULT_ISO,
            tol: None,
            corner_angle_deg: DEFAULT_CORNER_ANGLE_DEG,
            discard_threshold: DEFAULT_DISCARD_THRESHOLD,
        }
    }
}

impl ExtractOptions {
    pub fn with_grid(n: usize) -> Self {
        Self { n, ..Self::default() }
    }

    pub fn tolerance(&self) -> f64 {
        self.tol.unwrap_or(2.0 / self.n as f64)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < MIN_GRID {
            return Err(Error::Config(format!("grid resolution {} is below {MIN_GRID}", self.n)));
        }
        if !(self.iso > 0.0 && self.iso < 1.0) {
            return Err(Error::Config(format!("iso-level {} outside (0,1)", self.iso)));
        }
        if !(self.discard_threshold > 0.0 && self.discard_threshold < 1.0) {
            return Err(Error::Config(format!("discard threshold {} outside (0,1)", self.discard_threshold)));
        }
        if !(self.tolerance() > 0.0) {
            return Err(Error::Config("fit tolerance must be positive".into()));
        }
        Ok(())
    }
}

fn kept(grids: &[ScalarGrid], threshold: f64) -> Vec<usize> {
    grids.iter().enumerate().filter(|(_, g)| g.max() >= threshold).map(|(i, _)| i).collect()
}

/// Indices of layers whose occupancy reaches `threshold` somewhere on the grid.
pub fn discard_empty_layers<F: OccupancyField + ?Sized>(field: &F, n: usize, threshold: f64) -> Result<Vec<usize>> {
    if !(threshold > 0.0 && threshold < 1.0) {
        return Err(Error::Config(format!("discard threshold {threshold} outside (0,1)")));
    }
    Ok(kept(&sample_grids(field, n)?, threshold))
}

/// Iso-contours of every layer, front-most first.
pub fn extract_contours<F: OccupancyField + ?Sized>(field: &F, n: usize, iso: f64) -> Result<Vec<ContourSet>> {
    let grids = sample_grids(field, n)?;
    Ok(trace(field, &grids, iso))
}

fn trace<F: OccupancyField + ?Sized>(field: &F, grids: &[ScalarGrid], iso: f64) -> Vec<ContourSet> {
    let mut s = vec![0.0; field.layer_count()];
    let mut out = Vec::with_capacity(grids.len());
    for (l, grid) in grids.iter().enumerate() {
        out.push(marching_squares_with(grid, iso, |p| {
            field.occupancy_into(p, &mut s);
            s[l]
        }));
    }
    out
}

/// Full conversion: sample, discard empty layers, trace, fit.
pub fn extract<F: OccupancyField + ?Sized>(
    field: &F,
    palette: &Palette,
    opts: &ExtractOptions,
) -> Result<LayeredVectorDoc> {
    opts.validate()?;
    check_layers(field, palette)?;
    let tol = opts.tolerance();
    let grids = sample_grids(field, opts.n)?;
    let keep = kept(&grids, opts.discard_threshold);
    let mut s = vec![0.0; field.layer_count()];
    let mut layers = Vec::with_capacity(keep.len());
    for l in keep {
        let set = marching_squares_with(&grids[l], opts.iso, |p| {
            field.occupancy_into(p, &mut s);
            s[l]
        });
        let paths = set
            .contours
            .iter()
            .map(|c| fit_beziers_with(&c.points, tol, opts.corner_angle_deg))
            .collect::<Result<Vec<_>>>()?;
        layers.push(VectorLayer {
            index: l,
            paths,
            fill: palette.colors[l],
        });
    }
    Ok(LayeredVectorDoc {
        layers,
        background: palette.background(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::{FieldParams, ModelVariant, Point2};
    use crate::fixtures::AnalyticField;

    #[test]
    fn zero_model_grid_is_half() {
        let f = FieldParams::zeros(ModelVariant::Small.architecture(2)).unwrap();
        let g = sample_grid(&f, 1, 16).unwrap();
        assert!(g.values().iter().all(|&v| v == 0.5));
    }

    #[test]
    fn collapsed_layers_are_discarded() {
        let f = AnalyticField::collapsed();
        let pal = AnalyticField::palette_for(5);
        let kept = discard_empty_layers(&f, 64, 0.05).unwrap();
        assert_eq!(kept.len(), 3);
        let doc = extract(&f, &pal, &ExtractOptions::with_grid(64)).unwrap();
        assert_eq!(doc.layers.len(), 3);
        assert_eq!(doc.layers.iter().map(|l| l.index).collect::<Vec<_>>(), kept);
    }

    #[test]
    fn blob_layer_is_kept() {
        let f = AnalyticField::single(crate::fixtures::Shape::Disk {
            center: Point2::new(0.5, 0.5),
            radius: 0.1,
        });
        assert_eq!(discard_empty_layers(&f, 32, 0.05).unwrap(), vec![0]);
    }

    #[test]
    fn disk_round_trip_iou() {
        let f = AnalyticField::disk();
        let pal = AnalyticField::palette_for(1);
        let opts = ExtractOptions {
            tol: Some(0.5 / 128.0),
            ..ExtractOptions::with_grid(128)
        };
        let doc = extract(&f, &pal, &opts).unwrap();
        let masks = rasterize_masks(&doc, 128).unwrap();
        let grid = sample_grid(&f, 0, 128).unwrap();
        let truth: Vec<bool> = grid.values().iter().map(|&v| v >= 0.5).collect();
        assert!(iou(&masks[0], &truth) >= 0.98);
    }

    #[test]
    fn options_validate() {
        assert!(ExtractOptions::with_grid(4).validate().is_err());
        assert!(ExtractOptions {
            iso: 1.0,
            ..Default::default()
        }
        .validate()
        .is_err());
        assert_eq!(ExtractOptions::with_grid(256).tolerance(), 2.0 / 256.0);
    }
}
