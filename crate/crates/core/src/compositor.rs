//! Front-to-back layer compositing.
//!
//! Layer 1 is front-most. At a point with occupancies `s`, layer `l` shows
//! through with weight `k_l = s_l·∏_{m<l}(1−s_m)` and the background gets
//! the remainder `k_{L+1} = ∏_{m≤L}(1−s_m)`. The pixel color is the convex
//! combination `Σ k_l·c_l`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{OccupancyField, Point2};
use crate::raster::RasterImage;

pub type Rgb = [f64; 3];

/// Clamp floor for `k` inside the entropy logarithm.
pub const ENTROPY_EPS: f64 = 1e-8;

/// `L+1` colors; the last entry is the background.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Palette {
    pub colors: Vec<Rgb>,
}

impl Palette {
    pub fn new(colors: Vec<Rgb>) -> Result<Self> {
        let p = Self { colors };
        p.validate()?;
        Ok(p)
    }

    /// `layers` colors followed by the background.
    pub fn with_background(layers: Vec<Rgb>, background: Rgb) -> Result<Self> {
        let mut colors = layers;
        colors.push(background);
        Self::new(colors)
    }

    pub fn uniform<R: Rng + ?Sized>(layers: usize, rng: &mut R) -> Self {
        Self {
            colors: (0..=layers).map(|_| [rng.gen(), rng.gen(), rng.gen()]).collect(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.colors.len() < 2 {
            return Err(Error::DimensionMismatch(format!(
                "palette needs at least one layer color plus background, got {}",
                self.colors.len()
            )));
        }
        if self.colors.iter().flatten().any(|c| !(0.0..=1.0).contains(c)) {
            return Err(Error::Invariant("palette component outside [0,1]".into()));
        }
        Ok(())
    }

    /// Number of shape layers (excludes the background).
    pub fn layers(&self) -> usize {
        self.colors.len() - 1
    }

    pub fn background(&self) -> Rgb {
        *self.colors.last().expect("palette is never empty")
    }

    pub fn clamp(&mut self) {
        for c in self.colors.iter_mut().flatten() {
            *c = c.clamp(0.0, 1.0);
        }
    }

    pub fn flat(&self) -> Vec<f64> {
        self.colors.iter().flatten().copied().collect()
    }
}

/// Per-point weights on the `L+1` simplex.
#[derive(Debug, Clone, PartialEq)]
pub struct MixingCoefficients {
    pub k: Vec<f64>,
}

/// Writes `L+1` mixing coefficients for occupancies `s` into `k`.
pub fn mixing_into(s: &[f64], k: &mut [f64]) {
    debug_assert_eq!(k.len(), s.len() + 1);
    let mut transmit = 1.0;
    for (kl, &sl) in k.iter_mut().zip(s) {
        *kl = sl * transmit;
        transmit *= 1.0 - sl;
    }
    k[s.len()] = transmit;
}

pub fn mixing_coefficients(s: &[f64]) -> MixingCoefficients {
    let mut k = vec![0.0; s.len() + 1];
    mixing_into(s, &mut k);
    MixingCoefficients { k }
}

/// Pulls `dL/dk` back to `dL/ds` through the occlusion chain, including the
/// cross terms `∂k_l/∂s_m` for `m < l`. Writes into `ds` (length `L`).
pub fn mixing_backward(s: &[f64], dk: &[f64], ds: &mut [f64]) {
    let l = s.len();
    debug_assert_eq!(dk.len(), l + 1);
    // ds[m] first holds the transmittance P_m = ∏_{n<m}(1−s_n).
    let mut trans = 1.0;
    for m in 0..l {
        ds[m] = trans;
        trans *= 1.0 - s[m];
    }
    // Reverse sweep over k_m = s_m·P_m, P_{m+1} = P_m·(1−s_m).
    let mut d_trans = dk[l];
    for m in (0..l).rev() {
        let p = ds[m];
        ds[m] = (dk[m] - d_trans) * p;
        d_trans = dk[m] * s[m] + d_trans * (1.0 - s[m]);
    }
}

pub fn composite(k: &MixingCoefficients, palette: &Palette) -> Result<Rgb> {
    if k.k.len() != palette.colors.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} mixing coefficients for {} palette entries",
            k.k.len(),
            palette.colors.len()
        )));
    }
    Ok(composite_slice(&k.k, &palette.colors))
}

#[inline]
pub fn composite_slice(k: &[f64], colors: &[Rgb]) -> Rgb {
    let mut out = [0.0; 3];
    for (&kl, c) in k.iter().zip(colors) {
        for ch in 0..3 {
            out[ch] += kl * c[ch];
        }
    }
    out
}

/// `−Σ k̃ log k̃` over all `L+1` coefficients, with `k̃ = clamp(k, ε, 1)`.
pub fn entropy(k: &[f64]) -> f64 {
    k.iter()
        .map(|&v| {
            let c = v.clamp(ENTROPY_EPS, 1.0);
            -c * c.ln()
        })
        .sum()
}

/// `∂entropy/∂k_l`, zero where the clamp is active.
pub fn entropy_grad_into(k: &[f64], weight: f64, dk: &mut [f64]) {
    for (d, &v) in dk.iter_mut().zip(k) {
        if v > ENTROPY_EPS && v < 1.0 {
            *d += -weight * (v.ln() + 1.0);
        }
    }
}

/// Composited color of any occupancy field at one point.
pub fn shade<F: OccupancyField + ?Sized>(field: &F, palette: &Palette, p: Point2, s: &mut [f64], k: &mut [f64]) -> Rgb {
    field.occupancy_into(p, s);
    mixing_into(s, k);
    composite_slice(k, &palette.colors)
}

/// Renders the field at pixel centers.
pub fn render<F: OccupancyField + ?Sized>(
    field: &F,
    palette: &Palette,
    width: usize,
    height: usize,
) -> Result<RasterImage> {
    if width == 0 || height == 0 {
        return Err(Error::Image(format!("nonpositive render size {width}×{height}")));
    }
    check_layers(field, palette)?;
    let l = field.layer_count();
    let mut s = vec![0.0; l];
    let mut k = vec![0.0; l + 1];
    RasterImage::from_fn(width, height, |p| shade(field, palette, p, &mut s, &mut k))
}

pub(crate) fn check_layers<F: OccupancyField + ?Sized>(field: &F, palette: &Palette) -> Result<()> {
    if field.layer_count() != palette.layers() {
        return Err(Error::DimensionMismatch(format!(
            "field has {} layers but palette colors {}",
            field.layer_count(),
            palette.layers()
        )));
    }
    Ok(())
}

/// Mixing coefficients at every pixel center, `H·W × (L+1)` row-major.
pub fn mixing_grid<F: OccupancyField + ?Sized>(field: &F, width: usize, height: usize) -> Vec<f64> {
    let l = field.layer_count();
    let mut s = vec![0.0; l];
    let mut out = vec![0.0; width * height * (l + 1)];
    for i in 0..height {
        for j in 0..width {
            field.occupancy_into(Point2::pixel_center(i, j, width, height), &mut s);
            let o = (i * width + j) * (l + 1);
            mixing_into(&s, &mut out[o..o + l + 1]);
        }
    }
    out
}

/// Fraction of pixels whose dominant mixing coefficient lies in `(lo, hi)`.
pub fn uncertain_fraction(k_grid: &[f64], stride: usize, lo: f64, hi: f64) -> f64 {
    let n = k_grid.len() / stride;
    let uncertain = k_grid
        .chunks_exact(stride)
        .filter(|k| {
            let m = k.iter().copied().fold(f64::MIN, f64::max);
            m > lo && m < hi
        })
        .count();
    uncertain as f64 / n as f64
}
