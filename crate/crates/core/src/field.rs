//! Positional-encoded MLP implicit field.
//!
//! A point of the unit square is lifted to `4·F` sinusoids and pushed through
//! a small fully connected network with LeakyReLU activations and identity
//! skips around the interior hidden layers. The output head applies a
//! per-channel sigmoid, so each of the `L` outputs is an occupancy
//! probability for one layer of the stack.
//!
//! Weights are stored `fan_in × fan_out`, row-major: the weight connecting
//! input `i` to output `o` lives at `w[i * fan_out + o]`.

use std::f64::consts::PI;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A query point. Nominally inside `[0,1]²`; jittered samples near the
/// border may leave it slightly before clamping, and encoding accepts them.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point2 {
    pub x: f64,
    pub y: f64,
}

impl Point2 {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    /// Center of pixel `(row, col)` in a `width × height` raster.
    pub fn pixel_center(row: usize, col: usize, width: usize, height: usize) -> Self {
        Self {
            x: (col as f64 + 0.5) / width as f64,
            y: (row as f64 + 0.5) / height as f64,
        }
    }

    pub fn in_unit_square(&self) -> bool {
        (0.0..=1.0).contains(&self.x) && (0.0..=1.0).contains(&self.y)
    }
}

/// Number of dyadic frequency octaves used by the positional encoding.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EncodingConfig {
    pub octaves: usize,
}

impl EncodingConfig {
    pub fn new(octaves: usize) -> Result<Self> {
        if octaves == 0 {
            return Err(Error::Config("encoding needs at least one octave".into()));
        }
        Ok(Self { octaves })
    }

    /// Encoded dimension: sin and cos of both coordinates at every octave.
    pub fn dim(&self) -> usize {
        4 * self.octaves
    }
}

/// Writes the encoding of `p` into `out` (length `4·F`).
///
/// Layout: `[sin(2⁰πx) … sin(2^{F-1}πx), sin(2⁰πy) … sin(2^{F-1}πy),
/// cos(2⁰πx) … cos(2^{F-1}πx), cos(2⁰πy) … cos(2^{F-1}πy)]`.
/// This order is part of the checkpoint format.
pub fn encode_into(p: Point2, cfg: EncodingConfig, out: &mut [f64]) {
    let f = cfg.octaves;
    debug_assert_eq!(out.len(), 4 * f);
    let mut freq = PI;
    for o in 0..f {
        let (sx, cx) = (freq * p.x).sin_cos();
        let (sy, cy) = (freq * p.y).sin_cos();
        out[o] = sx;
        out[f + o] = sy;
        out[2 * f + o] = cx;
        out[3 * f + o] = cy;
        freq *= 2.0;
    }
}

pub fn encode(p: Point2, cfg: EncodingConfig) -> Vec<f64> {
    let mut out = vec![0.0; cfg.dim()];
    encode_into(p, cfg, &mut out);
    out
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Shape of a positional-encoded MLP.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Architecture {
    /// Total number of fully connected layers, including the output head.
    pub depth: usize,
    /// Hidden nodes per layer.
    pub width: usize,
    /// Output channels (`L` for occupancy fields, 3 for RGB generators).
    pub outputs: usize,
    pub encoding: EncodingConfig,
    pub leaky_slope: f64,
}

pub const DEFAULT_LEAKY_SLOPE: f64 = 0.01;

/// The two published model cards.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelVariant {
    /// 64 hidden nodes, 4 layers, 6 octaves.
    #[serde(rename = "12k")]
    Large,
    /// 32 hidden nodes, 3 layers, 2 octaves.
    #[serde(rename = "1k")]
    Small,
}

impl ModelVariant {
    pub fn architecture(self, layers: usize) -> Architecture {
        let (width, depth, octaves) = match self {
            ModelVariant::Large => (64, 4, 6),
            ModelVariant::Small => (32, 3, 2),
        };
        Architecture {
            depth,
            width,
            outputs: layers,
            encoding: EncodingConfig { octaves },
            leaky_slope: DEFAULT_LEAKY_SLOPE,
        }
    }

    pub fn mlp_learning_rate(self) -> f64 {
        match self {
            ModelVariant::Large => 1e-2,
            ModelVariant::Small => 1e-3,
        }
    }
}

impl Architecture {
    pub fn validate(&self) -> Result<()> {
        if self.depth == 0 {
            return Err(Error::Config("depth must be at least 1".into()));
        }
        if self.outputs == 0 {
            return Err(Error::Config("output count must be at least 1".into()));
        }
        if self.depth > 1 && self.width == 0 {
            return Err(Error::Config("hidden width must be positive".into()));
        }
        if self.encoding.octaves == 0 {
            return Err(Error::Config("encoding needs at least one octave".into()));
        }
        if !self.leaky_slope.is_finite() {
            return Err(Error::Config("leaky slope must be finite".into()));
        }
        Ok(())
    }

    /// `(fan_in, fan_out)` of every layer, input to output.
    pub fn layer_dims(&self) -> Vec<(usize, usize)> {
        let enc = self.encoding.dim();
        if self.depth == 1 {
            return vec![(enc, self.outputs)];
        }
        let mut dims = vec![(enc, self.width)];
        for _ in 1..self.depth - 1 {
            dims.push((self.width, self.width));
        }
        dims.push((self.width, self.outputs));
        dims
    }

    pub fn param_count(&self) -> usize {
        self.layer_dims().iter().map(|(i, o)| i * o + o).sum()
    }
}

/// Network weights. Shared by the occupancy field and the RGB generator.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    pub arch: Architecture,
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<Vec<f64>>,
}

impl Mlp {
    pub fn zeros(arch: Architecture) -> Result<Self> {
        arch.validate()?;
        let dims = arch.layer_dims();
        Ok(Self {
            arch,
            weights: dims.iter().map(|(i, o)| vec![0.0; i * o]).collect(),
            biases: dims.iter().map(|&(_, o)| vec![0.0; o]).collect(),
        })
    }

    /// Uniform `±√(6/fan_in)` weights, zero biases.
    pub fn init_uniform<R: Rng + ?Sized>(arch: Architecture, rng: &mut R) -> Result<Self> {
        let mut mlp = Self::zeros(arch)?;
        for (w, (fan_in, _)) in mlp.weights.iter_mut().zip(arch.layer_dims()) {
            let bound = (6.0 / fan_in as f64).sqrt();
            for v in w.iter_mut() {
                *v = rng.gen_range(-bound..=bound);
            }
        }
        Ok(mlp)
    }

    pub fn layer_count(&self) -> usize {
        self.weights.len()
    }

    pub fn param_count(&self) -> usize {
        self.weights.iter().map(Vec::len).sum::<usize>() + self.biases.iter().map(Vec::len).sum::<usize>()
    }

    /// Checks that stored tensors agree with the architecture and are finite.
    pub fn validate(&self) -> Result<()> {
        self.arch.validate()?;
        let dims = self.arch.layer_dims();
        if self.weights.len() != dims.len() || self.biases.len() != dims.len() {
            return Err(Error::DimensionMismatch(format!(
                "expected {} layers, found {} weight and {} bias tensors",
                dims.len(),
                self.weights.len(),
                self.biases.len()
            )));
        }
        for (k, (&(fi, fo), (w, b))) in dims.iter().zip(self.weights.iter().zip(&self.biases)).enumerate() {
            if w.len() != fi * fo {
                return Err(Error::DimensionMismatch(format!(
                    "layer {k}: weight length {} but fan_in×fan_out = {fi}×{fo}",
                    w.len()
                )));
            }
            if b.len() != fo {
                return Err(Error::DimensionMismatch(format!(
                    "layer {k}: bias length {} but fan_out = {fo}",
                    b.len()
                )));
            }
            if w.iter().chain(b.iter()).any(|v| !v.is_finite()) {
                return Err(Error::NonFinite(format!("layer {k} parameters")));
            }
        }
        Ok(())
    }

    /// Scratch buffers sized for single-point evaluation.
    pub fn scratch(&self) -> Scratch {
        let width = self.arch.layer_dims().iter().map(|&(i, o)| i.max(o)).max().unwrap_or(0);
        Scratch {
            a: vec![0.0; width],
            b: vec![0.0; width],
        }
    }

    /// Raw output logits at one point, written to `out` (length `outputs`).
    pub fn logits_into(&self, p: Point2, scratch: &mut Scratch, out: &mut [f64]) {
        let n = self.weights.len();
        let slope = self.arch.leaky_slope;
        let enc = self.arch.encoding.dim();
        let Scratch { a: cur, b: next } = scratch;
        encode_into(p, self.arch.encoding, &mut cur[..enc]);
        let mut cur_len = enc;
        for k in 0..n {
            let w = &self.weights[k];
            let b = &self.biases[k];
            let fo = b.len();
            let dst: &mut [f64] = if k + 1 == n { &mut *out } else { &mut next[..fo] };
            dst.copy_from_slice(b);
            for (i, &x) in cur[..cur_len].iter().enumerate() {
                if x != 0.0 {
                    let row = &w[i * fo..(i + 1) * fo];
                    for (d, &wv) in dst.iter_mut().zip(row) {
                        *d += x * wv;
                    }
                }
            }
            if k + 1 < n {
                let residual = k > 0;
                for (o, v) in next[..fo].iter_mut().enumerate() {
                    let act = if *v > 0.0 { *v } else { slope * *v };
                    *v = if residual { cur[o] + act } else { act };
                }
                std::mem::swap(cur, next);
                cur_len = fo;
            }
        }
    }

    /// Evaluates a batch keeping every layer input and pre-activation.
    pub fn forward_cached(&self, points: &[Point2]) -> ForwardCache {
        let dims = self.arch.layer_dims();
        let n_layers = dims.len();
        let n_pts = points.len();
        let slope = self.arch.leaky_slope;
        let mut inputs: Vec<Vec<f64>> = dims.iter().map(|&(fi, _)| vec![0.0; n_pts * fi]).collect();
        let mut pre: Vec<Vec<f64>> = dims.iter().map(|&(_, fo)| vec![0.0; n_pts * fo]).collect();
        for (pi, &p) in points.iter().enumerate() {
            let enc = dims[0].0;
            encode_into(p, self.arch.encoding, &mut inputs[0][pi * enc..(pi + 1) * enc]);
            for k in 0..n_layers {
                let (fi, fo) = dims[k];
                let w = &self.weights[k];
                let (x, a) = (&inputs[k][pi * fi..(pi + 1) * fi], &mut pre[k][pi * fo..(pi + 1) * fo]);
                a.copy_from_slice(&self.biases[k]);
                for (i, &xv) in x.iter().enumerate() {
                    if xv != 0.0 {
                        let row = &w[i * fo..(i + 1) * fo];
                        for (d, &wv) in a.iter_mut().zip(row) {
                            *d += xv * wv;
                        }
                    }
                }
                if k + 1 < n_layers {
                    let residual = k > 0;
                    let (lo, hi) = inputs.split_at_mut(k + 1);
                    let x = &lo[k][pi * fi..(pi + 1) * fi];
                    let h = &mut hi[0][pi * fo..(pi + 1) * fo];
                    let a = &pre[k][pi * fo..(pi + 1) * fo];
                    for o in 0..fo {
                        let act = if a[o] > 0.0 { a[o] } else { slope * a[o] };
                        h[o] = if residual { x[o] + act } else { act };
                    }
                }
            }
        }
        ForwardCache {
            points: n_pts,
            dims,
            inputs,
            pre,
        }
    }

    /// Accumulates parameter gradients of `Σ_points ⟨d_logits, logits⟩`
    /// into `grad`. `d_logits` is `points × outputs`, row-major.
    pub fn backward_into(&self, cache: &ForwardCache, d_logits: &[f64], grad: &mut MlpGrad) -> Result<()> {
        let dims = &cache.dims;
        if *dims != self.arch.layer_dims() {
            return Err(Error::MissingCache("cache was produced by a different architecture".into()));
        }
        let n_layers = dims.len();
        let out = dims[n_layers - 1].1;
        if d_logits.len() != cache.points * out {
            return Err(Error::DimensionMismatch(format!(
                "adjoint length {} but cache holds {} points × {} outputs",
                d_logits.len(),
                cache.points,
                out
            )));
        }
        if d_logits.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("output adjoint".into()));
        }
        let slope = self.arch.leaky_slope;
        let max_w = dims.iter().map(|&(i, o)| i.max(o)).max().unwrap_or(0);
        // d_a: dL/d(pre-activation of layer k); dh: dL/d(input of layer k);
        // dh_next: dL/d(input of layer k+1), needed for the identity skip.
        let mut d_a = vec![0.0; max_w];
        let mut dh = vec![0.0; max_w];
        let mut dh_next = vec![0.0; max_w];
        for pi in 0..cache.points {
            d_a[..out].copy_from_slice(&d_logits[pi * out..(pi + 1) * out]);
            for k in (0..n_layers).rev() {
                let (fi, fo) = dims[k];
                let w = &self.weights[k];
                let x = &cache.inputs[k][pi * fi..(pi + 1) * fi];
                for (g, &d) in grad.biases[k].iter_mut().zip(&d_a[..fo]) {
                    *g += d;
                }
                let gw = &mut grad.weights[k];
                let skip = k > 0 && k + 1 < n_layers;
                for i in 0..fi {
                    let row = &w[i * fo..(i + 1) * fo];
                    let grow = &mut gw[i * fo..(i + 1) * fo];
                    let xv = x[i];
                    let mut acc = 0.0;
                    for o in 0..fo {
                        grow[o] += xv * d_a[o];
                        acc += row[o] * d_a[o];
                    }
                    dh[i] = if skip { acc + dh_next[i] } else { acc };
                }
                if k == 0 {
                    break;
                }
                let a_prev = &cache.pre[k - 1][pi * fi..(pi + 1) * fi];
                for i in 0..fi {
                    d_a[i] = if a_prev[i] > 0.0 { dh[i] } else { slope * dh[i] };
                }
                std::mem::swap(&mut dh, &mut dh_next);
            }
        }
        Ok(())
    }

    pub fn backward(&self, cache: &ForwardCache, d_logits: &[f64]) -> Result<MlpGrad> {
        let mut grad = MlpGrad::zeros_like(self);
        self.backward_into(cache, d_logits, &mut grad)?;
        Ok(grad)
    }
}

/// Reusable buffers for [`Mlp::logits_into`].
#[derive(Debug, Clone)]
pub struct Scratch {
    a: Vec<f64>,
    b: Vec<f64>,
}

/// Per-layer inputs and pre-activations retained for the backward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    points: usize,
    dims: Vec<(usize, usize)>,
    inputs: Vec<Vec<f64>>,
    pre: Vec<Vec<f64>>,
}

impl ForwardCache {
    pub fn len(&self) -> usize {
        self.points
    }

    pub fn is_empty(&self) -> bool {
        self.points == 0
    }

    pub fn outputs(&self) -> usize {
        self.dims.last().map_or(0, |d| d.1)
    }

    /// Output-head logits, `points × outputs`.
    pub fn logits(&self) -> &[f64] {
        self.pre.last().map_or(&[], Vec::as_slice)
    }
}

/// Gradient tensors mirroring an [`Mlp`].
#[derive(Debug, Clone, PartialEq)]
pub struct MlpGrad {
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<Vec<f64>>,
}

impl MlpGrad {
    pub fn zeros_like(mlp: &Mlp) -> Self {
        Self {
            weights: mlp.weights.iter().map(|w| vec![0.0; w.len()]).collect(),
            biases: mlp.biases.iter().map(|b| vec![0.0; b.len()]).collect(),
        }
    }

    pub fn add_assign(&mut self, other: &MlpGrad) {
        for (a, b) in self.tensors_mut().into_iter().zip(other.tensors()) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
    }

    pub fn scale(&mut self, factor: f64) {
        for t in self.tensors_mut() {
            t.iter_mut().for_each(|v| *v *= factor);
        }
    }

    pub fn tensors(&self) -> Vec<&[f64]> {
        self.weights.iter().zip(&self.biases).flat_map(|(w, b)| [w.as_slice(), b.as_slice()]).collect()
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        self.weights
            .iter_mut()
            .zip(self.biases.iter_mut())
            .flat_map(|(w, b)| [w.as_mut_slice(), b.as_mut_slice()])
            .collect()
    }
}

impl Mlp {
    /// Parameter tensors in the same order as [`MlpGrad::tensors`].
    pub fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        self.weights
            .iter_mut()
            .zip(self.biases.iter_mut())
            .flat_map(|(w, b)| [w.as_mut_slice(), b.as_mut_slice()])
            .collect()
    }

    pub fn tensors(&self) -> Vec<&[f64]> {
        self.weights.iter().zip(&self.biases).flat_map(|(w, b)| [w.as_slice(), b.as_slice()]).collect()
    }
}

/// Occupancy probabilities of all `L` layers at one point.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerActivations {
    pub s: Vec<f64>,
}

/// Anything that maps a point to `L` per-layer occupancies in `[0,1]`.
///
/// Implemented by the learned [`FieldParams`] and by analytic fixtures, so
/// rendering and contour extraction work on either.
pub trait OccupancyField {
    fn layer_count(&self) -> usize;

    /// Writes `s_1 … s_L` at `p` into `out`.
    fn occupancy_into(&self, p: Point2, out: &mut [f64]);

    fn occupancy(&self, p: Point2) -> Vec<f64> {
        let mut out = vec![0.0; self.layer_count()];
        self.occupancy_into(p, &mut out);
        out
    }
}

/// The learnable occupancy field: an MLP whose `L` outputs pass through a
/// sigmoid.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldParams {
    pub net: Mlp,
}

impl FieldParams {
    pub fn zeros(arch: Architecture) -> Result<Self> {
        Ok(Self { net: Mlp::zeros(arch)? })
    }

    pub fn init_uniform<R: Rng + ?Sized>(arch: Architecture, rng: &mut R) -> Result<Self> {
        Ok(Self {
            net: Mlp::init_uniform(arch, rng)?,
        })
    }

    pub fn arch(&self) -> &Architecture {
        &self.net.arch
    }

    pub fn layers(&self) -> usize {
        self.net.arch.outputs
    }

    pub fn param_count(&self) -> usize {
        self.net.param_count()
    }

    pub fn validate(&self) -> Result<()> {
        self.net.validate()
    }

    /// Evaluates `s` at every point of the batch.
    pub fn field_eval(&self, points: &[Point2]) -> Result<Vec<LayerActivations>> {
        self.validate()?;
        if points.is_empty() {
            return Err(Error::DimensionMismatch("empty point batch".into()));
        }
        let mut scratch = self.net.scratch();
        Ok(points
            .iter()
            .map(|&p| {
                let mut s = vec![0.0; self.layers()];
                self.eval_with(p, &mut scratch, &mut s);
                LayerActivations { s }
            })
            .collect())
    }

    fn eval_with(&self, p: Point2, scratch: &mut Scratch, out: &mut [f64]) {
        self.net.logits_into(p, scratch, out);
        out.iter_mut().for_each(|v| *v = sigmoid(*v));
    }

    /// Forward pass that keeps the cache for [`Mlp::backward_into`].
    /// Returns the cache and `s`, `points × L` row-major.
    pub fn forward_cached(&self, points: &[Point2]) -> (ForwardCache, Vec<f64>) {
        let cache = self.net.forward_cached(points);
        let s = cache.logits().iter().map(|&v| sigmoid(v)).collect();
        (cache, s)
    }
}

impl OccupancyField for FieldParams {
    fn layer_count(&self) -> usize {
        self.layers()
    }

    fn occupancy_into(&self, p: Point2, out: &mut [f64]) {
        let mut scratch = self.net.scratch();
        self.eval_with(p, &mut scratch, out);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
        a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol)
    }

    #[test]
    fn encode_at_origin() {
        let cfg = EncodingConfig::new(2).unwrap();
        assert_eq!(encode(Point2::new(0.0, 0.0), cfg), vec![0.0, 0.0, 0.0, 0.0, 1.0, 1.0, 1.0, 1.0]);
    }

    #[test]
    fn encode_single_octave() {
        let cfg = EncodingConfig::new(1).unwrap();
        let got = encode(Point2::new(0.5, 0.25), cfg);
        let h = std::f64::consts::FRAC_1_SQRT_2;
        assert!(close(&got, &[1.0, h, 0.0, h], 1e-12), "{got:?}");
    }

    #[test]
    fn twelve_k_encoding_dimension() {
        let arch = ModelVariant::Large.architecture(5);
        assert_eq!(arch.encoding.dim(), 24);
    }

    #[test]
    fn zero_octaves_rejected() {
        assert!(EncodingConfig::new(0).is_err());
    }

    #[test]
    fn zero_params_give_half_occupancy() {
        let f = FieldParams::zeros(ModelVariant::Small.architecture(4)).unwrap();
        let pts = [Point2::new(0.1, 0.9), Point2::new(0.5, 0.5)];
        for a in f.field_eval(&pts).unwrap() {
            assert!(a.s.iter().all(|&v| v == 0.5));
        }
    }

    #[test]
    fn batch_invariance_is_bitwise() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let f = FieldParams::init_uniform(ModelVariant::Large.architecture(5), &mut rng).unwrap();
        let probe = Point2::new(0.3141, 0.2718);
        let single = f.field_eval(&[probe]).unwrap();
        let mut pts: Vec<Point2> = (0..1000).map(|_| Point2::new(rng.gen(), rng.gen())).collect();
        pts[517] = probe;
        let batch = f.field_eval(&pts).unwrap();
        assert_eq!(single[0].s, batch[517].s);
        let again = f.field_eval(&[probe]).unwrap();
        assert_eq!(single, again);
        let (_, cached) = f.forward_cached(&pts);
        assert_eq!(&cached[517 * 5..518 * 5], single[0].s.as_slice());
    }

    #[test]
    fn model_card_parameter_counts() {
        // 24·64+64 + 2·(64·64+64) + 64·5+5
        assert_eq!(ModelVariant::Large.architecture(5).param_count(), 10_245);
        // 8·32+32 + (32·32+32) + 32·5+5
        assert_eq!(ModelVariant::Small.architecture(5).param_count(), 1_509);
    }

    #[test]
    fn dimension_violations_are_reported() {
        let mut f = FieldParams::zeros(ModelVariant::Small.architecture(3)).unwrap();
        f.net.weights[1].pop();
        assert!(matches!(f.field_eval(&[Point2::new(0.5, 0.5)]), Err(Error::DimensionMismatch(_))));
    }

    #[test]
    fn empty_batch_rejected() {
        let f = FieldParams::zeros(ModelVariant::Small.architecture(3)).unwrap();
        assert!(f.field_eval(&[]).is_err());
    }

    #[test]
    fn backward_rejects_foreign_cache() {
        let a = FieldParams::zeros(ModelVariant::Small.architecture(3)).unwrap();
        let b = FieldParams::zeros(ModelVariant::Large.architecture(3)).unwrap();
        let (cache, _) = a.forward_cached(&[Point2::new(0.5, 0.5)]);
        assert!(matches!(b.net.backward(&cache, &[0.0; 3]), Err(Error::MissingCache(_))));
    }

    #[test]
    fn init_bounds_follow_fan_in() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let arch = ModelVariant::Large.architecture(5);
        let f = FieldParams::init_uniform(arch, &mut rng).unwrap();
        for (w, (fi, _)) in f.net.weights.iter().zip(arch.layer_dims()) {
            let bound = (6.0 / fi as f64).sqrt();
            assert!(w.iter().all(|v| v.abs() <= bound));
        }
        assert!(f.net.biases.iter().flatten().all(|&b| b == 0.0));
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn encoding_bounded(x in 0.0f64..=1.0, y in 0.0f64..=1.0, f in 1usize..8) {
                let e = encode(Point2::new(x, y), EncodingConfig::new(f).unwrap());
                prop_assert!(e.iter().all(|v| (-1.0..=1.0).contains(v)));
            }

            #[test]
            fn occupancy_strictly_inside_unit_interval(seed in 0u64..200, x in 0.0f64..=1.0, y in 0.0f64..=1.0) {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let f = FieldParams::init_uniform(ModelVariant::Small.architecture(5), &mut rng).unwrap();
                let s = f.occupancy(Point2::new(x, y));
                prop_assert!(s.iter().all(|&v| v > 0.0 && v < 1.0));
            }
        }
    }
}
