use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::adamw::AdamW;
use super::grad::{self, GradientBundle};
use super::observer::{grad_snapshot, StepRecord, TrainObserver};
use super::sampling::sample_jittered_grid;
use super::sds::{sds_step, sds_step_rgb};
use super::TrainConfig;
use crate::compositor::{Palette, Rgb};
use crate::error::{Error, Result};
use crate::field::{sigmoid, Architecture, EncodingConfig, FieldParams, ForwardCache, Mlp, MlpGrad, Point2, DEFAULT_LEAKY_SLOPE};
use crate::guidance::{GuidanceProvider, NoiseSchedule};
use crate::raster::RasterImage;

/// Independent random streams per stage, all derived from the run seed.
fn stage_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

const STREAM_INIT_RGB: u64 = 1;
const STREAM_DISTILL: u64 = 2;
const STREAM_FINETUNE: u64 = 3;

/// Implicit RGB image `z(p; θ)`: the field architecture with three
/// sigmoid-squashed color outputs.
#[derive(Debug, Clone, PartialEq)]
pub struct RgbGenerator {
    pub net: Mlp,
}

impl RgbGenerator {
    pub fn architecture(octaves: usize) -> Result<Architecture> {
        if octaves > 6 {
            return Err(Error::Config(format!("RGB generator allows at most 6 octaves, got {octaves}")));
        }
        Ok(Architecture {
            depth: 4,
            width: 64,
            outputs: 3,
            encoding: EncodingConfig::new(octaves)?,
            leaky_slope: DEFAULT_LEAKY_SLOPE,
        })
    }

    pub fn init<R: Rng + ?Sized>(octaves: usize, rng: &mut R) -> Result<Self> {
        Ok(Self {
            net: Mlp::init_uniform(Self::architecture(octaves)?, rng)?,
        })
    }

    pub fn color(&self, p: Point2) -> Rgb {
        let mut scratch = self.net.scratch();
        let mut out = [0.0; 3];
        self.net.logits_into(p, &mut scratch, &mut out);
        out.map(sigmoid)
    }

    pub fn render(&self, width: usize, height: usize) -> Result<RasterImage> {
        let mut scratch = self.net.scratch();
        RasterImage::from_fn(width, height, |p| {
            let mut out = [0.0; 3];
            self.net.logits_into(p, &mut scratch, &mut out);
            out.map(sigmoid)
        })
    }

    /// Returns the cache and colors, `points × 3`.
    pub fn forward_cached(&self, points: &[Point2]) -> (ForwardCache, Vec<f64>) {
        let cache = self.net.forward_cached(points);
        let rgb = cache.logits().iter().map(|&v| sigmoid(v)).collect();
        (cache, rgb)
    }

    /// Accumulates gradients of `Σ ⟨adjoint, rgb⟩` given the forward colors.
    pub fn backward_into(&self, cache: &ForwardCache, rgb: &[f64], adjoint: &[f64], grad: &mut MlpGrad) -> Result<()> {
        if rgb.len() != adjoint.len() {
            return Err(Error::DimensionMismatch("adjoint and colors differ in length".into()));
        }
        let d_logits: Vec<f64> = rgb.iter().zip(adjoint).map(|(c, a)| a * c * (1.0 - c)).collect();
        self.net.backward_into(cache, &d_logits, grad)
    }
}

/// AdamW over the field weights (MLP learning rate) and palette (color
/// learning rate). Colors are clamped to `[0,1]` after every step.
#[derive(Debug, Clone)]
pub struct FieldOptimizer {
    adam: AdamW,
    lrs: Vec<f64>,
}

impl FieldOptimizer {
    pub fn new(params: &FieldParams, palette: &Palette, cfg: &TrainConfig) -> Self {
        let mut shapes: Vec<usize> = params.net.tensors().iter().map(|t| t.len()).collect();
        let mut lrs = vec![cfg.lr_mlp; shapes.len()];
        shapes.push(palette.colors.len() * 3);
        lrs.push(cfg.lr_color);
        Self {
            adam: AdamW::new(cfg.adamw, &shapes),
            lrs,
        }
    }

    pub fn step(&mut self, params: &mut FieldParams, palette: &mut Palette, grad: &GradientBundle) -> Result<()> {
        let mut flat_colors = palette.flat();
        let color_grad: Vec<f64> = grad.colors.iter().flatten().copied().collect();
        let mut p = params.net.tensors_mut();
        p.push(&mut flat_colors);
        let mut g = grad.field.tensors();
        g.push(&color_grad);
        self.adam.step(p, g, &self.lrs)?;
        for (c, chunk) in palette.colors.iter_mut().zip(flat_colors.chunks_exact(3)) {
            c.copy_from_slice(chunk);
        }
        palette.clamp();
        Ok(())
    }
}

fn params_finite(params: &FieldParams, palette: &Palette) -> bool {
    params.net.tensors().iter().all(|t| t.iter().all(|v| v.is_finite())) && palette.colors.iter().flatten().all(|v| v.is_finite())
}

/// Fits the implicit RGB generator to the prompt by score distillation.
pub fn stage_init_rgb(
    prompt: &str,
    guidance: &dyn GuidanceProvider,
    schedule: &NoiseSchedule,
    cfg: &TrainConfig,
    observer: &mut dyn TrainObserver,
) -> Result<RgbGenerator> {
    cfg.validate()?;
    let mut rng = stage_rng(cfg.seed, STREAM_INIT_RGB);
    let mut generator = RgbGenerator::init(cfg.rgb_octaves, &mut rng)?;
    let shapes: Vec<usize> = generator.net.tensors().iter().map(|t| t.len()).collect();
    let lrs = vec![cfg.lr_rgb; shapes.len()];
    let mut adam = AdamW::new(cfg.adamw, &shapes);
    for it in 1..=cfg.init_iterations {
        let (grad, residuals, _) = sds_step_rgb(&generator, guidance, schedule, prompt, cfg, &mut rng)?;
        if grad.tensors().iter().any(|t| t.iter().any(|v| !v.is_finite())) {
            return Err(Error::NonFinite(format!("RGB generator gradient at iteration {it}")));
        }
        adam.step(generator.net.tensors_mut(), grad.tensors(), &lrs)?;
        observer.on_step(&StepRecord {
            stage: "init-rgb",
            iteration: it,
            loss: residuals.iter().map(|r| r.mean_square()).sum::<f64>() / residuals.len() as f64,
            l2: None,
            entropy: None,
            t: residuals.iter().map(|r| r.t).collect(),
            grad_norm_mlp: grad.tensors().iter().flat_map(|t| t.iter()).map(|v| v * v).sum::<f64>().sqrt(),
            grad_norm_color: 0.0,
        })?;
    }
    Ok(generator)
}

/// Primitive used for handcrafted layer initializations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ShapeKind {
    Box,
    Ellipse,
    Blob,
}

impl FromStr for ShapeKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "box" => Ok(ShapeKind::Box),
            "ellipse" => Ok(ShapeKind::Ellipse),
            "blob" => Ok(ShapeKind::Blob),
            other => Err(Error::Config(format!("unknown shape {other:?} (expected box, ellipse or blob)"))),
        }
    }
}

/// A target occupancy mask for one layer.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShapeMask {
    pub kind: ShapeKind,
    pub center: Point2,
    /// Half width and half height (blob: two standard deviations).
    pub half_extent: (f64, f64),
}

impl ShapeMask {
    /// Centered shape for layer `index` (0 = front); front layers are smaller.
    pub fn centered(kind: ShapeKind, index: usize) -> Self {
        let r = (0.3 - 0.05 * index as f64).max(0.08);
        let half_extent = match kind {
            ShapeKind::Ellipse => (r * 1.2, r * 0.8),
            _ => (r, r),
        };
        Self {
            kind,
            center: Point2::new(0.5, 0.5),
            half_extent,
        }
    }

    pub fn value(&self, p: Point2) -> f64 {
        let dx = (p.x - self.center.x) / self.half_extent.0;
        let dy = (p.y - self.center.y) / self.half_extent.1;
        match self.kind {
            ShapeKind::Box => f64::from(u8::from(dx.abs() <= 1.0 && dy.abs() <= 1.0)),
            ShapeKind::Ellipse => f64::from(u8::from(dx * dx + dy * dy <= 1.0)),
            ShapeKind::Blob => (-2.0 * (dx * dx + dy * dy)).exp(),
        }
    }
}

/// Where the distillation stage takes its target from.
#[derive(Debug, Clone)]
pub enum InitSource<'a> {
    /// Render of the implicit RGB generator.
    RgbGenerator(&'a RgbGenerator),
    /// A raster image, e.g. a full diffusion sample.
    Image(RasterImage),
    /// Skip distillation and keep the random initialization.
    Random,
    /// Handcrafted masks, one per front layer.
    Shapes(Vec<ShapeMask>),
}

/// Distinct flat colors for handcrafted layers, front to back.
const SHAPE_COLORS: [Rgb; 5] = [
    [0.85, 0.25, 0.2],
    [0.2, 0.45, 0.8],
    [0.95, 0.75, 0.2],
    [0.3, 0.65, 0.35],
    [0.55, 0.35, 0.65],
];

/// Fits `(FieldParams, Palette)` to the chosen source.
pub fn stage_distill(
    source: InitSource<'_>,
    arch: Architecture,
    cfg: &TrainConfig,
    observer: &mut dyn TrainObserver,
) -> Result<(FieldParams, Palette)> {
    cfg.validate()?;
    let mut rng = stage_rng(cfg.seed, STREAM_DISTILL);
    let params = FieldParams::init_uniform(arch, &mut rng)?;
    let layers = arch.outputs;
    match source {
        InitSource::Random => {
            let palette = Palette::uniform(layers, &mut rng);
            Ok((params, palette))
        }
        InitSource::RgbGenerator(generator) => {
            let target = generator.render(cfg.distill_size, cfg.distill_size)?;
            distill_image(params, &target, cfg, &mut rng, observer)
        }
        InitSource::Image(target) => distill_image(params, &target, cfg, &mut rng, observer),
        InitSource::Shapes(masks) => distill_masks(params, &masks, cfg, &mut rng, observer),
    }
}

fn distill_image(
    mut params: FieldParams,
    target: &RasterImage,
    cfg: &TrainConfig,
    rng: &mut ChaCha8Rng,
    observer: &mut dyn TrainObserver,
) -> Result<(FieldParams, Palette)> {
    let mut palette = kmeans_palette(target, params.layers() + 1, cfg.seed)?;
    let mut opt = FieldOptimizer::new(&params, &palette, cfg);
    for it in 1..=cfg.distill_iterations {
        let points = sample_jittered_grid(target.width(), target.height(), cfg.jitter_distill, rng);
        let terms = grad::loss_rec_terms(&params, &palette, target, cfg.lambda_prime, &points)?;
        if !terms.total.is_finite() || !terms.grad.is_finite() {
            observer.on_abort("distill", it, &params, &palette)?;
            return Err(Error::NonFinite(format!("reconstruction loss at iteration {it}")));
        }
        opt.step(&mut params, &mut palette, &terms.grad)?;
        observer.on_step(&StepRecord {
            stage: "distill",
            iteration: it,
            loss: terms.total,
            l2: Some(terms.l2),
            entropy: Some(terms.entropy),
            t: Vec::new(),
            grad_norm_mlp: terms.grad.field_norm(),
            grad_norm_color: terms.grad.color_norm(),
        })?;
    }
    Ok((params, palette))
}

/// Per-layer occupancy fit to handcrafted masks with a logistic loss.
fn distill_masks(
    mut params: FieldParams,
    masks: &[ShapeMask],
    cfg: &TrainConfig,
    rng: &mut ChaCha8Rng,
    observer: &mut dyn TrainObserver,
) -> Result<(FieldParams, Palette)> {
    let layers = params.layers();
    if masks.is_empty() || masks.len() > layers {
        return Err(Error::UnavailableSource(format!(
            "{} shape masks for {layers} layers",
            masks.len()
        )));
    }
    let colors = (0..layers).map(|l| SHAPE_COLORS[l % SHAPE_COLORS.len()]).collect();
    let mut palette = Palette::with_background(colors, [1.0; 3])?;
    let mut opt = FieldOptimizer::new(&params, &palette, cfg);
    let n = cfg.distill_size;
    for it in 1..=cfg.distill_iterations {
        let points = sample_jittered_grid(n, n, cfg.jitter_distill, rng);
        let (cache, s) = params.forward_cached(&points);
        let mut loss = 0.0;
        let mut d_logits = vec![0.0; s.len()];
        for (pi, p) in points.iter().enumerate() {
            for l in 0..layers {
                let m = masks.get(l).map_or(0.0, |mask| mask.value(*p));
                let sv = s[pi * layers + l];
                loss -= m * sv.max(1e-12).ln() + (1.0 - m) * (1.0 - sv).max(1e-12).ln();
                d_logits[pi * layers + l] = sv - m;
            }
        }
        let mut grad = GradientBundle::zeros(&params, &palette);
        params.net.backward_into(&cache, &d_logits, &mut grad.field)?;
        if !loss.is_finite() || !grad.is_finite() {
            observer.on_abort("distill", it, &params, &palette)?;
            return Err(Error::NonFinite(format!("mask loss at iteration {it}")));
        }
        opt.step(&mut params, &mut palette, &grad)?;
        observer.on_step(&StepRecord {
            stage: "distill",
            iteration: it,
            loss,
            l2: None,
            entropy: None,
            t: Vec::new(),
            grad_norm_mlp: grad.field_norm(),
            grad_norm_color: 0.0,
        })?;
    }
    Ok((params, palette))
}

/// Fine-tunes the layered field with score distillation plus `λ`·entropy.
#[allow(clippy::too_many_arguments)]
pub fn stage_finetune(
    mut params: FieldParams,
    mut palette: Palette,
    prompt: &str,
    guidance: &dyn GuidanceProvider,
    schedule: &NoiseSchedule,
    cfg: &TrainConfig,
    observer: &mut dyn TrainObserver,
) -> Result<(FieldParams, Palette)> {
    cfg.validate()?;
    let mut rng = stage_rng(cfg.seed, STREAM_FINETUNE);
    let mut opt = FieldOptimizer::new(&params, &palette, cfg);
    for it in 1..=cfg.iterations {
        let outcome = sds_step(&params, &palette, guidance, schedule, prompt, cfg, &mut rng)?;
        if !outcome.grad.is_finite() {
            observer.on_abort("finetune", it, &params, &palette)?;
            return Err(Error::NonFinite(format!("distillation gradient at iteration {it}")));
        }
        let (prev_params, prev_palette) = (params.clone(), palette.clone());
        opt.step(&mut params, &mut palette, &outcome.grad)?;
        if !params_finite(&params, &palette) {
            observer.on_abort("finetune", it, &prev_params, &prev_palette)?;
            return Err(Error::NonFinite(format!("parameters after iteration {it}")));
        }
        let residual_ms =
            outcome.residuals.iter().map(|r| r.mean_square()).sum::<f64>() / outcome.residuals.len() as f64;
        observer.on_step(&StepRecord {
            stage: "finetune",
            iteration: it,
            loss: residual_ms + cfg.lambda * outcome.entropy,
            l2: None,
            entropy: Some(outcome.entropy),
            t: outcome.residuals.iter().map(|r| r.t).collect(),
            grad_norm_mlp: outcome.grad.field_norm(),
            grad_norm_color: outcome.grad.color_norm(),
        })?;
        if let Some(every) = cfg.snapshot_every {
            if it == 1 || it % every == 0 {
                let n = cfg.render_size;
                let gradient = grad_snapshot(&outcome.residuals[0].adjoint, n, n)?;
                observer.on_snapshot(it, &outcome.renders[0], &gradient)?;
            }
        }
        if let Some(every) = cfg.checkpoint_every {
            if it % every == 0 && it != cfg.iterations {
                observer.on_checkpoint("finetune", it, &params, &palette)?;
            }
        }
    }
    Ok((params, palette))
}

/// Palette from k-means over the target's pixels with `clusters` centers.
///
/// The cluster holding most border pixels becomes the background; the rest
/// are assigned to layers front to back in order of increasing pixel count.
pub fn kmeans_palette(target: &RasterImage, clusters: usize, seed: u64) -> Result<Palette> {
    if clusters < 2 {
        return Err(Error::Config("palette needs at least two clusters".into()));
    }
    let pixels: Vec<Rgb> = target.data().chunks_exact(3).map(|c| [c[0], c[1], c[2]]).collect();
    let dist = |a: &Rgb, b: &Rgb| (0..3).map(|c| (a[c] - b[c]) * (a[c] - b[c])).sum::<f64>();

    // k-means++ seeding.
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centers = vec![pixels[rng.gen_range(0..pixels.len())]];
    let mut nearest: Vec<f64> = pixels.iter().map(|p| dist(p, &centers[0])).collect();
    while centers.len() < clusters {
        let total: f64 = nearest.iter().sum();
        let pick = if total > 0.0 {
            let mut r = rng.gen_range(0.0..total);
            nearest
                .iter()
                .position(|&d| {
                    r -= d;
                    r < 0.0
                })
                .unwrap_or(pixels.len() - 1)
        } else {
            rng.gen_range(0..pixels.len())
        };
        centers.push(pixels[pick]);
        for (n, p) in nearest.iter_mut().zip(&pixels) {
            *n = n.min(dist(p, &centers[centers.len() - 1]));
        }
    }

    let mut assign = vec![0usize; pixels.len()];
    for _ in 0..100 {
        let mut changed = false;
        for (a, p) in assign.iter_mut().zip(&pixels) {
            let best = (0..clusters)
                .min_by(|&i, &j| dist(p, &centers[i]).total_cmp(&dist(p, &centers[j])))
                .expect("clusters > 0");
            if best != *a {
                *a = best;
                changed = true;
            }
        }
        let mut sums = vec![[0.0; 3]; clusters];
        let mut counts = vec![0usize; clusters];
        for (&a, p) in assign.iter().zip(&pixels) {
            counts[a] += 1;
            for c in 0..3 {
                sums[a][c] += p[c];
            }
        }
        for i in 0..clusters {
            if counts[i] > 0 {
                centers[i] = sums[i].map(|v| v / counts[i] as f64);
            }
        }
        if !changed {
            break;
        }
    }

    let mut counts = vec![0usize; clusters];
    let mut border = vec![0usize; clusters];
    let (w, h) = (target.width(), target.height());
    for (idx, &a) in assign.iter().enumerate() {
        counts[a] += 1;
        let (i, j) = (idx / w, idx % w);
        if i == 0 || j == 0 || i + 1 == h || j + 1 == w {
            border[a] += 1;
        }
    }
    let background = (0..clusters).max_by_key(|&i| (border[i], std::cmp::Reverse(i))).expect("clusters > 0");
    let mut front: Vec<usize> = (0..clusters).filter(|&i| i != background).collect();
    front.sort_by_key(|&i| (counts[i], i));
    let layers = front.iter().map(|&i| centers[i].map(|v| v.clamp(0.0, 1.0))).collect();
    Palette::with_background(layers, centers[background].map(|v| v.clamp(0.0, 1.0)))
}
