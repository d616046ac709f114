//! Reverse-mode gradients through compositing and the field MLP.

use crate::compositor::{self, Palette, Rgb};
use crate::error::{Error, Result};
use crate::field::{FieldParams, ForwardCache, MlpGrad, Point2};
use crate::raster::RasterImage;

/// Gradients mirroring `(FieldParams, Palette)`.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientBundle {
    pub field: MlpGrad,
    pub colors: Vec<Rgb>,
}

impl GradientBundle {
    pub fn zeros(params: &FieldParams, palette: &Palette) -> Self {
        Self {
            field: MlpGrad::zeros_like(&params.net),
            colors: vec![[0.0; 3]; palette.colors.len()],
        }
    }

    pub fn add_assign(&mut self, other: &GradientBundle) {
        self.field.add_assign(&other.field);
        for (a, b) in self.colors.iter_mut().zip(&other.colors) {
            for c in 0..3 {
                a[c] += b[c];
            }
        }
    }

    pub fn scale(&mut self, factor: f64) {
        self.field.scale(factor);
        self.colors.iter_mut().flatten().for_each(|v| *v *= factor);
    }

    pub fn field_norm(&self) -> f64 {
        self.field.tensors().iter().flat_map(|t| t.iter()).map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn color_norm(&self) -> f64 {
        self.colors.iter().flatten().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.field.tensors().iter().all(|t| t.iter().all(|v| v.is_finite()))
            && self.colors.iter().flatten().all(|v| v.is_finite())
    }

    pub fn is_zero(&self) -> bool {
        self.field.tensors().iter().all(|t| t.iter().all(|&v| v == 0.0)) && self.colors.iter().flatten().all(|&v| v == 0.0)
    }
}

/// Forward state of the composited field over a batch of points.
#[derive(Debug, Clone)]
pub struct CompositeForward {
    cache: ForwardCache,
    layers: usize,
    /// `points × L`
    pub s: Vec<f64>,
    /// `points × (L+1)`
    pub k: Vec<f64>,
    /// `points × 3`
    pub rgb: Vec<f64>,
}

impl CompositeForward {
    pub fn len(&self) -> usize {
        self.cache.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cache.is_empty()
    }

    pub fn entropy_sum(&self) -> f64 {
        self.k.chunks_exact(self.layers + 1).map(compositor::entropy).sum()
    }
}

pub fn forward(params: &FieldParams, palette: &Palette, points: &[Point2]) -> Result<CompositeForward> {
    compositor::check_layers(params, palette)?;
    let layers = params.layers();
    let (cache, s) = params.forward_cached(points);
    let mut k = vec![0.0; points.len() * (layers + 1)];
    let mut rgb = Vec::with_capacity(points.len() * 3);
    for (sp, kp) in s.chunks_exact(layers).zip(k.chunks_exact_mut(layers + 1)) {
        compositor::mixing_into(sp, kp);
        rgb.extend_from_slice(&compositor::composite_slice(kp, &palette.colors));
    }
    Ok(CompositeForward { cache, layers, s, k, rgb })
}

/// Gradients of `Σ_p ⟨adjoint_p, g(p)⟩ + entropy_weight·Σ_p H(k(p))`.
///
/// `fwd` must come from [`forward`] on the same parameters.
pub fn backward(
    params: &FieldParams,
    palette: &Palette,
    fwd: &CompositeForward,
    adjoint_rgb: &[f64],
    entropy_weight: f64,
) -> Result<GradientBundle> {
    let mut out = GradientBundle::zeros(params, palette);
    backward_into(params, palette, fwd, adjoint_rgb, entropy_weight, &mut out)?;
    Ok(out)
}

pub fn backward_into(
    params: &FieldParams,
    palette: &Palette,
    fwd: &CompositeForward,
    adjoint_rgb: &[f64],
    entropy_weight: f64,
    out: &mut GradientBundle,
) -> Result<()> {
    let layers = params.layers();
    if fwd.layers != layers || palette.layers() != layers {
        return Err(Error::MissingCache("forward state does not match these parameters".into()));
    }
    if adjoint_rgb.len() != fwd.len() * 3 {
        return Err(Error::DimensionMismatch(format!(
            "adjoint has {} values for {} points",
            adjoint_rgb.len(),
            fwd.len()
        )));
    }
    if adjoint_rgb.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("rgb adjoint".into()));
    }
    let mut d_logits = vec![0.0; fwd.len() * layers];
    let mut dk = vec![0.0; layers + 1];
    for (pi, adj) in adjoint_rgb.chunks_exact(3).enumerate() {
        let k = &fwd.k[pi * (layers + 1)..(pi + 1) * (layers + 1)];
        let s = &fwd.s[pi * layers..(pi + 1) * layers];
        for (l, c) in palette.colors.iter().enumerate() {
            dk[l] = adj[0] * c[0] + adj[1] * c[1] + adj[2] * c[2];
            for ch in 0..3 {
                out.colors[l][ch] += k[l] * adj[ch];
            }
        }
        if entropy_weight != 0.0 {
            compositor::entropy_grad_into(k, entropy_weight, &mut dk);
        }
        let dl = &mut d_logits[pi * layers..(pi + 1) * layers];
        compositor::mixing_backward(s, &dk, dl);
        for (d, &sv) in dl.iter_mut().zip(s) {
            *d *= sv * (1.0 - sv);
        }
    }
    params.net.backward_into(&fwd.cache, &d_logits, &mut out.field)
}

/// Points per forward/backward chunk in the batched losses.
const CHUNK: usize = 4096;

/// Reconstruction loss `Σ_p ‖g(p) − ẑ(p)‖² + λ′·Σ_p H(k(p))` at pixel centers.
pub fn loss_rec(
    params: &FieldParams,
    palette: &Palette,
    target: &RasterImage,
    lambda_prime: f64,
) -> Result<(f64, GradientBundle)> {
    let points = pixel_centers(target.width(), target.height());
    loss_rec_at(params, palette, target, lambda_prime, &points)
}

/// As [`loss_rec`], but pixel `i` is sampled at `points[i]` (e.g. jittered).
pub fn loss_rec_at(
    params: &FieldParams,
    palette: &Palette,
    target: &RasterImage,
    lambda_prime: f64,
    points: &[Point2],
) -> Result<(f64, GradientBundle)> {
    let terms = loss_rec_terms(params, palette, target, lambda_prime, points)?;
    Ok((terms.total, terms.grad))
}

#[derive(Debug, Clone)]
pub struct RecTerms {
    pub total: f64,
    pub l2: f64,
    pub entropy: f64,
    pub grad: GradientBundle,
}

pub fn loss_rec_terms(
    params: &FieldParams,
    palette: &Palette,
    target: &RasterImage,
    lambda_prime: f64,
    points: &[Point2],
) -> Result<RecTerms> {
    if points.len() != target.pixel_count() {
        return Err(Error::DimensionMismatch(format!(
            "{} sample points for a {}×{} target",
            points.len(),
            target.width(),
            target.height()
        )));
    }
    let mut grad = GradientBundle::zeros(params, palette);
    let mut l2 = 0.0;
    let mut entropy = 0.0;
    for (ci, chunk) in points.chunks(CHUNK).enumerate() {
        let fwd = forward(params, palette, chunk)?;
        let tgt = &target.data()[ci * CHUNK * 3..ci * CHUNK * 3 + chunk.len() * 3];
        let adjoint: Vec<f64> = fwd
            .rgb
            .iter()
            .zip(tgt)
            .map(|(g, z)| {
                let r = g - z;
                l2 += r * r;
                2.0 * r
            })
            .collect();
        if lambda_prime != 0.0 {
            entropy += fwd.entropy_sum();
        }
        backward_into(params, palette, &fwd, &adjoint, lambda_prime, &mut grad)?;
    }
    Ok(RecTerms {
        total: l2 + lambda_prime * entropy,
        l2,
        entropy,
        grad,
    })
}

pub fn pixel_centers(width: usize, height: usize) -> Vec<Point2> {
    (0..height)
        .flat_map(|i| (0..width).map(move |j| Point2::pixel_center(i, j, width, height)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::compositor::render;
    use crate::field::{Architecture, EncodingConfig, DEFAULT_LEAKY_SLOPE};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn small(seed: u64) -> (FieldParams, Palette, Vec<Point2>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let arch = Architecture {
            depth: 3,
            width: 16,
            outputs: 3,
            encoding: EncodingConfig { octaves: 2 },
            leaky_slope: DEFAULT_LEAKY_SLOPE,
        };
        let f = FieldParams::init_uniform(arch, &mut rng).unwrap();
        let pal = Palette::uniform(3, &mut rng);
        let pts = (0..25).map(|_| Point2::new(rng.gen(), rng.gen())).collect();
        (f, pal, pts)
    }

    #[test]
    fn zero_adjoint_gives_zero_bundle() {
        let (f, pal, pts) = small(1);
        let fwd = forward(&f, &pal, &pts).unwrap();
        let g = backward(&f, &pal, &fwd, &vec![0.0; pts.len() * 3], 0.0).unwrap();
        assert!(g.is_zero());
    }

    #[test]
    fn color_gradient_is_mixing_weighted_adjoint() {
        let (f, pal, pts) = small(2);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let adjoint: Vec<f64> = (0..pts.len() * 3).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let fwd = forward(&f, &pal, &pts).unwrap();
        let g = backward(&f, &pal, &fwd, &adjoint, 0.0).unwrap();
        // Direct summation oracle, independent of the backward sweep.
        for l in 0..=3 {
            for ch in 0..3 {
                let mut expect = 0.0;
                for (pi, p) in pts.iter().enumerate() {
                    let s = f.net.clone();
                    let occ = crate::field::OccupancyField::occupancy(&FieldParams { net: s }, *p);
                    let k = compositor::mixing_coefficients(&occ).k;
                    expect += k[l] * adjoint[pi * 3 + ch];
                }
                assert!((g.colors[l][ch] - expect).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn rec_loss_vanishes_at_own_render() {
        let (f, pal, _) = small(3);
        let target = render(&f, &pal, 12, 10).unwrap();
        let (loss, grad) = loss_rec(&f, &pal, &target, 0.0).unwrap();
        assert_eq!(loss, 0.0);
        assert!(grad.is_zero());
    }

    #[test]
    fn rec_loss_rejects_mismatched_points() {
        let (f, pal, pts) = small(4);
        let target = RasterImage::filled(4, 4, [1.0; 3]).unwrap();
        assert!(loss_rec_at(&f, &pal, &target, 0.0, &pts).is_err());
    }

    #[test]
    fn non_finite_adjoint_rejected() {
        let (f, pal, pts) = small(5);
        let fwd = forward(&f, &pal, &pts).unwrap();
        let mut adj = vec![0.0; pts.len() * 3];
        adj[4] = f64::INFINITY;
        assert!(matches!(backward(&f, &pal, &fwd, &adj, 0.0), Err(Error::NonFinite(_))));
    }
}
