#![allow(dead_code)]

use implicit_layers::compositor::Palette;
use implicit_layers::field::{Architecture, EncodingConfig, FieldParams, Point2, DEFAULT_LEAKY_SLOPE};
use implicit_layers::raster::RasterImage;
use implicit_layers::training::loss_rec_at;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Denominator floor of the relative error as a fraction of the largest
/// gradient entry. Entries far below the gradient's scale are compared by
/// absolute error against that scale.
pub const REL_FLOOR: f64 = 1e-3;

pub struct GradCheck {
    pub max_rel: f64,
    pub checked: usize,
}

pub fn small_problem(seed: u64) -> (FieldParams, Palette, RasterImage, Vec<Point2>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let arch = Architecture {
        depth: 3,
        width: 16,
        outputs: 3,
        encoding: EncodingConfig::new(2).unwrap(),
        leaky_slope: DEFAULT_LEAKY_SLOPE,
    };
    let params = FieldParams::init_uniform(arch, &mut rng).unwrap();
    let palette = Palette::uniform(3, &mut rng);
    let target = RasterImage::new(5, 5, (0..75).map(|_| rng.gen::<f64>()).collect()).unwrap();
    let points = (0..25).map(|_| Point2::new(rng.gen(), rng.gen())).collect();
    (params, palette, target, points)
}

/// Central differences with step `h` on every field and palette parameter.
pub fn check_gradients(seed: u64, lambda_prime: f64, h: f64) -> GradCheck {
    let (mut params, mut palette, target, points) = small_problem(seed);
    let (_, grad) = loss_rec_at(&params, &palette, &target, lambda_prime, &points).unwrap();
    let loss = |p: &FieldParams, c: &Palette| loss_rec_at(p, c, &target, lambda_prime, &points).unwrap().0;

    let scale = grad
        .field
        .tensors()
        .iter()
        .flat_map(|t| t.iter())
        .chain(grad.colors.iter().flatten())
        .fold(0.0f64, |m, v| m.max(v.abs()));
    let floor = REL_FLOOR * scale;
    let mut max_rel = 0.0f64;
    let mut checked = 0;
    let mut record = |analytic: f64, numeric: f64| {
        let rel = (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor);
        max_rel = max_rel.max(rel);
        checked += 1;
    };

    let analytic: Vec<Vec<f64>> = grad.field.tensors().iter().map(|t| t.to_vec()).collect();
    for (ti, g) in analytic.iter().enumerate() {
        for i in 0..g.len() {
            let orig = params.net.tensors()[ti][i];
            params.net.tensors_mut()[ti][i] = orig + h;
            let plus = loss(&params, &palette);
            params.net.tensors_mut()[ti][i] = orig - h;
            let minus = loss(&params, &palette);
            params.net.tensors_mut()[ti][i] = orig;
            record(g[i], (plus - minus) / (2.0 * h));
        }
    }
    for l in 0..palette.colors.len() {
        for c in 0..3 {
            let orig = palette.colors[l][c];
            palette.colors[l][c] = orig + h;
            let plus = loss(&params, &palette);
            palette.colors[l][c] = orig - h;
            let minus = loss(&params, &palette);
            palette.colors[l][c] = orig;
            record(grad.colors[l][c], (plus - minus) / (2.0 * h));
        }
    }
    GradCheck { max_rel, checked }
}

pub fn mean_abs_diff(a: &RasterImage, b: &RasterImage) -> f64 {
    a.data().iter().zip(b.data()).map(|(x, y)| (x - y).abs()).sum::<f64>() / a.data().len() as f64
}
