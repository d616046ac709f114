use rand::Rng;

use crate::field::Point2;

/// Pixel-center samples, optionally jittered by up to half a pixel.
///
/// Point `(i, j)` is `((j+0.5+u)/W, (i+0.5+v)/H)` with `u, v ~ U(−½, ½)`,
/// clamped to the unit square. Row-major, aligned with raster pixels.
pub fn sample_jittered_grid<R: Rng + ?Sized>(width: usize, height: usize, jitter: bool, rng: &mut R) -> Vec<Point2> {
    let mut out = Vec::with_capacity(width * height);
    for i in 0..height {
        for j in 0..width {
            let (u, v) = if jitter {
                (rng.gen_range(-0.5..0.5), rng.gen_range(-0.5..0.5))
            } else {
                (0.0, 0.0)
            };
            out.push(Point2::new(
                ((j as f64 + 0.5 + u) / width as f64).clamp(0.0, 1.0),
                ((i as f64 + 0.5 + v) / height as f64).clamp(0.0, 1.0),
            ));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn disabled_jitter_gives_centers() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let pts = sample_jittered_grid(4, 3, false, &mut rng);
        assert_eq!(pts[5], Point2::pixel_center(1, 1, 4, 3));
    }

    #[test]
    fn jittered_points_stay_in_cell_and_square() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let pts = sample_jittered_grid(16, 8, true, &mut rng);
        for (idx, p) in pts.iter().enumerate() {
            assert!(p.in_unit_square());
            let (i, j) = (idx / 16, idx % 16);
            assert!((p.x * 16.0 - (j as f64 + 0.5)).abs() <= 0.5);
            assert!((p.y * 8.0 - (i as f64 + 0.5)).abs() <= 0.5);
        }
    }

    #[test]
    fn seeded_runs_are_identical() {
        let a = sample_jittered_grid(9, 9, true, &mut ChaCha8Rng::seed_from_u64(5));
        let b = sample_jittered_grid(9, 9, true, &mut ChaCha8Rng::seed_from_u64(5));
        assert_eq!(a, b);
    }
}
