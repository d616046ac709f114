//! Analytic occupancy fields with known geometry.
//!
//! Each layer is a primitive whose signed distance `d` (positive inside) is
//! softened as `sigmoid(k·d)`, so the 0.5 iso-curve is exactly the primitive's
//! boundary. A hardened copy returns the binary masks.

use crate::compositor::{Palette, Rgb};
use crate::field::{sigmoid, OccupancyField, Point2};

pub const DEFAULT_SHARPNESS: f64 = 100.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Shape {
    /// Occupancy exactly zero everywhere.
    Empty,
    Disk { center: Point2, radius: f64 },
    Annulus { center: Point2, inner: f64, outer: f64 },
    Rect { center: Point2, half: (f64, f64) },
}

impl Shape {
    /// Signed distance to the boundary, positive inside.
    pub fn signed_distance(&self, p: Point2) -> f64 {
        match *self {
            Shape::Empty => f64::NEG_INFINITY,
            Shape::Disk { center, radius } => radius - (p.x - center.x).hypot(p.y - center.y),
            Shape::Annulus { center, inner, outer } => {
                let r = (p.x - center.x).hypot(p.y - center.y);
                (outer - r).min(r - inner)
            }
            Shape::Rect { center, half } => {
                let qx = (p.x - center.x).abs() - half.0;
                let qy = (p.y - center.y).abs() - half.1;
                let outside = qx.max(0.0).hypot(qy.max(0.0));
                -(outside + qx.max(qy).min(0.0))
            }
        }
    }

    pub fn contains(&self, p: Point2) -> bool {
        self.signed_distance(p) > 0.0
    }

    /// Exact enclosed area.
    pub fn area(&self) -> f64 {
        use std::f64::consts::PI;
        match *self {
            Shape::Empty => 0.0,
            Shape::Disk { radius, .. } => PI * radius * radius,
            Shape::Annulus { inner, outer, .. } => PI * (outer * outer - inner * inner),
            Shape::Rect { half, .. } => 4.0 * half.0 * half.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnalyticField {
    /// Front-most first.
    pub layers: Vec<Shape>,
    /// Sigmoid slope; infinite gives binary masks.
    pub sharpness: f64,
}

const FIXTURE_COLORS: [Rgb; 5] = [
    [0.9, 0.2, 0.15],
    [0.15, 0.35, 0.85],
    [0.95, 0.8, 0.1],
    [0.2, 0.65, 0.3],
    [0.5, 0.3, 0.6],
];

impl AnalyticField {
    pub fn new(layers: Vec<Shape>) -> Self {
        Self {
            layers,
            sharpness: DEFAULT_SHARPNESS,
        }
    }

    pub fn single(shape: Shape) -> Self {
        Self::new(vec![shape])
    }

    /// Centered disk of radius 0.3.
    pub fn disk() -> Self {
        Self::single(Self::disk_shape())
    }

    pub fn disk_shape() -> Shape {
        Shape::Disk {
            center: Point2::new(0.5, 0.5),
            radius: 0.3,
        }
    }

    /// Centered ring between radii 0.2 and 0.4.
    pub fn annulus() -> Self {
        Self::single(Shape::Annulus {
            center: Point2::new(0.5, 0.5),
            inner: 0.2,
            outer: 0.4,
        })
    }

    /// A disk in front of a square, both over the background.
    pub fn three_layer() -> Self {
        Self::new(vec![
            Shape::Disk {
                center: Point2::new(0.4, 0.4),
                radius: 0.2,
            },
            Shape::Rect {
                center: Point2::new(0.58, 0.58),
                half: (0.25, 0.25),
            },
        ])
    }

    /// Five layers of which the second and fourth are empty.
    pub fn collapsed() -> Self {
        Self::new(vec![
            Shape::Disk {
                center: Point2::new(0.3, 0.3),
                radius: 0.15,
            },
            Shape::Empty,
            Shape::Rect {
                center: Point2::new(0.6, 0.6),
                half: (0.2, 0.15),
            },
            Shape::Empty,
            Shape::Disk {
                center: Point2::new(0.5, 0.5),
                radius: 0.4,
            },
        ])
    }

    /// Distinct layer colors over a white background.
    pub fn palette_for(layers: usize) -> Palette {
        let colors = (0..layers).map(|l| FIXTURE_COLORS[l % FIXTURE_COLORS.len()]).collect();
        Palette::with_background(colors, [1.0; 3]).expect("fixture colors are valid")
    }

    pub fn palette(&self) -> Palette {
        Self::palette_for(self.layers.len())
    }

    pub fn hardened(&self) -> Self {
        Self {
            layers: self.layers.clone(),
            sharpness: f64::INFINITY,
        }
    }

    /// Binary mask of layer `l` at the `n × n` pixel centers.
    pub fn mask(&self, l: usize, n: usize) -> Vec<bool> {
        let shape = self.layers[l];
        (0..n * n).map(|idx| shape.contains(Point2::pixel_center(idx / n, idx % n, n, n))).collect()
    }

    fn value(&self, shape: &Shape, p: Point2) -> f64 {
        if let Shape::Empty = shape {
            return 0.0;
        }
        let d = shape.signed_distance(p);
        if self.sharpness.is_infinite() {
            f64::from(u8::from(d > 0.0))
        } else {
            sigmoid(self.sharpness * d)
        }
    }
}

impl OccupancyField for AnalyticField {
    fn layer_count(&self) -> usize {
        self.layers.len()
    }

    fn occupancy_into(&self, p: Point2, out: &mut [f64]) {
        for (o, shape) in out.iter_mut().zip(&self.layers) {
            *o = self.value(shape, p);
        }
    }
}
