//! Grid sampling and oriented marching squares.

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::field::{OccupancyField, Point2};

/// One layer's occupancy sampled at the `n × n` pixel centers, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarGrid {
    n: usize,
    values: Vec<f64>,
}

impl ScalarGrid {
    pub fn new(n: usize, values: Vec<f64>) -> Result<Self> {
        if n == 0 || values.len() != n * n {
            return Err(Error::DimensionMismatch(format!("{} values for a {n}×{n} grid", values.len())));
        }
        Ok(Self { n, values })
    }

    pub fn from_fn(n: usize, mut f: impl FnMut(Point2) -> f64) -> Result<Self> {
        let mut values = Vec::with_capacity(n * n);
        for i in 0..n {
            for j in 0..n {
                values.push(f(Point2::pixel_center(i, j, n, n)));
            }
        }
        Self::new(n, values)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.n + col]
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

pub const MIN_GRID: usize = 8;

fn check_grid_size(n: usize) -> Result<()> {
    if n < MIN_GRID {
        return Err(Error::Config(format!("grid resolution {n} is below {MIN_GRID}")));
    }
    Ok(())
}

/// Samples layer `layer` (0 = front-most) on the `n × n` pixel-center grid.
pub fn sample_grid<F: OccupancyField + ?Sized>(field: &F, layer: usize, n: usize) -> Result<ScalarGrid> {
    check_grid_size(n)?;
    let layers = field.layer_count();
    if layer >= layers {
        return Err(Error::Config(format!("layer {layer} does not exist in a {layers}-layer field")));
    }
    let mut s = vec![0.0; layers];
    ScalarGrid::from_fn(n, |p| {
        field.occupancy_into(p, &mut s);
        s[layer]
    })
}

/// Samples every layer in one sweep over the grid.
pub fn sample_grids<F: OccupancyField + ?Sized>(field: &F, n: usize) -> Result<Vec<ScalarGrid>> {
    check_grid_size(n)?;
    let layers = field.layer_count();
    let mut values = vec![Vec::with_capacity(n * n); layers];
    let mut s = vec![0.0; layers];
    for i in 0..n {
        for j in 0..n {
            field.occupancy_into(Point2::pixel_center(i, j, n, n), &mut s);
            for (v, &x) in values.iter_mut().zip(&s) {
                v.push(x);
            }
        }
    }
    values.into_iter().map(|v| ScalarGrid::new(n, v)).collect()
}

/// A closed polyline in unit-square coordinates; the first vertex is
/// repeated at the end.
#[derive(Debug, Clone, PartialEq)]
pub struct Contour {
    pub points: Vec<Point2>,
}

impl Contour {
    /// Vertices without the closing duplicate.
    pub fn vertices(&self) -> &[Point2] {
        &self.points[..self.points.len().saturating_sub(1)]
    }

    /// Shoelace area; positive for outer boundaries, negative for holes.
    pub fn signed_area(&self) -> f64 {
        self.points.windows(2).map(|w| w[0].x * w[1].y - w[1].x * w[0].y).sum::<f64>() / 2.0
    }

    pub fn is_hole(&self) -> bool {
        self.signed_area() < 0.0
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ContourSet {
    pub contours: Vec<Contour>,
}

impl ContourSet {
    pub fn len(&self) -> usize {
        self.contours.len()
    }

    pub fn is_empty(&self) -> bool {
        self.contours.is_empty()
    }

    /// Net enclosed area: outer areas minus holes.
    pub fn area(&self) -> f64 {
        self.contours.iter().map(Contour::signed_area).sum()
    }

    /// Outer boundaries minus holes.
    pub fn euler_characteristic(&self) -> i64 {
        self.contours.iter().map(|c| if c.is_hole() { -1 } else { 1 }).sum()
    }
}

pub const DEFAULT_ISO: f64 = 0.5;

/// Marching squares with saddles resolved by the average of the four corners.
pub fn marching_squares(grid: &ScalarGrid, iso: f64) -> ContourSet {
    let n = grid.n;
    marching_squares_with(grid, iso, |p| {
        // Cell centers sit on pixel corners: invert to the grid's four neighbours.
        let j = (p.x * n as f64).round() as usize;
        let i = (p.y * n as f64).round() as usize;
        (grid.get(i - 1, j - 1) + grid.get(i - 1, j) + grid.get(i, j - 1) + grid.get(i, j)) / 4.0
    })
}

/// Edge identity: (is_vertical, row, col) on the padded node lattice.
type EdgeKey = (bool, usize, usize);

/// Marching squares over the grid framed by a ring of zeros, so shapes
/// touching the border still close. `center` evaluates the field at a cell
/// center and decides ambiguous saddle cells.
///
/// Each segment runs with the inside (value above `iso`) on its left, so
/// outer boundaries have positive signed area and holes negative. Contours
/// enclosing less than `(3/n)²` are dropped.
pub fn marching_squares_with(grid: &ScalarGrid, iso: f64, mut center: impl FnMut(Point2) -> f64) -> ContourSet {
    let n = grid.n;
    let m = n + 2;
    let node = |pi: usize, pj: usize| -> f64 {
        if pi == 0 || pj == 0 || pi == m - 1 || pj == m - 1 {
            0.0
        } else {
            grid.get(pi - 1, pj - 1)
        }
    };
    let position = |pi: usize, pj: usize| Point2::new((pj as f64 - 0.5) / n as f64, (pi as f64 - 0.5) / n as f64);
    let crossing = |key: EdgeKey| -> Point2 {
        let (vertical, i, j) = key;
        let (a, b) = if vertical { ((i, j), (i + 1, j)) } else { ((i, j), (i, j + 1)) };
        let (va, vb) = (node(a.0, a.1), node(b.0, b.1));
        let t = (iso - va) / (vb - va);
        let (pa, pb) = (position(a.0, a.1), position(b.0, b.1));
        Point2::new(
            (pa.x + t * (pb.x - pa.x)).clamp(0.0, 1.0),
            (pa.y + t * (pb.y - pa.y)).clamp(0.0, 1.0),
        )
    };

    // Segments keyed by their start edge; `order` keeps scan order for
    // deterministic output.
    let mut next: HashMap<EdgeKey, EdgeKey> = HashMap::new();
    let mut order: Vec<EdgeKey> = Vec::new();
    for i in 0..m - 1 {
        for j in 0..m - 1 {
            // Corners clockwise on screen: top-left, top-right, bottom-right, bottom-left.
            let v = [node(i, j), node(i, j + 1), node(i + 1, j + 1), node(i + 1, j)];
            let inside = v.map(|x| x > iso);
            let count = inside.iter().filter(|&&b| b).count();
            if count == 0 || count == 4 {
                continue;
            }
            // Edge e joins corner e to corner e+1.
            let edges: [EdgeKey; 4] = [(false, i, j), (true, i, j + 1), (false, i + 1, j), (true, i, j)];
            let starts: Vec<usize> = (0..4).filter(|&e| inside[e] && !inside[(e + 1) % 4]).collect();
            let ends: Vec<usize> = (0..4).filter(|&e| !inside[e] && inside[(e + 1) % 4]).collect();
            if starts.len() == 1 {
                next.insert(edges[starts[0]], edges[ends[0]]);
                order.push(edges[starts[0]]);
            } else {
                let c = Point2::new(j as f64 / n as f64, i as f64 / n as f64);
                let joined = center(c) > iso;
                for &s in &starts {
                    let e = if joined { (s + 1) % 4 } else { (s + 3) % 4 };
                    next.insert(edges[s], edges[e]);
                    order.push(edges[s]);
                }
            }
        }
    }

    let min_area = (3.0 / n as f64).powi(2);
    let mut contours = Vec::new();
    for start in order {
        let Some(mut cur) = next.remove(&start) else {
            continue;
        };
        let mut points = vec![crossing(start)];
        loop {
            let p = crossing(cur);
            if points.last() != Some(&p) {
                points.push(p);
            }
            if cur == start {
                break;
            }
            cur = next.remove(&cur).expect("marching-squares segments form closed loops");
        }
        if points.first() != points.last() {
            points.push(points[0]);
        }
        let contour = Contour { points };
        if contour.points.len() >= 4 && contour.signed_area().abs() >= min_area {
            contours.push(contour);
        }
    }
    ContourSet { contours }
}
