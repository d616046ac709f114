//! Least-squares cubic Bézier fitting of polylines.
//!
//! Chord-length parameters are refined by Newton–Raphson steps between
//! least-squares solves; pieces that still miss the tolerance are split at
//! their worst vertex with a shared tangent. Closed contours are first cut
//! at sharp corners.

use crate::error::{Error, Result};
use crate::field::Point2;

pub const DEFAULT_CORNER_ANGLE_DEG: f64 = 60.0;

const MAX_REPARAM: usize = 100;

fn sub(a: Point2, b: Point2) -> Point2 {
    Point2::new(a.x - b.x, a.y - b.y)
}

fn add(a: Point2, b: Point2) -> Point2 {
    Point2::new(a.x + b.x, a.y + b.y)
}

fn scale(a: Point2, s: f64) -> Point2 {
    Point2::new(a.x * s, a.y * s)
}

fn dot(a: Point2, b: Point2) -> f64 {
    a.x * b.x + a.y * b.y
}

fn dist(a: Point2, b: Point2) -> f64 {
    (a.x - b.x).hypot(a.y - b.y)
}

fn normalize(a: Point2) -> Option<Point2> {
    let len = a.x.hypot(a.y);
    (len > 0.0).then(|| scale(a, 1.0 / len))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CubicSegment {
    pub p: [Point2; 4],
}

impl CubicSegment {
    pub fn eval(&self, t: f64) -> Point2 {
        let s = 1.0 - t;
        let [a, b, c, d] = self.p;
        let (w0, w1, w2, w3) = (s * s * s, 3.0 * s * s * t, 3.0 * s * t * t, t * t * t);
        Point2::new(
            w0 * a.x + w1 * b.x + w2 * c.x + w3 * d.x,
            w0 * a.y + w1 * b.y + w2 * c.y + w3 * d.y,
        )
    }

    pub fn derivative(&self, t: f64) -> Point2 {
        let s = 1.0 - t;
        let [a, b, c, d] = self.p;
        let d0 = sub(b, a);
        let d1 = sub(c, b);
        let d2 = sub(d, c);
        scale(add(add(scale(d0, s * s), scale(d1, 2.0 * s * t)), scale(d2, t * t)), 3.0)
    }

    pub fn second_derivative(&self, t: f64) -> Point2 {
        let [a, b, c, d] = self.p;
        let e0 = add(sub(c, scale(b, 2.0)), a);
        let e1 = add(sub(d, scale(c, 2.0)), b);
        scale(add(scale(e0, 1.0 - t), scale(e1, t)), 6.0)
    }

    /// Distance from `q` to the segment, by dense sampling and Newton polish.
    pub fn distance_to(&self, q: Point2) -> f64 {
        const SAMPLES: usize = 64;
        let mut best_t = 0.0;
        let mut best = f64::INFINITY;
        for k in 0..=SAMPLES {
            let t = k as f64 / SAMPLES as f64;
            let d = dist(self.eval(t), q);
            if d < best {
                best = d;
                best_t = t;
            }
        }
        let mut t = best_t;
        for _ in 0..8 {
            t = newton_step(self, q, t);
            best = best.min(dist(self.eval(t), q));
        }
        best
    }
}

fn newton_step(seg: &CubicSegment, q: Point2, t: f64) -> f64 {
    let r = sub(seg.eval(t), q);
    let d1 = seg.derivative(t);
    let d2 = seg.second_derivative(t);
    let den = dot(d1, d1) + dot(r, d2);
    if den.abs() < 1e-300 {
        return t;
    }
    (t - dot(r, d1) / den).clamp(0.0, 1.0)
}

/// A chain of cubic segments; consecutive segments share endpoints, and a
/// closed path's last segment ends at the first one's start.
#[derive(Debug, Clone, PartialEq)]
pub struct BezierPath {
    pub segments: Vec<CubicSegment>,
    pub closed: bool,
}

impl BezierPath {
    pub fn len(&self) -> usize {
        self.segments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.segments.is_empty()
    }

    /// Largest distance from any of `points` to the path.
    pub fn max_deviation(&self, points: &[Point2]) -> f64 {
        points
            .iter()
            .map(|&q| self.segments.iter().map(|s| s.distance_to(q)).fold(f64::INFINITY, f64::min))
            .fold(0.0, f64::max)
    }

    /// Polyline approximation with chord deviation below `tol`.
    pub fn flatten(&self, tol: f64) -> Vec<Point2> {
        let mut out = Vec::new();
        if let Some(first) = self.segments.first() {
            out.push(first.p[0]);
        }
        for seg in &self.segments {
            let [a, b, c, d] = seg.p;
            let dd0 = add(sub(a, scale(b, 2.0)), c);
            let dd1 = add(sub(b, scale(c, 2.0)), d);
            let m = dd0.x.hypot(dd0.y).max(dd1.x.hypot(dd1.y));
            // Wang's bound for cubics: error ≤ (3·2/8)·m / k².
            let k = ((0.75 * m / tol).sqrt().ceil() as usize).max(1);
            for i in 1..=k {
                out.push(seg.eval(i as f64 / k as f64));
            }
        }
        out
    }
}

/// Solves the small normal-equation system `a x = b` in place.
fn solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    let scale_ref = a.iter().flatten().fold(0.0f64, |m, v| m.max(v.abs()));
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[piv][col].abs() <= 1e-14 * scale_ref.max(1e-300) {
            return None;
        }
        a.swap(col, piv);
        b.swap(col, piv);
        for row in col + 1..n {
            let f = a[row][col] / a[col][col];
            for k in col..n {
                a[row][k] -= f * a[col][k];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let s: f64 = (row + 1..n).map(|k| a[row][k] * x[k]).sum();
        x[row] = (b[row] - s) / a[row][row];
    }
    Some(x)
}

/// Least-squares inner control points for fixed parameters. A `Some`
/// tangent constrains the control point to lie along it (unit vectors, the
/// end tangent pointing back into the curve); `None` leaves it free.
fn least_squares(pts: &[Point2], u: &[f64], t1: Option<Point2>, t2: Option<Point2>) -> CubicSegment {
    let p0 = pts[0];
    let p3 = pts[pts.len() - 1];
    let heuristic = || {
        let d = dist(p0, p3) / 3.0;
        let chord = normalize(sub(p3, p0)).unwrap_or(Point2::new(0.0, 0.0));
        let a = t1.unwrap_or(chord);
        let b = t2.unwrap_or(scale(chord, -1.0));
        CubicSegment {
            p: [p0, add(p0, scale(a, d)), add(p3, scale(b, d)), p3],
        }
    };

    // Columns: one scalar per constrained end, two (x, y) per free end.
    // Each column is the (x, y) pair it contributes per unit of unknown.
    let mut cols: Vec<Box<dyn Fn(f64) -> Point2>> = Vec::new();
    match t1 {
        Some(t) => cols.push(Box::new(move |b1| scale(t, b1))),
        None => {
            cols.push(Box::new(|b1| Point2::new(b1, 0.0)));
            cols.push(Box::new(|b1| Point2::new(0.0, b1)));
        }
    }
    let first_p2 = cols.len();
    match t2 {
        Some(t) => cols.push(Box::new(move |b2| scale(t, b2))),
        None => {
            cols.push(Box::new(|b2| Point2::new(b2, 0.0)));
            cols.push(Box::new(|b2| Point2::new(0.0, b2)));
        }
    }
    let k = cols.len();
    let mut ata = vec![vec![0.0; k]; k];
    let mut atb = vec![0.0; k];
    for (&q, &t) in pts.iter().zip(u) {
        let s = 1.0 - t;
        let (b0, b1, b2, b3) = (s * s * s, 3.0 * s * s * t, 3.0 * s * t * t, t * t * t);
        // Fixed part: endpoints plus the anchored share of constrained points.
        let mut fixed = add(scale(p0, b0), scale(p3, b3));
        if t1.is_some() {
            fixed = add(fixed, scale(p0, b1));
        }
        if t2.is_some() {
            fixed = add(fixed, scale(p3, b2));
        }
        let r = sub(q, fixed);
        let a: Vec<Point2> = (0..k).map(|c| cols[c](if c < first_p2 { b1 } else { b2 })).collect();
        for i in 0..k {
            atb[i] += dot(a[i], r);
            for j in 0..k {
                ata[i][j] += dot(a[i], a[j]);
            }
        }
    }
    let Some(x) = solve(ata, atb) else {
        return heuristic();
    };
    let seg_len = dist(p0, p3);
    let mut idx = 0;
    let mut next_point = |tangent: Option<Point2>, anchor: Point2| -> Option<Point2> {
        match tangent {
            Some(t) => {
                let alpha = x[idx];
                idx += 1;
                (alpha > 1e-6 * seg_len).then(|| add(anchor, scale(t, alpha)))
            }
            None => {
                let p = Point2::new(x[idx], x[idx + 1]);
                idx += 2;
                Some(p)
            }
        }
    };
    match (next_point(t1, p0), next_point(t2, p3)) {
        (Some(c1), Some(c2)) => CubicSegment { p: [p0, c1, c2, p3] },
        _ => heuristic(),
    }
}

fn chord_params(pts: &[Point2]) -> Vec<f64> {
    let mut u = Vec::with_capacity(pts.len());
    let mut acc = 0.0;
    u.push(0.0);
    for w in pts.windows(2) {
        acc += dist(w[0], w[1]);
        u.push(acc);
    }
    let total = acc;
    if total > 0.0 {
        for v in &mut u {
            *v /= total;
        }
    }
    u
}

/// Largest squared deviation at the given parameters, and where.
fn max_error(seg: &CubicSegment, pts: &[Point2], u: &[f64]) -> (f64, usize) {
    let mut worst = (0.0, pts.len() / 2);
    for (i, (&q, &t)) in pts.iter().zip(u).enumerate() {
        let r = sub(seg.eval(t), q);
        let e = dot(r, r);
        if e > worst.0 {
            worst = (e, i);
        }
    }
    worst
}

/// Fits `pts` (first and last are interpolated) and appends the segments.
/// Returns the largest vertex deviation achieved.
fn fit_piece(pts: &[Point2], t1: Option<Point2>, t2: Option<Point2>, tol: f64, out: &mut Vec<CubicSegment>) -> f64 {
    let (p0, p3) = (pts[0], pts[pts.len() - 1]);
    if pts.len() == 2 {
        let d = dist(p0, p3) / 3.0;
        let chord = normalize(sub(p3, p0)).unwrap_or(Point2::new(0.0, 0.0));
        let a = t1.unwrap_or(chord);
        let b = t2.unwrap_or(scale(chord, -1.0));
        out.push(CubicSegment {
            p: [p0, add(p0, scale(a, d)), add(p3, scale(b, d)), p3],
        });
        return 0.0;
    }
    let tol2 = tol * tol;
    let mut u = chord_params(pts);
    let mut seg = least_squares(pts, &u, t1, t2);
    let (mut err, mut split) = max_error(&seg, pts, &u);
    for _ in 0..MAX_REPARAM {
        if err <= tol2 {
            break;
        }
        let u_new: Vec<f64> = pts.iter().zip(&u).map(|(&q, &t)| newton_step(&seg, q, t)).collect();
        let seg_new = least_squares(pts, &u_new, t1, t2);
        let (err_new, split_new) = max_error(&seg_new, pts, &u_new);
        if err_new >= err * 0.999 {
            if err_new < err {
                (seg, err, split) = (seg_new, err_new, split_new);
            }
            break;
        }
        (seg, err, split, u) = (seg_new, err_new, split_new, u_new);
    }
    if err <= tol2 {
        out.push(seg);
        return err.sqrt();
    }
    let split = split.clamp(1, pts.len() - 2);
    let center = normalize(sub(pts[split - 1], pts[split + 1]))
        .or_else(|| normalize(sub(pts[split - 1], pts[split])))
        .or_else(|| normalize(sub(pts[0], pts[split])))
        .unwrap_or(Point2::new(-1.0, 0.0));
    let left = fit_piece(&pts[..=split], t1, Some(center), tol, out);
    let right = fit_piece(&pts[split..], Some(scale(center, -1.0)), t2, tol, out);
    left.max(right)
}

fn dedup(points: &[Point2]) -> Vec<Point2> {
    let mut out: Vec<Point2> = Vec::with_capacity(points.len());
    for &p in points {
        if out.last() != Some(&p) {
            out.push(p);
        }
    }
    out
}

/// Fits an open polyline with unconstrained end tangents.
pub fn fit_open(points: &[Point2], tol: f64) -> Result<BezierPath> {
    let pts = dedup(points);
    if pts.len() < 2 {
        return Err(Error::Degenerate("all points coincide".into()));
    }
    let mut segments = Vec::new();
    let achieved = fit_piece(&pts, None, None, tol, &mut segments);
    debug_assert!(achieved <= tol || pts.len() == 2);
    Ok(BezierPath {
        segments,
        closed: false,
    })
}

/// Vertices whose turning angle, measured between neighbours at least
/// `window` away along the contour, exceeds `angle`. Runs of candidates keep
/// only their sharpest vertex.
fn detect_corners(v: &[Point2], window: f64, angle: f64) -> Vec<usize> {
    let n = v.len();
    let reach = |i: usize, forward: bool| -> Point2 {
        let mut acc = 0.0;
        let mut j = i;
        for _ in 0..n / 4 {
            let k = if forward { (j + 1) % n } else { (j + n - 1) % n };
            acc += dist(v[j], v[k]);
            j = k;
            if acc >= window {
                break;
            }
        }
        v[j]
    };
    let turning: Vec<f64> = (0..n)
        .map(|i| {
            let a = normalize(sub(v[i], reach(i, false)));
            let b = normalize(sub(reach(i, true), v[i]));
            match (a, b) {
                (Some(a), Some(b)) => dot(a, b).clamp(-1.0, 1.0).acos(),
                _ => 0.0,
            }
        })
        .collect();
    let is_candidate = |i: usize| turning[i] > angle;
    let mut corners = Vec::new();
    for i in 0..n {
        if !is_candidate(i) {
            continue;
        }
        // Keep the first maximum within its cyclic run of candidates.
        let mut keep = true;
        let mut j = (i + n - 1) % n;
        while j != i && is_candidate(j) {
            if turning[j] >= turning[i] {
                keep = false;
                break;
            }
            j = (j + n - 1) % n;
        }
        let mut j = (i + 1) % n;
        while keep && j != i && is_candidate(j) {
            if turning[j] > turning[i] {
                keep = false;
            }
            j = (j + 1) % n;
        }
        if keep {
            corners.push(i);
        }
    }
    corners
}

/// Fits a closed polyline (first vertex repeated at the end or not).
///
/// Vertices never deviate from the fitted path by more than `tol`.
pub fn fit_beziers(points: &[Point2], tol: f64) -> Result<BezierPath> {
    fit_beziers_with(points, tol, DEFAULT_CORNER_ANGLE_DEG)
}

pub fn fit_beziers_with(points: &[Point2], tol: f64, corner_angle_deg: f64) -> Result<BezierPath> {
    if !(tol > 0.0) {
        return Err(Error::Config(format!("fit tolerance must be positive, got {tol}")));
    }
    let mut v = dedup(points);
    if v.len() > 1 && v.first() == v.last() {
        v.pop();
    }
    if v.len() < 3 {
        return Err(Error::Degenerate(format!("closed contour with {} distinct vertices", v.len())));
    }
    let n = v.len();
    let corners = detect_corners(&v, tol, corner_angle_deg.to_radians());
    let mut segments = Vec::new();
    let mut achieved: f64 = 0.0;
    if corners.is_empty() {
        let t = normalize(sub(v[1], v[n - 1])).ok_or_else(|| Error::Degenerate("no tangent at start".into()))?;
        let mut pts = v.clone();
        pts.push(v[0]);
        achieved = fit_piece(&pts, Some(t), Some(scale(t, -1.0)), tol, &mut segments);
    } else {
        for (c, &start) in corners.iter().enumerate() {
            let end = corners[(c + 1) % corners.len()];
            let len = if end > start { end - start } else { end + n - start };
            let pts: Vec<Point2> = (0..=len).map(|k| v[(start + k) % n]).collect();
            achieved = achieved.max(fit_piece(&pts, None, None, tol, &mut segments));
        }
    }
    debug_assert!(achieved <= tol, "fit deviation {achieved} exceeds {tol}");
    Ok(BezierPath { segments, closed: true })
}
