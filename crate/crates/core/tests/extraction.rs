use std::f64::consts::PI;

use implicit_layers::extraction::{
    extract, fit_beziers, iou, marching_squares, rasterize_masks, rasterize_paths, read_svg, sample_grid, emit_svg, BezierPath,
    ExtractOptions, SvgStyle,
};
use implicit_layers::fixtures::AnalyticField;
use implicit_layers::Point2;

fn svg_round_trip_iou(fixture: &AnalyticField, n: usize) -> Vec<f64> {
    let doc = extract(fixture, &fixture.palette(), &ExtractOptions::with_grid(n)).unwrap();
    let masks = rasterize_masks(&read_svg(&emit_svg(&doc, n, SvgStyle::Fill).unwrap()).unwrap(), n).unwrap();
    doc.layers
        .iter()
        .zip(&masks)
        .map(|(layer, mask)| {
            let implicit: Vec<bool> = sample_grid(fixture, layer.index, n).unwrap().values().iter().map(|&v| v > 0.5).collect();
            iou(mask, &implicit)
        })
        .collect()
}

#[test]
fn disk_doc_covers_the_analytic_area() {
    let n = 256;
    let disk = AnalyticField::disk();
    let doc = extract(&disk, &disk.palette(), &ExtractOptions::with_grid(n)).unwrap();
    let covered = rasterize_masks(&doc, n).unwrap()[0].iter().filter(|&&b| b).count() as f64;
    let analytic = PI * 0.09 * (n * n) as f64;
    assert!((covered - analytic).abs() / analytic < 0.015, "{covered} vs {analytic}");
}

#[test]
fn disk_round_trip_iou() {
    let v = svg_round_trip_iou(&AnalyticField::disk(), 256);
    assert!(v[0] >= 0.98, "{v:?}");
}

#[test]
fn three_layer_round_trip_iou() {
    let v = svg_round_trip_iou(&AnalyticField::three_layer(), 256);
    assert_eq!(v.len(), 2);
    assert!(v.iter().all(|&x| x >= 0.98), "{v:?}");
}

#[test]
fn annulus_round_trip_iou() {
    let v = svg_round_trip_iou(&AnalyticField::annulus(), 256);
    assert!(v.iter().all(|&x| x >= 0.98), "{v:?}");
}

#[test]
fn front_layer_color_wins_in_the_re_raster() {
    let fx = AnalyticField::three_layer();
    let doc = extract(&fx, &fx.palette(), &ExtractOptions::with_grid(128)).unwrap();
    let img = rasterize_paths(&doc, 128).unwrap();
    let overlap = img.pixel(64, 64);
    let p = Point2::pixel_center(64, 64, 128, 128);
    assert!(fx.layers[0].contains(p) && fx.layers[1].contains(p));
    assert_eq!(overlap, fx.palette().colors[0]);
}

#[test]
fn topology_matches_the_fixtures() {
    for (fixture, expected) in [(AnalyticField::disk(), 1), (AnalyticField::annulus(), 0)] {
        let set = marching_squares(&sample_grid(&fixture, 0, 128).unwrap(), 0.5);
        assert_eq!(set.euler_characteristic(), expected);
    }
}

fn hausdorff_to_circle(points: &[Point2], r: f64) -> f64 {
    let radial = |p: Point2| ((p.x - 0.5).hypot(p.y - 0.5) - r).abs();
    let mut worst = 0.0f64;
    for w in points.windows(2) {
        for k in 0..=8 {
            let t = k as f64 / 8.0;
            worst = worst.max(radial(Point2::new(w[0].x + t * (w[1].x - w[0].x), w[0].y + t * (w[1].y - w[0].y))));
        }
    }
    worst
}

#[test]
fn refining_the_grid_never_moves_the_contour_away() {
    let disk = AnalyticField::disk();
    let mut last = f64::INFINITY;
    for n in [32, 64, 128, 256, 512] {
        let set = marching_squares(&sample_grid(&disk, 0, n).unwrap(), 0.5);
        let d = hausdorff_to_circle(set.contours[0].vertices(), 0.3);
        assert!(d <= last, "n={n}: {d} > {last}");
        last = d;
    }
}

#[test]
fn every_fitted_path_stays_within_tolerance_of_its_contour() {
    let n = 256;
    let opts = ExtractOptions::with_grid(n);
    for fixture in [AnalyticField::disk(), AnalyticField::annulus(), AnalyticField::three_layer()] {
        for l in 0..fixture.layers.len() {
            let set = marching_squares(&sample_grid(&fixture, l, n).unwrap(), 0.5);
            for c in &set.contours {
                let path: BezierPath = fit_beziers(&c.points, opts.tolerance()).unwrap();
                assert!(path.max_deviation(c.vertices()) <= opts.tolerance());
            }
        }
    }
}
