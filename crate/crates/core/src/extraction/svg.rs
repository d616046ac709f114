//! Layered vector documents, SVG output and the even-odd re-rasterizer.

use std::fmt::Write as _;

use super::bezier::{BezierPath, CubicSegment};
use crate::compositor::Rgb;
use crate::error::{Error, Result};
use crate::field::Point2;
use crate::raster::RasterImage;

#[derive(Debug, Clone, PartialEq)]
pub struct VectorLayer {
    /// Index of the source implicit layer (0 = front-most).
    pub index: usize,
    pub paths: Vec<BezierPath>,
    pub fill: Rgb,
}

/// Layers front-most first over a background, on the unit square.
#[derive(Debug, Clone, PartialEq)]
pub struct LayeredVectorDoc {
    pub layers: Vec<VectorLayer>,
    pub background: Rgb,
}

impl LayeredVectorDoc {
    pub fn empty(background: Rgb) -> Self {
        Self {
            layers: Vec::new(),
            background,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let colors = self.layers.iter().map(|l| &l.fill).chain(std::iter::once(&self.background));
        for c in colors {
            if c.iter().any(|v| !(0.0..=1.0).contains(v)) {
                return Err(Error::Invariant(format!("color {c:?} outside [0,1]")));
            }
        }
        for l in &self.layers {
            for p in &l.paths {
                if !p.closed {
                    return Err(Error::Invariant(format!("layer {} holds an open path", l.index)));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SvgStyle {
    /// Flat even-odd fills, no strokes.
    Fill,
    /// Outlines only, stroke width in SVG pixels.
    Stroke { width: f64 },
}

pub fn hex_color(c: Rgb) -> String {
    let b = c.map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8);
    format!("#{:02x}{:02x}{:02x}", b[0], b[1], b[2])
}

fn path_data(paths: &[BezierPath], size: f64) -> String {
    let mut d = String::new();
    let pt = |d: &mut String, cmd: &str, p: Point2| {
        if !d.is_empty() {
            d.push(' ');
        }
        let _ = write!(d, "{cmd}{:.3} {:.3}", p.x * size, p.y * size);
    };
    for path in paths {
        let Some(first) = path.segments.first() else {
            continue;
        };
        pt(&mut d, "M", first.p[0]);
        for seg in &path.segments {
            pt(&mut d, "C", seg.p[1]);
            pt(&mut d, "", seg.p[2]);
            pt(&mut d, "", seg.p[3]);
        }
        if path.closed {
            d.push_str(" Z");
        }
    }
    d
}

/// SVG 1.1 text with a `0 0 size size` view box. The background rectangle is
/// painted first, then layers back to front.
pub fn emit_svg(doc: &LayeredVectorDoc, pixel_size: usize, style: SvgStyle) -> Result<String> {
    doc.validate()?;
    if pixel_size == 0 {
        return Err(Error::Config("SVG size must be positive".into()));
    }
    let size = pixel_size as f64;
    let mut svg = String::new();
    let _ = writeln!(svg, r#"<?xml version="1.0" encoding="UTF-8"?>"#);
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{pixel_size}" height="{pixel_size}" viewBox="0 0 {pixel_size} {pixel_size}">"#
    );
    let _ = writeln!(
        svg,
        r#"  <rect x="0" y="0" width="{pixel_size}" height="{pixel_size}" fill="{}"/>"#,
        hex_color(doc.background)
    );
    for layer in doc.layers.iter().rev() {
        let d = path_data(&layer.paths, size);
        if d.is_empty() {
            continue;
        }
        let color = hex_color(layer.fill);
        let paint = match style {
            SvgStyle::Fill => format!(r#"fill="{color}" fill-rule="evenodd" stroke="none""#),
            SvgStyle::Stroke { width } => format!(r#"fill="none" stroke="{color}" stroke-width="{width}""#),
        };
        let _ = writeln!(svg, r#"  <path id="layer-{}" {paint} d="{d}"/>"#, layer.index + 1);
    }
    svg.push_str("</svg>\n");
    Ok(svg)
}

/// Per-layer coverage masks (`n × n`, row-major) of the flattened paths
/// under the even-odd rule, sampled at pixel centers.
pub fn rasterize_masks(doc: &LayeredVectorDoc, n: usize) -> Result<Vec<Vec<bool>>> {
    if n < 8 {
        return Err(Error::Config(format!("raster size {n} is below 8")));
    }
    let tol = 0.25 / n as f64;
    Ok(doc
        .layers
        .iter()
        .map(|layer| {
            let polys: Vec<Vec<Point2>> = layer.paths.iter().map(|p| p.flatten(tol)).collect();
            scanline_even_odd(&polys, n)
        })
        .collect())
}

fn scanline_even_odd(polys: &[Vec<Point2>], n: usize) -> Vec<bool> {
    let mut mask = vec![false; n * n];
    let mut xs = Vec::new();
    for i in 0..n {
        let y = (i as f64 + 0.5) / n as f64;
        xs.clear();
        for poly in polys {
            let m = poly.len();
            for k in 0..m {
                let (a, b) = (poly[k], poly[(k + 1) % m]);
                if (a.y <= y) != (b.y <= y) {
                    xs.push(a.x + (y - a.y) * (b.x - a.x) / (b.y - a.y));
                }
            }
        }
        xs.sort_by(f64::total_cmp);
        for pair in xs.chunks_exact(2) {
            let j0 = ((pair[0] * n as f64 - 0.5).ceil().max(0.0) as usize).min(n);
            let j1 = ((pair[1] * n as f64 - 0.5).ceil().max(0.0) as usize).min(n);
            for cell in &mut mask[i * n + j0..i * n + j1] {
                *cell = true;
            }
        }
    }
    mask
}

/// Flat-fill raster of the document at `n × n`.
pub fn rasterize_paths(doc: &LayeredVectorDoc, n: usize) -> Result<RasterImage> {
    let masks = rasterize_masks(doc, n)?;
    let mut img = RasterImage::filled(n, n, doc.background)?;
    for (layer, mask) in doc.layers.iter().zip(&masks).rev() {
        for (px, &on) in img.data_mut().chunks_exact_mut(3).zip(mask) {
            if on {
                px.copy_from_slice(&layer.fill);
            }
        }
    }
    Ok(img)
}

/// Intersection over union of two masks; two empty masks score 1.
pub fn iou(a: &[bool], b: &[bool]) -> f64 {
    let inter = a.iter().zip(b).filter(|(x, y)| **x && **y).count();
    let union = a.iter().zip(b).filter(|(x, y)| **x || **y).count();
    if union == 0 {
        1.0
    } else {
        inter as f64 / union as f64
    }
}

fn attr<'a>(tag: &'a str, name: &str) -> Option<&'a str> {
    let key = format!(" {name}=\"");
    let start = tag.find(&key)? + key.len();
    let len = tag[start..].find('"')?;
    Some(&tag[start..start + len])
}

fn parse_hex(text: &str) -> Result<Rgb> {
    let bad = || Error::Format(format!("bad color {text:?}"));
    let hex = text.strip_prefix('#').filter(|h| h.len() == 6).ok_or_else(bad)?;
    let mut c = [0.0; 3];
    for (i, v) in c.iter_mut().enumerate() {
        *v = u8::from_str_radix(&hex[2 * i..2 * i + 2], 16).map_err(|_| bad())? as f64 / 255.0;
    }
    Ok(c)
}

/// Consumes `pending` once it holds a full coordinate set for `command`.
fn take_coordinates(
    command: char,
    pending: &mut Vec<f64>,
    current: &mut Option<BezierPath>,
    start: &mut Point2,
    size: f64,
) -> Result<()> {
    let pt = |x: f64, y: f64| Point2::new(x / size, y / size);
    match (command, pending.len()) {
        ('M', 2) => {
            *start = pt(pending[0], pending[1]);
            *current = Some(BezierPath {
                segments: Vec::new(),
                closed: false,
            });
        }
        ('C', 6) => {
            let path = current.as_mut().ok_or_else(|| Error::Format("path data: curve before move".into()))?;
            let p0 = path.segments.last().map_or(*start, |s| s.p[3]);
            path.segments.push(CubicSegment {
                p: [p0, pt(pending[0], pending[1]), pt(pending[2], pending[3]), pt(pending[4], pending[5])],
            });
        }
        ('M' | 'C', _) => return Ok(()),
        _ => return Err(Error::Format(format!("path data: unexpected coordinates after {command:?}"))),
    }
    pending.clear();
    Ok(())
}

fn parse_path_data(d: &str, size: f64) -> Result<Vec<BezierPath>> {
    let bad = |msg: String| Error::Format(format!("path data: {msg}"));
    let mut paths = Vec::new();
    let mut current: Option<BezierPath> = None;
    let mut start = Point2::new(0.0, 0.0);
    let mut pending = Vec::new();
    let mut command = ' ';
    for token in d.split_whitespace() {
        let (head, number) = match token.chars().next() {
            Some(c @ ('M' | 'C' | 'Z')) => (Some(c), &token[1..]),
            _ => (None, token),
        };
        if let Some(c) = head {
            if !pending.is_empty() {
                return Err(bad("incomplete coordinates".into()));
            }
            command = c;
            match c {
                'M' => paths.extend(current.take()),
                'Z' => {
                    let mut path = current.take().ok_or_else(|| bad("close without path".into()))?;
                    path.closed = true;
                    paths.push(path);
                }
                _ => {}
            }
        }
        if number.is_empty() {
            continue;
        }
        pending.push(number.parse::<f64>().map_err(|_| bad(format!("bad number {number:?}")))?);
        take_coordinates(command, &mut pending, &mut current, &mut start, size)?;
    }
    if !pending.is_empty() {
        return Err(bad("incomplete coordinates".into()));
    }
    paths.extend(current);
    Ok(paths)
}

/// Reads back a document written by [`emit_svg`]. Colors come back
/// quantized to 8 bits and coordinates to the printed precision.
pub fn read_svg(text: &str) -> Result<LayeredVectorDoc> {
    let svg_tag = text.find("<svg").map(|i| &text[i..]).ok_or_else(|| Error::Format("no <svg> element".into()))?;
    let view = attr(svg_tag, "viewBox").ok_or_else(|| Error::Format("no viewBox".into()))?;
    let size: f64 = view
        .split_whitespace()
        .nth(2)
        .and_then(|v| v.parse().ok())
        .filter(|&v: &f64| v > 0.0)
        .ok_or_else(|| Error::Format(format!("bad viewBox {view:?}")))?;
    let rect = text.find("<rect").map(|i| &text[i..]).ok_or_else(|| Error::Format("no background".into()))?;
    let background = parse_hex(attr(rect, "fill").unwrap_or_default())?;
    let mut layers = Vec::new();
    for chunk in text.split("<path").skip(1) {
        let tag = &chunk[..chunk.find("/>").ok_or_else(|| Error::Format("unterminated path".into()))?];
        let tag = format!(" {tag}");
        let index = attr(&tag, "id")
            .and_then(|id| id.strip_prefix("layer-"))
            .and_then(|n| n.parse::<usize>().ok())
            .filter(|&n| n >= 1)
            .ok_or_else(|| Error::Format("path without a layer id".into()))?;
        let color = match attr(&tag, "fill") {
            Some("none") | None => attr(&tag, "stroke").unwrap_or_default(),
            Some(fill) => fill,
        };
        layers.push(VectorLayer {
            index: index - 1,
            paths: parse_path_data(attr(&tag, "d").unwrap_or_default(), size)?,
            fill: parse_hex(color)?,
        });
    }
    layers.reverse();
    Ok(LayeredVectorDoc { layers, background })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn square(c: Point2, h: f64) -> BezierPath {
        let corners = [
            Point2::new(c.x - h, c.y - h),
            Point2::new(c.x + h, c.y - h),
            Point2::new(c.x + h, c.y + h),
            Point2::new(c.x - h, c.y + h),
        ];
        let segments = (0..4)
            .map(|k| {
                let (a, b) = (corners[k], corners[(k + 1) % 4]);
                let lerp = |t: f64| Point2::new(a.x + t * (b.x - a.x), a.y + t * (b.y - a.y));
                CubicSegment {
                    p: [a, lerp(1.0 / 3.0), lerp(2.0 / 3.0), b],
                }
            })
            .collect();
        BezierPath { segments, closed: true }
    }

    #[test]
    fn empty_doc_is_one_white_rect() {
        let svg = emit_svg(&LayeredVectorDoc::empty([1.0; 3]), 256, SvgStyle::Fill).unwrap();
        assert_eq!(svg.matches("<rect").count(), 1);
        assert!(svg.contains(r##"fill="#ffffff""##));
        assert!(!svg.contains("<path"));
        assert!(svg.contains(r#"viewBox="0 0 256 256""#));
    }

    #[test]
    fn background_only_rasterizes_uniformly() {
        let img = rasterize_paths(&LayeredVectorDoc::empty([0.2, 0.4, 0.6]), 16).unwrap();
        assert!(img.data().chunks_exact(3).all(|p| p == [0.2, 0.4, 0.6]));
    }

    #[test]
    fn front_layer_wins_overlap_and_paints_last() {
        let doc = LayeredVectorDoc {
            layers: vec![
                VectorLayer {
                    index: 0,
                    paths: vec![square(Point2::new(0.4, 0.4), 0.2)],
                    fill: [1.0, 0.0, 0.0],
                },
                VectorLayer {
                    index: 1,
                    paths: vec![square(Point2::new(0.6, 0.6), 0.2)],
                    fill: [0.0, 0.0, 1.0],
                },
            ],
            background: [1.0; 3],
        };
        let img = rasterize_paths(&doc, 64).unwrap();
        assert_eq!(img.pixel(32, 32), [1.0, 0.0, 0.0]);
        assert_eq!(img.pixel(45, 45), [0.0, 0.0, 1.0]);
        let svg = emit_svg(&doc, 64, SvgStyle::Fill).unwrap();
        assert!(svg.find("layer-2").unwrap() < svg.find("layer-1").unwrap());
        assert_eq!(svg.matches("fill-rule=\"evenodd\"").count(), 2);
    }

    #[test]
    fn nested_subpaths_leave_a_hole() {
        let doc = LayeredVectorDoc {
            layers: vec![VectorLayer {
                index: 0,
                paths: vec![square(Point2::new(0.5, 0.5), 0.4), square(Point2::new(0.5, 0.5), 0.2)],
                fill: [0.0; 3],
            }],
            background: [1.0; 3],
        };
        let masks = rasterize_masks(&doc, 40).unwrap();
        assert!(!masks[0][20 * 40 + 20]);
        assert!(masks[0][20 * 40 + 5]);
        let svg = emit_svg(&doc, 40, SvgStyle::Fill).unwrap();
        assert_eq!(svg.matches("<path").count(), 1);
        assert_eq!(svg.matches('M').count(), 2);
    }

    #[test]
    fn stroke_mode_has_no_fill() {
        let doc = LayeredVectorDoc {
            layers: vec![VectorLayer {
                index: 0,
                paths: vec![square(Point2::new(0.5, 0.5), 0.2)],
                fill: [0.0; 3],
            }],
            background: [1.0; 3],
        };
        let svg = emit_svg(&doc, 64, SvgStyle::Stroke { width: 1.5 }).unwrap();
        assert!(svg.contains(r##"fill="none" stroke="#000000" stroke-width="1.5""##));
    }

    #[test]
    fn iou_edge_cases() {
        assert_eq!(iou(&[false; 4], &[false; 4]), 1.0);
        assert_eq!(iou(&[true, true, false, false], &[true, false, true, false]), 1.0 / 3.0);
    }

    #[test]
    fn emitted_svg_reads_back() {
        let doc = LayeredVectorDoc {
            layers: vec![
                VectorLayer {
                    index: 0,
                    paths: vec![square(Point2::new(0.3, 0.3), 0.1), square(Point2::new(0.7, 0.7), 0.1)],
                    fill: [1.0, 0.0, 0.0],
                },
                VectorLayer {
                    index: 2,
                    paths: vec![square(Point2::new(0.5, 0.5), 0.3)],
                    fill: [0.0, 0.0, 1.0],
                },
            ],
            background: [1.0; 3],
        };
        for style in [SvgStyle::Fill, SvgStyle::Stroke { width: 2.0 }] {
            let back = read_svg(&emit_svg(&doc, 200, style).unwrap()).unwrap();
            assert_eq!(back.layers.len(), 2);
            assert_eq!(back.layers[0].index, 0);
            assert_eq!(back.layers[1].index, 2);
            assert_eq!(back.layers[0].paths.len(), 2);
            assert_eq!(back.layers[1].fill, [0.0, 0.0, 1.0]);
            for (a, b) in back.layers.iter().zip(&doc.layers) {
                for (pa, pb) in a.paths.iter().zip(&b.paths) {
                    assert!(pa.closed);
                    for (sa, sb) in pa.segments.iter().zip(&pb.segments) {
                        for k in 0..4 {
                            assert!((sa.p[k].x - sb.p[k].x).abs() < 1e-5 && (sa.p[k].y - sb.p[k].y).abs() < 1e-5);
                        }
                    }
                }
            }
            assert_eq!(rasterize_masks(&back, 64).unwrap(), rasterize_masks(&doc, 64).unwrap());
        }
    }

    #[test]
    fn malformed_svg_is_a_format_error() {
        assert!(matches!(read_svg("<html/>"), Err(Error::Format(_))));
        let bad = r##"<svg viewBox="0 0 10 10"><rect fill="#ffffff"/><path id="layer-1" fill="#000000" d="M1 2 C3"/></svg>"##;
        assert!(matches!(read_svg(bad), Err(Error::Format(_))));
    }

}
