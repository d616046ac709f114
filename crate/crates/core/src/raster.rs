//! `RasterImage`: an H×W×3 float image and its PNG codec.
//!
//! Pixel `(i, j)` samples the continuous canvas at `((j+0.5)/W, (i+0.5)/H)`.

use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::Path;

use crate::error::{Error, Result};
use crate::field::Point2;

#[derive(Debug, Clone, PartialEq)]
pub struct RasterImage {
    height: usize,
    width: usize,
    data: Vec<f64>,
}

impl RasterImage {
    pub fn new(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::Image(format!("nonpositive size {width}×{height}")));
        }
        if data.len() != width * height * 3 {
            return Err(Error::DimensionMismatch(format!(
                "{} values for a {width}×{height}×3 image",
                data.len()
            )));
        }
        Ok(Self { height, width, data })
    }

    pub fn filled(width: usize, height: usize, rgb: [f64; 3]) -> Result<Self> {
        let data = std::iter::repeat_n(rgb, width * height).flatten().collect();
        Self::new(width, height, data)
    }

    /// Builds an image by evaluating `f` at every pixel center.
    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(Point2) -> [f64; 3]) -> Result<Self> {
        let mut data = Vec::with_capacity(width * height * 3);
        for i in 0..height {
            for j in 0..width {
                data.extend_from_slice(&f(Point2::pixel_center(i, j, width, height)));
            }
        }
        Self::new(width, height, data)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixel_count(&self) -> usize {
        self.width * self.height
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn pixel(&self, row: usize, col: usize) -> [f64; 3] {
        let o = (row * self.width + col) * 3;
        [self.data[o], self.data[o + 1], self.data[o + 2]]
    }

    pub fn same_shape(&self, other: &RasterImage) -> bool {
        self.width == other.width && self.height == other.height
    }

    /// Mean of squared differences over every pixel channel.
    pub fn mse(&self, other: &RasterImage) -> Result<f64> {
        if !self.same_shape(other) {
            return Err(Error::DimensionMismatch(format!(
                "{}×{} vs {}×{}",
                self.width, self.height, other.width, other.height
            )));
        }
        let sum: f64 = self.data.iter().zip(&other.data).map(|(a, b)| (a - b) * (a - b)).sum();
        Ok(sum / self.data.len() as f64)
    }

    /// Box-filter downsample by an integer factor.
    pub fn downsample(&self, factor: usize) -> Result<RasterImage> {
        if factor == 0 || !self.width.is_multiple_of(factor) || !self.height.is_multiple_of(factor) {
            return Err(Error::DimensionMismatch(format!(
                "{}×{} is not divisible by {factor}",
                self.width, self.height
            )));
        }
        let (w, h) = (self.width / factor, self.height / factor);
        let norm = 1.0 / (factor * factor) as f64;
        let mut data = vec![0.0; w * h * 3];
        for i in 0..self.height {
            for j in 0..self.width {
                let src = (i * self.width + j) * 3;
                let dst = ((i / factor) * w + j / factor) * 3;
                for c in 0..3 {
                    data[dst + c] += self.data[src + c] * norm;
                }
            }
        }
        RasterImage::new(w, h, data)
    }

    /// Nearest-neighbour resample to a new size.
    pub fn resample_nearest(&self, width: usize, height: usize) -> Result<RasterImage> {
        let mut data = Vec::with_capacity(width * height * 3);
        for i in 0..height {
            let si = (i * self.height / height).min(self.height - 1);
            for j in 0..width {
                let sj = (j * self.width / width).min(self.width - 1);
                data.extend_from_slice(&self.pixel(si, sj));
            }
        }
        RasterImage::new(width, height, data)
    }

    pub fn to_rgb8(&self) -> Vec<u8> {
        self.data.iter().map(|&v| (v.clamp(0.0, 1.0) * 255.0).round() as u8).collect()
    }

    pub fn write_png(&self, path: impl AsRef<Path>) -> Result<()> {
        let file = File::create(path)?;
        let mut enc = png::Encoder::new(BufWriter::new(file), self.width as u32, self.height as u32);
        enc.set_color(png::ColorType::Rgb);
        enc.set_depth(png::BitDepth::Eight);
        enc.set_source_srgb(png::SrgbRenderingIntent::Perceptual);
        let mut writer = enc.write_header().map_err(|e| Error::Image(e.to_string()))?;
        writer.write_image_data(&self.to_rgb8()).map_err(|e| Error::Image(e.to_string()))?;
        Ok(())
    }

    /// Reads an 8- or 16-bit gray, gray-alpha, RGB or RGBA PNG. Alpha is
    /// composited over white.
    pub fn read_png(path: impl AsRef<Path>) -> Result<RasterImage> {
        let file = File::open(path)?;
        let mut dec = png::Decoder::new(BufReader::new(file));
        dec.set_transformations(png::Transformations::EXPAND | png::Transformations::STRIP_16);
        let mut reader = dec.read_info().map_err(|e| Error::Image(e.to_string()))?;
        let mut buf = vec![0; reader.output_buffer_size()];
        let info = reader.next_frame(&mut buf).map_err(|e| Error::Image(e.to_string()))?;
        let (w, h) = (info.width as usize, info.height as usize);
        let channels = match info.color_type {
            png::ColorType::Grayscale => 1,
            png::ColorType::GrayscaleAlpha => 2,
            png::ColorType::Rgb => 3,
            png::ColorType::Rgba => 4,
            other => return Err(Error::Image(format!("unsupported color type {other:?}"))),
        };
        let mut data = Vec::with_capacity(w * h * 3);
        for px in buf[..w * h * channels].chunks_exact(channels) {
            let f = |v: u8| v as f64 / 255.0;
            let (rgb, alpha) = match channels {
                1 => ([f(px[0]); 3], 1.0),
                2 => ([f(px[0]); 3], f(px[1])),
                3 => ([f(px[0]), f(px[1]), f(px[2])], 1.0),
                _ => ([f(px[0]), f(px[1]), f(px[2])], f(px[3])),
            };
            data.extend(rgb.iter().map(|c| c * alpha + (1.0 - alpha)));
        }
        RasterImage::new(w, h, data)
    }
}
