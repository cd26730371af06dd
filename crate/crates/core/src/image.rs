//! Luminance rasters, Gaussian pyramids and the bilinear sampling kernel
//! shared by the warping code and every engine.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Rec. 601 luma weights.
const LUMA_R: f32 = 0.299;
const LUMA_G: f32 = 0.587;
const LUMA_B: f32 = 0.114;

/// Smallest side any pyramid level may have.
pub const MIN_PYRAMID_SIDE: usize = 4;

/// Row-major luminance raster with samples in `[0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GrayImage {
    width: usize,
    height: usize,
    data: Vec<f32>,
}

impl GrayImage {
    pub fn new(width: usize, height: usize, data: Vec<f32>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::invalid("image dimensions must be non-zero"));
        }
        if data.len() != width * height {
            return Err(Error::invalid(format!(
                "image buffer holds {} samples, expected {}x{}={}",
                data.len(),
                width,
                height,
                width * height
            )));
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite() || *v < 0.0 || *v > 1.0) {
            return Err(Error::invalid(format!(
                "sample {} = {} is outside [0, 1]",
                i, data[i]
            )));
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    /// Builds an image by evaluating `f(x, y)`; results are clamped to `[0, 1]`.
    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> f32) -> Self {
        assert!(width > 0 && height > 0, "image dimensions must be non-zero");
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                let v = f(x, y);
                data.push(if v.is_nan() { 0.0 } else { v.clamp(0.0, 1.0) });
            }
        }
        Self {
            width,
            height,
            data,
        }
    }

    pub fn constant(width: usize, height: usize, value: f32) -> Self {
        Self::from_fn(width, height, |_, _| value)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f32 {
        self.data[y * self.width + x]
    }

    /// Bilinear sample with clamp-to-edge addressing.
    #[inline]
    pub fn sample(&self, x: f32, y: f32) -> f32 {
        sample_bilinear(&self.data, self.width, self.height, x, y)
    }

    pub fn mean(&self) -> f64 {
        self.data.iter().map(|&v| v as f64).sum::<f64>() / self.data.len() as f64
    }

    /// Loads an 8-bit gray or RGB PNG and converts it to luminance.
    pub fn load_png(path: &Path) -> Result<Self> {
        let img = image::open(path).map_err(|e| Error::Image {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        let (w, h) = (img.width() as usize, img.height() as usize);
        let data = match img {
            image::DynamicImage::ImageLuma8(gray) => {
                gray.into_raw().into_iter().map(|v| v as f32 / 255.0).collect()
            }
            other => other
                .to_rgb8()
                .pixels()
                .map(|p| {
                    let y = LUMA_R * p[0] as f32 + LUMA_G * p[1] as f32 + LUMA_B * p[2] as f32;
                    (y / 255.0).clamp(0.0, 1.0)
                })
                .collect(),
        };
        Self::new(w, h, data)
    }

    /// Writes an 8-bit grayscale PNG.
    pub fn save_png(&self, path: &Path) -> Result<()> {
        let bytes: Vec<u8> = self
            .data
            .iter()
            .map(|&v| (v * 255.0).round().clamp(0.0, 255.0) as u8)
            .collect();
        let buf = image::GrayImage::from_raw(self.width as u32, self.height as u32, bytes)
            .expect("buffer length matches dimensions");
        buf.save(path).map_err(|e| Error::Image {
            path: path.to_path_buf(),
            message: e.to_string(),
        })
    }
}

/// Bilinear interpolation on a row-major plane, clamping coordinates to the
/// valid range before interpolating.
#[inline]
pub(crate) fn sample_bilinear(data: &[f32], width: usize, height: usize, x: f32, y: f32) -> f32 {
    let max_x = (width - 1) as f32;
    let max_y = (height - 1) as f32;
    let x = if x.is_nan() { 0.0 } else { x.clamp(0.0, max_x) };
    let y = if y.is_nan() { 0.0 } else { y.clamp(0.0, max_y) };
    let x0 = x.floor() as usize;
    let y0 = y.floor() as usize;
    let x1 = (x0 + 1).min(width - 1);
    let y1 = (y0 + 1).min(height - 1);
    let fx = x - x0 as f32;
    let fy = y - y0 as f32;
    let a = data[y0 * width + x0];
    let b = data[y0 * width + x1];
    let c = data[y1 * width + x0];
    let d = data[y1 * width + x1];
    let top = a + (b - a) * fx;
    let bottom = c + (d - c) * fx;
    top + (bottom - top) * fy
}

/// One separable pass of the 5-tap binomial kernel `[1 4 6 4 1] / 16` with
/// replicated borders.
pub(crate) fn binomial_blur(data: &[f32], width: usize, height: usize) -> Vec<f32> {
    const K: [f32; 5] = [1.0 / 16.0, 4.0 / 16.0, 6.0 / 16.0, 4.0 / 16.0, 1.0 / 16.0];
    let clamp = |v: isize, n: usize| v.clamp(0, n as isize - 1) as usize;
    let mut tmp = vec![0.0f32; data.len()];
    for y in 0..height {
        let row = &data[y * width..(y + 1) * width];
        for x in 0..width {
            let mut acc = 0.0f32;
            for (k, w) in K.iter().enumerate() {
                acc += w * row[clamp(x as isize + k as isize - 2, width)];
            }
            tmp[y * width + x] = acc;
        }
    }
    let mut out = vec![0.0f32; data.len()];
    for y in 0..height {
        for x in 0..width {
            let mut acc = 0.0f32;
            for (k, w) in K.iter().enumerate() {
                acc += w * tmp[clamp(y as isize + k as isize - 2, height) * width + x];
            }
            out[y * width + x] = acc;
        }
    }
    out
}

/// Anti-aliased downsampling of a plane by `scale`, using the pyramid's
/// origin-aligned coordinate map `x_coarse = x_fine * scale`.
pub(crate) fn downsample(
    data: &[f32],
    width: usize,
    height: usize,
    scale: f64,
) -> (Vec<f32>, usize, usize) {
    let new_w = next_level_side(width, scale);
    let new_h = next_level_side(height, scale);
    let sigma = 0.5 / scale;
    let passes = ((sigma * sigma).round() as usize).max(1);
    let mut smoothed = data.to_vec();
    for _ in 0..passes {
        smoothed = binomial_blur(&smoothed, width, height);
    }
    let inv = (1.0 / scale) as f32;
    let mut out = Vec::with_capacity(new_w * new_h);
    for y in 0..new_h {
        for x in 0..new_w {
            out.push(sample_bilinear(
                &smoothed,
                width,
                height,
                x as f32 * inv,
                y as f32 * inv,
            ));
        }
    }
    (out, new_w, new_h)
}

#[inline]
pub(crate) fn next_level_side(side: usize, scale: f64) -> usize {
    (side as f64 * scale).ceil() as usize
}

/// Coarse-to-fine stack of smoothed, subsampled copies of an image.
#[derive(Debug, Clone)]
pub struct ImagePyramid {
    levels: Vec<GrayImage>,
    scale: f64,
}

impl ImagePyramid {
    pub fn levels(&self) -> &[GrayImage] {
        &self.levels
    }

    pub fn level(&self, i: usize) -> &GrayImage {
        &self.levels[i]
    }

    pub fn len(&self) -> usize {
        self.levels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.levels.is_empty()
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }
}

/// Builds a Gaussian pyramid with up to `levels` levels. Level 0 is `img`
/// itself; construction stops early once a level would fall below 4×4.
pub fn build_pyramid(img: &GrayImage, levels: usize, scale: f64) -> Result<ImagePyramid> {
    if levels == 0 {
        return Err(Error::invalid("pyramid needs at least one level"));
    }
    if !(scale > 0.0 && scale < 1.0) {
        return Err(Error::invalid(format!("pyramid scale {scale} not in (0, 1)")));
    }
    if img.width < MIN_PYRAMID_SIDE || img.height < MIN_PYRAMID_SIDE {
        return Err(Error::invalid(format!(
            "image {}x{} is smaller than {MIN_PYRAMID_SIDE}x{MIN_PYRAMID_SIDE}",
            img.width, img.height
        )));
    }
    let mut out = vec![img.clone()];
    while out.len() < levels {
        let last = out.last().unwrap();
        let (w, h) = (
            next_level_side(last.width, scale),
            next_level_side(last.height, scale),
        );
        if w < MIN_PYRAMID_SIDE || h < MIN_PYRAMID_SIDE {
            break;
        }
        let (data, w, h) = downsample(&last.data, last.width, last.height, scale);
        let data = data.into_iter().map(|v| v.clamp(0.0, 1.0)).collect();
        out.push(GrayImage {
            width: w,
            height: h,
            data,
        });
    }
    Ok(ImagePyramid { levels: out, scale })
}

/// Number of pyramid levels `build_pyramid` will actually produce.
pub(crate) fn effective_levels(width: usize, height: usize, levels: usize, scale: f64) -> usize {
    let (mut w, mut h, mut n) = (width, height, 1);
    while n < levels {
        w = next_level_side(w, scale);
        h = next_level_side(h, scale);
        if w < MIN_PYRAMID_SIDE || h < MIN_PYRAMID_SIDE {
            break;
        }
        n += 1;
    }
    n
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ramp(w: usize, h: usize) -> GrayImage {
        GrayImage::from_fn(w, h, |x, y| ((x + 2 * y) % 17) as f32 / 16.0)
    }

    #[test]
    fn rejects_out_of_range_samples() {
        assert!(GrayImage::new(2, 1, vec![0.0, 1.5]).is_err());
        assert!(GrayImage::new(2, 1, vec![0.0, f32::NAN]).is_err());
        assert!(GrayImage::new(2, 2, vec![0.0; 3]).is_err());
    }

    #[test]
    fn single_level_pyramid_is_identity() {
        let img = ramp(64, 64);
        let p = build_pyramid(&img, 1, 0.5).unwrap();
        assert_eq!(p.len(), 1);
        assert_eq!(p.level(0), &img);
    }

    #[test]
    fn pyramid_level_sizes() {
        let p = build_pyramid(&ramp(64, 64), 3, 0.5).unwrap();
        let sizes: Vec<_> = p.levels().iter().map(|l| l.dims()).collect();
        assert_eq!(sizes, vec![(64, 64), (32, 32), (16, 16)]);
    }

    #[test]
    fn pyramid_follows_ceil_recurrence() {
        let p = build_pyramid(&ramp(50, 37), 4, 0.6).unwrap();
        for pair in p.levels().windows(2) {
            assert_eq!(pair[1].width(), (pair[0].width() as f64 * 0.6).ceil() as usize);
            assert_eq!(pair[1].height(), (pair[0].height() as f64 * 0.6).ceil() as usize);
        }
    }

    #[test]
    fn pyramid_stops_at_minimum_side() {
        let p = build_pyramid(&ramp(8, 8), 5, 0.5).unwrap();
        let sizes: Vec<_> = p.levels().iter().map(|l| l.dims()).collect();
        assert_eq!(sizes, vec![(8, 8), (4, 4)]);
        assert_eq!(effective_levels(8, 8, 5, 0.5), 2);
    }

    #[test]
    fn constant_image_stays_constant() {
        let p = build_pyramid(&GrayImage::constant(64, 64, 0.5), 4, 0.5).unwrap();
        for level in p.levels() {
            assert!(level.data().iter().all(|v| (v - 0.5).abs() < 1e-6));
        }
    }

    #[test]
    fn pyramid_rejects_tiny_images_and_bad_args() {
        assert!(build_pyramid(&ramp(3, 8), 2, 0.5).is_err());
        assert!(build_pyramid(&ramp(8, 8), 0, 0.5).is_err());
        assert!(build_pyramid(&ramp(8, 8), 2, 1.0).is_err());
    }

    #[test]
    fn bilinear_hits_grid_points_and_midpoints() {
        let img = GrayImage::new(2, 2, vec![0.0, 1.0, 0.5, 0.5]).unwrap();
        assert_eq!(img.sample(1.0, 0.0), 1.0);
        assert!((img.sample(0.5, 0.0) - 0.5).abs() < 1e-7);
        assert!((img.sample(0.5, 0.5) - 0.5).abs() < 1e-7);
        assert_eq!(img.sample(-3.0, -3.0), 0.0);
    }
}
