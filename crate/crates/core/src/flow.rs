//! Dense displacement fields.
//!
//! Every field in this crate follows one convention: for a frame pair
//! `(prev, next)` the flow `F` satisfies `next(x) ≈ prev(x + F(x))`, so
//! [`warp_image`]`(prev, F)` reconstructs `next`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::{sample_bilinear, GrayImage};

/// Below this magnitude (pixels) a vector has no meaningful direction.
pub const POLAR_EPS_MAG: f32 = 1e-3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowField {
    width: usize,
    height: usize,
    vectors: Vec<[f32; 2]>,
}

impl FlowField {
    pub fn new(width: usize, height: usize, vectors: Vec<[f32; 2]>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::invalid("flow dimensions must be non-zero"));
        }
        if vectors.len() != width * height {
            return Err(Error::invalid(format!(
                "flow holds {} vectors, expected {}x{}",
                vectors.len(),
                width,
                height
            )));
        }
        if let Some(i) = vectors
            .iter()
            .position(|v| !v[0].is_finite() || !v[1].is_finite())
        {
            return Err(Error::invalid(format!("flow vector {i} is not finite")));
        }
        Ok(Self {
            width,
            height,
            vectors,
        })
    }

    pub fn zeros(width: usize, height: usize) -> Self {
        Self::uniform(width, height, 0.0, 0.0)
    }

    pub fn uniform(width: usize, height: usize, u: f32, v: f32) -> Self {
        assert!(width > 0 && height > 0);
        Self {
            width,
            height,
            vectors: vec![[u, v]; width * height],
        }
    }

    /// Builds a field from `f(x, y) -> (u, v)`. Non-finite results become zero.
    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> [f32; 2]) -> Self {
        assert!(width > 0 && height > 0);
        let mut vectors = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                let [u, v] = f(x, y);
                let fin = |c: f32| if c.is_finite() { c } else { 0.0 };
                vectors.push([fin(u), fin(v)]);
            }
        }
        Self {
            width,
            height,
            vectors,
        }
    }

    pub(crate) fn from_planes(width: usize, height: usize, u: &[f32], v: &[f32]) -> Self {
        Self::from_fn(width, height, |x, y| {
            let i = y * width + x;
            [u[i], v[i]]
        })
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

    pub fn vectors(&self) -> &[[f32; 2]] {
        &self.vectors
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> [f32; 2] {
        self.vectors[y * self.width + x]
    }

    pub fn magnitudes(&self) -> impl Iterator<Item = f32> + '_ {
        self.vectors.iter().map(|[u, v]| (u * u + v * v).sqrt())
    }

    pub fn mean_magnitude(&self) -> f64 {
        self.magnitudes().map(f64::from).sum::<f64>() / self.vectors.len() as f64
    }

    pub fn max_magnitude(&self) -> f32 {
        self.magnitudes().fold(0.0, f32::max)
    }

    /// Splits into separate `u` and `v` planes.
    pub(crate) fn planes(&self) -> (Vec<f32>, Vec<f32>) {
        self.vectors.iter().map(|[u, v]| (*u, *v)).unzip()
    }

    /// Applies `f` to every vector.
    pub fn map(&self, mut f: impl FnMut([f32; 2]) -> [f32; 2]) -> Self {
        Self::from_fn(self.width, self.height, |x, y| f(self.get(x, y)))
    }

    /// Bilinearly resamples the field onto a `new_w × new_h` grid whose
    /// coordinates relate by `x_new = x_old * factor`, multiplying the
    /// vectors by `factor`. Used to carry estimates between pyramid levels.
    pub(crate) fn rescale(&self, new_w: usize, new_h: usize, factor: f32) -> Self {
        let (u, v) = self.planes();
        let inv = 1.0 / factor;
        Self::from_fn(new_w, new_h, |x, y| {
            let sx = x as f32 * inv;
            let sy = y as f32 * inv;
            [
                sample_bilinear(&u, self.width, self.height, sx, sy) * factor,
                sample_bilinear(&v, self.width, self.height, sx, sy) * factor,
            ]
        })
    }
}

/// Backward warp: `out(x, y) = img(x + u, y + v)` with bilinear sampling and
/// clamp-to-edge borders.
pub fn warp_image(img: &GrayImage, flow: &FlowField) -> Result<GrayImage> {
    if img.dims() != flow.dims() {
        return Err(Error::invalid(format!(
            "image {:?} and flow {:?} differ in size",
            img.dims(),
            flow.dims()
        )));
    }
    Ok(GrayImage::from_fn(img.width(), img.height(), |x, y| {
        let [u, v] = flow.get(x, y);
        img.sample(x as f32 + u, y as f32 + v)
    }))
}

/// Backward warp of an unconstrained plane (no [0, 1] clamping).
pub(crate) fn warp_plane(data: &[f32], width: usize, height: usize, flow: &FlowField) -> Vec<f32> {
    debug_assert_eq!(flow.dims(), (width, height));
    let mut out = Vec::with_capacity(width * height);
    for y in 0..height {
        for x in 0..width {
            let [u, v] = flow.get(x, y);
            out.push(sample_bilinear(data, width, height, x as f32 + u, y as f32 + v));
        }
    }
    out
}

/// Per-pixel direction cosines and magnitude, three row-major planes.
#[derive(Debug, Clone, PartialEq)]
pub struct PolarPlanes {
    pub width: usize,
    pub height: usize,
    pub cos: Vec<f32>,
    pub sin: Vec<f32>,
    pub magnitude: Vec<f32>,
}

impl PolarPlanes {
    /// Total number of values across the three planes.
    pub fn value_count(&self) -> usize {
        self.cos.len() + self.sin.len() + self.magnitude.len()
    }
}

pub fn flow_to_polar(flow: &FlowField) -> PolarPlanes {
    let n = flow.vectors.len();
    let mut cos = Vec::with_capacity(n);
    let mut sin = Vec::with_capacity(n);
    let mut magnitude = Vec::with_capacity(n);
    for &[u, v] in &flow.vectors {
        let m = ((u as f64).hypot(v as f64)) as f32;
        if m < POLAR_EPS_MAG {
            cos.push(0.0);
            sin.push(0.0);
            magnitude.push(0.0);
        } else {
            cos.push((u as f64 / m as f64) as f32);
            sin.push((v as f64 / m as f64) as f32);
            magnitude.push(m);
        }
    }
    PolarPlanes {
        width: flow.width,
        height: flow.height,
        cos,
        sin,
        magnitude,
    }
}
