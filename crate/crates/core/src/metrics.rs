//! Endpoint and angular error statistics for comparing flow fields.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flow::FlowField;
use crate::image::GrayImage;

/// EPE below which a pixel counts as an inlier.
pub const INLIER_EPE: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct FlowErrorStats {
    pub mean_epe: f64,
    pub max_epe: f64,
    /// Radians, on `(u, v, 1)`-augmented vectors.
    pub mean_angular_error: f64,
    pub inlier_fraction_0_5px: f64,
    pub pixel_count: usize,
}

#[inline]
pub(crate) fn endpoint_error(a: [f32; 2], b: [f32; 2]) -> f64 {
    let du = a[0] as f64 - b[0] as f64;
    let dv = a[1] as f64 - b[1] as f64;
    du.hypot(dv)
}

#[inline]
pub(crate) fn angular_error(a: [f32; 2], b: [f32; 2]) -> f64 {
    let (u, v) = (a[0] as f64, a[1] as f64);
    let (gu, gv) = (b[0] as f64, b[1] as f64);
    let num = u * gu + v * gv + 1.0;
    let den = (u * u + v * v + 1.0).sqrt() * (gu * gu + gv * gv + 1.0).sqrt();
    (num / den).clamp(-1.0, 1.0).acos()
}

pub fn flow_error(flow: &FlowField, ground_truth: &FlowField) -> Result<FlowErrorStats> {
    flow_error_where(flow, ground_truth, |_, _| true)
}

/// Error statistics restricted to pixels where `keep(x, y)` holds.
pub fn flow_error_where(
    flow: &FlowField,
    ground_truth: &FlowField,
    mut keep: impl FnMut(usize, usize) -> bool,
) -> Result<FlowErrorStats> {
    if flow.dims() != ground_truth.dims() {
        return Err(Error::invalid(format!(
            "flow {:?} vs ground truth {:?}",
            flow.dims(),
            ground_truth.dims()
        )));
    }
    let mut stats = FlowErrorStats::default();
    let (mut sum_epe, mut sum_ae, mut inliers) = (0.0, 0.0, 0usize);
    for y in 0..flow.height() {
        for x in 0..flow.width() {
            if !keep(x, y) {
                continue;
            }
            let (a, b) = (flow.get(x, y), ground_truth.get(x, y));
            let epe = endpoint_error(a, b);
            sum_epe += epe;
            sum_ae += angular_error(a, b);
            stats.max_epe = stats.max_epe.max(epe);
            if epe < INLIER_EPE {
                inliers += 1;
            }
            stats.pixel_count += 1;
        }
    }
    if stats.pixel_count > 0 {
        let n = stats.pixel_count as f64;
        stats.mean_epe = sum_epe / n;
        stats.mean_angular_error = sum_ae / n;
        stats.inlier_fraction_0_5px = inliers as f64 / n;
    }
    Ok(stats)
}

/// Error statistics excluding a border band `band` pixels wide.
pub fn interior_flow_error(
    flow: &FlowField,
    ground_truth: &FlowField,
    band: usize,
) -> Result<FlowErrorStats> {
    let (w, h) = flow.dims();
    flow_error_where(flow, ground_truth, |x, y| {
        x >= band && y >= band && x + band < w && y + band < h
    })
}

/// Peak signal-to-noise ratio (peak 1.0) over pixels where `keep` holds.
pub fn psnr_where(a: &GrayImage, b: &GrayImage, mut keep: impl FnMut(usize, usize) -> bool) -> Result<f64> {
    if a.dims() != b.dims() {
        return Err(Error::invalid("psnr on images of different size"));
    }
    let (mut sse, mut n) = (0.0f64, 0usize);
    for y in 0..a.height() {
        for x in 0..a.width() {
            if keep(x, y) {
                let d = a.get(x, y) as f64 - b.get(x, y) as f64;
                sse += d * d;
                n += 1;
            }
        }
    }
    if n == 0 {
        return Err(Error::invalid("psnr over an empty region"));
    }
    let mse = sse / n as f64;
    Ok(if mse == 0.0 {
        f64::INFINITY
    } else {
        10.0 * (1.0 / mse).log10()
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn identical_fields_have_no_error() {
        let f = FlowField::from_fn(6, 4, |x, y| [x as f32 - 2.0, y as f32 * 0.5]);
        let s = flow_error(&f, &f).unwrap();
        assert_eq!(s.mean_epe, 0.0);
        assert_eq!(s.max_epe, 0.0);
        assert_eq!(s.inlier_fraction_0_5px, 1.0);
        assert!(s.mean_angular_error.abs() < 1e-7);
    }

    #[test]
    fn constant_offset() {
        let s = flow_error(&FlowField::uniform(8, 8, 1.0, 0.0), &FlowField::zeros(8, 8)).unwrap();
        assert!((s.mean_epe - 1.0).abs() < 1e-12);
        assert_eq!(s.inlier_fraction_0_5px, 0.0);
        // angle between (1,0,1) and (0,0,1) is 45 degrees
        assert!((s.mean_angular_error - std::f64::consts::FRAC_PI_4).abs() < 1e-12);
    }

    #[test]
    fn matches_per_pixel_recomputation() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut random = || FlowField::from_fn(4, 4, |_, _| [rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0)]);
        let (a, b) = (random(), random());
        let s = flow_error(&a, &b).unwrap();
        let (mut epe, mut ae, mut max, mut inl) = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
        for (p, q) in a.vectors().iter().zip(b.vectors()) {
            let e = ((p[0] as f64 - q[0] as f64).powi(2) + (p[1] as f64 - q[1] as f64).powi(2)).sqrt();
            let dot = p[0] as f64 * q[0] as f64 + p[1] as f64 * q[1] as f64 + 1.0;
            let na = (p[0] as f64).powi(2) + (p[1] as f64).powi(2) + 1.0;
            let nb = (q[0] as f64).powi(2) + (q[1] as f64).powi(2) + 1.0;
            ae += (dot / (na * nb).sqrt()).clamp(-1.0, 1.0).acos();
            epe += e;
            max = max.max(e);
            if e < 0.5 {
                inl += 1.0;
            }
        }
        assert!((s.mean_epe - epe / 16.0).abs() < 1e-12);
        assert!((s.mean_angular_error - ae / 16.0).abs() < 1e-12);
        assert!((s.max_epe - max).abs() < 1e-12);
        assert!((s.inlier_fraction_0_5px - inl / 16.0).abs() < 1e-12);
    }

    #[test]
    fn mismatched_dims() {
        assert!(flow_error(&FlowField::zeros(2, 2), &FlowField::zeros(2, 3)).is_err());
    }

    #[test]
    fn psnr_of_identical_images_is_infinite() {
        let img = GrayImage::constant(3, 3, 0.2);
        assert!(psnr_where(&img, &img, |_, _| true).unwrap().is_infinite());
        let other = GrayImage::constant(3, 3, 0.3);
        assert!((psnr_where(&img, &other, |_, _| true).unwrap() - 20.0).abs() < 1e-5);
    }
}
