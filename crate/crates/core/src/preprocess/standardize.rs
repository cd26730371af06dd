use crate::error::{Error, Result};
use crate::image::GrayImage;

use super::landmarks::{LandmarkSet, LEFT_EYE, RIGHT_EYE};

/// Side of the standardized face raster.
pub const STANDARD_SIDE: usize = 50;
/// Fraction by which the landmark bounding box is enlarged before cropping.
pub const CROP_MARGIN: f32 = 0.10;
const MIN_EYE_DISTANCE: f32 = 1e-3;

/// Result of [`standardize_face`].
#[derive(Debug, Clone)]
pub struct StandardizedFace {
    pub image: GrayImage,
    pub landmarks: LandmarkSet,
    /// Rotation (radians) that was removed to level the eyes.
    pub rotation: f32,
}

/// Levels the inter-ocular axis, crops the enlarged landmark bounding box,
/// resamples it to 50×50 and applies exact histogram specification to a
/// uniform histogram. Landmarks follow the same geometric transform.
pub fn standardize_face(frame: &GrayImage, landmarks: &LandmarkSet) -> Result<StandardizedFace> {
    let (w, h) = frame.dims();
    if !landmarks.within(w, h) {
        return Err(Error::invalid("landmarks fall outside the frame"));
    }
    let le = landmarks.centroid(LEFT_EYE);
    let re = landmarks.centroid(RIGHT_EYE);
    let (dx, dy) = (re[0] - le[0], re[1] - le[1]);
    if dx.hypot(dy) < MIN_EYE_DISTANCE {
        return Err(Error::invalid("degenerate landmarks: eye centers coincide"));
    }
    let angle = dy.atan2(dx);
    let center = [(le[0] + re[0]) / 2.0, (le[1] + re[1]) / 2.0];
    let (s, c) = angle.sin_cos();
    // frame coordinates -> leveled coordinates (rotate by -angle)
    let level = |p: [f32; 2]| {
        let (x, y) = (p[0] - center[0], p[1] - center[1]);
        [c * x + s * y + center[0], -s * x + c * y + center[1]]
    };
    let unlevel = |p: [f32; 2]| {
        let (x, y) = (p[0] - center[0], p[1] - center[1]);
        [c * x - s * y + center[0], s * x + c * y + center[1]]
    };
    let leveled = landmarks.map(level);
    let (mut x0, mut y0, mut x1, mut y1) = (f32::MAX, f32::MAX, f32::MIN, f32::MIN);
    for p in leveled.points() {
        x0 = x0.min(p[0]);
        y0 = y0.min(p[1]);
        x1 = x1.max(p[0]);
        y1 = y1.max(p[1]);
    }
    let (bw, bh) = ((x1 - x0).max(1.0), (y1 - y0).max(1.0));
    let (x0, y0) = (x0 - bw * CROP_MARGIN / 2.0, y0 - bh * CROP_MARGIN / 2.0);
    let (bw, bh) = (bw * (1.0 + CROP_MARGIN), bh * (1.0 + CROP_MARGIN));
    let n = STANDARD_SIDE as f32;
    let (sx, sy) = (bw / n, bh / n);

    let cropped = GrayImage::from_fn(STANDARD_SIDE, STANDARD_SIDE, |i, j| {
        let p = [x0 + (i as f32 + 0.5) * sx, y0 + (j as f32 + 0.5) * sy];
        let src = unlevel(p);
        frame.sample(src[0], src[1])
    });
    let out_landmarks = leveled.map(|p| [(p[0] - x0) / sx - 0.5, (p[1] - y0) / sy - 0.5]);
    Ok(StandardizedFace {
        image: exact_histogram_equalize(&cropped),
        landmarks: out_landmarks,
        rotation: angle,
    })
}

/// Exact histogram specification onto the uniform histogram: the pixel of
/// rank `r` (ascending luminance, ties in row-major order) receives
/// `r / (N − 1)`.
pub fn exact_histogram_equalize(img: &GrayImage) -> GrayImage {
    let data = img.data();
    let n = data.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| data[a].total_cmp(&data[b]).then(a.cmp(&b)));
    let mut out = vec![0.0f32; n];
    let denom = (n.max(2) - 1) as f64;
    for (rank, &idx) in order.iter().enumerate() {
        out[idx] = (rank as f64 / denom) as f32;
    }
    GrayImage::new(img.width(), img.height(), out).expect("ranks lie in [0, 1]")
}
