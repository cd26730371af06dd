use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::landmarks::{LandmarkSet, BROWS, CONTOUR, EYES, MOUTH, NOSE};

/// Dilation radius (pixels) applied to every hull and to the contour band.
pub const REGION_DILATION: f64 = 2.0;
const MIN_HULL_AREA: f64 = 1e-6;

/// Disjoint pixel masks of the dynamic (eyes and brows, mouth) and rigid
/// (nose and contour) face regions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionPartition {
    pub width: usize,
    pub height: usize,
    pub eyes: Vec<bool>,
    pub mouth: Vec<bool>,
    pub rigid: Vec<bool>,
}

impl RegionPartition {
    pub fn counts(&self) -> [usize; 3] {
        let c = |m: &[bool]| m.iter().filter(|&&b| b).count();
        [c(&self.eyes), c(&self.mouth), c(&self.rigid)]
    }
}

type P = (f64, f64);

fn cross(o: P, a: P, b: P) -> f64 {
    (a.0 - o.0) * (b.1 - o.1) - (a.1 - o.1) * (b.0 - o.0)
}

/// Andrew's monotone chain; counter-clockwise without repeated endpoint.
fn convex_hull(points: &[[f32; 2]]) -> Vec<P> {
    let mut pts: Vec<P> = points.iter().map(|p| (p[0] as f64, p[1] as f64)).collect();
    pts.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    pts.dedup();
    if pts.len() < 3 {
        return pts;
    }
    let mut hull: Vec<P> = Vec::with_capacity(2 * pts.len());
    for pass in 0..2 {
        let start = hull.len();
        let iter: Box<dyn Iterator<Item = &P>> = if pass == 0 {
            Box::new(pts.iter())
        } else {
            Box::new(pts.iter().rev())
        };
        for &p in iter {
            while hull.len() >= start + 2 && cross(hull[hull.len() - 2], hull[hull.len() - 1], p) <= 0.0 {
                hull.pop();
            }
            hull.push(p);
        }
        hull.pop();
    }
    hull
}

fn polygon_area(poly: &[P]) -> f64 {
    let n = poly.len();
    (0..n)
        .map(|i| {
            let (a, b) = (poly[i], poly[(i + 1) % n]);
            a.0 * b.1 - b.0 * a.1
        })
        .sum::<f64>()
        .abs()
        / 2.0
}

fn segment_distance(p: P, a: P, b: P) -> f64 {
    let (dx, dy) = (b.0 - a.0, b.1 - a.1);
    let len2 = dx * dx + dy * dy;
    let t = if len2 == 0.0 {
        0.0
    } else {
        (((p.0 - a.0) * dx + (p.1 - a.1) * dy) / len2).clamp(0.0, 1.0)
    };
    (p.0 - a.0 - t * dx).hypot(p.1 - a.1 - t * dy)
}

fn inside_convex(p: P, poly: &[P]) -> bool {
    let n = poly.len();
    (0..n).all(|i| cross(poly[i], poly[(i + 1) % n], p) >= 0.0)
}

/// Pixels within `REGION_DILATION` of the hull of `points`.
fn dilated_hull_mask(points: &[[f32; 2]], width: usize, height: usize, what: &str) -> Result<Vec<bool>> {
    let hull = convex_hull(points);
    if hull.len() < 3 || polygon_area(&hull) < MIN_HULL_AREA {
        return Err(Error::invalid(format!("{what} landmarks are collinear")));
    }
    let n = hull.len();
    Ok((0..width * height)
        .map(|k| {
            let p = ((k % width) as f64, (k / width) as f64);
            inside_convex(p, &hull)
                || (0..n).any(|i| segment_distance(p, hull[i], hull[(i + 1) % n]) <= REGION_DILATION)
        })
        .collect())
}

/// Pixels within `REGION_DILATION` of an open polyline.
fn polyline_band(points: &[[f32; 2]], width: usize, height: usize) -> Vec<bool> {
    let pts: Vec<P> = points.iter().map(|p| (p[0] as f64, p[1] as f64)).collect();
    (0..width * height)
        .map(|k| {
            let p = ((k % width) as f64, (k / width) as f64);
            pts.windows(2).any(|s| segment_distance(p, s[0], s[1]) <= REGION_DILATION)
        })
        .collect()
}

/// Builds the three region masks from standardized landmarks. Overlaps are
/// resolved with priority eyes > mouth > rigid.
pub fn region_partition(landmarks: &LandmarkSet, width: usize, height: usize) -> Result<RegionPartition> {
    if width == 0 || height == 0 {
        return Err(Error::invalid("partition dimensions must be non-zero"));
    }
    let brows = dilated_hull_mask(landmarks.group(BROWS), width, height, "brow")?;
    let eyes = dilated_hull_mask(landmarks.group(EYES), width, height, "eye")?;
    let mouth = dilated_hull_mask(landmarks.group(MOUTH), width, height, "mouth")?;
    let nose = dilated_hull_mask(landmarks.group(NOSE), width, height, "nose")?;
    let contour = polyline_band(landmarks.group(CONTOUR), width, height);

    let eyes: Vec<bool> = brows.iter().zip(&eyes).map(|(a, b)| *a || *b).collect();
    let mouth: Vec<bool> = mouth.iter().zip(&eyes).map(|(m, e)| *m && !e).collect();
    let rigid: Vec<bool> = (0..width * height)
        .map(|k| (nose[k] || contour[k]) && !eyes[k] && !mouth[k])
        .collect();
    let part = RegionPartition {
        width,
        height,
        eyes,
        mouth,
        rigid,
    };
    if part.counts().contains(&0) {
        return Err(Error::invalid("a face region is empty inside the raster"));
    }
    Ok(part)
}
