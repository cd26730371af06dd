use std::ops::RangeInclusive;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const LANDMARK_COUNT: usize = 68;

// Standard 68-point annotation groups.
pub const CONTOUR: RangeInclusive<usize> = 0..=16;
pub const LEFT_BROW: RangeInclusive<usize> = 17..=21;
pub const RIGHT_BROW: RangeInclusive<usize> = 22..=26;
pub const BROWS: RangeInclusive<usize> = 17..=26;
pub const NOSE: RangeInclusive<usize> = 27..=35;
pub const LEFT_EYE: RangeInclusive<usize> = 36..=41;
pub const RIGHT_EYE: RangeInclusive<usize> = 42..=47;
pub const EYES: RangeInclusive<usize> = 36..=47;
pub const MOUTH: RangeInclusive<usize> = 48..=67;

/// 68 facial landmarks in image coordinates (pixel centers at integers).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<[f32; 2]>", into = "Vec<[f32; 2]>")]
pub struct LandmarkSet {
    points: Vec<[f32; 2]>,
}

impl LandmarkSet {
    pub fn new(points: Vec<[f32; 2]>) -> Result<Self> {
        if points.len() != LANDMARK_COUNT {
            return Err(Error::invalid(format!(
                "expected {LANDMARK_COUNT} landmarks, got {}",
                points.len()
            )));
        }
        if points.iter().any(|p| !p[0].is_finite() || !p[1].is_finite()) {
            return Err(Error::invalid("landmark coordinates must be finite"));
        }
        Ok(Self { points })
    }

    pub fn points(&self) -> &[[f32; 2]] {
        &self.points
    }

    pub fn point(&self, i: usize) -> [f32; 2] {
        self.points[i]
    }

    pub fn group(&self, range: RangeInclusive<usize>) -> &[[f32; 2]] {
        &self.points[range]
    }

    pub fn centroid(&self, range: RangeInclusive<usize>) -> [f32; 2] {
        let g = self.group(range);
        let n = g.len() as f32;
        let (sx, sy) = g.iter().fold((0.0, 0.0), |(sx, sy), p| (sx + p[0], sy + p[1]));
        [sx / n, sy / n]
    }

    pub fn map(&self, mut f: impl FnMut([f32; 2]) -> [f32; 2]) -> Self {
        Self {
            points: self.points.iter().map(|&p| f(p)).collect(),
        }
    }

    /// Applies `f` to the points of one group only.
    pub fn map_group(&self, range: RangeInclusive<usize>, mut f: impl FnMut([f32; 2]) -> [f32; 2]) -> Self {
        let mut points = self.points.clone();
        for p in &mut points[range] {
            *p = f(*p);
        }
        Self { points }
    }

    pub fn within(&self, width: usize, height: usize) -> bool {
        self.points.iter().all(|p| {
            p[0] >= 0.0 && p[1] >= 0.0 && p[0] <= (width - 1) as f32 && p[1] <= (height - 1) as f32
        })
    }

    /// A frontal mean-face layout filling a 50×50 raster: brows near the top
    /// edge, chin near the bottom, eyes level.
    pub fn canonical() -> Self {
        let mut p = Vec::with_capacity(LANDMARK_COUNT);
        // contour: lower half-ellipse from ear to ear through the chin
        for k in 0..17 {
            let a = std::f32::consts::PI * k as f32 / 16.0;
            p.push([25.0 - 21.0 * a.cos(), 20.0 + 27.0 * a.sin()]);
        }
        // brows, arched
        for x0 in [8.0f32, 29.0] {
            for k in 0..5 {
                let t = k as f32 / 4.0;
                p.push([x0 + 13.0 * t, 6.5 - 2.5 * (std::f32::consts::PI * t).sin()]);
            }
        }
        // nose bridge and base
        for y in [11.0, 15.5, 20.0, 24.5] {
            p.push([25.0, y]);
        }
        for (x, y) in [(20.0, 27.0), (22.5, 28.0), (25.0, 28.5), (27.5, 28.0), (30.0, 27.0)] {
            p.push([x, y]);
        }
        // eyes: corner, two upper lid, corner, two lower lid
        for cx in [15.5f32, 34.5] {
            let y = 12.0;
            p.push([cx - 4.5, y]);
            p.push([cx - 2.0, y - 1.6]);
            p.push([cx + 2.0, y - 1.6]);
            p.push([cx + 4.5, y]);
            p.push([cx + 2.0, y + 1.6]);
            p.push([cx - 2.0, y + 1.6]);
        }
        // outer lip, 12 points starting at the left corner, over the top
        for k in 0..12 {
            let a = std::f32::consts::PI - k as f32 * std::f32::consts::PI / 6.0;
            p.push([25.0 + 8.0 * a.cos(), 36.5 - 3.5 * a.sin()]);
        }
        // inner lip, 8 points
        for k in 0..8 {
            let a = std::f32::consts::PI - k as f32 * std::f32::consts::PI / 4.0;
            p.push([25.0 + 5.0 * a.cos(), 36.5 - 1.2 * a.sin()]);
        }
        Self { points: p }
    }
}

impl TryFrom<Vec<[f32; 2]>> for LandmarkSet {
    type Error = Error;

    fn try_from(points: Vec<[f32; 2]>) -> Result<Self> {
        Self::new(points)
    }
}

impl From<LandmarkSet> for Vec<[f32; 2]> {
    fn from(l: LandmarkSet) -> Self {
        l.points
    }
}
