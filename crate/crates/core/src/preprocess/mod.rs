//! Face standardization, region masks, the intra-face motion score and
//! temporal normalization of expression sequences.

mod landmarks;
mod regions;
mod standardize;
mod temporal;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use landmarks::*;
pub use regions::{region_partition, RegionPartition, REGION_DILATION};
pub use standardize::{exact_histogram_equalize, standardize_face, StandardizedFace, CROP_MARGIN, STANDARD_SIDE};
pub use temporal::{
    intraface_motion_score, motion_ratio, pair_motion_scores, region_motion, select_key_frames,
    select_key_images, tim_indices, tim_normalize, KeyFrameRule, MotionScore, TimMode, EPS_RIGID,
};

use crate::error::{Error, Result};
use crate::image::GrayImage;

/// The six basic expressions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Expression {
    Anger,
    Disgust,
    Fear,
    Happiness,
    Sadness,
    Surprise,
}

impl Expression {
    pub const ALL: [Expression; 6] = [
        Expression::Anger,
        Expression::Disgust,
        Expression::Fear,
        Expression::Happiness,
        Expression::Sadness,
        Expression::Surprise,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Expression::Anger => "anger",
            Expression::Disgust => "disgust",
            Expression::Fear => "fear",
            Expression::Happiness => "happiness",
            Expression::Sadness => "sadness",
            Expression::Surprise => "surprise",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for Expression {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Expression {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim().to_ascii_lowercase();
        Expression::ALL
            .into_iter()
            .find(|e| e.name() == s)
            .ok_or_else(|| Error::invalid(format!("unknown expression label {s:?}")))
    }
}

/// One expression sequence: neutral first frame through apex last frame.
#[derive(Debug, Clone, PartialEq)]
pub struct SequenceRecord {
    pub id: String,
    pub frames: Vec<GrayImage>,
    pub landmarks: Vec<LandmarkSet>,
    pub label: Expression,
}

impl SequenceRecord {
    pub fn validate(&self) -> Result<()> {
        if self.id.is_empty() {
            return Err(Error::invalid("sequence id is empty"));
        }
        if self.frames.len() < 2 {
            return Err(Error::protocol(format!("sequence {} is too short", self.id)));
        }
        if self.frames.len() != self.landmarks.len() {
            return Err(Error::protocol(format!(
                "sequence {} has {} frames but {} landmark sets",
                self.id,
                self.frames.len(),
                self.landmarks.len()
            )));
        }
        let dims = self.frames[0].dims();
        if self.frames.iter().any(|f| f.dims() != dims) {
            return Err(Error::invalid(format!("sequence {} mixes frame sizes", self.id)));
        }
        Ok(())
    }

    /// Standardizes every frame with its own landmarks.
    pub fn standardized(&self) -> Result<SequenceRecord> {
        self.validate()?;
        let mut frames = Vec::with_capacity(self.frames.len());
        let mut landmarks = Vec::with_capacity(self.frames.len());
        for (f, l) in self.frames.iter().zip(&self.landmarks) {
            let s = standardize_face(f, l)?;
            frames.push(s.image);
            landmarks.push(s.landmarks);
        }
        Ok(SequenceRecord {
            id: self.id.clone(),
            frames,
            landmarks,
            label: self.label,
        })
    }
}
