use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flow::FlowField;

use super::regions::{region_partition, RegionPartition};
use super::SequenceRecord;

/// Floor on the rigid-region motion that keeps the score finite when the
/// head is perfectly still.
pub const EPS_RIGID: f64 = 1e-4;

/// Intra-face motion ratio between two frames; finite and non-negative.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
pub struct MotionScore(pub f64);

/// Mean flow magnitude per region: `[eyes, mouth, rigid]`.
pub fn region_motion(flow: &FlowField, partition: &RegionPartition) -> Result<[f64; 3]> {
    if flow.dims() != (partition.width, partition.height) {
        return Err(Error::invalid(format!(
            "flow {:?} does not match partition {}x{}",
            flow.dims(),
            partition.width,
            partition.height
        )));
    }
    let mut sums = [0.0f64; 3];
    for (k, m) in flow.magnitudes().enumerate() {
        let m = m as f64;
        if partition.eyes[k] {
            sums[0] += m;
        } else if partition.mouth[k] {
            sums[1] += m;
        } else if partition.rigid[k] {
            sums[2] += m;
        }
    }
    let counts = partition.counts();
    Ok([0, 1, 2].map(|i| if counts[i] == 0 { 0.0 } else { sums[i] / counts[i] as f64 }))
}

/// `f = (ΔE + ΔM) / max(ΔH, EPS_RIGID)` when the dynamic regions move,
/// zero otherwise.
pub fn motion_ratio(delta_eyes: f64, delta_mouth: f64, delta_rigid: f64) -> MotionScore {
    let dynamic = delta_eyes + delta_mouth;
    if dynamic > 0.0 && delta_rigid >= 0.0 {
        MotionScore(dynamic / delta_rigid.max(EPS_RIGID))
    } else {
        MotionScore(0.0)
    }
}

pub fn intraface_motion_score(flow: &FlowField, partition: &RegionPartition) -> Result<MotionScore> {
    let [e, m, h] = region_motion(flow, partition)?;
    Ok(motion_ratio(e, m, h))
}

/// How key frames are ranked from the per-pair motion scores.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KeyFrameRule {
    /// Rank frame `t` by `|f_t − f_{t−1}|`, the change of motion around it.
    #[default]
    ScoreChange,
    /// Rank frame `t` by the motion `f_{t−1}` that leads into it.
    ScoreMagnitude,
}

/// Motion score of every consecutive pair; the partition is taken from the
/// landmarks of the pair's second frame, on whose grid the flow lives.
pub fn pair_motion_scores(sequence: &SequenceRecord, pair_flows: &[FlowField]) -> Result<Vec<MotionScore>> {
    let n = sequence.frames.len();
    if pair_flows.len() + 1 != n {
        return Err(Error::protocol(format!(
            "sequence {} has {n} frames but {} pair flows",
            sequence.id,
            pair_flows.len()
        )));
    }
    pair_flows
        .iter()
        .enumerate()
        .map(|(t, flow)| {
            let (w, h) = sequence.frames[t + 1].dims();
            let part = region_partition(&sequence.landmarks[t + 1], w, h)?;
            intraface_motion_score(flow, &part)
        })
        .collect()
}

/// Picks `n` frame indices from per-pair scores (`scores[p]` belongs to the
/// pair `p → p+1`). The first and last frames are always kept; the rest are
/// the top-ranked interior frames, ties going to the earlier frame. Output
/// is ascending.
pub fn select_key_frames(scores: &[MotionScore], n: usize, rule: KeyFrameRule) -> Result<Vec<usize>> {
    let frames = scores.len() + 1;
    if n < 2 {
        return Err(Error::invalid("at least two key frames are required"));
    }
    if frames < n {
        return Err(Error::protocol(format!(
            "sequence has {frames} frames, fewer than the {n} key frames requested"
        )));
    }
    let last = frames - 1;
    let mut interior: Vec<(usize, f64)> = (1..last)
        .map(|t| {
            let rank = match rule {
                KeyFrameRule::ScoreChange => (scores[t].0 - scores[t - 1].0).abs(),
                KeyFrameRule::ScoreMagnitude => scores[t - 1].0,
            };
            (t, rank)
        })
        .collect();
    interior.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    let mut keys: Vec<usize> = interior.iter().take(n - 2).map(|&(t, _)| t).collect();
    keys.push(0);
    keys.push(last);
    keys.sort_unstable();
    Ok(keys)
}

/// Key frames of a sequence given its consecutive-pair flows.
pub fn select_key_images(
    sequence: &SequenceRecord,
    pair_flows: &[FlowField],
    n: usize,
    rule: KeyFrameRule,
) -> Result<Vec<usize>> {
    if sequence.frames.len() < n {
        return Err(Error::protocol(format!(
            "sequence {} has {} frames; {n} are required",
            sequence.id,
            sequence.frames.len()
        )));
    }
    let scores = pair_motion_scores(sequence, pair_flows)?;
    select_key_frames(&scores, n, rule)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TimMode {
    #[serde(rename = "tim2")]
    Tim2,
    #[serde(rename = "tim10")]
    Tim10,
}

impl TimMode {
    pub fn frame_count(self) -> usize {
        match self {
            TimMode::Tim2 => 2,
            TimMode::Tim10 => 10,
        }
    }
}

impl fmt::Display for TimMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TimMode::Tim2 => "tim2",
            TimMode::Tim10 => "tim10",
        })
    }
}

impl FromStr for TimMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "tim2" => Ok(TimMode::Tim2),
            "tim10" => Ok(TimMode::Tim10),
            other => Err(Error::invalid(format!("unknown temporal mode {other:?}"))),
        }
    }
}

/// Frame indices kept by a temporal normalization. TIM2 needs no flows.
pub fn tim_indices(
    sequence: &SequenceRecord,
    mode: TimMode,
    pair_flows: &[FlowField],
    rule: KeyFrameRule,
) -> Result<Vec<usize>> {
    let n = sequence.frames.len();
    match mode {
        TimMode::Tim2 => {
            if n < 2 {
                return Err(Error::protocol(format!("sequence {} is too short", sequence.id)));
            }
            Ok(vec![0, n - 1])
        }
        TimMode::Tim10 => select_key_images(sequence, pair_flows, 10, rule),
    }
}

/// Reduces a sequence to 2 (neutral, apex) or 10 key frames.
pub fn tim_normalize(
    sequence: &SequenceRecord,
    mode: TimMode,
    pair_flows: &[FlowField],
    rule: KeyFrameRule,
) -> Result<SequenceRecord> {
    let keys = tim_indices(sequence, mode, pair_flows, rule)?;
    Ok(SequenceRecord {
        id: sequence.id.clone(),
        frames: keys.iter().map(|&k| sequence.frames[k].clone()).collect(),
        landmarks: keys.iter().map(|&k| sequence.landmarks[k].clone()).collect(),
        label: sequence.label,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::image::GrayImage;
    use crate::preprocess::{Expression, LandmarkSet};

    fn scores(v: &[f64]) -> Vec<MotionScore> {
        v.iter().map(|&x| MotionScore(x)).collect()
    }

    fn sequence(frames: usize) -> SequenceRecord {
        SequenceRecord {
            id: "s".into(),
            frames: vec![GrayImage::constant(50, 50, 0.5); frames],
            landmarks: vec![LandmarkSet::canonical(); frames],
            label: Expression::Happiness,
        }
    }

    #[test]
    fn ratio_cases() {
        assert_eq!(motion_ratio(0.0, 0.0, 0.0).0, 0.0);
        assert_eq!(motion_ratio(2.0, 1.0, 1.0).0, 3.0);
        assert_eq!(motion_ratio(0.0, 0.0, 5.0).0, 0.0);
        assert_eq!(motion_ratio(1.0, 0.0, 0.0).0, 1.0 / EPS_RIGID);
    }

    #[test]
    fn handcrafted_regions_give_ratio_three() {
        let part = crate::preprocess::region_partition(&LandmarkSet::canonical(), 50, 50).unwrap();
        let flow = FlowField::from_fn(50, 50, |x, y| {
            let k = y * 50 + x;
            if part.eyes[k] {
                [2.0, 0.0]
            } else if part.mouth[k] {
                [0.0, 1.0]
            } else if part.rigid[k] {
                [0.6, 0.8]
            } else {
                [9.0, 9.0]
            }
        });
        let f = intraface_motion_score(&flow, &part).unwrap();
        assert!((f.0 - 3.0).abs() < 1e-6, "{f:?}");
    }

    #[test]
    fn key_frames_worked_example() {
        let f = scores(&[0.0, 0.0, 0.0, 5.0, 5.0, 5.0, 0.0, 0.0, 0.0, 2.0, 2.0]);
        assert_eq!(select_key_frames(&f, 4, KeyFrameRule::ScoreChange).unwrap(), vec![0, 3, 6, 11]);
    }

    #[test]
    fn key_frames_tie_break_and_tim2() {
        let f = scores(&[1.0; 9]);
        assert_eq!(select_key_frames(&f, 3, KeyFrameRule::ScoreChange).unwrap(), vec![0, 1, 9]);
        assert_eq!(select_key_frames(&f, 2, KeyFrameRule::ScoreChange).unwrap(), vec![0, 9]);
    }

    #[test]
    fn magnitude_rule() {
        let f = scores(&[0.0, 3.0, 1.0, 0.0]);
        // frame t ranks by f[t-1]: t=1 -> 0, t=2 -> 3, t=3 -> 1
        assert_eq!(select_key_frames(&f, 3, KeyFrameRule::ScoreMagnitude).unwrap(), vec![0, 2, 4]);
    }

    #[test]
    fn too_short_for_request() {
        assert!(matches!(
            select_key_frames(&scores(&[0.0; 3]), 5, KeyFrameRule::ScoreChange),
            Err(Error::Protocol(_))
        ));
    }

    #[test]
    fn tim_modes() {
        let s30 = sequence(30);
        let t2 = tim_normalize(&s30, TimMode::Tim2, &[], KeyFrameRule::default()).unwrap();
        assert_eq!(t2.frames.len(), 2);
        assert_eq!(tim_indices(&s30, TimMode::Tim2, &[], KeyFrameRule::default()).unwrap(), vec![0, 29]);

        let s10 = sequence(10);
        let flows = vec![FlowField::zeros(50, 50); 9];
        let keys = tim_indices(&s10, TimMode::Tim10, &flows, KeyFrameRule::default()).unwrap();
        assert_eq!(keys, (0..10).collect::<Vec<_>>());

        let s9 = sequence(9);
        let flows = vec![FlowField::zeros(50, 50); 8];
        assert!(matches!(
            tim_normalize(&s9, TimMode::Tim10, &flows, KeyFrameRule::default()),
            Err(Error::Protocol(_))
        ));
    }
}
