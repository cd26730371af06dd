use proptest::prelude::*;

use faceflow::preprocess::{
    intraface_motion_score, region_partition, select_key_frames, standardize_face, tim_normalize, Expression,
    KeyFrameRule, LandmarkSet, MotionScore, SequenceRecord, TimMode, MOUTH,
};
use faceflow::synth::render_face;
use faceflow::{FlowField, GrayImage};

fn rotate_about(p: [f32; 2], c: [f32; 2], angle: f32) -> [f32; 2] {
    let (s, co) = angle.sin_cos();
    let (x, y) = (p[0] - c[0], p[1] - c[1]);
    [co * x - s * y + c[0], s * x + co * y + c[1]]
}

fn large_face(seed: u64) -> (GrayImage, LandmarkSet) {
    let img = render_face(100, 100, seed);
    let lm = LandmarkSet::canonical().map(|p| [2.0 * p[0] + 0.5, 2.0 * p[1] + 0.5]);
    (img, lm)
}

#[test]
fn frontal_face_is_not_rotated() {
    let (img, lm) = large_face(3);
    let out = standardize_face(&img, &lm).unwrap();
    assert_eq!(out.rotation, 0.0);
    assert_eq!(out.image.dims(), (50, 50));
}

#[test]
fn rotated_face_standardizes_like_the_frontal_one() {
    let (img, lm) = large_face(4);
    let c = [50.0, 50.0];
    let angle = 10f32.to_radians();
    let rotated = GrayImage::from_fn(100, 100, |x, y| {
        let src = rotate_about([x as f32, y as f32], c, -angle);
        img.sample(src[0], src[1])
    });
    let rotated_lm = lm.map(|p| rotate_about(p, c, angle));
    let a = standardize_face(&img, &lm).unwrap();
    let b = standardize_face(&rotated, &rotated_lm).unwrap();
    assert!((b.rotation - angle).abs() < 1e-4);
    let mut diff = 0.0f64;
    let mut n = 0;
    for y in 5..45 {
        for x in 5..45 {
            diff += (a.image.get(x, y) - b.image.get(x, y)).abs() as f64;
            n += 1;
        }
    }
    let mad = diff / n as f64;
    assert!(mad < 0.05, "mean absolute difference {mad}");
}

#[test]
fn constant_input_becomes_the_uniform_ramp() {
    let lm = LandmarkSet::canonical();
    let out = standardize_face(&GrayImage::constant(50, 50, 0.3), &lm).unwrap();
    let n = 2500.0f32;
    for (i, v) in out.image.data().iter().enumerate() {
        assert_eq!(*v, i as f32 / (n - 1.0));
    }
}

#[test]
fn standardizing_twice_keeps_mean_luminance() {
    let (img, lm) = large_face(8);
    let once = standardize_face(&img, &lm).unwrap();
    let twice = standardize_face(&once.image, &once.landmarks).unwrap();
    assert!((once.image.mean() - twice.image.mean()).abs() < 0.02);
}

#[test]
fn canonical_partition_is_disjoint_nonempty_and_partial() {
    let p = region_partition(&LandmarkSet::canonical(), 50, 50).unwrap();
    let [e, m, h] = p.counts();
    assert!(e > 0 && m > 0 && h > 0);
    assert!(e + m + h < 2500);
    for i in 0..2500 {
        assert!(u8::from(p.eyes[i]) + u8::from(p.mouth[i]) + u8::from(p.rigid[i]) <= 1);
    }
}

#[test]
fn moving_mouth_landmarks_leaves_other_masks() {
    let lm = LandmarkSet::canonical();
    let moved = lm.map_group(MOUTH, |p| [p[0] + 1.5, p[1] + 1.0]);
    let a = region_partition(&lm, 50, 50).unwrap();
    let b = region_partition(&moved, 50, 50).unwrap();
    assert_eq!(a.eyes, b.eyes);
    assert_eq!(a.rigid, b.rigid);
    assert_ne!(a.mouth, b.mouth);
}

#[test]
fn key_frame_examples() {
    let f: Vec<MotionScore> = [0.0, 0.0, 0.0, 5.0, 5.0, 5.0, 0.0, 0.0, 0.0, 2.0, 2.0]
        .iter()
        .map(|&v| MotionScore(v))
        .collect();
    assert_eq!(select_key_frames(&f, 4, KeyFrameRule::ScoreChange).unwrap(), vec![0, 3, 6, 11]);
    let constant = vec![MotionScore(1.0); 11];
    assert_eq!(select_key_frames(&constant, 3, KeyFrameRule::ScoreChange).unwrap(), vec![0, 1, 11]);
    assert_eq!(select_key_frames(&f, 2, KeyFrameRule::ScoreChange).unwrap(), vec![0, 11]);
}

fn sequence(frames: usize) -> SequenceRecord {
    SequenceRecord {
        id: "seq".into(),
        frames: (0..frames).map(|t| GrayImage::constant(50, 50, t as f32 / frames as f32)).collect(),
        landmarks: vec![LandmarkSet::canonical(); frames],
        label: Expression::Surprise,
    }
}

#[test]
fn temporal_normalization_examples() {
    let ten = sequence(10);
    let flows = vec![FlowField::zeros(50, 50); 9];
    let out = tim_normalize(&ten, TimMode::Tim10, &flows, KeyFrameRule::ScoreChange).unwrap();
    assert_eq!(out.frames, ten.frames);

    let thirty = sequence(30);
    let out = tim_normalize(&thirty, TimMode::Tim2, &[], KeyFrameRule::ScoreChange).unwrap();
    assert_eq!(out.frames, vec![thirty.frames[0].clone(), thirty.frames[29].clone()]);

    let nine = sequence(9);
    let flows = vec![FlowField::zeros(50, 50); 8];
    assert!(matches!(
        tim_normalize(&nine, TimMode::Tim10, &flows, KeyFrameRule::ScoreChange),
        Err(faceflow::Error::Protocol(_))
    ));
}

fn jittered_landmarks() -> impl Strategy<Value = LandmarkSet> {
    prop::collection::vec((-1.0f32..1.0, -1.0f32..1.0), 68).prop_map(|j| {
        let base = LandmarkSet::canonical();
        let pts = base
            .points()
            .iter()
            .zip(j)
            .map(|(p, (dx, dy))| [(p[0] + dx).clamp(0.0, 49.0), (p[1] + dy).clamp(0.0, 49.0)])
            .collect();
        LandmarkSet::new(pts).unwrap()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn region_masks_are_disjoint(lm in jittered_landmarks()) {
        let p = region_partition(&lm, 50, 50).unwrap();
        for i in 0..2500 {
            prop_assert!(u8::from(p.eyes[i]) + u8::from(p.mouth[i]) + u8::from(p.rigid[i]) <= 1);
        }
    }

    #[test]
    fn motion_score_scales_with_dynamic_regions(
        seed in any::<u64>(),
        k in 0.1f64..10.0,
    ) {
        let p = region_partition(&LandmarkSet::canonical(), 50, 50).unwrap();
        let mut s = seed | 1;
        let mut next = || {
            s ^= s << 13;
            s ^= s >> 7;
            s ^= s << 17;
            (s % 2001) as f32 / 1000.0 - 1.0
        };
        let base: Vec<[f32; 2]> = (0..2500).map(|_| [next() + 1.5, next()]).collect();
        let scaled: Vec<[f32; 2]> = base
            .iter()
            .enumerate()
            .map(|(i, v)| {
                if p.eyes[i] || p.mouth[i] {
                    [v[0] * k as f32, v[1] * k as f32]
                } else {
                    *v
                }
            })
            .collect();
        let a = intraface_motion_score(&FlowField::new(50, 50, base).unwrap(), &p).unwrap().0;
        let b = intraface_motion_score(&FlowField::new(50, 50, scaled).unwrap(), &p).unwrap().0;
        prop_assert!(a > 0.0);
        prop_assert!((b / a - k).abs() < 1e-4 * k, "{} vs {}", b / a, k);
    }

    #[test]
    fn key_frames_are_increasing_and_anchored(
        scores in prop::collection::vec(0.0f64..5.0, 1..40),
        n_frac in 0.0f64..1.0,
    ) {
        let frames = scores.len() + 1;
        let n = 2 + ((frames - 2) as f64 * n_frac) as usize;
        let f: Vec<MotionScore> = scores.iter().map(|&v| MotionScore(v)).collect();
        for rule in [KeyFrameRule::ScoreChange, KeyFrameRule::ScoreMagnitude] {
            let keys = select_key_frames(&f, n, rule).unwrap();
            prop_assert_eq!(keys.len(), n);
            prop_assert_eq!(keys[0], 0);
            prop_assert_eq!(*keys.last().unwrap(), frames - 1);
            prop_assert!(keys.windows(2).all(|w| w[0] < w[1]));
        }
    }
}
