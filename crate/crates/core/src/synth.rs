//! Synthetic frames with known motion.
//!
//! Textures are three octaves of Catmull-Rom interpolated value noise.
//! Frame pairs are built as `next = warp_image(prev, gt)`, so the ground
//! truth is exact under the crate's flow convention.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use std::path::Path;

use crate::error::{Error, Result};
use crate::eval::splitmix64;
use crate::flo::write_flo;
use crate::flow::{warp_image, FlowField};
use crate::image::GrayImage;
use crate::preprocess::{Expression, LandmarkSet, SequenceRecord, LEFT_EYE, MOUTH, RIGHT_EYE, STANDARD_SIDE};

/// Lattice periods (pixels) and weights of the noise octaves.
const OCTAVES: [(f32, f32); 3] = [(16.0, 1.0), (8.0, 0.5), (4.0, 0.25)];

/// Largest displacement allowed at 64×64; scales with the shorter side.
pub const MAX_DISPLACEMENT_64: f32 = 8.0;

fn catmull_rom(p0: f32, p1: f32, p2: f32, p3: f32, t: f32) -> f32 {
    0.5 * ((2.0 * p1)
        + (-p0 + p2) * t
        + (2.0 * p0 - 5.0 * p1 + 4.0 * p2 - p3) * t * t
        + (-p0 + 3.0 * p1 - 3.0 * p2 + p3) * t * t * t)
}

/// Band-limited fractal noise in `[0, 1]`, deterministic in `seed`.
pub fn fractal_noise(width: usize, height: usize, seed: u64) -> GrayImage {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let total: f32 = OCTAVES.iter().map(|o| o.1).sum();
    let mut acc = vec![0.0f32; width * height];
    for &(period, weight) in &OCTAVES {
        let gw = (width as f32 / period).ceil() as usize + 4;
        let gh = (height as f32 / period).ceil() as usize + 4;
        let lattice: Vec<f32> = (0..gw * gh).map(|_| rng.random::<f32>()).collect();
        let at = |gx: usize, gy: usize| lattice[gy * gw + gx];
        for y in 0..height {
            let fy = y as f32 / period + 1.0;
            let (iy, ty) = (fy.floor() as usize, fy.fract());
            for x in 0..width {
                let fx = x as f32 / period + 1.0;
                let (ix, tx) = (fx.floor() as usize, fx.fract());
                let mut rows = [0.0f32; 4];
                for (k, row) in rows.iter_mut().enumerate() {
                    let gy = iy + k - 1;
                    *row = catmull_rom(at(ix - 1, gy), at(ix, gy), at(ix + 1, gy), at(ix + 2, gy), tx);
                }
                acc[y * width + x] += weight * catmull_rom(rows[0], rows[1], rows[2], rows[3], ty);
            }
        }
    }
    // stretch the roughly [0.2, 0.8] sum to use most of the range
    GrayImage::from_fn(width, height, |x, y| {
        0.5 + 1.6 * (acc[y * width + x] / total - 0.5)
    })
}

/// Analytic motion models for frame pairs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SynthKind {
    /// Uniform displacement.
    Translation { dx: f32, dy: f32 },
    /// Rigid rotation about the image center.
    Rotation { degrees: f32 },
    /// Radial expansion `gt = scale · (x − center)`.
    Radial { scale: f32 },
    /// Left half moves by `(dx, dy)`, right half by `(−dx, −dy)`; the seam
    /// is the vertical line `x = width / 2`.
    Discontinuity { dx: f32, dy: f32 },
}

impl SynthKind {
    pub fn label(&self) -> &'static str {
        match self {
            SynthKind::Translation { .. } => "translation",
            SynthKind::Rotation { .. } => "rotation",
            SynthKind::Radial { .. } => "radial",
            SynthKind::Discontinuity { .. } => "discontinuity",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub kind: SynthKind,
    pub width: usize,
    pub height: usize,
    pub texture_seed: u64,
}

impl SynthSpec {
    pub fn new(kind: SynthKind, width: usize, height: usize, texture_seed: u64) -> Self {
        Self {
            kind,
            width,
            height,
            texture_seed,
        }
    }

    pub fn seam_x(&self) -> Option<usize> {
        matches!(self.kind, SynthKind::Discontinuity { .. }).then_some(self.width / 2)
    }

    pub fn ground_truth(&self) -> FlowField {
        let (w, h) = (self.width, self.height);
        let cx = (w as f32) / 2.0;
        let cy = (h as f32) / 2.0;
        match self.kind {
            SynthKind::Translation { dx, dy } => FlowField::uniform(w, h, dx, dy),
            SynthKind::Rotation { degrees } => {
                let (s, c) = degrees.to_radians().sin_cos();
                FlowField::from_fn(w, h, |x, y| {
                    let (px, py) = (x as f32 - cx, y as f32 - cy);
                    [c * px - s * py - px, s * px + c * py - py]
                })
            }
            SynthKind::Radial { scale } => FlowField::from_fn(w, h, |x, y| {
                [scale * (x as f32 - cx), scale * (y as f32 - cy)]
            }),
            SynthKind::Discontinuity { dx, dy } => {
                let seam = w / 2;
                FlowField::from_fn(w, h, |x, _| if x < seam { [dx, dy] } else { [-dx, -dy] })
            }
        }
    }

    fn validate(&self) -> Result<()> {
        if self.width < 8 || self.height < 8 {
            return Err(Error::invalid("synthetic frames must be at least 8x8"));
        }
        let bound = MAX_DISPLACEMENT_64 * (self.width.min(self.height) as f32 / 64.0).max(1.0);
        let max = self.ground_truth().max_magnitude();
        if !(max <= bound) {
            return Err(Error::invalid(format!(
                "ground-truth displacement {max:.2}px exceeds the {bound:.1}px bound"
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct SynthPair {
    pub prev: GrayImage,
    pub next: GrayImage,
    pub ground_truth: FlowField,
}

pub fn generate_pair(spec: &SynthSpec) -> Result<SynthPair> {
    spec.validate()?;
    let prev = fractal_noise(spec.width, spec.height, spec.texture_seed);
    let ground_truth = spec.ground_truth();
    let next = warp_image(&prev, &ground_truth)?;
    Ok(SynthPair {
        prev,
        next,
        ground_truth,
    })
}

/// Translations used by the shift-accuracy suite; every component is at
/// most 3 px.
pub const SUITE_TRANSLATIONS: [(f32, f32); 10] = [
    (2.0, 0.0),
    (0.0, 3.0),
    (3.0, 1.0),
    (-2.0, -2.0),
    (1.0, -3.0),
    (-3.0, 0.0),
    (0.0, -1.0),
    (2.0, 2.0),
    (-1.0, 3.0),
    (3.0, -2.0),
];

/// The benchmark suite: 10 seeded 64×64 instances for each motion kind.
pub fn benchmark_suite(base_seed: u64) -> Vec<SynthSpec> {
    let mut out = Vec::new();
    for (i, &(dx, dy)) in SUITE_TRANSLATIONS.iter().enumerate() {
        out.push(SynthSpec::new(SynthKind::Translation { dx, dy }, 64, 64, base_seed + i as u64));
    }
    for i in 0..10u64 {
        let sign = if i % 2 == 0 { 1.0 } else { -1.0 };
        out.push(SynthSpec::new(
            SynthKind::Rotation { degrees: sign * 3.0 },
            64,
            64,
            base_seed + 100 + i,
        ));
        out.push(SynthSpec::new(
            SynthKind::Radial { scale: sign * 0.05 },
            64,
            64,
            base_seed + 200 + i,
        ));
        out.push(SynthSpec::new(
            SynthKind::Discontinuity { dx: 2.0, dy: 0.0 },
            64,
            64,
            base_seed + 300 + i,
        ));
    }
    out
}

/// Pixel deformation of one expression class at its apex: Gaussian
/// displacement blobs anchored at landmarks of the canonical face.
#[derive(Debug, Clone, PartialEq)]
pub struct MotionTemplate {
    pub label: Expression,
    /// `(landmark index, apex displacement)`.
    pub anchors: Vec<(usize, [f32; 2])>,
}

/// Spatial spread (pixels) of every template blob.
pub const TEMPLATE_SIGMA: f32 = 3.0;

/// Fixed apex templates, one per expression:
/// anger pulls the inner brows down and together and presses the lips,
/// disgust raises the upper lip and the nose wings,
/// fear raises the inner brows and stretches the mouth sideways,
/// happiness lifts the mouth corners outwards,
/// sadness raises the inner brows and lowers the mouth corners,
/// surprise raises both brows and drops the jaw.
pub fn expression_template(label: Expression) -> MotionTemplate {
    let anchors = match label {
        Expression::Anger => vec![(21, [1.2, 1.2]), (22, [-1.2, 1.2]), (51, [0.0, 0.8]), (57, [0.0, -0.8])],
        Expression::Disgust => vec![(51, [0.0, -1.6]), (31, [-0.4, -1.0]), (35, [0.4, -1.0])],
        Expression::Fear => vec![(21, [0.6, -1.5]), (22, [-0.6, -1.5]), (48, [-1.6, 0.3]), (54, [1.6, 0.3])],
        Expression::Happiness => vec![(48, [-1.4, -1.2]), (54, [1.4, -1.2])],
        Expression::Sadness => vec![(21, [0.0, -1.4]), (22, [0.0, -1.4]), (48, [0.0, 1.5]), (54, [0.0, 1.5])],
        Expression::Surprise => vec![(19, [0.0, -1.8]), (24, [0.0, -1.8]), (57, [0.0, 1.8]), (8, [0.0, 1.0])],
    };
    MotionTemplate { label, anchors }
}

impl MotionTemplate {
    /// Apex displacement at a continuous position.
    pub fn displacement(&self, landmarks: &LandmarkSet, x: f32, y: f32) -> [f32; 2] {
        let k = -0.5 / (TEMPLATE_SIGMA * TEMPLATE_SIGMA);
        let mut d = [0.0f32; 2];
        for &(i, v) in &self.anchors {
            let c = landmarks.point(i);
            let w = (k * ((x - c[0]).powi(2) + (y - c[1]).powi(2))).exp();
            d[0] += w * v[0];
            d[1] += w * v[1];
        }
        d
    }
}

fn smoothstep(t: f32) -> f32 {
    let t = t.clamp(0.0, 1.0);
    t * t * (3.0 - 2.0 * t)
}

/// Parameters of a synthetic expression dataset.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExpressionDatasetSpec {
    /// Number of classes, taken in label order from anger.
    pub classes: usize,
    pub sequences_per_class: usize,
    pub frames_per_sequence: usize,
    pub seed: u64,
    /// Half-width of the uniform per-pixel noise added to every frame.
    pub noise: f32,
}

impl ExpressionDatasetSpec {
    pub fn new(sequences_per_class: usize, frames_per_sequence: usize, seed: u64) -> Self {
        Self {
            classes: 6,
            sequences_per_class,
            frames_per_sequence,
            seed,
            noise: 0.01,
        }
    }

    fn validate(&self) -> Result<()> {
        if !(2..=6).contains(&self.classes) {
            return Err(Error::invalid("expression datasets have 2 to 6 classes"));
        }
        if self.sequences_per_class == 0 {
            return Err(Error::invalid("at least one sequence per class is required"));
        }
        if self.frames_per_sequence < 10 {
            return Err(Error::invalid("sequences need at least 10 frames"));
        }
        if !(0.0..0.25).contains(&self.noise) {
            return Err(Error::invalid("noise amplitude must lie in [0, 0.25)"));
        }
        Ok(())
    }
}

/// Generated sequences with the exact flow of every consecutive pair.
#[derive(Debug, Clone)]
pub struct ExpressionDataset {
    pub records: Vec<SequenceRecord>,
    /// `pair_flows[s][t]` maps frame `t + 1` of sequence `s` onto frame `t`.
    pub pair_flows: Vec<Vec<FlowField>>,
}

/// A face-like texture: fractal noise with darker eye and mouth areas.
pub fn render_face(width: usize, height: usize, seed: u64) -> GrayImage {
    let noise = fractal_noise(width, height, seed);
    let lm = LandmarkSet::canonical();
    let sx = width as f32 / STANDARD_SIDE as f32;
    let sy = height as f32 / STANDARD_SIDE as f32;
    let features = [
        (lm.centroid(LEFT_EYE), 2.5f32),
        (lm.centroid(RIGHT_EYE), 2.5),
        (lm.centroid(MOUTH), 3.5),
    ];
    GrayImage::from_fn(width, height, |x, y| {
        let (px, py) = (x as f32 / sx, y as f32 / sy);
        let dark: f32 = features
            .iter()
            .map(|(c, s)| (-((px - c[0]).powi(2) + (py - c[1]).powi(2)) / (2.0 * s * s)).exp())
            .sum();
        0.15 + 0.75 * noise.get(x, y) - 0.3 * dark.min(1.0)
    })
}

/// Flow `F` with `next(x) = prev(x + F(x))` when frame `t` shows the
/// template at intensity `a` and frame `t + 1` at intensity `b`, solved by
/// fixed-point iteration of `F = b·D(x) − a·D(x + F)`.
fn pair_flow(template: &MotionTemplate, lm: &LandmarkSet, w: usize, h: usize, a: f32, b: f32) -> FlowField {
    FlowField::from_fn(w, h, |x, y| {
        let (xf, yf) = (x as f32, y as f32);
        let db = template.displacement(lm, xf, yf);
        let mut f = [(b - a) * db[0], (b - a) * db[1]];
        for _ in 0..50 {
            let da = template.displacement(lm, xf + f[0], yf + f[1]);
            let next = [b * db[0] - a * da[0], b * db[1] - a * da[1]];
            let delta = (next[0] - f[0]).abs().max((next[1] - f[1]).abs());
            f = next;
            if delta < 1e-7 {
                break;
            }
        }
        f
    })
}

/// Sequences that ramp from neutral (frame 0) to the class template at the
/// apex (last frame) with a smoothstep intensity profile. Each sequence has
/// its own texture, apex amplitude in `[0.8, 1.2]` and per-frame noise;
/// the templates are shared by all seeds.
pub fn generate_expression_dataset(spec: &ExpressionDatasetSpec) -> Result<ExpressionDataset> {
    spec.validate()?;
    let lm = LandmarkSet::canonical();
    let (w, h) = (STANDARD_SIDE, STANDARD_SIDE);
    let n = spec.frames_per_sequence;
    let mut records = Vec::new();
    let mut pair_flows = Vec::new();
    for (c, &label) in Expression::ALL.iter().take(spec.classes).enumerate() {
        let template = expression_template(label);
        for s in 0..spec.sequences_per_class {
            let seq_seed = splitmix64(spec.seed.wrapping_add((c * 1_000_003 + s) as u64));
            let mut rng = ChaCha8Rng::seed_from_u64(seq_seed);
            let base = render_face(w, h, rng.random());
            let amplitude: f32 = rng.random_range(0.8..1.2);
            let intensity: Vec<f32> = (0..n).map(|t| amplitude * smoothstep(t as f32 / (n - 1) as f32)).collect();
            let frames = intensity
                .iter()
                .map(|&a| {
                    let field = FlowField::from_fn(w, h, |x, y| {
                        let d = template.displacement(&lm, x as f32, y as f32);
                        [a * d[0], a * d[1]]
                    });
                    let warped = warp_image(&base, &field)?;
                    Ok(GrayImage::from_fn(w, h, |x, y| {
                        warped.get(x, y) + spec.noise * rng.random_range(-1.0f32..1.0)
                    }))
                })
                .collect::<Result<Vec<_>>>()?;
            let flows = intensity
                .windows(2)
                .map(|p| pair_flow(&template, &lm, w, h, p[0], p[1]))
                .collect();
            records.push(SequenceRecord {
                id: format!("{}_{s:03}", label.name()),
                frames,
                landmarks: vec![lm.clone(); n],
                label,
            });
            pair_flows.push(flows);
        }
    }
    Ok(ExpressionDataset { records, pair_flows })
}

/// Writes the dataset in the ingestible layout:
/// `root/<id>/frame_0001.png …`, `landmarks.json`, `label.txt`, and the
/// exact pair flows as `root/<id>/ground_truth/<t>.flo`.
pub fn write_expression_dataset(dataset: &ExpressionDataset, root: &Path) -> Result<()> {
    for (record, flows) in dataset.records.iter().zip(&dataset.pair_flows) {
        let dir = root.join(&record.id);
        std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        for (t, frame) in record.frames.iter().enumerate() {
            frame.save_png(&dir.join(format!("frame_{:04}.png", t + 1)))?;
        }
        let json = serde_json::to_string(&record.landmarks).map_err(|e| Error::Config(e.to_string()))?;
        let path = dir.join("landmarks.json");
        std::fs::write(&path, json).map_err(|e| Error::io(&path, e))?;
        let path = dir.join("label.txt");
        std::fs::write(&path, format!("{}\n", record.label)).map_err(|e| Error::io(&path, e))?;
        for (t, flow) in flows.iter().enumerate() {
            write_flo(flow, &dir.join("ground_truth").join(format!("{t}.flo")))?;
        }
    }
    Ok(())
}
