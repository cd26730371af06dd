//! WebAssembly bindings for a static demo page: estimate a synthetic flow
//! and view it as a color wheel, inspect its direction histograms, and
//! compute an AUC with its ROC curve.

use wasm_bindgen::prelude::*;

use faceflow::descriptors::{describe, DescriptorKind, DescriptorOptions, DIRECTION_BINS, GRID_SIDE};
use faceflow::engines::{EngineConfig, EngineId};
use faceflow::eval::auc;
use faceflow::metrics::{flow_error, interior_flow_error};
use faceflow::synth::{generate_pair, SynthKind, SynthSpec};
use faceflow::{FlowField, GrayImage};

const SIDE: usize = 64;

fn js_err(e: impl std::fmt::Display) -> JsValue {
    JsValue::from_str(&e.to_string())
}

fn hsv_to_rgb(h: f32, s: f32, v: f32) -> [u8; 3] {
    let c = v * s;
    let hp = (h / 60.0).rem_euclid(6.0);
    let x = c * (1.0 - (hp % 2.0 - 1.0).abs());
    let (r, g, b) = match hp as u32 {
        0 => (c, x, 0.0),
        1 => (x, c, 0.0),
        2 => (0.0, c, x),
        3 => (0.0, x, c),
        4 => (x, 0.0, c),
        _ => (c, 0.0, x),
    };
    let m = v - c;
    [r, g, b].map(|t| ((t + m) * 255.0).round().clamp(0.0, 255.0) as u8)
}

/// RGBA color coding of a flow: hue is direction, saturation is magnitude
/// relative to `max_magnitude`.
pub fn flow_to_rgba(flow: &FlowField, max_magnitude: f32) -> Vec<u8> {
    let scale = if max_magnitude > 0.0 { 1.0 / max_magnitude } else { 0.0 };
    let mut out = Vec::with_capacity(flow.vectors().len() * 4);
    for &[u, v] in flow.vectors() {
        let hue = v.atan2(u).to_degrees().rem_euclid(360.0);
        let sat = (u.hypot(v) * scale).min(1.0);
        let [r, g, b] = hsv_to_rgb(hue, sat, 1.0);
        out.extend_from_slice(&[r, g, b, 255]);
    }
    out
}

fn gray_to_rgba(img: &GrayImage) -> Vec<u8> {
    img.data()
        .iter()
        .flat_map(|&p| {
            let g = (p.clamp(0.0, 1.0) * 255.0).round() as u8;
            [g, g, g, 255]
        })
        .collect()
}

fn parse_kind(kind: &str, amount: f32) -> Result<SynthKind, JsValue> {
    Ok(match kind {
        "translation" => SynthKind::Translation { dx: amount, dy: amount / 2.0 },
        "rotation" => SynthKind::Rotation { degrees: amount },
        "radial" => SynthKind::Radial { scale: amount / 50.0 },
        "discontinuity" => SynthKind::Discontinuity { dx: amount, dy: 0.0 },
        other => return Err(JsValue::from_str(&format!("unknown motion kind {other:?}"))),
    })
}

/// An estimated flow on a synthetic 64×64 pair, with its ground truth.
#[wasm_bindgen]
pub struct FlowDemo {
    prev: GrayImage,
    estimate: FlowField,
    truth: FlowField,
}

#[wasm_bindgen]
impl FlowDemo {
    /// `kind` is translation, rotation, radial or discontinuity; `amount`
    /// is pixels for shifts, degrees for rotation and percent for radial.
    #[wasm_bindgen(constructor)]
    pub fn new(kind: &str, amount: f32, engine: &str, seed: u32) -> Result<FlowDemo, JsValue> {
        let spec = SynthSpec::new(parse_kind(kind, amount)?, SIDE, SIDE, seed as u64);
        let pair = generate_pair(&spec).map_err(js_err)?;
        let id: EngineId = engine.parse().map_err(js_err)?;
        if !id.is_native() {
            return Err(JsValue::from_str("only native engines run in the browser"));
        }
        let estimate = EngineConfig::with_defaults(&id, None)
            .compute(&pair.prev, &pair.next)
            .map_err(js_err)?;
        Ok(FlowDemo {
            prev: pair.prev,
            estimate,
            truth: pair.ground_truth,
        })
    }

    pub fn width(&self) -> usize {
        SIDE
    }

    pub fn height(&self) -> usize {
        SIDE
    }

    fn color_scale(&self) -> f32 {
        self.truth.max_magnitude().max(self.estimate.max_magnitude())
    }

    pub fn frame_rgba(&self) -> Vec<u8> {
        gray_to_rgba(&self.prev)
    }

    pub fn estimate_rgba(&self) -> Vec<u8> {
        flow_to_rgba(&self.estimate, self.color_scale())
    }

    pub fn truth_rgba(&self) -> Vec<u8> {
        flow_to_rgba(&self.truth, self.color_scale())
    }

    pub fn mean_epe(&self) -> f64 {
        flow_error(&self.estimate, &self.truth).map_or(f64::NAN, |s| s.mean_epe)
    }

    pub fn interior_epe(&self) -> f64 {
        interior_flow_error(&self.estimate, &self.truth, 8).map_or(f64::NAN, |s| s.mean_epe)
    }

    pub fn inlier_fraction(&self) -> f64 {
        flow_error(&self.estimate, &self.truth).map_or(f64::NAN, |s| s.inlier_fraction_0_5px)
    }

    /// Descriptor (`hof`, `hoof` or `lmp`) of the estimated flow: 25 cells
    /// of 12 direction bins, row-major.
    pub fn descriptor(&self, kind: &str) -> Result<Vec<f64>, JsValue> {
        let kind: DescriptorKind = kind.parse().map_err(js_err)?;
        if kind == DescriptorKind::Raw {
            return Err(JsValue::from_str("the raw descriptor has no histogram view"));
        }
        Ok(describe(&self.estimate, kind, DescriptorOptions::default())
            .map_err(js_err)?
            .values)
    }

    /// Direction histogram summed over all cells.
    pub fn total_histogram(&self, kind: &str) -> Result<Vec<f64>, JsValue> {
        let d = self.descriptor(kind)?;
        let mut out = vec![0.0; DIRECTION_BINS];
        for cell in d.chunks(DIRECTION_BINS) {
            out.iter_mut().zip(cell).for_each(|(a, b)| *a += b);
        }
        Ok(out)
    }
}

#[wasm_bindgen]
pub fn grid_side() -> usize {
    GRID_SIDE
}

#[wasm_bindgen]
pub fn direction_bins() -> usize {
    DIRECTION_BINS
}

fn parse_scores(text: &str) -> Result<Vec<f64>, JsValue> {
    text.split(|c: char| c == ',' || c.is_whitespace())
        .filter(|t| !t.is_empty())
        .map(|t| t.parse::<f64>().map_err(|_| JsValue::from_str(&format!("not a number: {t:?}"))))
        .collect()
}

/// AUC of two score lists and the points of the ROC curve.
#[wasm_bindgen]
pub struct AucDemo {
    auc: f64,
    fpr: Vec<f64>,
    tpr: Vec<f64>,
}

#[wasm_bindgen]
impl AucDemo {
    /// Scores are comma or whitespace separated.
    #[wasm_bindgen(constructor)]
    pub fn new(positives: &str, negatives: &str) -> Result<AucDemo, JsValue> {
        let pos = parse_scores(positives)?;
        let neg = parse_scores(negatives)?;
        let value = auc(&pos, &neg).map_err(js_err)?;
        let (fpr, tpr) = roc_points(&pos, &neg);
        Ok(AucDemo { auc: value, fpr, tpr })
    }

    pub fn auc(&self) -> f64 {
        self.auc
    }

    pub fn fpr(&self) -> Vec<f64> {
        self.fpr.clone()
    }

    pub fn tpr(&self) -> Vec<f64> {
        self.tpr.clone()
    }
}

/// ROC vertices from sweeping the threshold down through the distinct
/// scores; tied scores move both rates at once.
pub fn roc_points(pos: &[f64], neg: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let mut all: Vec<(f64, bool)> = pos.iter().map(|&s| (s, true)).chain(neg.iter().map(|&s| (s, false))).collect();
    all.sort_by(|a, b| b.0.total_cmp(&a.0));
    let (np, nn) = (pos.len() as f64, neg.len() as f64);
    let (mut tp, mut fp) = (0.0, 0.0);
    let mut fpr = vec![0.0];
    let mut tpr = vec![0.0];
    let mut i = 0;
    while i < all.len() {
        let s = all[i].0;
        while i < all.len() && all[i].0 == s {
            if all[i].1 {
                tp += 1.0;
            } else {
                fp += 1.0;
            }
            i += 1;
        }
        fpr.push(fp / nn);
        tpr.push(tp / np);
    }
    (fpr, tpr)
}
