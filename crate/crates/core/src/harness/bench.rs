use std::collections::BTreeMap;
use std::io::Write;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::engines::EngineConfig;
use crate::error::{Error, Result};
use crate::flow::FlowField;
use crate::metrics::{flow_error, flow_error_where, interior_flow_error, FlowErrorStats};
use crate::synth::{benchmark_suite, generate_pair, SynthSpec};

/// Border width excluded from the interior statistics.
pub const INTERIOR_BAND: usize = 8;
/// Half-width of the band around a motion seam reported separately.
pub const SEAM_BAND: f64 = 3.0;

/// Label of the control row that scores the ground truth against itself.
pub const CONTROL_ROW: &str = "ground_truth";

/// Errors of one engine on one motion kind, averaged over its instances.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub engine: String,
    pub kind: String,
    pub instances: usize,
    pub mean_epe: f64,
    pub interior_mean_epe: f64,
    pub mean_angular_error: f64,
    pub inlier_fraction_0_5px: f64,
    /// Inlier fraction outside the seam band (discontinuity cases only).
    pub off_seam_inlier_fraction: Option<f64>,
    /// Mean EPE inside the seam band (discontinuity cases only).
    pub seam_band_epe: Option<f64>,
    /// Slowest single pair, in seconds.
    pub max_seconds: f64,
}

fn in_seam_band(x: usize, seam: usize) -> bool {
    (x as f64 + 0.5 - seam as f64).abs() <= SEAM_BAND
}

struct Sample {
    all: FlowErrorStats,
    interior: FlowErrorStats,
    off_seam: Option<FlowErrorStats>,
    seam: Option<FlowErrorStats>,
    seconds: f64,
}

fn score(spec: &SynthSpec, flow: &FlowField, gt: &FlowField, seconds: f64) -> Result<Sample> {
    let (off_seam, seam) = match spec.seam_x() {
        Some(s) => (
            Some(flow_error_where(flow, gt, |x, _| !in_seam_band(x, s))?),
            Some(flow_error_where(flow, gt, |x, _| in_seam_band(x, s))?),
        ),
        None => (None, None),
    };
    Ok(Sample {
        all: flow_error(flow, gt)?,
        interior: interior_flow_error(flow, gt, INTERIOR_BAND)?,
        off_seam,
        seam,
        seconds,
    })
}

fn aggregate(engine: &str, kind: &str, samples: &[Sample]) -> BenchRow {
    let n = samples.len() as f64;
    let mean = |f: &dyn Fn(&Sample) -> f64| samples.iter().map(f).sum::<f64>() / n;
    let has_seam = samples.iter().all(|s| s.seam.is_some());
    BenchRow {
        engine: engine.into(),
        kind: kind.into(),
        instances: samples.len(),
        mean_epe: mean(&|s| s.all.mean_epe),
        interior_mean_epe: mean(&|s| s.interior.mean_epe),
        mean_angular_error: mean(&|s| s.all.mean_angular_error),
        inlier_fraction_0_5px: mean(&|s| s.all.inlier_fraction_0_5px),
        off_seam_inlier_fraction: has_seam.then(|| mean(&|s| s.off_seam.unwrap().inlier_fraction_0_5px)),
        seam_band_epe: has_seam.then(|| mean(&|s| s.seam.unwrap().mean_epe)),
        max_seconds: samples.iter().map(|s| s.seconds).fold(0.0, f64::max),
    }
}

/// Scores each native engine on the seeded synthetic suite. The first rows
/// are the ground-truth control; rows are grouped by engine in input order
/// and by motion kind in suite order.
pub fn flow_bench(engines: &[EngineConfig], base_seed: u64) -> Result<Vec<BenchRow>> {
    if let Some(e) = engines.iter().find(|e| !e.id().is_native()) {
        return Err(Error::invalid(format!("flow bench needs native engines, got {}", e.id())));
    }
    let suite = benchmark_suite(base_seed);
    let pairs = suite.par_iter().map(generate_pair).collect::<Result<Vec<_>>>()?;
    let mut kinds: Vec<&'static str> = Vec::new();
    for s in &suite {
        if !kinds.contains(&s.kind.label()) {
            kinds.push(s.kind.label());
        }
    }
    let group = |name: &str, samples: Vec<Sample>| {
        let mut by_kind: BTreeMap<&str, Vec<Sample>> = BTreeMap::new();
        for (spec, s) in suite.iter().zip(samples) {
            by_kind.entry(spec.kind.label()).or_default().push(s);
        }
        kinds
            .iter()
            .map(|k| aggregate(name, k, &by_kind[k]))
            .collect::<Vec<_>>()
    };
    let control = suite
        .iter()
        .zip(&pairs)
        .map(|(spec, p)| score(spec, &p.ground_truth, &p.ground_truth, 0.0))
        .collect::<Result<Vec<_>>>()?;
    let mut rows = group(CONTROL_ROW, control);
    for engine in engines {
        let samples = suite
            .par_iter()
            .zip(&pairs)
            .map(|(spec, p)| {
                let start = Instant::now();
                let flow = engine.compute(&p.prev, &p.next)?;
                score(spec, &flow, &p.ground_truth, start.elapsed().as_secs_f64())
            })
            .collect::<Result<Vec<_>>>()?;
        rows.extend(group(engine.id().name(), samples));
    }
    Ok(rows)
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(String::new, |x| format!("{x:.6}"))
}

/// CSV without timings, so identical seeds give identical bytes.
pub fn write_bench_csv(mut out: impl Write, rows: &[BenchRow]) -> std::io::Result<()> {
    writeln!(
        out,
        "engine,kind,instances,mean_epe,interior_mean_epe,mean_angular_error,inlier_fraction_0_5px,off_seam_inlier_fraction,seam_band_epe"
    )?;
    for r in rows {
        writeln!(
            out,
            "{},{},{},{:.6},{:.6},{:.6},{:.6},{},{}",
            r.engine,
            r.kind,
            r.instances,
            r.mean_epe,
            r.interior_mean_epe,
            r.mean_angular_error,
            r.inlier_fraction_0_5px,
            opt(r.off_seam_inlier_fraction),
            opt(r.seam_band_epe)
        )?;
    }
    Ok(())
}

pub fn bench_markdown(rows: &[BenchRow]) -> String {
    let mut s = String::from(
        "| engine | kind | mean EPE | interior EPE | AE (rad) | inliers < 0.5 px | off-seam inliers | seam-band EPE | max s/pair |\n",
    );
    s.push_str("|---|---|---|---|---|---|---|---|---|\n");
    let cell = |v: Option<f64>| v.map_or_else(|| "".to_string(), |x| format!("{x:.3}"));
    for r in rows {
        s.push_str(&format!(
            "| {} | {} | {:.3} | {:.3} | {:.3} | {:.3} | {} | {} | {:.3} |\n",
            r.engine,
            r.kind,
            r.mean_epe,
            r.interior_mean_epe,
            r.mean_angular_error,
            r.inlier_fraction_0_5px,
            cell(r.off_seam_inlier_fraction),
            cell(r.seam_band_epe),
            r.max_seconds
        ));
    }
    s
}
