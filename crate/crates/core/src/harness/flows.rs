use std::path::PathBuf;

use rayon::prelude::*;

use super::cache::FlowCache;
use super::config::Tim10Flows;
use crate::engines::{external_flow_path, import_external_flow, EngineConfig};
use crate::error::{Error, Result};
use crate::flow::FlowField;
use crate::preprocess::{select_key_images, KeyFrameRule, SequenceRecord, TimMode};

/// Flows of one sequence after temporal normalization.
#[derive(Debug, Clone, PartialEq)]
pub struct SequenceFlows {
    pub sequence_id: String,
    /// Frame index pairs `(a, b)`, one per flow.
    pub pairs: Vec<(usize, usize)>,
    pub flows: Vec<FlowField>,
    /// Frames kept by the temporal normalization.
    pub key_frames: Vec<usize>,
}

fn key_pairs(keys: &[usize]) -> Vec<(usize, usize)> {
    keys.windows(2).map(|w| (w[0], w[1])).collect()
}

fn sum_flows(flows: &[FlowField]) -> FlowField {
    let (w, h) = flows[0].dims();
    FlowField::from_fn(w, h, |x, y| {
        flows.iter().fold([0.0, 0.0], |acc, f| {
            let v = f.get(x, y);
            [acc[0] + v[0], acc[1] + v[1]]
        })
    })
}

fn check_too_short(records: &[SequenceRecord], mode: TimMode) -> Result<()> {
    let need = mode.frame_count();
    if let Some(r) = records.iter().find(|r| r.frames.len() < need) {
        return Err(Error::protocol(format!(
            "sequence {} has {} frames; {} needs {need}",
            r.id,
            r.frames.len(),
            mode
        )));
    }
    Ok(())
}

/// Flows feeding the descriptors of every sequence, in input order.
///
/// TIM2 uses the single flow from the first to the last frame. TIM10 first
/// computes all consecutive-frame flows, picks the key frames from them and
/// then derives one flow per consecutive key-frame pair.
pub fn compute_flows(
    records: &[SequenceRecord],
    engine: &EngineConfig,
    cache: &FlowCache,
    mode: TimMode,
    rule: KeyFrameRule,
    tim10_flows: Tim10Flows,
) -> Result<Vec<SequenceFlows>> {
    check_too_short(records, mode)?;
    if let EngineConfig::External { name, flow_root } = engine {
        return import_flows(records, name, flow_root, mode, rule, tim10_flows);
    }
    records
        .par_iter()
        .map(|r| {
            let flow = |a: usize, b: usize| {
                cache.get_or_compute(engine, &r.id, a, b, || engine.compute(&r.frames[a], &r.frames[b]))
            };
            let n = r.frames.len();
            match mode {
                TimMode::Tim2 => Ok(SequenceFlows {
                    sequence_id: r.id.clone(),
                    pairs: vec![(0, n - 1)],
                    flows: vec![flow(0, n - 1)?],
                    key_frames: vec![0, n - 1],
                }),
                TimMode::Tim10 => {
                    let consecutive = (0..n - 1).map(|t| flow(t, t + 1)).collect::<Result<Vec<_>>>()?;
                    let keys = select_key_images(r, &consecutive, 10, rule)?;
                    let pairs = key_pairs(&keys);
                    let flows = pairs
                        .iter()
                        .map(|&(a, b)| match tim10_flows {
                            _ if b == a + 1 => Ok(consecutive[a].clone()),
                            Tim10Flows::KeyPairs => flow(a, b),
                            Tim10Flows::ConsecutiveSum => Ok(sum_flows(&consecutive[a..b])),
                        })
                        .collect::<Result<Vec<_>>>()?;
                    Ok(SequenceFlows {
                        sequence_id: r.id.clone(),
                        pairs,
                        flows,
                        key_frames: keys,
                    })
                }
            }
        })
        .collect()
}

fn require_files(paths: impl IntoIterator<Item = PathBuf>, engine: &str) -> Result<()> {
    let missing: Vec<String> = paths
        .into_iter()
        .filter(|p| !p.is_file())
        .map(|p| p.display().to_string())
        .collect();
    if missing.is_empty() {
        Ok(())
    } else {
        Err(Error::protocol(format!(
            "engine {engine} is missing {} flow file(s): {}",
            missing.len(),
            missing.join(", ")
        )))
    }
}

fn import_flows(
    records: &[SequenceRecord],
    name: &str,
    flow_root: &std::path::Path,
    mode: TimMode,
    rule: KeyFrameRule,
    tim10_flows: Tim10Flows,
) -> Result<Vec<SequenceFlows>> {
    let path = |r: &SequenceRecord, a: usize, b: usize| external_flow_path(flow_root, name, &r.id, a, b);
    let load = |r: &SequenceRecord, a: usize, b: usize| import_external_flow(&path(r, a, b), r.frames[0].dims());
    match mode {
        TimMode::Tim2 => {
            require_files(records.iter().map(|r| path(r, 0, r.frames.len() - 1)), name)?;
            records
                .par_iter()
                .map(|r| {
                    let n = r.frames.len();
                    Ok(SequenceFlows {
                        sequence_id: r.id.clone(),
                        pairs: vec![(0, n - 1)],
                        flows: vec![load(r, 0, n - 1)?],
                        key_frames: vec![0, n - 1],
                    })
                })
                .collect()
        }
        TimMode::Tim10 => {
            require_files(
                records
                    .iter()
                    .flat_map(|r| (0..r.frames.len() - 1).map(move |t| path(r, t, t + 1))),
                name,
            )?;
            let staged: Vec<(Vec<FlowField>, Vec<usize>)> = records
                .par_iter()
                .map(|r| {
                    let consecutive = (0..r.frames.len() - 1)
                        .map(|t| load(r, t, t + 1))
                        .collect::<Result<Vec<_>>>()?;
                    let keys = select_key_images(r, &consecutive, 10, rule)?;
                    Ok((consecutive, keys))
                })
                .collect::<Result<_>>()?;
            if tim10_flows == Tim10Flows::KeyPairs {
                require_files(
                    records.iter().zip(&staged).flat_map(|(r, (_, keys))| {
                        key_pairs(keys)
                            .into_iter()
                            .filter(|&(a, b)| b != a + 1)
                            .map(move |(a, b)| path(r, a, b))
                    }),
                    name,
                )?;
            }
            records
                .par_iter()
                .zip(staged)
                .map(|(r, (consecutive, keys))| {
                    let pairs = key_pairs(&keys);
                    let flows = pairs
                        .iter()
                        .map(|&(a, b)| match tim10_flows {
                            _ if b == a + 1 => Ok(consecutive[a].clone()),
                            Tim10Flows::KeyPairs => load(r, a, b),
                            Tim10Flows::ConsecutiveSum => Ok(sum_flows(&consecutive[a..b])),
                        })
                        .collect::<Result<Vec<_>>>()?;
                    Ok(SequenceFlows {
                        sequence_id: r.id.clone(),
                        pairs,
                        flows,
                        key_frames: keys,
                    })
                })
                .collect()
        }
    }
}
