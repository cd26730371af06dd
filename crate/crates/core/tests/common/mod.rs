#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use faceflow::augment::FeatureStore;
use faceflow::descriptors::{DescriptorKind, DescriptorOptions};
use faceflow::engines::{EngineConfig, EngineId};
use faceflow::eval::FeatureTable;
use faceflow::harness::{compute_flows, extract_features, FlowCache, Tim10Flows};
use faceflow::preprocess::{KeyFrameRule, SequenceRecord, TimMode};
use faceflow::synth::{generate_expression_dataset, ExpressionDatasetSpec};

pub fn expression_records(per_class: usize, frames: usize, seed: u64) -> Vec<SequenceRecord> {
    generate_expression_dataset(&ExpressionDatasetSpec::new(per_class, frames, seed))
        .unwrap()
        .records
}

pub fn feature_table(records: &[SequenceRecord], engine: &EngineId, kind: DescriptorKind, mode: TimMode) -> FeatureTable {
    let flows = compute_flows(
        records,
        &EngineConfig::with_defaults(engine, None),
        &FlowCache::disabled(),
        mode,
        KeyFrameRule::default(),
        Tim10Flows::default(),
    )
    .unwrap();
    extract_features(records, &flows, kind, DescriptorOptions::default()).unwrap().0
}

/// Copy of `table` with uniform noise of up to `rel` times each feature's
/// standard deviation added to every value.
pub fn noisy_copy(table: &FeatureTable, rel: f64, seed: u64) -> FeatureTable {
    let dim = table.features[0].len();
    let n = table.len() as f64;
    let std: Vec<f64> = (0..dim)
        .map(|j| {
            let mean = table.features.iter().map(|f| f[j]).sum::<f64>() / n;
            (table.features.iter().map(|f| (f[j] - mean).powi(2)).sum::<f64>() / n).sqrt()
        })
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let features = table
        .features
        .iter()
        .map(|f| f.iter().zip(&std).map(|(v, s)| v + rel * s * rng.random_range(-1.0..1.0)).collect())
        .collect();
    FeatureTable::new(table.ids.clone(), table.labels.clone(), features).unwrap()
}

pub const NOISY: &str = "noisy";

/// Farneback HOF features of a synthetic dataset plus a second
/// representation equal to them with small noise.
pub fn benign_store(records: &[SequenceRecord]) -> FeatureStore {
    let base = feature_table(records, &EngineId::Farneback, DescriptorKind::Hof, TimMode::Tim2);
    let mut store = FeatureStore::new();
    store.insert(&EngineId::External(NOISY.into()), noisy_copy(&base, 0.05, 99));
    store.insert(&EngineId::Farneback, base);
    store
}

pub fn write_synthetic(root: &std::path::Path, per_class: usize, frames: usize, seed: u64) {
    let dataset = generate_expression_dataset(&ExpressionDatasetSpec::new(per_class, frames, seed)).unwrap();
    faceflow::synth::write_expression_dataset(&dataset, root).unwrap();
}

/// Every file below `root` with its contents, in sorted path order.
pub fn tree(root: &std::path::Path) -> Vec<(String, Vec<u8>)> {
    fn walk(root: &std::path::Path, dir: &std::path::Path, out: &mut Vec<(String, Vec<u8>)>) {
        let mut entries: Vec<_> = std::fs::read_dir(dir).unwrap().map(|e| e.unwrap().path()).collect();
        entries.sort();
        for p in entries {
            if p.is_dir() {
                walk(root, &p, out);
            } else {
                let rel = p.strip_prefix(root).unwrap().to_string_lossy().into_owned();
                out.push((rel, std::fs::read(&p).unwrap()));
            }
        }
    }
    let mut out = Vec::new();
    walk(root, root, &mut out);
    out
}
