//! Cross-engine training augmentation: the training side of every split is
//! enlarged with the same sequences described through other flow engines,
//! while the test side stays on the base engine.

use std::collections::{BTreeMap, HashSet};
use std::fmt::Write as _;
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::engines::EngineId;
use crate::error::{Error, Result};
use crate::eval::{evaluate_split, train_and_score, EvalOptions, FeatureTable, Split, SplitPlan};

/// Separates a sequence id from the engine suffix of an augmented copy.
pub const ENGINE_SUFFIX_SEPARATOR: char = '#';

/// Stated at the top of every emitted report.
pub const CLASSIFIER_NOTE: &str =
    "Classifier: one-vs-one linear SVM (C = 1), used in place of a convolutional network.";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AugmentationConfig {
    /// Bit `i` set when `pool[i]` augments the training set.
    pub config_id: u64,
    pub base: EngineId,
    pub engines: Vec<EngineId>,
}

impl AugmentationConfig {
    pub fn label(&self) -> String {
        if self.engines.is_empty() {
            "none".into()
        } else {
            self.engines.iter().map(|e| e.name()).collect::<Vec<_>>().join("+")
        }
    }
}

/// All `2^|pool|` subsets of `pool` in bitmask order.
pub fn enumerate_configs(base: &EngineId, pool: &[EngineId]) -> Result<Vec<AugmentationConfig>> {
    if pool.contains(base) {
        return Err(Error::invalid(format!("base engine {base} is also in the augmentation pool")));
    }
    let mut seen = HashSet::new();
    if let Some(dup) = pool.iter().find(|e| !seen.insert(e.name())) {
        return Err(Error::invalid(format!("engine {dup} appears twice in the pool")));
    }
    if pool.len() > 16 {
        return Err(Error::invalid("augmentation pools are limited to 16 engines"));
    }
    Ok((0..1u64 << pool.len())
        .map(|mask| AugmentationConfig {
            config_id: mask,
            base: base.clone(),
            engines: pool
                .iter()
                .enumerate()
                .filter(|(i, _)| mask >> i & 1 == 1)
                .map(|(_, e)| e.clone())
                .collect(),
        })
        .collect())
}

/// Feature tables of one dataset, one per engine.
#[derive(Debug, Clone, Default)]
pub struct FeatureStore {
    tables: BTreeMap<String, FeatureTable>,
}

impl FeatureStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, engine: &EngineId, table: FeatureTable) {
        self.tables.insert(engine.name().to_string(), table);
    }

    pub fn get(&self, engine: &EngineId) -> Result<&FeatureTable> {
        self.tables
            .get(engine.name())
            .ok_or_else(|| Error::protocol(format!("no features computed with engine {engine}")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AugmentedTrain {
    /// `id` for base samples, `id#engine` for augmented copies.
    pub ids: Vec<String>,
    pub features: Vec<Vec<f64>>,
    pub labels: Vec<usize>,
}

fn id_root(id: &str) -> &str {
    id.split(ENGINE_SUFFIX_SEPARATOR).next().unwrap_or(id)
}

/// Base-engine training samples followed by one copy per augmenting engine.
pub fn build_augmented_train(split: &Split, config: &AugmentationConfig, store: &FeatureStore) -> Result<AugmentedTrain> {
    let (mut features, mut labels) = store.get(&config.base)?.select(&split.train)?;
    let mut ids = split.train.clone();
    for engine in &config.engines {
        let table = store.get(engine)?;
        let (x, y) = table.select(&split.train).map_err(|e| match e {
            Error::Protocol(m) => Error::protocol(format!("engine {engine}: {m}")),
            other => other,
        })?;
        features.extend(x);
        labels.extend(y);
        ids.extend(split.train.iter().map(|id| format!("{id}{ENGINE_SUFFIX_SEPARATOR}{}", engine.name())));
    }
    let test: HashSet<&str> = split.test.iter().map(String::as_str).collect();
    if let Some(leak) = ids.iter().find(|id| test.contains(id_root(id))) {
        return Err(Error::Leakage(format!("training sample {leak} belongs to the test set")));
    }
    Ok(AugmentedTrain { ids, features, labels })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitAccuracy {
    pub split_id: usize,
    pub accuracy: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfigResult {
    pub config: AugmentationConfig,
    pub splits: Vec<SplitAccuracy>,
    /// Mean over splits; `None` when any split failed.
    pub mean_accuracy: Option<f64>,
    pub delta_vs_baseline: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AugmentationReport {
    pub base: EngineId,
    pub pool: Vec<EngineId>,
    pub results: Vec<ConfigResult>,
}

impl AugmentationReport {
    pub fn baseline(&self) -> &ConfigResult {
        &self.results[0]
    }
}

fn split_accuracy(split: &Split, config: &AugmentationConfig, store: &FeatureStore, options: &EvalOptions) -> Result<f64> {
    if config.engines.is_empty() {
        return Ok(evaluate_split(store.get(&config.base)?, split, options)?.accuracy);
    }
    let train = build_augmented_train(split, config, store)?;
    let (test_x, test_y) = store.get(&config.base)?.select(&split.test)?;
    Ok(train_and_score(train.features, &train.labels, test_x, &test_y, options)?.1)
}

/// Accuracy of every configuration over the same splits. Failed splits are
/// recorded rather than aborting the run.
pub fn run_augmentation_experiment(
    store: &FeatureStore,
    base: &EngineId,
    pool: &[EngineId],
    plan: &SplitPlan,
    options: &EvalOptions,
) -> Result<AugmentationReport> {
    let configs = enumerate_configs(base, pool)?;
    let jobs: Vec<(usize, usize)> = (0..configs.len())
        .flat_map(|c| (0..plan.splits.len()).map(move |s| (c, s)))
        .collect();
    let accs: Vec<SplitAccuracy> = jobs
        .par_iter()
        .map(|&(c, s)| {
            let split = &plan.splits[s];
            match split_accuracy(split, &configs[c], store, options) {
                Ok(a) => SplitAccuracy {
                    split_id: split.split_id,
                    accuracy: Some(a),
                    error: None,
                },
                Err(e) => {
                    log::error!("augmentation config {} split {}: {e}", configs[c].config_id, split.split_id);
                    SplitAccuracy {
                        split_id: split.split_id,
                        accuracy: None,
                        error: Some(e.to_string()),
                    }
                }
            }
        })
        .collect();
    let mut results: Vec<ConfigResult> = configs
        .into_iter()
        .zip(accs.chunks(plan.splits.len().max(1)))
        .map(|(config, splits)| {
            let values: Option<Vec<f64>> = splits.iter().map(|s| s.accuracy).collect();
            let mean_accuracy = values
                .filter(|v| !v.is_empty())
                .map(|v| v.iter().sum::<f64>() / v.len() as f64);
            ConfigResult {
                config,
                splits: splits.to_vec(),
                mean_accuracy,
                delta_vs_baseline: None,
            }
        })
        .collect();
    let baseline = results[0].mean_accuracy;
    for r in &mut results {
        r.delta_vs_baseline = r.mean_accuracy.zip(baseline).map(|(a, b)| a - b);
    }
    Ok(AugmentationReport {
        base: base.clone(),
        pool: pool.to_vec(),
        results,
    })
}

fn fmt_acc(a: Option<f64>) -> String {
    a.map_or_else(|| "failed".to_string(), |v| format!("{v:.6}"))
}

/// `base_engine,config_bitmask,engines_in_config,split_id,accuracy`, per
/// split and then one `mean` row per configuration, preceded by a `#`
/// comment naming the classifier.
pub fn write_augmentation_csv(mut out: impl Write, report: &AugmentationReport) -> std::io::Result<()> {
    writeln!(out, "# {CLASSIFIER_NOTE}")?;
    writeln!(out, "base_engine,config_bitmask,engines_in_config,split_id,accuracy")?;
    for r in &report.results {
        let prefix = format!("{},{},{}", report.base, r.config.config_id, r.config.label());
        for s in &r.splits {
            writeln!(out, "{prefix},{},{}", s.split_id, fmt_acc(s.accuracy))?;
        }
        writeln!(out, "{prefix},mean,{}", fmt_acc(r.mean_accuracy))?;
    }
    Ok(())
}

/// Configurations as columns, one membership row per pool engine and the
/// mean accuracy below; the three best configurations are in bold.
pub fn augmentation_markdown(report: &AugmentationReport) -> String {
    let mut ranked: Vec<(usize, f64)> = report
        .results
        .iter()
        .enumerate()
        .filter_map(|(i, r)| r.mean_accuracy.map(|a| (i, a)))
        .collect();
    ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    let top: HashSet<usize> = ranked.iter().take(3).map(|r| r.0).collect();

    let mut s = String::new();
    let _ = writeln!(s, "# Augmentation with base engine `{}`\n", report.base);
    let _ = writeln!(s, "{CLASSIFIER_NOTE}\n");
    let _ = write!(s, "| |");
    for r in &report.results {
        let _ = write!(s, " {} |", r.config.config_id);
    }
    let _ = write!(s, "\n|---|");
    for _ in &report.results {
        let _ = write!(s, ":-:|");
    }
    s.push('\n');
    for engine in &report.pool {
        let _ = write!(s, "| {engine} |");
        for r in &report.results {
            let _ = write!(s, " {} |", if r.config.engines.contains(engine) { "■" } else { "" });
        }
        s.push('\n');
    }
    let _ = write!(s, "| accuracy |");
    for (i, r) in report.results.iter().enumerate() {
        let v = fmt_acc(r.mean_accuracy);
        let _ = write!(s, " {} |", if top.contains(&i) { format!("**{v}**") } else { v });
    }
    s.push('\n');
    s
}
