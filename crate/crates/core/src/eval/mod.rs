//! Train/test splits, one-vs-one linear SVMs, AUC and accuracy.

mod auc;
mod splits;
mod svm;

use std::collections::HashMap;
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use auc::{auc, mean_auc, multiclass_auc, multiclass_auc_from_scores, AucAveraging, AucReport, MulticlassAuc};
pub use splits::{make_splits, splitmix64, Split, SplitPlan, DEFAULT_SPLIT_COUNT, DEFAULT_TRAIN_RATIO};
pub use svm::{
    accuracy, train_binary, train_linear_svm, BinaryFit, LinearSvmModel, PairModel, SvmParams, ZScore,
    MODEL_FORMAT_VERSION,
};

use crate::error::{Error, Result};

/// Feature vectors of a dataset keyed by sequence id.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct FeatureTable {
    pub ids: Vec<String>,
    pub labels: Vec<usize>,
    pub features: Vec<Vec<f64>>,
    index: HashMap<String, usize>,
}

impl FeatureTable {
    pub fn new(ids: Vec<String>, labels: Vec<usize>, features: Vec<Vec<f64>>) -> Result<Self> {
        if ids.len() != labels.len() || ids.len() != features.len() {
            return Err(Error::invalid("feature table columns differ in length"));
        }
        let mut index = HashMap::with_capacity(ids.len());
        for (i, id) in ids.iter().enumerate() {
            if index.insert(id.clone(), i).is_some() {
                return Err(Error::invalid(format!("duplicate id {id:?} in feature table")));
            }
        }
        Ok(Self {
            ids,
            labels,
            features,
            index,
        })
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn position(&self, id: &str) -> Option<usize> {
        self.index.get(id).copied()
    }

    /// Features and labels of `ids`, in that order.
    pub fn select(&self, ids: &[String]) -> Result<(Vec<Vec<f64>>, Vec<usize>)> {
        let mut x = Vec::with_capacity(ids.len());
        let mut y = Vec::with_capacity(ids.len());
        for id in ids {
            let i = self
                .position(id)
                .ok_or_else(|| Error::protocol(format!("no features for sequence {id:?}")))?;
            x.push(self.features[i].clone());
            y.push(self.labels[i]);
        }
        Ok((x, y))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalOptions {
    pub svm: SvmParams,
    /// Standardize features with statistics of the training side.
    pub zscore: bool,
    pub averaging: AucAveraging,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitOutcome {
    pub split_id: usize,
    pub auc: f64,
    pub accuracy: f64,
    pub warnings: Vec<String>,
}

/// Trains on explicit training data and scores the test data.
pub fn train_and_score(
    train_x: Vec<Vec<f64>>,
    train_y: &[usize],
    test_x: Vec<Vec<f64>>,
    test_y: &[usize],
    options: &EvalOptions,
) -> Result<(f64, f64, Vec<String>)> {
    let (train_x, test_x) = if options.zscore {
        let z = ZScore::fit(&train_x)?;
        (z.apply(&train_x), z.apply(&test_x))
    } else {
        (train_x, test_x)
    };
    let model = train_linear_svm(&train_x, train_y, &options.svm)?;
    let m = multiclass_auc(&model, &test_x, test_y)?;
    let acc = accuracy(&model, &test_x, test_y)?;
    Ok((m.value(options.averaging), acc, m.warnings))
}

pub fn evaluate_split(table: &FeatureTable, split: &Split, options: &EvalOptions) -> Result<SplitOutcome> {
    let (train_x, train_y) = table.select(&split.train)?;
    let (test_x, test_y) = table.select(&split.test)?;
    let (auc, accuracy, warnings) = train_and_score(train_x, &train_y, test_x, &test_y, options)?;
    Ok(SplitOutcome {
        split_id: split.split_id,
        auc,
        accuracy,
        warnings,
    })
}

/// Evaluates every split (in parallel); results are in split order.
pub fn evaluate_plan(table: &FeatureTable, plan: &SplitPlan, options: &EvalOptions) -> Result<Vec<SplitOutcome>> {
    plan.splits
        .par_iter()
        .map(|s| evaluate_split(table, s, options))
        .collect()
}

/// One line of the AUC table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AucRow {
    pub dataset: String,
    pub flow_engine: String,
    pub descriptor: String,
    pub tim_mode: String,
    /// Split index, or `mean` for the aggregate row.
    pub split_id: String,
    pub auc: f64,
}

/// Per-split rows followed by the aggregate `mean` row.
pub fn auc_rows(dataset: &str, engine: &str, descriptor: &str, tim_mode: &str, outcomes: &[SplitOutcome]) -> Vec<AucRow> {
    let row = |split_id: String, auc: f64| AucRow {
        dataset: dataset.into(),
        flow_engine: engine.into(),
        descriptor: descriptor.into(),
        tim_mode: tim_mode.into(),
        split_id,
        auc,
    };
    let mut rows: Vec<AucRow> = outcomes.iter().map(|o| row(o.split_id.to_string(), o.auc)).collect();
    let values: Vec<f64> = outcomes.iter().map(|o| o.auc).collect();
    rows.push(row("mean".into(), mean_auc(&values).mean));
    rows
}

pub fn write_auc_csv(mut out: impl Write, rows: &[AucRow]) -> std::io::Result<()> {
    writeln!(out, "dataset,flow_engine,descriptor,tim_mode,split_id,auc")?;
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{},{:.6}",
            r.dataset, r.flow_engine, r.descriptor, r.tim_mode, r.split_id, r.auc
        )?;
    }
    Ok(())
}
