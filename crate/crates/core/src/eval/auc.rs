use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::svm::LinearSvmModel;

/// Twice the Mann-Whitney statistic: strict wins count 2, ties 1. Exact in
/// integers.
fn doubled_u(positive: &[f64], negative: &[f64]) -> u64 {
    let mut all: Vec<(f64, bool)> = positive
        .iter()
        .map(|&s| (s, true))
        .chain(negative.iter().map(|&s| (s, false)))
        .collect();
    all.sort_by(|a, b| a.0.total_cmp(&b.0));
    let (mut below, mut twice_u) = (0u64, 0u64);
    let mut i = 0;
    while i < all.len() {
        let mut j = i;
        let (mut p, mut n) = (0u64, 0u64);
        while j < all.len() && all[j].0 == all[i].0 {
            if all[j].1 {
                p += 1;
            } else {
                n += 1;
            }
            j += 1;
        }
        twice_u += p * (2 * below + n);
        below += n;
        i = j;
    }
    twice_u
}

/// Probability that a positive outranks a negative; ties count one half.
pub fn auc(positive: &[f64], negative: &[f64]) -> Result<f64> {
    if positive.is_empty() || negative.is_empty() {
        return Err(Error::protocol("AUC needs at least one positive and one negative score"));
    }
    if positive.iter().chain(negative).any(|s| s.is_nan()) {
        return Err(Error::invalid("AUC scores must not be NaN"));
    }
    let pairs = 2 * positive.len() as u64 * negative.len() as u64;
    Ok(doubled_u(positive, negative) as f64 / pairs as f64)
}

/// Mean and sample standard deviation of per-split AUC values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AucReport {
    pub values: Vec<f64>,
    pub mean: f64,
    pub std: f64,
}

pub fn mean_auc(values: &[f64]) -> AucReport {
    let n = values.len();
    let mean = match values.first() {
        None => f64::NAN,
        Some(&v0) => v0 + values.iter().map(|v| v - v0).sum::<f64>() / n as f64,
    };
    let std = if n < 2 {
        0.0
    } else {
        (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
    };
    AucReport {
        values: values.to_vec(),
        mean,
        std,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AucAveraging {
    /// Mean of the per-class one-vs-rest AUCs.
    #[default]
    Macro,
    /// One AUC over all pooled (sample, class) one-vs-rest scores.
    Micro,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MulticlassAuc {
    /// `(class, AUC)` for every model class present in the test labels.
    pub per_class: Vec<(usize, f64)>,
    pub macro_auc: f64,
    pub micro_auc: f64,
    /// Classes skipped because the test set does not contain them.
    pub warnings: Vec<String>,
}

impl MulticlassAuc {
    pub fn value(&self, averaging: AucAveraging) -> f64 {
        match averaging {
            AucAveraging::Macro => self.macro_auc,
            AucAveraging::Micro => self.micro_auc,
        }
    }
}

/// One-vs-rest AUC per class from the model's per-class scores.
pub fn multiclass_auc(model: &LinearSvmModel, features: &[Vec<f64>], labels: &[usize]) -> Result<MulticlassAuc> {
    if features.len() != labels.len() {
        return Err(Error::invalid("features and labels differ in length"));
    }
    let scores: Vec<Vec<f64>> = features.iter().map(|f| model.decision_scores(f)).collect::<Result<_>>()?;
    multiclass_auc_from_scores(&model.classes, &scores, labels)
}

/// Same as [`multiclass_auc`] for precomputed scores, `scores[i][k]`
/// belonging to `classes[k]`.
pub fn multiclass_auc_from_scores(classes: &[usize], scores: &[Vec<f64>], labels: &[usize]) -> Result<MulticlassAuc> {
    let present: BTreeSet<usize> = labels.iter().copied().collect();
    if let Some(l) = present.iter().find(|l| !classes.contains(l)) {
        return Err(Error::invalid(format!("test label {l} is unknown to the model")));
    }
    if present.len() < 2 {
        return Err(Error::protocol("multiclass AUC needs at least two classes in the test set"));
    }
    let mut per_class = Vec::new();
    let mut warnings = Vec::new();
    let (mut pooled_pos, mut pooled_neg) = (Vec::new(), Vec::new());
    for (k, &class) in classes.iter().enumerate() {
        if !present.contains(&class) {
            warnings.push(format!("class {class} is absent from the test set and was skipped"));
            continue;
        }
        let (mut pos, mut neg) = (Vec::new(), Vec::new());
        for (s, &l) in scores.iter().zip(labels) {
            if l == class {
                pos.push(s[k]);
            } else {
                neg.push(s[k]);
            }
        }
        per_class.push((class, auc(&pos, &neg)?));
        pooled_pos.extend(pos);
        pooled_neg.extend(neg);
    }
    let macro_auc = per_class.iter().map(|c| c.1).sum::<f64>() / per_class.len() as f64;
    let micro_auc = auc(&pooled_pos, &pooled_neg)?;
    Ok(MulticlassAuc {
        per_class,
        macro_auc,
        micro_auc,
        warnings,
    })
}
