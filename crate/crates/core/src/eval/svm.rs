use std::collections::BTreeSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MODEL_FORMAT_VERSION: u32 = 1;

/// Solver settings for the L2-regularized hinge-loss (C-SVC) problem.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SvmParams {
    pub c: f64,
    /// Stop once the largest projected gradient of a pass is below this.
    pub tolerance: f64,
    /// ... and the primal-dual gap is below this.
    pub max_duality_gap: f64,
    pub max_passes: usize,
}

impl Default for SvmParams {
    fn default() -> Self {
        Self {
            c: 1.0,
            tolerance: 1e-8,
            max_duality_gap: 1e-3,
            max_passes: 20_000,
        }
    }
}

impl SvmParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.c > 0.0 && self.c.is_finite()) {
            return Err(Error::invalid("C must be positive and finite"));
        }
        if !(self.tolerance > 0.0) || !(self.max_duality_gap > 0.0) || self.max_passes == 0 {
            return Err(Error::invalid("solver tolerances and pass budget must be positive"));
        }
        Ok(())
    }
}

/// Outcome of one binary problem.
#[derive(Debug, Clone, PartialEq)]
pub struct BinaryFit {
    pub weights: Vec<f64>,
    pub bias: f64,
    /// Dual objective `½αᵀQα − Σα` after every pass; non-increasing.
    pub dual_objective: Vec<f64>,
    pub primal_objective: f64,
    pub duality_gap: f64,
    pub passes: usize,
    pub converged: bool,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Dual coordinate descent on labels `ys ∈ {−1, +1}`. The bias is learned
/// as the weight of a constant feature 1. Coordinates are visited in input
/// order, so the result is a pure function of the inputs.
pub fn train_binary(xs: &[&[f64]], ys: &[f64], params: &SvmParams) -> Result<BinaryFit> {
    params.validate()?;
    let n = xs.len();
    if n == 0 || ys.len() != n {
        return Err(Error::invalid("binary training needs matching non-empty inputs"));
    }
    if !ys.iter().any(|&y| y > 0.0) || !ys.iter().any(|&y| y < 0.0) {
        return Err(Error::protocol("binary training needs both classes"));
    }
    let d = xs[0].len();
    if xs.iter().any(|x| x.len() != d) {
        return Err(Error::invalid("feature vectors differ in length"));
    }
    if xs.iter().any(|x| x.iter().any(|v| !v.is_finite())) {
        return Err(Error::invalid("feature vectors must be finite"));
    }
    let c = params.c;
    let qii: Vec<f64> = xs.iter().map(|x| dot(x, x) + 1.0).collect();
    let mut alpha = vec![0.0f64; n];
    let mut w = vec![0.0f64; d];
    let mut b = 0.0f64;
    let mut trace = Vec::new();
    let mut passes = 0;
    let mut converged = false;
    let (mut primal, mut gap) = (f64::INFINITY, f64::INFINITY);

    while passes < params.max_passes {
        passes += 1;
        let mut max_pg = 0.0f64;
        for i in 0..n {
            let g = ys[i] * (dot(&w, xs[i]) + b) - 1.0;
            let pg = if alpha[i] <= 0.0 {
                g.min(0.0)
            } else if alpha[i] >= c {
                g.max(0.0)
            } else {
                g
            };
            max_pg = max_pg.max(pg.abs());
            if pg != 0.0 {
                let old = alpha[i];
                alpha[i] = (old - g / qii[i]).clamp(0.0, c);
                let step = (alpha[i] - old) * ys[i];
                if step != 0.0 {
                    w.iter_mut().zip(xs[i]).for_each(|(wj, xj)| *wj += step * xj);
                    b += step;
                }
            }
        }
        let norm2 = dot(&w, &w) + b * b;
        let sum_alpha: f64 = alpha.iter().sum();
        let dual = 0.5 * norm2 - sum_alpha;
        let hinge: f64 = (0..n)
            .map(|i| (1.0 - ys[i] * (dot(&w, xs[i]) + b)).max(0.0))
            .sum();
        primal = 0.5 * norm2 + c * hinge;
        gap = primal + dual;
        trace.push(dual);
        if max_pg < params.tolerance && gap < params.max_duality_gap {
            converged = true;
            break;
        }
    }
    if !converged {
        log::warn!("linear SVM stopped after {passes} passes with duality gap {gap:.3e}");
    }
    Ok(BinaryFit {
        weights: w,
        bias: b,
        dual_objective: trace,
        primal_objective: primal,
        duality_gap: gap,
        passes,
        converged,
    })
}

/// Binary model separating `positive` (score > 0) from `negative`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairModel {
    pub positive: usize,
    pub negative: usize,
    pub weights: Vec<f64>,
    pub bias: f64,
}

impl PairModel {
    pub fn decision(&self, x: &[f64]) -> f64 {
        dot(&self.weights, x) + self.bias
    }
}

/// One-vs-one linear C-SVC over integer class labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearSvmModel {
    pub format_version: u32,
    pub c: f64,
    pub dim: usize,
    /// Ascending class labels.
    pub classes: Vec<usize>,
    /// One model per class pair `(i, j)`, `i < j`, in lexicographic order.
    pub pairs: Vec<PairModel>,
}

pub fn train_linear_svm(features: &[Vec<f64>], labels: &[usize], params: &SvmParams) -> Result<LinearSvmModel> {
    if features.len() != labels.len() || features.is_empty() {
        return Err(Error::invalid("features and labels must be non-empty and aligned"));
    }
    let dim = features[0].len();
    if features.iter().any(|f| f.len() != dim) {
        return Err(Error::invalid("feature vectors differ in length"));
    }
    let classes: Vec<usize> = labels.iter().copied().collect::<BTreeSet<_>>().into_iter().collect();
    if classes.len() < 2 {
        return Err(Error::protocol("training data covers a single class"));
    }
    let mut pairs = Vec::new();
    for (a, &pos) in classes.iter().enumerate() {
        for &neg in &classes[a + 1..] {
            let (xs, ys): (Vec<&[f64]>, Vec<f64>) = features
                .iter()
                .zip(labels)
                .filter(|(_, &l)| l == pos || l == neg)
                .map(|(f, &l)| (f.as_slice(), if l == pos { 1.0 } else { -1.0 }))
                .unzip();
            let fit = train_binary(&xs, &ys, params)?;
            pairs.push(PairModel {
                positive: pos,
                negative: neg,
                weights: fit.weights,
                bias: fit.bias,
            });
        }
    }
    Ok(LinearSvmModel {
        format_version: MODEL_FORMAT_VERSION,
        c: params.c,
        dim,
        classes,
        pairs,
    })
}

impl LinearSvmModel {
    fn check(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim {
            return Err(Error::invalid(format!(
                "feature length {} does not match model dimension {}",
                x.len(),
                self.dim
            )));
        }
        Ok(())
    }

    fn class_slot(&self, class: usize) -> usize {
        self.classes.binary_search(&class).expect("pair classes come from the class list")
    }

    /// Votes and summed signed margins per class (in `classes` order). A
    /// zero margin casts no vote.
    pub fn votes_and_scores(&self, x: &[f64]) -> Result<(Vec<usize>, Vec<f64>)> {
        self.check(x)?;
        let k = self.classes.len();
        let (mut votes, mut scores) = (vec![0usize; k], vec![0.0f64; k]);
        for p in &self.pairs {
            let d = p.decision(x);
            let (i, j) = (self.class_slot(p.positive), self.class_slot(p.negative));
            scores[i] += d;
            scores[j] -= d;
            if d > 0.0 {
                votes[i] += 1;
            } else if d < 0.0 {
                votes[j] += 1;
            }
        }
        Ok((votes, scores))
    }

    /// Per-class scores used for ranking: summed signed pairwise margins.
    pub fn decision_scores(&self, x: &[f64]) -> Result<Vec<f64>> {
        Ok(self.votes_and_scores(x)?.1)
    }

    /// Majority vote; ties go to the larger summed margin, then to the
    /// smaller class label.
    pub fn predict(&self, x: &[f64]) -> Result<usize> {
        let (votes, scores) = self.votes_and_scores(x)?;
        let mut best = 0;
        for k in 1..self.classes.len() {
            if votes[k] > votes[best] || (votes[k] == votes[best] && scores[k] > scores[best]) {
                best = k;
            }
        }
        Ok(self.classes[best])
    }

    pub fn predict_all(&self, features: &[Vec<f64>]) -> Result<Vec<usize>> {
        features.iter().map(|f| self.predict(f)).collect()
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let m: Self = serde_json::from_str(text).map_err(|e| Error::Config(format!("model: {e}")))?;
        if m.format_version != MODEL_FORMAT_VERSION {
            return Err(Error::Config(format!(
                "model format version {} is not supported (expected {MODEL_FORMAT_VERSION})",
                m.format_version
            )));
        }
        if m.pairs.iter().any(|p| p.weights.len() != m.dim) {
            return Err(Error::Config("model weights do not match its dimension".into()));
        }
        Ok(m)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
        std::fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}

/// Fraction of predictions equal to the labels.
pub fn accuracy(model: &LinearSvmModel, features: &[Vec<f64>], labels: &[usize]) -> Result<f64> {
    if features.is_empty() || features.len() != labels.len() {
        return Err(Error::protocol("accuracy needs a non-empty, aligned test set"));
    }
    let correct = model
        .predict_all(features)?
        .iter()
        .zip(labels)
        .filter(|(p, l)| p == l)
        .count();
    Ok(correct as f64 / labels.len() as f64)
}

/// Per-dimension z-scoring fitted on training data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZScore {
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
}

impl ZScore {
    pub fn fit(features: &[Vec<f64>]) -> Result<Self> {
        let n = features.len();
        if n == 0 {
            return Err(Error::invalid("cannot fit z-scoring on no data"));
        }
        let d = features[0].len();
        let mut mean = vec![0.0; d];
        for f in features {
            mean.iter_mut().zip(f).for_each(|(m, v)| *m += v / n as f64);
        }
        let mut var = vec![0.0; d];
        for f in features {
            var.iter_mut().zip(f.iter().zip(&mean)).for_each(|(s, (v, m))| *s += (v - m).powi(2) / n as f64);
        }
        let scale = var.into_iter().map(|v| if v > 0.0 { v.sqrt() } else { 1.0 }).collect();
        Ok(Self { mean, scale })
    }

    pub fn apply(&self, features: &[Vec<f64>]) -> Vec<Vec<f64>> {
        features
            .iter()
            .map(|f| {
                f.iter()
                    .zip(self.mean.iter().zip(&self.scale))
                    .map(|(v, (m, s))| (v - m) / s)
                    .collect()
            })
            .collect()
    }
}
