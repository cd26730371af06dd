use std::collections::{BTreeMap, HashSet};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_SPLIT_COUNT: usize = 10;
pub const DEFAULT_TRAIN_RATIO: f64 = 0.6;

/// SplitMix64 finalizer; maps `master + i` to the seed of split `i`.
pub fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// One train/test configuration; ids keep the order of the input list.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Split {
    pub split_id: usize,
    pub seed: u64,
    pub train: Vec<String>,
    pub test: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitPlan {
    pub c: usize,
    pub ratio: f64,
    pub master_seed: u64,
    pub splits: Vec<Split>,
}

impl SplitPlan {
    pub fn seeds(&self) -> Vec<u64> {
        self.splits.iter().map(|s| s.seed).collect()
    }
}

/// Per-class training counts summing to `round(ratio · N)`, each class
/// keeping at least one sample on both sides, remainders distributed to
/// the largest fractional parts (earlier class on ties).
fn class_quotas(sizes: &[usize], ratio: f64) -> Vec<usize> {
    let total: usize = sizes.iter().sum();
    let target = (ratio * total as f64).round() as usize;
    let ideal: Vec<f64> = sizes.iter().map(|&n| ratio * n as f64).collect();
    let mut quota: Vec<usize> = sizes
        .iter()
        .zip(&ideal)
        .map(|(&n, &q)| (q.floor() as usize).clamp(1, n - 1))
        .collect();
    let mut assigned: usize = quota.iter().sum();
    while assigned != target {
        let grow = assigned < target;
        let pick = (0..sizes.len())
            .filter(|&k| if grow { quota[k] < sizes[k] - 1 } else { quota[k] > 1 })
            .max_by(|&a, &b| {
                let fa = ideal[a] - quota[a] as f64;
                let fb = ideal[b] - quota[b] as f64;
                let (fa, fb) = if grow { (fa, fb) } else { (-fa, -fb) };
                fa.total_cmp(&fb).then(b.cmp(&a))
            });
        let Some(k) = pick else { break };
        if grow {
            quota[k] += 1;
            assigned += 1;
        } else {
            quota[k] -= 1;
            assigned -= 1;
        }
    }
    quota
}

/// `c` stratified train/test partitions of `ids`. Split `i` shuffles each
/// class with ChaCha8 seeded by `splitmix64(master_seed + i)` and sends the
/// first quota members to training.
pub fn make_splits<L: Ord + Clone>(
    ids: &[String],
    labels: &[L],
    c: usize,
    ratio: f64,
    master_seed: u64,
) -> Result<SplitPlan> {
    if ids.len() != labels.len() {
        return Err(Error::invalid("ids and labels differ in length"));
    }
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(Error::invalid(format!("train ratio {ratio} is outside (0, 1)")));
    }
    if c == 0 {
        return Err(Error::invalid("at least one split is required"));
    }
    let mut seen = HashSet::new();
    if let Some(dup) = ids.iter().find(|id| !seen.insert(id.as_str())) {
        return Err(Error::invalid(format!("duplicate sequence id {dup:?}")));
    }
    let mut classes: BTreeMap<L, Vec<usize>> = BTreeMap::new();
    for (i, l) in labels.iter().enumerate() {
        classes.entry(l.clone()).or_default().push(i);
    }
    if classes.len() < 2 {
        return Err(Error::protocol("splits need at least two classes"));
    }
    if classes.values().any(|m| m.len() < 2) {
        return Err(Error::protocol("every class needs at least two members to split"));
    }
    let members: Vec<&Vec<usize>> = classes.values().collect();
    let sizes: Vec<usize> = members.iter().map(|m| m.len()).collect();
    let quotas = class_quotas(&sizes, ratio);

    let splits = (0..c)
        .map(|i| {
            let seed = splitmix64(master_seed.wrapping_add(i as u64));
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut in_train = vec![false; ids.len()];
            for (m, &q) in members.iter().zip(&quotas) {
                let mut order: Vec<usize> = m.to_vec();
                order.shuffle(&mut rng);
                for &k in &order[..q] {
                    in_train[k] = true;
                }
            }
            let pick = |flag: bool| {
                ids.iter()
                    .zip(&in_train)
                    .filter(|(_, &t)| t == flag)
                    .map(|(id, _)| id.clone())
                    .collect()
            };
            Split {
                split_id: i,
                seed,
                train: pick(true),
                test: pick(false),
            }
        })
        .collect();
    Ok(SplitPlan {
        c,
        ratio,
        master_seed,
        splits,
    })
}
