mod common;

use std::io::Write;
use std::path::PathBuf;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use faceflow::augment::{build_augmented_train, enumerate_configs, run_augmentation_experiment};
use faceflow::descriptors::{describe, raw_flow_vector, DescriptorKind, DescriptorOptions};
use faceflow::engines::{EngineConfig, EngineId};
use faceflow::eval::{auc, evaluate_plan, make_splits, EvalOptions};
use faceflow::harness::{flow_bench, run_experiment, with_jobs, BenchRow, ExperimentConfig, ExternalSpec, FlowCache};
use faceflow::preprocess::{intraface_motion_score, RegionPartition, TimMode};
use faceflow::FlowField;

/// Root of a licensed CK+ copy in the ingestible layout.
const CKPLUS_ROOT_VAR: &str = "FACEFLOW_CKPLUS_ROOT";
/// Directory of imported PWC-Net flows; defaults to `<root>/flows`.
const PWCNET_FLOWS_VAR: &str = "FACEFLOW_PWCNET_FLOWS";

enum Verdict {
    Pass(String),
    Fail(String),
    Skip(String),
}

fn verdict(ok: bool, detail: String) -> Verdict {
    if ok {
        Verdict::Pass(detail)
    } else {
        Verdict::Fail(detail)
    }
}

fn row<'a>(rows: &'a [BenchRow], engine: &str, kind: &str) -> &'a BenchRow {
    rows.iter().find(|r| r.engine == engine && r.kind == kind).unwrap()
}

fn bench_rows() -> Vec<BenchRow> {
    let engines: Vec<EngineConfig> = EngineId::native()
        .iter()
        .map(|id| EngineConfig::with_defaults(id, None))
        .collect();
    with_jobs(Some(1), || flow_bench(&engines, 0)).unwrap().unwrap()
}

fn flow_accuracy(rows: &[BenchRow]) -> Verdict {
    let mut ok = true;
    let mut parts = Vec::new();
    for (engine, bound) in [("farneback", 0.5), ("tvl1", 0.5), ("patchmatch", 1.0)] {
        let r = row(rows, engine, "translation");
        ok &= r.instances == 10 && r.interior_mean_epe <= bound;
        parts.push(format!("{engine} {:.3}px (<= {bound})", r.interior_mean_epe));
    }
    let slowest = rows.iter().map(|r| r.max_seconds).fold(0.0, f64::max);
    ok &= slowest < 1.0;
    verdict(ok, format!("translation interior EPE {}; slowest pair {slowest:.3}s", parts.join(", ")))
}

fn discontinuity(rows: &[BenchRow]) -> Verdict {
    let mut ok = true;
    let mut parts = Vec::new();
    for engine in ["tvl1", "patchmatch"] {
        let r = row(rows, engine, "discontinuity");
        let off = r.off_seam_inlier_fraction.unwrap();
        ok &= off >= 0.8;
        parts.push(format!(
            "{engine} off-seam inliers {:.3}, seam-band EPE {:.3}px",
            off,
            r.seam_band_epe.unwrap()
        ));
    }
    verdict(ok, parts.join("; "))
}

fn auc_oracle() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut mismatches = 0;
    for _ in 0..1000 {
        let p = rng.random_range(1..=50usize);
        let n = rng.random_range(1..=2500 / p);
        let coarse = rng.random_bool(0.5);
        let mut draw = |k: usize| -> Vec<f64> {
            (0..k)
                .map(|_| {
                    if coarse {
                        rng.random_range(0..8) as f64
                    } else {
                        rng.random_range(-1.0..1.0)
                    }
                })
                .collect()
        };
        let (pos, neg) = (draw(p), draw(n));
        let mut twice = 0u64;
        for &a in &pos {
            for &b in &neg {
                twice += u64::from(b < a) * 2 + u64::from(b == a);
            }
        }
        if auc(&pos, &neg).unwrap() != twice as f64 / (2 * p * n) as f64 {
            mismatches += 1;
        }
    }
    let worked = auc(&[0.8, 0.6], &[0.7, 0.1]).unwrap();
    verdict(
        mismatches == 0 && worked == 0.75,
        format!("{mismatches} mismatches in 1000 trials; worked case {worked}"),
    )
}

fn motion_score() -> Verdict {
    let (w, h) = (10, 10);
    let region = |x: usize| match x {
        0..=2 => 0,
        3..=5 => 1,
        _ => 2,
    };
    let part = RegionPartition {
        width: w,
        height: h,
        eyes: (0..w * h).map(|i| region(i % w) == 0).collect(),
        mouth: (0..w * h).map(|i| region(i % w) == 1).collect(),
        rigid: (0..w * h).map(|i| region(i % w) >= 2 && i % w < 9).collect(),
    };
    let field = |e: f32, m: f32, r: f32| {
        FlowField::from_fn(w, h, |x, _| match region(x) {
            0 => [e, 0.0],
            1 => [0.0, m],
            _ => [r, 0.0],
        })
    };
    let handcrafted = intraface_motion_score(&field(2.0, 1.0, 1.0), &part).unwrap().0;
    let zero = intraface_motion_score(&field(0.0, 0.0, 0.0), &part).unwrap().0;
    let dynamic_zero = intraface_motion_score(&field(0.0, 0.0, 1.5), &part).unwrap().0;
    verdict(
        handcrafted == 3.0 && zero == 0.0 && dynamic_zero == 0.0,
        format!("f = {handcrafted} for (2, 1, 1); zero case {zero}; dynamic-zero case {dynamic_zero}"),
    )
}

/// A random field and its copy with every vector turned by 30 degrees.
fn random_polar_flow(rng: &mut ChaCha8Rng) -> (FlowField, FlowField) {
    let polar: Vec<(f64, f64)> = (0..2500)
        .map(|_| (rng.random_range(0.0..2.5), rng.random_range(0.0..360.0)))
        .collect();
    let build = |offset: f64| {
        let v = polar
            .iter()
            .map(|&(m, a)| {
                let (s, c) = (a + offset).to_radians().sin_cos();
                [(m * c) as f32, (m * s) as f32]
            })
            .collect();
        FlowField::new(50, 50, v).unwrap()
    };
    (build(0.0), build(30.0))
}

fn descriptor_contracts() -> Verdict {
    let opts = DescriptorOptions::default();
    let kinds = [DescriptorKind::Hof, DescriptorKind::Hoof, DescriptorKind::Lmp];
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let (mut bad_len, mut bad_shift, mut bad_sum) = (0, 0, 0);
    for _ in 0..100 {
        let (a, b) = random_polar_flow(&mut rng);
        bad_len += usize::from(raw_flow_vector(&a).unwrap().values.len() != 7500);
        for kind in kinds {
            let da = describe(&a, kind, opts).unwrap();
            let db = describe(&b, kind, opts).unwrap();
            bad_len += usize::from(da.values.len() != 300);
            let shifted = (0..25).all(|c| {
                (0..12).all(|k| {
                    let (x, y) = (da.cell(c)[k], db.cell(c)[(k + 1) % 12]);
                    (x == 0.0) == (y == 0.0) && (x - y).abs() <= 1e-5 * x.abs().max(1.0)
                })
            });
            bad_shift += usize::from(!shifted);
            if kind == DescriptorKind::Hoof {
                for c in 0..25 {
                    let s: f64 = da.cell(c).iter().sum();
                    bad_sum += usize::from(s != 0.0 && (s - 1.0).abs() > 1e-9);
                }
            }
        }
    }
    for flow in [FlowField::zeros(50, 50), FlowField::uniform(50, 50, 0.05, 0.0)] {
        bad_len += usize::from(raw_flow_vector(&flow).unwrap().values.len() != 7500);
        for kind in kinds {
            bad_len += usize::from(describe(&flow, kind, opts).unwrap().values.len() != 300);
        }
    }
    verdict(
        bad_len + bad_shift + bad_sum == 0,
        format!(
            "100 random flows: {bad_len} wrong lengths, {bad_shift} rotated descriptors not shifted by one bin, \
             {bad_sum} HOOF cells off unit sum"
        ),
    )
}

fn end_to_end() -> Verdict {
    let start = Instant::now();
    let data = tempfile::tempdir().unwrap();
    common::write_synthetic(data.path(), 8, 12, 42);
    let out = tempfile::tempdir().unwrap();
    let mut config = ExperimentConfig::new(data.path());
    config.output_dir = out.path().to_path_buf();
    config.tim_mode = TimMode::Tim10;
    config.split.master_seed = 42;
    let report = run_experiment(&config, &FlowCache::disabled()).unwrap();
    let seconds = start.elapsed().as_secs_f64();
    let cell = &report.cells[0];
    let splits = cell.outcome.as_ref().map(Vec::len).unwrap_or(0);
    let mean = cell.mean_auc().unwrap_or(f64::NAN);
    verdict(
        report.plan.splits.len() == 10 && splits == 10 && mean >= 0.90 && seconds < 300.0,
        format!("farneback + hof + tim10 on 48 sequences: macro AUC {mean:.4} over {splits} splits in {seconds:.1}s"),
    )
}

fn augmentation() -> Verdict {
    let records = common::expression_records(8, 12, 42);
    let mut store = common::benign_store(&records);
    let base = EngineId::Farneback;
    let second = EngineId::External("noisy_b".into());
    let table = store.get(&base).unwrap().clone();
    store.insert(&second, common::noisy_copy(&table, 0.05, 123));
    let pool = vec![EngineId::External(common::NOISY.into()), second];
    let plan = make_splits(&table.ids, &table.labels, 10, 0.6, 42).unwrap();
    let opts = EvalOptions::default();

    let configs = enumerate_configs(&base, &pool).unwrap();
    let mut leaks = 0;
    for config in &configs {
        for split in &plan.splits {
            match build_augmented_train(split, config, &store) {
                Ok(train) => {
                    leaks += train
                        .ids
                        .iter()
                        .filter(|id| split.test.iter().any(|t| t == id.split('#').next().unwrap()))
                        .count()
                }
                Err(_) => leaks += 1,
            }
        }
    }
    let report = run_augmentation_experiment(&store, &base, &pool, &plan, &opts).unwrap();
    let plain = evaluate_plan(&table, &plan, &opts).unwrap();
    let bit_match = report
        .baseline()
        .splits
        .iter()
        .zip(&plain)
        .all(|(a, p)| a.accuracy.map(f64::to_bits) == Some(p.accuracy.to_bits()));
    let baseline = report.baseline().mean_accuracy.unwrap();
    let worst = report
        .results
        .iter()
        .map(|r| r.mean_accuracy.unwrap_or(f64::NAN))
        .fold(f64::INFINITY, f64::min);
    verdict(
        configs.len() == 1 << pool.len() && report.results.len() == configs.len() && leaks == 0 && bit_match && worst >= baseline - 0.01,
        format!(
            "{} configurations, {leaks} leaked samples, baseline bit-match {bit_match}, \
             baseline accuracy {baseline:.4}, worst augmented {worst:.4}",
            configs.len()
        ),
    )
}

fn determinism() -> Verdict {
    let data = tempfile::tempdir().unwrap();
    common::write_synthetic(data.path(), 3, 10, 9);
    let out = tempfile::tempdir().unwrap();
    let run = |name: &str, jobs: usize| {
        let mut config = ExperimentConfig::new(data.path());
        config.output_dir = out.path().join(name);
        config.engines = vec![EngineId::Farneback, EngineId::TvL1];
        config.descriptors = vec![DescriptorKind::Hof, DescriptorKind::Lmp];
        config.tim_mode = TimMode::Tim10;
        config.augmentation = Some(faceflow::harness::AugmentationSpec {
            base: EngineId::Farneback,
            pool: vec![EngineId::TvL1],
            descriptor: None,
        });
        with_jobs(Some(jobs), || run_experiment(&config, &FlowCache::disabled()))
            .unwrap()
            .unwrap();
        common::tree(&config.output_dir)
    };
    let first = run("first", 1);
    let second = run("second", 1);
    let parallel = run("parallel", 8);
    verdict(
        !first.is_empty() && first == second && first == parallel,
        format!(
            "{} files; repeat identical {}; jobs 1 vs 8 identical {}",
            first.len(),
            first == second,
            first == parallel
        ),
    )
}

fn ckplus() -> Verdict {
    let Some(root) = std::env::var_os(CKPLUS_ROOT_VAR).map(PathBuf::from).filter(|p| p.is_dir()) else {
        return Verdict::Skip(format!("licensed CK+ data not found (set {CKPLUS_ROOT_VAR})"));
    };
    let pwc = std::env::var_os(PWCNET_FLOWS_VAR)
        .map(PathBuf::from)
        .unwrap_or_else(|| root.join("flows"));
    let out = tempfile::tempdir().unwrap();
    let mut config = ExperimentConfig::new(&root);
    config.output_dir = out.path().to_path_buf();
    config.engines = vec![EngineId::Farneback, EngineId::TvL1, EngineId::External("pwcnet".into())];
    config.descriptors = vec![DescriptorKind::Raw];
    config.tim_mode = TimMode::Tim2;
    config.external.insert("pwcnet".into(), ExternalSpec { flow_root: pwc });
    let report = match run_experiment(&config, &FlowCache::disabled()) {
        Ok(r) => r,
        Err(e) => return Verdict::Fail(format!("run failed: {e}")),
    };
    let mean = |i: usize| report.cells[i].mean_auc();
    match (mean(0), mean(1), mean(2)) {
        (Some(f), Some(t), Some(p)) => verdict(
            f > p && t > p,
            format!("mean AUC farneback {f:.4}, tvl1 {t:.4}, pwcnet {p:.4}"),
        ),
        _ => Verdict::Fail("a pipeline cell failed".into()),
    }
}

#[test]
fn acceptance_criteria() {
    let rows = bench_rows();
    let results = [
        ("synthetic flow accuracy", flow_accuracy(&rows)),
        ("discontinuity preservation", discontinuity(&rows)),
        ("AUC pair-count oracle", auc_oracle()),
        ("motion score exactness", motion_score()),
        ("descriptor contracts", descriptor_contracts()),
        ("end-to-end synthetic benchmark", end_to_end()),
        ("augmentation protocol", augmentation()),
        ("determinism", determinism()),
        ("CK+ engine ordering", ckplus()),
    ];
    let mut failed = Vec::new();
    let mut out = std::io::stdout().lock();
    for (i, (name, v)) in results.iter().enumerate() {
        let n = i + 1;
        let (status, detail) = match v {
            Verdict::Pass(d) => ("PASS", d),
            Verdict::Fail(d) => {
                failed.push(n);
                ("FAIL", d)
            }
            Verdict::Skip(d) => ("SKIP", d),
        };
        writeln!(out, "criterion {n} {status} {name}: {detail}").unwrap();
    }
    drop(out);
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
