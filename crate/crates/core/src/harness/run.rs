use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;
use sha2::{Digest, Sha256};

use super::cache::FlowCache;
use super::config::ExperimentConfig;
use super::flows::{compute_flows, SequenceFlows};
use super::ingest::{ingest_dataset, IngestIssue, IngestReport};
use crate::augment::{
    augmentation_markdown, run_augmentation_experiment, write_augmentation_csv, AugmentationReport, FeatureStore,
};
use crate::descriptors::{describe, temporal_aggregate, write_feature_csv, DescriptorKind, DescriptorOptions, FeatureRow};
use crate::engines::EngineId;
use crate::error::{Error, Result};
use crate::eval::{auc_rows, evaluate_plan, make_splits, mean_auc, write_auc_csv, AucRow, FeatureTable, SplitOutcome, SplitPlan};
use crate::preprocess::SequenceRecord;

pub const MANIFEST_VERSION: u32 = 1;

/// Outcome of one engine × descriptor cell.
#[derive(Debug, Clone, PartialEq)]
pub struct CellResult {
    pub engine: EngineId,
    pub descriptor: DescriptorKind,
    pub outcome: std::result::Result<Vec<SplitOutcome>, String>,
}

impl CellResult {
    pub fn mean_auc(&self) -> Option<f64> {
        self.outcome
            .as_ref()
            .ok()
            .map(|o| mean_auc(&o.iter().map(|s| s.auc).collect::<Vec<_>>()).mean)
    }
}

#[derive(Debug, Clone)]
pub struct RunReport {
    pub output_dir: PathBuf,
    pub plan: SplitPlan,
    pub cells: Vec<CellResult>,
    pub augmentation: Option<std::result::Result<AugmentationReport, String>>,
    pub skipped: Vec<IngestIssue>,
    pub errors: Vec<IngestIssue>,
    /// Files written, relative to the output directory.
    pub files: Vec<String>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

fn collect_files(root: &Path, dir: &Path, out: &mut Vec<(String, PathBuf)>) -> Result<()> {
    let mut entries: Vec<_> = std::fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .collect::<std::io::Result<_>>()
        .map_err(|e| Error::io(dir, e))?;
    entries.sort_by_key(|e| e.file_name());
    for e in entries {
        let path = e.path();
        if path.is_dir() {
            collect_files(root, &path, out)?;
        } else {
            let rel = path.strip_prefix(root).unwrap_or(&path);
            let rel = rel.components().map(|c| c.as_os_str().to_string_lossy()).collect::<Vec<_>>().join("/");
            out.push((rel, path));
        }
    }
    Ok(())
}

/// Digest over every file below `root`, in sorted relative-path order.
pub fn dataset_digest(root: &Path) -> Result<String> {
    let mut files = Vec::new();
    collect_files(root, root, &mut files)?;
    let mut h = Sha256::new();
    for (rel, path) in files {
        let bytes = std::fs::read(&path).map_err(|e| Error::io(&path, e))?;
        h.update(rel.as_bytes());
        h.update([0]);
        h.update((bytes.len() as u64).to_le_bytes());
        h.update(&bytes);
    }
    Ok(h.finalize().iter().map(|b| format!("{b:02x}")).collect())
}

/// Descriptor of every sequence, summed over its flows.
pub fn extract_features(
    records: &[SequenceRecord],
    flows: &[SequenceFlows],
    kind: DescriptorKind,
    options: DescriptorOptions,
) -> Result<(FeatureTable, Vec<FeatureRow>)> {
    let vectors = flows
        .par_iter()
        .map(|s| {
            let per_pair = s
                .flows
                .iter()
                .map(|f| describe(f, kind, options))
                .collect::<Result<Vec<_>>>()?;
            temporal_aggregate(&per_pair)
        })
        .collect::<Result<Vec<_>>>()?;
    let rows: Vec<FeatureRow> = records
        .iter()
        .zip(vectors)
        .map(|(r, v)| FeatureRow {
            sequence_id: r.id.clone(),
            label: r.label,
            features: v,
        })
        .collect();
    let table = FeatureTable::new(
        rows.iter().map(|r| r.sequence_id.clone()).collect(),
        rows.iter().map(|r| r.label.index()).collect(),
        rows.iter().map(|r| r.features.values.clone()).collect(),
    )?;
    Ok((table, rows))
}

fn write_file(dir: &Path, rel: &str, bytes: &[u8], files: &mut Vec<String>) -> Result<()> {
    let path = dir.join(rel);
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    std::fs::write(&path, bytes).map_err(|e| Error::io(&path, e))?;
    files.push(rel.to_string());
    Ok(())
}

fn summary_markdown(config: &ExperimentConfig, cells: &[CellResult], report: &RunReport) -> String {
    let mut s = format!(
        "# {} ({}, {} splits, train ratio {})\n\n",
        config.dataset_name(),
        config.tim_mode,
        config.split.c,
        config.split.ratio
    );
    s.push_str("Mean AUC ± sample std over splits. The rank of each cell among all cells is in brackets; the best cell is bold.\n\n");
    let mut ranked: Vec<(usize, f64)> = cells
        .iter()
        .enumerate()
        .filter_map(|(i, c)| c.mean_auc().map(|m| (i, m)))
        .collect();
    ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    let rank_of: BTreeMap<usize, usize> = ranked.iter().enumerate().map(|(r, &(i, _))| (i, r + 1)).collect();
    s.push_str("| engine |");
    for d in &config.descriptors {
        s.push_str(&format!(" {d} |"));
    }
    s.push_str("\n|---|");
    s.push_str(&"---|".repeat(config.descriptors.len()));
    s.push('\n');
    for e in &config.engines {
        s.push_str(&format!("| {e} |"));
        for d in &config.descriptors {
            let (i, cell) = cells
                .iter()
                .enumerate()
                .find(|(_, c)| &c.engine == e && c.descriptor == *d)
                .expect("every cell is evaluated");
            let text = match &cell.outcome {
                Ok(o) => {
                    let r = mean_auc(&o.iter().map(|s| s.auc).collect::<Vec<_>>());
                    let body = format!("{:.3} ± {:.3} [{}]", r.mean, r.std, rank_of[&i]);
                    if rank_of[&i] == 1 {
                        format!("**{body}**")
                    } else {
                        body
                    }
                }
                Err(_) => "failed".to_string(),
            };
            s.push_str(&format!(" {text} |"));
        }
        s.push('\n');
    }
    let failures: Vec<&CellResult> = cells.iter().filter(|c| c.outcome.is_err()).collect();
    if !failures.is_empty() || !report.errors.is_empty() || !report.skipped.is_empty() {
        s.push_str("\n## Problems\n\n");
        for c in failures {
            s.push_str(&format!("- {} / {}: {}\n", c.engine, c.descriptor, c.outcome.as_ref().unwrap_err()));
        }
        for i in &report.skipped {
            s.push_str(&format!("- skipped {}: {}\n", i.sequence_id, i.reason));
        }
        for i in &report.errors {
            s.push_str(&format!("- error in {}: {}\n", i.sequence_id, i.reason));
        }
    }
    s
}

#[derive(Serialize)]
struct EngineEntry {
    name: String,
    params_hash: String,
    params: serde_json::Value,
}

#[derive(Serialize)]
struct CellEntry {
    engine: String,
    descriptor: String,
    status: String,
    mean_auc: Option<f64>,
}

#[derive(Serialize)]
struct Manifest<'a> {
    manifest_version: u32,
    crate_version: &'a str,
    config: serde_json::Value,
    engines: Vec<EngineEntry>,
    split_master_seed: u64,
    split_seeds: Vec<u64>,
    dataset_sha256: String,
    sequences: usize,
    skipped: &'a [IngestIssue],
    errors: &'a [IngestIssue],
    cells: Vec<CellEntry>,
    augmentation_status: Option<String>,
    files: BTreeMap<String, String>,
}

/// Records of the dataset that the temporal mode can use; the rest are
/// moved to the skipped list.
fn usable_records(config: &ExperimentConfig, ingest: IngestReport) -> (Vec<SequenceRecord>, IngestReport) {
    let need = config.tim_mode.frame_count();
    let mut report = IngestReport {
        records: Vec::new(),
        skipped: ingest.skipped,
        errors: ingest.errors,
    };
    let mut keep = Vec::new();
    for r in ingest.records {
        if r.frames.len() >= need {
            keep.push(r);
        } else {
            log::warn!("skipping sequence {}: {} frames, {} needs {need}", r.id, r.frames.len(), config.tim_mode);
            report.skipped.push(IngestIssue {
                sequence_id: r.id,
                reason: format!("too short for {}", config.tim_mode),
            });
        }
    }
    report.skipped.sort_by(|a, b| a.sequence_id.cmp(&b.sequence_id));
    (keep, report)
}

/// Runs every engine × descriptor cell and the optional augmentation
/// experiment, then writes the report bundle to the output directory.
pub fn run_experiment(config: &ExperimentConfig, cache: &FlowCache) -> Result<RunReport> {
    config.validate()?;
    let ingest = ingest_dataset(&config.dataset_root)?;
    let (records, ingest) = usable_records(config, ingest);
    let ids: Vec<String> = records.iter().map(|r| r.id.clone()).collect();
    let labels: Vec<usize> = records.iter().map(|r| r.label.index()).collect();
    let plan = make_splits(&ids, &labels, config.split.c, config.split.ratio, config.split.master_seed)?;

    let mut kinds = config.descriptors.clone();
    if let Some(k) = config.augmentation_descriptor() {
        if !kinds.contains(&k) {
            kinds.push(k);
        }
    }
    let mut tables: BTreeMap<(EngineId, DescriptorKind), std::result::Result<(FeatureTable, Vec<FeatureRow>), String>> =
        BTreeMap::new();
    for engine in config.all_engines() {
        log::info!("computing {} flows for {} sequences", engine, records.len());
        let flows = compute_flows(
            &records,
            &config.engine_config(&engine),
            cache,
            config.tim_mode,
            config.key_frame_rule,
            config.tim10_flows,
        );
        for &kind in &kinds {
            let entry = match &flows {
                Ok(f) => extract_features(&records, f, kind, config.descriptor_options).map_err(|e| e.to_string()),
                Err(e) => Err(e.to_string()),
            };
            if let Err(e) = &entry {
                log::error!("{engine} / {kind}: {e}");
            }
            tables.insert((engine.clone(), kind), entry);
        }
    }

    let mut cells = Vec::new();
    for engine in &config.engines {
        for &kind in &config.descriptors {
            let outcome = match &tables[&(engine.clone(), kind)] {
                Ok((table, _)) => evaluate_plan(table, &plan, &config.eval).map_err(|e| e.to_string()),
                Err(e) => Err(e.clone()),
            };
            match &outcome {
                Ok(o) => o.iter().flat_map(|s| &s.warnings).for_each(|w| log::warn!("{engine} / {kind}: {w}")),
                Err(e) => log::error!("{engine} / {kind}: {e}"),
            }
            cells.push(CellResult {
                engine: engine.clone(),
                descriptor: kind,
                outcome,
            });
        }
    }

    let augmentation = config.augmentation.as_ref().map(|aug| {
        let kind = config.augmentation_descriptor().expect("augmentation is configured");
        let mut store = FeatureStore::new();
        for engine in std::iter::once(&aug.base).chain(&aug.pool) {
            match &tables[&(engine.clone(), kind)] {
                Ok((table, _)) => store.insert(engine, table.clone()),
                Err(e) => return Err(format!("features of {engine} unavailable: {e}")),
            }
        }
        run_augmentation_experiment(&store, &aug.base, &aug.pool, &plan, &config.eval).map_err(|e| e.to_string())
    });

    let out = &config.output_dir;
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let mut report = RunReport {
        output_dir: out.clone(),
        plan: plan.clone(),
        cells,
        augmentation,
        skipped: ingest.skipped,
        errors: ingest.errors,
        files: Vec::new(),
    };
    let mut files = Vec::new();

    let rows: Vec<AucRow> = report
        .cells
        .iter()
        .filter_map(|c| {
            c.outcome.as_ref().ok().map(|o| {
                auc_rows(&config.dataset_name(), c.engine.name(), c.descriptor.name(), &config.tim_mode.to_string(), o)
            })
        })
        .flatten()
        .collect();
    let mut buf = Vec::new();
    write_auc_csv(&mut buf, &rows).map_err(|e| Error::io(out.join("auc_rows.csv"), e))?;
    write_file(out, "auc_rows.csv", &buf, &mut files)?;

    for ((engine, kind), entry) in &tables {
        if let Ok((_, rows)) = entry {
            let rel = format!("features/{}_{}.csv", engine.name(), kind.name());
            let mut buf = Vec::new();
            write_feature_csv(&mut buf, rows).map_err(|e| Error::io(out.join(&rel), e))?;
            write_file(out, &rel, &buf, &mut files)?;
        }
    }

    if let Some(Ok(aug)) = &report.augmentation {
        let mut buf = Vec::new();
        write_augmentation_csv(&mut buf, aug).map_err(|e| Error::io(out.join("augmentation.csv"), e))?;
        write_file(out, "augmentation.csv", &buf, &mut files)?;
        write_file(out, "augmentation.md", augmentation_markdown(aug).as_bytes(), &mut files)?;
    }

    let mut summary = summary_markdown(config, &report.cells, &report);
    if let Some(Err(e)) = &report.augmentation {
        summary.push_str(&format!("\nAugmentation failed: {e}\n"));
    }
    write_file(out, "summary.md", summary.as_bytes(), &mut files)?;

    let mut config_json = serde_json::to_value(config).map_err(|e| Error::Config(e.to_string()))?;
    if let Some(obj) = config_json.as_object_mut() {
        obj.remove("output_dir");
    }
    let mut hashes = BTreeMap::new();
    for rel in &files {
        let path = out.join(rel);
        let bytes = std::fs::read(&path).map_err(|e| Error::io(&path, e))?;
        hashes.insert(rel.clone(), sha256_hex(&bytes));
    }
    let manifest = Manifest {
        manifest_version: MANIFEST_VERSION,
        crate_version: env!("CARGO_PKG_VERSION"),
        config: config_json,
        engines: config
            .all_engines()
            .iter()
            .map(|e| {
                let ec = config.engine_config(e);
                EngineEntry {
                    name: e.name().to_string(),
                    params_hash: ec.params_hash(),
                    params: serde_json::to_value(&ec).unwrap_or(serde_json::Value::Null),
                }
            })
            .collect(),
        split_master_seed: plan.master_seed,
        split_seeds: plan.seeds(),
        dataset_sha256: dataset_digest(&config.dataset_root)?,
        sequences: records.len(),
        skipped: &report.skipped,
        errors: &report.errors,
        cells: report
            .cells
            .iter()
            .map(|c| CellEntry {
                engine: c.engine.name().to_string(),
                descriptor: c.descriptor.name().to_string(),
                status: match &c.outcome {
                    Ok(_) => "ok".into(),
                    Err(e) => format!("failed: {e}"),
                },
                mean_auc: c.mean_auc(),
            })
            .collect(),
        augmentation_status: report.augmentation.as_ref().map(|a| match a {
            Ok(_) => "ok".into(),
            Err(e) => format!("failed: {e}"),
        }),
        files: hashes,
    };
    let mut json = serde_json::to_string_pretty(&manifest).map_err(|e| Error::Config(e.to_string()))?;
    json.push('\n');
    write_file(out, "manifest.json", json.as_bytes(), &mut files)?;
    report.files = files;
    Ok(report)
}
