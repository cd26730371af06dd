use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use faceflow::engines::{external_flow_path, EngineId};
use faceflow::flo::write_flo;
use faceflow::harness::{
    bench_markdown, compute_flows, flow_bench, ingest_dataset, run_experiment, with_jobs, write_bench_csv,
    AugmentationSpec, ExperimentConfig, FlowCache, RunReport,
};
use faceflow::synth::{generate_expression_dataset, write_expression_dataset, ExpressionDatasetSpec};

#[derive(Parser, Debug)]
#[command(name = "faceflow", version, about = "Optical-flow benchmark for facial-expression motion")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Global {
    /// Experiment file (TOML)
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed; overrides the split seed of the config
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (defaults to all cores)
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Directory of the flow cache
    #[arg(long, global = true)]
    cache_dir: Option<PathBuf>,
    /// Directory for reports; overrides the config
    #[arg(long, global = true)]
    output_dir: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Read a dataset and report what would be used
    IngestCheck {
        /// Dataset root; defaults to the one in the config
        #[arg(long)]
        dataset: Option<PathBuf>,
    },
    /// Compute the flows of every configured engine and write them as .flo
    ComputeFlows,
    /// Run every engine x descriptor cell and write the report bundle
    Run,
    /// Score the native engines on the synthetic ground-truth suite
    BenchFlows {
        /// Engines to score (defaults to all native engines)
        #[arg(long, value_delimiter = ',')]
        engines: Vec<EngineId>,
    },
    /// Run the cross-engine training augmentation experiment
    Augment {
        #[arg(long)]
        base: Option<EngineId>,
        #[arg(long, value_delimiter = ',')]
        pool: Vec<EngineId>,
    },
    /// Write a synthetic expression dataset in the ingestible layout
    SynthGen {
        /// Destination directory
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 6)]
        classes: usize,
        #[arg(long, default_value_t = 8)]
        sequences_per_class: usize,
        #[arg(long, default_value_t = 12)]
        frames: usize,
    },
}

fn load_config(global: &Global) -> Result<ExperimentConfig> {
    let path = global.config.as_ref().context("this command needs --config")?;
    let mut config = ExperimentConfig::load(path)?;
    if let Some(seed) = global.seed {
        config.split.master_seed = seed;
    }
    if let Some(dir) = &global.output_dir {
        config.output_dir = dir.clone();
    }
    config.validate()?;
    Ok(config)
}

fn print_run(report: &RunReport) {
    for cell in &report.cells {
        match (&cell.outcome, cell.mean_auc()) {
            (Ok(_), Some(m)) => println!("{:<12} {:<6} mean AUC {m:.4}", cell.engine.name(), cell.descriptor.name()),
            (Err(e), _) => println!("{:<12} {:<6} failed: {e}", cell.engine.name(), cell.descriptor.name()),
            _ => {}
        }
    }
    match &report.augmentation {
        Some(Ok(aug)) => {
            for r in &aug.results {
                let acc = r.mean_accuracy.map_or("failed".to_string(), |a| format!("{a:.4}"));
                println!("augmentation {:<24} accuracy {acc}", r.config.label());
            }
        }
        Some(Err(e)) => println!("augmentation failed: {e}"),
        None => {}
    }
    println!("wrote {} files to {}", report.files.len(), report.output_dir.display());
}

fn ingest_check(global: &Global, dataset: Option<PathBuf>) -> Result<()> {
    let root = match dataset {
        Some(d) => d,
        None => load_config(global)?.dataset_root,
    };
    let report = ingest_dataset(&root)?;
    println!("{} sequences ingested from {}", report.records.len(), root.display());
    let mut counts = std::collections::BTreeMap::new();
    for r in &report.records {
        *counts.entry(r.label.name()).or_insert(0usize) += 1;
    }
    for (label, n) in counts {
        println!("  {label:<10} {n}");
    }
    for i in &report.skipped {
        println!("skipped {}: {}", i.sequence_id, i.reason);
    }
    for i in &report.errors {
        println!("error {}: {}", i.sequence_id, i.reason);
    }
    Ok(())
}

fn compute_all_flows(global: &Global, cache: &FlowCache) -> Result<()> {
    let config = load_config(global)?;
    let records = ingest_dataset(&config.dataset_root)?.records;
    let root = config.output_dir.join("flows");
    for engine in config.all_engines() {
        let flows = compute_flows(
            &records,
            &config.engine_config(&engine),
            cache,
            config.tim_mode,
            config.key_frame_rule,
            config.tim10_flows,
        )
        .with_context(|| format!("engine {engine}"))?;
        let mut written = 0;
        for seq in &flows {
            for (&(a, b), flow) in seq.pairs.iter().zip(&seq.flows) {
                write_flo(flow, &external_flow_path(&root, engine.name(), &seq.sequence_id, a, b))?;
                written += 1;
            }
        }
        println!("{engine}: {written} flows under {}", root.join(engine.name()).display());
    }
    println!("cache hits {}, misses {}", cache.hits(), cache.misses());
    Ok(())
}

fn bench(global: &Global, engines: Vec<EngineId>) -> Result<()> {
    let engines = if engines.is_empty() { EngineId::native().to_vec() } else { engines };
    let config = match &global.config {
        Some(_) => load_config(global)?,
        None => ExperimentConfig::new("."),
    };
    let configs: Vec<_> = engines.iter().map(|e| config.engine_config(e)).collect();
    let rows = flow_bench(&configs, global.seed.unwrap_or(0))?;
    let md = bench_markdown(&rows);
    print!("{md}");
    if let Some(dir) = &global.output_dir {
        std::fs::create_dir_all(dir)?;
        let mut csv = Vec::new();
        write_bench_csv(&mut csv, &rows)?;
        std::fs::write(dir.join("flow_bench.csv"), csv)?;
        std::fs::write(dir.join("flow_bench.md"), md)?;
        println!("wrote {}", dir.display());
    }
    Ok(())
}

fn synth_gen(global: &Global, out: &Path, classes: usize, spc: usize, frames: usize) -> Result<()> {
    let spec = ExpressionDatasetSpec {
        classes,
        ..ExpressionDatasetSpec::new(spc, frames, global.seed.unwrap_or(0))
    };
    let ds = generate_expression_dataset(&spec)?;
    write_expression_dataset(&ds, out)?;
    println!("wrote {} sequences to {}", ds.records.len(), out.display());
    Ok(())
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let global = &cli.global;
    let cache = FlowCache::new(global.cache_dir.clone());
    with_jobs(global.jobs, || match cli.command {
        Command::IngestCheck { dataset } => ingest_check(global, dataset),
        Command::ComputeFlows => compute_all_flows(global, &cache),
        Command::Run => {
            let report = run_experiment(&load_config(global)?, &cache)?;
            print_run(&report);
            Ok(())
        }
        Command::BenchFlows { engines } => bench(global, engines),
        Command::Augment { base, pool } => {
            let mut config = load_config(global)?;
            let mut spec = config.augmentation.take().unwrap_or(AugmentationSpec {
                base: config.engines[0].clone(),
                pool: Vec::new(),
                descriptor: None,
            });
            if let Some(b) = base {
                spec.base = b;
            }
            if !pool.is_empty() {
                spec.pool = pool;
            }
            if spec.pool.is_empty() {
                bail!("augmentation needs a pool; set it in the config or pass --pool");
            }
            config.augmentation = Some(spec);
            config.validate()?;
            let report = run_experiment(&config, &cache)?;
            print_run(&report);
            Ok(())
        }
        Command::SynthGen {
            out,
            classes,
            sequences_per_class,
            frames,
        } => synth_gen(global, &out, classes, sequences_per_class, frames),
    })?
}
