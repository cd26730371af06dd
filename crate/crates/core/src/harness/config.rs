use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::descriptors::{DescriptorKind, DescriptorOptions};
use crate::engines::{EngineConfig, EngineId, FarnebackParams, PatchMatchParams, TvL1Params};
use crate::error::{Error, Result};
use crate::eval::{EvalOptions, DEFAULT_SPLIT_COUNT, DEFAULT_TRAIN_RATIO};
use crate::preprocess::{KeyFrameRule, TimMode};

/// Which flows feed the TIM10 descriptors.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Tim10Flows {
    /// Flow computed directly between consecutive key frames.
    #[default]
    KeyPairs,
    /// Sum of the consecutive-frame flows between consecutive key frames.
    ConsecutiveSum,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitConfig {
    pub c: usize,
    pub ratio: f64,
    pub master_seed: u64,
}

impl Default for SplitConfig {
    fn default() -> Self {
        Self {
            c: DEFAULT_SPLIT_COUNT,
            ratio: DEFAULT_TRAIN_RATIO,
            master_seed: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AugmentationSpec {
    pub base: EngineId,
    pub pool: Vec<EngineId>,
    /// Descriptor used for the augmented classifiers; defaults to the first
    /// configured descriptor.
    #[serde(default)]
    pub descriptor: Option<DescriptorKind>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExternalSpec {
    pub flow_root: PathBuf,
}

fn default_engines() -> Vec<EngineId> {
    vec![EngineId::Farneback]
}

fn default_descriptors() -> Vec<DescriptorKind> {
    vec![DescriptorKind::Hof]
}

fn default_tim_mode() -> TimMode {
    TimMode::Tim2
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("results")
}

/// One experiment, read from a TOML file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub dataset_root: PathBuf,
    /// Name used in report rows; defaults to the last component of the
    /// dataset root.
    #[serde(default)]
    pub dataset_name: Option<String>,
    #[serde(default = "default_engines")]
    pub engines: Vec<EngineId>,
    #[serde(default = "default_descriptors")]
    pub descriptors: Vec<DescriptorKind>,
    #[serde(default = "default_tim_mode")]
    pub tim_mode: TimMode,
    #[serde(default)]
    pub key_frame_rule: KeyFrameRule,
    #[serde(default)]
    pub tim10_flows: Tim10Flows,
    #[serde(default)]
    pub split: SplitConfig,
    #[serde(default)]
    pub augmentation: Option<AugmentationSpec>,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default)]
    pub descriptor_options: DescriptorOptions,
    #[serde(default)]
    pub eval: EvalOptions,
    #[serde(default)]
    pub farneback: FarnebackParams,
    #[serde(default)]
    pub tvl1: TvL1Params,
    #[serde(default)]
    pub patchmatch: PatchMatchParams,
    /// Flow directories of external engines, keyed by engine name.
    #[serde(default)]
    pub external: BTreeMap<String, ExternalSpec>,
}

impl ExperimentConfig {
    /// A configuration with every default and the given dataset.
    pub fn new(dataset_root: impl Into<PathBuf>) -> Self {
        Self {
            dataset_root: dataset_root.into(),
            dataset_name: None,
            engines: default_engines(),
            descriptors: default_descriptors(),
            tim_mode: default_tim_mode(),
            key_frame_rule: KeyFrameRule::default(),
            tim10_flows: Tim10Flows::default(),
            split: SplitConfig::default(),
            augmentation: None,
            output_dir: default_output_dir(),
            descriptor_options: DescriptorOptions::default(),
            eval: EvalOptions::default(),
            farneback: FarnebackParams::default(),
            tvl1: TvL1Params::default(),
            patchmatch: PatchMatchParams::default(),
            external: BTreeMap::new(),
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let config: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    /// Reads a file; relative paths inside it are resolved against the
    /// file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut config = Self::from_toml(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })?;
        if let Some(dir) = path.parent() {
            let resolve = |p: &mut PathBuf| {
                if p.is_relative() {
                    *p = dir.join(&*p);
                }
            };
            resolve(&mut config.dataset_root);
            resolve(&mut config.output_dir);
            for spec in config.external.values_mut() {
                resolve(&mut spec.flow_root);
            }
        }
        Ok(config)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        if self.engines.is_empty() {
            return Err(Error::Config("at least one engine is required".into()));
        }
        if self.descriptors.is_empty() {
            return Err(Error::Config("at least one descriptor is required".into()));
        }
        if self.descriptors.contains(&DescriptorKind::Raw) && self.tim_mode != TimMode::Tim2 {
            return Err(Error::Config("the raw descriptor is only defined for tim2".into()));
        }
        if !(self.split.ratio > 0.0 && self.split.ratio < 1.0) || self.split.c == 0 {
            return Err(Error::Config("split needs c >= 1 and 0 < ratio < 1".into()));
        }
        self.farneback.validate()?;
        self.tvl1.validate()?;
        self.patchmatch.validate()?;
        self.eval.svm.validate()?;
        if let Some(aug) = &self.augmentation {
            if aug.pool.contains(&aug.base) {
                return Err(Error::Config("augmentation base must not be in its pool".into()));
            }
            if aug.descriptor == Some(DescriptorKind::Raw) && self.tim_mode != TimMode::Tim2 {
                return Err(Error::Config("the raw descriptor is only defined for tim2".into()));
            }
        }
        Ok(())
    }

    pub fn dataset_name(&self) -> String {
        self.dataset_name.clone().unwrap_or_else(|| {
            self.dataset_root
                .file_name()
                .map(|n| n.to_string_lossy().into_owned())
                .unwrap_or_else(|| "dataset".into())
        })
    }

    /// Engines whose flows are needed: the listed ones, then any extra
    /// augmentation engines, without repeats.
    pub fn all_engines(&self) -> Vec<EngineId> {
        let mut out = self.engines.clone();
        if let Some(aug) = &self.augmentation {
            for e in std::iter::once(&aug.base).chain(&aug.pool) {
                if !out.contains(e) {
                    out.push(e.clone());
                }
            }
        }
        out
    }

    pub fn augmentation_descriptor(&self) -> Option<DescriptorKind> {
        self.augmentation
            .as_ref()
            .map(|a| a.descriptor.unwrap_or(self.descriptors[0]))
    }

    /// Engine with this experiment's parameter overrides.
    pub fn engine_config(&self, id: &EngineId) -> EngineConfig {
        match id {
            EngineId::Farneback => EngineConfig::Farneback(self.farneback.clone()),
            EngineId::TvL1 => EngineConfig::Tvl1(self.tvl1.clone()),
            EngineId::PatchMatch => EngineConfig::Patchmatch(self.patchmatch.clone()),
            EngineId::External(name) => EngineConfig::External {
                name: name.clone(),
                flow_root: self
                    .external
                    .get(name)
                    .map(|s| s.flow_root.clone())
                    .unwrap_or_else(|| self.dataset_root.join("flows")),
            },
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn full_file_parses() {
        let text = r#"
dataset_root = "data/synthetic"
engines = ["farneback", "tvl1", "external:pwcnet"]
descriptors = ["hof", "hoof"]
tim_mode = "tim10"
key_frame_rule = "score_magnitude"
tim10_flows = "consecutive_sum"
output_dir = "out"

[split]
c = 5
master_seed = 7

[augmentation]
base = "farneback"
pool = ["tvl1"]

[farneback]
window_size = 11

[external.pwcnet]
flow_root = "flows"

[eval]
zscore = true
"#;
        let c = ExperimentConfig::from_toml(text).unwrap();
        assert_eq!(c.engines.len(), 3);
        assert_eq!(c.tim_mode, TimMode::Tim10);
        assert_eq!(c.split.c, 5);
        assert_eq!(c.split.ratio, DEFAULT_TRAIN_RATIO);
        assert_eq!(c.farneback.window_size, 11);
        assert_eq!(c.tim10_flows, Tim10Flows::ConsecutiveSum);
        assert!(c.eval.zscore);
        assert_eq!(c.dataset_name(), "synthetic");
        assert_eq!(c.augmentation_descriptor(), Some(DescriptorKind::Hof));
        match c.engine_config(&"external:pwcnet".parse().unwrap()) {
            EngineConfig::External { flow_root, .. } => assert_eq!(flow_root, PathBuf::from("flows")),
            other => panic!("{other:?}"),
        }
        let again = ExperimentConfig::from_toml(&c.to_toml().unwrap()).unwrap();
        assert_eq!(again, c);
    }

    #[test]
    fn invalid_configs_are_rejected() {
        assert!(ExperimentConfig::from_toml("dataset_root = \"d\"\ndescriptors = [\"raw\"]\ntim_mode = \"tim10\"").is_err());
        assert!(ExperimentConfig::from_toml("dataset_root = \"d\"\nengines = []").is_err());
        assert!(ExperimentConfig::from_toml("dataset_root = \"d\"\nbogus = 1").is_err());
        assert!(ExperimentConfig::from_toml("dataset_root = \"d\"\n[farneback]\nwindow_size = 0").is_err());
        assert!(ExperimentConfig::from_toml("dataset_root = \"d\"\ndescriptors = [\"raw\"]").is_ok());
    }
}
