//! Native flow engines and ingestion of externally computed flows.

mod farneback;
mod patchmatch;
mod tvl1;

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub use farneback::{farneback_flow, FarnebackParams};
pub use patchmatch::{patchmatch_flow, patchmatch_flow_detailed, PatchMatchParams, PatchMatchResult};
pub use tvl1::{tvl1_energy, tvl1_flow, tvl1_flow_traced, TvL1Params, TvL1Trace};

use crate::error::{Error, Result};
use crate::flo::read_flo;
use crate::flow::FlowField;
use crate::image::GrayImage;

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum EngineId {
    Farneback,
    TvL1,
    PatchMatch,
    /// Flows produced by another tool and supplied as `.flo` files.
    External(String),
}

impl EngineId {
    pub fn name(&self) -> &str {
        match self {
            EngineId::Farneback => "farneback",
            EngineId::TvL1 => "tvl1",
            EngineId::PatchMatch => "patchmatch",
            EngineId::External(name) => name,
        }
    }

    pub fn is_native(&self) -> bool {
        !matches!(self, EngineId::External(_))
    }

    pub fn native() -> [EngineId; 3] {
        [EngineId::Farneback, EngineId::TvL1, EngineId::PatchMatch]
    }
}

impl fmt::Display for EngineId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for EngineId {
    type Err = Error;

    /// Native engine names map to their variants; `external:<name>` or any
    /// other identifier denotes an external engine.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        Ok(match s.to_ascii_lowercase().as_str() {
            "farneback" => EngineId::Farneback,
            "tvl1" | "tv-l1" => EngineId::TvL1,
            "patchmatch" | "flowfields" => EngineId::PatchMatch,
            _ => {
                let name = s.strip_prefix("external:").unwrap_or(s);
                let ok = !name.is_empty()
                    && name
                        .chars()
                        .all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_' || c == '.');
                if !ok {
                    return Err(Error::invalid(format!("bad engine name {s:?}")));
                }
                EngineId::External(name.to_string())
            }
        })
    }
}

impl TryFrom<String> for EngineId {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<EngineId> for String {
    fn from(id: EngineId) -> Self {
        id.name().to_string()
    }
}

/// An engine together with everything needed to run it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "engine", rename_all = "lowercase")]
pub enum EngineConfig {
    Farneback(FarnebackParams),
    Tvl1(TvL1Params),
    Patchmatch(PatchMatchParams),
    External { name: String, flow_root: PathBuf },
}

impl EngineConfig {
    pub fn with_defaults(id: &EngineId, flow_root: Option<&Path>) -> Self {
        match id {
            EngineId::Farneback => EngineConfig::Farneback(FarnebackParams::default()),
            EngineId::TvL1 => EngineConfig::Tvl1(TvL1Params::default()),
            EngineId::PatchMatch => EngineConfig::Patchmatch(PatchMatchParams::default()),
            EngineId::External(name) => EngineConfig::External {
                name: name.clone(),
                flow_root: flow_root.map(Path::to_path_buf).unwrap_or_else(|| PathBuf::from("flows")),
            },
        }
    }

    pub fn id(&self) -> EngineId {
        match self {
            EngineConfig::Farneback(_) => EngineId::Farneback,
            EngineConfig::Tvl1(_) => EngineId::TvL1,
            EngineConfig::Patchmatch(_) => EngineId::PatchMatch,
            EngineConfig::External { name, .. } => EngineId::External(name.clone()),
        }
    }

    /// Runs a native engine on a frame pair.
    pub fn compute(&self, prev: &GrayImage, next: &GrayImage) -> Result<FlowField> {
        match self {
            EngineConfig::Farneback(p) => farneback_flow(prev, next, p),
            EngineConfig::Tvl1(p) => tvl1_flow(prev, next, p),
            EngineConfig::Patchmatch(p) => patchmatch_flow(prev, next, p),
            EngineConfig::External { name, .. } => Err(Error::protocol(format!(
                "engine {name} is external; its flows must be supplied as files"
            ))),
        }
    }

    /// Short stable digest of the parameters, used as a cache key.
    pub fn params_hash(&self) -> String {
        let canonical = serde_json::to_string(self).expect("engine config serializes");
        let digest = Sha256::digest(canonical.as_bytes());
        digest[..8].iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// File holding the external flow for frames `(a, b)` of a sequence:
/// `<a>.flo` for consecutive pairs, `<a>-<b>.flo` otherwise.
pub fn external_flow_path(flow_root: &Path, engine: &str, sequence_id: &str, a: usize, b: usize) -> PathBuf {
    let file = if b == a + 1 {
        format!("{a}.flo")
    } else {
        format!("{a}-{b}.flo")
    };
    flow_root.join(engine).join(sequence_id).join(file)
}

/// Reads an externally computed flow and checks it against the expected
/// frame size.
pub fn import_external_flow(path: &Path, expected_dims: (usize, usize)) -> Result<FlowField> {
    let flow = read_flo(path)?;
    if flow.dims() != expected_dims {
        return Err(Error::protocol(format!(
            "{} holds a {}x{} flow, expected {}x{}",
            path.display(),
            flow.width(),
            flow.height(),
            expected_dims.0,
            expected_dims.1
        )));
    }
    Ok(flow)
}
