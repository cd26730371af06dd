use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};

use crate::engines::EngineConfig;
use crate::error::{Error, Result};
use crate::flo::{encode_flo, read_flo};
use crate::flow::FlowField;

/// On-disk store of computed flows keyed by engine, parameter digest,
/// sequence and frame pair. Without a root it computes every request.
#[derive(Debug, Default)]
pub struct FlowCache {
    root: Option<PathBuf>,
    hits: AtomicUsize,
    misses: AtomicUsize,
}

impl FlowCache {
    pub fn new(root: Option<PathBuf>) -> Self {
        Self {
            root,
            hits: AtomicUsize::new(0),
            misses: AtomicUsize::new(0),
        }
    }

    pub fn disabled() -> Self {
        Self::new(None)
    }

    pub fn root(&self) -> Option<&Path> {
        self.root.as_deref()
    }

    pub fn hits(&self) -> usize {
        self.hits.load(Ordering::Relaxed)
    }

    pub fn misses(&self) -> usize {
        self.misses.load(Ordering::Relaxed)
    }

    pub fn entry_path(&self, engine: &EngineConfig, sequence_id: &str, a: usize, b: usize) -> Option<PathBuf> {
        self.root.as_ref().map(|r| {
            r.join(engine.id().name())
                .join(engine.params_hash())
                .join(sequence_id)
                .join(format!("{a}-{b}.flo"))
        })
    }

    /// Returns the cached flow or runs `compute` and stores its result.
    /// Unreadable entries are recomputed and overwritten.
    pub fn get_or_compute(
        &self,
        engine: &EngineConfig,
        sequence_id: &str,
        a: usize,
        b: usize,
        compute: impl FnOnce() -> Result<FlowField>,
    ) -> Result<FlowField> {
        let Some(path) = self.entry_path(engine, sequence_id, a, b) else {
            self.misses.fetch_add(1, Ordering::Relaxed);
            return compute();
        };
        if path.exists() {
            match read_flo(&path) {
                Ok(flow) => {
                    self.hits.fetch_add(1, Ordering::Relaxed);
                    return Ok(flow);
                }
                Err(e) => log::warn!("recomputing corrupt cache entry {}: {e}", path.display()),
            }
        }
        self.misses.fetch_add(1, Ordering::Relaxed);
        let flow = compute()?;
        store(&path, &flow)?;
        Ok(flow)
    }
}

fn store(path: &Path, flow: &FlowField) -> Result<()> {
    let dir = path.parent().expect("cache entries live in a directory");
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| Error::io(dir, e))?;
    std::io::Write::write_all(&mut tmp, &encode_flo(flow)?).map_err(|e| Error::io(tmp.path(), e))?;
    tmp.persist(path).map_err(|e| Error::io(path, e.error))?;
    Ok(())
}
