//! File formats: the binary cloud container, JSON results, ASCII PLY
//! interchange, and TOML configs.
//!
//! Writers go through [`atomic_write`], so a partial write never leaves a
//! file that parses as valid.

pub mod cloud_file;
pub mod config;
pub mod ply;
pub mod results;

use std::io::Write;
use std::path::Path;

use crate::Result;

/// Origin of a generated cloud: random generator name and seed.
#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct Provenance {
    pub generator: String,
    pub seed: u64,
}

/// Writes via a temporary file in the target directory plus an atomic
/// rename.
pub fn atomic_write(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty());
    let mut tmp = match dir {
        Some(d) => tempfile::NamedTempFile::new_in(d)?,
        None => tempfile::NamedTempFile::new_in(".")?,
    };
    tmp.write_all(bytes)?;
    tmp.flush()?;
    tmp.persist(path).map_err(|e| crate::Error::Io(e.error))?;
    Ok(())
}
