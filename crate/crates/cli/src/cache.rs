//! On-disk cache of triad tables keyed by a SHA-256 of the build inputs.

use std::path::{Path, PathBuf};

use ekman::resonance::TriadTable;
use ekman::TorusGeometry;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::artifacts::write_atomic;
use crate::error::CliError;

const CACHE_SCHEMA: &str = "ekman-triad-cache-v1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableKey {
    pub schema: String,
    pub geometry: TorusGeometry,
    pub truncation: u32,
    pub output_cutoff: u32,
    pub tolerance: f64,
    pub include_nonresonant: bool,
}

impl TableKey {
    pub fn new(geometry: TorusGeometry, truncation: u32, output_cutoff: u32, tolerance: f64, include_nonresonant: bool) -> Self {
        TableKey { schema: CACHE_SCHEMA.into(), geometry, truncation, output_cutoff, tolerance, include_nonresonant }
    }

    pub fn hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("key serializes");
        Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect()
    }

    fn build(&self) -> ekman::Result<TriadTable> {
        TriadTable::build(&self.geometry, self.truncation, self.output_cutoff, self.tolerance, self.include_nonresonant)
    }
}

#[derive(Serialize, Deserialize)]
struct Entry {
    key: TableKey,
    table: TriadTable,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum CacheStatus {
    Hit,
    Miss,
    Rebuilt,
    /// The file existed but did not parse or did not match its key.
    Invalid,
}

pub fn path_for(dir: &Path, key: &TableKey) -> PathBuf {
    dir.join(format!("triads-{}.json", &key.hash()[..16]))
}

pub fn load_or_build(dir: &Path, key: &TableKey, rebuild: bool) -> Result<(TriadTable, CacheStatus), CliError> {
    let path = path_for(dir, key);
    let status = if rebuild {
        CacheStatus::Rebuilt
    } else {
        match std::fs::read(&path) {
            Ok(bytes) => match serde_json::from_slice::<Entry>(&bytes) {
                Ok(e) if e.key == *key => return Ok((e.table, CacheStatus::Hit)),
                _ => CacheStatus::Invalid,
            },
            Err(_) => CacheStatus::Miss,
        }
    };
    let table = key.build()?;
    let entry = Entry { key: key.clone(), table };
    write_atomic(&path, &serde_json::to_vec(&entry)?)?;
    Ok((entry.table, status))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hash_depends_on_every_input() {
        let g = TorusGeometry::unit();
        let base = TableKey::new(g, 2, 4, 1e-12, false);
        let variants = [
            TableKey::new(TorusGeometry::new(1.0, 1.5, 1.0).unwrap(), 2, 4, 1e-12, false),
            TableKey::new(g, 3, 4, 1e-12, false),
            TableKey::new(g, 2, 2, 1e-12, false),
            TableKey::new(g, 2, 4, 1e-10, false),
            TableKey::new(g, 2, 4, 1e-12, true),
        ];
        for v in &variants {
            assert_ne!(base.hash(), v.hash());
        }
        assert_eq!(base.hash(), TableKey::new(g, 2, 4, 1e-12, false).hash());
        assert_eq!(base.hash().len(), 64);
    }
}
