//! Partitioned JSONL export of training records with a digest manifest.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use stepsearch_core::datagen::{partition_records, CurriculumStage, DatasetRecord, Source};
use thiserror::Error;

use crate::io::{sha256_hex, to_jsonl, write_atomic, write_json, IoError};

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Error)]
#[error("export to {root}: {source}")]
pub struct ExportError {
    pub root: PathBuf,
    #[source]
    pub source: IoError,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    /// Relative to the export root, `/`-separated.
    pub path: String,
    pub curriculum_stage: CurriculumStage,
    pub source: Source,
    pub records: usize,
    pub sha256: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub files: Vec<ManifestEntry>,
}

impl Manifest {
    pub fn total_records(&self) -> usize {
        self.files.iter().map(|f| f.records).sum()
    }
}

/// Writes one JSONL file per (stage, source) partition under `root`, plus
/// `manifest.json`. Records keep their input order inside a partition and
/// partitions are listed in path order, so identical inputs give
/// byte-identical files.
pub fn export_dataset(records: &[DatasetRecord], root: &Path) -> Result<Manifest, ExportError> {
    let err = |source| ExportError { root: root.to_path_buf(), source };
    let mut manifest = Manifest::default();
    for (rel, group) in partition_records(records) {
        let bytes = to_jsonl(group.iter()).map_err(err)?;
        write_atomic(&root.join(&rel), &bytes).map_err(err)?;
        manifest.files.push(ManifestEntry {
            path: rel,
            curriculum_stage: group[0].curriculum_stage,
            source: group[0].source,
            records: group.len(),
            sha256: sha256_hex(&bytes),
        });
    }
    write_json(&root.join(MANIFEST_FILE), &manifest).map_err(err)?;
    Ok(manifest)
}
