//! Run manifests: everything needed to replay an experiment byte-for-byte.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::experiment::RunConfig;
use crate::{CliError, Result};

pub const MANIFEST_SCHEMA: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub schema: u32,
    pub config: RunConfig,
    /// SHA-256 of the dataset file the run consumed.
    pub dataset_sha256: String,
    /// Resolved class partition (global class ids per split).
    pub partition: PartitionRecord,
    /// Problem descriptions per split, present when the run was asked to
    /// dump them.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub problems: Option<ProblemDump>,
    /// Test-split selection masks, present under `--dump-masks`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub test_masks: Option<Vec<MaskRecord>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PartitionRecord {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProblemDump {
    pub train: Vec<ProblemRecord>,
    pub val: Vec<ProblemRecord>,
    pub test: Vec<ProblemRecord>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProblemRecord {
    pub id: u64,
    pub seed: u64,
    pub classes: Vec<usize>,
    pub pool_rows: Vec<usize>,
    pub eval_rows: Vec<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MaskRecord {
    pub strategy: String,
    pub budget: usize,
    pub problem_id: u64,
    pub chosen: Vec<usize>,
    pub log_prob: f64,
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path)
        .map_err(|e| CliError::runtime(format!("cannot hash {}: {e}", path.display())))?;
    let mut hasher = Sha256::new();
    hasher.update(&bytes);
    Ok(hex_string(&hasher.finalize()))
}

fn hex_string(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

pub fn write(path: &Path, manifest: &RunManifest) -> Result<()> {
    let json = serde_json::to_string_pretty(manifest)?;
    std::fs::write(path, json)?;
    Ok(())
}

pub fn read(path: &Path) -> Result<RunManifest> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::runtime(format!("cannot read manifest {}: {e}", path.display())))?;
    let manifest: RunManifest = serde_json::from_str(&text)
        .map_err(|e| CliError::config(format!("{}: {e}", path.display())))?;
    if manifest.schema != MANIFEST_SCHEMA {
        return Err(CliError::config(format!(
            "{}: unsupported manifest schema {}",
            path.display(),
            manifest.schema
        )));
    }
    Ok(manifest)
}
