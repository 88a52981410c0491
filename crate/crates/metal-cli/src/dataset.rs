//! Dataset files: format detection and loading into a `BaseDataset`.

use std::path::Path;

use metal_core::data::{self, BaseDataset};
use serde::{Deserialize, Serialize};

use crate::{CliError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum DataFormat {
    Csv,
    Libsvm,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct CsvOptions {
    pub has_header: bool,
    /// 0-based column carrying the label.
    pub label_col: usize,
}

impl Default for CsvOptions {
    fn default() -> Self {
        CsvOptions {
            has_header: false,
            label_col: 0,
        }
    }
}

pub fn load_dataset(path: &Path, format: DataFormat, csv: CsvOptions) -> Result<BaseDataset> {
    let text = std::fs::read_to_string(path).map_err(|e| {
        CliError::runtime(format!("cannot read dataset {}: {e}", path.display()))
    })?;
    let ds = match format {
        DataFormat::Csv => data::parse_csv(&text, csv.has_header, csv.label_col),
        DataFormat::Libsvm => data::parse_libsvm(&text),
    }
    .map_err(|e| CliError::runtime(format!("{}: {e}", path.display())))?;
    log::info!(
        "loaded {}: {} rows, {} features, {} classes",
        path.display(),
        ds.n_rows(),
        ds.n_features(),
        ds.n_classes()
    );
    Ok(ds)
}

/// Guess the format from the file extension: `.libsvm`/`.scale` are LIBSVM,
/// everything else CSV.
pub fn guess_format(path: &Path) -> DataFormat {
    match path.extension().and_then(|e| e.to_str()) {
        Some("libsvm") | Some("scale") | Some("svm") => DataFormat::Libsvm,
        _ => DataFormat::Csv,
    }
}
