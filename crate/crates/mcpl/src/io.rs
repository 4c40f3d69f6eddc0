//! Dataset loading shared by `run` and `eval`.

use crate::CmdError;
use multicalib::Dataset;
use std::path::Path;

/// Loads a CSV, treating a column as environment labels when asked for
/// explicitly or when the file has one under the default name `env` (the
/// name `gen` writes). Without this, an unclaimed `env` column would be
/// silently consumed as a numeric feature.
pub fn load_dataset(path: &Path, env_col: Option<&str>) -> Result<Dataset, CmdError> {
    let col = match env_col {
        Some(name) => Some(name.to_string()),
        None => {
            let mut reader = csv::Reader::from_path(path)?;
            let headers = reader.headers()?;
            headers.iter().any(|h| h == "env").then(|| "env".to_string())
        }
    };
    Ok(Dataset::from_csv(path, col.as_deref())?)
}
