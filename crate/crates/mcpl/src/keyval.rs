//! Plain-text config files: one `key = value` pair per line.
//!
//! Blank lines and lines starting with `#` are ignored. Keys use the same
//! snake_case names as the corresponding long flags. Flags always win over
//! file values; the caller applies the file first, then the flags.

use crate::CmdError;
use multicalib::Error;
use std::path::Path;

/// Reads every `key = value` pair from `path`, in file order.
pub fn parse_file(path: &Path) -> Result<Vec<(String, String)>, CmdError> {
    let text = std::fs::read_to_string(path)?;
    let mut pairs = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(CmdError::Lib(Error::Validation(format!(
                "{}:{}: expected `key = value`, got `{line}`",
                path.display(),
                lineno + 1
            ))));
        };
        pairs.push((key.trim().to_string(), value.trim().to_string()));
    }
    Ok(pairs)
}

/// Parse a value for key `key`, wrapping failures with context.
pub fn parse_as<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, CmdError> {
    value.parse::<T>().map_err(|_| {
        CmdError::Lib(Error::Validation(format!("config key `{key}`: cannot parse `{value}`")))
    })
}

/// Parse a comma-separated list of floats, as used for coefficient vectors.
pub fn parse_f64_list(key: &str, value: &str) -> Result<Vec<f64>, CmdError> {
    value.split(',').map(|tok| parse_as::<f64>(key, tok.trim())).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    #[test]
    fn parses_pairs_skips_comments() {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        writeln!(f, "# comment\n\nseed = 7\nalpha_v_train = 1.25, 0.75\n  n_per_env=100  ")
            .unwrap();
        let pairs = parse_file(f.path()).unwrap();
        assert_eq!(
            pairs,
            vec![
                ("seed".to_string(), "7".to_string()),
                ("alpha_v_train".to_string(), "1.25, 0.75".to_string()),
                ("n_per_env".to_string(), "100".to_string()),
            ]
        );
        assert_eq!(parse_f64_list("alpha_v_train", &pairs[1].1).unwrap(), vec![1.25, 0.75]);
    }

    #[test]
    fn rejects_missing_equals() {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        writeln!(f, "seed 7").unwrap();
        assert!(parse_file(f.path()).is_err());
    }
}
