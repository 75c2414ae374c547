//! Key=value run configuration: file values fill in flags the user left
//! unset, explicit flags always win, and every command logs the final
//! resolved values before doing any work.

use std::collections::HashMap;
use std::fmt::Display;
use std::path::Path;
use std::str::FromStr;

use shortlex_core::{Error, Result};

// ── config file ─────────────────────────────────────────────────────────

/// Parsed contents of a `--config` file: one `key=value` per line, `#`
/// comments and blank lines ignored.
#[derive(Debug, Default)]
pub struct FileConfig {
    values: HashMap<String, String>,
}

impl FileConfig {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::InvalidInput(format!("config file {}: {e}", path.display())))?;
        let mut values = HashMap::new();
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(Error::Format(format!(
                    "{} line {}: expected key=value, got {line:?}",
                    path.display(),
                    n + 1
                )));
            };
            values.insert(key.trim().to_string(), value.trim().to_string());
        }
        Ok(Self { values })
    }

    /// Typed lookup; a present but unparseable value is an input error.
    pub fn get<T: FromStr>(&self, key: &str) -> Result<Option<T>> {
        match self.values.get(key) {
            None => Ok(None),
            Some(raw) => raw.parse().map(Some).map_err(|_| {
                Error::InvalidInput(format!("config key {key}: cannot parse {raw:?}"))
            }),
        }
    }

    /// Flag value if given, else config-file value, else the default.
    pub fn resolve<T: FromStr>(&self, flag: Option<T>, key: &str, default: T) -> Result<T> {
        match flag {
            Some(v) => Ok(v),
            None => Ok(self.get(key)?.unwrap_or(default)),
        }
    }

    /// Like `resolve` but with no default: the value must come from the
    /// flag or the file.
    pub fn require<T: FromStr>(&self, flag: Option<T>, key: &str) -> Result<T> {
        match flag {
            Some(v) => Ok(v),
            None => self.get(key)?.ok_or_else(|| {
                Error::InvalidInput(format!("missing required --{key} (flag or config file)"))
            }),
        }
    }
}

// ── resolved-config logging ──────────────────────────────────────────────

/// Collects resolved key=value pairs so each run can log exactly the
/// configuration it executed with.
#[derive(Default)]
pub struct Resolved {
    entries: Vec<(String, String)>,
}

impl Resolved {
    pub fn put(&mut self, key: &str, value: impl Display) -> &mut Self {
        self.entries.push((key.to_string(), value.to_string()));
        self
    }

    pub fn log(&self, command: &str) {
        let body: Vec<String> = self
            .entries
            .iter()
            .map(|(k, v)| format!("{k}={v}"))
            .collect();
        log::info!("{command}: resolved config: {}", body.join(" "));
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    #[test]
    fn file_values_fill_in_but_flags_win() {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        writeln!(f, "# comment\nlambda = 0.5\nsteps=200").unwrap();
        let cfg = FileConfig::load(Some(f.path())).unwrap();
        assert_eq!(cfg.resolve(None::<f64>, "lambda", 0.9).unwrap(), 0.5);
        assert_eq!(cfg.resolve(Some(0.1), "lambda", 0.9).unwrap(), 0.1);
        assert_eq!(cfg.resolve(None::<usize>, "beam", 5).unwrap(), 5);
        assert_eq!(cfg.require(None::<usize>, "steps").unwrap(), 200);
        assert!(cfg.require(None::<usize>, "absent").is_err());
    }

    #[test]
    fn malformed_lines_are_format_errors() {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        writeln!(f, "no equals sign here").unwrap();
        assert!(matches!(
            FileConfig::load(Some(f.path())),
            Err(Error::Format(_))
        ));
    }

    #[test]
    fn unparseable_value_is_an_input_error() {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        writeln!(f, "steps=abc").unwrap();
        let cfg = FileConfig::load(Some(f.path())).unwrap();
        assert!(cfg.get::<usize>("steps").is_err());
    }
}
