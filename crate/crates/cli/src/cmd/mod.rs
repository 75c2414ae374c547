//! One module per subcommand family; each takes its parsed args plus the
//! optional config file and performs the run.

pub mod align;
pub mod bench;
pub mod corpus;
pub mod model;
pub mod translate;

use shortlex_core::Result;
use std::str::FromStr;

// ── shared flag enums ───────────────────────────────────────────────────

/// Which vocabulary selector a decoding or measurement run uses.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum SelectorKind {
    /// Full output vocabulary, no selection.
    NoSelection,
    Nvs,
    Align,
}

impl FromStr for SelectorKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "none" => Ok(Self::NoSelection),
            "nvs" => Ok(Self::Nvs),
            "align" => Ok(Self::Align),
            other => Err(format!(
                "unknown selector {other:?} (use none, nvs, or align)"
            )),
        }
    }
}

impl SelectorKind {
    /// `clap` value parser with a displayable error.
    pub fn from_str_arg(s: &str) -> std::result::Result<Self, String> {
        s.parse()
    }
}

impl std::fmt::Display for SelectorKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::NoSelection => "none",
            Self::Nvs => "nvs",
            Self::Align => "align",
        })
    }
}

/// Parses a comma-separated list through `FromStr`.
pub fn parse_list<T: FromStr>(raw: &str, what: &str) -> Result<Vec<T>> {
    raw.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| {
            s.parse().map_err(|_| {
                shortlex_core::Error::InvalidInput(format!("bad {what} entry {s:?} in {raw:?}"))
            })
        })
        .collect()
}
