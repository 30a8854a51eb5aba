//! `key = value` config files merged under command-line flags.

use std::collections::BTreeMap;
use std::path::Path;
use std::str::FromStr;

use crate::error::CliError;

/// Every key any subcommand reads. A config file may hold keys for several
/// subcommands; anything outside this list is rejected.
pub const KNOWN_KEYS: &[&str] = &[
    "seed",
    // gen
    "n-tables",
    "rows-min",
    "rows-max",
    "cols-min",
    "cols-max",
    "vocab-size",
    "per-table",
    "query-seed",
    // encode
    "corpus",
    "formats",
    "name",
    "bucket-count",
    "dimension",
    "projection-seed",
    "lowercase",
    // train
    "store",
    "bottleneck",
    "alpha",
    "dropout",
    "use-bias",
    "gamma",
    "lambda-inv",
    "lambda-var",
    "lambda-cov",
    "lambda-id",
    "lr",
    "weight-decay",
    "steps",
    "batch-size",
    "grad-clip-norm",
    "log-every",
    "ckpt-every",
    "max-views",
    "hidden-mult",
    // eval, adapt, shift, import
    "queries",
    "query-vectors",
    "checkpoint",
    "baseline",
    "k-list",
    "pca-tables",
    "out",
    "reference",
    "input",
    "corpus-name",
    "encoder-name",
];

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Settings {
    values: BTreeMap<String, String>,
}

impl Settings {
    /// Parses `key = value` lines. Blank lines and `#` comments are skipped;
    /// `snake_case` keys are accepted as their kebab-case form.
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let mut values = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| CliError::Usage(format!("config line {}: expected `key = value`", i + 1)))?;
            let key = k.trim().replace('_', "-");
            if !KNOWN_KEYS.contains(&key.as_str()) {
                return Err(CliError::Usage(format!("unknown config key `{}`", k.trim())));
            }
            if values.insert(key.clone(), v.trim().to_string()).is_some() {
                return Err(CliError::Usage(format!("config key `{key}` given twice")));
            }
        }
        Ok(Self { values })
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    /// The flag if given, else the config value, else `None`.
    pub fn get<T: FromStr>(&self, key: &str, flag: Option<T>) -> Result<Option<T>, CliError> {
        debug_assert!(KNOWN_KEYS.contains(&key), "unlisted key {key}");
        if flag.is_some() {
            return Ok(flag);
        }
        match self.values.get(key) {
            None => Ok(None),
            Some(v) => v
                .parse()
                .map(Some)
                .map_err(|_| CliError::Usage(format!("config key `{key}`: cannot parse {v:?}"))),
        }
    }

    pub fn get_or<T: FromStr>(&self, key: &str, flag: Option<T>, default: T) -> Result<T, CliError> {
        Ok(self.get(key, flag)?.unwrap_or(default))
    }
}

/// Comma-separated list, e.g. `1,5,10` or `csv,html`.
#[derive(Debug, Clone, PartialEq)]
pub struct List<T>(pub Vec<T>);

impl<T: FromStr> FromStr for List<T> {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        s.split(',')
            .map(str::trim)
            .filter(|p| !p.is_empty())
            .map(|p| p.parse().map_err(|_| format!("bad list item {p:?}")))
            .collect::<Result<Vec<T>, _>>()
            .map(List)
    }
}
