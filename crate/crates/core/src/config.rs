//! Flat `key = value` configuration files and run settings.
//!
//! Blank lines and lines starting with `#` are ignored. Unknown or repeated
//! keys are errors. Relative paths resolve against the config file's
//! directory; command-line overrides take precedence over file values.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::carry::ExpenseRatio;
use crate::error::{Error, Result};
use crate::par::Execution;
use crate::select::{default_buckets, validate_buckets, BucketSpec, FilterConfig};

/// Parsed `key = value` pairs, consumed key by key.
#[derive(Debug, Clone, Default)]
pub struct KeyValues {
    entries: BTreeMap<String, (usize, String)>,
}

impl KeyValues {
    pub fn parse(text: &str) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key = value", i + 1)))?;
            let key = key.trim().to_string();
            if entries
                .insert(key.clone(), (i + 1, value.trim().to_string()))
                .is_some()
            {
                return Err(Error::Config(format!(
                    "line {}: duplicate key `{key}`",
                    i + 1
                )));
            }
        }
        Ok(KeyValues { entries })
    }

    pub fn take(&mut self, key: &str) -> Option<String> {
        self.entries.remove(key).map(|(_, v)| v)
    }

    pub fn take_parsed<T: FromStr>(&mut self, key: &str) -> Result<Option<T>> {
        match self.entries.remove(key) {
            None => Ok(None),
            Some((line, v)) => v.parse().map(Some).map_err(|_| {
                Error::Config(format!("line {line}: invalid value `{v}` for `{key}`"))
            }),
        }
    }

    /// Fails if any key was never consumed.
    pub fn finish(self) -> Result<()> {
        match self.entries.into_iter().next() {
            None => Ok(()),
            Some((key, (line, _))) => {
                Err(Error::Config(format!("line {line}: unknown key `{key}`")))
            }
        }
    }
}

/// Parses `label:min:max:target` entries separated by commas.
pub fn parse_buckets(s: &str) -> Result<Vec<BucketSpec>> {
    let mut out = Vec::new();
    for item in s.split(',').map(str::trim).filter(|x| !x.is_empty()) {
        let parts: Vec<&str> = item.split(':').map(str::trim).collect();
        let bad = || Error::Config(format!("bucket `{item}`: expected label:min:max:target"));
        if parts.len() != 4 {
            return Err(bad());
        }
        let num = |s: &str| s.parse::<i64>().map_err(|_| bad());
        let spec = BucketSpec::new(parts[0], num(parts[1])?, num(parts[2])?, num(parts[3])?)
            .map_err(|e| Error::Config(e.to_string()))?;
        out.push(spec);
    }
    if out.is_empty() {
        return Err(Error::Config("no buckets configured".into()));
    }
    validate_buckets(&out).map_err(|e| Error::Config(e.to_string()))?;
    Ok(out)
}

pub fn parse_bool(s: &str) -> Option<bool> {
    match s.to_ascii_lowercase().as_str() {
        "true" | "yes" | "1" => Some(true),
        "false" | "no" | "0" => Some(false),
        _ => None,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct InputPaths {
    pub options: PathBuf,
    pub etf_closes: PathBuf,
    pub holdings: PathBuf,
    pub futures: PathBuf,
    pub refrate: PathBuf,
    pub rates: PathBuf,
}

impl InputPaths {
    /// Canonical file names inside one directory.
    pub fn in_dir(dir: &Path) -> Self {
        InputPaths {
            options: dir.join("options.csv"),
            etf_closes: dir.join("etf_close.csv"),
            holdings: dir.join("holdings.csv"),
            futures: dir.join("futures.csv"),
            refrate: dir.join("refrate.csv"),
            rates: dir.join("rates.csv"),
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = (&'static str, &Path)> {
        [
            ("options", self.options.as_path()),
            ("etf_closes", self.etf_closes.as_path()),
            ("holdings", self.holdings.as_path()),
            ("futures", self.futures.as_path()),
            ("refrate", self.refrate.as_path()),
            ("rates", self.rates.as_path()),
        ]
        .into_iter()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub inputs: InputPaths,
    pub out_dir: PathBuf,
    pub filter: FilterConfig,
    pub buckets: Vec<BucketSpec>,
    pub expense_ratio: ExpenseRatio,
    /// Abort on the first data gap instead of dropping the date.
    pub strict: bool,
    pub execution: Execution,
}

impl RunConfig {
    pub fn new(inputs: InputPaths, out_dir: PathBuf) -> Self {
        RunConfig {
            inputs,
            out_dir,
            filter: FilterConfig::default(),
            buckets: default_buckets(),
            expense_ratio: ExpenseRatio::default(),
            strict: false,
            execution: Execution::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, path) in self.inputs.iter() {
            if !path.is_file() {
                return Err(Error::Config(format!(
                    "{name} input `{}` does not exist",
                    path.display()
                )));
            }
        }
        self.filter
            .validate()
            .map_err(|e| Error::Config(e.to_string()))?;
        validate_buckets(&self.buckets).map_err(|e| Error::Config(e.to_string()))?;
        Ok(())
    }
}

/// Command-line values that replace config-file entries.
#[derive(Debug, Clone, Default)]
pub struct RunOverrides {
    pub options: Option<PathBuf>,
    pub etf_closes: Option<PathBuf>,
    pub holdings: Option<PathBuf>,
    pub futures: Option<PathBuf>,
    pub refrate: Option<PathBuf>,
    pub rates: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub strict: bool,
}

fn resolve(base: &Path, value: String) -> PathBuf {
    let p = PathBuf::from(value);
    if p.is_absolute() {
        p
    } else {
        base.join(p)
    }
}

/// Builds a run configuration from config text plus overrides. `base` is
/// the directory relative file paths resolve against.
pub fn run_config_from_text(
    text: &str,
    base: &Path,
    overrides: &RunOverrides,
) -> Result<RunConfig> {
    let mut kv = KeyValues::parse(text)?;
    let mut path = |key: &str, flag: &Option<PathBuf>| -> Result<PathBuf> {
        let from_file = kv.take(key).map(|v| resolve(base, v));
        flag.clone()
            .or(from_file)
            .ok_or_else(|| Error::Config(format!("missing input path `{key}`")))
    };
    let inputs = InputPaths {
        options: path("options", &overrides.options)?,
        etf_closes: path("etf_closes", &overrides.etf_closes)?,
        holdings: path("holdings", &overrides.holdings)?,
        futures: path("futures", &overrides.futures)?,
        refrate: path("refrate", &overrides.refrate)?,
        rates: path("rates", &overrides.rates)?,
    };
    let out_dir = path("out", &overrides.out)?;
    let mut cfg = RunConfig::new(inputs, out_dir);

    let f = &mut cfg.filter;
    if let Some(v) = kv.take_parsed("min_days")? {
        f.min_days = v;
    }
    if let Some(v) = kv.take_parsed("max_days")? {
        f.max_days = v;
    }
    if let Some(v) = kv.take_parsed("max_abs_moneyness")? {
        f.max_abs_moneyness = v;
    }
    if let Some(v) = kv.take_parsed("max_rel_spread")? {
        f.max_rel_spread = v;
    }
    if let Some(v) = kv.take_parsed("min_open_interest")? {
        f.min_open_interest = v;
    }
    if let Some(v) = kv.take("buckets") {
        cfg.buckets = parse_buckets(&v)?;
    }
    if let Some(v) = kv.take_parsed::<f64>("expense_ratio")? {
        cfg.expense_ratio = ExpenseRatio::new(v).map_err(|e| Error::Config(e.to_string()))?;
    }
    if let Some(v) = kv.take("strict") {
        cfg.strict = parse_bool(&v)
            .ok_or_else(|| Error::Config(format!("invalid value `{v}` for `strict`")))?;
    }
    if let Some(v) = kv.take("execution") {
        cfg.execution = match v.as_str() {
            "sequential" => Execution::Sequential,
            "parallel" => Execution::Parallel,
            _ => {
                return Err(Error::Config(format!(
                    "invalid value `{v}` for `execution`"
                )))
            }
        };
    }
    cfg.strict |= overrides.strict;
    kv.finish()?;
    Ok(cfg)
}

pub fn load_run_config(path: &Path, overrides: &RunOverrides) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("cannot read `{}`: {e}", path.display())))?;
    let base = path.parent().unwrap_or(Path::new("."));
    run_config_from_text(&text, base, overrides)
}
