//! Run configuration: a TOML file overlaid by command-line flags.

use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use placeconn::ingest::DateWindow;
use placeconn::registry::PlaceLevel;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::CliError;

/// Keys accepted in the config file. Every key is optional.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub registry: Option<OneOrMany>,
    pub level: Option<String>,
    pub region_level: Option<String>,
    pub events: Option<OneOrMany>,
    pub from: Option<DateField>,
    pub to: Option<DateField>,
    pub whitelist: Option<String>,
    pub out: Option<PathBuf>,
    pub threads: Option<usize>,
    pub spill_threshold: Option<usize>,
    pub include_self: Option<bool>,
    pub transitions: Option<bool>,
    pub scale: Option<f64>,
    pub k: Option<Vec<usize>>,
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
pub enum OneOrMany {
    One(PathBuf),
    Many(Vec<PathBuf>),
}

impl OneOrMany {
    fn into_vec(self) -> Vec<PathBuf> {
        match self {
            OneOrMany::One(p) => vec![p],
            OneOrMany::Many(v) => v,
        }
    }
}

/// A date written either as a bare TOML date or a quoted string.
#[derive(Debug, Deserialize)]
#[serde(untagged)]
pub enum DateField {
    Native(toml::value::Datetime),
    Text(String),
}

impl DateField {
    fn date(&self) -> Result<NaiveDate, CliError> {
        let text = match self {
            DateField::Native(d) => d.to_string(),
            DateField::Text(s) => s.clone(),
        };
        NaiveDate::parse_from_str(&text, "%Y-%m-%d").map_err(|_| CliError::Config(format!("bad date {text:?}")))
    }
}

/// Source filter selection.
#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Whitelist {
    Builtin,
    Disabled,
    File(PathBuf),
}

impl Whitelist {
    fn parse(s: &str) -> Self {
        match s {
            "builtin" => Whitelist::Builtin,
            "none" => Whitelist::Disabled,
            path => Whitelist::File(PathBuf::from(path)),
        }
    }
}

/// Shared flags as given on the command line; `None` defers to the file.
#[derive(Debug, Default, Clone, clap::Args)]
pub struct SharedFlags {
    /// TOML config file; flags given here override its values.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// GeoJSON registry file (repeatable).
    #[arg(long, global = true)]
    pub registry: Vec<PathBuf>,
    /// Place level: country, admin1, county, metro or tract.
    #[arg(long, global = true)]
    pub level: Option<String>,
    /// Level whose shared ancestor defines "same region".
    #[arg(long, global = true)]
    pub region_level: Option<String>,
    /// First day of the study window (YYYY-MM-DD, inclusive).
    #[arg(long, global = true)]
    pub from: Option<NaiveDate>,
    /// Last day of the study window (YYYY-MM-DD, inclusive).
    #[arg(long, global = true)]
    pub to: Option<NaiveDate>,
    /// Output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Worker threads (defaults to the number of cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Source whitelist file, `builtin` or `none`.
    #[arg(long, global = true)]
    pub whitelist: Option<String>,
    /// Keep self pairs (PCI 1) in the matrix.
    #[arg(long, global = true)]
    pub include_self: bool,
    /// Count consecutive within-day transitions instead of all place pairs.
    #[arg(long, global = true)]
    pub transitions: bool,
    /// Multiplier applied before log10 transforms and to regression outcomes.
    #[arg(long, global = true)]
    pub scale: Option<f64>,
    /// Community counts for cluster cuts (comma separated or repeated).
    #[arg(long, global = true, value_delimiter = ',')]
    pub k: Vec<usize>,
    /// Spill pair-count partitions to disk beyond this many distinct pairs.
    #[arg(long, global = true)]
    pub spill_threshold: Option<usize>,
}

/// Effective settings after merging file and flags.
#[derive(Clone, Debug, Serialize)]
pub struct RunConfig {
    pub registry: Vec<PathBuf>,
    pub level: PlaceLevel,
    pub region_level: PlaceLevel,
    pub events: Vec<PathBuf>,
    pub window: Option<(NaiveDate, NaiveDate)>,
    pub whitelist: Whitelist,
    pub include_self: bool,
    pub transitions: bool,
    pub scale: f64,
    pub k: Vec<usize>,
    pub spill_threshold: Option<usize>,
    #[serde(skip)]
    pub out: PathBuf,
    #[serde(skip)]
    pub threads: Option<usize>,
}

fn parse_level(s: &str) -> Result<PlaceLevel, CliError> {
    s.parse().map_err(|_| CliError::Config(format!("unknown level {s:?}")))
}

/// Paths in the file are relative to the file's directory.
fn rebase(base: Option<&Path>, p: PathBuf) -> PathBuf {
    match base {
        Some(b) if p.is_relative() => b.join(p),
        _ => p,
    }
}

impl RunConfig {
    pub fn resolve(flags: &SharedFlags, events: &[PathBuf]) -> Result<Self, CliError> {
        let (file, base) = match &flags.config {
            Some(path) => {
                let text = std::fs::read_to_string(path)
                    .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", path.display())))?;
                let file: FileConfig =
                    toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
                (file, path.parent().map(Path::to_path_buf))
            }
            None => (FileConfig::default(), None),
        };
        let base = base.as_deref();
        let registry = if flags.registry.is_empty() {
            file.registry
                .map(OneOrMany::into_vec)
                .unwrap_or_default()
                .into_iter()
                .map(|p| rebase(base, p))
                .collect()
        } else {
            flags.registry.clone()
        };
        let events = if events.is_empty() {
            file.events
                .map(OneOrMany::into_vec)
                .unwrap_or_default()
                .into_iter()
                .map(|p| rebase(base, p))
                .collect()
        } else {
            events.to_vec()
        };
        let level = parse_level(flags.level.as_deref().or(file.level.as_deref()).unwrap_or("county"))?;
        let region_level = parse_level(
            flags
                .region_level
                .as_deref()
                .or(file.region_level.as_deref())
                .unwrap_or("admin1"),
        )?;
        let from = match flags.from {
            Some(d) => Some(d),
            None => file.from.as_ref().map(DateField::date).transpose()?,
        };
        let to = match flags.to {
            Some(d) => Some(d),
            None => file.to.as_ref().map(DateField::date).transpose()?,
        };
        let window = match (from, to) {
            (None, None) => None,
            (Some(a), Some(b)) => {
                DateWindow::new(a, b).map_err(|e| CliError::Config(e.to_string()))?;
                Some((a, b))
            }
            _ => return Err(CliError::Config("--from and --to must be given together".into())),
        };
        let whitelist = match flags.whitelist.as_deref().or(file.whitelist.as_deref()) {
            None => Whitelist::Builtin,
            Some(s) => match Whitelist::parse(s) {
                Whitelist::File(p) if flags.whitelist.is_none() => Whitelist::File(rebase(base, p)),
                w => w,
            },
        };
        let scale = flags.scale.or(file.scale).unwrap_or(1000.0);
        if !(scale > 0.0 && scale.is_finite()) {
            return Err(CliError::Config(format!("scale must be positive, got {scale}")));
        }
        let k = if flags.k.is_empty() {
            file.k.unwrap_or_default()
        } else {
            flags.k.clone()
        };
        let threads = flags.threads.or(file.threads);
        if threads == Some(0) {
            return Err(CliError::Config("threads must be at least 1".into()));
        }
        Ok(RunConfig {
            registry,
            level,
            region_level,
            events,
            window,
            whitelist,
            include_self: flags.include_self || file.include_self.unwrap_or(false),
            transitions: flags.transitions || file.transitions.unwrap_or(false),
            scale,
            k,
            spill_threshold: flags.spill_threshold.or(file.spill_threshold),
            out: flags
                .out
                .clone()
                .or(file.out.map(|p| rebase(base, p)))
                .unwrap_or_else(|| "out".into()),
            threads,
        })
    }

    pub fn date_window(&self) -> Option<DateWindow> {
        self.window.map(|(a, b)| DateWindow { start: a, end: b })
    }

    /// Short digest of the effective settings plus command-specific
    /// arguments. Thread count and output directory are excluded so they
    /// cannot change output bytes.
    pub fn hash(&self, command: &str, extra: &serde_json::Value) -> String {
        let doc = serde_json::json!({ "command": command, "config": self, "args": extra });
        let digest = Sha256::digest(doc.to_string().as_bytes());
        digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
    }
}
