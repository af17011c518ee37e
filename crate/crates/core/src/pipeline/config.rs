//! Pipeline configuration.
//!
//! A run is described by one top-level TOML file listing per-event files.
//! Relative paths are resolved against the file they appear in. Every key
//! is optional except `events` and, per event, `label` and `inputs`.
//!
//! ```toml
//! output_dir = "out"              # default "out"
//! audit_date = "2012-04-01"       # default: today (UTC)
//! events = ["events/syria.toml"]
//!
//! [audit]
//! rounds = 3                      # 1..=30
//! spacing_hours = 48.0            # >= 0
//! concurrency = 8                 # 1..=256
//! per_host_rps = 1.0              # 0 disables rate limiting
//! timeout_secs = 30.0             # (0, 600]
//! max_redirects = 20              # 1..=100
//!
//! [soft404]
//! enabled = true
//! threshold = 0.9                 # (0, 1]
//! shingle = 4                     # 1..=16
//! seed = 0
//!
//! [memento]
//! endpoint = "http://timetravel.mementoweb.org/timemap/link/{uri}"
//! page_limit = 10                 # >= 1
//!
//! [transport]
//! mode = "replay"                 # replay | live | record
//! replay_file = "replay.json"     # required for replay and record
//! user_agent = "linkrot/0.1.0"
//! ```
//!
//! An event file:
//!
//! ```toml
//! label = "syria"
//! inputs = ["corpus.snap"]
//! format = "snap"                 # snap | uri-list
//! list_date = "2012-03-27"        # post date for uri-list inputs
//! initial_tag = "syria"           # omit to keep every URI-bearing post
//! stoplist = "stoplist.txt"       # default: the bundled data/stoplist.txt
//! expansion_k = 10
//! target_size = 1                 # selection-set size, >= 1
//! sample_fraction = 1.0           # (0, 1]
//! sample_seed = 0
//! centroids = ["2012-03-27"]      # overrides detection when non-empty
//! max_centroids = 2               # 1 or 2
//! min_separation_days = 14
//! ```
//!
//! `LINKROT_MEMENTO_ENDPOINT` and `LINKROT_CONCURRENCY` override the file.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Duration;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::analysis::DEFAULT_MIN_SEPARATION_DAYS;
use crate::canonical::DEFAULT_MAX_REDIRECTS;
use crate::liveness::{LivenessConfig, Soft404Config};
use crate::memento::{ArchiveConfig, Endpoint, DEFAULT_ENDPOINT, DEFAULT_PAGE_LIMIT};
use crate::schedule::RoundPlan;
use crate::transport::{LiveConfig, BODY_CAP};

pub const ENV_ENDPOINT: &str = "LINKROT_MEMENTO_ENDPOINT";
pub const ENV_CONCURRENCY: &str = "LINKROT_CONCURRENCY";

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("reading {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("parsing {path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("config field `{field}`: {message}")]
    Invalid { field: String, message: String },
}

fn invalid(field: &str, message: impl Into<String>) -> ConfigError {
    ConfigError::Invalid {
        field: field.to_string(),
        message: message.into(),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AuditSettings {
    pub rounds: u32,
    pub spacing_hours: f64,
    pub concurrency: usize,
    pub per_host_rps: f64,
    pub timeout_secs: f64,
    pub max_redirects: usize,
}

impl Default for AuditSettings {
    fn default() -> Self {
        AuditSettings {
            rounds: 3,
            spacing_hours: 48.0,
            concurrency: 8,
            per_host_rps: 1.0,
            timeout_secs: 30.0,
            max_redirects: DEFAULT_MAX_REDIRECTS,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Soft404Settings {
    pub enabled: bool,
    pub threshold: f64,
    pub shingle: usize,
    pub seed: u64,
}

impl Default for Soft404Settings {
    fn default() -> Self {
        Soft404Settings {
            enabled: true,
            threshold: 0.9,
            shingle: 4,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MementoSettings {
    pub endpoint: String,
    pub page_limit: usize,
}

impl Default for MementoSettings {
    fn default() -> Self {
        MementoSettings {
            endpoint: DEFAULT_ENDPOINT.to_string(),
            page_limit: DEFAULT_PAGE_LIMIT,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TransportMode {
    /// Answer only from the replay file; unknown requests are errors.
    #[default]
    Replay,
    Live,
    /// Live requests, saved to the replay file.
    Record,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TransportSettings {
    pub mode: TransportMode,
    pub replay_file: Option<PathBuf>,
    pub user_agent: String,
}

impl Default for TransportSettings {
    fn default() -> Self {
        TransportSettings {
            mode: TransportMode::Replay,
            replay_file: None,
            user_agent: LiveConfig::default().user_agent,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InputFormat {
    #[default]
    Snap,
    UriList,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EventConfig {
    pub label: String,
    pub inputs: Vec<PathBuf>,
    #[serde(default)]
    pub format: InputFormat,
    #[serde(default)]
    pub list_date: Option<NaiveDate>,
    #[serde(default)]
    pub initial_tag: Option<String>,
    #[serde(default)]
    pub stoplist: Option<PathBuf>,
    #[serde(default = "default_k")]
    pub expansion_k: usize,
    #[serde(default = "one")]
    pub target_size: usize,
    #[serde(default = "full")]
    pub sample_fraction: f64,
    #[serde(default)]
    pub sample_seed: u64,
    #[serde(default)]
    pub centroids: Vec<NaiveDate>,
    #[serde(default = "two")]
    pub max_centroids: usize,
    #[serde(default = "min_sep")]
    pub min_separation_days: i64,
}

fn default_k() -> usize {
    10
}
fn one() -> usize {
    1
}
fn two() -> usize {
    2
}
fn full() -> f64 {
    1.0
}
fn min_sep() -> i64 {
    DEFAULT_MIN_SEPARATION_DAYS
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawPipeline {
    #[serde(default)]
    output_dir: Option<PathBuf>,
    #[serde(default)]
    audit_date: Option<NaiveDate>,
    events: Vec<PathBuf>,
    #[serde(default)]
    audit: AuditSettings,
    #[serde(default)]
    soft404: Soft404Settings,
    #[serde(default)]
    memento: MementoSettings,
    #[serde(default)]
    transport: TransportSettings,
}

/// A fully resolved run: all paths absolute, overrides applied.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PipelineConfig {
    pub output_dir: PathBuf,
    pub audit_date: NaiveDate,
    pub events: Vec<EventConfig>,
    pub audit: AuditSettings,
    pub soft404: Soft404Settings,
    pub memento: MementoSettings,
    pub transport: TransportSettings,
}

/// Values given on the command line; they win over the file and environment.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Overrides {
    pub rounds: Option<u32>,
    pub spacing_hours: Option<f64>,
    pub concurrency: Option<usize>,
    pub per_host_rps: Option<f64>,
    pub timeout_secs: Option<f64>,
    pub endpoint: Option<String>,
    pub output_dir: Option<PathBuf>,
    pub mode: Option<TransportMode>,
}

fn read(path: &Path) -> Result<String, ConfigError> {
    fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn parse<T: for<'de> Deserialize<'de>>(path: &Path, text: &str) -> Result<T, ConfigError> {
    toml::from_str(text).map_err(|e| ConfigError::Parse {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

fn rebase(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

fn parent_of(path: &Path) -> PathBuf {
    path.parent()
        .filter(|p| !p.as_os_str().is_empty())
        .map(Path::to_path_buf)
        .unwrap_or_else(|| PathBuf::from("."))
}

impl EventConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let mut ev: EventConfig = parse(path, &read(path)?)?;
        let base = parent_of(path);
        ev.inputs = ev.inputs.iter().map(|p| rebase(&base, p)).collect();
        ev.stoplist = ev.stoplist.as_deref().map(|p| rebase(&base, p));
        Ok(ev)
    }
}

impl PipelineConfig {
    /// Loads the top-level file, its event files, then applies environment
    /// and command-line overrides and validates the result.
    pub fn load(path: &Path, overrides: &Overrides) -> Result<Self, ConfigError> {
        Self::load_with_env(path, overrides, |k| std::env::var(k).ok())
    }

    pub fn load_with_env(
        path: &Path,
        overrides: &Overrides,
        env: impl Fn(&str) -> Option<String>,
    ) -> Result<Self, ConfigError> {
        let raw: RawPipeline = parse(path, &read(path)?)?;
        let base = parent_of(path);
        let mut events = Vec::with_capacity(raw.events.len());
        for ev in &raw.events {
            events.push(EventConfig::load(&rebase(&base, ev))?);
        }
        let mut transport = raw.transport;
        transport.replay_file = transport.replay_file.as_deref().map(|p| rebase(&base, p));
        let mut cfg = PipelineConfig {
            output_dir: rebase(&base, raw.output_dir.as_deref().unwrap_or(Path::new("out"))),
            audit_date: raw.audit_date.unwrap_or_else(crate::analysis::today),
            events,
            audit: raw.audit,
            soft404: raw.soft404,
            memento: raw.memento,
            transport,
        };

        if let Some(ep) = env(ENV_ENDPOINT).filter(|s| !s.is_empty()) {
            cfg.memento.endpoint = ep;
        }
        if let Some(c) = env(ENV_CONCURRENCY).filter(|s| !s.is_empty()) {
            cfg.audit.concurrency = c
                .trim()
                .parse()
                .map_err(|_| invalid(ENV_CONCURRENCY, format!("not a positive integer: {c:?}")))?;
        }
        cfg.apply(overrides);
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(v) = o.rounds {
            self.audit.rounds = v;
        }
        if let Some(v) = o.spacing_hours {
            self.audit.spacing_hours = v;
        }
        if let Some(v) = o.concurrency {
            self.audit.concurrency = v;
        }
        if let Some(v) = o.per_host_rps {
            self.audit.per_host_rps = v;
        }
        if let Some(v) = o.timeout_secs {
            self.audit.timeout_secs = v;
        }
        if let Some(v) = &o.endpoint {
            self.memento.endpoint = v.clone();
        }
        if let Some(v) = &o.output_dir {
            self.output_dir = v.clone();
        }
        if let Some(v) = o.mode {
            self.transport.mode = v;
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let a = &self.audit;
        if !(1..=30).contains(&a.rounds) {
            return Err(invalid("audit.rounds", "must be in 1..=30"));
        }
        if !(a.spacing_hours.is_finite() && a.spacing_hours >= 0.0) {
            return Err(invalid("audit.spacing_hours", "must be >= 0"));
        }
        if !(1..=256).contains(&a.concurrency) {
            return Err(invalid("audit.concurrency", "must be in 1..=256"));
        }
        if !(a.per_host_rps.is_finite() && a.per_host_rps >= 0.0) {
            return Err(invalid("audit.per_host_rps", "must be >= 0"));
        }
        if !(a.timeout_secs > 0.0 && a.timeout_secs <= 600.0) {
            return Err(invalid("audit.timeout_secs", "must be in (0, 600]"));
        }
        if !(1..=100).contains(&a.max_redirects) {
            return Err(invalid("audit.max_redirects", "must be in 1..=100"));
        }
        let s = &self.soft404;
        if !(s.threshold > 0.0 && s.threshold <= 1.0) {
            return Err(invalid("soft404.threshold", "must be in (0, 1]"));
        }
        if !(1..=16).contains(&s.shingle) {
            return Err(invalid("soft404.shingle", "must be in 1..=16"));
        }
        Endpoint::new(&self.memento.endpoint).map_err(|e| invalid("memento.endpoint", e.to_string()))?;
        if self.memento.page_limit == 0 {
            return Err(invalid("memento.page_limit", "must be >= 1"));
        }
        match (&self.transport.replay_file, self.transport.mode) {
            (None, TransportMode::Replay | TransportMode::Record) => {
                return Err(invalid("transport.replay_file", "required in replay and record mode"))
            }
            (Some(p), TransportMode::Replay) if !p.is_file() => {
                return Err(invalid("transport.replay_file", format!("{} does not exist", p.display())))
            }
            _ => {}
        }

        if self.events.is_empty() {
            return Err(invalid("events", "at least one event is required"));
        }
        let mut labels = std::collections::HashSet::new();
        for ev in &self.events {
            let f = |name: &str| format!("{}.{name}", ev.label);
            if ev.label.is_empty() || !ev.label.chars().all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_') {
                return Err(invalid("label", format!("{:?} must be non-empty [A-Za-z0-9_-]", ev.label)));
            }
            if !labels.insert(ev.label.as_str()) {
                return Err(invalid("label", format!("duplicate event label {:?}", ev.label)));
            }
            if ev.inputs.is_empty() {
                return Err(invalid(&f("inputs"), "at least one input is required"));
            }
            for p in ev.inputs.iter().chain(&ev.stoplist) {
                if !p.is_file() {
                    return Err(invalid(&f("inputs"), format!("{} does not exist", p.display())));
                }
            }
            if ev.format == InputFormat::UriList && ev.list_date.is_none() {
                return Err(invalid(&f("list_date"), "required for uri-list inputs"));
            }
            if ev.target_size == 0 {
                return Err(invalid(&f("target_size"), "must be >= 1"));
            }
            if !(ev.sample_fraction > 0.0 && ev.sample_fraction <= 1.0) {
                return Err(invalid(&f("sample_fraction"), "must be in (0, 1]"));
            }
            if !(1..=2).contains(&ev.max_centroids) {
                return Err(invalid(&f("max_centroids"), "must be 1 or 2"));
            }
            if ev.centroids.len() > 2 {
                return Err(invalid(&f("centroids"), "at most two centroids"));
            }
            if ev.min_separation_days < 0 {
                return Err(invalid(&f("min_separation_days"), "must be >= 0"));
            }
        }
        Ok(())
    }

    pub fn event(&self, label: &str) -> Option<&EventConfig> {
        self.events.iter().find(|e| e.label == label)
    }

    pub fn plan(&self) -> RoundPlan {
        RoundPlan {
            rounds: self.audit.rounds,
            spacing: Duration::from_secs_f64(self.audit.spacing_hours * 3600.0),
            concurrency: self.audit.concurrency,
        }
    }

    pub fn liveness(&self) -> LivenessConfig {
        LivenessConfig {
            plan: self.plan(),
            max_redirects: self.audit.max_redirects,
            soft404: self.soft404.enabled.then(|| Soft404Config {
                threshold: self.soft404.threshold,
                shingle: self.soft404.shingle,
                body_cap: BODY_CAP,
                seed: self.soft404.seed,
                max_redirects: self.audit.max_redirects,
            }),
        }
    }

    pub fn archive(&self) -> ArchiveConfig {
        ArchiveConfig {
            plan: self.plan(),
            endpoint: Endpoint::new(&self.memento.endpoint).expect("validated endpoint"),
            page_limit: self.memento.page_limit,
        }
    }

    pub fn live_config(&self) -> LiveConfig {
        LiveConfig {
            timeout: Duration::from_secs_f64(self.audit.timeout_secs),
            user_agent: self.transport.user_agent.clone(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn setup(top: &str, event: &str) -> (tempfile::TempDir, PathBuf) {
        let dir = tempfile::tempdir().unwrap();
        fs::create_dir(dir.path().join("events")).unwrap();
        fs::write(dir.path().join("events/e.toml"), event).unwrap();
        fs::write(dir.path().join("events/in.snap"), "").unwrap();
        fs::write(dir.path().join("replay.json"), "{}").unwrap();
        let top_path = dir.path().join("pipeline.toml");
        fs::write(&top_path, top).unwrap();
        (dir, top_path)
    }

    const TOP: &str = "events = [\"events/e.toml\"]\naudit_date = \"2012-04-01\"\n[transport]\nreplay_file = \"replay.json\"\n";

    #[test]
    fn defaults_and_paths() {
        let (dir, path) = setup(TOP, "label = \"e\"\ninputs = [\"in.snap\"]\n");
        let cfg = PipelineConfig::load_with_env(&path, &Overrides::default(), |_| None).unwrap();
        assert_eq!(cfg.audit, AuditSettings::default());
        assert_eq!(cfg.events[0].inputs[0], dir.path().join("events/in.snap"));
        assert_eq!(cfg.output_dir, dir.path().join("out"));
        assert_eq!(cfg.plan().spacing, Duration::from_secs(48 * 3600));
        assert_eq!(cfg.events[0].target_size, 1);
    }

    #[test]
    fn env_then_flags() {
        let (_dir, path) = setup(TOP, "label = \"e\"\ninputs = [\"in.snap\"]\n");
        let env = |k: &str| match k {
            ENV_CONCURRENCY => Some("3".to_string()),
            ENV_ENDPOINT => Some("http://agg/{uri}".to_string()),
            _ => None,
        };
        let cfg = PipelineConfig::load_with_env(&path, &Overrides::default(), env).unwrap();
        assert_eq!(cfg.audit.concurrency, 3);
        assert_eq!(cfg.memento.endpoint, "http://agg/{uri}");
        let flags = Overrides {
            concurrency: Some(5),
            ..Default::default()
        };
        assert_eq!(PipelineConfig::load_with_env(&path, &flags, env).unwrap().audit.concurrency, 5);
    }

    #[test]
    fn errors_name_the_field() {
        let (_dir, path) = setup(TOP, "label = \"e\"\ninputs = [\"missing.snap\"]\n");
        let err = PipelineConfig::load_with_env(&path, &Overrides::default(), |_| None).unwrap_err();
        assert!(err.to_string().contains("e.inputs"), "{err}");

        let (_dir, path) = setup(TOP, "label = \"e\"\ninputs = [\"in.snap\"]\nsample_fraction = 1.5\n");
        let err = PipelineConfig::load_with_env(&path, &Overrides::default(), |_| None).unwrap_err();
        assert!(err.to_string().contains("e.sample_fraction"), "{err}");

        let (_dir, path) = setup(TOP, "label = \"e\"\ninputs = [\"in.snap\"]\n");
        let flags = Overrides {
            rounds: Some(0),
            ..Default::default()
        };
        let err = PipelineConfig::load_with_env(&path, &flags, |_| None).unwrap_err();
        assert!(err.to_string().contains("audit.rounds"), "{err}");

        let err = PipelineConfig::load_with_env(&path, &Overrides::default(), |k| {
            (k == ENV_ENDPOINT).then(|| "http://no-placeholder/".to_string())
        })
        .unwrap_err();
        assert!(err.to_string().contains("memento.endpoint"), "{err}");

        let (_dir, path) = setup(&format!("{TOP}bogus = 1\n"), "label = \"e\"\ninputs = [\"in.snap\"]\n");
        let err = PipelineConfig::load_with_env(&path, &Overrides::default(), |_| None).unwrap_err();
        assert!(err.to_string().contains("bogus"), "{err}");
    }
}
