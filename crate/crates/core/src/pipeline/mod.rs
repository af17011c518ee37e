//! End-to-end pipeline with on-disk intermediate artifacts.
//!
//! Per-event stages write into `<output_dir>/events/<label>/`; the
//! cross-event `analyze` and `report` stages write into `<output_dir>/`.
//!
//! | stage          | reads                           | writes                                      |
//! |----------------|---------------------------------|---------------------------------------------|
//! | ingest         | event inputs                    | posts.jsonl, skipped.csv                    |
//! | expand         | posts.jsonl, stoplist           | tag_counts.csv, tag_pairs.csv, expansion.csv |
//! | filter         | posts.jsonl, stoplist           | selection.txt, filtered.jsonl               |
//! | sample         | filtered.jsonl                  | sample.jsonl                                |
//! | resolve        | sample.jsonl                    | resolved.jsonl, aliases.csv, resources.json |
//! | audit-live     | resources.json                  | live.jsonl                                  |
//! | audit-archive  | resources.json                  | archive.jsonl                               |
//! | analyze        | sample, resources, live, archive | events.csv, split.csv, series.csv, model.json, analysis.json |
//! | report         | analysis.json                   | report.md                                   |

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::fs::{self, File};
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use chrono::{DateTime, NaiveDate, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::analysis::{self, AnalysisError, CentroidSplit, DatedResource, EventStats, ModelReport};
use crate::canonical::{dedupe, resolve_all, write_aliases_csv, ResolveOptions, UriRecord};
use crate::clock::{Clock, SystemClock, VirtualClock};
use crate::ingest::{parse_snap_stream, parse_uri_list, Corpus};
use crate::liveness::{audit_rounds, AuditError, LivenessVerdict};
use crate::memento::{archive_audit, ArchiveVerdict};
use crate::politeness::HostGate;
use crate::results::Journal;
use crate::tagstats::{
    expand_tags, filter_by_selection_set, grow_selection_set, read_stoplist, sample, SelectionSet, TagError,
    TagFrequencyTable,
};
use crate::transport::{LiveTransport, RecordingTransport, ReplayError, ReplayStore, Transport, TransportError};

pub mod config;
pub mod manifest;
mod report;

pub use config::{EventConfig, Overrides, PipelineConfig, TransportMode};
pub use manifest::{InputDigest, Manifest};
pub use report::render_report;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Stage {
    Ingest,
    Expand,
    Filter,
    Sample,
    Resolve,
    AuditLive,
    AuditArchive,
    Analyze,
    Report,
}

impl Stage {
    pub const ALL: [Stage; 9] = [
        Stage::Ingest,
        Stage::Expand,
        Stage::Filter,
        Stage::Sample,
        Stage::Resolve,
        Stage::AuditLive,
        Stage::AuditArchive,
        Stage::Analyze,
        Stage::Report,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Ingest => "ingest",
            Stage::Expand => "expand",
            Stage::Filter => "filter",
            Stage::Sample => "sample",
            Stage::Resolve => "resolve",
            Stage::AuditLive => "audit-live",
            Stage::AuditArchive => "audit-archive",
            Stage::Analyze => "analyze",
            Stage::Report => "report",
        }
    }

    pub fn per_event(self) -> bool {
        !matches!(self, Stage::Analyze | Stage::Report)
    }

    /// Stages whose outputs this one reads.
    pub fn upstream(self) -> &'static [Stage] {
        match self {
            Stage::Ingest => &[],
            Stage::Expand | Stage::Filter => &[Stage::Ingest],
            Stage::Sample => &[Stage::Filter],
            Stage::Resolve => &[Stage::Sample],
            Stage::AuditLive | Stage::AuditArchive => &[Stage::Resolve],
            Stage::Analyze => &[Stage::Sample, Stage::Resolve, Stage::AuditLive, Stage::AuditArchive],
            Stage::Report => &[Stage::Analyze],
        }
    }

    fn uses_network(self) -> bool {
        matches!(self, Stage::Resolve | Stage::AuditLive | Stage::AuditArchive)
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Stage {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        Stage::ALL
            .into_iter()
            .find(|st| st.name() == s || (s == "expand-tags" && *st == Stage::Expand))
            .ok_or_else(|| format!("unknown stage {s:?}"))
    }
}

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Config(#[from] config::ConfigError),
    #[error("stage `{stage}` needs {path}; run stage `{requires}` first")]
    MissingArtifact {
        stage: Stage,
        requires: Stage,
        path: PathBuf,
    },
    #[error("unknown event {0:?}")]
    UnknownEvent(String),
    #[error("{context}: {source}")]
    Io {
        context: String,
        source: io::Error,
    },
    #[error("{path}: {message}")]
    Artifact { path: PathBuf, message: String },
    #[error(transparent)]
    Tags(#[from] TagError),
    #[error(transparent)]
    Replay(#[from] ReplayError),
    #[error("no recorded response for {uri} (request {method} {url}); live access is disabled in replay mode")]
    NotRecorded { uri: String, method: String, url: String },
    #[error(transparent)]
    Transport(TransportError),
    #[error(transparent)]
    Analysis(#[from] AnalysisError),
    #[error("building HTTP client: {0}")]
    Client(String),
}

fn io_err(context: impl fmt::Display) -> impl FnOnce(io::Error) -> PipelineError {
    let context = context.to_string();
    move |source| PipelineError::Io { context, source }
}

fn transport_err(uri: &str, err: TransportError) -> PipelineError {
    match err {
        TransportError::NotRecorded { method, url } => PipelineError::NotRecorded {
            uri: uri.to_string(),
            method: method.to_string(),
            url,
        },
        other => PipelineError::Transport(other),
    }
}

/// What happened to one stage in a run.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct StageRun {
    pub stage: Stage,
    pub event: Option<String>,
    pub ran: bool,
}

impl fmt::Display for StageRun {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let verb = if self.ran { "ran" } else { "up to date" };
        match &self.event {
            Some(e) => write!(f, "{:<14} {:<12} {verb}", self.stage.name(), e),
            None => write!(f, "{:<14} {:<12} {verb}", self.stage.name(), "-"),
        }
    }
}

/// A resource to audit: the canonical URI of one alias group.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Resource {
    pub uri: String,
    pub shared_on: NaiveDate,
    pub resolved: bool,
    pub members: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Resources {
    /// URI occurrences in the sampled posts, before alias elimination.
    pub all: usize,
    pub resources: Vec<Resource>,
}

impl Resources {
    pub fn uris(&self) -> Vec<String> {
        self.resources.iter().map(|r| r.uri.clone()).collect()
    }

    pub fn dated(&self) -> Vec<DatedResource> {
        self.resources
            .iter()
            .map(|r| DatedResource {
                uri: r.uri.clone(),
                shared_on: r.shared_on,
            })
            .collect()
    }
}

/// Everything the report is rendered from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Analysis {
    pub audit_date: NaiveDate,
    pub events: Vec<EventStats>,
    pub splits: Vec<CentroidSplit>,
    pub model: ModelReport,
}

enum Net {
    Replay(ReplayStore),
    Live(LiveTransport),
    Record(RecordingTransport<LiveTransport>, PathBuf),
}

impl Net {
    fn transport(&self) -> &dyn Transport {
        match self {
            Net::Replay(s) => s,
            Net::Live(t) => t,
            Net::Record(t, _) => t,
        }
    }
}

/// Runs stages against one configuration.
pub struct Pipeline {
    cfg: PipelineConfig,
    net: Option<Net>,
    force: bool,
    /// Overrides the transport built from the configuration.
    custom: Option<Box<dyn Transport>>,
}

impl Pipeline {
    pub fn new(cfg: PipelineConfig) -> Self {
        Pipeline {
            cfg,
            net: None,
            force: false,
            custom: None,
        }
    }

    /// Runs every requested stage even when it is up to date.
    pub fn force(mut self, force: bool) -> Self {
        self.force = force;
        self
    }

    /// Uses `transport` for all network stages instead of the configured mode.
    pub fn with_transport(mut self, transport: Box<dyn Transport>) -> Self {
        self.custom = Some(transport);
        self
    }

    pub fn config(&self) -> &PipelineConfig {
        &self.cfg
    }

    pub fn event_dir(&self, label: &str) -> PathBuf {
        self.cfg.output_dir.join("events").join(label)
    }

    fn manifest_path(&self) -> PathBuf {
        self.cfg.output_dir.join("manifest.json")
    }

    /// Runs the whole pipeline, skipping stages that are up to date.
    pub fn run_all(&mut self) -> Result<Vec<StageRun>, PipelineError> {
        self.run(&Stage::ALL, None)
    }

    /// Runs `stages` (in pipeline order) for every event or only `event`.
    pub fn run(&mut self, stages: &[Stage], event: Option<&str>) -> Result<Vec<StageRun>, PipelineError> {
        if let Some(e) = event {
            if self.cfg.event(e).is_none() {
                return Err(PipelineError::UnknownEvent(e.to_string()));
            }
        }
        fs::create_dir_all(&self.cfg.output_dir).map_err(io_err(self.cfg.output_dir.display()))?;
        let mut manifest = Manifest::load(&self.manifest_path()).map_err(io_err("reading manifest"))?;
        let mut stages = stages.to_vec();
        stages.sort();
        stages.dedup();

        let labels: Vec<String> = self
            .cfg
            .events
            .iter()
            .filter(|e| event.is_none_or(|l| l == e.label))
            .map(|e| e.label.clone())
            .collect();
        let mut ran: HashMap<(Stage, Option<String>), bool> = HashMap::new();
        let mut runs = Vec::new();
        for stage in stages {
            let targets: Vec<Option<String>> = if stage.per_event() {
                labels.iter().cloned().map(Some).collect()
            } else {
                vec![None]
            };
            for target in targets {
                let upstream_ran = stage.upstream().iter().any(|up| match &target {
                    Some(_) => ran.get(&(*up, target.clone())).copied().unwrap_or(false),
                    None => ran.iter().any(|((s, _), r)| s == up && *r),
                });
                let did_run = self.run_stage(stage, target.as_deref(), &mut manifest, upstream_ran)?;
                ran.insert((stage, target.clone()), did_run);
                runs.push(StageRun {
                    stage,
                    event: target,
                    ran: did_run,
                });
            }
        }
        self.flush_recording()?;
        Ok(runs)
    }

    fn flush_recording(&self) -> Result<(), PipelineError> {
        if let Some(Net::Record(rec, path)) = &self.net {
            rec.snapshot().save(path).map_err(io_err(path.display()))?;
        }
        Ok(())
    }

    fn net(&mut self) -> Result<&dyn Transport, PipelineError> {
        if let Some(t) = &self.custom {
            return Ok(t.as_ref());
        }
        if self.net.is_none() {
            let t = &self.cfg.transport;
            let replay_path = t.replay_file.clone();
            self.net = Some(match t.mode {
                TransportMode::Replay => Net::Replay(ReplayStore::load(replay_path.expect("validated replay file"))?),
                TransportMode::Live => Net::Live(
                    LiveTransport::new(&self.cfg.live_config()).map_err(|e| PipelineError::Client(e.to_string()))?,
                ),
                TransportMode::Record => {
                    let path = replay_path.expect("validated replay file");
                    let existing = if path.is_file() { ReplayStore::load(&path)? } else { ReplayStore::new() };
                    let live =
                        LiveTransport::new(&self.cfg.live_config()).map_err(|e| PipelineError::Client(e.to_string()))?;
                    Net::Record(RecordingTransport::with_store(live, existing), path)
                }
            });
        }
        Ok(self.net.as_ref().expect("just set").transport())
    }

    fn deterministic(&self) -> bool {
        self.custom.is_some() || self.cfg.transport.mode == TransportMode::Replay
    }

    fn clock(&self) -> Box<dyn Clock> {
        if self.deterministic() {
            Box::new(VirtualClock::starting_at(start_of(self.cfg.audit_date)))
        } else {
            Box::new(SystemClock)
        }
    }

    fn gate(&self) -> HostGate {
        if self.deterministic() || self.cfg.audit.per_host_rps == 0.0 {
            HostGate::unrestricted()
        } else {
            HostGate::new(self.cfg.audit.per_host_rps)
        }
    }

    fn inputs(&self, stage: Stage, label: Option<&str>) -> Vec<(PathBuf, Stage)> {
        let ev = |name: &str| self.event_dir(label.expect("per-event stage")).join(name);
        match stage {
            Stage::Ingest => vec![],
            Stage::Expand | Stage::Filter => vec![(ev("posts.jsonl"), Stage::Ingest)],
            Stage::Sample => vec![(ev("filtered.jsonl"), Stage::Filter)],
            Stage::Resolve => vec![(ev("sample.jsonl"), Stage::Sample)],
            Stage::AuditLive | Stage::AuditArchive => vec![(ev("resources.json"), Stage::Resolve)],
            Stage::Analyze => {
                let mut v = Vec::new();
                for e in &self.cfg.events {
                    let d = self.event_dir(&e.label);
                    v.push((d.join("sample.jsonl"), Stage::Sample));
                    v.push((d.join("resources.json"), Stage::Resolve));
                    v.push((d.join("live.jsonl"), Stage::AuditLive));
                    v.push((d.join("archive.jsonl"), Stage::AuditArchive));
                }
                v
            }
            Stage::Report => vec![(self.cfg.output_dir.join("analysis.json"), Stage::Analyze)],
        }
    }

    fn outputs(&self, stage: Stage, label: Option<&str>) -> Vec<PathBuf> {
        let names: &[&str] = match stage {
            Stage::Ingest => &["posts.jsonl", "skipped.csv"],
            Stage::Expand => &["tag_counts.csv", "tag_pairs.csv", "expansion.csv"],
            Stage::Filter => &["selection.txt", "filtered.jsonl"],
            Stage::Sample => &["sample.jsonl"],
            Stage::Resolve => &["resolved.jsonl", "aliases.csv", "resources.json"],
            Stage::AuditLive => &["live.jsonl"],
            Stage::AuditArchive => &["archive.jsonl"],
            Stage::Analyze => &["events.csv", "split.csv", "series.csv", "model.json", "analysis.json"],
            Stage::Report => &["report.md"],
        };
        let dir = match label {
            Some(l) => self.event_dir(l),
            None => self.cfg.output_dir.clone(),
        };
        names.iter().map(|n| dir.join(n)).collect()
    }

    fn digest(&self, stage: Stage, label: Option<&str>) -> Result<String, PipelineError> {
        let mut d = InputDigest::new(stage.name());
        for (path, _) in self.inputs(stage, label) {
            d.file(&path).map_err(io_err(path.display()))?;
        }
        if let Some(l) = label {
            let ev = self.cfg.event(l).expect("known event");
            match stage {
                Stage::Ingest => {
                    d.json("format", &ev.format).json("list_date", &ev.list_date);
                    for p in &ev.inputs {
                        d.file(p).map_err(io_err(p.display()))?;
                    }
                }
                Stage::Expand | Stage::Filter => {
                    d.json("initial", &ev.initial_tag)
                        .json("k", &ev.expansion_k)
                        .json("target", &ev.target_size);
                    if let Some(p) = &ev.stoplist {
                        d.file(p).map_err(io_err(p.display()))?;
                    }
                }
                Stage::Sample => {
                    d.json("fraction", &ev.sample_fraction).json("seed", &ev.sample_seed);
                }
                _ => {}
            }
        }
        if stage.uses_network() {
            d.json("audit", &self.cfg.audit)
                .json("soft404", &self.cfg.soft404)
                .json("memento", &self.cfg.memento)
                .json("mode", &self.cfg.transport.mode)
                .json("audit_date", &self.cfg.audit_date);
            if self.cfg.transport.mode == TransportMode::Replay {
                if let Some(p) = &self.cfg.transport.replay_file {
                    d.file(p).map_err(io_err(p.display()))?;
                }
            }
        }
        if stage == Stage::Analyze {
            d.json("audit_date", &self.cfg.audit_date);
            for e in &self.cfg.events {
                d.json("event", &(&e.label, &e.centroids, e.max_centroids, e.min_separation_days));
            }
        }
        Ok(d.finish())
    }

    fn run_stage(
        &mut self,
        stage: Stage,
        label: Option<&str>,
        manifest: &mut Manifest,
        upstream_ran: bool,
    ) -> Result<bool, PipelineError> {
        for (path, requires) in self.inputs(stage, label) {
            if !path.is_file() {
                return Err(PipelineError::MissingArtifact {
                    stage,
                    requires,
                    path,
                });
            }
        }
        let key = match label {
            Some(l) => format!("{l}/{stage}"),
            None => stage.name().to_string(),
        };
        let digest = self.digest(stage, label)?;
        let root = self.cfg.output_dir.clone();
        if !self.force && !upstream_ran && manifest.is_current(&key, &digest, &root) {
            log::info!("{key}: up to date");
            return Ok(false);
        }
        log::info!("{key}: running");
        manifest.forget(&key);
        manifest.save(&self.manifest_path()).map_err(io_err("writing manifest"))?;
        if let Some(l) = label {
            let dir = self.event_dir(l);
            fs::create_dir_all(&dir).map_err(io_err(dir.display()))?;
        }
        match (stage, label) {
            (Stage::Ingest, Some(l)) => self.ingest(l)?,
            (Stage::Expand, Some(l)) => self.expand(l)?,
            (Stage::Filter, Some(l)) => self.filter(l)?,
            (Stage::Sample, Some(l)) => self.sample(l)?,
            (Stage::Resolve, Some(l)) => self.resolve(l)?,
            (Stage::AuditLive, Some(l)) => self.audit_live(l, &digest)?,
            (Stage::AuditArchive, Some(l)) => self.audit_archive(l, &digest)?,
            (Stage::Analyze, None) => self.analyze()?,
            (Stage::Report, None) => self.report()?,
            _ => unreachable!("stage/target mismatch"),
        }
        manifest.record(&key, digest, &self.outputs(stage, label), &root);
        manifest.save(&self.manifest_path()).map_err(io_err("writing manifest"))?;
        Ok(true)
    }

    fn ingest(&self, label: &str) -> Result<(), PipelineError> {
        let ev = self.cfg.event(label).expect("known event");
        let mut corpus = Corpus::new(label, Vec::new());
        let mut skipped = Vec::new();
        for path in &ev.inputs {
            let reader = BufReader::new(File::open(path).map_err(io_err(path.display()))?);
            let source = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
            let got = match ev.format {
                config::InputFormat::Snap => parse_snap_stream(reader, &source),
                config::InputFormat::UriList => {
                    parse_uri_list(reader, start_of(ev.list_date.expect("validated")), &source)
                }
            }
            .map_err(io_err(path.display()))?;
            corpus.posts.extend(got.corpus.posts);
            skipped.extend(got.skipped.into_iter().map(|s| (source.clone(), s)));
        }
        let dir = self.event_dir(label);
        write_corpus(&corpus, &dir.join("posts.jsonl"))?;
        let path = dir.join("skipped.csv");
        let mut w = csv::Writer::from_path(&path).map_err(|e| csv_err(&path, e))?;
        w.write_record(["source", "line", "reason"]).map_err(|e| csv_err(&path, e))?;
        for (source, s) in &skipped {
            w.write_record([source.as_str(), &s.line.to_string(), &s.reason])
                .map_err(|e| csv_err(&path, e))?;
        }
        w.flush().map_err(io_err(path.display()))?;
        log::info!("{label}: ingested {} posts, skipped {}", corpus.len(), skipped.len());
        Ok(())
    }

    fn stoplist(&self, ev: &EventConfig) -> Result<std::collections::BTreeSet<String>, PipelineError> {
        match &ev.stoplist {
            Some(p) => read_stoplist(BufReader::new(File::open(p).map_err(io_err(p.display()))?))
                .map_err(io_err(p.display())),
            None => read_stoplist(crate::tagstats::DEFAULT_STOPLIST.as_bytes()).map_err(io_err("default stoplist")),
        }
    }

    fn expand(&self, label: &str) -> Result<(), PipelineError> {
        let ev = self.cfg.event(label).expect("known event");
        let dir = self.event_dir(label);
        let corpus = read_corpus(&dir.join("posts.jsonl"))?;
        let table = TagFrequencyTable::from_corpus_sharded(&corpus, rayon::current_num_threads());
        let counts = dir.join("tag_counts.csv");
        table
            .write_counts_csv(create(&counts)?)
            .map_err(|e| csv_err(&counts, e))?;
        let pairs = dir.join("tag_pairs.csv");
        table.write_cooccur_csv(create(&pairs)?).map_err(|e| csv_err(&pairs, e))?;

        let expansion = match &ev.initial_tag {
            Some(tag) => expand_tags(&table, tag, &self.stoplist(ev)?, ev.expansion_k)?,
            None => Vec::new(),
        };
        let path = dir.join("expansion.csv");
        let mut w = csv::Writer::from_writer(create(&path)?);
        w.write_record(["tag", "frequency"]).map_err(|e| csv_err(&path, e))?;
        for (tag, n) in &expansion {
            w.write_record([tag.as_str(), &n.to_string()]).map_err(|e| csv_err(&path, e))?;
        }
        w.flush().map_err(io_err(path.display()))?;
        Ok(())
    }

    fn filter(&self, label: &str) -> Result<(), PipelineError> {
        let ev = self.cfg.event(label).expect("known event");
        let dir = self.event_dir(label);
        let corpus = read_corpus(&dir.join("posts.jsonl"))?;
        let (tags, filtered) = match &ev.initial_tag {
            Some(tag) => {
                let seed = SelectionSet::new(tag, self.stoplist(ev)?);
                let growth = grow_selection_set(&corpus, seed, ev.target_size)?;
                if growth.stopped_early {
                    log::warn!(
                        "{label}: selection set stopped at {} tags (target {})",
                        growth.selection.len(),
                        ev.target_size
                    );
                }
                let filtered = filter_by_selection_set(&corpus, &growth.selection, true);
                (growth.selection.tags().to_vec(), filtered)
            }
            None => {
                let posts = corpus.posts.iter().filter(|p| !p.uris.is_empty()).cloned().collect();
                (Vec::new(), Corpus::new(corpus.source_label.clone(), posts))
            }
        };
        let sel = dir.join("selection.txt");
        let text: String = tags.iter().map(|t| format!("{t}\n")).collect();
        fs::write(&sel, text).map_err(io_err(sel.display()))?;
        write_corpus(&filtered, &dir.join("filtered.jsonl"))?;
        log::info!("{label}: {} of {} posts kept by [{}]", filtered.len(), corpus.len(), tags.join(" & "));
        Ok(())
    }

    fn sample(&self, label: &str) -> Result<(), PipelineError> {
        let ev = self.cfg.event(label).expect("known event");
        let dir = self.event_dir(label);
        let corpus = read_corpus(&dir.join("filtered.jsonl"))?;
        let sampled = sample(&corpus, ev.sample_fraction, ev.sample_seed)?;
        write_corpus(&sampled, &dir.join("sample.jsonl"))
    }

    fn resolve(&mut self, label: &str) -> Result<(), PipelineError> {
        let dir = self.event_dir(label);
        let corpus = read_corpus(&dir.join("sample.jsonl"))?;
        let mut first_seen: BTreeMap<&str, NaiveDate> = BTreeMap::new();
        let mut originals: Vec<String> = Vec::new();
        let mut all = 0;
        for post in &corpus.posts {
            let day = post.created_at.date_naive();
            for uri in &post.uris {
                all += 1;
                match first_seen.get_mut(uri.as_str()) {
                    Some(d) => *d = (*d).min(day),
                    None => {
                        first_seen.insert(uri, day);
                        originals.push(uri.clone());
                    }
                }
            }
        }
        let opts = ResolveOptions {
            max_redirects: self.cfg.audit.max_redirects,
            round: 1,
        };
        let at = self.clock().now();
        let gate = self.gate();
        let concurrency = self.cfg.audit.concurrency;
        let transport = self.net()?;
        let records = match resolve_all(&originals, transport, &opts, at, concurrency, &gate) {
            Ok(r) => r,
            Err(err) => {
                let uri = failing_uri(&originals, &err);
                return Err(transport_err(&uri, err));
            }
        };
        write_jsonl(&dir.join("resolved.jsonl"), &records)?;
        let groups = dedupe(&records);
        let aliases = dir.join("aliases.csv");
        write_aliases_csv(&groups, create(&aliases)?).map_err(|e| csv_err(&aliases, e))?;

        let resources = groups
            .iter()
            .map(|g| Resource {
                uri: g.final_uri.clone(),
                shared_on: g.members.iter().filter_map(|m| first_seen.get(m.as_str())).min().copied().expect("member seen"),
                resolved: g.resolved,
                members: g.members.iter().cloned().collect(),
            })
            .collect();
        let resources = Resources { all, resources };
        write_json(&dir.join("resources.json"), &resources)?;
        log::info!("{label}: {all} URIs, {} unique", resources.resources.len());
        Ok(())
    }

    fn audit_live(&mut self, label: &str, digest: &str) -> Result<(), PipelineError> {
        let dir = self.event_dir(label);
        let uris = read_resources(&dir.join("resources.json"))?.uris();
        let journal_path = dir.join(format!("live.{}.journal.jsonl", &digest[..12]));
        let (journal, recovered) = Journal::open(&journal_path).map_err(io_err(journal_path.display()))?;
        let cfg = self.cfg.liveness();
        let clock = self.clock();
        let gate = self.gate();
        let transport = self.net()?;
        let verdicts = audit_rounds(&uris, transport, &cfg, clock.as_ref(), &gate, recovered.live, |uri, o| {
            journal.append_live(uri, o).map_err(AuditError::from)
        })
        .map_err(|e| audit_err(&uris, e))?;
        write_jsonl(&dir.join("live.jsonl"), &verdicts)?;
        drop(journal);
        fs::remove_file(&journal_path).map_err(io_err(journal_path.display()))?;
        Ok(())
    }

    fn audit_archive(&mut self, label: &str, digest: &str) -> Result<(), PipelineError> {
        let dir = self.event_dir(label);
        let uris = read_resources(&dir.join("resources.json"))?.uris();
        let journal_path = dir.join(format!("archive.{}.journal.jsonl", &digest[..12]));
        let (journal, recovered) = Journal::open(&journal_path).map_err(io_err(journal_path.display()))?;
        let cfg = self.cfg.archive();
        let clock = self.clock();
        let gate = self.gate();
        let transport = self.net()?;
        let verdicts = archive_audit(&uris, transport, &cfg, clock.as_ref(), &gate, recovered.archive, |uri, o| {
            journal.append_archive(uri, o).map_err(AuditError::from)
        })
        .map_err(|e| audit_err(&uris, e))?;
        write_jsonl(&dir.join("archive.jsonl"), &verdicts)?;
        drop(journal);
        fs::remove_file(&journal_path).map_err(io_err(journal_path.display()))?;
        Ok(())
    }

    /// Computes the analysis from the per-event artifacts without writing anything.
    pub fn compute_analysis(&self) -> Result<Analysis, PipelineError> {
        let mut events = Vec::new();
        let mut splits = Vec::new();
        for ev in &self.cfg.events {
            let dir = self.event_dir(&ev.label);
            let corpus = read_corpus(&dir.join("sample.jsonl"))?;
            let resources = read_resources(&dir.join("resources.json"))?;
            let live: Vec<LivenessVerdict> = read_jsonl(&dir.join("live.jsonl"))?;
            let archive: Vec<ArchiveVerdict> = read_jsonl(&dir.join("archive.jsonl"))?;
            events.push(analysis::contingency(&ev.label, resources.all, &live, &archive)?);

            let centroids = if ev.centroids.is_empty() {
                analysis::detect_centroids(&analysis::daily_counts(&corpus), ev.max_centroids, ev.min_separation_days)
            } else {
                ev.centroids.clone()
            };
            let dated = resources.dated();
            let split = analysis::split_by_centroid(&ev.label, &dated, &centroids).with_stats(&dated, &live, &archive)?;
            splits.push(split);
        }
        let model = analysis::fit_models(&splits, self.cfg.audit_date);
        Ok(Analysis {
            audit_date: self.cfg.audit_date,
            events,
            splits,
            model,
        })
    }

    fn analyze(&self) -> Result<(), PipelineError> {
        let result = self.compute_analysis()?;
        let out = &self.cfg.output_dir;

        let path = out.join("events.csv");
        analysis::write_events_csv(&result.events, create(&path)?).map_err(|e| csv_err(&path, e))?;
        let path = out.join("split.csv");
        analysis::write_split_csv(&result.splits, result.audit_date, create(&path)?).map_err(|e| csv_err(&path, e))?;

        let mut series = Vec::new();
        for ev in &self.cfg.events {
            let corpus = read_corpus(&self.event_dir(&ev.label).join("sample.jsonl"))?;
            series.push((ev.label.clone(), analysis::daily_counts(&corpus)));
        }
        let path = out.join("series.csv");
        analysis::write_series_csv(&series, create(&path)?).map_err(|e| csv_err(&path, e))?;

        write_json(&out.join("model.json"), &result.model)?;
        write_json(&out.join("analysis.json"), &result)
    }

    fn report(&self) -> Result<(), PipelineError> {
        let path = self.cfg.output_dir.join("analysis.json");
        let text = fs::read_to_string(&path).map_err(io_err(path.display()))?;
        let result: Analysis = serde_json::from_str(&text).map_err(|e| PipelineError::Artifact {
            path: path.clone(),
            message: e.to_string(),
        })?;
        let out = self.cfg.output_dir.join("report.md");
        fs::write(&out, render_report(&result)).map_err(io_err(out.display()))
    }
}

fn audit_err(uris: &[String], err: AuditError) -> PipelineError {
    match err {
        AuditError::Transport(t) => {
            let uri = failing_uri(uris, &t);
            transport_err(&uri, t)
        }
        AuditError::Journal(e) => PipelineError::Io {
            context: "writing audit journal".into(),
            source: e,
        },
    }
}

/// Best guess at which input URI a transport error came from.
fn failing_uri(uris: &[String], err: &TransportError) -> String {
    let url = match err {
        TransportError::NotRecorded { url, .. } | TransportError::Network { url, .. } => url,
    };
    uris.iter()
        .find(|u| *u == url)
        .or_else(|| {
            let host = crate::politeness::host_of(url);
            uris.iter().find(|u| crate::politeness::host_of(u) == host)
        })
        .cloned()
        .unwrap_or_else(|| url.clone())
}

fn csv_err(path: &Path, e: csv::Error) -> PipelineError {
    PipelineError::Artifact {
        path: path.to_path_buf(),
        message: e.to_string(),
    }
}

fn create(path: &Path) -> Result<BufWriter<File>, PipelineError> {
    Ok(BufWriter::new(File::create(path).map_err(io_err(path.display()))?))
}

fn write_corpus(corpus: &Corpus, path: &Path) -> Result<(), PipelineError> {
    let mut w = create(path)?;
    corpus.write_jsonl(&mut w).map_err(io_err(path.display()))?;
    w.flush().map_err(io_err(path.display()))
}

fn read_corpus(path: &Path) -> Result<Corpus, PipelineError> {
    let f = File::open(path).map_err(io_err(path.display()))?;
    Corpus::read_jsonl(BufReader::new(f)).map_err(io_err(path.display()))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), PipelineError> {
    let text = serde_json::to_string_pretty(value).expect("serializable artifact");
    fs::write(path, text + "\n").map_err(io_err(path.display()))
}

fn read_resources(path: &Path) -> Result<Resources, PipelineError> {
    let text = fs::read_to_string(path).map_err(io_err(path.display()))?;
    serde_json::from_str(&text).map_err(|e| PipelineError::Artifact {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

pub fn write_jsonl<T: Serialize>(path: &Path, items: &[T]) -> Result<(), PipelineError> {
    let mut w = create(path)?;
    for item in items {
        serde_json::to_writer(&mut w, item).map_err(|e| io_err(path.display())(io::Error::other(e)))?;
        w.write_all(b"\n").map_err(io_err(path.display()))?;
    }
    w.flush().map_err(io_err(path.display()))
}

pub fn read_jsonl<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>, PipelineError> {
    let f = File::open(path).map_err(io_err(path.display()))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(f).lines().enumerate() {
        let line = line.map_err(io_err(path.display()))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| PipelineError::Artifact {
            path: path.to_path_buf(),
            message: format!("line {}: {e}", i + 1),
        })?);
    }
    Ok(out)
}

/// Resolution records written by the resolve stage.
pub fn read_resolved(path: &Path) -> Result<Vec<UriRecord>, PipelineError> {
    read_jsonl(path)
}

/// Midnight UTC on `date`.
pub fn start_of(date: NaiveDate) -> DateTime<Utc> {
    date.and_hms_opt(0, 0, 0).expect("midnight").and_utc()
}
