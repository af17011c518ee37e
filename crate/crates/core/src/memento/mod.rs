//! Archive coverage through Memento TimeMaps.
//!
//! A URI counts as archived when its TimeMap lists at least one memento.
//! TimeMaps are fetched from an aggregator endpoint given as a URI template
//! containing `{uri}`; continuation pages linked with `rel="timemap"` (or
//! `rel="next"`) are followed up to a page limit.

use std::collections::{HashMap, HashSet};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::clock::Clock;
use crate::liveness::AuditError;
use crate::politeness::HostGate;
use crate::schedule::{run_rounds, RoundPlan, RoundResult};
use crate::transport::{get_following, Transport, TransportError};

mod link_format;

pub use link_format::{parse_link_format, serialize_link_format, LinkEntry, LinkFormatError};

pub const DEFAULT_ENDPOINT: &str = "http://timetravel.mementoweb.org/timemap/link/{uri}";
pub const DEFAULT_PAGE_LIMIT: usize = 10;
const PLACEHOLDER: &str = "{uri}";

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Memento {
    pub uri_m: String,
    pub datetime: DateTime<Utc>,
    pub rel: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TimeMap {
    pub original: String,
    /// Sorted by datetime, oldest first.
    pub mementos: Vec<Memento>,
    pub fetched_at: DateTime<Utc>,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum TimeMapError {
    #[error(transparent)]
    Syntax(#[from] LinkFormatError),
    #[error("memento entry {index} (<{target}>) has no datetime attribute")]
    MissingDatetime { index: usize, target: String },
    #[error("memento entry {index} (<{target}>) has an unparseable datetime {value:?}")]
    BadDatetime {
        index: usize,
        target: String,
        value: String,
    },
}

#[derive(Debug, Error)]
pub enum MementoError {
    #[error("endpoint template {0:?} has no {{uri}} placeholder")]
    Template(String),
    /// Worth retrying in a later round.
    #[error("timemap request failed: {0}")]
    Transport(#[from] TransportError),
    #[error("timemap endpoint answered {status} for {url}")]
    Unavailable { status: u16, url: String },
    #[error("malformed timemap at {url}: {source}")]
    Parse {
        url: String,
        #[source]
        source: TimeMapError,
    },
}

impl MementoError {
    pub fn is_not_recorded(&self) -> bool {
        matches!(self, MementoError::Transport(TransportError::NotRecorded { .. }))
    }
}

/// Parses an RFC 1123 memento datetime such as `Thu, 01 Jan 2009 00:00:00 GMT`.
/// A weekday name that disagrees with the date is ignored.
pub fn parse_memento_datetime(value: &str) -> Option<DateTime<Utc>> {
    let value = value.trim();
    if let Ok(dt) = DateTime::parse_from_rfc2822(value) {
        return Some(dt.with_timezone(&Utc));
    }
    let without_weekday = value.split_once(',').map_or(value, |(_, rest)| rest.trim());
    DateTime::parse_from_rfc2822(without_weekday)
        .ok()
        .map(|dt| dt.with_timezone(&Utc))
}

pub fn format_memento_datetime(dt: &DateTime<Utc>) -> String {
    dt.format("%a, %d %b %Y %H:%M:%S GMT").to_string()
}

fn is_memento(entry: &LinkEntry) -> bool {
    entry.has_rel("memento")
}

fn is_continuation(entry: &LinkEntry) -> bool {
    let rels = entry.rels();
    let paging = rels.iter().any(|r| r == "timemap" || r == "next");
    let link_format = entry
        .get("type")
        .map_or(true, |t| t.contains("link-format"));
    paging && !is_memento(entry) && link_format
}

impl TimeMap {
    /// Builds a TimeMap from parsed entries. Mementos without a valid
    /// datetime are errors; other links are ignored apart from `original`.
    pub fn from_entries(
        requested: &str,
        entries: &[LinkEntry],
        fetched_at: DateTime<Utc>,
    ) -> Result<TimeMap, TimeMapError> {
        let mut mementos = Vec::new();
        for (index, entry) in entries.iter().enumerate() {
            if !is_memento(entry) {
                continue;
            }
            let value = entry.get("datetime").ok_or_else(|| TimeMapError::MissingDatetime {
                index,
                target: entry.target.clone(),
            })?;
            let datetime = parse_memento_datetime(value).ok_or_else(|| TimeMapError::BadDatetime {
                index,
                target: entry.target.clone(),
                value: value.to_string(),
            })?;
            mementos.push(Memento {
                uri_m: entry.target.clone(),
                datetime,
                rel: entry.rels(),
            });
        }
        mementos.sort_by_key(|m| m.datetime);
        let original = entries
            .iter()
            .find(|e| e.has_rel("original"))
            .map(|e| e.target.clone())
            .unwrap_or_else(|| requested.to_string());
        Ok(TimeMap {
            original,
            mementos,
            fetched_at,
        })
    }

    pub fn parse(requested: &str, body: &str, fetched_at: DateTime<Utc>) -> Result<TimeMap, TimeMapError> {
        let entries = parse_link_format(body)?;
        Self::from_entries(requested, &entries, fetched_at)
    }

    pub fn len(&self) -> usize {
        self.mementos.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mementos.is_empty()
    }

    /// Renders the TimeMap back to link-format.
    pub fn to_link_format(&self) -> String {
        let mut entries = vec![LinkEntry::new(&self.original).with("rel", "original")];
        entries.extend(self.mementos.iter().map(|m| {
            LinkEntry::new(&m.uri_m)
                .with("rel", &m.rel.join(" "))
                .with("datetime", &format_memento_datetime(&m.datetime))
        }));
        serialize_link_format(&entries)
    }
}

/// `(archived, memento count)`: archived iff the TimeMap exists and lists
/// at least one memento.
pub fn is_archived(tm: Option<&TimeMap>) -> (bool, usize) {
    match tm {
        Some(tm) => (!tm.mementos.is_empty(), tm.mementos.len()),
        None => (false, 0),
    }
}

/// A TimeMap endpoint given as a URI template.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Endpoint {
    template: String,
}

impl Endpoint {
    pub fn new(template: &str) -> Result<Self, MementoError> {
        if !template.contains(PLACEHOLDER) {
            return Err(MementoError::Template(template.to_string()));
        }
        Ok(Endpoint {
            template: template.to_string(),
        })
    }

    pub fn timemap_url(&self, uri: &str) -> String {
        self.template.replace(PLACEHOLDER, uri)
    }

    pub fn template(&self) -> &str {
        &self.template
    }
}

impl Default for Endpoint {
    fn default() -> Self {
        Endpoint::new(DEFAULT_ENDPOINT).expect("default template has a placeholder")
    }
}

const TIMEMAP_REDIRECTS: usize = 5;

/// Fetches and parses `uri`'s TimeMap, following continuation pages.
///
/// `Ok(None)` means the archives know nothing about `uri` (404/410 or an
/// empty body).
pub fn fetch_timemap(
    uri: &str,
    endpoint: &Endpoint,
    transport: &dyn Transport,
    page_limit: usize,
    round: u32,
    fetched_at: DateTime<Utc>,
) -> Result<Option<TimeMap>, MementoError> {
    let first = endpoint.timemap_url(uri);
    let mut queue = vec![first.clone()];
    let mut visited = HashSet::new();
    let mut merged: Option<TimeMap> = None;

    while let Some(url) = queue.pop() {
        if visited.len() >= page_limit.max(1) || !visited.insert(url.clone()) {
            continue;
        }
        let resp = get_following(transport, &url, round, TIMEMAP_REDIRECTS)?;
        let is_first = url == first;
        match resp.status {
            200..=299 => {}
            404 | 410 if is_first => return Ok(None),
            404 | 410 => continue,
            status => return Err(MementoError::Unavailable { status, url }),
        }
        let body = resp.body_text();
        if body.trim().is_empty() {
            if is_first {
                return Ok(None);
            }
            continue;
        }
        let entries = parse_link_format(&body).map_err(|e| MementoError::Parse {
            url: url.clone(),
            source: e.into(),
        })?;
        let page = TimeMap::from_entries(uri, &entries, fetched_at).map_err(|source| MementoError::Parse {
            url: url.clone(),
            source,
        })?;
        for next in entries.iter().filter(|e| is_continuation(e)) {
            if !visited.contains(&next.target) {
                queue.insert(0, next.target.clone());
            }
        }
        match merged.as_mut() {
            None => merged = Some(page),
            Some(tm) => tm.mementos.extend(page.mementos),
        }
    }
    if let Some(tm) = merged.as_mut() {
        let mut seen = HashSet::new();
        tm.mementos.retain(|m| seen.insert((m.uri_m.clone(), m.datetime)));
        tm.mementos.sort_by_key(|m| m.datetime);
    }
    Ok(merged)
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "outcome", rename_all = "snake_case")]
pub enum ArchiveOutcome {
    Mementos { count: usize },
    NoTimemap,
    Failed { error: String },
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArchiveRound {
    pub round: u32,
    pub at: DateTime<Utc>,
    #[serde(flatten)]
    pub outcome: ArchiveOutcome,
}

impl RoundResult for ArchiveRound {
    fn round(&self) -> u32 {
        self.round
    }

    fn at(&self) -> DateTime<Utc> {
        self.at
    }

    fn is_success(&self) -> bool {
        matches!(self.outcome, ArchiveOutcome::Mementos { count } if count > 0)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArchiveVerdict {
    pub uri: String,
    pub archived: bool,
    /// Largest memento count seen in any round.
    pub mementos: usize,
    pub rounds: Vec<ArchiveRound>,
}

/// Archived if any round saw at least one memento.
pub fn assemble_archive_verdict(uri: &str, mut rounds: Vec<ArchiveRound>) -> ArchiveVerdict {
    rounds.sort_by(|a, b| a.round.cmp(&b.round).then(a.at.cmp(&b.at)));
    let mementos = rounds
        .iter()
        .filter_map(|r| match r.outcome {
            ArchiveOutcome::Mementos { count } => Some(count),
            _ => None,
        })
        .max()
        .unwrap_or(0);
    ArchiveVerdict {
        uri: uri.to_string(),
        archived: mementos > 0,
        mementos,
        rounds,
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ArchiveConfig {
    pub plan: RoundPlan,
    pub endpoint: Endpoint,
    pub page_limit: usize,
}

impl Default for ArchiveConfig {
    fn default() -> Self {
        ArchiveConfig {
            plan: RoundPlan::default(),
            endpoint: Endpoint::default(),
            page_limit: DEFAULT_PAGE_LIMIT,
        }
    }
}

/// One round's archive check. Only a missing replay entry is an error;
/// other failures become [`ArchiveOutcome::Failed`].
pub fn check_archived(
    uri: &str,
    transport: &dyn Transport,
    cfg: &ArchiveConfig,
    round: u32,
    at: DateTime<Utc>,
) -> Result<ArchiveRound, TransportError> {
    let outcome = match fetch_timemap(uri, &cfg.endpoint, transport, cfg.page_limit, round, at) {
        Ok(tm) => match is_archived(tm.as_ref()) {
            (_, 0) if tm.is_none() => ArchiveOutcome::NoTimemap,
            (_, count) => ArchiveOutcome::Mementos { count },
        },
        Err(MementoError::Transport(err @ TransportError::NotRecorded { .. })) => return Err(err),
        Err(err) => ArchiveOutcome::Failed {
            error: err.to_string(),
        },
    };
    Ok(ArchiveRound { round, at, outcome })
}

/// Checks archive coverage for every URI over several rounds.
pub fn archive_audit(
    uris: &[String],
    transport: &dyn Transport,
    cfg: &ArchiveConfig,
    clock: &dyn Clock,
    gate: &HostGate,
    resume: HashMap<String, Vec<ArchiveRound>>,
    sink: impl FnMut(&str, &ArchiveRound) -> Result<(), AuditError>,
) -> Result<Vec<ArchiveVerdict>, AuditError> {
    let mut history = run_rounds(
        uris,
        &cfg.plan,
        clock,
        gate,
        resume,
        |uri, round, at| check_archived(uri, transport, cfg, round, at).map_err(AuditError::from),
        sink,
    )?;
    Ok(uris
        .iter()
        .map(|u| assemble_archive_verdict(u, history.remove(u).unwrap_or_default()))
        .collect())
}
