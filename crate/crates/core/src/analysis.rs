//! Per-event statistics and the loss/archival models.
//!
//! Each event's unique resources are cross-tabulated by live-web status and
//! archive coverage. Resources are then split around the event's temporal
//! centroids (peak sharing days), and the missing/archived percentages of
//! every split are regressed on their age at audit time.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::io;

use chrono::{NaiveDate, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingest::Corpus;
use crate::liveness::{percent, LivenessVerdict, Status};
use crate::memento::ArchiveVerdict;

#[derive(Debug, Error, PartialEq)]
pub enum AnalysisError {
    #[error("live and archive results cover different URIs (live only: {live_only:?}; archive only: {archive_only:?})")]
    Mismatch {
        live_only: Vec<String>,
        archive_only: Vec<String>,
    },
    #[error("need at least two points to fit a line, got {0}")]
    TooFewPoints(usize),
    #[error("all points share age {0}; slope is undefined")]
    DegenerateFit(f64),
}

/// The 2x2 archived-by-available partition of an event's unique resources.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Cells {
    pub archived_available: usize,
    pub archived_missing: usize,
    pub unarchived_available: usize,
    pub unarchived_missing: usize,
}

impl Cells {
    pub fn total(&self) -> usize {
        self.archived_available + self.archived_missing + self.unarchived_available + self.unarchived_missing
    }

    pub fn missing(&self) -> usize {
        self.archived_missing + self.unarchived_missing
    }

    pub fn archived(&self) -> usize {
        self.archived_available + self.archived_missing
    }

    pub fn available(&self) -> usize {
        self.archived_available + self.unarchived_available
    }

    fn add(&mut self, archived: bool, available: bool) {
        match (archived, available) {
            (true, true) => self.archived_available += 1,
            (true, false) => self.archived_missing += 1,
            (false, true) => self.unarchived_available += 1,
            (false, false) => self.unarchived_missing += 1,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EventStats {
    pub event: String,
    /// Resources extracted before alias elimination.
    pub all: usize,
    pub unique: usize,
    pub cells: Cells,
}

impl EventStats {
    pub fn from_cells(event: &str, all: usize, cells: Cells) -> Self {
        EventStats {
            event: event.to_string(),
            all,
            unique: cells.total(),
            cells,
        }
    }

    /// Share of a count in the unique resources, in percent.
    pub fn pct(&self, count: usize) -> f64 {
        percent(count, self.unique)
    }

    pub fn unique_percent(&self) -> f64 {
        percent(self.unique, self.all)
    }

    pub fn missing_percent(&self) -> f64 {
        self.pct(self.cells.missing())
    }

    pub fn archived_percent(&self) -> f64 {
        self.pct(self.cells.archived())
    }
}

/// Cross-tabulates live and archive verdicts over the same URI set.
pub fn contingency(
    event: &str,
    all: usize,
    verdicts: &[LivenessVerdict],
    flags: &[ArchiveVerdict],
) -> Result<EventStats, AnalysisError> {
    let live: HashMap<&str, bool> = verdicts
        .iter()
        .map(|v| (v.uri.as_str(), v.status == Status::Available))
        .collect();
    let archived: HashMap<&str, bool> = flags.iter().map(|f| (f.uri.as_str(), f.archived)).collect();

    let mut live_only: Vec<String> = live
        .keys()
        .filter(|u| !archived.contains_key(*u))
        .map(|u| u.to_string())
        .collect();
    let mut archive_only: Vec<String> = archived
        .keys()
        .filter(|u| !live.contains_key(*u))
        .map(|u| u.to_string())
        .collect();
    if !live_only.is_empty() || !archive_only.is_empty() {
        live_only.sort();
        archive_only.sort();
        return Err(AnalysisError::Mismatch {
            live_only,
            archive_only,
        });
    }

    let mut cells = Cells::default();
    for (uri, available) in &live {
        cells.add(archived[uri], *available);
    }
    Ok(EventStats::from_cells(event, all, cells))
}

/// Number of URI-bearing posts per UTC calendar day. Days without posts are absent.
pub fn daily_counts(corpus: &Corpus) -> BTreeMap<NaiveDate, u64> {
    let mut out = BTreeMap::new();
    for post in corpus.posts.iter().filter(|p| !p.uris.is_empty()) {
        *out.entry(post.created_at.date_naive()).or_default() += 1;
    }
    out
}

pub const DEFAULT_MIN_SEPARATION_DAYS: i64 = 14;

/// Picks up to `max_centroids` peak days, returned in date order.
///
/// Candidates are local maxima (not lower than either neighbouring day,
/// absent days counting as zero). The highest wins, earliest first on ties;
/// a second peak must lie at least `min_separation_days` from the first.
pub fn detect_centroids(
    daily: &BTreeMap<NaiveDate, u64>,
    max_centroids: usize,
    min_separation_days: i64,
) -> Vec<NaiveDate> {
    let count = |d: Option<NaiveDate>| d.and_then(|d| daily.get(&d)).copied().unwrap_or(0);
    let mut peaks: Vec<(NaiveDate, u64)> = daily
        .iter()
        .filter(|(d, n)| **n >= count(d.pred_opt()) && **n >= count(d.succ_opt()))
        .map(|(d, n)| (*d, *n))
        .collect();
    peaks.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));

    let mut chosen: Vec<NaiveDate> = Vec::new();
    for (date, _) in peaks {
        if chosen.len() >= max_centroids.max(1) {
            break;
        }
        if chosen
            .iter()
            .all(|c| (date - *c).num_days().abs() >= min_separation_days)
        {
            chosen.push(date);
        }
    }
    chosen.sort();
    chosen
}

/// Index of the centroid nearest to `date`; the earlier centroid wins ties.
/// `centroids` must be sorted and non-empty.
pub fn nearest_centroid(date: NaiveDate, centroids: &[NaiveDate]) -> usize {
    let mut best = 0;
    let mut best_dist = i64::MAX;
    for (i, c) in centroids.iter().enumerate() {
        let dist = (date - *c).num_days().abs();
        if dist < best_dist {
            best = i;
            best_dist = dist;
        }
    }
    best
}

/// A resource with the day it was (first) shared.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatedResource {
    pub uri: String,
    pub shared_on: NaiveDate,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CentroidSplit {
    pub event: String,
    pub centroids: Vec<NaiveDate>,
    /// Centroid index for each resource, in input order.
    pub assignment: Vec<usize>,
    /// One entry per centroid; empty until [`with_stats`](Self::with_stats).
    pub stats: Vec<EventStats>,
}

/// Assigns each resource to its nearest centroid.
pub fn split_by_centroid(event: &str, resources: &[DatedResource], centroids: &[NaiveDate]) -> CentroidSplit {
    let mut centroids = centroids.to_vec();
    centroids.sort();
    centroids.dedup();
    let assignment = if centroids.is_empty() {
        Vec::new()
    } else {
        resources
            .iter()
            .map(|r| nearest_centroid(r.shared_on, &centroids))
            .collect()
    };
    CentroidSplit {
        event: event.to_string(),
        centroids,
        assignment,
        stats: Vec::new(),
    }
}

/// Assigns each post of a corpus to its nearest centroid.
pub fn assign_posts(corpus: &Corpus, centroids: &[NaiveDate]) -> Vec<usize> {
    corpus
        .posts
        .iter()
        .map(|p| nearest_centroid(p.created_at.date_naive(), centroids))
        .collect()
}

impl CentroidSplit {
    /// Fills per-centroid contingency tables. `resources` must be the list
    /// the split was computed from.
    pub fn with_stats(
        mut self,
        resources: &[DatedResource],
        verdicts: &[LivenessVerdict],
        flags: &[ArchiveVerdict],
    ) -> Result<Self, AnalysisError> {
        let live: HashMap<&str, &LivenessVerdict> = verdicts.iter().map(|v| (v.uri.as_str(), v)).collect();
        let arch: HashMap<&str, &ArchiveVerdict> = flags.iter().map(|f| (f.uri.as_str(), f)).collect();
        let mut stats = Vec::with_capacity(self.centroids.len());
        for idx in 0..self.centroids.len() {
            let members: HashSet<&str> = resources
                .iter()
                .zip(&self.assignment)
                .filter(|(_, a)| **a == idx)
                .map(|(r, _)| r.uri.as_str())
                .collect();
            let v: Vec<LivenessVerdict> = members.iter().filter_map(|u| live.get(u).map(|v| (*v).clone())).collect();
            let f: Vec<ArchiveVerdict> = members.iter().filter_map(|u| arch.get(u).map(|f| (*f).clone())).collect();
            if v.len() != members.len() || f.len() != members.len() {
                let mut live_only: Vec<String> =
                    members.iter().filter(|u| !arch.contains_key(*u)).map(|u| u.to_string()).collect();
                let mut archive_only: Vec<String> =
                    members.iter().filter(|u| !live.contains_key(*u)).map(|u| u.to_string()).collect();
                live_only.sort();
                archive_only.sort();
                return Err(AnalysisError::Mismatch {
                    live_only,
                    archive_only,
                });
            }
            stats.push(contingency(&self.event, members.len(), &v, &f)?);
        }
        self.stats = stats;
        Ok(self)
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.centroids.len()];
        for a in &self.assignment {
            sizes[*a] += 1;
        }
        sizes
    }
}

/// Days from `centroid` to `audit_date`.
pub fn age_days(centroid: NaiveDate, audit_date: NaiveDate) -> i64 {
    (audit_date - centroid).num_days()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    /// Percent per day.
    pub slope: f64,
    /// Percent at age zero.
    pub intercept: f64,
    pub r_squared: f64,
    /// `(age_days, percent)` pairs the model was fitted on.
    pub points: Vec<(f64, f64)>,
}

/// Ordinary least-squares line through `points`.
pub fn fit_linear(points: &[(f64, f64)]) -> Result<LinearModel, AnalysisError> {
    let n = points.len();
    if n < 2 {
        return Err(AnalysisError::TooFewPoints(n));
    }
    let nf = n as f64;
    let mean_x = points.iter().map(|p| p.0).sum::<f64>() / nf;
    let mean_y = points.iter().map(|p| p.1).sum::<f64>() / nf;
    let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in points {
        let dx = x - mean_x;
        let dy = y - mean_y;
        sxx += dx * dx;
        sxy += dx * dy;
        syy += dy * dy;
    }
    if sxx == 0.0 {
        return Err(AnalysisError::DegenerateFit(points[0].0));
    }
    let slope = sxy / sxx;
    let intercept = mean_y - slope * mean_x;
    let r_squared = if syy == 0.0 {
        1.0
    } else {
        (sxy * sxy / (sxx * syy)).clamp(0.0, 1.0)
    };
    Ok(LinearModel {
        slope,
        intercept,
        r_squared,
        points: points.to_vec(),
    })
}

impl LinearModel {
    /// Model percentage at `age_days`, clamped to [0, 100].
    pub fn predict(&self, age_days: f64) -> f64 {
        (self.slope * age_days + self.intercept).clamp(0.0, 100.0)
    }
}

/// Model fitted to the missing and archived percentages of every split.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelReport {
    pub audit_date: NaiveDate,
    pub missing: Option<LinearModel>,
    pub archived: Option<LinearModel>,
    /// Missing-model prediction at one year, when a model was fitted.
    pub predicted_loss_365: Option<f64>,
}

/// `(age_days, missing%)` and `(age_days, archived%)` for every non-empty split.
pub fn model_points(splits: &[CentroidSplit], audit_date: NaiveDate) -> (Vec<(f64, f64)>, Vec<(f64, f64)>) {
    let mut missing = Vec::new();
    let mut archived = Vec::new();
    for split in splits {
        for (centroid, stats) in split.centroids.iter().zip(&split.stats) {
            if stats.unique == 0 {
                continue;
            }
            let age = age_days(*centroid, audit_date) as f64;
            missing.push((age, stats.missing_percent()));
            archived.push((age, stats.archived_percent()));
        }
    }
    (missing, archived)
}

pub fn fit_models(splits: &[CentroidSplit], audit_date: NaiveDate) -> ModelReport {
    let (missing_pts, archived_pts) = model_points(splits, audit_date);
    let missing = fit_linear(&missing_pts).ok();
    let archived = fit_linear(&archived_pts).ok();
    ModelReport {
        audit_date,
        predicted_loss_365: missing.as_ref().map(|m| m.predict(365.0)),
        missing,
        archived,
    }
}

/// Two-decimal percentage text as used in every output table.
pub fn fmt_pct(value: f64) -> String {
    format!("{value:.2}")
}

pub fn write_events_csv<W: io::Write>(events: &[EventStats], out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "event",
        "all",
        "unique",
        "unique_pct",
        "archived_available",
        "archived_available_pct",
        "archived_missing",
        "archived_missing_pct",
        "unarchived_available",
        "unarchived_available_pct",
        "unarchived_missing",
        "unarchived_missing_pct",
        "missing",
        "missing_pct",
        "archived",
        "archived_pct",
    ])?;
    for e in events {
        let c = &e.cells;
        let mut row = vec![e.event.clone(), e.all.to_string(), e.unique.to_string(), fmt_pct(e.unique_percent())];
        for n in [
            c.archived_available,
            c.archived_missing,
            c.unarchived_available,
            c.unarchived_missing,
            c.missing(),
            c.archived(),
        ] {
            row.push(n.to_string());
            row.push(fmt_pct(e.pct(n)));
        }
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_split_csv<W: io::Write>(splits: &[CentroidSplit], audit_date: NaiveDate, out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "event",
        "centroid",
        "centroid_date",
        "age_days",
        "unique",
        "missing",
        "missing_pct",
        "archived",
        "archived_pct",
    ])?;
    for split in splits {
        for (i, (centroid, stats)) in split.centroids.iter().zip(&split.stats).enumerate() {
            w.write_record([
                split.event.clone(),
                (i + 1).to_string(),
                centroid.to_string(),
                age_days(*centroid, audit_date).to_string(),
                stats.unique.to_string(),
                stats.cells.missing().to_string(),
                fmt_pct(stats.missing_percent()),
                stats.cells.archived().to_string(),
                fmt_pct(stats.archived_percent()),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn write_series_csv<W: io::Write>(series: &[(String, BTreeMap<NaiveDate, u64>)], out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["event", "date", "count"])?;
    for (event, daily) in series {
        for (date, n) in daily {
            w.write_record([event.as_str(), &date.to_string(), &n.to_string()])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Today's UTC date; the default audit date for live runs.
pub fn today() -> NaiveDate {
    Utc::now().date_naive()
}
