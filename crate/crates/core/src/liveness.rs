//! Live-web availability classification.
//!
//! A URI is *Available* when its redirect chain ultimately ends in a success
//! response that is not a soft 404. Every other ending (4xx, 5xx, redirect
//! loops, DNS failure, timeouts, no answer) makes it *Missing* for that
//! round. Audits run several rounds and a single successful round is enough
//! to count the URI as available.

use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::sync::OnceLock;

use chrono::{DateTime, Utc};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use regex::Regex;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;
use url::Url;

use crate::canonical::{resolve_chain, ResolveFailure, ResolveOptions, DEFAULT_MAX_REDIRECTS};
use crate::clock::Clock;
use crate::politeness::HostGate;
use crate::schedule::{run_rounds, RoundPlan, RoundResult};
use crate::transport::{get_following, NetworkFailure, Response, Transport, TransportError, BODY_CAP};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(tag = "reason", content = "code", rename_all = "snake_case")]
pub enum Reason {
    Ok,
    Soft404,
    Http4xx(u16),
    Http5xx(u16),
    RedirectLoop,
    DnsFailure,
    Timeout,
    NoResponse,
}

impl Reason {
    pub fn is_ok(self) -> bool {
        self == Reason::Ok
    }
}

impl fmt::Display for Reason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Reason::Ok => f.write_str("ok"),
            Reason::Soft404 => f.write_str("soft404"),
            Reason::Http4xx(code) => write!(f, "http4xx({code})"),
            Reason::Http5xx(code) => write!(f, "http5xx({code})"),
            Reason::RedirectLoop => f.write_str("redirect_loop"),
            Reason::DnsFailure => f.write_str("dns_failure"),
            Reason::Timeout => f.write_str("timeout"),
            Reason::NoResponse => f.write_str("no_response"),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Available,
    Missing,
}

/// How a redirect chain ended, independent of any soft-404 check.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Terminal {
    Status(u16),
    Loop,
    BrokenRedirect,
    Network(NetworkFailure),
}

/// Maps every possible chain ending to exactly one reason.
///
/// 2xx is success; 1xx, stray 3xx and codes outside 100..=599 count as no
/// usable response.
pub fn reason_for(terminal: Terminal) -> Reason {
    match terminal {
        Terminal::Status(code) => match code {
            200..=299 => Reason::Ok,
            400..=499 => Reason::Http4xx(code),
            500..=599 => Reason::Http5xx(code),
            _ => Reason::NoResponse,
        },
        Terminal::Loop => Reason::RedirectLoop,
        Terminal::BrokenRedirect => Reason::NoResponse,
        Terminal::Network(NetworkFailure::Dns) => Reason::DnsFailure,
        Terminal::Network(NetworkFailure::Timeout) => Reason::Timeout,
        Terminal::Network(NetworkFailure::NoResponse) => Reason::NoResponse,
    }
}

fn terminal_of(record: &crate::canonical::UriRecord) -> Terminal {
    match &record.failure {
        Some(ResolveFailure::Loop) | Some(ResolveFailure::TooManyRedirects) => Terminal::Loop,
        Some(ResolveFailure::BrokenRedirect) => Terminal::BrokenRedirect,
        Some(ResolveFailure::Network { failure, .. }) => Terminal::Network(*failure),
        None => Terminal::Status(record.terminal_status().unwrap_or(0)),
    }
}

/// One round's observation for one URI.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RoundOutcome {
    pub round: u32,
    pub at: DateTime<Utc>,
    #[serde(flatten)]
    pub reason: Reason,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub similarity: Option<f64>,
}

impl RoundResult for RoundOutcome {
    fn round(&self) -> u32 {
        self.round
    }

    fn at(&self) -> DateTime<Utc> {
        self.at
    }

    fn is_success(&self) -> bool {
        self.reason.is_ok()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LivenessVerdict {
    pub uri: String,
    pub status: Status,
    #[serde(flatten)]
    pub reason: Reason,
    pub rounds: Vec<RoundOutcome>,
}

/// Combines a URI's round outcomes: Available if any round was ok, else
/// Missing with the reason observed in the latest round. The result does
/// not depend on the order of `rounds`.
pub fn assemble_verdict(uri: &str, mut rounds: Vec<RoundOutcome>) -> LivenessVerdict {
    rounds.sort_by(|a, b| a.round.cmp(&b.round).then(a.at.cmp(&b.at)));
    let (status, reason) = if rounds.iter().any(|o| o.reason.is_ok()) {
        (Status::Available, Reason::Ok)
    } else {
        let last = rounds.last().map(|o| o.reason).unwrap_or(Reason::NoResponse);
        (Status::Missing, last)
    };
    LivenessVerdict {
        uri: uri.to_string(),
        status,
        reason,
        rounds,
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Soft404Config {
    /// Similarity at or above which the page is a soft 404.
    pub threshold: f64,
    /// Words per shingle.
    pub shingle: usize,
    pub body_cap: usize,
    /// Seeds the probe token generator so replayed audits are reproducible.
    pub seed: u64,
    pub max_redirects: usize,
}

impl Default for Soft404Config {
    fn default() -> Self {
        Soft404Config {
            threshold: 0.9,
            shingle: 4,
            body_cap: BODY_CAP,
            seed: 0,
            max_redirects: DEFAULT_MAX_REDIRECTS,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Soft404Check {
    pub flagged: bool,
    pub probe_uri: String,
    /// Absent when the probe did not come back 2xx.
    pub similarity: Option<f64>,
}

pub const PROBE_TOKEN_LEN: usize = 24;

/// A 24-character lowercase alphanumeric token derived from `seed` and `uri`.
pub fn probe_token(seed: u64, uri: &str) -> String {
    let mut hasher = Sha256::new();
    hasher.update(seed.to_le_bytes());
    hasher.update(uri.as_bytes());
    let digest = hasher.finalize();
    let mut key = [0u8; 32];
    key.copy_from_slice(&digest);
    let mut rng = ChaCha8Rng::from_seed(key);
    const ALPHABET: &[u8] = b"abcdefghijklmnopqrstuvwxyz0123456789";
    (0..PROBE_TOKEN_LEN)
        .map(|_| ALPHABET[rng.gen_range(0..ALPHABET.len())] as char)
        .collect()
}

/// The sibling URI `token` in the same directory as `uri`.
pub fn probe_uri(uri: &str, token: &str) -> Option<String> {
    let mut url = Url::parse(uri).ok()?;
    let path = url.path();
    let dir = match path.rfind('/') {
        Some(idx) => &path[..=idx],
        None => "/",
    };
    let new_path = format!("{dir}{token}");
    url.set_path(&new_path);
    url.set_query(None);
    url.set_fragment(None);
    Some(url.to_string())
}

fn markup() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        Regex::new(r"(?is)<script\b.*?</script>|<style\b.*?</style>|<!--.*?-->|<[^>]*>").unwrap()
    })
}

/// Lowercased words of a page with markup removed.
pub fn page_words(body: &str) -> Vec<String> {
    markup()
        .replace_all(body, " ")
        .split(|c: char| !c.is_alphanumeric())
        .filter(|w| !w.is_empty())
        .map(str::to_lowercase)
        .collect()
}

/// Word `k`-grams of a page. Texts shorter than `k` words form one shingle.
pub fn shingles(words: &[String], k: usize) -> BTreeSet<Vec<String>> {
    let k = k.max(1);
    if words.is_empty() {
        return BTreeSet::new();
    }
    if words.len() < k {
        return BTreeSet::from([words.to_vec()]);
    }
    words.windows(k).map(<[String]>::to_vec).collect()
}

/// Jaccard similarity of two pages' `k`-word shingle sets. Two empty pages
/// are identical.
pub fn similarity(a: &str, b: &str, k: usize) -> f64 {
    let sa = shingles(&page_words(a), k);
    let sb = shingles(&page_words(b), k);
    if sa.is_empty() && sb.is_empty() {
        return 1.0;
    }
    let inter = sa.intersection(&sb).count();
    let union = sa.len() + sb.len() - inter;
    inter as f64 / union as f64
}

/// GET following redirects. `Ok(None)` for network failures, loops and
/// redirects without a Location.
fn fetch_following(
    transport: &dyn Transport,
    uri: &str,
    round: u32,
    max_redirects: usize,
) -> Result<Option<Response>, TransportError> {
    match get_following(transport, uri, round, max_redirects) {
        Ok(resp) => Ok(Some(resp)),
        Err(TransportError::Network { .. }) => Ok(None),
        Err(err) => Err(err),
    }
}

fn capped_text(resp: &Response, cap: usize) -> String {
    let end = resp.body.len().min(cap);
    String::from_utf8_lossy(&resp.body[..end]).into_owned()
}

/// Probes a random sibling of `uri`; flags `uri` when the sibling also
/// succeeds with near-identical content.
pub fn detect_soft404(
    uri: &str,
    transport: &dyn Transport,
    cfg: &Soft404Config,
    round: u32,
) -> Result<Soft404Check, TransportError> {
    let token = probe_token(cfg.seed, uri);
    let Some(probe) = probe_uri(uri, &token) else {
        return Ok(Soft404Check {
            flagged: false,
            probe_uri: String::new(),
            similarity: None,
        });
    };
    let unflagged = |similarity| Soft404Check {
        flagged: false,
        probe_uri: probe.clone(),
        similarity,
    };
    let probe_resp = match fetch_following(transport, &probe, round, cfg.max_redirects)? {
        Some(resp) if (200..300).contains(&resp.status) => resp,
        Some(_) => return Ok(unflagged(None)),
        None => {
            log::debug!("soft-404 probe {probe} failed; not flagging {uri}");
            return Ok(unflagged(None));
        }
    };
    let original = match fetch_following(transport, uri, round, cfg.max_redirects)? {
        Some(resp) => resp,
        None => return Ok(unflagged(None)),
    };
    let sim = similarity(
        &capped_text(&original, cfg.body_cap),
        &capped_text(&probe_resp, cfg.body_cap),
        cfg.shingle,
    );
    Ok(Soft404Check {
        flagged: sim >= cfg.threshold,
        probe_uri: probe,
        similarity: Some(sim),
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct LivenessConfig {
    pub plan: RoundPlan,
    pub max_redirects: usize,
    pub soft404: Option<Soft404Config>,
}

impl Default for LivenessConfig {
    fn default() -> Self {
        LivenessConfig {
            plan: RoundPlan::default(),
            max_redirects: DEFAULT_MAX_REDIRECTS,
            soft404: Some(Soft404Config::default()),
        }
    }
}

/// One fresh classification of `uri`: redirects are re-followed and a
/// successful ending is checked for a soft 404.
pub fn classify_once(
    uri: &str,
    transport: &dyn Transport,
    cfg: &LivenessConfig,
    round: u32,
    at: DateTime<Utc>,
) -> Result<RoundOutcome, TransportError> {
    let opts = ResolveOptions {
        max_redirects: cfg.max_redirects,
        round,
    };
    let record = resolve_chain(uri, transport, &opts, at)?;
    let mut reason = reason_for(terminal_of(&record));
    let mut sim = None;
    if reason.is_ok() {
        if let (Some(soft), Some(fin)) = (&cfg.soft404, &record.final_uri) {
            let check = detect_soft404(fin, transport, soft, round)?;
            sim = check.similarity;
            if check.flagged {
                reason = Reason::Soft404;
            }
        }
    }
    Ok(RoundOutcome {
        round,
        at,
        reason,
        similarity: sim,
    })
}

#[derive(Debug, Error)]
pub enum AuditError {
    #[error(transparent)]
    Transport(#[from] TransportError),
    #[error("writing audit journal: {0}")]
    Journal(#[from] std::io::Error),
}

/// Audits every URI over `cfg.plan.rounds` rounds.
///
/// `resume` carries outcomes from an earlier, interrupted run; `sink`
/// receives each new outcome for journaling. Verdicts follow `uris` order.
pub fn audit_rounds(
    uris: &[String],
    transport: &dyn Transport,
    cfg: &LivenessConfig,
    clock: &dyn Clock,
    gate: &HostGate,
    resume: HashMap<String, Vec<RoundOutcome>>,
    sink: impl FnMut(&str, &RoundOutcome) -> Result<(), AuditError>,
) -> Result<Vec<LivenessVerdict>, AuditError> {
    let mut history = run_rounds(
        uris,
        &cfg.plan,
        clock,
        gate,
        resume,
        |uri, round, at| classify_once(uri, transport, cfg, round, at).map_err(AuditError::from),
        sink,
    )?;
    Ok(uris
        .iter()
        .map(|u| assemble_verdict(u, history.remove(u).unwrap_or_default()))
        .collect())
}

/// Available and missing counts over a set of verdicts.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct LivenessSummary {
    pub available: usize,
    pub missing: usize,
}

impl LivenessSummary {
    pub fn of(verdicts: &[LivenessVerdict]) -> Self {
        let available = verdicts.iter().filter(|v| v.status == Status::Available).count();
        LivenessSummary {
            available,
            missing: verdicts.len() - available,
        }
    }

    pub fn total(&self) -> usize {
        self.available + self.missing
    }

    pub fn missing_percent(&self) -> f64 {
        percent(self.missing, self.total())
    }

    pub fn available_percent(&self) -> f64 {
        percent(self.available, self.total())
    }
}

pub(crate) fn percent(part: usize, whole: usize) -> f64 {
    if whole == 0 {
        0.0
    } else {
        100.0 * part as f64 / whole as f64
    }
}
