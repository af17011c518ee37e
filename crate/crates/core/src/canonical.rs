//! Redirect-chain resolution and alias collapsing.

use std::collections::{BTreeSet, HashMap, HashSet};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use url::Url;

use crate::politeness::{run_bounded, HostGate};
use crate::transport::{Method, NetworkFailure, Request, Response, Transport, TransportError};

pub const DEFAULT_MAX_REDIRECTS: usize = 20;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Hop {
    pub uri: String,
    pub status: u16,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ResolveFailure {
    /// A URI was revisited within one chain.
    Loop,
    /// More than `max_redirects` redirects.
    TooManyRedirects,
    /// A 3xx answer without a usable Location header.
    BrokenRedirect,
    Network { failure: NetworkFailure, detail: String },
}

/// A shared URI and where its redirects lead.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct UriRecord {
    pub original: String,
    pub chain: Vec<Hop>,
    #[serde(rename = "final")]
    pub final_uri: Option<String>,
    pub resolved_at: DateTime<Utc>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failure: Option<ResolveFailure>,
}

impl UriRecord {
    pub fn is_looping(&self) -> bool {
        matches!(
            self.failure,
            Some(ResolveFailure::Loop) | Some(ResolveFailure::TooManyRedirects)
        )
    }

    pub fn terminal_status(&self) -> Option<u16> {
        self.chain.last().map(|h| h.status)
    }
}

#[derive(Clone, Copy, Debug)]
pub struct ResolveOptions {
    pub max_redirects: usize,
    pub round: u32,
}

impl Default for ResolveOptions {
    fn default() -> Self {
        ResolveOptions {
            max_redirects: DEFAULT_MAX_REDIRECTS,
            round: 1,
        }
    }
}

/// Lowercases scheme and host, drops default ports and the fragment.
/// Query strings are kept. Unparseable input is returned trimmed.
pub fn normalize_uri(uri: &str) -> String {
    match Url::parse(uri.trim()) {
        Ok(mut url) => {
            url.set_fragment(None);
            url.to_string()
        }
        Err(_) => uri.trim().to_string(),
    }
}

fn next_location(current: &str, location: &str) -> Option<String> {
    let location = location.trim();
    if location.is_empty() {
        return None;
    }
    if Url::parse(location).is_ok_and(|u| u.has_host()) {
        return Some(location.to_string());
    }
    Url::parse(current).ok()?.join(location).ok().map(String::from)
}

/// HEAD, retried as GET when the server rejects HEAD (405/501) or hangs.
pub(crate) fn probe(
    transport: &dyn Transport,
    uri: &str,
    round: u32,
) -> Result<Response, TransportError> {
    let head = transport.send(&Request::head(uri).in_round(round));
    let retry = match &head {
        Ok(resp) => matches!(resp.status, 405 | 501),
        Err(err) => err.network_kind() == Some(NetworkFailure::Timeout),
    };
    if retry {
        transport.send(&Request {
            method: Method::Get,
            url: uri.to_string(),
            round,
        })
    } else {
        head
    }
}

/// Follows `uri`'s redirects to its final URI.
///
/// Network failures end up in [`UriRecord::failure`]; the only error
/// returned is [`TransportError::NotRecorded`] from a replay store.
pub fn resolve_chain(
    uri: &str,
    transport: &dyn Transport,
    opts: &ResolveOptions,
    resolved_at: DateTime<Utc>,
) -> Result<UriRecord, TransportError> {
    let mut record = UriRecord {
        original: uri.to_string(),
        chain: Vec::new(),
        final_uri: None,
        resolved_at,
        failure: None,
    };
    let mut visited = HashSet::new();
    let mut current = uri.to_string();
    loop {
        if !visited.insert(normalize_uri(&current)) {
            record.failure = Some(ResolveFailure::Loop);
            break;
        }
        if record.chain.len() > opts.max_redirects {
            record.failure = Some(ResolveFailure::TooManyRedirects);
            break;
        }
        let resp = match probe(transport, &current, opts.round) {
            Ok(resp) => resp,
            Err(TransportError::Network { kind, detail, .. }) => {
                record.failure = Some(ResolveFailure::Network {
                    failure: kind,
                    detail,
                });
                break;
            }
            Err(err) => return Err(err),
        };
        record.chain.push(Hop {
            uri: current.clone(),
            status: resp.status,
        });
        if !resp.is_redirect() {
            record.final_uri = Some(current);
            break;
        }
        match resp.location().and_then(|loc| next_location(&current, loc)) {
            Some(next) => current = next,
            None => {
                record.failure = Some(ResolveFailure::BrokenRedirect);
                break;
            }
        }
    }
    Ok(record)
}

/// Resolves many URIs with bounded parallelism; output follows input order.
pub fn resolve_all(
    uris: &[String],
    transport: &dyn Transport,
    opts: &ResolveOptions,
    resolved_at: DateTime<Utc>,
    concurrency: usize,
    gate: &HostGate,
) -> Result<Vec<UriRecord>, TransportError> {
    run_bounded(uris, concurrency, |uri| {
        gate.run(uri, || resolve_chain(uri, transport, opts, resolved_at))
    })
    .into_iter()
    .collect()
}

/// Original URIs that share one canonical URI.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AliasGroup {
    /// Normalized final URI, or the normalized original when resolution failed.
    #[serde(rename = "final")]
    pub final_uri: String,
    pub resolved: bool,
    pub members: BTreeSet<String>,
    /// Number of input records folded into this group.
    pub records: usize,
}

/// Groups records by normalized final URI, in order of first appearance.
/// Unresolved records are grouped by their normalized original and never
/// merged with resolved ones.
pub fn dedupe(records: &[UriRecord]) -> Vec<AliasGroup> {
    let mut index: HashMap<(bool, String), usize> = HashMap::new();
    let mut groups: Vec<AliasGroup> = Vec::new();
    for rec in records {
        let key = match &rec.final_uri {
            Some(f) => (true, normalize_uri(f)),
            None => (false, normalize_uri(&rec.original)),
        };
        let idx = *index.entry(key.clone()).or_insert_with(|| {
            groups.push(AliasGroup {
                final_uri: key.1.clone(),
                resolved: key.0,
                members: BTreeSet::new(),
                records: 0,
            });
            groups.len() - 1
        });
        groups[idx].members.insert(rec.original.clone());
        groups[idx].records += 1;
    }
    groups
}

/// Writes `final,resolved,member` rows, one per member.
pub fn write_aliases_csv<W: std::io::Write>(groups: &[AliasGroup], out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["final", "resolved", "member"])?;
    for g in groups {
        for m in &g.members {
            w.write_record([g.final_uri.as_str(), if g.resolved { "true" } else { "false" }, m])?;
        }
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::transport::{Canned, CountingTransport, ReplayStore};
    use chrono::TimeZone;

    fn at() -> DateTime<Utc> {
        Utc.with_ymd_and_hms(2012, 4, 1, 0, 0, 0).unwrap()
    }

    fn redirect(to: &str) -> Canned {
        Canned::status(301).with_header("Location", to)
    }

    fn shorteners() -> ReplayStore {
        let mut s = ReplayStore::new();
        s.add("http://bit.ly/2EEjBl", redirect("http://www.cnn.com"))
            .add("http://goo.gl/2ViC", redirect("http://www.cnn.com"))
            .add("http://www.cnn.com", Canned::status(200).with_body("cnn"));
        s
    }

    #[test]
    fn shortener_aliases_resolve_to_same_final() {
        let store = shorteners();
        let opts = ResolveOptions::default();
        let a = resolve_chain("http://bit.ly/2EEjBl", &store, &opts, at()).unwrap();
        let b = resolve_chain("http://goo.gl/2ViC", &store, &opts, at()).unwrap();
        assert_eq!(a.final_uri.as_deref(), Some("http://www.cnn.com"));
        assert_eq!(b.final_uri.as_deref(), Some("http://www.cnn.com"));
        assert_eq!(a.chain[0].uri, "http://bit.ly/2EEjBl");
        assert_eq!(a.chain.iter().map(|h| h.status).collect::<Vec<_>>(), [301, 200]);

        let groups = dedupe(&[a, b]);
        assert_eq!(groups.len(), 1);
        assert_eq!(groups[0].members.len(), 2);
        assert_eq!(groups[0].final_uri, "http://www.cnn.com/");
    }

    #[test]
    fn direct_200() {
        let rec = resolve_chain("http://www.cnn.com", &shorteners(), &ResolveOptions::default(), at()).unwrap();
        assert_eq!(rec.chain.len(), 1);
        assert_eq!(rec.final_uri.as_deref(), Some("http://www.cnn.com"));
        assert!(rec.failure.is_none());
    }

    #[test]
    fn loop_detected() {
        let mut s = ReplayStore::new();
        s.add("http://a.com/", redirect("http://b.com/"))
            .add("http://b.com/", redirect("/"));
        // b's relative "/" resolves to http://b.com/ itself
        let rec = resolve_chain("http://a.com/", &s, &ResolveOptions::default(), at()).unwrap();
        assert!(rec.is_looping());
        assert_eq!(rec.final_uri, None);

        s.add("http://b.com/", redirect("http://A.com:80/#x"));
        let rec = resolve_chain("http://a.com/", &s, &ResolveOptions::default(), at()).unwrap();
        assert_eq!(rec.failure, Some(ResolveFailure::Loop));
        assert_eq!(rec.chain.len(), 2);
    }

    #[test]
    fn relative_location_and_head_fallback() {
        let mut s = ReplayStore::new();
        s.add("http://x.com/a/b", redirect("../c?q=1"))
            .add_method(Method::Head, "http://x.com/c?q=1", Canned::status(405))
            .add_method(Method::Get, "http://x.com/c?q=1", Canned::status(200));
        let rec = resolve_chain("http://x.com/a/b", &s, &ResolveOptions::default(), at()).unwrap();
        assert_eq!(rec.final_uri.as_deref(), Some("http://x.com/c?q=1"));
        assert_eq!(rec.terminal_status(), Some(200));
    }

    #[test]
    fn network_failure_and_broken_redirect() {
        let mut s = ReplayStore::new();
        s.add("http://dead.example/", Canned::error(NetworkFailure::Dns))
            .add("http://nolocation.example/", Canned::status(302));
        let dead = resolve_chain("http://dead.example/", &s, &ResolveOptions::default(), at()).unwrap();
        assert!(matches!(
            dead.failure,
            Some(ResolveFailure::Network { failure: NetworkFailure::Dns, .. })
        ));
        assert!(dead.chain.is_empty());
        let broken = resolve_chain("http://nolocation.example/", &s, &ResolveOptions::default(), at()).unwrap();
        assert_eq!(broken.failure, Some(ResolveFailure::BrokenRedirect));
        assert!(matches!(
            resolve_chain("http://unknown.example/", &s, &ResolveOptions::default(), at()),
            Err(TransportError::NotRecorded { .. })
        ));
    }

    #[test]
    fn request_budget() {
        let mut s = ReplayStore::new();
        for i in 0..50 {
            s.add(&format!("http://r.com/{i}"), redirect(&format!("http://r.com/{}", i + 1)));
        }
        let counting = CountingTransport::new(s);
        for max in [1usize, 3, 20] {
            counting.reset();
            let opts = ResolveOptions { max_redirects: max, round: 1 };
            let rec = resolve_chain("http://r.com/0", &counting, &opts, at()).unwrap();
            assert_eq!(rec.failure, Some(ResolveFailure::TooManyRedirects));
            assert_eq!(counting.requests(), max + 1);
            assert_eq!(rec.chain.len(), max + 1);
        }
    }

    #[test]
    fn failed_resolutions_stay_separate() {
        let rec = |orig: &str, fin: Option<&str>| UriRecord {
            original: orig.into(),
            chain: vec![],
            final_uri: fin.map(Into::into),
            resolved_at: at(),
            failure: None,
        };
        let groups = dedupe(&[
            rec("http://a.com/", None),
            rec("http://b.com/", Some("http://a.com/")),
            rec("http://c.com/", None),
        ]);
        assert_eq!(groups.len(), 3);
        assert!(!groups[0].resolved);
        assert_eq!(groups.iter().map(|g| g.records).sum::<usize>(), 3);
    }

    #[test]
    fn normalization() {
        assert_eq!(normalize_uri("HTTP://WWW.CNN.COM:80/Path?b=2&a=1#frag"), "http://www.cnn.com/Path?b=2&a=1");
        assert_eq!(normalize_uri("https://x.org:443"), "https://x.org/");
        assert_eq!(normalize_uri(" not a uri "), "not a uri");
    }
}
