//! Record/replay store.
//!
//! The on-disk layout is a single pretty-printed JSON document:
//!
//! ```json
//! {
//!   "version": 1,
//!   "entries": [
//!     { "method": "HEAD", "url": "http://bit.ly/2EEjBl",
//!       "status": 301, "headers": { "location": "http://www.cnn.com" } },
//!     { "url": "http://www.cnn.com", "status": 200, "body": "<html>..." },
//!     { "url": "http://gone.example/", "error": "dns" },
//!     { "url": "http://flaky.example/a",
//!       "rounds": [ { "error": "timeout" }, { "status": 200, "body": "ok" } ] },
//!     { "method": "GET", "url": "http://www.cnn.com/*", "status": 404 }
//!   ]
//! }
//! ```
//!
//! * `method` is optional; an entry without it answers any method.
//! * A `HEAD` request with no HEAD entry is answered from the GET entry with
//!   the body dropped.
//! * A `url` ending in `*` matches any URL with that prefix; exact entries
//!   win, then the longest prefix.
//! * `rounds` scripts per-round answers (index = round - 1, the last one
//!   repeats). Without it the top-level `status`/`error` answers every round.
//! * `error` is one of `dns`, `timeout`, `no_response`.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::io;
use std::path::Path;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{Method, NetworkFailure, Request, Response, Transport, TransportError};

const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ReplayError {
    #[error("reading replay store: {0}")]
    Io(#[from] io::Error),
    #[error("replay store is not valid JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("unsupported replay store version {0}")]
    Version(u32),
    #[error("entry {index} ({url}) has neither a status nor an error")]
    EmptyEntry { index: usize, url: String },
}

/// One canned answer: either an HTTP response or a network failure.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Canned {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub status: Option<u16>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub headers: BTreeMap<String, String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub body: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<NetworkFailure>,
}

impl Canned {
    pub fn status(status: u16) -> Self {
        Canned {
            status: Some(status),
            ..Default::default()
        }
    }

    pub fn error(kind: NetworkFailure) -> Self {
        Canned {
            error: Some(kind),
            ..Default::default()
        }
    }

    pub fn with_header(mut self, name: &str, value: &str) -> Self {
        self.headers.insert(name.to_ascii_lowercase(), value.to_string());
        self
    }

    pub fn with_body(mut self, body: impl Into<String>) -> Self {
        self.body = Some(body.into());
        self
    }

    fn is_empty(&self) -> bool {
        self.status.is_none() && self.error.is_none()
    }

    fn answer(&self, request: &Request) -> Result<Response, TransportError> {
        if let Some(kind) = self.error {
            return Err(TransportError::network(kind, &request.url, "replayed failure"));
        }
        let body = match request.method {
            Method::Head => Vec::new(),
            Method::Get => self.body.clone().unwrap_or_default().into_bytes(),
        };
        Ok(Response {
            status: self.status.unwrap_or(200),
            headers: self
                .headers
                .iter()
                .map(|(k, v)| (k.to_ascii_lowercase(), v.clone()))
                .collect(),
            body,
        })
    }

    fn from_result(result: &Result<Response, TransportError>) -> Option<Self> {
        match result {
            Ok(resp) => Some(Canned {
                status: Some(resp.status),
                headers: resp.headers.clone(),
                body: (!resp.body.is_empty()).then(|| resp.body_text()),
                error: None,
            }),
            Err(TransportError::Network { kind, .. }) => Some(Canned::error(*kind)),
            Err(TransportError::NotRecorded { .. }) => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReplayEntry {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub method: Option<Method>,
    pub url: String,
    #[serde(flatten)]
    pub canned: Canned,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub rounds: Vec<Canned>,
}

impl ReplayEntry {
    fn for_round(&self, round: u32) -> &Canned {
        if self.rounds.is_empty() {
            &self.canned
        } else {
            let idx = (round.max(1) as usize - 1).min(self.rounds.len() - 1);
            &self.rounds[idx]
        }
    }
}

#[derive(Serialize, Deserialize)]
struct StoreFile {
    version: u32,
    entries: Vec<ReplayEntry>,
}

/// Recorded responses keyed by method and URL.
#[derive(Clone, Debug, Default)]
pub struct ReplayStore {
    entries: Vec<ReplayEntry>,
    exact: HashMap<String, Vec<usize>>,
    prefixes: Vec<(String, usize)>,
}

impl ReplayStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ReplayError> {
        let text = fs::read_to_string(path)?;
        Self::from_json(&text)
    }

    pub fn from_json(text: &str) -> Result<Self, ReplayError> {
        let file: StoreFile = serde_json::from_str(text)?;
        if file.version != FORMAT_VERSION {
            return Err(ReplayError::Version(file.version));
        }
        let mut store = ReplayStore::new();
        for (index, entry) in file.entries.into_iter().enumerate() {
            if entry.canned.is_empty() && (entry.rounds.is_empty() || entry.rounds.iter().any(Canned::is_empty)) {
                return Err(ReplayError::EmptyEntry {
                    index,
                    url: entry.url,
                });
            }
            store.insert(entry);
        }
        Ok(store)
    }

    pub fn to_json(&self) -> String {
        let mut entries = self.entries.clone();
        entries.sort_by(|a, b| a.url.cmp(&b.url).then(a.method.cmp(&b.method)));
        let file = StoreFile {
            version: FORMAT_VERSION,
            entries,
        };
        serde_json::to_string_pretty(&file).expect("replay store serializes") + "\n"
    }

    pub fn save(&self, path: impl AsRef<Path>) -> io::Result<()> {
        fs::write(path, self.to_json())
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[ReplayEntry] {
        &self.entries
    }

    /// Adds an entry. An existing entry with the same method and URL is replaced.
    pub fn insert(&mut self, entry: ReplayEntry) {
        if let Some(idx) = self.position(entry.method, &entry.url) {
            self.entries[idx] = entry;
            return;
        }
        let idx = self.entries.len();
        match entry.url.strip_suffix('*') {
            Some(prefix) => {
                self.prefixes.push((prefix.to_string(), idx));
                self.prefixes
                    .sort_by(|a, b| b.0.len().cmp(&a.0.len()).then(a.1.cmp(&b.1)));
            }
            None => self.exact.entry(entry.url.clone()).or_default().push(idx),
        }
        self.entries.push(entry);
    }

    /// Shorthand for an entry answering every method and round the same way.
    pub fn add(&mut self, url: &str, canned: Canned) -> &mut Self {
        self.insert(ReplayEntry {
            method: None,
            url: url.to_string(),
            canned,
            rounds: Vec::new(),
        });
        self
    }

    pub fn add_method(&mut self, method: Method, url: &str, canned: Canned) -> &mut Self {
        self.insert(ReplayEntry {
            method: Some(method),
            url: url.to_string(),
            canned,
            rounds: Vec::new(),
        });
        self
    }

    pub fn add_rounds(&mut self, url: &str, rounds: Vec<Canned>) -> &mut Self {
        self.insert(ReplayEntry {
            method: None,
            url: url.to_string(),
            canned: Canned::default(),
            rounds,
        });
        self
    }

    fn position(&self, method: Option<Method>, url: &str) -> Option<usize> {
        self.entries
            .iter()
            .position(|e| e.method == method && e.url == url)
    }

    fn pick<'a>(&'a self, candidates: impl Iterator<Item = &'a ReplayEntry> + Clone, method: Method) -> Option<&'a ReplayEntry> {
        candidates
            .clone()
            .find(|e| e.method == Some(method))
            .or_else(|| candidates.clone().find(|e| e.method.is_none()))
            .or_else(|| {
                (method == Method::Head)
                    .then(|| candidates.clone().find(|e| e.method == Some(Method::Get)))
                    .flatten()
            })
    }

    pub fn lookup(&self, method: Method, url: &str) -> Option<&ReplayEntry> {
        if let Some(ids) = self.exact.get(url) {
            if let Some(e) = self.pick(ids.iter().map(|&i| &self.entries[i]), method) {
                return Some(e);
            }
        }
        // Group wildcard entries by prefix, longest first.
        let mut i = 0;
        while i < self.prefixes.len() {
            let prefix = &self.prefixes[i].0;
            let group: Vec<usize> = self.prefixes[i..]
                .iter()
                .take_while(|(p, _)| p == prefix)
                .map(|(_, idx)| *idx)
                .collect();
            if url.starts_with(prefix.as_str()) {
                if let Some(e) = self.pick(group.iter().map(|&i| &self.entries[i]), method) {
                    return Some(e);
                }
            }
            i += group.len();
        }
        None
    }

    fn record(&mut self, request: &Request, canned: Canned) {
        let round = request.round.max(1) as usize;
        match self.position(Some(request.method), &request.url) {
            Some(idx) => {
                let entry = &mut self.entries[idx];
                if entry.rounds.is_empty() {
                    entry.rounds.push(entry.canned.clone());
                    entry.canned = Canned::default();
                }
                while entry.rounds.len() < round {
                    let last = entry.rounds.last().cloned().unwrap_or_default();
                    entry.rounds.push(last);
                }
                entry.rounds[round - 1] = canned;
            }
            None => {
                let mut entry = ReplayEntry {
                    method: Some(request.method),
                    url: request.url.clone(),
                    canned: Canned::default(),
                    rounds: Vec::new(),
                };
                if round == 1 {
                    entry.canned = canned;
                } else {
                    entry.rounds = vec![canned; round];
                }
                self.insert(entry);
            }
        }
    }
}

impl Transport for ReplayStore {
    fn send(&self, request: &Request) -> Result<Response, TransportError> {
        match self.lookup(request.method, &request.url) {
            Some(entry) => entry.for_round(request.round).answer(request),
            None => Err(TransportError::NotRecorded {
                method: request.method,
                url: request.url.clone(),
            }),
        }
    }
}

/// Passes requests to an inner transport and records every answer.
pub struct RecordingTransport<T> {
    inner: T,
    store: Mutex<ReplayStore>,
}

impl<T: Transport> RecordingTransport<T> {
    pub fn new(inner: T) -> Self {
        Self::with_store(inner, ReplayStore::new())
    }

    /// Records on top of an existing store; existing entries are overwritten.
    pub fn with_store(inner: T, store: ReplayStore) -> Self {
        RecordingTransport {
            inner,
            store: Mutex::new(store),
        }
    }

    pub fn snapshot(&self) -> ReplayStore {
        self.store.lock().expect("replay store lock").clone()
    }

    pub fn into_store(self) -> ReplayStore {
        self.store.into_inner().expect("replay store lock")
    }
}

impl<T: Transport> Transport for RecordingTransport<T> {
    fn send(&self, request: &Request) -> Result<Response, TransportError> {
        let result = self.inner.send(request);
        if let Some(canned) = Canned::from_result(&result) {
            self.store
                .lock()
                .expect("replay store lock")
                .record(request, canned);
        }
        result
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lookup_precedence() {
        let mut store = ReplayStore::new();
        store
            .add("http://a.com/x", Canned::status(200).with_body("any"))
            .add_method(Method::Get, "http://a.com/*", Canned::status(404))
            .add("http://a.com/dir/*", Canned::status(410))
            .add_method(Method::Get, "http://b.com/", Canned::status(200).with_body("page"));

        assert_eq!(store.send(&Request::get("http://a.com/x")).unwrap().body, b"any");
        assert_eq!(store.send(&Request::get("http://a.com/y")).unwrap().status, 404);
        assert_eq!(store.send(&Request::head("http://a.com/dir/q")).unwrap().status, 410);
        // HEAD falls back to the GET entry without a body
        let head = store.send(&Request::head("http://b.com/")).unwrap();
        assert_eq!(head.status, 200);
        assert!(head.body.is_empty());
        assert!(matches!(
            store.send(&Request::get("http://c.com/")),
            Err(TransportError::NotRecorded { .. })
        ));
    }

    #[test]
    fn scripted_rounds() {
        let mut store = ReplayStore::new();
        store.add_rounds(
            "http://f.com/",
            vec![Canned::error(NetworkFailure::Timeout), Canned::status(200)],
        );
        let r1 = store.send(&Request::head("http://f.com/").in_round(1));
        assert_eq!(r1.unwrap_err().network_kind(), Some(NetworkFailure::Timeout));
        assert_eq!(store.send(&Request::head("http://f.com/").in_round(2)).unwrap().status, 200);
        assert_eq!(store.send(&Request::head("http://f.com/").in_round(9)).unwrap().status, 200);
    }

    #[test]
    fn json_roundtrip_and_validation() {
        let json = r#"{"version":1,"entries":[
            {"method":"HEAD","url":"http://bit.ly/2EEjBl","status":301,"headers":{"Location":"http://www.cnn.com"}},
            {"url":"http://gone.example/","error":"dns"}
        ]}"#;
        let store = ReplayStore::from_json(json).unwrap();
        let resp = store.send(&Request::head("http://bit.ly/2EEjBl")).unwrap();
        assert_eq!(resp.location(), Some("http://www.cnn.com"));
        let again = ReplayStore::from_json(&store.to_json()).unwrap();
        assert_eq!(again.entries().len(), 2);

        assert!(matches!(
            ReplayStore::from_json(r#"{"version":1,"entries":[{"url":"http://x/"}]}"#),
            Err(ReplayError::EmptyEntry { index: 0, .. })
        ));
        assert!(matches!(
            ReplayStore::from_json(r#"{"version":2,"entries":[]}"#),
            Err(ReplayError::Version(2))
        ));
    }

    #[test]
    fn recording_captures_rounds() {
        let mut source = ReplayStore::new();
        source.add_rounds(
            "http://f.com/",
            vec![Canned::status(503), Canned::status(200).with_body("hi")],
        );
        let rec = RecordingTransport::new(source);
        rec.send(&Request::get("http://f.com/").in_round(1)).unwrap();
        rec.send(&Request::get("http://f.com/").in_round(2)).unwrap();
        let store = rec.into_store();
        assert_eq!(store.send(&Request::get("http://f.com/").in_round(1)).unwrap().status, 503);
        let r2 = store.send(&Request::get("http://f.com/").in_round(2)).unwrap();
        assert_eq!((r2.status, r2.body.as_slice()), (200, &b"hi"[..]));
    }
}
