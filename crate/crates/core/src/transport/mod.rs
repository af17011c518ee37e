//! Pluggable HTTP request interface.
//!
//! Every networked operation in the crate goes through [`Transport`], so the
//! same code runs against the live web ([`LiveTransport`]) or a recorded
//! fixture ([`ReplayStore`]). Transports never follow redirects themselves.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

mod live;
mod replay;

pub use live::{LiveConfig, LiveTransport};
pub use replay::{Canned, RecordingTransport, ReplayEntry, ReplayError, ReplayStore};

/// Upper bound on body bytes kept from any response.
pub const BODY_CAP: usize = 512 * 1024;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Method {
    Head,
    Get,
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::Head => "HEAD",
            Method::Get => "GET",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Request {
    pub method: Method,
    pub url: String,
    /// Audit round this request belongs to, starting at 1. Live transports
    /// ignore it; replay fixtures can use it to script transient failures.
    pub round: u32,
}

impl Request {
    pub fn head(url: impl Into<String>) -> Self {
        Request {
            method: Method::Head,
            url: url.into(),
            round: 1,
        }
    }

    pub fn get(url: impl Into<String>) -> Self {
        Request {
            method: Method::Get,
            url: url.into(),
            round: 1,
        }
    }

    pub fn in_round(mut self, round: u32) -> Self {
        self.round = round.max(1);
        self
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Response {
    pub status: u16,
    /// Header names are lowercased.
    pub headers: BTreeMap<String, String>,
    pub body: Vec<u8>,
}

impl Response {
    pub fn new(status: u16) -> Self {
        Response {
            status,
            ..Default::default()
        }
    }

    pub fn with_header(mut self, name: &str, value: &str) -> Self {
        self.headers.insert(name.to_ascii_lowercase(), value.to_string());
        self
    }

    pub fn with_body(mut self, body: impl Into<Vec<u8>>) -> Self {
        self.body = body.into();
        self
    }

    pub fn header(&self, name: &str) -> Option<&str> {
        self.headers.get(&name.to_ascii_lowercase()).map(String::as_str)
    }

    pub fn location(&self) -> Option<&str> {
        self.header("location")
    }

    pub fn is_redirect(&self) -> bool {
        (300..400).contains(&self.status)
    }

    pub fn body_text(&self) -> String {
        let end = self.body.len().min(BODY_CAP);
        String::from_utf8_lossy(&self.body[..end]).into_owned()
    }
}

/// Ways a request can fail to produce an HTTP response.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NetworkFailure {
    Dns,
    Timeout,
    NoResponse,
}

impl NetworkFailure {
    pub const ALL: [NetworkFailure; 3] = [
        NetworkFailure::Dns,
        NetworkFailure::Timeout,
        NetworkFailure::NoResponse,
    ];
}

#[derive(Clone, Debug, Error, PartialEq, Eq)]
pub enum TransportError {
    #[error("{kind:?} while requesting {url}: {detail}")]
    Network {
        kind: NetworkFailure,
        url: String,
        detail: String,
    },
    /// The replay store has no entry and live access is disabled.
    #[error("no recorded response for {method} {url}")]
    NotRecorded { method: Method, url: String },
}

impl TransportError {
    pub fn network(kind: NetworkFailure, url: &str, detail: impl Into<String>) -> Self {
        TransportError::Network {
            kind,
            url: url.to_string(),
            detail: detail.into(),
        }
    }

    pub fn network_kind(&self) -> Option<NetworkFailure> {
        match self {
            TransportError::Network { kind, .. } => Some(*kind),
            TransportError::NotRecorded { .. } => None,
        }
    }
}

pub trait Transport: Send + Sync {
    fn send(&self, request: &Request) -> Result<Response, TransportError>;
}

impl<T: Transport + ?Sized> Transport for &T {
    fn send(&self, request: &Request) -> Result<Response, TransportError> {
        (**self).send(request)
    }
}

impl<T: Transport + ?Sized> Transport for Arc<T> {
    fn send(&self, request: &Request) -> Result<Response, TransportError> {
        (**self).send(request)
    }
}

impl<T: Transport + ?Sized> Transport for Box<T> {
    fn send(&self, request: &Request) -> Result<Response, TransportError> {
        (**self).send(request)
    }
}

/// Wraps a transport and counts the requests passed through it.
pub struct CountingTransport<T> {
    inner: T,
    requests: AtomicUsize,
}

impl<T: Transport> CountingTransport<T> {
    pub fn new(inner: T) -> Self {
        CountingTransport {
            inner,
            requests: AtomicUsize::new(0),
        }
    }

    pub fn requests(&self) -> usize {
        self.requests.load(Ordering::SeqCst)
    }

    pub fn reset(&self) {
        self.requests.store(0, Ordering::SeqCst);
    }

    pub fn into_inner(self) -> T {
        self.inner
    }
}

impl<T: Transport> Transport for CountingTransport<T> {
    fn send(&self, request: &Request) -> Result<Response, TransportError> {
        self.requests.fetch_add(1, Ordering::SeqCst);
        self.inner.send(request)
    }
}

/// Adapter turning a closure into a transport; handy in tests.
pub struct FnTransport<F>(pub F);

impl<F> Transport for FnTransport<F>
where
    F: Fn(&Request) -> Result<Response, TransportError> + Send + Sync,
{
    fn send(&self, request: &Request) -> Result<Response, TransportError> {
        (self.0)(request)
    }
}

/// GET that follows up to `max_redirects` redirects.
///
/// Loops and redirects without a usable Location are reported as
/// [`NetworkFailure::NoResponse`].
pub fn get_following(
    transport: &dyn Transport,
    uri: &str,
    round: u32,
    max_redirects: usize,
) -> Result<Response, TransportError> {
    let mut current = uri.to_string();
    let mut seen = std::collections::HashSet::new();
    for _ in 0..=max_redirects {
        if !seen.insert(current.clone()) {
            break;
        }
        let resp = transport.send(&Request::get(&current).in_round(round))?;
        if !resp.is_redirect() {
            return Ok(resp);
        }
        let next = resp
            .location()
            .and_then(|loc| url::Url::parse(&current).ok()?.join(loc).ok())
            .ok_or_else(|| TransportError::network(NetworkFailure::NoResponse, &current, "redirect without location"))?;
        current = next.to_string();
    }
    Err(TransportError::network(NetworkFailure::NoResponse, uri, "redirect loop"))
}
