use std::error::Error as _;
use std::io::Read;
use std::time::Duration;

use reqwest::blocking::Client;
use reqwest::redirect::Policy;

use super::{Method, NetworkFailure, Request, Response, Transport, TransportError, BODY_CAP};

#[derive(Clone, Debug)]
pub struct LiveConfig {
    pub timeout: Duration,
    pub user_agent: String,
}

impl Default for LiveConfig {
    fn default() -> Self {
        LiveConfig {
            timeout: Duration::from_secs(30),
            user_agent: concat!("linkrot/", env!("CARGO_PKG_VERSION")).to_string(),
        }
    }
}

/// Blocking HTTP client that never follows redirects.
pub struct LiveTransport {
    client: Client,
}

impl LiveTransport {
    pub fn new(config: &LiveConfig) -> Result<Self, reqwest::Error> {
        let client = Client::builder()
            .redirect(Policy::none())
            .timeout(config.timeout)
            .connect_timeout(config.timeout)
            .user_agent(config.user_agent.clone())
            .build()?;
        Ok(LiveTransport { client })
    }
}

fn classify(err: &reqwest::Error) -> NetworkFailure {
    if err.is_timeout() {
        return NetworkFailure::Timeout;
    }
    // hyper-util reports resolver failures as a connect error whose source
    // chain mentions DNS; there is no typed accessor for it.
    let mut source = err.source();
    while let Some(cause) = source {
        let text = cause.to_string().to_ascii_lowercase();
        if text.contains("dns") || text.contains("lookup address") || text.contains("name or service") {
            return NetworkFailure::Dns;
        }
        source = cause.source();
    }
    NetworkFailure::NoResponse
}

impl Transport for LiveTransport {
    fn send(&self, request: &Request) -> Result<Response, TransportError> {
        let builder = match request.method {
            Method::Head => self.client.head(&request.url),
            Method::Get => self.client.get(&request.url),
        };
        let resp = builder
            .send()
            .map_err(|e| TransportError::network(classify(&e), &request.url, e.to_string()))?;
        let status = resp.status().as_u16();
        let headers = resp
            .headers()
            .iter()
            .filter_map(|(k, v)| Some((k.as_str().to_ascii_lowercase(), v.to_str().ok()?.to_string())))
            .collect();
        let mut body = Vec::new();
        if request.method == Method::Get {
            resp.take(BODY_CAP as u64)
                .read_to_end(&mut body)
                .map_err(|e| TransportError::network(NetworkFailure::Timeout, &request.url, e.to_string()))?;
        }
        Ok(Response {
            status,
            headers,
            body,
        })
    }
}
