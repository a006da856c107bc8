use std::fmt;
use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::MatchError;

pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(30);

/// Validated `http(s)://host[:port]/path` address of a scoring service.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "EndpointRepr", into = "EndpointRepr")]
pub struct Endpoint {
    url: String,
    timeout: Duration,
}

#[derive(Serialize, Deserialize)]
struct EndpointRepr {
    url: String,
    #[serde(default = "default_timeout_ms")]
    timeout_ms: u64,
}

fn default_timeout_ms() -> u64 {
    DEFAULT_TIMEOUT.as_millis() as u64
}

impl TryFrom<EndpointRepr> for Endpoint {
    type Error = MatchError;

    fn try_from(r: EndpointRepr) -> Result<Self, MatchError> {
        Endpoint::with_timeout(r.url, Duration::from_millis(r.timeout_ms))
    }
}

impl From<Endpoint> for EndpointRepr {
    fn from(e: Endpoint) -> Self {
        EndpointRepr {
            url: e.url,
            timeout_ms: e.timeout.as_millis() as u64,
        }
    }
}

impl Endpoint {
    pub fn new(url: impl Into<String>) -> Result<Self, MatchError> {
        Self::with_timeout(url, DEFAULT_TIMEOUT)
    }

    pub fn with_timeout(url: impl Into<String>, timeout: Duration) -> Result<Self, MatchError> {
        let url = url.into();
        let bad = |why: &str| MatchError::InvalidEndpoint(format!("{url:?}: {why}"));
        let uri: ureq::http::Uri = url.parse().map_err(|_| bad("not a valid URI"))?;
        match uri.scheme_str() {
            Some("http") | Some("https") => {}
            _ => return Err(bad("scheme must be http or https")),
        }
        if uri.host().is_none_or(str::is_empty) {
            return Err(bad("missing host"));
        }
        if timeout.is_zero() {
            return Err(bad("timeout must be positive"));
        }
        Ok(Self { url, timeout })
    }

    pub fn url(&self) -> &str {
        &self.url
    }

    pub fn timeout(&self) -> Duration {
        self.timeout
    }
}

impl fmt::Display for Endpoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.url)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TransportFailure {
    pub message: String,
    pub retryable: bool,
}

/// One JSON request/response exchange. Returns the raw response body so
/// parse failures can carry it.
pub trait Transport: Send + Sync + fmt::Debug {
    fn post_json(&self, endpoint: &Endpoint, body: &Value) -> Result<String, TransportFailure>;
}

/// Blocking HTTP POST transport.
#[derive(Debug, Default)]
pub struct HttpTransport;

impl Transport for HttpTransport {
    fn post_json(&self, endpoint: &Endpoint, body: &Value) -> Result<String, TransportFailure> {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(endpoint.timeout()))
            .http_status_as_error(false)
            .build()
            .into();
        let mut resp = agent.post(endpoint.url()).send_json(body).map_err(|e| TransportFailure {
            message: e.to_string(),
            retryable: true,
        })?;
        let status = resp.status().as_u16();
        let text = resp.body_mut().read_to_string().map_err(|e| TransportFailure {
            message: e.to_string(),
            retryable: true,
        })?;
        if (200..300).contains(&status) {
            Ok(text)
        } else {
            Err(TransportFailure {
                message: format!("HTTP {status}: {}", truncate(&text, 200)),
                retryable: status >= 500 || status == 429 || status == 408,
            })
        }
    }
}

fn truncate(s: &str, max: usize) -> &str {
    match s.char_indices().nth(max) {
        Some((i, _)) => &s[..i],
        None => s,
    }
}

/// Capped exponential backoff: attempt `k` (1-based) waits
/// `min(base * 2^(k-1), cap)` before attempt `k + 1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RetryPolicy {
    pub max_attempts: u32,
    pub base_delay_ms: u64,
    pub max_delay_ms: u64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            max_attempts: 3,
            base_delay_ms: 200,
            max_delay_ms: 2_000,
        }
    }
}

impl RetryPolicy {
    pub fn no_delay(max_attempts: u32) -> Self {
        Self {
            max_attempts,
            base_delay_ms: 0,
            max_delay_ms: 0,
        }
    }

    pub fn delay_after(&self, attempt: u32) -> Duration {
        let factor = 1u64.checked_shl(attempt.saturating_sub(1)).unwrap_or(u64::MAX);
        Duration::from_millis(self.base_delay_ms.saturating_mul(factor).min(self.max_delay_ms))
    }
}

/// Endpoint plus the transport and retry policy used to reach it.
#[derive(Debug, Clone)]
pub struct Client {
    endpoint: Endpoint,
    transport: Arc<dyn Transport>,
    retry: RetryPolicy,
}

impl Client {
    pub fn http(endpoint: Endpoint) -> Self {
        Self::new(endpoint, Arc::new(HttpTransport), RetryPolicy::default())
    }

    pub fn new(endpoint: Endpoint, transport: Arc<dyn Transport>, retry: RetryPolicy) -> Self {
        Self {
            endpoint,
            transport,
            retry,
        }
    }

    pub fn endpoint(&self) -> &Endpoint {
        &self.endpoint
    }

    pub fn retry(&self) -> RetryPolicy {
        self.retry
    }

    /// Posts `body`, retrying retryable failures, and decodes the reply with
    /// `decode`. Decode failures are not retried.
    pub fn call<T>(&self, body: &Value, decode: impl Fn(&str) -> Result<T, MatchError>) -> Result<T, MatchError> {
        let max = self.retry.max_attempts.max(1);
        let mut attempt = 0;
        loop {
            attempt += 1;
            match self.transport.post_json(&self.endpoint, body) {
                Ok(raw) => return decode(&raw),
                Err(f) if f.retryable && attempt < max => std::thread::sleep(self.retry.delay_after(attempt)),
                Err(f) => {
                    return Err(MatchError::Transport {
                        attempts: attempt,
                        message: f.message,
                    })
                }
            }
        }
    }
}
