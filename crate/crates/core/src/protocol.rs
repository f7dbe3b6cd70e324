//! JSON-over-HTTP protocol spoken to a model sidecar.
//!
//! | call                  | request body                                        | 200 response          |
//! |-----------------------|-----------------------------------------------------|-----------------------|
//! | `POST /v1/generate`   | `{"caption","strength","seed_image","sample_seed"}` | `{"image"}`           |
//! | `POST /v1/distance`   | `{"image_a","image_b"}`                             | `{"distance"}`        |
//! | `GET /v1/health`      |                                                     | `{"status","model"}`  |
//!
//! Images travel as standard-alphabet, padded base64 of 8-bit RGB PNG bytes.

use std::thread;
use std::time::Duration;

use base64::engine::general_purpose::STANDARD;
use base64::Engine as _;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::raster::{decode_image, encode_image, RasterImage};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RemoteError {
    #[error("remote endpoint unavailable: {0}")]
    RemoteUnavailable(String),
    #[error("malformed remote response: {0}")]
    RemoteMalformedResponse(String),
}

#[derive(Debug, Serialize, Deserialize, PartialEq)]
pub struct GenerateRequestBody {
    pub caption: String,
    pub strength: f64,
    pub seed_image: String,
    pub sample_seed: u64,
}

#[derive(Debug, Serialize, Deserialize, PartialEq)]
pub struct GenerateResponseBody {
    pub image: String,
}

#[derive(Debug, Serialize, Deserialize, PartialEq)]
pub struct DistanceRequestBody {
    pub image_a: String,
    pub image_b: String,
}

#[derive(Debug, Serialize, Deserialize, PartialEq)]
pub struct DistanceResponseBody {
    pub distance: f64,
}

#[derive(Debug, Serialize, Deserialize, PartialEq, Clone)]
pub struct HealthResponseBody {
    pub status: String,
    pub model: String,
}

pub fn image_to_base64(img: &RasterImage) -> String {
    STANDARD.encode(encode_image(img).expect("in-memory PNG encoding"))
}

pub fn image_from_base64(text: &str) -> Result<RasterImage, RemoteError> {
    let bytes = STANDARD
        .decode(text)
        .map_err(|e| RemoteError::RemoteMalformedResponse(format!("bad base64: {e}")))?;
    decode_image(&bytes).map_err(|e| RemoteError::RemoteMalformedResponse(format!("bad image: {e}")))
}

pub fn generate_request_bytes(seed_image: &RasterImage, caption: &str, strength: f64, sample_seed: u64) -> Vec<u8> {
    let body = GenerateRequestBody {
        caption: caption.to_owned(),
        strength,
        seed_image: image_to_base64(seed_image),
        sample_seed,
    };
    serde_json::to_vec(&body).expect("request serializes")
}

pub fn distance_request_bytes(a: &RasterImage, b: &RasterImage) -> Vec<u8> {
    let body = DistanceRequestBody { image_a: image_to_base64(a), image_b: image_to_base64(b) };
    serde_json::to_vec(&body).expect("request serializes")
}

pub fn parse_generate_response(body: &[u8]) -> Result<RasterImage, RemoteError> {
    let resp: GenerateResponseBody = serde_json::from_slice(body)
        .map_err(|e| RemoteError::RemoteMalformedResponse(format!("generate response: {e}")))?;
    image_from_base64(&resp.image)
}

pub fn parse_distance_response(body: &[u8]) -> Result<f64, RemoteError> {
    let resp: DistanceResponseBody = serde_json::from_slice(body)
        .map_err(|e| RemoteError::RemoteMalformedResponse(format!("distance response: {e}")))?;
    if !(0.0..=1.0).contains(&resp.distance) {
        return Err(RemoteError::RemoteMalformedResponse(format!(
            "distance {} outside [0,1]",
            resp.distance
        )));
    }
    Ok(resp.distance)
}

/// Attempts and backoff for transient failures (transport errors, 429/502/503/504).
#[derive(Debug, Clone)]
pub struct RetryPolicy {
    pub attempts: u32,
    pub initial_backoff: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self { attempts: 3, initial_backoff: Duration::from_millis(500) }
    }
}

impl RetryPolicy {
    pub fn backoff_before(&self, retry: u32) -> Duration {
        self.initial_backoff * 2u32.saturating_pow(retry.saturating_sub(1))
    }
}

/// Blocking HTTP client shared by the remote metric and generator.
/// Cloning is cheap and clones share the connection pool.
#[derive(Clone, Debug)]
pub struct HttpClient {
    base: String,
    agent: ureq::Agent,
    retry: RetryPolicy,
}

impl HttpClient {
    pub fn new(endpoint: &str, max_connections: usize, timeout: Duration, retry: RetryPolicy) -> Self {
        let agent = ureq::AgentBuilder::new()
            .timeout(timeout)
            .max_idle_connections_per_host(max_connections.max(1))
            .build();
        Self { base: endpoint.trim_end_matches('/').to_owned(), agent, retry }
    }

    pub fn endpoint(&self) -> &str {
        &self.base
    }

    pub fn post_json(&self, path: &str, body: &[u8]) -> Result<Vec<u8>, RemoteError> {
        self.with_retry(|| {
            self.agent
                .post(&format!("{}{path}", self.base))
                .set("Content-Type", "application/json")
                .send_bytes(body)
        })
    }

    pub fn get(&self, path: &str) -> Result<Vec<u8>, RemoteError> {
        self.with_retry(|| self.agent.get(&format!("{}{path}", self.base)).call())
    }

    fn with_retry(
        &self,
        call: impl Fn() -> Result<ureq::Response, ureq::Error>,
    ) -> Result<Vec<u8>, RemoteError> {
        let mut last = String::new();
        for attempt in 0..self.retry.attempts.max(1) {
            if attempt > 0 {
                thread::sleep(self.retry.backoff_before(attempt));
            }
            match call() {
                Ok(resp) if resp.status() == 200 => return read_body(resp),
                Ok(resp) => {
                    return Err(RemoteError::RemoteMalformedResponse(format!("HTTP status {}", resp.status())))
                }
                Err(ureq::Error::Status(code, _)) if matches!(code, 429 | 502 | 503 | 504) => {
                    last = format!("HTTP status {code}");
                }
                Err(ureq::Error::Status(code, _)) => {
                    return Err(RemoteError::RemoteMalformedResponse(format!("HTTP status {code}")))
                }
                Err(ureq::Error::Transport(t)) => last = t.to_string(),
            }
        }
        Err(RemoteError::RemoteUnavailable(format!(
            "{} after {} attempts: {last}",
            self.base, self.retry.attempts
        )))
    }
}

fn read_body(resp: ureq::Response) -> Result<Vec<u8>, RemoteError> {
    use std::io::Read;
    let mut buf = Vec::new();
    resp.into_reader()
        .read_to_end(&mut buf)
        .map_err(|e| RemoteError::RemoteUnavailable(format!("reading body: {e}")))?;
    Ok(buf)
}
