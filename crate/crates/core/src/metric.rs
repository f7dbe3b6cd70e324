//! Perceptual distances in [0, 1] between a seed and a generated image.
//!
//! The built-in `lowfreq_cosine` metric compares zero-meaned, box-filtered
//! luminance thumbnails by cosine. It needs no weights or network and is the
//! default for offline runs; a learned embedding metric can be plugged in
//! through the remote sidecar.

use std::fmt;
use std::str::FromStr;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::protocol::{distance_request_bytes, parse_distance_response, HttpClient, RemoteError, RetryPolicy};
use crate::raster::{resample_grayscale, RasterImage};

pub type MetricError = RemoteError;

pub const DEFAULT_EMBED_SIDE: usize = 32;

/// Embeddings with RMS below this are treated as exactly zero.
const ZERO_NORM_RMS: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricKind {
    LowfreqCosine,
    Remote,
}

impl MetricKind {
    pub fn as_str(self) -> &'static str {
        match self {
            MetricKind::LowfreqCosine => "lowfreq_cosine",
            MetricKind::Remote => "remote",
        }
    }
}

impl fmt::Display for MetricKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for MetricKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "lowfreq_cosine" | "lowfreq" => Ok(MetricKind::LowfreqCosine),
            "remote" => Ok(MetricKind::Remote),
            other => Err(format!("unknown metric kind {other:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricDescriptor {
    pub kind: MetricKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub remote_endpoint: Option<String>,
    pub embed_side: usize,
}

impl MetricDescriptor {
    pub fn lowfreq(embed_side: usize) -> Self {
        Self { kind: MetricKind::LowfreqCosine, remote_endpoint: None, embed_side }
    }

    pub fn remote(endpoint: impl Into<String>) -> Self {
        Self { kind: MetricKind::Remote, remote_endpoint: Some(endpoint.into()), embed_side: DEFAULT_EMBED_SIDE }
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.embed_side == 0 {
            return Err("embed_side must be at least 1".into());
        }
        match (self.kind, &self.remote_endpoint) {
            (MetricKind::Remote, None) => Err("remote metric requires an endpoint".into()),
            (MetricKind::LowfreqCosine, Some(_)) => Err("lowfreq_cosine metric takes no endpoint".into()),
            _ => Ok(()),
        }
    }
}

impl Default for MetricDescriptor {
    fn default() -> Self {
        Self::lowfreq(DEFAULT_EMBED_SIDE)
    }
}

pub trait PerceptualMetric: Send + Sync {
    fn distance(&self, a: &RasterImage, b: &RasterImage) -> Result<f64, MetricError>;
    fn kind(&self) -> MetricKind;
}

/// Zero-meaned luminance thumbnail plus its squared norm.
#[derive(Debug, Clone, PartialEq)]
pub struct Embedding {
    values: Vec<f64>,
    norm_sq: f64,
}

impl Embedding {
    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LowFreqCosine {
    pub embed_side: usize,
}

impl LowFreqCosine {
    pub fn new(embed_side: usize) -> Self {
        assert!(embed_side >= 1, "embed_side must be at least 1");
        Self { embed_side }
    }

    pub fn embed(&self, img: &RasterImage) -> Embedding {
        let mut values = resample_grayscale(img, self.embed_side);
        let mean = values.iter().sum::<f64>() / values.len() as f64;
        for v in &mut values {
            *v -= mean;
        }
        let mut norm_sq: f64 = values.iter().map(|v| v * v).sum();
        // Uneven box cells leave ulp-level residue on uniform images.
        if norm_sq <= ZERO_NORM_RMS * ZERO_NORM_RMS * values.len() as f64 {
            values.iter_mut().for_each(|v| *v = 0.0);
            norm_sq = 0.0;
        }
        Embedding { values, norm_sq }
    }

    /// `(1 - cos) / 2`, with zero-norm embeddings at distance 0 from each
    /// other and 1 from everything else.
    pub fn embedding_distance(a: &Embedding, b: &Embedding) -> f64 {
        match (a.norm_sq == 0.0, b.norm_sq == 0.0) {
            (true, true) => return 0.0,
            (true, false) | (false, true) => return 1.0,
            _ => {}
        }
        let dot: f64 = a.values.iter().zip(&b.values).map(|(x, y)| x * y).sum();
        let cos = (dot / (a.norm_sq * b.norm_sq).sqrt()).clamp(-1.0, 1.0);
        ((1.0 - cos) / 2.0).clamp(0.0, 1.0)
    }
}

impl PerceptualMetric for LowFreqCosine {
    fn distance(&self, a: &RasterImage, b: &RasterImage) -> Result<f64, MetricError> {
        Ok(Self::embedding_distance(&self.embed(a), &self.embed(b)))
    }

    fn kind(&self) -> MetricKind {
        MetricKind::LowfreqCosine
    }
}

/// Client for `POST /v1/distance` on a metric sidecar.
#[derive(Debug, Clone)]
pub struct RemoteMetric {
    client: HttpClient,
}

impl RemoteMetric {
    pub fn new(endpoint: &str, concurrency: usize) -> Self {
        Self::with_client(HttpClient::new(endpoint, concurrency, Duration::from_secs(60), RetryPolicy::default()))
    }

    pub fn with_client(client: HttpClient) -> Self {
        Self { client }
    }
}

impl PerceptualMetric for RemoteMetric {
    fn distance(&self, a: &RasterImage, b: &RasterImage) -> Result<f64, MetricError> {
        let body = self.client.post_json("/v1/distance", &distance_request_bytes(a, b))?;
        parse_distance_response(&body)
    }

    fn kind(&self) -> MetricKind {
        MetricKind::Remote
    }
}

/// A metric built from a descriptor.
#[derive(Debug, Clone)]
pub enum Metric {
    LowfreqCosine(LowFreqCosine),
    Remote(RemoteMetric),
}

impl Metric {
    pub fn from_descriptor(desc: &MetricDescriptor, concurrency: usize) -> Result<Self, String> {
        desc.validate()?;
        Ok(match desc.kind {
            MetricKind::LowfreqCosine => Metric::LowfreqCosine(LowFreqCosine::new(desc.embed_side)),
            MetricKind::Remote => Metric::Remote(RemoteMetric::new(
                desc.remote_endpoint.as_deref().expect("validated"),
                concurrency,
            )),
        })
    }
}

impl PerceptualMetric for Metric {
    fn distance(&self, a: &RasterImage, b: &RasterImage) -> Result<f64, MetricError> {
        match self {
            Metric::LowfreqCosine(m) => m.distance(a, b),
            Metric::Remote(m) => m.distance(a, b),
        }
    }

    fn kind(&self) -> MetricKind {
        match self {
            Metric::LowfreqCosine(m) => m.kind(),
            Metric::Remote(m) => m.kind(),
        }
    }
}

/// One-shot distance under a descriptor.
pub fn distance(desc: &MetricDescriptor, a: &RasterImage, b: &RasterImage) -> Result<f64, MetricError> {
    Metric::from_descriptor(desc, 1)
        .map_err(RemoteError::RemoteMalformedResponse)?
        .distance(a, b)
}
