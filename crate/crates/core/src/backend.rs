//! Image-to-image generators: a deterministic mock with tunable training
//! exposure, and a client for a remote sidecar.

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::manifest::{Orientation, StrengthSchedule};
use crate::metric::{Embedding, LowFreqCosine, DEFAULT_EMBED_SIDE};
use crate::protocol::{
    generate_request_bytes, parse_generate_response, HealthResponseBody, HttpClient, RemoteError, RetryPolicy,
};
use crate::raster::{blend, decode_image, resize_nearest, RasterImage};
use crate::rng::KeyedStream;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BackendError {
    #[error("strength {0} outside the backend's accepted range")]
    StrengthOutOfRange(f64),
    #[error("schedule {0:?} is not supported by this backend: {1}")]
    UnsupportedSchedule(String, String),
    #[error(transparent)]
    Remote(#[from] RemoteError),
}

/// One call to an image-to-image pipeline.
#[derive(Debug, Clone, Copy)]
pub struct GenerationRequest<'a> {
    pub seed_image: &'a RasterImage,
    pub caption: &'a str,
    /// In the schedule's native parametrization.
    pub strength: f64,
    pub sample_seed: u64,
}

pub trait Generator: Send + Sync {
    fn generate(&self, req: &GenerationRequest<'_>) -> Result<RasterImage, BackendError>;

    /// Rejects schedules the backend cannot interpret. Remote backends own
    /// strength semantics and accept everything.
    fn check_schedule(&self, _schedule: &StrengthSchedule) -> Result<(), BackendError> {
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum MemoryError {
    #[error("exposure {0} outside [0,1]")]
    InvalidExposure(f64),
    #[error("cannot parse memory file: {0}")]
    Parse(String),
    #[error("memory image {path:?}: {reason}")]
    Image { path: PathBuf, reason: String },
    #[error("i/o error on {path:?}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

#[derive(Debug, Clone)]
pub struct MemoryEntry {
    pub image: RasterImage,
    pub caption: String,
    pub exposure: f64,
    embedding: Embedding,
    words: BTreeSet<String>,
}

impl MemoryEntry {
    pub fn embedding(&self) -> &Embedding {
        &self.embedding
    }
}

/// What the mock model "was trained on": image/caption pairs, each with an
/// exposure in [0, 1]. Exposure 1 behaves like a memorized pair.
#[derive(Debug, Clone)]
pub struct MockModelMemory {
    entries: Vec<MemoryEntry>,
    embedder: LowFreqCosine,
}

impl Default for MockModelMemory {
    fn default() -> Self {
        Self::new(DEFAULT_EMBED_SIDE)
    }
}

impl MockModelMemory {
    pub fn new(embed_side: usize) -> Self {
        Self { entries: Vec::new(), embedder: LowFreqCosine::new(embed_side) }
    }

    pub fn push(&mut self, image: RasterImage, caption: impl Into<String>, exposure: f64) -> Result<(), MemoryError> {
        if !(0.0..=1.0).contains(&exposure) {
            return Err(MemoryError::InvalidExposure(exposure));
        }
        let caption = caption.into();
        let embedding = self.embedder.embed(&image);
        let words = caption_words(&caption);
        self.entries.push(MemoryEntry { image, caption, exposure, embedding, words });
        Ok(())
    }

    pub fn entries(&self) -> &[MemoryEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn embed_side(&self) -> usize {
        self.embedder.embed_side
    }

    /// Copy with every entry's exposure replaced.
    pub fn with_exposure(&self, exposure: f64) -> Result<Self, MemoryError> {
        if !(0.0..=1.0).contains(&exposure) {
            return Err(MemoryError::InvalidExposure(exposure));
        }
        let mut out = self.clone();
        for e in &mut out.entries {
            e.exposure = exposure;
        }
        Ok(out)
    }

    /// Entry with the highest match score for a seed/caption, and that score.
    /// Ties go to the earliest entry.
    pub fn best_match(&self, seed: &RasterImage, caption: &str) -> Option<(&MemoryEntry, f64)> {
        let seed_emb = self.embedder.embed(seed);
        let words = caption_words(caption);
        let mut best: Option<(&MemoryEntry, f64)> = None;
        for e in &self.entries {
            let similarity = 1.0 - LowFreqCosine::embedding_distance(&seed_emb, &e.embedding);
            let score = 0.5 * jaccard(&words, &e.words) + 0.5 * similarity;
            if best.is_none_or(|(_, s)| score > s) {
                best = Some((e, score));
            }
        }
        best
    }

    /// Writes a memory file referencing already-written images by
    /// the given relative paths (one per entry, in order).
    pub fn save(&self, path: &Path, image_paths: &[PathBuf]) -> Result<(), MemoryError> {
        assert_eq!(image_paths.len(), self.entries.len());
        let file = MemoryFile {
            version: 1,
            embed_side: self.embed_side(),
            entries: self
                .entries
                .iter()
                .zip(image_paths)
                .map(|(e, p)| MemoryFileEntry { image_path: p.clone(), caption: e.caption.clone(), exposure: e.exposure })
                .collect(),
        };
        let mut text = serde_json::to_string_pretty(&file).expect("memory serializes");
        text.push('\n');
        fs::write(path, text).map_err(|source| MemoryError::Io { path: path.to_path_buf(), source })
    }

    /// Loads a memory file; image paths resolve against the file's directory.
    pub fn load(path: &Path) -> Result<Self, MemoryError> {
        let text = fs::read_to_string(path).map_err(|source| MemoryError::Io { path: path.to_path_buf(), source })?;
        let file: MemoryFile = serde_json::from_str(&text).map_err(|e| MemoryError::Parse(e.to_string()))?;
        if file.version != 1 {
            return Err(MemoryError::Parse(format!("unsupported memory version {}", file.version)));
        }
        if file.embed_side == 0 {
            return Err(MemoryError::Parse("embed_side must be at least 1".into()));
        }
        let base = path.parent().unwrap_or(Path::new(""));
        let mut memory = Self::new(file.embed_side);
        for e in file.entries {
            let p = base.join(&e.image_path);
            let bytes = fs::read(&p).map_err(|err| MemoryError::Image { path: p.clone(), reason: err.to_string() })?;
            let image = decode_image(&bytes).map_err(|err| MemoryError::Image { path: p.clone(), reason: err.to_string() })?;
            memory.push(image, e.caption, e.exposure)?;
        }
        Ok(memory)
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct MemoryFile {
    version: u32,
    embed_side: usize,
    entries: Vec<MemoryFileEntry>,
}

#[derive(Debug, Serialize, Deserialize)]
struct MemoryFileEntry {
    image_path: PathBuf,
    caption: String,
    exposure: f64,
}

fn caption_words(caption: &str) -> BTreeSet<String> {
    caption
        .split(|c: char| !c.is_alphanumeric())
        .filter(|w| !w.is_empty())
        .map(str::to_lowercase)
        .collect()
}

fn jaccard(a: &BTreeSet<String>, b: &BTreeSet<String>) -> f64 {
    let union = a.union(b).count();
    if union == 0 {
        return 1.0;
    }
    a.intersection(b).count() as f64 / union as f64
}

/// Word-set Jaccard overlap of two captions, case-insensitive.
pub fn caption_overlap(a: &str, b: &str) -> f64 {
    jaccard(&caption_words(a), &caption_words(b))
}

/// Noise scale at full strength with no attraction.
const NOISE_SIGMA: f64 = 0.02;

/// Deterministic mock image-to-image generation.
///
/// The output blends the seed toward a target image by `strength`. The
/// target is keyed uniform noise pulled toward the best-matching memory
/// entry by `exposure * match`, so well-learned seeds drift less. A small
/// Gaussian jitter scaled by `strength * (1 - attraction)` is added last.
pub fn mock_generate(memory: &MockModelMemory, req: &GenerationRequest<'_>) -> Result<RasterImage, BackendError> {
    let strength = req.strength;
    if !(0.0..=1.0).contains(&strength) {
        return Err(BackendError::StrengthOutOfRange(strength));
    }
    let seed = req.seed_image;
    let (w, h) = (seed.width(), seed.height());

    let (attraction, attractor) = match memory.best_match(seed, req.caption) {
        Some((entry, score)) => (entry.exposure * score, Some(&entry.image)),
        None => (0.0, None),
    };

    let mut stream = KeyedStream::for_generation(req.sample_seed, req.caption);
    let noise_data: Vec<f64> = (0..seed.data().len()).map(|_| stream.next_f64()).collect();
    let noise = RasterImage::new(w, h, noise_data).expect("uniform draws lie in [0,1)");

    let target = match attractor {
        Some(img) if attraction > 0.0 => {
            let img = resize_nearest(img, w, h);
            blend(&noise, &img, attraction).expect("same dimensions")
        }
        _ => noise,
    };
    let out = blend(seed, &target, strength).expect("same dimensions");

    let sigma = NOISE_SIGMA * strength * (1.0 - attraction);
    if sigma <= 0.0 {
        return Ok(out);
    }
    let jittered = out.data().iter().map(|&v| v + sigma * stream.next_gaussian()).collect();
    Ok(RasterImage::from_clamped(w, h, jittered).expect("dimensions preserved"))
}

/// Mock generator bound to a memory.
#[derive(Debug, Clone, Default)]
pub struct MockBackend {
    pub memory: MockModelMemory,
}

impl MockBackend {
    pub fn new(memory: MockModelMemory) -> Self {
        Self { memory }
    }
}

impl Generator for MockBackend {
    fn generate(&self, req: &GenerationRequest<'_>) -> Result<RasterImage, BackendError> {
        mock_generate(&self.memory, req)
    }

    fn check_schedule(&self, schedule: &StrengthSchedule) -> Result<(), BackendError> {
        if schedule.orientation() != Orientation::ZeroIsSeedIdentical {
            return Err(BackendError::UnsupportedSchedule(
                schedule.label().to_owned(),
                "the mock backend only implements zero_is_seed_identical strengths".into(),
            ));
        }
        Ok(())
    }
}

/// Client for `POST /v1/generate` on a generation sidecar.
#[derive(Debug, Clone)]
pub struct RemoteBackend {
    client: HttpClient,
}

impl RemoteBackend {
    pub fn new(endpoint: &str, concurrency: usize) -> Self {
        Self::with_client(HttpClient::new(endpoint, concurrency, Duration::from_secs(300), RetryPolicy::default()))
    }

    pub fn with_client(client: HttpClient) -> Self {
        Self { client }
    }

    pub fn health(&self) -> Result<HealthResponseBody, RemoteError> {
        let body = self.client.get("/v1/health")?;
        serde_json::from_slice(&body).map_err(|e| RemoteError::RemoteMalformedResponse(format!("health: {e}")))
    }
}

/// One remote generation call. The strength is sent untransformed.
pub fn remote_generate(client: &HttpClient, req: &GenerationRequest<'_>) -> Result<RasterImage, RemoteError> {
    let body = generate_request_bytes(req.seed_image, req.caption, req.strength, req.sample_seed);
    let resp = client.post_json("/v1/generate", &body)?;
    parse_generate_response(&resp)
}

impl Generator for RemoteBackend {
    fn generate(&self, req: &GenerationRequest<'_>) -> Result<RasterImage, BackendError> {
        Ok(remote_generate(&self.client, req)?)
    }
}
