//! Black-box membership inference for image-to-image generative models.
//!
//! A seed image and its caption are pushed through an image-to-image
//! generator at a schedule of strengths, `n` times each. Every output is
//! scored against the seed with a perceptual distance, and the per-strength
//! minimum forms a distance vector. Images the model was trained on drift
//! less from the seed, which shows up both in population statistics
//! ([`stats`]) and in a logistic-regression membership classifier
//! ([`classifier`]).
//!
//! Everything runs offline against [`backend::MockBackend`] and the built-in
//! [`metric::LowFreqCosine`] metric; [`backend::RemoteBackend`] and
//! [`metric::RemoteMetric`] speak the sidecar protocol in [`protocol`].

pub mod backend;
pub mod classifier;
pub mod manifest;
pub mod metric;
pub mod mock_data;
pub mod probe;
pub mod protocol;
pub mod raster;
pub mod rng;
pub mod stats;

pub use backend::{mock_generate, remote_generate, GenerationRequest, Generator, MockBackend, MockModelMemory, RemoteBackend};
pub use classifier::{evaluate_splits, fit, roc_metrics, EvalConfig, EvalSummary, FitConfig, LabelMap, MembershipModel};
pub use manifest::{builtin_schedule, load_manifest, BuiltinSchedule, DatasetManifest, Group, ImageRecord, StrengthSchedule};
pub use metric::{LowFreqCosine, Metric, MetricDescriptor, MetricKind, PerceptualMetric, RemoteMetric};
pub use mock_data::{make_mock_dataset, MockDataset, MockDatasetConfig};
pub use probe::{probe_dataset, probe_image, read_run, write_run, ProbeConfig, ProbeRecord, RunHeader};
pub use raster::{blend, decode_image, encode_image, resample_grayscale, RasterImage};
pub use stats::{cohens_d, compare_groups, fit_density, log_density_curve, t_test_independent, StatsReport};
