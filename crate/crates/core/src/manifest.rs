//! Paired in-training / out-of-training datasets and strength schedules.

use std::collections::HashSet;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::raster::{decode_image, RasterError, RasterImage};

pub const MANIFEST_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ManifestError {
    #[error("cannot parse manifest: {0}")]
    ManifestParse(String),
    #[error("record {id}: image {path:?} is missing or undecodable: {reason}")]
    MissingImage { id: String, path: PathBuf, reason: String },
    #[error("duplicate record id {0:?}")]
    DuplicateId(String),
    #[error("in-training record {id:?} has pair_id {pair_id:?} with no out-of-training partner")]
    UnpairedRecord { id: String, pair_id: String },
    #[error("invalid schedule: {0}")]
    InvalidSchedule(String),
    #[error("i/o error on {path:?}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Group {
    InTraining,
    InTrainingAltCaption,
    OutOfTraining,
    OutOfTrainingGenerated,
}

impl Group {
    pub const ALL: [Group; 4] = [
        Group::InTraining,
        Group::InTrainingAltCaption,
        Group::OutOfTraining,
        Group::OutOfTrainingGenerated,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Group::InTraining => "in_training",
            Group::InTrainingAltCaption => "in_training_alt_caption",
            Group::OutOfTraining => "out_of_training",
            Group::OutOfTrainingGenerated => "out_of_training_generated",
        }
    }

    pub fn is_out_family(self) -> bool {
        matches!(self, Group::OutOfTraining | Group::OutOfTrainingGenerated)
    }

    /// Membership label under the four-group recipe: both in-training
    /// conditions are members, both out-of-training conditions are not.
    pub fn default_membership(self) -> bool {
        !self.is_out_family()
    }
}

impl fmt::Display for Group {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Group {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Group::ALL
            .into_iter()
            .find(|g| g.as_str() == s)
            .ok_or_else(|| format!("unknown group {s:?}"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageRecord {
    pub id: String,
    pub image_path: PathBuf,
    pub caption: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub caption_variant: Option<String>,
    pub group: Group,
    pub pair_id: String,
}

#[derive(Debug, Serialize, Deserialize)]
struct ManifestFile {
    version: u32,
    records: Vec<ImageRecord>,
}

/// A validated manifest. `image_path`s are kept as written; they resolve
/// against `base_dir` (the manifest file's directory).
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetManifest {
    pub records: Vec<ImageRecord>,
    pub base_dir: PathBuf,
}

impl DatasetManifest {
    /// Validates record invariants (ids, pairing, caption variants). Does not
    /// touch the filesystem.
    pub fn new(records: Vec<ImageRecord>, base_dir: impl Into<PathBuf>) -> Result<Self, ManifestError> {
        validate_records(&records)?;
        Ok(Self { records, base_dir: base_dir.into() })
    }

    pub fn resolve(&self, record: &ImageRecord) -> PathBuf {
        if record.image_path.is_absolute() {
            record.image_path.clone()
        } else {
            self.base_dir.join(&record.image_path)
        }
    }

    pub fn load_image(&self, record: &ImageRecord) -> Result<RasterImage, ManifestError> {
        let path = self.resolve(record);
        let missing = |reason: String| ManifestError::MissingImage {
            id: record.id.clone(),
            path: path.clone(),
            reason,
        };
        let bytes = fs::read(&path).map_err(|e| missing(e.to_string()))?;
        decode_image(&bytes).map_err(|e: RasterError| missing(e.to_string()))
    }

    pub fn to_json(&self) -> String {
        let file = ManifestFile { version: MANIFEST_VERSION, records: self.records.clone() };
        let mut s = serde_json::to_string_pretty(&file).expect("manifest serializes");
        s.push('\n');
        s
    }

    /// Writes the manifest JSON. Images are not copied.
    pub fn save(&self, path: &Path) -> Result<(), ManifestError> {
        fs::write(path, self.to_json()).map_err(|source| ManifestError::Io { path: path.to_path_buf(), source })
    }
}

fn validate_records(records: &[ImageRecord]) -> Result<(), ManifestError> {
    let mut ids = HashSet::new();
    for r in records {
        if !ids.insert(r.id.as_str()) {
            return Err(ManifestError::DuplicateId(r.id.clone()));
        }
        if r.caption_variant.is_some() && r.group != Group::InTraining {
            return Err(ManifestError::ManifestParse(format!(
                "record {:?}: caption_variant is only allowed on in_training records",
                r.id
            )));
        }
    }
    let out_pairs: HashSet<&str> = records
        .iter()
        .filter(|r| r.group.is_out_family())
        .map(|r| r.pair_id.as_str())
        .collect();
    for r in records.iter().filter(|r| r.group == Group::InTraining) {
        if !out_pairs.contains(r.pair_id.as_str()) {
            return Err(ManifestError::UnpairedRecord { id: r.id.clone(), pair_id: r.pair_id.clone() });
        }
    }
    Ok(())
}

/// Parses manifest JSON without checking images.
pub fn parse_manifest(text: &str, base_dir: impl Into<PathBuf>) -> Result<DatasetManifest, ManifestError> {
    let file: ManifestFile =
        serde_json::from_str(text).map_err(|e| ManifestError::ManifestParse(e.to_string()))?;
    if file.version != MANIFEST_VERSION {
        return Err(ManifestError::ManifestParse(format!(
            "unsupported manifest version {} (expected {MANIFEST_VERSION})",
            file.version
        )));
    }
    DatasetManifest::new(file.records, base_dir)
}

/// Loads and fully validates a manifest, decoding every referenced image.
pub fn load_manifest(path: &Path) -> Result<DatasetManifest, ManifestError> {
    let bytes = fs::read(path).map_err(|source| ManifestError::Io { path: path.to_path_buf(), source })?;
    let text = std::str::from_utf8(&bytes).map_err(|e| ManifestError::ManifestParse(e.to_string()))?;
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    let manifest = parse_manifest(text, base)?;
    // Records may share an image file; decode each path once.
    let mut checked = HashSet::new();
    for r in &manifest.records {
        if checked.insert(manifest.resolve(r)) {
            manifest.load_image(r)?;
        }
    }
    Ok(manifest)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Orientation {
    /// Strength 0 reproduces the seed (Stable Diffusion style).
    ZeroIsSeedIdentical,
    /// Strength 0 ignores the seed (Midjourney image weight style).
    ZeroIsSeedIgnored,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrengthSchedule {
    strengths: Vec<f64>,
    orientation: Orientation,
    label: String,
}

impl StrengthSchedule {
    pub fn new(strengths: Vec<f64>, orientation: Orientation, label: impl Into<String>) -> Result<Self, ManifestError> {
        if strengths.len() < 2 {
            return Err(ManifestError::InvalidSchedule(format!(
                "need at least 2 strengths, got {}",
                strengths.len()
            )));
        }
        if strengths.iter().any(|s| !s.is_finite()) {
            return Err(ManifestError::InvalidSchedule("strengths must be finite".into()));
        }
        if strengths.windows(2).any(|w| w[1] <= w[0]) {
            return Err(ManifestError::InvalidSchedule("strengths must be strictly increasing".into()));
        }
        if orientation == Orientation::ZeroIsSeedIdentical && strengths.iter().any(|s| !(0.0..=1.0).contains(s)) {
            return Err(ManifestError::InvalidSchedule(
                "seed-identical orientation requires strengths in [0,1]".into(),
            ));
        }
        Ok(Self { strengths, orientation, label: label.into() })
    }

    pub fn strengths(&self) -> &[f64] {
        &self.strengths
    }

    pub fn orientation(&self) -> Orientation {
        self.orientation
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn len(&self) -> usize {
        self.strengths.len()
    }

    pub fn is_empty(&self) -> bool {
        self.strengths.is_empty()
    }

    pub fn contains(&self, strength: f64) -> bool {
        match self.orientation {
            Orientation::ZeroIsSeedIdentical => (0.0..=1.0).contains(&strength),
            Orientation::ZeroIsSeedIgnored => {
                strength >= self.strengths[0] && strength <= self.strengths[self.strengths.len() - 1]
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BuiltinSchedule {
    StableDiffusion,
    Midjourney,
}

pub fn builtin_schedule(name: BuiltinSchedule) -> StrengthSchedule {
    match name {
        BuiltinSchedule::StableDiffusion => StrengthSchedule::new(
            vec![0.02, 0.2, 0.4, 0.6, 0.8, 1.0],
            Orientation::ZeroIsSeedIdentical,
            "sd",
        ),
        BuiltinSchedule::Midjourney => {
            StrengthSchedule::new(vec![0.0, 1.0, 2.0, 3.0], Orientation::ZeroIsSeedIgnored, "midjourney")
        }
    }
    .expect("builtin schedules are valid")
}
