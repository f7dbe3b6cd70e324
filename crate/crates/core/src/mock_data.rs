//! Synthetic paired datasets for exercising the pipeline without a real
//! model: smooth random images, synthetic captions, and a mock memory holding
//! exactly the in-training pairs.

use std::f64::consts::TAU;
use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::backend::{MemoryError, MockModelMemory};
use crate::manifest::{DatasetManifest, Group, ImageRecord, ManifestError};
use crate::metric::DEFAULT_EMBED_SIDE;
use crate::raster::{encode_image, RasterImage};

pub const DEFAULT_EXPOSURE: f64 = 0.9;

#[derive(Debug, Clone)]
pub struct MockDatasetConfig {
    pub pairs: usize,
    pub image_side: usize,
    pub rng_seed: u64,
    pub exposure: f64,
    pub embed_side: usize,
    /// Also emit `in_training_alt_caption` and `out_of_training_generated`
    /// records, one of each per pair.
    pub four_groups: bool,
}

impl MockDatasetConfig {
    pub fn new(pairs: usize, image_side: usize, rng_seed: u64) -> Self {
        Self {
            pairs,
            image_side,
            rng_seed,
            exposure: DEFAULT_EXPOSURE,
            embed_side: DEFAULT_EMBED_SIDE,
            four_groups: false,
        }
    }
}

/// A generated dataset held in memory until written.
#[derive(Debug, Clone)]
pub struct MockDataset {
    pub manifest: DatasetManifest,
    pub memory: MockModelMemory,
    /// Every distinct image, keyed by its manifest-relative path.
    pub images: Vec<(PathBuf, RasterImage)>,
    /// Manifest-relative image path of each memory entry.
    pub memory_paths: Vec<PathBuf>,
}

#[derive(Debug, thiserror::Error)]
pub enum MockDataError {
    #[error("pairs must be at least 1")]
    NoPairs,
    #[error("image side must be at least 1")]
    ZeroSide,
    #[error(transparent)]
    Manifest(#[from] ManifestError),
    #[error(transparent)]
    Memory(#[from] MemoryError),
    #[error("i/o error on {path:?}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

const ADJECTIVES: &[&str] = &[
    "red", "amber", "golden", "pale", "dark", "misty", "sunlit", "rusty", "quiet", "crowded", "narrow", "wide",
    "ancient", "modern", "wooden", "stone", "glass", "snowy", "rainy", "green",
];
const SUBJECTS: &[&str] = &[
    "bridge", "tower", "fountain", "bicycle", "lamppost", "market", "church", "doorway", "staircase", "statue",
    "boat", "tram", "garden", "cafe", "alley", "archway", "window", "mural", "bench", "clocktower",
];
const PLACES: &[&str] = &[
    "harbor", "plaza", "riverside", "hillside", "boulevard", "courtyard", "park", "station", "pier", "square",
    "village", "campus", "rooftop", "waterfront", "suburb", "avenue", "meadow", "canal", "quay", "terrace",
];
const TIMES: &[&str] = &["dawn", "noon", "dusk", "night", "morning", "afternoon", "evening", "twilight"];

// Disjoint from the lists above so alternate captions share no words with
// the originals.
const ALT_WORDS: &[&str] = &[
    "photograph", "scene", "view", "picture", "snapshot", "image", "depiction", "capture", "outdoor", "urban",
    "landscape", "shot", "frame", "vista", "composition", "setting", "moment", "glimpse", "panorama", "study",
];

fn synthetic_caption(rng: &mut impl Rng) -> String {
    format!(
        "{} {} near the {} at {}",
        ADJECTIVES.choose(rng).unwrap(),
        SUBJECTS.choose(rng).unwrap(),
        PLACES.choose(rng).unwrap(),
        TIMES.choose(rng).unwrap()
    )
}

fn alternate_caption(rng: &mut impl Rng) -> String {
    let words: Vec<&str> = ALT_WORDS.choose_multiple(rng, 4).copied().collect();
    words.join(" ")
}

/// A smooth random image: per-channel base colour plus a handful of
/// low-frequency plane waves, quantized to 8 bits so it survives PNG I/O
/// bit-exactly.
pub fn structured_image(side: usize, rng: &mut impl Rng) -> RasterImage {
    struct Wave {
        fx: f64,
        fy: f64,
        phase: f64,
        amp: [f64; 3],
    }
    let base: [f64; 3] = std::array::from_fn(|_| rng.gen_range(0.3..0.7));
    let waves: Vec<Wave> = (0..5)
        .map(|_| Wave {
            fx: rng.gen_range(-3.0..3.0),
            fy: rng.gen_range(-3.0..3.0),
            phase: rng.gen_range(0.0..TAU),
            amp: std::array::from_fn(|_| rng.gen_range(-0.12..0.12)),
        })
        .collect();
    let s = side as f64;
    RasterImage::from_fn(side, side, |x, y, c| {
        let (u, v) = (x as f64 / s, y as f64 / s);
        base[c]
            + waves
                .iter()
                .map(|w| w.amp[c] * (TAU * (w.fx * u + w.fy * v) + w.phase).cos())
                .sum::<f64>()
    })
    .expect("valid dimensions")
    .quantized()
}

/// Builds a paired dataset and the mock memory that "trained" on its
/// in-training half.
pub fn make_mock_dataset(cfg: &MockDatasetConfig) -> Result<MockDataset, MockDataError> {
    if cfg.pairs == 0 {
        return Err(MockDataError::NoPairs);
    }
    if cfg.image_side == 0 {
        return Err(MockDataError::ZeroSide);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed);
    // Separate stream so the in/out records match the two-group set.
    let mut gen_rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed);
    gen_rng.set_stream(1);
    let mut records = Vec::new();
    let mut images = Vec::new();
    let mut memory = MockModelMemory::new(cfg.embed_side);
    let mut memory_paths = Vec::new();

    for k in 0..cfg.pairs {
        let pair_id = format!("p{k:04}");
        let in_path = PathBuf::from(format!("images/in_{k:04}.png"));
        let out_path = PathBuf::from(format!("images/out_{k:04}.png"));
        let in_img = structured_image(cfg.image_side, &mut rng);
        let out_img = structured_image(cfg.image_side, &mut rng);
        let in_caption = synthetic_caption(&mut rng);
        let out_caption = synthetic_caption(&mut rng);
        let variant = alternate_caption(&mut rng);

        memory.push(in_img.clone(), in_caption.clone(), cfg.exposure)?;
        memory_paths.push(in_path.clone());

        records.push(ImageRecord {
            id: format!("in_{k:04}"),
            image_path: in_path.clone(),
            caption: in_caption.clone(),
            caption_variant: Some(variant.clone()),
            group: Group::InTraining,
            pair_id: pair_id.clone(),
        });
        records.push(ImageRecord {
            id: format!("out_{k:04}"),
            image_path: out_path.clone(),
            caption: out_caption,
            caption_variant: None,
            group: Group::OutOfTraining,
            pair_id: pair_id.clone(),
        });
        images.push((in_path.clone(), in_img));
        images.push((out_path, out_img));

        if cfg.four_groups {
            // Stand-in for a text-to-image rendering of the in-training
            // caption by an unrelated model.
            let gen_path = PathBuf::from(format!("images/gen_{k:04}.png"));
            let gen_img = structured_image(cfg.image_side, &mut gen_rng);
            records.push(ImageRecord {
                id: format!("alt_{k:04}"),
                image_path: in_path,
                caption: variant,
                caption_variant: None,
                group: Group::InTrainingAltCaption,
                pair_id: pair_id.clone(),
            });
            records.push(ImageRecord {
                id: format!("gen_{k:04}"),
                image_path: gen_path.clone(),
                caption: in_caption,
                caption_variant: None,
                group: Group::OutOfTrainingGenerated,
                pair_id,
            });
            images.push((gen_path, gen_img));
        }
    }

    Ok(MockDataset {
        manifest: DatasetManifest::new(records, PathBuf::new())?,
        memory,
        images,
        memory_paths,
    })
}

impl MockDataset {
    /// Writes `images/*.png`, `manifest.json` and `memory.json` under `dir`
    /// and rebases the manifest there.
    pub fn write_to(&mut self, dir: &Path) -> Result<(), MockDataError> {
        let io = |path: &Path| {
            let path = path.to_path_buf();
            move |source| MockDataError::Io { path, source }
        };
        let image_dir = dir.join("images");
        fs::create_dir_all(&image_dir).map_err(io(&image_dir))?;
        for (rel, img) in &self.images {
            let path = dir.join(rel);
            let bytes = encode_image(img).expect("in-memory PNG encoding");
            fs::write(&path, bytes).map_err(io(&path))?;
        }
        self.manifest.base_dir = dir.to_path_buf();
        self.manifest.save(&dir.join("manifest.json"))?;
        self.memory.save(&dir.join("memory.json"), &self.memory_paths)?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cardinality() {
        let ds = make_mock_dataset(&MockDatasetConfig::new(100, 16, 1)).unwrap();
        assert_eq!(ds.manifest.records.len(), 200);
        let pairs: std::collections::HashSet<_> = ds.manifest.records.iter().map(|r| &r.pair_id).collect();
        assert_eq!(pairs.len(), 100);
        assert_eq!(ds.memory.len(), 100);
    }

    #[test]
    fn in_training_images_are_memorized_and_out_images_are_not() {
        let ds = make_mock_dataset(&MockDatasetConfig::new(30, 16, 2)).unwrap();
        let lookup = |p: &PathBuf| &ds.images.iter().find(|(q, _)| q == p).unwrap().1;
        for r in &ds.manifest.records {
            let img = lookup(&r.image_path);
            let in_memory = ds.memory.entries().iter().any(|e| &e.image == img);
            assert_eq!(in_memory, r.group == Group::InTraining, "{}", r.id);
        }
    }

    #[test]
    fn four_group_set_extends_the_two_group_set() {
        let two = make_mock_dataset(&MockDatasetConfig::new(5, 8, 4)).unwrap();
        let mut cfg = MockDatasetConfig::new(5, 8, 4);
        cfg.four_groups = true;
        let four = make_mock_dataset(&cfg).unwrap();
        let core: Vec<_> = four.manifest.records.iter().filter(|r| matches!(r.group, Group::InTraining | Group::OutOfTraining)).cloned().collect();
        assert_eq!(core, two.manifest.records);
        for (path, img) in &two.images {
            assert!(four.images.iter().any(|(p, i)| p == path && i == img));
        }
    }

    #[test]
    fn four_group_layout() {
        let mut cfg = MockDatasetConfig::new(10, 16, 3);
        cfg.four_groups = true;
        let ds = make_mock_dataset(&cfg).unwrap();
        assert_eq!(ds.manifest.records.len(), 40);
        for g in Group::ALL {
            assert_eq!(ds.manifest.records.iter().filter(|r| r.group == g).count(), 10);
        }
        for r in ds.manifest.records.iter().filter(|r| r.group == Group::InTrainingAltCaption) {
            let orig = ds.manifest.records.iter().find(|o| o.group == Group::InTraining && o.pair_id == r.pair_id).unwrap();
            assert_eq!(orig.caption_variant.as_deref(), Some(r.caption.as_str()));
            assert_eq!(crate::backend::caption_overlap(&orig.caption, &r.caption), 0.0);
        }
    }

    #[test]
    fn deterministic_per_seed() {
        let a = make_mock_dataset(&MockDatasetConfig::new(5, 16, 9)).unwrap();
        let b = make_mock_dataset(&MockDatasetConfig::new(5, 16, 9)).unwrap();
        let c = make_mock_dataset(&MockDatasetConfig::new(5, 16, 10)).unwrap();
        assert_eq!(a.manifest, b.manifest);
        assert_eq!(a.images, b.images);
        assert_ne!(a.images, c.images);
    }

    #[test]
    fn rejects_zero_pairs() {
        assert!(matches!(make_mock_dataset(&MockDatasetConfig::new(0, 16, 1)), Err(MockDataError::NoPairs)));
    }
}
