//! Reproducible synthetic HOI detection world.
//!
//! Every image holds a few humans, each interacting with one or more
//! objects. The interaction class of an (object, human) pair is fixed by
//! the object's class together with where the object sits relative to the
//! human: every verb owns a prototype offset, and an HOI class is a
//! (verb, object class) combination. Detections are the annotated boxes
//! with Gaussian jitter plus low-confidence distractors. Class frequencies
//! follow a truncated Zipf law with an exact number of rare classes.

mod features;
mod generate;
mod io;
mod split;

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::BBox;
use crate::supervision::SupervisionTag;

pub use features::{FeatureSpace, LAYOUT_FEATURES};
pub use generate::generate_world;
pub use io::{read_jsonl, write_jsonl};
pub(crate) use split::retag;
pub use split::{split_supervision, SplitFractions};

/// Reserved detection class index for people. Object classes are
/// `1..=n_object_classes`.
pub const HUMAN_CLASS: usize = 0;

/// Images with fewer annotated occurrences than this make a class rare.
pub const RARE_IMAGE_THRESHOLD: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WorldConfig {
    pub n_object_classes: usize,
    pub n_verb_classes: usize,
    /// Number of valid (verb, object) combinations.
    pub n_hoi_classes: usize,
    /// Training images.
    pub n_images: usize,
    /// Held-out images with full annotations, used for evaluation.
    pub n_test_images: usize,
    /// Inclusive `[min, max]`.
    pub humans_per_image: [usize; 2],
    /// Inclusive `[min, max]`; every object interacts with one human.
    pub objects_per_image: [usize; 2],
    pub feature_dim: usize,
    pub feature_noise_sigma: f64,
    /// Box coordinate jitter as a fraction of box width/height.
    pub detection_jitter_sigma: f64,
    /// Noise on the verb layout (radians for the angle, log-scale for distance and size).
    pub layout_noise_sigma: f64,
    /// Distractor detections per annotated detection.
    pub distractor_ratio: f64,
    pub rare_class_fraction: f64,
    pub seed: u64,
}

impl Default for WorldConfig {
    fn default() -> Self {
        Self {
            n_object_classes: 8,
            n_verb_classes: 5,
            n_hoi_classes: 24,
            n_images: 600,
            n_test_images: 200,
            humans_per_image: [1, 2],
            objects_per_image: [1, 3],
            feature_dim: 32,
            feature_noise_sigma: 0.5,
            detection_jitter_sigma: 0.04,
            layout_noise_sigma: 0.1,
            distractor_ratio: 2.0,
            rare_class_fraction: 0.23,
            seed: 1,
        }
    }
}

fn invalid(field: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidConfig {
        field,
        reason: reason.into(),
    }
}

impl WorldConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_object_classes == 0 {
            return Err(invalid("n_object_classes", "must be at least 1"));
        }
        if self.n_verb_classes == 0 {
            return Err(invalid("n_verb_classes", "must be at least 1"));
        }
        if self.n_hoi_classes == 0 {
            return Err(invalid("n_hoi_classes", "must be at least 1"));
        }
        if self.n_hoi_classes > self.n_object_classes * self.n_verb_classes {
            return Err(invalid(
                "n_hoi_classes",
                format!(
                    "{} exceeds n_object_classes x n_verb_classes = {}",
                    self.n_hoi_classes,
                    self.n_object_classes * self.n_verb_classes
                ),
            ));
        }
        if self.n_images == 0 {
            return Err(invalid("n_images", "must be at least 1"));
        }
        for (field, r) in [
            ("humans_per_image", self.humans_per_image),
            ("objects_per_image", self.objects_per_image),
        ] {
            if r[0] == 0 || r[0] > r[1] {
                return Err(invalid(field, format!("range {r:?} must satisfy 1 <= min <= max")));
            }
        }
        if self.objects_per_image[1] > self.n_hoi_classes {
            return Err(invalid(
                "objects_per_image",
                "more objects per image than HOI classes to give them",
            ));
        }
        if self.feature_dim < 4 {
            return Err(invalid("feature_dim", "must be at least 4"));
        }
        for (field, v) in [
            ("feature_noise_sigma", self.feature_noise_sigma),
            ("detection_jitter_sigma", self.detection_jitter_sigma),
            ("layout_noise_sigma", self.layout_noise_sigma),
            ("distractor_ratio", self.distractor_ratio),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(invalid(field, "must be a finite nonnegative number"));
            }
        }
        if !(0.0..=1.0).contains(&self.rare_class_fraction) {
            return Err(invalid("rare_class_fraction", "must lie in [0, 1]"));
        }
        Ok(())
    }

    pub fn n_rare_classes(&self) -> usize {
        (self.rare_class_fraction * self.n_hoi_classes as f64).round() as usize
    }
}

/// One HOI class: a verb applied to an object class.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HoiClass {
    pub verb: usize,
    /// Detection class index (never [`HUMAN_CLASS`]).
    pub object_class: usize,
}

/// Where a verb places its object relative to the human, in units of the
/// human's height.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VerbLayout {
    pub angle: f64,
    pub distance: f64,
}

/// The latent rules shared by every image of one world.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HoiCatalog {
    pub classes: Vec<HoiClass>,
    pub verb_layouts: Vec<VerbLayout>,
    /// Per detection class: object height relative to the human height.
    pub object_scale: Vec<f64>,
    /// Per detection class: width / height.
    pub object_aspect: Vec<f64>,
}

impl HoiCatalog {
    pub fn n_classes(&self) -> usize {
        self.classes.len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    #[serde(rename = "box")]
    pub bbox: BBox,
    /// Detection class; [`HUMAN_CLASS`] marks people.
    pub class_id: usize,
    /// In `(0, 1]`.
    pub confidence: f64,
}

impl Detection {
    pub fn is_human(&self) -> bool {
        self.class_id == HUMAN_CLASS
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Triplet {
    pub h_box: BBox,
    pub o_box: BBox,
    pub hoi_class: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthImage {
    pub image_id: usize,
    pub supervision: SupervisionTag,
    pub detections: Vec<Detection>,
    /// Region-level annotations; empty for WS and unlabeled images.
    pub gt_triplets: Vec<Triplet>,
    /// Sorted, deduplicated image-level HOI labels; empty for unlabeled images.
    pub image_labels: Vec<usize>,
    /// Set when `gt_triplets` were inferred by a model.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub pseudo: bool,
}

impl SynthImage {
    pub fn humans(&self) -> impl Iterator<Item = (usize, &Detection)> {
        self.detections.iter().enumerate().filter(|(_, d)| d.is_human())
    }

    pub fn objects(&self) -> impl Iterator<Item = (usize, &Detection)> {
        self.detections.iter().enumerate().filter(|(_, d)| !d.is_human())
    }

    /// Image-level label set derived from the region annotations.
    pub fn labels_from_triplets(&self) -> Vec<usize> {
        self.gt_triplets
            .iter()
            .map(|t| t.hoi_class)
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect()
    }

    /// Whether the image contributes to training as-is.
    pub fn is_trainable(&self) -> bool {
        match self.supervision {
            SupervisionTag::FS | SupervisionTag::WS => true,
            SupervisionTag::US => self.pseudo,
        }
    }
}

/// A generated dataset: shared rules, training images and held-out images.
#[derive(Debug, Clone)]
pub struct World {
    pub config: WorldConfig,
    pub catalog: HoiCatalog,
    pub features: FeatureSpace,
    /// Training images, fully annotated (supervision = FS) until split.
    pub images: Vec<SynthImage>,
    pub test_images: Vec<SynthImage>,
}

impl World {
    pub fn n_classes(&self) -> usize {
        self.catalog.n_classes()
    }

    /// Number of distinct training images containing each HOI class.
    pub fn train_image_counts(&self) -> Vec<usize> {
        class_image_counts(&self.images, self.n_classes())
    }

    /// Classes with fewer than [`RARE_IMAGE_THRESHOLD`] training images.
    pub fn rare_class_ids(&self) -> BTreeSet<usize> {
        self.train_image_counts()
            .iter()
            .enumerate()
            .filter(|(_, &n)| n < RARE_IMAGE_THRESHOLD)
            .map(|(j, _)| j)
            .collect()
    }
}

/// Distinct images per class, counted from region annotations.
pub fn class_image_counts(images: &[SynthImage], n_classes: usize) -> Vec<usize> {
    let mut counts = vec![0usize; n_classes];
    for img in images {
        for j in img.labels_from_triplets() {
            counts[j] += 1;
        }
    }
    counts
}
