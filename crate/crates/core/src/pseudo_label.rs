//! Model-inferred region labels for weakly labeled and unlabeled images.
//!
//! Two uses: a multi-stage baseline that turns each image-level label of a
//! WS image into the highest-probability pair, and self-training on unlabeled
//! images that keeps every `(pair, class)` above a probability threshold.
//! Pseudo-labeled images train through the region-level loss and the FS
//! momentum buffer.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::batching::{build_pairs, features_matrix};
use crate::error::{Error, Result};
use crate::evaluation::EvalReport;
use crate::experiment::{train, TrainConfig, TrainData, TrainingLog};
use crate::model::{forward, ParamSet};
use crate::supervision::SupervisionTag;
use crate::world::{FeatureSpace, SynthImage, Triplet, World};

/// Log header line for multi-stage runs.
pub const MULTI_STAGE_NOTE: &str = "# multi-stage: both softmax branches stay active in every stage";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PseudoMode {
    /// Threshold the model's probabilities on unlabeled images.
    Unlabeled,
    /// Replace WS images by their per-label argmax pairs (an FS pipeline).
    MultiStage,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PseudoConfig {
    pub threshold: f64,
    pub n_cycles: usize,
    pub mode: PseudoMode,
}

impl Default for PseudoConfig {
    fn default() -> Self {
        Self {
            threshold: 0.5,
            n_cycles: 3,
            mode: PseudoMode::Unlabeled,
        }
    }
}

impl PseudoConfig {
    pub fn validate(&self) -> Result<()> {
        check_threshold(self.threshold)?;
        if self.n_cycles == 0 {
            return Err(Error::InvalidConfig {
                field: "n_cycles",
                reason: "must be at least 1".into(),
            });
        }
        Ok(())
    }
}

fn check_threshold(threshold: f64) -> Result<()> {
    if threshold > 0.0 && threshold < 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidConfig {
            field: "threshold",
            reason: format!("{threshold} is outside (0, 1)"),
        })
    }
}

/// For each image-level label, the pair with the largest probability of
/// that label (lowest pair index on ties).
pub fn ws_to_pseudo_fs(
    params: &ParamSet,
    space: &FeatureSpace,
    image: &SynthImage,
    top_k: usize,
) -> Result<Vec<Triplet>> {
    let pairs = build_pairs(space, image, top_k)?;
    let p = forward(params, &features_matrix(&pairs))?.scores.p;
    image
        .image_labels
        .iter()
        .map(|&j| {
            if j >= p.ncols() {
                return Err(Error::ClassOutOfRange {
                    index: j,
                    n_classes: p.ncols(),
                });
            }
            let mut best = 0;
            for i in 1..p.nrows() {
                if p[[i, j]] > p[[best, j]] {
                    best = i;
                }
            }
            Ok(Triplet {
                h_box: pairs[best].human.bbox,
                o_box: pairs[best].object.bbox,
                hoi_class: j,
            })
        })
        .collect()
}

/// Every `(pair, class)` with probability strictly above `threshold`, in
/// pair-major order. Images without candidate pairs yield nothing.
pub fn us_to_pseudo_fs(
    params: &ParamSet,
    space: &FeatureSpace,
    image: &SynthImage,
    threshold: f64,
    top_k: usize,
) -> Result<Vec<Triplet>> {
    check_threshold(threshold)?;
    let pairs = match build_pairs(space, image, top_k) {
        Ok(p) => p,
        Err(Error::Empty(_)) => return Ok(Vec::new()),
        Err(e) => return Err(e),
    };
    let p = forward(params, &features_matrix(&pairs))?.scores.p;
    Ok(p.indexed_iter()
        .filter(|(_, &v)| v > threshold)
        .map(|((i, j), _)| Triplet {
            h_box: pairs[i].human.bbox,
            o_box: pairs[i].object.bbox,
            hoi_class: j,
        })
        .collect())
}

/// Attaches pseudo triplets. Unlabeled images keep their tag; WS images
/// become FS. An empty triplet list leaves the image untrainable as US.
pub fn apply_pseudo(image: &SynthImage, triplets: Vec<Triplet>) -> SynthImage {
    let mut out = image.clone();
    out.pseudo = !triplets.is_empty();
    out.gt_triplets = triplets;
    match image.supervision {
        SupervisionTag::WS => out.supervision = SupervisionTag::FS,
        _ => out.image_labels = out.labels_from_triplets(),
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CycleReport {
    pub cycle: usize,
    /// Pseudo-labeled images the cycle trained on.
    pub n_pseudo_images: usize,
    pub n_pseudo_triplets: usize,
    pub report: EvalReport,
}

#[derive(Debug, Clone)]
pub struct CycleOutcome {
    pub params: ParamSet,
    pub cycles: Vec<CycleReport>,
    /// Pseudo labels stopped changing before the cycle budget ran out.
    pub converged: bool,
    /// Pseudo-labeled images produced by the last cycle.
    pub pseudo_images: Vec<SynthImage>,
    pub last_log: TrainingLog,
}

fn targets(images: &[SynthImage], mode: PseudoMode) -> impl Iterator<Item = &SynthImage> {
    let tag = match mode {
        PseudoMode::Unlabeled => SupervisionTag::US,
        PseudoMode::MultiStage => SupervisionTag::WS,
    };
    images.iter().filter(move |i| i.supervision == tag && !i.pseudo)
}

/// Training set for one cycle: the labeled images plus the current pseudo
/// labels. In multi-stage mode WS images only enter once converted.
fn training_set(base: &[SynthImage], pseudo: &[SynthImage], mode: PseudoMode) -> Vec<SynthImage> {
    let mut out: Vec<SynthImage> = base
        .iter()
        .filter(|i| match mode {
            PseudoMode::Unlabeled => i.supervision != SupervisionTag::US,
            PseudoMode::MultiStage => i.supervision == SupervisionTag::FS,
        })
        .cloned()
        .collect();
    let usable: Vec<&SynthImage> = pseudo.iter().filter(|i| i.pseudo).collect();
    let lone_us = mode == PseudoMode::Unlabeled && usable.len() == 1;
    if !lone_us {
        out.extend(usable.into_iter().cloned());
    }
    out
}

/// Alternates training from a fresh initialization with relabeling.
///
/// Cycle `k` trains on the labeled images plus the pseudo labels of cycle
/// `k - 1` (none in the first cycle), evaluates, then relabels. Stops early
/// when relabeling reproduces the previous pseudo labels.
pub fn iterate_cycles(
    world: &World,
    images: &[SynthImage],
    rare_class_ids: &BTreeSet<usize>,
    train_cfg: &TrainConfig,
    cfg: &PseudoConfig,
) -> Result<CycleOutcome> {
    cfg.validate()?;
    let mut pseudo: Vec<SynthImage> = Vec::new();
    let mut cycles = Vec::new();
    let mut converged = false;
    let mut last = None;
    for cycle in 1..=cfg.n_cycles {
        let set = training_set(images, &pseudo, cfg.mode);
        let used: Vec<&SynthImage> = set.iter().filter(|i| i.pseudo).collect();
        let (n_pseudo_images, n_pseudo_triplets) = (used.len(), used.iter().map(|i| i.gt_triplets.len()).sum());
        let outcome = train(TrainData::new(world, &set, rare_class_ids), train_cfg)?;
        log::info!("pseudo cycle {cycle}: map_full {:.4}", outcome.report.map_full);
        cycles.push(CycleReport {
            cycle,
            n_pseudo_images,
            n_pseudo_triplets,
            report: outcome.report.clone(),
        });
        let relabeled = targets(images, cfg.mode)
            .map(|img| {
                let t = match cfg.mode {
                    PseudoMode::Unlabeled => us_to_pseudo_fs(
                        &outcome.params,
                        &world.features,
                        img,
                        cfg.threshold,
                        train_cfg.batch.top_k,
                    )?,
                    PseudoMode::MultiStage => {
                        ws_to_pseudo_fs(&outcome.params, &world.features, img, train_cfg.batch.top_k)?
                    }
                };
                Ok(apply_pseudo(img, t))
            })
            .collect::<Result<Vec<_>>>()?;
        let fixed_point = relabeled == pseudo;
        pseudo = relabeled;
        last = Some(outcome);
        if fixed_point {
            converged = cycle < cfg.n_cycles;
            break;
        }
    }
    let mut last = last.expect("at least one cycle");
    last.log.header.push(format!(
        "# pseudo-label mode {:?}, cycles run {}",
        cfg.mode,
        cycles.len()
    ));
    if cfg.mode == PseudoMode::MultiStage {
        last.log.header.push(MULTI_STAGE_NOTE.to_string());
    }
    Ok(CycleOutcome {
        params: last.params,
        cycles,
        converged,
        pseudo_images: pseudo,
        last_log: last.log,
    })
}
