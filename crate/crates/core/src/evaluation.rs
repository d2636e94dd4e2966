//! HOI detection mAP with joint human/object IoU matching.
//!
//! A prediction counts as a true positive when its class is right and both
//! its human and object boxes overlap an unmatched ground-truth pair of that
//! class in the same image with IoU ≥ 0.5. AP is the area under the
//! precision envelope of the precision/recall curve.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::batching::{build_pairs, features_matrix};
use crate::error::{Error, Result};
use crate::geometry::{pair_iou, BBox};
use crate::model::{forward, ParamSet};
use crate::world::{FeatureSpace, SynthImage};

pub const MATCH_IOU: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HoiPrediction {
    pub image_id: usize,
    pub human_box: BBox,
    pub object_box: BBox,
    pub hoi_class: usize,
    pub score: f64,
}

/// One ground-truth pair of a given class.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GtPair {
    pub image_id: usize,
    pub human_box: BBox,
    pub object_box: BBox,
}

/// Ranks `predictions` of one class by descending score (ties keep input
/// order) and returns that order with a true-positive flag per rank.
pub fn match_predictions(predictions: &[HoiPrediction], gt: &[GtPair]) -> (Vec<usize>, Vec<bool>) {
    let mut order: Vec<usize> = (0..predictions.len()).collect();
    order.sort_by(|&a, &b| predictions[b].score.total_cmp(&predictions[a].score));

    let mut by_image: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (g, pair) in gt.iter().enumerate() {
        by_image.entry(pair.image_id).or_default().push(g);
    }
    let mut matched = vec![false; gt.len()];
    let tp = order
        .iter()
        .map(|&k| {
            let pred = &predictions[k];
            let Some(candidates) = by_image.get(&pred.image_id) else {
                return false;
            };
            let mut best: Option<(usize, f64)> = None;
            for &g in candidates {
                if matched[g] {
                    continue;
                }
                let v = pair_iou(
                    (&pred.human_box, &pred.object_box),
                    (&gt[g].human_box, &gt[g].object_box),
                );
                if v >= MATCH_IOU && best.is_none_or(|(_, b)| v > b) {
                    best = Some((g, v));
                }
            }
            match best {
                Some((g, _)) => {
                    matched[g] = true;
                    true
                }
                None => false,
            }
        })
        .collect();
    (order, tp)
}

/// All-point interpolated AP from ranked true-positive flags.
pub fn average_precision(tp: &[bool], n_gt: usize) -> Option<f64> {
    if n_gt == 0 {
        return None;
    }
    let mut precision = Vec::with_capacity(tp.len());
    let mut recall = Vec::with_capacity(tp.len());
    let mut hits = 0usize;
    for (k, &t) in tp.iter().enumerate() {
        hits += t as usize;
        precision.push(hits as f64 / (k + 1) as f64);
        recall.push(hits as f64 / n_gt as f64);
    }
    for k in (0..precision.len().saturating_sub(1)).rev() {
        precision[k] = precision[k].max(precision[k + 1]);
    }
    let mut ap = 0.0;
    let mut prev_recall = 0.0;
    for (r, p) in recall.into_iter().zip(precision) {
        ap += (r - prev_recall) * p;
        prev_recall = r;
    }
    Some(ap)
}

/// AP for one class; `None` when the class has no ground truth.
pub fn match_and_ap(predictions: &[HoiPrediction], gt: &[GtPair]) -> Option<f64> {
    let (_, tp) = match_predictions(predictions, gt);
    average_precision(&tp, gt.len())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    /// `None` for classes without test ground truth.
    pub ap_per_class: Vec<Option<f64>>,
    pub map_full: f64,
    pub map_rare: Option<f64>,
    pub map_nonrare: Option<f64>,
    pub rare_class_ids: BTreeSet<usize>,
}

impl EvalReport {
    /// Mean of the defined APs over `classes`.
    pub fn mean_over(&self, classes: impl IntoIterator<Item = usize>) -> Option<f64> {
        let defined: Vec<f64> = classes
            .into_iter()
            .filter_map(|c| self.ap_per_class.get(c).copied().flatten())
            .collect();
        (!defined.is_empty()).then(|| defined.iter().sum::<f64>() / defined.len() as f64)
    }
}

/// Ground-truth pairs grouped by class.
pub fn gt_by_class(images: &[SynthImage], n_classes: usize) -> Result<Vec<Vec<GtPair>>> {
    let mut out = vec![Vec::new(); n_classes];
    for img in images {
        for t in &img.gt_triplets {
            let slot = out.get_mut(t.hoi_class).ok_or(Error::ClassOutOfRange {
                index: t.hoi_class,
                n_classes,
            })?;
            slot.push(GtPair {
                image_id: img.image_id,
                human_box: t.h_box,
                object_box: t.o_box,
            });
        }
    }
    Ok(out)
}

/// Scores a prediction set against the ground truth of `images`.
pub fn evaluate_predictions(
    predictions: &[HoiPrediction],
    images: &[SynthImage],
    n_classes: usize,
    rare_class_ids: &BTreeSet<usize>,
) -> Result<EvalReport> {
    if images.is_empty() {
        return Err(Error::Empty("test set has no images".into()));
    }
    let gt = gt_by_class(images, n_classes)?;
    let mut per_class: Vec<Vec<HoiPrediction>> = vec![Vec::new(); n_classes];
    for p in predictions {
        if !p.score.is_finite() {
            return Err(Error::NonFinite("prediction score"));
        }
        per_class
            .get_mut(p.hoi_class)
            .ok_or(Error::ClassOutOfRange {
                index: p.hoi_class,
                n_classes,
            })?
            .push(*p);
    }
    let ap_per_class: Vec<Option<f64>> = per_class.iter().zip(&gt).map(|(p, g)| match_and_ap(p, g)).collect();
    let mut report = EvalReport {
        ap_per_class,
        map_full: 0.0,
        map_rare: None,
        map_nonrare: None,
        rare_class_ids: rare_class_ids.clone(),
    };
    report.map_full = report
        .mean_over(0..n_classes)
        .ok_or_else(|| Error::Empty("test set has no ground-truth triplets".into()))?;
    report.map_rare = report.mean_over(rare_class_ids.iter().copied());
    report.map_nonrare = report.mean_over((0..n_classes).filter(|c| !rare_class_ids.contains(c)));
    Ok(report)
}

/// Every `(pair, class)` score of the model on one image.
pub fn predict_image(
    params: &ParamSet,
    space: &FeatureSpace,
    image: &SynthImage,
    top_k: usize,
) -> Result<Vec<HoiPrediction>> {
    let pairs = match build_pairs(space, image, top_k) {
        Ok(p) => p,
        Err(Error::Empty(_)) => return Ok(Vec::new()),
        Err(e) => return Err(e),
    };
    let p = forward(params, &features_matrix(&pairs))?.scores.p;
    Ok(p.indexed_iter()
        .map(|((i, j), &score)| HoiPrediction {
            image_id: image.image_id,
            human_box: pairs[i].human.bbox,
            object_box: pairs[i].object.bbox,
            hoi_class: j,
            score,
        })
        .collect())
}

/// Runs the model over `test_images` and computes the mAP report.
pub fn evaluate(
    params: &ParamSet,
    space: &FeatureSpace,
    test_images: &[SynthImage],
    rare_class_ids: &BTreeSet<usize>,
    top_k: usize,
) -> Result<EvalReport> {
    let mut predictions = Vec::new();
    for img in test_images {
        predictions.extend(predict_image(params, space, img, top_k)?);
    }
    evaluate_predictions(&predictions, test_images, params.config().n_classes, rare_class_ids)
}

/// Flat record for experiment aggregation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub run_id: String,
    pub ws_fs_us: String,
    pub policy: String,
    pub hes: bool,
    pub seed: u64,
    pub map_full: f64,
    pub map_rare: Option<f64>,
    pub map_nonrare: Option<f64>,
}

impl MetricsRow {
    pub fn with_report(mut self, report: &EvalReport) -> Self {
        self.map_full = report.map_full;
        self.map_rare = report.map_rare;
        self.map_nonrare = report.map_nonrare;
        self
    }
}

pub fn write_metrics_csv<W: std::io::Write>(out: W, rows: &[MetricsRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}
