//! Mini-batch construction: candidate pairs, cross-image element swapping,
//! region- and image-level targets, and the pre-computed batch schedule.

use std::collections::{BTreeMap, HashMap};

use ndarray::{Array1, Array2};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::pair_iou;
use crate::rng::{stream, stream_rng};
use crate::supervision::SupervisionTag;
use crate::world::{Detection, FeatureSpace, SynthImage, Triplet};

/// Default per-class detection budget.
pub const DEFAULT_TOP_K: usize = 30;
/// Default pair-matching threshold for region-level targets.
pub const DEFAULT_IOU_THRESHOLD: f64 = 0.5;

/// Identifies a detection across the dataset.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct DetectionRef {
    pub image_id: usize,
    pub index: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HumanObjectPair {
    pub human: Detection,
    pub object: Detection,
    pub human_ref: DetectionRef,
    pub object_ref: DetectionRef,
    pub features: Vec<f64>,
    /// Human and object come from different images.
    pub swapped: bool,
}

impl HumanObjectPair {
    fn new(
        space: &FeatureSpace,
        (human_ref, human): (DetectionRef, Detection),
        (object_ref, object): (DetectionRef, Detection),
    ) -> Self {
        let features = space.pair_features(
            (human_ref.image_id, human_ref.index, &human),
            (object_ref.image_id, object_ref.index, &object),
        );
        Self {
            human,
            object,
            human_ref,
            object_ref,
            features,
            swapped: human_ref.image_id != object_ref.image_id,
        }
    }

    /// `(image of the human, image of the object)`.
    pub fn source(&self) -> (usize, usize) {
        (self.human_ref.image_id, self.object_ref.image_id)
    }
}

/// Scorer used to prune swapped candidates: product of detector confidences.
pub fn confidence_product(pair: &HumanObjectPair) -> f64 {
    pair.human.confidence * pair.object.confidence
}

/// Keeps the `top_k` most confident detections of every class.
fn filter_top_k(image: &SynthImage, top_k: usize) -> Vec<(usize, &Detection)> {
    let mut by_class: BTreeMap<usize, Vec<(usize, &Detection)>> = BTreeMap::new();
    for (i, d) in image.detections.iter().enumerate() {
        by_class.entry(d.class_id).or_default().push((i, d));
    }
    let mut kept: Vec<(usize, &Detection)> = by_class
        .into_values()
        .flat_map(|mut dets| {
            dets.sort_by(|a, b| b.1.confidence.total_cmp(&a.1.confidence).then(a.0.cmp(&b.0)));
            dets.truncate(top_k);
            dets
        })
        .collect();
    kept.sort_by_key(|(i, _)| *i);
    kept
}

/// Every kept human paired with every kept object of one image.
pub fn build_pairs(space: &FeatureSpace, image: &SynthImage, top_k: usize) -> Result<Vec<HumanObjectPair>> {
    let kept = filter_top_k(image, top_k);
    let r = |i: usize| DetectionRef {
        image_id: image.image_id,
        index: i,
    };
    let humans: Vec<_> = kept.iter().filter(|(_, d)| d.is_human()).collect();
    let objects: Vec<_> = kept.iter().filter(|(_, d)| !d.is_human()).collect();
    if humans.is_empty() || objects.is_empty() {
        return Err(Error::Empty(format!(
            "image {} has {} humans and {} objects after top-{top_k} filtering",
            image.image_id,
            humans.len(),
            objects.len()
        )));
    }
    Ok(humans
        .iter()
        .flat_map(|&&(hi, h)| {
            objects
                .iter()
                .map(move |&&(oi, o)| HumanObjectPair::new(space, (r(hi), *h), (r(oi), *o)))
        })
        .collect())
}

fn distinct<'a>(
    pairs: &'a [HumanObjectPair],
    pick: impl Fn(&'a HumanObjectPair) -> (DetectionRef, Detection),
) -> Vec<(DetectionRef, Detection)> {
    let mut seen = Vec::new();
    for p in pairs {
        let (r, d) = pick(p);
        if !seen.iter().any(|(s, _): &(DetectionRef, Detection)| *s == r) {
            seen.push((r, d));
        }
    }
    seen
}

/// Crosses the humans and objects of two images and prunes the pool back to
/// the original pair count, `H1·O1 + H2·O2`.
///
/// Candidates are dropped in ascending `scorer` order; at equal score a
/// swapped candidate goes before a same-image one, and remaining ties fall
/// back to detection identity. The result keeps pool order (humans of image
/// 1 then image 2, each crossed with objects of image 1 then image 2).
pub fn element_swap(
    space: &FeatureSpace,
    pairs1: &[HumanObjectPair],
    pairs2: &[HumanObjectPair],
    scorer: impl Fn(&HumanObjectPair) -> f64,
) -> Result<Vec<HumanObjectPair>> {
    if pairs1.is_empty() || pairs2.is_empty() {
        return Err(Error::Empty("element swapping needs pairs from both images".into()));
    }
    let (h1, o1) = (
        distinct(pairs1, |p| (p.human_ref, p.human)),
        distinct(pairs1, |p| (p.object_ref, p.object)),
    );
    let (h2, o2) = (
        distinct(pairs2, |p| (p.human_ref, p.human)),
        distinct(pairs2, |p| (p.object_ref, p.object)),
    );
    let images = |v: &[(DetectionRef, Detection)]| v.iter().map(|(r, _)| r.image_id).collect::<Vec<_>>();
    let ids1: Vec<usize> = images(&h1).into_iter().chain(images(&o1)).collect();
    let ids2: Vec<usize> = images(&h2).into_iter().chain(images(&o2)).collect();
    if ids1.windows(2).any(|w| w[0] != w[1]) || ids2.windows(2).any(|w| w[0] != w[1]) {
        return Err(Error::Schedule("element_swap inputs must be within-image pairs".into()));
    }
    if ids1[0] == ids2[0] {
        return Err(Error::Schedule(format!(
            "element_swap needs two distinct images, got {} twice",
            ids1[0]
        )));
    }
    let budget = h1.len() * o1.len() + h2.len() * o2.len();

    let pool: Vec<HumanObjectPair> = h1
        .iter()
        .chain(&h2)
        .flat_map(|&h| o1.iter().chain(&o2).map(move |&o| (h, o)))
        .map(|(h, o)| HumanObjectPair::new(space, h, o))
        .collect();
    let scores: Vec<f64> = pool.iter().map(&scorer).collect();
    let mut rank: Vec<usize> = (0..pool.len()).collect();
    rank.sort_by(|&a, &b| {
        let (pa, pb) = (&pool[a], &pool[b]);
        scores[b]
            .total_cmp(&scores[a])
            .then(pa.swapped.cmp(&pb.swapped))
            .then((pa.human_ref, pa.object_ref).cmp(&(pb.human_ref, pb.object_ref)))
    });
    let mut keep = vec![false; pool.len()];
    for &i in &rank[..budget] {
        keep[i] = true;
    }
    Ok(pool.into_iter().zip(keep).filter_map(|(p, k)| k.then_some(p)).collect())
}

/// Region-level targets: `Y[i][j] = 1` iff pair `i` overlaps a ground-truth
/// pair of class `j` with joint IoU at least `iou_threshold`.
pub fn make_fs_targets(
    pairs: &[HumanObjectPair],
    gt_triplets: &[Triplet],
    n_classes: usize,
    iou_threshold: f64,
) -> Result<Array2<f64>> {
    if let Some(t) = gt_triplets.iter().find(|t| t.hoi_class >= n_classes) {
        return Err(Error::ClassOutOfRange {
            index: t.hoi_class,
            n_classes,
        });
    }
    let mut y = Array2::zeros((pairs.len(), n_classes));
    for (i, p) in pairs.iter().enumerate() {
        for t in gt_triplets {
            if pair_iou((&p.human.bbox, &p.object.bbox), (&t.h_box, &t.o_box)) >= iou_threshold {
                y[[i, t.hoi_class]] = 1.0;
            }
        }
    }
    Ok(y)
}

/// Image-level targets for a two-image batch: the union of both label sets.
pub fn make_ws_targets(labels1: &[usize], labels2: &[usize], n_classes: usize) -> Result<Array1<f64>> {
    let mut y = Array1::zeros(n_classes);
    for &j in labels1.iter().chain(labels2) {
        if j >= n_classes {
            return Err(Error::ClassOutOfRange { index: j, n_classes });
        }
        y[j] = 1.0;
    }
    Ok(y)
}

/// A homogeneous two-image training batch.
#[derive(Debug, Clone)]
pub struct MiniBatch {
    pub pairs: Vec<HumanObjectPair>,
    pub supervision: SupervisionTag,
    /// Targets came from pseudo labels.
    pub pseudo: bool,
    pub fs_targets: Option<Array2<f64>>,
    pub ws_targets: Option<Array1<f64>>,
    pub image_ids: [usize; 2],
}

impl MiniBatch {
    pub fn n_pairs(&self) -> usize {
        self.pairs.len()
    }

    /// Stacks pair features into an `N × feature_dim` matrix.
    pub fn features(&self) -> Array2<f64> {
        features_matrix(&self.pairs)
    }
}

pub fn features_matrix(pairs: &[HumanObjectPair]) -> Array2<f64> {
    let dim = pairs.first().map_or(0, |p| p.features.len());
    let mut x = Array2::zeros((pairs.len(), dim));
    for (mut row, p) in x.rows_mut().into_iter().zip(pairs) {
        row.assign(&ndarray::ArrayView1::from(&p.features));
    }
    x
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BatchOptions {
    pub top_k: usize,
    pub iou_threshold: f64,
    /// Apply element swapping to WS batches that the schedule flags for it.
    pub element_swap: bool,
}

impl Default for BatchOptions {
    fn default() -> Self {
        Self {
            top_k: DEFAULT_TOP_K,
            iou_threshold: DEFAULT_IOU_THRESHOLD,
            element_swap: true,
        }
    }
}

/// Builds the batch for one schedule entry.
pub fn assemble_batch(
    space: &FeatureSpace,
    entry: &ScheduleEntry,
    first: &SynthImage,
    second: &SynthImage,
    n_classes: usize,
    opts: &BatchOptions,
) -> Result<MiniBatch> {
    for img in [first, second] {
        if img.supervision != entry.supervision {
            return Err(Error::Schedule(format!(
                "image {} is {} but the batch is {}",
                img.image_id, img.supervision, entry.supervision
            )));
        }
    }
    let p1 = build_pairs(space, first, opts.top_k)?;
    let p2 = build_pairs(space, second, opts.top_k)?;
    let image_ids = [first.image_id, second.image_id];
    match entry.supervision {
        SupervisionTag::WS => {
            let pairs = if entry.element_swap && opts.element_swap {
                element_swap(space, &p1, &p2, confidence_product)?
            } else {
                p1.into_iter().chain(p2).collect()
            };
            let y = make_ws_targets(&first.image_labels, &second.image_labels, n_classes)?;
            Ok(MiniBatch {
                pairs,
                supervision: SupervisionTag::WS,
                pseudo: false,
                fs_targets: None,
                ws_targets: Some(y),
                image_ids,
            })
        }
        tag => {
            if tag == SupervisionTag::US && !(first.pseudo && second.pseudo) {
                return Err(Error::MissingPseudoLabels);
            }
            let y1 = make_fs_targets(&p1, &first.gt_triplets, n_classes, opts.iou_threshold)?;
            let y2 = make_fs_targets(&p2, &second.gt_triplets, n_classes, opts.iou_threshold)?;
            let y = ndarray::concatenate(ndarray::Axis(0), &[y1.view(), y2.view()]).expect("same class count");
            Ok(MiniBatch {
                pairs: p1.into_iter().chain(p2).collect(),
                supervision: tag,
                pseudo: first.pseudo || second.pseudo,
                fs_targets: Some(y),
                ws_targets: None,
                image_ids,
            })
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScheduleEntry {
    pub images: [usize; 2],
    pub supervision: SupervisionTag,
    /// WS batches are flagged for element swapping.
    pub element_swap: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Leftover {
    pub epoch: usize,
    pub image_id: usize,
    pub supervision: SupervisionTag,
}

/// Fixed-before-training ordering of two-image batches.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Schedule {
    pub entries: Vec<ScheduleEntry>,
    pub batches_per_epoch: usize,
    /// Images that could not be paired in an epoch (odd-sized groups).
    pub leftovers: Vec<Leftover>,
}

/// Pairs images of equal supervision into batches, epoch by epoch, and
/// interleaves the supervision groups at random. Unlabeled images without
/// pseudo labels are not scheduled.
pub fn batch_schedule(images: &[SynthImage], epochs: usize, seed: u64) -> Result<Schedule> {
    let mut groups: BTreeMap<SupervisionTag, Vec<usize>> = BTreeMap::new();
    for img in images.iter().filter(|i| i.is_trainable()) {
        groups.entry(img.supervision).or_default().push(img.image_id);
    }
    if let Some((tag, ids)) = groups.iter().find(|(_, ids)| ids.len() < 2) {
        return Err(Error::Schedule(format!(
            "{tag} set has {} image(s); batches need two",
            ids.len()
        )));
    }
    if groups.is_empty() {
        return Err(Error::Schedule("no trainable images".into()));
    }
    let batches_per_epoch = groups.values().map(|ids| ids.len() / 2).sum();
    let mut entries = Vec::with_capacity(batches_per_epoch * epochs);
    let mut leftovers = Vec::new();
    for epoch in 0..epochs {
        let mut rng = stream_rng(seed, stream::SCHEDULE, epoch as u64);
        let mut batches = Vec::with_capacity(batches_per_epoch);
        for (&tag, ids) in &groups {
            let mut ids = ids.clone();
            ids.shuffle(&mut rng);
            for pair in ids.chunks(2) {
                match *pair {
                    [a, b] => batches.push(ScheduleEntry {
                        images: [a, b],
                        supervision: tag,
                        element_swap: tag == SupervisionTag::WS,
                    }),
                    [a] => leftovers.push(Leftover {
                        epoch,
                        image_id: a,
                        supervision: tag,
                    }),
                    _ => unreachable!(),
                }
            }
        }
        batches.shuffle(&mut rng);
        entries.extend(batches);
    }
    Ok(Schedule {
        entries,
        batches_per_epoch,
        leftovers,
    })
}

/// Index from image id to position, for schedule lookups.
pub fn index_by_id(images: &[SynthImage]) -> HashMap<usize, usize> {
    images.iter().enumerate().map(|(i, img)| (img.image_id, i)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::BBox;
    use crate::world::{generate_world, WorldConfig, HUMAN_CLASS};
    use proptest::prelude::*;

    fn space() -> FeatureSpace {
        FeatureSpace::new(&WorldConfig::default())
    }

    fn det(class_id: usize, x: f64, conf: f64) -> Detection {
        Detection {
            bbox: BBox::new(x, 0.0, x + 10.0, 20.0).unwrap(),
            class_id,
            confidence: conf,
        }
    }

    fn image(id: usize, humans: &[f64], objects: &[f64]) -> SynthImage {
        let mut detections: Vec<Detection> = humans
            .iter()
            .enumerate()
            .map(|(k, &c)| det(HUMAN_CLASS, 30.0 * k as f64, c))
            .collect();
        detections.extend(
            objects
                .iter()
                .enumerate()
                .map(|(k, &c)| det(1 + k % 3, 200.0 + 30.0 * k as f64, c)),
        );
        SynthImage {
            image_id: id,
            supervision: SupervisionTag::WS,
            detections,
            gt_triplets: vec![],
            image_labels: vec![],
            pseudo: false,
        }
    }

    #[test]
    fn cross_product_within_image() {
        let s = space();
        let pairs = build_pairs(&s, &image(0, &[0.9, 0.8], &[0.7, 0.6, 0.5]), 30).unwrap();
        assert_eq!(pairs.len(), 6);
        assert!(pairs.iter().all(|p| !p.swapped && p.source() == (0, 0)));
        let one = build_pairs(&s, &image(3, &[0.9], &[0.7]), 30).unwrap();
        assert_eq!(one.len(), 1);
        assert!(!one[0].swapped);
    }

    #[test]
    fn top_k_truncates_each_class() {
        let s = space();
        let confs: Vec<f64> = (0..40).map(|k| 0.01 + k as f64 / 50.0).collect();
        let mut img = image(0, &confs, &[0.9]);
        let pairs = build_pairs(&s, &img, 30).unwrap();
        assert_eq!(pairs.len(), 30);
        let min_kept = pairs.iter().map(|p| p.human.confidence).fold(1.0, f64::min);
        assert!((min_kept - confs[10]).abs() < 1e-12);
        img.detections.retain(|d| d.is_human());
        assert!(build_pairs(&s, &img, 30).is_err());
        assert!(build_pairs(&s, &image(0, &[0.5], &[0.5]), 0).is_err());
    }

    #[test]
    fn swap_counts_for_uneven_images() {
        let s = space();
        let a = build_pairs(&s, &image(0, &[0.9, 0.8], &[0.7]), 30).unwrap();
        let b = build_pairs(&s, &image(1, &[0.6], &[0.95, 0.4]), 30).unwrap();
        let out = element_swap(&s, &a, &b, confidence_product).unwrap();
        assert_eq!(out.len(), 2 + 2);
    }

    #[test]
    fn single_detections_keep_top_two_of_four() {
        let s = space();
        let a = build_pairs(&s, &image(0, &[0.9], &[0.3]), 30).unwrap();
        let b = build_pairs(&s, &image(1, &[0.5], &[0.8]), 30).unwrap();
        // Enumerated candidates: h0o0 .27, h0o1 .72, h1o0 .15, h1o1 .40.
        let out = element_swap(&s, &a, &b, confidence_product).unwrap();
        let got: Vec<(usize, usize)> = out.iter().map(|p| p.source()).collect();
        assert_eq!(got, vec![(0, 1), (1, 1)]);
        assert!(out[0].swapped && !out[1].swapped);
    }

    #[test]
    fn ties_prune_swapped_before_same_image() {
        let s = space();
        let a = build_pairs(&s, &image(0, &[0.5], &[0.5]), 30).unwrap();
        let b = build_pairs(&s, &image(1, &[0.5], &[0.5]), 30).unwrap();
        let out = element_swap(&s, &a, &b, confidence_product).unwrap();
        assert!(out.iter().all(|p| !p.swapped));
    }

    #[test]
    fn swap_rejects_empty_and_same_image() {
        let s = space();
        let a = build_pairs(&s, &image(0, &[0.9], &[0.3]), 30).unwrap();
        assert!(element_swap(&s, &a, &[], confidence_product).is_err());
        assert!(element_swap(&s, &a, &a, confidence_product).is_err());
    }

    fn gt_image() -> (SynthImage, Triplet) {
        let mut img = image(0, &[0.9], &[0.8]);
        let t = Triplet {
            h_box: img.detections[0].bbox,
            o_box: img.detections[1].bbox,
            hoi_class: 7,
        };
        img.gt_triplets.push(t);
        (img, t)
    }

    #[test]
    fn fs_targets_mark_matching_class() {
        let s = space();
        let (img, t) = gt_image();
        let pairs = build_pairs(&s, &img, 30).unwrap();
        let y = make_fs_targets(&pairs, &[t], 10, 0.5).unwrap();
        assert_eq!(y.row(0).to_vec(), {
            let mut v = vec![0.0; 10];
            v[7] = 1.0;
            v
        });
        assert_eq!(make_fs_targets(&pairs, &[], 10, 0.5).unwrap().sum(), 0.0);
        assert!(make_fs_targets(&pairs, &[t], 5, 0.5).is_err());
    }

    #[test]
    fn fs_targets_need_both_boxes() {
        let s = space();
        let (img, mut t) = gt_image();
        let pairs = build_pairs(&s, &img, 30).unwrap();
        // human box shifted to IoU 0.6 (x offset 2.5 on width 10), object to IoU 0.4
        t.h_box = BBox::new(2.5, 0.0, 12.5, 20.0).unwrap();
        t.o_box = BBox::new(200.0 + 30.0 / 7.0, 0.0, 210.0 + 30.0 / 7.0, 20.0).unwrap();
        let h = crate::geometry::iou(&pairs[0].human.bbox, &t.h_box);
        let o = crate::geometry::iou(&pairs[0].object.bbox, &t.o_box);
        assert!((h - 0.6).abs() < 1e-12 && (o - 0.4).abs() < 1e-12);
        assert_eq!(make_fs_targets(&pairs, &[t], 10, 0.5).unwrap().sum(), 0.0);
        assert_eq!(make_fs_targets(&pairs, &[t], 10, 0.39).unwrap().sum(), 1.0);
    }

    #[test]
    fn ws_targets_are_a_union() {
        let y = make_ws_targets(&[3, 5], &[5, 9], 10).unwrap();
        let ones: Vec<usize> = (0..10).filter(|&j| y[j] == 1.0).collect();
        assert_eq!(ones, vec![3, 5, 9]);
        assert_eq!(make_ws_targets(&[], &[], 4).unwrap().sum(), 0.0);
        assert_eq!(
            make_ws_targets(&[0], &[], 4).unwrap().to_vec(),
            vec![1.0, 0.0, 0.0, 0.0]
        );
    }

    fn tagged(n_ws: usize, n_fs: usize) -> Vec<SynthImage> {
        (0..n_ws + n_fs)
            .map(|i| {
                let mut img = image(i, &[0.9], &[0.8]);
                img.supervision = if i < n_ws {
                    SupervisionTag::WS
                } else {
                    SupervisionTag::FS
                };
                img
            })
            .collect()
    }

    #[test]
    fn schedule_pairs_within_supervision() {
        let imgs = tagged(4, 4);
        let s = batch_schedule(&imgs, 1, 7).unwrap();
        assert_eq!(s.entries.len(), 4);
        let ws = s.entries.iter().filter(|e| e.supervision == SupervisionTag::WS).count();
        assert_eq!(ws, 2);
        for e in &s.entries {
            assert_eq!(e.element_swap, e.supervision == SupervisionTag::WS);
            for id in e.images {
                assert_eq!(imgs[id].supervision, e.supervision);
            }
        }
        assert_eq!(s, batch_schedule(&imgs, 1, 7).unwrap());
        assert!(s.leftovers.is_empty());
    }

    #[test]
    fn odd_groups_leave_one_image_per_epoch() {
        let imgs = tagged(3, 2);
        let s = batch_schedule(&imgs, 3, 1).unwrap();
        assert_eq!(s.batches_per_epoch, 2);
        assert_eq!(s.leftovers.len(), 3);
        assert!(s.leftovers.iter().all(|l| l.supervision == SupervisionTag::WS));
        assert!(batch_schedule(&tagged(1, 4), 1, 1).is_err());
    }

    #[test]
    fn assembled_batches_follow_their_tag() {
        let w = generate_world(&WorldConfig {
            n_images: 200,
            n_test_images: 10,
            ..WorldConfig::default()
        })
        .unwrap();
        let fs = &w.images;
        let entry = ScheduleEntry {
            images: [0, 1],
            supervision: SupervisionTag::FS,
            element_swap: false,
        };
        let b = assemble_batch(
            &w.features,
            &entry,
            &fs[0],
            &fs[1],
            w.n_classes(),
            &BatchOptions::default(),
        )
        .unwrap();
        let y = b.fs_targets.as_ref().unwrap();
        assert!(b.ws_targets.is_none());
        assert_eq!(y.nrows(), b.n_pairs());
        assert!(y.sum() >= (fs[0].gt_triplets.len() + fs[1].gt_triplets.len()) as f64 * 0.5);
        let mut ws0 = crate::world::retag(&fs[0], SupervisionTag::WS);
        let ws1 = crate::world::retag(&fs[1], SupervisionTag::WS);
        let entry = ScheduleEntry {
            supervision: SupervisionTag::WS,
            element_swap: true,
            ..entry
        };
        let b = assemble_batch(&w.features, &entry, &ws0, &ws1, w.n_classes(), &BatchOptions::default()).unwrap();
        assert!(b.fs_targets.is_none());
        assert_eq!(b.features().dim(), (b.n_pairs(), 32));
        ws0.supervision = SupervisionTag::FS;
        assert!(assemble_batch(&w.features, &entry, &ws0, &ws1, w.n_classes(), &BatchOptions::default()).is_err());
    }

    proptest! {
        #[test]
        fn swap_size_and_provenance(
            c1 in proptest::collection::vec(0.05..1.0f64, 2..8),
            c2 in proptest::collection::vec(0.05..1.0f64, 2..8),
            h1 in 1usize..4, h2 in 1usize..4,
        ) {
            let s = space();
            let h1 = h1.min(c1.len() - 1);
            let h2 = h2.min(c2.len() - 1);
            let a = build_pairs(&s, &image(0, &c1[..h1], &c1[h1..]), 30).unwrap();
            let b = build_pairs(&s, &image(1, &c2[..h2], &c2[h2..]), 30).unwrap();
            let out = element_swap(&s, &a, &b, confidence_product).unwrap();
            prop_assert_eq!(out.len(), a.len() + b.len());
            for p in &out {
                prop_assert_eq!(p.swapped, p.human_ref.image_id != p.object_ref.image_id);
            }
        }

        #[test]
        fn fs_targets_monotone_in_threshold(t1 in 0.0..1.0f64, t2 in 0.0..1.0f64, shift in 0.0..8.0f64) {
            let s = space();
            let (img, mut t) = gt_image();
            t.h_box = BBox::new(shift, 0.0, shift + 10.0, 20.0).unwrap();
            let pairs = build_pairs(&s, &img, 30).unwrap();
            let (lo, hi) = if t1 < t2 { (t1, t2) } else { (t2, t1) };
            let y_lo = make_fs_targets(&pairs, &[t], 10, lo).unwrap();
            let y_hi = make_fs_targets(&pairs, &[t], 10, hi).unwrap();
            prop_assert!(y_hi.iter().zip(y_lo.iter()).all(|(h, l)| h <= l));
        }

        #[test]
        fn ws_targets_commute(a in proptest::collection::vec(0usize..12, 0..6), b in proptest::collection::vec(0usize..12, 0..6)) {
            prop_assert_eq!(make_ws_targets(&a, &b, 12).unwrap(), make_ws_targets(&b, &a, 12).unwrap());
        }
    }
}
