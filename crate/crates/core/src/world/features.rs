use rand::Rng;
use rand_distr::StandardNormal;

use super::{Detection, SynthImage, WorldConfig};
use crate::error::{Error, Result};
use crate::geometry::{iou, BBox};
use crate::rng::{stream, stream_rng};

/// Maximum size of the spatial-layout block.
pub const LAYOUT_FEATURES: usize = 5;

/// Maps a (human, object) detection pair to a feature vector.
///
/// Layout: `[human appearance | object appearance | spatial layout]`.
/// Appearance is a per-class prototype plus noise keyed to the detection,
/// truncated at three standard deviations. The layout block holds the
/// object-center offset in human heights, log width and height ratios, and
/// the human/object IoU, truncated to fit small `feature_dim`s.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSpace {
    feature_dim: usize,
    human_dim: usize,
    object_dim: usize,
    layout_dim: usize,
    noise_sigma: f64,
    seed: u64,
    prototypes: Vec<Vec<f64>>,
}

impl FeatureSpace {
    pub fn new(cfg: &WorldConfig) -> Self {
        let layout_dim = LAYOUT_FEATURES.min(cfg.feature_dim.saturating_sub(2));
        let appearance = cfg.feature_dim - layout_dim;
        let human_dim = appearance / 2;
        let object_dim = appearance - human_dim;
        let mut rng = stream_rng(cfg.seed, stream::PROTOTYPES, 0);
        let prototypes = (0..=cfg.n_object_classes)
            .map(|c| {
                let dim = if c == super::HUMAN_CLASS { human_dim } else { object_dim };
                (0..dim).map(|_| rng.sample::<f64, _>(StandardNormal)).collect()
            })
            .collect();
        Self {
            feature_dim: cfg.feature_dim,
            human_dim,
            object_dim,
            layout_dim,
            noise_sigma: cfg.feature_noise_sigma,
            seed: cfg.seed,
            prototypes,
        }
    }

    pub fn feature_dim(&self) -> usize {
        self.feature_dim
    }

    pub fn layout_range(&self) -> std::ops::Range<usize> {
        self.feature_dim - self.layout_dim..self.feature_dim
    }

    pub fn human_range(&self) -> std::ops::Range<usize> {
        0..self.human_dim
    }

    pub fn object_range(&self) -> std::ops::Range<usize> {
        self.human_dim..self.human_dim + self.object_dim
    }

    /// Noise-free appearance of a detection class.
    pub fn prototype(&self, class_id: usize) -> &[f64] {
        &self.prototypes[class_id]
    }

    fn appearance(&self, image_id: usize, det_index: usize, det: &Detection, out: &mut [f64]) {
        let proto = &self.prototypes[det.class_id];
        debug_assert_eq!(proto.len(), out.len());
        let key = ((image_id as u64) << 20) ^ det_index as u64;
        let mut rng = stream_rng(self.seed, stream::APPEARANCE, key);
        for (o, p) in out.iter_mut().zip(proto) {
            let z = loop {
                let z: f64 = rng.sample(StandardNormal);
                if z.abs() <= 3.0 {
                    break z;
                }
            };
            *o = p + self.noise_sigma * z;
        }
    }

    fn layout(&self, h: &BBox, o: &BBox, out: &mut [f64]) {
        let (hcx, hcy) = h.center();
        let (ocx, ocy) = o.center();
        let scale = h.height();
        let all = [
            (ocx - hcx) / scale,
            (ocy - hcy) / scale,
            (o.width() / h.width()).ln(),
            (o.height() / h.height()).ln(),
            iou(h, o),
        ];
        out.copy_from_slice(&all[..out.len()]);
    }

    /// Features of a human detection paired with an object detection. The
    /// two may come from different images; geometry is taken as-is.
    pub fn pair_features(&self, human: (usize, usize, &Detection), object: (usize, usize, &Detection)) -> Vec<f64> {
        let mut v = vec![0.0; self.feature_dim];
        let (hi, oi, li) = (self.human_range(), self.object_range(), self.layout_range());
        self.appearance(human.0, human.1, human.2, &mut v[hi]);
        self.appearance(object.0, object.1, object.2, &mut v[oi]);
        self.layout(&human.2.bbox, &object.2.bbox, &mut v[li]);
        v
    }

    /// Features for two detections of the same image, by detection index.
    pub fn extract_features(&self, image: &SynthImage, human_index: usize, object_index: usize) -> Result<Vec<f64>> {
        let get = |i: usize| {
            image.detections.get(i).ok_or_else(|| Error::Shape {
                context: "extract_features",
                expected: format!("detection index < {}", image.detections.len()),
                actual: i.to_string(),
            })
        };
        let (h, o) = (get(human_index)?, get(object_index)?);
        for d in [h, o] {
            if d.class_id >= self.prototypes.len() {
                return Err(Error::ClassOutOfRange {
                    index: d.class_id,
                    n_classes: self.prototypes.len(),
                });
            }
        }
        Ok(self.pair_features((image.image_id, human_index, h), (image.image_id, object_index, o)))
    }
}
