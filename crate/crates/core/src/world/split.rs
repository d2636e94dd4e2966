use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::SynthImage;
use crate::error::{Error, Result};
use crate::rng::{stream, stream_rng};
use crate::supervision::SupervisionTag;

/// Share of training images given each supervision level.
///
/// Written as percentages `WS/FS` or `WS/FS/US`; with two numbers the
/// unlisted remainder is left unlabeled (so `70/0` keeps 70% of the images
/// weakly labeled and leaves 30% out of training).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct SplitFractions {
    pub ws: f64,
    pub fs: f64,
    pub us: f64,
}

impl SplitFractions {
    pub fn new(ws: f64, fs: f64, us: f64) -> Result<Self> {
        let s = Self { ws, fs, us };
        s.validate()?;
        Ok(s)
    }

    /// `ws`/`fs` in percent; the remainder is unlabeled.
    pub fn percent(ws: u32, fs: u32) -> Result<Self> {
        if ws + fs > 100 {
            return Err(Error::InvalidConfig {
                field: "split",
                reason: format!("{ws}/{fs} exceeds 100%"),
            });
        }
        Self::new(ws as f64 / 100.0, fs as f64 / 100.0, (100 - ws - fs) as f64 / 100.0)
    }

    pub fn validate(&self) -> Result<()> {
        let parts = [self.ws, self.fs, self.us];
        if parts.iter().any(|f| !(f.is_finite() && *f >= 0.0)) {
            return Err(Error::InvalidConfig {
                field: "split",
                reason: format!("fractions {parts:?} must be nonnegative"),
            });
        }
        let sum: f64 = parts.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidConfig {
                field: "split",
                reason: format!("fractions sum to {sum}, not 1"),
            });
        }
        Ok(())
    }

    /// Image counts (ws, fs, us) for `n` images.
    pub fn counts(&self, n: usize) -> (usize, usize, usize) {
        let n_ws = ((self.ws * n as f64).round() as usize).min(n);
        let n_fs = ((self.fs * n as f64).round() as usize).min(n - n_ws);
        (n_ws, n_fs, n - n_ws - n_fs)
    }
}

impl fmt::Display for SplitFractions {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let pct = |x: f64| (x * 100.0).round() as i64;
        write!(f, "{}/{}/{}", pct(self.ws), pct(self.fs), pct(self.us))
    }
}

impl FromStr for SplitFractions {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::InvalidConfig {
            field: "split",
            reason: format!("`{s}` is not WS/FS or WS/FS/US in percent"),
        };
        let parts: Vec<u32> = s
            .split('/')
            .map(|p| p.trim().parse::<u32>().map_err(|_| bad()))
            .collect::<Result<_>>()?;
        match parts[..] {
            [ws, fs] => Self::percent(ws, fs),
            [ws, fs, us] if ws + fs + us == 100 => Self::percent(ws, fs),
            _ => Err(bad()),
        }
    }
}

impl TryFrom<String> for SplitFractions {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<SplitFractions> for String {
    fn from(s: SplitFractions) -> Self {
        s.to_string()
    }
}

/// Randomly tags each image and strips what its supervision level hides:
/// WS images keep only their image-level label set, unlabeled images keep
/// nothing, FS images keep their triplets.
pub fn split_supervision(images: &[SynthImage], fractions: SplitFractions, seed: u64) -> Result<Vec<SynthImage>> {
    fractions.validate()?;
    let (n_ws, n_fs, _) = fractions.counts(images.len());
    let mut order: Vec<usize> = (0..images.len()).collect();
    order.shuffle(&mut stream_rng(seed, stream::SPLIT, 0));
    let mut tags = vec![SupervisionTag::US; images.len()];
    for &i in &order[..n_ws] {
        tags[i] = SupervisionTag::WS;
    }
    for &i in &order[n_ws..n_ws + n_fs] {
        tags[i] = SupervisionTag::FS;
    }
    Ok(images.iter().zip(tags).map(|(img, tag)| retag(img, tag)).collect())
}

pub(crate) fn retag(img: &SynthImage, tag: SupervisionTag) -> SynthImage {
    let mut out = img.clone();
    out.supervision = tag;
    out.pseudo = false;
    match tag {
        SupervisionTag::FS => out.image_labels = img.labels_from_triplets(),
        SupervisionTag::WS => {
            out.image_labels = img.labels_from_triplets();
            out.gt_triplets.clear();
        }
        SupervisionTag::US => {
            out.image_labels.clear();
            out.gt_triplets.clear();
        }
    }
    out
}
