//! Supervision tags and the routing they drive.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Annotation level of an image or a mini-batch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum SupervisionTag {
    /// Region-level triplets.
    FS,
    /// Image-level HOI labels only.
    WS,
    /// No labels.
    US,
}

impl SupervisionTag {
    pub fn as_str(&self) -> &'static str {
        match self {
            SupervisionTag::FS => "FS",
            SupervisionTag::WS => "WS",
            SupervisionTag::US => "US",
        }
    }
}

impl fmt::Display for SupervisionTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SupervisionTag {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "FS" => Ok(SupervisionTag::FS),
            "WS" => Ok(SupervisionTag::WS),
            "US" => Ok(SupervisionTag::US),
            other => Err(Error::InvalidConfig {
                field: "supervision",
                reason: format!("unknown tag `{other}`"),
            }),
        }
    }
}

/// Which loss a batch is trained with.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LossKind {
    /// BCE on every entry of the pair-by-class matrix.
    RegionLevel,
    /// BCE on the pair-summed class vector.
    ImageLevel,
}

/// Which momentum buffer a batch updates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BufferKind {
    Weak,
    Full,
}

/// Which step size a batch uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StepSize {
    Weak,
    Full,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Route {
    pub loss: LossKind,
    pub buffer: BufferKind,
    pub step: StepSize,
}

const FULL_ROUTE: Route = Route {
    loss: LossKind::RegionLevel,
    buffer: BufferKind::Full,
    step: StepSize::Full,
};

/// Resolves the loss, momentum buffer and step size for a tag.
///
/// Unlabeled data only trains once it carries pseudo labels, and then goes
/// through the fully-supervised machinery.
pub fn route(tag: SupervisionTag, pseudo_labeled: bool) -> Result<Route> {
    match tag {
        SupervisionTag::FS => Ok(FULL_ROUTE),
        SupervisionTag::WS => Ok(Route {
            loss: LossKind::ImageLevel,
            buffer: BufferKind::Weak,
            step: StepSize::Weak,
        }),
        SupervisionTag::US if pseudo_labeled => Ok(FULL_ROUTE),
        SupervisionTag::US => Err(Error::MissingPseudoLabels),
    }
}
