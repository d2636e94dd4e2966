//! Momentum SGD with a pluggable momentum policy.
//!
//! Every step forms `z ← β·z + α·∇f(w)` and then applies `w ← w − z`.
//! The policy decides which buffer `z` is:
//!
//! - [`MomentumPolicy::Shared`]: one buffer for all batches.
//! - [`MomentumPolicy::Independent`]: one buffer per supervision type, so
//!   weak and full gradients never mix in the history while the weights
//!   stay shared.
//! - [`MomentumPolicy::SequenceFsFirst`] / [`MomentumPolicy::SequenceWsFirst`]:
//!   a single buffer, with one supervision type held back until a switch
//!   iteration (see [`schedule_filter`]).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::ParamSet;
use crate::supervision::{route, BufferKind, StepSize, SupervisionTag};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MomentumPolicy {
    Shared,
    Independent,
    SequenceFsFirst,
    SequenceWsFirst,
}

impl MomentumPolicy {
    pub fn as_str(&self) -> &'static str {
        match self {
            MomentumPolicy::Shared => "shared",
            MomentumPolicy::Independent => "independent",
            MomentumPolicy::SequenceFsFirst => "sequence_fs_first",
            MomentumPolicy::SequenceWsFirst => "sequence_ws_first",
        }
    }

    fn n_buffers(&self) -> usize {
        match self {
            MomentumPolicy::Independent => 2,
            _ => 1,
        }
    }
}

impl std::fmt::Display for MomentumPolicy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for MomentumPolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "shared" => Ok(MomentumPolicy::Shared),
            "independent" => Ok(MomentumPolicy::Independent),
            "sequence_fs_first" => Ok(MomentumPolicy::SequenceFsFirst),
            "sequence_ws_first" => Ok(MomentumPolicy::SequenceWsFirst),
            other => Err(Error::InvalidConfig {
                field: "policy",
                reason: format!("unknown momentum policy `{other}`"),
            }),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizerConfig {
    pub alpha_ws: f64,
    pub alpha_fs: f64,
    pub beta: f64,
    pub policy: MomentumPolicy,
    /// Iteration at which a sequence policy admits the held-back type.
    /// `None` means half of the training budget.
    pub sequence_switch_iteration: Option<usize>,
}

/// Step sizes for the desk-scale synthetic world and a 2000-iteration budget.
impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            alpha_ws: 3e-3,
            alpha_fs: 3e-2,
            beta: 0.9,
            policy: MomentumPolicy::Independent,
            sequence_switch_iteration: None,
        }
    }
}

impl OptimizerConfig {
    /// Step sizes of the large-scale setting: `1e-3` for WS and `1e-4` for
    /// FS batches. They need budgets well beyond the desk-scale default.
    pub fn large_scale() -> Self {
        Self {
            alpha_ws: 1e-3,
            alpha_fs: 1e-4,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.beta) {
            return Err(Error::InvalidConfig {
                field: "beta",
                reason: format!("{} is outside [0, 1)", self.beta),
            });
        }
        for (field, a) in [("alpha_ws", self.alpha_ws), ("alpha_fs", self.alpha_fs)] {
            if !(a.is_finite() && a > 0.0) {
                return Err(Error::InvalidConfig {
                    field,
                    reason: format!("step size {a} must be positive"),
                });
            }
        }
        Ok(())
    }
}

/// Gradient-history buffers and the iteration counter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentumState {
    policy: MomentumPolicy,
    buffers: Vec<ParamSet>,
    /// Applied steps so far.
    pub t: usize,
}

impl MomentumState {
    pub fn new(params: &ParamSet, policy: MomentumPolicy) -> Self {
        Self {
            policy,
            buffers: vec![params.zeros_like(); policy.n_buffers()],
            t: 0,
        }
    }

    pub fn policy(&self) -> MomentumPolicy {
        self.policy
    }

    fn slot(&self, kind: BufferKind) -> usize {
        match (self.policy, kind) {
            (MomentumPolicy::Independent, BufferKind::Weak) => 0,
            (MomentumPolicy::Independent, BufferKind::Full) => 1,
            _ => 0,
        }
    }

    /// Weak-supervision history; the single buffer under non-independent policies.
    pub fn z_ws(&self) -> &ParamSet {
        &self.buffers[self.slot(BufferKind::Weak)]
    }

    /// Full-supervision history; the single buffer under non-independent policies.
    pub fn z_fs(&self) -> &ParamSet {
        &self.buffers[self.slot(BufferKind::Full)]
    }
}

/// One momentum update for a batch with supervision `tag`.
///
/// Pseudo-labeled unlabeled batches go through the full-supervision buffer
/// and step size.
pub fn step(
    params: &mut ParamSet,
    grads: &ParamSet,
    tag: SupervisionTag,
    pseudo_labeled: bool,
    state: &mut MomentumState,
    cfg: &OptimizerConfig,
) -> Result<()> {
    if !params.same_shape(grads) || !state.buffers.iter().all(|b| b.same_shape(params)) {
        return Err(Error::Shape {
            context: "optimizer step",
            expected: format!("{:?}", params.shapes()),
            actual: format!("{:?}", grads.shapes()),
        });
    }
    if state.policy != cfg.policy {
        return Err(Error::InvalidConfig {
            field: "policy",
            reason: format!("state built for {} but config says {}", state.policy, cfg.policy),
        });
    }
    let r = route(tag, pseudo_labeled)?;
    let alpha = match r.step {
        StepSize::Weak => cfg.alpha_ws,
        StepSize::Full => cfg.alpha_fs,
    };
    let beta = cfg.beta;
    let slot = state.slot(r.buffer);
    let z = &mut state.buffers[slot];
    for ((w, z), g) in params
        .tensors_mut()
        .into_iter()
        .zip(z.tensors_mut())
        .zip(grads.tensors())
    {
        for ((w, z), g) in w.iter_mut().zip(z.iter_mut()).zip(g) {
            *z = beta * *z + alpha * g;
            *w -= *z;
        }
    }
    state.t += 1;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FilterDecision {
    Accept,
    Skip,
}

/// Whether a batch participates at `iteration` under a sequence policy.
/// `switch` is the resolved switch iteration.
pub fn schedule_filter(
    tag: SupervisionTag,
    pseudo_labeled: bool,
    iteration: usize,
    policy: MomentumPolicy,
    switch: usize,
) -> FilterDecision {
    let is_weak = tag == SupervisionTag::WS && !pseudo_labeled;
    let held_back = match policy {
        MomentumPolicy::SequenceFsFirst => is_weak,
        MomentumPolicy::SequenceWsFirst => !is_weak,
        MomentumPolicy::Shared | MomentumPolicy::Independent => false,
    };
    if held_back && iteration < switch {
        FilterDecision::Skip
    } else {
        FilterDecision::Accept
    }
}
