//! Mini-batch binary cross-entropy.
//!
//! FS batches: `L = Σ_j (1/N) Σ_i BCE(y_ij, p_ij)` on the pair-by-class matrix.
//! WS batches: `L = Σ_j BCE(y_j, p_j)` on the pair-summed class vector, with
//! labels pooled over both images of the batch.

use ndarray::{Array1, Array2, Zip};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::PROB_EPS;
use crate::supervision::SupervisionTag;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossReport {
    pub value: f64,
    pub supervision: SupervisionTag,
    pub n_terms: usize,
}

fn clamp(p: f64) -> f64 {
    p.clamp(PROB_EPS, 1.0 - PROB_EPS)
}

fn bce(y: f64, p: f64) -> f64 {
    let p = clamp(p);
    -(y * p.ln() + (1.0 - y) * (1.0 - p).ln())
}

/// `dBCE/dp` evaluated at the clamped probability.
fn bce_grad(y: f64, p: f64) -> f64 {
    let p = clamp(p);
    (p - y) / (p * (1.0 - p))
}

fn check_binary<'a>(y: impl IntoIterator<Item = &'a f64>) -> Result<()> {
    match y.into_iter().find(|&&v| v != 0.0 && v != 1.0) {
        Some(&v) => Err(Error::NonBinaryTarget(v)),
        None => Ok(()),
    }
}

/// Region-level loss and `dL/dP`.
pub fn fs_loss(p: &Array2<f64>, y: &Array2<f64>) -> Result<(LossReport, Array2<f64>)> {
    if p.dim() != y.dim() {
        return Err(Error::Shape {
            context: "fs_loss",
            expected: format!("{:?}", p.dim()),
            actual: format!("{:?}", y.dim()),
        });
    }
    check_binary(y)?;
    let n = p.nrows() as f64;
    let mut sum = 0.0;
    let mut grad = Array2::zeros(p.dim());
    Zip::from(&mut grad).and(p).and(y).for_each(|g, &p, &y| {
        sum += bce(y, p);
        *g = bce_grad(y, p) / n;
    });
    let report = LossReport {
        value: sum / n,
        supervision: SupervisionTag::FS,
        n_terms: p.len(),
    };
    Ok((report, grad))
}

/// Image-level loss and `dL/dp`.
pub fn ws_loss(p: &Array1<f64>, y: &Array1<f64>) -> Result<(LossReport, Array1<f64>)> {
    if p.len() != y.len() {
        return Err(Error::Shape {
            context: "ws_loss",
            expected: p.len().to_string(),
            actual: y.len().to_string(),
        });
    }
    check_binary(y)?;
    let value = p.iter().zip(y).map(|(&p, &y)| bce(y, p)).sum();
    let grad = Zip::from(p).and(y).map_collect(|&p, &y| bce_grad(y, p));
    Ok((
        LossReport {
            value,
            supervision: SupervisionTag::WS,
            n_terms: p.len(),
        },
        grad,
    ))
}
