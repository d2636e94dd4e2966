//! Two-branch pair scorer.
//!
//! A one-hidden-layer ReLU encoder feeds two linear heads. The
//! classification head is softmax-normalized across classes for each pair,
//! the selection head across pairs for each class, and their element-wise
//! product is the `N × C` probability matrix `P`. Summing `P` over pairs
//! gives image-level class probabilities, each bounded by 1 because every
//! selection column sums to one.

use ndarray::{Array1, Array2, Axis, Zip};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{stream, stream_rng};

/// Probabilities are clamped to `[PROB_EPS, 1 - PROB_EPS]` before logs.
pub const PROB_EPS: f64 = 1e-7;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub feature_dim: usize,
    pub hidden_dim: usize,
    pub n_classes: usize,
}

/// One tensor per parameter group. Also used for gradients and momentum
/// buffers, which share the parameters' shapes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamSet {
    /// `feature_dim × hidden_dim`
    pub w_hidden: Array2<f64>,
    pub b_hidden: Array1<f64>,
    /// Classification head, `hidden_dim × C`.
    pub w_cls: Array2<f64>,
    pub b_cls: Array1<f64>,
    /// Selection head, `hidden_dim × C`.
    pub w_sel: Array2<f64>,
    pub b_sel: Array1<f64>,
}

pub type ModelParams = ParamSet;
pub type Gradients = ParamSet;

pub const TENSOR_NAMES: [&str; 6] = ["w_hidden", "b_hidden", "w_cls", "b_cls", "w_sel", "b_sel"];

impl ParamSet {
    pub fn zeros(cfg: &ModelConfig) -> Self {
        Self {
            w_hidden: Array2::zeros((cfg.feature_dim, cfg.hidden_dim)),
            b_hidden: Array1::zeros(cfg.hidden_dim),
            w_cls: Array2::zeros((cfg.hidden_dim, cfg.n_classes)),
            b_cls: Array1::zeros(cfg.n_classes),
            w_sel: Array2::zeros((cfg.hidden_dim, cfg.n_classes)),
            b_sel: Array1::zeros(cfg.n_classes),
        }
    }

    /// Weights uniform in `±1/sqrt(fan_in)`, biases zero.
    pub fn init(cfg: &ModelConfig, seed: u64) -> Self {
        let mut rng = stream_rng(seed, stream::INIT, 0);
        let mut p = Self::zeros(cfg);
        for w in [&mut p.w_hidden, &mut p.w_cls, &mut p.w_sel] {
            let s = 1.0 / (w.nrows() as f64).sqrt();
            w.mapv_inplace(|_| rng.gen_range(-s..=s));
        }
        p
    }

    pub fn zeros_like(&self) -> Self {
        Self::zeros(&self.config())
    }

    pub fn config(&self) -> ModelConfig {
        ModelConfig {
            feature_dim: self.w_hidden.nrows(),
            hidden_dim: self.w_hidden.ncols(),
            n_classes: self.w_cls.ncols(),
        }
    }

    pub fn tensors(&self) -> [&[f64]; 6] {
        fn s(a: Option<&[f64]>) -> &[f64] {
            a.expect("standard layout")
        }
        [
            s(self.w_hidden.as_slice()),
            s(self.b_hidden.as_slice()),
            s(self.w_cls.as_slice()),
            s(self.b_cls.as_slice()),
            s(self.w_sel.as_slice()),
            s(self.b_sel.as_slice()),
        ]
    }

    pub fn tensors_mut(&mut self) -> [&mut [f64]; 6] {
        [
            self.w_hidden.as_slice_mut().expect("standard layout"),
            self.b_hidden.as_slice_mut().expect("standard layout"),
            self.w_cls.as_slice_mut().expect("standard layout"),
            self.b_cls.as_slice_mut().expect("standard layout"),
            self.w_sel.as_slice_mut().expect("standard layout"),
            self.b_sel.as_slice_mut().expect("standard layout"),
        ]
    }

    pub fn shapes(&self) -> [Vec<usize>; 6] {
        [
            self.w_hidden.shape().to_vec(),
            self.b_hidden.shape().to_vec(),
            self.w_cls.shape().to_vec(),
            self.b_cls.shape().to_vec(),
            self.w_sel.shape().to_vec(),
            self.b_sel.shape().to_vec(),
        ]
    }

    pub fn same_shape(&self, other: &Self) -> bool {
        self.shapes() == other.shapes()
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.iter().all(|v| v.is_finite()))
    }

    pub fn n_values(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }
}

/// Pre- and post-softmax scores of both branches and their product.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreMatrix {
    pub raw_c: Array2<f64>,
    pub raw_s: Array2<f64>,
    /// Rows sum to 1.
    pub sigma_c: Array2<f64>,
    /// Columns sum to 1.
    pub sigma_s: Array2<f64>,
    pub p: Array2<f64>,
}

/// Intermediate values kept for the backward pass.
#[derive(Debug, Clone)]
pub struct Forward {
    pub hidden_pre: Array2<f64>,
    pub hidden: Array2<f64>,
    pub scores: ScoreMatrix,
}

fn softmax_lanes(raw: &Array2<f64>, axis: Axis) -> Array2<f64> {
    let mut out = raw.clone();
    for mut lane in out.lanes_mut(axis) {
        let m = lane.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        lane.mapv_inplace(|v| (v - m).exp());
        let z = lane.sum();
        lane.mapv_inplace(|v| v / z);
    }
    out
}

/// Applies both softmaxes and the element-wise product to raw head scores.
pub fn scores_from_raw(raw_c: Array2<f64>, raw_s: Array2<f64>) -> ScoreMatrix {
    // Axis(1) lanes are rows: normalize across classes for each pair.
    let sigma_c = softmax_lanes(&raw_c, Axis(1));
    // Axis(0) lanes are columns: normalize across pairs for each class.
    let sigma_s = softmax_lanes(&raw_s, Axis(0));
    let p = &sigma_c * &sigma_s;
    ScoreMatrix {
        raw_c,
        raw_s,
        sigma_c,
        sigma_s,
        p,
    }
}

fn check_features(params: &ParamSet, features: &Array2<f64>) -> Result<()> {
    if features.nrows() == 0 {
        return Err(Error::Empty("forward needs at least one pair".into()));
    }
    if features.ncols() != params.w_hidden.nrows() {
        return Err(Error::Shape {
            context: "features",
            expected: format!("N × {}", params.w_hidden.nrows()),
            actual: format!("{:?}", features.dim()),
        });
    }
    if features.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("features"));
    }
    Ok(())
}

pub fn forward(params: &ParamSet, features: &Array2<f64>) -> Result<Forward> {
    check_features(params, features)?;
    let hidden_pre = features.dot(&params.w_hidden) + &params.b_hidden;
    let hidden = hidden_pre.mapv(|v| v.max(0.0));
    let raw_c = hidden.dot(&params.w_cls) + &params.b_cls;
    let raw_s = hidden.dot(&params.w_sel) + &params.b_sel;
    Ok(Forward {
        hidden_pre,
        hidden,
        scores: scores_from_raw(raw_c, raw_s),
    })
}

/// `p[j] = Σ_i P[i][j]`, capped at 1 against rounding.
pub fn aggregate_image_level(p: &Array2<f64>) -> Array1<f64> {
    p.sum_axis(Axis(0)).mapv(|v| v.min(1.0))
}

/// Loss gradient arriving at the model output.
#[derive(Debug, Clone, Copy)]
pub enum Upstream<'a> {
    /// `dL/dP`, shape `N × C`.
    Pairwise(&'a Array2<f64>),
    /// `dL/dp` on the pair-summed vector, length `C`.
    ImageLevel(&'a Array1<f64>),
}

/// Gradient of a row softmax: `dz = s ⊙ (g - Σ_k g_k s_k)` along `axis`.
fn softmax_backward(sigma: &Array2<f64>, grad: &Array2<f64>, axis: Axis) -> Array2<f64> {
    let mut out = sigma * grad;
    let dots = out.sum_axis(axis);
    let dots = if axis == Axis(1) {
        dots.insert_axis(Axis(1))
    } else {
        dots.insert_axis(Axis(0))
    };
    Zip::from(&mut out)
        .and_broadcast(sigma)
        .and_broadcast(&dots)
        .for_each(|o, &s, &d| *o -= s * d);
    out
}

/// Exact gradients of the loss with respect to every parameter tensor.
pub fn backward(params: &ParamSet, features: &Array2<f64>, fwd: &Forward, upstream: Upstream<'_>) -> Result<Gradients> {
    let (n, c) = fwd.scores.p.dim();
    if features.nrows() != n || fwd.hidden.nrows() != n || params.w_cls.ncols() != c {
        return Err(Error::Shape {
            context: "backward",
            expected: format!("{n} pairs × {c} classes"),
            actual: format!("features {:?}, params C = {}", features.dim(), params.w_cls.ncols()),
        });
    }
    let g_p = match upstream {
        Upstream::Pairwise(g) => {
            if g.dim() != (n, c) {
                return Err(Error::Shape {
                    context: "upstream dL/dP",
                    expected: format!("({n}, {c})"),
                    actual: format!("{:?}", g.dim()),
                });
            }
            g.clone()
        }
        Upstream::ImageLevel(g) => {
            if g.len() != c {
                return Err(Error::Shape {
                    context: "upstream dL/dp",
                    expected: c.to_string(),
                    actual: g.len().to_string(),
                });
            }
            g.view().insert_axis(Axis(0)).broadcast((n, c)).unwrap().to_owned()
        }
    };
    let s = &fwd.scores;
    let g_sigma_c = &g_p * &s.sigma_s;
    let g_sigma_s = &g_p * &s.sigma_c;
    let g_raw_c = softmax_backward(&s.sigma_c, &g_sigma_c, Axis(1));
    let g_raw_s = softmax_backward(&s.sigma_s, &g_sigma_s, Axis(0));

    let h_t = fwd.hidden.t();
    let mut g_hidden = g_raw_c.dot(&params.w_cls.t()) + g_raw_s.dot(&params.w_sel.t());
    Zip::from(&mut g_hidden).and(&fwd.hidden_pre).for_each(|g, &z| {
        if z <= 0.0 {
            *g = 0.0
        }
    });
    Ok(ParamSet {
        w_hidden: row_major(features.t().dot(&g_hidden)),
        b_hidden: g_hidden.sum_axis(Axis(0)),
        w_cls: row_major(h_t.dot(&g_raw_c)),
        b_cls: g_raw_c.sum_axis(Axis(0)),
        w_sel: row_major(h_t.dot(&g_raw_s)),
        b_sel: g_raw_s.sum_axis(Axis(0)),
    })
}

/// Products of transposed views may come back column-major; parameter
/// tensors are always stored row-major so they can be walked as slices.
fn row_major(a: Array2<f64>) -> Array2<f64> {
    if a.is_standard_layout() {
        a
    } else {
        a.as_standard_layout().into_owned()
    }
}

/// Every `(pair, class, P entry)` sorted by descending probability; ties
/// go to the lower pair index, then the lower class index.
pub fn ranked_entries(p: &Array2<f64>) -> Vec<(usize, usize, f64)> {
    let mut v: Vec<(usize, usize, f64)> = p.indexed_iter().map(|((i, j), &v)| (i, j, v)).collect();
    v.sort_by(|a, b| b.2.total_cmp(&a.2).then((a.0, a.1).cmp(&(b.0, b.1))));
    v
}

pub fn infer_pairs(params: &ParamSet, features: &Array2<f64>) -> Result<Vec<(usize, usize, f64)>> {
    Ok(ranked_entries(&forward(params, features)?.scores.p))
}
