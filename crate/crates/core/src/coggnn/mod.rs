//! Cognitive graph neural network.
//!
//! Every node starts from a layer-normalized projection of its features.
//! Each node keeps a fixed top-K neighbor set chosen once by salience on the
//! initial embeddings; attention over that set mixes a prompt prior from the
//! semantic encoder, structural cues and embedding similarity. Email nodes
//! are scored from the concatenation of all layer embeddings.
//!
//! [`backward`] computes exact gradients of any set of scores with respect to
//! the parameters and to input features.

mod backward;
mod forward;
mod ops;
mod params;

use std::sync::Arc;

use thiserror::Error;

use crate::encoder::EncoderError;
use crate::linalg::{dot, sigmoid, SparseVec};

pub use backward::{backward, BackwardOptions, Gradients};
pub use forward::{BaseTrace, Evaluator, ForwardTrace, Mode, NeighborTrace, NodeTrace, Variant};
pub use ops::{
    attention_logit, attention_prior, init_embedding, initial_preactivation, layer_norm, layer_norm_backward,
    normalize_attention, output_logit, predict, propagate_node, relu, salience, select_neighbors,
    structural_features, LN_EPS,
};
pub use params::{Hyper, Layout, ModelState, ParamGroup, MODEL_MAGIC};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GnnError {
    #[error("invalid hyperparameters: {0}")]
    InvalidHyper(String),
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("unsupported model version {found:?}")]
    VersionMismatch { found: String },
    #[error("corrupt model file at byte {offset}: {reason}")]
    CorruptFile { offset: usize, reason: String },
    #[error("trace unavailable: {0}")]
    TraceUnavailable(String),
    #[error("non-finite gradient in {0}")]
    NonFiniteGradient(String),
    #[error("non-finite activation at node {node}")]
    NonFiniteActivation { node: usize },
    #[error(transparent)]
    Encoder(#[from] EncoderError),
}

impl Evaluator<'_> {
    /// Gradients of `sum_v dz_v * z_v` for the seeded nodes.
    pub fn backward(
        &self,
        model: &ModelState,
        trace: &ForwardTrace,
        seeds: &[(usize, f64)],
        opts: &BackwardOptions,
    ) -> Result<Gradients, GnnError> {
        backward(model, self.graph(), trace, seeds, opts)
    }
}

/// A differentiable score over a dense feature vector.
pub trait Scorer {
    fn input_dim(&self) -> usize;

    /// Score and its gradient with respect to `x`.
    fn score_and_gradient(&self, x: &[f64]) -> Result<(f64, Vec<f64>), GnnError>;

    fn score(&self, x: &[f64]) -> Result<f64, GnnError> {
        Ok(self.score_and_gradient(x)?.0)
    }

    /// Gradient of ln f. Fails when the score is not positive.
    fn log_score_gradient(&self, x: &[f64]) -> Result<Vec<f64>, GnnError> {
        let (f, g) = self.score_and_gradient(x)?;
        if !(f > 0.0) {
            return Err(GnnError::NonFiniteGradient("log of a non-positive score".into()));
        }
        Ok(g.into_iter().map(|v| v / f).collect())
    }
}

/// f(x) = w.x + b with an identity link.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearProbe {
    pub weights: Vec<f64>,
    pub bias: f64,
}

impl Scorer for LinearProbe {
    fn input_dim(&self) -> usize {
        self.weights.len()
    }

    fn score_and_gradient(&self, x: &[f64]) -> Result<(f64, Vec<f64>), GnnError> {
        if x.len() != self.weights.len() {
            return Err(GnnError::DimensionMismatch {
                expected: self.weights.len(),
                found: x.len(),
            });
        }
        Ok((dot(&self.weights, x) + self.bias, self.weights.clone()))
    }
}

/// Scores a candidate email as a variant anchored in a scored graph.
pub struct VariantScorer<'a> {
    pub evaluator: &'a Evaluator<'a>,
    pub model: &'a ModelState,
    pub base: Arc<BaseTrace>,
    pub anchor: Option<usize>,
    pub desc: String,
}

impl VariantScorer<'_> {
    fn trace(&self, x: &[f64]) -> Result<ForwardTrace, GnnError> {
        let variant = Variant {
            anchor: self.anchor,
            features: SparseVec::from_dense(x),
            desc: self.desc.clone(),
        };
        self.evaluator.extend(self.model, &self.base, &[variant])
    }

    /// Logit and its gradient.
    pub fn logit_and_gradient(&self, x: &[f64]) -> Result<(f64, Vec<f64>), GnnError> {
        let trace = self.trace(x)?;
        let v = trace.variant_index(0);
        let opts = BackwardOptions {
            params: false,
            inputs: vec![v],
            through_neighbors: false,
        };
        let mut g = self.evaluator.backward(self.model, &trace, &[(v, 1.0)], &opts)?;
        let z = trace.node(v).logit.expect("variant logit");
        Ok((z, g.inputs.remove(&v).expect("requested input")))
    }
}

impl Scorer for VariantScorer<'_> {
    fn input_dim(&self) -> usize {
        self.model.hyper.input_dim
    }

    fn score(&self, x: &[f64]) -> Result<f64, GnnError> {
        let trace = self.trace(x)?;
        Ok(trace.score(trace.variant_index(0)).expect("variant score"))
    }

    fn score_and_gradient(&self, x: &[f64]) -> Result<(f64, Vec<f64>), GnnError> {
        let (z, g) = self.logit_and_gradient(x)?;
        let f = sigmoid(z);
        let s = f * sigmoid(-z);
        Ok((f, g.into_iter().map(|v| v * s).collect()))
    }

    /// (1 - f) dz/dx, with 1 - f computed as sigmoid(-z) so saturated scores
    /// keep a usable direction.
    fn log_score_gradient(&self, x: &[f64]) -> Result<Vec<f64>, GnnError> {
        let (z, g) = self.logit_and_gradient(x)?;
        let s = sigmoid(-z);
        Ok(g.into_iter().map(|v| v * s).collect())
    }
}
