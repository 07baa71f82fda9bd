//! Red/blue self-evolution.
//!
//! Each iteration scores the graph, lets the red team perturb spam seeds
//! (feature-space FGSM, text mutation and their blend), harvests the samples
//! that slip under the detection threshold, compresses them with k-medoids
//! into a bounded LRU memory and takes one gradient step on
//! task + consistency + adversarial + L2 losses.

mod loss;
mod memory;
mod red;
mod train;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::coggnn::GnnError;
use crate::explain::{DEFAULT_MAX_DEPTH, DEFAULT_MIN_CONFIDENCE};

pub use loss::{bce, compute_losses, LossInputs, LossReport, LossWeights, SCORE_CLAMP};
pub use memory::{
    extract_failure_trace, kmedoids_compress, kmedoids_objective, sample_distance, ExperienceMemory, MemoryEntry,
    NewEntry, TraceSummary, MEMORY_HEADER,
};
pub use red::{
    detect_failures, generate_adversarial_batch, gradient_perturb, hybrid_combine, mutate_text, red_reward,
    semantic_mutate, AdversarialSample, Direction, MutationOp, RewardParts, SampleKind, SeedEmail,
};
pub use train::{train, IterationRecord, TrainOutcome, TrainingSet, HISTORY_HEADER};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvolutionError {
    #[error(transparent)]
    Gnn(#[from] GnnError),
    #[error("samples come from different seeds ({0} vs {1})")]
    SeedMismatch(String, String),
    #[error("non-finite loss term {0}")]
    NonFiniteLoss(String),
    #[error("total loss diverged at iteration {iteration}")]
    DivergenceDetected { iteration: usize },
    #[error("invalid evolution config: {0}")]
    InvalidConfig(String),
    #[error("unsupported memory file version {found:?}")]
    VersionMismatch { found: String },
    #[error("corrupt memory file: {0}")]
    CorruptFile(String),
    #[error("io error: {0}")]
    Io(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvolutionConfig {
    /// FGSM step size.
    pub epsilon: f64,
    pub direction: Direction,
    pub rho_mut: f64,
    pub mutation_ops: Vec<MutationOp>,
    pub lambda_hybrid: f64,
    pub reward_novelty: f64,
    pub reward_evasion: f64,
    pub reward_complexity: f64,
    /// Novelty when the memory is empty.
    pub novelty_cap: f64,
    pub delta_fail: f64,
    /// M_max; 0 disables the memory.
    pub memory_capacity: usize,
    /// Weight of the attention-trace term in the sample distance.
    pub alpha_trace: f64,
    /// M_t, adversarial samples kept per iteration.
    pub batch_size: usize,
    pub lambda: f64,
    pub mu: f64,
    pub nu: f64,
    pub eta: f64,
    pub iterations: usize,
    pub seed: u64,
    pub trace_max_depth: usize,
    pub trace_min_confidence: f64,
}

impl Default for EvolutionConfig {
    fn default() -> Self {
        EvolutionConfig {
            epsilon: 0.05,
            direction: Direction::Evade,
            rho_mut: 0.15,
            mutation_ops: MutationOp::ALL.to_vec(),
            lambda_hybrid: 0.5,
            reward_novelty: 0.4,
            reward_evasion: 0.4,
            reward_complexity: 0.2,
            novelty_cap: 10.0,
            delta_fail: 0.5,
            memory_capacity: 256,
            alpha_trace: 1.0,
            batch_size: 32,
            lambda: 0.5,
            mu: 0.5,
            nu: 1e-4,
            eta: 0.05,
            iterations: 10,
            seed: 0,
            trace_max_depth: DEFAULT_MAX_DEPTH,
            trace_min_confidence: DEFAULT_MIN_CONFIDENCE,
        }
    }
}

impl EvolutionConfig {
    pub fn validate(&self) -> Result<(), EvolutionError> {
        let bad = |m: &str| Err(EvolutionError::InvalidConfig(m.to_string()));
        let w = [self.reward_novelty, self.reward_evasion, self.reward_complexity];
        if w.iter().any(|x| !(x.is_finite() && *x >= 0.0)) || (w.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return bad("reward weights must be nonnegative and sum to 1");
        }
        if !(self.delta_fail > 0.0 && self.delta_fail < 1.0) {
            return bad("delta_fail must lie in (0, 1)");
        }
        if !(self.eta.is_finite() && self.eta >= 0.0) {
            return bad("eta must be nonnegative");
        }
        if !(self.epsilon.is_finite() && self.epsilon >= 0.0) {
            return bad("epsilon must be nonnegative");
        }
        if !(0.0..=1.0).contains(&self.rho_mut) || !(0.0..=1.0).contains(&self.lambda_hybrid) {
            return bad("rho_mut and lambda_hybrid must lie in [0, 1]");
        }
        if self.mutation_ops.is_empty() {
            return bad("at least one mutation operator is required");
        }
        for x in [self.lambda, self.mu, self.nu, self.alpha_trace, self.novelty_cap, self.trace_min_confidence] {
            if !(x.is_finite() && x >= 0.0) {
                return bad("loss weights, alpha_trace, novelty_cap and trace_min_confidence must be nonnegative");
            }
        }
        Ok(())
    }
}

/// splitmix64 step, used to derive per-stream seeds.
pub(crate) fn mix_seed(a: u64, b: u64) -> u64 {
    let mut z = a ^ b.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
