//! Metrics, synthetic corpora, experiment drivers and persistence.

pub mod config;
pub mod corpus;
pub mod eval;
pub mod experiments;
pub mod metrics;
pub mod report;
pub mod state;
pub mod synthetic;

use thiserror::Error;

use crate::coggnn::GnnError;
use crate::evolution::EvolutionError;
use crate::graph::GraphError;
use crate::ingest::IngestError;

pub use config::ExperimentConfig;
pub use corpus::{load_inputs, read_corpus, write_corpus, CORPUS_HEADER};
pub use eval::{eval_report, synthetic_phase, Scenario};
pub use experiments::{
    detect, explain_email, run_cross_modal, run_shift, run_static, split_indices, Modality, PhaseResult, Pipeline,
    ShiftReport, StaticOutcome,
};
pub use metrics::{classification_metrics, stc_metric, MetricsReport};
pub use report::{Report, ReportRecord, REPORT_HEADER};
pub use state::{load_state, save_state, SavedState, STATE_MAGIC};
pub use synthetic::{generate_phase_corpus, has_attack_marker, Phase, PhaseSpec, SyntheticEmail};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum HarnessError {
    #[error("empty or mismatched input")]
    EmptyInput,
    #[error("at least two checkpoints are required, got {0}")]
    InsufficientCheckpoints(usize),
    #[error("config error: {0}")]
    Config(String),
    #[error("unsupported file version {found:?}")]
    VersionMismatch { found: String },
    #[error("corrupt file at byte {offset}: {reason}")]
    CorruptFile { offset: usize, reason: String },
    #[error("io error: {0}")]
    Io(String),
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Gnn(#[from] GnnError),
    #[error(transparent)]
    Evolution(#[from] EvolutionError),
}
