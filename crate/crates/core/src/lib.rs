//! EvoMail: spam and phishing detection over a heterogeneous email graph.
//!
//! The pipeline runs in five stages, each with its own module:
//!
//! * [`ingest`] parses EML/mbox input and turns every message into a
//!   fixed-width feature vector (TF-IDF text, metadata and network signals).
//! * [`graph`] links emails to each other through scored relations and to
//!   the entities they mention (senders, receivers, domains, URLs,
//!   attachments), and precomputes the structural statistics.
//! * [`encoder`] embeds text and node-pair prompts.
//! * [`coggnn`] is the attention GNN that scores every email node, with
//!   exact reverse-mode gradients.
//! * [`evolution`] runs the red/blue adversarial loop with a bounded,
//!   k-medoids-compressed experience memory.
//!
//! [`explain`] extracts evidence paths and feature attributions from a
//! scored graph, and [`harness`] holds metrics, the synthetic drift corpus,
//! experiment drivers and persistence.

pub mod coggnn;
pub mod encoder;
pub mod evolution;
pub mod explain;
pub mod graph;
pub mod harness;
pub mod ingest;
pub mod linalg;
pub(crate) mod records;

pub use coggnn::{ModelState, Hyper};
pub use graph::HeteroGraph;
pub use ingest::EmailDocument;
