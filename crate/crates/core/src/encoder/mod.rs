//! Text and node-pair embeddings.
//!
//! The default backend is a deterministic signed feature-hashing encoder over
//! token trigrams. A remote backend talks to an embedding service over HTTP;
//! both return unit-norm vectors of the configured dimension and share one
//! digest-keyed cache.

mod hashed;
mod remote;

use std::sync::Arc;

use dashmap::DashMap;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::graph::{Node, NodeKind, RelationKind};

pub use hashed::hashed_embedding;
pub use remote::{RemoteConfig, RemoteEncoder};

pub const DEFAULT_DIM: usize = 256;
pub const DEFAULT_TASK_CONTEXT: &str = "decide whether the email is spam or phishing";
const DESC_BODY_CHARS: usize = 200;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EncoderError {
    #[error("remote encoder unavailable: {0}")]
    RemoteUnavailable(String),
}

pub type Embedding = Arc<[f64]>;

pub enum Backend {
    Hashed,
    Remote {
        client: RemoteEncoder,
        /// Use the hashed encoder when the service fails instead of erroring.
        fallback_to_hashed: bool,
    },
}

pub struct SemanticEncoder {
    dim: usize,
    backend: Backend,
    cache: DashMap<[u8; 32], Embedding>,
}

impl std::fmt::Debug for SemanticEncoder {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let backend = match self.backend {
            Backend::Hashed => "hashed",
            Backend::Remote { .. } => "remote",
        };
        f.debug_struct("SemanticEncoder")
            .field("dim", &self.dim)
            .field("backend", &backend)
            .field("cached", &self.cache.len())
            .finish()
    }
}

fn digest(text: &str) -> [u8; 32] {
    Sha256::digest(text.as_bytes()).into()
}

/// The unit basis vector e_1, returned for empty text.
pub fn unit_basis(dim: usize) -> Vec<f64> {
    let mut v = vec![0.0; dim];
    if let Some(first) = v.first_mut() {
        *first = 1.0;
    }
    v
}

impl SemanticEncoder {
    pub fn hashed(dim: usize) -> Self {
        assert!(dim > 0, "embedding dimension must be positive");
        SemanticEncoder {
            dim,
            backend: Backend::Hashed,
            cache: DashMap::new(),
        }
    }

    pub fn remote(client: RemoteEncoder, dim: usize, fallback_to_hashed: bool) -> Self {
        assert!(dim > 0, "embedding dimension must be positive");
        SemanticEncoder {
            dim,
            backend: Backend::Remote {
                client,
                fallback_to_hashed,
            },
            cache: DashMap::new(),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn cache_len(&self) -> usize {
        self.cache.len()
    }

    pub fn clear_cache(&self) {
        self.cache.clear();
    }

    pub fn encode_text(&self, text: &str) -> Result<Embedding, EncoderError> {
        let key = digest(text);
        if let Some(hit) = self.cache.get(&key) {
            return Ok(hit.clone());
        }
        let v = self.compute(&[text])?.pop().expect("one text in, one vector out");
        self.cache.insert(key, v.clone());
        Ok(v)
    }

    /// Encodes many texts; only cache misses reach the backend, in one request.
    pub fn encode_batch(&self, texts: &[&str]) -> Result<Vec<Embedding>, EncoderError> {
        let keys: Vec<[u8; 32]> = texts.iter().map(|t| digest(t)).collect();
        let mut out: Vec<Option<Embedding>> = keys
            .iter()
            .map(|k| self.cache.get(k).map(|e| e.clone()))
            .collect();
        let mut miss_idx = Vec::new();
        let mut miss_text = Vec::new();
        for (i, slot) in out.iter().enumerate() {
            if slot.is_none() {
                miss_idx.push(i);
                miss_text.push(texts[i]);
            }
        }
        if !miss_text.is_empty() {
            let computed = self.compute(&miss_text)?;
            for (i, v) in miss_idx.into_iter().zip(computed) {
                self.cache.insert(keys[i], v.clone());
                out[i] = Some(v);
            }
        }
        Ok(out.into_iter().map(|v| v.expect("filled above")).collect())
    }

    fn compute(&self, texts: &[&str]) -> Result<Vec<Embedding>, EncoderError> {
        match &self.backend {
            Backend::Hashed => Ok(texts
                .iter()
                .map(|t| Embedding::from(hashed_embedding(t, self.dim)))
                .collect()),
            Backend::Remote {
                client,
                fallback_to_hashed,
            } => match self.embed_remote(client, texts) {
                Ok(vs) => Ok(vs),
                Err(e) if *fallback_to_hashed => {
                    tracing::warn!("{e}; falling back to the hashed encoder");
                    Ok(texts
                        .iter()
                        .map(|t| Embedding::from(hashed_embedding(t, self.dim)))
                        .collect())
                }
                Err(e) => Err(e),
            },
        }
    }

    /// Empty texts get the unit basis vector without a request.
    fn embed_remote(&self, client: &RemoteEncoder, texts: &[&str]) -> Result<Vec<Embedding>, EncoderError> {
        let asked: Vec<&str> = texts.iter().copied().filter(|t| !t.is_empty()).collect();
        let mut got = if asked.is_empty() { Vec::new() } else { client.embed(&asked, self.dim)? }.into_iter();
        Ok(texts
            .iter()
            .map(|t| {
                let v = if t.is_empty() { unit_basis(self.dim) } else { got.next().expect("one vector per text") };
                Embedding::from(v)
            })
            .collect())
    }

    /// `P(u, v)`: the embedding of the rendered pair prompt.
    pub fn encode_pair(
        &self,
        u: &Node,
        v: &Node,
        relation: RelationKind,
        task_context: &str,
    ) -> Result<Embedding, EncoderError> {
        self.encode_text(&render_pair_prompt(u, v, relation, task_context))
    }
}

/// The description of a node used in prompts: subject plus the first 200
/// body characters for emails, the identifier for entities.
pub fn email_description(subject: &str, body: &str) -> String {
    let body: String = body.chars().take(DESC_BODY_CHARS).collect();
    let joined = if subject.is_empty() {
        body
    } else if body.is_empty() {
        subject.to_string()
    } else {
        format!("{subject} {body}")
    };
    // Prompt fields are line-delimited.
    joined.replace(['\r', '\n'], " ")
}

pub fn render_pair_prompt(u: &Node, v: &Node, relation: RelationKind, task_context: &str) -> String {
    render_prompt_parts(u.kind, &u.desc, v.kind, &v.desc, relation, task_context)
}

pub fn render_prompt_parts(
    kind_a: NodeKind,
    desc_a: &str,
    kind_b: NodeKind,
    desc_b: &str,
    relation: RelationKind,
    task_context: &str,
) -> String {
    format!(
        "TASK: {task_context}\nNODE_A({}): {desc_a}\nNODE_B({}): {desc_b}\nRELATION: {}",
        kind_a.as_str(),
        kind_b.as_str(),
        relation.as_str()
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{dot, norm};

    fn node(id: usize, kind: NodeKind, desc: &str) -> Node {
        Node::new(id, kind, desc.to_string(), desc.to_string())
    }

    #[test]
    fn determinism_and_unit_norm() {
        let enc = SemanticEncoder::hashed(256);
        let a = enc.encode_text("urgent: verify your account now").unwrap();
        enc.clear_cache();
        let b = enc.encode_text("urgent: verify your account now").unwrap();
        assert_eq!(&a[..], &b[..]);
        assert!((norm(&a) - 1.0).abs() < 1e-9);
        assert!((dot(&a, &b) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn empty_text_is_e1() {
        let enc = SemanticEncoder::hashed(8);
        assert_eq!(&enc.encode_text("").unwrap()[..], &unit_basis(8)[..]);
        assert_eq!(&enc.encode_text("  ,, ").unwrap()[..], &unit_basis(8)[..]);
    }

    #[test]
    fn batch_equals_single() {
        let enc = SemanticEncoder::hashed(64);
        let texts = ["one two three", "four five six seven", "one two three"];
        let batch = enc.encode_batch(&texts).unwrap();
        assert_eq!(enc.cache_len(), 2);
        let fresh = SemanticEncoder::hashed(64);
        for (t, b) in texts.iter().zip(&batch) {
            assert_eq!(&fresh.encode_text(t).unwrap()[..], &b[..]);
        }
    }

    #[test]
    fn prompt_template() {
        let a = node(0, NodeKind::Email, "Win big claim your prize");
        let b = node(1, NodeKind::Sender, "promo@win.example");
        let p = render_pair_prompt(&a, &b, RelationKind::SentTo, "classify");
        assert_eq!(
            p,
            "TASK: classify\nNODE_A(email): Win big claim your prize\nNODE_B(sender): promo@win.example\nRELATION: sent_to"
        );
        assert_eq!(p, render_pair_prompt(&a, &b, RelationKind::SentTo, "classify"));
    }

    #[test]
    fn description_truncates_body() {
        let body = "x".repeat(1000);
        let d = email_description("", &body);
        assert_eq!(d.chars().count(), 200);
        let d = email_description("Hello", "line1\nline2");
        assert_eq!(d, "Hello line1 line2");
    }

    #[test]
    fn pair_cache_and_relation_sensitivity() {
        let enc = SemanticEncoder::hashed(256);
        let a = node(0, NodeKind::Email, "Invoice overdue please pay today");
        let b = node(1, NodeKind::Url, "pay.example");
        let p1 = enc.encode_pair(&a, &b, RelationKind::LinkedTo, DEFAULT_TASK_CONTEXT).unwrap();
        let n = enc.cache_len();
        let p2 = enc.encode_pair(&a, &b, RelationKind::LinkedTo, DEFAULT_TASK_CONTEXT).unwrap();
        assert_eq!(enc.cache_len(), n);
        assert_eq!(&p1[..], &p2[..]);
        assert!((norm(&p1) - 1.0).abs() < 1e-6);
        let p3 = enc.encode_pair(&a, &b, RelationKind::Semantic, DEFAULT_TASK_CONTEXT).unwrap();
        assert_ne!(&p1[..], &p3[..]);
    }
}
