//! Pairwise relation scores between emails.

use serde::{Deserialize, Serialize};

use super::{GraphError, RelationKind};
use crate::encoder::{Embedding, SemanticEncoder};
use crate::ingest::EmailDocument;
use crate::linalg::dot;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelationParams {
    pub w_domain: f64,
    pub w_temporal: f64,
    pub w_semantic: f64,
    pub w_sender: f64,
    /// Temporal decay in seconds.
    pub sigma_t: f64,
    pub epsilon_r: f64,
}

impl Default for RelationParams {
    fn default() -> Self {
        RelationParams {
            w_domain: 1.0,
            w_temporal: 1.0,
            w_semantic: 1.0,
            w_sender: 1.0,
            sigma_t: 86_400.0,
            epsilon_r: 0.5,
        }
    }
}

impl RelationParams {
    pub fn validate(&self) -> Result<(), GraphError> {
        let weights = [self.w_domain, self.w_temporal, self.w_semantic, self.w_sender];
        if weights.iter().any(|w| !(w.is_finite() && *w > 0.0)) {
            return Err(GraphError::InvalidParams("relation weights must be positive".into()));
        }
        if !(self.sigma_t.is_finite() && self.sigma_t > 0.0) {
            return Err(GraphError::InvalidParams("sigma_t must be positive".into()));
        }
        if !(self.epsilon_r.is_finite() && self.epsilon_r >= 0.0) {
            return Err(GraphError::InvalidParams("epsilon_r must be nonnegative".into()));
        }
        Ok(())
    }

    pub fn weight(&self, kind: RelationKind) -> f64 {
        match kind {
            RelationKind::Domain => self.w_domain,
            RelationKind::Temporal => self.w_temporal,
            RelationKind::Semantic => self.w_semantic,
            RelationKind::Sender => self.w_sender,
            _ => 0.0,
        }
    }

    /// The largest time gap at which the temporal score still exceeds `epsilon_r`.
    pub fn temporal_reach(&self) -> f64 {
        if self.epsilon_r <= 0.0 {
            f64::INFINITY
        } else if self.w_temporal <= self.epsilon_r {
            0.0
        } else {
            self.sigma_t * (self.w_temporal / self.epsilon_r).ln()
        }
    }
}

fn same<T: PartialEq>(a: &Option<T>, b: &Option<T>) -> bool {
    matches!((a, b), (Some(x), Some(y)) if x == y)
}

fn temporal(u: &EmailDocument, v: &EmailDocument, params: &RelationParams) -> f64 {
    match (u.timestamp, v.timestamp) {
        (Some(a), Some(b)) => {
            let dt = (a - b).unsigned_abs() as f64;
            (-dt / params.sigma_t).exp() * params.w_temporal
        }
        _ => 0.0,
    }
}

/// Negative cosines are clamped to zero so that edge weights stay positive.
fn semantic_from(a: &[f64], b: &[f64], params: &RelationParams) -> f64 {
    dot(a, b).clamp(0.0, 1.0) * params.w_semantic
}

/// Scores one relation kind between two emails. Non-scored kinds yield 0.
pub fn relation_score(
    u: &EmailDocument,
    v: &EmailDocument,
    kind: RelationKind,
    params: &RelationParams,
    encoder: &SemanticEncoder,
) -> Result<f64, GraphError> {
    Ok(match kind {
        RelationKind::Domain => {
            if same(&u.sender_domain, &v.sender_domain) {
                params.w_domain
            } else {
                0.0
            }
        }
        RelationKind::Sender => {
            if same(&u.sender_address, &v.sender_address) {
                params.w_sender
            } else {
                0.0
            }
        }
        RelationKind::Temporal => temporal(u, v, params),
        RelationKind::Semantic => {
            let a = encoder.encode_text(&u.text_content())?;
            let b = encoder.encode_text(&v.text_content())?;
            semantic_from(&a, &b, params)
        }
        _ => 0.0,
    })
}

/// The four scored relations for one pair, in `RelationKind::SCORED` order.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScoredKinds(pub [f64; 4]);

impl ScoredKinds {
    pub fn max(&self) -> f64 {
        self.0.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn sum(&self) -> f64 {
        self.0.iter().sum()
    }

    /// Kind of the largest score; ties resolve to the earlier kind.
    pub fn argmax(&self) -> RelationKind {
        let mut best = 0;
        for i in 1..4 {
            if self.0[i] > self.0[best] {
                best = i;
            }
        }
        RelationKind::SCORED[best]
    }
}

/// Scores pairs of a fixed document list, embedding each text once.
pub struct RelationScorer<'a> {
    docs: &'a [EmailDocument],
    embeddings: Vec<Embedding>,
    params: RelationParams,
    active: [bool; 4],
}

impl<'a> RelationScorer<'a> {
    pub fn new(
        docs: &'a [EmailDocument],
        params: RelationParams,
        encoder: &SemanticEncoder,
        active: [bool; 4],
    ) -> Result<Self, GraphError> {
        params.validate()?;
        let texts: Vec<String> = docs.iter().map(|d| d.text_content()).collect();
        let refs: Vec<&str> = texts.iter().map(String::as_str).collect();
        let embeddings = if active[2] {
            encoder.encode_batch(&refs)?
        } else {
            Vec::new()
        };
        Ok(RelationScorer {
            docs,
            embeddings,
            params,
            active,
        })
    }

    pub fn params(&self) -> &RelationParams {
        &self.params
    }

    pub fn score(&self, i: usize, j: usize) -> ScoredKinds {
        let (u, v) = (&self.docs[i], &self.docs[j]);
        let p = &self.params;
        let mut s = [0.0; 4];
        if self.active[0] && same(&u.sender_domain, &v.sender_domain) {
            s[0] = p.w_domain;
        }
        if self.active[1] {
            s[1] = temporal(u, v, p);
        }
        if self.active[2] {
            s[2] = semantic_from(&self.embeddings[i], &self.embeddings[j], p);
        }
        if self.active[3] && same(&u.sender_address, &v.sender_address) {
            s[3] = p.w_sender;
        }
        ScoredKinds(s)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn doc(id: &str, from: &str, ts: Option<i64>, body: &str) -> EmailDocument {
        let mut d = EmailDocument::blank(id);
        d.set_sender(from);
        d.timestamp = ts;
        d.body = body.to_string();
        d
    }

    #[test]
    fn indicator_and_decay() {
        let enc = SemanticEncoder::hashed(64);
        let p = RelationParams::default();
        let a = doc("a", "x@s.com", Some(0), "hello there");
        let b = doc("b", "y@s.com", Some(86_400), "other words entirely");
        assert_eq!(relation_score(&a, &b, RelationKind::Domain, &p, &enc).unwrap(), 1.0);
        assert_eq!(relation_score(&a, &b, RelationKind::Sender, &p, &enc).unwrap(), 0.0);
        let t = relation_score(&a, &b, RelationKind::Temporal, &p, &enc).unwrap();
        assert!((t - (-1.0f64).exp()).abs() < 1e-15);
        assert!((t - 0.36788).abs() < 1e-5);
        let s = relation_score(&a, &a, RelationKind::Semantic, &p, &enc).unwrap();
        assert!((s - 1.0).abs() < 1e-12);
    }

    #[test]
    fn missing_timestamp_scores_zero() {
        let enc = SemanticEncoder::hashed(16);
        let p = RelationParams::default();
        let a = doc("a", "x@s.com", None, "");
        let b = doc("b", "x@s.com", Some(5), "");
        assert_eq!(relation_score(&a, &b, RelationKind::Temporal, &p, &enc).unwrap(), 0.0);
    }

    #[test]
    fn scorer_agrees_with_relation_score() {
        let enc = SemanticEncoder::hashed(64);
        let p = RelationParams::default();
        let docs = vec![
            doc("a", "x@s.com", Some(0), "win a free prize today"),
            doc("b", "x@s.com", Some(5000), "win a free prize now"),
        ];
        let scorer = RelationScorer::new(&docs, p.clone(), &enc, [true; 4]).unwrap();
        let s = scorer.score(0, 1);
        for (k, kind) in RelationKind::SCORED.iter().enumerate() {
            let r = relation_score(&docs[0], &docs[1], *kind, &p, &enc).unwrap();
            assert!((s.0[k] - r).abs() < 1e-12);
        }
    }

    #[test]
    fn argmax_ties_prefer_earlier_kind() {
        assert_eq!(ScoredKinds([1.0, 0.2, 0.1, 1.0]).argmax(), RelationKind::Domain);
        assert_eq!(ScoredKinds([0.0, 0.2, 0.9, 0.0]).argmax(), RelationKind::Semantic);
        assert!((ScoredKinds([1.0, 0.2, 0.1, 0.0]).sum() - 1.3).abs() < 1e-12);
    }

    #[test]
    fn reach_matches_threshold() {
        let p = RelationParams::default();
        let r = p.temporal_reach();
        assert!(((-r / p.sigma_t).exp() - p.epsilon_r).abs() < 1e-12);
    }
}
