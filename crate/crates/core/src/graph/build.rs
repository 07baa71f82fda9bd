//! Email-email edge construction and entity expansion.

use std::collections::HashMap;

use fnv::{FnvHashMap, FnvHashSet};
use serde::{Deserialize, Serialize};

use super::relations::RelationScorer;
use super::{Edge, GraphError, HeteroGraph, Node, NodeKind, RelationKind, RelationParams};
use crate::encoder::{email_description, SemanticEncoder};
use crate::ingest::EmailDocument;
use crate::linalg::SparseVec;

/// Index in entity feature vectors holding ln(1 + degree).
pub const ENTITY_DEGREE_SLOT: usize = NodeKind::ALL.len();

/// Weight added to a scored email pair that is also joined by a reply header.
const REPLY_WEIGHT: f64 = 1.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum CandidatePolicy {
    /// Score every pair; refused above `cap` emails.
    AllPairs { cap: usize },
    /// Score pairs sharing a sender, sender domain or URL host, or lying
    /// within `temporal_window` seconds. `None` uses the distance at which
    /// the temporal score drops to the threshold.
    Blocked { temporal_window: Option<f64> },
    /// All pairs up to `all_pairs_cap` emails, blocked beyond.
    Auto { all_pairs_cap: usize },
}

impl Default for CandidatePolicy {
    fn default() -> Self {
        CandidatePolicy::Auto { all_pairs_cap: 3000 }
    }
}

/// Which relations and entity classes take part in the graph.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelationMask {
    /// Domain, temporal, semantic, sender.
    pub scored: [bool; 4],
    pub block_on_urls: bool,
    /// Sender, receiver and their domain nodes.
    pub people: bool,
    pub urls: bool,
    pub attachments: bool,
    pub replies: bool,
}

impl RelationMask {
    pub fn full() -> Self {
        RelationMask {
            scored: [true; 4],
            block_on_urls: true,
            people: true,
            urls: true,
            attachments: true,
            replies: true,
        }
    }

    pub fn text_only() -> Self {
        RelationMask {
            scored: [false, false, true, false],
            block_on_urls: false,
            people: false,
            urls: false,
            attachments: false,
            replies: false,
        }
    }

    pub fn text_meta() -> Self {
        RelationMask {
            block_on_urls: false,
            urls: false,
            attachments: false,
            ..RelationMask::full()
        }
    }
}

impl Default for RelationMask {
    fn default() -> Self {
        RelationMask::full()
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct GraphOptions {
    pub relations: RelationParams,
    pub policy: CandidatePolicy,
    pub mask: RelationMask,
}

fn pair_key(i: usize, j: usize) -> (usize, usize) {
    if i < j {
        (i, j)
    } else {
        (j, i)
    }
}

fn candidate_pairs(
    docs: &[EmailDocument],
    policy: &CandidatePolicy,
    params: &RelationParams,
    mask: &RelationMask,
) -> Result<Vec<(usize, usize)>, GraphError> {
    let n = docs.len();
    let policy = match policy {
        CandidatePolicy::Auto { all_pairs_cap } if n <= *all_pairs_cap => {
            CandidatePolicy::AllPairs { cap: *all_pairs_cap }
        }
        CandidatePolicy::Auto { .. } => CandidatePolicy::Blocked { temporal_window: None },
        other => other.clone(),
    };
    match policy {
        CandidatePolicy::AllPairs { cap } => {
            if n > cap {
                return Err(GraphError::CandidateExplosion { n, cap });
            }
            let mut out = Vec::with_capacity(n * n.saturating_sub(1) / 2);
            for i in 0..n {
                for j in i + 1..n {
                    out.push((i, j));
                }
            }
            Ok(out)
        }
        CandidatePolicy::Blocked { temporal_window } => {
            let mut blocks: HashMap<String, Vec<usize>> = HashMap::new();
            for (i, d) in docs.iter().enumerate() {
                let mut keys = Vec::new();
                if let Some(s) = &d.sender_address {
                    keys.push(format!("s:{s}"));
                }
                if let Some(s) = &d.sender_domain {
                    keys.push(format!("d:{s}"));
                }
                if mask.block_on_urls {
                    for u in &d.urls {
                        keys.push(format!("u:{}", u.host));
                    }
                }
                keys.sort();
                keys.dedup();
                for k in keys {
                    blocks.entry(k).or_default().push(i);
                }
            }
            let mut set: FnvHashSet<(usize, usize)> = FnvHashSet::default();
            for members in blocks.values() {
                for (a, &i) in members.iter().enumerate() {
                    for &j in &members[a + 1..] {
                        set.insert(pair_key(i, j));
                    }
                }
            }
            let window = temporal_window.unwrap_or_else(|| params.temporal_reach());
            let mut timed: Vec<(i64, usize)> = docs
                .iter()
                .enumerate()
                .filter_map(|(i, d)| d.timestamp.map(|t| (t, i)))
                .collect();
            timed.sort_unstable();
            for a in 0..timed.len() {
                for b in a + 1..timed.len() {
                    if (timed[b].0 - timed[a].0) as f64 > window {
                        break;
                    }
                    set.insert(pair_key(timed[a].1, timed[b].1));
                }
            }
            let mut out: Vec<_> = set.into_iter().collect();
            out.sort_unstable();
            Ok(out)
        }
        CandidatePolicy::Auto { .. } => unreachable!("resolved above"),
    }
}

/// Scores candidate email pairs and keeps those whose largest relation
/// exceeds the threshold. The edge weight is the sum of the four scores and
/// its kind is the largest-scoring relation. Edge endpoints are document indices.
pub fn build_email_edges(
    docs: &[EmailDocument],
    params: &RelationParams,
    encoder: &SemanticEncoder,
    policy: &CandidatePolicy,
    mask: &RelationMask,
) -> Result<Vec<Edge>, GraphError> {
    let scorer = RelationScorer::new(docs, params.clone(), encoder, mask.scored)?;
    let pairs = candidate_pairs(docs, policy, params, mask)?;
    let mut edges = Vec::new();
    for (i, j) in pairs {
        let s = scorer.score(i, j);
        if s.max() > params.epsilon_r {
            edges.push(Edge::new(i, j, s.argmax(), s.sum()));
        }
    }
    Ok(edges)
}

struct Builder {
    nodes: Vec<Node>,
    index: FnvHashMap<(NodeKind, String), usize>,
    edges: Vec<Edge>,
    pair_index: FnvHashMap<(usize, usize), usize>,
    dim: usize,
}

impl Builder {
    fn entity(&mut self, kind: NodeKind, key: &str) -> usize {
        if let Some(&id) = self.index.get(&(kind, key.to_string())) {
            return id;
        }
        let id = self.nodes.len();
        let mut node = Node::new(id, kind, key.to_string(), key.to_string());
        node.features = SparseVec::zeros(self.dim);
        self.nodes.push(node);
        self.index.insert((kind, key.to_string()), id);
        id
    }

    /// Adds a schema edge unless the pair is already joined.
    fn link(&mut self, a: usize, b: usize, relation: RelationKind) {
        let key = pair_key(a, b);
        if a == b || self.pair_index.contains_key(&key) {
            return;
        }
        self.pair_index.insert(key, self.edges.len());
        self.edges.push(Edge::new(a, b, relation, 1.0));
    }
}

/// Adds sender, receiver, domain, URL-host and attachment nodes plus the
/// schema edges joining them to the emails. `email_features[i]` becomes the
/// feature vector of email node `i`; entity nodes get a one-hot kind
/// indicator and ln(1 + degree).
pub fn expand_entity_graph(
    docs: &[EmailDocument],
    email_edges: Vec<Edge>,
    email_features: Vec<SparseVec>,
    feature_dim: usize,
    mask: &RelationMask,
) -> Result<HeteroGraph, GraphError> {
    if email_features.len() != docs.len() {
        return Err(GraphError::DimensionMismatch {
            expected: docs.len(),
            found: email_features.len(),
        });
    }
    if feature_dim <= ENTITY_DEGREE_SLOT {
        return Err(GraphError::DimensionMismatch {
            expected: ENTITY_DEGREE_SLOT + 1,
            found: feature_dim,
        });
    }
    let mut b = Builder {
        nodes: Vec::with_capacity(docs.len() * 3),
        index: FnvHashMap::default(),
        edges: Vec::new(),
        pair_index: FnvHashMap::default(),
        dim: feature_dim,
    };
    for (i, (doc, x)) in docs.iter().zip(email_features).enumerate() {
        if x.dim != feature_dim {
            return Err(GraphError::DimensionMismatch {
                expected: feature_dim,
                found: x.dim,
            });
        }
        let mut node = Node::new(
            i,
            NodeKind::Email,
            doc.id.clone(),
            email_description(&doc.subject, &doc.body),
        );
        node.features = x;
        node.label = doc.label;
        b.nodes.push(node);
    }
    for e in email_edges {
        let key = (e.u, e.v);
        if e.v >= docs.len() || b.pair_index.contains_key(&key) {
            return Err(GraphError::File(format!("bad email edge {}-{}", e.u, e.v)));
        }
        b.pair_index.insert(key, b.edges.len());
        b.edges.push(e);
    }
    if mask.replies {
        let mut by_message_id: HashMap<&str, usize> = HashMap::new();
        for (i, d) in docs.iter().enumerate() {
            if let Some(m) = d.message_id.as_deref() {
                by_message_id.entry(m).or_insert(i);
            }
        }
        for (i, d) in docs.iter().enumerate() {
            let Some(&j) = d.in_reply_to.as_deref().and_then(|r| by_message_id.get(r)) else {
                continue;
            };
            if i == j {
                continue;
            }
            let key = pair_key(i, j);
            match b.pair_index.get(&key) {
                Some(&ei) => {
                    let e = &mut b.edges[ei];
                    e.relation = RelationKind::RepliedTo;
                    e.weight += REPLY_WEIGHT;
                }
                None => {
                    b.pair_index.insert(key, b.edges.len());
                    b.edges.push(Edge::new(i, j, RelationKind::RepliedTo, REPLY_WEIGHT));
                }
            }
        }
    }
    for (i, d) in docs.iter().enumerate() {
        if mask.people {
            if let Some(addr) = &d.sender_address {
                let s = b.entity(NodeKind::Sender, addr);
                b.link(i, s, RelationKind::SentTo);
                if let Some(dom) = &d.sender_domain {
                    let dn = b.entity(NodeKind::Domain, dom);
                    b.link(s, dn, RelationKind::HostedOn);
                }
            }
            for addr in &d.recipient_addresses {
                let r = b.entity(NodeKind::Receiver, addr);
                b.link(i, r, RelationKind::SentTo);
                if let Some(dom) = crate::ingest::domain_of(addr) {
                    let dn = b.entity(NodeKind::Domain, &dom);
                    b.link(r, dn, RelationKind::HostedOn);
                }
            }
        }
        if mask.urls {
            for u in &d.urls {
                let un = b.entity(NodeKind::Url, &u.host);
                b.link(i, un, RelationKind::LinkedTo);
                let dn = b.entity(NodeKind::Domain, &u.host);
                b.link(un, dn, RelationKind::HostedOn);
            }
        }
        if mask.attachments {
            for a in &d.attachments {
                let an = b.entity(NodeKind::Attachment, &a.digest);
                b.link(i, an, RelationKind::Contains);
            }
        }
    }
    let mut degree = vec![0usize; b.nodes.len()];
    for e in &b.edges {
        degree[e.u] += 1;
        degree[e.v] += 1;
    }
    for node in b.nodes.iter_mut().skip(docs.len()) {
        node.features = SparseVec::from_pairs(
            feature_dim,
            [
                (node.kind.index(), 1.0),
                (ENTITY_DEGREE_SLOT, (1.0 + degree[node.id] as f64).ln()),
            ],
        );
    }
    HeteroGraph::new(b.nodes, b.edges, feature_dim)
}

/// Email edges plus entity expansion in one call.
pub fn build_graph(
    docs: &[EmailDocument],
    email_features: Vec<SparseVec>,
    feature_dim: usize,
    encoder: &SemanticEncoder,
    options: &GraphOptions,
) -> Result<HeteroGraph, GraphError> {
    let edges = build_email_edges(docs, &options.relations, encoder, &options.policy, &options.mask)?;
    expand_entity_graph(docs, edges, email_features, feature_dim, &options.mask)
}
