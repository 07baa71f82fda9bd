//! The heterogeneous email graph: typed nodes, typed weighted undirected
//! edges, and the structural statistics the GNN reads.

mod build;
mod io;
mod relations;
mod stats;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingest::Label;
use crate::linalg::SparseVec;

pub use build::{
    build_email_edges, build_graph, expand_entity_graph, CandidatePolicy, GraphOptions,
    RelationMask,
};
pub use io::{read_graph, write_graph};
pub use relations::{relation_score, RelationParams, RelationScorer, ScoredKinds};
pub use stats::{compute_structural_stats, StructuralStats, DEFAULT_DAMPING, DEFAULT_MAX_HOPS};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GraphError {
    #[error("all-pairs candidate generation over {n} emails exceeds the cap of {cap}")]
    CandidateExplosion { n: usize, cap: usize },
    #[error("invalid relation parameters: {0}")]
    InvalidParams(String),
    #[error("feature dimension mismatch: expected {expected}, got {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error(transparent)]
    Encoder(#[from] crate::encoder::EncoderError),
    #[error("graph file error: {0}")]
    File(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeKind {
    Email,
    Sender,
    Receiver,
    Domain,
    Url,
    Attachment,
}

impl NodeKind {
    pub const ALL: [NodeKind; 6] = [
        NodeKind::Email,
        NodeKind::Sender,
        NodeKind::Receiver,
        NodeKind::Domain,
        NodeKind::Url,
        NodeKind::Attachment,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn as_str(self) -> &'static str {
        match self {
            NodeKind::Email => "email",
            NodeKind::Sender => "sender",
            NodeKind::Receiver => "receiver",
            NodeKind::Domain => "domain",
            NodeKind::Url => "url",
            NodeKind::Attachment => "attachment",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RelationKind {
    SentTo,
    HostedOn,
    Contains,
    LinkedTo,
    RepliedTo,
    Domain,
    Temporal,
    Semantic,
    Sender,
}

impl RelationKind {
    pub const COUNT: usize = 9;
    pub const ALL: [RelationKind; 9] = [
        RelationKind::SentTo,
        RelationKind::HostedOn,
        RelationKind::Contains,
        RelationKind::LinkedTo,
        RelationKind::RepliedTo,
        RelationKind::Domain,
        RelationKind::Temporal,
        RelationKind::Semantic,
        RelationKind::Sender,
    ];
    /// The relations scored between pairs of emails.
    pub const SCORED: [RelationKind; 4] = [
        RelationKind::Domain,
        RelationKind::Temporal,
        RelationKind::Semantic,
        RelationKind::Sender,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn as_str(self) -> &'static str {
        match self {
            RelationKind::SentTo => "sent_to",
            RelationKind::HostedOn => "hosted_on",
            RelationKind::Contains => "contains",
            RelationKind::LinkedTo => "linked_to",
            RelationKind::RepliedTo => "replied_to",
            RelationKind::Domain => "domain",
            RelationKind::Temporal => "temporal",
            RelationKind::Semantic => "semantic",
            RelationKind::Sender => "sender",
        }
    }

    /// Whether an edge of this kind may join nodes of kinds `a` and `b`.
    pub fn allows(self, a: NodeKind, b: NodeKind) -> bool {
        use NodeKind::*;
        let (a, b) = if a <= b { (a, b) } else { (b, a) };
        match self {
            RelationKind::SentTo => matches!((a, b), (Email, Sender) | (Email, Receiver)),
            RelationKind::HostedOn => {
                matches!((a, b), (Sender, Domain) | (Receiver, Domain) | (Domain, Url))
            }
            RelationKind::Contains => (a, b) == (Email, Attachment),
            RelationKind::LinkedTo => (a, b) == (Email, Url),
            RelationKind::RepliedTo
            | RelationKind::Domain
            | RelationKind::Temporal
            | RelationKind::Semantic
            | RelationKind::Sender => (a, b) == (Email, Email),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Node {
    pub id: usize,
    pub kind: NodeKind,
    /// Document id for emails, the identifier (address, domain, host, digest)
    /// for entities.
    pub key: String,
    /// Text used in pair prompts.
    pub desc: String,
    pub features: SparseVec,
    pub label: Option<Label>,
}

impl Node {
    pub fn new(id: usize, kind: NodeKind, key: String, desc: String) -> Self {
        Node {
            id,
            kind,
            key,
            desc,
            features: SparseVec::zeros(0),
            label: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    pub u: usize,
    pub v: usize,
    pub relation: RelationKind,
    pub weight: f64,
}

impl Edge {
    /// Stores the endpoints in ascending order.
    pub fn new(a: usize, b: usize, relation: RelationKind, weight: f64) -> Self {
        let (u, v) = if a < b { (a, b) } else { (b, a) };
        Edge {
            u,
            v,
            relation,
            weight,
        }
    }
}

/// Typed, undirected, simple graph. Email nodes occupy ids `0..num_emails`
/// in document order; entity nodes follow.
#[derive(Debug, Clone, PartialEq)]
pub struct HeteroGraph {
    nodes: Vec<Node>,
    edges: Vec<Edge>,
    num_emails: usize,
    feature_dim: usize,
    /// Per node: (neighbor, edge index), sorted by neighbor id.
    adjacency: Vec<Vec<(usize, usize)>>,
}

impl HeteroGraph {
    /// Assembles a graph, validating ids, weights, self-loops and duplicate pairs.
    pub fn new(nodes: Vec<Node>, edges: Vec<Edge>, feature_dim: usize) -> Result<Self, GraphError> {
        let n = nodes.len();
        for (i, node) in nodes.iter().enumerate() {
            if node.id != i {
                return Err(GraphError::File(format!("node at position {i} has id {}", node.id)));
            }
            if node.features.dim != feature_dim {
                return Err(GraphError::DimensionMismatch {
                    expected: feature_dim,
                    found: node.features.dim,
                });
            }
        }
        let num_emails = nodes.iter().take_while(|n| n.kind == NodeKind::Email).count();
        if nodes[num_emails..].iter().any(|n| n.kind == NodeKind::Email) {
            return Err(GraphError::File("email nodes must precede entity nodes".into()));
        }
        let mut adjacency = vec![Vec::new(); n];
        let mut seen = std::collections::HashSet::new();
        for (ei, e) in edges.iter().enumerate() {
            if e.u >= n || e.v >= n {
                return Err(GraphError::File(format!("edge {ei} references a missing node")));
            }
            if e.u >= e.v {
                return Err(GraphError::File(format!("edge {ei} is a self-loop or not ordered")));
            }
            if !(e.weight.is_finite() && e.weight > 0.0) {
                return Err(GraphError::File(format!("edge {ei} has weight {}", e.weight)));
            }
            if !seen.insert((e.u, e.v)) {
                return Err(GraphError::File(format!("edge {ei} duplicates a node pair")));
            }
            adjacency[e.u].push((e.v, ei));
            adjacency[e.v].push((e.u, ei));
        }
        for list in &mut adjacency {
            list.sort_unstable();
        }
        Ok(HeteroGraph {
            nodes,
            edges,
            num_emails,
            feature_dim,
            adjacency,
        })
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn node(&self, id: usize) -> &Node {
        &self.nodes[id]
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn edge(&self, i: usize) -> &Edge {
        &self.edges[i]
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn num_emails(&self) -> usize {
        self.num_emails
    }

    pub fn email_nodes(&self) -> std::ops::Range<usize> {
        0..self.num_emails
    }

    pub fn feature_dim(&self) -> usize {
        self.feature_dim
    }

    pub fn neighbors(&self, v: usize) -> &[(usize, usize)] {
        &self.adjacency[v]
    }

    pub fn degree(&self, v: usize) -> usize {
        self.adjacency[v].len()
    }

    /// The edge joining `u` and `v`, if any.
    pub fn edge_between(&self, u: usize, v: usize) -> Option<&Edge> {
        let list = &self.adjacency[u];
        list.binary_search_by_key(&v, |&(n, _)| n)
            .ok()
            .map(|i| &self.edges[list[i].1])
    }

    /// Email node whose document id is `key`.
    pub fn email_by_key(&self, key: &str) -> Option<usize> {
        self.nodes[..self.num_emails].iter().position(|n| n.key == key)
    }

    /// Every edge's endpoint kinds are legal for its relation.
    pub fn schema_violations(&self) -> Vec<usize> {
        self.edges
            .iter()
            .enumerate()
            .filter(|(_, e)| !e.relation.allows(self.nodes[e.u].kind, self.nodes[e.v].kind))
            .map(|(i, _)| i)
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn email(id: usize) -> Node {
        let mut n = Node::new(id, NodeKind::Email, format!("e{id}"), String::new());
        n.features = SparseVec::zeros(3);
        n
    }

    #[test]
    fn rejects_self_loops_and_bad_weights() {
        let nodes = vec![email(0), email(1)];
        let bad = Edge {
            u: 1,
            v: 1,
            relation: RelationKind::Domain,
            weight: 1.0,
        };
        assert!(HeteroGraph::new(nodes.clone(), vec![bad], 3).is_err());
        let zero = Edge::new(0, 1, RelationKind::Domain, 0.0);
        assert!(HeteroGraph::new(nodes.clone(), vec![zero], 3).is_err());
        let ok = Edge::new(1, 0, RelationKind::Domain, 1.0);
        let g = HeteroGraph::new(nodes, vec![ok], 3).unwrap();
        assert_eq!(g.edges()[0].u, 0);
        assert_eq!(g.degree(1), 1);
        assert!(g.edge_between(1, 0).is_some());
    }

    #[test]
    fn schema_rules() {
        use NodeKind::*;
        assert!(RelationKind::SentTo.allows(Sender, Email));
        assert!(RelationKind::HostedOn.allows(Url, Domain));
        assert!(!RelationKind::HostedOn.allows(Url, Sender));
        assert!(!RelationKind::LinkedTo.allows(Url, Sender));
        assert!(RelationKind::Semantic.allows(Email, Email));
    }
}
