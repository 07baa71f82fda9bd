//! Fixtures shared by the integration tests.
#![allow(dead_code)]

use evomail::coggnn::{Evaluator, Hyper, Mode, ModelState};
use evomail::graph::{Edge, HeteroGraph, Node, NodeKind, RelationKind};
use evomail::linalg::SparseVec;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const DIM: usize = 8;

pub fn small_hyper(top_k: usize, dropout: f64) -> Hyper {
    Hyper {
        hidden_dim: 5,
        prompt_dim: 16,
        attn_hidden: 4,
        layers: 2,
        top_k,
        dropout,
        ..Hyper::new(DIM)
    }
}

pub fn random_model(h: Hyper, seed: u64) -> ModelState {
    let mut m = ModelState::new(h).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for p in m.params.iter_mut() {
        *p = rng.gen_range(-0.6..0.6);
    }
    m
}

/// Four emails, a sender and a domain.
pub fn fixture(features: &[Vec<f64>]) -> HeteroGraph {
    let kinds = [
        NodeKind::Email,
        NodeKind::Email,
        NodeKind::Email,
        NodeKind::Email,
        NodeKind::Sender,
        NodeKind::Domain,
    ];
    let descs = [
        "verify your account now",
        "quarterly report attached",
        "your invoice is overdue",
        "lunch on friday?",
        "alice@example.com",
        "example.com",
    ];
    let nodes = kinds
        .iter()
        .enumerate()
        .map(|(i, &k)| {
            let mut n = Node::new(i, k, format!("n{i}"), descs[i].to_string());
            n.features = SparseVec::from_dense(&features[i]);
            n
        })
        .collect();
    let edges = vec![
        Edge::new(0, 1, RelationKind::Domain, 1.0),
        Edge::new(1, 2, RelationKind::Semantic, 0.8),
        Edge::new(0, 2, RelationKind::Temporal, 0.7),
        Edge::new(2, 3, RelationKind::Sender, 1.0),
        Edge::new(0, 4, RelationKind::SentTo, 1.0),
        Edge::new(3, 4, RelationKind::SentTo, 1.0),
        Edge::new(4, 5, RelationKind::HostedOn, 1.0),
    ];
    HeteroGraph::new(nodes, edges, DIM).unwrap()
}

pub fn fixture_features(seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..6)
        .map(|_| {
            (0..DIM)
                .map(|_| if rng.gen_bool(0.25) { 0.0 } else { rng.gen_range(-1.0..1.0) })
                .collect()
        })
        .collect()
}

pub const COEFFS: [f64; 4] = [0.7, -1.3, 0.4, 1.1];

pub fn loss(ev: &Evaluator, model: &ModelState, mode: Mode) -> f64 {
    let t = ev.forward(model, mode, &[]).unwrap();
    (0..4).map(|v| COEFFS[v] * t.node(v).logit.unwrap()).sum()
}

pub fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    let diff: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
    let scale: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt() + b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if scale < 1e-9 {
        0.0
    } else {
        diff / scale
    }
}

pub fn random_graph(rng: &mut ChaCha8Rng) -> HeteroGraph {
    let emails = rng.gen_range(1..7);
    let senders = rng.gen_range(0..3);
    let n = emails + senders;
    let nodes = (0..n)
        .map(|i| {
            let kind = if i < emails { NodeKind::Email } else { NodeKind::Sender };
            let mut node = Node::new(i, kind, format!("k{i}"), format!("desc {}", rng.gen::<u16>()));
            let x: Vec<f64> = (0..DIM).map(|_| rng.gen_range(-2.0..2.0)).collect();
            node.features = SparseVec::from_dense(&x);
            node
        })
        .collect();
    let mut edges = Vec::new();
    for a in 0..n {
        for b in a + 1..n {
            if !rng.gen_bool(0.5) {
                continue;
            }
            let rel = match (a < emails, b < emails) {
                (true, true) => RelationKind::SCORED[rng.gen_range(0..4)],
                (true, false) | (false, true) => RelationKind::SentTo,
                _ => continue,
            };
            edges.push(Edge::new(a, b, rel, rng.gen_range(0.5..3.0)));
        }
    }
    HeteroGraph::new(nodes, edges, DIM).unwrap()
}


/// `n` nodes, a fifth of them senders; each email gets about `email_degree`
/// random email neighbors and one sender.
pub fn sparse_graph(n: usize, email_degree: usize, dim: usize, seed: u64) -> HeteroGraph {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let emails = n - n / 5;
    let words = ["invoice", "meeting", "verify", "report", "prize", "account", "lunch", "update"];
    let nodes = (0..n)
        .map(|i| {
            let kind = if i < emails { NodeKind::Email } else { NodeKind::Sender };
            let desc = (0..4).map(|_| words[rng.gen_range(0..words.len())]).collect::<Vec<_>>().join(" ");
            let mut node = Node::new(i, kind, format!("k{i}"), format!("{desc} {i}"));
            let pairs: Vec<(usize, f64)> = (0..8).map(|_| (rng.gen_range(0..dim), rng.gen_range(-1.0..1.0))).collect();
            node.features = SparseVec::from_pairs(dim, pairs);
            node
        })
        .collect();
    let mut seen = std::collections::HashSet::new();
    let mut edges = Vec::new();
    for a in 0..emails {
        for _ in 0..email_degree / 2 {
            let b = rng.gen_range(0..emails);
            let (u, v) = (a.min(b), a.max(b));
            if u != v && seen.insert((u, v)) {
                edges.push(Edge::new(u, v, RelationKind::SCORED[rng.gen_range(0..4)], rng.gen_range(0.5..3.0)));
            }
        }
        let s = rng.gen_range(emails..n);
        seen.insert((a, s));
        edges.push(Edge::new(a, s, RelationKind::SentTo, 1.0));
    }
    HeteroGraph::new(nodes, edges, dim).unwrap()
}
