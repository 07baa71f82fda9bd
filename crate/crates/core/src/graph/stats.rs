//! PageRank, degrees, entity co-occurrence and bounded hop distances.

use std::collections::VecDeque;

use super::{HeteroGraph, NodeKind};

pub const DEFAULT_DAMPING: f64 = 0.85;
pub const DEFAULT_MAX_HOPS: usize = 4;
const PAGERANK_TOL: f64 = 1e-10;
const PAGERANK_MAX_ITERS: usize = 200;

#[derive(Debug, Clone, PartialEq)]
pub struct StructuralStats {
    pub pagerank: Vec<f64>,
    pub degree: Vec<usize>,
    pub max_degree: usize,
    /// Sorted ids of each node's non-email neighbors.
    pub entity_neighbors: Vec<Vec<usize>>,
    pub max_hops: usize,
}

/// Power iteration on the unweighted undirected adjacency. Isolated nodes
/// spread their mass uniformly.
fn pagerank(graph: &HeteroGraph, damping: f64) -> Vec<f64> {
    let n = graph.len();
    let nf = n as f64;
    let mut pr = vec![1.0 / nf; n];
    let mut next = vec![0.0; n];
    for _ in 0..PAGERANK_MAX_ITERS {
        let dangling: f64 = (0..n).filter(|&v| graph.degree(v) == 0).map(|v| pr[v]).sum();
        let base = (1.0 - damping) / nf + damping * dangling / nf;
        for (v, slot) in next.iter_mut().enumerate() {
            let inflow: f64 = graph
                .neighbors(v)
                .iter()
                .map(|&(u, _)| pr[u] / graph.degree(u) as f64)
                .sum();
            *slot = base + damping * inflow;
        }
        // Renormalize to absorb rounding drift.
        let total: f64 = next.iter().sum();
        next.iter_mut().for_each(|x| *x /= total);
        let change: f64 = pr.iter().zip(&next).map(|(a, b)| (a - b).abs()).sum();
        std::mem::swap(&mut pr, &mut next);
        if change < PAGERANK_TOL {
            break;
        }
    }
    pr
}

pub fn compute_structural_stats(graph: &HeteroGraph, damping: f64, max_hops: usize) -> StructuralStats {
    assert!(!graph.is_empty(), "structural statistics need a nonempty graph");
    let degree: Vec<usize> = (0..graph.len()).map(|v| graph.degree(v)).collect();
    let entity_neighbors = (0..graph.len())
        .map(|v| {
            graph
                .neighbors(v)
                .iter()
                .map(|&(u, _)| u)
                .filter(|&u| graph.node(u).kind != NodeKind::Email)
                .collect()
        })
        .collect();
    StructuralStats {
        pagerank: pagerank(graph, damping),
        max_degree: degree.iter().copied().max().unwrap_or(0),
        degree,
        entity_neighbors,
        max_hops,
    }
}

impl StructuralStats {
    pub fn total_count(&self, u: usize) -> usize {
        self.entity_neighbors[u].len()
    }

    /// Number of entity nodes adjacent to both `u` and `v`.
    pub fn co_occurrence(&self, u: usize, v: usize) -> usize {
        let (a, b) = (&self.entity_neighbors[u], &self.entity_neighbors[v]);
        let (mut i, mut j, mut count) = (0, 0, 0);
        while i < a.len() && j < b.len() {
            match a[i].cmp(&b[j]) {
                std::cmp::Ordering::Less => i += 1,
                std::cmp::Ordering::Greater => j += 1,
                std::cmp::Ordering::Equal => {
                    count += 1;
                    i += 1;
                    j += 1;
                }
            }
        }
        count
    }

    /// Co-occurrence normalized by the geometric mean of entity counts;
    /// 0 when either count is 0.
    pub fn frequency_score(&self, u: usize, v: usize) -> f64 {
        let (tu, tv) = (self.total_count(u), self.total_count(v));
        if tu == 0 || tv == 0 {
            0.0
        } else {
            self.co_occurrence(u, v) as f64 / ((tu * tv) as f64).sqrt()
        }
    }

    /// Unweighted hop distance truncated at `max_hops`; pairs farther apart
    /// (or disconnected) report `max_hops + 1`.
    pub fn shortest_path(&self, graph: &HeteroGraph, u: usize, v: usize) -> usize {
        if u == v {
            return 0;
        }
        if graph.edge_between(u, v).is_some() {
            return 1;
        }
        let beyond = self.max_hops + 1;
        let mut dist: fnv::FnvHashMap<usize, usize> = fnv::FnvHashMap::default();
        let mut queue = VecDeque::new();
        dist.insert(u, 0);
        queue.push_back(u);
        while let Some(x) = queue.pop_front() {
            let d = dist[&x];
            if d >= self.max_hops {
                continue;
            }
            for &(y, _) in graph.neighbors(x) {
                if dist.contains_key(&y) {
                    continue;
                }
                if y == v {
                    return d + 1;
                }
                dist.insert(y, d + 1);
                queue.push_back(y);
            }
        }
        beyond
    }
}
