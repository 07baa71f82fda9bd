//! Whole-graph forward pass with optional variant nodes.
//!
//! A variant is a virtual email that borrows the adjacency of an anchor node
//! but carries its own features and description. Real nodes never see
//! variants, so a variant's score depends on the graph only through its
//! anchor's neighbors. Red-team samples and memory entries are scored this way.

use std::sync::{Arc, Mutex};

use fnv::FnvHashMap;

use super::ops::{
    attention_logit, attention_prior, initial_preactivation, layer_norm, normalize_attention, relu,
    salience_parts, select_neighbors, structural_features,
};
use super::params::{ModelState, ParamGroup};
use super::GnnError;
use crate::encoder::{render_prompt_parts, Embedding, SemanticEncoder};
use crate::graph::{compute_structural_stats, HeteroGraph, NodeKind, RelationKind, StructuralStats};
use crate::linalg::{axpy, mat_vec, sigmoid, SparseVec};

/// Hop distance between a node and any of its adjacency neighbors.
const ADJACENT: usize = 1;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Mode {
    Eval,
    /// Training mode: residual dropout with masks derived from the seed.
    Train { dropout_seed: u64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Variant {
    /// Real node whose adjacency the variant borrows; `None` scores it isolated.
    pub anchor: Option<usize>,
    pub features: SparseVec,
    /// Description used in pair prompts.
    pub desc: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NeighborTrace {
    pub node: usize,
    pub relation: RelationKind,
    pub structural: [f64; 4],
    pub prompt: Embedding,
    /// tanh activations of the prompt MLP.
    pub hidden: Vec<f64>,
    /// Prompt MLP output in [0, 1].
    pub prior: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NodeTrace {
    pub kind: NodeKind,
    /// Set for variant nodes.
    pub anchor: Option<usize>,
    /// Features of variant nodes; real nodes read theirs from the graph.
    pub features: Option<SparseVec>,
    pub pre0: Vec<f64>,
    /// h^(0) .. h^(L).
    pub h: Vec<Vec<f64>>,
    /// Pre-activations of layers 1..L.
    pub pre: Vec<Vec<f64>>,
    /// N_K(v), ascending by node id.
    pub neighbors: Vec<NeighborTrace>,
    /// Per layer, aligned with `neighbors`.
    pub logits: Vec<Vec<f64>>,
    pub alpha: Vec<Vec<f64>>,
    /// Output logit and score for email and variant nodes.
    pub logit: Option<f64>,
    pub score: Option<f64>,
}

/// Real-node part of a forward pass, shared between traces that differ only
/// in their variants.
#[derive(Debug, Clone, PartialEq)]
pub struct BaseTrace {
    pub mode: Mode,
    pub layers: usize,
    pub nodes: Vec<NodeTrace>,
    /// W_neigh^(k) h_u^(k-1) for real nodes, per layer; reused in backward.
    pub(crate) neigh_proj: Vec<Vec<Vec<f64>>>,
    /// W_edge^(k) relation_embed[r], per layer and relation.
    pub(crate) edge_proj: Vec<Vec<Vec<f64>>>,
}

/// Layer embeddings, attention maps, neighbor sets and scores of one pass.
/// Node indices `0..num_real` are graph nodes; variants follow.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardTrace {
    pub base: Arc<BaseTrace>,
    pub variants: Vec<NodeTrace>,
}

impl ForwardTrace {
    pub fn num_real(&self) -> usize {
        self.base.nodes.len()
    }

    pub fn len(&self) -> usize {
        self.base.nodes.len() + self.variants.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn layers(&self) -> usize {
        self.base.layers
    }

    pub fn mode(&self) -> Mode {
        self.base.mode
    }

    pub fn node(&self, i: usize) -> &NodeTrace {
        let n = self.base.nodes.len();
        if i < n {
            &self.base.nodes[i]
        } else {
            &self.variants[i - n]
        }
    }

    pub fn score(&self, node: usize) -> Option<f64> {
        self.node(node).score
    }

    /// Index of variant `j`.
    pub fn variant_index(&self, j: usize) -> usize {
        self.num_real() + j
    }

    /// Attention row of `node` at layer `k` (1-based), as (neighbor, alpha).
    pub fn attention_row(&self, node: usize, k: usize) -> Vec<(usize, f64)> {
        let t = self.node(node);
        t.neighbors.iter().zip(&t.alpha[k - 1]).map(|(n, &a)| (n.node, a)).collect()
    }
}

/// Residual dropout keep-multipliers for one node and layer.
pub(crate) fn dropout_mask(seed: u64, layer: usize, node: usize, dim: usize, rate: f64) -> Vec<f64> {
    let keep = 1.0 / (1.0 - rate);
    (0..dim)
        .map(|i| {
            let mut z = seed
                ^ (layer as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15)
                ^ (node as u64).wrapping_mul(0xBF58_476D_1CE4_E5B9)
                ^ (i as u64).wrapping_mul(0x94D0_49BB_1331_11EB);
            // splitmix64 finalizer
            z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
            z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
            z ^= z >> 31;
            let u = (z >> 11) as f64 / (1u64 << 53) as f64;
            if u < rate {
                0.0
            } else {
                keep
            }
        })
        .collect()
}

pub(crate) fn residual_mask(mode: Mode, layer: usize, node: usize, dim: usize, rate: f64) -> Option<Vec<f64>> {
    match mode {
        Mode::Train { dropout_seed } if rate > 0.0 => Some(dropout_mask(dropout_seed, layer, node, dim, rate)),
        _ => None,
    }
}

/// Holds a graph, its structural statistics and a prompt-embedding cache.
pub struct Evaluator<'a> {
    graph: &'a HeteroGraph,
    stats: StructuralStats,
    encoder: &'a SemanticEncoder,
    prompts: Mutex<FnvHashMap<(usize, usize), Embedding>>,
}

impl<'a> Evaluator<'a> {
    pub fn new(graph: &'a HeteroGraph, encoder: &'a SemanticEncoder, damping: f64, max_hops: usize) -> Self {
        Evaluator {
            stats: compute_structural_stats(graph, damping, max_hops),
            graph,
            encoder,
            prompts: Mutex::new(FnvHashMap::default()),
        }
    }

    pub fn graph(&self) -> &HeteroGraph {
        self.graph
    }

    pub fn stats(&self) -> &StructuralStats {
        &self.stats
    }

    pub fn encoder(&self) -> &SemanticEncoder {
        self.encoder
    }

    fn prompt(
        &self,
        u: usize,
        center: usize,
        variant_desc: Option<&str>,
        relation: RelationKind,
        context: &str,
    ) -> Result<Embedding, GnnError> {
        let nu = self.graph.node(u);
        match variant_desc {
            Some(desc) => {
                let text = render_prompt_parts(nu.kind, &nu.desc, NodeKind::Email, desc, relation, context);
                Ok(self.encoder.encode_text(&text)?)
            }
            None => {
                if let Some(p) = self.prompts.lock().expect("prompt cache").get(&(u, center)) {
                    return Ok(p.clone());
                }
                let p = self.encoder.encode_pair(nu, self.graph.node(center), relation, context)?;
                self.prompts.lock().expect("prompt cache").insert((u, center), p.clone());
                Ok(p)
            }
        }
    }

    fn check_dims(&self, model: &ModelState, variants: &[Variant]) -> Result<(), GnnError> {
        let d = model.hyper.input_dim;
        if self.graph.feature_dim() != d {
            return Err(GnnError::DimensionMismatch {
                expected: d,
                found: self.graph.feature_dim(),
            });
        }
        if self.encoder.dim() != model.hyper.prompt_dim {
            return Err(GnnError::DimensionMismatch {
                expected: model.hyper.prompt_dim,
                found: self.encoder.dim(),
            });
        }
        for v in variants {
            if v.features.dim != d {
                return Err(GnnError::DimensionMismatch {
                    expected: d,
                    found: v.features.dim,
                });
            }
            if v.anchor.is_some_and(|a| a >= self.graph.len()) {
                return Err(GnnError::TraceUnavailable("variant anchor outside the graph".into()));
            }
        }
        Ok(())
    }

    fn fresh_node(&self, model: &ModelState, kind: NodeKind, anchor: Option<usize>, features: Option<SparseVec>, real: usize) -> NodeTrace {
        let x = features.as_ref().unwrap_or_else(|| &self.graph.node(real).features);
        let pre0 = initial_preactivation(x, model);
        let h0 = layer_norm(&relu(&pre0));
        NodeTrace {
            kind,
            anchor,
            features,
            pre0,
            h: vec![h0],
            pre: Vec::with_capacity(model.hyper.layers),
            neighbors: Vec::new(),
            logits: Vec::with_capacity(model.hyper.layers),
            alpha: Vec::with_capacity(model.hyper.layers),
            logit: None,
            score: None,
        }
    }

    /// Top-K selection on h^(0) salience plus the per-pair prompt terms.
    fn select<'b>(
        &self,
        model: &ModelState,
        center: usize,
        h0_v: &[f64],
        h0: impl Fn(usize) -> &'b [f64],
        desc: Option<&str>,
    ) -> Result<Vec<NeighborTrace>, GnnError> {
        let h = &model.hyper;
        let weights = model.salience_weights();
        let candidates: Vec<usize> = self.graph.neighbors(center).iter().map(|&(u, _)| u).collect();
        let chosen = select_neighbors(
            &candidates,
            |u| salience_parts(&self.stats, u, center, ADJACENT, h0(u), h0_v, weights),
            h.top_k,
        );
        let mut list = Vec::with_capacity(chosen.len());
        for u in chosen {
            let relation = self.graph.edge_between(u, center).expect("adjacent").relation;
            let structural =
                structural_features(model, relation, self.stats.degree[u], self.stats.degree[center], ADJACENT);
            let prompt = self.prompt(u, center, desc, relation, &h.task_context)?;
            let (prior, hidden) = attention_prior(&prompt, model);
            list.push(NeighborTrace {
                node: u,
                relation,
                structural,
                prompt,
                hidden,
                prior,
            });
        }
        Ok(list)
    }

    /// One layer update of node `t` (index `idx`) given the previous-layer
    /// embeddings of every real node.
    #[allow(clippy::too_many_arguments)]
    fn layer_step<'b>(
        &self,
        model: &ModelState,
        mode: Mode,
        k: usize,
        idx: usize,
        t: &NodeTrace,
        real_h: impl Fn(usize) -> &'b [f64],
        proj: &[Vec<f64>],
        eproj: &[Vec<f64>],
    ) -> (Vec<f64>, Vec<f64>, Vec<f64>, Vec<f64>) {
        let h = &model.hyper;
        let dh = h.hidden_dim;
        let logits: Vec<f64> = t
            .neighbors
            .iter()
            .map(|nb| {
                attention_logit(nb.prior, &nb.structural, real_h(nb.node), &t.h[k], model)
            })
            .collect();
        let alpha = normalize_attention(&logits, h.tau);
        let mut pre = model.group(ParamGroup::Bias(k)).to_vec();
        let mut tmp = vec![0.0; dh];
        mat_vec(model.group(ParamGroup::SelfLoop(k)), &t.h[k], &mut tmp);
        axpy(1.0, &tmp, &mut pre);
        for (nb, &a) in t.neighbors.iter().zip(&alpha) {
            axpy(a, &proj[nb.node], &mut pre);
            axpy(a, &eproj[nb.relation.index()], &mut pre);
        }
        let mut out = layer_norm(&relu(&pre));
        let mask = residual_mask(mode, k, idx, dh, h.dropout);
        for i in 0..dh {
            out[i] += t.h[k][i] * mask.as_ref().map_or(1.0, |m| m[i]);
        }
        (logits, alpha, pre, out)
    }

    fn finish_score(model: &ModelState, t: &mut NodeTrace) {
        let dh = model.hyper.hidden_dim;
        let w_out = model.group(ParamGroup::WOut);
        let mut z = model.group(ParamGroup::BOut)[0];
        for k in 0..model.hyper.layers {
            z += crate::linalg::dot(&w_out[k * dh..(k + 1) * dh], &t.h[k + 1]);
        }
        t.logit = Some(z);
        t.score = Some(sigmoid(z));
    }

    /// Runs the forward pass over every graph node.
    pub fn forward_base(&self, model: &ModelState, mode: Mode) -> Result<BaseTrace, GnnError> {
        self.check_dims(model, &[])?;
        let h = &model.hyper;
        let n = self.graph.len();
        let dh = h.hidden_dim;
        let mut nodes: Vec<NodeTrace> = (0..n)
            .map(|i| self.fresh_node(model, self.graph.node(i).kind, None, None, i))
            .collect();
        for v in 0..n {
            let list = self.select(model, v, &nodes[v].h[0], |u| &nodes[u].h[0][..], None)?;
            nodes[v].neighbors = list;
        }
        let mut neigh_proj = Vec::with_capacity(h.layers);
        let mut edge_proj = Vec::with_capacity(h.layers);
        for k in 0..h.layers {
            let w_neigh = model.group(ParamGroup::Neigh(k));
            let w_edge = model.group(ParamGroup::EdgeProj(k));
            let proj: Vec<Vec<f64>> = nodes
                .iter()
                .map(|t| {
                    let mut out = vec![0.0; dh];
                    mat_vec(w_neigh, &t.h[k], &mut out);
                    out
                })
                .collect();
            let eproj: Vec<Vec<f64>> = RelationKind::ALL
                .iter()
                .map(|&r| {
                    let mut out = vec![0.0; dh];
                    mat_vec(w_edge, model.relation_embedding(r), &mut out);
                    out
                })
                .collect();
            let next: Vec<_> = nodes
                .iter()
                .enumerate()
                .map(|(idx, t)| {
                    self.layer_step(model, mode, k, idx, t, |u| &nodes[u].h[k][..], &proj, &eproj)
                })
                .collect();
            for (t, (logits, alpha, pre, out)) in nodes.iter_mut().zip(next) {
                t.logits.push(logits);
                t.alpha.push(alpha);
                t.pre.push(pre);
                t.h.push(out);
            }
            neigh_proj.push(proj);
            edge_proj.push(eproj);
        }
        for t in nodes.iter_mut().filter(|t| t.kind == NodeKind::Email) {
            Self::finish_score(model, t);
        }
        if let Some(i) = nodes.iter().position(|t| t.h.iter().flatten().any(|v| !v.is_finite())) {
            return Err(GnnError::NonFiniteActivation { node: i });
        }
        Ok(BaseTrace {
            mode,
            layers: h.layers,
            nodes,
            neigh_proj,
            edge_proj,
        })
    }

    /// Scores variants against an existing base pass. Variant `j` gets
    /// index `num_real + j` (this also seeds its dropout mask).
    pub fn extend(
        &self,
        model: &ModelState,
        base: &Arc<BaseTrace>,
        variants: &[Variant],
    ) -> Result<ForwardTrace, GnnError> {
        self.check_dims(model, variants)?;
        let n = base.nodes.len();
        let mut out = Vec::with_capacity(variants.len());
        for (j, v) in variants.iter().enumerate() {
            let idx = n + j;
            let mut t = self.fresh_node(model, NodeKind::Email, v.anchor, Some(v.features.clone()), 0);
            if let Some(center) = v.anchor {
                let h0_v = t.h[0].clone();
                t.neighbors = self.select(model, center, &h0_v, |u| &base.nodes[u].h[0][..], Some(&v.desc))?;
            }
            for k in 0..model.hyper.layers {
                let (logits, alpha, pre, h) = self.layer_step(
                    model,
                    base.mode,
                    k,
                    idx,
                    &t,
                    |u| &base.nodes[u].h[k][..],
                    &base.neigh_proj[k],
                    &base.edge_proj[k],
                );
                t.logits.push(logits);
                t.alpha.push(alpha);
                t.pre.push(pre);
                t.h.push(h);
            }
            Self::finish_score(model, &mut t);
            if t.h.iter().flatten().any(|x| !x.is_finite()) {
                return Err(GnnError::NonFiniteActivation { node: idx });
            }
            out.push(t);
        }
        Ok(ForwardTrace {
            base: Arc::clone(base),
            variants: out,
        })
    }

    /// Full pass: every graph node plus the variants.
    pub fn forward(&self, model: &ModelState, mode: Mode, variants: &[Variant]) -> Result<ForwardTrace, GnnError> {
        let base = Arc::new(self.forward_base(model, mode)?);
        self.extend(model, &base, variants)
    }

    /// Scores of all email nodes in eval mode.
    pub fn predict_emails(&self, model: &ModelState) -> Result<Vec<f64>, GnnError> {
        let t = self.forward(model, Mode::Eval, &[])?;
        Ok(self.graph.email_nodes().map(|i| t.node(i).score.expect("email score")).collect())
    }
}
