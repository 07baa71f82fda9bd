//! Single-node building blocks of the forward pass.

use super::params::{ModelState, ParamGroup};
use crate::graph::{HeteroGraph, RelationKind, StructuralStats};
use crate::linalg::{cosine, dot, mat_vec, sigmoid, softmax_with_temperature, SparseVec};

pub const LN_EPS: f64 = 1e-5;
/// Variances at or below this are treated as a constant vector.
const LN_ZERO_VAR: f64 = 1e-24;

/// LayerNorm without affine parameters. A constant input maps to zeros.
pub fn layer_norm(z: &[f64]) -> Vec<f64> {
    let n = z.len() as f64;
    let mean = z.iter().sum::<f64>() / n;
    let var = z.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    if var <= LN_ZERO_VAR {
        return vec![0.0; z.len()];
    }
    let s = 1.0 / (var + LN_EPS).sqrt();
    z.iter().map(|v| (v - mean) * s).collect()
}

/// Backward of [`layer_norm`]: the gradient with respect to `z` given the
/// gradient `dy` with respect to its output.
pub fn layer_norm_backward(z: &[f64], dy: &[f64]) -> Vec<f64> {
    let n = z.len() as f64;
    let mean = z.iter().sum::<f64>() / n;
    let var = z.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    if var <= LN_ZERO_VAR {
        return vec![0.0; z.len()];
    }
    let s = 1.0 / (var + LN_EPS).sqrt();
    let y: Vec<f64> = z.iter().map(|v| (v - mean) * s).collect();
    let mean_dy = dy.iter().sum::<f64>() / n;
    let mean_dyy = dot(dy, &y) / n;
    y.iter()
        .zip(dy)
        .map(|(yi, di)| s * (di - mean_dy - yi * mean_dyy))
        .collect()
}

pub fn relu(z: &[f64]) -> Vec<f64> {
    z.iter().map(|v| v.max(0.0)).collect()
}

/// W_init x + b_init for a sparse input.
pub fn initial_preactivation(x: &SparseVec, model: &ModelState) -> Vec<f64> {
    let mut pre = model.group(ParamGroup::BInit).to_vec();
    for (i, xi) in x.iter() {
        crate::linalg::axpy(xi, model.w_init_row(i), &mut pre);
    }
    pre
}

/// h^(0) = LayerNorm(ReLU(W_init x + b_init)).
pub fn init_embedding(x: &SparseVec, model: &ModelState) -> Vec<f64> {
    layer_norm(&relu(&initial_preactivation(x, model)))
}

/// Composite salience of neighbor `u` for center `v`.
pub fn salience(
    graph: &HeteroGraph,
    stats: &StructuralStats,
    u: usize,
    v: usize,
    h0_u: &[f64],
    h0_v: &[f64],
    model: &ModelState,
) -> f64 {
    let spath = stats.shortest_path(graph, u, v);
    salience_parts(stats, u, v, spath, h0_u, h0_v, model.salience_weights())
}

pub(crate) fn salience_parts(
    stats: &StructuralStats,
    u: usize,
    v: usize,
    spath: usize,
    h0_u: &[f64],
    h0_v: &[f64],
    w: [f64; 3],
) -> f64 {
    let max_deg = stats.max_degree.max(1) as f64;
    let s_struct = stats.pagerank[u] + stats.degree[u] as f64 / max_deg + 1.0 / (1.0 + spath as f64);
    let s_freq = stats.frequency_score(u, v);
    let s_sem = cosine(h0_u, h0_v);
    w[0] * s_struct + w[1] * s_freq + w[2] * s_sem
}

/// The `k` candidates with the highest salience, ties broken by ascending
/// id, returned in ascending id order.
pub fn select_neighbors(candidates: &[usize], salience: impl Fn(usize) -> f64, k: usize) -> Vec<usize> {
    let mut scored: Vec<(f64, usize)> = candidates.iter().map(|&u| (salience(u), u)).collect();
    let rank = |a: &(f64, usize), b: &(f64, usize)| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1));
    if scored.len() > k {
        scored.select_nth_unstable_by(k - 1, rank);
        scored.truncate(k);
    }
    let mut out: Vec<usize> = scored.into_iter().map(|(_, u)| u).collect();
    out.sort_unstable();
    out
}

/// [w_r[r], ln(1 + deg u), ln(1 + deg v), 1 / (1 + spath)].
pub fn structural_features(
    model: &ModelState,
    relation: RelationKind,
    deg_u: usize,
    deg_v: usize,
    spath: usize,
) -> [f64; 4] {
    [
        model.group(ParamGroup::RelationWeight)[relation.index()],
        (1.0 + deg_u as f64).ln(),
        (1.0 + deg_v as f64).ln(),
        1.0 / (1.0 + spath as f64),
    ]
}

/// The prompt MLP: sigmoid(w2 . tanh(W1 p + b1) + b2). Returns the output
/// and the hidden activations.
pub fn attention_prior(prompt: &[f64], model: &ModelState) -> (f64, Vec<f64>) {
    let mut hidden = model.group(ParamGroup::AttnB1).to_vec();
    let mut tmp = vec![0.0; hidden.len()];
    mat_vec(model.group(ParamGroup::AttnW1), prompt, &mut tmp);
    for (h, t) in hidden.iter_mut().zip(&tmp) {
        *h = (*h + t).tanh();
    }
    let out = sigmoid(dot(model.group(ParamGroup::AttnW2), &hidden) + model.group(ParamGroup::AttnB2)[0]);
    (out, hidden)
}

/// e_uv = prior + beta * w_struct . f + gamma * cos(h_u, h_v).
pub fn attention_logit(prior: f64, structural: &[f64; 4], h_u: &[f64], h_v: &[f64], model: &ModelState) -> f64 {
    let ws = model.group(ParamGroup::StructWeight);
    prior + model.hyper.beta * dot(ws, structural) + model.hyper.gamma * cosine(h_u, h_v)
}

pub fn normalize_attention(logits: &[f64], tau: f64) -> Vec<f64> {
    softmax_with_temperature(logits, tau)
}

/// One node's layer update. `neighbors` holds (alpha, h_u^(k-1), relation).
/// Returns (pre-activation h~, h^(k)); `keep` is the residual dropout mask
/// (None in evaluation mode).
pub fn propagate_node(
    model: &ModelState,
    layer: usize,
    h_v: &[f64],
    neighbors: &[(f64, &[f64], RelationKind)],
    keep: Option<&[f64]>,
) -> (Vec<f64>, Vec<f64>) {
    let dh = model.hyper.hidden_dim;
    let mut pre = model.group(ParamGroup::Bias(layer)).to_vec();
    let mut tmp = vec![0.0; dh];
    mat_vec(model.group(ParamGroup::SelfLoop(layer)), h_v, &mut tmp);
    crate::linalg::axpy(1.0, &tmp, &mut pre);
    for &(alpha, h_u, r) in neighbors {
        mat_vec(model.group(ParamGroup::Neigh(layer)), h_u, &mut tmp);
        crate::linalg::axpy(alpha, &tmp, &mut pre);
        mat_vec(model.group(ParamGroup::EdgeProj(layer)), model.relation_embedding(r), &mut tmp);
        crate::linalg::axpy(alpha, &tmp, &mut pre);
    }
    let mut h = layer_norm(&relu(&pre));
    for (i, hi) in h.iter_mut().enumerate() {
        *hi += h_v[i] * keep.map_or(1.0, |m| m[i]);
    }
    (pre, h)
}

/// W_out . concat(h^(1..L)) + b_out.
pub fn output_logit(layers: &[&[f64]], model: &ModelState) -> f64 {
    let dh = model.hyper.hidden_dim;
    let w = model.group(ParamGroup::WOut);
    let mut z = model.group(ParamGroup::BOut)[0];
    for (k, h) in layers.iter().enumerate() {
        z += dot(&w[k * dh..(k + 1) * dh], h);
    }
    z
}

pub fn predict(layers: &[&[f64]], model: &ModelState) -> f64 {
    sigmoid(output_logit(layers, model))
}
