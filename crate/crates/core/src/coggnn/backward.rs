//! Reverse-mode gradients through a recorded forward pass.
//!
//! Neighbor selection is a discrete choice and receives no gradient, so the
//! salience logits always have zero gradient.

use fnv::FnvHashMap;

use super::forward::{residual_mask, ForwardTrace};
use super::ops::{layer_norm_backward, relu};
use super::params::{ModelState, ParamGroup};
use super::GnnError;
use crate::graph::{HeteroGraph, RelationKind};
use crate::linalg::{add_outer, axpy, dot, mat_t_vec_add, norm};

#[derive(Debug, Clone, Default)]
pub struct BackwardOptions {
    pub params: bool,
    /// Nodes whose dense input-feature gradient is wanted.
    pub inputs: Vec<usize>,
    /// Let gradients flow from a node into its neighbors. When false only the
    /// seeded nodes' own chains are differentiated, which is exactly the
    /// derivative of a variant's score with respect to its features.
    pub through_neighbors: bool,
}

impl BackwardOptions {
    pub fn full() -> Self {
        BackwardOptions {
            params: true,
            inputs: Vec::new(),
            through_neighbors: true,
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct Gradients {
    /// Same layout as `ModelState::params`; empty when not requested.
    pub params: Vec<f64>,
    pub inputs: FnvHashMap<usize, Vec<f64>>,
}

fn add_into(slot: &mut Option<Vec<f64>>, scale: f64, v: &[f64]) {
    match slot {
        Some(acc) => axpy(scale, v, acc),
        None => *slot = Some(v.iter().map(|x| scale * x).collect()),
    }
}

/// Gradients of cos(a, b) with respect to a and b; zeros when either is zero.
fn cosine_backward(a: &[f64], b: &[f64]) -> Option<(Vec<f64>, Vec<f64>)> {
    let (na, nb) = (norm(a), norm(b));
    if na == 0.0 || nb == 0.0 {
        return None;
    }
    let c = dot(a, b) / (na * nb);
    let da = a.iter().zip(b).map(|(ai, bi)| bi / (na * nb) - c * ai / (na * na)).collect();
    let db = a.iter().zip(b).map(|(ai, bi)| ai / (na * nb) - c * bi / (nb * nb)).collect();
    Some((da, db))
}

/// Backpropagates `seeds` = (node, dL/dz_node) through `trace`.
pub fn backward(
    model: &ModelState,
    graph: &HeteroGraph,
    trace: &ForwardTrace,
    seeds: &[(usize, f64)],
    opts: &BackwardOptions,
) -> Result<Gradients, GnnError> {
    let hyp = &model.hyper;
    let dh_dim = hyp.hidden_dim;
    let layers = trace.layers();
    let total = trace.len();
    let n = trace.num_real();
    let base = &trace.base;
    let layout = model.layout();
    let mut grad = if opts.params { vec![0.0; layout.total()] } else { Vec::new() };
    let mut dh: Vec<Vec<Option<Vec<f64>>>> = vec![vec![None; total]; layers + 1];
    let mut dprior: Vec<Option<Vec<f64>>> = vec![None; total];

    let w_out = model.group(ParamGroup::WOut);
    for &(v, dz) in seeds {
        let t = (v < total)
            .then(|| trace.node(v))
            .filter(|t| t.logit.is_some())
            .ok_or_else(|| GnnError::TraceUnavailable(format!("node {v} has no score")))?;
        if opts.params {
            let r = layout.range(ParamGroup::WOut);
            for k in 0..layers {
                axpy(dz, &t.h[k + 1], &mut grad[r.start + k * dh_dim..r.start + (k + 1) * dh_dim]);
            }
            grad[layout.range(ParamGroup::BOut).start] += dz;
        }
        for k in 0..layers {
            add_into(&mut dh[k + 1][v], dz, &w_out[k * dh_dim..(k + 1) * dh_dim]);
        }
    }

    let w_struct = model.group(ParamGroup::StructWeight).to_vec();
    for k in (0..layers).rev() {
        let w_self = model.group(ParamGroup::SelfLoop(k));
        let w_neigh = model.group(ParamGroup::Neigh(k));
        let w_edge = model.group(ParamGroup::EdgeProj(k));
        let mut g_src: Vec<Option<Vec<f64>>> = vec![None; n];
        let mut g_prop: Vec<Option<Vec<f64>>> = vec![None; n];
        let mut g_rel = vec![vec![0.0; dh_dim]; RelationKind::COUNT];
        for v in 0..total {
            let Some(d) = dh[k + 1][v].take() else { continue };
            let t = trace.node(v);
            match residual_mask(trace.mode(), k, v, dh_dim, hyp.dropout) {
                Some(mask) => {
                    let masked: Vec<f64> = d.iter().zip(&mask).map(|(a, b)| a * b).collect();
                    add_into(&mut dh[k][v], 1.0, &masked);
                }
                None => add_into(&mut dh[k][v], 1.0, &d),
            }
            let pre = &t.pre[k];
            let dr = layer_norm_backward(&relu(pre), &d);
            let dpre: Vec<f64> = dr.iter().zip(pre).map(|(g, p)| if *p > 0.0 { *g } else { 0.0 }).collect();
            if opts.params {
                let rb = layout.range(ParamGroup::Bias(k));
                axpy(1.0, &dpre, &mut grad[rb]);
                let rs = layout.range(ParamGroup::SelfLoop(k));
                add_outer(&mut grad[rs], 1.0, &dpre, &t.h[k]);
            }
            let mut back = vec![0.0; dh_dim];
            mat_t_vec_add(w_self, &dpre, &mut back);
            add_into(&mut dh[k][v], 1.0, &back);

            if t.neighbors.is_empty() {
                continue;
            }
            let alpha = &t.alpha[k];
            let dalpha: Vec<f64> = t
                .neighbors
                .iter()
                .map(|nb| {
                    dot(&dpre, &base.neigh_proj[k][nb.node]) + dot(&dpre, &base.edge_proj[k][nb.relation.index()])
                })
                .collect();
            for (nb, &a) in t.neighbors.iter().zip(alpha) {
                if opts.params {
                    add_into(&mut g_src[nb.node], a, &dpre);
                    axpy(a, &dpre, &mut g_rel[nb.relation.index()]);
                }
                if opts.through_neighbors {
                    add_into(&mut g_prop[nb.node], a, &dpre);
                }
            }
            let s: f64 = alpha.iter().zip(&dalpha).map(|(a, g)| a * g).sum();
            let dp = dprior[v].get_or_insert_with(|| vec![0.0; t.neighbors.len()]);
            let h_v = &t.h[k];
            let mut dh_v_cos = vec![0.0; dh_dim];
            for (j, nb) in t.neighbors.iter().enumerate() {
                let de = alpha[j] * (dalpha[j] - s) / hyp.tau;
                dp[j] += de;
                if opts.params {
                    let rs = layout.range(ParamGroup::StructWeight);
                    axpy(de * hyp.beta, &nb.structural, &mut grad[rs]);
                    grad[layout.range(ParamGroup::RelationWeight).start + nb.relation.index()] +=
                        de * hyp.beta * w_struct[0];
                }
                if hyp.gamma != 0.0 {
                    if let Some((du, dv)) = cosine_backward(&base.nodes[nb.node].h[k], h_v) {
                        axpy(hyp.gamma * de, &dv, &mut dh_v_cos);
                        if opts.through_neighbors {
                            add_into(&mut dh[k][nb.node], hyp.gamma * de, &du);
                        }
                    }
                }
            }
            add_into(&mut dh[k][v], 1.0, &dh_v_cos);
        }
        for u in 0..n {
            if let Some(g) = &g_src[u] {
                let r = layout.range(ParamGroup::Neigh(k));
                add_outer(&mut grad[r], 1.0, g, &base.nodes[u].h[k]);
            }
            if let Some(g) = &g_prop[u] {
                let mut back = vec![0.0; dh_dim];
                mat_t_vec_add(w_neigh, g, &mut back);
                add_into(&mut dh[k][u], 1.0, &back);
            }
        }
        if opts.params {
            let re = layout.range(ParamGroup::EdgeProj(k));
            let remb = layout.range(ParamGroup::RelationEmbed);
            for r in RelationKind::ALL {
                let g = &g_rel[r.index()];
                if g.iter().all(|&x| x == 0.0) {
                    continue;
                }
                add_outer(&mut grad[re.clone()], 1.0, g, model.relation_embedding(r));
                let slot = remb.start + r.index() * dh_dim;
                mat_t_vec_add(w_edge, g, &mut grad[slot..slot + dh_dim]);
            }
        }
    }

    let mut inputs = FnvHashMap::default();
    for v in 0..total {
        let Some(d) = dh[0][v].take() else { continue };
        let t = trace.node(v);
        let dr = layer_norm_backward(&relu(&t.pre0), &d);
        let dpre: Vec<f64> = dr.iter().zip(&t.pre0).map(|(g, p)| if *p > 0.0 { *g } else { 0.0 }).collect();
        let x = t.features.as_ref().unwrap_or_else(|| &graph.node(v).features);
        if opts.params {
            let rb = layout.range(ParamGroup::BInit);
            axpy(1.0, &dpre, &mut grad[rb]);
            let rw = layout.range(ParamGroup::WInit);
            for (i, xi) in x.iter() {
                let at = rw.start + i * dh_dim;
                axpy(xi, &dpre, &mut grad[at..at + dh_dim]);
            }
        }
        if opts.inputs.contains(&v) {
            let dx: Vec<f64> = (0..hyp.input_dim).map(|i| dot(model.w_init_row(i), &dpre)).collect();
            if dx.iter().any(|g| !g.is_finite()) {
                return Err(GnnError::NonFiniteGradient("input features".into()));
            }
            inputs.insert(v, dx);
        }
    }
    for v in &opts.inputs {
        inputs.entry(*v).or_insert_with(|| vec![0.0; hyp.input_dim]);
    }

    if opts.params {
        let w2 = model.group(ParamGroup::AttnW2);
        let (r_w1, r_b1, r_w2, r_b2) = (
            layout.range(ParamGroup::AttnW1),
            layout.range(ParamGroup::AttnB1),
            layout.range(ParamGroup::AttnW2),
            layout.range(ParamGroup::AttnB2),
        );
        for (v, dp) in dprior.iter().enumerate() {
            let Some(dp) = dp else { continue };
            for (nb, &g) in trace.node(v).neighbors.iter().zip(dp) {
                if g == 0.0 {
                    continue;
                }
                let dl = g * nb.prior * (1.0 - nb.prior);
                axpy(dl, &nb.hidden, &mut grad[r_w2.clone()]);
                grad[r_b2.start] += dl;
                let dhid: Vec<f64> = nb
                    .hidden
                    .iter()
                    .zip(w2)
                    .map(|(hj, wj)| dl * wj * (1.0 - hj * hj))
                    .collect();
                axpy(1.0, &dhid, &mut grad[r_b1.clone()]);
                add_outer(&mut grad[r_w1.clone()], 1.0, &dhid, &nb.prompt);
            }
        }
        if let Some(name) = model.first_non_finite(&grad) {
            return Err(GnnError::NonFiniteGradient(name));
        }
    }
    Ok(Gradients { params: grad, inputs })
}
