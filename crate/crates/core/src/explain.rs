//! Evidence paths along high-attention edges, gradient-times-input feature
//! attributions and a fixed-template explanation.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::coggnn::{BackwardOptions, Evaluator, ForwardTrace, GnnError, LinearProbe, ModelState};
use crate::graph::{HeteroGraph, NodeKind, RelationKind};

pub const DEFAULT_MAX_DEPTH: usize = 4;
pub const DEFAULT_MIN_CONFIDENCE: f64 = 0.15;
pub const DEFAULT_TOP_FEATURES: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    DepthCap,
    ConfidenceFloor,
    DeadEnd,
}

impl Termination {
    pub fn as_str(self) -> &'static str {
        match self {
            Termination::DepthCap => "depth_cap",
            Termination::ConfidenceFloor => "confidence_floor",
            Termination::DeadEnd => "dead_end",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathStep {
    pub node: usize,
    pub kind: NodeKind,
    /// None for the queried node.
    pub relation: Option<RelationKind>,
    pub confidence: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvidencePath {
    pub steps: Vec<PathStep>,
    pub terminated_by: Termination,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Attribution {
    pub index: usize,
    pub name: String,
    pub importance: f64,
}

/// Attention layer consulted at hop `i` (1-based); hops deeper than the
/// model reuse layer 1.
fn hop_layer(layers: usize, i: usize) -> usize {
    if i >= layers {
        1
    } else {
        layers - i + 1
    }
}

/// Highest-attention entry of a row, ties to the smaller node id.
fn argmax(row: &[(usize, f64)]) -> Option<(usize, f64)> {
    row.iter()
        .copied()
        .reduce(|best, c| if c.1 > best.1 || (c.1 == best.1 && c.0 < best.0) { c } else { best })
}

fn check_node(trace: &ForwardTrace, v: usize) -> Result<(), GnnError> {
    if v >= trace.len() {
        return Err(GnnError::TraceUnavailable(format!("node {v} is not in the trace")));
    }
    if trace.layers() == 0 || trace.node(v).alpha.len() != trace.layers() {
        return Err(GnnError::TraceUnavailable(format!("node {v} has no attention maps")));
    }
    Ok(())
}

/// Follows argmax attention from `v`, one layer back per hop.
pub fn extract_evidence_path(
    v: usize,
    trace: &ForwardTrace,
    max_depth: usize,
    min_confidence: f64,
) -> Result<EvidencePath, GnnError> {
    check_node(trace, v)?;
    let layers = trace.layers();
    let first = argmax(&trace.attention_row(v, layers));
    let mut steps = vec![PathStep {
        node: v,
        kind: trace.node(v).kind,
        relation: None,
        confidence: first.map_or(0.0, |(_, a)| a),
    }];
    let mut current = v;
    let terminated_by = loop {
        let i = steps.len();
        if i - 1 >= max_depth {
            break Termination::DepthCap;
        }
        let row = trace.attention_row(current, hop_layer(layers, i));
        let Some((u, a)) = argmax(&row) else {
            break Termination::DeadEnd;
        };
        if a < min_confidence {
            break Termination::ConfidenceFloor;
        }
        if steps.iter().any(|s| s.node == u) {
            break Termination::DeadEnd;
        }
        let relation = trace
            .node(current)
            .neighbors
            .iter()
            .find(|nb| nb.node == u)
            .map(|nb| nb.relation);
        steps.push(PathStep {
            node: u,
            kind: trace.node(u).kind,
            relation,
            confidence: a,
        });
        current = u;
    };
    Ok(EvidencePath { steps, terminated_by })
}

/// Re-checks a path against the graph, the recorded attention maps and the
/// stop rules. Variant nodes are checked through their anchor's adjacency.
pub fn validate_path(
    path: &EvidencePath,
    trace: &ForwardTrace,
    graph: &HeteroGraph,
    max_depth: usize,
    min_confidence: f64,
) -> Result<(), String> {
    let first = path.steps.first().ok_or("empty path")?;
    let expected = extract_evidence_path(first.node, trace, max_depth, min_confidence).map_err(|e| e.to_string())?;
    if &expected != path {
        return Err("path differs from its re-derivation".into());
    }
    if path.steps.len() > max_depth + 1 {
        return Err("path longer than the depth cap allows".into());
    }
    let layers = trace.layers();
    for (i, pair) in path.steps.windows(2).enumerate() {
        let (a, b) = (&pair[0], &pair[1]);
        let host = trace.node(a.node).anchor.unwrap_or(a.node);
        let edge = graph
            .edge_between(host, b.node)
            .ok_or_else(|| format!("{} and {} are not adjacent", a.node, b.node))?;
        if Some(edge.relation) != b.relation {
            return Err(format!("relation mismatch at step {}", i + 1));
        }
        let recorded = trace
            .attention_row(a.node, hop_layer(layers, i + 1))
            .into_iter()
            .find(|&(u, _)| u == b.node)
            .map(|(_, alpha)| alpha);
        if recorded != Some(b.confidence) {
            return Err(format!("confidence at step {} is not the recorded attention", i + 1));
        }
    }
    Ok(())
}

/// |g_i|·|x_i|, top `k` by importance (ties by index).
pub fn feature_importance(
    x: &[f64],
    gradient: &[f64],
    name: impl Fn(usize) -> String,
    k: usize,
) -> Result<Vec<Attribution>, GnnError> {
    if x.len() != gradient.len() {
        return Err(GnnError::DimensionMismatch {
            expected: x.len(),
            found: gradient.len(),
        });
    }
    if gradient.iter().any(|g| !g.is_finite()) {
        return Err(GnnError::NonFiniteGradient("input features".into()));
    }
    let mut scored: Vec<(usize, f64)> = x
        .iter()
        .zip(gradient)
        .enumerate()
        .map(|(i, (xi, gi))| (i, gi.abs() * xi.abs()))
        .collect();
    scored.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    scored.truncate(k);
    Ok(scored
        .into_iter()
        .map(|(index, importance)| Attribution {
            index,
            name: name(index),
            importance,
        })
        .collect())
}

/// Attributions of node `v`'s score with respect to its own features.
pub fn node_feature_importance(
    evaluator: &Evaluator,
    model: &ModelState,
    trace: &ForwardTrace,
    v: usize,
    name: impl Fn(usize) -> String,
    k: usize,
) -> Result<Vec<Attribution>, GnnError> {
    let score = trace
        .score(v)
        .ok_or_else(|| GnnError::TraceUnavailable(format!("node {v} has no score")))?;
    let opts = BackwardOptions {
        params: false,
        inputs: vec![v],
        through_neighbors: true,
    };
    // dŷ/dz = ŷ(1 - ŷ)
    let mut g = evaluator.backward(model, trace, &[(v, score * (1.0 - score))], &opts)?;
    let x = match &trace.node(v).features {
        Some(f) => f.to_dense(),
        None => evaluator.graph().node(v).features.to_dense(),
    };
    feature_importance(&x, &g.inputs.remove(&v).expect("requested input"), name, k)
}

pub fn probe_feature_importance(
    probe: &LinearProbe,
    x: &[f64],
    name: impl Fn(usize) -> String,
    k: usize,
) -> Result<Vec<Attribution>, GnnError> {
    feature_importance(x, &probe.weights, name, k)
}

/// Verdict line, one line per path step, then one feature line per node that
/// has attributions.
pub fn render_explanation(path: &EvidencePath, attributions: &[(usize, Vec<Attribution>)], score: f64) -> String {
    let mut out = String::new();
    let verdict = if score >= 0.5 { "spam" } else { "ham" };
    let _ = writeln!(out, "score={score:.3}, verdict={verdict}");
    for step in &path.steps {
        let relation = step.relation.map_or("query", |r| r.as_str());
        let _ = writeln!(
            out,
            "{}({}) --{}--> confidence {:.3}",
            step.kind.as_str(),
            step.node,
            relation,
            step.confidence
        );
    }
    for (node, attrs) in attributions {
        if attrs.is_empty() {
            continue;
        }
        let kind = path
            .steps
            .iter()
            .find(|s| s.node == *node)
            .map_or("node", |s| s.kind.as_str());
        let list: Vec<String> = attrs.iter().map(|a| format!("{}={:.3}", a.name, a.importance)).collect();
        let _ = writeln!(out, "features {kind}#{node}: {}", list.join(", "));
    }
    out
}
