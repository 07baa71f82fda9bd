//! Hyperparameters, the flat parameter vector and its binary file format.
//!
//! Binary layout (all integers u64 and all reals f64, little-endian):
//!
//! ```text
//! "EVOMAIL-MODEL v1\n"
//! input_dim hidden_dim prompt_dim attn_hidden layers top_k max_hops seed
//! tau beta gamma dropout pagerank_damping
//! task_context_len  task_context (UTF-8)
//! param_count  params...
//! ```
//!
//! Parameters follow [`ParamGroup`] order; matrices are row-major.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::GnnError;
use crate::encoder::{DEFAULT_DIM, DEFAULT_TASK_CONTEXT};
use crate::graph::{RelationKind, DEFAULT_DAMPING, DEFAULT_MAX_HOPS};

pub const MODEL_MAGIC: &str = "EVOMAIL-MODEL v1\n";
const MAGIC_PREFIX: &str = "EVOMAIL-MODEL ";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hyper {
    /// Feature dimension d.
    pub input_dim: usize,
    pub hidden_dim: usize,
    /// Pair prompt embedding dimension.
    pub prompt_dim: usize,
    pub attn_hidden: usize,
    pub layers: usize,
    pub top_k: usize,
    pub tau: f64,
    pub beta: f64,
    pub gamma: f64,
    pub dropout: f64,
    pub pagerank_damping: f64,
    pub max_hops: usize,
    pub task_context: String,
    pub seed: u64,
}

impl Hyper {
    pub fn new(input_dim: usize) -> Self {
        Hyper {
            input_dim,
            hidden_dim: 64,
            prompt_dim: DEFAULT_DIM,
            attn_hidden: 64,
            layers: 2,
            top_k: 16,
            tau: 1.0,
            beta: 1.0,
            gamma: 0.5,
            dropout: 0.1,
            pagerank_damping: DEFAULT_DAMPING,
            max_hops: DEFAULT_MAX_HOPS,
            task_context: DEFAULT_TASK_CONTEXT.to_string(),
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<(), GnnError> {
        let bad = |m: &str| Err(GnnError::InvalidHyper(m.to_string()));
        if self.input_dim == 0 || self.hidden_dim == 0 || self.prompt_dim == 0 || self.attn_hidden == 0 {
            return bad("dimensions must be positive");
        }
        if self.layers == 0 {
            return bad("at least one layer is required");
        }
        if self.top_k == 0 {
            return bad("top_k must be at least 1");
        }
        if !(self.tau.is_finite() && self.tau > 0.0) {
            return bad("tau must be positive");
        }
        if !(self.beta.is_finite() && self.beta >= 0.0 && self.gamma.is_finite() && self.gamma >= 0.0) {
            return bad("beta and gamma must be nonnegative");
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad("dropout must lie in [0, 1)");
        }
        if !(self.pagerank_damping > 0.0 && self.pagerank_damping < 1.0) {
            return bad("pagerank damping must lie in (0, 1)");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ParamGroup {
    WInit,
    BInit,
    /// a_s, a_f, a_c.
    Salience,
    AttnW1,
    AttnB1,
    AttnW2,
    AttnB2,
    /// w_r, one weight per relation kind.
    RelationWeight,
    /// w_struct.
    StructWeight,
    RelationEmbed,
    Neigh(usize),
    SelfLoop(usize),
    EdgeProj(usize),
    Bias(usize),
    WOut,
    BOut,
}

impl ParamGroup {
    pub fn name(self) -> String {
        match self {
            ParamGroup::WInit => "w_init".into(),
            ParamGroup::BInit => "b_init".into(),
            ParamGroup::Salience => "salience_logits".into(),
            ParamGroup::AttnW1 => "attn_w1".into(),
            ParamGroup::AttnB1 => "attn_b1".into(),
            ParamGroup::AttnW2 => "attn_w2".into(),
            ParamGroup::AttnB2 => "attn_b2".into(),
            ParamGroup::RelationWeight => "w_r".into(),
            ParamGroup::StructWeight => "w_struct".into(),
            ParamGroup::RelationEmbed => "relation_embed".into(),
            ParamGroup::Neigh(k) => format!("layer{}.w_neigh", k + 1),
            ParamGroup::SelfLoop(k) => format!("layer{}.w_self", k + 1),
            ParamGroup::EdgeProj(k) => format!("layer{}.w_edge", k + 1),
            ParamGroup::Bias(k) => format!("layer{}.b", k + 1),
            ParamGroup::WOut => "w_out".into(),
            ParamGroup::BOut => "b_out".into(),
        }
    }

    /// Weight matrices: the groups covered by the L2 penalty.
    pub fn is_weight_matrix(self) -> bool {
        matches!(
            self,
            ParamGroup::WInit
                | ParamGroup::AttnW1
                | ParamGroup::AttnW2
                | ParamGroup::Neigh(_)
                | ParamGroup::SelfLoop(_)
                | ParamGroup::EdgeProj(_)
                | ParamGroup::WOut
        )
    }
}

/// Offsets of every group inside the flat parameter vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Layout {
    groups: Vec<(ParamGroup, std::ops::Range<usize>, usize)>,
    total: usize,
}

impl Layout {
    pub fn new(h: &Hyper) -> Self {
        let dh = h.hidden_dim;
        let r = RelationKind::COUNT;
        // (group, size, fan_in used for initialization; 0 means zero-init)
        let mut spec = vec![
            (ParamGroup::WInit, h.input_dim * dh, h.input_dim),
            (ParamGroup::BInit, dh, 0),
            (ParamGroup::Salience, 3, 0),
            (ParamGroup::AttnW1, h.attn_hidden * h.prompt_dim, h.prompt_dim),
            (ParamGroup::AttnB1, h.attn_hidden, 0),
            (ParamGroup::AttnW2, h.attn_hidden, h.attn_hidden),
            (ParamGroup::AttnB2, 1, 0),
            (ParamGroup::RelationWeight, r, 0),
            (ParamGroup::StructWeight, 4, 0),
            (ParamGroup::RelationEmbed, r * dh, dh),
        ];
        for k in 0..h.layers {
            spec.push((ParamGroup::Neigh(k), dh * dh, dh));
            spec.push((ParamGroup::SelfLoop(k), dh * dh, dh));
            spec.push((ParamGroup::EdgeProj(k), dh * dh, dh));
            spec.push((ParamGroup::Bias(k), dh, 0));
        }
        spec.push((ParamGroup::WOut, h.layers * dh, h.layers * dh));
        spec.push((ParamGroup::BOut, 1, 0));
        let mut groups = Vec::with_capacity(spec.len());
        let mut at = 0;
        for (g, size, fan_in) in spec {
            groups.push((g, at..at + size, fan_in));
            at += size;
        }
        Layout { groups, total: at }
    }

    pub fn total(&self) -> usize {
        self.total
    }

    pub fn range(&self, group: ParamGroup) -> std::ops::Range<usize> {
        self.groups
            .iter()
            .find(|(g, _, _)| *g == group)
            .map(|(_, r, _)| r.clone())
            .unwrap_or_else(|| panic!("no parameter group {group:?}"))
    }

    pub fn groups(&self) -> impl Iterator<Item = (ParamGroup, std::ops::Range<usize>)> + '_ {
        self.groups.iter().map(|(g, r, _)| (*g, r.clone()))
    }

    /// The group containing flat index `i`.
    pub fn group_of(&self, i: usize) -> Option<ParamGroup> {
        self.groups.iter().find(|(_, r, _)| r.contains(&i)).map(|(g, _, _)| *g)
    }
}

/// Every learnable parameter plus the hyperparameters.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelState {
    pub hyper: Hyper,
    pub params: Vec<f64>,
    layout: Layout,
}

impl ModelState {
    /// Seeded symmetric-uniform initialization scaled by 1/sqrt(fan_in);
    /// biases, salience logits, w_r and w_struct start at zero.
    pub fn new(hyper: Hyper) -> Result<Self, GnnError> {
        hyper.validate()?;
        let layout = Layout::new(&hyper);
        let mut rng = ChaCha8Rng::seed_from_u64(hyper.seed);
        let mut params = vec![0.0; layout.total()];
        for (_, range, fan_in) in &layout.groups {
            if *fan_in == 0 {
                continue;
            }
            let bound = 1.0 / (*fan_in as f64).sqrt();
            for p in &mut params[range.clone()] {
                *p = rng.gen_range(-bound..bound);
            }
        }
        Ok(ModelState { hyper, params, layout })
    }

    pub fn from_parts(hyper: Hyper, params: Vec<f64>) -> Result<Self, GnnError> {
        hyper.validate()?;
        let layout = Layout::new(&hyper);
        if params.len() != layout.total() {
            return Err(GnnError::DimensionMismatch {
                expected: layout.total(),
                found: params.len(),
            });
        }
        Ok(ModelState { hyper, params, layout })
    }

    pub fn layout(&self) -> &Layout {
        &self.layout
    }

    pub fn group(&self, g: ParamGroup) -> &[f64] {
        &self.params[self.layout.range(g)]
    }

    pub fn group_mut(&mut self, g: ParamGroup) -> &mut [f64] {
        let r = self.layout.range(g);
        &mut self.params[r]
    }

    /// Softmax of the salience logits: (w_s, w_f, w_c).
    pub fn salience_weights(&self) -> [f64; 3] {
        let w = crate::linalg::softmax_with_temperature(self.group(ParamGroup::Salience), 1.0);
        [w[0], w[1], w[2]]
    }

    /// Row `i` of W_init, i.e. the hidden-space image of input feature `i`.
    pub fn w_init_row(&self, i: usize) -> &[f64] {
        let dh = self.hyper.hidden_dim;
        &self.group(ParamGroup::WInit)[i * dh..(i + 1) * dh]
    }

    pub fn relation_embedding(&self, r: RelationKind) -> &[f64] {
        let dh = self.hyper.hidden_dim;
        &self.group(ParamGroup::RelationEmbed)[r.index() * dh..(r.index() + 1) * dh]
    }

    /// Squared L2 norm over the weight matrices.
    pub fn l2_penalty(&self) -> f64 {
        self.layout
            .groups()
            .filter(|(g, _)| g.is_weight_matrix())
            .map(|(_, r)| self.params[r].iter().map(|p| p * p).sum::<f64>())
            .sum()
    }

    /// Gradient of [`Self::l2_penalty`], added into `grad`.
    pub fn add_l2_gradient(&self, scale: f64, grad: &mut [f64]) {
        for (g, r) in self.layout.groups() {
            if g.is_weight_matrix() {
                for i in r {
                    grad[i] += scale * 2.0 * self.params[i];
                }
            }
        }
    }

    /// Name of the first group holding a non-finite value in `values`.
    pub fn first_non_finite(&self, values: &[f64]) -> Option<String> {
        values
            .iter()
            .position(|v| !v.is_finite())
            .and_then(|i| self.layout.group_of(i))
            .map(ParamGroup::name)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let h = &self.hyper;
        let mut out = Vec::with_capacity(MODEL_MAGIC.len() + 8 * (self.params.len() + 20));
        out.extend_from_slice(MODEL_MAGIC.as_bytes());
        for v in [
            h.input_dim,
            h.hidden_dim,
            h.prompt_dim,
            h.attn_hidden,
            h.layers,
            h.top_k,
            h.max_hops,
        ] {
            out.extend_from_slice(&(v as u64).to_le_bytes());
        }
        out.extend_from_slice(&h.seed.to_le_bytes());
        for v in [h.tau, h.beta, h.gamma, h.dropout, h.pagerank_damping] {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out.extend_from_slice(&(h.task_context.len() as u64).to_le_bytes());
        out.extend_from_slice(h.task_context.as_bytes());
        out.extend_from_slice(&(self.params.len() as u64).to_le_bytes());
        for p in &self.params {
            out.extend_from_slice(&p.to_le_bytes());
        }
        out
    }

    /// Parses a model from the front of `bytes`; returns it with the number
    /// of bytes consumed.
    pub fn from_bytes(bytes: &[u8]) -> Result<(Self, usize), GnnError> {
        let mut r = ByteReader { bytes, at: 0 };
        let head = r.take(MODEL_MAGIC.len())?;
        if head != MODEL_MAGIC.as_bytes() {
            let line_end = bytes.iter().position(|&b| b == b'\n').unwrap_or(bytes.len().min(64));
            let found = String::from_utf8_lossy(&bytes[..line_end]).into_owned();
            return Err(if found.starts_with(MAGIC_PREFIX) {
                GnnError::VersionMismatch { found }
            } else {
                GnnError::CorruptFile {
                    offset: 0,
                    reason: "missing model header".into(),
                }
            });
        }
        let mut ints = [0usize; 7];
        for v in &mut ints {
            *v = r.u64()? as usize;
        }
        let seed = r.u64()?;
        let mut reals = [0f64; 5];
        for v in &mut reals {
            *v = r.f64()?;
        }
        let ctx_len = r.u64()? as usize;
        let ctx_at = r.at;
        let ctx = std::str::from_utf8(r.take(ctx_len)?)
            .map_err(|_| GnnError::CorruptFile {
                offset: ctx_at,
                reason: "task context is not UTF-8".into(),
            })?
            .to_string();
        let hyper = Hyper {
            input_dim: ints[0],
            hidden_dim: ints[1],
            prompt_dim: ints[2],
            attn_hidden: ints[3],
            layers: ints[4],
            top_k: ints[5],
            max_hops: ints[6],
            seed,
            tau: reals[0],
            beta: reals[1],
            gamma: reals[2],
            dropout: reals[3],
            pagerank_damping: reals[4],
            task_context: ctx,
        };
        let count_at = r.at;
        let count = r.u64()? as usize;
        hyper.validate().map_err(|e| GnnError::CorruptFile {
            offset: count_at,
            reason: e.to_string(),
        })?;
        let layout = Layout::new(&hyper);
        if count != layout.total() {
            return Err(GnnError::CorruptFile {
                offset: count_at,
                reason: format!("expected {} parameters, header says {count}", layout.total()),
            });
        }
        let mut params = Vec::with_capacity(count);
        for _ in 0..count {
            params.push(r.f64()?);
        }
        Ok((ModelState { hyper, params, layout }, r.at))
    }
}

pub(crate) struct ByteReader<'a> {
    pub bytes: &'a [u8],
    pub at: usize,
}

impl<'a> ByteReader<'a> {
    pub fn take(&mut self, n: usize) -> Result<&'a [u8], GnnError> {
        if self.bytes.len() - self.at < n {
            return Err(GnnError::CorruptFile {
                offset: self.bytes.len(),
                reason: format!("truncated: needed {n} bytes at offset {}", self.at),
            });
        }
        let s = &self.bytes[self.at..self.at + n];
        self.at += n;
        Ok(s)
    }

    pub fn u64(&mut self) -> Result<u64, GnnError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    pub fn f64(&mut self) -> Result<f64, GnnError> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> Hyper {
        Hyper {
            hidden_dim: 4,
            prompt_dim: 8,
            attn_hidden: 3,
            ..Hyper::new(10)
        }
    }

    #[test]
    fn zero_initialized_groups() {
        let m = ModelState::new(small()).unwrap();
        assert!(m.group(ParamGroup::Salience).iter().all(|&v| v == 0.0));
        assert!(m.group(ParamGroup::RelationWeight).iter().all(|&v| v == 0.0));
        assert!(m.group(ParamGroup::StructWeight).iter().all(|&v| v == 0.0));
        assert!(m.group(ParamGroup::Bias(1)).iter().all(|&v| v == 0.0));
        let bound = 1.0 / 10f64.sqrt();
        assert!(m.group(ParamGroup::WInit).iter().all(|v| v.abs() <= bound));
        assert!(m.group(ParamGroup::WInit).iter().any(|&v| v != 0.0));
        let w = m.salience_weights();
        assert!(w.iter().all(|x| (x - 1.0 / 3.0).abs() < 1e-15));
    }

    #[test]
    fn layout_is_contiguous() {
        let l = Layout::new(&small());
        let mut at = 0;
        for (_, r) in l.groups() {
            assert_eq!(r.start, at);
            at = r.end;
        }
        assert_eq!(at, l.total());
        assert_eq!(l.group_of(0), Some(ParamGroup::WInit));
        assert_eq!(l.group_of(l.total() - 1), Some(ParamGroup::BOut));
    }

    #[test]
    fn byte_round_trip() {
        let m = ModelState::new(small()).unwrap();
        let bytes = m.to_bytes();
        let (back, used) = ModelState::from_bytes(&bytes).unwrap();
        assert_eq!(used, bytes.len());
        assert_eq!(back, m);
        assert!(back.params.iter().zip(&m.params).all(|(a, b)| a.to_bits() == b.to_bits()));
    }

    #[test]
    fn truncated_and_versioned_files() {
        let bytes = ModelState::new(small()).unwrap().to_bytes();
        assert!(matches!(
            ModelState::from_bytes(&bytes[..bytes.len() - 3]),
            Err(GnnError::CorruptFile { .. })
        ));
        let mut old = b"EVOMAIL-MODEL v0\n".to_vec();
        old.extend_from_slice(&bytes[MODEL_MAGIC.len()..]);
        assert!(matches!(ModelState::from_bytes(&old), Err(GnnError::VersionMismatch { .. })));
    }
}
