//! Dense and sparse vector helpers used across the model code.

use serde::{Deserialize, Serialize};

/// Sparse vector with strictly increasing indices and no stored zeros.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct SparseVec {
    pub dim: usize,
    pub indices: Vec<u32>,
    pub values: Vec<f64>,
}

impl SparseVec {
    pub fn zeros(dim: usize) -> Self {
        SparseVec {
            dim,
            indices: Vec::new(),
            values: Vec::new(),
        }
    }

    pub fn from_dense(dense: &[f64]) -> Self {
        let mut indices = Vec::new();
        let mut values = Vec::new();
        for (i, &v) in dense.iter().enumerate() {
            if v != 0.0 {
                indices.push(i as u32);
                values.push(v);
            }
        }
        SparseVec {
            dim: dense.len(),
            indices,
            values,
        }
    }

    /// Builds from unordered (index, value) pairs; later duplicates overwrite
    /// earlier ones and indices at or beyond `dim` are dropped.
    pub fn from_pairs(dim: usize, pairs: impl IntoIterator<Item = (usize, f64)>) -> Self {
        let mut map = std::collections::BTreeMap::new();
        for (i, v) in pairs {
            if i < dim {
                map.insert(i as u32, v);
            }
        }
        let (indices, values) = map.into_iter().filter(|(_, v)| *v != 0.0).unzip();
        SparseVec { dim, indices, values }
    }

    pub fn to_dense(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        for (&i, &v) in self.indices.iter().zip(&self.values) {
            out[i as usize] = v;
        }
        out
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.indices.iter().map(|&i| i as usize).zip(self.values.iter().copied())
    }

    pub fn nnz(&self) -> usize {
        self.indices.len()
    }

    pub fn norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub fn l2_distance(a: &[f64], b: &[f64]) -> f64 {
    let common = a.len().min(b.len());
    let mut s: f64 = a[..common]
        .iter()
        .zip(&b[..common])
        .map(|(x, y)| (x - y) * (x - y))
        .sum();
    s += a[common..].iter().map(|x| x * x).sum::<f64>();
    s += b[common..].iter().map(|x| x * x).sum::<f64>();
    s.sqrt()
}

/// Cosine similarity; 0 when either vector is exactly zero.
pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let na = norm(a);
    let nb = norm(b);
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot(a, b) / (na * nb)
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Normalizes in place; returns false (and leaves the input) when the norm is zero.
pub fn normalize_in_place(v: &mut [f64]) -> bool {
    let n = norm(v);
    if n == 0.0 || !n.is_finite() {
        return false;
    }
    v.iter_mut().for_each(|x| *x /= n);
    true
}

/// Max-subtracted softmax of `logits / temperature`.
pub fn softmax_with_temperature(logits: &[f64], temperature: f64) -> Vec<f64> {
    if logits.is_empty() {
        return Vec::new();
    }
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&e| ((e - max) / temperature).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// `out = W x` for a row-major `rows x x.len()` matrix.
pub fn mat_vec(w: &[f64], x: &[f64], out: &mut [f64]) {
    let cols = x.len();
    for (r, o) in out.iter_mut().enumerate() {
        *o = dot(&w[r * cols..(r + 1) * cols], x);
    }
}

/// `out += W^T y` for a row-major `y.len() x out.len()` matrix.
pub fn mat_t_vec_add(w: &[f64], y: &[f64], out: &mut [f64]) {
    let cols = out.len();
    for (r, &yr) in y.iter().enumerate() {
        if yr == 0.0 {
            continue;
        }
        axpy(yr, &w[r * cols..(r + 1) * cols], out);
    }
}

/// `g += scale * a b^T`, row-major `a.len() x b.len()`.
pub fn add_outer(g: &mut [f64], scale: f64, a: &[f64], b: &[f64]) {
    let cols = b.len();
    for (r, &ar) in a.iter().enumerate() {
        let s = scale * ar;
        if s == 0.0 {
            continue;
        }
        axpy(s, b, &mut g[r * cols..(r + 1) * cols]);
    }
}

/// `y += a x`.
pub fn axpy(a: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matrix_helpers() {
        let w = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0];
        let mut out = [0.0; 2];
        mat_vec(&w, &[1.0, 0.0, -1.0], &mut out);
        assert_eq!(out, [-2.0, -2.0]);
        let mut back = [0.0; 3];
        mat_t_vec_add(&w, &[1.0, 1.0], &mut back);
        assert_eq!(back, [5.0, 7.0, 9.0]);
        let mut g = [0.0; 6];
        add_outer(&mut g, 2.0, &[1.0, 0.5], &[1.0, 2.0, 3.0]);
        assert_eq!(g, [2.0, 4.0, 6.0, 1.0, 2.0, 3.0]);
    }

    #[test]
    fn sparse_round_trip() {
        let d = vec![0.0, 1.5, 0.0, -2.0];
        let s = SparseVec::from_dense(&d);
        assert_eq!(s.nnz(), 2);
        assert_eq!(s.to_dense(), d);
        let p = SparseVec::from_pairs(4, [(3, -2.0), (1, 1.5), (9, 1.0)]);
        assert_eq!(p, s);
    }

    #[test]
    fn cosine_guards_zero() {
        assert_eq!(cosine(&[0.0, 0.0], &[1.0, 0.0]), 0.0);
        assert!((cosine(&[1.0, 1.0], &[2.0, 2.0]) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn softmax_closed_forms() {
        let tau = 0.7;
        let a = softmax_with_temperature(&[tau * 2f64.ln(), 0.0], tau);
        assert!((a[0] - 2.0 / 3.0).abs() < 1e-12);
        assert!((a[1] - 1.0 / 3.0).abs() < 1e-12);
        assert_eq!(softmax_with_temperature(&[5.0], 1.0), vec![1.0]);
        assert_eq!(softmax_with_temperature(&[3.0, 3.0], 2.0), vec![0.5, 0.5]);
        let big = softmax_with_temperature(&[1000.0, 0.0], 1.0);
        assert!(big[0].is_finite() && big[1] >= 0.0);
    }

    #[test]
    fn sigmoid_is_stable() {
        assert_eq!(sigmoid(0.0), 0.5);
        assert!(sigmoid(-800.0) >= 0.0);
        assert!(sigmoid(20.0) > 0.999_999);
    }
}
