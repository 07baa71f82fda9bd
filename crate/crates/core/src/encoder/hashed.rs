use std::hash::Hasher;

use fnv::FnvHasher;

use super::unit_basis;
use crate::ingest::text::tokenize;
use crate::linalg::normalize_in_place;

fn gram_hash(gram: &[String]) -> u64 {
    let mut h = FnvHasher::default();
    for (i, tok) in gram.iter().enumerate() {
        if i > 0 {
            h.write_u8(0x1f);
        }
        h.write(tok.as_bytes());
    }
    h.finish()
}

/// Signed feature hashing of token trigrams into `dim` buckets, L2-normalized.
/// Texts with fewer than three tokens hash their whole token sequence as one
/// gram; texts without tokens map to e_1.
pub fn hashed_embedding(text: &str, dim: usize) -> Vec<f64> {
    let tokens = tokenize(text);
    if tokens.is_empty() {
        return unit_basis(dim);
    }
    let mut v = vec![0.0; dim];
    let mut add = |gram: &[String]| {
        let h = gram_hash(gram);
        let bucket = (h % dim as u64) as usize;
        let sign = if h >> 63 == 1 { -1.0 } else { 1.0 };
        v[bucket] += sign;
    };
    if tokens.len() < 3 {
        add(&tokens);
    } else {
        for w in tokens.windows(3) {
            add(w);
        }
    }
    if normalize_in_place(&mut v) {
        v
    } else {
        unit_basis(dim)
    }
}
