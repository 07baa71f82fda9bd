use std::collections::HashMap;
use std::path::Path;

use chrono::{Datelike, Timelike};
use serde::{Deserialize, Serialize};

use super::text::tokenize;
use super::{EmailDocument, IngestError, ReputationTable};
use crate::records::{self, RecordError};

pub const META_DIM: usize = 4;
pub const NETWORK_DIM: usize = 3;
pub const META_NAMES: [&str; META_DIM] = ["hour", "weekday", "length", "attach_count"];
pub const NETWORK_NAMES: [&str; NETWORK_DIM] = ["sender_rep", "domain_age", "url_count"];

const FEATURES_HEADER: &str = "EVOMAIL-FEATURES v1";

/// Terms ordered by descending document frequency, ties broken lexicographically.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(from = "VocabularyRepr", into = "VocabularyRepr")]
pub struct Vocabulary {
    terms: Vec<String>,
    document_frequencies: Vec<u64>,
    corpus_size: u64,
    index: HashMap<String, usize>,
}

#[derive(Serialize, Deserialize)]
struct VocabularyRepr {
    terms: Vec<String>,
    document_frequencies: Vec<u64>,
    corpus_size: u64,
}

impl From<VocabularyRepr> for Vocabulary {
    fn from(r: VocabularyRepr) -> Self {
        Vocabulary::from_parts(r.terms, r.document_frequencies, r.corpus_size)
    }
}

impl From<Vocabulary> for VocabularyRepr {
    fn from(v: Vocabulary) -> Self {
        VocabularyRepr {
            terms: v.terms,
            document_frequencies: v.document_frequencies,
            corpus_size: v.corpus_size,
        }
    }
}

impl Vocabulary {
    pub fn from_parts(terms: Vec<String>, document_frequencies: Vec<u64>, corpus_size: u64) -> Self {
        let index = terms.iter().enumerate().map(|(i, t)| (t.clone(), i)).collect();
        Vocabulary {
            terms,
            document_frequencies,
            corpus_size,
            index,
        }
    }

    pub fn terms(&self) -> &[String] {
        &self.terms
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn corpus_size(&self) -> u64 {
        self.corpus_size
    }

    pub fn index_of(&self, term: &str) -> Option<usize> {
        self.index.get(term).copied()
    }

    pub fn document_frequency(&self, term: &str) -> Option<u64> {
        self.index_of(term).map(|i| self.document_frequencies[i])
    }

    /// Smoothed inverse document frequency: `ln((1 + N) / (1 + df)) + 1`.
    pub fn idf(&self, i: usize) -> f64 {
        let n = self.corpus_size as f64;
        let df = self.document_frequencies[i] as f64;
        ((1.0 + n) / (1.0 + df)).ln() + 1.0
    }
}

/// Counts, per term, how many documents mention it in the subject or body,
/// and keeps the `cap` most frequent.
pub fn build_vocabulary(corpus: &[EmailDocument], cap: usize) -> Result<Vocabulary, IngestError> {
    if corpus.is_empty() {
        return Err(IngestError::EmptyCorpus);
    }
    let mut df: HashMap<String, u64> = HashMap::new();
    for doc in corpus {
        let mut tokens = tokenize(&doc.subject);
        tokens.extend(tokenize(&doc.body));
        tokens.sort_unstable();
        tokens.dedup();
        for t in tokens {
            *df.entry(t).or_insert(0) += 1;
        }
    }
    let mut ranked: Vec<(String, u64)> = df.into_iter().collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    ranked.truncate(cap);
    let (terms, dfs) = ranked.into_iter().unzip();
    Ok(Vocabulary::from_parts(terms, dfs, corpus.len() as u64))
}

fn tfidf_half(text: &str, vocab: &Vocabulary, out: &mut [f64]) {
    for tok in tokenize(text) {
        if let Some(i) = vocab.index_of(&tok) {
            out[i] += 1.0;
        }
    }
    for (i, v) in out.iter_mut().enumerate() {
        if *v != 0.0 {
            *v *= vocab.idf(i);
        }
    }
}

/// Raw-count TF-IDF of the subject followed by that of the body, `2·|V|` entries.
pub fn extract_text_features(doc: &EmailDocument, vocab: &Vocabulary) -> Vec<f64> {
    let n = vocab.len();
    let mut out = vec![0.0; 2 * n];
    let (subject, body) = out.split_at_mut(n);
    tfidf_half(&doc.subject, vocab, subject);
    tfidf_half(&doc.body, vocab, body);
    out
}

/// `[hour, weekday (Monday = 0), body length in chars, attachment count]`,
/// with hour and weekday set to −1 when the timestamp is absent.
pub fn raw_meta_features(doc: &EmailDocument) -> [f64; META_DIM] {
    let when = doc
        .timestamp
        .and_then(|t| chrono::DateTime::from_timestamp(t, 0));
    let (hour, weekday) = match when {
        Some(dt) => (dt.hour() as f64, dt.weekday().num_days_from_monday() as f64),
        None => (-1.0, -1.0),
    };
    [
        hour,
        weekday,
        doc.body.chars().count() as f64,
        doc.attachments.len() as f64,
    ]
}

/// `[sender reputation, sender domain age in days, url count]`.
pub fn raw_network_features(doc: &EmailDocument, reputation: &ReputationTable) -> [f64; NETWORK_DIM] {
    let domain = doc.sender_domain.as_deref();
    [
        reputation.reputation(domain),
        reputation.age_days(domain),
        doc.urls.len() as f64,
    ]
}

/// Per-column z-score frozen from a fitting corpus. Columns with zero
/// spread map to 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Standardizer {
    pub fn fit(rows: &[Vec<f64>]) -> Self {
        let dim = rows.first().map(Vec::len).unwrap_or(0);
        let n = rows.len().max(1) as f64;
        let mut mean = vec![0.0; dim];
        for r in rows {
            for (m, x) in mean.iter_mut().zip(r) {
                *m += x;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = vec![0.0; dim];
        for r in rows {
            for ((v, x), m) in var.iter_mut().zip(r).zip(&mean) {
                *v += (x - m) * (x - m);
            }
        }
        let std = var.into_iter().map(|v| (v / n).sqrt()).collect();
        Standardizer { mean, std }
    }

    pub fn identity(dim: usize) -> Self {
        Standardizer {
            mean: vec![0.0; dim],
            std: vec![1.0; dim],
        }
    }

    pub fn apply(&self, raw: &[f64]) -> Vec<f64> {
        raw.iter()
            .zip(self.mean.iter().zip(&self.std))
            .map(|(x, (m, s))| if *s > 1e-12 { (x - m) / s } else { 0.0 })
            .collect()
    }
}

pub fn extract_meta_features(doc: &EmailDocument, standardizer: &Standardizer) -> Vec<f64> {
    standardizer.apply(&raw_meta_features(doc))
}

pub fn extract_network_features(
    doc: &EmailDocument,
    reputation: &ReputationTable,
    standardizer: &Standardizer,
) -> Vec<f64> {
    standardizer.apply(&raw_network_features(doc, reputation))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub text: Vec<f64>,
    pub meta: Vec<f64>,
    pub network: Vec<f64>,
    pub full: Vec<f64>,
}

impl FeatureVector {
    pub fn new(text: Vec<f64>, meta: Vec<f64>, network: Vec<f64>) -> Self {
        let mut full = Vec::with_capacity(text.len() + meta.len() + network.len());
        full.extend_from_slice(&text);
        full.extend_from_slice(&meta);
        full.extend_from_slice(&network);
        FeatureVector {
            text,
            meta,
            network,
            full,
        }
    }

    pub fn dim(&self) -> usize {
        self.full.len()
    }
}

pub fn assemble_feature_vector(
    doc: &EmailDocument,
    vocab: &Vocabulary,
    reputation: &ReputationTable,
    meta_std: &Standardizer,
    network_std: &Standardizer,
) -> FeatureVector {
    FeatureVector::new(
        extract_text_features(doc, vocab),
        extract_meta_features(doc, meta_std),
        extract_network_features(doc, reputation, network_std),
    )
}

/// Everything needed to turn an [`EmailDocument`] into its feature vector:
/// vocabulary, reputation table and the frozen standardization statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Featurizer {
    pub vocab: Vocabulary,
    pub reputation: ReputationTable,
    pub meta_std: Standardizer,
    pub network_std: Standardizer,
}

impl Featurizer {
    pub fn fit(
        corpus: &[EmailDocument],
        vocab_cap: usize,
        reputation: ReputationTable,
    ) -> Result<Self, IngestError> {
        let vocab = build_vocabulary(corpus, vocab_cap)?;
        let meta_rows: Vec<Vec<f64>> = corpus.iter().map(|d| raw_meta_features(d).to_vec()).collect();
        let net_rows: Vec<Vec<f64>> = corpus
            .iter()
            .map(|d| raw_network_features(d, &reputation).to_vec())
            .collect();
        Ok(Featurizer {
            vocab,
            meta_std: Standardizer::fit(&meta_rows),
            network_std: Standardizer::fit(&net_rows),
            reputation,
        })
    }

    pub fn text_dim(&self) -> usize {
        2 * self.vocab.len()
    }

    pub fn dim(&self) -> usize {
        self.text_dim() + META_DIM + NETWORK_DIM
    }

    pub fn featurize(&self, doc: &EmailDocument) -> FeatureVector {
        assemble_feature_vector(doc, &self.vocab, &self.reputation, &self.meta_std, &self.network_std)
    }

    /// Human-readable name of feature `i` of the full vector.
    pub fn feature_name(&self, i: usize) -> String {
        let n = self.vocab.len();
        if i < n {
            format!("subject:{}", self.vocab.terms()[i])
        } else if i < 2 * n {
            format!("body:{}", self.vocab.terms()[i - n])
        } else if i < 2 * n + META_DIM {
            format!("meta:{}", META_NAMES[i - 2 * n])
        } else if i < self.dim() {
            format!("network:{}", NETWORK_NAMES[i - 2 * n - META_DIM])
        } else {
            format!("feature:{i}")
        }
    }
}

/// One line of an `EVOMAIL-FEATURES v1` file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureRecord {
    pub document: EmailDocument,
    pub features: FeatureVector,
}

fn record_err(e: RecordError) -> IngestError {
    match e {
        RecordError::Io(e) => IngestError::Io(e.to_string()),
        RecordError::Header { expected, found } => IngestError::BadRecord {
            line: 1,
            reason: format!("expected {expected:?}, found {found:?}"),
        },
        RecordError::Line { line, reason } => IngestError::BadRecord { line, reason },
    }
}

pub fn write_feature_records(path: &Path, records: &[FeatureRecord]) -> Result<(), IngestError> {
    records::write_records(path, FEATURES_HEADER, records).map_err(record_err)
}

pub fn read_feature_records(path: &Path) -> Result<Vec<FeatureRecord>, IngestError> {
    records::read_records(path, FEATURES_HEADER).map_err(record_err)
}
