//! Email ingestion: EML/mbox parsing and per-email feature extraction.

mod features;
mod html;
mod mime;
mod reputation;
pub mod text;
pub mod url;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use features::{
    assemble_feature_vector, build_vocabulary, extract_meta_features, extract_network_features,
    extract_text_features, raw_meta_features, raw_network_features, read_feature_records,
    write_feature_records, FeatureRecord, FeatureVector, Featurizer, Standardizer, Vocabulary,
    META_DIM, META_NAMES, NETWORK_DIM, NETWORK_NAMES,
};
pub use mime::{parse_email, parse_mbox, split_mbox};
pub use reputation::{ReputationEntry, ReputationTable};
pub use url::UrlRecord;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum IngestError {
    #[error("malformed message at byte {offset}: {reason}")]
    MalformedMessage { offset: usize, reason: String },
    #[error("unsupported encoding at byte {offset}: {reason}")]
    UnsupportedEncoding { offset: usize, reason: String },
    #[error("cannot build a vocabulary from an empty corpus")]
    EmptyCorpus,
    #[error("io error: {0}")]
    Io(String),
    #[error("bad record at line {line}: {reason}")]
    BadRecord { line: usize, reason: String },
}

impl From<std::io::Error> for IngestError {
    fn from(e: std::io::Error) -> Self {
        IngestError::Io(e.to_string())
    }
}

/// Input framing understood by [`parse_email`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RawFormat {
    Eml,
    /// One message cut out of an mbox file, optionally still carrying its
    /// `From ` separator line and `>From` quoting.
    MboxEntry,
}

/// Outcome of an authentication check reported in the headers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum AuthResult {
    Pass,
    Fail,
    #[default]
    Absent,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub struct AuthFlags {
    pub spf_pass: AuthResult,
    pub dkim_pass: AuthResult,
    pub dmarc_pass: AuthResult,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Ham,
    Spam,
}

impl Label {
    pub fn as_f64(self) -> f64 {
        match self {
            Label::Ham => 0.0,
            Label::Spam => 1.0,
        }
    }

    pub fn is_spam(self) -> bool {
        self == Label::Spam
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttachmentRecord {
    pub filename: String,
    pub mime_type: String,
    /// Lowercase hex SHA-256 of the decoded bytes.
    pub digest: String,
    pub size_bytes: u64,
}

/// One parsed email.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmailDocument {
    pub id: String,
    /// Lowercase hex SHA-256 of the raw message bytes.
    pub raw_hash: String,
    pub message_id: Option<String>,
    pub in_reply_to: Option<String>,
    pub subject: String,
    pub body: String,
    pub sender_address: Option<String>,
    pub sender_domain: Option<String>,
    pub recipient_addresses: Vec<String>,
    pub reply_to: Option<String>,
    /// Seconds since the Unix epoch, UTC. `None` when the Date header is
    /// missing or unparseable.
    pub timestamp: Option<i64>,
    pub urls: Vec<UrlRecord>,
    pub attachments: Vec<AttachmentRecord>,
    pub auth_flags: AuthFlags,
    pub label: Option<Label>,
}

impl EmailDocument {
    /// An empty document, used by generators and tests that fill fields by hand.
    pub fn blank(id: impl Into<String>) -> Self {
        EmailDocument {
            id: id.into(),
            raw_hash: String::new(),
            message_id: None,
            in_reply_to: None,
            subject: String::new(),
            body: String::new(),
            sender_address: None,
            sender_domain: None,
            recipient_addresses: Vec::new(),
            reply_to: None,
            timestamp: None,
            urls: Vec::new(),
            attachments: Vec::new(),
            auth_flags: AuthFlags::default(),
            label: None,
        }
    }

    /// Sets the sender and keeps `sender_domain` in sync with it.
    pub fn set_sender(&mut self, address: &str) {
        let normalized = normalize_address(address);
        self.sender_domain = normalized.as_deref().and_then(domain_of);
        self.sender_address = normalized;
    }

    /// Subject and body joined the way the semantic encoder sees an email.
    pub fn text_content(&self) -> String {
        if self.subject.is_empty() {
            self.body.clone()
        } else if self.body.is_empty() {
            self.subject.clone()
        } else {
            format!("{}\n{}", self.subject, self.body)
        }
    }
}

/// Lowercases an address and strips display names and angle brackets.
/// Returns `None` when nothing address-like remains.
pub fn normalize_address(raw: &str) -> Option<String> {
    let mut s = raw.trim();
    if let (Some(open), Some(close)) = (s.rfind('<'), s.rfind('>')) {
        if open < close {
            s = &s[open + 1..close];
        }
    }
    let s = s.trim().trim_matches(|c| c == '"' || c == '\'').trim();
    if s.is_empty() || s.chars().any(char::is_whitespace) {
        return None;
    }
    Some(s.to_lowercase())
}

/// Domain part of a normalized address, lowercased.
pub fn domain_of(address: &str) -> Option<String> {
    let (_, domain) = address.rsplit_once('@')?;
    let domain = domain.trim().trim_end_matches('.');
    if domain.is_empty() {
        None
    } else {
        Some(domain.to_lowercase())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn address_normalization() {
        assert_eq!(
            normalize_address("Alice <Alice@Example.COM>").as_deref(),
            Some("alice@example.com")
        );
        assert_eq!(normalize_address("  b@y.com ").as_deref(), Some("b@y.com"));
        assert_eq!(normalize_address("   "), None);
        assert_eq!(domain_of("a@X.com").as_deref(), Some("x.com"));
        assert_eq!(domain_of("nobody"), None);
    }

    #[test]
    fn set_sender_keeps_domain_in_sync() {
        let mut d = EmailDocument::blank("x");
        d.set_sender("Bob <bob@Mail.Example.org>");
        assert_eq!(d.sender_address.as_deref(), Some("bob@mail.example.org"));
        assert_eq!(d.sender_domain.as_deref(), Some("mail.example.org"));
    }
}
