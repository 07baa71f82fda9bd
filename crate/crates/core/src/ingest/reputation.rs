use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::IngestError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReputationEntry {
    /// In `[0, 1]`, higher is more trustworthy.
    pub reputation: f64,
    pub age_days: f64,
}

/// Local sender-domain reputation, loaded from `domain<TAB>reputation<TAB>age_days` lines.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ReputationTable {
    entries: BTreeMap<String, ReputationEntry>,
}

impl ReputationTable {
    pub const DEFAULT_REPUTATION: f64 = 0.5;
    pub const DEFAULT_AGE_DAYS: f64 = 0.0;

    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, domain: &str, reputation: f64, age_days: f64) {
        self.entries.insert(
            domain.trim().to_lowercase(),
            ReputationEntry { reputation, age_days },
        );
    }

    pub fn get(&self, domain: &str) -> Option<&ReputationEntry> {
        self.entries.get(domain)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn reputation(&self, domain: Option<&str>) -> f64 {
        domain
            .and_then(|d| self.entries.get(d))
            .map(|e| e.reputation)
            .unwrap_or(Self::DEFAULT_REPUTATION)
    }

    pub fn age_days(&self, domain: Option<&str>) -> f64 {
        domain
            .and_then(|d| self.entries.get(d))
            .map(|e| e.age_days)
            .unwrap_or(Self::DEFAULT_AGE_DAYS)
    }

    pub fn parse(text: &str) -> Result<Self, IngestError> {
        let mut table = Self::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim_end_matches('\r');
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let bad = |reason: &str| IngestError::BadRecord {
                line: i + 1,
                reason: reason.to_string(),
            };
            let fields: Vec<&str> = line.split('\t').collect();
            if fields.len() != 3 {
                return Err(bad("expected domain<TAB>reputation<TAB>age_days"));
            }
            let rep: f64 = fields[1].trim().parse().map_err(|_| bad("reputation is not a number"))?;
            let age: f64 = fields[2].trim().parse().map_err(|_| bad("age_days is not a number"))?;
            if !(0.0..=1.0).contains(&rep) {
                return Err(bad("reputation outside [0, 1]"));
            }
            if !age.is_finite() || age < 0.0 {
                return Err(bad("age_days must be a nonnegative number"));
            }
            table.insert(fields[0], rep, age);
        }
        Ok(table)
    }

    /// Loads a table; a missing file yields the empty table (all defaults).
    pub fn load(path: &Path) -> Result<Self, IngestError> {
        match std::fs::read_to_string(path) {
            Ok(text) => Self::parse(&text),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(Self::new()),
            Err(e) => Err(e.into()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_and_lookup() {
        let t = ReputationTable::parse("# comment\nX.com\t0.9\t365\n\nbad.example\t0.1\t3\n").unwrap();
        assert_eq!(t.len(), 2);
        assert_eq!(t.reputation(Some("x.com")), 0.9);
        assert_eq!(t.age_days(Some("x.com")), 365.0);
        assert_eq!(t.reputation(Some("unknown.org")), 0.5);
        assert_eq!(t.age_days(None), 0.0);
    }

    #[test]
    fn rejects_bad_lines() {
        assert!(matches!(
            ReputationTable::parse("a.com 0.5 3"),
            Err(IngestError::BadRecord { line: 1, .. })
        ));
        assert!(ReputationTable::parse("a.com\t1.5\t3").is_err());
    }

    #[test]
    fn missing_file_means_defaults() {
        let t = ReputationTable::load(Path::new("/nonexistent/rep.tsv")).unwrap();
        assert!(t.is_empty());
    }
}
