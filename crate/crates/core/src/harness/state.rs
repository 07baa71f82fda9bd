//! Model + memory (+ optional featurizer) in one file.
//!
//! Layout: the `EVOMAIL-STATE v1` line, the binary model block, one
//! `featurizer <json|null>` line, then the memory records to end of file.

use std::path::Path;

use super::HarnessError;
use crate::coggnn::{GnnError, ModelState};
use crate::evolution::{EvolutionError, ExperienceMemory};
use crate::ingest::Featurizer;

pub const STATE_MAGIC: &str = "EVOMAIL-STATE v1\n";
const STATE_PREFIX: &str = "EVOMAIL-STATE ";
const FEATURIZER_TAG: &str = "featurizer ";

#[derive(Debug, Clone, PartialEq)]
pub struct SavedState {
    pub model: ModelState,
    pub memory: ExperienceMemory,
    pub featurizer: Option<Featurizer>,
}

impl SavedState {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = STATE_MAGIC.as_bytes().to_vec();
        out.extend_from_slice(&self.model.to_bytes());
        out.extend_from_slice(FEATURIZER_TAG.as_bytes());
        let json = serde_json::to_string(&self.featurizer).expect("featurizer serializes");
        out.extend_from_slice(json.as_bytes());
        out.push(b'\n');
        out.extend_from_slice(self.memory.to_record_string().as_bytes());
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, HarnessError> {
        let corrupt = |offset: usize, reason: &str| HarnessError::CorruptFile {
            offset,
            reason: reason.to_string(),
        };
        if !bytes.starts_with(STATE_MAGIC.as_bytes()) {
            let end = bytes.iter().position(|&b| b == b'\n').unwrap_or(bytes.len().min(64));
            let found = String::from_utf8_lossy(&bytes[..end]).into_owned();
            return Err(if found.starts_with(STATE_PREFIX) {
                HarnessError::VersionMismatch { found }
            } else {
                corrupt(0, "missing state header")
            });
        }
        let mut at = STATE_MAGIC.len();
        let (model, used) = ModelState::from_bytes(&bytes[at..]).map_err(|e| match e {
            GnnError::CorruptFile { offset, reason } => HarnessError::CorruptFile {
                offset: at + offset,
                reason,
            },
            GnnError::VersionMismatch { found } => HarnessError::VersionMismatch { found },
            other => HarnessError::Gnn(other),
        })?;
        at += used;
        let rest = &bytes[at..];
        if !rest.starts_with(FEATURIZER_TAG.as_bytes()) {
            return Err(corrupt(at, "missing featurizer line"));
        }
        let line_end = rest
            .iter()
            .position(|&b| b == b'\n')
            .ok_or_else(|| corrupt(bytes.len(), "truncated featurizer line"))?;
        let json = &rest[FEATURIZER_TAG.len()..line_end];
        let featurizer: Option<Featurizer> =
            serde_json::from_slice(json).map_err(|e| corrupt(at + FEATURIZER_TAG.len(), &e.to_string()))?;
        if let Some(f) = &featurizer {
            if f.dim() != model.hyper.input_dim {
                return Err(corrupt(at, "featurizer dimension does not match the model"));
            }
        }
        at += line_end + 1;
        let memory = ExperienceMemory::parse(&bytes[at..]).map_err(|e| match e {
            EvolutionError::VersionMismatch { found } => HarnessError::VersionMismatch { found },
            other => HarnessError::CorruptFile {
                offset: at,
                reason: other.to_string(),
            },
        })?;
        Ok(SavedState {
            model,
            memory,
            featurizer,
        })
    }
}

pub fn save_state(state: &SavedState, path: &Path) -> Result<(), HarnessError> {
    crate::records::write_atomic(path, &state.to_bytes()).map_err(|e| HarnessError::Io(format!("{}: {e}", path.display())))
}

pub fn load_state(path: &Path) -> Result<SavedState, HarnessError> {
    let bytes = std::fs::read(path).map_err(|e| HarnessError::Io(format!("{}: {e}", path.display())))?;
    SavedState::from_bytes(&bytes)
}
