use std::sync::{Condvar, Mutex};
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::{unit_basis, EncoderError};
use crate::linalg::normalize_in_place;

#[derive(Debug, Clone, PartialEq)]
pub struct RemoteConfig {
    /// Service root; requests go to `<base_url>/embed`.
    pub base_url: String,
    pub timeout: Duration,
    pub max_in_flight: usize,
}

impl Default for RemoteConfig {
    fn default() -> Self {
        RemoteConfig {
            base_url: "http://127.0.0.1:8080".into(),
            timeout: Duration::from_secs(30),
            max_in_flight: 4,
        }
    }
}

#[derive(Serialize)]
struct EmbedRequest<'a> {
    texts: &'a [&'a str],
}

#[derive(Deserialize)]
struct EmbedResponse {
    vectors: Vec<Vec<f64>>,
}

/// Client for `POST /embed` with body `{"texts": [...]}` answering
/// `{"vectors": [[...], ...]}`.
pub struct RemoteEncoder {
    config: RemoteConfig,
    agent: ureq::Agent,
    in_flight: Mutex<usize>,
    slot_freed: Condvar,
}

struct Permit<'a>(&'a RemoteEncoder);

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        let mut n = self.0.in_flight.lock().unwrap_or_else(|e| e.into_inner());
        *n -= 1;
        self.0.slot_freed.notify_one();
    }
}

impl RemoteEncoder {
    pub fn new(config: RemoteConfig) -> Self {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(config.timeout))
            .http_status_as_error(true)
            .build()
            .into();
        RemoteEncoder {
            config,
            agent,
            in_flight: Mutex::new(0),
            slot_freed: Condvar::new(),
        }
    }

    pub fn config(&self) -> &RemoteConfig {
        &self.config
    }

    fn acquire(&self) -> Permit<'_> {
        let limit = self.config.max_in_flight.max(1);
        let mut n = self.in_flight.lock().unwrap_or_else(|e| e.into_inner());
        while *n >= limit {
            n = self.slot_freed.wait(n).unwrap_or_else(|e| e.into_inner());
        }
        *n += 1;
        Permit(self)
    }

    /// Fetches one vector per text, checks the dimension and L2-normalizes.
    pub fn embed(&self, texts: &[&str], dim: usize) -> Result<Vec<Vec<f64>>, EncoderError> {
        let _permit = self.acquire();
        let url = format!("{}/embed", self.config.base_url.trim_end_matches('/'));
        let unavailable = |e: String| EncoderError::RemoteUnavailable(e);
        let mut response = self
            .agent
            .post(&url)
            .send_json(&EmbedRequest { texts })
            .map_err(|e| unavailable(e.to_string()))?;
        let body: EmbedResponse = response
            .body_mut()
            .read_json()
            .map_err(|e| unavailable(format!("bad response body: {e}")))?;
        if body.vectors.len() != texts.len() {
            return Err(unavailable(format!(
                "asked for {} vectors, got {}",
                texts.len(),
                body.vectors.len()
            )));
        }
        body.vectors
            .into_iter()
            .map(|mut v| {
                if v.len() != dim {
                    return Err(unavailable(format!("expected dimension {dim}, got {}", v.len())));
                }
                if v.iter().any(|x| !x.is_finite()) {
                    return Err(unavailable("non-finite vector component".into()));
                }
                Ok(if normalize_in_place(&mut v) { v } else { unit_basis(dim) })
            })
            .collect()
    }
}
