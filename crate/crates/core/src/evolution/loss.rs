//! The four-term training objective and its logit seeds for backward.

use serde::{Deserialize, Serialize};

use super::EvolutionError;
use crate::coggnn::{ForwardTrace, ModelState};

/// Scores are clamped to [SCORE_CLAMP, 1 - SCORE_CLAMP] inside logarithms.
pub const SCORE_CLAMP: f64 = 1e-7;

/// Binary cross-entropy of score `f` against a (possibly soft) target `y`.
pub fn bce(y: f64, f: f64) -> f64 {
    let f = f.clamp(SCORE_CLAMP, 1.0 - SCORE_CLAMP);
    -(y * f.ln() + (1.0 - y) * (1.0 - f).ln())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub lambda: f64,
    pub mu: f64,
    pub nu: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossReport {
    pub task: f64,
    pub cons: f64,
    pub adv: f64,
    pub reg: f64,
    pub total: f64,
    pub weights: LossWeights,
}

/// Trace nodes entering each term.
#[derive(Debug, Clone, Default)]
pub struct LossInputs {
    /// (node, label) for the labeled emails.
    pub task: Vec<(usize, f64)>,
    /// (node, cached score) for the memory entries.
    pub memory: Vec<(usize, f64)>,
    /// Adversarial samples, all spam.
    pub adversarial: Vec<usize>,
    /// Ham emails balancing the adversarial term.
    pub benign: Vec<usize>,
}

/// Loss values and the seeds dL_total/dz for every scored node. The seeds
/// are the exact derivatives of the unclamped cross-entropies.
pub fn compute_losses(
    model: &ModelState,
    trace: &ForwardTrace,
    inputs: &LossInputs,
    weights: LossWeights,
) -> Result<(LossReport, Vec<(usize, f64)>), EvolutionError> {
    let score = |v: usize| {
        trace
            .score(v)
            .ok_or_else(|| EvolutionError::NonFiniteLoss(format!("node {v} has no score")))
    };
    let mut seeds = Vec::new();
    let mut task = 0.0;
    for &(v, y) in &inputs.task {
        let f = score(v)?;
        task += bce(y, f);
        seeds.push((v, f - y));
    }
    let mut cons = 0.0;
    for &(v, y) in &inputs.memory {
        let f = score(v)?;
        cons += bce(y, f);
        seeds.push((v, weights.lambda * (f - y)));
    }
    let mut adv = 0.0;
    for &v in &inputs.adversarial {
        let f = score(v)?;
        adv += bce(1.0, f);
        seeds.push((v, weights.mu * (f - 1.0)));
    }
    for &v in &inputs.benign {
        let f = score(v)?;
        adv += bce(0.0, f);
        seeds.push((v, weights.mu * f));
    }
    let reg = model.l2_penalty();
    let total = task + weights.lambda * cons + weights.mu * adv + weights.nu * reg;
    for (name, x) in [("task", task), ("cons", cons), ("adv", adv), ("reg", reg), ("total", total)] {
        if !x.is_finite() {
            return Err(EvolutionError::NonFiniteLoss(name.into()));
        }
    }
    let report = LossReport {
        task,
        cons,
        adv,
        reg,
        total,
        weights,
    };
    Ok((report, seeds))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bce_half_is_ln2() {
        assert!((bce(1.0, 0.5) - std::f64::consts::LN_2).abs() < 1e-12);
        assert!((bce(0.0, 0.5) - std::f64::consts::LN_2).abs() < 1e-12);
    }

    #[test]
    fn clamp_keeps_bce_finite() {
        assert!(bce(1.0, 0.0).is_finite());
        assert!((bce(1.0, 0.0) + SCORE_CLAMP.ln()).abs() < 1e-12);
        assert!(bce(0.0, 1.0).is_finite());
    }
}
