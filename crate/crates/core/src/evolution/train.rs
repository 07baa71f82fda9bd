//! The training driver: forward, red generation, blue failures, compression
//! and memory update, then one plain gradient step.

use std::fmt::Write as _;
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use tracing::debug;

use super::loss::{compute_losses, LossInputs, LossReport, LossWeights};
use super::memory::{extract_failure_trace, kmedoids_compress, sample_distance, ExperienceMemory, NewEntry};
use super::red::{detect_failures, generate_adversarial_batch, SeedEmail};
use super::{mix_seed, EvolutionConfig, EvolutionError};
use crate::coggnn::{BackwardOptions, Evaluator, Mode, ModelState, Variant};
use crate::harness::metrics::f1_at_threshold;
use crate::ingest::{EmailDocument, Vocabulary};
use crate::linalg::SparseVec;

pub const HISTORY_HEADER: &str = "iteration,task,cons,adv,reg,total,f1,memory_size,mean_reward,adversarial,failures";

/// Everything the driver reads. Email node `i` of the evaluator's graph is
/// `docs[i]`.
pub struct TrainingSet<'a> {
    pub evaluator: &'a Evaluator<'a>,
    pub docs: &'a [EmailDocument],
    pub vocab: &'a Vocabulary,
    /// Feature extraction for mutated documents, matching the graph's.
    pub featurize: &'a (dyn Fn(&EmailDocument) -> Vec<f64> + Sync),
    /// Labeled email nodes used for the task loss and as red/blue seeds.
    pub train: Vec<usize>,
    /// Email nodes scored for held-out F1.
    pub holdout: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    /// Objective at the start of the iteration, before the step.
    pub loss: LossReport,
    /// Held-out F1 of the model entering the iteration.
    pub f1: f64,
    pub memory_size: usize,
    pub mean_reward: f64,
    pub adversarial: usize,
    pub failures: usize,
}

impl IterationRecord {
    pub fn csv_row(&self) -> String {
        let l = &self.loss;
        format!(
            "{},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{},{:.6},{},{}",
            self.iteration,
            l.task,
            l.cons,
            l.adv,
            l.reg,
            l.total,
            self.f1,
            self.memory_size,
            self.mean_reward,
            self.adversarial,
            self.failures
        )
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: ModelState,
    pub memory: ExperienceMemory,
    pub history: Vec<IterationRecord>,
}

impl TrainOutcome {
    pub fn history_csv(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{HISTORY_HEADER}");
        for r in &self.history {
            let _ = writeln!(out, "{}", r.csv_row());
        }
        out
    }
}

fn label_of(doc: &EmailDocument) -> Option<f64> {
    doc.label.map(|l| l.as_f64())
}

/// Runs `cfg.iterations` iterations starting from `model` and `memory`.
pub fn train(
    data: &TrainingSet,
    mut model: ModelState,
    mut memory: ExperienceMemory,
    cfg: &EvolutionConfig,
) -> Result<TrainOutcome, EvolutionError> {
    cfg.validate()?;
    let ev = data.evaluator;
    let graph = ev.graph();
    let labeled: Vec<(usize, f64)> = data
        .train
        .iter()
        .filter_map(|&i| label_of(&data.docs[i]).map(|y| (i, y)))
        .collect();
    let spam: Vec<usize> = labeled.iter().filter(|(_, y)| *y == 1.0).map(|&(i, _)| i).collect();
    let ham: Vec<usize> = labeled.iter().filter(|(_, y)| *y == 0.0).map(|&(i, _)| i).collect();
    let holdout_labels: Vec<f64> = data
        .holdout
        .iter()
        .map(|&i| label_of(&data.docs[i]).unwrap_or(0.0))
        .collect();
    let weights = LossWeights {
        lambda: cfg.lambda,
        mu: cfg.mu,
        nu: cfg.nu,
    };
    let mut history = Vec::with_capacity(cfg.iterations);

    for t in 1..=cfg.iterations {
        let it_seed = mix_seed(cfg.seed, t as u64);
        let mut rng = ChaCha8Rng::seed_from_u64(it_seed);

        // Forward pass with the current model.
        let base = Arc::new(ev.forward_base(&model, Mode::Eval)?);
        let holdout_scores: Vec<f64> = data
            .holdout
            .iter()
            .map(|&i| base.nodes[i].score.expect("email score"))
            .collect();
        let f1 = f1_at_threshold(&holdout_scores, &holdout_labels, 0.5);

        // Red team.
        let mut seed_nodes = spam.clone();
        seed_nodes.shuffle(&mut rng);
        seed_nodes.truncate(cfg.batch_size);
        seed_nodes.sort_unstable();
        let seeds: Vec<SeedEmail> = seed_nodes
            .iter()
            .map(|&i| SeedEmail {
                doc: &data.docs[i],
                anchor: Some(i),
                features: graph.node(i).features.to_dense(),
            })
            .collect();
        let adversarial = generate_adversarial_batch(
            &seeds,
            ev,
            &model,
            &base,
            &memory,
            cfg,
            data.vocab,
            data.featurize,
            mix_seed(it_seed, 1),
        )?;
        let mean_reward = if adversarial.is_empty() {
            0.0
        } else {
            adversarial.iter().map(|s| s.reward_parts.total).sum::<f64>() / adversarial.len() as f64
        };

        // Blue team.
        let scores: Vec<f64> = adversarial.iter().map(|s| s.score.expect("scored sample")).collect();
        let failed = detect_failures(&adversarial, &scores, cfg.delta_fail);

        // Compression and memory update.
        let k = failed.len().min(memory.free());
        if k > 0 {
            let variants: Vec<Variant> = failed.iter().map(|&i| adversarial[i].variant()).collect();
            let trace = ev.extend(&model, &base, &variants)?;
            let traces = (0..failed.len())
                .map(|j| {
                    extract_failure_trace(
                        trace.variant_index(j),
                        &trace,
                        cfg.trace_max_depth,
                        cfg.trace_min_confidence,
                    )
                })
                .collect::<Result<Vec<_>, _>>()?;
            let dist = |a: usize, b: usize| {
                sample_distance(
                    &adversarial[failed[a]].perturbed_features,
                    Some(&traces[a]),
                    &adversarial[failed[b]].perturbed_features,
                    Some(&traces[b]),
                    cfg.alpha_trace,
                )
            };
            let medoids = kmedoids_compress(failed.len(), k, dist, mix_seed(it_seed, 2));
            let entries = medoids
                .into_iter()
                .map(|j| {
                    let s = &adversarial[failed[j]];
                    NewEntry {
                        features: s.perturbed_features.clone(),
                        cached_score: scores[failed[j]],
                        trace: traces[j].clone(),
                        anchor_key: s.anchor.map(|a| data.docs[a].id.clone()),
                        desc: s.desc.clone(),
                    }
                })
                .collect();
            memory.insert(entries, t as u64);
        }

        // Loss over the updated memory, then the parameter step.
        let mut benign = ham.clone();
        benign.shuffle(&mut rng);
        benign.truncate(adversarial.len());
        benign.sort_unstable();
        memory.touch_all(t as u64);
        let mut variants: Vec<Variant> = memory
            .entries()
            .iter()
            .map(|e| Variant {
                anchor: e.anchor_key.as_deref().and_then(|k| graph.email_by_key(k)),
                features: SparseVec::from_dense(&e.features),
                desc: e.desc.clone(),
            })
            .collect();
        variants.extend(adversarial.iter().map(|s| s.variant()));
        let train_base = Arc::new(ev.forward_base(&model, Mode::Train { dropout_seed: mix_seed(it_seed, 3) })?);
        let trace = ev.extend(&model, &train_base, &variants)?;
        let m = memory.len();
        let inputs = LossInputs {
            task: labeled.clone(),
            memory: memory
                .entries()
                .iter()
                .enumerate()
                .map(|(j, e)| (trace.variant_index(j), e.cached_score))
                .collect(),
            adversarial: (0..adversarial.len()).map(|j| trace.variant_index(m + j)).collect(),
            benign,
        };
        let (loss, seeds) = match compute_losses(&model, &trace, &inputs, weights) {
            Ok(x) => x,
            Err(EvolutionError::NonFiniteLoss(_)) => return Err(EvolutionError::DivergenceDetected { iteration: t }),
            Err(e) => return Err(e),
        };
        let mut grad = ev.backward(&model, &trace, &seeds, &BackwardOptions::full())?.params;
        model.add_l2_gradient(cfg.nu, &mut grad);
        for (p, g) in model.params.iter_mut().zip(&grad) {
            *p -= cfg.eta * g;
        }
        if model.first_non_finite(&model.params).is_some() {
            return Err(EvolutionError::DivergenceDetected { iteration: t });
        }
        debug!(iteration = t, total = loss.total, f1, memory = memory.len(), failures = failed.len(), "iteration");
        history.push(IterationRecord {
            iteration: t,
            loss,
            f1,
            memory_size: memory.len(),
            mean_reward,
            adversarial: adversarial.len(),
            failures: failed.len(),
        });
    }
    Ok(TrainOutcome { model, memory, history })
}
