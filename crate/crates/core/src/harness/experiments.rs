//! Static, shift and cross-modal experiment drivers.

use std::borrow::Cow;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use tracing::info;

use super::config::ExperimentConfig;
use super::metrics::{classification_metrics, f1_at_threshold, MetricsReport};
use super::synthetic::{p3_templates, synthetic_reputation, SyntheticEmail};
use super::HarnessError;
use super::state::SavedState;
use crate::coggnn::{Evaluator, Mode, ModelState};
use crate::explain::{extract_evidence_path, node_feature_importance, render_explanation};
use crate::encoder::{RemoteConfig, RemoteEncoder, SemanticEncoder};
use crate::evolution::{train, EvolutionConfig, ExperienceMemory, IterationRecord, TrainOutcome, TrainingSet};
use crate::graph::{build_graph, HeteroGraph, NodeKind, RelationMask};
use crate::ingest::url::find_urls;
use crate::ingest::{EmailDocument, Featurizer, ReputationTable};
use crate::linalg::SparseVec;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Modality {
    TextOnly,
    TextMeta,
    FullGraph,
}

impl Modality {
    pub const ALL: [Modality; 3] = [Modality::TextOnly, Modality::TextMeta, Modality::FullGraph];

    pub fn as_str(self) -> &'static str {
        match self {
            Modality::TextOnly => "text_only",
            Modality::TextMeta => "text_meta",
            Modality::FullGraph => "full_graph",
        }
    }

    pub fn parse(s: &str) -> Option<Modality> {
        Modality::ALL.into_iter().find(|m| m.as_str() == s)
    }

    pub fn mask(self) -> RelationMask {
        match self {
            Modality::TextOnly => RelationMask::text_only(),
            Modality::TextMeta => RelationMask::text_meta(),
            Modality::FullGraph => RelationMask::full(),
        }
    }
}

pub fn make_encoder(cfg: &ExperimentConfig) -> SemanticEncoder {
    if cfg.encoder_url.is_empty() {
        SemanticEncoder::hashed(cfg.encoder_dim)
    } else {
        let client = RemoteEncoder::new(RemoteConfig {
            base_url: cfg.encoder_url.clone(),
            ..RemoteConfig::default()
        });
        SemanticEncoder::remote(client, cfg.encoder_dim, false)
    }
}

/// Featurizer, encoder and graph over one document set. Email node `i` is
/// `docs[i]`.
pub struct Pipeline {
    pub docs: Vec<EmailDocument>,
    pub featurizer: Featurizer,
    pub modality: Modality,
    pub encoder: SemanticEncoder,
    pub graph: HeteroGraph,
}

fn without_urls(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    let mut at = 0;
    for (span, _) in find_urls(text) {
        out.push_str(&text[at..span.start]);
        at = span.end;
    }
    out.push_str(&text[at..]);
    out
}

/// The document as a modality sees it: text_only drops URL spans from the
/// text along with the URL and attachment records.
pub fn modality_view(doc: &EmailDocument, modality: Modality) -> Cow<'_, EmailDocument> {
    if modality != Modality::TextOnly {
        return Cow::Borrowed(doc);
    }
    let mut d = doc.clone();
    d.subject = without_urls(&d.subject);
    d.body = without_urls(&d.body);
    d.urls.clear();
    d.attachments.clear();
    Cow::Owned(d)
}

/// Full feature vector with the slices the modality hides set to zero.
pub fn masked_features(featurizer: &Featurizer, modality: Modality, doc: &EmailDocument) -> Vec<f64> {
    let mut x = featurizer.featurize(&modality_view(doc, modality)).full;
    if modality == Modality::TextOnly {
        for v in &mut x[featurizer.text_dim()..] {
            *v = 0.0;
        }
    }
    x
}

impl Pipeline {
    pub fn new(
        docs: Vec<EmailDocument>,
        featurizer: Featurizer,
        modality: Modality,
        cfg: &ExperimentConfig,
    ) -> Result<Self, HarnessError> {
        let docs: Vec<EmailDocument> = docs
            .into_iter()
            .map(|d| match modality_view(&d, modality) {
                Cow::Owned(v) => v,
                Cow::Borrowed(_) => d,
            })
            .collect();
        let encoder = make_encoder(cfg);
        let feats: Vec<SparseVec> = docs
            .iter()
            .map(|d| SparseVec::from_dense(&masked_features(&featurizer, modality, d)))
            .collect();
        let options = crate::graph::GraphOptions {
            mask: modality.mask(),
            ..cfg.graph_options()
        };
        let graph = build_graph(&docs, feats, featurizer.dim(), &encoder, &options)?;
        Ok(Pipeline {
            docs,
            featurizer,
            modality,
            encoder,
            graph,
        })
    }

    /// Fits the featurizer on `docs[fit_on]` and builds the graph over all docs.
    pub fn fit(
        docs: Vec<EmailDocument>,
        fit_on: &[usize],
        reputation: ReputationTable,
        modality: Modality,
        cfg: &ExperimentConfig,
    ) -> Result<Self, HarnessError> {
        let subset: Vec<EmailDocument> = fit_on.iter().map(|&i| modality_view(&docs[i], modality).into_owned()).collect();
        let featurizer = Featurizer::fit(&subset, cfg.vocab_cap, reputation)?;
        Self::new(docs, featurizer, modality, cfg)
    }

    pub fn evaluator<'a>(&'a self, model: &ModelState) -> Evaluator<'a> {
        Evaluator::new(&self.graph, &self.encoder, model.hyper.pagerank_damping, model.hyper.max_hops)
    }

    pub fn features(&self, doc: &EmailDocument) -> Vec<f64> {
        masked_features(&self.featurizer, self.modality, doc)
    }

    pub fn initial_model(&self, cfg: &ExperimentConfig) -> Result<ModelState, HarnessError> {
        Ok(ModelState::new(cfg.hyper(self.featurizer.dim()))?)
    }

    pub fn train(
        &self,
        train_on: &[usize],
        holdout: &[usize],
        model: ModelState,
        memory: ExperienceMemory,
        evo: &EvolutionConfig,
    ) -> Result<TrainOutcome, HarnessError> {
        let ev = self.evaluator(&model);
        let featurize = |d: &EmailDocument| self.features(d);
        let data = TrainingSet {
            evaluator: &ev,
            docs: &self.docs,
            vocab: &self.featurizer.vocab,
            featurize: &featurize,
            train: train_on.to_vec(),
            holdout: holdout.to_vec(),
        };
        Ok(train(&data, model, memory, evo)?)
    }

    /// Eval-mode scores of every email node.
    pub fn scores(&self, model: &ModelState) -> Result<Vec<f64>, HarnessError> {
        Ok(self.evaluator(model).predict_emails(model)?)
    }

    pub fn labels(&self, idx: &[usize]) -> Vec<f64> {
        idx.iter()
            .map(|&i| self.docs[i].label.map_or(0.0, |l| l.as_f64()))
            .collect()
    }
}

/// Seeded split of `0..n` into sorted (train, test) parts with
/// `round(fraction * n)` training indices.
pub fn split_indices(n: usize, fraction: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let cut = ((n as f64) * fraction).round() as usize;
    let mut train = idx[..cut].to_vec();
    let mut test = idx[cut..].to_vec();
    train.sort_unstable();
    test.sort_unstable();
    (train, test)
}

fn pick(scores: &[f64], idx: &[usize]) -> Vec<f64> {
    idx.iter().map(|&i| scores[i]).collect()
}

fn check_labels(docs: &[EmailDocument]) -> Result<(), HarnessError> {
    if docs.is_empty() || docs.iter().any(|d| d.label.is_none()) {
        return Err(HarnessError::EmptyInput);
    }
    Ok(())
}

#[derive(Debug, Clone)]
pub struct StaticOutcome {
    pub metrics: MetricsReport,
    pub history: Vec<IterationRecord>,
    pub train: Vec<usize>,
    pub test: Vec<usize>,
    pub model: ModelState,
    pub memory: ExperienceMemory,
}

/// Seeded 80/20 split, featurizer fit on the training part, training over
/// the graph of all emails, metrics on the test part.
pub fn run_static(corpus: &[EmailDocument], cfg: &ExperimentConfig) -> Result<StaticOutcome, HarnessError> {
    run_modality(corpus, cfg, Modality::FullGraph)
}

pub fn run_cross_modal(
    corpus: &[EmailDocument],
    cfg: &ExperimentConfig,
    modality: Modality,
) -> Result<StaticOutcome, HarnessError> {
    run_modality(corpus, cfg, modality)
}

fn run_modality(corpus: &[EmailDocument], cfg: &ExperimentConfig, modality: Modality) -> Result<StaticOutcome, HarnessError> {
    cfg.validate()?;
    check_labels(corpus)?;
    let (train_idx, test_idx) = split_indices(corpus.len(), cfg.train_fraction, cfg.split_seed);
    let pipe = Pipeline::fit(corpus.to_vec(), &train_idx, synthetic_reputation(), modality, cfg)?;
    let model = pipe.initial_model(cfg)?;
    let memory = ExperienceMemory::new(cfg.evolution.memory_capacity);
    let out = pipe.train(&train_idx, &test_idx, model, memory, &cfg.evolution)?;
    let scores = pipe.scores(&out.model)?;
    let metrics = classification_metrics(&pick(&scores, &test_idx), &pipe.labels(&test_idx), 0.5, &cfg.precision_ks)?;
    info!(modality = modality.as_str(), f1 = metrics.f1, auc = metrics.auc, "static run");
    Ok(StaticOutcome {
        metrics,
        history: out.history,
        train: train_idx,
        test: test_idx,
        model: out.model,
        memory: out.memory,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseResult {
    pub phase: String,
    pub auc: f64,
    pub f1: f64,
    /// F1 over the held-out template spam plus the phase's test ham.
    pub novel_f1: Option<f64>,
    pub updates: usize,
    pub memory_size: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShiftReport {
    pub phases: Vec<PhaseResult>,
    /// AUC of the first phase minus AUC of the last.
    pub delta: f64,
    pub novel_templates: Vec<String>,
    pub history: Vec<(String, IterationRecord)>,
}

/// Templates held out of every update: `floor(fraction * |templates|)` of
/// them, chosen by `seed`.
pub fn novel_templates(templates: &[String], fraction: f64, seed: u64) -> Vec<String> {
    let k = ((templates.len() as f64) * fraction).floor() as usize;
    let mut t = templates.to_vec();
    t.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    t.truncate(k);
    t.sort();
    t
}

/// Trains on the first phase, then evolves on each later phase alone. The
/// featurizer is frozen after the first phase; every phase gets its own
/// graph. Templates in `novel` never enter an update batch.
pub fn run_shift(
    phases: &[(String, Vec<SyntheticEmail>)],
    cfg: &ExperimentConfig,
) -> Result<ShiftReport, HarnessError> {
    cfg.validate()?;
    if phases.is_empty() {
        return Err(HarnessError::EmptyInput);
    }
    let novel = novel_templates(&p3_templates(), cfg.novel_fraction, cfg.split_seed);
    let mut featurizer = None;
    let mut model: Option<ModelState> = None;
    let mut memory = ExperienceMemory::new(cfg.evolution.memory_capacity);
    let mut results = Vec::new();
    let mut history = Vec::new();
    for (p, (name, corpus)) in phases.iter().enumerate() {
        let docs: Vec<EmailDocument> = corpus.iter().map(|e| e.doc.clone()).collect();
        check_labels(&docs)?;
        let (train_part, test_part) = split_indices(docs.len(), cfg.train_fraction, cfg.split_seed.wrapping_add(p as u64));
        let is_novel = |i: usize| novel.contains(&corpus[i].template);
        let updates: Vec<usize> = train_part.iter().copied().filter(|&i| !is_novel(i)).collect();
        let test: Vec<usize> = test_part.iter().copied().filter(|&i| !is_novel(i)).collect();
        let novel_eval: Vec<usize> = (0..docs.len())
            .filter(|&i| is_novel(i) || (test_part.binary_search(&i).is_ok() && !corpus[i].is_spam()))
            .collect();
        let pipe = match featurizer.take() {
            None => Pipeline::fit(docs, &updates, synthetic_reputation(), Modality::FullGraph, cfg)?,
            Some(f) => Pipeline::new(docs, f, Modality::FullGraph, cfg)?,
        };
        let m = match model.take() {
            Some(m) => m,
            None => pipe.initial_model(cfg)?,
        };
        let mut evo = cfg.evolution.clone();
        evo.seed = cfg.evolution.seed.wrapping_add(p as u64);
        let out = pipe.train(&updates, &test, m, memory, &evo)?;
        let scores = pipe.scores(&out.model)?;
        let eval_scores = pick(&scores, &test);
        let labels = pipe.labels(&test);
        let metrics = classification_metrics(&eval_scores, &labels, 0.5, &[])?;
        let has_novel = novel_eval.iter().any(|&i| is_novel(i));
        let novel_f1 = has_novel.then(|| f1_at_threshold(&pick(&scores, &novel_eval), &pipe.labels(&novel_eval), 0.5));
        info!(phase = name.as_str(), auc = metrics.auc, ?novel_f1, "shift phase");
        history.extend(out.history.into_iter().map(|r| (name.clone(), r)));
        results.push(PhaseResult {
            phase: name.clone(),
            auc: metrics.auc,
            f1: metrics.f1,
            novel_f1,
            updates: updates.len(),
            memory_size: out.memory.len(),
        });
        featurizer = Some(pipe.featurizer);
        model = Some(out.model);
        memory = out.memory;
    }
    let delta = results.first().map_or(0.0, |r| r.auc) - results.last().map_or(0.0, |r| r.auc);
    Ok(ShiftReport {
        phases: results,
        delta,
        novel_templates: novel,
        history,
    })
}

/// Scores `docs` with a saved model and featurizer over a graph of `docs`.
pub fn detect(state: &SavedState, docs: Vec<EmailDocument>, cfg: &ExperimentConfig) -> Result<(Pipeline, Vec<f64>), HarnessError> {
    let featurizer = state
        .featurizer
        .clone()
        .ok_or_else(|| HarnessError::Config("saved state carries no featurizer".into()))?;
    if docs.is_empty() {
        return Err(HarnessError::EmptyInput);
    }
    let pipe = Pipeline::new(docs, featurizer, Modality::FullGraph, cfg)?;
    let scores = pipe.scores(&state.model)?;
    Ok((pipe, scores))
}

/// Evidence path and feature attributions for the email with id `email_id`.
pub fn explain_email(
    pipe: &Pipeline,
    model: &ModelState,
    email_id: &str,
    cfg: &ExperimentConfig,
) -> Result<String, HarnessError> {
    let v = pipe
        .docs
        .iter()
        .position(|d| d.id == email_id)
        .ok_or_else(|| HarnessError::Config(format!("no email with id {email_id:?}")))?;
    let ev = pipe.evaluator(model);
    let trace = ev.forward(model, Mode::Eval, &[])?;
    let evo = &cfg.evolution;
    let path = extract_evidence_path(v, &trace, evo.trace_max_depth, evo.trace_min_confidence)?;
    let mut attributions = Vec::new();
    for step in path.steps.iter().filter(|s| s.kind == NodeKind::Email) {
        let attrs = node_feature_importance(
            &ev,
            model,
            &trace,
            step.node,
            |i| pipe.featurizer.feature_name(i),
            cfg.explain_top_features,
        )?;
        attributions.push((step.node, attrs));
    }
    let score = trace.score(v).expect("email score");
    let mut out = render_explanation(&path, &attributions, score);
    for step in &path.steps {
        let node = pipe.graph.node(step.node);
        out.push_str(&format!("node {} = {}:{}\n", step.node, node.kind.as_str(), node.key));
    }
    out.push_str(&format!("terminated by {}\n", path.terminated_by.as_str()));
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn split_sizes_are_fixed_by_fraction() {
        let (a, b) = split_indices(101, 0.8, 1);
        let (c, d) = split_indices(101, 0.8, 2);
        assert_eq!((a.len(), b.len()), (81, 20));
        assert_eq!((c.len(), d.len()), (81, 20));
        assert_ne!(a, c);
        let mut all: Vec<usize> = a.iter().chain(&b).copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..101).collect::<Vec<_>>());
    }

    #[test]
    fn novel_template_count_is_floor() {
        let t = p3_templates();
        assert_eq!(novel_templates(&t, 0.1, 3).len(), t.len() / 10);
        assert_eq!(novel_templates(&t, 0.0, 3).len(), 0);
        assert_eq!(novel_templates(&t, 0.26, 3).len(), (t.len() as f64 * 0.26).floor() as usize);
    }
}
