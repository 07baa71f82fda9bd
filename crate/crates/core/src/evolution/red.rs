//! Red team: adversarial candidates, their reward, and failure detection.

use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::memory::ExperienceMemory;
use super::{mix_seed, EvolutionConfig, EvolutionError};
use crate::coggnn::{BaseTrace, Evaluator, ModelState, Scorer, Variant, VariantScorer};
use crate::encoder::email_description;
use crate::ingest::text::token_spans;
use crate::ingest::url::find_urls;
use crate::ingest::{EmailDocument, Vocabulary};
use crate::linalg::{l2_distance, norm, SparseVec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SampleKind {
    Grad,
    Semantic,
    Hybrid,
}

impl SampleKind {
    pub fn as_str(self) -> &'static str {
        match self {
            SampleKind::Grad => "grad",
            SampleKind::Semantic => "semantic",
            SampleKind::Hybrid => "hybrid",
        }
    }
}

/// FGSM step direction: `Evade` lowers the spam score, `Boost` raises it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Evade,
    Boost,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MutationOp {
    Leet,
    ZeroWidth,
    Homoglyph,
    VocabSwap,
}

impl MutationOp {
    pub const ALL: [MutationOp; 4] = [
        MutationOp::Leet,
        MutationOp::ZeroWidth,
        MutationOp::Homoglyph,
        MutationOp::VocabSwap,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            MutationOp::Leet => "leet",
            MutationOp::ZeroWidth => "zero_width",
            MutationOp::Homoglyph => "homoglyph",
            MutationOp::VocabSwap => "vocab_swap",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        MutationOp::ALL.into_iter().find(|op| op.as_str() == s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct RewardParts {
    pub novelty: f64,
    pub evasion: f64,
    pub complexity: f64,
    pub total: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdversarialSample {
    pub seed_id: String,
    /// Graph node of the seed, if it is in the graph.
    pub anchor: Option<usize>,
    pub kind: SampleKind,
    /// (subject, body) after mutation; absent for gradient samples.
    pub mutated_text: Option<(String, String)>,
    pub perturbed_features: Vec<f64>,
    /// Prompt description of the sample.
    pub desc: String,
    pub ground_truth: f64,
    pub reward_parts: RewardParts,
    /// Detector score at generation time.
    pub score: Option<f64>,
    pub epsilon_used: f64,
    pub rho_used: f64,
    pub lambda_used: f64,
}

impl AdversarialSample {
    pub fn variant(&self) -> Variant {
        Variant {
            anchor: self.anchor,
            features: SparseVec::from_dense(&self.perturbed_features),
            desc: self.desc.clone(),
        }
    }
}

/// A spam email the red team starts from.
#[derive(Debug, Clone)]
pub struct SeedEmail<'a> {
    pub doc: &'a EmailDocument,
    pub anchor: Option<usize>,
    pub features: Vec<f64>,
}

impl SeedEmail<'_> {
    pub fn desc(&self) -> String {
        email_description(&self.doc.subject, &self.doc.body)
    }
}

fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// x' = x + s·ε·sign(∂ log f/∂x), s = -1 to evade and +1 to boost.
pub fn gradient_perturb(
    seed: &SeedEmail,
    scorer: &dyn Scorer,
    epsilon: f64,
    direction: Direction,
) -> Result<AdversarialSample, EvolutionError> {
    let g = scorer.log_score_gradient(&seed.features)?;
    let s = match direction {
        Direction::Evade => -1.0,
        Direction::Boost => 1.0,
    };
    let perturbed: Vec<f64> = seed
        .features
        .iter()
        .zip(&g)
        .map(|(x, gi)| x + s * epsilon * sign(*gi))
        .collect();
    Ok(AdversarialSample {
        seed_id: seed.doc.id.clone(),
        anchor: seed.anchor,
        kind: SampleKind::Grad,
        mutated_text: None,
        perturbed_features: perturbed,
        desc: seed.desc(),
        ground_truth: 1.0,
        reward_parts: RewardParts::default(),
        score: None,
        epsilon_used: epsilon,
        rho_used: 0.0,
        lambda_used: 1.0,
    })
}

fn leet(c: char) -> Option<char> {
    Some(match c {
        'a' | 'A' => '4',
        'e' | 'E' => '3',
        'i' | 'I' => '1',
        'o' | 'O' => '0',
        's' | 'S' => '5',
        _ => return None,
    })
}

fn homoglyph(c: char) -> Option<char> {
    Some(match c {
        'a' => 'а',
        'c' => 'с',
        'e' => 'е',
        'i' => 'і',
        'o' => 'о',
        'p' => 'р',
        'x' => 'х',
        'y' => 'у',
        'A' => 'А',
        'B' => 'В',
        'C' => 'С',
        'E' => 'Е',
        'H' => 'Н',
        'K' => 'К',
        'M' => 'М',
        'O' => 'О',
        'P' => 'Р',
        'T' => 'Т',
        'X' => 'Х',
        _ => return None,
    })
}

fn mutate_token(token: &str, op: MutationOp, vocab: &Vocabulary, rng: &mut ChaCha8Rng) -> String {
    match op {
        MutationOp::Leet => token.chars().map(|c| leet(c).unwrap_or(c)).collect(),
        MutationOp::ZeroWidth => {
            let bounds: Vec<usize> = token.char_indices().map(|(i, _)| i).skip(1).collect();
            match bounds.choose(rng) {
                Some(&at) => format!("{}\u{200d}{}", &token[..at], &token[at..]),
                None => token.to_string(),
            }
        }
        MutationOp::Homoglyph => {
            let spots: Vec<usize> = token
                .char_indices()
                .filter(|(_, c)| homoglyph(*c).is_some())
                .map(|(i, _)| i)
                .collect();
            match spots.choose(rng) {
                Some(&at) => {
                    let c = token[at..].chars().next().expect("char at index");
                    let mut out = String::with_capacity(token.len() + 2);
                    out.push_str(&token[..at]);
                    out.push(homoglyph(c).expect("eligible"));
                    out.push_str(&token[at + c.len_utf8()..]);
                    out
                }
                None => token.to_string(),
            }
        }
        MutationOp::VocabSwap => match vocab.terms().choose(rng) {
            Some(t) => t.clone(),
            None => token.to_string(),
        },
    }
}

/// Mutates each token outside URL spans with probability `rho`, picking the
/// operator uniformly from `ops`.
pub fn mutate_text(text: &str, vocab: &Vocabulary, rho: f64, ops: &[MutationOp], rng: &mut ChaCha8Rng) -> String {
    let urls: Vec<std::ops::Range<usize>> = find_urls(text).into_iter().map(|(r, _)| r).collect();
    let mut out = String::with_capacity(text.len() + 16);
    let mut last = 0;
    for span in token_spans(text) {
        if urls.iter().any(|u| u.start < span.end && span.start < u.end) {
            continue;
        }
        if rng.gen::<f64>() >= rho {
            continue;
        }
        let op = *ops.choose(rng).expect("nonempty operator set");
        out.push_str(&text[last..span.start]);
        out.push_str(&mutate_token(&text[span.clone()], op, vocab, rng));
        last = span.end;
    }
    out.push_str(&text[last..]);
    out
}

/// Mutates subject and body and re-extracts features from the result.
pub fn semantic_mutate(
    seed: &SeedEmail,
    vocab: &Vocabulary,
    rho: f64,
    ops: &[MutationOp],
    rng_seed: u64,
    featurize: &(dyn Fn(&EmailDocument) -> Vec<f64> + Sync),
) -> AdversarialSample {
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let mut doc = seed.doc.clone();
    doc.subject = mutate_text(&seed.doc.subject, vocab, rho, ops, &mut rng);
    doc.body = mutate_text(&seed.doc.body, vocab, rho, ops, &mut rng);
    AdversarialSample {
        seed_id: seed.doc.id.clone(),
        anchor: seed.anchor,
        kind: SampleKind::Semantic,
        perturbed_features: featurize(&doc),
        desc: email_description(&doc.subject, &doc.body),
        mutated_text: Some((doc.subject, doc.body)),
        ground_truth: 1.0,
        reward_parts: RewardParts::default(),
        score: None,
        epsilon_used: 0.0,
        rho_used: rho,
        lambda_used: 0.0,
    }
}

/// λ·grad + (1-λ)·semantic; text and description come from the semantic sample.
pub fn hybrid_combine(
    grad: &AdversarialSample,
    semantic: &AdversarialSample,
    lambda: f64,
) -> Result<AdversarialSample, EvolutionError> {
    if grad.seed_id != semantic.seed_id {
        return Err(EvolutionError::SeedMismatch(grad.seed_id.clone(), semantic.seed_id.clone()));
    }
    if grad.perturbed_features.len() != semantic.perturbed_features.len() {
        return Err(EvolutionError::Gnn(crate::coggnn::GnnError::DimensionMismatch {
            expected: grad.perturbed_features.len(),
            found: semantic.perturbed_features.len(),
        }));
    }
    let features = grad
        .perturbed_features
        .iter()
        .zip(&semantic.perturbed_features)
        .map(|(g, s)| lambda * g + (1.0 - lambda) * s)
        .collect();
    Ok(AdversarialSample {
        seed_id: grad.seed_id.clone(),
        anchor: grad.anchor,
        kind: SampleKind::Hybrid,
        mutated_text: semantic.mutated_text.clone(),
        perturbed_features: features,
        desc: semantic.desc.clone(),
        ground_truth: 1.0,
        reward_parts: RewardParts::default(),
        score: None,
        epsilon_used: grad.epsilon_used,
        rho_used: semantic.rho_used,
        lambda_used: lambda,
    })
}

/// R = w_n·Novelty + w_e·Evasion - w_c·Complexity.
pub fn red_reward(
    sample: &[f64],
    seed: &[f64],
    score: f64,
    memory: &ExperienceMemory,
    cfg: &EvolutionConfig,
) -> RewardParts {
    let novelty = memory
        .entries()
        .iter()
        .map(|e| l2_distance(sample, &e.features))
        .reduce(f64::min)
        .unwrap_or(cfg.novelty_cap);
    let evasion = (0.5 - score).max(0.0);
    let seed_norm = norm(seed);
    let complexity = if seed_norm == 0.0 {
        0.0
    } else {
        l2_distance(sample, seed) / seed_norm
    };
    RewardParts {
        novelty,
        evasion,
        complexity,
        total: cfg.reward_novelty * novelty + cfg.reward_evasion * evasion - cfg.reward_complexity * complexity,
    }
}

/// Grad, semantic and hybrid candidates per seed, scored against the shared
/// base pass; the `batch_size` best by reward are kept (ties: grad, semantic,
/// hybrid, then seed order).
#[allow(clippy::too_many_arguments)]
pub fn generate_adversarial_batch(
    seeds: &[SeedEmail],
    evaluator: &Evaluator,
    model: &ModelState,
    base: &Arc<BaseTrace>,
    memory: &ExperienceMemory,
    cfg: &EvolutionConfig,
    vocab: &Vocabulary,
    featurize: &(dyn Fn(&EmailDocument) -> Vec<f64> + Sync),
    rng_seed: u64,
) -> Result<Vec<AdversarialSample>, EvolutionError> {
    let per_seed: Vec<Vec<AdversarialSample>> = seeds
        .par_iter()
        .enumerate()
        .map(|(i, seed)| {
            let scorer = VariantScorer {
                evaluator,
                model,
                base: Arc::clone(base),
                anchor: seed.anchor,
                desc: seed.desc(),
            };
            let grad = gradient_perturb(seed, &scorer, cfg.epsilon, cfg.direction)?;
            let semantic = semantic_mutate(seed, vocab, cfg.rho_mut, &cfg.mutation_ops, mix_seed(rng_seed, i as u64), featurize);
            let hybrid = hybrid_combine(&grad, &semantic, cfg.lambda_hybrid)?;
            let mut out = vec![grad, semantic, hybrid];
            let variants: Vec<Variant> = out.iter().map(|s| s.variant()).collect();
            let trace = evaluator.extend(model, base, &variants)?;
            for (j, s) in out.iter_mut().enumerate() {
                let f = trace.score(trace.variant_index(j)).expect("variant score");
                s.score = Some(f);
                s.reward_parts = red_reward(&s.perturbed_features, &seed.features, f, memory, cfg);
            }
            Ok(out)
        })
        .collect::<Result<_, EvolutionError>>()?;
    let mut all: Vec<AdversarialSample> = per_seed.into_iter().flatten().collect();
    all.sort_by(|a, b| b.reward_parts.total.total_cmp(&a.reward_parts.total).then(a.kind.cmp(&b.kind)));
    all.truncate(cfg.batch_size);
    Ok(all)
}

/// Indices of samples labeled spam whose score falls below `delta`.
pub fn detect_failures(samples: &[AdversarialSample], scores: &[f64], delta: f64) -> Vec<usize> {
    samples
        .iter()
        .zip(scores)
        .enumerate()
        .filter(|(_, (s, &f))| f < delta && s.ground_truth == 1.0)
        .map(|(i, _)| i)
        .collect()
}
