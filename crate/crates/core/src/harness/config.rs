//! Flat `key = value` experiment configuration. `#` starts a comment and
//! unknown keys are errors.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::HarnessError;
use crate::coggnn::Hyper;
use crate::encoder::DEFAULT_DIM;
use crate::evolution::{Direction, EvolutionConfig, MutationOp};
use crate::explain::DEFAULT_TOP_FEATURES;
use crate::graph::{CandidatePolicy, GraphOptions, RelationParams};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub vocab_cap: usize,
    pub encoder_dim: usize,
    /// Empty for the hashed encoder, otherwise the embedding service root.
    pub encoder_url: String,
    pub hidden_dim: usize,
    pub attn_hidden: usize,
    pub layers: usize,
    pub top_k: usize,
    pub tau: f64,
    pub beta: f64,
    pub gamma: f64,
    pub dropout: f64,
    pub pagerank_damping: f64,
    pub max_hops: usize,
    pub model_seed: u64,
    pub relations: RelationParams,
    pub all_pairs_cap: usize,
    pub evolution: EvolutionConfig,
    pub train_fraction: f64,
    pub split_seed: u64,
    pub novel_fraction: f64,
    pub phase_size: usize,
    pub spam_ratio: f64,
    pub corpus_seed: u64,
    pub precision_ks: Vec<usize>,
    pub explain_top_features: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let h = Hyper::new(1);
        ExperimentConfig {
            vocab_cap: 2000,
            encoder_dim: DEFAULT_DIM,
            encoder_url: String::new(),
            hidden_dim: h.hidden_dim,
            attn_hidden: h.attn_hidden,
            layers: h.layers,
            top_k: h.top_k,
            tau: h.tau,
            beta: h.beta,
            gamma: h.gamma,
            dropout: h.dropout,
            pagerank_damping: h.pagerank_damping,
            max_hops: h.max_hops,
            model_seed: h.seed,
            relations: RelationParams::default(),
            all_pairs_cap: match CandidatePolicy::default() {
                CandidatePolicy::Auto { all_pairs_cap } => all_pairs_cap,
                _ => 0,
            },
            evolution: EvolutionConfig::default(),
            train_fraction: 0.8,
            split_seed: 0,
            novel_fraction: 0.1,
            phase_size: 1000,
            spam_ratio: 0.5,
            corpus_seed: 7,
            precision_ks: vec![10, 50, 100],
            explain_top_features: DEFAULT_TOP_FEATURES,
        }
    }
}

fn num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T, HarnessError> {
    v.parse()
        .map_err(|_| HarnessError::Config(format!("{key}: cannot parse {v:?}")))
}

fn list<T: std::str::FromStr>(key: &str, v: &str) -> Result<Vec<T>, HarnessError> {
    v.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| num(key, s))
        .collect()
}

impl ExperimentConfig {
    pub fn hyper(&self, input_dim: usize) -> Hyper {
        Hyper {
            input_dim,
            hidden_dim: self.hidden_dim,
            prompt_dim: self.encoder_dim,
            attn_hidden: self.attn_hidden,
            layers: self.layers,
            top_k: self.top_k,
            tau: self.tau,
            beta: self.beta,
            gamma: self.gamma,
            dropout: self.dropout,
            pagerank_damping: self.pagerank_damping,
            max_hops: self.max_hops,
            seed: self.model_seed,
            ..Hyper::new(input_dim)
        }
    }

    pub fn graph_options(&self) -> GraphOptions {
        GraphOptions {
            relations: self.relations.clone(),
            policy: CandidatePolicy::Auto {
                all_pairs_cap: self.all_pairs_cap,
            },
            ..GraphOptions::default()
        }
    }

    pub fn set(&mut self, key: &str, v: &str) -> Result<(), HarnessError> {
        let e = &mut self.evolution;
        let r = &mut self.relations;
        match key {
            "vocab_cap" => self.vocab_cap = num(key, v)?,
            "encoder_dim" => self.encoder_dim = num(key, v)?,
            "encoder_url" => self.encoder_url = v.to_string(),
            "hidden_dim" => self.hidden_dim = num(key, v)?,
            "attn_hidden" => self.attn_hidden = num(key, v)?,
            "layers" => self.layers = num(key, v)?,
            "top_k" => self.top_k = num(key, v)?,
            "tau" => self.tau = num(key, v)?,
            "beta" => self.beta = num(key, v)?,
            "gamma" => self.gamma = num(key, v)?,
            "dropout" => self.dropout = num(key, v)?,
            "pagerank_damping" => self.pagerank_damping = num(key, v)?,
            "max_hops" => self.max_hops = num(key, v)?,
            "model_seed" => self.model_seed = num(key, v)?,
            "w_domain" => r.w_domain = num(key, v)?,
            "w_temporal" => r.w_temporal = num(key, v)?,
            "w_semantic" => r.w_semantic = num(key, v)?,
            "w_sender" => r.w_sender = num(key, v)?,
            "sigma_t" => r.sigma_t = num(key, v)?,
            "epsilon_r" => r.epsilon_r = num(key, v)?,
            "all_pairs_cap" => self.all_pairs_cap = num(key, v)?,
            "epsilon" => e.epsilon = num(key, v)?,
            "direction" => {
                e.direction = match v {
                    "evade" => Direction::Evade,
                    "boost" => Direction::Boost,
                    _ => return Err(HarnessError::Config(format!("direction: expected evade or boost, got {v:?}"))),
                }
            }
            "rho_mut" => e.rho_mut = num(key, v)?,
            "mutation_ops" => {
                e.mutation_ops = v
                    .split(',')
                    .map(str::trim)
                    .filter(|s| !s.is_empty())
                    .map(|s| MutationOp::parse(s).ok_or_else(|| HarnessError::Config(format!("mutation_ops: unknown {s:?}"))))
                    .collect::<Result<_, _>>()?
            }
            "lambda_hybrid" => e.lambda_hybrid = num(key, v)?,
            "reward_novelty" => e.reward_novelty = num(key, v)?,
            "reward_evasion" => e.reward_evasion = num(key, v)?,
            "reward_complexity" => e.reward_complexity = num(key, v)?,
            "novelty_cap" => e.novelty_cap = num(key, v)?,
            "delta_fail" => e.delta_fail = num(key, v)?,
            "memory_capacity" => e.memory_capacity = num(key, v)?,
            "alpha_trace" => e.alpha_trace = num(key, v)?,
            "batch_size" => e.batch_size = num(key, v)?,
            "lambda" => e.lambda = num(key, v)?,
            "mu" => e.mu = num(key, v)?,
            "nu" => e.nu = num(key, v)?,
            "eta" => e.eta = num(key, v)?,
            "iterations" => e.iterations = num(key, v)?,
            "seed" => e.seed = num(key, v)?,
            "trace_max_depth" => e.trace_max_depth = num(key, v)?,
            "trace_min_confidence" => e.trace_min_confidence = num(key, v)?,
            "train_fraction" => self.train_fraction = num(key, v)?,
            "split_seed" => self.split_seed = num(key, v)?,
            "novel_fraction" => self.novel_fraction = num(key, v)?,
            "phase_size" => self.phase_size = num(key, v)?,
            "spam_ratio" => self.spam_ratio = num(key, v)?,
            "corpus_seed" => self.corpus_seed = num(key, v)?,
            "precision_ks" => self.precision_ks = list(key, v)?,
            "explain_top_features" => self.explain_top_features = num(key, v)?,
            _ => return Err(HarnessError::Config(format!("unknown key {key:?}"))),
        }
        Ok(())
    }

    pub fn parse(text: &str) -> Result<Self, HarnessError> {
        let mut cfg = ExperimentConfig::default();
        for (n, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| HarnessError::Config(format!("line {}: expected key = value", n + 1)))?;
            cfg.set(k.trim(), v.trim())?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &std::path::Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path).map_err(|e| HarnessError::Io(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        self.evolution.validate()?;
        self.hyper(1).validate()?;
        self.relations.validate()?;
        let bad = |m: &str| Err(HarnessError::Config(m.to_string()));
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return bad("train_fraction must lie in (0, 1)");
        }
        if !(self.spam_ratio > 0.0 && self.spam_ratio < 1.0) {
            return bad("spam_ratio must lie in (0, 1)");
        }
        if !(0.0..=1.0).contains(&self.novel_fraction) {
            return bad("novel_fraction must lie in [0, 1]");
        }
        if self.vocab_cap == 0 {
            return bad("vocab_cap must be positive");
        }
        Ok(())
    }

    /// Every key with its current value, parseable by [`ExperimentConfig::parse`].
    pub fn to_text(&self) -> String {
        let e = &self.evolution;
        let r = &self.relations;
        let ops: Vec<&str> = e.mutation_ops.iter().map(|o| o.as_str()).collect();
        let ks: Vec<String> = self.precision_ks.iter().map(|k| k.to_string()).collect();
        let direction = match e.direction {
            Direction::Evade => "evade",
            Direction::Boost => "boost",
        };
        let pairs: Vec<(&str, String)> = vec![
            ("vocab_cap", self.vocab_cap.to_string()),
            ("encoder_dim", self.encoder_dim.to_string()),
            ("encoder_url", self.encoder_url.clone()),
            ("hidden_dim", self.hidden_dim.to_string()),
            ("attn_hidden", self.attn_hidden.to_string()),
            ("layers", self.layers.to_string()),
            ("top_k", self.top_k.to_string()),
            ("tau", self.tau.to_string()),
            ("beta", self.beta.to_string()),
            ("gamma", self.gamma.to_string()),
            ("dropout", self.dropout.to_string()),
            ("pagerank_damping", self.pagerank_damping.to_string()),
            ("max_hops", self.max_hops.to_string()),
            ("model_seed", self.model_seed.to_string()),
            ("w_domain", r.w_domain.to_string()),
            ("w_temporal", r.w_temporal.to_string()),
            ("w_semantic", r.w_semantic.to_string()),
            ("w_sender", r.w_sender.to_string()),
            ("sigma_t", r.sigma_t.to_string()),
            ("epsilon_r", r.epsilon_r.to_string()),
            ("all_pairs_cap", self.all_pairs_cap.to_string()),
            ("epsilon", e.epsilon.to_string()),
            ("direction", direction.to_string()),
            ("rho_mut", e.rho_mut.to_string()),
            ("mutation_ops", ops.join(",")),
            ("lambda_hybrid", e.lambda_hybrid.to_string()),
            ("reward_novelty", e.reward_novelty.to_string()),
            ("reward_evasion", e.reward_evasion.to_string()),
            ("reward_complexity", e.reward_complexity.to_string()),
            ("novelty_cap", e.novelty_cap.to_string()),
            ("delta_fail", e.delta_fail.to_string()),
            ("memory_capacity", e.memory_capacity.to_string()),
            ("alpha_trace", e.alpha_trace.to_string()),
            ("batch_size", e.batch_size.to_string()),
            ("lambda", e.lambda.to_string()),
            ("mu", e.mu.to_string()),
            ("nu", e.nu.to_string()),
            ("eta", e.eta.to_string()),
            ("iterations", e.iterations.to_string()),
            ("seed", e.seed.to_string()),
            ("trace_max_depth", e.trace_max_depth.to_string()),
            ("trace_min_confidence", e.trace_min_confidence.to_string()),
            ("train_fraction", self.train_fraction.to_string()),
            ("split_seed", self.split_seed.to_string()),
            ("novel_fraction", self.novel_fraction.to_string()),
            ("phase_size", self.phase_size.to_string()),
            ("spam_ratio", self.spam_ratio.to_string()),
            ("corpus_seed", self.corpus_seed.to_string()),
            ("precision_ks", ks.join(",")),
            ("explain_top_features", self.explain_top_features.to_string()),
        ];
        let mut out = String::new();
        for (k, v) in pairs {
            let _ = writeln!(out, "{k} = {v}");
        }
        out
    }
}
