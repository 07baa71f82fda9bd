use evomail::evolution::ExperienceMemory;
use evomail::harness::experiments::{split_indices, Pipeline};
use evomail::harness::synthetic::synthetic_reputation;
use evomail::harness::{generate_phase_corpus, ExperimentConfig, Modality, Phase, PhaseSpec};

/// With no red team, no memory and no dropout every iteration sees the same
/// objective, so a small step must not raise it.
fn losses(eta: f64, iterations: usize, seed: u64) -> Vec<f64> {
    let docs: Vec<_> = generate_phase_corpus(&PhaseSpec {
        phase: Phase::P1,
        n_emails: 200,
        spam_ratio: 0.5,
        seed,
    })
    .into_iter()
    .map(|e| e.doc)
    .collect();
    let mut cfg = ExperimentConfig::default();
    cfg.dropout = 0.0;
    cfg.model_seed = seed;
    cfg.evolution.batch_size = 0;
    cfg.evolution.memory_capacity = 0;
    cfg.evolution.eta = eta;
    cfg.evolution.iterations = iterations;
    let (train, test) = split_indices(docs.len(), 0.8, seed);
    let pipe = Pipeline::fit(docs, &train, synthetic_reputation(), Modality::FullGraph, &cfg).unwrap();
    let model = pipe.initial_model(&cfg).unwrap();
    let out = pipe.train(&train, &test, model, ExperienceMemory::new(0), &cfg.evolution).unwrap();
    out.history.iter().map(|r| r.loss.total).collect()
}

#[test]
fn small_steps_do_not_increase_the_objective() {
    for seed in [1, 2, 3] {
        let l = losses(1e-4, 4, seed);
        for w in l.windows(2) {
            assert!(w[1] <= w[0], "seed {seed}: {l:?}");
        }
    }
}

#[test]
fn zero_rate_leaves_the_objective_unchanged() {
    let l = losses(0.0, 3, 5);
    assert!(l.iter().all(|&x| x == l[0]), "{l:?}");
}
