//! The `eval` scenarios as report builders.

use super::config::ExperimentConfig;
use super::experiments::{run_cross_modal, run_shift, run_static, Modality};
use super::report::{Report, ReportRecord};
use super::synthetic::{generate_phase_corpus, Phase, PhaseSpec, SyntheticEmail};
use super::HarnessError;
use crate::ingest::EmailDocument;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scenario {
    Static,
    Shift,
    Crossmodal,
}

impl Scenario {
    pub fn as_str(self) -> &'static str {
        match self {
            Scenario::Static => "static",
            Scenario::Shift => "shift",
            Scenario::Crossmodal => "crossmodal",
        }
    }
}

/// Phase corpus at the configured size, ratio and corpus seed.
pub fn synthetic_phase(phase: Phase, cfg: &ExperimentConfig) -> Vec<SyntheticEmail> {
    generate_phase_corpus(&PhaseSpec {
        phase,
        n_emails: cfg.phase_size,
        spam_ratio: cfg.spam_ratio,
        seed: cfg.corpus_seed,
    })
}

/// Runs a scenario and collects its report. `corpus` replaces the synthetic
/// P1 corpus for the static and cross-modal scenarios; shift always uses
/// the three synthetic phases.
pub fn eval_report(
    scenario: Scenario,
    cfg: &ExperimentConfig,
    corpus: Option<Vec<EmailDocument>>,
) -> Result<Report, HarnessError> {
    cfg.validate()?;
    let mut rep = Report::default();
    rep.push(ReportRecord::Config { text: cfg.to_text() });
    let docs = || corpus.clone().unwrap_or_else(|| synthetic_phase(Phase::P1, cfg).into_iter().map(|e| e.doc).collect());
    match scenario {
        Scenario::Static => {
            let out = run_static(&docs(), cfg)?;
            rep.push(ReportRecord::Metrics {
                scenario: "static".into(),
                label: "full_graph".into(),
                metrics: out.metrics,
            });
            for r in out.history {
                rep.push(ReportRecord::Iteration {
                    scenario: "static".into(),
                    label: "full_graph".into(),
                    record: r,
                });
            }
        }
        Scenario::Crossmodal => {
            let docs = docs();
            for m in Modality::ALL {
                let out = run_cross_modal(&docs, cfg, m)?;
                rep.push(ReportRecord::Metrics {
                    scenario: "crossmodal".into(),
                    label: m.as_str().into(),
                    metrics: out.metrics,
                });
            }
        }
        Scenario::Shift => {
            let phases: Vec<_> = [Phase::P1, Phase::P2, Phase::P3]
                .into_iter()
                .map(|p| (p.as_str().to_string(), synthetic_phase(p, cfg)))
                .collect();
            let mut off = cfg.clone();
            off.evolution.memory_capacity = 0;
            for (label, c) in [("memory", cfg), ("no_memory", &off)] {
                let r = run_shift(&phases, c)?;
                for p in &r.phases {
                    rep.push(ReportRecord::Phase {
                        label: label.into(),
                        phase: p.phase.clone(),
                        auc: p.auc,
                        f1: p.f1,
                        novel_f1: p.novel_f1,
                        memory_size: p.memory_size,
                    });
                }
                rep.push(ReportRecord::Delta {
                    label: label.into(),
                    delta: r.delta,
                });
            }
            rep.push(ReportRecord::Note {
                text: "novel templates are held out of every update; novel_f1 covers them plus test ham".into(),
            });
        }
    }
    Ok(rep)
}
