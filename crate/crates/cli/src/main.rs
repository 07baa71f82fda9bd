use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use evomail::evolution::ExperienceMemory;
use evomail::harness::experiments::{detect, explain_email, Pipeline};
use evomail::harness::synthetic::synthetic_reputation;
use evomail::harness::{
    eval_report, generate_phase_corpus, load_inputs, load_state, read_corpus, save_state, split_indices, write_corpus,
    ExperimentConfig, Modality, Phase, PhaseSpec, Report, ReportRecord, SavedState, Scenario,
};
use evomail::ingest::{write_feature_records, FeatureRecord, Featurizer, Label, ReputationTable};
use tracing::info;

#[derive(Parser)]
#[command(name = "evomail", version, about = "Graph-based spam and phishing detection with red/blue self-evolution")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum ScenarioArg {
    Static,
    Shift,
    Crossmodal,
}

#[derive(Subcommand)]
enum Command {
    /// Parse EML/mbox files and write feature records.
    Ingest {
        paths: Vec<PathBuf>,
        #[arg(long, default_value_t = 2000)]
        vocab_cap: usize,
        #[arg(long)]
        out: PathBuf,
        /// Label attached to every parsed message.
        #[arg(long)]
        label: Option<String>,
        /// Also write the parsed documents as a corpus file.
        #[arg(long)]
        corpus_out: Option<PathBuf>,
        /// Domain reputation file (`domain reputation age_days` per line).
        #[arg(long)]
        reputation: Option<PathBuf>,
    },
    /// Write a labeled synthetic corpus for one phase.
    GenSynthetic {
        #[arg(long)]
        phase: String,
        #[arg(long, default_value_t = 1000)]
        n: usize,
        #[arg(long, default_value_t = 0.5)]
        ratio: f64,
        #[arg(long, default_value_t = 7)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a fresh model on a labeled corpus.
    Train {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out_model: PathBuf,
        #[arg(long)]
        reputation: Option<PathBuf>,
    },
    /// Continue self-evolution from a saved model (or from scratch).
    Evolve {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        iters: usize,
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long)]
        out_model: Option<PathBuf>,
        #[arg(long)]
        reputation: Option<PathBuf>,
    },
    /// Score messages with a saved model.
    Detect {
        #[arg(long)]
        model: PathBuf,
        #[arg(long, required = true, num_args = 1..)]
        input: Vec<PathBuf>,
        #[arg(long)]
        report: Option<PathBuf>,
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Evidence path and feature attributions for one message.
    Explain {
        #[arg(long)]
        model: PathBuf,
        #[arg(long, required = true, num_args = 1..)]
        input: Vec<PathBuf>,
        #[arg(long)]
        email_id: String,
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Run an evaluation scenario and print its tables.
    Eval {
        #[arg(long, value_enum)]
        scenario: ScenarioArg,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Labeled corpus for static/crossmodal; synthetic P1 otherwise.
        #[arg(long)]
        corpus: Option<PathBuf>,
        #[arg(long)]
        report: Option<PathBuf>,
    },
}

fn config(path: Option<&Path>) -> Result<ExperimentConfig> {
    Ok(match path {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    })
}

fn reputation(path: Option<&Path>) -> Result<ReputationTable> {
    Ok(match path {
        Some(p) => ReputationTable::load(p)?,
        None => synthetic_reputation(),
    })
}

fn parse_label(s: &str) -> Result<Label> {
    match s {
        "spam" => Ok(Label::Spam),
        "ham" => Ok(Label::Ham),
        _ => bail!("label must be spam or ham, got {s:?}"),
    }
}

fn labeled_corpus(path: &Path) -> Result<Vec<evomail::EmailDocument>> {
    let docs = read_corpus(path).with_context(|| format!("reading corpus {}", path.display()))?;
    if docs.is_empty() || docs.iter().any(|d| d.label.is_none()) {
        bail!("{}: every document needs a label", path.display());
    }
    Ok(docs)
}

fn history_report(label: &str, history: &[evomail::evolution::IterationRecord]) -> Report {
    let mut r = Report::default();
    for rec in history {
        r.push(ReportRecord::Iteration {
            scenario: "train".into(),
            label: label.into(),
            record: rec.clone(),
        });
    }
    r
}

fn evolve(
    corpus: &Path,
    cfg: &ExperimentConfig,
    iters: usize,
    start: Option<SavedState>,
    rep: ReputationTable,
) -> Result<(SavedState, Report)> {
    let docs = labeled_corpus(corpus)?;
    let (train, holdout) = split_indices(docs.len(), cfg.train_fraction, cfg.split_seed);
    let (pipe, model, memory) = match start {
        Some(s) => {
            let f = s.featurizer.context("saved state carries no featurizer")?;
            let pipe = Pipeline::new(docs, f, Modality::FullGraph, cfg)?;
            (pipe, s.model, s.memory)
        }
        None => {
            let pipe = Pipeline::fit(docs, &train, rep, Modality::FullGraph, cfg)?;
            let model = pipe.initial_model(cfg)?;
            (pipe, model, ExperienceMemory::new(cfg.evolution.memory_capacity))
        }
    };
    let mut evo = cfg.evolution.clone();
    evo.iterations = iters;
    let t0 = Instant::now();
    let out = pipe.train(&train, &holdout, model, memory, &evo)?;
    info!(seconds = t0.elapsed().as_secs_f64(), iterations = iters, "training finished");
    let report = history_report("evolve", &out.history);
    let state = SavedState {
        model: out.model,
        memory: out.memory,
        featurizer: Some(pipe.featurizer),
    };
    Ok((state, report))
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Ingest {
            paths,
            vocab_cap,
            out,
            label,
            corpus_out,
            reputation: rep,
        } => {
            let (mut docs, failures) = load_inputs(&paths)?;
            for (name, e) in &failures {
                eprintln!("skipped {name}: {e}");
            }
            if let Some(l) = label.as_deref() {
                let l = parse_label(l)?;
                for d in &mut docs {
                    d.label = Some(l);
                }
            }
            let featurizer = Featurizer::fit(&docs, vocab_cap, reputation(rep.as_deref())?)?;
            let records: Vec<FeatureRecord> = docs
                .iter()
                .map(|d| FeatureRecord {
                    document: d.clone(),
                    features: featurizer.featurize(d),
                })
                .collect();
            write_feature_records(&out, &records)?;
            if let Some(c) = corpus_out {
                write_corpus(&c, &docs)?;
            }
            println!(
                "ingested {} messages ({} skipped), feature dim {}",
                docs.len(),
                failures.len(),
                featurizer.dim()
            );
        }
        Command::GenSynthetic {
            phase,
            n,
            ratio,
            seed,
            out,
        } => {
            let phase = Phase::parse(&phase).context("phase must be p1, p2 or p3")?;
            if !(ratio > 0.0 && ratio < 1.0) {
                bail!("ratio must lie in (0, 1)");
            }
            let corpus = generate_phase_corpus(&PhaseSpec {
                phase,
                n_emails: n,
                spam_ratio: ratio,
                seed,
            });
            let docs: Vec<_> = corpus.into_iter().map(|e| e.doc).collect();
            write_corpus(&out, &docs)?;
            println!("wrote {} {} messages to {}", docs.len(), phase.as_str(), out.display());
        }
        Command::Train {
            corpus,
            config: c,
            out_model,
            reputation: rep,
        } => {
            let cfg = config(c.as_deref())?;
            let (state, report) = evolve(&corpus, &cfg, cfg.evolution.iterations, None, reputation(rep.as_deref())?)?;
            save_state(&state, &out_model)?;
            print!("{}", report.render_tables());
            println!("saved model and {} memory entries to {}", state.memory.len(), out_model.display());
        }
        Command::Evolve {
            corpus,
            config: c,
            iters,
            model,
            out_model,
            reputation: rep,
        } => {
            let cfg = config(c.as_deref())?;
            let start = model.as_deref().map(load_state).transpose()?;
            let (state, report) = evolve(&corpus, &cfg, iters, start, reputation(rep.as_deref())?)?;
            print!("{}", report.render_tables());
            if let Some(p) = out_model {
                save_state(&state, &p)?;
                println!("saved model and {} memory entries to {}", state.memory.len(), p.display());
            }
        }
        Command::Detect {
            model,
            input,
            report,
            config: c,
        } => {
            let cfg = config(c.as_deref())?;
            let state = load_state(&model)?;
            let (docs, failures) = load_inputs(&input)?;
            for (name, e) in &failures {
                eprintln!("skipped {name}: {e}");
            }
            let (pipe, scores) = detect(&state, docs, &cfg)?;
            let mut rep = Report::default();
            for (d, s) in pipe.docs.iter().zip(&scores) {
                let verdict = if *s >= 0.5 { "spam" } else { "ham" };
                println!("{}\t{s:.4}\t{verdict}", d.id);
                rep.push(ReportRecord::Note {
                    text: format!("detect id={} score={s} verdict={verdict}", d.id),
                });
            }
            let labeled: Vec<usize> = (0..pipe.docs.len()).filter(|&i| pipe.docs[i].label.is_some()).collect();
            if !labeled.is_empty() {
                let m = evomail::harness::classification_metrics(
                    &labeled.iter().map(|&i| scores[i]).collect::<Vec<_>>(),
                    &pipe.labels(&labeled),
                    0.5,
                    &cfg.precision_ks,
                )?;
                rep.push(ReportRecord::Metrics {
                    scenario: "detect".into(),
                    label: "labeled".into(),
                    metrics: m,
                });
                print!("{}", rep.render_tables().split("note:").next().unwrap_or_default());
            }
            if let Some(p) = report {
                rep.save(&p)?;
            }
        }
        Command::Explain {
            model,
            input,
            email_id,
            config: c,
        } => {
            let cfg = config(c.as_deref())?;
            let state = load_state(&model)?;
            let (docs, _) = load_inputs(&input)?;
            let (pipe, _) = detect(&state, docs, &cfg)?;
            print!("{}", explain_email(&pipe, &state.model, &email_id, &cfg)?);
        }
        Command::Eval {
            scenario,
            config: c,
            corpus,
            report,
        } => {
            let cfg = config(c.as_deref())?;
            let docs = corpus.as_deref().map(labeled_corpus).transpose()?;
            let scenario = match scenario {
                ScenarioArg::Static => Scenario::Static,
                ScenarioArg::Shift => Scenario::Shift,
                ScenarioArg::Crossmodal => Scenario::Crossmodal,
            };
            let rep = eval_report(scenario, &cfg, docs)?;
            print!("{}", rep.render_tables());
            if let Some(p) = report {
                rep.save(&p)?;
            }
        }
    }
    Ok(())
}

fn main() -> Result<()> {
    tracing_subscriber::fmt()
        .with_env_filter(tracing_subscriber::EnvFilter::from_default_env())
        .with_writer(std::io::stderr)
        .init();
    run(Cli::parse())
}
