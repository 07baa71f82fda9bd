use evomail::coggnn::{
    attention_logit, attention_prior, init_embedding, normalize_attention, propagate_node, salience,
    structural_features, BackwardOptions, Evaluator, Mode, ParamGroup, Variant,
};
use evomail::encoder::SemanticEncoder;
use evomail::graph::RelationKind;
use evomail::linalg::SparseVec;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

mod common;

use common::*;

fn check_param_gradients(mode: Mode) {
    let graph = fixture(&fixture_features(3));
    let enc = SemanticEncoder::hashed(16);
    let ev = Evaluator::new(&graph, &enc, 0.85, 4);
    let mut model = random_model(small_hyper(8, 0.3), 11);
    let trace = ev.forward(&model, mode, &[]).unwrap();
    let seeds: Vec<(usize, f64)> = (0..4).map(|v| (v, COEFFS[v])).collect();
    let grads = ev.backward(&model, &trace, &seeds, &BackwardOptions::full()).unwrap();

    let step = 1e-4;
    let groups: Vec<_> = model.layout().groups().collect();
    for (group, range) in groups {
        let mut fd = Vec::with_capacity(range.len());
        for i in range.clone() {
            let orig = model.params[i];
            model.params[i] = orig + step;
            let up = loss(&ev, &model, mode);
            model.params[i] = orig - step;
            let down = loss(&ev, &model, mode);
            model.params[i] = orig;
            fd.push((up - down) / (2.0 * step));
        }
        let an = &grads.params[range];
        let err = rel_err(an, &fd);
        assert!(err < 1e-3, "{mode:?} {}: relative error {err:e}", group.name());
        if group == ParamGroup::Salience {
            assert!(an.iter().all(|&g| g == 0.0));
            assert!(fd.iter().all(|g| g.abs() < 1e-9));
        }
    }
}

#[test]
fn parameter_gradients_match_central_differences_eval() {
    check_param_gradients(Mode::Eval);
}

#[test]
fn parameter_gradients_match_central_differences_train() {
    check_param_gradients(Mode::Train { dropout_seed: 42 });
}

#[test]
fn input_gradient_of_real_node_matches_finite_differences() {
    let feats = fixture_features(5);
    let enc = SemanticEncoder::hashed(16);
    let model = random_model(small_hyper(8, 0.0), 17);
    let graph = fixture(&feats);
    let ev = Evaluator::new(&graph, &enc, 0.85, 4);
    let trace = ev.forward(&model, Mode::Eval, &[]).unwrap();
    let seeds: Vec<(usize, f64)> = (0..4).map(|v| (v, COEFFS[v])).collect();
    for target in [0usize, 2, 4] {
        let opts = BackwardOptions {
            params: false,
            inputs: vec![target],
            through_neighbors: true,
        };
        let g = ev.backward(&model, &trace, &seeds, &opts).unwrap();
        let an = &g.inputs[&target];
        let step = 1e-5;
        let fd: Vec<f64> = (0..DIM)
            .map(|i| {
                let mut f = feats.clone();
                f[target][i] += step;
                let gu = fixture(&f);
                let up = loss(&Evaluator::new(&gu, &enc, 0.85, 4), &model, Mode::Eval);
                f[target][i] -= 2.0 * step;
                let gd = fixture(&f);
                let down = loss(&Evaluator::new(&gd, &enc, 0.85, 4), &model, Mode::Eval);
                (up - down) / (2.0 * step)
            })
            .collect();
        let err = rel_err(an, &fd);
        assert!(err < 1e-3, "node {target}: relative error {err:e}");
    }
}

#[test]
fn variant_gradient_is_exact_and_leaves_real_scores_alone() {
    let feats = fixture_features(9);
    let graph = fixture(&feats);
    let enc = SemanticEncoder::hashed(16);
    let ev = Evaluator::new(&graph, &enc, 0.85, 4);
    let model = random_model(small_hyper(8, 0.0), 23);
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let x: Vec<f64> = (0..DIM).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let plain = ev.forward(&model, Mode::Eval, &[]).unwrap();
    for anchor in [Some(0), Some(3), None] {
        let variant = |x: &[f64]| Variant {
            anchor,
            features: SparseVec::from_dense(x),
            desc: "click the link to verify".into(),
        };
        let t = ev.forward(&model, Mode::Eval, &[variant(&x)]).unwrap();
        for v in 0..4 {
            assert_eq!(t.node(v).logit, plain.node(v).logit);
        }
        let vi = t.variant_index(0);
        let opts = BackwardOptions {
            params: false,
            inputs: vec![vi],
            through_neighbors: false,
        };
        let g = ev.backward(&model, &t, &[(vi, 1.0)], &opts).unwrap();
        let step = 1e-5;
        let fd: Vec<f64> = (0..DIM)
            .map(|i| {
                let mut xp = x.clone();
                xp[i] += step;
                let up = ev.forward(&model, Mode::Eval, &[variant(&xp)]).unwrap().node(vi).logit.unwrap();
                xp[i] -= 2.0 * step;
                let down = ev.forward(&model, Mode::Eval, &[variant(&xp)]).unwrap().node(vi).logit.unwrap();
                (up - down) / (2.0 * step)
            })
            .collect();
        let err = rel_err(&g.inputs[&vi], &fd);
        assert!(err < 1e-3, "anchor {anchor:?}: relative error {err:e}");
    }
}

/// Re-derives every email score node by node from the public building blocks.
#[test]
fn forward_matches_independent_recomputation() {
    let graph = fixture(&fixture_features(13));
    let enc = SemanticEncoder::hashed(16);
    let ev = Evaluator::new(&graph, &enc, 0.85, 4);
    for top_k in [1usize, 2, 8] {
        let model = random_model(small_hyper(top_k, 0.0), 29 + top_k as u64);
        let n = graph.len();
        let h0: Vec<Vec<f64>> = (0..n).map(|v| init_embedding(&graph.node(v).features, &model)).collect();
        let mut chosen = Vec::new();
        for v in 0..n {
            let mut cands: Vec<(f64, usize)> = graph
                .neighbors(v)
                .iter()
                .map(|&(u, _)| (salience(&graph, ev.stats(), u, v, &h0[u], &h0[v], &model), u))
                .collect();
            cands.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
            let mut top: Vec<usize> = cands.into_iter().take(top_k).map(|(_, u)| u).collect();
            top.sort();
            chosen.push(top);
        }
        let mut h = vec![h0];
        for k in 0..2 {
            let mut next = Vec::with_capacity(n);
            for v in 0..n {
                let logits: Vec<f64> = chosen[v]
                    .iter()
                    .map(|&u| {
                        let e = graph.edge_between(u, v).unwrap();
                        let p = enc.encode_pair(graph.node(u), graph.node(v), e.relation, &model.hyper.task_context);
                        let (prior, _) = attention_prior(&p.unwrap(), &model);
                        let s = structural_features(&model, e.relation, graph.degree(u), graph.degree(v), 1);
                        attention_logit(prior, &s, &h[k][u], &h[k][v], &model)
                    })
                    .collect();
                let alpha = normalize_attention(&logits, model.hyper.tau);
                let msgs: Vec<(f64, &[f64], RelationKind)> = chosen[v]
                    .iter()
                    .zip(&alpha)
                    .map(|(&u, &a)| (a, &h[k][u][..], graph.edge_between(u, v).unwrap().relation))
                    .collect();
                next.push(propagate_node(&model, k, &h[k][v], &msgs, None).1);
            }
            h.push(next);
        }
        let t = ev.forward(&model, Mode::Eval, &[]).unwrap();
        for v in 0..4 {
            let expected = evomail::coggnn::predict(&[&h[1][v], &h[2][v]], &model);
            let got = t.score(v).unwrap();
            assert!((expected - got).abs() < 1e-12, "K={top_k} node {v}: {expected} vs {got}");
            let ids: Vec<usize> = t.node(v).neighbors.iter().map(|nb| nb.node).collect();
            assert_eq!(ids, chosen[v]);
        }
    }
}

#[test]
fn attention_rows_are_distributions_over_selected_neighbors() {
    let enc = SemanticEncoder::hashed(16);
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for trial in 0..1000 {
        let graph = random_graph(&mut rng);
        let ev = Evaluator::new(&graph, &enc, 0.85, 4);
        let top_k = rng.gen_range(1..5);
        let mut hyper = small_hyper(top_k, 0.0);
        hyper.tau = rng.gen_range(0.2..3.0);
        let model = random_model(hyper, trial);
        let t = ev.forward(&model, Mode::Eval, &[]).unwrap();
        for v in 0..graph.len() {
            let node = t.node(v);
            assert_eq!(node.neighbors.len(), graph.degree(v).min(top_k));
            for k in 1..=2 {
                let row = t.attention_row(v, k);
                if row.is_empty() {
                    continue;
                }
                let sum: f64 = row.iter().map(|(_, a)| a).sum();
                assert!((sum - 1.0).abs() < 1e-12, "trial {trial} node {v}: sum {sum}");
                assert!(row.iter().all(|&(u, a)| a >= 0.0 && graph.edge_between(u, v).is_some()));
            }
            if v < graph.num_emails() {
                let s = node.score.unwrap();
                assert!(s > 0.0 && s < 1.0);
            }
        }
    }
}
