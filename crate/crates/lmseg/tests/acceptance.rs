//! Acceptance gate: one test per criterion, each printing a single
//! PASS/FAIL line (run with `--nocapture` to see them on success).

mod common;

use std::collections::BTreeSet;
use std::panic::{catch_unwind, AssertUnwindSafe};

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use lmseg::cli::{score_policy_on_suite, SuiteStream};
use lmseg::corpus::{self, RawDocument, Variant};
use lmseg::endpoint::{self, CandidateKind, WordEvent};
use lmseg::fusion::{self, Policy, PolicyMode};
use lmseg::metrics::{f_beta, relative_gain};
use lmseg::tagger::{self, build_vocab, Hyperparams, TaggerModel};

fn criterion(n: usize, name: &str, f: impl FnOnce()) {
    let result = catch_unwind(AssertUnwindSafe(f));
    let verdict = if result.is_ok() { "PASS" } else { "FAIL" };
    println!("acceptance criterion {n} ({name}): {verdict}");
    if let Err(e) = result {
        std::panic::resume_unwind(e);
    }
}

// ---------------------------------------------------------------- 1

/// Published segmentation results: (P, R, F0.5) per policy per test set,
/// plus the relative-gain column and the headline mean v3 gain.
#[test]
fn metric_oracle() {
    criterion(1, "metric oracle", || {
        // (set, [v1 P,R,F], [v2 P,R,F,gain], [v3 P,R,F,gain])
        let rows: &[(&str, [f64; 3], [f64; 4], [f64; 4])] = &[
            ("scenario-a", [0.60, 0.81, 0.63], [0.70, 0.78, 0.71, 12.7], [0.71, 0.81, 0.73, 15.9]),
            ("scenario-b", [0.76, 0.81, 0.77], [0.79, 0.83, 0.80, 3.9], [0.82, 0.82, 0.82, 6.5]),
            ("scenario-c", [0.59, 0.74, 0.61], [0.63, 0.74, 0.65, 6.6], [0.64, 0.77, 0.66, 8.2]),
            ("scenario-d", [0.69, 0.77, 0.70], [0.73, 0.78, 0.74, 5.7], [0.75, 0.79, 0.76, 8.5]),
        ];
        let mut v3_gains = Vec::new();
        for (set, v1, v2, v3) in rows {
            let f1 = f_beta(v1[0], v1[1], 0.5);
            assert!((f1 - v1[2]).abs() <= 0.005, "{set} v1 F: {f1}");
            for (cells, label) in [(v2, "v2"), (v3, "v3")] {
                let f = f_beta(cells[0], cells[1], 0.5);
                assert!((f - cells[2]).abs() <= 0.005, "{set} {label} F: {f}");
                // The gain column is computed from the rounded F cells.
                let gain = relative_gain(cells[2], v1[2]).unwrap();
                assert!(
                    (gain - cells[3]).abs() <= 0.1,
                    "{set} {label} gain: {gain} vs {}",
                    cells[3]
                );
                if label == "v3" {
                    v3_gains.push(gain);
                }
            }
        }
        let mean = v3_gains.iter().sum::<f64>() / v3_gains.len() as f64;
        assert!((mean - 9.8).abs() <= 0.05, "mean v3 gain {mean}");
    });
}

// ---------------------------------------------------------------- 2

#[test]
fn data_factory_fidelity() {
    criterion(2, "data-factory fidelity", || {
        // Three-sentence script, repeated so every sentence has a successor
        // and the distinct example set is exactly the documented rows.
        let script = "How is the weather in Seattle? I’m new in town. \
                      Wake me up at noon tomorrow. ";
        let doc = RawDocument {
            doc_id: "script".into(),
            text: format!("{script}{script}"),
        };
        let (examples, _) = corpus::generate_examples(std::slice::from_ref(&doc), true);

        let rows = |variants: &[Variant]| -> BTreeSet<(String, String)> {
            examples
                .iter()
                .filter(|e| variants.contains(&e.variant))
                .map(|e| (e.input_string(), e.tag_string()))
                .collect()
        };

        let causal = rows(&[Variant::Full, Variant::Truncated]);
        let expected_causal: BTreeSet<(String, String)> = [
            ("how is the weather in seattle", "O O O O O eos"),
            ("how is the weather in", "O O O O O"),
            ("i'm new in town", "O O O eos"),
            ("i'm new in", "O O O"),
            ("wake me up at noon tomorrow", "O O O O O eos"),
            ("wake me up at noon", "O O O O O"),
        ]
        .iter()
        .map(|(a, b)| (a.to_string(), b.to_string()))
        .collect();
        assert_eq!(causal, expected_causal);

        let lookahead = rows(&[Variant::Lookahead]);
        let expected_lookahead: BTreeSet<(String, String)> = [
            ("how is the weather in seattle i'm", "O O O O O eos O"),
            ("i'm new in town wake", "O O O eos O"),
            ("wake me up at noon tomorrow how", "O O O O O eos O"),
        ]
        .iter()
        .map(|(a, b)| (a.to_string(), b.to_string()))
        .collect();
        assert_eq!(lookahead, expected_lookahead);
    });
}

// ---------------------------------------------------------------- 3

#[test]
fn tagger_numerics() {
    criterion(3, "tagger numerics", || {
        let examples = common::random_examples(3, 10, true);
        let vocab = build_vocab(&examples, 200, 1).unwrap();
        let hp = Hyperparams {
            embed_dim: 3,
            hidden_dim: 4,
            ..Default::default()
        };
        let model: TaggerModel<f64> = TaggerModel::new(vocab.clone(), hp.clone(), false, 7);

        // Analytic gradients vs central finite differences, 64-bit.
        let ids = vec![2usize, 3, 4, 5];
        let targets = vec![Some(0), Some(0), Some(0), Some(1)];
        let (_, grads) = tagger::train::loss_and_grads(&model, &ids, &targets);
        let eps = 1e-6;
        let mut checked = 0;
        let spots: &[(&dyn Fn(&mut TaggerModel<f64>) -> &mut f64, f64, &str)] = &[
            (&|m| &mut m.params.wz[(1, 2)], grads.wz[(1, 2)], "wz"),
            (&|m| &mut m.params.uz[(0, 3)], grads.uz[(0, 3)], "uz"),
            (&|m| &mut m.params.wr[(2, 0)], grads.wr[(2, 0)], "wr"),
            (&|m| &mut m.params.uc[(3, 1)], grads.uc[(3, 1)], "uc"),
            (&|m| &mut m.params.bz[1], grads.bz[1], "bz"),
            (&|m| &mut m.params.bc[2], grads.bc[2], "bc"),
            (&|m| &mut m.params.out_w[(1, 0)], grads.out_w[(1, 0)], "out_w"),
            (&|m| &mut m.params.out_b[0], grads.out_b[0], "out_b"),
            (&|m| &mut m.params.embedding[(3, 1)], grads.emb_rows[&3][1], "embedding"),
        ];
        for (access, analytic, name) in spots {
            let mut plus = model.clone();
            *access(&mut plus) += eps;
            let mut minus = model.clone();
            *access(&mut minus) -= eps;
            let (lp, _) = tagger::train::loss_and_grads(&plus, &ids, &targets);
            let (lm, _) = tagger::train::loss_and_grads(&minus, &ids, &targets);
            let numeric = (lp - lm) / (2.0 * eps);
            let denom = analytic.abs().max(numeric.abs()).max(1e-5);
            assert!(
                (analytic - numeric).abs() / denom < 1e-4,
                "{name}: analytic {analytic} vs numeric {numeric}"
            );
            checked += 1;
        }
        assert_eq!(checked, spots.len());

        // Softmax rows normalize within 1e-6.
        let probe: Vec<String> = ["wake", "me", "up", "at", "noon", "unknown-token"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        for dist in model.class_distributions(&probe) {
            assert!((dist[0] + dist[1] - 1.0).abs() < 1e-6, "softmax sum {dist:?}");
            assert!(dist.iter().all(|p| (0.0..=1.0).contains(p)));
        }

        // Streaming == batch, both with and without look-ahead.
        for lookahead in [false, true] {
            let m: TaggerModel<f64> = TaggerModel::new(vocab.clone(), hp.clone(), lookahead, 7);
            let streamed = m.predict_sequence(&probe);
            let streamed2 = m.predict_sequence(&probe);
            assert_eq!(streamed, streamed2);
            let mut state = m.begin_stream();
            let mut incremental = Vec::new();
            for t in &probe {
                incremental.extend(m.consume(&mut state, t).unwrap());
            }
            incremental.extend(m.flush(&mut state).unwrap());
            assert_eq!(streamed, incremental);
            assert_eq!(incremental.len(), probe.len());
        }

        // Save/load round-trip is bit-exact at f32.
        let m32 = model.to_f32();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.lmeos");
        m32.save(&path).unwrap();
        let loaded = TaggerModel::<f32>::load(&path).unwrap();
        assert_eq!(m32, loaded);
    });
}

// ---------------------------------------------------------------- 4

#[test]
fn overfit_sanity() {
    criterion(4, "overfit sanity", || {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let docs = common::unambiguous_documents(&mut rng, 50);
        let (examples, _) = corpus::generate_examples(&docs, false);
        assert!(examples.len() >= 50);
        let vocab = build_vocab(&examples, 500, 1).unwrap();
        let hp = Hyperparams {
            embed_dim: 16,
            hidden_dim: 32,
            // Overfitting is the point here: let patience cover the full run
            // so early stopping cannot cut training short.
            patience: 200,
            ..Default::default()
        };
        let (model, log) = tagger::train::<f64>(&examples, &vocab, &hp, false, 42).unwrap();
        assert!(log.epochs.len() <= 200);
        let stats = tagger::evaluate(&model, &examples);
        assert!(
            stats.tag_accuracy >= 0.99,
            "tag accuracy {} after {} epochs",
            stats.tag_accuracy,
            log.epochs.len()
        );
        // Deterministic per seed.
        let (again, _) = tagger::train::<f64>(&examples, &vocab, &hp, false, 42).unwrap();
        assert_eq!(model, again);
    });
}

// ---------------------------------------------------------------- 5

#[test]
fn fusion_laws() {
    criterion(5, "fusion laws", || {
        let examples = common::random_examples(5, 20, true);
        let vocab = build_vocab(&examples, 200, 1).unwrap();
        let hp = Hyperparams {
            embed_dim: 4,
            hidden_dim: 6,
            ..Default::default()
        };
        // The laws are structural, so untrained models suffice.
        let m2: TaggerModel<f32> = TaggerModel::new(vocab.clone(), hp.clone(), false, 13);
        let m3: TaggerModel<f32> = TaggerModel::new(vocab, hp, true, 13);
        let taus = [0.0, 0.25, 0.5, 0.75, 1.0];

        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for _ in 0..1000 {
            let stream = common::random_stream(&mut rng);
            let policy_for = |mode: PolicyMode, tau: f64| Policy {
                mode,
                silence_threshold_ms: 500,
                hard_timeout_ms: 2000,
                lm_threshold: tau,
                lookahead_wait_ms: None,
            };
            let check_partition = |segments: &[fusion::Segment]| {
                let flat: Vec<&WordEvent> =
                    segments.iter().flat_map(|s| s.tokens.iter()).collect();
                assert_eq!(flat.len(), stream.len(), "partition: token count");
                for (a, b) in flat.iter().zip(&stream) {
                    assert_eq!(**a, *b, "partition: token identity");
                }
                let bounds = fusion::boundary_indices(segments);
                assert!(bounds.windows(2).all(|w| w[0] < w[1]));
                // The final segment always closes the stream; its boundary
                // is excluded from `boundary_indices`.
                assert_eq!(
                    segments.last().unwrap().boundary_index,
                    stream.len() - 1
                );
                for s in segments {
                    assert!(s.decision_latency_ms <= 2000, "latency {s:?}");
                }
            };

            let (v1_segments, _) =
                fusion::segment::<f32>(&stream, &policy_for(PolicyMode::V1, 0.5), None).unwrap();
            check_partition(&v1_segments);
            let v1_bounds: BTreeSet<usize> =
                fusion::boundary_indices(&v1_segments).into_iter().collect();

            for (mode, model) in [(PolicyMode::V2, &m2), (PolicyMode::V3, &m3)] {
                let mut previous: Option<BTreeSet<usize>> = None;
                for tau in taus {
                    let (segments, _) =
                        fusion::segment(&stream, &policy_for(mode, tau), Some(model)).unwrap();
                    check_partition(&segments);
                    let bounds: BTreeSet<usize> =
                        fusion::boundary_indices(&segments).into_iter().collect();
                    // Gated boundaries are a subset of the acoustic ones.
                    assert!(bounds.is_subset(&v1_bounds), "{mode:?} tau {tau}");
                    // Boundary sets shrink (weakly) as tau rises.
                    if let Some(prev) = &previous {
                        assert!(bounds.is_subset(prev), "antitone at tau {tau}");
                    }
                    // At tau = 0 the gate accepts everything.
                    if tau == 0.0 {
                        assert_eq!(bounds, v1_bounds, "{mode:?} tau 0 == v1");
                    }
                    previous = Some(bounds);
                }
            }
        }
    });
}

// ---------------------------------------------------------------- 6

#[test]
fn directional_benchmark() {
    criterion(6, "directional benchmark", || {
        let hp = Hyperparams {
            embed_dim: 16,
            hidden_dim: 32,
            ..Default::default()
        };
        let train_model = |lookahead: bool| -> TaggerModel<f32> {
            let examples = common::random_examples(11, 400, lookahead);
            let vocab = build_vocab(&examples, 500, 1).unwrap();
            let (model, _) = tagger::train(&examples, &vocab, &hp, lookahead, 1).unwrap();
            model
        };
        let m2 = train_model(false);
        let m3 = train_model(true);

        // Held-out streams: a different seed than the training corpus.
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let suite: Vec<SuiteStream> = (0..200)
            .map(|_| {
                let n = rng.gen_range(3..=6usize);
                let s = common::bench_stream(&mut rng, n);
                SuiteStream {
                    words: s.words,
                    boundaries: s.boundaries,
                }
            })
            .collect();

        let policy = |mode| Policy {
            mode,
            silence_threshold_ms: 500,
            hard_timeout_ms: 2000,
            lm_threshold: 0.5,
            lookahead_wait_ms: None,
        };
        let (_, _, f1) = score_policy_on_suite(&suite, &policy(PolicyMode::V1), None).unwrap();
        let (_, _, f2) =
            score_policy_on_suite(&suite, &policy(PolicyMode::V2), Some(&m2)).unwrap();
        let (_, _, f3) =
            score_policy_on_suite(&suite, &policy(PolicyMode::V3), Some(&m3)).unwrap();
        println!("benchmark F0.5: v1 {f1:.3}  v2 {f2:.3}  v3 {f3:.3}");
        assert!(f2 >= f1 + 0.02, "v2 {f2:.3} vs v1 {f1:.3}");
        assert!(f3 >= f2, "v3 {f3:.3} vs v2 {f2:.3}");
    });
}

// ---------------------------------------------------------------- 7

#[test]
fn endpoint_oracle() {
    criterion(7, "endpoint oracle", || {
        let mut rng = ChaCha8Rng::seed_from_u64(123);
        for _ in 0..1000 {
            let stream = common::random_stream(&mut rng);
            let silence = rng.gen_range(100..=1500u64);
            let hard = silence + rng.gen_range(0..=2000u64);
            let got = endpoint::detect_candidates(&stream, silence, hard).unwrap();

            // Independent brute-force scan over the gaps.
            let mut want = Vec::new();
            for i in 0..stream.len() {
                let gap = if i + 1 < stream.len() {
                    stream[i + 1].start_ms - stream[i].end_ms
                } else {
                    u64::MAX
                };
                if i + 1 < stream.len() {
                    if gap >= silence {
                        want.push((i, CandidateKind::Timeout));
                    }
                    if gap >= hard {
                        want.push((i, CandidateKind::HardTimeout));
                    }
                } else {
                    want.push((i, CandidateKind::StreamEnd));
                }
            }
            let got_keys: Vec<(usize, CandidateKind)> =
                got.iter().map(|c| (c.after_token_index, c.kind)).collect();
            assert_eq!(got_keys, want);

            // Monotonicity: a higher threshold never adds timeout candidates.
            let higher = endpoint::detect_candidates(&stream, silence + 200, hard + 200).unwrap();
            let timeouts = |cs: &[endpoint::EndpointCandidate]| -> BTreeSet<usize> {
                cs.iter()
                    .filter(|c| c.kind == CandidateKind::Timeout)
                    .map(|c| c.after_token_index)
                    .collect()
            };
            assert!(timeouts(&higher).is_subset(&timeouts(&got)));
        }
    });
}
