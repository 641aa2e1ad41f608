mod common;

use common::*;
use qexp_core::encoder::Dropout;
use qexp_core::seq2seq::{ModelConfig, Seq2Seq, TrainConfig};
use qexp_core::tensor::{log_softmax, Matrix, SeededRng, Tape};
use qexp_core::text::{EmbeddingTable, Vocabulary, EOS};
use qexp_core::Error;

#[test]
fn full_model_gradient_check() {
    for seed in [11, 17, 18] {
        let report = qexp_core::seq2seq::full_model_gradient_check(8, 24, seed).unwrap();
        assert!(report.max_rel_error < 1e-4, "seed {seed}: {report:?}");
        let expected = qexp_core::seq2seq::check_model(8, 24, seed).unwrap().store.num_scalars();
        assert_eq!(report.checked, expected);
    }
}

#[test]
fn attention_singleton_and_uniform() {
    let model = tiny_model(3);
    let mut tape = Tape::new(&model.store);
    let (ctx, state) = model.start(&mut tape, &[7], None).unwrap();
    let s = state.layers[1].0;
    let (alpha, c) = model.attend(&mut tape, &ctx, s).unwrap();
    assert_eq!(tape.value(alpha).data(), &[1.0]);
    assert_eq!(tape.value(c).data(), tape.value(ctx.annotations).data());

    // Identical annotations at every step: columns of one repeated vector.
    let col: Vec<f64> = (0..16).map(|i| (i as f64 * 0.37).sin()).collect();
    let mut ann = Matrix::zeros(16, 4);
    for r in 0..16 {
        for t in 0..4 {
            ann[(r, t)] = col[r];
        }
    }
    let mut tape = Tape::new(&model.store);
    let a = tape.input(ann);
    let w_h = tape.param(model.attention.w_h);
    let projected = tape.matmul(w_h, a).unwrap();
    let ctx = qexp_core::seq2seq::AttentionContext { annotations: a, projected };
    let s = tape.input(Matrix::column(vec![0.3; 8]));
    let (alpha, _) = model.attend(&mut tape, &ctx, s).unwrap();
    for &w in tape.value(alpha).data() {
        assert!((w - 0.25).abs() < 1e-15);
    }
}

#[test]
fn attention_matches_naive_loops() {
    let model = tiny_model(5);
    let mut rng = SeededRng::new(6);
    let (t_len, width, a_dim) = (4, 16, 8);
    let ann: Vec<Vec<f64>> = (0..t_len).map(|_| (0..width).map(|_| rng.uniform(-1.0, 1.0)).collect()).collect();
    let s: Vec<f64> = (0..8).map(|_| rng.uniform(-1.0, 1.0)).collect();

    let mut cols = Matrix::zeros(width, t_len);
    for t in 0..t_len {
        for d in 0..width {
            cols[(d, t)] = ann[t][d];
        }
    }
    let mut tape = Tape::new(&model.store);
    let a = tape.input(cols);
    let w_h = tape.param(model.attention.w_h);
    let projected = tape.matmul(w_h, a).unwrap();
    let ctx = qexp_core::seq2seq::AttentionContext { annotations: a, projected };
    let sn = tape.input(Matrix::column(s.clone()));
    let (alpha, c) = model.attend(&mut tape, &ctx, sn).unwrap();

    let ws = model.store.value(model.attention.w_s);
    let wh = model.store.value(model.attention.w_h);
    let v = model.store.value(model.attention.v);
    let mut e = vec![0.0; t_len];
    for t in 0..t_len {
        for k in 0..a_dim {
            let mut z = 0.0;
            for j in 0..8 {
                z += ws[(k, j)] * s[j];
            }
            for j in 0..width {
                z += wh[(k, j)] * ann[t][j];
            }
            e[t] += v[(0, k)] * z.tanh();
        }
    }
    let zsum: f64 = e.iter().map(|x| x.exp()).sum();
    let naive_alpha: Vec<f64> = e.iter().map(|x| x.exp() / zsum).collect();
    for t in 0..t_len {
        assert!((tape.value(alpha)[(0, t)] - naive_alpha[t]).abs() < 1e-12);
    }
    for d in 0..width {
        let naive: f64 = (0..t_len).map(|t| naive_alpha[t] * ann[t][d]).sum();
        assert!((tape.value(c)[(d, 0)] - naive).abs() < 1e-12);
    }
}

fn zero_model() -> Seq2Seq<f64> {
    let mut m = tiny_model(1);
    for p in m.store.iter_mut() {
        p.value.fill_zero();
    }
    m
}

#[test]
fn zero_model_logits_are_uniform() {
    let m = zero_model();
    let mut tape = Tape::new(&m.store);
    let (ctx, mut state) = m.start(&mut tape, &[5, 6], None).unwrap();
    let out = m.decode_step(&mut tape, &ctx, 9, &mut state, None).unwrap();
    let logits = tape.value(out.logits);
    assert_eq!(logits.shape(), (1, 24));
    let p = qexp_core::tensor::softmax_rows(logits);
    assert!(p.data().iter().all(|&x| (x - 1.0 / 24.0).abs() < 1e-15));
}

#[test]
fn decode_step_logits_always_have_vocab_width() {
    let m = tiny_model(2);
    let mut tape = Tape::new(&m.store);
    let (ctx, mut state) = m.start(&mut tape, &[5, 6, 7], None).unwrap();
    for y in [2, 4, 23] {
        let out = m.decode_step(&mut tape, &ctx, y, &mut state, None).unwrap();
        assert_eq!(tape.value(out.logits).shape(), (1, 24));
        assert_eq!(tape.value(out.alpha).shape(), (1, 3));
    }
}

#[test]
fn zero_model_accuracy_is_one_over_v_on_uniform_targets() {
    // The zero model always predicts id 0; with gold ids uniform over the
    // vocabulary the expected accuracy is 1/V.
    let m = zero_model();
    let vocab = m.vocab.clone();
    let mut rng = SeededRng::new(77);
    let data: Vec<_> = (0..400)
        .map(|_| qexp_core::dataset::ExpansionExample {
            source: vec!["w1".into()],
            expansion: (0..9).map(|_| vocab.tokens()[rng.below(24)].clone()).collect(),
        })
        .collect();
    // EOS positions are never id 0; exclude them from the Monte-Carlo estimate.
    let acc = m.token_accuracy(&data).unwrap();
    let hits_per_seq = acc * 10.0;
    let per_token = hits_per_seq / 9.0;
    assert!((per_token - 1.0 / 24.0).abs() < 0.01, "{per_token}");
}

#[test]
fn token_accuracy_on_empty_set_is_undefined() {
    let m = tiny_model(1);
    assert!(matches!(m.token_accuracy(&[]), Err(Error::UndefinedMetric(_))));
}

#[test]
fn lr_schedule() {
    let cfg = TrainConfig::default();
    assert_eq!(
        (cfg.batch_size, cfg.lr0, cfg.decay, cfg.dropout, cfg.epochs),
        (32, 0.001, 0.5, 0.35, 25)
    );
    assert!((cfg.lr_at(3) - 0.000125).abs() < 1e-18);
    assert_eq!(cfg.lr_at(0), 0.001);
}

#[test]
fn one_small_step_decreases_batch_loss() {
    let mut m = tiny_model(21);
    let data = memorization_set(4);
    let enc = m.encode_examples(&data[..8]).unwrap();
    let batch: Vec<_> = enc.iter().collect();
    let (before, grads) = m.batch_gradients(&batch, None).unwrap();
    m.store.accumulate(&grads);
    m.store.sgd_step(1e-4, 5.0).unwrap();
    let (after, _) = m.batch_gradients(&batch, None).unwrap();
    assert!(after < before, "{after} !< {before}");
}

#[test]
fn factorization_consistency() {
    let m = tiny_model(8);
    let mut rng = SeededRng::new(9);
    for _ in 0..20 {
        let n = 1 + rng.below(5);
        let src = random_ids(&mut rng, n, 24);
        let (ids, trace) = m.greedy_decode(&src, 6).unwrap();
        let sum: f64 = trace.log_probs.iter().sum();
        let prod: f64 = trace.probs.iter().product();
        assert!((sum - prod.ln()).abs() < 1e-9);
        if trace.log_probs.len() > ids.len() {
            // Decoding stopped at EOS: the teacher-forced score agrees.
            let tf = m.sequence_log_prob(&src, &ids).unwrap();
            assert!((tf - sum).abs() < 1e-9);
        }
        for row in &trace.attention {
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
    }
}

#[test]
fn teacher_forced_score_is_sum_of_step_terms() {
    let m = tiny_model(10);
    let src = vec![5, 9, 11];
    let tgt = vec![12, 4];
    let mut tape = Tape::new(&m.store);
    let logits = m.teacher_forced_logits(&mut tape, &src, &tgt, None).unwrap();
    let l = tape.value(logits);
    let manual: f64 = [12, 4, EOS]
        .iter()
        .enumerate()
        .map(|(t, &y)| log_softmax(l.row(t))[y])
        .sum();
    assert_eq!(m.sequence_log_prob(&src, &tgt).unwrap(), manual);
}

#[test]
fn expansion_never_contains_query_words() {
    let m = tiny_model(12);
    let mut rng = SeededRng::new(13);
    for _ in 0..30 {
        let n = 1 + rng.below(5);
        let q = words(&random_ids(&mut rng, n, 24)).join(" ");
        let r = m.expand(&q, 6).unwrap();
        let query = qexp_core::text::tokenize(&q);
        for t in &r.expansion {
            assert!(!query.contains(t));
            assert!(r.generated.contains(t));
        }
        assert_eq!(r.attention.rows(), r.log_probs.len());
        for step in 0..r.attention.rows() {
            assert!((r.attention.row(step).iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
        let again = m.expand(&q, 6).unwrap();
        assert_eq!(again.generated, r.generated);
        assert_eq!(again.expansion, r.expansion);
        assert_eq!(again.attention, r.attention);
    }
    assert!(matches!(m.expand(" ?? ", 6), Err(Error::EmptyInput(_))));
}

#[test]
fn model_that_echoes_the_source_expands_to_nothing() {
    // Bias the output layer toward "w0" then EOS: the only generated word is a
    // query word, so the expansion is empty.
    let mut m = zero_model();
    let b_o = m.decoder.b_o;
    let w0 = m.vocab.id("w0").unwrap();
    m.store.get_mut(b_o).value[(0, w0)] = 5.0;
    let r = m.expand("w0 w3", 3).unwrap();
    assert_eq!(r.generated, vec!["w0", "w0", "w0"]);
    assert!(r.expansion.is_empty());
}

#[test]
fn dropout_training_is_deterministic() {
    let data = memorization_set(1);
    let cfg = TrainConfig {
        batch_size: 8,
        lr0: 0.5,
        decay: 1.0,
        dropout: 0.35,
        epochs: 2,
        clip_norm: 5.0,
        seed: 3,
    };
    let mut a = tiny_model(30);
    let mut b = tiny_model(30);
    let la = a.train(&data, &cfg, |_| {}).unwrap();
    let lb = b.train(&data, &cfg, |_| {}).unwrap();
    assert_eq!(la, lb);
    for ((_, pa), (_, pb)) in a.store.iter().zip(b.store.iter()) {
        assert_eq!(pa.value, pb.value);
    }
    assert_eq!(la[1].lr, 0.5);
}

#[test]
fn dropout_masks_change_the_loss() {
    let m = tiny_model(31);
    let data = memorization_set(2);
    let enc = m.encode_examples(&data[..4]).unwrap();
    let batch: Vec<_> = enc.iter().collect();
    let (plain, _) = m.batch_gradients(&batch, None).unwrap();
    let mut rng = SeededRng::new(1);
    let mut d = Dropout { p: 0.35, rng: &mut rng };
    let (dropped, _) = m.batch_gradients(&batch, Some(&mut d)).unwrap();
    assert_ne!(plain, dropped);
}

#[test]
fn train_rejects_bad_config_and_empty_data() {
    let mut m = tiny_model(1);
    let data = memorization_set(1);
    let bad = TrainConfig { decay: 0.0, ..TrainConfig::default() };
    assert!(matches!(m.train(&data, &bad, |_| {}), Err(Error::Parameter(_))));
    let bad = TrainConfig { dropout: 1.0, ..TrainConfig::default() };
    assert!(matches!(m.train(&data, &bad, |_| {}), Err(Error::Parameter(_))));
    assert!(matches!(m.train(&[], &TrainConfig::default(), |_| {}), Err(Error::EmptyInput(_))));
}

#[test]
fn diverging_training_reports_a_numeric_fault() {
    let mut m = tiny_model(1);
    let b_o = m.decoder.b_o;
    m.store.get_mut(b_o).value[(0, 4)] = f64::INFINITY;
    let data = memorization_set(1);
    let err = m.train(&data, &TrainConfig { epochs: 1, ..TrainConfig::default() }, |_| {}).unwrap_err();
    match err {
        Error::NumericFault(msg) => {
            assert!(msg.contains("epoch 0") && msg.contains("batch 0"), "{msg}");
            assert!(msg.contains("out.b"), "{msg}");
        }
        other => panic!("{other:?}"),
    }
}

#[test]
fn f32_model_trains() {
    let vocab = tiny_vocab();
    let cfg = ModelConfig::uniform(8, 8, 2);
    let emb = EmbeddingTable::<f32>::random(&vocab, 8, 4);
    let mut m = Seq2Seq::<f32>::new(cfg, vocab, emb, 4).unwrap();
    let data = memorization_set(3);
    let tc = TrainConfig { batch_size: 4, lr0: 0.5, decay: 1.0, dropout: 0.0, epochs: 3, clip_norm: 5.0, seed: 1 };
    let log = m.train(&data, &tc, |_| {}).unwrap();
    assert!(log[2].loss < log[0].loss + 1e-6);
    let _ = Vocabulary::default();
}
