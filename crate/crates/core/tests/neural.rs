use opspam::corpus;
use opspam::embeddings::{self, EmbeddingTable, EncodedBatch, PAD_INDEX};
use opspam::neural::gradcheck::{self, small_problem, DEFAULT_EPSILON, DEFAULT_TOLERANCE};
use opspam::neural::{self, Architecture, Mode, ModelSpec, Params, TrainConfig};
use opspam::textprep::{self, PipelineConfig};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn train_cache(p: &gradcheck::Problem, params: &Params) -> neural::ForwardCache {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    neural::forward(&p.spec, params, &p.table, &p.batch, Mode::Train(&mut rng)).unwrap()
}

#[test]
fn finite_differences_agree_for_every_architecture() {
    for arch in Architecture::ALL {
        let p = small_problem(arch, 4, 6, 11).unwrap();
        assert_eq!(p.spec.hidden_dim, 4);
        assert_eq!(p.spec.max_len, 6);
        assert_eq!(p.batch.len(), 4);
        let r = gradcheck::check_gradients(
            &p.spec,
            &p.params,
            &p.table,
            &p.batch,
            DEFAULT_EPSILON,
            DEFAULT_TOLERANCE,
            false,
        )
        .unwrap();
        for g in &r.groups {
            assert!(
                g.max_rel_error <= 1e-3,
                "{arch} {}: {:.3e}",
                g.name,
                g.max_rel_error
            );
        }
        assert!(r.passed);
    }
}

#[test]
fn corrupted_gradient_fails_the_check() {
    let p = small_problem(Architecture::Cnn, 4, 6, 3).unwrap();
    let r = gradcheck::check_gradients(
        &p.spec,
        &p.params,
        &p.table,
        &p.batch,
        DEFAULT_EPSILON,
        DEFAULT_TOLERANCE,
        true,
    )
    .unwrap();
    assert!(!r.passed);
}

#[test]
fn pad_embedding_row_gets_no_gradient() {
    for arch in Architecture::ALL {
        let p = small_problem(arch, 4, 6, 5).unwrap();
        let cache = train_cache(&p, &p.params);
        let g = neural::backward(&p.spec, &p.params, &p.table, &cache, &p.batch.labels).unwrap();
        let e = p.spec.embedding_dim;
        assert!(g.data("embedding")[PAD_INDEX * e..(PAD_INDEX + 1) * e]
            .iter()
            .all(|&v| v == 0.0));
    }
}

#[test]
fn frozen_embedding_has_no_gradient_slot() {
    let mut p = small_problem(Architecture::BiLstm, 4, 6, 5).unwrap();
    p.spec.trainable_embedding = false;
    let params = neural::init_params(&p.spec, &p.table, 5).unwrap();
    let cache = train_cache(&p, &params);
    let g = neural::backward(&p.spec, &params, &p.table, &cache, &p.batch.labels).unwrap();
    assert!(!g.contains("embedding"));
    assert_eq!(g.names(), params.names());
}

#[test]
fn duplicating_the_batch_keeps_mean_gradients() {
    for arch in Architecture::ALL {
        let p = small_problem(arch, 4, 6, 8).unwrap();
        let cache = train_cache(&p, &p.params);
        let g1 = neural::backward(&p.spec, &p.params, &p.table, &cache, &p.batch.labels).unwrap();
        let idx: Vec<usize> = (0..p.batch.len()).chain(0..p.batch.len()).collect();
        let doubled = p.batch.select(&idx);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let c2 =
            neural::forward(&p.spec, &p.params, &p.table, &doubled, Mode::Train(&mut rng)).unwrap();
        let g2 = neural::backward(&p.spec, &p.params, &p.table, &c2, &doubled.labels).unwrap();
        for name in g1.names() {
            for (a, b) in g1.data(&name).iter().zip(g2.data(&name)) {
                assert!((a - b).abs() <= 1e-9, "{arch} {name}");
            }
        }
    }
}

#[test]
fn stale_cache_is_rejected() {
    let p = small_problem(Architecture::Lstm, 4, 6, 2).unwrap();
    let mut params = p.params.clone();
    let cache = train_cache(&p, &params);
    params.get_mut("out.b").unwrap().data[0] += 0.1;
    let err = neural::backward(&p.spec, &params, &p.table, &cache, &p.batch.labels);
    assert!(matches!(err, Err(opspam::Error::StaleCache(_))));

    let eval = neural::forward(&p.spec, &p.params, &p.table, &p.batch, Mode::Eval).unwrap();
    let err = neural::backward(&p.spec, &p.params, &p.table, &eval, &p.batch.labels);
    assert!(matches!(err, Err(opspam::Error::StaleCache(_))));
}

#[test]
fn all_pad_attention_batch_gives_one_half() {
    let p = small_problem(Architecture::BiLstmAttention, 4, 6, 4).unwrap();
    let mut params = p.params.clone();
    params.get_mut("out.b").unwrap().data[0] = 0.0;
    let batch = EncodedBatch {
        indices: vec![PAD_INDEX; 2 * 6],
        lengths: vec![0, 0],
        labels: vec![0, 1],
        max_len: 6,
        doc_features: None,
    };
    let probs = neural::predict_proba(&p.spec, &params, &p.table, &batch).unwrap();
    for pr in probs {
        assert_eq!(pr, 0.5);
    }
}

#[test]
fn attention_weights_are_a_masked_distribution() {
    let p = small_problem(Architecture::BiLstmAttention, 4, 6, 9).unwrap();
    let a = neural::attention_weights(&p.spec, &p.params, &p.table, &p.batch).unwrap();
    assert_eq!(a.shape, vec![4, 6]);
    for (i, &len) in p.batch.lengths.iter().enumerate() {
        let row = &a.data[i * 6..(i + 1) * 6];
        assert!(row.iter().all(|&v| v >= 0.0));
        assert!((row[..len].iter().sum::<f64>() - 1.0).abs() <= 1e-9);
        assert!(row[len..].iter().all(|&v| v == 0.0));
        if len == 1 {
            assert_eq!(row[0], 1.0);
        }
    }
    let q = small_problem(Architecture::BiLstm, 4, 6, 9).unwrap();
    assert!(matches!(
        neural::attention_weights(&q.spec, &q.params, &q.table, &q.batch),
        Err(opspam::Error::WrongArchitecture(_))
    ));
}

#[test]
fn padding_never_changes_outputs() {
    for arch in Architecture::ALL {
        let p = small_problem(arch, 4, 6, 21).unwrap();
        let base = neural::predict_proba(&p.spec, &p.params, &p.table, &p.batch).unwrap();
        let wide = 11;
        let mut indices = vec![PAD_INDEX; p.batch.len() * wide];
        for i in 0..p.batch.len() {
            let s = p.batch.sample(i);
            indices[i * wide..i * wide + s.len()].copy_from_slice(s);
        }
        let padded = EncodedBatch {
            indices,
            max_len: wide,
            ..p.batch.clone()
        };
        let got = neural::predict_proba(&p.spec, &p.params, &p.table, &padded).unwrap();
        for (a, b) in base.iter().zip(&got) {
            assert!((a - b).abs() <= 1e-9, "{arch}");
        }
    }
}

fn swap_directions(params: &Params, arch: Architecture, hidden: usize) -> Params {
    let mut q = params.clone();
    for part in ["w", "u", "b"] {
        let f = params.get(&format!("lstm_fwd.{part}")).unwrap().clone();
        let b = params.get(&format!("lstm_bwd.{part}")).unwrap().clone();
        q.insert(format!("lstm_fwd.{part}"), b);
        q.insert(format!("lstm_bwd.{part}"), f);
    }
    let swap_halves = |v: &mut [f64]| {
        let (a, b) = v.split_at_mut(hidden);
        a.swap_with_slice(b);
    };
    swap_halves(&mut q.get_mut("out.w").unwrap().data);
    if arch == Architecture::BiLstmAttention {
        swap_halves(&mut q.get_mut("attn.w").unwrap().data);
    }
    q
}

#[test]
fn reversing_inputs_and_swapping_directions_is_symmetric() {
    for arch in [Architecture::BiLstm, Architecture::BiLstmAttention] {
        let p = small_problem(arch, 4, 6, 13).unwrap();
        let base = neural::predict_proba(&p.spec, &p.params, &p.table, &p.batch).unwrap();
        let mut rev = p.batch.clone();
        for i in 0..rev.len() {
            let len = rev.lengths[i];
            rev.indices[i * rev.max_len..i * rev.max_len + len].reverse();
        }
        let q = swap_directions(&p.params, arch, p.spec.hidden_dim);
        let got = neural::predict_proba(&p.spec, &q, &p.table, &rev).unwrap();
        for (a, b) in base.iter().zip(&got) {
            assert!((a - b).abs() <= 1e-9, "{arch}: {a} vs {b}");
        }
    }
}

#[test]
fn eval_mode_is_deterministic_and_dropout_uses_the_stream() {
    let mut p = small_problem(Architecture::Cnn, 4, 6, 6).unwrap();
    let a = neural::predict_proba(&p.spec, &p.params, &p.table, &p.batch).unwrap();
    let b = neural::predict_proba(&p.spec, &p.params, &p.table, &p.batch).unwrap();
    assert_eq!(a, b);
    p.spec.dropout = 0.5;
    let run = |seed| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        neural::forward(&p.spec, &p.params, &p.table, &p.batch, Mode::Train(&mut rng))
            .unwrap()
            .probabilities
    };
    assert_eq!(run(1), run(1));
    assert_ne!(run(1), run(2));
}

#[test]
fn out_of_range_token_is_an_error() {
    let p = small_problem(Architecture::Lstm, 4, 6, 1).unwrap();
    let mut b = p.batch.clone();
    b.indices[0] = p.spec.vocab_rows + 3;
    assert!(neural::predict_proba(&p.spec, &p.params, &p.table, &b).is_err());
}

#[test]
fn zero_epochs_rejected_by_train() {
    let p = small_problem(Architecture::Lstm, 4, 6, 1).unwrap();
    let cfg = TrainConfig {
        epochs: 0,
        ..TrainConfig::default()
    };
    assert!(neural::train(&p.spec, &cfg, &p.table, p.params.clone(), &p.batch, None).is_err());
}

fn fixture_batch(n: usize, max_len: usize) -> (EmbeddingTable, EncodedBatch) {
    let dir = tempfile::tempdir().unwrap();
    corpus::make_fixture(n.div_ceil(4), 42, &dir.path().join("c")).unwrap();
    let docs = corpus::load_corpus(&dir.path().join("c")).unwrap();
    let emb = dir.path().join("emb.txt");
    corpus::write_fixture_embeddings(&emb, 50, 42).unwrap();
    let table = embeddings::load_embeddings(&emb, Some(50), None).unwrap();
    let cfg = PipelineConfig::neural();
    let seqs: Vec<Vec<String>> = docs.iter().map(|d| textprep::preprocess(&d.text, &cfg)).collect();
    let labels: Vec<u8> = docs.iter().map(|d| d.label.as_u8()).collect();
    let batch = embeddings::encode_batch(&seqs, &labels, &table, max_len).unwrap();
    (table, batch)
}

#[test]
fn attention_model_memorizes_32_samples() {
    let (table, batch) = fixture_batch(32, 64);
    assert_eq!(batch.len(), 32);
    let mut spec = ModelSpec::new(Architecture::BiLstmAttention, table.n_rows(), table.dim());
    spec.hidden_dim = 16;
    spec.dropout = 0.0;
    spec.max_len = 64;
    let init = neural::init_params(&spec, &table, 42).unwrap();
    let cfg = TrainConfig {
        epochs: 200,
        learning_rate: 1e-2,
        patience: 0,
        ..TrainConfig::default()
    };
    let (params, history) = neural::train(&spec, &cfg, &table, init, &batch, None).unwrap();
    assert!(history.epochs.iter().any(|r| r.train_accuracy == 1.0));
    let probs = neural::predict_proba(&spec, &params, &table, &batch).unwrap();
    let hits = probs
        .iter()
        .zip(&batch.labels)
        .filter(|(&p, &y)| u8::from(p > 0.5) == y)
        .count();
    assert_eq!(hits, 32);
}

#[test]
fn training_is_reproducible_and_early_stops() {
    let (table, batch) = fixture_batch(40, 48);
    let train = batch.select(&(0..30).collect::<Vec<_>>());
    let val = batch.select(&(30..40).collect::<Vec<_>>());
    let mut spec = ModelSpec::new(Architecture::Cnn, table.n_rows(), table.dim());
    spec.filter_count = 4;
    spec.max_len = 48;
    let cfg = TrainConfig {
        epochs: 40,
        learning_rate: 5e-2,
        batch_size: 8,
        patience: 2,
        ..TrainConfig::default()
    };
    let run = || {
        let init = neural::init_params(&spec, &table, 7).unwrap();
        neural::train(&spec, &cfg, &table, init, &train, Some(&val)).unwrap()
    };
    let (p1, h1) = run();
    let (p2, h2) = run();
    assert_eq!(h1, h2);
    assert_eq!(p1, p2);
    let best = h1.epochs[h1.best_epoch - 1].val_loss.unwrap();
    assert!(h1.epochs.iter().all(|r| r.val_loss.unwrap() >= best));
    if h1.stopped_early {
        assert_eq!(h1.epochs.len(), h1.best_epoch + cfg.patience);
    }
    assert!(h1.to_csv().lines().count() == h1.epochs.len() + 1);
}

#[test]
fn huge_learning_rate_reports_divergence() {
    let (table, batch) = fixture_batch(16, 32);
    let mut spec = ModelSpec::new(Architecture::Cnn, table.n_rows(), table.dim());
    spec.filter_count = 4;
    spec.max_len = 32;
    let init = neural::init_params(&spec, &table, 1).unwrap();
    let cfg = TrainConfig {
        optimizer: neural::Optimizer::Sgd,
        learning_rate: 1e308,
        clip_norm: None,
        epochs: 3,
        ..TrainConfig::default()
    };
    match neural::train(&spec, &cfg, &table, init, &batch, None) {
        Err(opspam::Error::Diverged { epoch, .. }) => assert!(epoch >= 1),
        Err(e) => panic!("expected divergence, got {e}"),
        Ok((_, h)) => panic!("expected divergence, history {:?}", h.epochs),
    }
}
