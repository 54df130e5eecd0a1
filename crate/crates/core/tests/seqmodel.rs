use latsel::seqmodel::{
    load_checkpoint, nll, save_checkpoint, softmax, train, KlForm, ModelConfig, SeqModel,
    TrainConfig,
};
use latsel::vocab::{EOS, SOS};
use latsel::{Error, SubsetRecord, TokenSequence, Vocabulary};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

fn small_config() -> ModelConfig {
    ModelConfig {
        embed_dim: 16,
        layers: 1,
        heads: 4,
        ff_dim: 32,
        latent_dim: 8,
        evaluator_hidden: 16,
        max_len: None,
        variational: true,
    }
}

fn seq(tokens: &[u32]) -> TokenSequence {
    TokenSequence::new(tokens.to_vec())
}

fn random_point(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f64> {
    (0..dim).map(|_| rng.sample(StandardNormal)).collect()
}

fn toy_records() -> Vec<SubsetRecord> {
    let raw: [(&[u32], f64); 6] = [
        (&[3, 4], 0.9),
        (&[4, 3], 0.9),
        (&[5, 7, 6], 0.6),
        (&[7, 5, 6], 0.6),
        (&[8], 0.3),
        (&[9, 3, 10, 4], 0.75),
    ];
    raw.iter()
        .map(|(t, u)| SubsetRecord::new(seq(t), *u).unwrap())
        .collect()
}

#[test]
fn encode_is_deterministic_and_order_sensitive() {
    let model = SeqModel::untrained(&small_config(), 10, 3).unwrap();
    let a = model.encode(&seq(&[3, 5, 8])).unwrap();
    let b = model.encode(&seq(&[3, 5, 8])).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.m.len(), 8);
    assert!(a.sigma.is_some());
    assert!(a.e_star.is_none());
    let c = model.encode(&seq(&[8, 5, 3])).unwrap();
    assert_ne!(a.m, c.m);
}

#[test]
fn encode_batch_matches_single() {
    let model = SeqModel::untrained(&small_config(), 10, 3).unwrap();
    let seqs = vec![seq(&[3, 5, 8, 9]), seq(&[4]), seq(&[12, 3])];
    let batch = model.encode_batch(&seqs).unwrap();
    for (s, lp) in seqs.iter().zip(batch) {
        let single = model.encode(s).unwrap();
        for (x, y) in single.m.iter().zip(&lp.m) {
            assert!((x - y).abs() < 1e-12);
        }
    }
}

#[test]
fn encode_rejects_bad_sequences() {
    let model = SeqModel::untrained(&small_config(), 4, 0).unwrap();
    assert_eq!(model.max_len(), 6);
    let too_long = seq(&[3, 4, 5, 6, 3, 4, 5]);
    assert!(matches!(
        model.encode(&too_long),
        Err(Error::SequenceTooLong { len: 7, max_len: 6 })
    ));
    assert!(matches!(
        model.encode(&seq(&[3, 7])),
        Err(Error::UnknownToken { token: 7, .. })
    ));
    assert!(matches!(
        model.encode(&seq(&[EOS, 3])),
        Err(Error::UnknownToken { token: 2, .. })
    ));
    assert!(matches!(model.encode(&seq(&[])), Err(Error::EmptySubset)));
}

#[test]
fn reconstruction_loss_matches_token_by_token_oracle() {
    let model = SeqModel::untrained(&small_config(), 10, 11).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for tokens in [&[3u32, 7, 4][..], &[12], &[5, 6, 7, 8, 9, 10]] {
        let e = random_point(&mut rng, 8);
        let s = seq(tokens);
        let mut prefix = vec![SOS];
        let mut oracle = 0.0;
        for &target in tokens.iter().chain(std::iter::once(&EOS)) {
            let logits = model.decode_logits(&e, &prefix).unwrap();
            oracle += nll(&logits, target as usize);
            prefix.push(target);
        }
        let loss = model.reconstruction_loss(&e, &s).unwrap();
        assert!(loss >= 0.0);
        assert!((loss - oracle).abs() < 1e-9, "{loss} vs {oracle}");
    }
}

#[test]
fn decoder_probabilities_are_normalized() {
    let model = SeqModel::untrained(&small_config(), 10, 2).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for _ in 0..10 {
        let e = random_point(&mut rng, 8);
        let p = softmax(&model.decode_logits(&e, &[SOS, 4, 9]).unwrap());
        assert_eq!(p.len(), 13);
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        assert!(p.iter().all(|v| *v > 0.0));
    }
}

#[test]
fn reconstruction_loss_ignores_padding() {
    let model = SeqModel::untrained(&small_config(), 10, 4).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let seqs = vec![seq(&[3, 4]), seq(&[5, 6, 7, 8, 9]), seq(&[12])];
    let points: Vec<Vec<f64>> = (0..3).map(|_| random_point(&mut rng, 8)).collect();
    let refs: Vec<&[f64]> = points.iter().map(|p| p.as_slice()).collect();
    let tight = model.reconstruction_losses(&refs, &seqs, None).unwrap();
    let padded = model.reconstruction_losses(&refs, &seqs, Some(12)).unwrap();
    for (i, (a, b)) in tight.iter().zip(&padded).enumerate() {
        assert!((a - b).abs() < 1e-9);
        let alone = model.reconstruction_loss(refs[i], &seqs[i]).unwrap();
        assert!((a - alone).abs() < 1e-9);
    }
}

#[test]
fn evaluator_gradient_matches_central_differences() {
    let model = SeqModel::untrained(&ModelConfig::default(), 20, 8).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let h = 1e-4;
    for _ in 0..10 {
        let e = random_point(&mut rng, 64);
        let (value, grad) = model.utility_gradient(&e).unwrap();
        assert_eq!(value, model.predict_utility(&e).unwrap());
        for i in 0..64 {
            let mut plus = e.clone();
            let mut minus = e.clone();
            plus[i] += h;
            minus[i] -= h;
            let fd = (model.predict_utility(&plus).unwrap() - model.predict_utility(&minus).unwrap())
                / (2.0 * h);
            let scale = grad[i].abs().max(fd.abs());
            let rel = (grad[i] - fd).abs() / scale;
            assert!(rel < 1e-4, "coordinate {i}: analytic {} vs numeric {fd}", grad[i]);
        }
    }
}

#[test]
fn generation_is_deterministic_and_canonical() {
    let model = SeqModel::untrained(&small_config(), 10, 6).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let points: Vec<Vec<f64>> = (0..5).map(|_| random_point(&mut rng, 8)).collect();
    let refs: Vec<&[f64]> = points.iter().map(|p| p.as_slice()).collect();
    let raw = model.generate_raw(&refs).unwrap();
    let batch = model.generate_batch(&refs).unwrap();
    for (i, p) in points.iter().enumerate() {
        assert!(raw[i].len() <= model.max_len());
        if let Some(end) = raw[i].iter().position(|&t| t == EOS) {
            assert_eq!(end, raw[i].len() - 1);
        }
        let single = model.generate(p).unwrap();
        assert_eq!(single, batch[i]);
        assert_eq!(single, model.generate(p).unwrap());
        assert!(single.is_canonical());
        // Each raw step is the argmax of the decoder given the previous ones.
        let mut prefix = vec![SOS];
        for &t in &raw[i] {
            let logits = model.decode_logits(p, &prefix).unwrap();
            assert_eq!(latsel::seqmodel::argmax(&logits) as u32, t);
            prefix.push(t);
        }
    }
}

fn tiny_train_config(epochs: usize) -> TrainConfig {
    TrainConfig {
        batch_size: 4,
        epochs,
        learning_rate: 1e-3,
        seed: 21,
        ..TrainConfig::default()
    }
}

#[test]
fn training_is_deterministic_and_checkpoints_round_trip() {
    let vocab = Vocabulary::new(8);
    let records = toy_records();
    let (a, curve_a) = train(&records, &vocab, &small_config(), &tiny_train_config(3)).unwrap();
    let (b, curve_b) = train(&records, &vocab, &small_config(), &tiny_train_config(3)).unwrap();
    assert_eq!(curve_a, curve_b);
    assert_eq!(curve_a.len(), 3);

    let dir = tempfile::tempdir().unwrap();
    let pa = dir.path().join("a.safetensors");
    let pb = dir.path().join("b.safetensors");
    save_checkpoint(&a, &pa).unwrap();
    save_checkpoint(&b, &pb).unwrap();
    assert_eq!(std::fs::read(&pa).unwrap(), std::fs::read(&pb).unwrap());

    let loaded = load_checkpoint(&pa).unwrap();
    assert_eq!(loaded.model_config(), a.model_config());
    assert_eq!(loaded.train_config(), a.train_config());
    assert_eq!(loaded.vocab_size(), 11);
    let s = seq(&[9, 3, 10, 4]);
    assert_eq!(loaded.encode(&s).unwrap(), a.encode(&s).unwrap());
    let e = a.encode(&s).unwrap().m;
    assert_eq!(loaded.generate(&e).unwrap(), a.generate(&e).unwrap());
}

#[test]
fn corrupt_checkpoint_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.safetensors");
    std::fs::write(&path, b"not a checkpoint").unwrap();
    assert!(matches!(load_checkpoint(&path), Err(Error::Checkpoint(_))));
}

#[test]
fn different_seeds_train_different_models() {
    let vocab = Vocabulary::new(8);
    let records = toy_records();
    let (a, _) = train(&records, &vocab, &small_config(), &tiny_train_config(1)).unwrap();
    let cfg = TrainConfig {
        seed: 22,
        ..tiny_train_config(1)
    };
    let (b, _) = train(&records, &vocab, &small_config(), &cfg).unwrap();
    let s = seq(&[3, 4]);
    assert_ne!(a.encode(&s).unwrap().m, b.encode(&s).unwrap().m);
}

#[test]
fn joint_loss_decreases_at_default_learning_rate() {
    let vocab = Vocabulary::new(8);
    let records = toy_records();
    let cfg = TrainConfig {
        epochs: 400,
        seed: 2,
        ..TrainConfig::default()
    };
    assert_eq!(cfg.learning_rate, 1e-4);
    let (_, curve) = train(&records, &vocab, &small_config(), &cfg).unwrap();
    assert!(curve[399].joint < curve[0].joint);
    for row in &curve {
        let joint = 0.8 * row.rec + 0.2 * row.evt + 0.001 * row.kl;
        assert!((row.joint - joint).abs() < 1e-4 * joint.max(1.0));
    }
}

#[test]
fn overfits_a_small_record_set() {
    let vocab = Vocabulary::new(20);
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let records: Vec<SubsetRecord> = (0..50)
        .map(|_| {
            let k = rng.random_range(1..=6);
            let cols: Vec<usize> = rand::seq::index::sample(&mut rng, 20, k).into_vec();
            let tokens: Vec<u32> = cols.iter().map(|&c| vocab.token(c)).collect();
            SubsetRecord::new(TokenSequence::new(tokens), rng.random_range(0.4..1.0)).unwrap()
        })
        .collect();
    let cfg = TrainConfig {
        batch_size: 10,
        learning_rate: 1e-3,
        seed: 1,
        ..TrainConfig::default()
    };
    let (model, _) = train(&records, &vocab, &ModelConfig::default(), &cfg).unwrap();
    let acc = model.teacher_forced_accuracy(&records).unwrap();
    assert!(acc >= 0.95, "teacher-forced accuracy {acc}");
}

#[test]
fn non_variational_model_is_a_deterministic_autoencoder() {
    let cfg = ModelConfig {
        variational: false,
        ..small_config()
    };
    let vocab = Vocabulary::new(8);
    let (model, curve) = train(&toy_records(), &vocab, &cfg, &tiny_train_config(2)).unwrap();
    assert!(curve.iter().all(|r| r.kl == 0.0));
    let lp = model.encode(&seq(&[5, 7, 6])).unwrap();
    assert!(lp.sigma.is_none());
    assert_eq!(lp.with_eps(&[1.0; 8]).e_star.unwrap(), lp.m);
    let first = model.generate(&lp.m).unwrap();
    for _ in 0..3 {
        let again = model.encode(&seq(&[5, 7, 6])).unwrap();
        assert_eq!(model.generate(&again.m).unwrap(), first);
    }
}

#[test]
fn standard_kl_form_trains() {
    let vocab = Vocabulary::new(8);
    let cfg = TrainConfig {
        kl_form: KlForm::Standard,
        ..tiny_train_config(2)
    };
    let (_, curve) = train(&toy_records(), &vocab, &small_config(), &cfg).unwrap();
    assert!(curve.iter().all(|r| r.kl >= 0.0 && r.joint.is_finite()));
}

#[test]
fn exploding_learning_rate_aborts_with_nan_loss() {
    let vocab = Vocabulary::new(8);
    let cfg = TrainConfig {
        learning_rate: 1e30,
        ..tiny_train_config(50)
    };
    let err = train(&toy_records(), &vocab, &small_config(), &cfg).unwrap_err();
    assert!(matches!(err, Error::NanLoss { .. }), "{err}");
}

#[test]
fn training_rejects_bad_input() {
    let vocab = Vocabulary::new(8);
    assert!(matches!(
        train(&[], &vocab, &small_config(), &tiny_train_config(1)),
        Err(Error::EmptyRecords)
    ));
    let long = vec![SubsetRecord::new(seq(&[3; 11]), 0.5).unwrap()];
    assert!(matches!(
        train(&long, &vocab, &small_config(), &tiny_train_config(1)),
        Err(Error::SequenceTooLong { .. })
    ));
}
