use std::collections::HashSet;

use latsel::search::{
    ascend, search_and_generate, select_seeds, write_candidates, LatentObjective, SearchConfig,
};
use latsel::seqmodel::{train, ModelConfig, SeqModel, TrainConfig};
use latsel::{Error, Result, Score, SubsetRecord, TokenSequence, Vocabulary};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

struct Linear(Vec<f64>);

impl LatentObjective for Linear {
    fn value_and_grad(&self, e: &[f64]) -> Result<(f64, Vec<f64>)> {
        let v = self.0.iter().zip(e).map(|(w, x)| w * x).sum();
        Ok((v, self.0.clone()))
    }
}

/// `−‖e − c‖²`.
struct Bowl(Vec<f64>);

impl LatentObjective for Bowl {
    fn value_and_grad(&self, e: &[f64]) -> Result<(f64, Vec<f64>)> {
        let v = -e.iter().zip(&self.0).map(|(x, c)| (x - c).powi(2)).sum::<f64>();
        let g = e.iter().zip(&self.0).map(|(x, c)| -2.0 * (x - c)).collect();
        Ok((v, g))
    }
}

fn rec(tokens: &[u32], u: f64) -> SubsetRecord {
    SubsetRecord::new(TokenSequence::new(tokens.to_vec()), u).unwrap()
}

#[test]
fn seeds_are_the_best_distinct_subsets() {
    let records = vec![rec(&[5], 0.7), rec(&[3, 4], 0.9), rec(&[6, 7], 0.8)];
    let seeds = select_seeds(&records, 2).unwrap();
    assert_eq!(seeds, vec![rec(&[3, 4], 0.9), rec(&[6, 7], 0.8)]);

    let tied = vec![rec(&[3, 4, 5], 0.8), rec(&[6, 7], 0.8)];
    assert_eq!(select_seeds(&tied, 1).unwrap()[0].sequence.tokens(), &[6, 7]);

    let lex = vec![rec(&[4, 5], 0.8), rec(&[3, 9], 0.8)];
    assert_eq!(select_seeds(&lex, 1).unwrap()[0].sequence.tokens(), &[3, 9]);

    let permuted = vec![rec(&[5, 3], 0.9), rec(&[3, 5], 0.9), rec(&[4], 0.1)];
    let seeds = select_seeds(&permuted, 25).unwrap();
    assert_eq!(seeds, vec![rec(&[3, 5], 0.9), rec(&[4], 0.1)]);

    assert!(matches!(select_seeds(&[], 3), Err(Error::EmptyRecords)));
    assert_eq!(SearchConfig::default().top_k, 25);
}

#[test]
fn linear_ascent_is_exact() {
    let traj = ascend(&Linear(vec![1.0, 2.0]), &[0.0, 0.0], 0.1, 1).unwrap();
    assert_eq!(traj, vec![vec![0.1, 0.2]]);

    let w = vec![0.5, -1.5, 2.0];
    let start = vec![1.0, 2.0, -3.0];
    let traj = ascend(&Linear(w.clone()), &start, 0.25, 4).unwrap();
    for (t, point) in traj.iter().enumerate() {
        for i in 0..3 {
            let expected = start[i] + (t + 1) as f64 * 0.25 * w[i];
            assert!((point[i] - expected).abs() < 1e-12);
        }
    }
}

#[test]
fn tiny_step_barely_moves() {
    let start = vec![0.3, -0.7];
    let traj = ascend(&Linear(vec![1.0, 1.0]), &start, 1e-12, 5).unwrap();
    for point in traj {
        for (x, s) in point.iter().zip(&start) {
            assert!((x - s).abs() < 1e-10);
        }
    }
}

#[test]
fn bowl_ascent_follows_closed_form() {
    let c = vec![1.0, -2.0, 0.5];
    let start = vec![4.0, 3.0, -1.0];
    let eta = 0.05;
    let traj = ascend(&Bowl(c.clone()), &start, eta, 30).unwrap();
    let mut prev = f64::INFINITY;
    for (t, point) in traj.iter().enumerate() {
        let shrink = (1.0 - 2.0 * eta).powi(t as i32 + 1);
        let mut dist = 0.0;
        for i in 0..3 {
            let expected = c[i] + shrink * (start[i] - c[i]);
            assert!((point[i] - expected).abs() < 1e-12);
            dist += (point[i] - c[i]).powi(2);
        }
        assert!(dist < prev);
        prev = dist;
    }
}

#[test]
fn runaway_ascent_aborts() {
    let err = ascend(&Linear(vec![1e7]), &[0.0], 1.0, 3).unwrap_err();
    assert!(matches!(err, Error::DivergenceAbort { step: 1 }));
}

#[test]
fn decode_cadence_includes_start_and_endpoint() {
    let cfg = SearchConfig::default();
    assert_eq!(cfg.decode_steps(), vec![0, 5, 10, 15, 20]);
    let cfg = SearchConfig {
        steps: 7,
        ..SearchConfig::default()
    };
    assert_eq!(cfg.decode_steps(), vec![0, 5, 7]);
    let cfg = SearchConfig {
        steps: 1,
        ..SearchConfig::default()
    };
    assert_eq!(cfg.decode_steps(), vec![0, 1]);
}

#[test]
fn invalid_search_config_is_rejected() {
    for cfg in [
        SearchConfig { top_k: 0, ..SearchConfig::default() },
        SearchConfig { eta: 0.0, ..SearchConfig::default() },
        SearchConfig { steps: 0, ..SearchConfig::default() },
    ] {
        assert!(matches!(cfg.validate(), Err(Error::Config(_))));
    }
}

#[test]
fn evaluator_ascent_is_locally_monotone() {
    let model = SeqModel::untrained(&ModelConfig::default(), 12, 5).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for _ in 0..10 {
        let start: Vec<f64> = (0..64).map(|_| rng.sample(StandardNormal)).collect();
        let before = model.predict_utility(&start).unwrap();
        let mut eta = 1.0;
        let mut improved = false;
        for _ in 0..30 {
            let next = ascend(&model, &start, eta, 1).unwrap().remove(0);
            if model.predict_utility(&next).unwrap() >= before {
                improved = true;
                break;
            }
            eta /= 2.0;
        }
        assert!(improved);
    }
}

fn small_model_config() -> ModelConfig {
    ModelConfig {
        embed_dim: 32,
        layers: 1,
        heads: 4,
        ff_dim: 64,
        latent_dim: 16,
        evaluator_hidden: 32,
        max_len: None,
        variational: true,
    }
}

fn trained_toy() -> (Vec<SubsetRecord>, SeqModel) {
    let vocab = Vocabulary::new(8);
    let records = vec![
        rec(&[3, 4], 0.9),
        rec(&[4, 3], 0.9),
        rec(&[5, 6, 7], 0.6),
        rec(&[7, 6, 5], 0.6),
        rec(&[8, 9], 0.4),
        rec(&[10], 0.2),
    ];
    let cfg = TrainConfig {
        batch_size: 6,
        epochs: 150,
        learning_rate: 3e-3,
        seed: 3,
        ..TrainConfig::default()
    };
    let (model, _) = train(&records, &vocab, &small_model_config(), &cfg).unwrap();
    (records, model)
}

/// Utility is the share of the tokens 3 and 4 that are present, minus a
/// small size penalty.
fn toy_score(s: &TokenSequence) -> Result<Score> {
    let hits = s.tokens().iter().filter(|&&t| t == 3 || t == 4).count() as f64;
    let utility = (hits / 2.0 - 0.01 * s.len() as f64).max(0.0);
    Ok(Score { utility, f1: utility })
}

#[test]
fn search_returns_the_best_scored_candidate() {
    let (records, model) = trained_toy();
    let cfg = SearchConfig {
        top_k: 3,
        eta: 0.2,
        steps: 6,
        decode_every: 2,
    };
    let out = search_and_generate(&records, &model, &cfg, &toy_score).unwrap();
    assert_eq!(out.seeds.len(), 3);
    assert_eq!(out.decoded_points, 3 * 4);

    let distinct: HashSet<&TokenSequence> = out.candidates.iter().map(|c| &c.tokens).collect();
    assert_eq!(distinct.len(), out.candidates.len());
    for c in &out.candidates {
        assert!(!c.tokens.is_empty());
        assert!(c.tokens.is_canonical());
        assert_eq!(c.measured_utility, toy_score(&c.tokens).unwrap().utility);
        assert!(c.measured_utility <= out.best.measured_utility);
    }
    for seed in &out.seeds {
        let e = model.encode(&seed.sequence).unwrap().m;
        if model.generate(&e).unwrap() == seed.sequence {
            let seed_utility = toy_score(&seed.sequence).unwrap().utility;
            assert!(out.best.measured_utility >= seed_utility);
        }
    }

    let again = search_and_generate(&records, &model, &cfg, &toy_score).unwrap();
    assert_eq!(again.candidates, out.candidates);
}

#[test]
fn degenerate_search_scores_only_the_decoded_points() {
    let (records, model) = trained_toy();
    let cfg = SearchConfig {
        top_k: 1,
        eta: 0.1,
        steps: 1,
        decode_every: 1,
    };
    let out = search_and_generate(&records, &model, &cfg, &toy_score).unwrap();
    assert_eq!(out.decoded_points, 2);
    assert!(out.candidates.len() <= 2);
    assert!(out.candidates.iter().all(|c| c.seed_rank == 0 && c.step <= 1));
}

#[test]
fn equal_utilities_prefer_the_smaller_subset() {
    let (records, model) = trained_toy();
    let flat = |_: &TokenSequence| -> Result<Score> { Ok(Score { utility: 0.5, f1: 0.5 }) };
    let cfg = SearchConfig {
        top_k: 5,
        eta: 0.3,
        steps: 4,
        decode_every: 1,
    };
    let out = search_and_generate(&records, &model, &cfg, &flat).unwrap();
    let smallest = out.candidates.iter().map(|c| c.tokens.len()).min().unwrap();
    assert_eq!(out.best.tokens.len(), smallest);
}

#[test]
fn candidate_dump_has_the_documented_fields() {
    let (records, model) = trained_toy();
    let cfg = SearchConfig {
        top_k: 2,
        eta: 0.1,
        steps: 2,
        decode_every: 1,
    };
    let out = search_and_generate(&records, &model, &cfg, &toy_score).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("candidates.jsonl");
    write_candidates(&path, &out.candidates).unwrap();
    let text = std::fs::read_to_string(&path).unwrap();
    assert_eq!(text.lines().count(), out.candidates.len());
    for line in text.lines() {
        let v: serde_json::Value = serde_json::from_str(line).unwrap();
        let mut keys: Vec<&str> = v.as_object().unwrap().keys().map(|k| k.as_str()).collect();
        keys.sort();
        assert_eq!(
            keys,
            ["measured_utility", "predicted_utility", "seed_rank", "step", "tokens"]
        );
    }
}
