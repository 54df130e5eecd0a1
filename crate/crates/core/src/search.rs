//! Gradient ascent in the latent space and decoding of the visited points.

use std::collections::{HashMap, HashSet};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::record::{write_jsonl, SubsetRecord};
use crate::seqmodel::SeqModel;
use crate::sequence::{canonicalize, TokenSequence};
use crate::{Score, SubsetScorer};

/// Coordinates beyond this magnitude abort the ascent.
pub const DIVERGENCE_LIMIT: f64 = 1e6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SearchConfig {
    /// Number of seed records.
    pub top_k: usize,
    /// Step size.
    pub eta: f64,
    /// Ascent iterations per seed.
    pub steps: usize,
    /// Decode every this many steps. The seed itself and the endpoint are
    /// always decoded.
    pub decode_every: usize,
}

impl Default for SearchConfig {
    fn default() -> Self {
        Self {
            top_k: 25,
            eta: 0.5,
            steps: 20,
            decode_every: 5,
        }
    }
}

impl SearchConfig {
    pub fn validate(&self) -> Result<()> {
        if self.top_k == 0 {
            return Err(Error::Config("search.top_k must be at least 1".into()));
        }
        if !(self.eta > 0.0 && self.eta.is_finite()) {
            return Err(Error::Config("search.eta must be positive".into()));
        }
        if self.steps == 0 {
            return Err(Error::Config("search.steps must be at least 1".into()));
        }
        if self.decode_every == 0 {
            return Err(Error::Config("search.decode_every must be at least 1".into()));
        }
        Ok(())
    }

    /// Trajectory steps that get decoded, 0 being the seed itself.
    pub fn decode_steps(&self) -> Vec<usize> {
        let mut steps: Vec<usize> = (0..=self.steps).step_by(self.decode_every).collect();
        if steps.last() != Some(&self.steps) {
            steps.push(self.steps);
        }
        steps
    }
}

/// A differentiable scalar function of a latent point.
pub trait LatentObjective: Sync {
    fn value_and_grad(&self, e: &[f64]) -> Result<(f64, Vec<f64>)>;
}

impl LatentObjective for SeqModel {
    fn value_and_grad(&self, e: &[f64]) -> Result<(f64, Vec<f64>)> {
        self.utility_gradient(e)
    }
}

/// The `top_k` distinct canonical subsets with the highest utility.
///
/// Ties go to the shorter subset, then to the lexicographically smaller
/// token list. The returned records hold canonical sequences.
pub fn select_seeds(records: &[SubsetRecord], top_k: usize) -> Result<Vec<SubsetRecord>> {
    if records.is_empty() {
        return Err(Error::EmptyRecords);
    }
    let mut best: HashMap<TokenSequence, f64> = HashMap::new();
    for r in records {
        let canon = canonicalize(&r.sequence);
        let entry = best.entry(canon).or_insert(r.utility);
        *entry = entry.max(r.utility);
    }
    let mut seeds: Vec<SubsetRecord> = best
        .into_iter()
        .map(|(sequence, utility)| SubsetRecord { sequence, utility })
        .collect();
    seeds.sort_by(|a, b| {
        b.utility
            .total_cmp(&a.utility)
            .then(a.sequence.len().cmp(&b.sequence.len()))
            .then_with(|| a.sequence.tokens().cmp(b.sequence.tokens()))
    });
    seeds.truncate(top_k);
    Ok(seeds)
}

/// Iterates `e ← e + η ∇f(e)` and returns the `steps` visited points,
/// excluding the start.
pub fn ascend(
    objective: &dyn LatentObjective,
    start: &[f64],
    eta: f64,
    steps: usize,
) -> Result<Vec<Vec<f64>>> {
    let mut e = start.to_vec();
    let mut trajectory = Vec::with_capacity(steps);
    for step in 1..=steps {
        let (_, grad) = objective.value_and_grad(&e)?;
        for (x, g) in e.iter_mut().zip(&grad) {
            *x += eta * g;
        }
        if e.iter().any(|x| !(x.abs() <= DIVERGENCE_LIMIT)) {
            return Err(Error::DivergenceAbort { step });
        }
        trajectory.push(e.clone());
    }
    Ok(trajectory)
}

/// One decoded and scored point of a trajectory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub seed_rank: usize,
    pub step: usize,
    pub tokens: TokenSequence,
    pub predicted_utility: f64,
    pub measured_utility: f64,
    /// Not part of the candidate dump.
    #[serde(skip)]
    pub f1: f64,
}

#[derive(Debug, Clone)]
pub struct SearchOutcome {
    pub best: Candidate,
    pub seeds: Vec<SubsetRecord>,
    /// Scored candidates, one per distinct canonical subset, in
    /// `(seed_rank, step)` order of first appearance.
    pub candidates: Vec<Candidate>,
    /// Decoded points, including empty and repeated decodes.
    pub decoded_points: usize,
}

/// Ascends from the embeddings of the best records, decodes the visited
/// points and returns the candidate with the highest measured utility.
///
/// Ties on utility go to the higher F1, then the smaller subset, then the
/// lexicographically smaller token list.
pub fn search_and_generate(
    records: &[SubsetRecord],
    model: &SeqModel,
    cfg: &SearchConfig,
    scorer: &dyn SubsetScorer,
) -> Result<SearchOutcome> {
    cfg.validate()?;
    let seeds = select_seeds(records, cfg.top_k)?;
    let sequences: Vec<TokenSequence> = seeds.iter().map(|s| s.sequence.clone()).collect();
    let starts: Vec<Vec<f64>> = model
        .encode_batch(&sequences)?
        .into_iter()
        .map(|lp| lp.deterministic())
        .collect();

    let trajectories: Vec<Vec<Vec<f64>>> = starts
        .par_iter()
        .map(|start| ascend(model, start, cfg.eta, cfg.steps))
        .collect::<Result<_>>()?;

    let decode_steps = cfg.decode_steps();
    let mut points: Vec<(usize, usize, &[f64])> = Vec::new();
    for (rank, (start, traj)) in starts.iter().zip(&trajectories).enumerate() {
        for &step in &decode_steps {
            let e = if step == 0 { start } else { &traj[step - 1] };
            points.push((rank, step, e.as_slice()));
        }
    }
    let latents: Vec<&[f64]> = points.iter().map(|p| p.2).collect();
    let decoded = model.generate_batch(&latents)?;

    let mut seen = HashSet::new();
    let mut pending = Vec::new();
    for ((rank, step, e), tokens) in points.iter().zip(decoded) {
        if tokens.is_empty() || !seen.insert(tokens.clone()) {
            continue;
        }
        pending.push((*rank, *step, *e, tokens));
    }
    if pending.is_empty() {
        return Err(Error::NoValidCandidate);
    }
    let candidates: Vec<Candidate> = pending
        .into_par_iter()
        .map(|(seed_rank, step, e, tokens)| {
            let Score { utility, f1 } = scorer.score(&tokens)?;
            Ok(Candidate {
                seed_rank,
                step,
                predicted_utility: model.predict_utility(e)?,
                measured_utility: utility,
                f1,
                tokens,
            })
        })
        .collect::<Result<_>>()?;

    let best = candidates
        .iter()
        .min_by(|a, b| {
            b.measured_utility
                .total_cmp(&a.measured_utility)
                .then(b.f1.total_cmp(&a.f1))
                .then(a.tokens.len().cmp(&b.tokens.len()))
                .then_with(|| a.tokens.tokens().cmp(b.tokens.tokens()))
        })
        .expect("candidate list is non-empty")
        .clone();
    Ok(SearchOutcome {
        best,
        seeds,
        candidates,
        decoded_points: points.len(),
    })
}

/// Writes one JSON object per candidate.
pub fn write_candidates(path: &Path, candidates: &[Candidate]) -> Result<()> {
    write_jsonl(candidates, path)
}
