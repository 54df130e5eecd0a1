//! Pipeline stages. Each stage writes its artifacts under the output
//! directory and records its wall time for the manifest.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use latsel::augment::shuffle_augment;
use latsel::collector::{collect, random_collect, write_episode_log};
use latsel::downstream::{baseline_ftest, SubsetEvaluator};
use latsel::record::{load_records, save_records};
use latsel::search::{search_and_generate, write_candidates, SearchOutcome};
use latsel::seqmodel::{
    load_checkpoint, save_checkpoint, train, write_training_curve, ModelConfig, SeqModel,
};
use latsel::synth::generate;
use latsel::{MetricsReport, SubsetRecord, TabularDataset, TokenSequence};
use serde::Serialize;

use crate::config::RunConfig;
use crate::error::{CliError, CliResult, StageContext};
use crate::results::{
    sha256_file, write_json, DatasetSummary, Manifest, MetricsBlock, RunResults, SearchSummary,
    StageTiming, MANIFEST_SCHEMA_VERSION, RESULTS_SCHEMA_VERSION,
};

pub const DATASET_FILE: &str = "dataset.csv";
pub const GROUND_TRUTH_FILE: &str = "ground_truth.json";
pub const RECORDS_FILE: &str = "records.jsonl";
pub const EPISODES_FILE: &str = "episodes.csv";
pub const AUGMENTED_FILE: &str = "augmented.jsonl";
pub const CHECKPOINT_FILE: &str = "model.safetensors";
pub const CURVE_FILE: &str = "training_curve.csv";
pub const CANDIDATES_FILE: &str = "candidates.jsonl";
pub const SEARCH_FILE: &str = "search.json";
pub const METRICS_FILE: &str = "metrics.json";
pub const RESULTS_FILE: &str = "results.json";

/// One command invocation: the resolved configuration plus the bookkeeping
/// needed for its manifest.
pub struct Run {
    cfg: RunConfig,
    out: PathBuf,
    timings: Vec<StageTiming>,
    outputs: Vec<PathBuf>,
}

/// Best candidate of a search, as written to `search.json`.
#[derive(Debug, Clone, Serialize)]
pub struct SearchReport {
    pub subset: Vec<u32>,
    pub predicted_utility: f64,
    pub measured_utility: f64,
    pub seed_rank: usize,
    pub step: usize,
    pub seeds: usize,
    pub decoded_points: usize,
    pub candidates: usize,
}

impl Run {
    pub fn new(cfg: RunConfig) -> CliResult<Self> {
        let cfg = cfg.resolve()?;
        let out = cfg.out_dir();
        std::fs::create_dir_all(&out)
            .map_err(|e| CliError::Input(format!("cannot create output directory {}: {e}", out.display())))?;
        Ok(Self {
            cfg,
            out,
            timings: Vec::new(),
            outputs: Vec::new(),
        })
    }

    pub fn config(&self) -> &RunConfig {
        &self.cfg
    }

    pub fn out(&self) -> &Path {
        &self.out
    }

    /// Creates `name` under the output directory and returns its path.
    pub fn subdir(&self, name: &str) -> CliResult<PathBuf> {
        let dir = self.out.join(name);
        std::fs::create_dir_all(&dir).map_err(|e| CliError::write(&dir, e))?;
        Ok(dir)
    }

    fn timed<T>(&mut self, stage: &str, f: impl FnOnce(&mut Self) -> CliResult<T>) -> CliResult<T> {
        let start = Instant::now();
        let value = f(self)?;
        let seconds = start.elapsed().as_secs_f64();
        log::info!("{stage} finished in {seconds:.1}s");
        self.timings.push(StageTiming {
            stage: stage.to_string(),
            seconds,
        });
        Ok(value)
    }

    fn output(&mut self, path: PathBuf) -> PathBuf {
        self.outputs.push(path.clone());
        path
    }

    fn input_path(given: Option<&PathBuf>, what: &str) -> CliResult<PathBuf> {
        given
            .cloned()
            .ok_or_else(|| CliError::Input(format!("no {what} given")))
    }

    /// Generates the synthetic dataset and its ground-truth sidecar.
    pub fn synth(&mut self, dir: &Path) -> CliResult<TabularDataset> {
        self.timed("synth", |run| {
            let (ds, truth) = generate(&run.cfg.synth).stage("synth")?;
            ds.save_csv(run.output(dir.join(DATASET_FILE))).stage("synth")?;
            truth.save(run.output(dir.join(GROUND_TRUTH_FILE))).stage("synth")?;
            Ok(ds)
        })
    }

    /// Loads `paths.dataset`, or synthesizes a dataset when it is unset.
    pub fn dataset(&mut self) -> CliResult<TabularDataset> {
        match self.cfg.paths.dataset.clone() {
            Some(path) => self.load_dataset(&path),
            None => {
                let out = self.out.clone();
                self.synth(&out)
            }
        }
    }

    pub fn require_dataset(&mut self) -> CliResult<TabularDataset> {
        let path = Self::input_path(self.cfg.paths.dataset.as_ref(), "dataset (use --data)")?;
        self.load_dataset(&path)
    }

    fn load_dataset(&mut self, path: &Path) -> CliResult<TabularDataset> {
        self.timed("load", |_| TabularDataset::load_csv(path).stage("load"))
    }

    pub fn load_records(&mut self) -> CliResult<Vec<SubsetRecord>> {
        let path = Self::input_path(self.cfg.paths.records.as_ref(), "records file (use --records)")?;
        self.timed("load", |_| load_records(&path).stage("load"))
    }

    pub fn load_checkpoint(&mut self) -> CliResult<SeqModel> {
        let path = Self::input_path(self.cfg.paths.checkpoint.as_ref(), "checkpoint (use --checkpoint)")?;
        self.timed("load", |_| load_checkpoint(&path).stage("load"))
    }

    pub fn evaluator<'a>(&self, ds: &'a TabularDataset) -> CliResult<SubsetEvaluator<'a>> {
        SubsetEvaluator::new(ds, self.cfg.eval.clone()).stage("evaluate")
    }

    pub fn collect(&mut self, dir: &Path, ev: &SubsetEvaluator) -> CliResult<Vec<SubsetRecord>> {
        self.timed("collect", |run| {
            let (records, log) = collect(ev.dataset(), &run.cfg.collector, ev).stage("collect")?;
            save_records(&records, run.output(dir.join(RECORDS_FILE))).stage("collect")?;
            write_episode_log(&log, run.output(dir.join(EPISODES_FILE))).stage("collect")?;
            Ok(records)
        })
    }

    /// Random control collector run for `epochs` epochs.
    pub fn random_collect(
        &mut self,
        dir: &Path,
        ev: &SubsetEvaluator,
        epochs: usize,
    ) -> CliResult<Vec<SubsetRecord>> {
        self.timed("random_collect", |run| {
            let records = random_collect(ev.dataset(), epochs, run.cfg.collector.seed, ev)
                .stage("random_collect")?;
            save_records(&records, run.output(dir.join(RECORDS_FILE))).stage("random_collect")?;
            Ok(records)
        })
    }

    pub fn augment(
        &mut self,
        dir: &Path,
        records: &[SubsetRecord],
        shuffles: usize,
    ) -> CliResult<Vec<SubsetRecord>> {
        self.timed("augment", |run| {
            let mut cfg = run.cfg.augment.clone();
            cfg.shuffles_per_record = shuffles;
            let augmented = shuffle_augment(records, &cfg);
            save_records(&augmented, run.output(dir.join(AUGMENTED_FILE))).stage("augment")?;
            Ok(augmented)
        })
    }

    pub fn train(
        &mut self,
        dir: &Path,
        records: &[SubsetRecord],
        n_features: usize,
        model_cfg: &ModelConfig,
    ) -> CliResult<SeqModel> {
        self.timed("train", |run| {
            let vocab = latsel::Vocabulary::new(n_features);
            let (model, curve) = train(records, &vocab, model_cfg, &run.cfg.train).stage("train")?;
            save_checkpoint(&model, &run.output(dir.join(CHECKPOINT_FILE))).stage("train")?;
            write_training_curve(&run.output(dir.join(CURVE_FILE)), &curve).stage("train")?;
            Ok(model)
        })
    }

    pub fn search(
        &mut self,
        dir: &Path,
        records: &[SubsetRecord],
        model: &SeqModel,
        ev: &SubsetEvaluator,
    ) -> CliResult<SearchOutcome> {
        if model.n_features() != ev.dataset().n_features() {
            return Err(CliError::Input(format!(
                "checkpoint has {} features but the dataset has {}",
                model.n_features(),
                ev.dataset().n_features()
            )));
        }
        self.timed("search", |run| {
            let outcome = search_and_generate(records, model, &run.cfg.search, ev).stage("search")?;
            write_candidates(&run.output(dir.join(CANDIDATES_FILE)), &outcome.candidates)
                .stage("search")?;
            let best = &outcome.best;
            let report = SearchReport {
                subset: best.tokens.tokens().to_vec(),
                predicted_utility: best.predicted_utility,
                measured_utility: best.measured_utility,
                seed_rank: best.seed_rank,
                step: best.step,
                seeds: outcome.seeds.len(),
                decoded_points: outcome.decoded_points,
                candidates: outcome.candidates.len(),
            };
            write_json(&run.output(dir.join(SEARCH_FILE)), &report)?;
            Ok(outcome)
        })
    }

    pub fn evaluate(&mut self, ev: &SubsetEvaluator, subset: &TokenSequence) -> CliResult<MetricsReport> {
        self.timed("evaluate", |_| ev.evaluate(subset).stage("evaluate"))
    }

    /// Evaluates `subset` and writes the metrics JSON.
    pub fn evaluate_to_file(
        &mut self,
        dir: &Path,
        ev: &SubsetEvaluator,
        subset: &TokenSequence,
    ) -> CliResult<MetricsBlock> {
        let subset = latsel::sequence::canonicalize(subset);
        let block = MetricsBlock::new(&subset, self.evaluate(ev, &subset)?);
        write_json(&self.output(dir.join(METRICS_FILE)), &block)?;
        Ok(block)
    }

    /// Collect, augment, train, search and evaluate, then compare the chosen
    /// subset with the F-test baseline of equal size and with all features.
    pub fn run_all(&mut self) -> CliResult<RunResults> {
        let dir = self.out.clone();
        let ds = self.dataset()?;
        let ev = self.evaluator(&ds)?;
        let records = self.collect(&dir, &ev)?;
        let shuffles = self.cfg.augment.shuffles_per_record;
        let augmented = self.augment(&dir, &records, shuffles)?;
        let model_cfg = self.cfg.model.clone();
        let model = self.train(&dir, &augmented, ds.n_features(), &model_cfg)?;
        let outcome = self.search(&dir, &records, &model, &ev)?;

        let chosen = outcome.best.tokens.clone();
        let ftest = baseline_ftest(&ds, chosen.len()).stage("evaluate")?;
        let all = TokenSequence::from_columns(&ds.vocabulary(), 0..ds.n_features());
        let results = RunResults {
            schema_version: RESULTS_SCHEMA_VERSION,
            seed: self.cfg.seed,
            dataset: DatasetSummary {
                n_samples: ds.n_samples(),
                n_features: ds.n_features(),
                positives: ds.class_counts()[1],
            },
            collected_records: records.len(),
            augmented_records: augmented.len(),
            search: SearchSummary {
                seeds: outcome.seeds.len(),
                best_seed_utility: outcome.seeds[0].utility,
                decoded_points: outcome.decoded_points,
                candidates: outcome.candidates.len(),
                predicted_utility: outcome.best.predicted_utility,
                measured_utility: outcome.best.measured_utility,
            },
            chosen: MetricsBlock::new(&chosen, self.evaluate(&ev, &chosen)?),
            ftest: MetricsBlock::new(&ftest, self.evaluate(&ev, &ftest)?),
            original: MetricsBlock::new(&all, self.evaluate(&ev, &all)?),
        };
        let path = self.output(dir.join(RESULTS_FILE));
        results.write(&path, self.cfg.eval.folds)?;
        Ok(results)
    }

    /// Hashes every output and writes `manifest-<command>.json`.
    pub fn finish(self, command: &str) -> CliResult<Manifest> {
        let mut outputs = BTreeMap::new();
        for path in &self.outputs {
            let key = path
                .strip_prefix(&self.out)
                .unwrap_or(path)
                .to_string_lossy()
                .replace('\\', "/");
            outputs.insert(key, sha256_file(path)?);
        }
        let manifest = Manifest {
            schema_version: MANIFEST_SCHEMA_VERSION,
            command: command.to_string(),
            seed: self.cfg.seed,
            config: self.cfg,
            timings: self.timings,
            outputs,
        };
        write_json(&self.out.join(manifest_name(command)), &manifest)?;
        Ok(manifest)
    }

    pub(crate) fn record_output(&mut self, path: PathBuf) -> PathBuf {
        self.output(path)
    }
}

pub fn manifest_name(command: &str) -> String {
    format!("manifest-{command}.json")
}
