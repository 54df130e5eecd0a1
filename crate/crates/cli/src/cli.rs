//! Argument parsing and subcommand dispatch.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use latsel::downstream::ClassifierKind;
use latsel::TokenSequence;

use crate::ablate::{ablate, AblationKind};
use crate::config::RunConfig;
use crate::error::{CliError, CliResult};
use crate::pipeline::{Run, SEARCH_FILE};
use crate::results::Manifest;

#[derive(Debug, Parser)]
#[command(name = "latsel", version, about = "Feature selection by search in a learned subset space")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct GlobalArgs {
    /// TOML run configuration, or a manifest JSON whose configuration is reused.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Master seed for every stage.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Dataset CSV.
    #[arg(long, global = true)]
    pub data: Option<PathBuf>,
    /// Records JSONL.
    #[arg(long, global = true)]
    pub records: Option<PathBuf>,
    /// Model checkpoint.
    #[arg(long, global = true)]
    pub checkpoint: Option<PathBuf>,
    /// Collector epochs for `collect`, training epochs everywhere else.
    #[arg(long, global = true)]
    pub epochs: Option<usize>,
    /// Collector epochs for `run-all` and `ablate`.
    #[arg(long, global = true)]
    pub collector_epochs: Option<usize>,
    /// Shuffled copies drawn per record.
    #[arg(long, global = true)]
    pub shuffles: Option<usize>,
    /// Number of search seeds.
    #[arg(long, global = true)]
    pub topk: Option<usize>,
    /// Gradient-ascent step size.
    #[arg(long, global = true)]
    pub eta: Option<f64>,
    /// Gradient-ascent iterations.
    #[arg(long, global = true)]
    pub steps: Option<usize>,
    /// Cross-validation folds.
    #[arg(long, global = true)]
    pub folds: Option<usize>,
    /// Downstream classifier: tree_ensemble or logistic.
    #[arg(long, global = true)]
    pub classifier: Option<String>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a synthetic dataset and its ground-truth sidecar.
    Synth,
    /// Collect subset records with the multi-agent collector.
    Collect,
    /// Add shuffled copies to a records file.
    Augment,
    /// Train the sequence model on a records file.
    Train,
    /// Search the latent space of a trained model for a better subset.
    Search,
    /// Cross-validate one subset.
    Evaluate {
        /// Comma-separated feature tokens. Defaults to the subset in the
        /// search result of the output directory.
        #[arg(long)]
        subset: Option<String>,
    },
    /// Collect, augment, train, search and evaluate in one go.
    RunAll,
    /// Run an ablation sweep.
    Ablate {
        #[arg(value_enum)]
        kind: AblationKind,
    },
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Synth => "synth",
            Command::Collect => "collect",
            Command::Augment => "augment",
            Command::Train => "train",
            Command::Search => "search",
            Command::Evaluate { .. } => "evaluate",
            Command::RunAll => "run-all",
            Command::Ablate { .. } => "ablate",
        }
    }
}

/// Builds the configuration from defaults, then the config file, then flags.
pub fn build_config(global: &GlobalArgs, command: &Command) -> CliResult<RunConfig> {
    let mut cfg = match &global.config {
        None => RunConfig::default(),
        Some(path) if path.extension().is_some_and(|e| e == "json") => Manifest::load(path)?.config,
        Some(path) => RunConfig::load(path)?,
    };
    if let Some(seed) = global.seed {
        cfg.seed = seed;
    }
    let paths = &mut cfg.paths;
    for (flag, slot) in [
        (&global.out, &mut paths.out),
        (&global.data, &mut paths.dataset),
        (&global.records, &mut paths.records),
        (&global.checkpoint, &mut paths.checkpoint),
    ] {
        if flag.is_some() {
            slot.clone_from(flag);
        }
    }
    if let Some(epochs) = global.epochs {
        match command {
            Command::Collect => cfg.collector.epochs = epochs,
            _ => cfg.train.epochs = epochs,
        }
    }
    if let Some(epochs) = global.collector_epochs {
        cfg.collector.epochs = epochs;
    }
    if let Some(s) = global.shuffles {
        cfg.augment.shuffles_per_record = s;
    }
    if let Some(k) = global.topk {
        cfg.search.top_k = k;
    }
    if let Some(eta) = global.eta {
        cfg.search.eta = eta;
    }
    if let Some(steps) = global.steps {
        cfg.search.steps = steps;
    }
    if let Some(folds) = global.folds {
        cfg.eval.folds = folds;
    }
    if let Some(kind) = &global.classifier {
        cfg.eval.classifier = kind
            .parse::<ClassifierKind>()
            .map_err(|e| CliError::Input(e.to_string()))?;
    }
    Ok(cfg)
}

fn parse_subset(text: &str) -> CliResult<TokenSequence> {
    let tokens = text
        .split(',')
        .map(|t| t.trim().parse::<u32>())
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| CliError::Input(format!("bad --subset `{text}`: {e}")))?;
    Ok(TokenSequence::new(tokens))
}

fn subset_from_search(dir: &std::path::Path) -> CliResult<TokenSequence> {
    let path = dir.join(SEARCH_FILE);
    let text = std::fs::read_to_string(&path).map_err(|e| {
        CliError::Input(format!("no --subset given and {} is unreadable: {e}", path.display()))
    })?;
    let value: serde_json::Value =
        serde_json::from_str(&text).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
    let tokens = value["subset"]
        .as_array()
        .and_then(|a| a.iter().map(|t| t.as_u64().map(|t| t as u32)).collect::<Option<Vec<_>>>())
        .ok_or_else(|| CliError::Input(format!("{}: no `subset` token list", path.display())))?;
    Ok(TokenSequence::new(tokens))
}

/// Runs one parsed command line and returns its one-line summary.
pub fn run(cli: Cli) -> CliResult<String> {
    let cfg = build_config(&cli.global, &cli.command)?;
    let mut run = Run::new(cfg)?;
    let out = run.out().to_path_buf();
    let summary = match &cli.command {
        Command::Synth => {
            let ds = run.synth(&out)?;
            format!("wrote {} samples x {} features to {}", ds.n_samples(), ds.n_features(), out.display())
        }
        Command::Collect => {
            let ds = run.require_dataset()?;
            let ev = run.evaluator(&ds)?;
            let records = run.collect(&out, &ev)?;
            format!("collected {} records", records.len())
        }
        Command::Augment => {
            let records = run.load_records()?;
            let shuffles = run.config().augment.shuffles_per_record;
            let augmented = run.augment(&out, &records, shuffles)?;
            format!("{} records after augmentation", augmented.len())
        }
        Command::Train => {
            let ds = run.require_dataset()?;
            let records = run.load_records()?;
            let model_cfg = run.config().model.clone();
            run.train(&out, &records, ds.n_features(), &model_cfg)?;
            format!("trained on {} records", records.len())
        }
        Command::Search => {
            let ds = run.require_dataset()?;
            let records = run.load_records()?;
            let model = run.load_checkpoint()?;
            let ev = run.evaluator(&ds)?;
            let outcome = run.search(&out, &records, &model, &ev)?;
            format!(
                "best subset {} with utility {:.4} from {} candidates",
                outcome.best.tokens,
                outcome.best.measured_utility,
                outcome.candidates.len()
            )
        }
        Command::Evaluate { subset } => {
            let ds = run.require_dataset()?;
            let subset = match subset {
                Some(text) => parse_subset(text)?,
                None => subset_from_search(&out)?,
            };
            let ev = run.evaluator(&ds)?;
            let m = run.evaluate_to_file(&out, &ev, &subset)?;
            format!(
                "precision {:.4} recall {:.4} f1 {:.4} auc {:.4} accuracy {:.4}",
                m.precision, m.recall, m.f1, m.auc, m.accuracy
            )
        }
        Command::RunAll => {
            let r = run.run_all()?;
            format!(
                "chosen {} features: f1 {:.4} (ftest {:.4}, original {:.4})",
                r.chosen.subset_size, r.chosen.f1, r.ftest.f1, r.original.f1
            )
        }
        Command::Ablate { kind } => {
            let rows = ablate(&mut run, *kind)?;
            rows.iter()
                .map(|r| format!("{} f1 {:.4}", r.arm, r.f1))
                .collect::<Vec<_>>()
                .join("; ")
        }
    };
    let name = match &cli.command {
        Command::Ablate { kind } => format!("ablate-{}", kind.name()),
        other => other.name().to_string(),
    };
    run.finish(&name)?;
    Ok(summary)
}
