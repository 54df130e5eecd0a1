//! Ablation sweeps: shuffle count, collector kind and the variational flag.

use std::path::Path;

use latsel::downstream::SubsetEvaluator;
use latsel::seqmodel::ModelConfig;
use latsel::{SubsetRecord, TokenSequence};
use plotters::prelude::*;
use serde::Serialize;

use crate::error::{CliError, CliResult};
use crate::pipeline::Run;

/// Shuffle counts of the augmentation sweep.
pub const SHUFFLE_SWEEP: [usize; 4] = [0, 5, 10, 25];

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum AblationKind {
    Shuffle,
    Collector,
    Variational,
}

impl AblationKind {
    pub fn name(self) -> &'static str {
        match self {
            AblationKind::Shuffle => "shuffle",
            AblationKind::Collector => "collector",
            AblationKind::Variational => "variational",
        }
    }
}

/// One bar of an ablation plot.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AblationRow {
    pub arm: String,
    pub records: usize,
    pub subset_size: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub auc: f64,
    pub accuracy: f64,
}

impl AblationRow {
    fn measure(run: &mut Run, ev: &SubsetEvaluator, arm: &str, records: usize, subset: &TokenSequence) -> CliResult<Self> {
        let m = run.evaluate(ev, subset)?;
        Ok(Self {
            arm: arm.to_string(),
            records,
            subset_size: subset.len(),
            precision: m.precision,
            recall: m.recall,
            f1: m.f1,
            auc: m.auc,
            accuracy: m.accuracy,
        })
    }
}

/// Augments, trains and searches from `records` in the subdirectory `arm`
/// and returns the row of the chosen subset.
fn arm(
    run: &mut Run,
    ev: &SubsetEvaluator,
    arm: &str,
    records: &[SubsetRecord],
    shuffles: usize,
    model_cfg: &ModelConfig,
) -> CliResult<AblationRow> {
    let dir = run.subdir(arm)?;
    let augmented = run.augment(&dir, records, shuffles)?;
    let model = run.train(&dir, &augmented, ev.dataset().n_features(), model_cfg)?;
    let outcome = run.search(&dir, records, &model, ev)?;
    AblationRow::measure(run, ev, arm, records.len(), &outcome.best.tokens)
}

/// Runs the sweep of `kind` and writes `ablate-<kind>.csv` and
/// `ablate-<kind>.svg`.
pub fn ablate(run: &mut Run, kind: AblationKind) -> CliResult<Vec<AblationRow>> {
    let ds = run.dataset()?;
    let ev = run.evaluator(&ds)?;
    let out = run.out().to_path_buf();
    let records = run.collect(&out, &ev)?;
    let shuffles = run.config().augment.shuffles_per_record;
    let model_cfg = run.config().model.clone();

    let rows = match kind {
        AblationKind::Shuffle => SHUFFLE_SWEEP
            .iter()
            .map(|&s| arm(run, &ev, &format!("S={s}"), &records, s, &model_cfg))
            .collect::<CliResult<Vec<_>>>()?,
        AblationKind::Collector => {
            let rl = arm(run, &ev, "rl", &records, shuffles, &model_cfg)?;
            let dir = run.subdir("random")?;
            let random = run.random_collect(&dir, &ev, records.len())?;
            let random = arm(run, &ev, "random", &random, shuffles, &model_cfg)?;
            let all = TokenSequence::from_columns(&ds.vocabulary(), 0..ds.n_features());
            let original = AblationRow::measure(run, &ev, "original", 0, &all)?;
            vec![rl, random, original]
        }
        AblationKind::Variational => [true, false]
            .iter()
            .map(|&variational| {
                let cfg = ModelConfig {
                    variational,
                    ..model_cfg.clone()
                };
                let name = if variational { "variational" } else { "deterministic" };
                arm(run, &ev, name, &records, shuffles, &cfg)
            })
            .collect::<CliResult<Vec<_>>>()?,
    };

    let csv_path = run.record_output(out.join(format!("ablate-{}.csv", kind.name())));
    write_rows(&csv_path, &rows)?;
    let svg_path = run.record_output(out.join(format!("ablate-{}.svg", kind.name())));
    plot_rows(&svg_path, &rows, &format!("{} ablation", kind.name()))?;
    Ok(rows)
}

fn write_rows(path: &Path, rows: &[AblationRow]) -> CliResult<()> {
    let write = || -> Result<(), csv::Error> {
        let mut w = csv::Writer::from_path(path)?;
        for r in rows {
            w.serialize(r)?;
        }
        w.flush()?;
        Ok(())
    };
    write().map_err(|e| CliError::write(path, e))
}

/// Bar chart of F1 per arm.
pub fn plot_rows(path: &Path, rows: &[AblationRow], title: &str) -> CliResult<()> {
    let draw = || -> Result<(), Box<dyn std::error::Error>> {
        let root = SVGBackend::new(path, (640, 420)).into_drawing_area();
        root.fill(&WHITE)?;
        let n = rows.len() as f64;
        let mut chart = ChartBuilder::on(&root)
            .caption(title, ("sans-serif", 22))
            .margin(16)
            .x_label_area_size(36)
            .y_label_area_size(48)
            .build_cartesian_2d(0.0..n, 0.0..1.0)?;
        let labels: Vec<String> = rows.iter().map(|r| r.arm.clone()).collect();
        chart
            .configure_mesh()
            .disable_x_mesh()
            .x_labels(rows.len() * 2 + 1)
            .x_label_formatter(&|x| {
                let centre = x - 0.5;
                let i = centre.round();
                if (centre - i).abs() < 1e-6 && i >= 0.0 && (i as usize) < labels.len() {
                    labels[i as usize].clone()
                } else {
                    String::new()
                }
            })
            .y_desc("F1")
            .draw()?;
        chart.draw_series(rows.iter().enumerate().map(|(i, r)| {
            let x = i as f64;
            Rectangle::new([(x + 0.2, 0.0), (x + 0.8, r.f1)], BLUE.mix(0.7).filled())
        }))?;
        root.present()?;
        Ok(())
    };
    draw().map_err(|e| CliError::write(path, e))
}
