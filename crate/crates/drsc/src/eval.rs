//! Evaluation: accuracy, confusion matrices, and the grid experiments that
//! compare criteria, methods, loss ablations, and transcription noise.

use std::path::{Path, PathBuf};

use crate::autograd::Tape;
use crate::config::{DistanceCriterion, LossWeights, Method, RunConfig};
use crate::dataio::{Example, TextSource};
use crate::error::{Error, Result};
use crate::model::{DrscModel, ParamStore};
use crate::rng::SeededRng;
use crate::train::{fit, load_data, AnyModel, Checkpoint};

/// Row-major counts: `counts[truth * n + predicted]`.
#[derive(Clone, Debug, PartialEq)]
pub struct ConfusionMatrix {
    pub n: usize,
    pub counts: Vec<u64>,
}

impl ConfusionMatrix {
    pub fn new(n: usize) -> ConfusionMatrix {
        ConfusionMatrix { n, counts: vec![0; n * n] }
    }

    pub fn record(&mut self, truth: usize, predicted: usize) {
        assert!(truth < self.n && predicted < self.n, "class id out of range");
        self.counts[truth * self.n + predicted] += 1;
    }

    pub fn get(&self, truth: usize, predicted: usize) -> u64 {
        self.counts[truth * self.n + predicted]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn correct(&self) -> u64 {
        (0..self.n).map(|i| self.counts[i * self.n + i]).sum()
    }

    pub fn accuracy(&self) -> f64 {
        let total = self.total();
        if total == 0 {
            return 0.0;
        }
        self.correct() as f64 / total as f64
    }

    /// CSV with a header row/column of class names.
    pub fn write_csv(&self, path: &Path, class_names: &[String]) -> Result<()> {
        assert_eq!(class_names.len(), self.n, "need one name per class");
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent)?;
        }
        let mut w = csv::Writer::from_path(path)?;
        let mut header = vec!["true\\pred".to_string()];
        header.extend_from_slice(class_names);
        w.write_record(&header)?;
        for t in 0..self.n {
            let mut row = vec![class_names[t].clone()];
            row.extend((0..self.n).map(|p| self.get(t, p).to_string()));
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Heatmap PNG; each class cell is a `cell`×`cell` block, shaded by its
    /// share of the true-class row (dark blue = 0, yellow = 1).
    pub fn write_png(&self, path: &Path) -> Result<()> {
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent)?;
        }
        let cell = (512 / self.n.max(1)).clamp(4, 32) as u32;
        let size = cell * self.n as u32;
        let mut img = image::RgbImage::new(size.max(1), size.max(1));
        let row_totals: Vec<u64> =
            (0..self.n).map(|t| (0..self.n).map(|p| self.get(t, p)).sum()).collect();
        for t in 0..self.n {
            for p in 0..self.n {
                let frac = if row_totals[t] == 0 {
                    0.0
                } else {
                    self.get(t, p) as f64 / row_totals[t] as f64
                };
                let px = heat_color(frac);
                for dy in 0..cell {
                    for dx in 0..cell {
                        img.put_pixel(p as u32 * cell + dx, t as u32 * cell + dy, px);
                    }
                }
            }
        }
        img.save(path).map_err(|e| Error::Data(format!("writing {}: {e}", path.display())))?;
        Ok(())
    }
}

/// Dark blue → teal → yellow ramp over [0, 1].
fn heat_color(frac: f64) -> image::Rgb<u8> {
    let f = frac.clamp(0.0, 1.0);
    let r = (255.0 * f.powf(1.5)) as u8;
    let g = (235.0 * f.powf(0.75)) as u8;
    let b = (80.0 + 100.0 * (1.0 - f)) as u8;
    image::Rgb([r, g, b])
}

/// Accuracy and confusion over a labelled set.
#[derive(Clone, Debug)]
pub struct EvalOutcome {
    pub accuracy: f64,
    pub confusion: ConfusionMatrix,
}

/// Run the model over every example (inference mode: no sampling, no
/// dropout) and tally predictions against labels.
pub fn evaluate(
    model: &AnyModel,
    params: &ParamStore,
    examples: &[Example],
    n_classes: usize,
) -> Result<EvalOutcome> {
    let mut confusion = ConfusionMatrix::new(n_classes);
    for ex in examples {
        let tape = Tape::new();
        let bound = params.bind(&tape);
        let pred = model.predict(&tape, &bound, ex)?;
        confusion.record(ex.label, pred);
    }
    Ok(EvalOutcome { accuracy: confusion.accuracy(), confusion })
}

/// Fraction of cross-class example pairs whose prediction moves to the
/// intent donor's class when content and intent are recombined across the
/// pair. High values mean the class signal travels in the intent code.
pub fn intent_swap_flip_rate(
    model: &DrscModel,
    params: &ParamStore,
    examples: &[Example],
    n_pairs: usize,
    rng: &mut SeededRng,
) -> Result<f64> {
    if examples.len() < 2 {
        return Err(Error::Data("need at least two examples to swap intents".into()));
    }
    let mut flips = 0usize;
    let mut done = 0usize;
    let mut attempts = 0usize;
    while done < n_pairs {
        attempts += 1;
        if attempts > n_pairs.saturating_mul(50) {
            return Err(Error::Data("could not sample enough cross-class pairs".into()));
        }
        let i = rng.below(examples.len());
        let j = rng.below(examples.len());
        if examples[i].label == examples[j].label {
            continue;
        }
        let tape = Tape::new();
        let bound = params.bind(&tape);
        let pred = model.predict_with_swapped_intent(
            &tape,
            &bound,
            &examples[i].text,
            &examples[i].mel,
            &examples[j].text,
            &examples[j].mel,
        )?;
        if pred == examples[j].label {
            flips += 1;
        }
        done += 1;
    }
    Ok(flips as f64 / done as f64)
}

/// Re-evaluate a finished run from its saved checkpoint. `which` selects
/// `best.bin` or `last.bin`; `eval_text` optionally replaces the test-side
/// transcription source (e.g. to measure noise robustness post hoc).
pub fn evaluate_run(
    run_dir: &Path,
    which: &str,
    eval_text: Option<&TextSource>,
) -> Result<(EvalOutcome, Vec<String>)> {
    let mut cfg = RunConfig::load(&run_dir.join("config.json"))?;
    if let Some(t) = eval_text {
        cfg.eval_text = t.clone();
    }
    let (dataset, _) = load_data(&cfg)?;
    let model = AnyModel::from_config(&cfg)?;
    let ck = Checkpoint::load(&run_dir.join(format!("{which}.bin")))?;
    let outcome = evaluate(&model, &ck.params, &dataset.test, dataset.n_classes)?;
    Ok((outcome, dataset.class_names))
}

/// What one training run leaves behind, beyond its checkpoints.
#[derive(Clone, Debug, serde::Serialize)]
pub struct RunSummary {
    pub run_dir: PathBuf,
    pub best_test_accuracy: f64,
    pub final_test_accuracy: f64,
    pub best_epoch: u64,
    pub steps: u64,
}

/// Train, then score the best checkpoint and write `summary.json`,
/// `confusion.csv`, and `confusion.png` into the run directory.
pub fn run_and_report(cfg: &RunConfig, resume: Option<&Path>, force: bool) -> Result<RunSummary> {
    let report = fit(cfg, resume, force)?;
    let (outcome, class_names) = evaluate_run(&report.out_dir, "best", None)?;
    outcome.confusion.write_csv(&report.out_dir.join("confusion.csv"), &class_names)?;
    outcome.confusion.write_png(&report.out_dir.join("confusion.png"))?;
    let summary = RunSummary {
        run_dir: report.out_dir.clone(),
        best_test_accuracy: outcome.accuracy,
        final_test_accuracy: report.final_test_accuracy,
        best_epoch: report.best_epoch,
        steps: report.steps,
    };
    std::fs::write(
        report.out_dir.join("summary.json"),
        serde_json::to_string_pretty(&summary)? + "\n",
    )?;
    Ok(summary)
}

/// A rows × columns grid of mean test accuracies (percent), with the
/// per-seed values that produced each mean.
#[derive(Clone, Debug, serde::Serialize)]
pub struct GridResult {
    pub experiment: String,
    pub row_labels: Vec<String>,
    pub col_labels: Vec<String>,
    /// `values[row][col]`, percent.
    pub values: Vec<Vec<f64>>,
    /// `per_seed[row][col][seed_index]`, percent.
    pub per_seed: Vec<Vec<Vec<f64>>>,
}

impl GridResult {
    pub fn get(&self, row: &str, col: &str) -> f64 {
        let r = self.row_labels.iter().position(|l| l == row).expect("no such row");
        let c = self.col_labels.iter().position(|l| l == col).expect("no such column");
        self.values[r][c]
    }

    pub fn markdown(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("| {} |", self.experiment));
        for c in &self.col_labels {
            out.push_str(&format!(" {c} |"));
        }
        out.push('\n');
        out.push_str("|---|");
        for _ in &self.col_labels {
            out.push_str("---|");
        }
        out.push('\n');
        for (r, row) in self.row_labels.iter().enumerate() {
            out.push_str(&format!("| {row} |"));
            for c in 0..self.col_labels.len() {
                out.push_str(&format!(" {:.2} |", self.values[r][c]));
            }
            out.push('\n');
        }
        out
    }

    /// Write `summary.json` and `table.md` under `dir`.
    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("summary.json"), serde_json::to_string_pretty(self)? + "\n")?;
        std::fs::write(dir.join("table.md"), self.markdown())?;
        Ok(())
    }
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Train one grid cell at every seed; returns best-checkpoint accuracies
/// in percent.
fn run_cell(base: &RunConfig, cell: &str, seeds: &[u64], exp_dir: &Path) -> Result<Vec<f64>> {
    let mut accs = Vec::with_capacity(seeds.len());
    for &seed in seeds {
        let cfg = RunConfig {
            out_dir: exp_dir.join(cell).join(format!("seed_{seed}")),
            train: crate::config::TrainConfig { seed, ..base.train.clone() },
            ..base.clone()
        };
        let summary = run_and_report(&cfg, None, false)?;
        accs.push(100.0 * summary.best_test_accuracy);
    }
    Ok(accs)
}

/// Distance-criterion comparison for the disentangling model.
pub fn run_criterion_sweep(base: &RunConfig, seeds: &[u64], out: &Path) -> Result<GridResult> {
    let criteria =
        [DistanceCriterion::L1, DistanceCriterion::L2, DistanceCriterion::Cosine];
    let mut per_seed = vec![Vec::new()];
    for criterion in criteria {
        let cfg = RunConfig { method: Method::Drsc, criterion, ..base.clone() };
        per_seed[0].push(run_cell(&cfg, &format!("criterion_{criterion}"), seeds, out)?);
    }
    let grid = GridResult {
        experiment: "criterion".into(),
        row_labels: vec!["drsc".into()],
        col_labels: criteria.iter().map(|c| c.to_string()).collect(),
        values: vec![per_seed[0].iter().map(|v| mean(v)).collect()],
        per_seed,
    };
    grid.save(out)?;
    Ok(grid)
}

/// Method comparison: the three baseline modes against the full model.
pub fn run_method_comparison(base: &RunConfig, seeds: &[u64], out: &Path) -> Result<GridResult> {
    let methods = [Method::TxtOnly, Method::MelOnly, Method::Combined, Method::Drsc];
    let mut per_seed = vec![Vec::new()];
    for method in methods {
        let cfg = RunConfig { method, ..base.clone() };
        per_seed[0].push(run_cell(&cfg, &format!("method_{method}"), seeds, out)?);
    }
    let grid = GridResult {
        experiment: "methods".into(),
        row_labels: vec!["accuracy".into()],
        col_labels: methods.iter().map(|m| m.to_string()).collect(),
        values: vec![per_seed[0].iter().map(|v| mean(v)).collect()],
        per_seed,
    };
    grid.save(out)?;
    Ok(grid)
}

/// Loss ablation: the three core terms alone versus the full objective.
pub fn run_loss_ablation(base: &RunConfig, seeds: &[u64], out: &Path) -> Result<GridResult> {
    let variants = [
        ("core_terms", LossWeights::without_additional()),
        ("full", LossWeights::full()),
    ];
    let mut per_seed = vec![Vec::new()];
    for (name, weights) in &variants {
        let cfg = RunConfig { method: Method::Drsc, weights: *weights, ..base.clone() };
        per_seed[0].push(run_cell(&cfg, &format!("weights_{name}"), seeds, out)?);
    }
    let grid = GridResult {
        experiment: "ablation".into(),
        row_labels: vec!["drsc".into()],
        col_labels: variants.iter().map(|(n, _)| n.to_string()).collect(),
        values: vec![per_seed[0].iter().map(|v| mean(v)).collect()],
        per_seed,
    };
    grid.save(out)?;
    Ok(grid)
}

/// Transcription-noise robustness: train on accurate text, evaluate the
/// same checkpoints on accurate and on corrupted test transcriptions.
pub fn run_noise_robustness(
    base: &RunConfig,
    seeds: &[u64],
    out: &Path,
    target_wer: f64,
) -> Result<GridResult> {
    let methods = [Method::TxtOnly, Method::Combined, Method::Drsc];
    let corrupted = RunConfig::corrupted_text(target_wer);
    let mut accurate_rows = Vec::new();
    let mut corrupted_rows = Vec::new();
    for method in methods {
        let cfg = RunConfig {
            method,
            train_text: TextSource::Accurate,
            eval_text: TextSource::Accurate,
            ..base.clone()
        };
        let cell = format!("method_{method}");
        let accurate_accs = run_cell(&cfg, &cell, seeds, out)?;
        let mut corrupted_accs = Vec::with_capacity(seeds.len());
        for &seed in seeds {
            let run_dir = out.join(&cell).join(format!("seed_{seed}"));
            let (outcome, _) = evaluate_run(&run_dir, "best", Some(&corrupted))?;
            corrupted_accs.push(100.0 * outcome.accuracy);
        }
        accurate_rows.push(accurate_accs);
        corrupted_rows.push(corrupted_accs);
    }
    let grid = GridResult {
        experiment: "robustness".into(),
        row_labels: vec!["accurate".into(), "corrupted".into()],
        col_labels: methods.iter().map(|m| m.to_string()).collect(),
        values: vec![
            accurate_rows.iter().map(|v| mean(v)).collect(),
            corrupted_rows.iter().map(|v| mean(v)).collect(),
        ],
        per_seed: vec![accurate_rows, corrupted_rows],
    };
    grid.save(out)?;
    Ok(grid)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn accuracy_counts_diagonal() {
        let mut cm = ConfusionMatrix::new(3);
        cm.record(0, 0);
        cm.record(0, 0);
        cm.record(1, 2);
        cm.record(2, 2);
        assert_eq!(cm.total(), 4);
        assert_eq!(cm.correct(), 3);
        assert!((cm.accuracy() - 0.75).abs() < 1e-12);
        assert_eq!(cm.get(1, 2), 1);
        assert_eq!(cm.get(2, 1), 0);
    }

    #[test]
    fn empty_matrix_has_zero_accuracy() {
        assert_eq!(ConfusionMatrix::new(4).accuracy(), 0.0);
    }

    #[test]
    fn csv_and_png_are_written() {
        let dir = tempfile::tempdir().unwrap();
        let mut cm = ConfusionMatrix::new(2);
        cm.record(0, 0);
        cm.record(1, 0);
        let names = vec!["a".to_string(), "b".to_string()];
        let csv_path = dir.path().join("cm.csv");
        let png_path = dir.path().join("cm.png");
        cm.write_csv(&csv_path, &names).unwrap();
        cm.write_png(&png_path).unwrap();
        let text = std::fs::read_to_string(&csv_path).unwrap();
        assert!(text.contains("a,1,0"), "{text}");
        assert!(text.contains("b,1,0"), "{text}");
        let img = image::open(&png_path).unwrap();
        assert!(img.width() > 0 && img.height() > 0);
    }

    #[test]
    fn grid_markdown_renders_labels_and_values() {
        let grid = GridResult {
            experiment: "demo".into(),
            row_labels: vec!["r0".into()],
            col_labels: vec!["c0".into(), "c1".into()],
            values: vec![vec![12.5, 99.0]],
            per_seed: vec![vec![vec![12.5], vec![99.0]]],
        };
        let md = grid.markdown();
        assert!(md.contains("| demo | c0 | c1 |"), "{md}");
        assert!(md.contains("| r0 | 12.50 | 99.00 |"), "{md}");
        assert_eq!(grid.get("r0", "c1"), 99.0);
    }

    use crate::config::{DataConfig, ModelConfig, TrainConfig};
    use crate::dataio::SyntheticSpec;

    fn tiny_cfg(out_dir: &Path) -> RunConfig {
        let spec = SyntheticSpec {
            n_classes: 3,
            n_per_class: 6,
            shared_dim: 3,
            private_dim: 2,
            noise_scale: 0.05,
            text_shape: [4, 6],
            mel_shape: [5, 8],
            test_fraction: 0.2,
            seed: 7,
        };
        let mut model = ModelConfig::toy(3);
        model.disc_layers = 2;
        RunConfig {
            method: Method::Drsc,
            data: DataConfig::Synthetic { spec },
            model,
            train: TrainConfig { lr: 1e-3, batch_size: 8, max_epochs: 1, ..TrainConfig::default() },
            out_dir: out_dir.to_path_buf(),
            ..RunConfig::default()
        }
    }

    #[test]
    fn ablation_grid_runs_and_saves() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("ablation");
        let cfg = tiny_cfg(dir.path());
        let grid = run_loss_ablation(&cfg, &[5], &out).unwrap();
        assert_eq!(grid.col_labels, ["core_terms", "full"]);
        assert_eq!(grid.values.len(), 1);
        assert_eq!(grid.values[0].len(), 2);
        assert!(out.join("summary.json").exists());
        assert!(out.join("table.md").exists());
        let run = out.join("weights_full").join("seed_5");
        assert!(run.join("confusion.csv").exists());
        assert!(run.join("confusion.png").exists());
        assert!(run.join("summary.json").exists());
        // grid values are percentages of the best-checkpoint accuracy
        for &v in &grid.values[0] {
            assert!((0.0..=100.0).contains(&v), "{v}");
        }
    }

    #[test]
    fn robustness_grid_has_both_rows() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("robust");
        let cfg = tiny_cfg(dir.path());
        let grid = run_noise_robustness(&cfg, &[3], &out, 0.26).unwrap();
        assert_eq!(grid.row_labels, ["accurate", "corrupted"]);
        assert_eq!(grid.col_labels, ["txt_only", "combined", "drsc"]);
        // synthetic text is grid-valued, so corruption cannot change it
        assert_eq!(grid.values[0], grid.values[1]);
    }

    #[test]
    fn intent_swap_rate_is_deterministic_and_bounded() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = tiny_cfg(dir.path());
        let (dataset, _) = load_data(&cfg).unwrap();
        let model_cfg =
            crate::train::resolve_model_config(&cfg, &dataset, None).unwrap();
        let model = DrscModel::new(model_cfg).unwrap();
        let params = model.init_params(9);
        let mut r1 = SeededRng::new(31);
        let mut r2 = SeededRng::new(31);
        let a = intent_swap_flip_rate(&model, &params, &dataset.train, 20, &mut r1).unwrap();
        let b = intent_swap_flip_rate(&model, &params, &dataset.train, 20, &mut r2).unwrap();
        assert_eq!(a, b);
        assert!((0.0..=1.0).contains(&a));
    }
}
