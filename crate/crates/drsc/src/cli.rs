//! Command-line interface.
//!
//! Exit codes: 0 on success, 1 for usage/configuration mistakes, 2 for
//! runtime failures (missing files, divergence, I/O).

use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};

use crate::config::{apply_overrides, DataConfig, LossWeights, ModelConfig, RunConfig, TrainConfig};
use crate::dataio::{
    prepare_dataset, write_corruption_report, CorruptionSpec, PrepOptions, PreparedPaths,
    SyntheticSpec, Vocab,
};
use crate::error::{Error, Result};
use crate::eval::{
    evaluate, evaluate_run, intent_swap_flip_rate, run_and_report, run_criterion_sweep, run_method_comparison,
    run_loss_ablation, run_noise_robustness,
};
use crate::model::DrscModel;
use crate::rng::SeededRng;
use crate::train::{fit, AnyModel, Checkpoint};

#[derive(Parser)]
#[command(
    name = "drsc",
    version,
    about = "Two-view representation disentanglement for spoken symptom classification"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum GridKind {
    /// Compare L1 / L2 / cosine reconstruction distances.
    Criterion,
    /// Compare the baseline input modes against the full model.
    Methods,
}

#[derive(Subcommand)]
pub enum Command {
    /// Preprocess a raw dataset (index CSV + wav files) into a manifest,
    /// vocabulary, and feature cache.
    Prep {
        /// Raw dataset root.
        #[arg(long)]
        dataset: PathBuf,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
        /// Fraction of each class reserved for testing.
        #[arg(long, default_value_t = 0.2)]
        test_fraction: f64,
        /// Split seed.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Fixed class list (one label per line); otherwise classes are the
        /// sorted distinct labels found in the index.
        #[arg(long)]
        classes: Option<PathBuf>,
        /// Also write corruption_report.csv with word errors injected at
        /// this target rate.
        #[arg(long, value_name = "RATE")]
        corruption_report: Option<f64>,
    },
    /// Train one model and report its best test accuracy.
    Train {
        /// Run configuration JSON (defaults used when omitted).
        #[arg(long)]
        config: Option<PathBuf>,
        /// Dotted-path override, e.g. --set train.lr=0.001 (repeatable).
        #[arg(long = "set", value_name = "KEY=VALUE")]
        set: Vec<String>,
        /// Output directory (overrides the config's out_dir).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Resume from this checkpoint.
        #[arg(long)]
        resume: Option<PathBuf>,
        /// Resume even if the configuration hash differs.
        #[arg(long)]
        force: bool,
    },
    /// Score a finished run's checkpoint on its test split.
    Eval {
        /// Run directory (holds config.json, best.bin, last.bin).
        #[arg(long)]
        run: PathBuf,
        /// Which checkpoint to score.
        #[arg(long, default_value = "best", value_parser = ["best", "last"])]
        checkpoint: String,
        /// Corrupt test transcriptions at this word error rate first.
        #[arg(long, value_name = "RATE")]
        corrupt_wer: Option<f64>,
    },
    /// Loss ablation grid: core terms only versus the full objective.
    Ablate {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long = "set", value_name = "KEY=VALUE")]
        set: Vec<String>,
        /// Comma-separated training seeds averaged per cell.
        #[arg(long, default_value = "0,1,2")]
        seeds: String,
        #[arg(long, default_value = "results/ablation")]
        out: PathBuf,
    },
    /// Noise-robustness grid: accurate versus corrupted test text across
    /// text-only, combined, and disentangled models.
    Robustness {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long = "set", value_name = "KEY=VALUE")]
        set: Vec<String>,
        #[arg(long, default_value = "0,1,2")]
        seeds: String,
        /// Target word error rate for the corrupted row.
        #[arg(long, default_value_t = 0.26)]
        wer: f64,
        #[arg(long, default_value = "results/robustness")]
        out: PathBuf,
    },
    /// Criterion or method comparison grid.
    Sweep {
        #[arg(long, value_enum, default_value_t = GridKind::Criterion)]
        grid: GridKind,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long = "set", value_name = "KEY=VALUE")]
        set: Vec<String>,
        #[arg(long, default_value = "0,1,2")]
        seeds: String,
        #[arg(long, default_value = "results/sweep")]
        out: PathBuf,
    },
    /// Train on generated two-view data with known latent structure and
    /// verify that the intent code carries the class: high test accuracy
    /// and cross-class intent swaps that move predictions to the donor.
    SynthTest {
        #[arg(long, default_value_t = 5)]
        classes: usize,
        #[arg(long, default_value_t = 200)]
        per_class: usize,
        #[arg(long, default_value_t = 30)]
        epochs: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = "runs/synth_test")]
        out: PathBuf,
        #[arg(long = "set", value_name = "KEY=VALUE")]
        set: Vec<String>,
        /// Minimum test accuracy to pass.
        #[arg(long, default_value_t = 0.95)]
        min_accuracy: f64,
        /// Minimum fraction of intent swaps that flip to the donor class.
        #[arg(long, default_value_t = 0.90)]
        min_flip_rate: f64,
    },
}

fn parse_seeds(s: &str) -> Result<Vec<u64>> {
    let seeds: std::result::Result<Vec<u64>, _> =
        s.split(',').map(|p| p.trim().parse::<u64>()).collect();
    let seeds = seeds.map_err(|_| Error::Config(format!("bad seed list {s:?}")))?;
    if seeds.is_empty() {
        return Err(Error::Config("seed list is empty".into()));
    }
    Ok(seeds)
}

fn load_config(path: Option<&Path>, overrides: &[String]) -> Result<RunConfig> {
    let base = match path {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if overrides.is_empty() {
        base.validate()?;
        Ok(base)
    } else {
        apply_overrides(&base, overrides)
    }
}

/// The model sized for the generated two-view data: small enough to train
/// in minutes on one core, large enough to hit the verification thresholds.
pub fn synth_model_config(n_classes: usize) -> ModelConfig {
    ModelConfig {
        n_classes,
        vocab_size: 0,
        d_txt: 16,
        l_max: 12,
        n_mels: 24,
        t_max: 16,
        channels: 16,
        conv_bank_kernels: vec![1, 3],
        n_res_blocks: 1,
        d_content: 6,
        d_intent: 12,
        intent_hidden: 16,
        fusion_hidden: 16,
        disc_channels: 8,
        disc_layers: 2,
        mel_shift: 0.0,
        mel_scale: 1.0,
    }
}

/// Loss balance for the synthetic verification run. Reconstruction leads
/// (high cycle) so restored features stay close to the originals the
/// classifier is scored on at inference; a moderate KL keeps the sampled
/// content channel too noisy to smuggle the class through, which is what
/// makes intent swaps actually move predictions; latent regression and the
/// class weight stabilize the intent side against collapse.
pub fn synth_loss_weights() -> LossWeights {
    LossWeights {
        cycle: 10.0,
        kl: 0.05,
        latent_regression: 2.0,
        classification: 3.0,
        adversarial: 0.1,
        ..LossWeights::full()
    }
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Prep { dataset, out, test_fraction, seed, classes, corruption_report } => {
            let class_list = match classes {
                Some(path) => {
                    let text = std::fs::read_to_string(&path)
                        .map_err(|_| Error::Missing(path.clone()))?;
                    Some(
                        text.lines()
                            .map(str::trim)
                            .filter(|l| !l.is_empty())
                            .map(String::from)
                            .collect::<Vec<_>>(),
                    )
                }
                None => None,
            };
            let opts = PrepOptions { test_fraction, seed, classes: class_list, ..Default::default() };
            let manifest = prepare_dataset(&dataset, &out, &opts)?;
            println!(
                "prepared {} entries across {} classes into {}",
                manifest.entries.len(),
                manifest.n_classes(),
                out.display()
            );
            if let Some(rate) = corruption_report {
                let paths = PreparedPaths::new(&out);
                let vocab = Vocab::load(&paths.vocab_json)?;
                let spec = CorruptionSpec::with_target(rate);
                let report_path = out.join("corruption_report.csv");
                let wer = write_corruption_report(&manifest, &spec, vocab.words(), &report_path)?;
                println!(
                    "corruption report at {} (target rate {rate:.3}, measured {wer:.3})",
                    report_path.display()
                );
            }
            Ok(())
        }

        Command::Train { config, set, out, resume, force } => {
            let mut cfg = load_config(config.as_deref(), &set)?;
            if let Some(out) = out {
                cfg.out_dir = out;
            }
            let summary = run_and_report(&cfg, resume.as_deref(), force)?;
            println!("{}", serde_json::to_string_pretty(&summary)?);
            Ok(())
        }

        Command::Eval { run, checkpoint, corrupt_wer } => {
            let eval_text = corrupt_wer.map(RunConfig::corrupted_text);
            let (outcome, class_names) = evaluate_run(&run, &checkpoint, eval_text.as_ref())?;
            let tag = match corrupt_wer {
                Some(rate) => format!("eval_{checkpoint}_wer{rate:.2}"),
                None => format!("eval_{checkpoint}"),
            };
            outcome.confusion.write_csv(&run.join(format!("{tag}.csv")), &class_names)?;
            outcome.confusion.write_png(&run.join(format!("{tag}.png")))?;
            println!(
                "{}",
                serde_json::json!({
                    "run": run,
                    "checkpoint": checkpoint,
                    "corrupt_wer": corrupt_wer,
                    "accuracy": outcome.accuracy,
                    "examples": outcome.confusion.total(),
                })
            );
            Ok(())
        }

        Command::Ablate { config, set, seeds, out } => {
            let cfg = load_config(config.as_deref(), &set)?;
            let grid = run_loss_ablation(&cfg, &parse_seeds(&seeds)?, &out)?;
            print!("{}", grid.markdown());
            Ok(())
        }

        Command::Robustness { config, set, seeds, wer, out } => {
            let cfg = load_config(config.as_deref(), &set)?;
            let grid = run_noise_robustness(&cfg, &parse_seeds(&seeds)?, &out, wer)?;
            print!("{}", grid.markdown());
            Ok(())
        }

        Command::Sweep { grid, config, set, seeds, out } => {
            let cfg = load_config(config.as_deref(), &set)?;
            let seeds = parse_seeds(&seeds)?;
            let result = match grid {
                GridKind::Criterion => run_criterion_sweep(&cfg, &seeds, &out)?,
                GridKind::Methods => run_method_comparison(&cfg, &seeds, &out)?,
            };
            print!("{}", result.markdown());
            Ok(())
        }

        Command::SynthTest {
            classes,
            per_class,
            epochs,
            seed,
            out,
            set,
            min_accuracy,
            min_flip_rate,
        } => {
            let spec = SyntheticSpec {
                n_classes: classes,
                n_per_class: per_class,
                noise_scale: 0.0,
                seed,
                ..SyntheticSpec::default()
            };
            let cfg = RunConfig {
                method: crate::config::Method::Drsc,
                data: DataConfig::Synthetic { spec },
                model: synth_model_config(classes),
                train: TrainConfig {
                    lr: 2e-3,
                    batch_size: 16,
                    dropout: 0.0,
                    max_epochs: epochs,
                    seed,
                    ..TrainConfig::default()
                },
                weights: synth_loss_weights(),
                out_dir: out,
                ..RunConfig::default()
            };
            let cfg = if set.is_empty() { cfg } else { apply_overrides(&cfg, &set)? };
            let report = synth_test(&cfg)?;
            println!("{}", serde_json::to_string_pretty(&report)?);
            let acc_ok = report.test_accuracy >= min_accuracy;
            let flip_ok = report.flip_rate >= min_flip_rate;
            println!(
                "accuracy {:.4} (need ≥ {min_accuracy}): {}",
                report.test_accuracy,
                if acc_ok { "pass" } else { "FAIL" }
            );
            println!(
                "intent-swap flip rate {:.4} (need ≥ {min_flip_rate}): {}",
                report.flip_rate,
                if flip_ok { "pass" } else { "FAIL" }
            );
            if acc_ok && flip_ok {
                Ok(())
            } else {
                Err(Error::Data("synthetic verification thresholds not met".into()))
            }
        }
    }
}

/// Outcome of the synthetic two-view verification.
#[derive(Clone, Debug, serde::Serialize)]
pub struct SynthReport {
    pub test_accuracy: f64,
    pub flip_rate: f64,
    pub n_pairs: usize,
    pub epochs: usize,
    pub out_dir: PathBuf,
}

/// Train on the configured synthetic data, then measure final test accuracy
/// and the cross-class intent-swap flip rate on the end-of-training model.
pub fn synth_test(cfg: &RunConfig) -> Result<SynthReport> {
    let report = fit(cfg, None, false)?;
    let saved = RunConfig::load(&report.out_dir.join("config.json"))?;
    let (dataset, _) = crate::train::load_data(&saved)?;
    let ck = Checkpoint::load(&report.last_checkpoint)?;
    let model = match AnyModel::from_config(&saved)? {
        AnyModel::Drsc(m) => m,
        AnyModel::Speechic(_) => {
            return Err(Error::Config("intent swapping needs the disentangling model".into()))
        }
    };
    let accuracy = {
        let any = AnyModel::Drsc(DrscModel::new(saved.model.clone())?);
        evaluate(&any, &ck.params, &dataset.test, dataset.n_classes)?.accuracy
    };
    let n_pairs = 200;
    let mut rng = SeededRng::substream(saved.train.seed, 0x5AB);
    let flip_rate =
        intent_swap_flip_rate(&model, &ck.params, &dataset.test, n_pairs, &mut rng)?;
    let out = SynthReport {
        test_accuracy: accuracy,
        flip_rate,
        n_pairs,
        epochs: saved.train.max_epochs,
        out_dir: report.out_dir.clone(),
    };
    std::fs::write(
        report.out_dir.join("synth_report.json"),
        serde_json::to_string_pretty(&out)? + "\n",
    )?;
    Ok(out)
}
