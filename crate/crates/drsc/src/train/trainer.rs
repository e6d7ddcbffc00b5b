//! Epoch driver.
//!
//! Each step plays one round of the two-player game: discriminator updates
//! maximize the adversarial term over their own parameters, then a single
//! generator/encoder/classifier update minimizes the full weighted
//! objective. Baseline methods are a single minimizing player.
//!
//! Everything stochastic (epoch shuffles, content sampling, dropout, fresh
//! latent targets) draws from one seeded stream that is checkpointed with
//! the parameters, so an interrupted run resumed from `last.bin`
//! reproduces the uninterrupted run bit for bit.

use std::io::Write as _;
use std::path::{Path, PathBuf};

use crate::autograd::Tape;
use crate::config::{DataConfig, LossWeights, Method, ModelConfig, RunConfig};
use crate::dataio::{generate_synthetic, load_dataset_dir, Dataset, Example, TextData, Vocab};
use crate::error::{Error, Result};
use crate::eval::evaluate;
use crate::losses::{speechic_objective, total_objective, LossBreakdown};
use crate::model::{BoundParams, DrscModel, ParamStore, Role, SpeechicMode, SpeechicModel};
use crate::rng::SeededRng;
use crate::train::checkpoint::Checkpoint;
use crate::train::optimizer::Adam;

/// Stream id for every draw the training loop makes.
const TRAIN_STREAM: u64 = 0x7261;

/// The disentangling model or one of the baseline classifiers, behind one
/// training/evaluation interface.
pub enum AnyModel {
    Drsc(DrscModel),
    Speechic(SpeechicModel),
}

impl AnyModel {
    pub fn from_config(cfg: &RunConfig) -> Result<AnyModel> {
        Ok(match cfg.method {
            Method::Drsc => AnyModel::Drsc(DrscModel::new(cfg.model.clone())?),
            m => AnyModel::Speechic(SpeechicModel::new(
                cfg.model.clone(),
                SpeechicMode::from_method(m)?,
            )?),
        })
    }

    pub fn init_params(&self, seed: u64) -> ParamStore {
        match self {
            AnyModel::Drsc(m) => m.init_params(seed),
            AnyModel::Speechic(m) => m.init_params(seed),
        }
    }

    pub fn predict(&self, tape: &Tape, p: &BoundParams, ex: &Example) -> Result<usize> {
        match self {
            AnyModel::Drsc(m) => m.predict(tape, p, &ex.text, &ex.mel),
            AnyModel::Speechic(m) => m.predict(tape, p, Some(&ex.text), Some(&ex.mel)),
        }
    }
}

/// Fill in the model dimensions that are determined by the data: class
/// count, vocabulary size (0 for grid-valued text), and the grid shapes.
pub fn resolve_model_config(
    cfg: &RunConfig,
    dataset: &Dataset,
    vocab: Option<&Vocab>,
) -> Result<ModelConfig> {
    let mut m = cfg.model.clone();
    m.n_classes = dataset.n_classes;
    let first = dataset
        .train
        .first()
        .or_else(|| dataset.test.first())
        .ok_or_else(|| Error::Data("dataset has no examples".into()))?;
    let mel_shape = first.mel.shape();
    if mel_shape.len() != 2 {
        return Err(Error::shape("[n_mels, t]", format!("{mel_shape:?}")));
    }
    m.n_mels = mel_shape[0];
    m.t_max = mel_shape[1];
    match &first.text {
        TextData::Tokens { ids, .. } => {
            let vocab = vocab
                .ok_or_else(|| Error::Data("token-id text requires a vocabulary".into()))?;
            m.vocab_size = vocab.len();
            m.l_max = ids.len();
        }
        TextData::Grid(g) => {
            let s = g.shape();
            if s.len() != 2 {
                return Err(Error::shape("[d_txt, l]", format!("{s:?}")));
            }
            m.vocab_size = 0;
            m.d_txt = s[0];
            m.l_max = s[1];
        }
    }
    m.validate()?;
    Ok(m)
}

/// Load whatever `cfg.data` points at. Prepared directories come with a
/// vocabulary; synthetic data is grid-valued and has none.
pub fn load_data(cfg: &RunConfig) -> Result<(Dataset, Option<Vocab>)> {
    match &cfg.data {
        DataConfig::Prepared { dir } => {
            let (ds, vocab) = load_dataset_dir(dir, &cfg.train_text, &cfg.eval_text)?;
            Ok((ds, Some(vocab)))
        }
        DataConfig::Synthetic { spec } => {
            let ds = generate_synthetic(spec);
            Ok((Dataset::from_synthetic(&ds), None))
        }
    }
}

/// Everything that evolves during training; exactly the checkpoint payload.
pub struct TrainState {
    pub params: ParamStore,
    pub opt_min: Adam,
    pub opt_max: Adam,
    pub rng: SeededRng,
    pub step: u64,
    pub epoch: u64,
    pub best_test_acc: f64,
    pub best_epoch: u64,
}

impl TrainState {
    pub fn new(cfg: &RunConfig, model: &AnyModel) -> TrainState {
        let t = &cfg.train;
        TrainState {
            params: model.init_params(t.seed),
            opt_min: Adam::new(t.lr, t.beta1, t.beta2, t.eps),
            opt_max: Adam::new(t.lr, t.beta1, t.beta2, t.eps),
            rng: SeededRng::substream(t.seed, TRAIN_STREAM),
            step: 0,
            epoch: 0,
            // start below any reachable accuracy so the first evaluation
            // always records a best checkpoint
            best_test_acc: -1.0,
            best_epoch: 0,
        }
    }

    pub fn from_checkpoint(ck: Checkpoint) -> TrainState {
        TrainState {
            params: ck.params,
            opt_min: ck.opt_min,
            opt_max: ck.opt_max,
            rng: SeededRng::restore(ck.rng_seed, ck.rng_word_pos),
            step: ck.step,
            epoch: ck.epoch,
            best_test_acc: ck.best_test_acc,
            best_epoch: ck.best_epoch,
        }
    }

    pub fn to_checkpoint(&self, config_hash: &str) -> Checkpoint {
        Checkpoint {
            config_hash: config_hash.to_string(),
            step: self.step,
            epoch: self.epoch,
            best_test_acc: self.best_test_acc,
            best_epoch: self.best_epoch,
            rng_seed: self.rng.seed_bytes(),
            rng_word_pos: self.rng.word_pos(),
            params: self.params.clone(),
            opt_min: self.opt_min.clone(),
            opt_max: self.opt_max.clone(),
        }
    }
}

/// One optimization round on one batch. Returns the generator-phase loss
/// breakdown; fails with `Diverged` if any total goes non-finite.
pub fn train_step(
    model: &AnyModel,
    state: &mut TrainState,
    batch: &[Example],
    cfg: &RunConfig,
) -> Result<LossBreakdown> {
    let t = &cfg.train;
    let breakdown = match model {
        AnyModel::Drsc(m) => {
            if cfg.weights.adversarial > 0.0 {
                // discriminator phase: only the adversarial term is live, and
                // only the maximizing player's parameters move
                let d_weights = LossWeights {
                    cycle: 0.0,
                    distribution: 0.0,
                    classification: 0.0,
                    kl: 0.0,
                    latent_regression: 0.0,
                    adversarial: cfg.weights.adversarial,
                };
                for _ in 0..t.d_steps_per_g_step {
                    let tape = Tape::new();
                    let bound = state.params.bind(&tape);
                    let obj = total_objective(
                        &tape,
                        m,
                        &bound,
                        batch,
                        &d_weights,
                        cfg.criterion,
                        t.dropout,
                        &mut state.rng,
                    )?;
                    let max_loss = obj.max_loss.expect("adversarial weight is positive");
                    let grads = tape.backward(max_loss);
                    let max_grads = bound.role_grads(&grads, Role::MaxPlayer);
                    state.opt_max.step(&mut state.params, &max_grads, t.grad_clip_norm);
                }
            }
            // minimizing phase: full objective, generator-side parameters
            let tape = Tape::new();
            let bound = state.params.bind(&tape);
            let obj = total_objective(
                &tape,
                m,
                &bound,
                batch,
                &cfg.weights,
                cfg.criterion,
                t.dropout,
                &mut state.rng,
            )?;
            let grads = tape.backward(obj.min_loss);
            let min_grads = bound.role_grads(&grads, Role::MinPlayer);
            state.opt_min.step(&mut state.params, &min_grads, t.grad_clip_norm);
            obj.breakdown
        }
        AnyModel::Speechic(m) => {
            let tape = Tape::new();
            let bound = state.params.bind(&tape);
            let (loss, breakdown) =
                speechic_objective(&tape, m, &bound, batch, t.dropout, Some(&mut state.rng))?;
            let grads = tape.backward(loss);
            let min_grads = bound.role_grads(&grads, Role::MinPlayer);
            state.opt_min.step(&mut state.params, &min_grads, t.grad_clip_norm);
            breakdown
        }
    };
    state.step += 1;
    if !breakdown.min_total.is_finite() || !breakdown.max_total.is_finite() {
        return Err(Error::Diverged(format!(
            "loss went non-finite at step {} (min {}, max {})",
            state.step, breakdown.min_total, breakdown.max_total
        )));
    }
    Ok(breakdown)
}

fn accumulate(into: &mut LossBreakdown, b: &LossBreakdown) {
    into.cycle += b.cycle;
    into.distribution += b.distribution;
    into.classification += b.classification;
    into.kl += b.kl;
    into.latent_regression += b.latent_regression;
    into.adversarial_generator += b.adversarial_generator;
    into.adversarial_discriminator += b.adversarial_discriminator;
    into.min_total += b.min_total;
    into.max_total += b.max_total;
}

fn scale(b: &mut LossBreakdown, s: f64) {
    b.cycle *= s;
    b.distribution *= s;
    b.classification *= s;
    b.kl *= s;
    b.latent_regression *= s;
    b.adversarial_generator *= s;
    b.adversarial_discriminator *= s;
    b.min_total *= s;
    b.max_total *= s;
}

#[derive(Clone, Debug, serde::Serialize)]
pub struct FitReport {
    pub out_dir: PathBuf,
    pub epochs_run: u64,
    pub steps: u64,
    pub final_test_accuracy: f64,
    pub best_test_accuracy: f64,
    pub best_epoch: u64,
    pub last_checkpoint: PathBuf,
    pub best_checkpoint: PathBuf,
}

/// Train to `cfg.train.max_epochs`, writing into `cfg.out_dir`:
/// `config.json` (the resolved configuration), `metrics.jsonl` (one line per
/// epoch), `last.bin` (every epoch), and `best.bin` (epochs that improve
/// test accuracy).
///
/// With `resume`, training continues from that checkpoint; the stored
/// configuration hash must match unless `force` is set.
pub fn fit(cfg: &RunConfig, resume: Option<&Path>, force: bool) -> Result<FitReport> {
    cfg.validate()?;
    let (dataset, vocab) = load_data(cfg)?;
    let model_cfg = resolve_model_config(cfg, &dataset, vocab.as_ref())?;
    let resolved = RunConfig { model: model_cfg, ..cfg.clone() };
    let hash = resolved.hash();

    std::fs::create_dir_all(&resolved.out_dir)?;
    resolved.save(&resolved.out_dir.join("config.json"))?;
    let last_path = resolved.out_dir.join("last.bin");
    let best_path = resolved.out_dir.join("best.bin");
    let metrics_path = resolved.out_dir.join("metrics.jsonl");

    let model = AnyModel::from_config(&resolved)?;
    let mut state = match resume {
        Some(path) => {
            let ck = Checkpoint::load(path)?;
            if ck.config_hash != hash && !force {
                return Err(Error::Checkpoint(format!(
                    "{} was produced under a different configuration; \
                     pass --force to resume against the current one",
                    path.display()
                )));
            }
            TrainState::from_checkpoint(ck)
        }
        None => TrainState::new(&resolved, &model),
    };

    let mut metrics = if resume.is_some() {
        std::fs::OpenOptions::new().create(true).append(true).open(&metrics_path)?
    } else {
        std::fs::File::create(&metrics_path)?
    };

    let max_epochs = resolved.train.max_epochs as u64;
    let start_epoch = state.epoch;
    let mut final_acc = None;
    for epoch in start_epoch..max_epochs {
        // a fresh identity permutation each epoch keeps the batch order a
        // function of the (checkpointed) RNG state alone
        let mut order: Vec<usize> = (0..dataset.train.len()).collect();
        state.rng.shuffle(&mut order);

        let mut epoch_loss = LossBreakdown::default();
        let mut n_batches = 0u64;
        for chunk in order.chunks(resolved.train.batch_size) {
            let batch: Vec<Example> =
                chunk.iter().map(|&i| dataset.train[i].clone()).collect();
            let b = train_step(&model, &mut state, &batch, &resolved).map_err(|e| match e {
                Error::Diverged(msg) => Error::Diverged(format!(
                    "{msg} in epoch {epoch}; restart from {}",
                    last_path.display()
                )),
                other => other,
            })?;
            accumulate(&mut epoch_loss, &b);
            n_batches += 1;
        }
        if n_batches > 0 {
            scale(&mut epoch_loss, 1.0 / n_batches as f64);
        }

        let outcome = evaluate(&model, &state.params, &dataset.test, dataset.n_classes)?;
        final_acc = Some(outcome.accuracy);
        state.epoch = epoch + 1;
        if outcome.accuracy > state.best_test_acc {
            state.best_test_acc = outcome.accuracy;
            state.best_epoch = epoch;
            state.to_checkpoint(&hash).save(&best_path)?;
        }
        state.to_checkpoint(&hash).save(&last_path)?;

        let line = serde_json::json!({
            "epoch": epoch,
            "step": state.step,
            "loss": epoch_loss,
            "test_accuracy": outcome.accuracy,
        });
        writeln!(metrics, "{line}")?;
    }

    let final_test_accuracy = match final_acc {
        Some(a) => a,
        // requested epochs were already complete; just measure
        None => evaluate(&model, &state.params, &dataset.test, dataset.n_classes)?.accuracy,
    };
    Ok(FitReport {
        out_dir: resolved.out_dir.clone(),
        epochs_run: state.epoch.saturating_sub(start_epoch),
        steps: state.step,
        final_test_accuracy,
        best_test_accuracy: state.best_test_acc,
        best_epoch: state.best_epoch,
        last_checkpoint: last_path,
        best_checkpoint: best_path,
    })
}
