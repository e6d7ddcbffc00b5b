//! Convolutional baseline classifier with three input modes: text only,
//! mel only, or both branches fused.

use crate::autograd::{Tape, Tensor, Var};
use crate::config::{Method, ModelConfig};
use crate::dataio::TextData;
use crate::error::{Error, Result};
use crate::model::layers::{dropout, length_mask, Conv1dLayer, Dense};
use crate::model::params::{BoundParams, ParamStore};
use crate::rng::SeededRng;

const EMBED_TABLE: &str = "sic_embed/table";
const N_CONVS: usize = 3;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SpeechicMode {
    TxtOnly,
    MelOnly,
    Combined,
}

impl SpeechicMode {
    pub fn from_method(m: Method) -> Result<SpeechicMode> {
        match m {
            Method::TxtOnly => Ok(SpeechicMode::TxtOnly),
            Method::MelOnly => Ok(SpeechicMode::MelOnly),
            Method::Combined => Ok(SpeechicMode::Combined),
            Method::Drsc => Err(Error::Config("drsc is not a baseline mode".into())),
        }
    }

    pub fn uses_text(self) -> bool {
        matches!(self, SpeechicMode::TxtOnly | SpeechicMode::Combined)
    }

    pub fn uses_mel(self) -> bool {
        matches!(self, SpeechicMode::MelOnly | SpeechicMode::Combined)
    }
}

struct Branch {
    convs: Vec<Conv1dLayer>,
}

impl Branch {
    fn new(prefix: &str, c_in: usize, channels: usize) -> Branch {
        let convs = (0..N_CONVS)
            .map(|i| {
                let cin = if i == 0 { c_in } else { channels };
                Conv1dLayer::same(format!("{prefix}/conv{i}"), cin, channels, 3)
            })
            .collect();
        Branch { convs }
    }

    fn init(&self, store: &mut ParamStore, rng: &mut SeededRng) {
        for c in &self.convs {
            c.init(store, rng);
        }
    }

    /// [c_in, T] → [channels] via three tanh convolutions and a global max
    /// over time.
    fn apply(&self, tape: &Tape, p: &BoundParams, x: Var) -> Var {
        let mut h = x;
        for c in &self.convs {
            h = tape.tanh(c.apply(tape, p, h));
        }
        tape.row_max(h)
    }
}

pub struct SpeechicModel {
    pub cfg: ModelConfig,
    pub mode: SpeechicMode,
    txt: Branch,
    mel: Branch,
    fuse: Dense,
    head: Dense,
}

impl SpeechicModel {
    pub fn new(cfg: ModelConfig, mode: SpeechicMode) -> Result<SpeechicModel> {
        cfg.validate()?;
        let fused_in = match mode {
            SpeechicMode::Combined => 2 * cfg.channels,
            _ => cfg.channels,
        };
        Ok(SpeechicModel {
            txt: Branch::new("sic_txt", cfg.d_txt, cfg.channels),
            mel: Branch::new("sic_mel", cfg.n_mels, cfg.channels),
            fuse: Dense::new("sic/fuse", fused_in, cfg.fusion_hidden),
            head: Dense::new("sic/head", cfg.fusion_hidden, cfg.n_classes),
            cfg,
            mode,
        })
    }

    pub fn init_params(&self, seed: u64) -> ParamStore {
        let mut store = ParamStore::new();
        let mut rng = SeededRng::substream(seed, 0x51C);
        if self.cfg.vocab_size > 0 && self.mode.uses_text() {
            store.insert(
                EMBED_TABLE,
                Tensor::randn(&[self.cfg.vocab_size, self.cfg.d_txt], 1.0, &mut rng),
            );
        }
        if self.mode.uses_text() {
            self.txt.init(&mut store, &mut rng);
        }
        if self.mode.uses_mel() {
            self.mel.init(&mut store, &mut rng);
        }
        self.fuse.init(&mut store, &mut rng);
        self.head.init(&mut store, &mut rng);
        store
    }

    fn text_grid(&self, tape: &Tape, p: &BoundParams, text: &TextData) -> Result<Var> {
        match text {
            TextData::Tokens { ids, length } => {
                if self.cfg.vocab_size == 0 {
                    return Err(Error::Config(
                        "baseline was built without an embedding but got token input".into(),
                    ));
                }
                let emb = tape.embed(p.var(EMBED_TABLE), ids);
                let mask = length_mask(self.cfg.d_txt, self.cfg.l_max, (*length).max(1));
                Ok(tape.mul_const(emb, &mask))
            }
            TextData::Grid(g) => Ok(tape.constant(g.clone())),
        }
    }

    /// Logits for one example. Inputs not used by the mode are ignored.
    pub fn forward(
        &self,
        tape: &Tape,
        p: &BoundParams,
        text: Option<&TextData>,
        mel: Option<&Tensor>,
        dropout_rate: f64,
        mut rng: Option<&mut SeededRng>,
    ) -> Result<Var> {
        let mut pooled: Option<Var> = None;
        if self.mode.uses_text() {
            let text = text.ok_or_else(|| {
                Error::Config(format!("mode {:?} needs text input", self.mode))
            })?;
            let g = self.text_grid(tape, p, text)?;
            pooled = Some(self.txt.apply(tape, p, g));
        }
        if self.mode.uses_mel() {
            let mel = mel.ok_or_else(|| {
                Error::Config(format!("mode {:?} needs mel input", self.mode))
            })?;
            let data: Vec<f64> = mel
                .data()
                .iter()
                .map(|&v| (v + self.cfg.mel_shift) * self.cfg.mel_scale)
                .collect();
            let g = tape.constant(Tensor::new(mel.shape().to_vec(), data));
            let pm = self.mel.apply(tape, p, g);
            pooled = Some(match pooled {
                None => pm,
                Some(pt) => tape.concat0(pt, pm),
            });
        }
        let features = pooled.expect("mode uses at least one branch");
        let hidden = tape.tanh(self.fuse.apply(tape, p, features));
        let hidden = dropout(tape, hidden, dropout_rate, rng.as_deref_mut());
        Ok(self.head.apply(tape, p, hidden))
    }

    pub fn predict(
        &self,
        tape: &Tape,
        p: &BoundParams,
        text: Option<&TextData>,
        mel: Option<&Tensor>,
    ) -> Result<usize> {
        let logits = self.forward(tape, p, text, mel, 0.0, None)?;
        Ok(super::drsc::argmax(tape.value_of(logits).data()))
    }
}

/// Flat entry point mirroring the three baseline modes.
pub fn speechic_forward(
    tape: &Tape,
    model: &SpeechicModel,
    p: &BoundParams,
    text: Option<&TextData>,
    mel: Option<&Tensor>,
) -> Result<Var> {
    model.forward(tape, p, text, mel, 0.0, None)
}
