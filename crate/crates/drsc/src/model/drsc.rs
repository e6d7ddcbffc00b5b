//! The two-domain disentanglement model.
//!
//! Each domain (text grid, mel grid) has an encoder producing a
//! position-wise content posterior and a pooled intent vector, and a
//! generator mapping (content map, intent) back to a grid. A discriminator
//! per domain scores grids for realness. Classification runs on the fused
//! intent vectors of the two domains.
//!
//! The characteristic operations:
//! * `cross`: regenerate each domain from its own content but the *other*
//!   domain's intent, giving intermediate features u (text-shaped) and
//!   v (mel-shaped).
//! * `restore`: encode u and v and cross the intents back, giving T̂ and M̂
//!   which should match the originals.

use crate::autograd::{Tape, Tensor, Var};
use crate::config::ModelConfig;
use crate::dataio::TextData;
use crate::error::{Error, Result};
use crate::model::discriminator::Discriminator;
use crate::model::encoder::{Encoder, LatentPair};
use crate::model::generator::Generator;
use crate::model::layers::{dropout, length_mask, Dense};
use crate::model::params::{ParamStore, BoundParams};
use crate::rng::SeededRng;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DomainKind {
    Text,
    Mel,
}

const EMBED_TABLE: &str = "embed/table";

pub struct DrscModel {
    pub cfg: ModelConfig,
    enc_text: Encoder,
    enc_mel: Encoder,
    gen_text: Generator,
    gen_mel: Generator,
    disc_text: Discriminator,
    disc_mel: Discriminator,
    fuse1: Dense,
    fuse2: Dense,
}

/// Everything the losses need from one example's forward pass.
pub struct ForwardPass {
    /// Model-space input grids (text masked, mel normalized).
    pub t_real: Var,
    pub m_real: Var,
    /// Original-domain latents.
    pub lat_text: LatentPair,
    pub lat_mel: LatentPair,
    /// Cross-generated intermediates.
    pub u: Var,
    pub v: Var,
    /// Restored grids.
    pub t_hat: Var,
    pub m_hat: Var,
    /// Latents re-encoded from the restored grids.
    pub lat_text_hat: LatentPair,
    pub lat_mel_hat: LatentPair,
    /// Class logits from the restored intents.
    pub logits: Var,
}

impl DrscModel {
    pub fn new(cfg: ModelConfig) -> Result<DrscModel> {
        cfg.validate()?;
        if cfg.vocab_size == 0 {
            // text arrives as a continuous grid; nothing extra to check
        } else if cfg.vocab_size < 2 {
            return Err(Error::Config("vocab_size must be 0 (grid input) or ≥ 2".into()));
        }
        Ok(DrscModel {
            enc_text: Encoder::new("enc_text", cfg.d_txt, &cfg),
            enc_mel: Encoder::new("enc_mel", cfg.n_mels, &cfg),
            gen_text: Generator::new("gen_text", cfg.d_txt, &cfg),
            gen_mel: Generator::new("gen_mel", cfg.n_mels, &cfg),
            disc_text: Discriminator::new("disc_text", cfg.d_txt, &cfg),
            disc_mel: Discriminator::new("disc_mel", cfg.n_mels, &cfg),
            fuse1: Dense::new("fuse/fc1", 2 * cfg.d_intent, cfg.fusion_hidden),
            fuse2: Dense::new("fuse/fc2", cfg.fusion_hidden, cfg.n_classes),
            cfg,
        })
    }

    /// Fresh parameters, deterministic in `seed`.
    pub fn init_params(&self, seed: u64) -> ParamStore {
        let mut store = ParamStore::new();
        let mut rng = SeededRng::substream(seed, 0x11);
        if self.cfg.vocab_size > 0 {
            store.insert(
                EMBED_TABLE,
                Tensor::randn(&[self.cfg.vocab_size, self.cfg.d_txt], 1.0, &mut rng),
            );
        }
        self.enc_text.init(&mut store, &mut rng);
        self.enc_mel.init(&mut store, &mut rng);
        self.gen_text.init(&mut store, &mut rng);
        self.gen_mel.init(&mut store, &mut rng);
        self.disc_text.init(&mut store, &mut rng);
        self.disc_mel.init(&mut store, &mut rng);
        self.fuse1.init(&mut store, &mut rng);
        self.fuse2.init(&mut store, &mut rng);
        store
    }

    /// The [d_txt, l_max] mask for one example (all ones for grid input).
    pub fn text_mask(&self, text: &TextData) -> Tensor {
        match text {
            TextData::Tokens { length, .. } => {
                length_mask(self.cfg.d_txt, self.cfg.l_max, (*length).max(1))
            }
            TextData::Grid(_) => Tensor::full(&[self.cfg.d_txt, self.cfg.l_max], 1.0),
        }
    }

    /// Model-space text grid: embedded tokens (masked) or the given grid.
    pub fn text_grid(&self, tape: &Tape, p: &BoundParams, text: &TextData) -> Result<Var> {
        match text {
            TextData::Tokens { ids, length } => {
                if self.cfg.vocab_size == 0 {
                    return Err(Error::Config(
                        "model was built without an embedding (vocab_size 0) but got token input"
                            .into(),
                    ));
                }
                if ids.len() != self.cfg.l_max {
                    return Err(Error::shape(
                        format!("[{}] token ids", self.cfg.l_max),
                        format!("[{}]", ids.len()),
                    ));
                }
                let emb = tape.embed(p.var(EMBED_TABLE), ids);
                let mask = length_mask(self.cfg.d_txt, self.cfg.l_max, (*length).max(1));
                Ok(tape.mul_const(emb, &mask))
            }
            TextData::Grid(g) => {
                let expect = [self.cfg.d_txt, self.cfg.l_max];
                if g.shape() != expect {
                    return Err(Error::shape(format!("{expect:?}"), format!("{:?}", g.shape())));
                }
                Ok(tape.constant(g.clone()))
            }
        }
    }

    /// Model-space mel grid: (mel + shift) · scale as a constant leaf.
    pub fn mel_grid(&self, tape: &Tape, mel: &Tensor) -> Result<Var> {
        let expect = [self.cfg.n_mels, self.cfg.t_max];
        if mel.shape() != expect {
            return Err(Error::shape(format!("{expect:?}"), format!("{:?}", mel.shape())));
        }
        let data: Vec<f64> = mel
            .data()
            .iter()
            .map(|&v| (v + self.cfg.mel_shift) * self.cfg.mel_scale)
            .collect();
        Ok(tape.constant(Tensor::new(vec![self.cfg.n_mels, self.cfg.t_max], data)))
    }

    pub fn encode(&self, tape: &Tape, p: &BoundParams, domain: DomainKind, grid: Var) -> LatentPair {
        match domain {
            DomainKind::Text => self.enc_text.apply(tape, p, grid),
            DomainKind::Mel => self.enc_mel.apply(tape, p, grid),
        }
    }

    /// Reparameterized content sample: μ + exp(½ log σ²) ⊙ ε with ε drawn
    /// from `rng`; without an rng the posterior mean is used.
    pub fn content_sample(&self, tape: &Tape, lat: &LatentPair, rng: Option<&mut SeededRng>) -> Var {
        match rng {
            None => lat.content_mu,
            Some(rng) => {
                let shape = tape.shape_of(lat.content_mu);
                let mut eps = Tensor::zeros(&shape);
                rng.fill_normal(eps.data_mut());
                let sigma = tape.exp(tape.mul_scalar(lat.content_logvar, 0.5));
                tape.add(lat.content_mu, tape.mul(sigma, tape.constant(eps)))
            }
        }
    }

    pub fn generate(
        &self,
        tape: &Tape,
        p: &BoundParams,
        domain: DomainKind,
        content: Var,
        intent: Var,
    ) -> Var {
        match domain {
            DomainKind::Text => self.gen_text.apply(tape, p, content, intent),
            DomainKind::Mel => self.gen_mel.apply(tape, p, content, intent),
        }
    }

    pub fn discriminate(&self, tape: &Tape, p: &BoundParams, domain: DomainKind, grid: Var) -> Var {
        match domain {
            DomainKind::Text => self.disc_text.apply(tape, p, grid),
            DomainKind::Mel => self.disc_mel.apply(tape, p, grid),
        }
    }

    /// Concatenate the two intents and classify. `dropout_rng` enables the
    /// training-time dropout on the fusion hidden layer.
    pub fn fuse_and_classify(
        &self,
        tape: &Tape,
        p: &BoundParams,
        zi_text: Var,
        zi_mel: Var,
        dropout_rate: f64,
        dropout_rng: Option<&mut SeededRng>,
    ) -> Var {
        let fused = tape.concat0(zi_text, zi_mel);
        let hidden = tape.tanh(self.fuse1.apply(tape, p, fused));
        let hidden = dropout(tape, hidden, dropout_rate, dropout_rng);
        self.fuse2.apply(tape, p, hidden)
    }

    /// Full training-path forward for one example: encode → cross → restore
    /// → re-encode → classify. With an rng, content maps are sampled and
    /// dropout is live; without, the pass is deterministic (posterior means,
    /// no dropout).
    pub fn forward(
        &self,
        tape: &Tape,
        p: &BoundParams,
        text: &TextData,
        mel: &Tensor,
        dropout_rate: f64,
        mut rng: Option<&mut SeededRng>,
    ) -> Result<ForwardPass> {
        let t_real = self.text_grid(tape, p, text)?;
        let m_real = self.mel_grid(tape, mel)?;
        let mask = self.text_mask(text);

        let lat_text = self.encode(tape, p, DomainKind::Text, t_real);
        let lat_mel = self.encode(tape, p, DomainKind::Mel, m_real);

        let zc_text = self.content_sample(tape, &lat_text, rng.as_deref_mut());
        let zc_mel = self.content_sample(tape, &lat_mel, rng.as_deref_mut());

        // cross: own content, the other domain's intent
        let u = self.generate(tape, p, DomainKind::Text, zc_text, lat_mel.intent);
        let u = tape.mul_const(u, &mask);
        let v = self.generate(tape, p, DomainKind::Mel, zc_mel, lat_text.intent);

        // restore: encode the intermediates and cross the intents back
        let lat_u = self.encode(tape, p, DomainKind::Text, u);
        let lat_v = self.encode(tape, p, DomainKind::Mel, v);
        let zc_u = self.content_sample(tape, &lat_u, rng.as_deref_mut());
        let zc_v = self.content_sample(tape, &lat_v, rng.as_deref_mut());
        let t_hat = self.generate(tape, p, DomainKind::Text, zc_u, lat_v.intent);
        let t_hat = tape.mul_const(t_hat, &mask);
        let m_hat = self.generate(tape, p, DomainKind::Mel, zc_v, lat_u.intent);

        // restored-feature latents drive both the distribution loss and the
        // training-time classifier
        let lat_text_hat = self.encode(tape, p, DomainKind::Text, t_hat);
        let lat_mel_hat = self.encode(tape, p, DomainKind::Mel, m_hat);
        let logits = self.fuse_and_classify(
            tape,
            p,
            lat_text_hat.intent,
            lat_mel_hat.intent,
            dropout_rate,
            rng.as_deref_mut(),
        );

        Ok(ForwardPass {
            t_real,
            m_real,
            lat_text,
            lat_mel,
            u,
            v,
            t_hat,
            m_hat,
            lat_text_hat,
            lat_mel_hat,
            logits,
        })
    }

    /// Inference: encode both inputs, fuse their (original) intents, argmax.
    /// Ties resolve to the lowest class id.
    pub fn predict(
        &self,
        tape: &Tape,
        p: &BoundParams,
        text: &TextData,
        mel: &Tensor,
    ) -> Result<usize> {
        let t = self.text_grid(tape, p, text)?;
        let m = self.mel_grid(tape, mel)?;
        let lt = self.encode(tape, p, DomainKind::Text, t);
        let lm = self.encode(tape, p, DomainKind::Mel, m);
        let logits = self.fuse_and_classify(tape, p, lt.intent, lm.intent, 0.0, None);
        Ok(argmax(tape.value_of(logits).data()))
    }

    /// Inference with intents taken from a *different* example: content
    /// comes from `(text, mel)`, intents from `(text_donor, mel_donor)`,
    /// grids are regenerated and classified. A disentangled model moves the
    /// prediction to the donor's class.
    pub fn predict_with_swapped_intent(
        &self,
        tape: &Tape,
        p: &BoundParams,
        text: &TextData,
        mel: &Tensor,
        text_donor: &TextData,
        mel_donor: &Tensor,
    ) -> Result<usize> {
        let t = self.text_grid(tape, p, text)?;
        let m = self.mel_grid(tape, mel)?;
        let mask = self.text_mask(text);
        let lt = self.encode(tape, p, DomainKind::Text, t);
        let lm = self.encode(tape, p, DomainKind::Mel, m);

        let td = self.text_grid(tape, p, text_donor)?;
        let md = self.mel_grid(tape, mel_donor)?;
        let lt_donor = self.encode(tape, p, DomainKind::Text, td);
        let lm_donor = self.encode(tape, p, DomainKind::Mel, md);

        // cross-style generation: own content, donor intents (text side
        // takes the donor's mel intent, mel side the donor's text intent)
        let u = self.generate(tape, p, DomainKind::Text, lt.content_mu, lm_donor.intent);
        let u = tape.mul_const(u, &mask);
        let v = self.generate(tape, p, DomainKind::Mel, lm.content_mu, lt_donor.intent);

        let lu = self.encode(tape, p, DomainKind::Text, u);
        let lv = self.encode(tape, p, DomainKind::Mel, v);
        let logits = self.fuse_and_classify(tape, p, lu.intent, lv.intent, 0.0, None);
        Ok(argmax(tape.value_of(logits).data()))
    }
}

/// First index of the maximum value.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}
