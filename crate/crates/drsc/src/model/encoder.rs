//! Domain encoder: a feature grid goes in, a position-wise content
//! posterior (μ, log σ²) and a pooled intent vector come out.

use crate::autograd::{Tape, Var};
use crate::config::ModelConfig;
use crate::model::layers::{Conv1dLayer, ConvBank, Dense, ResBlock};
use crate::model::params::{BoundParams, ParamStore};
use crate::rng::SeededRng;

/// Encoder outputs: per-position content distribution plus one intent
/// vector for the whole sequence. Intent vectors from both domains share
/// the same dimension, so they can be swapped between generators.
#[derive(Clone, Copy, Debug)]
pub struct LatentPair {
    /// [d_content, L]
    pub content_mu: Var,
    /// [d_content, L]
    pub content_logvar: Var,
    /// [d_intent]
    pub intent: Var,
}

#[derive(Clone, Debug)]
pub struct Encoder {
    bank: ConvBank,
    res: Vec<ResBlock>,
    mu: Conv1dLayer,
    logvar: Conv1dLayer,
    int1: Dense,
    int2: Dense,
}

impl Encoder {
    pub fn new(prefix: &str, c_in: usize, cfg: &ModelConfig) -> Self {
        Encoder {
            bank: ConvBank::new(format!("{prefix}/bank"), c_in, cfg.channels, &cfg.conv_bank_kernels),
            res: (0..cfg.n_res_blocks)
                .map(|i| ResBlock::new(format!("{prefix}/res{i}"), cfg.channels))
                .collect(),
            mu: Conv1dLayer::same(format!("{prefix}/mu"), cfg.channels, cfg.d_content, 1),
            logvar: Conv1dLayer::same(format!("{prefix}/logvar"), cfg.channels, cfg.d_content, 1),
            int1: Dense::new(format!("{prefix}/int1"), cfg.channels, cfg.intent_hidden),
            int2: Dense::new(format!("{prefix}/int2"), cfg.intent_hidden, cfg.d_intent),
        }
    }

    pub fn init(&self, store: &mut ParamStore, rng: &mut SeededRng) {
        self.bank.init(store, rng);
        for r in &self.res {
            r.init(store, rng);
        }
        self.mu.init(store, rng);
        self.logvar.init(store, rng);
        self.int1.init(store, rng);
        self.int2.init(store, rng);
    }

    /// `x`: [c_in, L] feature grid.
    pub fn apply(&self, tape: &Tape, p: &BoundParams, x: Var) -> LatentPair {
        let mut h = self.bank.apply(tape, p, x);
        for r in &self.res {
            h = r.apply(tape, p, h);
        }
        let content_mu = self.mu.apply(tape, p, h);
        let content_logvar = self.logvar.apply(tape, p, h);
        let pooled = tape.row_mean(h);
        let hidden = tape.tanh(self.int1.apply(tape, p, pooled));
        let intent = self.int2.apply(tape, p, hidden);
        LatentPair { content_mu, content_logvar, intent }
    }
}
