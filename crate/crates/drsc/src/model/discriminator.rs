//! Domain discriminator: feature grid → realness score (pre-sigmoid).

use crate::autograd::{Tape, Var};
use crate::config::ModelConfig;
use crate::model::layers::{Conv1dLayer, Dense};
use crate::model::params::{BoundParams, ParamStore};
use crate::rng::SeededRng;

const LEAK: f64 = 0.2;

#[derive(Clone, Debug)]
pub struct Discriminator {
    convs: Vec<Conv1dLayer>,
    out: Dense,
}

impl Discriminator {
    pub fn new(prefix: &str, c_in: usize, cfg: &ModelConfig) -> Self {
        let mut convs = Vec::with_capacity(cfg.disc_layers);
        for i in 0..cfg.disc_layers {
            let cin = if i == 0 { c_in } else { cfg.disc_channels };
            convs.push(Conv1dLayer::halving(format!("{prefix}/conv{i}"), cin, cfg.disc_channels));
        }
        Discriminator { convs, out: Dense::new(format!("{prefix}/out"), cfg.disc_channels, 1) }
    }

    pub fn init(&self, store: &mut ParamStore, rng: &mut SeededRng) {
        for c in &self.convs {
            c.init(store, rng);
        }
        self.out.init(store, rng);
    }

    /// Smallest input length the stride-2 stack accepts.
    pub fn min_input_len(n_layers: usize) -> usize {
        // each layer maps t → (t - 2) / 2 + 1 and needs t ≥ 2
        let mut t = 1usize;
        for _ in 0..n_layers {
            t = (t - 1) * 2 + 2;
        }
        t
    }

    /// `x`: [c_in, T] → scalar score.
    pub fn apply(&self, tape: &Tape, p: &BoundParams, x: Var) -> Var {
        let mut h = x;
        for c in &self.convs {
            h = tape.leaky_relu(c.apply(tape, p, h), LEAK);
        }
        let pooled = tape.row_mean(h);
        let score = self.out.apply(tape, p, pooled);
        tape.index_elem(score, 0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autograd::Tensor;

    #[test]
    fn produces_a_scalar() {
        let cfg = ModelConfig::toy(4);
        let d = Discriminator::new("disc_mel", cfg.n_mels, &cfg);
        let mut store = ParamStore::new();
        let mut rng = SeededRng::new(8);
        d.init(&mut store, &mut rng);
        let tape = Tape::new();
        let p = store.bind(&tape);
        let x = tape.leaf(Tensor::randn(&[cfg.n_mels, cfg.t_max], 1.0, &mut rng));
        let s = d.apply(&tape, &p, x);
        assert_eq!(tape.shape_of(s), vec![1]);
    }

    #[test]
    fn all_its_params_are_max_player() {
        use crate::model::params::{role_of, Role};
        let cfg = ModelConfig::toy(4);
        let d = Discriminator::new("disc_text", cfg.d_txt, &cfg);
        let mut store = ParamStore::new();
        let mut rng = SeededRng::new(8);
        d.init(&mut store, &mut rng);
        for name in store.names() {
            assert_eq!(role_of(name), Role::MaxPlayer, "{name}");
        }
    }

    #[test]
    fn min_input_len_matches_layer_arithmetic() {
        assert_eq!(Discriminator::min_input_len(1), 2);
        assert_eq!(Discriminator::min_input_len(2), 4);
        assert_eq!(Discriminator::min_input_len(4), 16);
        // toy config: two layers over length 5 → 2 → 1 stays legal
        let c = Conv1dLayer::halving("x", 1, 1);
        assert_eq!(c.out_len(5), 2);
        assert_eq!(c.out_len(2), 1);
    }
}
