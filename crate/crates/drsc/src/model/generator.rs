//! Domain generator: (content map, intent vector) → feature grid.

use crate::autograd::{Tape, Var};
use crate::config::ModelConfig;
use crate::model::layers::{Conv1dLayer, ResBlock};
use crate::model::params::{BoundParams, ParamStore};
use crate::rng::SeededRng;

#[derive(Clone, Debug)]
pub struct Generator {
    inc: Conv1dLayer,
    res: Vec<ResBlock>,
    out: Conv1dLayer,
}

impl Generator {
    pub fn new(prefix: &str, c_out: usize, cfg: &ModelConfig) -> Self {
        Generator {
            inc: Conv1dLayer::same(
                format!("{prefix}/in"),
                cfg.d_content + cfg.d_intent,
                cfg.channels,
                1,
            ),
            res: (0..cfg.n_res_blocks)
                .map(|i| ResBlock::new(format!("{prefix}/res{i}"), cfg.channels))
                .collect(),
            out: Conv1dLayer::same(format!("{prefix}/out"), cfg.channels, c_out, 1),
        }
    }

    pub fn init(&self, store: &mut ParamStore, rng: &mut SeededRng) {
        self.inc.init(store, rng);
        for r in &self.res {
            r.init(store, rng);
        }
        self.out.init(store, rng);
    }

    /// `content`: [d_content, L]; `intent`: [d_intent]. The intent is tiled
    /// along the sequence and stacked under the content channels. Output is
    /// an unsquashed [c_out, L] grid.
    pub fn apply(&self, tape: &Tape, p: &BoundParams, content: Var, intent: Var) -> Var {
        let l = tape.shape_of(content)[1];
        let intent_map = tape.broadcast_col(intent, l);
        let stacked = tape.concat0(content, intent_map);
        let mut h = tape.tanh(self.inc.apply(tape, p, stacked));
        for r in &self.res {
            h = r.apply(tape, p, h);
        }
        self.out.apply(tape, p, h)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autograd::Tensor;

    #[test]
    fn generates_grid_of_requested_shape() {
        let cfg = ModelConfig::toy(4);
        let g = Generator::new("gen_mel", cfg.n_mels, &cfg);
        let mut store = ParamStore::new();
        let mut rng = SeededRng::new(5);
        g.init(&mut store, &mut rng);
        let tape = Tape::new();
        let p = store.bind(&tape);
        let content = tape.leaf(Tensor::randn(&[cfg.d_content, cfg.t_max], 1.0, &mut rng));
        let intent = tape.leaf(Tensor::randn(&[cfg.d_intent], 1.0, &mut rng));
        let y = g.apply(&tape, &p, content, intent);
        assert_eq!(tape.shape_of(y), vec![cfg.n_mels, cfg.t_max]);
    }

    #[test]
    fn intent_changes_every_column() {
        // the intent is broadcast along the sequence, so two different
        // intents with the same content must differ across the whole grid
        let cfg = ModelConfig::toy(4);
        let g = Generator::new("gen_text", cfg.d_txt, &cfg);
        let mut store = ParamStore::new();
        let mut rng = SeededRng::new(6);
        g.init(&mut store, &mut rng);
        let tape = Tape::new();
        let p = store.bind(&tape);
        let content = tape.leaf(Tensor::randn(&[cfg.d_content, cfg.l_max], 1.0, &mut rng));
        let i1 = tape.leaf(Tensor::randn(&[cfg.d_intent], 1.0, &mut rng));
        let i2 = tape.leaf(Tensor::randn(&[cfg.d_intent], 1.0, &mut rng));
        let y1 = tape.value_of(g.apply(&tape, &p, content, i1));
        let y2 = tape.value_of(g.apply(&tape, &p, content, i2));
        let l = cfg.l_max;
        for col in 0..l {
            let differs = (0..cfg.d_txt).any(|r| {
                (y1.data()[r * l + col] - y2.data()[r * l + col]).abs() > 1e-12
            });
            assert!(differs, "column {col} ignored the intent");
        }
    }
}
