//! Layer builders: each layer owns its parameter names (derived from a path
//! prefix), registers tensors at initialization, and replays itself onto a
//! tape at forward time.

use crate::autograd::{Tape, Tensor, Var};
use crate::model::params::{BoundParams, ParamStore};
use crate::rng::SeededRng;

/// 1-D convolution with explicit padding.
#[derive(Clone, Debug)]
pub struct Conv1dLayer {
    pub name: String,
    pub c_in: usize,
    pub c_out: usize,
    pub k: usize,
    pub stride: usize,
    pub pad_l: usize,
    pub pad_r: usize,
    pub bias: bool,
}

impl Conv1dLayer {
    /// Stride-1 convolution preserving sequence length.
    pub fn same(name: impl Into<String>, c_in: usize, c_out: usize, k: usize) -> Self {
        let pad_l = (k - 1) / 2;
        Conv1dLayer {
            name: name.into(),
            c_in,
            c_out,
            k,
            stride: 1,
            pad_l,
            pad_r: k - 1 - pad_l,
            bias: true,
        }
    }

    /// Length-halving convolution (kernel 4, stride 2, pad 1).
    pub fn halving(name: impl Into<String>, c_in: usize, c_out: usize) -> Self {
        Conv1dLayer { name: name.into(), c_in, c_out, k: 4, stride: 2, pad_l: 1, pad_r: 1, bias: true }
    }

    pub fn init(&self, store: &mut ParamStore, rng: &mut SeededRng) {
        let std = 1.0 / ((self.c_in * self.k) as f64).sqrt();
        store.insert(
            format!("{}.w", self.name),
            Tensor::randn(&[self.c_out, self.c_in, self.k], std, rng),
        );
        if self.bias {
            store.insert(format!("{}.b", self.name), Tensor::zeros(&[self.c_out]));
        }
    }

    pub fn apply(&self, tape: &Tape, p: &BoundParams, x: Var) -> Var {
        let w = p.var(&format!("{}.w", self.name));
        let b = if self.bias { Some(p.var(&format!("{}.b", self.name))) } else { None };
        tape.conv1d(x, w, b, self.stride, self.pad_l, self.pad_r)
    }

    pub fn out_len(&self, t_in: usize) -> usize {
        (t_in + self.pad_l + self.pad_r - self.k) / self.stride + 1
    }
}

/// Fully connected layer on rank-1 vectors.
#[derive(Clone, Debug)]
pub struct Dense {
    pub name: String,
    pub d_in: usize,
    pub d_out: usize,
}

impl Dense {
    pub fn new(name: impl Into<String>, d_in: usize, d_out: usize) -> Self {
        Dense { name: name.into(), d_in, d_out }
    }

    pub fn init(&self, store: &mut ParamStore, rng: &mut SeededRng) {
        let std = 1.0 / (self.d_in as f64).sqrt();
        store.insert(format!("{}.w", self.name), Tensor::randn(&[self.d_out, self.d_in], std, rng));
        store.insert(format!("{}.b", self.name), Tensor::zeros(&[self.d_out]));
    }

    /// [d_in] → [d_out].
    pub fn apply(&self, tape: &Tape, p: &BoundParams, x: Var) -> Var {
        let w = p.var(&format!("{}.w", self.name));
        let b = p.var(&format!("{}.b", self.name));
        let col = tape.reshape(x, &[self.d_in, 1]);
        let bcol = tape.reshape(b, &[self.d_out, 1]);
        let y = tape.add(tape.matmul(w, col), bcol);
        tape.reshape(y, &[self.d_out])
    }
}

/// Parallel convolutions with kernel sizes `kernels`, outputs concatenated
/// along channels and squashed with tanh. Total output channels =
/// `channels`; each branch contributes channels / kernels.len().
#[derive(Clone, Debug)]
pub struct ConvBank {
    pub name: String,
    pub branches: Vec<Conv1dLayer>,
}

impl ConvBank {
    pub fn new(name: impl Into<String>, c_in: usize, channels: usize, kernels: &[usize]) -> Self {
        let name = name.into();
        assert!(
            !kernels.is_empty() && channels % kernels.len() == 0,
            "bank channels {channels} must divide across {} kernels",
            kernels.len()
        );
        let per = channels / kernels.len();
        let branches = kernels
            .iter()
            .map(|&k| Conv1dLayer::same(format!("{name}.k{k}"), c_in, per, k))
            .collect();
        ConvBank { name, branches }
    }

    pub fn init(&self, store: &mut ParamStore, rng: &mut SeededRng) {
        for b in &self.branches {
            b.init(store, rng);
        }
    }

    pub fn apply(&self, tape: &Tape, p: &BoundParams, x: Var) -> Var {
        let mut acc: Option<Var> = None;
        for b in &self.branches {
            let y = b.apply(tape, p, x);
            acc = Some(match acc {
                None => y,
                Some(prev) => tape.concat0(prev, y),
            });
        }
        tape.tanh(acc.expect("bank has branches"))
    }
}

/// Residual unit: out = tanh(x + conv2(tanh(conv1(x)))), kernels 3,
/// channel-preserving.
#[derive(Clone, Debug)]
pub struct ResBlock {
    pub conv1: Conv1dLayer,
    pub conv2: Conv1dLayer,
}

impl ResBlock {
    pub fn new(name: impl Into<String>, channels: usize) -> Self {
        let name = name.into();
        ResBlock {
            conv1: Conv1dLayer::same(format!("{name}.c1"), channels, channels, 3),
            conv2: Conv1dLayer::same(format!("{name}.c2"), channels, channels, 3),
        }
    }

    pub fn init(&self, store: &mut ParamStore, rng: &mut SeededRng) {
        self.conv1.init(store, rng);
        self.conv2.init(store, rng);
    }

    pub fn apply(&self, tape: &Tape, p: &BoundParams, x: Var) -> Var {
        let h = tape.tanh(self.conv1.apply(tape, p, x));
        let h = self.conv2.apply(tape, p, h);
        tape.tanh(tape.add(x, h))
    }
}

/// Inverted dropout: at train time each element is zeroed with probability
/// `rate` and survivors are scaled by 1/(1-rate); at eval time identity.
pub fn dropout(tape: &Tape, x: Var, rate: f64, rng: Option<&mut SeededRng>) -> Var {
    let Some(rng) = rng else { return x };
    if rate <= 0.0 {
        return x;
    }
    let shape = tape.shape_of(x);
    let keep = 1.0 - rate;
    let n: usize = shape.iter().product();
    let mask: Vec<f64> = (0..n)
        .map(|_| if rng.uniform() < keep { 1.0 / keep } else { 0.0 })
        .collect();
    tape.mul_const(x, &Tensor::new(shape, mask))
}

/// A [rows, cols] mask that is 1 for columns < `valid` and 0 after.
pub fn length_mask(rows: usize, cols: usize, valid: usize) -> Tensor {
    let mut m = vec![0.0; rows * cols];
    for r in 0..rows {
        for c in 0..valid.min(cols) {
            m[r * cols + c] = 1.0;
        }
    }
    Tensor::new(vec![rows, cols], m)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn setup() -> (ParamStore, SeededRng) {
        (ParamStore::new(), SeededRng::new(7))
    }

    #[test]
    fn conv_same_preserves_length_for_all_bank_kernels() {
        let (mut store, mut rng) = setup();
        let bank = ConvBank::new("bank", 5, 16, &[1, 2, 3, 4, 5, 6, 7, 8]);
        bank.init(&mut store, &mut rng);
        let tape = Tape::new();
        let p = store.bind(&tape);
        let x = tape.leaf(Tensor::randn(&[5, 11], 1.0, &mut rng));
        let y = bank.apply(&tape, &p, x);
        assert_eq!(tape.shape_of(y), vec![16, 11]);
        assert!(tape.value_of(y).data().iter().all(|v| v.abs() <= 1.0), "tanh output");
    }

    #[test]
    fn halving_conv_halves_even_lengths() {
        let c = Conv1dLayer::halving("h", 3, 4);
        assert_eq!(c.out_len(256), 128);
        assert_eq!(c.out_len(6), 3);
        assert_eq!(c.out_len(5), 2);
    }

    #[test]
    fn dense_matches_manual_affine() {
        let (mut store, mut rng) = setup();
        let d = Dense::new("fc", 3, 2);
        d.init(&mut store, &mut rng);
        let tape = Tape::new();
        let p = store.bind(&tape);
        let x = tape.leaf(Tensor::new(vec![3], vec![1.0, -2.0, 0.5]));
        let y = d.apply(&tape, &p, x);
        let w = store.get("fc.w").data().to_vec();
        let expect = [
            w[0] * 1.0 + w[1] * -2.0 + w[2] * 0.5,
            w[3] * 1.0 + w[4] * -2.0 + w[5] * 0.5,
        ];
        let got = tape.value_of(y);
        assert_eq!(got.shape(), &[2]);
        for (g, e) in got.data().iter().zip(expect) {
            assert!((g - e).abs() < 1e-12);
        }
    }

    #[test]
    fn res_block_with_zero_weights_is_tanh_of_input() {
        let (mut store, _) = setup();
        let rb = ResBlock::new("rb", 2);
        // all-zero weights: h = conv2(tanh(conv1(x))) = 0, out = tanh(x)
        store.insert("rb.c1.w", Tensor::zeros(&[2, 2, 3]));
        store.insert("rb.c1.b", Tensor::zeros(&[2]));
        store.insert("rb.c2.w", Tensor::zeros(&[2, 2, 3]));
        store.insert("rb.c2.b", Tensor::zeros(&[2]));
        let tape = Tape::new();
        let p = store.bind(&tape);
        let x = tape.leaf(Tensor::new(vec![2, 2], vec![0.3, -0.7, 2.0, 0.0]));
        let y = rb.apply(&tape, &p, x);
        for (a, b) in tape.value_of(y).data().iter().zip([0.3f64, -0.7, 2.0, 0.0]) {
            assert!((a - b.tanh()).abs() < 1e-12);
        }
    }

    #[test]
    fn dropout_eval_is_identity_and_train_preserves_mean() {
        let tape = Tape::new();
        let x = tape.leaf(Tensor::full(&[10, 10], 1.0));
        let y = dropout(&tape, x, 0.5, None);
        assert_eq!(tape.value_of(y).data(), tape.value_of(x).data());

        let mut rng = SeededRng::new(3);
        let mut mean = 0.0;
        for _ in 0..200 {
            let z = dropout(&tape, x, 0.4, Some(&mut rng));
            mean += tape.value_of(z).data().iter().sum::<f64>() / 100.0;
        }
        mean /= 200.0;
        assert!((mean - 1.0).abs() < 0.05, "inverted dropout keeps expectation: {mean}");
    }

    #[test]
    fn length_mask_zeroes_padding_columns() {
        let m = length_mask(2, 4, 2);
        assert_eq!(m.data(), &[1.0, 1.0, 0.0, 0.0, 1.0, 1.0, 0.0, 0.0]);
        let full = length_mask(1, 3, 7);
        assert_eq!(full.data(), &[1.0, 1.0, 1.0]);
    }
}
