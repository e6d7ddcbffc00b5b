//! Reverse-mode automatic differentiation on a tape.
//!
//! A [`Tape`] records every operation applied to [`Var`] handles; calling
//! [`Tape::backward`] on a scalar walks the record once in reverse and
//! accumulates gradients for every node, including leaves bound to model
//! parameters. All values are f64 so finite-difference verification at tight
//! tolerances is meaningful.
//!
//! The op set is exactly what the encoders, generators, discriminators and
//! loss terms need — nothing speculative.

use std::cell::RefCell;

use super::tensor::Tensor;

/// Handle to a node on a [`Tape`]. Cheap to copy; only valid for the tape
/// that produced it.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Var(pub(crate) usize);

enum Op {
    Leaf,
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    Div(usize, usize),
    AddScalar(usize),
    MulScalar(usize, f64),
    /// Elementwise product with a constant tensor (masks, noise, dropout).
    MulConst(usize, Tensor),
    Matmul(usize, usize),
    Conv1d { x: usize, w: usize, b: Option<usize>, stride: usize, pad_l: usize },
    Tanh(usize),
    Sigmoid(usize),
    LeakyRelu(usize, f64),
    Exp(usize),
    Abs(usize),
    Sqrt(usize),
    Softplus(usize),
    Sum(usize),
    Mean(usize),
    RowMean(usize),
    RowMax(usize, Vec<usize>),
    Concat0(usize, usize),
    BroadcastCol(usize, usize),
    Embed(usize, Vec<usize>),
    Reshape(usize),
    LogSumExp(usize),
    IndexElem(usize, usize),
    AddN(Vec<usize>),
}

struct Node {
    value: Tensor,
    op: Op,
}

#[derive(Default)]
pub struct Tape {
    nodes: RefCell<Vec<Node>>,
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.borrow().is_empty()
    }

    fn push(&self, op: Op, value: Tensor) -> Var {
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(Node { value, op });
        Var(nodes.len() - 1)
    }

    /// Record a leaf holding `value`. Gradients accumulate here but stop.
    pub fn leaf(&self, value: Tensor) -> Var {
        self.push(Op::Leaf, value)
    }

    /// Alias for [`Tape::leaf`] that reads better for non-trainable inputs.
    pub fn constant(&self, value: Tensor) -> Var {
        self.leaf(value)
    }

    /// Copy a node's current value onto a fresh leaf, severing its history.
    pub fn detach(&self, v: Var) -> Var {
        let value = self.value_of(v);
        self.leaf(value)
    }

    pub fn value_of(&self, v: Var) -> Tensor {
        self.nodes.borrow()[v.0].value.clone()
    }

    pub fn shape_of(&self, v: Var) -> Vec<usize> {
        self.nodes.borrow()[v.0].value.shape().to_vec()
    }

    pub fn item(&self, v: Var) -> f64 {
        self.nodes.borrow()[v.0].value.item()
    }

    // --- elementwise binary --------------------------------------------------

    fn zip(&self, a: Var, b: Var, name: &str, f: impl Fn(f64, f64) -> f64) -> Tensor {
        let nodes = self.nodes.borrow();
        let (ta, tb) = (&nodes[a.0].value, &nodes[b.0].value);
        assert_eq!(ta.shape(), tb.shape(), "{name}: shape {:?} vs {:?}", ta.shape(), tb.shape());
        Tensor::new(
            ta.shape().to_vec(),
            ta.data().iter().zip(tb.data()).map(|(x, y)| f(*x, *y)).collect(),
        )
    }

    pub fn add(&self, a: Var, b: Var) -> Var {
        let v = self.zip(a, b, "add", |x, y| x + y);
        self.push(Op::Add(a.0, b.0), v)
    }

    pub fn sub(&self, a: Var, b: Var) -> Var {
        let v = self.zip(a, b, "sub", |x, y| x - y);
        self.push(Op::Sub(a.0, b.0), v)
    }

    pub fn mul(&self, a: Var, b: Var) -> Var {
        let v = self.zip(a, b, "mul", |x, y| x * y);
        self.push(Op::Mul(a.0, b.0), v)
    }

    pub fn div(&self, a: Var, b: Var) -> Var {
        let v = self.zip(a, b, "div", |x, y| x / y);
        self.push(Op::Div(a.0, b.0), v)
    }

    pub fn add_scalar(&self, a: Var, s: f64) -> Var {
        let v = {
            let nodes = self.nodes.borrow();
            let t = &nodes[a.0].value;
            Tensor::new(t.shape().to_vec(), t.data().iter().map(|x| x + s).collect())
        };
        self.push(Op::AddScalar(a.0), v)
    }

    pub fn mul_scalar(&self, a: Var, s: f64) -> Var {
        let v = {
            let nodes = self.nodes.borrow();
            let t = &nodes[a.0].value;
            Tensor::new(t.shape().to_vec(), t.data().iter().map(|x| x * s).collect())
        };
        self.push(Op::MulScalar(a.0, s), v)
    }

    pub fn neg(&self, a: Var) -> Var {
        self.mul_scalar(a, -1.0)
    }

    /// Elementwise product with a constant tensor that receives no gradient.
    pub fn mul_const(&self, a: Var, k: &Tensor) -> Var {
        let v = {
            let nodes = self.nodes.borrow();
            let t = &nodes[a.0].value;
            assert_eq!(t.shape(), k.shape(), "mul_const: shape {:?} vs {:?}", t.shape(), k.shape());
            Tensor::new(t.shape().to_vec(), t.data().iter().zip(k.data()).map(|(x, y)| x * y).collect())
        };
        self.push(Op::MulConst(a.0, k.clone()), v)
    }

    // --- elementwise unary ---------------------------------------------------

    fn map(&self, a: Var, f: impl Fn(f64) -> f64) -> Tensor {
        let nodes = self.nodes.borrow();
        let t = &nodes[a.0].value;
        Tensor::new(t.shape().to_vec(), t.data().iter().map(|x| f(*x)).collect())
    }

    pub fn tanh(&self, a: Var) -> Var {
        let v = self.map(a, f64::tanh);
        self.push(Op::Tanh(a.0), v)
    }

    pub fn sigmoid(&self, a: Var) -> Var {
        let v = self.map(a, |x| {
            if x >= 0.0 {
                1.0 / (1.0 + (-x).exp())
            } else {
                let e = x.exp();
                e / (1.0 + e)
            }
        });
        self.push(Op::Sigmoid(a.0), v)
    }

    pub fn leaky_relu(&self, a: Var, slope: f64) -> Var {
        let v = self.map(a, |x| if x > 0.0 { x } else { slope * x });
        self.push(Op::LeakyRelu(a.0, slope), v)
    }

    pub fn exp(&self, a: Var) -> Var {
        let v = self.map(a, f64::exp);
        self.push(Op::Exp(a.0), v)
    }

    pub fn abs(&self, a: Var) -> Var {
        let v = self.map(a, f64::abs);
        self.push(Op::Abs(a.0), v)
    }

    /// Square root with the convention d√x/dx = 0 at x = 0, so distances built
    /// on it stay differentiable when two inputs coincide.
    pub fn sqrt(&self, a: Var) -> Var {
        let v = self.map(a, f64::sqrt);
        self.push(Op::Sqrt(a.0), v)
    }

    /// Numerically stable ln(1 + eˣ).
    pub fn softplus(&self, a: Var) -> Var {
        let v = self.map(a, |x| x.max(0.0) + (-x.abs()).exp().ln_1p());
        self.push(Op::Softplus(a.0), v)
    }

    // --- linear algebra ------------------------------------------------------

    pub fn matmul(&self, a: Var, b: Var) -> Var {
        let v = {
            let nodes = self.nodes.borrow();
            let (ta, tb) = (&nodes[a.0].value, &nodes[b.0].value);
            assert_eq!(ta.shape().len(), 2, "matmul lhs rank");
            assert_eq!(tb.shape().len(), 2, "matmul rhs rank");
            let (m, k) = (ta.shape()[0], ta.shape()[1]);
            let (k2, n) = (tb.shape()[0], tb.shape()[1]);
            assert_eq!(k, k2, "matmul inner dim: {k} vs {k2}");
            let mut out = vec![0.0; m * n];
            for i in 0..m {
                for p in 0..k {
                    let aip = ta.data()[i * k + p];
                    if aip == 0.0 {
                        continue;
                    }
                    let brow = &tb.data()[p * n..(p + 1) * n];
                    let orow = &mut out[i * n..(i + 1) * n];
                    for j in 0..n {
                        orow[j] += aip * brow[j];
                    }
                }
            }
            Tensor::new(vec![m, n], out)
        };
        self.push(Op::Matmul(a.0, b.0), v)
    }

    /// 1-D convolution. `x`: [C_in, T], `w`: [C_out, C_in, K], `b`: [C_out].
    /// Zero padding of `pad_l`/`pad_r` frames; output length
    /// (T + pad_l + pad_r − K)/stride + 1.
    pub fn conv1d(&self, x: Var, w: Var, b: Option<Var>, stride: usize, pad_l: usize, pad_r: usize) -> Var {
        assert!(stride >= 1);
        let v = {
            let nodes = self.nodes.borrow();
            let tx = &nodes[x.0].value;
            let tw = &nodes[w.0].value;
            assert_eq!(tx.shape().len(), 2, "conv1d input rank");
            assert_eq!(tw.shape().len(), 3, "conv1d weight rank");
            let (c_in, t_in) = (tx.shape()[0], tx.shape()[1]);
            let (c_out, c_in_w, k) = (tw.shape()[0], tw.shape()[1], tw.shape()[2]);
            assert_eq!(c_in, c_in_w, "conv1d channels: input {c_in}, weight {c_in_w}");
            let span = t_in + pad_l + pad_r;
            assert!(span >= k, "conv1d: padded length {span} < kernel {k}");
            let t_out = (span - k) / stride + 1;
            let mut out = vec![0.0; c_out * t_out];
            if let Some(bv) = b {
                let tb = &nodes[bv.0].value;
                assert_eq!(tb.shape(), [c_out], "conv1d bias shape");
                for co in 0..c_out {
                    let bias = tb.data()[co];
                    for t in 0..t_out {
                        out[co * t_out + t] = bias;
                    }
                }
            }
            for co in 0..c_out {
                for ci in 0..c_in {
                    let wrow = &tw.data()[(co * c_in + ci) * k..(co * c_in + ci + 1) * k];
                    let xrow = &tx.data()[ci * t_in..(ci + 1) * t_in];
                    for t in 0..t_out {
                        let base = t * stride;
                        let mut acc = 0.0;
                        for (kk, &wv) in wrow.iter().enumerate() {
                            let j = base + kk;
                            if j >= pad_l && j - pad_l < t_in {
                                acc += wv * xrow[j - pad_l];
                            }
                        }
                        out[co * t_out + t] += acc;
                    }
                }
            }
            Tensor::new(vec![c_out, t_out], out)
        };
        self.push(Op::Conv1d { x: x.0, w: w.0, b: b.map(|v| v.0), stride, pad_l }, v)
    }

    // --- reductions ----------------------------------------------------------

    pub fn sum(&self, a: Var) -> Var {
        let v = {
            let nodes = self.nodes.borrow();
            Tensor::scalar(nodes[a.0].value.data().iter().sum())
        };
        self.push(Op::Sum(a.0), v)
    }

    pub fn mean(&self, a: Var) -> Var {
        let v = {
            let nodes = self.nodes.borrow();
            let t = &nodes[a.0].value;
            Tensor::scalar(t.data().iter().sum::<f64>() / t.len() as f64)
        };
        self.push(Op::Mean(a.0), v)
    }

    /// Mean over the second axis: [R, C] → [R].
    pub fn row_mean(&self, a: Var) -> Var {
        let v = {
            let nodes = self.nodes.borrow();
            let t = &nodes[a.0].value;
            assert_eq!(t.shape().len(), 2, "row_mean rank");
            let (r, c) = (t.shape()[0], t.shape()[1]);
            let out = (0..r).map(|i| t.row(i).iter().sum::<f64>() / c as f64).collect();
            Tensor::new(vec![r], out)
        };
        self.push(Op::RowMean(a.0), v)
    }

    /// Max over the second axis: [R, C] → [R]. Ties resolve to the first
    /// maximal position.
    pub fn row_max(&self, a: Var) -> Var {
        let (v, arg) = {
            let nodes = self.nodes.borrow();
            let t = &nodes[a.0].value;
            assert_eq!(t.shape().len(), 2, "row_max rank");
            let (r, _c) = (t.shape()[0], t.shape()[1]);
            let mut out = Vec::with_capacity(r);
            let mut arg = Vec::with_capacity(r);
            for i in 0..r {
                let row = t.row(i);
                let (mut best, mut bi) = (row[0], 0);
                for (j, &x) in row.iter().enumerate().skip(1) {
                    if x > best {
                        best = x;
                        bi = j;
                    }
                }
                out.push(best);
                arg.push(bi);
            }
            (Tensor::new(vec![r], out), arg)
        };
        self.push(Op::RowMax(a.0, arg), v)
    }

    // --- structure -----------------------------------------------------------

    /// Concatenate along axis 0. Trailing dimensions must match.
    pub fn concat0(&self, a: Var, b: Var) -> Var {
        let v = {
            let nodes = self.nodes.borrow();
            let (ta, tb) = (&nodes[a.0].value, &nodes[b.0].value);
            assert_eq!(ta.shape()[1..], tb.shape()[1..], "concat0 trailing dims");
            let mut shape = ta.shape().to_vec();
            shape[0] += tb.shape()[0];
            let mut data = Vec::with_capacity(ta.len() + tb.len());
            data.extend_from_slice(ta.data());
            data.extend_from_slice(tb.data());
            Tensor::new(shape, data)
        };
        self.push(Op::Concat0(a.0, b.0), v)
    }

    /// Tile a vector [D] into columns of a [D, T] matrix.
    pub fn broadcast_col(&self, a: Var, t: usize) -> Var {
        let v = {
            let nodes = self.nodes.borrow();
            let ta = &nodes[a.0].value;
            assert_eq!(ta.shape().len(), 1, "broadcast_col input rank");
            let d = ta.shape()[0];
            let mut out = vec![0.0; d * t];
            for i in 0..d {
                let x = ta.data()[i];
                for j in 0..t {
                    out[i * t + j] = x;
                }
            }
            Tensor::new(vec![d, t], out)
        };
        self.push(Op::BroadcastCol(a.0, t), v)
    }

    /// Gather embedding vectors: `table` [V, D], `ids` length L → output
    /// [D, L] (one column per position, ready for convolution).
    pub fn embed(&self, table: Var, ids: &[usize]) -> Var {
        let v = {
            let nodes = self.nodes.borrow();
            let tt = &nodes[table.0].value;
            assert_eq!(tt.shape().len(), 2, "embed table rank");
            let (vocab, d) = (tt.shape()[0], tt.shape()[1]);
            let l = ids.len();
            let mut out = vec![0.0; d * l];
            for (pos, &id) in ids.iter().enumerate() {
                assert!(id < vocab, "token id {id} out of vocabulary {vocab}");
                for dim in 0..d {
                    out[dim * l + pos] = tt.data()[id * d + dim];
                }
            }
            Tensor::new(vec![d, l], out)
        };
        self.push(Op::Embed(table.0, ids.to_vec()), v)
    }

    pub fn reshape(&self, a: Var, shape: &[usize]) -> Var {
        let v = {
            let nodes = self.nodes.borrow();
            nodes[a.0].value.clone().reshape(shape)
        };
        self.push(Op::Reshape(a.0), v)
    }

    /// Stable log Σ exp over a vector; returns a scalar.
    pub fn logsumexp(&self, a: Var) -> Var {
        let v = {
            let nodes = self.nodes.borrow();
            let t = &nodes[a.0].value;
            assert_eq!(t.shape().len(), 1, "logsumexp rank");
            let m = t.data().iter().fold(f64::NEG_INFINITY, |acc, &x| acc.max(x));
            let s: f64 = t.data().iter().map(|&x| (x - m).exp()).sum();
            Tensor::scalar(m + s.ln())
        };
        self.push(Op::LogSumExp(a.0), v)
    }

    /// Pick one element of a vector as a scalar.
    pub fn index_elem(&self, a: Var, i: usize) -> Var {
        let v = {
            let nodes = self.nodes.borrow();
            let t = &nodes[a.0].value;
            assert_eq!(t.shape().len(), 1, "index_elem rank");
            assert!(i < t.len(), "index {i} out of bounds {}", t.len());
            Tensor::scalar(t.data()[i])
        };
        self.push(Op::IndexElem(a.0, i), v)
    }

    /// Sum of same-shaped nodes (used to average per-sample losses).
    pub fn add_n(&self, vars: &[Var]) -> Var {
        assert!(!vars.is_empty(), "add_n of nothing");
        let v = {
            let nodes = self.nodes.borrow();
            let mut acc = nodes[vars[0].0].value.clone();
            for v in &vars[1..] {
                acc.add_in_place(&nodes[v.0].value);
            }
            acc
        };
        self.push(Op::AddN(vars.iter().map(|v| v.0).collect()), v)
    }

    /// Mean of same-shaped nodes.
    pub fn mean_n(&self, vars: &[Var]) -> Var {
        let s = self.add_n(vars);
        self.mul_scalar(s, 1.0 / vars.len() as f64)
    }

    // --- backward ------------------------------------------------------------

    /// Reverse sweep from a scalar `root`; returns per-node gradients.
    pub fn backward(&self, root: Var) -> Gradients {
        let nodes = self.nodes.borrow();
        assert_eq!(nodes[root.0].value.len(), 1, "backward root must be a scalar");
        let mut grads: Vec<Option<Tensor>> = (0..nodes.len()).map(|_| None).collect();
        grads[root.0] = Some(Tensor::scalar(1.0));

        for i in (0..=root.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &nodes[i];
            match &node.op {
                Op::Leaf => {}
                Op::Add(a, b) => {
                    acc(&mut grads, *a, g.clone());
                    acc(&mut grads, *b, g.clone());
                }
                Op::Sub(a, b) => {
                    acc(&mut grads, *a, g.clone());
                    let mut gn = g.clone();
                    gn.scale_in_place(-1.0);
                    acc(&mut grads, *b, gn);
                }
                Op::Mul(a, b) => {
                    let (ta, tb) = (&nodes[*a].value, &nodes[*b].value);
                    acc(&mut grads, *a, zip_vals(&g, tb, |gv, y| gv * y));
                    acc(&mut grads, *b, zip_vals(&g, ta, |gv, x| gv * x));
                }
                Op::Div(a, b) => {
                    let (ta, tb) = (&nodes[*a].value, &nodes[*b].value);
                    acc(&mut grads, *a, zip_vals(&g, tb, |gv, y| gv / y));
                    let mut gb = Tensor::zeros(tb.shape());
                    for ((o, gv), (x, y)) in gb
                        .data_mut()
                        .iter_mut()
                        .zip(g.data())
                        .zip(ta.data().iter().zip(tb.data()))
                    {
                        *o = -gv * x / (y * y);
                    }
                    acc(&mut grads, *b, gb);
                }
                Op::AddScalar(a) => acc(&mut grads, *a, g.clone()),
                Op::MulScalar(a, s) => {
                    let mut ga = g.clone();
                    ga.scale_in_place(*s);
                    acc(&mut grads, *a, ga);
                }
                Op::MulConst(a, k) => acc(&mut grads, *a, zip_vals(&g, k, |gv, kv| gv * kv)),
                Op::Matmul(a, b) => {
                    let (ta, tb) = (&nodes[*a].value, &nodes[*b].value);
                    // dA = G·Bᵀ, dB = Aᵀ·G
                    acc(&mut grads, *a, matmul_nt(&g, tb));
                    acc(&mut grads, *b, matmul_tn(ta, &g));
                }
                Op::Conv1d { x, w, b, stride, pad_l } => {
                    let tx = &nodes[*x].value;
                    let tw = &nodes[*w].value;
                    let (c_in, t_in) = (tx.shape()[0], tx.shape()[1]);
                    let (c_out, _, k) = (tw.shape()[0], tw.shape()[1], tw.shape()[2]);
                    let t_out = g.shape()[1];
                    let mut gx = Tensor::zeros(tx.shape());
                    let mut gw = Tensor::zeros(tw.shape());
                    for co in 0..c_out {
                        let grow = &g.data()[co * t_out..(co + 1) * t_out];
                        for ci in 0..c_in {
                            let wbase = (co * c_in + ci) * k;
                            let xrow = &tx.data()[ci * t_in..(ci + 1) * t_in];
                            for t in 0..t_out {
                                let gv = grow[t];
                                if gv == 0.0 {
                                    continue;
                                }
                                let base = t * stride;
                                for kk in 0..k {
                                    let j = base + kk;
                                    if j >= *pad_l && j - pad_l < t_in
                                    {
                                        gx.data_mut()[ci * t_in + (j - pad_l)] +=
                                            gv * nodes[*w].value.data()[wbase + kk];
                                        gw.data_mut()[wbase + kk] += gv * xrow[j - pad_l];
                                    }
                                }
                            }
                        }
                    }
                    acc(&mut grads, *x, gx);
                    acc(&mut grads, *w, gw);
                    if let Some(bi) = b {
                        let mut gb = Tensor::zeros(&[c_out]);
                        for co in 0..c_out {
                            gb.data_mut()[co] = g.data()[co * t_out..(co + 1) * t_out].iter().sum();
                        }
                        acc(&mut grads, *bi, gb);
                    }
                }
                Op::Tanh(a) => {
                    let y = &node.value;
                    acc(&mut grads, *a, zip_vals(&g, y, |gv, yv| gv * (1.0 - yv * yv)));
                }
                Op::Sigmoid(a) => {
                    let y = &node.value;
                    acc(&mut grads, *a, zip_vals(&g, y, |gv, yv| gv * yv * (1.0 - yv)));
                }
                Op::LeakyRelu(a, slope) => {
                    let tx = &nodes[*a].value;
                    acc(&mut grads, *a, zip_vals(&g, tx, |gv, xv| if xv > 0.0 { gv } else { gv * slope }));
                }
                Op::Exp(a) => {
                    let y = &node.value;
                    acc(&mut grads, *a, zip_vals(&g, y, |gv, yv| gv * yv));
                }
                Op::Abs(a) => {
                    let tx = &nodes[*a].value;
                    acc(
                        &mut grads,
                        *a,
                        zip_vals(&g, tx, |gv, xv| {
                            if xv > 0.0 {
                                gv
                            } else if xv < 0.0 {
                                -gv
                            } else {
                                0.0
                            }
                        }),
                    );
                }
                Op::Sqrt(a) => {
                    let y = &node.value;
                    acc(&mut grads, *a, zip_vals(&g, y, |gv, yv| if yv > 0.0 { gv / (2.0 * yv) } else { 0.0 }));
                }
                Op::Softplus(a) => {
                    let tx = &nodes[*a].value;
                    acc(
                        &mut grads,
                        *a,
                        zip_vals(&g, tx, |gv, xv| {
                            let s = if xv >= 0.0 {
                                1.0 / (1.0 + (-xv).exp())
                            } else {
                                let e = xv.exp();
                                e / (1.0 + e)
                            };
                            gv * s
                        }),
                    );
                }
                Op::Sum(a) => {
                    let ta = &nodes[*a].value;
                    acc(&mut grads, *a, Tensor::full(ta.shape(), g.item()));
                }
                Op::Mean(a) => {
                    let ta = &nodes[*a].value;
                    acc(&mut grads, *a, Tensor::full(ta.shape(), g.item() / ta.len() as f64));
                }
                Op::RowMean(a) => {
                    let ta = &nodes[*a].value;
                    let (r, c) = (ta.shape()[0], ta.shape()[1]);
                    let mut ga = Tensor::zeros(ta.shape());
                    for i in 0..r {
                        let gv = g.data()[i] / c as f64;
                        for j in 0..c {
                            ga.data_mut()[i * c + j] = gv;
                        }
                    }
                    acc(&mut grads, *a, ga);
                }
                Op::RowMax(a, arg) => {
                    let ta = &nodes[*a].value;
                    let c = ta.shape()[1];
                    let mut ga = Tensor::zeros(ta.shape());
                    for (i, &j) in arg.iter().enumerate() {
                        ga.data_mut()[i * c + j] = g.data()[i];
                    }
                    acc(&mut grads, *a, ga);
                }
                Op::Concat0(a, b) => {
                    let (ta, tb) = (&nodes[*a].value, &nodes[*b].value);
                    let ga = Tensor::new(ta.shape().to_vec(), g.data()[..ta.len()].to_vec());
                    let gb = Tensor::new(tb.shape().to_vec(), g.data()[ta.len()..].to_vec());
                    acc(&mut grads, *a, ga);
                    acc(&mut grads, *b, gb);
                }
                Op::BroadcastCol(a, t) => {
                    let d = nodes[*a].value.shape()[0];
                    let mut ga = Tensor::zeros(&[d]);
                    for i in 0..d {
                        ga.data_mut()[i] = g.data()[i * t..(i + 1) * t].iter().sum();
                    }
                    acc(&mut grads, *a, ga);
                }
                Op::Embed(table, ids) => {
                    let tt = &nodes[*table].value;
                    let d = tt.shape()[1];
                    let l = ids.len();
                    let mut gt = Tensor::zeros(tt.shape());
                    for (pos, &id) in ids.iter().enumerate() {
                        for dim in 0..d {
                            gt.data_mut()[id * d + dim] += g.data()[dim * l + pos];
                        }
                    }
                    acc(&mut grads, *table, gt);
                }
                Op::Reshape(a) => {
                    let ta = &nodes[*a].value;
                    acc(&mut grads, *a, g.clone().reshape(ta.shape()));
                }
                Op::LogSumExp(a) => {
                    let ta = &nodes[*a].value;
                    let y = node.value.item();
                    let gv = g.item();
                    let ga = Tensor::new(
                        ta.shape().to_vec(),
                        ta.data().iter().map(|&x| gv * (x - y).exp()).collect(),
                    );
                    acc(&mut grads, *a, ga);
                }
                Op::IndexElem(a, idx) => {
                    let ta = &nodes[*a].value;
                    let mut ga = Tensor::zeros(ta.shape());
                    ga.data_mut()[*idx] = g.item();
                    acc(&mut grads, *a, ga);
                }
                Op::AddN(parents) => {
                    for p in parents {
                        acc(&mut grads, *p, g.clone());
                    }
                }
            }
            grads[i] = Some(g);
        }
        Gradients { grads }
    }
}

fn acc(grads: &mut [Option<Tensor>], idx: usize, t: Tensor) {
    match &mut grads[idx] {
        Some(g) => g.add_in_place(&t),
        slot => *slot = Some(t),
    }
}

fn zip_vals(g: &Tensor, other: &Tensor, f: impl Fn(f64, f64) -> f64) -> Tensor {
    debug_assert_eq!(g.shape(), other.shape());
    Tensor::new(
        g.shape().to_vec(),
        g.data().iter().zip(other.data()).map(|(a, b)| f(*a, *b)).collect(),
    )
}

/// G·Bᵀ where G is [m, n] and B is [k, n] → [m, k].
fn matmul_nt(g: &Tensor, b: &Tensor) -> Tensor {
    let (m, n) = (g.shape()[0], g.shape()[1]);
    let k = b.shape()[0];
    debug_assert_eq!(b.shape()[1], n);
    let mut out = vec![0.0; m * k];
    for i in 0..m {
        for p in 0..k {
            let mut acc = 0.0;
            for j in 0..n {
                acc += g.data()[i * n + j] * b.data()[p * n + j];
            }
            out[i * k + p] = acc;
        }
    }
    Tensor::new(vec![m, k], out)
}

/// Aᵀ·G where A is [m, k] and G is [m, n] → [k, n].
fn matmul_tn(a: &Tensor, g: &Tensor) -> Tensor {
    let (m, k) = (a.shape()[0], a.shape()[1]);
    let n = g.shape()[1];
    debug_assert_eq!(g.shape()[0], m);
    let mut out = vec![0.0; k * n];
    for i in 0..m {
        for p in 0..k {
            let aip = a.data()[i * k + p];
            if aip == 0.0 {
                continue;
            }
            let grow = &g.data()[i * n..(i + 1) * n];
            let orow = &mut out[p * n..(p + 1) * n];
            for j in 0..n {
                orow[j] += aip * grow[j];
            }
        }
    }
    Tensor::new(vec![k, n], out)
}

/// Per-node gradients produced by [`Tape::backward`].
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        self.grads.get(v.0).and_then(|g| g.as_ref())
    }

    pub fn take(&mut self, v: Var) -> Option<Tensor> {
        self.grads.get_mut(v.0).and_then(|g| g.take())
    }
}
