//! Minimal reverse-mode autodiff over dense f64 tensors.

mod tape;
mod tensor;

pub use tape::{Gradients, Tape, Var};
pub use tensor::Tensor;

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SeededRng;

    /// Evaluate a scalar-valued graph on fresh leaves.
    fn eval(f: &dyn Fn(&Tape, &[Var]) -> Var, inputs: &[Tensor]) -> f64 {
        let tape = Tape::new();
        let vars: Vec<Var> = inputs.iter().map(|t| tape.leaf(t.clone())).collect();
        let y = f(&tape, &vars);
        tape.item(y)
    }

    /// Assert analytic gradients match central finite differences for every
    /// coordinate of every input.
    fn check_grads(f: &dyn Fn(&Tape, &[Var]) -> Var, inputs: &[Tensor], eps: f64, tol: f64) {
        let tape = Tape::new();
        let vars: Vec<Var> = inputs.iter().map(|t| tape.leaf(t.clone())).collect();
        let y = f(&tape, &vars);
        assert_eq!(tape.value_of(y).len(), 1, "check_grads target must be scalar");
        let grads = tape.backward(y);

        for (i, t) in inputs.iter().enumerate() {
            let analytic = grads
                .get(vars[i])
                .cloned()
                .unwrap_or_else(|| Tensor::zeros(t.shape()));
            for j in 0..t.len() {
                let mut plus = inputs.to_vec();
                plus[i].data_mut()[j] += eps;
                let mut minus = inputs.to_vec();
                minus[i].data_mut()[j] -= eps;
                let fd = (eval(f, &plus) - eval(f, &minus)) / (2.0 * eps);
                let a = analytic.data()[j];
                let denom = a.abs().max(fd.abs());
                let ok = if denom < 1e-10 { (a - fd).abs() < 1e-8 } else { (a - fd).abs() / denom < tol };
                assert!(ok, "input {i} coord {j}: analytic {a} vs fd {fd}");
            }
        }
    }

    fn rng() -> SeededRng {
        SeededRng::new(0xD5C)
    }

    // --- elementwise ---------------------------------------------------------

    #[test]
    fn grad_add_sub_mul() {
        let mut r = rng();
        let a = Tensor::randn(&[3, 4], 1.0, &mut r);
        let b = Tensor::randn(&[3, 4], 1.0, &mut r);
        check_grads(&|t, v| t.sum(t.add(v[0], v[1])), &[a.clone(), b.clone()], 1e-5, 1e-7);
        check_grads(&|t, v| t.sum(t.sub(v[0], v[1])), &[a.clone(), b.clone()], 1e-5, 1e-7);
        check_grads(&|t, v| t.sum(t.mul(v[0], v[1])), &[a, b], 1e-5, 1e-6);
    }

    #[test]
    fn grad_div() {
        let mut r = rng();
        let a = Tensor::randn(&[6], 1.0, &mut r);
        // keep denominators clear of zero
        let b = Tensor::new(vec![6], (0..6).map(|i| 1.5 + 0.3 * i as f64).collect());
        check_grads(&|t, v| t.sum(t.div(v[0], v[1])), &[a, b], 1e-5, 1e-6);
    }

    #[test]
    fn grad_scalar_ops() {
        let mut r = rng();
        let a = Tensor::randn(&[5], 1.0, &mut r);
        check_grads(&|t, v| t.sum(t.add_scalar(v[0], 2.5)), &[a.clone()], 1e-5, 1e-7);
        check_grads(&|t, v| t.sum(t.mul_scalar(v[0], -1.7)), &[a], 1e-5, 1e-7);
    }

    #[test]
    fn grad_mul_const_blocks_mask() {
        let mut r = rng();
        let a = Tensor::randn(&[4], 1.0, &mut r);
        let mask = Tensor::new(vec![4], vec![1.0, 0.0, 1.0, 0.0]);
        let tape = Tape::new();
        let x = tape.leaf(a.clone());
        let y = tape.sum(tape.mul_const(x, &mask));
        let g = tape.backward(y);
        assert_eq!(g.get(x).unwrap().data(), &[1.0, 0.0, 1.0, 0.0]);
        check_grads(&move |t, v| t.sum(t.mul_const(v[0], &mask)), &[a], 1e-5, 1e-7);
    }

    // --- unary ---------------------------------------------------------------

    #[test]
    fn grad_unary_smooth() {
        let mut r = rng();
        let a = Tensor::randn(&[7], 0.8, &mut r);
        check_grads(&|t, v| t.sum(t.tanh(v[0])), &[a.clone()], 1e-5, 1e-6);
        check_grads(&|t, v| t.sum(t.sigmoid(v[0])), &[a.clone()], 1e-5, 1e-6);
        check_grads(&|t, v| t.sum(t.exp(v[0])), &[a.clone()], 1e-5, 1e-6);
        check_grads(&|t, v| t.sum(t.softplus(v[0])), &[a], 1e-5, 1e-6);
    }

    #[test]
    fn grad_unary_kinked_away_from_kink() {
        // |x| and leaky-relu are checked on values bounded away from 0 where
        // they are differentiable.
        let a = Tensor::new(vec![6], vec![-2.0, -0.7, -0.2, 0.3, 1.1, 2.4]);
        check_grads(&|t, v| t.sum(t.abs(v[0])), &[a.clone()], 1e-5, 1e-7);
        check_grads(&|t, v| t.sum(t.leaky_relu(v[0], 0.2)), &[a], 1e-5, 1e-7);
    }

    #[test]
    fn grad_sqrt_positive_and_zero_convention() {
        let a = Tensor::new(vec![4], vec![0.3, 1.0, 2.2, 5.0]);
        check_grads(&|t, v| t.sum(t.sqrt(v[0])), &[a], 1e-6, 1e-5);
        // at 0 the gradient is defined as 0 rather than +inf
        let tape = Tape::new();
        let x = tape.leaf(Tensor::from_vec(vec![0.0]));
        let y = tape.sum(tape.sqrt(x));
        let g = tape.backward(y);
        assert_eq!(g.get(x).unwrap().data(), &[0.0]);
    }

    #[test]
    fn abs_grad_zero_at_zero() {
        let tape = Tape::new();
        let x = tape.leaf(Tensor::from_vec(vec![0.0]));
        let y = tape.sum(tape.abs(x));
        let g = tape.backward(y);
        assert_eq!(g.get(x).unwrap().data(), &[0.0]);
    }

    // --- linear algebra ------------------------------------------------------

    #[test]
    fn matmul_value() {
        let tape = Tape::new();
        let a = tape.leaf(Tensor::new(vec![2, 3], vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]));
        let b = tape.leaf(Tensor::new(vec![3, 2], vec![7.0, 8.0, 9.0, 10.0, 11.0, 12.0]));
        let c = tape.matmul(a, b);
        assert_eq!(tape.value_of(c).data(), &[58.0, 64.0, 139.0, 154.0]);
    }

    #[test]
    fn grad_matmul() {
        let mut r = rng();
        let a = Tensor::randn(&[3, 4], 1.0, &mut r);
        let b = Tensor::randn(&[4, 2], 1.0, &mut r);
        check_grads(&|t, v| t.mean(t.matmul(v[0], v[1])), &[a, b], 1e-5, 1e-6);
    }

    #[test]
    fn conv1d_identity_kernel() {
        let tape = Tape::new();
        let x = tape.leaf(Tensor::new(vec![1, 5], vec![1.0, 2.0, 3.0, 4.0, 5.0]));
        let w = tape.leaf(Tensor::new(vec![1, 1, 1], vec![1.0]));
        let y = tape.conv1d(x, w, None, 1, 0, 0);
        assert_eq!(tape.value_of(y).data(), &[1.0, 2.0, 3.0, 4.0, 5.0]);
    }

    #[test]
    fn conv1d_known_value() {
        // moving sum of window 3 with zero padding
        let tape = Tape::new();
        let x = tape.leaf(Tensor::new(vec![1, 4], vec![1.0, 2.0, 3.0, 4.0]));
        let w = tape.leaf(Tensor::new(vec![1, 1, 3], vec![1.0, 1.0, 1.0]));
        let y = tape.conv1d(x, w, None, 1, 1, 1);
        assert_eq!(tape.value_of(y).data(), &[3.0, 6.0, 9.0, 7.0]);
    }

    #[test]
    fn grad_conv1d_stride1_same_pad() {
        let mut r = rng();
        let x = Tensor::randn(&[2, 6], 1.0, &mut r);
        let w = Tensor::randn(&[3, 2, 3], 0.5, &mut r);
        let b = Tensor::randn(&[3], 0.5, &mut r);
        check_grads(
            &|t, v| t.mean(t.conv1d(v[0], v[1], Some(v[2]), 1, 1, 1)),
            &[x, w, b],
            1e-5,
            1e-6,
        );
    }

    #[test]
    fn grad_conv1d_strided_even_kernel() {
        let mut r = rng();
        let x = Tensor::randn(&[2, 8], 1.0, &mut r);
        let w = Tensor::randn(&[2, 2, 4], 0.5, &mut r);
        check_grads(
            &|t, v| t.mean(t.conv1d(v[0], v[1], None, 2, 1, 2)),
            &[x, w],
            1e-5,
            1e-6,
        );
    }

    // --- reductions ----------------------------------------------------------

    #[test]
    fn grad_reductions() {
        let mut r = rng();
        let a = Tensor::randn(&[3, 5], 1.0, &mut r);
        check_grads(&|t, v| t.sum(v[0]), &[a.clone()], 1e-5, 1e-7);
        check_grads(&|t, v| t.mean(v[0]), &[a.clone()], 1e-5, 1e-7);
        check_grads(&|t, v| t.sum(t.row_mean(v[0])), &[a.clone()], 1e-5, 1e-7);
        check_grads(&|t, v| t.sum(t.row_max(v[0])), &[a], 1e-5, 1e-6);
    }

    #[test]
    fn row_max_routes_to_first_tie() {
        let tape = Tape::new();
        let x = tape.leaf(Tensor::new(vec![1, 3], vec![2.0, 2.0, 1.0]));
        let y = tape.sum(tape.row_max(x));
        let g = tape.backward(y);
        assert_eq!(g.get(x).unwrap().data(), &[1.0, 0.0, 0.0]);
    }

    // --- structure -----------------------------------------------------------

    #[test]
    fn grad_concat_broadcast_reshape() {
        let mut r = rng();
        let a = Tensor::randn(&[2, 3], 1.0, &mut r);
        let b = Tensor::randn(&[4, 3], 1.0, &mut r);
        check_grads(&|t, v| t.mean(t.concat0(v[0], v[1])), &[a.clone(), b], 1e-5, 1e-7);
        let v1 = Tensor::randn(&[4], 1.0, &mut r);
        check_grads(&|t, v| t.mean(t.broadcast_col(v[0], 5)), &[v1], 1e-5, 1e-7);
        check_grads(&|t, v| t.sum(t.reshape(v[0], &[6])), &[a], 1e-5, 1e-7);
    }

    #[test]
    fn grad_embed_accumulates_repeats() {
        let mut r = rng();
        let table = Tensor::randn(&[5, 3], 1.0, &mut r);
        let ids = vec![2usize, 0, 2, 4];
        check_grads(
            &move |t, v| t.mean(t.embed(v[0], &ids)),
            &[table.clone()],
            1e-5,
            1e-7,
        );
        // repeated id accumulates twice the single-use gradient
        let tape = Tape::new();
        let tb = tape.leaf(table);
        let e = tape.embed(tb, &[2, 0, 2, 4]);
        let y = tape.sum(e);
        let g = tape.backward(y);
        let gt = g.get(tb).unwrap();
        assert_eq!(gt.row(2), &[2.0, 2.0, 2.0]);
        assert_eq!(gt.row(0), &[1.0, 1.0, 1.0]);
        assert_eq!(gt.row(1), &[0.0, 0.0, 0.0]);
    }

    #[test]
    fn grad_logsumexp_and_index() {
        let mut r = rng();
        let a = Tensor::randn(&[9], 2.0, &mut r);
        check_grads(&|t, v| t.logsumexp(v[0]), &[a.clone()], 1e-5, 1e-6);
        check_grads(&|t, v| t.index_elem(v[0], 3), &[a.clone()], 1e-5, 1e-7);
        // cross-entropy shaped composite: logsumexp(x) − x[label]
        check_grads(
            &|t, v| t.sub(t.logsumexp(v[0]), t.index_elem(v[0], 2)),
            &[a],
            1e-5,
            1e-6,
        );
    }

    #[test]
    fn logsumexp_uniform_logits() {
        let tape = Tape::new();
        let x = tape.leaf(Tensor::zeros(&[25]));
        let y = tape.logsumexp(x);
        assert!((tape.item(y) - (25f64).ln()).abs() < 1e-12);
    }

    #[test]
    fn grad_add_n() {
        let mut r = rng();
        let a = Tensor::randn(&[3], 1.0, &mut r);
        let b = Tensor::randn(&[3], 1.0, &mut r);
        let c = Tensor::randn(&[3], 1.0, &mut r);
        check_grads(
            &|t, v| t.sum(t.mean_n(&[v[0], v[1], v[2]])),
            &[a, b, c],
            1e-5,
            1e-7,
        );
    }

    // --- graph semantics -------------------------------------------------------

    #[test]
    fn reused_var_accumulates() {
        // d(x·x)/dx = 2x
        let tape = Tape::new();
        let x = tape.leaf(Tensor::from_vec(vec![3.0]));
        let y = tape.sum(tape.mul(x, x));
        let g = tape.backward(y);
        assert_eq!(g.get(x).unwrap().data(), &[6.0]);
    }

    #[test]
    fn detach_blocks_gradient() {
        let tape = Tape::new();
        let x = tape.leaf(Tensor::from_vec(vec![2.0]));
        let d = tape.detach(x);
        let y = tape.sum(tape.mul(d, d));
        let g = tape.backward(y);
        assert!(g.get(x).is_none(), "gradient must not flow through detach");
        assert_eq!(g.get(d).unwrap().data(), &[4.0]);
    }

    #[test]
    fn deep_composite_gradient() {
        // a small encoder-like stack: conv → tanh → row_mean → dense → logsumexp
        let mut r = rng();
        let x = Tensor::randn(&[2, 6], 1.0, &mut r);
        let w1 = Tensor::randn(&[3, 2, 3], 0.5, &mut r);
        let b1 = Tensor::randn(&[3], 0.2, &mut r);
        let w2 = Tensor::randn(&[3, 4], 0.5, &mut r);
        check_grads(
            &|t, v| {
                let h = t.tanh(t.conv1d(v[0], v[1], Some(v[2]), 1, 1, 1));
                let p = t.row_mean(h);
                let logits = t.reshape(t.matmul(t.reshape(p, &[1, 3]), v[3]), &[4]);
                t.sub(t.logsumexp(logits), t.index_elem(logits, 1))
            },
            &[x, w1, b1, w2],
            1e-5,
            1e-6,
        );
    }
}
