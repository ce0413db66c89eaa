//! Input–hidden–output perceptron with ReLU hidden units, masked
//! squared-error backpropagation and Adam.
//!
//! Parameters live in one flat buffer laid out as `[W1 | b1 | W2 | b2]`
//! with row-major weights (`W1[j][i]` maps input `i` to hidden unit `j`).

use rand::Rng;

use crate::error::NnError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MlpDims {
    pub input: usize,
    pub hidden: usize,
    pub output: usize,
}

impl MlpDims {
    pub fn new(input: usize, hidden: usize, output: usize) -> Self {
        MlpDims { input, hidden, output }
    }

    pub fn num_params(&self) -> usize {
        self.hidden * self.input + self.hidden + self.output * self.hidden + self.output
    }

    fn offsets(&self) -> [usize; 4] {
        let w1 = 0;
        let b1 = w1 + self.hidden * self.input;
        let w2 = b1 + self.hidden;
        let b2 = w2 + self.output * self.hidden;
        [w1, b1, w2, b2]
    }
}

/// Named view of one parameter tensor.
#[derive(Debug, Clone, Copy)]
pub struct TensorSpec {
    pub name: &'static str,
    pub shape: (usize, usize),
    pub offset: usize,
}

impl TensorSpec {
    pub fn len(&self) -> usize {
        self.shape.0 * self.shape.1
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    dims: MlpDims,
    params: Vec<f64>,
}

/// Scratch space for one forward/backward pass.
#[derive(Debug, Clone)]
pub struct Workspace {
    pre: Vec<f64>,
    act: Vec<f64>,
    out: Vec<f64>,
    delta_h: Vec<f64>,
}

impl Workspace {
    pub fn new(dims: MlpDims) -> Self {
        Workspace {
            pre: vec![0.0; dims.hidden],
            act: vec![0.0; dims.hidden],
            out: vec![0.0; dims.output],
            delta_h: vec![0.0; dims.hidden],
        }
    }

    pub fn output(&self) -> &[f64] {
        &self.out
    }
}

impl Mlp {
    pub fn zeros(dims: MlpDims) -> Self {
        Mlp {
            dims,
            params: vec![0.0; dims.num_params()],
        }
    }

    /// Weights uniform in ±1/√fan_in, biases zero.
    pub fn init<R: Rng + ?Sized>(dims: MlpDims, rng: &mut R) -> Self {
        assert!(dims.input > 0 && dims.hidden > 0 && dims.output > 0, "dims must be positive");
        let mut net = Mlp::zeros(dims);
        let [w1, _, w2, _] = dims.offsets();
        let a1 = 1.0 / (dims.input as f64).sqrt();
        for w in &mut net.params[w1..w1 + dims.hidden * dims.input] {
            *w = rng.random_range(-a1..=a1);
        }
        let a2 = 1.0 / (dims.hidden as f64).sqrt();
        for w in &mut net.params[w2..w2 + dims.output * dims.hidden] {
            *w = rng.random_range(-a2..=a2);
        }
        net
    }

    pub fn from_params(dims: MlpDims, params: Vec<f64>) -> Result<Self, NnError> {
        if params.len() != dims.num_params() {
            return Err(NnError::shape(dims.num_params(), params.len()));
        }
        Ok(Mlp { dims, params })
    }

    pub fn dims(&self) -> MlpDims {
        self.dims
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn tensors(&self) -> [TensorSpec; 4] {
        let d = self.dims;
        let [w1, b1, w2, b2] = d.offsets();
        [
            TensorSpec { name: "w1", shape: (d.hidden, d.input), offset: w1 },
            TensorSpec { name: "b1", shape: (d.hidden, 1), offset: b1 },
            TensorSpec { name: "w2", shape: (d.output, d.hidden), offset: w2 },
            TensorSpec { name: "b2", shape: (d.output, 1), offset: b2 },
        ]
    }

    fn check_input(&self, input: &[f64]) -> Result<(), NnError> {
        if input.len() != self.dims.input {
            return Err(NnError::shape(self.dims.input, input.len()));
        }
        Ok(())
    }

    /// Forward pass into `ws`; the output is `ws.output()`.
    pub fn forward_with(&self, input: &[f64], ws: &mut Workspace) -> Result<(), NnError> {
        self.check_input(input)?;
        let d = self.dims;
        let [w1, b1, w2, b2] = d.offsets();
        let p = &self.params;
        for j in 0..d.hidden {
            let row = &p[w1 + j * d.input..w1 + (j + 1) * d.input];
            let z = p[b1 + j] + row.iter().zip(input).map(|(w, x)| w * x).sum::<f64>();
            ws.pre[j] = z;
            ws.act[j] = z.max(0.0);
        }
        for o in 0..d.output {
            let row = &p[w2 + o * d.hidden..w2 + (o + 1) * d.hidden];
            ws.out[o] = p[b2 + o] + row.iter().zip(&ws.act).map(|(w, a)| w * a).sum::<f64>();
        }
        Ok(())
    }

    pub fn forward(&self, input: &[f64]) -> Result<Vec<f64>, NnError> {
        let mut ws = Workspace::new(self.dims);
        self.forward_with(input, &mut ws)?;
        Ok(ws.out)
    }

    /// Squared error summed over the masked outputs; gradients are added to
    /// `grad` scaled by `weight`.
    pub fn accumulate(
        &self,
        input: &[f64],
        targets: &[f64],
        mask: &[bool],
        weight: f64,
        grad: &mut [f64],
        ws: &mut Workspace,
    ) -> Result<f64, NnError> {
        let d = self.dims;
        if targets.len() != d.output || mask.len() != d.output {
            return Err(NnError::shape(d.output, targets.len().min(mask.len())));
        }
        if grad.len() != self.params.len() {
            return Err(NnError::shape(self.params.len(), grad.len()));
        }
        self.forward_with(input, ws)?;
        let [w1, b1, w2, b2] = d.offsets();
        let p = &self.params;
        let mut loss = 0.0;
        ws.delta_h.iter_mut().for_each(|v| *v = 0.0);
        for o in (0..d.output).filter(|&o| mask[o]) {
            let err = ws.out[o] - targets[o];
            loss += err * err;
            let g = 2.0 * err * weight;
            grad[b2 + o] += g;
            let row = w2 + o * d.hidden;
            for j in 0..d.hidden {
                grad[row + j] += g * ws.act[j];
                ws.delta_h[j] += g * p[row + j];
            }
        }
        for j in 0..d.hidden {
            if ws.pre[j] <= 0.0 {
                continue;
            }
            let g = ws.delta_h[j];
            grad[b1 + j] += g;
            let row = &mut grad[w1 + j * d.input..w1 + (j + 1) * d.input];
            for (gw, x) in row.iter_mut().zip(input) {
                *gw += g * x;
            }
        }
        Ok(loss)
    }

    /// Masked squared-error loss and its gradient for one sample.
    pub fn backward(&self, input: &[f64], targets: &[f64], mask: &[bool]) -> Result<(f64, Vec<f64>), NnError> {
        let mut grad = vec![0.0; self.params.len()];
        let mut ws = Workspace::new(self.dims);
        let loss = self.accumulate(input, targets, mask, 1.0, &mut grad, &mut ws)?;
        Ok((loss, grad))
    }

    /// Batch-averaged loss `mean_i (y_i − Q(s_i)[a_i])²` and its gradient.
    pub fn batch_loss_grad(
        &self,
        inputs: &[&[f64]],
        actions: &[usize],
        targets: &[f64],
    ) -> Result<(f64, Vec<f64>), NnError> {
        let n = inputs.len();
        if actions.len() != n || targets.len() != n {
            return Err(NnError::shape(n, actions.len().min(targets.len())));
        }
        let d = self.dims;
        let mut grad = vec![0.0; self.params.len()];
        let mut ws = Workspace::new(d);
        let mut t = vec![0.0; d.output];
        let mut mask = vec![false; d.output];
        let mut loss = 0.0;
        let w = 1.0 / n.max(1) as f64;
        for i in 0..n {
            if actions[i] >= d.output {
                return Err(NnError::shape(format!("action < {}", d.output), actions[i]));
            }
            t[actions[i]] = targets[i];
            mask[actions[i]] = true;
            loss += self.accumulate(inputs[i], &t, &mask, w, &mut grad, &mut ws)?;
            mask[actions[i]] = false;
        }
        Ok((loss * w, grad))
    }

    /// Overwrite `dst` with a bit-identical copy of these parameters.
    pub fn clone_into(&self, dst: &mut Mlp) -> Result<(), NnError> {
        if dst.dims != self.dims {
            return Err(NnError::shape(format!("{:?}", self.dims), format!("{:?}", dst.dims)));
        }
        dst.params.copy_from_slice(&self.params);
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub t: u64,
}

impl Adam {
    pub fn new(num_params: usize, lr: f64) -> Self {
        Adam {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            m: vec![0.0; num_params],
            v: vec![0.0; num_params],
            t: 0,
        }
    }

    pub fn step(&mut self, params: &mut [f64], grad: &[f64]) -> Result<(), NnError> {
        if params.len() != self.m.len() || grad.len() != self.m.len() {
            return Err(NnError::shape(self.m.len(), params.len().min(grad.len())));
        }
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t as i32);
        let c2 = 1.0 - self.beta2.powi(self.t as i32);
        for i in 0..params.len() {
            let g = grad[i];
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g;
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g;
            let m_hat = self.m[i] / c1;
            let v_hat = self.v[i] / c2;
            params[i] -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_net(seed: u64, dims: MlpDims) -> Mlp {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut net = Mlp::init(dims, &mut rng);
        // non-zero biases so every parameter class is exercised
        for t in net.tensors() {
            if t.name.starts_with('b') {
                for b in &mut net.params[t.offset..t.offset + t.len()] {
                    *b = rng.random_range(-0.5..0.5);
                }
            }
        }
        net
    }

    fn naive_forward(net: &Mlp, x: &[f64]) -> Vec<f64> {
        let d = net.dims;
        let p = net.params();
        let mut h = vec![0.0; d.hidden];
        for j in 0..d.hidden {
            let mut z = p[d.hidden * d.input + j];
            for i in 0..d.input {
                z += p[j * d.input + i] * x[i];
            }
            h[j] = if z > 0.0 { z } else { 0.0 };
        }
        let w2 = d.hidden * d.input + d.hidden;
        let b2 = w2 + d.output * d.hidden;
        (0..d.output)
            .map(|o| {
                let mut y = p[b2 + o];
                for j in 0..d.hidden {
                    y += p[w2 + o * d.hidden + j] * h[j];
                }
                y
            })
            .collect()
    }

    #[test]
    fn zero_net_outputs_zero() {
        let net = Mlp::zeros(MlpDims::new(15, 40, 21));
        assert!(net.forward(&[0.3; 15]).unwrap().iter().all(|&q| q == 0.0));
    }

    #[test]
    fn identity_net() {
        let net = Mlp::from_params(MlpDims::new(1, 1, 1), vec![1.0, 0.0, 1.0, 0.0]).unwrap();
        assert_eq!(net.forward(&[2.0]).unwrap(), vec![2.0]);
        assert_eq!(net.forward(&[-2.0]).unwrap(), vec![0.0]);
    }

    #[test]
    fn forward_matches_naive_loops() {
        let net = random_net(11, MlpDims::new(15, 40, 21));
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for _ in 0..50 {
            let x: Vec<f64> = (0..15).map(|_| rng.random()).collect();
            let a = net.forward(&x).unwrap();
            let b = naive_forward(&net, &x);
            for (p, q) in a.iter().zip(&b) {
                assert!((p - q).abs() <= 1e-12 * q.abs().max(1.0));
            }
        }
    }

    #[test]
    fn forward_rejects_bad_shape() {
        let net = Mlp::zeros(MlpDims::new(3, 4, 2));
        assert!(matches!(net.forward(&[1.0; 2]), Err(NnError::Shape { .. })));
    }

    #[test]
    fn target_equal_prediction_gives_zero_gradient() {
        let net = random_net(3, MlpDims::new(5, 8, 4));
        let x = [0.1, 0.2, 0.3, 0.4, 0.5];
        let q = net.forward(&x).unwrap();
        let (loss, grad) = net.backward(&x, &q, &[true, false, true, false]).unwrap();
        assert_eq!(loss, 0.0);
        assert!(grad.iter().all(|&g| g == 0.0));
    }

    #[test]
    fn one_parameter_gradient_by_hand() {
        // q = w2·relu(w1·x); loss = (q − y)²; with x=2, w1=0.5, w2=3, y=1:
        // q = 3, dL/dw2 = 2(q−y)·relu = 4, dL/dw1 = 2(q−y)·w2·x = 24.
        let net = Mlp::from_params(MlpDims::new(1, 1, 1), vec![0.5, 0.0, 3.0, 0.0]).unwrap();
        let (loss, g) = net.backward(&[2.0], &[1.0], &[true]).unwrap();
        assert_eq!(loss, 4.0);
        assert_eq!(g, vec![24.0, 12.0, 4.0, 4.0]);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let dims = MlpDims::new(6, 10, 5);
        for seed in 0..20 {
            let net = random_net(seed, dims);
            let mut rng = ChaCha8Rng::seed_from_u64(seed + 100);
            let x: Vec<f64> = (0..6).map(|_| rng.random_range(-1.0..1.0)).collect();
            let y: Vec<f64> = (0..5).map(|_| rng.random_range(-1.0..1.0)).collect();
            let mask = [true, false, true, true, false];
            let (_, grad) = net.backward(&x, &y, &mask).unwrap();
            let h = 1e-5;
            for i in 0..net.params.len() {
                let mut plus = net.clone();
                plus.params[i] += h;
                let mut minus = net.clone();
                minus.params[i] -= h;
                let lp = plus.backward(&x, &y, &mask).unwrap().0;
                let lm = minus.backward(&x, &y, &mask).unwrap().0;
                let fd = (lp - lm) / (2.0 * h);
                let scale = fd.abs().max(grad[i].abs()).max(1e-6);
                assert!((fd - grad[i]).abs() / scale <= 1e-4, "seed {seed} param {i}: {fd} vs {}", grad[i]);
            }
        }
    }

    #[test]
    fn batch_loss_is_mean_of_masked_errors() {
        let net = random_net(8, MlpDims::new(4, 6, 3));
        let xs = [[0.1, 0.2, 0.3, 0.4], [0.9, 0.1, 0.5, 0.0], [0.3, 0.3, 0.3, 0.3]];
        let inputs: Vec<&[f64]> = xs.iter().map(|x| x.as_slice()).collect();
        let actions = [2, 0, 2];
        let targets = [1.0, -0.5, 0.25];
        let (loss, _) = net.batch_loss_grad(&inputs, &actions, &targets).unwrap();
        let expected = xs
            .iter()
            .zip(actions.iter().zip(&targets))
            .map(|(x, (&a, &y))| (naive_forward(&net, x)[a] - y).powi(2))
            .sum::<f64>()
            / 3.0;
        assert!((loss - expected).abs() < 1e-14);
    }

    #[test]
    fn adam_zero_gradient_is_a_no_op() {
        let mut p = vec![0.3, -0.2];
        let mut adam = Adam::new(2, 0.001);
        adam.step(&mut p, &[0.0, 0.0]).unwrap();
        assert_eq!(p, vec![0.3, -0.2]);
        assert_eq!(adam.t, 1);
    }

    #[test]
    fn adam_first_step_moves_by_lr() {
        let mut p = vec![1.0];
        let mut adam = Adam::new(1, 0.001);
        adam.step(&mut p, &[1.0]).unwrap();
        let expected = 1.0 - 0.001 / (1.0 + 1e-8);
        assert!((p[0] - expected).abs() < 1e-15);
    }

    #[test]
    fn adam_constant_gradient_limit() {
        let mut p = vec![0.0, 0.0];
        let mut adam = Adam::new(2, 0.01);
        for _ in 0..2000 {
            let before = p.clone();
            adam.step(&mut p, &[0.7, -3.0]).unwrap();
            assert!((p[0] - before[0] + 0.01).abs() < 1e-6);
            assert!((p[1] - before[1] - 0.01).abs() < 1e-6);
        }
        assert!(adam.v.iter().all(|&v| v >= 0.0));
    }

    #[test]
    fn init_is_seeded_and_bounded() {
        let dims = MlpDims::new(16, 40, 21);
        let a = Mlp::init(dims, &mut ChaCha8Rng::seed_from_u64(4));
        let b = Mlp::init(dims, &mut ChaCha8Rng::seed_from_u64(4));
        assert_eq!(a, b);
        let t = a.tensors();
        assert!(a.params[t[0].offset..t[0].offset + t[0].len()].iter().all(|w| w.abs() <= 0.25));
        assert!(a.params[t[1].offset..t[1].offset + t[1].len()].iter().all(|&b| b == 0.0));
    }

    #[test]
    fn init_weights_have_zero_mean() {
        // 16·6250 = 10⁵ draws from U(−¼, ¼): σ of the mean = ¼/√3/√n
        let dims = MlpDims::new(16, 6250, 1);
        let net = Mlp::init(dims, &mut ChaCha8Rng::seed_from_u64(5));
        let w = &net.params[..16 * 6250];
        let mean = w.iter().sum::<f64>() / w.len() as f64;
        let sigma = 0.25 / 3f64.sqrt() / (w.len() as f64).sqrt();
        assert!(mean.abs() < 3.0 * sigma);
    }

    #[test]
    fn clone_into_copies_exactly() {
        let dims = MlpDims::new(5, 7, 3);
        let mut src = random_net(1, dims);
        let mut dst = random_net(2, dims);
        src.clone_into(&mut dst).unwrap();
        assert_eq!(src.params, dst.params);
        let x = [0.2, 0.4, 0.6, 0.8, 1.0];
        assert_eq!(src.forward(&x).unwrap(), dst.forward(&x).unwrap());
        let frozen = dst.clone();
        src.params[0] += 1.0;
        assert_eq!(dst, frozen);
        src.clone_into(&mut dst).unwrap();
        src.clone_into(&mut dst).unwrap();
        assert_eq!(src.params, dst.params);
        let mut wrong = Mlp::zeros(MlpDims::new(5, 7, 4));
        assert!(src.clone_into(&mut wrong).is_err());
    }

    #[test]
    fn fits_a_four_state_bandit() {
        let dims = MlpDims::new(4, 40, 3);
        let mut net = Mlp::init(dims, &mut ChaCha8Rng::seed_from_u64(21));
        let mut adam = Adam::new(dims.num_params(), 0.001);
        let states: Vec<Vec<f64>> = (0..4).map(|s| (0..4).map(|i| f64::from(i == s)).collect()).collect();
        let q = [[0.2, 0.5, 0.9], [0.7, 0.1, 0.3], [0.4, 0.8, 0.6], [0.0, 1.0, 0.5]];
        let mut inputs = Vec::new();
        let mut actions = Vec::new();
        let mut targets = Vec::new();
        for s in 0..4 {
            for a in 0..3 {
                inputs.push(states[s].as_slice());
                actions.push(a);
                targets.push(q[s][a]);
            }
        }
        let mut loss = f64::INFINITY;
        for _ in 0..5000 {
            let (l, g) = net.batch_loss_grad(&inputs, &actions, &targets).unwrap();
            loss = l;
            adam.step(&mut net.params, &g).unwrap();
        }
        assert!(loss < 1e-3, "loss {loss}");
    }

    proptest! {
        #[test]
        fn forward_is_pure(seed in any::<u64>(), x in proptest::collection::vec(-1.0f64..1.0, 6)) {
            let net = random_net(seed, MlpDims::new(6, 9, 4));
            let a = net.forward(&x).unwrap();
            let b = net.forward(&x).unwrap();
            prop_assert_eq!(a, b);
        }
    }
}
