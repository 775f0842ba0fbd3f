//! Small fully connected networks and an Adam optimizer over flat parameters.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{affine_forward, AutodiffError, ParamVars, ParamVector, Tape, Tensor, Var};

/// ReLU multilayer perceptron; the last layer is linear.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    pub sizes: Vec<usize>,
    pub params: ParamVector,
}

impl Mlp {
    /// Uniform(±1/√fan_in) initialisation for weights and biases.
    pub fn new<R: Rng + ?Sized>(sizes: &[usize], rng: &mut R) -> Self {
        assert!(sizes.len() >= 2, "an MLP needs at least an input and an output size");
        let mut params = ParamVector::new();
        for (l, win) in sizes.windows(2).enumerate() {
            let (fan_in, fan_out) = (win[0], win[1]);
            let bound = 1.0 / (fan_in as f64).sqrt();
            let w = (0..fan_in * fan_out).map(|_| rng.gen_range(-bound..bound)).collect();
            let b = (0..fan_out).map(|_| rng.gen_range(-bound..bound)).collect();
            params.push(&format!("l{l}.w"), Tensor::new(fan_out, fan_in, w));
            params.push(&format!("l{l}.b"), Tensor::vector(b));
        }
        Mlp { sizes: sizes.to_vec(), params }
    }

    pub fn zeros(sizes: &[usize]) -> Self {
        let mut params = ParamVector::new();
        for (l, win) in sizes.windows(2).enumerate() {
            params.push(&format!("l{l}.w"), Tensor::zeros(win[1], win[0]));
            params.push(&format!("l{l}.b"), Tensor::zeros(win[1], 1));
        }
        Mlp { sizes: sizes.to_vec(), params }
    }

    pub fn n_layers(&self) -> usize {
        self.sizes.len() - 1
    }

    pub fn input_dim(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.sizes.last().unwrap()
    }

    pub fn n_params(&self) -> usize {
        self.params.len()
    }

    fn layer(&self, l: usize) -> (Tensor, Tensor) {
        (self.params.tensor(2 * l), self.params.tensor(2 * l + 1))
    }

    /// Forward pass for a batch laid out as `input_dim × batch`.
    pub fn forward(&self, x: &Tensor) -> Tensor {
        let mut h = x.clone();
        for l in 0..self.n_layers() {
            let (w, b) = self.layer(l);
            h = affine_forward(&w, &h, Some(&b));
            if l + 1 < self.n_layers() {
                for v in &mut h.data {
                    *v = v.max(0.0);
                }
            }
        }
        h
    }

    pub fn forward_vec(&self, x: &[f64]) -> Vec<f64> {
        self.forward(&Tensor::vector(x.to_vec())).data
    }

    /// Records the network on `tape` with weights taken from `vars`.
    pub fn record(&self, tape: &mut Tape, vars: &ParamVars, x: Var) -> Result<Var, AutodiffError> {
        let mut h = x;
        for l in 0..self.n_layers() {
            h = tape.affine(vars.vars[2 * l], h, Some(vars.vars[2 * l + 1]))?;
            if l + 1 < self.n_layers() {
                h = tape.relu(h);
            }
        }
        Ok(h)
    }
}

/// Adam with bias correction, operating on a flat parameter slice.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
}

impl Adam {
    pub fn new(n: usize, lr: f64) -> Self {
        Adam { lr, beta1: 0.9, beta2: 0.999, eps: 1e-8, m: vec![0.0; n], v: vec![0.0; n], t: 0 }
    }

    /// Descent step: `params -= lr * m̂ / (√v̂ + eps)`.
    pub fn step(&mut self, params: &mut [f64], grad: &[f64]) {
        self.t += 1;
        let b1t = 1.0 - self.beta1.powi(self.t as i32);
        let b2t = 1.0 - self.beta2.powi(self.t as i32);
        for i in 0..params.len() {
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * grad[i];
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * grad[i] * grad[i];
            let mh = self.m[i] / b1t;
            let vh = self.v[i] / b2t;
            params[i] -= self.lr * mh / (vh.sqrt() + self.eps);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::{finite_diff_grad, record_and_eval};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn tape_and_fast_forward_agree() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let net = Mlp::new(&[4, 7, 5, 3], &mut rng);
        let x = Tensor::new(4, 2, (0..8).map(|i| (i as f64).cos()).collect());
        let fast = net.forward(&x);
        let rec = record_and_eval(&[&net.params], |t, p| {
            let xv = t.leaf(x.clone());
            net.record(t, &p[0], xv)
        })
        .unwrap();
        assert_eq!(rec.value(), &fast);
    }

    #[test]
    fn random_mlps_match_finite_differences() {
        for (seed, sizes) in [(1u64, vec![3, 5, 1]), (2, vec![6, 8, 8, 1]), (3, vec![2, 16, 4, 1])] {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let net = Mlp::new(&sizes, &mut rng);
            let x: Vec<f64> = (0..sizes[0]).map(|i| 0.3 * i as f64 - 0.4).collect();
            let f = |p: &ParamVector| {
                let n = Mlp { sizes: net.sizes.clone(), params: p.clone() };
                let y = n.forward_vec(&x)[0];
                y * y
            };
            let rec = record_and_eval(&[&net.params], |t, p| {
                let xv = t.vector(x.clone());
                let y = net.record(t, &p[0], xv)?;
                Ok(t.square(y))
            })
            .unwrap();
            let g = rec.backward().unwrap().remove(0);
            let fd = finite_diff_grad(f, &net.params, 1e-5).unwrap();
            let den = fd.iter().map(|v| v.abs()).fold(1e-12, f64::max);
            let err = g.values().iter().zip(&fd).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max) / den;
            assert!(err < 1e-4, "sizes {sizes:?}: {err}");
        }
    }

    #[test]
    fn adam_minimises_a_quadratic() {
        let mut p = vec![3.0, -2.0];
        let mut opt = Adam::new(2, 0.05);
        for _ in 0..2000 {
            let g = vec![2.0 * (p[0] - 1.0), 2.0 * (p[1] + 0.5)];
            opt.step(&mut p, &g);
        }
        assert!((p[0] - 1.0).abs() < 1e-3 && (p[1] + 0.5).abs() < 1e-3);
    }
}
