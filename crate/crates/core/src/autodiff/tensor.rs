use serde::{Deserialize, Serialize};

/// Dense row-major array of `f64`: scalar (1×1), column vector (n×1) or matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tensor {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Tensor {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(rows * cols, data.len(), "tensor data length does not match shape");
        Tensor { rows, cols, data }
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Tensor { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn scalar(v: f64) -> Self {
        Tensor { rows: 1, cols: 1, data: vec![v] }
    }

    pub fn vector(data: Vec<f64>) -> Self {
        Tensor { rows: data.len(), cols: 1, data }
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn is_scalar(&self) -> bool {
        self.rows == 1 && self.cols == 1
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn item(&self) -> f64 {
        debug_assert!(self.is_scalar());
        self.data[0]
    }

    pub fn transpose(&self) -> Tensor {
        let mut out = vec![0.0; self.data.len()];
        for r in 0..self.rows {
            for c in 0..self.cols {
                out[c * self.rows + r] = self.data[r * self.cols + c];
            }
        }
        Tensor { rows: self.cols, cols: self.rows, data: out }
    }
}

/// `y = W x + b`, with `b` broadcast across the columns of `x`.
pub(crate) fn affine_forward(w: &Tensor, x: &Tensor, b: Option<&Tensor>) -> Tensor {
    let (m, n) = w.shape();
    let batch = x.cols;
    let mut y = vec![0.0; m * batch];
    if batch == 1 {
        for i in 0..m {
            let row = &w.data[i * n..(i + 1) * n];
            y[i] = dot(row, &x.data);
        }
    } else {
        for i in 0..m {
            let yi = &mut y[i * batch..(i + 1) * batch];
            for p in 0..n {
                let wip = w.data[i * n + p];
                if wip == 0.0 {
                    continue;
                }
                let xp = &x.data[p * batch..(p + 1) * batch];
                for (yv, xv) in yi.iter_mut().zip(xp) {
                    *yv += wip * xv;
                }
            }
        }
    }
    if let Some(b) = b {
        for i in 0..m {
            let bi = b.data[i];
            for v in &mut y[i * batch..(i + 1) * batch] {
                *v += bi;
            }
        }
    }
    Tensor { rows: m, cols: batch, data: y }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    // four accumulators so the loop vectorizes
    let mut acc = [0.0f64; 4];
    let chunks = a.len() / 4;
    for c in 0..chunks {
        let i = c * 4;
        acc[0] += a[i] * b[i];
        acc[1] += a[i + 1] * b[i + 1];
        acc[2] += a[i + 2] * b[i + 2];
        acc[3] += a[i + 3] * b[i + 3];
    }
    let mut s = (acc[0] + acc[1]) + (acc[2] + acc[3]);
    for i in chunks * 4..a.len() {
        s += a[i] * b[i];
    }
    s
}

/// Numerically stable `softmax(beta * x)` over a flat slice.
pub fn softmax(x: &[f64], beta: f64) -> Vec<f64> {
    let max = x.iter().fold(f64::NEG_INFINITY, |m, &v| m.max(beta * v));
    let mut out: Vec<f64> = x.iter().map(|&v| (beta * v - max).exp()).collect();
    let z: f64 = out.iter().sum();
    for v in &mut out {
        *v /= z;
    }
    out
}

/// `log softmax(beta * x)` without forming the probabilities first.
pub fn log_softmax(x: &[f64], beta: f64) -> Vec<f64> {
    let max = x.iter().fold(f64::NEG_INFINITY, |m, &v| m.max(beta * v));
    let lse = x.iter().map(|&v| (beta * v - max).exp()).sum::<f64>().ln() + max;
    x.iter().map(|&v| beta * v - lse).collect()
}
