use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{Domain, MdpError, FEATURE_DIM};
use crate::autodiff::{AutodiffError, ParamVars, ParamVector, Tape, Tensor, Var};
use crate::nn::Mlp;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Head {
    /// Unbounded rewards.
    Linear,
    /// One probability per entity.
    Sigmoid,
    /// Eight sigmoids per patient, renormalized in (s, a) pairs.
    TbPairs,
}

impl Head {
    pub fn for_domain(domain: Domain) -> Self {
        match domain {
            Domain::Gridworld => Head::Linear,
            Domain::Snare => Head::Sigmoid,
            Domain::Tb => Head::TbPairs,
        }
    }

    pub fn outputs(self) -> usize {
        match self {
            Head::TbPairs => 8,
            _ => 1,
        }
    }
}

/// The feature → parameter network `m_w`, applied row-wise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictiveModel {
    pub domain: Domain,
    pub head: Head,
    pub net: Mlp,
}

impl PredictiveModel {
    pub fn new<R: Rng + ?Sized>(domain: Domain, rng: &mut R) -> Self {
        let head = Head::for_domain(domain);
        PredictiveModel { domain, head, net: Mlp::new(&[FEATURE_DIM, 16, head.outputs()], rng) }
    }

    pub fn zeros(domain: Domain) -> Self {
        let head = Head::for_domain(domain);
        PredictiveModel { domain, head, net: Mlp::zeros(&[FEATURE_DIM, 16, head.outputs()]) }
    }

    pub fn weights(&self) -> &ParamVector {
        &self.net.params
    }

    pub fn weights_mut(&mut self) -> &mut [f64] {
        self.net.params.values_mut()
    }

    fn check(&self, features: &Tensor) -> Result<(), MdpError> {
        if features.cols != FEATURE_DIM {
            return Err(MdpError::Model(format!("feature width {} != {FEATURE_DIM}", features.cols)));
        }
        if !self.net.params.all_finite() {
            return Err(MdpError::Model("non-finite weights".into()));
        }
        Ok(())
    }

    /// θ = m_w(x), flattened entity-major.
    pub fn predict(&self, features: &Tensor) -> Result<Vec<f64>, MdpError> {
        self.check(features)?;
        let rec = crate::autodiff::record_and_eval(&[&self.net.params], |t, p| {
            self.record_checked(t, &p[0], features)
        })?;
        Ok(rec.value().data.clone())
    }

    /// Records the prediction on `tape`; output is a flat column vector.
    pub fn record(&self, tape: &mut Tape, vars: &ParamVars, features: &Tensor) -> Result<Var, MdpError> {
        self.check(features)?;
        Ok(self.record_checked(tape, vars, features)?)
    }

    fn record_checked(&self, tape: &mut Tape, vars: &ParamVars, features: &Tensor) -> Result<Var, AutodiffError> {
        let n = features.rows;
        let x = tape.leaf(features.transpose());
        let z = self.net.record(tape, vars, x)?; // outputs × n
        match self.head {
            Head::Linear => tape.reshape(z, n, 1),
            Head::Sigmoid => {
                let s = tape.sigmoid(z);
                tape.reshape(s, n, 1)
            }
            Head::TbPairs => {
                let s = tape.sigmoid(z);
                let mut pair = vec![0.0; 64];
                for i in 0..8 {
                    for j in 0..8 {
                        if i / 2 == j / 2 {
                            pair[i * 8 + j] = 1.0;
                        }
                    }
                }
                let m = tape.leaf(Tensor::new(8, 8, pair));
                let sums = tape.affine(m, s, None)?;
                let p = tape.div(s, sums)?;
                let pt = tape.transpose(p); // n × 8, patient-major
                tape.reshape(pt, 8 * n, 1)
            }
        }
    }

    /// Vector-Jacobian product gᵀ ∂θ/∂w without forming the Jacobian.
    pub fn vjp(&self, features: &Tensor, g: &[f64]) -> Result<Vec<f64>, MdpError> {
        self.check(features)?;
        let rec = crate::autodiff::record_and_eval(&[&self.net.params], |t, p| {
            let theta = self.record_checked(t, &p[0], features)?;
            let gv = t.vector(g.to_vec());
            t.dot(theta, gv)
        })?;
        Ok(rec.backward()?.remove(0).values().to_vec())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::finite_diff_grad;
    use crate::seed;

    fn features(n: usize) -> Tensor {
        Tensor::new(n, FEATURE_DIM, (0..n * FEATURE_DIM).map(|i| ((i * 7) as f64).sin()).collect())
    }

    #[test]
    fn zero_weights() {
        let x = features(4);
        assert_eq!(PredictiveModel::zeros(Domain::Snare).predict(&x).unwrap(), vec![0.5; 4]);
        assert_eq!(PredictiveModel::zeros(Domain::Gridworld).predict(&x).unwrap(), vec![0.0; 4]);
        assert_eq!(PredictiveModel::zeros(Domain::Tb).predict(&x).unwrap(), vec![0.5; 32]);
    }

    #[test]
    fn tb_pairs_are_distributions() {
        let m = PredictiveModel::new(Domain::Tb, &mut seed::rng(4));
        let theta = m.predict(&features(5)).unwrap();
        assert_eq!(theta.len(), 40);
        for pair in theta.chunks(2) {
            assert!(pair.iter().all(|p| *p > 0.0 && *p < 1.0));
            assert!((pair[0] + pair[1] - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn row_wise_application() {
        let m = PredictiveModel::new(Domain::Gridworld, &mut seed::rng(9));
        let x = features(3);
        let all = m.predict(&x).unwrap();
        let second = Tensor::new(1, FEATURE_DIM, x.data[FEATURE_DIM..2 * FEATURE_DIM].to_vec());
        let single = m.net.forward_vec(&second.data)[0];
        assert!((all[1] - single).abs() < 1e-14);
    }

    #[test]
    fn non_finite_weights_are_rejected() {
        let mut m = PredictiveModel::zeros(Domain::Snare);
        m.weights_mut()[0] = f64::NAN;
        assert!(matches!(m.predict(&features(3)), Err(MdpError::Model(_))));
    }

    #[test]
    fn vjp_matches_finite_differences() {
        for domain in [Domain::Gridworld, Domain::Snare, Domain::Tb] {
            let m = PredictiveModel::new(domain, &mut seed::rng(11));
            let x = features(5);
            let d = 5 * domain.params_per_entity();
            let g: Vec<f64> = (0..d).map(|i| 1.0 + 0.1 * i as f64).collect();
            let ad = m.vjp(&x, &g).unwrap();
            let f = |w: &ParamVector| {
                let mm = PredictiveModel { net: Mlp { sizes: m.net.sizes.clone(), params: w.clone() }, ..m.clone() };
                mm.predict(&x).unwrap().iter().zip(&g).map(|(a, b)| a * b).sum()
            };
            let fd = finite_diff_grad(f, m.weights(), 1e-5).unwrap();
            let den = fd.iter().map(|v| v.abs()).fold(1e-12, f64::max);
            let err = ad.iter().zip(&fd).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max) / den;
            assert!(err < 1e-4, "{domain}: {err}");
        }
    }
}
