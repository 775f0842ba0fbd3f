use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{Domain, MdpError};
use crate::autodiff::Tensor;
use crate::nn::Mlp;
use crate::seed;

pub const FEATURE_DIM: usize = 16;

/// Random network that turns each entity's true parameters into features.
///
/// One generator is drawn per dataset, so the feature-to-parameter relation is
/// shared by every instance in it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureGenerator {
    pub net: Mlp,
    /// Std of the additive noise after the first standardization.
    pub noise_scale: f64,
}

impl FeatureGenerator {
    pub fn new(domain: Domain, seed: u64) -> Self {
        let mut rng = seed::child_rng(seed, "feature-generator", 0);
        let d = domain.params_per_entity();
        FeatureGenerator { net: Mlp::new(&[d, 64, 64, FEATURE_DIM], &mut rng), noise_scale: 3.0 }
    }

    pub fn with_noise(mut self, noise_scale: f64) -> Self {
        self.noise_scale = noise_scale;
        self
    }

    /// Features before noise: the generator output standardized per column.
    pub fn clean_features(&self, theta: &[f64]) -> Result<Tensor, MdpError> {
        let d = self.net.input_dim();
        if theta.len() % d != 0 {
            return Err(MdpError::Features(format!("{} parameters do not split into blocks of {d}", theta.len())));
        }
        let n = theta.len() / d;
        if n < 2 {
            return Err(MdpError::Features(format!("need at least 2 entities to standardize, got {n}")));
        }
        if let Some(i) = theta.iter().position(|v| !v.is_finite()) {
            return Err(MdpError::Features(format!("parameter {i} is not finite")));
        }
        // columns of x are entities
        let x = Tensor::new(n, d, theta.to_vec()).transpose();
        let out = self.net.forward(&x).transpose();
        Ok(standardize_columns(out))
    }

    /// Full pipeline: standardize, add `noise_scale · ε`, standardize again.
    pub fn generate<R: Rng + ?Sized>(&self, theta: &[f64], rng: &mut R) -> Result<Tensor, MdpError> {
        let mut x = self.clean_features(theta)?;
        if self.noise_scale != 0.0 {
            for v in &mut x.data {
                let e: f64 = rng.sample(StandardNormal);
                *v += self.noise_scale * e;
            }
            x = standardize_columns(x);
        }
        Ok(x)
    }
}

/// Zero mean, unit variance per column; constant columns become zero.
pub fn standardize_columns(mut x: Tensor) -> Tensor {
    let (n, d) = x.shape();
    for c in 0..d {
        let mean = (0..n).map(|r| x.data[r * d + c]).sum::<f64>() / n as f64;
        let var = (0..n).map(|r| (x.data[r * d + c] - mean).powi(2)).sum::<f64>() / n as f64;
        let sd = var.sqrt();
        for r in 0..n {
            let v = &mut x.data[r * d + c];
            *v = if sd > 1e-12 { (*v - mean) / sd } else { 0.0 };
        }
    }
    x
}
