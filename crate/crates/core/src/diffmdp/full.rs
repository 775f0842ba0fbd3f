use nalgebra::{DMatrix, DVector};

use crate::autodiff::Tape;
use crate::mdp::Trajectory;
use crate::solver::SoftPolicy;

use super::stats::{bellman_gradient, pg_gradient};
use super::{DiffError, Mode};

/// Largest policy dimension the dense path accepts.
pub const MAX_FULL_DIM: usize = 2000;

/// Dense ∇²_πJ (n × n) and ∇²_{θπ}J arranged n × d.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseDerivatives {
    pub hessian: DMatrix<f64>,
    pub cross: DMatrix<f64>,
}

fn estimator(mode: Mode, traj: &Trajectory, theta: &[f64], policy: &SoftPolicy, gamma: f64) -> Result<Vec<f64>, DiffError> {
    match mode {
        Mode::Pg => pg_gradient(traj, theta, policy, gamma),
        Mode::Bellman => bellman_gradient(traj, theta, policy, gamma),
    }
}

fn log_pi_grad(traj: &Trajectory, policy: &SoftPolicy) -> Result<Vec<f64>, DiffError> {
    let mut tape = Tape::new();
    let vars = tape.params(policy.params());
    let pairs: Vec<_> = traj.steps.iter().map(|s| (&s.state, s.action)).collect();
    let lp = policy.record_log_probs(&mut tape, &vars, &pairs)?;
    let lps = tape.stack(&lp)?;
    let total = tape.sum(lps);
    Ok(vars.flat_grad(&tape.backward(total)?))
}

/// Σ_i w_i ĝ_i over a fixed trajectory set.
fn weighted_estimate(
    mode: Mode,
    trajs: &[Trajectory],
    weights: &[f64],
    theta: &[f64],
    policy: &SoftPolicy,
    gamma: f64,
) -> Result<DVector<f64>, DiffError> {
    let mut acc = DVector::zeros(policy.n_params());
    for (t, &w) in trajs.iter().zip(weights) {
        acc += DVector::from_vec(estimator(mode, t, theta, policy, gamma)?) * w;
    }
    Ok(acc)
}

/// Dense second derivatives by central differences of the first-order
/// estimator ĝ with the trajectories held fixed, plus the score terms
/// ĝ ∇log pᵀ that account for the trajectory distribution moving.
pub fn full_hessian_oracle(
    trajs: &[Trajectory],
    weights: &[f64],
    theta: &[f64],
    policy: &SoftPolicy,
    mode: Mode,
    gamma: f64,
    step: f64,
) -> Result<DenseDerivatives, DiffError> {
    let n = policy.n_params();
    let d = theta.len();
    if n > MAX_FULL_DIM {
        return Err(DiffError::TooLarge { n, max: MAX_FULL_DIM });
    }
    if trajs.len() != weights.len() || trajs.is_empty() {
        return Err(DiffError::Empty);
    }
    let mut hessian = DMatrix::zeros(n, n);
    let mut cross = DMatrix::zeros(n, d);

    for (t, &w) in trajs.iter().zip(weights) {
        let g = DVector::from_vec(estimator(mode, t, theta, policy, gamma)?);
        let lp_pi = DVector::from_vec(log_pi_grad(t, policy)?);
        let lp_theta = DVector::from_vec(t.latent_log_prob_grad(theta, d));
        hessian += &g * lp_pi.transpose() * w;
        cross += &g * lp_theta.transpose() * w;
    }

    let base = policy.params().values().to_vec();
    let mut x = base.clone();
    for j in 0..n {
        x[j] = base[j] + step;
        let plus = weighted_estimate(mode, trajs, weights, theta, &policy.with_params(&x), gamma)?;
        x[j] = base[j] - step;
        let minus = weighted_estimate(mode, trajs, weights, theta, &policy.with_params(&x), gamma)?;
        x[j] = base[j];
        let col = (plus - minus) / (2.0 * step);
        let mut hc = hessian.column_mut(j);
        hc += col;
    }
    let mut th = theta.to_vec();
    for j in 0..d {
        th[j] = theta[j] + step;
        let plus = weighted_estimate(mode, trajs, weights, &th, policy, gamma)?;
        th[j] = theta[j] - step;
        let minus = weighted_estimate(mode, trajs, weights, &th, policy, gamma)?;
        th[j] = theta[j];
        let col = (plus - minus) / (2.0 * step);
        let mut cc = cross.column_mut(j);
        cc += col;
    }
    Ok(DenseDerivatives { hessian, cross })
}

/// y = H⁻ᵀ g by dense LU.
/// Relative singular-value cutoff for the pseudo-inverse fallback.
pub const PINV_RTOL: f64 = 1e-10;

/// y = H⁻ᵀ g by LU. When H is singular, which happens whenever the sampled
/// trajectories leave some policy coordinates unvisited, the minimum-norm
/// least-squares solution is returned instead and the flag is set.
pub fn dense_solve_transpose(h: &DMatrix<f64>, g: &[f64]) -> Result<(Vec<f64>, bool), DiffError> {
    let ht = h.transpose();
    let rhs = DVector::from_column_slice(g);
    if let Some(y) = ht.clone().lu().solve(&rhs) {
        if y.iter().all(|v| v.is_finite()) && (&ht * &y - &rhs).norm() <= 1e-8 * rhs.norm().max(1e-300) {
            return Ok((y.as_slice().to_vec(), false));
        }
    }
    let svd = ht.svd(true, true);
    let smax = svd.singular_values.max();
    if !(smax > 0.0) || !smax.is_finite() {
        return Err(DiffError::Singular);
    }
    let y = svd.solve(&rhs, PINV_RTOL * smax).map_err(|_| DiffError::Singular)?;
    if y.iter().any(|v| !v.is_finite()) {
        return Err(DiffError::Singular);
    }
    Ok((y.as_slice().to_vec(), true))
}
