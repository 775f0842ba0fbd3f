use serde::{Deserialize, Serialize};

use crate::autodiff::{Tape, Var};
use crate::mdp::{State, Trajectory};
use crate::solver::SoftPolicy;

use super::DiffError;

/// Per-trajectory quantities for the policy-gradient optimality condition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PgTrajStats {
    /// Φ = Σ_i c_i log π(a_i|s_i)
    pub phi: f64,
    pub g_phi: Vec<f64>,
    pub g_logp_pi: Vec<f64>,
    pub g_logp_theta: Vec<f64>,
    /// c_i = Σ_{j≥i} γ^j R_θ(s_j, a_j), steps counted from 1.
    pub prefix: Vec<f64>,
    /// ∇_π log π(a_i|s_i) per step, kept only when some reward is a parameter.
    pub step_grads: Vec<Vec<f64>>,
    pub reward_params: Vec<Option<usize>>,
    pub gamma: f64,
}

impl PgTrajStats {
    /// ∇_θ c_i as sparse (index, weight) pairs.
    pub fn prefix_grad(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.reward_params[i..]
            .iter()
            .enumerate()
            .filter_map(move |(off, rp)| rp.map(|p| (p, self.gamma.powi((i + off + 1) as i32))))
    }
}

/// Per-trajectory quantities for the Bellman-error optimality condition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BellmanTrajStats {
    /// δ = Σ_t [Q(s_t,a_t) − R_θ(s_t,a_t) − γ Σ_{a′} π(a′|s_{t+1}) Q(s_{t+1},a′)]
    pub delta: f64,
    pub g_delta_pi: Vec<f64>,
    pub g_delta_theta: Vec<f64>,
    pub g_logp_pi: Vec<f64>,
    pub g_logp_theta: Vec<f64>,
}

fn reward(theta: &[f64], step: &crate::mdp::Step) -> f64 {
    step.reward_param.map_or(step.reward, |p| theta[p])
}

fn check_latents(traj: &Trajectory, latents_required: bool) -> Result<(), DiffError> {
    if latents_required && traj.latents().next().is_none() {
        return Err(DiffError::MissingLatents);
    }
    Ok(())
}

fn prefix_weights(traj: &Trajectory, theta: &[f64], gamma: f64) -> Vec<f64> {
    let h = traj.len();
    let mut c = vec![0.0; h];
    let mut acc = 0.0;
    for t in (0..h).rev() {
        acc += gamma.powi(t as i32 + 1) * reward(theta, &traj.steps[t]);
        c[t] = acc;
    }
    c
}

fn record_log_pi(tape: &mut Tape, policy: &SoftPolicy, traj: &Trajectory) -> Result<(crate::autodiff::ParamVars, Vec<Var>), DiffError> {
    let vars = tape.params(policy.params());
    let pairs: Vec<_> = traj.steps.iter().map(|s| (&s.state, s.action)).collect();
    let lp = policy.record_log_probs(tape, &vars, &pairs)?;
    Ok((vars, lp))
}

pub fn pg_stats(
    traj: &Trajectory,
    theta: &[f64],
    policy: &SoftPolicy,
    gamma: f64,
    latents_required: bool,
) -> Result<PgTrajStats, DiffError> {
    check_latents(traj, latents_required)?;
    let n = policy.n_params();
    let prefix = prefix_weights(traj, theta, gamma);
    let mut tape = Tape::new();
    let (vars, lp) = record_log_pi(&mut tape, policy, traj)?;
    let phi: f64 = lp.iter().zip(&prefix).map(|(&v, c)| c * tape.scalar_value(v)).sum();
    let reward_params: Vec<Option<usize>> = traj.steps.iter().map(|s| s.reward_param).collect();

    let mut step_grads = Vec::new();
    let (g_phi, g_logp_pi) = if reward_params.iter().any(Option::is_some) {
        let mut g_phi = vec![0.0; n];
        let mut g_lp = vec![0.0; n];
        for (&v, c) in lp.iter().zip(&prefix) {
            let g = vars.flat_grad(&tape.backward(v)?);
            for j in 0..n {
                g_phi[j] += c * g[j];
                g_lp[j] += g[j];
            }
            step_grads.push(g);
        }
        (g_phi, g_lp)
    } else {
        let lps = tape.stack(&lp)?;
        let cv = tape.vector(prefix.clone());
        let phi_v = tape.dot(lps, cv)?;
        let total = tape.sum(lps);
        (vars.flat_grad(&tape.backward(phi_v)?), vars.flat_grad(&tape.backward(total)?))
    };
    Ok(PgTrajStats {
        phi,
        g_phi,
        g_logp_pi,
        g_logp_theta: traj.latent_log_prob_grad(theta, theta.len()),
        prefix,
        step_grads,
        reward_params,
        gamma,
    })
}

/// ∇_π Φ alone, the policy-gradient estimator for one trajectory.
pub fn pg_gradient(traj: &Trajectory, theta: &[f64], policy: &SoftPolicy, gamma: f64) -> Result<Vec<f64>, DiffError> {
    let prefix = prefix_weights(traj, theta, gamma);
    let mut tape = Tape::new();
    let (vars, lp) = record_log_pi(&mut tape, policy, traj)?;
    let lps = tape.stack(&lp)?;
    let cv = tape.vector(prefix);
    let phi = tape.dot(lps, cv)?;
    Ok(vars.flat_grad(&tape.backward(phi)?))
}

/// Records δ and Σ log π on a fresh tape.
fn record_delta(
    tape: &mut Tape,
    traj: &Trajectory,
    theta: &[f64],
    policy: &SoftPolicy,
    gamma: f64,
) -> Result<(crate::autodiff::ParamVars, Var, Var), DiffError> {
    let vars = tape.params(policy.params());
    let states: Vec<&State> = traj.steps.iter().map(|s| &s.state).chain(std::iter::once(&traj.final_state)).collect();
    let rows = policy.q.record_rows(tape, &vars, &states)?;
    let h = traj.len();
    let mut terms = Vec::with_capacity(h);
    let mut lps = Vec::with_capacity(h);
    let mut rsum = 0.0;
    for (t, step) in traj.steps.iter().enumerate() {
        let q = tape.index(rows[t], step.action)?;
        let ls = tape.log_softmax(rows[t], policy.beta)?;
        lps.push(tape.index(ls, step.action)?);
        let p = tape.softmax(rows[t + 1], policy.beta)?;
        let v = tape.dot(p, rows[t + 1])?;
        let dv = tape.scale(v, -gamma);
        terms.push(tape.add(q, dv)?);
        rsum += reward(theta, step);
    }
    let terms = tape.stack(&terms)?;
    let s = tape.sum(terms);
    let delta = tape.add_scalar(s, -rsum);
    let lps = tape.stack(&lps)?;
    let lp = tape.sum(lps);
    Ok((vars, delta, lp))
}

pub fn bellman_stats(
    traj: &Trajectory,
    theta: &[f64],
    policy: &SoftPolicy,
    gamma: f64,
    latents_required: bool,
) -> Result<BellmanTrajStats, DiffError> {
    check_latents(traj, latents_required)?;
    let mut tape = Tape::new();
    let (vars, delta, lp) = record_delta(&mut tape, traj, theta, policy, gamma)?;
    let mut g_delta_theta = vec![0.0; theta.len()];
    for s in &traj.steps {
        if let Some(p) = s.reward_param {
            g_delta_theta[p] -= 1.0;
        }
    }
    Ok(BellmanTrajStats {
        delta: tape.scalar_value(delta),
        g_delta_pi: vars.flat_grad(&tape.backward(delta)?),
        g_delta_theta,
        g_logp_pi: vars.flat_grad(&tape.backward(lp)?),
        g_logp_theta: traj.latent_log_prob_grad(theta, theta.len()),
    })
}

/// δ∇_πδ + ½δ²∇_π log p, the Bellman-objective estimator for one trajectory.
pub fn bellman_gradient(traj: &Trajectory, theta: &[f64], policy: &SoftPolicy, gamma: f64) -> Result<Vec<f64>, DiffError> {
    let mut tape = Tape::new();
    let (vars, delta, lp) = record_delta(&mut tape, traj, theta, policy, gamma)?;
    let dv = tape.scalar_value(delta);
    let g_delta = vars.flat_grad(&tape.backward(delta)?);
    let g_lp = vars.flat_grad(&tape.backward(lp)?);
    Ok(g_delta.iter().zip(&g_lp).map(|(a, b)| dv * a + 0.5 * dv * dv * b).collect())
}
