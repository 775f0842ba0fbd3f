use crate::autodiff::softmax;
use crate::env::TabularMdp;

use super::{QFunction, SoftPolicy, SolveResult, SolverError};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Backup {
    /// Σ_a softmax(βQ)_a · Q_a
    ExpectedQ,
    /// (1/β) log Σ_a exp(βQ_a)
    LogSumExp,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ViConfig {
    pub beta: f64,
    pub iterations: usize,
    pub backup: Backup,
    /// Stop once the sup-norm change falls below this.
    pub tol: f64,
}

impl ViConfig {
    pub fn new(beta: f64, iterations: usize) -> Self {
        ViConfig { beta, iterations, backup: Backup::ExpectedQ, tol: 0.0 }
    }
}

fn soft_value(q: &[f64], beta: f64, backup: Backup) -> f64 {
    match backup {
        Backup::ExpectedQ => softmax(q, beta).iter().zip(q).map(|(p, v)| p * v).sum(),
        Backup::LogSumExp => {
            let m = q.iter().fold(f64::NEG_INFINITY, |a, &v| a.max(beta * v));
            (q.iter().map(|&v| (beta * v - m).exp()).sum::<f64>().ln() + m) / beta
        }
    }
}

/// Iterates Q(s,a) ← R(s,a) + γ Σ_{s′} P(s′|s,a) V(s′) from Q = 0.
pub fn soft_value_iteration(mdp: &TabularMdp, theta: &[f64], cfg: &ViConfig) -> Result<SolveResult, SolverError> {
    if !(cfg.beta > 0.0) {
        return Err(SolverError::Config(format!("beta must be positive, got {}", cfg.beta)));
    }
    if let Some(i) = theta.iter().position(|v| !v.is_finite()) {
        return Err(SolverError::NonFinite { step: 0, detail: format!("parameter {i}") });
    }
    let (ns, na) = (mdp.n_states, mdp.n_actions);
    let rewards: Vec<f64> = (0..ns * na).map(|sa| theta[mdp.reward_param[sa]]).collect();
    let succ: Vec<Vec<(usize, f64)>> = (0..ns)
        .flat_map(|s| (0..na).map(move |a| (s, a)))
        .map(|(s, a)| mdp.transition_probs(theta, s, a))
        .collect();
    let mut q = vec![0.0; ns * na];
    let mut v = vec![0.0; ns];
    let mut tail = Vec::new();
    let mut residual = f64::INFINITY;
    let mut iterations = 0;
    for it in 0..cfg.iterations {
        for s in 0..ns {
            v[s] = soft_value(&q[s * na..(s + 1) * na], cfg.beta, cfg.backup);
        }
        residual = 0.0;
        for sa in 0..ns * na {
            let next = rewards[sa] + mdp.gamma * succ[sa].iter().map(|&(sp, p)| p * v[sp]).sum::<f64>();
            residual = f64::max(residual, (next - q[sa]).abs());
            q[sa] = next;
        }
        if !residual.is_finite() {
            return Err(SolverError::NonFinite { step: it, detail: "value iteration diverged".into() });
        }
        if tail.len() == 100 {
            tail.remove(0);
        }
        tail.push(residual);
        iterations = it + 1;
        if residual <= cfg.tol {
            break;
        }
    }
    Ok(SolveResult {
        policy: SoftPolicy::new(QFunction::table(ns, na, q), cfg.beta),
        iterations,
        residual,
        residual_tail: tail,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{Gridworld, Outcome};
    use crate::seed;
    use proptest::prelude::*;

    #[test]
    fn single_absorbing_state_is_a_geometric_series() {
        let mdp = TabularMdp {
            n_states: 1,
            n_actions: 1,
            start: 0,
            horizon: 1,
            gamma: 0.95,
            reward_param: vec![0],
            transitions: vec![vec![(0, Outcome::Known(1.0))]],
            reward_noise: 0.0,
        };
        let r = soft_value_iteration(&mdp, &[1.0], &ViConfig::new(0.1, 10000)).unwrap();
        assert!((r.policy.params().values()[0] - 20.0).abs() < 1e-9);
    }

    #[test]
    fn zero_rewards_give_uniform_policy() {
        let g = Gridworld::new(5, 20, 0.95, 0.0);
        let r = soft_value_iteration(g.mdp(), &[0.0; 25], &ViConfig::new(0.1, 200)).unwrap();
        for s in 0..25 {
            assert!(r.policy.probs(&crate::mdp::State::Discrete(s)).iter().all(|p| (p - 0.2).abs() < 1e-15));
        }
    }

    #[test]
    fn two_state_fixed_point_matches_independent_iteration() {
        let mdp = TabularMdp::tiny();
        let theta = [1.0, -0.5, 0.3, 2.0, 0.2, 0.7, 0.4, 0.9];
        let r = soft_value_iteration(&mdp, &theta, &ViConfig::new(0.1, 10000)).unwrap();
        // oracle: plain loop over the 2×2 system written out by hand
        let (beta, g) = (0.1, 0.95);
        let mut q = [[0.0f64; 2]; 2];
        for _ in 0..20000 {
            let v: Vec<f64> = (0..2)
                .map(|s| {
                    let (e0, e1) = ((beta * q[s][0]).exp(), (beta * q[s][1]).exp());
                    (e0 * q[s][0] + e1 * q[s][1]) / (e0 + e1)
                })
                .collect();
            let mut nq = [[0.0; 2]; 2];
            for s in 0..2 {
                for a in 0..2 {
                    let p1 = theta[4 + s * 2 + a];
                    nq[s][a] = theta[s * 2 + a] + g * (p1 * v[1] + (1.0 - p1) * v[0]);
                }
            }
            q = nq;
        }
        let got = r.policy.params().values();
        for s in 0..2 {
            for a in 0..2 {
                assert!((got[s * 2 + a] - q[s][a]).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn large_beta_modal_action_is_greedy() {
        let g = Gridworld::new(5, 20, 0.95, 0.0);
        let theta = g.generate_params(&mut seed::rng(8));
        let r = soft_value_iteration(g.mdp(), &theta, &ViConfig::new(50.0, 2000)).unwrap();
        for s in 0..25 {
            let st = crate::mdp::State::Discrete(s);
            let q = r.policy.q.values(&st);
            let p = r.policy.probs(&st);
            let am = |v: &[f64]| v.iter().enumerate().fold(0, |b, (i, x)| if *x > v[b] { i } else { b });
            assert_eq!(q[am(&p)], q[am(&q)]);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]
        #[test]
        fn residual_tail_is_non_increasing(s in 0u64..1000) {
            let g = Gridworld::new(5, 20, 0.95, 0.0);
            let theta = g.generate_params(&mut seed::rng(s));
            let r = soft_value_iteration(g.mdp(), &theta, &ViConfig::new(0.1, 400)).unwrap();
            for w in r.residual_tail.windows(2) {
                prop_assert!(w[1] <= w[0] * (1.0 + 1e-12));
            }
        }
    }
}
