//! Consistent weighted per-decision importance sampling (CWPDIS) with an
//! effective-sample-size penalty.
//!
//! Eval(π) = V(π) − λ_ESS / √ESS(π), where
//! V = Σ_t γ^t (Σ_i r_it ρ_it) / (Σ_i ρ_it) and ESS = Σ_t (Σ_i ρ_it)² / Σ_i ρ_it².

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::autodiff::{AutodiffError, Tape, Var};
use crate::mdp::Trajectory;
use crate::solver::SoftPolicy;

#[derive(Debug, Error)]
pub enum OpeError {
    #[error("no trajectories")]
    Empty,
    #[error("trajectories have different lengths ({0} and {1})")]
    RaggedHorizon(usize, usize),
    #[error("behavior probability {prob} at trajectory {traj}, step {step}")]
    BadBehaviorProb { traj: usize, step: usize, prob: f64 },
    #[error("all importance weights are zero at step {0}")]
    ZeroWeights(usize),
    #[error(transparent)]
    Autodiff(#[from] AutodiffError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OpeConfig {
    pub gamma: f64,
    pub lambda_ess: f64,
    /// Upper bound on each ρ; diagnostics only.
    pub ratio_cap: Option<f64>,
}

impl Default for OpeConfig {
    fn default() -> Self {
        OpeConfig { gamma: 0.95, lambda_ess: 1.0, ratio_cap: None }
    }
}

impl OpeConfig {
    pub fn new(gamma: f64, lambda_ess: f64) -> Self {
        OpeConfig { gamma, lambda_ess, ratio_cap: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OpeReport {
    pub cwpdis_value: f64,
    pub ess: f64,
    pub eval: f64,
    pub lambda_ess: f64,
    pub min_ratio: f64,
    pub max_ratio: f64,
    pub ess_per_step: Vec<f64>,
}

fn horizon(trajs: &[Trajectory]) -> Result<usize, OpeError> {
    let h = trajs.first().ok_or(OpeError::Empty)?.len();
    for t in trajs {
        if t.len() != h {
            return Err(OpeError::RaggedHorizon(h, t.len()));
        }
    }
    for (i, t) in trajs.iter().enumerate() {
        for (j, s) in t.steps.iter().enumerate() {
            if !(s.behavior_prob > 0.0 && s.behavior_prob <= 1.0) {
                return Err(OpeError::BadBehaviorProb { traj: i, step: j, prob: s.behavior_prob });
            }
        }
    }
    Ok(h)
}

/// ρ_it = Π_{t′≤t} π(a|s)/π_beh(a|s), one row per trajectory.
pub fn importance_ratios(trajs: &[Trajectory], policy: &SoftPolicy) -> Result<Vec<Vec<f64>>, OpeError> {
    horizon(trajs)?;
    Ok(trajs
        .iter()
        .map(|t| {
            let mut rho = 1.0;
            t.steps
                .iter()
                .map(|s| {
                    rho *= policy.probs(&s.state)[s.action] / s.behavior_prob;
                    rho
                })
                .collect()
        })
        .collect())
}

/// Eval from a precomputed ratio matrix.
pub fn eval_from_ratios(trajs: &[Trajectory], rho: &[Vec<f64>], cfg: &OpeConfig) -> Result<OpeReport, OpeError> {
    let log_rho: Vec<Vec<f64>> = rho.iter().map(|row| row.iter().map(|r| r.ln()).collect()).collect();
    eval_from_log_ratios(trajs, &log_rho, cfg)
}

/// log ρ_it, cumulated along each trajectory.
fn log_ratios(trajs: &[Trajectory], policy: &SoftPolicy) -> Vec<Vec<f64>> {
    trajs
        .iter()
        .map(|t| {
            let mut acc = 0.0;
            t.steps
                .iter()
                .map(|s| {
                    acc += policy.log_prob(&s.state, s.action) - s.behavior_prob.ln();
                    acc
                })
                .collect()
        })
        .collect()
}

/// Without a cap, each step's weights are rescaled by their maximum before
/// exponentiating; both the weighted average and the per-step ESS are
/// invariant to that scale, and it keeps long products from underflowing.
fn eval_from_log_ratios(trajs: &[Trajectory], log_rho: &[Vec<f64>], cfg: &OpeConfig) -> Result<OpeReport, OpeError> {
    let h = horizon(trajs)?;
    let mut value = 0.0;
    let mut disc = 1.0;
    let mut ess_per_step = Vec::with_capacity(h);
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for t in 0..h {
        disc *= cfg.gamma;
        let shift = match cfg.ratio_cap {
            Some(_) => 0.0,
            None => log_rho.iter().map(|row| row[t]).fold(f64::NEG_INFINITY, f64::max),
        };
        if shift == f64::NEG_INFINITY || shift.is_nan() {
            return Err(OpeError::ZeroWeights(t));
        }
        let (mut sw, mut swr, mut sw2) = (0.0, 0.0, 0.0);
        for (traj, row) in trajs.iter().zip(log_rho) {
            let raw = row[t].exp();
            lo = lo.min(raw);
            hi = hi.max(raw);
            let w = match cfg.ratio_cap {
                Some(c) => raw.min(c),
                None => (row[t] - shift).exp(),
            };
            sw += w;
            swr += w * traj.steps[t].reward;
            sw2 += w * w;
        }
        if !(sw > 0.0) {
            return Err(OpeError::ZeroWeights(t));
        }
        value += disc * swr / sw;
        ess_per_step.push(sw * sw / sw2);
    }
    let ess: f64 = ess_per_step.iter().sum();
    let penalty = if cfg.lambda_ess == 0.0 { 0.0 } else { cfg.lambda_ess / ess.sqrt() };
    Ok(OpeReport {
        cwpdis_value: value,
        ess,
        eval: value - penalty,
        lambda_ess: cfg.lambda_ess,
        min_ratio: lo,
        max_ratio: hi,
        ess_per_step,
    })
}

pub fn eval_metric(trajs: &[Trajectory], policy: &SoftPolicy, cfg: &OpeConfig) -> Result<OpeReport, OpeError> {
    horizon(trajs)?;
    eval_from_log_ratios(trajs, &log_ratios(trajs, policy), cfg)
}

/// Records Eval on `tape` as a function of the policy parameters `vars`.
pub fn record_eval(
    tape: &mut Tape,
    vars: &crate::autodiff::ParamVars,
    trajs: &[Trajectory],
    policy: &SoftPolicy,
    cfg: &OpeConfig,
) -> Result<Var, OpeError> {
    let h = horizon(trajs)?;
    let k = trajs.len();
    let pairs: Vec<_> = trajs.iter().flat_map(|t| t.steps.iter().map(|s| (&s.state, s.action))).collect();
    let lp = policy.record_log_probs(tape, vars, &pairs)?;

    let mut cum: Option<Var> = None;
    let mut value: Option<Var> = None;
    let mut ess: Option<Var> = None;
    let mut disc = 1.0;
    for t in 0..h {
        disc *= cfg.gamma;
        let col: Vec<Var> = (0..k).map(|i| lp[i * h + t]).collect();
        let lp_t = tape.stack(&col)?;
        let beh = tape.vector(trajs.iter().map(|tr| -tr.steps[t].behavior_prob.ln()).collect());
        let lr = tape.add(lp_t, beh)?;
        let c = match cum {
            Some(prev) => tape.add(prev, lr)?,
            None => lr,
        };
        cum = Some(c);
        let w = match cfg.ratio_cap {
            Some(cap) => {
                let e = tape.exp(c);
                tape.clip(e, 0.0, cap)
            }
            None => {
                // constant shift; Eval is invariant to it
                let m = tape.value(c).data.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                if !m.is_finite() {
                    return Err(OpeError::ZeroWeights(t));
                }
                let shifted = tape.add_scalar(c, -m);
                tape.exp(shifted)
            }
        };
        let sw = tape.sum(w);
        if tape.scalar_value(sw) <= 0.0 {
            return Err(OpeError::ZeroWeights(t));
        }
        let r = tape.vector(trajs.iter().map(|tr| tr.steps[t].reward).collect());
        let swr = tape.dot(w, r)?;
        let avg = tape.div(swr, sw)?;
        let term = tape.scale(avg, disc);
        value = Some(match value {
            Some(v) => tape.add(v, term)?,
            None => term,
        });
        if cfg.lambda_ess != 0.0 {
            let w2 = tape.square(w);
            let sw2 = tape.sum(w2);
            let num = tape.square(sw);
            let e = tape.div(num, sw2)?;
            ess = Some(match ess {
                Some(v) => tape.add(v, e)?,
                None => e,
            });
        }
    }
    let value = value.expect("h >= 1");
    Ok(match ess {
        Some(e) => {
            let root = tape.sqrt(e);
            let one = tape.constant(cfg.lambda_ess);
            let pen = tape.div(one, root)?;
            tape.sub(value, pen)?
        }
        None => value,
    })
}

/// Eval and dEval/dπ with respect to the flat policy parameters.
pub fn eval_grad(trajs: &[Trajectory], policy: &SoftPolicy, cfg: &OpeConfig) -> Result<(f64, Vec<f64>), OpeError> {
    let mut tape = Tape::new();
    let vars = tape.params(policy.params());
    let out = record_eval(&mut tape, &vars, trajs, policy, cfg)?;
    let g = tape.backward(out)?;
    Ok((tape.scalar_value(out), vars.flat_grad(&g)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::finite_diff_slice;
    use crate::mdp::{State, Step};
    use crate::solver::QFunction;
    use proptest::prelude::*;

    fn step(s: usize, a: usize, r: f64, b: f64) -> Step {
        Step { state: State::Discrete(s), action: a, reward: r, behavior_prob: b, latents: vec![], reward_param: None }
    }

    fn traj(steps: Vec<Step>) -> Trajectory {
        Trajectory { steps, final_state: State::Discrete(0) }
    }

    fn uniform(ns: usize, na: usize) -> SoftPolicy {
        SoftPolicy::new(QFunction::table(ns, na, vec![0.0; ns * na]), 1.0)
    }

    #[test]
    fn tiny_ratios_do_not_underflow() {
        // every logged action has probability ≈ e^-800 under π
        let ts = vec![
            traj(vec![step(0, 1, 1.0, 0.5), step(1, 1, 2.0, 0.5)]),
            traj(vec![step(0, 1, 3.0, 0.5), step(1, 1, 4.0, 0.5)]),
        ];
        let q = QFunction::table(2, 2, vec![800.0, 0.0, 800.0, 0.0]);
        let sharp = SoftPolicy::new(q, 1.0);
        let rep = eval_metric(&ts, &sharp, &OpeConfig::new(1.0, 0.0)).unwrap();
        // equal weights within each step
        assert!((rep.cwpdis_value - 5.0).abs() < 1e-12);
        assert_eq!(rep.ess, 4.0);
        let (v, g) = eval_grad(&ts, &sharp, &OpeConfig::new(1.0, 0.0)).unwrap();
        assert!((v - 5.0).abs() < 1e-12 && g.iter().all(|x| x.is_finite()));
    }

    #[test]
    fn on_policy_ratios_are_one() {
        let ts = vec![traj(vec![step(0, 1, 1.0, 0.5), step(1, 0, 0.0, 0.5)]); 3];
        let rho = importance_ratios(&ts, &uniform(2, 2)).unwrap();
        assert!(rho.iter().flatten().all(|&r| r == 1.0));
        let rep = eval_metric(&ts, &uniform(2, 2), &OpeConfig::default()).unwrap();
        assert_eq!(rep.ess, 6.0);
    }

    #[test]
    fn single_trajectory_value() {
        let ts = vec![traj(vec![step(0, 0, 1.0, 0.5), step(0, 0, 2.0, 0.5)])];
        let rep = eval_metric(&ts, &uniform(1, 2), &OpeConfig::new(0.95, 0.0)).unwrap();
        assert!((rep.cwpdis_value - 2.755).abs() < 1e-12);
        assert_eq!(rep.eval, rep.cwpdis_value);
    }

    #[test]
    fn doubled_first_step_probability() {
        // behavior 0.25, target uniform 0.5 at step 1 only
        let ts = vec![traj(vec![step(0, 0, 0.0, 0.25), step(0, 1, 0.0, 0.5), step(0, 1, 0.0, 0.5)])];
        let rho = importance_ratios(&ts, &uniform(1, 2)).unwrap();
        assert_eq!(rho[0], vec![2.0, 2.0, 2.0]);
    }

    #[test]
    fn two_trajectory_hand_evaluation() {
        // π(a=0|s) = e^{β q0}/(e^{β q0}+e^{β q1}) with q = (ln 3, 0), β = 1 → (0.75, 0.25)
        let p = SoftPolicy::new(QFunction::table(1, 2, vec![3f64.ln(), 0.0]), 1.0);
        let ts = vec![
            traj(vec![step(0, 0, 1.0, 0.5), step(0, 1, 3.0, 0.4)]),
            traj(vec![step(0, 1, -1.0, 0.2), step(0, 0, 2.0, 0.9)]),
        ];
        let r11: f64 = 0.75 / 0.5;
        let r12 = r11 * 0.25 / 0.4;
        let r21: f64 = 0.25 / 0.2;
        let r22 = r21 * 0.75 / 0.9;
        let v = 0.95 * (r11 * 1.0 + r21 * -1.0) / (r11 + r21) + 0.9025 * (r12 * 3.0 + r22 * 2.0) / (r12 + r22);
        let ess = (r11 + r21).powi(2) / (r11 * r11 + r21 * r21) + (r12 + r22).powi(2) / (r12 * r12 + r22 * r22);
        let rep = eval_metric(&ts, &p, &OpeConfig::new(0.95, 2.0)).unwrap();
        assert!((rep.cwpdis_value - v).abs() < 1e-12);
        assert!((rep.ess - ess).abs() < 1e-12);
        assert!((rep.eval - (v - 2.0 / ess.sqrt())).abs() < 1e-12);
        let (e, _) = eval_grad(&ts, &p, &OpeConfig::new(0.95, 2.0)).unwrap();
        assert!((e - rep.eval).abs() < 1e-12);
    }

    #[test]
    fn one_trajectory_gradient_by_hand() {
        // k = 1: every ratio cancels in the self-normalised value and ESS = h, so
        // dEval/dq = 0 whatever the policy.
        let p = SoftPolicy::new(QFunction::table(1, 2, vec![0.3, -0.2]), 2.0);
        let ts = vec![traj(vec![step(0, 0, 1.0, 0.5), step(0, 1, 4.0, 0.5)])];
        let (_, g) = eval_grad(&ts, &p, &OpeConfig::default()).unwrap();
        assert!(g.iter().all(|v| v.abs() < 1e-14));
    }

    #[test]
    fn zero_lambda_drops_the_penalty_branch() {
        let ts = vec![traj(vec![step(0, 0, 1.0, 0.5)]); 2];
        let p = uniform(1, 2);
        let count = |lambda| {
            let mut tape = Tape::new();
            let vars = tape.params(p.params());
            record_eval(&mut tape, &vars, &ts, &p, &OpeConfig::new(0.95, lambda)).unwrap();
            (0..tape.len()).filter(|&i| tape.op_name(Var(i)) == "sqrt").count()
        };
        assert_eq!(count(0.0), 0);
        assert_eq!(count(1.0), 1);
    }

    #[test]
    fn rejects_bad_inputs() {
        let p = uniform(1, 2);
        assert!(matches!(eval_metric(&[], &p, &OpeConfig::default()), Err(OpeError::Empty)));
        let ts = vec![traj(vec![step(0, 0, 1.0, 0.0)])];
        assert!(matches!(importance_ratios(&ts, &p), Err(OpeError::BadBehaviorProb { .. })));
        let ts = vec![traj(vec![step(0, 0, 1.0, 0.5)]); 2];
        let zero = vec![vec![0.0]; 2];
        assert!(matches!(eval_from_ratios(&ts, &zero, &OpeConfig::default()), Err(OpeError::ZeroWeights(0))));
    }

    fn random_case(seed: u64, k: usize, h: usize) -> (Vec<Trajectory>, SoftPolicy) {
        use rand::Rng;
        let mut rng = crate::seed::rng(seed);
        let (ns, na) = (3, 3);
        let q: Vec<f64> = (0..ns * na).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let p = SoftPolicy::new(QFunction::table(ns, na, q), 1.5);
        let ts = (0..k)
            .map(|_| {
                traj(
                    (0..h)
                        .map(|_| step(rng.gen_range(0..ns), rng.gen_range(0..na), rng.gen_range(-2.0..2.0), rng.gen_range(0.1..0.9)))
                        .collect(),
                )
            })
            .collect();
        (ts, p)
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn ess_bounded_by_sample_count(seed in 0u64..10_000, k in 1usize..6, h in 1usize..5) {
            let (ts, p) = random_case(seed, k, h);
            let rep = eval_metric(&ts, &p, &OpeConfig::default()).unwrap();
            prop_assert!(rep.ess > 0.0 && rep.ess <= (h * k) as f64 * (1.0 + 1e-12));
            for e in &rep.ess_per_step {
                prop_assert!(*e >= 1.0 - 1e-12 && *e <= k as f64 * (1.0 + 1e-12));
            }
        }

        #[test]
        fn value_is_invariant_to_rescaled_behavior(seed in 0u64..10_000, scale in 0.2f64..0.99) {
            let (ts, p) = random_case(seed, 4, 3);
            let a = eval_metric(&ts, &p, &OpeConfig::default()).unwrap();
            let mut scaled = ts.clone();
            // same factor on every trajectory's first step rescales all ρ uniformly
            for t in &mut scaled {
                t.steps[0].behavior_prob *= scale;
            }
            let b = eval_metric(&scaled, &p, &OpeConfig::default()).unwrap();
            prop_assert!((a.cwpdis_value - b.cwpdis_value).abs() < 1e-10);
            prop_assert!((a.ess - b.ess).abs() < 1e-9);
        }

        #[test]
        fn value_is_a_weighted_average(seed in 0u64..10_000, k in 1usize..6, h in 1usize..5) {
            let (ts, p) = random_case(seed, k, h);
            let rep = eval_metric(&ts, &p, &OpeConfig::default()).unwrap();
            let rs = ts.iter().flat_map(|t| t.steps.iter().map(|s| s.reward));
            let (lo, hi) = rs.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), r| (a.min(r), b.max(r)));
            let g: f64 = (1..=h).map(|t| 0.95f64.powi(t as i32)).sum();
            prop_assert!(rep.cwpdis_value >= lo * g - 1e-9 && rep.cwpdis_value <= hi * g + 1e-9);
        }

        #[test]
        fn gradient_matches_finite_differences(seed in 0u64..10_000, lambda in 0.0f64..3.0) {
            let (ts, p) = random_case(seed, 4, 3);
            let cfg = OpeConfig::new(0.95, lambda);
            let (e, g) = eval_grad(&ts, &p, &cfg).unwrap();
            prop_assert!((e - eval_metric(&ts, &p, &cfg).unwrap().eval).abs() < 1e-10);
            let fd = finite_diff_slice(|x| eval_metric(&ts, &p.with_params(x), &cfg).unwrap().eval, p.params().values(), 1e-6).unwrap();
            let scale = fd.iter().fold(1e-3f64, |m, v| m.max(v.abs()));
            for (a, b) in g.iter().zip(&fd) {
                prop_assert!((a - b).abs() / scale < 1e-4, "{a} vs {b}");
            }
        }
    }
}
