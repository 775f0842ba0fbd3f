use crate::mdp::{Domain, LatentEvent, Trajectory};

use super::TrainError;

/// Probabilities are clipped to [NLL_CLIP, 1 − NLL_CLIP] before taking logs.
pub const NLL_CLIP: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct LossReport {
    pub loss: f64,
    /// ∂loss/∂θ
    pub grad: Vec<f64>,
    /// Some event probability hit the clip.
    pub clipped: bool,
}

/// Predictive loss of θ against logged trajectories.
///
/// Gridworld: mean of (θ[cell] − r)² over all steps whose reward is a
/// parameter. Snare and tb: negative log-likelihood of the recorded latent
/// events, summed within a trajectory and averaged across trajectories.
pub fn two_stage_loss(theta: &[f64], trajs: &[Trajectory], domain: Domain) -> Result<LossReport, TrainError> {
    if trajs.is_empty() {
        return Err(TrainError::Prediction("no trajectories for the predictive loss".into()));
    }
    if theta.iter().any(|v| !v.is_finite()) {
        return Err(TrainError::Prediction("non-finite θ".into()));
    }
    let d = theta.len();
    let mut grad = vec![0.0; d];
    let check = |p: usize| {
        if p >= d {
            Err(TrainError::Prediction(format!("parameter index {p} out of range {d}")))
        } else {
            Ok(())
        }
    };
    match domain {
        Domain::Gridworld => {
            let mut n = 0usize;
            let mut sum = 0.0;
            for s in trajs.iter().flat_map(|t| &t.steps) {
                if let Some(p) = s.reward_param {
                    check(p)?;
                    let e = theta[p] - s.reward;
                    sum += e * e;
                    grad[p] += 2.0 * e;
                    n += 1;
                }
            }
            if n == 0 {
                return Ok(LossReport { loss: 0.0, grad, clipped: false });
            }
            grad.iter_mut().for_each(|g| *g /= n as f64);
            Ok(LossReport { loss: sum / n as f64, grad, clipped: false })
        }
        Domain::Snare | Domain::Tb => {
            let k = trajs.len() as f64;
            let mut nll = 0.0;
            let mut clipped = false;
            for e in trajs.iter().flat_map(|t| t.latents()) {
                let (param, sign) = match *e {
                    LatentEvent::Bernoulli { param, outcome, .. } => (param, if outcome { 1.0 } else { -1.0 }),
                    LatentEvent::Categorical { param, .. } => (param, 1.0),
                    LatentEvent::Fixed { .. } => continue,
                };
                check(param)?;
                let p = e.prob(theta);
                let pc = p.clamp(NLL_CLIP, 1.0 - NLL_CLIP);
                if pc != p {
                    clipped = true;
                } else {
                    // d(−log p)/dθ with p = θ or 1 − θ
                    grad[param] -= sign / p / k;
                }
                nll -= pc.ln();
            }
            Ok(LossReport { loss: nll / k, grad, clipped })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mdp::{State, Step};
    use proptest::prelude::*;

    fn step(reward: f64, param: Option<usize>, latents: Vec<LatentEvent>) -> Step {
        Step { state: State::Discrete(0), action: 0, reward, behavior_prob: 0.5, latents, reward_param: param }
    }

    fn traj(steps: Vec<Step>) -> Trajectory {
        Trajectory { steps, final_state: State::Discrete(0) }
    }

    #[test]
    fn exact_rewards_give_zero_mse() {
        let t = traj(vec![step(1.0, Some(0), vec![]), step(-2.0, Some(1), vec![]), step(1.0, Some(0), vec![])]);
        let r = two_stage_loss(&[1.0, -2.0], &[t], Domain::Gridworld).unwrap();
        assert_eq!(r.loss, 0.0);
        assert_eq!(r.grad, vec![0.0, 0.0]);
    }

    #[test]
    fn mse_hand_case() {
        let t = traj(vec![step(1.0, Some(0), vec![]), step(0.0, Some(0), vec![])]);
        let r = two_stage_loss(&[2.0], &[t], Domain::Gridworld).unwrap();
        // ((2−1)² + (2−0)²) / 2
        assert_eq!(r.loss, 2.5);
        assert_eq!(r.grad, vec![3.0]);
    }

    #[test]
    fn half_probabilities_give_ln2_per_event() {
        let ev = |param, outcome| LatentEvent::Bernoulli { entity: param, param, outcome };
        let t = traj(vec![
            step(0.0, None, vec![ev(0, true), ev(1, false), ev(2, false)]),
            step(0.0, None, vec![ev(0, false), LatentEvent::Fixed { entity: 3, prob: 0.9 }]),
        ]);
        let r = two_stage_loss(&[0.5; 3], &[t], Domain::Snare).unwrap();
        assert!((r.loss - 4.0 * std::f64::consts::LN_2).abs() < 1e-12);
    }

    #[test]
    fn tb_two_event_hand_case() {
        let theta = [0.7, 0.3, 0.2, 0.8];
        let t = traj(vec![step(
            0.0,
            None,
            vec![LatentEvent::Categorical { entity: 0, param: 1 }, LatentEvent::Categorical { entity: 1, param: 3 }],
        )]);
        let r = two_stage_loss(&theta, &[t], Domain::Tb).unwrap();
        assert!((r.loss - (-(0.3f64).ln() - (0.8f64).ln())).abs() < 1e-12);
        assert!(!r.clipped);
    }

    #[test]
    fn certain_event_is_clipped_and_flagged() {
        let t = traj(vec![step(0.0, None, vec![LatentEvent::Bernoulli { entity: 0, param: 0, outcome: false }])]);
        let r = two_stage_loss(&[1.0], &[t], Domain::Snare).unwrap();
        assert!(r.clipped);
        assert!((r.loss + NLL_CLIP.ln()).abs() < 1e-9);
    }

    #[test]
    fn averaged_over_trajectories() {
        let ev = LatentEvent::Bernoulli { entity: 0, param: 0, outcome: true };
        let one = traj(vec![step(0.0, None, vec![ev.clone()])]);
        let a = two_stage_loss(&[0.25], &[one.clone()], Domain::Snare).unwrap().loss;
        let b = two_stage_loss(&[0.25], &[one.clone(), one], Domain::Snare).unwrap().loss;
        assert!((a - b).abs() < 1e-15);
    }

    proptest! {
        #[test]
        fn gradient_matches_finite_differences(
            p in prop::collection::vec(0.05f64..0.95, 3),
            outcomes in prop::collection::vec((0usize..3, any::<bool>()), 1..12),
        ) {
            let latents = outcomes.iter().map(|&(param, outcome)| LatentEvent::Bernoulli { entity: param, param, outcome }).collect();
            let t = vec![traj(vec![step(0.0, None, latents)])];
            let r = two_stage_loss(&p, &t, Domain::Snare).unwrap();
            for j in 0..3 {
                let h = 1e-6;
                let mut a = p.clone();
                a[j] += h;
                let mut b = p.clone();
                b[j] -= h;
                let fd = (two_stage_loss(&a, &t, Domain::Snare).unwrap().loss - two_stage_loss(&b, &t, Domain::Snare).unwrap().loss) / (2.0 * h);
                prop_assert!((fd - r.grad[j]).abs() < 1e-5 * (1.0 + fd.abs()));
            }
        }
    }
}
