use rand::Rng;

use super::{EnvError, Simulator, Transition};
use crate::mdp::{EnvSpec, LatentEvent, State};

/// Flat θ index of T_patient[s, a, s′].
pub fn tb_index(patient: usize, s: usize, a: usize, next: usize) -> usize {
    patient * 8 + s * 4 + a * 2 + next
}

/// Adherence of `n_patients`; one patient is intervened on (and observed) per step.
#[derive(Debug, Clone, PartialEq)]
pub struct Tb {
    pub n_patients: usize,
    pub horizon: usize,
    pub gamma: f64,
    /// Passive P(adhere′ | adhere = 1) range.
    pub passive_from_adhering: (f64, f64),
    /// Passive P(adhere′ | adhere = 0) range.
    pub passive_from_lapsed: (f64, f64),
    pub max_effect: f64,
    pub clip: (f64, f64),
}

impl Tb {
    pub fn from_spec(spec: &EnvSpec) -> Self {
        Tb {
            n_patients: spec.size,
            horizon: spec.horizon,
            gamma: spec.gamma,
            passive_from_adhering: (0.4, 0.9),
            passive_from_lapsed: (0.1, 0.5),
            max_effect: 0.4,
            clip: (0.05, 0.95),
        }
    }

    pub fn generate_params<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let mut theta = vec![0.0; self.n_patients * 8];
        for i in 0..self.n_patients {
            let base = [
                rng.gen_range(self.passive_from_lapsed.0..self.passive_from_lapsed.1),
                rng.gen_range(self.passive_from_adhering.0..self.passive_from_adhering.1),
            ];
            let effect = rng.gen_range(0.0..self.max_effect);
            for (s, &b) in base.iter().enumerate() {
                for a in 0..2 {
                    let shifted = if a == 1 { b + effect } else { b - effect };
                    let p1 = shifted.clamp(self.clip.0, self.clip.1);
                    let p0 = (1.0 - shifted).clamp(self.clip.0, self.clip.1);
                    let z = p0 + p1;
                    theta[tb_index(i, s, a, 0)] = p0 / z;
                    theta[tb_index(i, s, a, 1)] = p1 / z;
                }
            }
        }
        theta
    }
}

/// Beliefs after intervening on `action` and observing its current state.
pub fn belief_step_tb(b: &[f64], theta: &[f64], action: usize, observed: bool) -> Result<Vec<f64>, EnvError> {
    if action >= b.len() {
        return Err(EnvError::ActionOutOfRange { action, n: b.len() });
    }
    Ok(b.iter()
        .enumerate()
        .map(|(i, &bi)| {
            let (bi, a) = if i == action { (if observed { 1.0 } else { 0.0 }, 1) } else { (bi, 0) };
            let next = bi * theta[tb_index(i, 1, a, 1)] + (1.0 - bi) * theta[tb_index(i, 0, a, 1)];
            next.clamp(0.0, 1.0)
        })
        .collect())
}

impl Simulator for Tb {
    type Hidden = Vec<bool>;

    fn n_actions(&self) -> usize {
        self.n_patients
    }

    fn horizon(&self) -> usize {
        self.horizon
    }

    fn gamma(&self) -> f64 {
        self.gamma
    }

    fn reset<R: Rng + ?Sized>(&self, _: &[f64], _: &mut R) -> (Vec<bool>, State, Vec<LatentEvent>) {
        (vec![false; self.n_patients], State::Belief(vec![0.0; self.n_patients]), Vec::new())
    }

    fn step<R: Rng + ?Sized>(
        &self,
        theta: &[f64],
        adhering: &mut Vec<bool>,
        state: &State,
        action: usize,
        rng: &mut R,
    ) -> Result<Transition, EnvError> {
        if action >= self.n_patients {
            return Err(EnvError::ActionOutOfRange { action, n: self.n_patients });
        }
        let belief = belief_step_tb(state.belief(), theta, action, adhering[action])?;
        let mut events = Vec::with_capacity(self.n_patients);
        for (i, s) in adhering.iter_mut().enumerate() {
            let a = usize::from(i == action);
            let from = usize::from(*s);
            let next = rng.gen::<f64>() < theta[tb_index(i, from, a, 1)];
            events.push(LatentEvent::Categorical { entity: i, param: tb_index(i, from, a, usize::from(next)) });
            *s = next;
        }
        let reward = adhering.iter().filter(|&&s| s).count() as f64;
        Ok(Transition { reward, next_state: State::Belief(belief), latents: events, reward_param: None })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{simulate, UniformPolicy};
    use crate::mdp::{validate_params, Domain};
    use crate::seed;
    use proptest::prelude::*;

    fn tb() -> Tb {
        Tb::from_spec(&EnvSpec::default_for(Domain::Tb))
    }

    #[test]
    fn belief_examples() {
        // rows: P(1 | s=1, passive) = 0.9, P(1 | s=0, passive) = 0.3
        let mut theta = vec![0.0; 16];
        for i in 0..2 {
            theta[tb_index(i, 1, 0, 1)] = 0.9;
            theta[tb_index(i, 1, 0, 0)] = 0.1;
            theta[tb_index(i, 0, 0, 1)] = 0.3;
            theta[tb_index(i, 0, 0, 0)] = 0.7;
            theta[tb_index(i, 1, 1, 1)] = 0.95;
            theta[tb_index(i, 1, 1, 0)] = 0.05;
            theta[tb_index(i, 0, 1, 1)] = 0.6;
            theta[tb_index(i, 0, 1, 0)] = 0.4;
        }
        let b = belief_step_tb(&[0.5, 0.5], &theta, 0, true).unwrap();
        assert!((b[1] - 0.6).abs() < 1e-15);
        assert!((b[0] - 0.95).abs() < 1e-15);
        let b = belief_step_tb(&[1.0, 0.0], &theta, 1, false).unwrap();
        assert!((b[0] - 0.9).abs() < 1e-15);
        assert!((b[1] - 0.6).abs() < 1e-15);
        assert!(belief_step_tb(&[0.5], &theta, 2, true).is_err());
    }

    #[test]
    fn identity_passive_rows_leave_unobserved_beliefs_unchanged() {
        let mut theta = vec![0.5; 16];
        for i in 0..2 {
            theta[tb_index(i, 1, 0, 1)] = 1.0;
            theta[tb_index(i, 1, 0, 0)] = 0.0;
            theta[tb_index(i, 0, 0, 1)] = 0.0;
            theta[tb_index(i, 0, 0, 0)] = 1.0;
        }
        let b = belief_step_tb(&[0.3, 0.7], &theta, 0, false).unwrap();
        assert!((b[1] - 0.7).abs() < 1e-15);
    }

    proptest! {
        #[test]
        fn generated_rows_are_valid(seed_ in 0u64..300) {
            let t = tb();
            let theta = t.generate_params(&mut seed::rng(seed_));
            prop_assert!(validate_params(&EnvSpec::default_for(Domain::Tb), &theta).is_ok());
            prop_assert!(theta.iter().all(|&p| (0.05 - 1e-12..=0.95 + 1e-12).contains(&p)));
        }

        #[test]
        fn beliefs_stay_in_unit_interval(seed_ in 0u64..100, moves in proptest::collection::vec((0usize..5, any::<bool>()), 1..40)) {
            let theta = tb().generate_params(&mut seed::rng(seed_));
            let mut b = vec![0.5; 5];
            for (a, obs) in moves {
                b = belief_step_tb(&b, &theta, a, obs).unwrap();
                prop_assert!(b.iter().all(|v| (0.0..=1.0).contains(v)));
            }
        }

        #[test]
        fn rewards_count_adherent_patients(seed_ in 0u64..100) {
            let t = tb();
            let theta = t.generate_params(&mut seed::rng(seed_));
            let trajs = simulate(&t, &theta, &UniformPolicy(5), 2, seed_, true).unwrap();
            for tr in &trajs {
                prop_assert_eq!(tr.len(), 30);
                for st in &tr.steps {
                    prop_assert!(st.reward >= 0.0 && st.reward <= 5.0 && st.reward.fract() == 0.0);
                    let adhering = st.latents.iter().filter(|e| matches!(e, LatentEvent::Categorical { param, .. } if param % 2 == 1)).count();
                    prop_assert_eq!(adhering as f64, st.reward);
                }
                let direct: f64 = tr.latents().map(|e| theta[e.param().unwrap()].ln()).sum();
                prop_assert!((direct - tr.latent_log_prob(&theta)).abs() < 1e-9);
            }
        }
    }
}
