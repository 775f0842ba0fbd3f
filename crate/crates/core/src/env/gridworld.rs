use rand::seq::index::sample;
use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::tabular::{Outcome, TabularMdp};
use crate::mdp::EnvSpec;

/// Square grid; row 0 is the bottom, cell = row · side + col.
///
/// Actions: 0 north, 1 south, 2 east, 3 west, 4 stay. Moving into a wall
/// leaves the agent in place and the reward is the entered cell's value.
#[derive(Debug, Clone, PartialEq)]
pub struct Gridworld {
    pub side: usize,
    pub cliff_fraction: f64,
    mdp: TabularMdp,
}

pub const NORTH: usize = 0;
pub const SOUTH: usize = 1;
pub const EAST: usize = 2;
pub const WEST: usize = 3;
pub const STAY: usize = 4;

impl Gridworld {
    pub fn new(side: usize, horizon: usize, gamma: f64, reward_noise: f64) -> Self {
        assert!(side >= 2, "grid side must be at least 2");
        let n = side * side;
        let mut transitions = Vec::with_capacity(n * 5);
        let mut reward_param = Vec::with_capacity(n * 5);
        for s in 0..n {
            for a in 0..5 {
                let next = Self::move_from(side, s, a);
                transitions.push(vec![(next, Outcome::Known(1.0))]);
                reward_param.push(next);
            }
        }
        let mdp = TabularMdp { n_states: n, n_actions: 5, start: 0, horizon, gamma, reward_param, transitions, reward_noise };
        Gridworld { side, cliff_fraction: 0.2, mdp }
    }

    pub fn from_spec(spec: &EnvSpec) -> Self {
        Self::new(spec.size, spec.horizon, spec.gamma, spec.reward_noise)
    }

    pub fn move_from(side: usize, s: usize, a: usize) -> usize {
        let (r, c) = (s / side, s % side);
        let (r, c) = match a {
            NORTH => ((r + 1).min(side - 1), c),
            SOUTH => (r.saturating_sub(1), c),
            EAST => (r, (c + 1).min(side - 1)),
            WEST => (r, c.saturating_sub(1)),
            _ => (r, c),
        };
        r * side + c
    }

    pub fn mdp(&self) -> &TabularMdp {
        &self.mdp
    }

    pub fn n_cells(&self) -> usize {
        self.side * self.side
    }

    pub fn start(&self) -> usize {
        0
    }

    /// Top-right corner.
    pub fn safe_cell(&self) -> usize {
        self.n_cells() - 1
    }

    pub fn n_cliffs(&self) -> usize {
        (self.cliff_fraction * self.n_cells() as f64).round() as usize
    }

    /// Cliff cells drawn without replacement from the cells that are neither start nor safe.
    pub fn sample_cliffs<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<usize> {
        let candidates: Vec<usize> = (1..self.safe_cell()).collect();
        let k = self.n_cliffs().min(candidates.len());
        let mut cells: Vec<usize> = sample(rng, candidates.len(), k).into_iter().map(|i| candidates[i]).collect();
        cells.sort_unstable();
        cells
    }

    /// Cell rewards: safe ~ N(5, 1), cliffs ~ N(−10, 1), others ~ N(0, 1).
    pub fn generate_params<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let cliffs = self.sample_cliffs(rng);
        let safe = Normal::new(5.0, 1.0).unwrap();
        let cliff = Normal::new(-10.0, 1.0).unwrap();
        let plain = Normal::new(0.0, 1.0).unwrap();
        (0..self.n_cells())
            .map(|c| {
                if c == self.safe_cell() {
                    safe.sample(rng)
                } else if cliffs.binary_search(&c).is_ok() {
                    cliff.sample(rng)
                } else {
                    plain.sample(rng)
                }
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{simulate, UniformPolicy};
    use crate::seed;
    use proptest::prelude::*;

    #[test]
    fn walls_clamp() {
        let side = 5;
        assert_eq!(Gridworld::move_from(side, 0, SOUTH), 0);
        assert_eq!(Gridworld::move_from(side, 0, WEST), 0);
        assert_eq!(Gridworld::move_from(side, 0, NORTH), 5);
        assert_eq!(Gridworld::move_from(side, 0, EAST), 1);
        assert_eq!(Gridworld::move_from(side, 24, NORTH), 24);
        assert_eq!(Gridworld::move_from(side, 24, EAST), 24);
        assert_eq!(Gridworld::move_from(side, 12, STAY), 12);
    }

    proptest! {
        #[test]
        fn exactly_five_cliffs_never_on_start_or_safe(s in 0u64..500) {
            let g = Gridworld::new(5, 20, 0.95, 0.0);
            let cliffs = g.sample_cliffs(&mut seed::rng(s));
            prop_assert_eq!(cliffs.len(), 5);
            prop_assert!(!cliffs.contains(&0) && !cliffs.contains(&24));
            let theta = g.generate_params(&mut seed::rng(s));
            prop_assert_eq!(theta.len(), 25);
        }

        #[test]
        fn reward_is_entered_cell_value(s in 0u64..100) {
            let g = Gridworld::new(5, 20, 0.95, 0.0);
            let theta = g.generate_params(&mut seed::rng(s));
            let trajs = simulate(g.mdp(), &theta, &UniformPolicy(5), 3, s, true).unwrap();
            for t in &trajs {
                prop_assert_eq!(t.len(), 20);
                for (i, st) in t.steps.iter().enumerate() {
                    let next = if i + 1 < t.len() { t.steps[i + 1].state.discrete() } else { t.final_state.discrete() };
                    prop_assert_eq!(st.reward, theta[next]);
                    prop_assert_eq!(st.reward_param, Some(next));
                    prop_assert!(st.latents.is_empty());
                    prop_assert_eq!(st.behavior_prob, 0.2);
                }
            }
        }
    }

    #[test]
    fn cliff_rewards_come_from_the_cliff_distribution() {
        let g = Gridworld::new(5, 20, 0.95, 0.0);
        let theta = g.generate_params(&mut seed::rng(3));
        let very_negative = theta.iter().filter(|&&r| r < -5.0).count();
        assert_eq!(very_negative, 5);
    }
}
