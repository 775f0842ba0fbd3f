use std::collections::HashMap;

use crate::env::Env;
use crate::solver::{solve, SolveResult, SolverError, SolverSettings};

/// The forward solve shared by every trainer and by evaluation.
///
/// Keeps the last solution per instance so that network solvers can be
/// fine-tuned from it instead of trained from scratch.
#[derive(Debug, Clone)]
pub struct Planner {
    env: Env,
    cold: SolverSettings,
    warm: Option<SolverSettings>,
    cache: HashMap<usize, SolveResult>,
}

impl Planner {
    pub fn new(env: Env, cold: SolverSettings, warm: Option<SolverSettings>) -> Self {
        Planner { env, cold, warm, cache: HashMap::new() }
    }

    pub fn env(&self) -> &Env {
        &self.env
    }

    /// Solves instance `key` under θ, fine-tuning its previous solution when
    /// one exists and warm starts are enabled.
    pub fn solve(&mut self, key: usize, theta: &[f64], seed: u64) -> Result<SolveResult, SolverError> {
        let r = match (&self.warm, self.cache.get(&key)) {
            (Some(w), Some(prev)) => solve(&self.env, theta, w, seed, Some(prev))?,
            _ => self.solve_cold(theta, seed)?,
        };
        if self.warm.is_some() {
            self.cache.insert(key, r.clone());
        }
        Ok(r)
    }

    /// Full-budget solve from scratch.
    pub fn solve_cold(&self, theta: &[f64], seed: u64) -> Result<SolveResult, SolverError> {
        solve(&self.env, theta, &self.cold, seed, None)
    }
}
