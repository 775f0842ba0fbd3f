use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::env::{behavior_policy, generate_instance, Env};
use crate::mdp::{Dataset, Entry, EnvSpec, FeatureGenerator, Regime, Split};
use crate::seed;
use crate::Error;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerateConfig {
    pub spec: EnvSpec,
    pub regime: Regime,
    pub seed: u64,
    pub n_train: usize,
    pub n_val: usize,
    pub n_test: usize,
    pub trajectories: usize,
    pub noise_scale: f64,
}

impl GenerateConfig {
    /// 7/1/2 instances with 100 logged trajectories each.
    pub fn new(spec: EnvSpec, regime: Regime, seed: u64) -> Self {
        GenerateConfig { spec, regime, seed, n_train: 7, n_val: 1, n_test: 2, trajectories: 100, noise_scale: 3.0 }
    }

    pub fn n_instances(&self) -> usize {
        self.n_train + self.n_val + self.n_test
    }

    fn split_of(&self, i: usize) -> Split {
        if i < self.n_train {
            Split::Train
        } else if i < self.n_train + self.n_val {
            Split::Val
        } else {
            Split::Test
        }
    }
}

/// Draws instances and logs trajectories under the regime's behavior policy.
///
/// Every instance depends only on (seed, index), so the result does not
/// depend on thread scheduling.
pub fn generate_dataset(cfg: &GenerateConfig) -> Result<Dataset, Error> {
    let domain = cfg.spec.domain;
    let generator = FeatureGenerator::new(domain, seed::derive(cfg.seed, "generator", 0)).with_noise(cfg.noise_scale);
    let env = Env::from_spec(&cfg.spec);
    let entries = (0..cfg.n_instances())
        .into_par_iter()
        .map(|i| {
            let inst = generate_instance(&cfg.spec, &generator, seed::derive(cfg.seed, "instance", i as u64))?;
            let behavior = behavior_policy(
                cfg.regime,
                &env,
                domain,
                Some(&inst.true_params),
                seed::derive(cfg.seed, "behavior", i as u64),
            )?;
            let trajs =
                env.simulate(&inst.true_params, &behavior, cfg.trajectories, seed::derive(cfg.seed, "logged", i as u64), true)?;
            Ok(Entry::new(cfg.split_of(i), inst, trajs))
        })
        .collect::<Result<Vec<_>, Error>>()?;
    let ds = Dataset::new(cfg.seed, cfg.spec.clone(), cfg.regime, cfg.noise_scale, entries);
    ds.validate()?;
    Ok(ds)
}
