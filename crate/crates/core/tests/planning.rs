//! The planner on true parameters should beat uniform behavior on the logged data.

use dfmdp::env::Env;
use dfmdp::harness::{generate_dataset, GenerateConfig};
use dfmdp::mdp::{Domain, EnvSpec, Regime, Split};
use dfmdp::ope::{eval_metric, OpeConfig};
use dfmdp::solver::{solve, SolverSettings};

#[test]
fn true_parameters_beat_uniform_on_gridworld() {
    let spec = EnvSpec::default_for(Domain::Gridworld);
    let env = Env::from_spec(&spec);
    let cfg = OpeConfig::new(spec.gamma, 1.0);
    let mut wins = 0;
    for seed in 0..10 {
        let ds = generate_dataset(&GenerateConfig::new(spec.clone(), Regime::Random, seed)).unwrap();
        let i = ds.indices(Split::Train)[0];
        let theta = &ds.instance(i).true_params;
        let planned = solve(&env, theta, &SolverSettings::forward(Domain::Gridworld), seed, None).unwrap().policy;
        let uniform = planned.with_params(&vec![0.0; planned.n_params()]);
        let trajs = ds.trajectories(i);
        let a = eval_metric(trajs, &planned, &cfg).unwrap().cwpdis_value;
        let b = eval_metric(trajs, &uniform, &cfg).unwrap().cwpdis_value;
        if a >= b {
            wins += 1;
        }
    }
    assert_eq!(wins, 10);
}
