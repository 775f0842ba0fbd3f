//! Solves one snare instance with soft DDQN, then fine-tunes from the result.

use std::time::Instant;

use dfmdp::env::{Env, UniformPolicy};
use dfmdp::mdp::{Domain, EnvSpec};
use dfmdp::ope::{eval_metric, OpeConfig};
use dfmdp::solver::{solve, SolverSettings};

fn main() -> Result<(), dfmdp::Error> {
    let spec = EnvSpec::default_for(Domain::Snare);
    let env = Env::from_spec(&spec);
    let theta = env.generate_params(&mut dfmdp::seed::rng(1));
    let logged = env.simulate(&theta, &UniformPolicy(env.n_actions()), 100, 2, false)?;

    let settings = SolverSettings::forward(Domain::Snare);
    let start = Instant::now();
    let cold = solve(&env, &theta, &settings, 3, None)?;
    println!("cold solve: {} steps in {:.2?}, residual {:.4}", cold.iterations, start.elapsed(), cold.residual);

    let short = SolverSettings { iterations: 500, random_steps: 200, ..settings };
    let start = Instant::now();
    let warm = solve(&env, &theta, &short, 4, Some(&cold))?;
    println!("warm fine-tune: {} steps in {:.2?}", warm.iterations, start.elapsed());

    let cfg = OpeConfig::default();
    for (name, r) in [("cold", &cold), ("warm", &warm)] {
        let rep = eval_metric(&logged, &r.policy, &cfg)?;
        println!("{name}: eval {:.3}, ess {:.1}", rep.eval, rep.ess);
    }
    Ok(())
}
