use std::sync::mpsc;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::diffmdp::{sample_stats, theta_gradient, BackwardConfig, Mode, Strategy, MAX_FULL_DIM};
use crate::env::{Env, UniformPolicy};
use crate::mdp::{Domain, EnvSpec};
use crate::ope::{eval_grad, OpeConfig};
use crate::seed;
use crate::solver::{solve, SolverSettings};
use crate::Error;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RuntimeConfig {
    pub domain: Domain,
    pub mode: Mode,
    pub strategies: Vec<Strategy>,
    /// Grid sides (gridworld) or site / patient counts.
    pub sizes: Vec<usize>,
    pub k: usize,
    pub reps: usize,
    pub timeout: Duration,
    pub seed: u64,
}

impl RuntimeConfig {
    pub fn new(domain: Domain, strategies: Vec<Strategy>, sizes: Vec<usize>) -> Self {
        RuntimeConfig {
            domain,
            mode: Mode::Pg,
            strategies,
            sizes,
            k: 100,
            reps: 5,
            timeout: Duration::from_secs(600),
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RuntimeRow {
    pub strategy: Strategy,
    pub size: usize,
    /// Policy parameter count.
    pub n: usize,
    pub k: usize,
    /// Median over the timed repetitions; `None` on timeout or skip.
    pub median_ms: Option<f64>,
    pub status: String,
}

/// One backward pass: sample k trajectories, collect statistics, solve and
/// contract with the cross term. The forward solve and dEval/dπ are fixed
/// inputs and are not timed.
struct Bench {
    env: Env,
    theta: Vec<f64>,
    policy: crate::solver::SoftPolicy,
    g_pi: Vec<f64>,
}

impl Bench {
    fn new(spec: &EnvSpec, seed_: u64) -> Result<Self, Error> {
        let env = Env::from_spec(spec);
        let theta = env.generate_params(&mut seed::child_rng(seed_, "runtime-params", 0));
        let settings = SolverSettings { iterations: 500, random_steps: 200, ..SolverSettings::forward(spec.domain) };
        let policy = solve(&env, &theta, &settings, seed_, None)?.policy;
        let logged = env.simulate(&theta, &UniformPolicy(env.n_actions()), 100, seed::derive(seed_, "runtime-logged", 0), false)?;
        let (_, g_pi) = eval_grad(&logged, &policy, &OpeConfig::new(env.gamma(), 1.0))?;
        Ok(Bench { env, theta, policy, g_pi })
    }

    fn backward(&self, cfg: &BackwardConfig, seed_: u64) -> Result<(), Error> {
        let batch = sample_stats(&self.env, &self.theta, &self.policy, cfg.k, seed_, cfg.mode)?;
        theta_gradient(&self.g_pi, &batch, &self.theta, &self.policy, cfg)?;
        Ok(())
    }
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    }
}

fn spec_for(domain: Domain, size: usize) -> EnvSpec {
    EnvSpec { size, ..EnvSpec::default_for(domain) }
}

/// Median backward-pass wall clock per (strategy, size), single-threaded,
/// after one untimed warm-up. A point that exceeds the timeout is recorded
/// as a timeout, and larger sizes of that strategy are skipped.
pub fn runtime(cfg: &RuntimeConfig) -> Result<Vec<RuntimeRow>, Error> {
    let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().map_err(|e| std::io::Error::other(e.to_string()))?;
    let mut rows = Vec::new();
    for &strategy in &cfg.strategies {
        let mut timed_out = false;
        for &size in &cfg.sizes {
            let spec = spec_for(cfg.domain, size);
            let bench = pool.install(|| Bench::new(&spec, cfg.seed))?;
            let n = bench.policy.n_params();
            let mut row = RuntimeRow { strategy, size, n, k: cfg.k, median_ms: None, status: String::new() };
            if timed_out {
                row.status = "skipped after timeout".into();
                rows.push(row);
                continue;
            }
            if strategy == Strategy::Full && n > MAX_FULL_DIM {
                row.status = format!("n above dense limit {MAX_FULL_DIM}");
                rows.push(row);
                continue;
            }
            let bcfg = BackwardConfig { k: cfg.k, ..BackwardConfig::new(cfg.mode, strategy) };
            let reps = cfg.reps.max(1);
            let (tx, rx) = mpsc::channel();
            let deadline = Instant::now() + cfg.timeout;
            // the worker owns its inputs so a timed-out point can be abandoned
            let worker_pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().map_err(|e| std::io::Error::other(e.to_string()))?;
            let seed_ = cfg.seed;
            std::thread::spawn(move || {
                worker_pool.install(|| {
                    for rep in 0..=reps {
                        let start = Instant::now();
                        let r = bench.backward(&bcfg, seed::derive(seed_, "runtime-rep", rep as u64));
                        let ms = start.elapsed().as_secs_f64() * 1e3;
                        if tx.send(r.map(|_| ms).map_err(|e| e.to_string())).is_err() {
                            return;
                        }
                    }
                })
            });
            let mut times = Vec::with_capacity(reps);
            let mut status = "ok".to_string();
            for i in 0..=reps {
                let left = deadline.saturating_duration_since(Instant::now());
                match rx.recv_timeout(left) {
                    Ok(Ok(ms)) => {
                        if i > 0 {
                            times.push(ms);
                        }
                    }
                    Ok(Err(e)) => {
                        status = format!("error: {e}");
                        break;
                    }
                    Err(_) => {
                        status = "timeout".into();
                        timed_out = true;
                        break;
                    }
                }
            }
            if status == "ok" {
                row.median_ms = Some(median(times));
            }
            row.status = status;
            rows.push(row);
        }
    }
    Ok(rows)
}

/// Least-squares slope of log(time) against log(n) over finished points.
pub fn loglog_slope(rows: &[RuntimeRow], strategy: Strategy) -> Option<f64> {
    let pts: Vec<(f64, f64)> = rows
        .iter()
        .filter(|r| r.strategy == strategy)
        .filter_map(|r| r.median_ms.map(|t| ((r.n as f64).ln(), t.ln())))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let m = pts.len() as f64;
    let (sx, sy) = pts.iter().fold((0.0, 0.0), |(a, b), p| (a + p.0, b + p.1));
    let (mx, my) = (sx / m, sy / m);
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    Some(sxy / sxx)
}

pub fn write_runtime_csv(rows: &[RuntimeRow], path: &std::path::Path) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(strategy: Strategy, n: usize, ms: f64) -> RuntimeRow {
        RuntimeRow { strategy, size: 0, n, k: 100, median_ms: Some(ms), status: "ok".into() }
    }

    #[test]
    fn slope_of_exact_power_law() {
        let rows: Vec<_> = [10, 20, 40, 80].iter().map(|&n| row(Strategy::Woodbury, n, 3.0 * (n as f64).powf(1.2))).collect();
        assert!((loglog_slope(&rows, Strategy::Woodbury).unwrap() - 1.2).abs() < 1e-12);
        assert!(loglog_slope(&rows, Strategy::Full).is_none());
    }

    #[test]
    fn median_of_even_and_odd() {
        assert_eq!(median(vec![3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(vec![4.0, 1.0, 2.0, 3.0]), 2.5);
    }

    #[test]
    fn small_benchmark_runs() {
        let cfg = RuntimeConfig { reps: 1, k: 5, ..RuntimeConfig::new(Domain::Gridworld, vec![Strategy::Identity, Strategy::Woodbury], vec![3, 4]) };
        let rows = runtime(&cfg).unwrap();
        assert_eq!(rows.len(), 4);
        assert!(rows.iter().all(|r| r.median_ms.is_some() && r.status == "ok"));
        assert_eq!(rows[1].n, 4 * 4 * 5);
    }

    #[test]
    fn timeout_is_recorded() {
        let cfg = RuntimeConfig {
            reps: 3,
            timeout: Duration::from_millis(1),
            ..RuntimeConfig::new(Domain::Gridworld, vec![Strategy::Full], vec![4, 5])
        };
        let rows = runtime(&cfg).unwrap();
        assert_eq!(rows[0].status, "timeout");
        assert!(rows[0].median_ms.is_none());
        assert_eq!(rows[1].status, "skipped after timeout");
    }
}
