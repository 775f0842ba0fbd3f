use std::time::Instant;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::diffmdp::{assemble_dw, sample_stats, BackwardConfig};
use crate::env::Env;
use crate::mdp::{Dataset, MdpInstance, PredictiveModel, Split, Trajectory};
use crate::ope::{eval_grad, eval_metric, OpeConfig, OpeReport};
use crate::seed;
use crate::solver::SolverSettings;

use super::{two_stage_loss, LogRow, Planner, Selection, TrainConfig, TrainError, TrainLog};

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: PredictiveModel,
    pub log: TrainLog,
}

/// w ← w + α(Δw_eval − λ∇_w L); a missing Δw_eval is zero.
pub fn gradient_step(w: &mut [f64], dw_eval: Option<&[f64]>, grad_loss: &[f64], lr: f64, lambda: f64) {
    for (j, wj) in w.iter_mut().enumerate() {
        let e = dw_eval.map_or(0.0, |d| d[j]);
        *wj += lr * (e - lambda * grad_loss[j]);
    }
}

/// Dispatches on `cfg.method`.
pub fn train(ds: &Dataset, cfg: &TrainConfig) -> Result<TrainOutcome, TrainError> {
    let backward = cfg.backward_config(ds.spec.domain);
    let (model, log) = run(ds, cfg, backward.as_ref())?;
    Ok(TrainOutcome { model, log })
}

/// Gradient descent on the predictive loss, one instance at a time.
pub fn train_two_stage(ds: &Dataset, cfg: &TrainConfig) -> Result<(PredictiveModel, TrainLog), TrainError> {
    run(ds, cfg, None)
}

pub fn train_decision_focused(ds: &Dataset, cfg: &TrainConfig) -> Result<(PredictiveModel, TrainLog), TrainError> {
    let backward = cfg.backward_config(ds.spec.domain).ok_or(TrainError::NotDecisionFocused { method: cfg.method })?;
    run(ds, cfg, Some(&backward))
}

struct Ctx<'a> {
    ds: &'a Dataset,
    cfg: &'a TrainConfig,
    ope: OpeConfig,
}

impl Ctx<'_> {
    fn solve_seed(&self, epoch: usize, idx: usize) -> u64 {
        seed::derive(self.cfg.seed, "solve", (epoch * self.ds.len() + idx) as u64)
    }

    fn sample_seed(&self, epoch: usize, idx: usize) -> u64 {
        seed::derive(self.cfg.seed, "backward", (epoch * self.ds.len() + idx) as u64)
    }
}

struct DfStep {
    ope: f64,
    dw: Vec<f64>,
    checksum: String,
    ms: f64,
}

#[allow(clippy::too_many_arguments)]
fn df_step(
    planner: &mut Planner,
    model: &PredictiveModel,
    inst: &MdpInstance,
    idx: usize,
    trajs: &[Trajectory],
    theta: &[f64],
    bcfg: &BackwardConfig,
    ctx: &Ctx,
    epoch: usize,
) -> Result<DfStep, TrainError> {
    let sol = planner.solve(idx, theta, ctx.solve_seed(epoch, idx))?;
    let start = Instant::now();
    let (ope, g_pi) = eval_grad(trajs, &sol.policy, &ctx.ope)?;
    let batch = sample_stats(planner.env(), theta, &sol.policy, bcfg.k, ctx.sample_seed(epoch, idx), bcfg.mode)?;
    let (dw, _) = assemble_dw(&g_pi, &batch, theta, &sol.policy, bcfg, model, &inst.features)?;
    let ms = start.elapsed().as_secs_f64() * 1e3;
    if dw.iter().any(|v| !v.is_finite()) {
        return Err(TrainError::Prediction("non-finite decision gradient".into()));
    }
    Ok(DfStep { ope, dw, checksum: sol.checksum(), ms })
}

fn run(ds: &Dataset, cfg: &TrainConfig, backward: Option<&BackwardConfig>) -> Result<(PredictiveModel, TrainLog), TrainError> {
    cfg.validate()?;
    let domain = ds.spec.domain;
    let train_idx = ds.indices(Split::Train);
    if train_idx.is_empty() {
        return Err(TrainError::EmptySplit(Split::Train));
    }
    let val_idx = ds.indices(Split::Val);
    let env = Env::from_spec(&ds.spec);
    let ctx = Ctx { ds, cfg, ope: OpeConfig::new(env.gamma(), cfg.lambda_ess) };
    let mut planner = Planner::new(env, cfg.forward_settings(domain), cfg.warm_settings(domain));
    let mut model = PredictiveModel::new(domain, &mut seed::child_rng(cfg.seed, "model", 0));
    let mut log = TrainLog::new(cfg.selection);
    let mut best: Option<(f64, usize, PredictiveModel)> = None;

    for epoch in 1..=cfg.epochs {
        let mut order = train_idx.clone();
        order.shuffle(&mut seed::child_rng(cfg.seed, "order", epoch as u64));
        let mut rows = Vec::with_capacity(order.len() + val_idx.len());
        let mut failures = 0;

        for (pos, &i) in order.iter().enumerate() {
            let inst = ds.instance(i);
            let trajs = ds.trajectories(i);
            let theta = model.predict(&inst.features)?;
            let loss = two_stage_loss(&theta, trajs, domain)?;
            if !loss.loss.is_finite() && backward.is_none() {
                return Err(TrainError::NonFiniteLoss { epoch });
            }
            log.clipped |= loss.clipped;
            let mut row = LogRow {
                epoch,
                instance: i,
                split: Split::Train,
                loss: loss.loss,
                ope: None,
                wallclock_backward_ms: None,
                solve_checksum: String::new(),
                warning: None,
            };
            let grad_w = model.vjp(&inst.features, &loss.grad)?;

            match backward {
                None => {
                    match planner.solve(i, &theta, ctx.solve_seed(epoch, i)) {
                        Ok(sol) => {
                            row.solve_checksum = sol.checksum();
                            match eval_metric(trajs, &sol.policy, &ctx.ope) {
                                Ok(r) => row.ope = Some(r.eval),
                                Err(e) => row.warning = Some(format!("epoch {epoch}, instance {i}: {e}")),
                            }
                        }
                        Err(e) => row.warning = Some(format!("epoch {epoch}, instance {i}: solve failed: {e}")),
                    }
                    if let Some(w) = &row.warning {
                        log.warnings.push(w.clone());
                    }
                    gradient_step(model.weights_mut(), None, &grad_w, cfg.lr, 1.0);
                }
                Some(bcfg) => match df_step(&mut planner, &model, inst, i, trajs, &theta, bcfg, &ctx, epoch).and_then(|s| {
                    if loss.loss.is_finite() && grad_w.iter().all(|g| g.is_finite()) {
                        Ok(s)
                    } else {
                        Err(TrainError::NonFiniteLoss { epoch })
                    }
                }) {
                    Ok(step) => {
                        failures = 0;
                        row.ope = Some(step.ope);
                        row.wallclock_backward_ms = Some(step.ms);
                        row.solve_checksum = step.checksum;
                        gradient_step(model.weights_mut(), Some(&step.dw), &grad_w, cfg.lr, cfg.lambda);
                    }
                    Err(e) => {
                        failures += 1;
                        let msg = format!("epoch {epoch}, instance {i} skipped: {e}");
                        eprintln!("warning: {msg}");
                        log.warnings.push(msg.clone());
                        row.warning = Some(msg);
                        if failures >= cfg.max_consecutive_failures {
                            rows.push(row);
                            let msg = format!(
                                "epoch {epoch} aborted after {failures} consecutive failures; {} instances not visited",
                                order.len() - pos - 1
                            );
                            eprintln!("warning: {msg}");
                            log.warnings.push(msg);
                            break;
                        }
                    }
                },
            }
            rows.push(row);
        }

        for &i in &val_idx {
            let inst = ds.instance(i);
            let trajs = ds.trajectories(i);
            let theta = model.predict(&inst.features)?;
            let loss = two_stage_loss(&theta, trajs, domain)?;
            let mut row = LogRow {
                epoch,
                instance: i,
                split: Split::Val,
                loss: loss.loss,
                ope: None,
                wallclock_backward_ms: None,
                solve_checksum: String::new(),
                warning: None,
            };
            match planner.solve(i, &theta, ctx.solve_seed(epoch, i)) {
                Ok(sol) => {
                    row.solve_checksum = sol.checksum();
                    match eval_metric(trajs, &sol.policy, &ctx.ope) {
                        Ok(r) => row.ope = Some(r.eval),
                        Err(e) => row.warning = Some(format!("epoch {epoch}, validation instance {i}: {e}")),
                    }
                }
                Err(e) => row.warning = Some(format!("epoch {epoch}, validation instance {i}: {e}")),
            }
            if let Some(w) = &row.warning {
                log.warnings.push(w.clone());
            }
            rows.push(row);
        }

        rows.sort_by_key(|r| r.instance);
        log.rows.extend(rows);

        if let Some(v) = log.mean_ope(epoch, Split::Val) {
            if best.as_ref().map_or(true, |b| v > b.0) {
                best = Some((v, epoch, model.clone()));
            }
        }
    }

    match (cfg.selection, best) {
        (Selection::BestValidation, Some((_, epoch, m))) => {
            log.chosen_epoch = epoch;
            Ok((m, log))
        }
        (Selection::BestValidation, None) => {
            log.warnings.push("no validation score; returning the last epoch".into());
            log.chosen_epoch = cfg.epochs;
            Ok((model, log))
        }
        (Selection::LastEpoch, _) => {
            log.chosen_epoch = cfg.epochs;
            Ok((model, log))
        }
    }
}

/// Mean test-time score of a split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitEval {
    pub split: Split,
    pub mean: f64,
    /// Sample standard deviation / √n; 0 for a single instance.
    pub stderr: f64,
    pub instances: Vec<usize>,
    pub reports: Vec<OpeReport>,
}

impl SplitEval {
    pub fn values(&self) -> Vec<f64> {
        self.reports.iter().map(|r| r.eval).collect()
    }
}

pub fn mean_stderr(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    if v.len() < 2 {
        return (mean, 0.0);
    }
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Predict, solve cold at the domain's default budget, and score each
/// instance of `split` against its logged trajectories.
pub fn evaluate_split(model: &PredictiveModel, ds: &Dataset, split: Split, lambda_ess: f64) -> Result<SplitEval, TrainError> {
    evaluate_split_with(model, ds, split, lambda_ess, &SolverSettings::forward(ds.spec.domain), ds.seed)
}

pub fn evaluate_split_with(
    model: &PredictiveModel,
    ds: &Dataset,
    split: Split,
    lambda_ess: f64,
    settings: &SolverSettings,
    seed_: u64,
) -> Result<SplitEval, TrainError> {
    let instances = ds.indices(split);
    if instances.is_empty() {
        return Err(TrainError::EmptySplit(split));
    }
    let env = Env::from_spec(&ds.spec);
    let planner = Planner::new(env.clone(), settings.clone(), None);
    let cfg = OpeConfig::new(env.gamma(), lambda_ess);
    let reports = instances
        .par_iter()
        .map(|&i| {
            let theta = model.predict(&ds.instance(i).features)?;
            let sol = planner.solve_cold(&theta, seed::derive(seed_, "evaluate", i as u64))?;
            Ok(eval_metric(ds.trajectories(i), &sol.policy, &cfg)?)
        })
        .collect::<Result<Vec<_>, TrainError>>()?;
    let values: Vec<f64> = reports.iter().map(|r| r.eval).collect();
    let (mean, stderr) = mean_stderr(&values);
    Ok(SplitEval { split, mean, stderr, instances, reports })
}
