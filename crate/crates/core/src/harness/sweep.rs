use serde::{Deserialize, Serialize};

use crate::mdp::{Dataset, Split};
use crate::training::{evaluate_split, train, TrainConfig, TrainError};

/// Hyperparameter varied by a sweep.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepParam {
    Lambda,
    C,
    LambdaEss,
}

impl SweepParam {
    pub fn name(self) -> &'static str {
        match self {
            SweepParam::Lambda => "lambda",
            SweepParam::C => "c",
            SweepParam::LambdaEss => "lambda_ess",
        }
    }

    pub fn apply(self, cfg: &mut TrainConfig, value: f64) {
        match self {
            SweepParam::Lambda => cfg.lambda = value,
            SweepParam::C => cfg.c = value,
            SweepParam::LambdaEss => cfg.lambda_ess = value,
        }
    }
}

impl std::str::FromStr for SweepParam {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "lambda" => Ok(SweepParam::Lambda),
            "c" => Ok(SweepParam::C),
            "lambda_ess" | "lambda-ess" => Ok(SweepParam::LambdaEss),
            _ => Err(format!("unknown sweep parameter `{s}` (expected lambda, c or lambda_ess)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub domain: String,
    pub regime: String,
    pub method: String,
    pub seed: u64,
    pub param: String,
    pub value: f64,
    pub chosen_epoch: usize,
    /// Validation score of the chosen epoch.
    pub val_ope: Option<f64>,
    /// NaN when the test metric is undefined for the trained model.
    pub test_mean: f64,
    pub test_stderr: f64,
    pub lambda_ess: f64,
    pub selection: String,
    pub warnings: usize,
    pub error: Option<String>,
}

/// Trains `base` once per value and scores every resulting model on the test split.
pub fn sweep(ds: &Dataset, base: &TrainConfig, param: SweepParam, values: &[f64]) -> Result<Vec<SweepRow>, TrainError> {
    let mut rows = Vec::with_capacity(values.len());
    for &v in values {
        let mut cfg = base.clone();
        param.apply(&mut cfg, v);
        let out = train(ds, &cfg)?;
        let (test_mean, test_stderr, error) = match evaluate_split(&out.model, ds, Split::Test, cfg.lambda_ess) {
            Ok(t) => (t.mean, t.stderr, None),
            Err(e) => (f64::NAN, f64::NAN, Some(e.to_string())),
        };
        rows.push(SweepRow {
            domain: ds.spec.domain.name().to_string(),
            regime: ds.regime.name().to_string(),
            method: cfg.method.name().to_string(),
            seed: cfg.seed,
            param: param.name().to_string(),
            value: v,
            chosen_epoch: out.log.chosen_epoch,
            val_ope: out.log.mean_ope(out.log.chosen_epoch, Split::Val),
            test_mean,
            test_stderr,
            lambda_ess: cfg.lambda_ess,
            selection: cfg.selection.name().to_string(),
            warnings: out.log.warnings.len(),
            error,
        });
    }
    Ok(rows)
}

/// The row with the highest validation score; earlier rows win ties.
pub fn select_by_validation(rows: &[SweepRow]) -> Option<&SweepRow> {
    rows.iter().filter(|r| r.val_ope.is_some_and(f64::is_finite)).fold(None, |best: Option<&SweepRow>, r| match best {
        Some(b) if b.val_ope >= r.val_ope => Some(b),
        _ => Some(r),
    })
}
