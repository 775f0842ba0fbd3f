use serde::{Deserialize, Serialize};

use crate::diffmdp::{BackwardConfig, CrossVariant, Mode, Strategy};
use crate::mdp::Domain;
use crate::solver::SolverSettings;

use super::TrainError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Method {
    #[serde(rename = "ts")]
    Ts,
    #[serde(rename = "pg-id")]
    PgId,
    #[serde(rename = "pg-w")]
    PgW,
    #[serde(rename = "bellman-id")]
    BellmanId,
    #[serde(rename = "bellman-w")]
    BellmanW,
    #[serde(rename = "pg-full")]
    PgFull,
    #[serde(rename = "bellman-full")]
    BellmanFull,
}

impl Method {
    pub const ALL: [Method; 7] =
        [Method::Ts, Method::PgId, Method::PgW, Method::BellmanId, Method::BellmanW, Method::PgFull, Method::BellmanFull];

    pub fn name(self) -> &'static str {
        match self {
            Method::Ts => "ts",
            Method::PgId => "pg-id",
            Method::PgW => "pg-w",
            Method::BellmanId => "bellman-id",
            Method::BellmanW => "bellman-w",
            Method::PgFull => "pg-full",
            Method::BellmanFull => "bellman-full",
        }
    }

    /// Optimality condition and Hessian strategy; `None` for two-stage.
    pub fn backward(self) -> Option<(Mode, Strategy)> {
        match self {
            Method::Ts => None,
            Method::PgId => Some((Mode::Pg, Strategy::Identity)),
            Method::PgW => Some((Mode::Pg, Strategy::Woodbury)),
            Method::PgFull => Some((Mode::Pg, Strategy::Full)),
            Method::BellmanId => Some((Mode::Bellman, Strategy::Identity)),
            Method::BellmanW => Some((Mode::Bellman, Strategy::Woodbury)),
            Method::BellmanFull => Some((Mode::Bellman, Strategy::Full)),
        }
    }

    pub fn is_decision_focused(self) -> bool {
        self != Method::Ts
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Method {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| format!("unknown method `{s}` (expected one of ts, pg-id, pg-w, bellman-id, bellman-w, pg-full, bellman-full)"))
    }
}

/// Which epoch's weights are returned.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Selection {
    BestValidation,
    LastEpoch,
}

impl Selection {
    pub fn name(self) -> &'static str {
        match self {
            Selection::BestValidation => "best_validation",
            Selection::LastEpoch => "last_epoch",
        }
    }
}

impl std::str::FromStr for Selection {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "best_validation" | "best-validation" => Ok(Selection::BestValidation),
            "last_epoch" | "last-epoch" | "last" => Ok(Selection::LastEpoch),
            _ => Err(format!("unknown selection rule `{s}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub method: Method,
    pub epochs: usize,
    /// α
    pub lr: f64,
    /// λ, weight of the predictive loss in decision-focused steps.
    pub lambda: f64,
    pub lambda_ess: f64,
    /// Trajectories sampled per backward pass.
    pub k: usize,
    /// |c|
    pub c: f64,
    /// `None` picks by domain: leading term on gridworld, with the δ terms
    /// on snare and tb (where rewards do not depend on θ).
    pub cross: Option<CrossVariant>,
    pub seed: u64,
    pub selection: Selection,
    /// Full-budget solve; `None` uses the domain default.
    pub forward: Option<SolverSettings>,
    /// Training steps of warm-started network fine-tunes during training;
    /// 0 solves cold every time.
    pub warm_steps: usize,
    pub warm_random_steps: usize,
    pub max_consecutive_failures: usize,
}

impl TrainConfig {
    pub fn new(method: Method, seed: u64) -> Self {
        TrainConfig {
            method,
            epochs: 100,
            lr: 0.01,
            lambda: 0.1,
            lambda_ess: 1.0,
            k: 100,
            c: 1.0,
            cross: None,
            seed,
            selection: Selection::BestValidation,
            forward: None,
            warm_steps: 500,
            warm_random_steps: 200,
            max_consecutive_failures: 3,
        }
    }

    pub fn validate(&self) -> Result<(), TrainError> {
        if self.epochs == 0 {
            return Err(TrainError::Config("epochs must be at least 1".into()));
        }
        if !(self.lr >= 0.0) || !self.lr.is_finite() {
            return Err(TrainError::Config(format!("learning rate {} must be finite and non-negative", self.lr)));
        }
        if !(self.lambda >= 0.0) || !self.lambda.is_finite() {
            return Err(TrainError::Config(format!("λ = {} must be finite and non-negative", self.lambda)));
        }
        if !(self.lambda_ess >= 0.0) {
            return Err(TrainError::Config(format!("λ_ESS = {} must be non-negative", self.lambda_ess)));
        }
        if self.method.is_decision_focused() {
            if self.k == 0 {
                return Err(TrainError::Config("k must be at least 1".into()));
            }
            if !(self.c > 0.0) || !self.c.is_finite() {
                return Err(TrainError::Config(format!("|c| = {} must be positive", self.c)));
            }
        }
        if self.max_consecutive_failures == 0 {
            return Err(TrainError::Config("max_consecutive_failures must be at least 1".into()));
        }
        Ok(())
    }

    pub fn forward_settings(&self, domain: Domain) -> SolverSettings {
        self.forward.clone().unwrap_or_else(|| SolverSettings::forward(domain))
    }

    /// Budget of a warm-started fine-tune, if enabled and meaningful.
    pub fn warm_settings(&self, domain: Domain) -> Option<SolverSettings> {
        if self.warm_steps == 0 || domain == Domain::Gridworld {
            return None;
        }
        Some(SolverSettings {
            iterations: self.warm_steps,
            random_steps: self.warm_random_steps,
            ..self.forward_settings(domain)
        })
    }

    pub fn cross_variant(&self, domain: Domain) -> CrossVariant {
        self.cross.unwrap_or(match domain {
            Domain::Gridworld => CrossVariant::Leading,
            Domain::Snare | Domain::Tb => CrossVariant::WithDelta,
        })
    }

    pub fn backward_config(&self, domain: Domain) -> Option<BackwardConfig> {
        let (mode, strategy) = self.method.backward()?;
        Some(BackwardConfig { c: self.c, k: self.k, cross: self.cross_variant(domain), ..BackwardConfig::new(mode, strategy) })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults() {
        let c = TrainConfig::new(Method::PgW, 0);
        assert_eq!((c.epochs, c.lr, c.lambda, c.k), (100, 0.01, 0.1, 100));
        let b = c.backward_config(Domain::Gridworld).unwrap();
        assert_eq!((b.mode, b.strategy, b.k), (Mode::Pg, Strategy::Woodbury, 100));
        assert!(TrainConfig::new(Method::Ts, 0).backward_config(Domain::Snare).is_none());
    }

    #[test]
    fn method_names_round_trip() {
        for m in Method::ALL {
            assert_eq!(m.name().parse::<Method>().unwrap(), m);
            assert_eq!(serde_json::to_string(&m).unwrap(), format!("\"{}\"", m.name()));
        }
        assert!("pg-x".parse::<Method>().is_err());
    }

    #[test]
    fn zero_epochs_rejected() {
        let c = TrainConfig { epochs: 0, ..TrainConfig::new(Method::Ts, 0) };
        assert!(matches!(c.validate(), Err(TrainError::Config(_))));
    }

    #[test]
    fn negative_lambda_rejected() {
        let c = TrainConfig { lambda: -0.1, ..TrainConfig::new(Method::PgW, 0) };
        assert!(c.validate().is_err());
    }

    #[test]
    fn cross_variant_by_domain() {
        let c = TrainConfig::new(Method::BellmanW, 0);
        assert_eq!(c.cross_variant(Domain::Gridworld), CrossVariant::Leading);
        assert_eq!(c.cross_variant(Domain::Snare), CrossVariant::WithDelta);
        let forced = TrainConfig { cross: Some(CrossVariant::Leading), ..c };
        assert_eq!(forced.cross_variant(Domain::Tb), CrossVariant::Leading);
    }

    #[test]
    fn gridworld_never_warm_starts() {
        let c = TrainConfig::new(Method::Ts, 0);
        assert!(c.warm_settings(Domain::Gridworld).is_none());
        assert_eq!(c.warm_settings(Domain::Snare).unwrap().iterations, 500);
    }
}
