use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::autodiff::{log_softmax, softmax, AutodiffError, ParamVars, ParamVector, Tape, Tensor, Var};
use crate::env::ActionPolicy;
use crate::mdp::State;
use crate::nn::Mlp;

/// Action values, either a table or a network over belief vectors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum QFunction {
    Table { n_states: usize, n_actions: usize, q: ParamVector },
    Network { net: Mlp },
}

impl QFunction {
    pub fn table(n_states: usize, n_actions: usize, values: Vec<f64>) -> Self {
        let q = ParamVector::from_segments([("q", Tensor::new(n_states, n_actions, values))]);
        QFunction::Table { n_states, n_actions, q }
    }

    pub fn params(&self) -> &ParamVector {
        match self {
            QFunction::Table { q, .. } => q,
            QFunction::Network { net } => &net.params,
        }
    }

    pub fn params_mut(&mut self) -> &mut ParamVector {
        match self {
            QFunction::Table { q, .. } => q,
            QFunction::Network { net } => &mut net.params,
        }
    }

    pub fn n_actions(&self) -> usize {
        match self {
            QFunction::Table { n_actions, .. } => *n_actions,
            QFunction::Network { net } => net.output_dim(),
        }
    }

    fn encode(&self, state: &State) -> Vec<f64> {
        match (self, state) {
            (_, State::Belief(b)) => b.clone(),
            (QFunction::Network { net }, State::Discrete(s)) => {
                let mut x = vec![0.0; net.input_dim()];
                x[*s] = 1.0;
                x
            }
            (QFunction::Table { .. }, State::Discrete(_)) => unreachable!(),
        }
    }

    pub fn values(&self, state: &State) -> Vec<f64> {
        match self {
            QFunction::Table { n_actions, q, .. } => {
                let s = state.discrete();
                q.values()[s * n_actions..(s + 1) * n_actions].to_vec()
            }
            QFunction::Network { net } => net.forward_vec(&self.encode(state)),
        }
    }

    /// Q(s, ·) for each state as column-vector nodes.
    pub fn record_rows(&self, tape: &mut Tape, vars: &ParamVars, states: &[&State]) -> Result<Vec<Var>, AutodiffError> {
        match self {
            QFunction::Table { .. } => {
                let q = vars.vars[0];
                states.iter().map(|s| tape.row(q, s.discrete())).collect()
            }
            QFunction::Network { net } => {
                let dim = net.input_dim();
                let b = states.len();
                // dim × b input, one column per state
                let mut x = vec![0.0; dim * b];
                for (j, s) in states.iter().enumerate() {
                    for (i, v) in self.encode(s).into_iter().enumerate() {
                        x[i * b + j] = v;
                    }
                }
                let xv = tape.leaf(Tensor::new(dim, b, x));
                let z = net.record(tape, vars, xv)?;
                let zt = tape.transpose(z);
                (0..b).map(|j| tape.row(zt, j)).collect()
            }
        }
    }
}

/// π(a|s) = softmax(β · Q(s, ·)).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SoftPolicy {
    pub q: QFunction,
    pub beta: f64,
}

impl SoftPolicy {
    pub fn new(q: QFunction, beta: f64) -> Self {
        SoftPolicy { q, beta }
    }

    pub fn params(&self) -> &ParamVector {
        self.q.params()
    }

    pub fn n_params(&self) -> usize {
        self.q.params().len()
    }

    pub fn n_actions(&self) -> usize {
        self.q.n_actions()
    }

    /// Same structure with different flat parameters.
    pub fn with_params(&self, values: &[f64]) -> Self {
        let mut p = self.clone();
        p.q.params_mut().values_mut().copy_from_slice(values);
        p
    }

    pub fn probs(&self, state: &State) -> Vec<f64> {
        softmax(&self.q.values(state), self.beta)
    }

    pub fn log_prob(&self, state: &State, action: usize) -> f64 {
        log_softmax(&self.q.values(state), self.beta)[action]
    }

    /// log π(a|s) for each `(state, action)` pair, as scalar nodes.
    pub fn record_log_probs(
        &self,
        tape: &mut Tape,
        vars: &ParamVars,
        pairs: &[(&State, usize)],
    ) -> Result<Vec<Var>, AutodiffError> {
        let states: Vec<&State> = pairs.iter().map(|p| p.0).collect();
        let rows = self.q.record_rows(tape, vars, &states)?;
        rows.into_iter()
            .zip(pairs)
            .map(|(r, &(_, a))| {
                let l = tape.log_softmax(r, self.beta)?;
                tape.index(l, a)
            })
            .collect()
    }

    /// log π(a|s) and its gradient w.r.t. the policy parameters.
    pub fn log_prob_grad(&self, state: &State, action: usize) -> Result<(f64, Vec<f64>), AutodiffError> {
        let mut tape = Tape::new();
        let vars = tape.params(self.params());
        let lp = self.record_log_probs(&mut tape, &vars, &[(state, action)])?[0];
        let g = tape.backward(lp)?;
        Ok((tape.scalar_value(lp), vars.flat_grad(&g)))
    }
}

impl ActionPolicy for SoftPolicy {
    fn action_probs(&self, state: &State) -> Vec<f64> {
        self.probs(state)
    }
}

/// A converged forward solve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveResult {
    pub policy: SoftPolicy,
    pub iterations: usize,
    /// Final ‖Q_{t+1} − Q_t‖∞ (tabular) or mean recent TD loss (network).
    pub residual: f64,
    /// Residuals of the last iterations, oldest first.
    #[serde(default)]
    pub residual_tail: Vec<f64>,
}

impl SolveResult {
    /// Hex digest of β and every policy parameter's bit pattern.
    pub fn checksum(&self) -> String {
        let mut h = Sha256::new();
        h.update(self.policy.beta.to_bits().to_le_bytes());
        for v in self.policy.params().values() {
            h.update(v.to_bits().to_le_bytes());
        }
        h.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn validate(&self) -> bool {
        self.policy.beta > 0.0 && self.policy.params().all_finite()
    }
}
