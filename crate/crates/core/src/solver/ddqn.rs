use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{softmax, Tape, Tensor};
use crate::env::{sample_index, Simulator};
use crate::mdp::State;
use crate::nn::{Adam, Mlp};
use crate::seed;

use super::{QFunction, SoftPolicy, SolveResult, SolverError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DdqnConfig {
    pub gamma: f64,
    pub beta: f64,
    pub random_steps: usize,
    pub train_steps: usize,
    pub batch: usize,
    pub target_every: usize,
    pub lr: f64,
    pub hidden: Vec<usize>,
}

impl DdqnConfig {
    pub fn new(beta: f64) -> Self {
        DdqnConfig {
            gamma: 0.95,
            beta,
            random_steps: 1000,
            train_steps: 10000,
            batch: 32,
            target_every: 100,
            lr: 1e-3,
            hidden: vec![64, 64],
        }
    }

    pub fn with_train_steps(mut self, steps: usize) -> Self {
        self.train_steps = steps;
        self
    }
}

/// Every transition seen during one solve.
#[derive(Debug, Clone, Default)]
pub struct ReplayBuffer {
    dim: usize,
    states: Vec<f64>,
    actions: Vec<usize>,
    rewards: Vec<f64>,
    next_states: Vec<f64>,
    dones: Vec<bool>,
}

impl ReplayBuffer {
    pub fn new(dim: usize) -> Self {
        ReplayBuffer { dim, ..Default::default() }
    }

    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    pub fn push(&mut self, s: &[f64], a: usize, r: f64, s2: &[f64], done: bool) {
        debug_assert_eq!(s.len(), self.dim);
        self.states.extend_from_slice(s);
        self.actions.push(a);
        self.rewards.push(r);
        self.next_states.extend_from_slice(s2);
        self.dones.push(done);
    }

    pub fn get(&self, i: usize) -> (&[f64], usize, f64, &[f64], bool) {
        let r = i * self.dim..(i + 1) * self.dim;
        (&self.states[r.clone()], self.actions[i], self.rewards[i], &self.next_states[r], self.dones[i])
    }

    /// Columns `dim × batch` of the sampled states and next states.
    fn batch(&self, idx: &[usize]) -> (Tensor, Tensor) {
        let b = idx.len();
        let mut s = vec![0.0; self.dim * b];
        let mut s2 = vec![0.0; self.dim * b];
        for (j, &i) in idx.iter().enumerate() {
            for d in 0..self.dim {
                s[d * b + j] = self.states[i * self.dim + d];
                s2[d * b + j] = self.next_states[i * self.dim + d];
            }
        }
        (Tensor::new(self.dim, b, s), Tensor::new(self.dim, b, s2))
    }
}

struct Episode<S: Simulator> {
    hidden: S::Hidden,
    state: State,
    t: usize,
}

fn fresh<S: Simulator, R: Rng>(sim: &S, theta: &[f64], rng: &mut R) -> Episode<S> {
    let (hidden, state, _) = sim.reset(theta, rng);
    Episode { hidden, state, t: 0 }
}

/// Soft double DQN on belief states simulated under θ.
///
/// The target is r + γ Σ_{a′} softmax(β Q_online(s′))_{a′} Q_target(s′, a′);
/// episodes are cut at the horizon but always bootstrapped. Passing `warm`
/// starts from an existing network instead of a fresh initialisation.
pub fn soft_ddqn<S: Simulator>(
    sim: &S,
    theta: &[f64],
    cfg: &DdqnConfig,
    seed_: u64,
    warm: Option<&Mlp>,
) -> Result<SolveResult, SolverError> {
    let mut rng = seed::child_rng(seed_, "ddqn", 0);
    let (_, s0, _) = sim.reset(theta, &mut seed::child_rng(seed_, "ddqn-probe", 0));
    let dim = s0.belief().len();
    let na = sim.n_actions();
    let mut sizes = vec![dim];
    sizes.extend(&cfg.hidden);
    sizes.push(na);
    let mut online = match warm {
        Some(net) if net.sizes == sizes => net.clone(),
        Some(net) => {
            return Err(SolverError::Config(format!("warm-start network {:?} does not match {sizes:?}", net.sizes)))
        }
        None => Mlp::new(&sizes, &mut seed::child_rng(seed_, "ddqn-init", 0)),
    };
    let mut target = online.clone();
    let mut adam = Adam::new(online.n_params(), cfg.lr);
    let mut buffer = ReplayBuffer::new(dim);
    let mut ep = fresh(sim, theta, &mut rng);

    let act = |ep: &mut Episode<S>, a: usize, buffer: &mut ReplayBuffer, rng: &mut rand_chacha::ChaCha8Rng| {
        let tr = sim.step(theta, &mut ep.hidden, &ep.state, a, rng)?;
        buffer.push(ep.state.belief(), a, tr.reward, tr.next_state.belief(), false);
        ep.state = tr.next_state;
        ep.t += 1;
        if ep.t >= sim.horizon() {
            *ep = fresh(sim, theta, rng);
        }
        Ok::<_, SolverError>(())
    };

    for _ in 0..cfg.random_steps {
        let a = rng.gen_range(0..na);
        act(&mut ep, a, &mut buffer, &mut rng)?;
    }

    let mut recent = Vec::with_capacity(100);
    for step in 0..cfg.train_steps {
        let probs = softmax(&online.forward_vec(ep.state.belief()), cfg.beta);
        let a = sample_index(&probs, &mut rng);
        act(&mut ep, a, &mut buffer, &mut rng)?;

        let idx: Vec<usize> = (0..cfg.batch).map(|_| rng.gen_range(0..buffer.len())).collect();
        let (s, s2) = buffer.batch(&idx);
        let b = idx.len();
        let q_next_online = online.forward(&s2);
        let q_next_target = target.forward(&s2);
        let mut mask = vec![0.0; na * b];
        let mut y = vec![0.0; na * b];
        for (j, &i) in idx.iter().enumerate() {
            let (_, a, r, _, done) = buffer.get(i);
            let col_online: Vec<f64> = (0..na).map(|k| q_next_online.data[k * b + j]).collect();
            let pi = softmax(&col_online, cfg.beta);
            let v: f64 = (0..na).map(|k| pi[k] * q_next_target.data[k * b + j]).sum();
            let cont = if done { 0.0 } else { cfg.gamma * v };
            mask[a * b + j] = 1.0;
            y[a * b + j] = r + cont;
        }

        let mut tape = Tape::new();
        let vars = tape.params(&online.params);
        let x = tape.leaf(s);
        let q = online.record(&mut tape, &vars, x)?;
        let yv = tape.leaf(Tensor::new(na, b, y));
        let mv = tape.leaf(Tensor::new(na, b, mask));
        let diff = tape.sub(q, yv)?;
        let sq = tape.square(diff);
        let masked = tape.mul(sq, mv)?;
        let total = tape.sum(masked);
        let loss = tape.scale(total, 1.0 / b as f64);
        let lv = tape.scalar_value(loss);
        if !lv.is_finite() {
            return Err(SolverError::NonFinite { step, detail: format!("TD loss {lv}") });
        }
        let grads = tape.backward(loss)?;
        let g = vars.flat_grad(&grads);
        adam.step(online.params.values_mut(), &g);

        if recent.len() == 100 {
            recent.remove(0);
        }
        recent.push(lv);
        if (step + 1) % cfg.target_every == 0 {
            target = online.clone();
        }
    }
    let residual = if recent.is_empty() { 0.0 } else { recent.iter().sum::<f64>() / recent.len() as f64 };
    Ok(SolveResult {
        policy: SoftPolicy::new(QFunction::Network { net: online }, cfg.beta),
        iterations: cfg.train_steps,
        residual,
        residual_tail: recent,
    })
}
