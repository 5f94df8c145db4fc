//! Flat PPO baseline: one actor-critic network, clipped surrogate updates over
//! shuffled minibatches, and ε-greedy exploration around the sampled policy.

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::Rng;
use thiserror::Error;

use crate::maze::{Cell, EnvError, MazeEnv, Observation, NUM_ACTIONS};
use crate::nn::{log_softmax, Activation, Direction, HeadSpec, Network, NetworkSpec, NnError, SgdConfig};
use crate::option_critic::{argmax, epsilon_at, sample_index};
use crate::stats::{EpisodeTrace, TraceStep};

pub const POLICY_HEAD: &str = "policy";
pub const VALUE_HEAD: &str = "value";

/// Hidden widths `(first, rest)` used by default.
pub const DESK_WIDTHS: (usize, usize) = (128, 256);
/// Hidden widths of the large configuration.
pub const PAPER_WIDTHS: (usize, usize) = (256, 512);

#[derive(Debug, Error)]
pub enum PpoError {
    #[error("invalid hyper-parameters: {0}")]
    InvalidHyper(String),
    #[error(transparent)]
    Network(#[from] NnError),
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error("non-finite loss in epoch {epoch}, minibatch {minibatch}")]
    NonFiniteLoss { epoch: usize, minibatch: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct PpoHyperParams {
    pub learning_rate: f64,
    pub gamma: f64,
    pub clip_epsilon: f64,
    pub rollout_steps: usize,
    pub epochs: usize,
    pub minibatch_size: usize,
    pub value_coef: f64,
    pub entropy_coef: f64,
    pub epsilon_decay_steps: usize,
    pub clip_norm: Option<f64>,
    pub hidden: Vec<usize>,
}

impl Default for PpoHyperParams {
    fn default() -> Self {
        Self {
            learning_rate: 0.0005,
            gamma: 0.99,
            clip_epsilon: 0.2,
            rollout_steps: 1024,
            epochs: 4,
            minibatch_size: 32,
            value_coef: 0.5,
            entropy_coef: 0.01,
            epsilon_decay_steps: 50_000,
            clip_norm: Some(5.0),
            hidden: hidden_widths(DESK_WIDTHS),
        }
    }
}

/// Three ReLU layers `[first, rest, rest]`; with the output heads that makes
/// four dense layers.
pub fn hidden_widths((first, rest): (usize, usize)) -> Vec<usize> {
    vec![first, rest, rest]
}

impl PpoHyperParams {
    pub fn validate(&self) -> Result<(), PpoError> {
        let bad = |msg: &str| Err(PpoError::InvalidHyper(msg.to_string()));
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning rate must be positive");
        }
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return bad("gamma must lie in (0, 1)");
        }
        if !(self.clip_epsilon > 0.0 && self.clip_epsilon < 1.0) {
            return bad("clip epsilon must lie in (0, 1)");
        }
        if !(self.value_coef >= 0.0 && self.entropy_coef >= 0.0) {
            return bad("loss coefficients must be non-negative");
        }
        if self.clip_norm.is_some_and(|c| !(c > 0.0)) {
            return bad("clip norm must be positive");
        }
        if self.rollout_steps == 0 || self.minibatch_size == 0 || self.epsilon_decay_steps == 0 {
            return bad("rollout length, minibatch size and epsilon decay must be positive");
        }
        if self.hidden.is_empty() {
            return bad("at least one hidden layer is required");
        }
        Ok(())
    }

    pub fn network_spec(&self, input_dim: usize, num_actions: usize) -> NetworkSpec {
        NetworkSpec {
            input_dim,
            hidden: self.hidden.clone(),
            heads: vec![
                HeadSpec::new(
                    POLICY_HEAD,
                    num_actions,
                    Activation::Softmax {
                        groups: 1,
                        temperature: 1.0,
                    },
                ),
                HeadSpec::new(VALUE_HEAD, 1, Activation::Linear),
            ],
        }
    }
}

/// `min(r·A, clip(r, 1−ε, 1+ε)·A)`.
pub fn clipped_surrogate(ratio: f64, advantage: f64, clip_epsilon: f64) -> f64 {
    let clipped = ratio.clamp(1.0 - clip_epsilon, 1.0 + clip_epsilon);
    (ratio * advantage).min(clipped * advantage)
}

#[derive(Debug, Clone, PartialEq)]
pub struct PpoModel {
    net: Network,
    policy: usize,
    value: usize,
}

impl PpoModel {
    pub fn new<R: Rng + ?Sized>(spec: NetworkSpec, rng: &mut R) -> Result<Self, PpoError> {
        Self::from_network(Network::new(spec, rng)?)
    }

    pub fn from_network(net: Network) -> Result<Self, PpoError> {
        let policy = net.head_index(POLICY_HEAD)?;
        let value = net.head_index(VALUE_HEAD)?;
        if net.spec().heads[value].output_dim != 1 {
            return Err(PpoError::InvalidHyper("value head must be scalar".into()));
        }
        Ok(Self { net, policy, value })
    }

    pub fn network(&self) -> &Network {
        &self.net
    }

    pub fn network_mut(&mut self) -> &mut Network {
        &mut self.net
    }

    pub fn num_actions(&self) -> usize {
        self.net.spec().heads[self.policy].output_dim
    }

    pub fn parameter_count(&self) -> usize {
        self.net.parameter_count()
    }

    /// Action distribution and state value.
    pub fn evaluate(&self, observation: &Observation) -> Result<(Vec<f64>, f64), PpoError> {
        let cache = self.net.forward_one(observation.as_slice())?;
        let probs = cache.head(self.policy).row(0).to_vec();
        Ok((probs, cache.head(self.value)[[0, 0]]))
    }

    pub fn action_probabilities(&self, observation: &Observation) -> Result<Vec<f64>, PpoError> {
        Ok(self.evaluate(observation)?.0)
    }

    pub fn value(&self, observation: &Observation) -> Result<f64, PpoError> {
        Ok(self.evaluate(observation)?.1)
    }

    /// Mean probability of `action` over `observations`.
    pub fn mean_probability(&self, observations: &[Observation], action: usize) -> Result<f64, PpoError> {
        let input = stack(observations.iter());
        let cache = self.net.forward(input.view())?;
        Ok(cache.head(self.policy).column(action).mean().unwrap_or(0.0))
    }
}

fn stack<'a>(observations: impl ExactSizeIterator<Item = &'a Observation>) -> Array2<f64> {
    let rows: Vec<&Observation> = observations.collect();
    let dim = rows.first().map_or(0, |o| o.len());
    let mut input = Array2::zeros((rows.len(), dim));
    for (mut row, obs) in input.rows_mut().into_iter().zip(rows) {
        row.assign(&ndarray::ArrayView1::from(obs.as_slice()));
    }
    input
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EpsilonSchedule {
    Constant(f64),
    /// [`epsilon_at`] of the global step.
    Linear { decay_steps: usize },
}

impl EpsilonSchedule {
    pub fn at(self, step: usize) -> f64 {
        match self {
            EpsilonSchedule::Constant(e) => e,
            EpsilonSchedule::Linear { decay_steps } => epsilon_at(step, decay_steps),
        }
    }
}

/// One collected transition.
#[derive(Debug, Clone, PartialEq)]
pub struct PpoStep {
    pub observation: Observation,
    pub cell: Cell,
    pub action: usize,
    /// Policy log-probability of `action`, even when ε forced it.
    pub log_prob: f64,
    pub value: f64,
    pub reward: f64,
    /// The goal was reached.
    pub terminal: bool,
    /// `V(s')` when the episode segment stops here without reaching the goal
    /// (horizon or end of rollout).
    pub bootstrap: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct RolloutBatch {
    pub steps: Vec<PpoStep>,
    /// Filled by [`compute_returns_advantages`].
    pub returns: Vec<f64>,
    pub advantages: Vec<f64>,
    /// Episodes that finished during the rollout, with ε at their last step.
    pub episodes: Vec<(EpisodeTrace, f64)>,
}

impl RolloutBatch {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }
}

/// Environment plus the unfinished episode, carried across rollouts.
#[derive(Debug, Clone)]
pub struct RolloutCursor {
    env: MazeEnv,
    observation: Observation,
    partial: Vec<TraceStep>,
    global_step: usize,
}

impl RolloutCursor {
    pub fn new(mut env: MazeEnv) -> Self {
        let observation = env.reset();
        Self {
            env,
            observation,
            partial: Vec::new(),
            global_step: 0,
        }
    }

    pub fn global_step(&self) -> usize {
        self.global_step
    }

    pub fn env(&self) -> &MazeEnv {
        &self.env
    }
}

/// Run `steps` environment transitions, resetting at episode ends. With
/// probability ε the action is uniform, otherwise sampled from the policy.
pub fn collect_rollout<R: Rng + ?Sized>(
    model: &PpoModel,
    cursor: &mut RolloutCursor,
    steps: usize,
    epsilon: EpsilonSchedule,
    rng: &mut R,
) -> Result<RolloutBatch, PpoError> {
    let mut batch = RolloutBatch::default();
    for i in 0..steps {
        let eps = epsilon.at(cursor.global_step);
        let (probs, value) = model.evaluate(&cursor.observation)?;
        let action = if rng.gen::<f64>() < eps {
            rng.gen_range(0..probs.len())
        } else {
            sample_index(&probs, rng)
        };
        let cell = cursor.env.state().cell;
        let outcome = cursor.env.step(action)?;
        cursor.global_step += 1;
        let next_observation = cursor.env.observe();
        let last = i + 1 == steps;
        let bootstrap = if !outcome.reached_goal && (outcome.done || last) {
            Some(model.value(&next_observation)?)
        } else {
            None
        };
        batch.steps.push(PpoStep {
            observation: std::mem::replace(&mut cursor.observation, next_observation),
            cell,
            action,
            log_prob: probs[action].ln(),
            value,
            reward: outcome.reward,
            terminal: outcome.reached_goal,
            bootstrap,
        });
        cursor.partial.push(TraceStep {
            cell,
            option: None,
            action,
            reward: outcome.reward,
            terminated: false,
        });
        if outcome.done {
            let trace = EpisodeTrace {
                steps: std::mem::take(&mut cursor.partial),
                success: outcome.reached_goal,
                episode: 0,
                global_step: cursor.global_step,
            };
            batch.episodes.push((trace, eps));
            cursor.observation = cursor.env.reset();
        }
    }
    Ok(batch)
}

/// Discounted returns-to-go, cut at goal transitions and bootstrapped from
/// `V(s')` where a segment is truncated; advantages `G − V`, normalized when
/// the batch has at least two entries.
pub fn compute_returns_advantages(batch: &mut RolloutBatch, gamma: f64) {
    let n = batch.steps.len();
    let mut returns = vec![0.0; n];
    let mut next = 0.0;
    for (t, step) in batch.steps.iter().enumerate().rev() {
        let tail = if step.terminal {
            0.0
        } else if let Some(v) = step.bootstrap {
            v
        } else {
            next
        };
        returns[t] = step.reward + gamma * tail;
        next = returns[t];
    }
    let mut advantages: Vec<f64> = returns.iter().zip(&batch.steps).map(|(g, s)| g - s.value).collect();
    normalize(&mut advantages);
    batch.returns = returns;
    batch.advantages = advantages;
}

/// Shift to mean 0 and scale to unit population standard deviation. A
/// constant vector becomes all zeros; fewer than two entries are untouched.
pub fn normalize(values: &mut [f64]) {
    if values.len() < 2 {
        return;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    let std = var.sqrt();
    for v in values.iter_mut() {
        *v -= mean;
        if std > 1e-12 {
            *v /= std;
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LossSummary {
    /// Mean clipped surrogate over all minibatches.
    pub surrogate: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub updates: usize,
}

/// Gradient ascent on `surrogate − c_v·(V − G)² + c_e·H(π)`, averaged over
/// each minibatch, for `epochs` shuffled passes over the batch.
pub fn ppo_update<R: Rng + ?Sized>(
    model: &mut PpoModel,
    batch: &RolloutBatch,
    hyper: &PpoHyperParams,
    rng: &mut R,
) -> Result<LossSummary, PpoError> {
    assert_eq!(batch.returns.len(), batch.len(), "returns not computed");
    let mut summary = LossSummary::default();
    if batch.is_empty() {
        return Ok(summary);
    }
    let sgd = SgdConfig {
        learning_rate: hyper.learning_rate,
        clip_norm: hyper.clip_norm,
    };
    let mut order: Vec<usize> = (0..batch.len()).collect();
    for epoch in 0..hyper.epochs {
        order.shuffle(rng);
        for (minibatch, idx) in order.chunks(hyper.minibatch_size).enumerate() {
            let (surrogate, value_loss, entropy) = minibatch_step(model, batch, idx, hyper, sgd)
                .and_then(|losses| {
                    let finite = [losses.0, losses.1, losses.2].iter().all(|v| v.is_finite());
                    finite.then_some(losses)
                })
                .ok_or(PpoError::NonFiniteLoss { epoch, minibatch })?;
            summary.surrogate += surrogate;
            summary.value_loss += value_loss;
            summary.entropy += entropy;
            summary.updates += 1;
        }
    }
    if summary.updates > 0 {
        let k = summary.updates as f64;
        summary.surrogate /= k;
        summary.value_loss /= k;
        summary.entropy /= k;
    }
    Ok(summary)
}

/// One gradient step; returns the minibatch losses before the step, or
/// `None` when anything non-finite shows up.
fn minibatch_step(
    model: &mut PpoModel,
    batch: &RolloutBatch,
    idx: &[usize],
    hyper: &PpoHyperParams,
    sgd: SgdConfig,
) -> Option<(f64, f64, f64)> {
    let m = idx.len() as f64;
    let input = stack(idx.iter().map(|&i| &batch.steps[i].observation));
    let cache = model.net.forward(input.view()).ok()?;
    let logits = cache.head_logits(model.policy);
    let values = cache.head(model.value);
    let num_actions = logits.ncols();
    let mut d_logits = Array2::zeros((idx.len(), num_actions));
    let mut d_value = Array2::zeros((idx.len(), 1));
    let (mut surrogate, mut value_loss, mut entropy) = (0.0, 0.0, 0.0);
    for (row, &i) in idx.iter().enumerate() {
        let step = &batch.steps[i];
        let advantage = batch.advantages[i];
        let log_probs = log_softmax(logits.row(row).as_slice()?, 1.0);
        let probs: Vec<f64> = log_probs.iter().map(|l| l.exp()).collect();
        let h = -probs.iter().zip(&log_probs).map(|(p, l)| p * l).sum::<f64>();
        let ratio = (log_probs[step.action] - step.log_prob).exp();
        let objective = clipped_surrogate(ratio, advantage, hyper.clip_epsilon);
        // The unclipped branch is the active one exactly when it attains the min.
        let surrogate_active = ratio * advantage <= objective;
        for a in 0..num_actions {
            let onehot = if a == step.action { 1.0 } else { 0.0 };
            let mut g = -hyper.entropy_coef * probs[a] * (log_probs[a] + h);
            if surrogate_active {
                g += advantage * ratio * (onehot - probs[a]);
            }
            d_logits[[row, a]] = g / m;
        }
        let err = values[[row, 0]] - batch.returns[i];
        d_value[[row, 0]] = -2.0 * hyper.value_coef * err / m;
        surrogate += objective / m;
        value_loss += err * err / m;
        entropy += h / m;
    }
    let grads = model
        .net
        .backward_preactivation(&cache, &[(model.policy, d_logits), (model.value, d_value)])
        .ok()?;
    model.net.apply(grads, sgd, Direction::Ascent).ok()?;
    Some((surrogate, value_loss, entropy))
}

/// Argmax-action rollout from the start. Returns the path length (`None` at
/// the horizon) and the trace.
pub fn greedy_evaluate(model: &PpoModel, env: &mut MazeEnv) -> Result<(Option<usize>, EpisodeTrace), PpoError> {
    let mut observation = env.reset();
    let mut steps = Vec::new();
    loop {
        let cell = env.state().cell;
        let action = argmax(&model.action_probabilities(&observation)?);
        let outcome = env.step(action)?;
        steps.push(TraceStep {
            cell,
            option: None,
            action,
            reward: outcome.reward,
            terminated: false,
        });
        if outcome.done {
            let trace = EpisodeTrace {
                success: outcome.reached_goal,
                steps,
                ..Default::default()
            };
            return Ok((outcome.reached_goal.then_some(trace.len()), trace));
        }
        observation = env.observe();
    }
}

/// Default model for a maze environment.
pub fn default_model<R: Rng + ?Sized>(
    env: &MazeEnv,
    hyper: &PpoHyperParams,
    rng: &mut R,
) -> Result<PpoModel, PpoError> {
    hyper.validate()?;
    PpoModel::new(hyper.network_spec(env.observation_dim(), NUM_ACTIONS), rng)
}
