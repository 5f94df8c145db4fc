//! Option-Critic agent: intra-option policies, termination functions, an
//! ε-greedy policy over options and a critic with a frozen target copy.

mod buffer;

pub use buffer::{ReplayBuffer, Transition};

use ndarray::{Array2, ArrayView1};
use rand::distributions::{Distribution, WeightedIndex};
use rand::Rng;
use thiserror::Error;

use crate::harness::subgoal::{manual_subgoal_controller, ManualSubgoalPlan, MatchMode, PlanError};
use crate::maze::{Cell, EnvError, MazeEnv, MazeSpec, Observation, NUM_ACTIONS};
use crate::nn::{
    log_softmax, Activation, Direction, ForwardCache, HeadSpec, Network, NetworkSpec, NnError, SgdConfig,
};
use crate::stats::{EpisodeTrace, TraceStep};

pub const CRITIC_HEAD: &str = "critic";
pub const TERMINATION_HEAD: &str = "termination";
pub const POLICY_HEAD: &str = "policy";

#[derive(Debug, Error)]
pub enum OcError {
    #[error("invalid hyper-parameters: {0}")]
    InvalidHyper(String),
    #[error(transparent)]
    Network(#[from] NnError),
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Plan(#[from] PlanError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct OcHyperParams {
    /// α, used for every head unless overridden below.
    pub learning_rate: f64,
    pub critic_learning_rate: Option<f64>,
    pub policy_learning_rate: Option<f64>,
    pub termination_learning_rate: Option<f64>,
    pub gamma: f64,
    /// φ, the termination regularizer.
    pub phi: f64,
    pub entropy_weight: f64,
    pub num_options: usize,
    /// Environment steps between critic updates.
    pub update_frequency: usize,
    /// Critic updates between target syncs.
    pub freeze_interval: usize,
    pub horizon: usize,
    pub max_history: usize,
    pub batch_size: usize,
    pub epsilon_decay_steps: usize,
    pub temperature: f64,
    /// Global-norm gradient clip applied to every update.
    pub clip_norm: Option<f64>,
    pub hidden: Vec<usize>,
    pub terminate_every_step: bool,
    pub manual_subgoals: Option<Vec<Cell>>,
    pub subgoal_match: MatchMode,
}

impl Default for OcHyperParams {
    fn default() -> Self {
        Self {
            learning_rate: 0.0005,
            critic_learning_rate: None,
            policy_learning_rate: None,
            termination_learning_rate: None,
            gamma: 0.99,
            phi: 0.01,
            entropy_weight: 0.01,
            num_options: 4,
            update_frequency: 4,
            freeze_interval: 200,
            horizon: 1000,
            max_history: 10_000,
            batch_size: 32,
            epsilon_decay_steps: 50_000,
            temperature: 1.0,
            clip_norm: Some(5.0),
            hidden: vec![32, 64],
            terminate_every_step: false,
            manual_subgoals: None,
            subgoal_match: MatchMode::ExactCell,
        }
    }
}

impl OcHyperParams {
    pub fn validate(&self) -> Result<(), OcError> {
        let bad = |msg: &str| Err(OcError::InvalidHyper(msg.to_string()));
        let rates = [
            Some(self.learning_rate),
            self.critic_learning_rate,
            self.policy_learning_rate,
            self.termination_learning_rate,
        ];
        if rates.iter().flatten().any(|&r| !(r > 0.0 && r.is_finite())) {
            return bad("learning rates must be positive");
        }
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return bad("gamma must lie in (0, 1)");
        }
        if !(self.phi >= 0.0 && self.phi.is_finite()) {
            return bad("phi must be non-negative");
        }
        if !(self.entropy_weight >= 0.0 && self.entropy_weight.is_finite()) {
            return bad("entropy weight must be non-negative");
        }
        if !(self.temperature > 0.0 && self.temperature.is_finite()) {
            return bad("temperature must be positive");
        }
        if self.clip_norm.is_some_and(|c| !(c > 0.0)) {
            return bad("clip norm must be positive");
        }
        let counts = [
            ("num_options", self.num_options),
            ("update_frequency", self.update_frequency),
            ("freeze_interval", self.freeze_interval),
            ("horizon", self.horizon),
            ("max_history", self.max_history),
            ("batch_size", self.batch_size),
            ("epsilon_decay_steps", self.epsilon_decay_steps),
        ];
        if let Some((name, _)) = counts.iter().find(|(_, v)| *v == 0) {
            return Err(OcError::InvalidHyper(format!("{name} must be positive")));
        }
        if self.batch_size > self.max_history {
            return bad("batch size exceeds replay capacity");
        }
        if self.terminate_every_step && self.manual_subgoals.is_some() {
            return bad("terminate_every_step and manual sub-goals are exclusive");
        }
        Ok(())
    }

    pub fn critic_lr(&self) -> f64 {
        self.critic_learning_rate.unwrap_or(self.learning_rate)
    }

    pub fn policy_lr(&self) -> f64 {
        self.policy_learning_rate.unwrap_or(self.learning_rate)
    }

    pub fn termination_lr(&self) -> f64 {
        self.termination_learning_rate.unwrap_or(self.learning_rate)
    }

    /// Trunk plus critic, termination and policy heads.
    pub fn network_spec(&self, input_dim: usize, num_actions: usize) -> NetworkSpec {
        let n = self.num_options;
        NetworkSpec {
            input_dim,
            hidden: self.hidden.clone(),
            heads: vec![
                HeadSpec::new(CRITIC_HEAD, n * num_actions, Activation::Linear),
                HeadSpec::new(TERMINATION_HEAD, n, Activation::Sigmoid),
                HeadSpec::new(
                    POLICY_HEAD,
                    n * num_actions,
                    Activation::Softmax {
                        groups: n,
                        temperature: self.temperature,
                    },
                ),
            ],
        }
    }

    fn sgd(&self, learning_rate: f64) -> SgdConfig {
        SgdConfig {
            learning_rate,
            clip_norm: self.clip_norm,
        }
    }
}

/// Linear decay from 1 at step 0 to 0 at `decay_steps`, then 0.
pub fn epsilon_at(step: usize, decay_steps: usize) -> f64 {
    assert!(decay_steps > 0, "decay_steps must be positive");
    (1.0 - step as f64 / decay_steps as f64).max(0.0)
}

/// Index of the largest value; the lowest index wins ties.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// `Q_Ω(s, ω) = Σ_a π(a|s, ω) Q_U(s, ω, a)` for every option of one state.
pub fn q_omega_from(critic: ArrayView1<f64>, policy: ArrayView1<f64>, num_options: usize) -> Vec<f64> {
    let width = critic.len() / num_options;
    (0..num_options)
        .map(|o| (o * width..(o + 1) * width).map(|j| critic[j] * policy[j]).sum())
        .collect()
}

/// Gradient with respect to one option's logits of
/// `q · log π(action) + entropy_weight · H(π)`, where `π = softmax(logits / T)`.
pub fn policy_logit_gradient(
    logits: &[f64],
    action: usize,
    q: f64,
    entropy_weight: f64,
    temperature: f64,
) -> Vec<f64> {
    let log_pi = log_softmax(logits, temperature);
    let pi: Vec<f64> = log_pi.iter().map(|l| l.exp()).collect();
    let entropy: f64 = -pi.iter().zip(&log_pi).map(|(p, l)| p * l).sum::<f64>();
    (0..logits.len())
        .map(|k| {
            let indicator = if k == action { 1.0 } else { 0.0 };
            let d_log_pi = (indicator - pi[k]) / temperature;
            let d_entropy = -pi[k] * (log_pi[k] + entropy) / temperature;
            q * d_log_pi + entropy_weight * d_entropy
        })
        .collect()
}

pub(crate) fn sample_index<R: Rng + ?Sized>(probs: &[f64], rng: &mut R) -> usize {
    WeightedIndex::new(probs)
        .expect("policy rows are valid distributions")
        .sample(rng)
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptionCriticModel {
    net: Network,
    target: Network,
    num_options: usize,
    num_actions: usize,
    critic: usize,
    termination: usize,
    policy: usize,
}

impl OptionCriticModel {
    pub fn new<R: Rng + ?Sized>(
        input_dim: usize,
        hyper: &OcHyperParams,
        rng: &mut R,
    ) -> Result<Self, OcError> {
        hyper.validate()?;
        let net = Network::new(hyper.network_spec(input_dim, NUM_ACTIONS), rng)?;
        Self::from_network(net)
    }

    /// Wrap an existing network with `critic`, `termination` and `policy`
    /// heads. The target copy starts equal to the live critic.
    pub fn from_network(net: Network) -> Result<Self, OcError> {
        let critic = net.head_index(CRITIC_HEAD)?;
        let termination = net.head_index(TERMINATION_HEAD)?;
        let policy = net.head_index(POLICY_HEAD)?;
        let spec = net.spec();
        let num_options = spec.heads[termination].output_dim;
        let width = spec.heads[critic].output_dim;
        let policy_ok = matches!(
            spec.heads[policy].activation,
            Activation::Softmax { groups, .. } if groups == num_options
        );
        if num_options == 0
            || !width.is_multiple_of(num_options)
            || spec.heads[policy].output_dim != width
            || spec.heads[termination].activation != Activation::Sigmoid
            || !policy_ok
        {
            return Err(OcError::InvalidHyper("network heads do not form an option-critic".into()));
        }
        let target = net.subnetwork(&[CRITIC_HEAD])?;
        Ok(Self {
            net,
            target,
            num_options,
            num_actions: width / num_options,
            critic,
            termination,
            policy,
        })
    }

    pub fn network(&self) -> &Network {
        &self.net
    }

    pub fn network_mut(&mut self) -> &mut Network {
        &mut self.net
    }

    pub fn target(&self) -> &Network {
        &self.target
    }

    pub fn num_options(&self) -> usize {
        self.num_options
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    pub fn forward(&self, observation: &Observation) -> Result<ForwardCache, OcError> {
        Ok(self.net.forward_one(observation.as_slice())?)
    }

    fn action_range(&self, option: usize) -> std::ops::Range<usize> {
        option * self.num_actions..(option + 1) * self.num_actions
    }

    fn q_omega_cached(&self, cache: &ForwardCache, row: usize) -> Vec<f64> {
        q_omega_from(
            cache.head(self.critic).row(row),
            cache.head(self.policy).row(row),
            self.num_options,
        )
    }

    /// Option values of one state under the live critic.
    pub fn q_omega(&self, observation: &Observation) -> Result<Vec<f64>, OcError> {
        let cache = self.forward(observation)?;
        Ok(self.q_omega_cached(&cache, 0))
    }

    /// `Q_U(s, ω, ·)` for one option.
    pub fn action_values(&self, observation: &Observation, option: usize) -> Result<Vec<f64>, OcError> {
        let cache = self.forward(observation)?;
        let row = cache.head(self.critic).row(0);
        Ok(self.action_range(option).map(|j| row[j]).collect())
    }

    /// `π(·|s, ω)`.
    pub fn action_probabilities(&self, observation: &Observation, option: usize) -> Result<Vec<f64>, OcError> {
        let cache = self.forward(observation)?;
        Ok(self.policy_row(&cache, option))
    }

    fn policy_row(&self, cache: &ForwardCache, option: usize) -> Vec<f64> {
        let row = cache.head(self.policy).row(0);
        self.action_range(option).map(|j| row[j]).collect()
    }

    /// `β(s, ω)`.
    pub fn termination_probability(&self, observation: &Observation, option: usize) -> Result<f64, OcError> {
        let cache = self.forward(observation)?;
        Ok(cache.head(self.termination)[[0, option]])
    }

    /// ε-greedy over `Q_Ω`, ties to the lowest index.
    pub fn select_option<R: Rng + ?Sized>(
        &self,
        observation: &Observation,
        epsilon: f64,
        rng: &mut R,
    ) -> Result<usize, OcError> {
        if epsilon > 0.0 && rng.gen::<f64>() < epsilon {
            return Ok(rng.gen_range(0..self.num_options));
        }
        Ok(argmax(&self.q_omega(observation)?))
    }

    /// Sample from the option's policy.
    pub fn select_action<R: Rng + ?Sized>(
        &self,
        observation: &Observation,
        option: usize,
        rng: &mut R,
    ) -> Result<usize, OcError> {
        Ok(sample_index(&self.action_probabilities(observation, option)?, rng))
    }

    pub fn should_terminate<R: Rng + ?Sized>(
        &self,
        next_observation: &Observation,
        option: usize,
        rng: &mut R,
        terminate_every_step: bool,
    ) -> Result<bool, OcError> {
        if terminate_every_step {
            return Ok(true);
        }
        let beta = self.termination_probability(next_observation, option)?;
        Ok(rng.gen::<f64>() < beta)
    }

    fn stack(items: &[&Transition], next: bool) -> Array2<f64> {
        let dim = items[0].observation.len();
        let mut out = Array2::zeros((items.len(), dim));
        for (mut row, t) in out.rows_mut().into_iter().zip(items) {
            let obs = if next { &t.next_observation } else { &t.observation };
            row.assign(&ArrayView1::from(obs.as_slice()));
        }
        out
    }

    /// Bootstrapped targets `g_t` for a batch. `Q_Ω` in the bootstrap uses the
    /// frozen critic with the live policy; `β` comes from the live
    /// termination head, or is 1 under `terminate_every_step`.
    pub fn critic_targets(
        &self,
        batch: &[&Transition],
        gamma: f64,
        terminate_every_step: bool,
    ) -> Result<Vec<f64>, OcError> {
        if batch.is_empty() {
            return Ok(Vec::new());
        }
        let next = Self::stack(batch, true);
        let frozen = self.target.forward(next.view())?;
        let live = self.net.forward(next.view())?;
        Ok(batch
            .iter()
            .enumerate()
            .map(|(i, t)| {
                if t.terminal {
                    return t.reward;
                }
                let q = q_omega_from(frozen.head(0).row(i), live.head(self.policy).row(i), self.num_options);
                let bootstrap = match t.next_option {
                    Some(next_option) => q[next_option],
                    None => {
                        let beta = if terminate_every_step {
                            1.0
                        } else {
                            live.head(self.termination)[[i, t.option]]
                        };
                        let best = q.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                        (1.0 - beta) * q[t.option] + beta * best
                    }
                };
                t.reward + gamma * bootstrap
            })
            .collect())
    }

    pub fn critic_target(
        &self,
        transition: &Transition,
        gamma: f64,
        terminate_every_step: bool,
    ) -> Result<f64, OcError> {
        Ok(self.critic_targets(&[transition], gamma, terminate_every_step)?[0])
    }

    /// One descent step on the mean squared error between `Q_U(s, ω, a)` and
    /// `g_t`. Returns the loss measured before the step.
    pub fn update_critic(&mut self, batch: &[&Transition], hyper: &OcHyperParams) -> Result<f64, OcError> {
        if batch.is_empty() {
            return Ok(0.0);
        }
        let targets = self.critic_targets(batch, hyper.gamma, hyper.terminate_every_step)?;
        let states = Self::stack(batch, false);
        let cache = self.net.forward(states.view())?;
        let q = cache.head(self.critic);
        let n = batch.len() as f64;
        let mut dz = Array2::zeros(q.dim());
        let mut loss = 0.0;
        for (i, (t, g)) in batch.iter().zip(&targets).enumerate() {
            let j = t.option * self.num_actions + t.action;
            let diff = q[[i, j]] - g;
            loss += diff * diff;
            dz[[i, j]] = 2.0 * diff / n;
        }
        let loss = loss / n;
        if !loss.is_finite() {
            return Err(NnError::NonFinite("critic loss").into());
        }
        let grads = self.net.backward_preactivation(&cache, &[(self.critic, dz)])?;
        self.net.apply(grads, hyper.sgd(hyper.critic_lr()), Direction::Descent)?;
        Ok(loss)
    }

    /// Copy the live trunk and critic into the target when `update_counter`
    /// is a positive multiple of `freeze_interval`. Returns whether it copied.
    pub fn sync_target(&mut self, update_counter: usize, freeze_interval: usize) -> Result<bool, OcError> {
        if update_counter == 0 || !update_counter.is_multiple_of(freeze_interval) {
            return Ok(false);
        }
        self.target.copy_shared_from(&self.net)?;
        Ok(true)
    }

    /// Intra-option policy-gradient ascent step with entropy bonus.
    pub fn update_policy(
        &mut self,
        observation: &Observation,
        option: usize,
        action: usize,
        hyper: &OcHyperParams,
    ) -> Result<(), OcError> {
        let cache = self.forward(observation)?;
        self.policy_step(&cache, option, action, hyper)
    }

    fn policy_step(
        &mut self,
        cache: &ForwardCache,
        option: usize,
        action: usize,
        hyper: &OcHyperParams,
    ) -> Result<(), OcError> {
        let range = self.action_range(option);
        let q = cache.head(self.critic)[[0, range.start + action]];
        let logits: Vec<f64> = range.clone().map(|j| cache.head_logits(self.policy)[[0, j]]).collect();
        let row = policy_logit_gradient(&logits, action, q, hyper.entropy_weight, hyper.temperature);
        let mut dz = Array2::zeros((1, self.num_options * self.num_actions));
        for (j, g) in range.zip(row) {
            dz[[0, j]] = g;
        }
        let grads = self.net.backward_preactivation(cache, &[(self.policy, dz)])?;
        self.net.apply(grads, hyper.sgd(hyper.policy_lr()), Direction::Ascent)?;
        Ok(())
    }

    /// Termination descent step on `next_observation` with multiplier
    /// `Q_Ω(s', ω) − V_Ω(s') + φ` from the live critic.
    pub fn update_termination(
        &mut self,
        next_observation: &Observation,
        option: usize,
        hyper: &OcHyperParams,
    ) -> Result<(), OcError> {
        let cache = self.forward(next_observation)?;
        self.termination_step(&cache, option, hyper)
    }

    fn termination_step(&mut self, cache: &ForwardCache, option: usize, hyper: &OcHyperParams) -> Result<(), OcError> {
        let q = self.q_omega_cached(cache, 0);
        let v = q.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let multiplier = q[option] - v + hyper.phi;
        if multiplier == 0.0 {
            return Ok(());
        }
        let beta = cache.head(self.termination)[[0, option]];
        let mut dz = Array2::zeros((1, self.num_options));
        dz[[0, option]] = beta * (1.0 - beta) * multiplier;
        let grads = self.net.backward_preactivation(cache, &[(self.termination, dz)])?;
        self.net.apply(grads, hyper.sgd(hyper.termination_lr()), Direction::Descent)?;
        Ok(())
    }
}

/// How the active option ends.
#[derive(Debug, Clone, PartialEq)]
enum Control {
    Learned,
    EveryStep,
    Plan(ManualSubgoalPlan),
}

/// Model, replay memory and schedule counters of one training run.
#[derive(Debug, Clone)]
pub struct OptionCriticAgent {
    model: OptionCriticModel,
    buffer: ReplayBuffer,
    hyper: OcHyperParams,
    control: Control,
    critic_updates: usize,
    skipped_updates: usize,
}

impl OptionCriticAgent {
    pub fn new<R: Rng + ?Sized>(
        maze: &MazeSpec,
        input_dim: usize,
        hyper: OcHyperParams,
        rng: &mut R,
    ) -> Result<Self, OcError> {
        let model = OptionCriticModel::new(input_dim, &hyper, rng)?;
        Self::with_model(model, maze, hyper)
    }

    pub fn with_model(model: OptionCriticModel, maze: &MazeSpec, hyper: OcHyperParams) -> Result<Self, OcError> {
        hyper.validate()?;
        let control = match &hyper.manual_subgoals {
            Some(cells) => Control::Plan(ManualSubgoalPlan::new(
                cells.clone(),
                hyper.subgoal_match,
                maze,
                model.num_options(),
            )?),
            None if hyper.terminate_every_step => Control::EveryStep,
            None => Control::Learned,
        };
        Ok(Self {
            buffer: ReplayBuffer::new(hyper.max_history),
            model,
            hyper,
            control,
            critic_updates: 0,
            skipped_updates: 0,
        })
    }

    pub fn model(&self) -> &OptionCriticModel {
        &self.model
    }

    pub fn hyper(&self) -> &OcHyperParams {
        &self.hyper
    }

    pub fn buffer(&self) -> &ReplayBuffer {
        &self.buffer
    }

    pub fn critic_updates(&self) -> usize {
        self.critic_updates
    }

    /// Critic updates skipped because the buffer held less than a batch.
    pub fn skipped_updates(&self) -> usize {
        self.skipped_updates
    }

    /// Sample a batch and update the critic, syncing the target on schedule.
    /// Returns `None` (and changes nothing) while the buffer is underfull.
    pub fn update_critic<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Result<Option<f64>, OcError> {
        let Some(batch) = self.buffer.sample(self.hyper.batch_size, rng) else {
            self.skipped_updates += 1;
            return Ok(None);
        };
        let loss = self.model.update_critic(&batch, &self.hyper)?;
        self.critic_updates += 1;
        self.model.sync_target(self.critic_updates, self.hyper.freeze_interval)?;
        Ok(Some(loss))
    }

    fn first_option(&self) -> Option<usize> {
        match self.control {
            Control::Plan(_) => Some(0),
            _ => None,
        }
    }

    /// One training episode starting from `global_step`; returns its trace
    /// and the advanced step counter.
    pub fn run_episode<R: Rng + ?Sized>(
        &mut self,
        env: &mut MazeEnv,
        rng: &mut R,
        global_step: usize,
    ) -> Result<(EpisodeTrace, usize), OcError> {
        let mut global_step = global_step;
        let mut observation = env.reset();
        let mut active = self.first_option();
        let mut steps = Vec::new();
        let success;
        loop {
            let cell = env.state().cell;
            let option = match active {
                Some(o) => o,
                None => {
                    let eps = epsilon_at(global_step, self.hyper.epsilon_decay_steps);
                    self.model.select_option(&observation, eps, rng)?
                }
            };
            let cache = self.model.forward(&observation)?;
            let action = sample_index(&self.model.policy_row(&cache, option), rng);
            let outcome = env.step(action)?;
            let next_observation = env.observe();
            self.model.policy_step(&cache, option, action, &self.hyper)?;

            let next_cache = self.model.forward(&next_observation)?;
            let (terminated, next_option) = match &self.control {
                Control::Plan(plan) => {
                    let d = manual_subgoal_controller(plan, outcome.state.cell, option);
                    (d.terminate, Some(d.next_option))
                }
                Control::EveryStep => (true, None),
                Control::Learned if outcome.done => (false, None),
                Control::Learned => {
                    let beta = next_cache.head(self.model.termination)[[0, option]];
                    (rng.gen::<f64>() < beta, None)
                }
            };

            self.buffer.push(Transition {
                observation: observation.clone(),
                option,
                action,
                reward: outcome.reward,
                next_observation: next_observation.clone(),
                terminal: outcome.reached_goal,
                next_option,
            });
            if self.control == Control::Learned && !outcome.reached_goal {
                self.model.termination_step(&next_cache, option, &self.hyper)?;
            }
            global_step += 1;
            if global_step.is_multiple_of(self.hyper.update_frequency) {
                self.update_critic(rng)?;
            }

            steps.push(TraceStep {
                cell,
                option: Some(option),
                action,
                reward: outcome.reward,
                terminated,
            });
            if outcome.done {
                success = outcome.reached_goal;
                break;
            }
            active = match (&self.control, terminated) {
                (Control::Plan(_), _) => next_option,
                (_, true) => None,
                (_, false) => Some(option),
            };
            observation = next_observation;
        }
        Ok((
            EpisodeTrace {
                steps,
                success,
                episode: 0,
                global_step,
            },
            global_step,
        ))
    }

    /// Deterministic rollout: argmax option, argmax action, terminate iff
    /// `β > 0.5` (or per the variant's rule). Returns the path length, `None`
    /// on reaching the horizon, and the trace.
    pub fn greedy_evaluate(&self, env: &mut MazeEnv) -> Result<(Option<usize>, EpisodeTrace), OcError> {
        let mut observation = env.reset();
        let mut active = self.first_option();
        let mut steps = Vec::new();
        loop {
            let cell = env.state().cell;
            let cache = self.model.forward(&observation)?;
            let option = active.unwrap_or_else(|| argmax(&self.model.q_omega_cached(&cache, 0)));
            let action = argmax(&self.model.policy_row(&cache, option));
            let outcome = env.step(action)?;
            let next_observation = env.observe();
            let (terminated, next_option) = match &self.control {
                Control::Plan(plan) => {
                    let d = manual_subgoal_controller(plan, outcome.state.cell, option);
                    (d.terminate, Some(d.next_option))
                }
                Control::EveryStep => (true, None),
                Control::Learned => (
                    self.model.termination_probability(&next_observation, option)? > 0.5,
                    None,
                ),
            };
            steps.push(TraceStep {
                cell,
                option: Some(option),
                action,
                reward: outcome.reward,
                terminated,
            });
            if outcome.done {
                let trace = EpisodeTrace {
                    success: outcome.reached_goal,
                    steps,
                    ..Default::default()
                };
                let length = outcome.reached_goal.then_some(trace.len());
                return Ok((length, trace));
            }
            active = match (&self.control, terminated) {
                (Control::Plan(_), _) => next_option,
                (_, true) => None,
                (_, false) => Some(option),
            };
            observation = next_observation;
        }
    }
}
