//! Experiment configuration and the reproducibility manifest.

use std::collections::HashSet;
use std::fmt::{self, Write as _};
use std::path::PathBuf;
use std::str::FromStr;
use std::sync::Arc;

use thiserror::Error;

use crate::maze::{MazeSpec, BUILTIN_MAZES};
use crate::option_critic::{OcError, OcHyperParams};
use crate::ppo::{hidden_widths, PpoError, PpoHyperParams, PAPER_WIDTHS};
use crate::training::{RunConfig, CODE_VERSION};

pub const DEFAULT_SEEDS: [u64; 5] = [1, 2, 3, 4, 5];

pub const DESK_MAX_STEPS: usize = 150_000;
pub const DESK_EPSILON_DECAY: usize = 15_000;
pub const DESK_FREEZE_INTERVAL: usize = 200;

/// Learning rates and entropy weights of the desk-scale preset. Plain SGD at
/// α = 0.0005 does not move these networks far enough within 150k steps.
pub const DESK_OC_LEARNING_RATE: f64 = 0.01;
pub const DESK_OC_CRITIC_LEARNING_RATE: f64 = 0.2;
pub const DESK_OC_POLICY_LEARNING_RATE: f64 = 0.005;
pub const DESK_OC_ENTROPY: f64 = 0.05;
pub const DESK_PPO_LEARNING_RATE: f64 = 0.1;
pub const DESK_PPO_ROLLOUT: usize = 512;
pub const DESK_PPO_ENTROPY: f64 = 0.03;
/// A larger value weight lets the critic loss swamp the shared trunk.
pub const DESK_PPO_VALUE_COEF: f64 = 0.05;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("unknown experiment `{0}` (expected exp1, exp2, exp3 or exp4)")]
    UnknownExperiment(String),
    #[error("seed list is empty")]
    NoSeeds,
    #[error("seed {0} appears more than once")]
    DuplicateSeed(u64),
    #[error("no mazes selected")]
    NoMazes,
    #[error("phi list is empty")]
    NoPhi,
    #[error("phi values must be finite and non-negative, got {0}")]
    BadPhi(f64),
    #[error("unknown maze `{0}`")]
    UnknownMaze(String),
    #[error(transparent)]
    Oc(#[from] OcError),
    #[error(transparent)]
    Ppo(#[from] PpoError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ExperimentId {
    Exp1,
    Exp2,
    Exp3,
    Exp4,
}

impl ExperimentId {
    pub const ALL: [ExperimentId; 4] = [Self::Exp1, Self::Exp2, Self::Exp3, Self::Exp4];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Exp1 => "exp1",
            Self::Exp2 => "exp2",
            Self::Exp3 => "exp3",
            Self::Exp4 => "exp4",
        }
    }
}

impl fmt::Display for ExperimentId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ExperimentId {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|e| e.as_str() == s)
            .ok_or_else(|| ConfigError::UnknownExperiment(s.to_string()))
    }
}

/// 0.00, 0.01, …, 0.10.
pub fn default_phi_sweep() -> Vec<f64> {
    (0..=10).map(|k| k as f64 / 100.0).collect()
}

pub fn builtin_maze(name: &str) -> Result<Arc<MazeSpec>, ConfigError> {
    MazeSpec::builtin(name)
        .map(Arc::new)
        .ok_or_else(|| ConfigError::UnknownMaze(name.to_string()))
}

#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub experiment: ExperimentId,
    pub mazes: Vec<Arc<MazeSpec>>,
    pub seeds: Vec<u64>,
    pub run: RunConfig,
    pub oc: OcHyperParams,
    pub ppo: PpoHyperParams,
    /// φ values swept by experiment 4.
    pub phi_list: Vec<f64>,
    pub out_dir: Option<PathBuf>,
    pub desk_scale: bool,
    pub paper_widths: bool,
}

impl ExperimentConfig {
    /// Defaults for `experiment`: all three experiment mazes for exp1,
    /// four-rooms otherwise.
    pub fn new(experiment: ExperimentId) -> Self {
        let names: &[&str] = match experiment {
            ExperimentId::Exp1 => &BUILTIN_MAZES,
            _ => &["four-rooms"],
        };
        Self {
            experiment,
            mazes: names.iter().map(|n| builtin_maze(n).expect("built-in")).collect(),
            seeds: DEFAULT_SEEDS.to_vec(),
            run: RunConfig::default(),
            oc: OcHyperParams::default(),
            ppo: PpoHyperParams::default(),
            phi_list: default_phi_sweep(),
            out_dir: None,
            desk_scale: false,
            paper_widths: false,
        }
    }

    /// Shorter budget and schedules, plus the desk learning rates and PPO
    /// rollout, entropy and value weights.
    pub fn with_desk_scale(mut self) -> Self {
        self.desk_scale = true;
        self.run.max_steps = DESK_MAX_STEPS;
        apply_desk_oc(&mut self.oc);
        self.ppo.epsilon_decay_steps = DESK_EPSILON_DECAY;
        self.ppo.learning_rate = DESK_PPO_LEARNING_RATE;
        self.ppo.rollout_steps = DESK_PPO_ROLLOUT;
        self.ppo.entropy_coef = DESK_PPO_ENTROPY;
        self.ppo.value_coef = DESK_PPO_VALUE_COEF;
        self
    }

    pub fn with_paper_widths(mut self) -> Self {
        self.paper_widths = true;
        self.ppo.hidden = hidden_widths(PAPER_WIDTHS);
        self
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.seeds.is_empty() {
            return Err(ConfigError::NoSeeds);
        }
        let mut seen = HashSet::new();
        if let Some(&dup) = self.seeds.iter().find(|s| !seen.insert(**s)) {
            return Err(ConfigError::DuplicateSeed(dup));
        }
        if self.mazes.is_empty() {
            return Err(ConfigError::NoMazes);
        }
        if self.experiment == ExperimentId::Exp4 && self.phi_list.is_empty() {
            return Err(ConfigError::NoPhi);
        }
        if let Some(&bad) = self.phi_list.iter().find(|p| !(p.is_finite() && **p >= 0.0)) {
            return Err(ConfigError::BadPhi(bad));
        }
        self.oc.validate()?;
        self.ppo.validate()?;
        Ok(())
    }

    /// `key=value` lines sufficient to re-run the experiment.
    pub fn manifest(&self) -> String {
        let join = |xs: Vec<String>| xs.join(",");
        let mut out = String::new();
        let mut put = |k: &str, v: String| {
            let _ = writeln!(out, "{k}={v}");
        };
        let oc = &self.oc;
        let ppo = &self.ppo;
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        put("code_version", CODE_VERSION.to_string());
        put("experiment", self.experiment.to_string());
        put("mazes", join(self.mazes.iter().map(|m| m.name().to_string()).collect()));
        put("seeds", join(self.seeds.iter().map(u64::to_string).collect()));
        put("max_steps", self.run.max_steps.to_string());
        put("desk_scale", self.desk_scale.to_string());
        put("paper_widths", self.paper_widths.to_string());
        put("eval_interval", self.run.eval_interval.to_string());
        put("window", self.run.window.to_string());
        put("slack", self.run.slack.to_string());
        put("stop_on_convergence", self.run.stop_on_convergence.to_string());
        put("horizon", self.run.horizon.to_string());
        put("observation", format!("{:?}", self.run.observation).to_lowercase());
        put("phi_list", join(self.phi_list.iter().map(f64::to_string).collect()));
        put("oc.learning_rate", oc.learning_rate.to_string());
        put("oc.critic_learning_rate", opt(oc.critic_learning_rate));
        put("oc.policy_learning_rate", opt(oc.policy_learning_rate));
        put("oc.termination_learning_rate", opt(oc.termination_learning_rate));
        put("oc.gamma", oc.gamma.to_string());
        put("oc.phi", oc.phi.to_string());
        put("oc.entropy_weight", oc.entropy_weight.to_string());
        put("oc.num_options", oc.num_options.to_string());
        put("oc.update_frequency", oc.update_frequency.to_string());
        put("oc.freeze_interval", oc.freeze_interval.to_string());
        put("oc.max_history", oc.max_history.to_string());
        put("oc.batch_size", oc.batch_size.to_string());
        put("oc.epsilon_decay_steps", oc.epsilon_decay_steps.to_string());
        put("oc.temperature", oc.temperature.to_string());
        put("oc.clip_norm", opt(oc.clip_norm));
        put("oc.hidden", join(oc.hidden.iter().map(usize::to_string).collect()));
        put("ppo.learning_rate", ppo.learning_rate.to_string());
        put("ppo.gamma", ppo.gamma.to_string());
        put("ppo.clip_epsilon", ppo.clip_epsilon.to_string());
        put("ppo.rollout_steps", ppo.rollout_steps.to_string());
        put("ppo.epochs", ppo.epochs.to_string());
        put("ppo.minibatch_size", ppo.minibatch_size.to_string());
        put("ppo.value_coef", ppo.value_coef.to_string());
        put("ppo.entropy_coef", ppo.entropy_coef.to_string());
        put("ppo.epsilon_decay_steps", ppo.epsilon_decay_steps.to_string());
        put("ppo.clip_norm", opt(ppo.clip_norm));
        put("ppo.hidden", join(ppo.hidden.iter().map(usize::to_string).collect()));
        out
    }
}

/// Desk-scale schedule and learning rates for an Option-Critic config.
pub fn apply_desk_oc(oc: &mut OcHyperParams) {
    oc.epsilon_decay_steps = DESK_EPSILON_DECAY;
    oc.freeze_interval = DESK_FREEZE_INTERVAL;
    oc.learning_rate = DESK_OC_LEARNING_RATE;
    oc.critic_learning_rate = Some(DESK_OC_CRITIC_LEARNING_RATE);
    oc.policy_learning_rate = Some(DESK_OC_POLICY_LEARNING_RATE);
    oc.entropy_weight = DESK_OC_ENTROPY;
}

/// Parse a manifest back into key/value pairs.
pub fn parse_manifest(text: &str) -> Vec<(String, String)> {
    text.lines()
        .filter_map(|l| l.split_once('='))
        .map(|(k, v)| (k.to_string(), v.to_string()))
        .collect()
}
