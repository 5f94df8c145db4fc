//! Episode traces and the run metrics computed from them.

use serde::{Deserialize, Serialize};

use super::StatsError;
use crate::maze::Cell;

/// One executed action.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceStep {
    /// Cell the action was taken from.
    pub cell: Cell,
    /// Active option, `None` for flat agents.
    pub option: Option<usize>,
    pub action: usize,
    pub reward: f64,
    /// The active option terminated in the resulting state.
    pub terminated: bool,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct EpisodeTrace {
    pub steps: Vec<TraceStep>,
    pub success: bool,
    pub episode: usize,
    /// Global environment step count when the episode ended.
    pub global_step: usize,
}

impl EpisodeTrace {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn has_options(&self) -> bool {
        self.steps.iter().any(|s| s.option.is_some())
    }
}

pub fn path_length(trace: &EpisodeTrace) -> Result<usize, StatsError> {
    if trace.is_empty() {
        return Err(StatsError::EmptyTrace);
    }
    Ok(trace.len())
}

/// Mean steps per option segment, where a segment ends at a termination
/// event or at the end of the episode. `None` when the trace carries no
/// option annotations.
pub fn average_option_length(trace: &EpisodeTrace) -> Result<Option<f64>, StatsError> {
    if trace.is_empty() {
        return Err(StatsError::EmptyTrace);
    }
    if !trace.has_options() {
        return Ok(None);
    }
    let n = trace.len();
    let interior_terminations = trace.steps[..n - 1].iter().filter(|s| s.terminated).count();
    Ok(Some(n as f64 / (interior_terminations + 1) as f64))
}

/// Greedy evaluation taken during training.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalPoint {
    pub env_step: usize,
    /// Steps to the goal, `None` if the evaluation hit the horizon.
    pub path_length: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Convergence {
    Converged {
        env_step: usize,
        /// Index of the first evaluation of the stable window.
        eval_index: usize,
    },
    Censored,
}

impl Convergence {
    pub fn is_converged(&self) -> bool {
        matches!(self, Convergence::Converged { .. })
    }

    /// Convergence step, or `max_steps` for censored runs.
    pub fn step_or(&self, max_steps: usize) -> usize {
        match *self {
            Convergence::Converged { env_step, .. } => env_step,
            Convergence::Censored => max_steps,
        }
    }
}

pub const DEFAULT_WINDOW: usize = 10;
pub const DEFAULT_SLACK: usize = 2;

/// First evaluation `E` such that `E` and the evaluations after it, `window`
/// in total, all succeed with lengths within `slack` of that window's minimum.
pub fn detect_convergence(history: &[EvalPoint], window: usize, slack: usize) -> Convergence {
    if window == 0 || history.len() < window {
        return Convergence::Censored;
    }
    for start in 0..=history.len() - window {
        let lengths: Option<Vec<usize>> = history[start..start + window]
            .iter()
            .map(|e| e.path_length)
            .collect();
        if let Some(lengths) = lengths {
            let min = *lengths.iter().min().expect("window is nonempty");
            if lengths.iter().all(|&l| l <= min + slack) {
                return Convergence::Converged {
                    env_step: history[start].env_step,
                    eval_index: start,
                };
            }
        }
    }
    Convergence::Censored
}

/// Outcome of one training run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub convergence: Convergence,
    /// Greedy path length at the last evaluation, `None` if it failed.
    pub final_path_length: Option<usize>,
    /// Mean per-episode option length over all training episodes.
    pub mean_option_length: Option<f64>,
    pub seed: u64,
    pub config_digest: String,
    /// Environment steps actually consumed.
    pub env_steps: usize,
    pub episodes: usize,
}
