//! Run metrics, convergence detection and significance tests.

mod beta;
mod hypothesis;
mod metrics;

pub use beta::{f_upper_tail, ln_gamma, regularized_incomplete_beta, student_t_two_tailed};
pub use hypothesis::{anova_one_way, t_test_two_sample, Anova, TTest};
pub use metrics::{
    average_option_length, detect_convergence, path_length, Convergence, EpisodeTrace, EvalPoint,
    RunSummary, TraceStep, DEFAULT_SLACK, DEFAULT_WINDOW,
};

use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum StatsError {
    #[error("trace has no steps")]
    EmptyTrace,
    #[error("need at least {needed} samples, got {got}")]
    TooFewSamples { needed: usize, got: usize },
    #[error("need at least 2 groups, got {0}")]
    TooFewGroups(usize),
    #[error("non-finite sample")]
    NonFinite,
}
