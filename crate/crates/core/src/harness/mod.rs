//! Experiment orchestration: configs, the manual sub-goal controller, result
//! tables and tests, rendering and the on-disk report layout.

pub mod config;
pub mod experiment;
pub mod output;
pub mod render;
pub mod subgoal;
