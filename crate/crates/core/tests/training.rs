use std::sync::Arc;

use hrl_core::harness::config::{apply_desk_oc, ExperimentConfig, ExperimentId};
use hrl_core::maze::MazeSpec;
use hrl_core::option_critic::OcHyperParams;
use hrl_core::stats::Convergence;
use hrl_core::training::{train_run_oc, train_run_ppo, RunConfig};

fn empty_room() -> Arc<MazeSpec> {
    Arc::new(MazeSpec::builtin("empty-room").unwrap())
}

fn run_config(max_steps: usize) -> RunConfig {
    RunConfig { max_steps, ..RunConfig::default() }
}

// The convergence rule only asks for a stable path, and PPO often settles on a
// 20-step staircase first, so this run keeps training past detection.
#[test]
fn ppo_desk_preset_solves_empty_room() {
    let hyper = ExperimentConfig::new(ExperimentId::Exp1).with_desk_scale().ppo;
    let run = RunConfig { stop_on_convergence: false, ..run_config(150_000) };
    let log = train_run_ppo(empty_room(), &hyper, &run, 1, "ppo-empty").unwrap();
    let s = &log.summary;
    assert!(matches!(s.convergence, Convergence::Converged { .. }), "{:?}", s.convergence);
    let len = s.final_path_length.expect("greedy policy reaches the goal");
    assert!(len <= 12, "path length {len}");
}

#[test]
fn oc_desk_preset_solves_empty_room() {
    let mut hyper = OcHyperParams::default();
    apply_desk_oc(&mut hyper);
    let log = train_run_oc(empty_room(), &hyper, &run_config(150_000), 1, "oc-empty").unwrap();
    let s = &log.summary;
    assert!(matches!(s.convergence, Convergence::Converged { .. }), "{:?}", s.convergence);
    let len = s.final_path_length.expect("greedy policy reaches the goal");
    assert!(len <= 12, "path length {len}");
    assert!(s.mean_option_length.unwrap() >= 1.0);
}
