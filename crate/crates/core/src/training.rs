//! Single training runs: the periodic greedy evaluation schedule, stopping
//! rule and the per-episode log shared by both agents.

use std::io;
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::maze::{MazeEnv, MazeSpec, ObservationMode, DEFAULT_HORIZON};
use crate::option_critic::{epsilon_at, OcError, OcHyperParams, OptionCriticAgent};
use crate::ppo::{
    collect_rollout, compute_returns_advantages, default_model, greedy_evaluate, ppo_update, EpsilonSchedule,
    PpoError, PpoHyperParams, RolloutCursor,
};
use crate::stats::{
    average_option_length, detect_convergence, Convergence, EpisodeTrace, EvalPoint, RunSummary,
    DEFAULT_SLACK, DEFAULT_WINDOW,
};

/// Version string recorded in manifests and digests.
pub const CODE_VERSION: &str = concat!(env!("CARGO_PKG_NAME"), "-", env!("CARGO_PKG_VERSION"));

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub max_steps: usize,
    /// Training episodes between greedy evaluations.
    pub eval_interval: usize,
    pub window: usize,
    pub slack: usize,
    /// End the run as soon as the convergence rule is met.
    pub stop_on_convergence: bool,
    pub horizon: usize,
    pub observation: ObservationMode,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            max_steps: 500_000,
            eval_interval: 20,
            window: DEFAULT_WINDOW,
            slack: DEFAULT_SLACK,
            stop_on_convergence: true,
            horizon: DEFAULT_HORIZON,
            observation: ObservationMode::OneHot,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AgentKind {
    Oc,
    Ppo,
}

impl AgentKind {
    pub fn as_str(self) -> &'static str {
        match self {
            AgentKind::Oc => "oc",
            AgentKind::Ppo => "ppo",
        }
    }
}

/// One row of the episode log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeLogRow {
    pub run_id: String,
    pub seed: u64,
    pub episode: usize,
    pub global_step: usize,
    pub path_length: usize,
    pub success: bool,
    pub avg_option_length: Option<f64>,
    pub epsilon: f64,
    pub agent: AgentKind,
    pub phi: Option<f64>,
}

/// One row of the evaluation log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalLogRow {
    pub run_id: String,
    pub seed: u64,
    pub eval_index: usize,
    pub env_step: usize,
    pub path_length: Option<usize>,
    pub success: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunLog {
    pub run_id: String,
    pub agent: AgentKind,
    pub phi: Option<f64>,
    pub episodes: Vec<EpisodeLogRow>,
    pub evals: Vec<EvalPoint>,
    pub summary: RunSummary,
    /// Trace of the last greedy evaluation.
    pub final_trace: Option<EpisodeTrace>,
    /// Shortest successful greedy trace seen during the run.
    pub best_trace: Option<EpisodeTrace>,
}

impl RunLog {
    pub fn eval_rows(&self) -> Vec<EvalLogRow> {
        self.evals
            .iter()
            .enumerate()
            .map(|(i, e)| EvalLogRow {
                run_id: self.run_id.clone(),
                seed: self.summary.seed,
                eval_index: i,
                env_step: e.env_step,
                path_length: e.path_length,
                success: e.path_length.is_some(),
            })
            .collect()
    }

    pub fn write_episode_csv<W: io::Write>(&self, out: W) -> csv::Result<()> {
        write_rows(out, &self.episodes)
    }

    pub fn write_eval_csv<W: io::Write>(&self, out: W) -> csv::Result<()> {
        write_rows(out, &self.eval_rows())
    }

    pub fn episode_csv(&self) -> String {
        let mut buf = Vec::new();
        self.write_episode_csv(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("csv is utf-8")
    }
}

/// A CSV row type with a fixed header.
pub trait LogRecord: Serialize {
    const COLUMNS: &'static [&'static str];
}

impl LogRecord for EpisodeLogRow {
    const COLUMNS: &'static [&'static str] = &EPISODE_COLUMNS;
}

impl LogRecord for EvalLogRow {
    const COLUMNS: &'static [&'static str] = &EVAL_COLUMNS;
}

/// Write rows with a header line even when `rows` is empty.
pub fn write_rows<W: io::Write, T: LogRecord>(out: W, rows: &[T]) -> csv::Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    w.write_record(T::COLUMNS)?;
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

pub const EPISODE_COLUMNS: [&str; 10] = [
    "run_id",
    "seed",
    "episode",
    "global_step",
    "path_length",
    "success",
    "avg_option_length",
    "epsilon",
    "agent",
    "phi",
];

pub const EVAL_COLUMNS: [&str; 6] = ["run_id", "seed", "eval_index", "env_step", "path_length", "success"];

pub fn read_episode_csv<R: io::Read>(input: R) -> csv::Result<Vec<EpisodeLogRow>> {
    csv::Reader::from_reader(input).deserialize().collect()
}

pub fn read_eval_csv<R: io::Read>(input: R) -> csv::Result<Vec<EvalLogRow>> {
    csv::Reader::from_reader(input).deserialize().collect()
}

/// Hex SHA-256 of `text`, used to fingerprint configs.
pub fn digest(text: &str) -> String {
    Sha256::digest(text.as_bytes())
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

/// Bookkeeping shared by the agents' training loops.
#[derive(Debug, Clone)]
pub struct RunRecorder {
    config: RunConfig,
    run_id: String,
    seed: u64,
    agent: AgentKind,
    phi: Option<f64>,
    config_digest: String,
    episodes: Vec<EpisodeLogRow>,
    evals: Vec<EvalPoint>,
    convergence: Convergence,
    episodes_since_eval: usize,
    final_trace: Option<EpisodeTrace>,
    best_trace: Option<EpisodeTrace>,
}

impl RunRecorder {
    pub fn new(
        config: RunConfig,
        run_id: impl Into<String>,
        seed: u64,
        agent: AgentKind,
        phi: Option<f64>,
        config_digest: String,
    ) -> Self {
        Self {
            config,
            run_id: run_id.into(),
            seed,
            agent,
            phi,
            config_digest,
            episodes: Vec::new(),
            evals: Vec::new(),
            convergence: Convergence::Censored,
            episodes_since_eval: 0,
            final_trace: None,
            best_trace: None,
        }
    }

    pub fn config(&self) -> &RunConfig {
        &self.config
    }

    pub fn episodes(&self) -> usize {
        self.episodes.len()
    }

    /// Log a finished training episode; returns whether an evaluation is due.
    pub fn record_episode(&mut self, trace: &EpisodeTrace, epsilon: f64) -> bool {
        let avg = if trace.is_empty() {
            None
        } else {
            average_option_length(trace).expect("trace is nonempty")
        };
        self.episodes.push(EpisodeLogRow {
            run_id: self.run_id.clone(),
            seed: self.seed,
            episode: self.episodes.len(),
            global_step: trace.global_step,
            path_length: trace.len(),
            success: trace.success,
            avg_option_length: avg,
            epsilon,
            agent: self.agent,
            phi: self.phi,
        });
        self.episodes_since_eval += 1;
        self.episodes_since_eval >= self.config.eval_interval
    }

    /// Log a greedy evaluation; returns whether the run should stop.
    pub fn record_eval(&mut self, env_step: usize, path_length: Option<usize>, trace: EpisodeTrace) -> bool {
        self.episodes_since_eval = 0;
        self.evals.push(EvalPoint { env_step, path_length });
        if path_length.is_some()
            && self
                .best_trace
                .as_ref()
                .is_none_or(|best| trace.len() < best.len())
        {
            self.best_trace = Some(trace.clone());
        }
        self.final_trace = Some(trace);
        if !self.convergence.is_converged() {
            self.convergence = detect_convergence(&self.evals, self.config.window, self.config.slack);
        }
        self.config.stop_on_convergence && self.convergence.is_converged()
    }

    pub fn finish(self, env_steps: usize) -> RunLog {
        let lengths: Vec<f64> = self.episodes.iter().filter_map(|e| e.avg_option_length).collect();
        let mean_option_length = (!lengths.is_empty()).then(|| lengths.iter().sum::<f64>() / lengths.len() as f64);
        let summary = RunSummary {
            convergence: self.convergence,
            final_path_length: self.evals.last().and_then(|e| e.path_length),
            mean_option_length,
            seed: self.seed,
            config_digest: self.config_digest,
            env_steps,
            episodes: self.episodes.len(),
        };
        RunLog {
            run_id: self.run_id,
            agent: self.agent,
            phi: self.phi,
            episodes: self.episodes,
            evals: self.evals,
            summary,
            final_trace: self.final_trace,
            best_trace: self.best_trace,
        }
    }
}

pub fn run_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Train an Option-Critic agent from scratch on `maze`.
pub fn train_run_oc(
    maze: Arc<MazeSpec>,
    hyper: &OcHyperParams,
    config: &RunConfig,
    seed: u64,
    run_id: &str,
) -> Result<RunLog, OcError> {
    let digest = digest(&format!("{CODE_VERSION}|oc|{}|{hyper:?}|{config:?}", maze.name()));
    let mut recorder = RunRecorder::new(config.clone(), run_id, seed, AgentKind::Oc, Some(hyper.phi), digest);
    let mut rng = run_rng(seed);
    let mut env = MazeEnv::new(maze.clone(), config.horizon, config.observation);
    let mut eval_env = env.clone();
    let mut agent = OptionCriticAgent::new(&maze, env.observation_dim(), hyper.clone(), &mut rng)?;
    let mut global_step = 0;
    while global_step < config.max_steps {
        let epsilon = epsilon_at(global_step, hyper.epsilon_decay_steps);
        let (mut trace, step) = agent.run_episode(&mut env, &mut rng, global_step)?;
        global_step = step;
        trace.episode = recorder.episodes();
        if recorder.record_episode(&trace, epsilon) {
            let (length, eval_trace) = agent.greedy_evaluate(&mut eval_env)?;
            if recorder.record_eval(global_step, length, eval_trace) {
                break;
            }
        }
    }
    Ok(recorder.finish(global_step))
}

/// Train a PPO agent from scratch on `maze`. Evaluations happen between
/// rollouts, once at least `eval_interval` episodes have finished since the
/// previous one.
pub fn train_run_ppo(
    maze: Arc<MazeSpec>,
    hyper: &PpoHyperParams,
    config: &RunConfig,
    seed: u64,
    run_id: &str,
) -> Result<RunLog, PpoError> {
    let digest = digest(&format!("{CODE_VERSION}|ppo|{}|{hyper:?}|{config:?}", maze.name()));
    let mut recorder = RunRecorder::new(config.clone(), run_id, seed, AgentKind::Ppo, None, digest);
    let mut rng = run_rng(seed);
    let env = MazeEnv::new(maze.clone(), config.horizon, config.observation);
    let mut eval_env = env.clone();
    let mut model = default_model(&env, hyper, &mut rng)?;
    let mut cursor = RolloutCursor::new(env);
    let schedule = EpsilonSchedule::Linear {
        decay_steps: hyper.epsilon_decay_steps,
    };
    let mut eval_due = false;
    while cursor.global_step() < config.max_steps {
        let steps = hyper.rollout_steps.min(config.max_steps - cursor.global_step());
        let mut batch = collect_rollout(&model, &mut cursor, steps, schedule, &mut rng)?;
        for (trace, epsilon) in &mut batch.episodes {
            trace.episode = recorder.episodes();
            eval_due |= recorder.record_episode(trace, *epsilon);
        }
        compute_returns_advantages(&mut batch, hyper.gamma);
        ppo_update(&mut model, &batch, hyper, &mut rng)?;
        if eval_due {
            eval_due = false;
            let (length, trace) = greedy_evaluate(&model, &mut eval_env)?;
            if recorder.record_eval(cursor.global_step(), length, trace) {
                break;
            }
        }
    }
    Ok(recorder.finish(cursor.global_step()))
}
