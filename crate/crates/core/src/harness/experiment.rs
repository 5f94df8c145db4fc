//! Groups of seeded training runs, the per-experiment result tables and
//! significance tests, and degeneration flags.

use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{ExperimentConfig, ExperimentId};
use crate::maze::{MazeSpec, Cell};
use crate::option_critic::OcHyperParams;
use crate::ppo::PpoHyperParams;
use crate::stats::{anova_one_way, t_test_two_sample, Convergence, RunSummary};
use crate::training::{train_run_oc, train_run_ppo, AgentKind, RunConfig, RunLog};

/// Mean option length above which a group is flagged as grown.
pub const GROWTH_THRESHOLD: f64 = 20.0;
/// Mean option length below which a group is flagged as shrunk.
pub const SHRINK_THRESHOLD: f64 = 1.1;

/// Manual route through the four-rooms maze: SW room → (10,6) → SE room →
/// (7,9) → NE room → goal.
pub const FOUR_ROOMS_ROUTE: [Cell; 2] = [Cell { row: 10, col: 6 }, Cell { row: 7, col: 9 }];

#[derive(Debug, Clone, PartialEq)]
pub enum Variant {
    Oc(OcHyperParams),
    Ppo(PpoHyperParams),
}

impl Variant {
    pub fn agent(&self) -> AgentKind {
        match self {
            Variant::Oc(_) => AgentKind::Oc,
            Variant::Ppo(_) => AgentKind::Ppo,
        }
    }
}

/// One arm of an experiment: an agent configuration on one maze.
#[derive(Debug, Clone)]
pub struct GroupSpec {
    pub label: String,
    pub maze: Arc<MazeSpec>,
    pub variant: Variant,
}

#[derive(Debug, Clone)]
pub struct RunRecord {
    pub run_id: String,
    pub group: String,
    pub maze: String,
    pub agent: AgentKind,
    pub seed: u64,
    pub phi: Option<f64>,
    pub max_steps: usize,
    pub summary: RunSummary,
    /// Error text when the run aborted; the run then counts as censored.
    pub failure: Option<String>,
    pub log: Option<RunLog>,
}

impl RunRecord {
    /// Convergence step, `max_steps` when censored.
    pub fn convergence_step(&self) -> f64 {
        self.summary.convergence.step_or(self.max_steps) as f64
    }

    pub fn row(&self) -> RunRow {
        RunRow {
            run_id: self.run_id.clone(),
            group: self.group.clone(),
            maze: self.maze.clone(),
            agent: self.agent,
            seed: self.seed,
            phi: self.phi,
            max_steps: self.max_steps,
            converged: self.summary.convergence.is_converged(),
            convergence_step: self.convergence_step(),
            final_path_length: self.summary.final_path_length,
            mean_option_length: self.summary.mean_option_length,
            env_steps: self.summary.env_steps,
            episodes: self.summary.episodes,
            failure: self.failure.clone(),
        }
    }

    /// Same run reported under another group label.
    pub fn relabeled(&self, group: &str) -> RunRecord {
        RunRecord {
            group: group.to_string(),
            ..self.clone()
        }
    }
}

/// One row of `runs.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRow {
    pub run_id: String,
    pub group: String,
    pub maze: String,
    pub agent: AgentKind,
    pub seed: u64,
    pub phi: Option<f64>,
    pub max_steps: usize,
    pub converged: bool,
    pub convergence_step: f64,
    pub final_path_length: Option<usize>,
    pub mean_option_length: Option<f64>,
    pub env_steps: usize,
    pub episodes: usize,
    pub failure: Option<String>,
}

fn slug(label: &str) -> String {
    label
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '.' || c == '-' { c } else { '-' })
        .collect()
}

pub fn run_id(experiment: ExperimentId, group: &str, seed: u64) -> String {
    format!("{experiment}-{}-s{seed}", slug(group))
}

fn run_one(experiment: ExperimentId, group: &GroupSpec, run: &RunConfig, seed: u64) -> RunRecord {
    let id = run_id(experiment, &group.label, seed);
    let (phi, result) = match &group.variant {
        Variant::Oc(h) => (
            Some(h.phi),
            train_run_oc(group.maze.clone(), h, run, seed, &id).map_err(|e| e.to_string()),
        ),
        Variant::Ppo(h) => (None, train_run_ppo(group.maze.clone(), h, run, seed, &id).map_err(|e| e.to_string())),
    };
    let (summary, failure, log) = match result {
        Ok(log) => (log.summary.clone(), None, Some(log)),
        Err(e) => (
            RunSummary {
                convergence: Convergence::Censored,
                final_path_length: None,
                mean_option_length: None,
                seed,
                config_digest: String::new(),
                env_steps: 0,
                episodes: 0,
            },
            Some(e),
            None,
        ),
    };
    RunRecord {
        run_id: id,
        group: group.label.clone(),
        maze: group.maze.name().to_string(),
        agent: group.variant.agent(),
        seed,
        phi,
        max_steps: run.max_steps,
        summary,
        failure,
        log,
    }
}

/// Every (group, seed) run, dispatched to the worker pool; results come
/// back in group-then-seed order.
pub fn run_groups(experiment: ExperimentId, groups: &[GroupSpec], seeds: &[u64], run: &RunConfig) -> Vec<RunRecord> {
    let jobs: Vec<(&GroupSpec, u64)> = groups.iter().flat_map(|g| seeds.iter().map(move |&s| (g, s))).collect();
    jobs.par_iter().map(|(g, s)| run_one(experiment, g, run, *s)).collect()
}

/// The arms of `config.experiment`.
pub fn experiment_groups(config: &ExperimentConfig) -> Vec<GroupSpec> {
    let oc = |h: OcHyperParams| Variant::Oc(h);
    match config.experiment {
        ExperimentId::Exp1 => config
            .mazes
            .iter()
            .flat_map(|m| {
                [
                    GroupSpec {
                        label: format!("{}/ppo", m.name()),
                        maze: m.clone(),
                        variant: Variant::Ppo(config.ppo.clone()),
                    },
                    GroupSpec {
                        label: format!("{}/oc", m.name()),
                        maze: m.clone(),
                        variant: oc(config.oc.clone()),
                    },
                ]
            })
            .collect(),
        ExperimentId::Exp2 => {
            let maze = config.mazes[0].clone();
            let every = OcHyperParams {
                terminate_every_step: true,
                ..config.oc.clone()
            };
            vec![
                GroupSpec {
                    label: "termination".into(),
                    maze: maze.clone(),
                    variant: oc(config.oc.clone()),
                },
                GroupSpec {
                    label: "critic".into(),
                    maze,
                    variant: oc(every),
                },
            ]
        }
        ExperimentId::Exp3 => {
            let maze = config.mazes[0].clone();
            let mut route = FOUR_ROOMS_ROUTE.to_vec();
            route.push(maze.goal());
            let manual = OcHyperParams {
                manual_subgoals: Some(route),
                ..config.oc.clone()
            };
            vec![
                GroupSpec {
                    label: "automatic".into(),
                    maze: maze.clone(),
                    variant: oc(config.oc.clone()),
                },
                GroupSpec {
                    label: "manual".into(),
                    maze,
                    variant: oc(manual),
                },
            ]
        }
        ExperimentId::Exp4 => {
            let maze = config.mazes[0].clone();
            config
                .phi_list
                .iter()
                .map(|&phi| GroupSpec {
                    label: phi_label(phi),
                    maze: maze.clone(),
                    variant: oc(OcHyperParams {
                        phi,
                        ..config.oc.clone()
                    }),
                })
                .collect()
        }
    }
}

pub fn phi_label(phi: f64) -> String {
    format!("phi-{phi:.2}")
}

/// A rectangular table of formatted cells; empty cells mean "not available".
#[derive(Debug, Clone, PartialEq)]
pub struct ResultsTable {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl ResultsTable {
    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(&self.columns).expect("in-memory write");
        for row in &self.rows {
            w.write_record(row).expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8")
    }

    pub fn from_csv(text: &str) -> csv::Result<Self> {
        let mut r = csv::Reader::from_reader(text.as_bytes());
        let columns = r.headers()?.iter().map(str::to_string).collect();
        let rows = r
            .records()
            .map(|rec| rec.map(|r| r.iter().map(str::to_string).collect()))
            .collect::<csv::Result<_>>()?;
        Ok(Self { columns, rows })
    }

    /// Cells equal, numeric cells within `tolerance`.
    pub fn matches(&self, other: &ResultsTable, tolerance: f64) -> bool {
        self.columns == other.columns
            && self.rows.len() == other.rows.len()
            && self.rows.iter().zip(&other.rows).all(|(a, b)| {
                a.len() == b.len()
                    && a.iter().zip(b).all(|(x, y)| match (x.parse::<f64>(), y.parse::<f64>()) {
                        (Ok(x), Ok(y)) => (x - y).abs() <= tolerance || (x.is_nan() && y.is_nan()),
                        _ => x == y,
                    })
            })
    }
}

fn num(x: f64) -> String {
    x.to_string()
}

fn opt(x: Option<f64>) -> String {
    x.map(num).unwrap_or_default()
}

fn mean(xs: &[f64]) -> Option<f64> {
    (!xs.is_empty()).then(|| xs.iter().sum::<f64>() / xs.len() as f64)
}

/// Aggregates of one group.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupStats {
    pub label: String,
    pub runs: usize,
    pub converged: usize,
    /// Censored runs count as their step budget.
    pub convergence: Vec<f64>,
    /// Final greedy path lengths of runs whose last evaluation succeeded.
    pub paths: Vec<f64>,
    pub option_lengths: Vec<f64>,
}

impl GroupStats {
    pub fn of(label: &str, records: &[RunRecord]) -> Self {
        let mine: Vec<&RunRecord> = records.iter().filter(|r| r.group == label).collect();
        Self {
            label: label.to_string(),
            runs: mine.len(),
            converged: mine.iter().filter(|r| r.summary.convergence.is_converged()).count(),
            convergence: mine.iter().map(|r| r.convergence_step()).collect(),
            paths: mine
                .iter()
                .filter_map(|r| r.summary.final_path_length.map(|p| p as f64))
                .collect(),
            option_lengths: mine.iter().filter_map(|r| r.summary.mean_option_length).collect(),
        }
    }

    pub fn mean_convergence(&self) -> Option<f64> {
        mean(&self.convergence)
    }

    pub fn mean_path(&self) -> Option<f64> {
        mean(&self.paths)
    }

    pub fn mean_option_length(&self) -> Option<f64> {
        mean(&self.option_lengths)
    }

    /// Final paths of converged runs only.
    pub fn converged_paths(&self, records: &[RunRecord]) -> Vec<usize> {
        records
            .iter()
            .filter(|r| r.group == self.label && r.summary.convergence.is_converged())
            .filter_map(|r| r.summary.final_path_length)
            .collect()
    }
}

/// A named significance test; `None` when there were too few samples.
#[derive(Debug, Clone, PartialEq)]
pub struct TestResult {
    pub name: String,
    pub statistic: Option<f64>,
    pub p: Option<f64>,
    pub degenerate: bool,
}

fn t_test(name: &str, a: &[f64], b: &[f64]) -> TestResult {
    match t_test_two_sample(a, b) {
        Ok(t) => TestResult {
            name: name.to_string(),
            statistic: Some(t.t),
            p: Some(t.p),
            degenerate: t.degenerate,
        },
        Err(_) => TestResult {
            name: name.to_string(),
            statistic: None,
            p: None,
            degenerate: false,
        },
    }
}

fn anova(name: &str, groups: &[Vec<f64>]) -> TestResult {
    match anova_one_way(groups) {
        Ok(a) => TestResult {
            name: name.to_string(),
            statistic: Some(a.f),
            p: Some(a.p),
            degenerate: a.degenerate,
        },
        Err(_) => TestResult {
            name: name.to_string(),
            statistic: None,
            p: None,
            degenerate: false,
        },
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Degeneration {
    /// Options collapsed to single actions.
    Shrink,
    /// One option runs for most of an episode.
    Growth,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DegenerationFlag {
    pub group: String,
    pub kind: Degeneration,
    pub mean_option_length: f64,
}

pub fn degeneration(stats: &GroupStats) -> Option<DegenerationFlag> {
    let m = stats.mean_option_length()?;
    let kind = if m > GROWTH_THRESHOLD {
        Degeneration::Growth
    } else if m < SHRINK_THRESHOLD {
        Degeneration::Shrink
    } else {
        return None;
    };
    Some(DegenerationFlag {
        group: stats.label.clone(),
        kind,
        mean_option_length: m,
    })
}

#[derive(Debug, Clone)]
pub struct ExperimentReport {
    pub experiment: ExperimentId,
    pub table: ResultsTable,
    pub groups: Vec<GroupStats>,
    pub tests: Vec<TestResult>,
    pub flags: Vec<DegenerationFlag>,
    pub records: Vec<RunRecord>,
}

impl ExperimentReport {
    pub fn group(&self, label: &str) -> Option<&GroupStats> {
        self.groups.iter().find(|g| g.label == label)
    }

    pub fn test(&self, name: &str) -> Option<&TestResult> {
        self.tests.iter().find(|t| t.name == name)
    }
}

fn group_labels(records: &[RunRecord]) -> Vec<String> {
    let mut labels: Vec<String> = Vec::new();
    for r in records {
        if !labels.contains(&r.group) {
            labels.push(r.group.clone());
        }
    }
    labels
}

/// Tabulate `records` in the shape of `experiment`'s results table.
pub fn build_report(experiment: ExperimentId, records: Vec<RunRecord>) -> ExperimentReport {
    let labels = group_labels(&records);
    let groups: Vec<GroupStats> = labels.iter().map(|l| GroupStats::of(l, &records)).collect();
    let get = |label: &str| {
        groups
            .iter()
            .find(|g| g.label == label)
            .cloned()
            .unwrap_or_else(|| GroupStats::of(label, &[]))
    };
    let mut tests = Vec::new();
    let table = match experiment {
        ExperimentId::Exp1 => {
            let mut mazes: Vec<String> = Vec::new();
            for r in &records {
                if !mazes.contains(&r.maze) {
                    mazes.push(r.maze.clone());
                }
            }
            let rows = mazes
                .iter()
                .map(|maze| {
                    let ppo = get(&format!("{maze}/ppo"));
                    let oc = get(&format!("{maze}/oc"));
                    let t = t_test(&format!("{maze}/convergence"), &ppo.convergence, &oc.convergence);
                    let row = vec![
                        maze.clone(),
                        opt(ppo.mean_convergence()),
                        opt(oc.mean_convergence()),
                        opt(t.p),
                        opt(ppo.mean_path()),
                        opt(oc.mean_path()),
                    ];
                    tests.push(t);
                    row
                })
                .collect();
            ResultsTable {
                columns: ["maze", "ppo_convergence", "oc_convergence", "p_value", "ppo_path", "oc_path"]
                    .map(String::from)
                    .to_vec(),
                rows,
            }
        }
        ExperimentId::Exp2 | ExperimentId::Exp3 => {
            let (first, second) = if experiment == ExperimentId::Exp2 {
                ("termination", "critic")
            } else {
                ("automatic", "manual")
            };
            let a = get(first);
            let b = get(second);
            let conv = t_test("convergence", &a.convergence, &b.convergence);
            let path = t_test("path_length", &a.paths, &b.paths);
            let rows = vec![
                vec![first.to_string(), opt(a.mean_convergence()), opt(a.mean_path())],
                vec![second.to_string(), opt(b.mean_convergence()), opt(b.mean_path())],
                vec!["p_value".to_string(), opt(conv.p), opt(path.p)],
            ];
            tests.push(conv);
            tests.push(path);
            ResultsTable {
                columns: ["subgoal_creation", "convergence", "path_length"].map(String::from).to_vec(),
                rows,
            }
        }
        ExperimentId::Exp4 => {
            let mut rows: Vec<Vec<String>> = groups
                .iter()
                .map(|g| {
                    let phi = records.iter().find(|r| r.group == g.label).and_then(|r| r.phi);
                    vec![
                        phi.map(|p| format!("{p:.2}")).unwrap_or_else(|| g.label.clone()),
                        opt(g.mean_convergence()),
                        opt(g.mean_option_length()),
                        opt(g.mean_path()),
                        String::new(),
                        String::new(),
                    ]
                })
                .collect();
            let metrics: [(&str, fn(&GroupStats) -> Vec<f64>); 3] = [
                ("convergence", |g| g.convergence.clone()),
                ("option_length", |g| g.option_lengths.clone()),
                ("path_length", |g| g.paths.clone()),
            ];
            for (name, values) in metrics {
                let samples: Vec<Vec<f64>> = groups.iter().map(values).collect();
                let t = anova(&format!("anova_{name}"), &samples);
                rows.push(vec![
                    t.name.clone(),
                    String::new(),
                    String::new(),
                    String::new(),
                    opt(t.statistic),
                    opt(t.p),
                ]);
                tests.push(t);
            }
            ResultsTable {
                columns: ["phi", "convergence", "option_length", "path_length", "statistic", "p_value"]
                    .map(String::from)
                    .to_vec(),
                rows,
            }
        }
    };
    let flags = groups
        .iter()
        .filter(|g| records.iter().any(|r| r.group == g.label && r.agent == AgentKind::Oc))
        .filter_map(degeneration)
        .collect();
    ExperimentReport {
        experiment,
        table,
        groups,
        tests,
        flags,
        records,
    }
}

/// Run every arm of `config.experiment` and tabulate.
pub fn run_experiment(config: &ExperimentConfig) -> ExperimentReport {
    let groups = experiment_groups(config);
    let records = run_groups(config.experiment, &groups, &config.seeds, &config.run);
    build_report(config.experiment, records)
}

pub fn run_experiment_1(config: &ExperimentConfig) -> ExperimentReport {
    debug_assert_eq!(config.experiment, ExperimentId::Exp1);
    run_experiment(config)
}

pub fn run_experiment_2(config: &ExperimentConfig) -> ExperimentReport {
    debug_assert_eq!(config.experiment, ExperimentId::Exp2);
    run_experiment(config)
}

pub fn run_experiment_3(config: &ExperimentConfig) -> ExperimentReport {
    debug_assert_eq!(config.experiment, ExperimentId::Exp3);
    run_experiment(config)
}

pub fn run_experiment_4(config: &ExperimentConfig) -> ExperimentReport {
    debug_assert_eq!(config.experiment, ExperimentId::Exp4);
    run_experiment(config)
}
