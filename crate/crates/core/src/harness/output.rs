//! On-disk layout of an experiment's results and recomputation of the
//! summary table from the raw per-run logs.
//!
//! ```text
//! <out>/manifest.txt        key=value config echo
//! <out>/results.csv         the experiment's table
//! <out>/runs.csv            one summary row per run
//! <out>/tests.csv           significance tests behind the table
//! <out>/degeneration.csv    per-group mean option length and flag
//! <out>/logs/<run>.episodes.csv, <run>.evals.csv
//! <out>/paths/<group>.csv, <group>.svg   best greedy path per group
//! <out>/curves.csv          exp4 only: per-episode option/path lengths
//! ```

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use thiserror::Error;

use super::config::{parse_manifest, ExperimentConfig, ExperimentId};
use super::experiment::{build_report, degeneration, ExperimentReport, RunRecord, RunRow};
use super::render::{render_path_svg, write_trace_csv};
use crate::maze::MazeSpec;
use crate::stats::{detect_convergence, EvalPoint, RunSummary};
use crate::training::{read_episode_csv, read_eval_csv, write_rows, LogRecord};

#[derive(Debug, Error)]
pub enum OutputError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("{path}: {source}")]
    Csv { path: PathBuf, source: csv::Error },
    #[error("{0}")]
    Invalid(String),
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> OutputError + '_ {
    move |source| OutputError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn csv_err(path: &Path) -> impl FnOnce(csv::Error) -> OutputError + '_ {
    move |source| OutputError::Csv {
        path: path.to_path_buf(),
        source,
    }
}

fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<(), OutputError> {
    fs::write(path, contents).map_err(io_err(path))
}

fn read_file(path: &Path) -> Result<String, OutputError> {
    fs::read_to_string(path).map_err(io_err(path))
}

fn create(path: &Path) -> Result<fs::File, OutputError> {
    fs::File::create(path).map_err(io_err(path))
}

impl LogRecord for RunRow {
    const COLUMNS: &'static [&'static str] = &[
        "run_id",
        "group",
        "maze",
        "agent",
        "seed",
        "phi",
        "max_steps",
        "converged",
        "convergence_step",
        "final_path_length",
        "mean_option_length",
        "env_steps",
        "episodes",
        "failure",
    ];
}

fn tests_csv(report: &ExperimentReport) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["test", "statistic", "p_value", "degenerate"]).expect("in-memory write");
    for t in &report.tests {
        let f = |x: Option<f64>| x.map(|v| v.to_string()).unwrap_or_default();
        w.write_record([t.name.clone(), f(t.statistic), f(t.p), t.degenerate.to_string()])
            .expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8")
}

fn degeneration_csv(report: &ExperimentReport) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["group", "mean_option_length", "flag"]).expect("in-memory write");
    for g in &report.groups {
        let Some(m) = g.mean_option_length() else { continue };
        let flag = degeneration(g).map(|f| format!("{:?}", f.kind).to_lowercase()).unwrap_or_else(|| "none".into());
        w.write_record([g.label.clone(), m.to_string(), flag]).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8")
}

fn curves_csv(records: &[RunRecord]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["phi", "seed", "episode", "global_step", "avg_option_length", "path_length"])
        .expect("in-memory write");
    for r in records {
        let Some(log) = &r.log else { continue };
        for e in &log.episodes {
            w.write_record([
                r.phi.map(|p| p.to_string()).unwrap_or_default(),
                r.seed.to_string(),
                e.episode.to_string(),
                e.global_step.to_string(),
                e.avg_option_length.map(|v| v.to_string()).unwrap_or_default(),
                e.path_length.to_string(),
            ])
            .expect("in-memory write");
        }
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8")
}

fn slug(label: &str) -> String {
    label.replace('/', "-")
}

/// Write everything the report holds into `dir`.
pub fn write_report(report: &ExperimentReport, config: &ExperimentConfig, dir: &Path) -> Result<(), OutputError> {
    let logs = dir.join("logs");
    let paths = dir.join("paths");
    for d in [dir, &logs, &paths] {
        fs::create_dir_all(d).map_err(io_err(d))?;
    }
    write_file(&dir.join("manifest.txt"), config.manifest())?;
    write_file(&dir.join("results.csv"), report.table.to_csv())?;
    write_file(&dir.join("tests.csv"), tests_csv(report))?;
    write_file(&dir.join("degeneration.csv"), degeneration_csv(report))?;
    let runs_path = dir.join("runs.csv");
    let rows: Vec<RunRow> = report.records.iter().map(RunRecord::row).collect();
    write_rows(create(&runs_path)?, &rows).map_err(csv_err(&runs_path))?;
    for r in &report.records {
        let Some(log) = &r.log else { continue };
        let p = logs.join(format!("{}.episodes.csv", r.run_id));
        log.write_episode_csv(create(&p)?).map_err(csv_err(&p))?;
        let p = logs.join(format!("{}.evals.csv", r.run_id));
        log.write_eval_csv(create(&p)?).map_err(csv_err(&p))?;
    }
    for g in &report.groups {
        let best = report
            .records
            .iter()
            .filter(|r| r.group == g.label)
            .filter_map(|r| Some((r, r.log.as_ref()?.best_trace.as_ref()?)))
            .min_by_key(|(r, t)| (t.len(), r.seed));
        let Some((record, trace)) = best else { continue };
        let maze = config
            .mazes
            .iter()
            .find(|m| m.name() == record.maze)
            .ok_or_else(|| OutputError::Invalid(format!("maze `{}` not in config", record.maze)))?;
        let stem = slug(&g.label);
        let p = paths.join(format!("{stem}.csv"));
        write_trace_csv(create(&p)?, trace).map_err(csv_err(&p))?;
        write_file(&paths.join(format!("{stem}.svg")), render_path_svg(trace, maze))?;
    }
    if report.experiment == ExperimentId::Exp4 {
        write_file(&dir.join("curves.csv"), curves_csv(&report.records))?;
    }
    Ok(())
}

/// Outcome of rebuilding a report from raw logs.
#[derive(Debug, Clone)]
pub struct Recomputed {
    pub report: ExperimentReport,
    /// The stored `results.csv`.
    pub stored: super::experiment::ResultsTable,
    pub matches: bool,
}

/// Rebuild the per-run summaries from `logs/` using the manifest's
/// convergence rule, re-tabulate, and compare with `results.csv`.
pub fn recompute(results_csv: &Path) -> Result<Recomputed, OutputError> {
    let dir = results_csv.parent().unwrap_or(Path::new("."));
    let manifest = parse_manifest(&read_file(&dir.join("manifest.txt"))?);
    let get = |k: &str| {
        manifest
            .iter()
            .find(|(key, _)| key == k)
            .map(|(_, v)| v.clone())
            .ok_or_else(|| OutputError::Invalid(format!("manifest is missing `{k}`")))
    };
    let parse_usize = |k: &str| -> Result<usize, OutputError> {
        get(k)?.parse().map_err(|_| OutputError::Invalid(format!("manifest `{k}` is not a count")))
    };
    let experiment: ExperimentId = get("experiment")?
        .parse()
        .map_err(|e: super::config::ConfigError| OutputError::Invalid(e.to_string()))?;
    let window = parse_usize("window")?;
    let slack = parse_usize("slack")?;

    let runs_path = dir.join("runs.csv");
    let rows: Vec<RunRow> = csv::Reader::from_reader(read_file(&runs_path)?.as_bytes())
        .deserialize()
        .collect::<csv::Result<_>>()
        .map_err(csv_err(&runs_path))?;
    let mut records = Vec::with_capacity(rows.len());
    for row in rows {
        let evals_path = dir.join("logs").join(format!("{}.evals.csv", row.run_id));
        let episodes_path = dir.join("logs").join(format!("{}.episodes.csv", row.run_id));
        let summary = if row.failure.is_some() {
            None
        } else {
            let evals = read_eval_csv(read_file(&evals_path)?.as_bytes()).map_err(csv_err(&evals_path))?;
            let episodes =
                read_episode_csv(read_file(&episodes_path)?.as_bytes()).map_err(csv_err(&episodes_path))?;
            let history: Vec<EvalPoint> = evals
                .iter()
                .map(|e| EvalPoint {
                    env_step: e.env_step,
                    path_length: e.path_length,
                })
                .collect();
            let lengths: Vec<f64> = episodes.iter().filter_map(|e| e.avg_option_length).collect();
            Some(RunSummary {
                convergence: detect_convergence(&history, window, slack),
                final_path_length: history.last().and_then(|e| e.path_length),
                mean_option_length: (!lengths.is_empty()).then(|| lengths.iter().sum::<f64>() / lengths.len() as f64),
                seed: row.seed,
                config_digest: String::new(),
                env_steps: row.env_steps,
                episodes: episodes.len(),
            })
        };
        records.push(RunRecord {
            run_id: row.run_id,
            group: row.group,
            maze: row.maze,
            agent: row.agent,
            seed: row.seed,
            phi: row.phi,
            max_steps: row.max_steps,
            summary: summary.unwrap_or(RunSummary {
                convergence: crate::stats::Convergence::Censored,
                final_path_length: None,
                mean_option_length: None,
                seed: row.seed,
                config_digest: String::new(),
                env_steps: row.env_steps,
                episodes: 0,
            }),
            failure: row.failure,
            log: None,
        });
    }
    let report = build_report(experiment, records);
    let stored = super::experiment::ResultsTable::from_csv(&read_file(results_csv)?).map_err(csv_err(results_csv))?;
    let matches = report.table.matches(&stored, 1e-9);
    Ok(Recomputed {
        report,
        stored,
        matches,
    })
}

/// Maze named in a run row, for rendering saved traces.
pub fn maze_for(name: &str) -> Option<MazeSpec> {
    MazeSpec::builtin(name)
}
