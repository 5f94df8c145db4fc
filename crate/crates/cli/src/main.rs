use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand, ValueEnum};

use hrl_core::harness::config::{apply_desk_oc, ExperimentConfig, ExperimentId, DESK_MAX_STEPS};
use hrl_core::harness::experiment::run_experiment;
use hrl_core::harness::output::{recompute, write_report};
use hrl_core::harness::render::{read_trace_csv, render_path_svg, write_trace_csv};
use hrl_core::maze::MazeSpec;
use hrl_core::option_critic::OcHyperParams;
use hrl_core::ppo::{hidden_widths, PpoHyperParams, PAPER_WIDTHS};
use hrl_core::training::{train_run_oc, train_run_ppo, RunConfig, RunLog};

#[derive(Debug, Parser)]
#[command(name = "hrl", version, about = "Option-Critic and PPO maze experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run one of the four experiments and write its results directory.
    Run(RunArgs),
    /// Train a single agent and write its logs and best path.
    Train(TrainArgs),
    /// Render a trace CSV as an SVG over its maze.
    Render(RenderArgs),
    /// Recompute a results table from its raw logs and print the tests.
    Stats(StatsArgs),
}

#[derive(Debug, Args)]
struct Common {
    /// Total environment steps per run.
    #[arg(long)]
    max_steps: Option<usize>,
    /// 150k-step budget with the shortened schedules.
    #[arg(long)]
    desk_scale: bool,
    /// Use the wider PPO network.
    #[arg(long)]
    paper_widths: bool,
}

#[derive(Debug, Args)]
struct RunArgs {
    /// exp1 (OC vs PPO), exp2 (termination ablation), exp3 (manual sub-goals)
    /// or exp4 (deliberation cost sweep).
    #[arg(value_parser = clap::value_parser!(ExperimentIdArg))]
    experiment: ExperimentIdArg,
    /// Built-in maze name or path to an ASCII map; repeatable.
    #[arg(long = "maze")]
    mazes: Vec<String>,
    /// Comma-separated seeds. Defaults to 1,2,3,4,5.
    #[arg(long, value_delimiter = ',')]
    seeds: Vec<u64>,
    /// Comma-separated deliberation costs for exp4.
    #[arg(long, value_delimiter = ',')]
    phi_list: Vec<f64>,
    /// Results directory. Defaults to results/<experiment>.
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    common: Common,
}

#[derive(Debug, Clone, Copy)]
struct ExperimentIdArg(ExperimentId);

impl std::str::FromStr for ExperimentIdArg {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        s.parse().map(ExperimentIdArg).map_err(|e: hrl_core::harness::config::ConfigError| e.to_string())
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Agent {
    Oc,
    Ppo,
}

#[derive(Debug, Args)]
struct TrainArgs {
    #[arg(value_enum)]
    agent: Agent,
    #[arg(long, default_value = "four-rooms")]
    maze: String,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Deliberation cost for Option-Critic.
    #[arg(long)]
    phi: Option<f64>,
    #[arg(long, default_value = "train-out")]
    out: PathBuf,
    #[command(flatten)]
    common: Common,
}

#[derive(Debug, Args)]
struct RenderArgs {
    trace: PathBuf,
    #[arg(long, default_value = "four-rooms")]
    maze: String,
    /// Output SVG. Defaults to the trace path with an .svg extension.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct StatsArgs {
    results: PathBuf,
}

/// Usage and configuration problems exit with 1, everything else with 2.
enum Failure {
    Usage(String),
    Runtime(String),
}

impl Failure {
    fn runtime(e: impl std::fmt::Display) -> Self {
        Failure::Runtime(e.to_string())
    }
}

fn load_maze(source: &str) -> Result<Arc<MazeSpec>, Failure> {
    if let Some(m) = MazeSpec::builtin(source) {
        return Ok(Arc::new(m));
    }
    let path = Path::new(source);
    if !path.exists() {
        return Err(Failure::Usage(format!("unknown maze `{source}`")));
    }
    let text = fs::read_to_string(path).map_err(|e| Failure::Usage(format!("{source}: {e}")))?;
    let name = path.file_stem().and_then(|s| s.to_str()).unwrap_or("custom");
    MazeSpec::parse(name, &text)
        .map(Arc::new)
        .map_err(|e| Failure::Usage(format!("{source}: {e}")))
}

fn run(args: RunArgs) -> Result<(), Failure> {
    let experiment = args.experiment.0;
    let mut config = ExperimentConfig::new(experiment);
    if args.common.desk_scale {
        config = config.with_desk_scale();
    }
    if args.common.paper_widths {
        config = config.with_paper_widths();
    }
    if let Some(n) = args.common.max_steps {
        config.run.max_steps = n;
    }
    if !args.mazes.is_empty() {
        config.mazes = args.mazes.iter().map(|m| load_maze(m)).collect::<Result<_, _>>()?;
    }
    if !args.seeds.is_empty() {
        config.seeds = args.seeds;
    }
    if !args.phi_list.is_empty() {
        config.phi_list = args.phi_list;
    }
    let out = args.out.unwrap_or_else(|| PathBuf::from("results").join(experiment.as_str()));
    config.out_dir = Some(out.clone());
    config.validate().map_err(|e| Failure::Usage(e.to_string()))?;

    let report = run_experiment(&config);
    write_report(&report, &config, &out).map_err(Failure::runtime)?;
    print!("{}", report.table.to_csv());
    for flag in &report.flags {
        eprintln!(
            "warning: {} mean option length {:.3} ({:?})",
            flag.group, flag.mean_option_length, flag.kind
        );
    }
    let failed: Vec<_> = report.records.iter().filter(|r| r.failure.is_some()).collect();
    for r in &failed {
        eprintln!("run {} failed: {}", r.run_id, r.failure.as_deref().unwrap_or_default());
    }
    eprintln!("wrote {}", out.display());
    if failed.is_empty() {
        Ok(())
    } else {
        Err(Failure::Runtime(format!("{} run(s) failed", failed.len())))
    }
}

fn write_run_log(log: &RunLog, maze: &MazeSpec, out: &Path) -> Result<(), Failure> {
    fs::create_dir_all(out).map_err(Failure::runtime)?;
    let create = |name: String| fs::File::create(out.join(name)).map_err(Failure::runtime);
    log.write_episode_csv(create(format!("{}.episodes.csv", log.run_id))?)
        .map_err(Failure::runtime)?;
    log.write_eval_csv(create(format!("{}.evals.csv", log.run_id))?)
        .map_err(Failure::runtime)?;
    if let Some(trace) = log.best_trace.as_ref().filter(|t| !t.is_empty()) {
        write_trace_csv(create(format!("{}.trace.csv", log.run_id))?, trace).map_err(Failure::runtime)?;
        fs::write(out.join(format!("{}.svg", log.run_id)), render_path_svg(trace, maze)).map_err(Failure::runtime)?;
    }
    Ok(())
}

fn train(args: TrainArgs) -> Result<(), Failure> {
    let maze = load_maze(&args.maze)?;
    let mut run = RunConfig::default();
    if args.common.desk_scale {
        run.max_steps = DESK_MAX_STEPS;
    }
    if let Some(n) = args.common.max_steps {
        run.max_steps = n;
    }
    let usage = |e: &dyn std::fmt::Display| Failure::Usage(e.to_string());
    let log = match args.agent {
        Agent::Oc => {
            let mut hyper = OcHyperParams::default();
            if args.common.desk_scale {
                apply_desk_oc(&mut hyper);
            }
            if let Some(phi) = args.phi {
                hyper.phi = phi;
            }
            hyper.validate().map_err(|e| usage(&e))?;
            let id = format!("train-oc-s{}", args.seed);
            train_run_oc(maze.clone(), &hyper, &run, args.seed, &id).map_err(Failure::runtime)?
        }
        Agent::Ppo => {
            let mut config = ExperimentConfig::new(ExperimentId::Exp1);
            if args.common.desk_scale {
                config = config.with_desk_scale();
            }
            let mut hyper: PpoHyperParams = config.ppo;
            if args.common.paper_widths {
                hyper.hidden = hidden_widths(PAPER_WIDTHS);
            }
            hyper.validate().map_err(|e| usage(&e))?;
            let id = format!("train-ppo-s{}", args.seed);
            train_run_ppo(maze.clone(), &hyper, &run, args.seed, &id).map_err(Failure::runtime)?
        }
    };
    write_run_log(&log, &maze, &args.out)?;
    let s = &log.summary;
    println!("convergence: {:?}", s.convergence);
    println!("env_steps: {}", s.env_steps);
    println!("episodes: {}", s.episodes);
    match s.final_path_length {
        Some(n) => println!("final_path_length: {n}"),
        None => println!("final_path_length: failed"),
    }
    if let Some(m) = s.mean_option_length {
        println!("mean_option_length: {m:.4}");
    }
    Ok(())
}

fn render(args: RenderArgs) -> Result<(), Failure> {
    let maze = load_maze(&args.maze)?;
    let file = fs::File::open(&args.trace).map_err(|e| Failure::Usage(format!("{}: {e}", args.trace.display())))?;
    let trace = read_trace_csv(file).map_err(|e| Failure::Usage(format!("{}: {e}", args.trace.display())))?;
    if trace.is_empty() {
        return Err(Failure::Usage(format!("{}: trace has no steps", args.trace.display())));
    }
    if let Some(step) = trace
        .steps
        .iter()
        .find(|s| s.cell.row >= maze.height() || s.cell.col >= maze.width())
    {
        return Err(Failure::Usage(format!(
            "trace cell ({},{}) lies outside maze `{}`",
            step.cell.row,
            step.cell.col,
            maze.name()
        )));
    }
    let out = args.out.unwrap_or_else(|| args.trace.with_extension("svg"));
    fs::write(&out, render_path_svg(&trace, &maze)).map_err(Failure::runtime)?;
    eprintln!("wrote {}", out.display());
    Ok(())
}

fn stats(args: StatsArgs) -> Result<(), Failure> {
    if !args.results.exists() {
        return Err(Failure::Usage(format!("{}: no such file", args.results.display())));
    }
    let r = recompute(&args.results).map_err(Failure::runtime)?;
    print!("{}", r.report.table.to_csv());
    for t in &r.report.tests {
        let f = |x: Option<f64>| x.map(|v| format!("{v:.6}")).unwrap_or_else(|| "-".into());
        let note = if t.degenerate { " (degenerate)" } else { "" };
        println!("{}: statistic={} p={}{note}", t.name, f(t.statistic), f(t.p));
    }
    if r.matches {
        eprintln!("recomputed table matches {}", args.results.display());
        Ok(())
    } else {
        Err(Failure::Runtime(format!(
            "recomputed table differs from {}",
            args.results.display()
        )))
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let result = match cli.command {
        Command::Run(a) => run(a),
        Command::Train(a) => train(a),
        Command::Render(a) => render(a),
        Command::Stats(a) => stats(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}
