use std::net::TcpListener;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;
use std::time::Duration;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use omqkit::agent_api::{serve, Difficulty, Server};
use omqkit::envgen::{generate_suite, load_suite, write_suite, Suite, PRESET_NAMES};
use omqkit::harness::{
    render_table, report_from_bytes, report_to_bytes, run_suite, score_files, AgentSpec, DetectionPreset, NoisePreset,
    RunConfig, Selection, DEFAULT_TIMEOUT,
};
use omqkit::object_map::{canonical_json, parse_gt_map, TaskKind};
use omqkit::omq::render_report;

/// Exit status when the run finished but some cells failed.
const EXIT_INCOMPLETE: u8 = 2;

#[derive(Parser)]
#[command(name = "omqkit", version, about = "Cuboid object-map benchmark kit")]
struct Cli {
    #[command(subcommand)]
    command: Verb,
}

#[derive(Subcommand)]
enum Verb {
    /// Host episodes over a suite on a TCP address.
    Serve(ServeArgs),
    /// Generate a suite of environments and write it to a directory.
    Generate(GenerateArgs),
    /// Run an agent over the task x difficulty x environment matrix.
    Run(RunArgs),
    /// Score a map file against a ground-truth file.
    Score(ScoreArgs),
    /// Print a saved suite report as a table.
    Report(ReportArgs),
}

#[derive(Clone, Copy, ValueEnum)]
#[value(rename_all = "snake_case")]
enum TaskArg {
    SemanticSlam,
    Scd,
}

impl From<TaskArg> for TaskKind {
    fn from(t: TaskArg) -> Self {
        match t {
            TaskArg::SemanticSlam => TaskKind::SemanticSlam,
            TaskArg::Scd => TaskKind::Scd,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
#[value(rename_all = "snake_case")]
enum DifficultyArg {
    PassiveGt,
    ActiveGt,
    ActiveDr,
}

impl From<DifficultyArg> for Difficulty {
    fn from(d: DifficultyArg) -> Self {
        match d {
            DifficultyArg::PassiveGt => Difficulty::PassiveGt,
            DifficultyArg::ActiveGt => Difficulty::ActiveGt,
            DifficultyArg::ActiveDr => Difficulty::ActiveDr,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
#[value(rename_all = "snake_case")]
enum SelectionArg {
    Test,
    Dev,
}

#[derive(Clone, Copy, ValueEnum)]
#[value(rename_all = "snake_case")]
enum NoiseArg {
    Noiseless,
    Drift,
}

#[derive(Clone, Copy, ValueEnum)]
#[value(rename_all = "snake_case")]
enum DetectionArg {
    Noiseless,
    Typical,
}

#[derive(Args)]
struct WorldArgs {
    /// Master seed for episode randomness.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Odometry and actuation noise preset.
    #[arg(long, value_enum, default_value = "noiseless")]
    noise: NoiseArg,
    /// Detection noise preset.
    #[arg(long, value_enum, default_value = "noiseless")]
    detection: DetectionArg,
}

#[derive(Args)]
struct ServeArgs {
    /// Suite directory or manifest file.
    #[arg(long)]
    suite: PathBuf,
    #[arg(long, default_value = "127.0.0.1:7878")]
    addr: String,
    /// Enforce the test matrix and withhold reports.
    #[arg(long)]
    strict: bool,
    #[command(flatten)]
    world: WorldArgs,
}

#[derive(Args)]
struct GenerateArgs {
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Base environments to generate; defaults to all presets.
    #[arg(long, value_delimiter = ',')]
    bases: Vec<String>,
}

#[derive(Args)]
struct RunArgs {
    /// Suite directory or manifest file. Generated in memory from --suite-seed when absent.
    #[arg(long)]
    suite: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    suite_seed: u64,
    /// `oracle`, `null`, `mapper`, or a shell command for an external agent.
    #[arg(long)]
    agent: String,
    #[arg(long, value_enum, default_value = "test")]
    selection: SelectionArg,
    #[arg(long, value_enum, value_delimiter = ',')]
    tasks: Vec<TaskArg>,
    #[arg(long, value_enum, value_delimiter = ',')]
    difficulties: Vec<DifficultyArg>,
    /// Restrict to these base environments.
    #[arg(long, value_delimiter = ',')]
    bases: Vec<String>,
    /// Enforce the test matrix (default for the test selection).
    #[arg(long, overrides_with = "no_strict")]
    strict: bool,
    #[arg(long)]
    no_strict: bool,
    #[arg(long, default_value_t = 1)]
    parallelism: usize,
    /// Per-episode wall-clock budget in seconds.
    #[arg(long, default_value_t = DEFAULT_TIMEOUT.as_secs())]
    timeout_secs: u64,
    /// Directory for report.json and report.txt.
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    world: WorldArgs,
}

#[derive(Args)]
struct ScoreArgs {
    #[arg(long)]
    map: PathBuf,
    #[arg(long)]
    gt: PathBuf,
    #[arg(long, value_enum)]
    task: TaskArg,
}

#[derive(Args)]
struct ReportArgs {
    /// A report.json written by `run`.
    report: PathBuf,
    /// Print the machine-readable form instead of the table.
    #[arg(long)]
    json: bool,
}

fn main() -> ExitCode {
    match dispatch(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn dispatch(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Verb::Serve(a) => cmd_serve(a).map(|_| ExitCode::SUCCESS),
        Verb::Generate(a) => cmd_generate(a).map(|_| ExitCode::SUCCESS),
        Verb::Run(a) => cmd_run(a),
        Verb::Score(a) => cmd_score(a).map(|_| ExitCode::SUCCESS),
        Verb::Report(a) => cmd_report(a).map(|_| ExitCode::SUCCESS),
    }
}

fn load(path: &Path) -> Result<Suite> {
    load_suite(path).with_context(|| format!("loading suite from {}", path.display()))
}

fn run_config(selection: SelectionArg, world: &WorldArgs) -> RunConfig {
    let mut cfg = RunConfig::new(match selection {
        SelectionArg::Test => Selection::Test,
        SelectionArg::Dev => Selection::Dev,
    });
    cfg.seed = world.seed;
    cfg.noise = match world.noise {
        NoiseArg::Noiseless => NoisePreset::Noiseless,
        NoiseArg::Drift => NoisePreset::Drift,
    };
    cfg.detection = match world.detection {
        DetectionArg::Noiseless => DetectionPreset::Noiseless,
        DetectionArg::Typical => DetectionPreset::Typical,
    };
    cfg
}

fn cmd_serve(a: ServeArgs) -> Result<()> {
    let suite = Arc::new(load(&a.suite)?);
    let mut cfg = run_config(SelectionArg::Dev, &a.world);
    cfg.strict = a.strict;
    let server = Arc::new(Server::new(suite, cfg.server_config()));
    let listener = TcpListener::bind(&a.addr).with_context(|| format!("binding {}", a.addr))?;
    println!("listening on {}", listener.local_addr()?);
    serve(server, listener)?;
    Ok(())
}

fn cmd_generate(a: GenerateArgs) -> Result<()> {
    let bases: Vec<&str> = if a.bases.is_empty() { PRESET_NAMES.to_vec() } else { a.bases.iter().map(String::as_str).collect() };
    let suite = generate_suite(a.seed, &bases)?;
    let manifest = write_suite(&suite, &a.out)?;
    println!("wrote {} environments; manifest {}", suite.manifest.environments.len(), manifest.display());
    Ok(())
}

fn cmd_run(a: RunArgs) -> Result<ExitCode> {
    let suite = match &a.suite {
        Some(p) => load(p)?,
        None => generate_suite(a.suite_seed, &PRESET_NAMES)?,
    };
    let mut cfg = run_config(a.selection, &a.world);
    if !a.tasks.is_empty() {
        cfg.tasks = a.tasks.iter().map(|&t| t.into()).collect();
    }
    if !a.difficulties.is_empty() {
        cfg.difficulties = a.difficulties.iter().map(|&d| d.into()).collect();
    }
    if !a.bases.is_empty() {
        cfg.bases = Some(a.bases.clone());
    }
    if a.strict {
        cfg.strict = true;
    }
    if a.no_strict {
        cfg.strict = false;
    }
    if a.parallelism == 0 {
        bail!("--parallelism must be at least 1");
    }
    cfg.parallelism = a.parallelism;
    cfg.timeout = Duration::from_secs(a.timeout_secs);

    let report = run_suite(Arc::new(suite), &cfg, &AgentSpec::parse(&a.agent))?;
    let table = render_table(&report);
    print!("{table}");
    if let Some(out) = &a.out {
        std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
        std::fs::write(out.join("report.json"), report_to_bytes(&report))?;
        std::fs::write(out.join("report.txt"), &table)?;
    }
    Ok(if report.all_completed() { ExitCode::SUCCESS } else { ExitCode::from(EXIT_INCOMPLETE) })
}

fn cmd_score(a: ScoreArgs) -> Result<()> {
    let task: TaskKind = a.task.into();
    let report = score_files(&a.map, &a.gt, task)?;
    let gt = parse_gt_map(&std::fs::read(&a.gt)?, task)?;
    print!("{}", String::from_utf8(render_report(&report, &gt))?);
    Ok(())
}

fn cmd_report(a: ReportArgs) -> Result<()> {
    let bytes = std::fs::read(&a.report).with_context(|| format!("reading {}", a.report.display()))?;
    let report = report_from_bytes(&bytes)?;
    if a.json {
        let value = serde_json::to_value(&report)?;
        print!("{}", String::from_utf8(canonical_json(&value))?);
    } else {
        print!("{}", render_table(&report));
    }
    Ok(())
}
