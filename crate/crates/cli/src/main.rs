//! `idfra` command-line front end.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand, ValueEnum};

use idfra::orchestrator::OrchestratorError;

/// Exit status for command-line usage errors.
const EXIT_USAGE: u8 = 64;
const EXIT_NO_QUALIFIED: u8 = 2;

#[derive(Debug, Parser)]
#[command(name = "idfra", version, about = "Iterative block-assembly design: plan, simulate, judge, re-plan")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

/// Settings shared by every command. Precedence: flag, then environment,
/// then the config file, then built-in defaults.
#[derive(Debug, Args, Default, Clone)]
pub struct GlobalArgs {
    /// Config file; `idfra.toml` in the working directory is read when present.
    #[arg(long, global = true, env = "IDFRA_CONFIG", value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Model backend.
    #[arg(long, global = true, env = "IDFRA_BACKEND", value_enum)]
    pub backend: Option<BackendKind>,
    /// Recorded transcript to replay; implies `--backend replay`.
    #[arg(long, global = true, env = "IDFRA_REPLAY", value_name = "JSONL")]
    pub replay: Option<PathBuf>,
    /// Base seed for simulation noise, staging and distractor sampling.
    #[arg(long, global = true, env = "IDFRA_SEED")]
    pub seed: Option<u64>,
    /// Root directory for run artifacts.
    #[arg(long, global = true, env = "IDFRA_RUNS_ROOT", value_name = "DIR")]
    pub runs_root: Option<PathBuf>,
    /// Directory of prompt templates overriding the built-in ones.
    #[arg(long, global = true, env = "IDFRA_PROMPTS", value_name = "DIR")]
    pub prompts: Option<PathBuf>,
    /// Model identifier sent with every request.
    #[arg(long, global = true, env = "IDFRA_MODEL")]
    pub model: Option<String>,
    /// Base URL of an OpenAI-compatible endpoint (live backend).
    #[arg(long, global = true, env = "IDFRA_BASE_URL", value_name = "URL")]
    pub base_url: Option<String>,
    /// Environment variable holding the API key (live backend).
    #[arg(long, global = true, env = "IDFRA_API_KEY_ENV", value_name = "VAR")]
    pub api_key_env: Option<String>,
    /// Stub backend only: every design asks for a block that is not available.
    #[arg(long, global = true)]
    pub stub_all_missing: bool,
    /// More log output (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackendKind {
    /// OpenAI-compatible HTTP endpoint.
    Live,
    /// Recorded transcript; no network.
    Replay,
    /// Built-in scripted designer; no network.
    Stub,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum View {
    Iso,
    Front,
    Top,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Colors {
    /// Block colors from the plan.
    Plan,
    /// Every block green.
    Green,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the full design loop for a target and select a final design.
    Run(RunArgs),
    /// Execute a plan once in the simulator and write the report and frames.
    Exec(ExecArgs),
    /// Render a plan after noise-free settling.
    Render(RenderArgs),
    /// Match a plan against an inventory and check workspace constraints.
    Validate(ValidateArgs),
    /// Evaluation harnesses.
    #[command(subcommand)]
    Eval(EvalCommand),
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// Target structure, e.g. "house".
    pub target: String,
    /// Block inventory JSON.
    pub inventory: PathBuf,
    /// Number of design iterations.
    #[arg(long, env = "IDFRA_ITERATIONS")]
    pub iterations: Option<u32>,
    /// Run directory name under the runs root (default `<target>-s<seed>`).
    #[arg(long)]
    pub run_id: Option<String>,
}

#[derive(Debug, Args)]
pub struct ExecArgs {
    /// Explicit assembly plan JSON.
    pub plan: PathBuf,
    /// Block inventory JSON.
    #[arg(long)]
    pub inventory: PathBuf,
    /// Output directory.
    #[arg(long, default_value = "exec")]
    pub out: PathBuf,
    /// Disable placement noise.
    #[arg(long)]
    pub noiseless: bool,
    #[arg(long, value_enum, default_value_t = Colors::Plan)]
    pub colors: Colors,
}

#[derive(Debug, Args)]
pub struct RenderArgs {
    /// Explicit assembly plan JSON.
    pub plan: PathBuf,
    /// Block inventory JSON.
    #[arg(long)]
    pub inventory: PathBuf,
    /// Output PNG.
    #[arg(long, default_value = "render.png")]
    pub out: PathBuf,
    /// Camera; defaults to the configured camera.
    #[arg(long, value_enum)]
    pub view: Option<View>,
}

#[derive(Debug, Args)]
pub struct ValidateArgs {
    /// Explicit assembly plan JSON.
    pub plan: PathBuf,
    /// Block inventory JSON.
    pub inventory: PathBuf,
}

#[derive(Debug, Subcommand)]
pub enum EvalCommand {
    /// Rank a candidate list against an image and report top-1 and average rank.
    Rank(RankArgs),
    /// Repeated noisy executions of one plan.
    Feasibility(FeasibilityArgs),
    /// Pairwise improvement scores across the iterations of a run.
    Improvement(ImprovementArgs),
    /// Tally pairwise preference votes.
    Tally(TallyArgs),
}

#[derive(Debug, Args)]
pub struct RankArgs {
    /// Image of the assembly.
    pub image: PathBuf,
    /// Correct label; must be in the pool.
    #[arg(long)]
    pub label: String,
    /// Candidate list sizes.
    #[arg(long = "n", value_delimiter = ',', default_values_t = [5usize, 10, 15, 20])]
    pub list_sizes: Vec<usize>,
    /// Queries per list size.
    #[arg(long, default_value_t = 45)]
    pub runs: usize,
    /// Label pool file, one label per line (default: built-in pool).
    #[arg(long, value_name = "FILE")]
    pub pool: Option<PathBuf>,
    /// Method name written to the CSV.
    #[arg(long, default_value = "idfra")]
    pub method: String,
    #[arg(long, default_value = "rank.csv")]
    pub out: PathBuf,
    /// Also write the per-trial rankings as JSON.
    #[arg(long, value_name = "FILE")]
    pub trials_out: Option<PathBuf>,
    /// Record the model calls as a transcript.
    #[arg(long, value_name = "JSONL")]
    pub record: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct FeasibilityArgs {
    /// Explicit assembly plan JSON.
    pub plan: PathBuf,
    /// Block inventory JSON (default: exactly the blocks the plan uses).
    #[arg(long)]
    pub inventory: Option<PathBuf>,
    #[arg(long, default_value_t = 10)]
    pub trials: usize,
    /// Disable placement noise.
    #[arg(long)]
    pub noiseless: bool,
    #[arg(long, default_value = "feasibility.csv")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ImprovementArgs {
    /// Run directory containing runlog.json.
    pub run_dir: PathBuf,
    /// Human tie-break verdicts, CSV `a,b,winner`.
    #[arg(long, value_name = "CSV", conflicts_with = "model_compare")]
    pub verdicts: Option<PathBuf>,
    /// Break ties with pairwise model calls on the configured backend.
    #[arg(long)]
    pub model_compare: bool,
    /// Output CSV (default: `<run_dir>/improvement.csv`).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TallyArgs {
    /// Votes CSV: `assembly,voter,choice,mapping` with mapping `A=<method>;B=<method>`.
    pub votes: PathBuf,
    /// Method whose overall win rate is reported.
    #[arg(long, default_value = "idfra")]
    pub method: String,
    #[arg(long, default_value = "tally.csv")]
    pub out: PathBuf,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => EXIT_USAGE,
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let level = match cli.global.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match commands::dispatch(&cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            if let Some(OrchestratorError::NoQualifiedDesign) = e.downcast_ref::<OrchestratorError>() {
                eprintln!("error: {e}");
                return ExitCode::from(EXIT_NO_QUALIFIED);
            }
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
