use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use promst::RunConfig;
use promst_envs::{EnvKind, ScoreMode};

#[derive(Debug, Parser)]
#[command(
    name = "promst",
    version,
    about = "Optimize, evaluate and report on task prompts for planning environments"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Search for a better prompt, writing a ledger and a report.
    Optimize(OptimizeArgs),
    /// Score one prompt on a set of generated instances.
    Evaluate(EvaluateArgs),
    /// Emit CSV tables from a ledger.
    Report(ReportArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
#[value(rename_all = "snake_case")]
pub enum ModeArg {
    Progress,
    ModifiedSubtractive,
    ModifiedDivisive,
}

impl From<ModeArg> for ScoreMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Progress => ScoreMode::Progress,
            ModeArg::ModifiedSubtractive => ScoreMode::ModifiedSubtractive,
            ModeArg::ModifiedDivisive => ScoreMode::ModifiedDivisive,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
#[value(rename_all = "snake_case")]
pub enum FactorArg {
    StepCount,
    CollisionCount,
}

impl From<FactorArg> for promst::ScoreFactor {
    fn from(f: FactorArg) -> Self {
        match f {
            FactorArg::StepCount => promst::ScoreFactor::StepCount,
            FactorArg::CollisionCount => promst::ScoreFactor::CollisionCount,
        }
    }
}

/// Options shared by every command that runs trials.
#[derive(Debug, Args)]
pub struct RunArgs {
    #[arg(long)]
    pub env: EnvKind,
    /// JSON file with run configuration fields; flags below override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Instance size overrides as JSON, e.g. '{"rows":4,"cols":4}'.
    #[arg(long)]
    pub size: Option<String>,
    #[arg(long)]
    pub templates: Option<PathBuf>,
    /// Backend for every role: live:MODEL@URL, scripted:FILE, tape:FILE, oracle or constant:TEXT.
    #[arg(long)]
    pub backend: Option<String>,
    /// Backend for the task agent; overrides --backend.
    #[arg(long)]
    pub task_backend: Option<String>,
    #[arg(long)]
    pub trials: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub jobs: Option<usize>,
    #[arg(long, value_enum)]
    pub score_mode: Option<ModeArg>,
    #[arg(long)]
    pub ratio: Option<f64>,
    #[arg(long, value_enum)]
    pub factor: Option<FactorArg>,
    #[arg(long)]
    pub dump_transcripts: Option<PathBuf>,
    /// Record every model exchange to this tape for later replay with scripted:FILE.jsonl.
    #[arg(long)]
    pub record_tape: Option<PathBuf>,
    /// Name of the environment variable holding the API key for live backends.
    #[arg(long, default_value = "PROMST_API_KEY")]
    pub api_key_var: String,
}

impl RunArgs {
    pub fn apply(&self, cfg: &mut RunConfig) {
        if let Some(t) = self.trials {
            cfg.trials_per_prompt = t;
        }
        if let Some(s) = self.seed {
            cfg.rng_seed = s;
        }
        if let Some(j) = self.jobs {
            cfg.jobs = j;
        }
        if let Some(m) = self.score_mode {
            cfg.score_mode = m.into();
        }
        if let Some(r) = self.ratio {
            cfg.preference_ratio = r;
        }
        if let Some(f) = self.factor {
            cfg.preference_factor = f.into();
        }
    }
}

#[derive(Debug, Args)]
pub struct OptimizeArgs {
    #[command(flatten)]
    pub run: RunArgs,
    /// Initial prompt; defaults to the built-in prompt for the environment.
    #[arg(long)]
    pub seed_prompt: Option<PathBuf>,
    #[arg(long, default_value = "ledger.jsonl")]
    pub ledger: PathBuf,
    /// Report JSON path; defaults to the ledger path with `.report.json`.
    #[arg(long)]
    pub report: Option<PathBuf>,
    /// Continue the run recorded in --ledger instead of starting over.
    #[arg(long)]
    pub resume: bool,
    #[arg(long)]
    pub sum_meta: Option<PathBuf>,
    #[arg(long)]
    pub gen_meta: Option<PathBuf>,
    /// Backend for summarizing feedback and writing candidates; overrides --backend.
    #[arg(long)]
    pub prompt_backend: Option<String>,
    /// Score predictor: ridge, process:COMMAND or tcp:HOST:PORT.
    #[arg(long, default_value = "ridge")]
    pub predictor: String,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[command(flatten)]
    pub run: RunArgs,
    /// Prompt to score; defaults to the built-in prompt for the environment.
    #[arg(long, alias = "seed-prompt")]
    pub prompt: Option<PathBuf>,
    /// Also write the full result as JSON.
    #[arg(long)]
    pub json: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    #[arg(long)]
    pub ledger: PathBuf,
    /// Per-level table; defaults to the ledger path with `.levels.csv`.
    #[arg(long)]
    pub levels: Option<PathBuf>,
    /// Prompt length table; defaults to the ledger path with `.tokens.csv`.
    #[arg(long)]
    pub tokens: Option<PathBuf>,
}
