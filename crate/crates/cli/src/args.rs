use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use ladder_core::{ComparePolicy, ConfigOverrides, ProblemFormat, RewardMode, ScannerChoice};

#[derive(Debug, Parser)]
#[command(name = "ladder", version, about = "Staged partial-credit judge for stdin/stdout programs")]
pub struct Cli {
    #[command(flatten)]
    pub judge: JudgeArgs,
    #[command(subcommand)]
    pub command: Command,
}

/// Judge settings shared by every subcommand. Precedence is
/// flag > environment > config file > built-in default.
#[derive(Debug, Args)]
pub struct JudgeArgs {
    /// TOML config file
    #[arg(long, global = true, env = "LADDER_CONFIG")]
    pub config: Option<PathBuf>,
    #[arg(long, global = true, env = "LADDER_MODE", value_name = "partial|binary")]
    pub mode: Option<RewardMode>,
    #[arg(long, global = true, env = "LADDER_ALPHA")]
    pub alpha: Option<f64>,
    #[arg(long, global = true, env = "LADDER_BETA")]
    pub beta: Option<f64>,
    #[arg(long, global = true, env = "LADDER_WALL_MS")]
    pub wall_ms: Option<u64>,
    #[arg(long, global = true, env = "LADDER_MEM_BYTES")]
    pub mem_bytes: Option<u64>,
    #[arg(long, global = true, env = "LADDER_MAX_OUTPUT_BYTES")]
    pub max_output_bytes: Option<usize>,
    #[arg(long, global = true, env = "LADDER_COMPARE", value_name = "strict|token")]
    pub compare: Option<ComparePolicy>,
    #[arg(long, global = true, env = "LADDER_SCANNER", value_name = "builtin|external|both")]
    pub scanner: Option<ScannerChoice>,
    /// Require every run (not just one) to complete / emit output for s2 / s3
    #[arg(long, global = true, env = "LADDER_STRICT_STAGES", num_args = 0..=1, require_equals = true, default_missing_value = "true")]
    pub strict_stages: Option<bool>,
    /// Run candidates in an empty network namespace (Linux)
    #[arg(long, global = true, env = "LADDER_NO_NETWORK", num_args = 0..=1, require_equals = true, default_missing_value = "true")]
    pub no_network: Option<bool>,
    #[arg(long, global = true, env = "LADDER_INTERPRETER")]
    pub interpreter: Option<String>,
    /// Parallel judges; 0 means one per CPU
    #[arg(long, global = true, env = "LADDER_WORKERS")]
    pub workers: Option<usize>,
    /// Declarative rules file replacing the builtin security rules
    #[arg(long, global = true, env = "LADDER_RULES")]
    pub rules: Option<PathBuf>,
}

impl JudgeArgs {
    pub fn overrides(&self) -> ConfigOverrides {
        ConfigOverrides {
            mode: self.mode,
            alpha: self.alpha,
            beta: self.beta,
            wall_ms: self.wall_ms,
            mem_bytes: self.mem_bytes,
            max_output_bytes: self.max_output_bytes,
            compare: self.compare,
            scanner: self.scanner,
            strict_stages: self.strict_stages,
            no_network: self.no_network,
            interpreter: self.interpreter.clone(),
            workers: self.workers,
        }
    }
}

#[derive(Debug, Args)]
pub struct ProblemArgs {
    /// Problem set (canonical JSONL or APPS+ JSON)
    #[arg(long, env = "LADDER_PROBLEMS")]
    pub problems: Option<PathBuf>,
    #[arg(long, env = "LADDER_PROBLEM_FORMAT", default_value = "canonical", value_name = "canonical|appsplus")]
    pub problem_format: ProblemFormat,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum OutputFormat {
    Text,
    Json,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Transport {
    Stdio,
    Tcp,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Judge one program
    Eval {
        /// Candidate file (a fenced block is extracted if present)
        code: PathBuf,
        #[command(flatten)]
        problems: ProblemArgs,
        /// Take the tests of this problem from --problems
        #[arg(long, env = "LADDER_PROBLEM_ID")]
        problem_id: Option<String>,
        /// Test input; pair each with an --expected
        #[arg(long, allow_hyphen_values = true)]
        input: Vec<String>,
        #[arg(long, allow_hyphen_values = true)]
        expected: Vec<String>,
        #[arg(long, env = "LADDER_FORMAT", value_enum, default_value = "text")]
        format: OutputFormat,
    },
    /// Judge every generation against its problem and aggregate
    Batch {
        #[command(flatten)]
        problems: ProblemArgs,
        /// Directory of <problem_id>.txt files or a JSONL file of {problem_id, raw}
        #[arg(long, env = "LADDER_GENERATIONS")]
        generations: PathBuf,
        /// Where to write the JSON report
        #[arg(long, env = "LADDER_OUT")]
        out: Option<PathBuf>,
        /// Where to dump one JSON record per judged candidate
        #[arg(long, env = "LADDER_RECORDS")]
        records: Option<PathBuf>,
        /// Summary printed on stdout: text, json or csv
        #[arg(long, env = "LADDER_FORMAT", default_value = "text")]
        format: ladder_core::metrics::ReportFormat,
    },
    /// Print security findings and R_sec for one file
    Scan {
        code: PathBuf,
        #[arg(long, env = "LADDER_FORMAT", value_enum, default_value = "text")]
        format: OutputFormat,
    },
    /// Run the JSON-lines reward server
    Serve {
        #[command(flatten)]
        problems: ProblemArgs,
        #[arg(long, env = "LADDER_TRANSPORT", value_enum, default_value = "stdio")]
        transport: Transport,
        #[arg(long, env = "LADDER_LISTEN", default_value = "127.0.0.1:7878")]
        listen: String,
        /// Pending requests allowed before the reader blocks; defaults to 2x workers
        #[arg(long, env = "LADDER_QUEUE_BOUND")]
        queue_bound: Option<usize>,
    },
    /// Render or compare saved batch reports
    #[command(subcommand)]
    Report(ReportCommand),
}

#[derive(Debug, Subcommand)]
pub enum ReportCommand {
    Render {
        report: PathBuf,
        #[arg(long, env = "LADDER_FORMAT", default_value = "text")]
        format: ladder_core::metrics::ReportFormat,
    },
    /// Side-by-side table; each argument is NAME=PATH or a path (named by its stem)
    Compare {
        #[arg(required = true)]
        reports: Vec<String>,
        #[arg(long, env = "LADDER_FORMAT", default_value = "text")]
        format: ladder_core::metrics::ReportFormat,
    },
}
