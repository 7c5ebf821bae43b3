use std::path::PathBuf;

use clap::{ArgGroup, Args, Parser, Subcommand, ValueEnum};
use cxai_core::comparables::Method;
use cxai_core::trace::DesiderataConfig;

#[derive(Debug, Parser)]
#[command(name = "cxai", version, about = "Explain regression predictions with adjusted comparables")]
pub struct Cli {
    /// Repeat for more detail on stderr.
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    pub verbose: u8,
    /// Only report errors on stderr.
    #[arg(short, long, global = true)]
    pub quiet: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Explain one subject's prediction with its nearest comparables.
    Explain(ExplainArgs),
    /// Run a sweep over methods and numbers of comparables.
    Evaluate(EvaluateArgs),
    /// Vary one trace loss weight and report how the traces change.
    Sensitivity(SensitivityArgs),
    /// Serve the HTTP API.
    Serve(ServeArgs),
}

#[derive(Debug, Clone, Default, Args)]
pub struct DataArgs {
    /// CSV file with one column per attribute, the target and an optional `id`.
    #[arg(long)]
    pub dataset: Option<PathBuf>,
    /// Attribute schema JSON.
    #[arg(long)]
    pub schema: Option<PathBuf>,
    /// `knn[:K]`, `synthetic:<model.json>`, an http(s) URL, or `remote`
    /// to read the URL from COMPARABLES_PREDICTOR_URL.
    #[arg(long)]
    pub predictor: Option<String>,
    /// Seconds before a remote prediction call is abandoned.
    #[arg(long, default_value_t = 30.0)]
    pub predictor_timeout: f64,
}

#[derive(Debug, Clone, Default, Args)]
pub struct DesiderataArgs {
    #[arg(long)]
    pub lambda_f: Option<f64>,
    #[arg(long)]
    pub lambda_s: Option<f64>,
    #[arg(long)]
    pub lambda_d: Option<f64>,
    #[arg(long)]
    pub lambda_m: Option<f64>,
    #[arg(long)]
    pub lambda_e: Option<f64>,
    /// Change threshold in standardized units.
    #[arg(long)]
    pub delta: Option<f64>,
    /// Trace segment count (default: one per changed attribute).
    #[arg(long)]
    pub segments: Option<usize>,
    #[arg(long)]
    pub max_epochs: Option<usize>,
}

impl DesiderataArgs {
    pub fn apply(&self, cfg: &mut DesiderataConfig) {
        let set = |slot: &mut f64, v: Option<f64>| {
            if let Some(v) = v {
                *slot = v;
            }
        };
        set(&mut cfg.lambda_faithfulness, self.lambda_f);
        set(&mut cfg.lambda_sparsity, self.lambda_s);
        set(&mut cfg.lambda_disjointness, self.lambda_d);
        set(&mut cfg.lambda_monotonicity, self.lambda_m);
        set(&mut cfg.lambda_evenness, self.lambda_e);
        set(&mut cfg.delta, self.delta);
        if self.segments.is_some() {
            cfg.segments = self.segments;
        }
        if let Some(e) = self.max_epochs {
            cfg.max_epochs = e;
        }
    }
}

fn parse_method(s: &str) -> Result<Method, String> {
    s.parse::<Method>().map_err(|e| e.to_string())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ExplainFormat {
    Json,
    Csv,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ReportFormat {
    Table,
    Json,
    Csv,
}

#[derive(Debug, Args)]
#[command(group(ArgGroup::new("who").required(true).args(["subject", "values"])))]
pub struct ExplainArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// Subject row id (or zero-based row index).
    #[arg(long)]
    pub subject: Option<String>,
    /// Inline subject, e.g. `living_area=2.1,view=lake`.
    #[arg(long)]
    pub values: Option<String>,
    #[arg(long, value_parser = parse_method)]
    pub method: Method,
    #[arg(long, default_value_t = 3)]
    pub k: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    pub desiderata: DesiderataArgs,
    /// Write the explanation here instead of stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = ExplainFormat::Json)]
    pub format: ExplainFormat,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    /// Sweep spec JSON.
    pub spec: PathBuf,
    #[command(flatten)]
    pub data: DataArgs,
    /// Overrides the file's seed.
    #[arg(long)]
    pub seed: Option<u64>,
    #[command(flatten)]
    pub desiderata: DesiderataArgs,
    /// Directory for report.csv and report.json.
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
    /// What to print on stdout.
    #[arg(long, value_enum, default_value_t = ReportFormat::Table)]
    pub format: ReportFormat,
}

#[derive(Debug, Args)]
pub struct SensitivityArgs {
    /// Sensitivity spec JSON.
    pub spec: PathBuf,
    #[command(flatten)]
    pub data: DataArgs,
    /// Replaces the file's seed list with this single seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Overrides of the base loss weights; the varied weight still sweeps.
    #[command(flatten)]
    pub desiderata: DesiderataArgs,
    /// Directory for sensitivity.csv and sensitivity.json.
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
    #[arg(long, value_enum, default_value_t = ReportFormat::Table)]
    pub format: ReportFormat,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long, default_value = "127.0.0.1")]
    pub host: String,
    #[arg(long, default_value_t = 8080)]
    pub port: u16,
    /// Append decision-session events to this JSON-lines file.
    #[arg(long)]
    pub session_log: Option<PathBuf>,
}
