//! `firecube`: build or synthesize a datacube, extract the forecasting
//! dataset, fit the climatology baseline, train and apply the reference
//! model, evaluate, and render maps.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

#[derive(Parser, Debug, Serialize)]
#[command(name = "firecube", version, about = "Wildfire datacube engine and burned-area forecasting pipeline")]
pub struct Cli {
    /// Seed for every random choice of the run.
    #[arg(long, global = true, default_value_t = 42)]
    pub seed: u64,

    /// Worker threads for parallel stages (0 = all cores). Outputs do not
    /// depend on this.
    #[arg(long, global = true, default_value_t = 0)]
    pub workers: usize,

    /// Cube store directory.
    #[arg(long, global = true, default_value = "cube.zarr")]
    pub store: PathBuf,

    /// Build manifest (JSON) describing the cube and its raw inputs.
    #[arg(long, global = true)]
    pub manifest: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug, Serialize)]
#[serde(tag = "command", rename_all = "kebab-case")]
pub enum Command {
    /// Ingest raw inputs listed in --manifest into the cube store.
    Build,
    /// Generate a synthetic cube into the store.
    Synth(SynthArgs),
    /// Cut the cube into patch shards, one dataset per lead time.
    Extract(ExtractArgs),
    /// Fit the weekly climatology baseline and persist it.
    Climatology(ClimatologyArgs),
    /// Train the per-pixel reference model on one lead's dataset.
    TrainRef(TrainArgs),
    /// Write prediction shards with a trained reference model.
    PredictRef(PredictArgs),
    /// Score prediction shards or a climatology table, one report per lead.
    Eval(EvalArgs),
    /// Render a global prediction or target map for one date.
    Render(RenderArgs),
}

#[derive(Args, Debug, Serialize)]
pub struct SynthArgs {
    /// World configuration JSON; flags below override its fields.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub resolution: Option<f64>,
    #[arg(long)]
    pub start_year: Option<i32>,
    #[arg(long)]
    pub years: Option<usize>,
    #[arg(long)]
    pub patch_px: Option<usize>,
    #[arg(long)]
    pub neighborhood_weight: Option<f64>,
    #[arg(long)]
    pub positive_rate: Option<f64>,
}

#[derive(Args, Debug, Serialize)]
pub struct ExtractArgs {
    /// Output directory; one `lead_<L>` dataset is written per lead.
    #[arg(long, default_value = "dataset")]
    pub out: PathBuf,
    #[arg(long, value_delimiter = ',')]
    pub leads: Option<Vec<usize>>,
    /// Split years as `train=2002-2017;val=2018;test=2019`.
    #[arg(long)]
    pub splits: Option<String>,
    #[arg(long, value_delimiter = ',')]
    pub channels: Option<Vec<String>>,
    #[arg(long)]
    pub patch_px: Option<usize>,
    #[arg(long)]
    pub shard_size: Option<usize>,
    /// Mark pad and no-data cells valid.
    #[arg(long)]
    pub include_invalid: bool,
}

#[derive(Args, Debug, Serialize)]
pub struct ClimatologyArgs {
    /// Output store for the table.
    #[arg(long, default_value = "climatology.zarr")]
    pub out: PathBuf,
    /// Fit years, e.g. `2002-2017` or `2002,2004`. Defaults to the training
    /// years of the default split.
    #[arg(long, conflicts_with = "fit_through_2018")]
    pub fit_years: Option<String>,
    /// Fit on 2002-2018.
    #[arg(long)]
    pub fit_through_2018: bool,
}

#[derive(Args, Debug, Serialize)]
pub struct TrainArgs {
    #[arg(long, default_value = "dataset")]
    pub dataset: PathBuf,
    #[arg(long, default_value_t = 1)]
    pub lead: usize,
    #[arg(long, default_value = "ref_model.json")]
    pub out: PathBuf,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    /// Hidden tanh units; 0 trains plain logistic regression.
    #[arg(long)]
    pub hidden: Option<usize>,
    /// Loss weight of positive pixels (off by default).
    #[arg(long)]
    pub pos_weight: Option<f64>,
}

#[derive(Args, Debug, Serialize)]
pub struct PredictArgs {
    #[arg(long, default_value = "dataset")]
    pub dataset: PathBuf,
    #[arg(long, default_value_t = 1)]
    pub lead: usize,
    #[arg(long, default_value = "ref_model.json")]
    pub params: PathBuf,
    /// Output root; shards go to `<out>/lead_<L>/`.
    #[arg(long, default_value = "preds")]
    pub out: PathBuf,
    #[arg(long, value_delimiter = ',', default_value = "val,test")]
    pub splits: Vec<String>,
}

#[derive(Args, Debug, Serialize)]
pub struct EvalArgs {
    #[arg(long, default_value = "dataset")]
    pub dataset: PathBuf,
    /// Prediction root (with `lead_<L>/` subdirectories) or a climatology
    /// store.
    #[arg(long)]
    pub preds: PathBuf,
    #[arg(long, default_value = "test")]
    pub split: String,
    /// Leads to evaluate; defaults to every lead in the dataset.
    #[arg(long, value_delimiter = ',')]
    pub leads: Option<Vec<usize>>,
    #[arg(long, default_value = "reports")]
    pub out: PathBuf,
    #[arg(long, default_value_t = firecube_core::metrics::DEFAULT_BINS)]
    pub bins: usize,
    /// Also write the PR curve of each report as CSV.
    #[arg(long)]
    pub pr_curve: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum RenderInput {
    Preds,
    Target,
    Pair,
}

#[derive(Args, Debug, Serialize)]
pub struct RenderArgs {
    #[arg(long, value_enum)]
    pub input: RenderInput,
    /// Input date; the target map is `lead` periods later.
    #[arg(long)]
    pub date: chrono::NaiveDate,
    #[arg(long, default_value = "dataset")]
    pub dataset: PathBuf,
    #[arg(long, default_value_t = 1)]
    pub lead: usize,
    #[arg(long, default_value = "preds")]
    pub preds: PathBuf,
    #[arg(long, default_value = "map.png")]
    pub out: PathBuf,
    /// Render spec JSON (palette, scale, missing threshold and color).
    #[arg(long)]
    pub palette: Option<PathBuf>,
    #[arg(long)]
    pub log_scale: bool,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => e.exit(),
        Err(e) => {
            let message = e.render().to_string();
            let first = message.lines().next().unwrap_or_default().trim_start_matches("error: ");
            eprintln!("{}", serde_json::json!({ "error": "usage", "message": first }));
            return ExitCode::from(2);
        }
    };
    match commands::run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", commands::error_json(&e));
            ExitCode::FAILURE
        }
    }
}
