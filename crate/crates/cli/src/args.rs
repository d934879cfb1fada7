use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(name = "flatpose", version, about = "Flat-part pose toolkit: models, datasets, estimation, evaluation, serving")]
pub struct Cli {
    /// TOML file with [convert], [gen], [estimate], [eval] and [serve] sections.
    #[arg(long, global = true, env = "FLATPOSE_CONFIG")]
    pub config: Option<PathBuf>,

    /// Log filter, e.g. `info` or `flatpose_server=debug`.
    #[arg(long, global = true, env = "FLATPOSE_LOG", default_value = "info")]
    pub log: String,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Manufacturing document (XML with SVG paths) to PLY models.
    Convert(ConvertArgs),
    /// Synthetic BOP-style dataset from a models directory.
    Gen(GenArgs),
    /// Runs an estimator over a dataset and writes JSON-lines estimates.
    Estimate(EstimateArgs),
    /// Scores estimates against a dataset.
    Eval(EvalArgs),
    /// Starts the WebSocket pose service.
    Serve(ServeArgs),
}

#[derive(Debug, Args)]
pub struct ConvertArgs {
    /// Input document; omit with --builtin-fixtures.
    #[arg(long, short, env = "FLATPOSE_INPUT", required_unless_present = "builtin_fixtures")]
    pub input: Option<PathBuf>,
    /// Use the bundled 15-part document.
    #[arg(long, conflicts_with = "input")]
    pub builtin_fixtures: bool,
    #[arg(long, short, env = "FLATPOSE_OUT")]
    pub out: PathBuf,
    /// Curve flattening tolerance (mm).
    #[arg(long, env = "FLATPOSE_TOLERANCE")]
    pub tolerance: Option<f64>,
    /// Sheet thickness (mm).
    #[arg(long, env = "FLATPOSE_THICKNESS")]
    pub thickness: Option<f64>,
}

#[derive(Debug, Args)]
pub struct GenArgs {
    #[arg(long, env = "FLATPOSE_MODELS_DIR")]
    pub models_dir: PathBuf,
    #[arg(long, short, env = "FLATPOSE_OUT")]
    pub out: PathBuf,
    /// Number of scenes.
    #[arg(long, env = "FLATPOSE_COUNT")]
    pub count: Option<usize>,
    #[arg(long, env = "FLATPOSE_IMAGES_PER_SCENE")]
    pub images_per_scene: Option<usize>,
    #[arg(long, env = "FLATPOSE_PARTS_PER_SCENE")]
    pub parts_per_scene: Option<usize>,
    #[arg(long, env = "FLATPOSE_SEED")]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct EstimateArgs {
    #[arg(long, env = "FLATPOSE_DATASET")]
    pub dataset: PathBuf,
    /// Output JSON-lines file.
    #[arg(long, short, env = "FLATPOSE_OUT")]
    pub out: PathBuf,
    /// `oracle`, `contour` or `null`.
    #[arg(long, env = "FLATPOSE_ESTIMATOR")]
    pub estimator: Option<String>,
    /// Models directory; defaults to `<dataset>/models`.
    #[arg(long, env = "FLATPOSE_MODELS_DIR")]
    pub models_dir: Option<PathBuf>,
    #[arg(long, env = "FLATPOSE_SEED")]
    pub seed: Option<u64>,
    #[arg(long)]
    pub rot_sigma_deg: Option<f64>,
    #[arg(long)]
    pub trans_sigma_mm: Option<f64>,
    #[arg(long)]
    pub drop: Option<f64>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long, env = "FLATPOSE_DATASET")]
    pub dataset: PathBuf,
    #[arg(long, env = "FLATPOSE_ESTIMATES")]
    pub estimates: PathBuf,
    /// Report directory (report.json, report.txt, manifest.json).
    #[arg(long, short, env = "FLATPOSE_OUT")]
    pub out: PathBuf,
    #[arg(long, env = "FLATPOSE_MODELS_DIR")]
    pub models_dir: Option<PathBuf>,
    /// VSD tolerance as a fraction of the diameter (or mm with --vsd-tau-absolute).
    #[arg(long)]
    pub vsd_tau: Option<f64>,
    #[arg(long)]
    pub vsd_tau_absolute: bool,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long, env = "FLATPOSE_BIND")]
    pub bind: Option<String>,
    #[arg(long, env = "FLATPOSE_MAX_FPS")]
    pub max_fps: Option<f64>,
    #[arg(long, env = "FLATPOSE_ESTIMATOR")]
    pub estimator: Option<String>,
    #[arg(long, env = "FLATPOSE_MODELS_DIR")]
    pub models_dir: Option<PathBuf>,
}
