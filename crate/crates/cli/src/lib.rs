//! The `flatpose` command-line pipeline.

pub mod args;
pub mod commands;
pub mod config;
pub mod manifest;

use std::fmt;
use std::path::{Path, PathBuf};

use flatpose_core::fixtures::PARTS_XML;
use flatpose_server::ServerError;

use crate::args::{Cli, Command, ConvertArgs, EstimateArgs, EvalArgs, GenArgs, ServeArgs};
use crate::config::FileConfig;
use crate::manifest::RunManifest;

/// Command failure. Usage errors exit with 2, everything else with 1.
#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Runtime(String),
}

impl CliError {
    pub fn usage(msg: impl Into<String>) -> Self {
        Self::Usage(msg.into())
    }

    pub fn runtime(msg: impl Into<String>) -> Self {
        Self::Runtime(msg.into())
    }

    pub fn exit_code(&self) -> u8 {
        match self {
            Self::Usage(_) => 2,
            Self::Runtime(_) => 1,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Usage(m) | Self::Runtime(m) => f.write_str(m),
        }
    }
}

impl std::error::Error for CliError {}

impl From<ServerError> for CliError {
    fn from(e: ServerError) -> Self {
        match e {
            ServerError::Config(_) | ServerError::Models(_) => Self::usage(e.to_string()),
            ServerError::Bind(..) | ServerError::Io(_) => Self::runtime(e.to_string()),
        }
    }
}

fn to_value<T: serde::Serialize>(v: &T) -> serde_json::Value {
    serde_json::to_value(v).expect("config serializes")
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    let file = FileConfig::load(cli.config.as_deref())?;
    match cli.command {
        Command::Convert(a) => run_convert(a, file),
        Command::Gen(a) => run_gen(a, file),
        Command::Estimate(a) => run_estimate(a, file),
        Command::Eval(a) => run_eval(a, file),
        Command::Serve(a) => run_serve(a, file),
    }
}

fn run_convert(a: ConvertArgs, file: FileConfig) -> Result<(), CliError> {
    let mut section = file.convert;
    if let Some(t) = a.tolerance {
        section.tolerance = t;
    }
    if let Some(t) = a.thickness {
        section.thickness = t;
    }
    let (bytes, source) = match &a.input {
        Some(p) => (
            std::fs::read(p).map_err(|e| CliError::usage(format!("cannot read {}: {e}", p.display())))?,
            p.display().to_string(),
        ),
        None => (PARTS_XML.as_bytes().to_vec(), "<builtin fixtures>".to_string()),
    };
    let ids = commands::convert(&bytes, &source, &a.out, &section)?;
    let inputs: Vec<&Path> = a.input.as_deref().into_iter().collect();
    commands::write_dir_manifest(&a.out, RunManifest::new("convert", &inputs, None, to_value(&section)))?;
    tracing::info!(parts = ids.len(), out = %a.out.display(), "models written");
    Ok(())
}

fn run_gen(a: GenArgs, file: FileConfig) -> Result<(), CliError> {
    let mut section = file.gen;
    if let Some(n) = a.count {
        section.config.scenes = n;
    }
    if let Some(n) = a.images_per_scene {
        section.config.images_per_scene = n;
    }
    if let Some(n) = a.parts_per_scene {
        section.config.parts_per_scene = n;
    }
    if let Some(s) = a.seed {
        section.seed = s;
    }
    let images = commands::gen(&a.models_dir, &a.out, &section.config, section.seed)?;
    let manifest = RunManifest::new("gen", &[&a.models_dir], Some(section.seed), to_value(&section));
    commands::write_dir_manifest(&a.out, manifest)?;
    tracing::info!(scenes = section.config.scenes, images, out = %a.out.display(), "dataset written");
    Ok(())
}

fn default_models_dir(dataset: &Path, explicit: Option<PathBuf>) -> PathBuf {
    explicit.unwrap_or_else(|| dataset.join("models"))
}

fn run_estimate(a: EstimateArgs, file: FileConfig) -> Result<(), CliError> {
    let mut section = file.estimate;
    if let Some(n) = a.estimator {
        section.estimator = n;
    }
    if let Some(s) = a.seed {
        section.seed = s;
    }
    if let Some(v) = a.rot_sigma_deg {
        section.oracle.rot_sigma_deg = v;
    }
    if let Some(v) = a.trans_sigma_mm {
        section.oracle.trans_sigma_mm = v;
    }
    if let Some(v) = a.drop {
        section.oracle.drop = v;
    }
    let models_dir = default_models_dir(&a.dataset, a.models_dir);
    let records = commands::estimate(&a.dataset, &models_dir, &section)?;
    commands::write_records(&a.out, &records)?;
    let mut manifest =
        RunManifest::new("estimate", &[&a.dataset, &models_dir], Some(section.seed), to_value(&section));
    manifest.outputs = vec![a.out.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default()];
    manifest
        .write(&commands::sibling_manifest_path(&a.out))
        .map_err(|e| CliError::runtime(e.to_string()))?;
    tracing::info!(estimates = records.len(), out = %a.out.display(), "estimates written");
    Ok(())
}

fn run_eval(a: EvalArgs, file: FileConfig) -> Result<(), CliError> {
    let mut config = file.eval;
    if let Some(t) = a.vsd_tau {
        config.vsd_tau = t;
    }
    if a.vsd_tau_absolute {
        config.vsd_tau_absolute = true;
    }
    let models_dir = default_models_dir(&a.dataset, a.models_dir);
    let report = commands::eval(&a.dataset, &models_dir, &a.estimates, &a.out, &config)?;
    let manifest = RunManifest::new("eval", &[&a.dataset, &models_dir, &a.estimates], None, to_value(&config));
    commands::write_dir_manifest(&a.out, manifest)?;
    print!("{}", report.to_table());
    Ok(())
}

fn run_serve(a: ServeArgs, file: FileConfig) -> Result<(), CliError> {
    let mut config = file.serve;
    if let Some(b) = a.bind {
        config.bind = b;
    }
    if let Some(f) = a.max_fps {
        config.max_fps = f;
    }
    if let Some(e) = a.estimator {
        config.estimator = e;
    }
    if let Some(m) = a.models_dir {
        config.models_dir = Some(m);
    }
    let (state, shutdown) = flatpose_server::AppState::from_config(&config)?;
    let rt = tokio::runtime::Runtime::new().map_err(|e| CliError::runtime(e.to_string()))?;
    rt.block_on(async move {
        let (listener, addr) = flatpose_server::bind(&config.bind).await?;
        tracing::info!(estimator = %config.estimator, max_fps = config.max_fps, "listening on {addr}");
        let signal = async {
            let _ = tokio::signal::ctrl_c().await;
            tracing::info!("shutting down");
        };
        flatpose_server::serve(listener, state, shutdown, signal).await?;
        Ok(())
    })
}
