//! Command implementations behind the `infogeo` binary.

pub mod args;
pub mod commands;
pub mod error;
pub mod report;

use std::path::Path;

use infogeo::models::{self, Model, ModelDescriptor, Params};
use infogeo::sampling::{Domain, Rng};
use serde_json::{json, Value};

use crate::args::{Command, ModelArgs, PointArgs};
use crate::error::{CliError, Exit};

/// A finished command: the JSON report and the exit status it implies.
#[derive(Debug)]
pub struct Outcome {
    pub report: Value,
    pub exit: Exit,
}

pub fn execute(command: &Command) -> Result<Outcome, CliError> {
    match command {
        Command::Analyze(a) => commands::analyze::run(a),
        Command::Verify(a) => commands::verify::run(a),
        Command::Reduce(a) => commands::reduce::run(a),
        Command::Optimize(a) => commands::optimize::run(a),
    }
}

pub fn parse_params(items: &[String]) -> Result<Params, CliError> {
    items
        .iter()
        .filter(|s| !s.trim().is_empty())
        .map(|s| {
            let (k, v) = s
                .split_once('=')
                .ok_or_else(|| CliError::Flags(format!("parameter `{s}` is not key=value")))?;
            Ok((k.trim().to_string(), v.trim().to_string()))
        })
        .collect()
}

/// Build the model and a JSON echo of where it came from.
pub fn load_model(args: &ModelArgs) -> Result<(Model, Value), CliError> {
    let params = parse_params(&args.params)?;
    match (&args.model, &args.model_file) {
        (Some(name), None) => Ok((models::build(name, &params)?, json!("builtin"))),
        (None, Some(path)) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| CliError::Flags(format!("reading {}: {e}", path.display())))?;
            let mut descriptor = ModelDescriptor::parse(&text)?;
            for (k, v) in params {
                descriptor.params.insert(k, toml::Value::String(v));
            }
            let model = descriptor.build()?;
            Ok((model, json!({ "file": path.display().to_string(), "descriptor": text })))
        }
        _ => Err(CliError::Flags("exactly one of --model and --model-file is required".into())),
    }
}

/// Points from `--points` (inline JSON or a file) or `--random N` drawn from
/// `domain`; `default_random` applies when neither is given.
pub fn load_points(args: &PointArgs, domain: &Domain, default_random: usize) -> Result<Vec<Vec<f64>>, CliError> {
    let points = match &args.points {
        Some(src) => {
            let text = if src.trim_start().starts_with('[') {
                src.clone()
            } else {
                std::fs::read_to_string(Path::new(src)).map_err(|e| CliError::Flags(format!("reading {src}: {e}")))?
            };
            serde_json::from_str::<Vec<Vec<f64>>>(&text)
                .map_err(|e| CliError::Flags(format!("--points: expected a JSON array of arrays: {e}")))?
        }
        None => domain.sample_n(&mut Rng::seeded(args.seed), args.random.unwrap_or(default_random)),
    };
    if let Some(p) = points.iter().find(|p| p.len() != domain.dim()) {
        return Err(CliError::Flags(format!("point {p:?} has {} coordinates, expected {}", p.len(), domain.dim())));
    }
    Ok(points)
}

/// Write `text` to `path`, or to stdout when `path` is `None`.
pub fn emit(text: &str, path: Option<&Path>) -> Result<(), CliError> {
    match path {
        Some(p) => std::fs::write(p, text).map_err(|source| CliError::Output { path: p.display().to_string(), source }),
        None => {
            use std::io::Write;
            std::io::stdout()
                .write_all(text.as_bytes())
                .map_err(|source| CliError::Output { path: "stdout".into(), source })
        }
    }
}
