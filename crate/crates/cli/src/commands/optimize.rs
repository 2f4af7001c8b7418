use std::path::Path;

use infogeo::models::Model;
use infogeo::natgrad::{self, OptimizeError, OptimizeProblem, Trajectory};
use infogeo::sampling::Rng;
use serde_json::{json, Value};

use crate::args::OptimizeArgs;
use crate::error::{CliError, Exit};
use crate::report::{self, to_value};
use crate::{load_model, Outcome};

/// Target from `name=value` pairs or plain values; unset coordinates take the
/// midpoint of the sampling box.
pub fn parse_target(model: &Model, items: &[String]) -> Result<Vec<f64>, CliError> {
    let d = &model.domain;
    let mut target: Vec<f64> = d.lo.iter().zip(&d.hi).map(|(a, b)| 0.5 * (a + b)).collect();
    let number = |s: &str| -> Result<f64, CliError> {
        s.trim().parse().map_err(|_| CliError::Flags(format!("--target: `{s}` is not a number")))
    };
    let named = items.iter().any(|s| s.contains('='));
    if named {
        for item in items {
            let (k, v) = item
                .split_once('=')
                .ok_or_else(|| CliError::Flags(format!("--target: mix of named and positional values at `{item}`")))?;
            let i = model.coordinates.iter().position(|c| c == k.trim()).ok_or_else(|| {
                CliError::Flags(format!("--target: unknown coordinate `{k}` (model has {:?})", model.coordinates))
            })?;
            target[i] = number(v)?;
        }
    } else if !items.is_empty() {
        if items.len() != target.len() {
            return Err(CliError::Flags(format!(
                "--target has {} values, model has dimension {}",
                items.len(),
                target.len()
            )));
        }
        for (t, s) in target.iter_mut().zip(items) {
            *t = number(s)?;
        }
    }
    Ok(target)
}

fn starts(args: &OptimizeArgs, model: &Model) -> Result<Vec<Vec<f64>>, CliError> {
    let n = model.base_dim();
    if !args.theta0.is_empty() && args.theta0.len() != n {
        return Err(CliError::Flags(format!("--theta0 has {} values, model has dimension {n}", args.theta0.len())));
    }
    let mut rng = Rng::seeded(args.seed);
    let mut out = Vec::with_capacity(args.starts.max(1));
    if !args.theta0.is_empty() {
        out.push(args.theta0.clone());
    }
    while out.len() < args.starts.max(1) {
        out.push(model.domain.sample(&mut rng));
    }
    Ok(out)
}

fn start_error(e: OptimizeError) -> CliError {
    match e {
        OptimizeError::OutsideDomain(_) | OptimizeError::StepSize(_) | OptimizeError::Target { .. } => {
            CliError::Flags(e.to_string())
        }
        e => CliError::compute(e),
    }
}

fn sci(x: f64) -> String {
    format!("{x:.16e}")
}

/// CSV projection of the trajectories: one row per recorded step.
pub fn write_csv(path: &Path, coordinates: &[String], runs: &[Trajectory]) -> Result<(), CliError> {
    let io = |e: csv::Error| CliError::Output { path: path.display().to_string(), source: e.into() };
    let mut w = csv::Writer::from_path(path).map_err(io)?;
    let mut header = vec!["run".to_string(), "step".to_string()];
    header.extend(coordinates.iter().map(|c| format!("theta_{c}")));
    header.extend(["objective", "grad_norm", "condition", "kernel_rank", "halvings"].map(String::from));
    w.write_record(&header).map_err(io)?;
    for (run, t) in runs.iter().enumerate() {
        for r in &t.records {
            let mut row = vec![run.to_string(), r.step.to_string()];
            row.extend(r.theta.iter().copied().map(sci));
            row.extend([sci(r.objective), sci(r.grad_norm), sci(r.condition)]);
            row.extend([r.kernel_rank.to_string(), r.halvings.to_string()]);
            w.write_record(&row).map_err(io)?;
        }
    }
    w.flush().map_err(|source| CliError::Output { path: path.display().to_string(), source })
}

pub fn run(args: &OptimizeArgs) -> Result<Outcome, CliError> {
    let (model, source) = load_model(&args.model)?;
    if model.base_dim() == 0 {
        return Err(CliError::Compute(format!("model {} has no base coordinates to optimize", model.name)));
    }
    let target = parse_target(&model, &args.target)?;
    let theta0s = starts(args, &model)?;
    let echo = report::model_echo(&model, &source);
    let coordinates = model.coordinates.clone();
    let problem = OptimizeProblem::towards(model, &target, args.eta, args.steps, args.grad_tol).map_err(start_error)?;
    let runs: Vec<Trajectory> = natgrad::run_many(&problem, &theta0s)
        .into_iter()
        .collect::<Result<_, _>>()
        .map_err(start_error)?;
    if let Some(path) = &args.csv {
        write_csv(path, &coordinates, &runs)?;
    }
    let all_converged = runs.iter().all(Trajectory::converged);
    let runs_json: Vec<Value> = runs
        .iter()
        .zip(&theta0s)
        .map(|(t, start)| {
            let distance = t.final_theta().iter().zip(&target).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            json!({
                "theta0": start,
                "final_theta": t.final_theta(),
                "max_abs_error_to_target": distance,
                "steps": t.steps_taken(),
                "stop": to_value(&t.stop),
                "converged": t.converged(),
                "koszul": to_value(&t.koszul),
                "trajectory": to_value(&t.records),
            })
        })
        .collect();
    let flags = json!({
        "target": target,
        "eta": args.eta,
        "steps": args.steps,
        "grad_tol": args.grad_tol,
        "starts": theta0s.len(),
        "csv": args.csv.as_ref().map(|p| p.display().to_string()),
        "require_converged": args.require_converged,
    });
    Ok(Outcome {
        report: json!({
            "meta": report::meta("optimize", echo, Some(args.seed), flags),
            "runs": runs_json,
            "converged": all_converged,
        }),
        exit: if args.require_converged && !all_converged { Exit::NotConverged } else { Exit::Success },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use infogeo::models;

    #[test]
    fn targets_by_name_position_and_default() {
        let m = models::gaussian_kl(false).unwrap();
        assert_eq!(parse_target(&m, &["sigma=2".into(), "mu=1".into()]).unwrap(), vec![1.0, 2.0]);
        assert_eq!(parse_target(&m, &["-1".into(), "0.5".into()]).unwrap(), vec![-1.0, 0.5]);
        assert_eq!(parse_target(&m, &[]).unwrap(), vec![0.0, 1.75]);
        assert!(parse_target(&m, &["nu=1".into()]).is_err());
        assert!(parse_target(&m, &["1".into()]).is_err());
    }
}
