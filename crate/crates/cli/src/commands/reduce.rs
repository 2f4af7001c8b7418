use infogeo::models::Model;
use infogeo::reduction::{self, FiberDiagnostics, ReduceOptions, ReducedStructure, ReductionError};
use nalgebra::DMatrix;
use rayon::prelude::*;
use serde_json::{json, Value};

use crate::args::ReduceArgs;
use crate::error::{CliError, Exit};
use crate::report::{self, matrix, tensor};
use crate::{load_model, load_points, Outcome};

const DEFAULT_POINTS: usize = 5;

fn diagnostics(d: &FiberDiagnostics) -> Value {
    json!({
        "kernel_rank": d.kernel_rank,
        "koszul_residual": d.koszul_residual,
        "lie_residual": d.lie_residual,
        "representative_residual": d.representative_residual,
        "transport_residual": d.transport_residual,
        "fiber_points": d.fiber_points,
    })
}

fn reduced(r: &ReducedStructure) -> Value {
    json!({
        "point": r.point,
        "representative": r.representative,
        "status": "reduced",
        "metric": matrix(&r.metric),
        "gamma_f": tensor(&r.gamma),
        "gamma_fstar": tensor(&r.gamma_dual),
        "condition": r.condition,
        "diagnostics": diagnostics(&r.diagnostics),
    })
}

/// Least-squares factor `c` with `g ≈ c·reference`, and `max |g − c·reference|`.
pub fn proportionality(g: &DMatrix<f64>, reference: &DMatrix<f64>) -> (f64, f64) {
    let c = g.dot(reference) / reference.dot(reference);
    let residual = (g - reference * c).iter().fold(0.0, |a: f64, v| a.max(v.abs()));
    (c, residual)
}

fn proportionality_summary(model: &Model, results: &[ReducedStructure]) -> Value {
    let Some(reference) = &model.reference.quotient_metric else {
        return Value::Null;
    };
    if results.is_empty() {
        return Value::Null;
    }
    let fits: Vec<(f64, f64)> = results.iter().map(|r| proportionality(&r.metric, &reference(&r.point))).collect();
    let ratios: Vec<f64> = fits.iter().map(|f| f.0).collect();
    let n = ratios.len() as f64;
    let mean = ratios.iter().sum::<f64>() / n;
    let std = (ratios.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / n).sqrt();
    json!({
        "ratios": ratios,
        "mean": mean,
        "std": std,
        "max_fit_residual": fits.iter().map(|f| f.1).fold(0.0, f64::max),
    })
}

pub fn run(args: &ReduceArgs) -> Result<Outcome, CliError> {
    let (model, source) = load_model(&args.model)?;
    let chart = model.chart(args.chart.as_deref()).ok_or_else(|| {
        let available: Vec<&str> = model.charts.iter().map(|c| c.name.as_str()).collect();
        CliError::Compute(match &args.chart {
            Some(id) => format!("model {} has no chart `{id}` (available: {available:?})", model.name),
            None => format!("model {} has no quotient chart", model.name),
        })
    })?;
    let points = load_points(&args.points, &chart.quotient_domain, DEFAULT_POINTS)?;
    let opts = ReduceOptions {
        tol: args.tol,
        transport_tol: args.transport_tol,
        fiber_checks: args.fiber_checks,
        ..ReduceOptions::default()
    };
    let section_defect = chart.section_defect(&points).map_err(CliError::compute)?;
    let attempts: Vec<Result<ReducedStructure, ReductionError>> =
        points.par_iter().map(|p| reduction::reduce(&model.contrast, chart, p, &opts)).collect();

    let mut entries = Vec::with_capacity(points.len());
    let mut successes = Vec::new();
    let mut refused = false;
    for (p, attempt) in points.iter().zip(attempts) {
        match attempt {
            Ok(r) => {
                entries.push(reduced(&r));
                successes.push(r);
            }
            Err(ReductionError::Failed(failure)) => {
                refused = true;
                let reasons: Vec<String> = failure.reasons.iter().map(|r| r.to_string()).collect();
                entries.push(json!({
                    "point": p,
                    "status": "refused",
                    "reasons": reasons,
                    "diagnostics": diagnostics(&failure.diagnostics),
                }));
            }
            Err(e @ (ReductionError::NotKoszul { .. } | ReductionError::RankChange { .. } | ReductionError::DomainExit { .. })) => {
                refused = true;
                entries.push(json!({ "point": p, "status": "refused", "reasons": [e.to_string()] }));
            }
            Err(e) => return Err(CliError::compute(e)),
        }
    }
    let flags = json!({
        "chart": chart.name,
        "fiber_checks": args.fiber_checks,
        "tol": args.tol,
        "transport_tol": args.transport_tol,
        "points": args.points.points,
        "random": args.points.random,
    });
    let seed = args.points.points.is_none().then_some(args.points.seed);
    Ok(Outcome {
        report: json!({
            "meta": report::meta("reduce", report::model_echo(&model, &source), seed, flags),
            "chart": { "name": chart.name, "quotient_dim": chart.quotient_dim, "section_defect": section_defect },
            "foliation_check": "checked at sample level",
            "points": entries,
            "proportionality": proportionality_summary(&model, &successes),
            "reduced": !refused,
        }),
        exit: if refused { Exit::ReduceRefused } else { Exit::Success },
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn proportionality_recovers_factor() {
        let r = DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0]);
        let (c, res) = proportionality(&(&r * 3.0), &r);
        assert!((c - 3.0).abs() < 1e-14 && res < 1e-14);
        let (_, res) = proportionality(&DMatrix::identity(2, 2), &r);
        assert!(res > 0.1);
    }
}
