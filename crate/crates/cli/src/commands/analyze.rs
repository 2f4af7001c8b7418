use infogeo::reduction;
use infogeo::tensors;
use rayon::prelude::*;
use serde_json::{json, Map, Value};

use crate::args::AnalyzeArgs;
use crate::error::{CliError, Exit};
use crate::report::{self, columns, matrix, tensor};
use crate::{load_model, load_points, Outcome};

fn analyze_point(model: &infogeo::models::Model, p: &[f64], rank_tol: f64, alphas: &[f64]) -> Result<Value, CliError> {
    let f = &model.contrast;
    let (gamma, gamma_dual) = tensors::christoffel_pair(f, p).map_err(CliError::compute)?;
    let lc = tensors::levi_civita_lowered(f, p).map_err(CliError::compute)?;
    let skew = gamma.zip_map(&gamma_dual, |a, b| a - b);
    let frame = reduction::kernel_at(f, p, rank_tol).map_err(CliError::compute)?;
    let mut alpha = Map::new();
    for &a in alphas {
        let t = lc.zip_map(&skew, |l, s| l - 0.5 * a * s);
        alpha.insert(format!("{a}"), tensor(&t));
    }
    let mut out = json!({
        "coords": p,
        "metric": matrix(&frame.metric),
        "gamma_f": tensor(&gamma),
        "gamma_fstar": tensor(&gamma_dual),
        "gamma_lc": tensor(&lc),
        "skewness": tensor(&skew),
        "kernel": {
            "rank": frame.rank,
            "basis": columns(&frame.kernel),
            "eigenvalues": frame.eigenvalues,
            "indeterminate": frame.indeterminate,
        },
    });
    if !alphas.is_empty() {
        out["alpha"] = Value::Object(alpha);
    }
    Ok(out)
}

pub fn run(args: &AnalyzeArgs) -> Result<Outcome, CliError> {
    let (model, source) = load_model(&args.model)?;
    let points = load_points(&args.points, &model.domain, 1)?;
    let analyzed: Vec<Value> = points
        .par_iter()
        .map(|p| analyze_point(&model, p, args.tol, &args.alpha))
        .collect::<Result<_, _>>()?;
    let flags = json!({
        "tol": args.tol,
        "alpha": args.alpha,
        "points": args.points.points,
        "random": args.points.random,
    });
    let seed = args.points.points.is_none().then_some(args.points.seed);
    Ok(Outcome {
        report: json!({
            "meta": report::meta("analyze", report::model_echo(&model, &source), seed, flags),
            "points": analyzed,
        }),
        exit: Exit::Success,
    })
}
