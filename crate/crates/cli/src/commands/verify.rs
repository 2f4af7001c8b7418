use infogeo::groupoid::{check_contrast, lrz_derivative, Side};
use infogeo::models::Model;
use infogeo::reduction::{self, DEFAULT_RANK_TOL};
use infogeo::sampling::Rng;
use infogeo::tensors;
use rayon::prelude::*;
use serde_json::{json, Value};

use crate::args::VerifyArgs;
use crate::error::{CliError, Exit};
use crate::report::{self, residual_summary};
use crate::{load_model, Outcome};

pub const SUITES: [&str; 10] =
    ["contrast", "symmetry", "agreement", "duality", "torsion", "koszul", "lie", "closure", "lc-equiv", "rank"];

pub fn expand_suites(list: &[String]) -> Result<Vec<&'static str>, CliError> {
    let mut out: Vec<&'static str> = Vec::new();
    for name in list.iter().map(|s| s.trim()).filter(|s| !s.is_empty()) {
        let add: Vec<&'static str> = if name == "all" {
            SUITES.to_vec()
        } else {
            vec![*SUITES
                .iter()
                .find(|s| **s == name)
                .ok_or_else(|| CliError::Flags(format!("unknown suite `{name}`")))?]
        };
        for s in add {
            if !out.contains(&s) {
                out.push(s);
            }
        }
    }
    if out.is_empty() {
        return Err(CliError::Flags("no suites selected".into()));
    }
    Ok(out)
}

fn max_abs(m: &nalgebra::DMatrix<f64>) -> f64 {
    m.iter().fold(0.0, |a, v| a.max(v.abs()))
}

/// Residual of one pointwise suite at one point.
fn pointwise(model: &Model, suite: &str, p: &[f64], tol: f64) -> Result<f64, String> {
    let f = &model.contrast;
    let e = |e: &dyn std::fmt::Display| e.to_string();
    Ok(match suite {
        "contrast" => {
            let r = check_contrast(f, &[p.to_vec()], tol).map_err(|x| e(&x))?;
            r.max_value.max(r.max_gradient)
        }
        "symmetry" => {
            let g = tensors::metric(f, p).map_err(|x| e(&x))?;
            let gd = tensors::metric(&f.dual(), p).map_err(|x| e(&x))?;
            let t = tensors::skewness(f, p).map_err(|x| e(&x))?;
            max_abs(&(&g - g.transpose())).max(max_abs(&(&g - gd))).max(t.symmetry_defect())
        }
        "agreement" => {
            let fr = f.frames();
            let mut worst: f64 = 0.0;
            for x in &fr {
                for y in &fr {
                    let v = |a, b| lrz_derivative(f, p, &[(x, a), (y, b)]);
                    let ll = v(Side::Left, Side::Left).map_err(|x| e(&x))?;
                    let lr = v(Side::Left, Side::Right).map_err(|x| e(&x))?;
                    let rr = v(Side::Right, Side::Right).map_err(|x| e(&x))?;
                    worst = worst.max((ll - lr).abs()).max((ll - rr).abs());
                }
            }
            worst
        }
        "duality" => tensors::duality_residual(f, p).map_err(|x| e(&x))?,
        "torsion" => tensors::torsion_residual(f, p).map_err(|x| e(&x))?,
        "koszul" => {
            let k = reduction::kernel_at(f, p, DEFAULT_RANK_TOL).map_err(|x| e(&x))?;
            if k.rank == 0 {
                0.0
            } else {
                reduction::koszul_residual(f, p, &k).map_err(|x| e(&x))?
            }
        }
        "lie" => {
            let k = reduction::kernel_at(f, p, DEFAULT_RANK_TOL).map_err(|x| e(&x))?;
            reduction::lie_derivative_residual(f, p, &k).map_err(|x| e(&x))?
        }
        "closure" => reduction::kernel_closure_residual(f, p, DEFAULT_RANK_TOL).map_err(|x| e(&x))?,
        "lc-equiv" => {
            let (g, gs) = tensors::christoffel_pair(f, p).map_err(|x| e(&x))?;
            let lc = tensors::levi_civita_lowered(f, p).map_err(|x| e(&x))?;
            g.zip_map(&gs, |a, b| 0.5 * (a + b)).max_abs_diff(&lc)
        }
        other => unreachable!("suite {other} is not pointwise"),
    })
}

fn run_suite(model: &Model, suite: &str, points: &[Vec<f64>], tol: f64) -> Result<Value, CliError> {
    if suite == "rank" {
        let r = reduction::check_constant_rank(&model.contrast, points, DEFAULT_RANK_TOL).map_err(CliError::compute)?;
        let reference = r.rank.unwrap_or_else(|| {
            // Most common rank when some points deviate.
            let mut counts = std::collections::BTreeMap::new();
            for &k in &r.ranks {
                *counts.entry(k).or_insert(0usize) += 1;
            }
            counts.into_iter().max_by_key(|&(k, c)| (c, std::cmp::Reverse(k))).map_or(0, |(k, _)| k)
        });
        let values: Vec<f64> = r.ranks.iter().map(|&k| k.abs_diff(reference) as f64).collect();
        let mut summary = residual_summary("rank", &values, points, tol);
        summary["metric_rank"] = json!(reference);
        summary["indeterminate_points"] = json!(r.indeterminate.len());
        return Ok(summary);
    }
    let values: Vec<f64> = points
        .par_iter()
        .map(|p| pointwise(model, suite, p, tol))
        .collect::<Result<_, _>>()
        .map_err(|e| CliError::Compute(format!("suite {suite}: {e}")))?;
    Ok(residual_summary(suite, &values, points, tol))
}

pub fn run(args: &VerifyArgs) -> Result<Outcome, CliError> {
    let suites = expand_suites(&args.suite)?;
    if !(args.tol >= 0.0) {
        return Err(CliError::Flags(format!("--tol must be non-negative, got {}", args.tol)));
    }
    let (model, source) = load_model(&args.model)?;
    let points = model.sample_points(&mut Rng::seeded(args.seed), args.samples);
    let results: Vec<Value> =
        suites.iter().map(|s| run_suite(&model, s, &points, args.tol)).collect::<Result<_, _>>()?;
    let passed = results.iter().all(|r| r["pass"] == json!(true));
    let flags = json!({ "suites": suites, "samples": args.samples, "tol": args.tol });
    Ok(Outcome {
        report: json!({
            "meta": report::meta("verify", report::model_echo(&model, &source), Some(args.seed), flags),
            "suites": results,
            "passed": passed,
        }),
        exit: if passed { Exit::Success } else { Exit::VerifyFailed },
    })
}
