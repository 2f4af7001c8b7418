//! JSON report assembly. Every float is written as `{:.16e}` (17 significant
//! digits); map keys are sorted.

use std::str::FromStr;

use infogeo::linalg::{to_rows, Tensor3};
use infogeo::models::Model;
use infogeo::sampling::RNG_NAME;
use nalgebra::DMatrix;
use serde::Serialize;
use serde_json::{json, Map, Number, Value};

pub const SCHEMA: &str = "infogeo.report/v1";

pub fn to_value(v: impl Serialize) -> Value {
    serde_json::to_value(v).expect("report values are serializable")
}

pub fn matrix(m: &DMatrix<f64>) -> Value {
    to_value(to_rows(m))
}

pub fn columns(m: &DMatrix<f64>) -> Value {
    to_value(m.column_iter().map(|c| c.iter().copied().collect::<Vec<f64>>()).collect::<Vec<_>>())
}

pub fn tensor(t: &Tensor3) -> Value {
    to_value(t.to_nested())
}

/// Echo of the model as built.
pub fn model_echo(model: &Model, source: &Value) -> Value {
    json!({
        "name": model.name,
        "params": model.params,
        "coordinates": model.coordinates,
        "base_dim": model.base_dim(),
        "backend": model.contrast.backend().name(),
        "source": source,
    })
}

pub fn meta(command: &str, model: Value, seed: Option<u64>, flags: Value) -> Value {
    json!({
        "schema": SCHEMA,
        "tool": "infogeo",
        "version": env!("CARGO_PKG_VERSION"),
        "command": command,
        "model": model,
        "seed": seed,
        "rng": RNG_NAME,
        "flags": flags,
    })
}

/// Summary of one residual over many samples.
pub fn residual_summary(name: &str, values: &[f64], points: &[Vec<f64>], tol: f64) -> Value {
    let max = values.iter().copied().fold(0.0, f64::max);
    let mean = if values.is_empty() { 0.0 } else { values.iter().sum::<f64>() / values.len() as f64 };
    let worst = values
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .map(|(i, _)| points[i].clone());
    let finite = values.iter().all(|v| v.is_finite());
    json!({
        "name": name,
        "samples": values.len(),
        "max": max,
        "mean": mean,
        "tolerance": tol,
        "pass": finite && max <= tol,
        "worst_point": worst,
    })
}

fn canonical(v: Value) -> Value {
    match v {
        Value::Number(n) => {
            let s = n.to_string();
            if s.contains(['.', 'e', 'E']) {
                let x = f64::from_str(&s).expect("serde_json numbers parse as f64");
                Value::Number(Number::from_str(&format!("{x:.16e}")).expect("formatted float is a JSON number"))
            } else {
                Value::Number(n)
            }
        }
        Value::Array(a) => Value::Array(a.into_iter().map(canonical).collect()),
        Value::Object(o) => Value::Object(o.into_iter().map(|(k, v)| (k, canonical(v))).collect::<Map<_, _>>()),
        other => other,
    }
}

pub fn render(v: Value) -> String {
    let mut s = serde_json::to_string_pretty(&canonical(v)).expect("values render");
    s.push('\n');
    s
}
