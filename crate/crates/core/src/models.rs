//! The model zoo and the descriptor file format.

use std::collections::BTreeMap;
use std::sync::Arc;

use nalgebra::DMatrix;
use serde::Deserialize;
use thiserror::Error;

use crate::expr::{self, ParseError};
use crate::groupoid::{ContrastFunction, GroupoidError, Groupoid, MatrixLieGroup, PairGroupoid, Section};
use crate::jets::{FnScalar, FnVector, Jet3, Result as JetResult};
use crate::linalg::Tensor3;
use crate::reduction::QuotientChart;
use crate::sampling::{Constraint, Domain, Rng};
use crate::tensors::{self, TensorError};

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("unknown model `{0}`")]
    Unknown(String),
    #[error("parameter `{name}`: {reason}")]
    Param { name: String, reason: String },
    #[error("contrast expression: {0}")]
    Parse(#[from] ParseError),
    #[error(transparent)]
    Groupoid(#[from] GroupoidError),
    #[error("descriptor: {0}")]
    Descriptor(String),
}

pub type Result<T> = std::result::Result<T, ModelError>;

/// Model parameters as `key = value` text.
pub type Params = BTreeMap<String, String>;

pub type MetricFn = Arc<dyn Fn(&[f64]) -> DMatrix<f64> + Send + Sync>;
pub type SymbolFn = Arc<dyn Fn(&[f64]) -> Tensor3 + Send + Sync>;

/// Closed-form tensors for comparison against derived ones.
#[derive(Clone, Default)]
pub struct Reference {
    pub metric: Option<MetricFn>,
    pub gamma: Option<SymbolFn>,
    pub gamma_dual: Option<SymbolFn>,
    pub skewness: Option<SymbolFn>,
    /// Metric on the primary quotient chart that the reduced metric is
    /// expected to be a constant multiple of.
    pub quotient_metric: Option<MetricFn>,
}

#[derive(Clone)]
pub struct Model {
    pub name: String,
    pub params: Params,
    /// Names of the base coordinates, in order.
    pub coordinates: Vec<String>,
    pub contrast: ContrastFunction,
    pub domain: Domain,
    pub reference: Reference,
    /// Quotient charts; the first is the primary one.
    pub charts: Vec<QuotientChart>,
    /// `F = F*` by construction.
    pub self_dual: bool,
}

impl std::fmt::Debug for Model {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Model")
            .field("name", &self.name)
            .field("params", &self.params)
            .field("backend", &self.contrast.backend().name())
            .finish_non_exhaustive()
    }
}

impl Model {
    pub fn base_dim(&self) -> usize {
        self.contrast.base_dim()
    }

    pub fn sample_points(&self, rng: &mut Rng, n: usize) -> Vec<Vec<f64>> {
        self.domain.sample_n(rng, n)
    }

    pub fn chart(&self, id: Option<&str>) -> Option<&QuotientChart> {
        match id {
            None => self.charts.first(),
            Some(id) => self.charts.iter().find(|c| c.name == id),
        }
    }
}

pub const ZOO: [&str; 7] = [
    "quad_euclid",
    "singular_r3",
    "gaussian_kl",
    "bregman",
    "fubini_study",
    "weighted_singular",
    "unitary_group",
];

fn param_usize(params: &Params, name: &str, default: usize) -> Result<usize> {
    match params.get(name) {
        None => Ok(default),
        Some(v) => v.trim().parse().map_err(|_| ModelError::Param {
            name: name.into(),
            reason: format!("expected a non-negative integer, got `{v}`"),
        }),
    }
}

fn param_str<'a>(params: &'a Params, name: &str, default: &'a str) -> &'a str {
    params.get(name).map(String::as_str).unwrap_or(default)
}

fn check_known(params: &Params, known: &[&str]) -> Result<()> {
    match params.keys().find(|k| !known.contains(&k.as_str())) {
        Some(k) => Err(ModelError::Param { name: k.clone(), reason: "not accepted by this model".into() }),
        None => Ok(()),
    }
}

fn pair_contrast(n: usize, f: FnScalar) -> Result<ContrastFunction> {
    Ok(ContrastFunction::new(Arc::new(PairGroupoid::new(n)), Arc::new(f))?)
}

fn names(list: &[&str]) -> Vec<String> {
    list.iter().map(|s| s.to_string()).collect()
}

fn constant_metric(m: DMatrix<f64>) -> MetricFn {
    Arc::new(move |_| m.clone())
}

fn zero_symbols(d: usize) -> SymbolFn {
    Arc::new(move |_| Tensor3::zeros(d))
}

/// Chart `π(x) = (x₁..x_k)`, `σ(y) = (y, 0)`, fibres generated by the
/// remaining coordinate fields.
pub fn coordinate_chart(name: &str, dim: usize, keep: usize) -> QuotientChart {
    let projection = FnVector::new(dim, keep, move |x| Ok(x[..keep].to_vec()));
    let section = FnVector::new(keep, dim, move |y| {
        let mut v = y.to_vec();
        v.resize(dim, Jet3::default());
        Ok(v)
    });
    let fiber_generators = (keep..dim).map(|j| Section::frame(dim, dim, j)).collect();
    QuotientChart {
        name: name.into(),
        quotient_dim: keep,
        projection: Arc::new(projection),
        section: Arc::new(section),
        fiber_generators,
        quotient_domain: Domain::cube(keep, 2.0),
    }
}

pub fn quad_euclid(n: usize) -> Result<Model> {
    if n == 0 {
        return Err(ModelError::Param { name: "n".into(), reason: "must be at least 1".into() });
    }
    let f = FnScalar::new(2 * n, move |x| Ok((0..n).map(|i| (x[i] - x[n + i]).square() * 0.5).sum()));
    Ok(Model {
        name: "quad_euclid".into(),
        params: Params::from([("n".into(), n.to_string())]),
        contrast: pair_contrast(n, f)?,
        domain: Domain::cube(n, 2.0),
        reference: Reference {
            metric: Some(constant_metric(DMatrix::identity(n, n))),
            gamma: Some(zero_symbols(n)),
            gamma_dual: Some(zero_symbols(n)),
            skewness: Some(zero_symbols(n)),
            quotient_metric: None,
        },
        coordinates: (1..=n).map(|i| format!("x{i}")).collect(),
        charts: Vec::new(),
        self_dual: true,
    })
}

pub fn singular_r3() -> Result<Model> {
    let f = FnScalar::new(6, |x| Ok((x[0] - x[3]).square() * 0.5 + (x[1] - x[4]).square() * 0.5));
    let mut g = DMatrix::identity(3, 3);
    g[(2, 2)] = 0.0;
    Ok(Model {
        name: "singular_r3".into(),
        params: Params::new(),
        contrast: pair_contrast(3, f)?,
        domain: Domain::cube(3, 2.0),
        reference: Reference {
            metric: Some(constant_metric(g)),
            gamma: Some(zero_symbols(3)),
            gamma_dual: Some(zero_symbols(3)),
            skewness: Some(zero_symbols(3)),
            quotient_metric: Some(constant_metric(DMatrix::identity(2, 2))),
        },
        coordinates: names(&["x", "y", "z"]),
        charts: vec![coordinate_chart("xy", 3, 2)],
        self_dual: true,
    })
}

pub fn weighted_singular() -> Result<Model> {
    // Coordinates (x, z).
    let f = FnScalar::new(4, |x| Ok((x[1] + x[3]).exp()? * (x[0] - x[2]).square() * 0.5));
    Ok(Model {
        name: "weighted_singular".into(),
        params: Params::new(),
        contrast: pair_contrast(2, f)?,
        domain: Domain::cube(2, 1.0),
        reference: Reference {
            metric: Some(Arc::new(|p| DMatrix::from_row_slice(2, 2, &[(2.0 * p[1]).exp(), 0.0, 0.0, 0.0]))),
            ..Reference::default()
        },
        coordinates: names(&["x", "z"]),
        charts: vec![coordinate_chart("x", 2, 1)],
        self_dual: true,
    })
}

/// `KL(N(μ₁, σ₁²) ‖ N(μ₂, σ₂²))`, in the `(μ, σ)` chart or the `(μ, log σ)`
/// chart.
pub fn gaussian_kl(log_chart: bool) -> Result<Model> {
    let f = if log_chart {
        FnScalar::new(4, |x| {
            let (m1, s1, m2, s2) = (x[0], x[1], x[2], x[3]);
            let ratio = ((s1 - s2) * 2.0).exp()?;
            let shift = (m1 - m2).square() * (s2 * -2.0).exp()? * 0.5;
            Ok(s2 - s1 + ratio * 0.5 + shift - 0.5)
        })
    } else {
        FnScalar::new(4, |x| {
            let (m1, s1, m2, s2) = (x[0], x[1], x[2], x[3]);
            let inv = s2.square().recip()?;
            Ok(s2.checked_div(&s1)?.ln()? + (s1.square() + (m1 - m2).square()) * inv * 0.5 - 0.5)
        })
    };
    let (domain, metric): (Domain, MetricFn) = if log_chart {
        (
            Domain { lo: vec![-2.0, -0.7], hi: vec![2.0, 1.1], constraint: Constraint::None },
            Arc::new(|p| DMatrix::from_row_slice(2, 2, &[(-2.0 * p[1]).exp(), 0.0, 0.0, 2.0])),
        )
    } else {
        (
            Domain { lo: vec![-2.0, 0.5], hi: vec![2.0, 3.0], constraint: Constraint::Positive(vec![1]) },
            Arc::new(|p| {
                let s2 = p[1] * p[1];
                DMatrix::from_row_slice(2, 2, &[1.0 / s2, 0.0, 0.0, 2.0 / s2])
            }),
        )
    };
    let chart = if log_chart { "log" } else { "sigma" };
    Ok(Model {
        name: "gaussian_kl".into(),
        params: Params::from([("chart".into(), chart.into())]),
        contrast: pair_contrast(2, f)?,
        domain,
        reference: Reference { metric: Some(metric), ..Reference::default() },
        coordinates: names(if log_chart { &["mu", "s"] } else { &["mu", "sigma"] }),
        charts: Vec::new(),
        self_dual: false,
    })
}

/// Convex potentials for Bregman divergences.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Potential {
    /// `½ θᵀ A θ` with a fixed positive-definite `A`.
    Quadratic,
    /// `log(1 + Σ exp θ_i)`.
    LogSumExp,
    /// `Σ θ_i log θ_i + (1 − Σθ) log(1 − Σθ)` on the open simplex.
    NegEntropy,
}

impl Potential {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "quadratic" => Some(Self::Quadratic),
            "logsumexp" | "log-sum-exp" | "lse" => Some(Self::LogSumExp),
            "negentropy" | "neg-entropy" => Some(Self::NegEntropy),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::Quadratic => "quadratic",
            Self::LogSumExp => "logsumexp",
            Self::NegEntropy => "negentropy",
        }
    }
}

fn quadratic_form(d: usize) -> DMatrix<f64> {
    DMatrix::from_fn(d, d, |i, j| if i == j { 1.0 + 0.5 * i as f64 } else { 0.2 / d as f64 })
}

fn potential_value(psi: Potential, a: &DMatrix<f64>, t: &[Jet3]) -> JetResult<Jet3> {
    let d = t.len();
    match psi {
        Potential::Quadratic => Ok((0..d)
            .flat_map(|i| (0..d).map(move |j| (i, j)))
            .map(|(i, j)| t[i] * t[j] * (0.5 * a[(i, j)]))
            .sum()),
        Potential::LogSumExp => {
            let mut s = Jet3::constant(1.0);
            for v in t {
                s += v.exp()?;
            }
            s.ln()
        }
        Potential::NegEntropy => {
            let rest = 1.0 - t.iter().copied().sum::<Jet3>();
            let mut acc = rest * rest.ln()?;
            for v in t {
                acc += *v * v.ln()?;
            }
            Ok(acc)
        }
    }
}

fn potential_gradient(psi: Potential, a: &DMatrix<f64>, t: &[Jet3]) -> JetResult<Vec<Jet3>> {
    let d = t.len();
    match psi {
        Potential::Quadratic => Ok((0..d).map(|i| (0..d).map(|j| t[j] * a[(i, j)]).sum()).collect()),
        Potential::LogSumExp => {
            let e: Vec<Jet3> = t.iter().map(Jet3::exp).collect::<JetResult<_>>()?;
            let inv = (1.0 + e.iter().copied().sum::<Jet3>()).recip()?;
            Ok(e.into_iter().map(|v| v * inv).collect())
        }
        Potential::NegEntropy => {
            let rest = (1.0 - t.iter().copied().sum::<Jet3>()).ln()?;
            t.iter().map(|v| Ok(v.ln()? - rest)).collect()
        }
    }
}

fn potential_hessian(psi: Potential, a: &DMatrix<f64>, t: &[f64]) -> DMatrix<f64> {
    let d = t.len();
    match psi {
        Potential::Quadratic => a.clone(),
        Potential::LogSumExp => {
            let z = 1.0 + t.iter().map(|v| v.exp()).sum::<f64>();
            let p: Vec<f64> = t.iter().map(|v| v.exp() / z).collect();
            DMatrix::from_fn(d, d, |i, j| if i == j { p[i] } else { 0.0 } - p[i] * p[j])
        }
        Potential::NegEntropy => {
            let rest = 1.0 - t.iter().sum::<f64>();
            DMatrix::from_fn(d, d, |i, j| if i == j { 1.0 / t[i] } else { 0.0 } + 1.0 / rest)
        }
    }
}

/// `F(ζ, ξ) = ψ(ζ) − ψ(ξ) − ∇ψ(ξ)·(ζ − ξ)`.
pub fn bregman(psi: Potential, d: usize) -> Result<Model> {
    if d == 0 {
        return Err(ModelError::Param { name: "d".into(), reason: "must be at least 1".into() });
    }
    let a = quadratic_form(d);
    let af = a.clone();
    let f = FnScalar::new(2 * d, move |x| {
        let (z, xi) = (&x[..d], &x[d..]);
        let grad = potential_gradient(psi, &af, xi)?;
        let lin: Jet3 = grad.iter().zip(z.iter().zip(xi)).map(|(g, (a, b))| *g * (*a - *b)).sum();
        Ok(potential_value(psi, &af, z)? - potential_value(psi, &af, xi)? - lin)
    });
    let domain = match psi {
        Potential::NegEntropy => {
            Domain { lo: vec![0.05; d], hi: vec![0.9 / d as f64; d], constraint: Constraint::OpenSimplex }
        }
        _ => Domain::cube(d, 1.5),
    };
    let ah = a.clone();
    Ok(Model {
        name: "bregman".into(),
        params: Params::from([("psi".into(), psi.name().into()), ("d".into(), d.to_string())]),
        contrast: pair_contrast(d, f)?,
        domain,
        reference: Reference {
            metric: Some(Arc::new(move |p| potential_hessian(psi, &ah, p))),
            gamma_dual: Some(zero_symbols(d)),
            ..Reference::default()
        },
        coordinates: (1..=d).map(|i| format!("theta{i}")).collect(),
        charts: Vec::new(),
        self_dual: psi == Potential::Quadratic,
    })
}

/// `⟨φ|ψ⟩` for interleaved real coordinates, as (re, im).
fn inner<T>(phi: &[T], psi: &[T]) -> (T, T)
where
    T: Copy + std::ops::Mul<Output = T> + std::ops::Add<Output = T> + std::ops::Sub<Output = T> + Default,
{
    let mut re = T::default();
    let mut im = T::default();
    for k in 0..phi.len() / 2 {
        let (a, b) = (phi[2 * k], phi[2 * k + 1]);
        let (c, d) = (psi[2 * k], psi[2 * k + 1]);
        re = re + a * c + b * d;
        im = im + a * d - b * c;
    }
    (re, im)
}

/// Closed-form `g^F(φ)(x, y) = (2 Re⟨x|y⟩ ‖φ‖² − 2 Re(⟨x|φ⟩⟨φ|y⟩)) / ‖φ‖⁴`.
pub fn fubini_study_metric(phi: &[f64]) -> DMatrix<f64> {
    let d = phi.len();
    let norm2 = inner(phi, phi).0;
    let e = |j: usize| (0..d).map(|i| if i == j { 1.0 } else { 0.0 }).collect::<Vec<f64>>();
    DMatrix::from_fn(d, d, |j, k| {
        let (x, y) = (e(j), e(k));
        let xy = inner(&x, &y).0;
        let (a, b) = inner(&x, phi);
        let (c, dd) = inner(phi, &y);
        (2.0 * xy * norm2 - 2.0 * (a * c - b * dd)) / (norm2 * norm2)
    })
}

/// Round metric `Re(⟨u|v⟩(1+|w|²) − ⟨u|w⟩⟨w|v⟩) / (1+|w|²)²` on an affine
/// chart of projective space.
pub fn affine_fubini_study(w: &[f64]) -> DMatrix<f64> {
    let d = w.len();
    let s = 1.0 + inner(w, w).0;
    let e = |j: usize| (0..d).map(|i| if i == j { 1.0 } else { 0.0 }).collect::<Vec<f64>>();
    DMatrix::from_fn(d, d, |j, k| {
        let (u, v) = (e(j), e(k));
        let (a, b) = inner(&u, w);
        let (c, dd) = inner(w, &v);
        (inner(&u, &v).0 * s - (a * c - b * dd)) / (s * s)
    })
}

/// Affine chart of the projective space that normalises the component
/// `pivot` to be real and positive.
fn projective_chart(name: &str, n: usize, pivot: usize) -> QuotientChart {
    let d = 2 * n;
    let d0 = 2 * (n - 1);
    let others: Vec<usize> = (0..n).filter(|&k| k != pivot).collect();
    let o1 = others.clone();
    let projection = FnVector::new(d, d0, move |x| {
        let (c, dd) = (x[2 * pivot], x[2 * pivot + 1]);
        let inv = (c.square() + dd.square()).recip()?;
        let mut out = Vec::with_capacity(d0);
        for &k in &o1 {
            let (a, b) = (x[2 * k], x[2 * k + 1]);
            out.push((a * c + b * dd) * inv);
            out.push((b * c - a * dd) * inv);
        }
        Ok(out)
    });
    let section = FnVector::new(d0, d, move |w| {
        let s = (1.0 + w.iter().map(|v| v.square()).sum::<Jet3>()).sqrt()?.recip()?;
        let mut out = vec![Jet3::default(); d];
        out[2 * pivot] = s;
        for (slot, &k) in others.iter().enumerate() {
            out[2 * k] = w[2 * slot] * s;
            out[2 * k + 1] = w[2 * slot + 1] * s;
        }
        Ok(out)
    });
    let scale = Section::from_fn(d, d, |x| Ok(x.to_vec()));
    let rotate = Section::from_fn(d, d, |x| {
        Ok((0..x.len()).map(|i| if i % 2 == 0 { -x[i + 1] } else { x[i - 1] }).collect())
    });
    QuotientChart {
        name: name.into(),
        quotient_dim: d0,
        projection: Arc::new(projection),
        section: Arc::new(section),
        fiber_generators: vec![scale, rotate],
        quotient_domain: Domain::cube(d0, 2.0),
    }
}

/// `F(φ, ψ) = 1 − |⟨φ|ψ⟩|² / (‖φ‖² ‖ψ‖²)` on `ℂⁿ`, realified.
pub fn fubini_study(n: usize) -> Result<Model> {
    if n < 2 {
        return Err(ModelError::Param { name: "n".into(), reason: "must be at least 2".into() });
    }
    let d = 2 * n;
    let f = FnScalar::new(2 * d, move |x| {
        let (phi, psi) = (&x[..d], &x[d..]);
        let (re, im) = inner(phi, psi);
        let num = re.square() + im.square();
        let den = inner(phi, phi).0 * inner(psi, psi).0;
        Ok(1.0 - num * den.recip()?)
    });
    Ok(Model {
        name: "fubini_study".into(),
        params: Params::from([("n".into(), n.to_string())]),
        contrast: pair_contrast(d, f)?,
        domain: Domain { lo: vec![-1.0; d], hi: vec![1.0; d], constraint: Constraint::MinNorm(0.3) },
        reference: Reference {
            metric: Some(Arc::new(fubini_study_metric)),
            quotient_metric: Some(Arc::new(affine_fubini_study)),
            ..Reference::default()
        },
        coordinates: (1..=n).flat_map(|k| [format!("re{k}"), format!("im{k}")]).collect(),
        charts: vec![projective_chart("phase_first", n, 0), projective_chart("phase_last", n, n - 1)],
        self_dual: true,
    })
}

/// `F(g) = 1 − Re tr(g) / k` on `U(k)`, or on `SU(2)` when `k = 2`.
pub fn unitary_group(k: usize) -> Result<Model> {
    if k == 0 {
        return Err(ModelError::Param { name: "k".into(), reason: "must be at least 1".into() });
    }
    let group = if k == 2 { MatrixLieGroup::su2() } else { MatrixLieGroup::unitary(k) };
    let size = group.size();
    let basis = group.basis().to_vec();
    let f = FnScalar::new(size * size, move |x| {
        let tr: Jet3 = (0..size).map(|i| x[i * size + i]).sum();
        // Realified trace is twice the real part of the complex trace.
        Ok(1.0 - tr * (1.0 / (2.0 * k as f64)))
    });
    let dim = basis.len();
    let trace_form = DMatrix::from_fn(dim, dim, |a, b| -(&basis[a] * &basis[b]).trace() / (2.0 * k as f64));
    let backend: Arc<dyn Groupoid> = Arc::new(group);
    Ok(Model {
        name: "unitary_group".into(),
        params: Params::from([("k".into(), k.to_string())]),
        contrast: ContrastFunction::new(backend, Arc::new(f))?,
        domain: Domain::cube(0, 0.0),
        reference: Reference { metric: Some(constant_metric(trace_form)), ..Reference::default() },
        coordinates: Vec::new(),
        charts: Vec::new(),
        self_dual: false,
    })
}

/// Build a zoo model by name.
pub fn build(name: &str, params: &Params) -> Result<Model> {
    match name {
        "quad_euclid" => {
            check_known(params, &["n"])?;
            quad_euclid(param_usize(params, "n", 2)?)
        }
        "singular_r3" => {
            check_known(params, &[])?;
            singular_r3()
        }
        "gaussian_kl" => {
            check_known(params, &["chart"])?;
            match param_str(params, "chart", "sigma") {
                "sigma" => gaussian_kl(false),
                "log" => gaussian_kl(true),
                other => Err(ModelError::Param { name: "chart".into(), reason: format!("unknown chart `{other}`") }),
            }
        }
        "bregman" => {
            check_known(params, &["psi", "d"])?;
            let psi_name = param_str(params, "psi", "logsumexp");
            let psi = Potential::parse(psi_name).ok_or_else(|| ModelError::Param {
                name: "psi".into(),
                reason: format!("unknown potential `{psi_name}`"),
            })?;
            bregman(psi, param_usize(params, "d", 3)?)
        }
        "fubini_study" => {
            check_known(params, &["n"])?;
            fubini_study(param_usize(params, "n", 2)?)
        }
        "weighted_singular" => {
            check_known(params, &[])?;
            weighted_singular()
        }
        "unitary_group" => {
            check_known(params, &["k"])?;
            unitary_group(param_usize(params, "k", 2)?)
        }
        other => Err(ModelError::Unknown(other.into())),
    }
}

/// Contents of a model descriptor file (TOML).
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelDescriptor {
    pub name: String,
    pub dim: Option<usize>,
    /// Expression over `x1..xn, y1..yn`, or the id of a zoo model.
    pub contrast: String,
    #[serde(default)]
    pub params: BTreeMap<String, toml::Value>,
    /// `keep:<k>` for a coordinate quotient, or a chart id of a zoo model.
    pub quotient: Option<String>,
    /// Sampling box for random points.
    pub sample_box: Option<[f64; 2]>,
}

impl ModelDescriptor {
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| ModelError::Descriptor(e.to_string()))
    }

    pub fn params_text(&self) -> Params {
        self.params
            .iter()
            .map(|(k, v)| {
                let s = match v {
                    toml::Value::String(s) => s.clone(),
                    other => other.to_string(),
                };
                (k.clone(), s)
            })
            .collect()
    }

    pub fn build(&self) -> Result<Model> {
        let params = self.params_text();
        let mut model = if ZOO.contains(&self.contrast.trim()) {
            build(self.contrast.trim(), &params)?
        } else {
            let dim = self.dim.ok_or_else(|| ModelError::Descriptor("expression contrast needs `dim`".into()))?;
            let ast = expr::parse(&self.contrast, dim)?;
            let contrast = ContrastFunction::new(Arc::new(PairGroupoid::new(dim)), Arc::new(ast))?;
            let domain = match self.sample_box {
                Some([lo, hi]) => Domain { lo: vec![lo; dim], hi: vec![hi; dim], constraint: Constraint::None },
                None => Domain::cube(dim, 1.0),
            };
            Model {
                name: self.name.clone(),
                params,
                contrast,
                domain,
                reference: Reference::default(),
                coordinates: (1..=dim).map(|i| format!("x{i}")).collect(),
                charts: Vec::new(),
                self_dual: false,
            }
        };
        model.name = self.name.clone();
        if let Some(dim) = self.dim {
            if dim != model.base_dim() {
                return Err(ModelError::Descriptor(format!(
                    "`dim = {dim}` but the contrast lives on a base of dimension {}",
                    model.base_dim()
                )));
            }
        }
        if let Some(q) = &self.quotient {
            if let Some(k) = q.strip_prefix("keep:") {
                let keep: usize = k
                    .parse()
                    .map_err(|_| ModelError::Descriptor(format!("bad quotient `{q}`")))?;
                if keep > model.base_dim() {
                    return Err(ModelError::Descriptor(format!("bad quotient `{q}`")));
                }
                model.charts.insert(0, coordinate_chart(q, model.base_dim(), keep));
            } else {
                let pos = model
                    .charts
                    .iter()
                    .position(|c| &c.name == q)
                    .ok_or_else(|| ModelError::Descriptor(format!("unknown quotient chart `{q}`")))?;
                let chart = model.charts.remove(pos);
                model.charts.insert(0, chart);
            }
        }
        Ok(model)
    }
}

/// Largest deviations of derived tensors from a model's closed forms.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ReferenceReport {
    pub samples: usize,
    pub tol: f64,
    pub metric: Option<f64>,
    pub gamma: Option<f64>,
    pub gamma_dual: Option<f64>,
    pub skewness: Option<f64>,
}

impl ReferenceReport {
    pub fn max_deviation(&self) -> f64 {
        [self.metric, self.gamma, self.gamma_dual, self.skewness]
            .into_iter()
            .flatten()
            .fold(0.0, f64::max)
    }

    pub fn passed(&self) -> bool {
        self.max_deviation() <= self.tol
    }
}

fn worst(slot: &mut Option<f64>, v: f64) {
    *slot = Some(slot.map_or(v, |s: f64| s.max(v)));
}

pub fn reference_check(model: &Model, points: &[Vec<f64>], tol: f64) -> std::result::Result<ReferenceReport, TensorError> {
    let r = &model.reference;
    let f = &model.contrast;
    let mut out = ReferenceReport { samples: points.len(), tol, ..Default::default() };
    for p in points {
        if let Some(m) = &r.metric {
            worst(&mut out.metric, (tensors::metric(f, p)? - m(p)).abs().max());
        }
        if r.gamma.is_some() || r.gamma_dual.is_some() || r.skewness.is_some() {
            let (g, gs) = tensors::christoffel_pair(f, p)?;
            if let Some(c) = &r.gamma {
                worst(&mut out.gamma, g.max_abs_diff(&c(p)));
            }
            if let Some(c) = &r.gamma_dual {
                worst(&mut out.gamma_dual, gs.max_abs_diff(&c(p)));
            }
            if let Some(c) = &r.skewness {
                worst(&mut out.skewness, g.zip_map(&gs, |a, b| a - b).max_abs_diff(&c(p)));
            }
        }
    }
    Ok(out)
}
