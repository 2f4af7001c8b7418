//! Metric, lowered connection symbols, skewness and residual checks derived
//! from a contrast function, all in the frame of constant sections.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::groupoid::{self, invariant_jet, lrz_derivative, ContrastFunction, GroupoidError, Section, Side};
use crate::jets::{Jet3, JetError};
use crate::linalg::{Tensor3, Tensor4};

#[derive(Debug, Error)]
pub enum TensorError {
    #[error(transparent)]
    Groupoid(#[from] GroupoidError),
    #[error("metric is singular (condition {condition:e}); raise indices on a reduced structure instead")]
    SingularMetric { condition: f64 },
    #[error("non-finite {0} entry")]
    NonFinite(&'static str),
}

impl From<JetError> for TensorError {
    fn from(e: JetError) -> Self {
        TensorError::Groupoid(e.into())
    }
}

pub type Result<T> = std::result::Result<T, TensorError>;

/// `g_jk = e_j^L e_k^L F` at the unit over `m`.
pub fn metric(f: &ContrastFunction, m: &[f64]) -> Result<DMatrix<f64>> {
    let fr = f.frames();
    let d = fr.len();
    let mut g = DMatrix::zeros(d, d);
    for j in 0..d {
        for k in 0..d {
            g[(j, k)] = lrz_derivative(f, m, &[(&fr[j], Side::Left), (&fr[k], Side::Left)])?;
        }
    }
    if g.iter().any(|v| !v.is_finite()) {
        return Err(TensorError::NonFinite("metric"));
    }
    Ok(g)
}

/// `g(X, Y)` for arbitrary sections.
pub fn metric_on(f: &ContrastFunction, m: &[f64], x: &Section, y: &Section) -> Result<f64> {
    Ok(lrz_derivative(f, m, &[(x, Side::Left), (y, Side::Left)])?)
}

/// `Γ_{ij,l} = e_i^L e_j^L e_l^R F`.
pub fn christoffel_lowered(f: &ContrastFunction, m: &[f64]) -> Result<Tensor3> {
    let fr = f.frames();
    let t = Tensor3::try_from_fn(fr.len(), |i, j, l| {
        lrz_derivative(f, m, &[(&fr[i], Side::Left), (&fr[j], Side::Left), (&fr[l], Side::Right)])
    })?;
    if t.as_slice().iter().any(|v| !v.is_finite()) {
        return Err(TensorError::NonFinite("connection"));
    }
    Ok(t)
}

/// Symbols of the connection of `F` and of its dual.
pub fn christoffel_pair(f: &ContrastFunction, m: &[f64]) -> Result<(Tensor3, Tensor3)> {
    Ok((christoffel_lowered(f, m)?, christoffel_lowered(&f.dual(), m)?))
}

/// `T = Γ^F − Γ^{F*}`.
pub fn skewness(f: &ContrastFunction, m: &[f64]) -> Result<Tensor3> {
    let (g, gs) = christoffel_pair(f, m)?;
    Ok(g.zip_map(&gs, |a, b| a - b))
}

/// `α(X) g(Y, Z)`: the metric field differentiated along the anchor of `X`.
pub fn metric_derivative(f: &ContrastFunction, m: &[f64], x: &Section, y: &Section, z: &Section) -> Result<f64> {
    let xv = x.at(m)?;
    let dir = groupoid::anchor(f.backend(), &xv);
    let base: Vec<Jet3> = m
        .iter()
        .zip(&dir)
        .map(|(&p, &v)| Jet3::constant(p) + Jet3::constant(v).times_seed(2))
        .collect();
    Ok(invariant_jet(f, &base, &[(y, Side::Left), (z, Side::Left)])?.coeff(0b111))
}

fn pair_metric(g: &DMatrix<f64>, a: &[f64], b: &[f64]) -> f64 {
    (DVector::from_column_slice(a).transpose() * g * DVector::from_column_slice(b))[(0, 0)]
}

/// `2 g(D_X Y, Z)` by the six-term Koszul formula.
pub fn koszul_form(f: &ContrastFunction, m: &[f64], x: &Section, y: &Section, z: &Section) -> Result<f64> {
    let g = metric(f, m)?;
    let backend = f.backend();
    let (xv, yv, zv) = (x.at(m)?.components, y.at(m)?.components, z.at(m)?.components);
    let xy = groupoid::bracket(backend, x, y, m)?.components;
    let xz = groupoid::bracket(backend, x, z, m)?.components;
    let yz = groupoid::bracket(backend, y, z, m)?.components;
    Ok(metric_derivative(f, m, x, y, z)? + metric_derivative(f, m, y, x, z)?
        - metric_derivative(f, m, z, x, y)?
        + pair_metric(&g, &xy, &zv)
        - pair_metric(&g, &xz, &yv)
        - pair_metric(&g, &yz, &xv))
}

/// Lowered Levi-Civita symbols by the Koszul formula on the frame.
pub fn levi_civita_lowered(f: &ContrastFunction, m: &[f64]) -> Result<Tensor3> {
    let d = f.rank();
    let g = metric(f, m)?;
    let dg = metric_derivatives(f, m)?;
    let c = f.backend().structure_constants().cloned();
    // g([e_a, e_b], e_k)
    let gb = |a: usize, b: usize, k: usize| -> f64 {
        c.as_ref().map_or(0.0, |c| (0..d).map(|p| c[(a, b, p)] * g[(p, k)]).sum())
    };
    Ok(Tensor3::from_fn(d, |i, j, k| {
        0.5 * (dg[i][(j, k)] + dg[j][(i, k)] - dg[k][(i, j)] + gb(i, j, k) - gb(i, k, j) - gb(j, k, i))
    }))
}

/// `Γ^α = Γ^LC − (α/2) T`. With this convention `α = −1` gives `∇^F` and
/// `α = +1` gives `∇^{F*}`.
pub fn alpha_connection(f: &ContrastFunction, m: &[f64], alpha: f64) -> Result<Tensor3> {
    let lc = levi_civita_lowered(f, m)?;
    let t = skewness(f, m)?;
    Ok(lc.zip_map(&t, |a, b| a - 0.5 * alpha * b))
}

/// Duality residual of two lowered symbol arrays against metric derivatives
/// `dg[i][(j,l)] = α(e_i) g_jl`.
pub fn duality_defect(gamma: &Tensor3, gamma_dual: &Tensor3, dg: &[DMatrix<f64>]) -> f64 {
    let d = gamma.dim();
    let mut worst: f64 = 0.0;
    for i in 0..d {
        for j in 0..d {
            for l in 0..d {
                worst = worst.max((gamma[(i, j, l)] + gamma_dual[(i, l, j)] - dg[i][(j, l)]).abs());
            }
        }
    }
    worst
}

/// Metric derivatives along all frame anchors.
pub fn metric_derivatives(f: &ContrastFunction, m: &[f64]) -> Result<Vec<DMatrix<f64>>> {
    let fr = f.frames();
    let d = fr.len();
    fr.iter()
        .map(|x| {
            let mut t = DMatrix::zeros(d, d);
            for j in 0..d {
                for k in 0..d {
                    t[(j, k)] = metric_derivative(f, m, x, &fr[j], &fr[k])?;
                }
            }
            Ok(t)
        })
        .collect()
}

/// `max |g(∇_X Y, Z) + g(Y, ∇*_X Z) − α(X) g(Y, Z)|` over frame triples.
pub fn duality_residual(f: &ContrastFunction, m: &[f64]) -> Result<f64> {
    let (g, gs) = christoffel_pair(f, m)?;
    Ok(duality_defect(&g, &gs, &metric_derivatives(f, m)?))
}

/// Test sections for torsion: frames, and frames multiplied by coordinates.
pub fn torsion_test_sections(f: &ContrastFunction) -> Vec<Section> {
    let (n, d) = (f.base_dim(), f.rank());
    let mut out = f.frames();
    if n == 0 {
        return out;
    }
    for j in 0..d {
        for k in [j % n, (j + 1) % n] {
            let base = Section::frame(n, d, j);
            out.push(Section::from_fn(n, d, move |m| {
                Ok(base.eval(m)?.into_iter().map(|c| c * m[k]).collect())
            }));
        }
    }
    out
}

/// Torsion of the connection of `f` paired with frame sections:
/// `max |g(∇_X Y − ∇_Y X − [X, Y], e_l)|`.
pub fn torsion_defect(f: &ContrastFunction, m: &[f64], sections: &[Section]) -> Result<f64> {
    let g = metric(f, m)?;
    let fr = f.frames();
    let mut worst: f64 = 0.0;
    for (a, x) in sections.iter().enumerate() {
        for y in &sections[a + 1..] {
            let br = groupoid::bracket(f.backend(), x, y, m)?.components;
            for (l, z) in fr.iter().enumerate() {
                let xy = lrz_derivative(f, m, &[(x, Side::Left), (y, Side::Left), (z, Side::Right)])?;
                let yx = lrz_derivative(f, m, &[(y, Side::Left), (x, Side::Left), (z, Side::Right)])?;
                let gb: f64 = (0..fr.len()).map(|p| br[p] * g[(p, l)]).sum();
                worst = worst.max((xy - yx - gb).abs());
            }
        }
    }
    Ok(worst)
}

/// Torsion defect of both `∇^F` and `∇^{F*}` on noncommuting test sections.
pub fn torsion_residual(f: &ContrastFunction, m: &[f64]) -> Result<f64> {
    let s = torsion_test_sections(f);
    Ok(torsion_defect(f, m, &s)?.max(torsion_defect(&f.dual(), m, &s)?))
}

/// Raise the last index: `Γ^p_{ij} = g^{pl} Γ_{ij,l}`.
pub fn raise(g: &DMatrix<f64>, lowered: &Tensor3) -> Result<Tensor3> {
    let d = lowered.dim();
    let cond = {
        let s = crate::linalg::SpectralSplit::new(g, 1e-12);
        if s.null_count > 0 { f64::INFINITY } else { s.condition() }
    };
    let inv = match g.clone().try_inverse() {
        Some(inv) if cond < 1e14 => inv,
        _ => return Err(TensorError::SingularMetric { condition: cond }),
    };
    // Raised array stored as t[(p, i, j)].
    Ok(Tensor3::from_fn(d, |p, i, j| (0..d).map(|l| inv[(p, l)] * lowered[(i, j, l)]).sum()))
}

/// Richardson-extrapolated central difference of a tensor-valued map.
fn directional_fd(
    field: &dyn Fn(&[f64]) -> Result<Tensor3>,
    m: &[f64],
    dir: usize,
) -> Result<Tensor3> {
    let h = 1e-3 * (1.0 + m[dir].abs());
    let central = |h: f64| -> Result<Tensor3> {
        let mut p = m.to_vec();
        let mut q = m.to_vec();
        p[dir] += h;
        q[dir] -= h;
        Ok(field(&p)?.zip_map(&field(&q)?, |a, b| (a - b) / (2.0 * h)))
    };
    let coarse = central(h)?;
    let fine = central(h / 2.0)?;
    Ok(fine.zip_map(&coarse, |f, c| (4.0 * f - c) / 3.0))
}

/// Curvature `R[(p, i, j, k)]`, the `p`-component of
/// `∇_i ∇_j e_k − ∇_j ∇_i e_k − ∇_{[e_i, e_j]} e_k`, from a field of
/// (metric, lowered symbols) over a chart whose anchor is the identity
/// (`base_dim = rank`) or zero (`base_dim = 0`).
pub fn curvature(
    field: &dyn Fn(&[f64]) -> Result<(DMatrix<f64>, Tensor3)>,
    structure: Option<&Tensor3>,
    m: &[f64],
) -> Result<Tensor4> {
    let (g, low) = field(m)?;
    let gamma = raise(&g, &low)?;
    let d = gamma.dim();
    let raised = |p: &[f64]| -> Result<Tensor3> {
        let (g, low) = field(p)?;
        raise(&g, &low)
    };
    let dgamma: Vec<Tensor3> = if m.is_empty() {
        vec![Tensor3::zeros(d); d]
    } else {
        (0..d).map(|i| directional_fd(&raised, m, i)).collect::<Result<_>>()?
    };
    let mut r = Tensor4::zeros(d);
    for p in 0..d {
        for i in 0..d {
            for j in 0..d {
                for k in 0..d {
                    let mut v = dgamma[i][(p, j, k)] - dgamma[j][(p, i, k)];
                    for q in 0..d {
                        v += gamma[(q, j, k)] * gamma[(p, i, q)] - gamma[(q, i, k)] * gamma[(p, j, q)];
                        if let Some(c) = structure {
                            v -= c[(i, j, q)] * gamma[(p, q, k)];
                        }
                    }
                    r[(p, i, j, k)] = v;
                }
            }
        }
    }
    Ok(r)
}

/// `g(R(X, Y) Y, X) / (g(X,X) g(Y,Y) − g(X,Y)²)`.
pub fn sectional_curvature(r: &Tensor4, g: &DMatrix<f64>, x: &[f64], y: &[f64]) -> f64 {
    let d = r.dim();
    let mut ryy = vec![0.0; d];
    for (p, out) in ryy.iter_mut().enumerate() {
        for i in 0..d {
            for j in 0..d {
                for k in 0..d {
                    *out += r[(p, i, j, k)] * x[i] * y[j] * y[k];
                }
            }
        }
    }
    let num = pair_metric(g, &ryy, x);
    let den = pair_metric(g, x, x) * pair_metric(g, y, y) - pair_metric(g, x, y).powi(2);
    num / den
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr;
    use crate::groupoid::PairGroupoid;
    use std::sync::Arc;

    fn contrast(src: &str, n: usize) -> ContrastFunction {
        let ast = expr::parse(src, n).unwrap();
        ContrastFunction::new(Arc::new(PairGroupoid::new(n)), Arc::new(ast)).unwrap()
    }

    fn kl() -> ContrastFunction {
        contrast("log(y2/x2) + (x2^2 + (x1-y1)^2)/(2*y2^2) - 0.5", 2)
    }

    #[test]
    fn quadratic_is_flat() {
        let f = contrast("0.5*((x1-y1)^2 + (x2-y2)^2)", 2);
        let m = [0.4, -0.3];
        assert_eq!(metric(&f, &m).unwrap(), DMatrix::identity(2, 2));
        assert_eq!(christoffel_lowered(&f, &m).unwrap().max_abs(), 0.0);
        assert_eq!(skewness(&f, &m).unwrap().max_abs(), 0.0);
        assert_eq!(levi_civita_lowered(&f, &m).unwrap().max_abs(), 0.0);
        assert!(duality_residual(&f, &m).unwrap() <= 1e-12);
        assert!(torsion_residual(&f, &m).unwrap() <= 1e-10);
    }

    #[test]
    fn kl_fisher_metric_and_dual_structure() {
        let f = kl();
        let g = metric(&f, &[0.0, 1.0]).unwrap();
        assert!((g - DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 2.0])).abs().max() < 1e-14);
        let m = [0.3, 1.7];
        let (gam, gams) = christoffel_pair(&f, &m).unwrap();
        assert!(gam.max_abs_diff(&gams) > 1e-3);
        let lc = levi_civita_lowered(&f, &m).unwrap();
        let avg = gam.zip_map(&gams, |a, b| 0.5 * (a + b));
        assert!(lc.max_abs_diff(&avg) <= 1e-9);
        let t = skewness(&f, &m).unwrap();
        assert!(t.symmetry_defect() <= 1e-10);
        assert!(t.max_abs() > 1e-3);
        for a in [-1.0, 1.0] {
            let ga = alpha_connection(&f, &m, a).unwrap();
            let gb = alpha_connection(&f, &m, -a).unwrap();
            assert!(duality_defect(&ga, &gb, &metric_derivatives(&f, &m).unwrap()) <= 1e-9);
            let mean = ga.zip_map(&gb, |x, y| 0.5 * (x + y));
            assert!(mean.max_abs_diff(&lc) <= 1e-14);
        }
        assert!(alpha_connection(&f, &m, -1.0).unwrap().max_abs_diff(&gam) <= 1e-12);
        assert!(alpha_connection(&f, &m, 0.0).unwrap().max_abs_diff(&lc) == 0.0);
        assert!(duality_residual(&f, &m).unwrap() <= 1e-9);
        assert!(torsion_residual(&f, &m).unwrap() <= 1e-9);
    }

    #[test]
    fn symmetric_contrast_connection_is_levi_civita() {
        let f = contrast("0.5*(1 + (x1+y1)^2/4)*(x1-y1)^2 + 0.5*exp(x1+y1)*(x2-y2)^2", 2);
        let m = [0.2, -0.6];
        let gam = christoffel_lowered(&f, &m).unwrap();
        assert!(skewness(&f, &m).unwrap().max_abs() <= 1e-14);
        assert!(levi_civita_lowered(&f, &m).unwrap().max_abs_diff(&gam) <= 1e-9);
    }

    /// Finite-difference oracle: third derivatives of `F − F*` along the
    /// `ξ ξ ζ` slots reproduce the skewness.
    #[test]
    fn kl_skewness_matches_finite_differences() {
        let f = kl();
        let fs = f.dual();
        let m = [0.0, 1.0];
        let t = skewness(&f, &m).unwrap();
        let diff = |p: &[f64]| f.value(p).unwrap() - fs.value(p).unwrap();
        let h = 2e-3;
        for i in 0..2 {
            for j in 0..2 {
                for l in 0..2 {
                    // − ∂_{ξi} ∂_{ξj} ∂_{ζl} (F − F*) at (m, m)
                    let mut acc = 0.0;
                    for (si, sj, sl) in sign_triples() {
                        let mut p = vec![m[0], m[1], m[0], m[1]];
                        p[2 + i] += si * h;
                        p[2 + j] += sj * h;
                        p[l] += sl * h;
                        acc += si * sj * sl * diff(&p);
                    }
                    let fd = -acc / (8.0 * h * h * h);
                    assert!((fd - t[(i, j, l)]).abs() < 1e-3, "{i}{j}{l}: {fd} vs {}", t[(i, j, l)]);
                }
            }
        }
    }

    fn sign_triples() -> Vec<(f64, f64, f64)> {
        let s = [-1.0, 1.0];
        let mut v = Vec::new();
        for a in s {
            for b in s {
                for c in s {
                    v.push((a, b, c));
                }
            }
        }
        v
    }

    #[test]
    fn torsion_sections_include_noncommuting_pairs() {
        let f = contrast("0.5*((x1-y1)^2 + (x2-y2)^2)", 2);
        let s = torsion_test_sections(&f);
        let m = [0.5, 0.5];
        let nonzero = s
            .iter()
            .enumerate()
            .flat_map(|(a, x)| s[a + 1..].iter().map(move |y| (x, y)))
            .filter(|(x, y)| {
                groupoid::bracket(f.backend(), x, y, &m)
                    .unwrap()
                    .components
                    .iter()
                    .any(|c| c.abs() > 0.1)
            })
            .count();
        assert!(nonzero > 0);
    }

    #[test]
    fn sphere_curvature_from_flat_and_round_fields() {
        // Stereographic sphere of radius 1: g = 4/(1+|x|²)² δ.
        let field = |p: &[f64]| -> Result<(DMatrix<f64>, Tensor3)> {
            let s = 1.0 + p[0] * p[0] + p[1] * p[1];
            let lam = 4.0 / (s * s);
            let dlam = [-16.0 * p[0] / (s * s * s), -16.0 * p[1] / (s * s * s)];
            let g = DMatrix::identity(2, 2) * lam;
            let dg = |i: usize, j: usize, k: usize| if j == k { dlam[i] } else { 0.0 };
            let low = Tensor3::from_fn(2, |i, j, k| 0.5 * (dg(i, j, k) + dg(j, i, k) - dg(k, i, j)));
            Ok((g, low))
        };
        let m = [0.3, -0.2];
        let r = curvature(&field, None, &m).unwrap();
        let (g, _) = field(&m).unwrap();
        let k = sectional_curvature(&r, &g, &[1.0, 0.0], &[0.0, 1.0]);
        assert!((k - 1.0).abs() < 1e-8, "{k}");
    }
}
