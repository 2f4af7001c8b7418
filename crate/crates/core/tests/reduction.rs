//! Kernel, Koszul condition and quotient reduction on the zoo.

mod common;

use std::sync::Arc;
use std::time::Instant;

use infogeo::groupoid::{bracket, ContrastFunction, Section};
use infogeo::jets::{FnScalar, Jet3, SmoothFn};
use infogeo::linalg::Tensor3;
use infogeo::models::{self, Model};
use infogeo::reduction::{self, ReduceOptions, ReductionError, DEFAULT_RANK_TOL};
use infogeo::sampling::Rng;
use infogeo::tensors;
use nalgebra::{DMatrix, DVector};

fn points(m: &Model, seed: u64, n: usize) -> Vec<Vec<f64>> {
    m.sample_points(&mut Rng::seeded(seed), n)
}

fn quotient_points(m: &Model, seed: u64, n: usize) -> Vec<Vec<f64>> {
    m.charts[0].quotient_domain.sample_n(&mut Rng::seeded(seed), n)
}

#[test]
fn singular_r3_example() {
    let start = Instant::now();
    let m = models::singular_r3().unwrap();
    for p in points(&m, 1, 20) {
        let g = tensors::metric(&m.contrast, &p).unwrap();
        assert_eq!(g, DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 1.0, 0.0])));
        let k = reduction::kernel_at(&m.contrast, &p, DEFAULT_RANK_TOL).unwrap();
        assert_eq!(k.rank, 1);
        assert!((k.kernel.column(0) - DVector::from_vec(vec![0.0, 0.0, 1.0])).amax() <= 1e-10);
        assert!(reduction::koszul_residual(&m.contrast, &p, &k).unwrap() <= 1e-10);
        assert!(reduction::lie_derivative_residual(&m.contrast, &p, &k).unwrap() <= 1e-10);
        assert!(reduction::kernel_closure_residual(&m.contrast, &p, DEFAULT_RANK_TOL).unwrap() <= 1e-9);
    }
    let rank = reduction::check_constant_rank(&m.contrast, &points(&m, 2, 100), DEFAULT_RANK_TOL).unwrap();
    assert_eq!(rank.rank, Some(2));
    for w in quotient_points(&m, 3, 5) {
        let r = reduction::reduce(&m.contrast, &m.charts[0], &w, &ReduceOptions::default()).unwrap();
        assert!((&r.metric - DMatrix::identity(2, 2)).amax() <= 1e-10);
        assert!(r.gamma.max_abs() <= 1e-10 && r.gamma_dual.max_abs() <= 1e-10);
    }
    assert!(start.elapsed().as_secs_f64() < 1.0, "{:?}", start.elapsed());
}

#[test]
fn fubini_study_full_space_structure() {
    let m = models::fubini_study(2).unwrap();
    for p in points(&m, 4, 100) {
        let g = tensors::metric(&m.contrast, &p).unwrap();
        assert!((g - models::fubini_study_metric(&p)).amax() <= 1e-9);
    }
    for p in points(&m, 5, 20) {
        let k = reduction::kernel_at(&m.contrast, &p, DEFAULT_RANK_TOL).unwrap();
        assert_eq!(k.rank, 2);
        assert!(reduction::koszul_residual(&m.contrast, &p, &k).unwrap() <= 1e-8);
        assert!(reduction::lie_derivative_residual(&m.contrast, &p, &k).unwrap() <= 1e-8);
        assert!(reduction::kernel_closure_residual(&m.contrast, &p, DEFAULT_RANK_TOL).unwrap() <= 1e-8);
        // Kernel is spanned by φ and iφ.
        let phi = DVector::from_vec(p.clone());
        let iphi = DVector::from_fn(4, |i, _| if i % 2 == 0 { -p[i + 1] } else { p[i - 1] });
        let proj = k.projector();
        assert!((&proj * &phi - &phi).amax() <= 1e-9 * phi.norm());
        assert!((&proj * &iphi - &iphi).amax() <= 1e-9 * phi.norm());
    }
    let k = reduction::kernel_at(&m.contrast, &[1.0, 0.0, 0.0, 0.0], DEFAULT_RANK_TOL).unwrap();
    let expected = DMatrix::from_fn(4, 4, |i, j| if i == j && i < 2 { 1.0 } else { 0.0 });
    assert!((k.projector() - expected).amax() <= 1e-12);
    let tm = reduction::transversal_metric(&k);
    assert!((tm.matrix - DMatrix::identity(2, 2) * 2.0).amax() <= 1e-12);
}

/// Gaussian curvature of `λ(w)|dw|²` on a 2-d chart, `−Δ log λ / (2λ)`,
/// from second differences.
fn conformal_curvature(lambda: &dyn Fn(&[f64]) -> f64, w: &[f64]) -> f64 {
    let log = |x: &[f64]| lambda(x).ln();
    let lap = common::fd_oracle(&log, w, &[&[1.0, 0.0], &[1.0, 0.0]])
        + common::fd_oracle(&log, w, &[&[0.0, 1.0], &[0.0, 1.0]]);
    -lap / (2.0 * lambda(w))
}

#[test]
fn fubini_study_reduces_to_twice_the_round_metric() {
    let start = Instant::now();
    let m = models::fubini_study(2).unwrap();
    let round = m.reference.quotient_metric.clone().unwrap();
    let mut ratios = Vec::new();
    for w in quotient_points(&m, 6, 50) {
        let r = reduction::reduce(&m.contrast, &m.charts[0], &w, &ReduceOptions::default()).unwrap();
        let round = round(&w);
        let ratio = r.metric.trace() / round.trace();
        assert!((&r.metric - &round * ratio).amax() <= 1e-9 * ratio);
        assert!(r.diagnostics.koszul_residual <= 1e-8 && r.diagnostics.transport_residual <= 1e-6);
        ratios.push(ratio);
    }
    let mean = ratios.iter().sum::<f64>() / ratios.len() as f64;
    let sd = (ratios.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / ratios.len() as f64).sqrt();
    assert!(sd <= 1e-6, "sd {sd:e}");
    assert!((mean - 2.0).abs() <= 1e-9, "mean {mean}");
    assert!(start.elapsed().as_secs_f64() < 10.0, "{:?}", start.elapsed());
}

fn complex_recip_jacobian(w: &[f64]) -> DMatrix<f64> {
    // d(1/w) = −dw / w², realified.
    let (a, b) = (w[0], w[1]);
    let n2 = a * a + b * b;
    let (re, im) = (-(a * a - b * b) / (n2 * n2), 2.0 * a * b / (n2 * n2));
    DMatrix::from_row_slice(2, 2, &[re, -im, im, re])
}

#[test]
fn fubini_study_reduction_is_chart_stable() {
    let m = models::fubini_study(2).unwrap();
    let (first, last) = (&m.charts[0], &m.charts[1]);
    let opts = ReduceOptions::default();
    let mut rng = Rng::seeded(7);
    for _ in 0..10 {
        let w = loop {
            let w = first.quotient_domain.sample(&mut rng);
            if w[0].hypot(w[1]) > 0.3 {
                break w;
            }
        };
        let n2 = w[0] * w[0] + w[1] * w[1];
        let w2 = vec![w[0] / n2, -w[1] / n2];
        let g = reduction::reduce(&m.contrast, first, &w, &opts).unwrap().metric;
        let g2 = reduction::reduce(&m.contrast, last, &w2, &opts).unwrap().metric;
        let j = complex_recip_jacobian(&w);
        assert!((&g - j.transpose() * g2 * &j).amax() <= 1e-7, "{w:?}");
    }
}

#[test]
fn reduced_fubini_study_has_constant_curvature_two() {
    let m = models::fubini_study(2).unwrap();
    let chart = m.charts[0].clone();
    let f = m.contrast.clone();
    let opts = ReduceOptions { fiber_checks: 0, ..ReduceOptions::default() };
    let field = move |w: &[f64]| -> Result<(DMatrix<f64>, Tensor3), tensors::TensorError> {
        let r = reduction::reduce(&f, &chart, w, &opts).map_err(|e| match e {
            ReductionError::Tensor(t) => t,
            other => panic!("{other}"),
        })?;
        Ok((r.metric, r.gamma))
    };
    let lambda = |w: &[f64]| 2.0 / (1.0 + w[0] * w[0] + w[1] * w[1]).powi(2);
    for w in quotient_points(&m, 8, 6) {
        let r = tensors::curvature(&field, None, &w).unwrap();
        let (g, _) = field(&w).unwrap();
        let k = tensors::sectional_curvature(&r, &g, &[1.0, 0.0], &[0.0, 1.0]);
        let oracle = conformal_curvature(&lambda, &w);
        assert!((oracle - 2.0).abs() <= 1e-6, "{oracle}");
        assert!((k - oracle).abs() <= 1e-6, "{w:?}: {k} vs {oracle}");
    }
}

fn bump() -> Arc<FnScalar> {
    Arc::new(FnScalar::new(4, |x| Ok(1.0 + x[0].sin()? * 0.3 + x[1].square() * x[2] * 0.5 + x[3] * 0.2)))
}

fn test_sections() -> Vec<Section> {
    let a = Section::from_fn(4, 4, |x| Ok(vec![x[1], Jet3::constant(1.0), x[0] * x[3], x[2].square()]));
    let b = Section::from_fn(4, 4, |x| Ok(vec![x[2].cos()?, x[0] * 0.5, Jet3::constant(-1.0), x[1] + x[3]]));
    let c = Section::constant(4, vec![0.3, -0.2, 0.5, 1.0]);
    let scaled = a.scaled(bump());
    vec![a, b, c, scaled]
}

/// `g(D, W)` for `D` in complement coordinates.
fn pair(frame: &reduction::KernelFrame, d: &DVector<f64>, w: &Section) -> f64 {
    let wv = DVector::from_vec(w.at(&frame.base).unwrap().components);
    (d.transpose() * frame.complement.transpose() * &frame.metric * wv)[(0, 0)]
}

fn metric_of(frame: &reduction::KernelFrame, x: &Section, y: &Section) -> f64 {
    let xv = DVector::from_vec(x.at(&frame.base).unwrap().components);
    let yv = DVector::from_vec(y.at(&frame.base).unwrap().components);
    (xv.transpose() * &frame.metric * yv)[(0, 0)]
}

fn koszul_derivative_properties(f: &ContrastFunction, p: &[f64]) -> f64 {
    let k = reduction::kernel_at(f, p, DEFAULT_RANK_TOL).unwrap();
    let tol = 1e-8;
    let d = |x: &Section, y: &Section| reduction::koszul_derivative(f, p, &k, x, y, tol).unwrap();
    let h = bump();
    let hv = h.eval_f64(p).unwrap();
    let secs = test_sections();
    let mut worst: f64 = 0.0;
    for x in &secs {
        for y in &secs {
            for w in &secs {
                // (a)
                let a = pair(&k, &d(&x.scaled(h.clone()), y), w) - hv * pair(&k, &d(x, y), w);
                // (b)
                let xh = infogeo::jets::deriv1(h.as_ref(), p, &x.at(p).unwrap().components).unwrap();
                let b = pair(&k, &d(x, &y.scaled(h.clone())), w) - xh * metric_of(&k, y, w) - hv * pair(&k, &d(x, y), w);
                // (c)
                let c = tensors::metric_derivative(f, p, w, x, y).unwrap() - pair(&k, &d(w, x), y) - pair(&k, &d(w, y), x);
                // (d)
                let br = Section::constant(4, bracket(f.backend(), x, y, p).unwrap().components);
                let dd = pair(&k, &d(x, y), w) - pair(&k, &d(y, x), w) - metric_of(&k, &br, w);
                worst = worst.max(a.abs()).max(b.abs()).max(c.abs()).max(dd.abs());
            }
        }
    }
    worst
}

#[test]
fn koszul_derivative_axioms_hold_on_fubini_study() {
    let m = models::fubini_study(2).unwrap();
    let mut worst: f64 = 0.0;
    for p in points(&m, 9, 50) {
        worst = worst.max(koszul_derivative_properties(&m.contrast, &p));
    }
    assert!(worst <= 1e-8, "{worst:e}");
}

#[test]
fn koszul_formula_and_connection_routes_agree() {
    let cases = [models::quad_euclid(4).unwrap(), models::fubini_study(2).unwrap()];
    for m in cases {
        let secs = test_sections();
        for p in points(&m, 10, 50) {
            let k = reduction::kernel_at(&m.contrast, &p, DEFAULT_RANK_TOL).unwrap();
            for x in &secs {
                for y in &secs {
                    let b1 = reduction::koszul_derivative(&m.contrast, &p, &k, x, y, 1e-8).unwrap();
                    let lc = reduction::koszul_derivative_formula(&m.contrast, &p, &k, x, y, 1e-8).unwrap();
                    assert!((&b1 - &lc).amax() <= 1e-8, "{} {p:?}", m.name);
                }
            }
        }
    }
    let s = models::singular_r3().unwrap();
    let e = Section::frames(3, 3);
    for p in points(&s, 11, 10) {
        let k = reduction::kernel_at(&s.contrast, &p, DEFAULT_RANK_TOL).unwrap();
        for x in &e {
            for y in &e {
                assert!(reduction::koszul_derivative(&s.contrast, &p, &k, x, y, 1e-10).unwrap().amax() <= 1e-12);
            }
        }
    }
}

#[test]
fn transversal_connections_are_dual_and_torsion_free() {
    let m = models::fubini_study(2).unwrap();
    for p in points(&m, 12, 20) {
        let k = reduction::kernel_at(&m.contrast, &p, DEFAULT_RANK_TOL).unwrap();
        let (g, gs) = reduction::transversal_connections(&m.contrast, &p, &k, 1e-8).unwrap();
        let c = &k.complement;
        let dg = tensors::metric_derivatives(&m.contrast, &p).unwrap();
        let restricted: Vec<DMatrix<f64>> = (0..c.ncols())
            .map(|a| {
                let full = dg.iter().enumerate().fold(DMatrix::zeros(4, 4), |acc, (i, d)| acc + d * c[(i, a)]);
                c.transpose() * full * c
            })
            .collect();
        assert!(tensors::duality_defect(&g, &gs, &restricted) <= 1e-8);
        let tors = Tensor3::from_fn(g.dim(), |i, j, l| g[(i, j, l)] - g[(j, i, l)]);
        assert!(tors.max_abs() <= 1e-8);
        assert!(g.max_abs_diff(&gs) <= 1e-9);
    }
    let w = models::weighted_singular().unwrap();
    let k = reduction::kernel_at(&w.contrast, &[0.0, 0.0], DEFAULT_RANK_TOL).unwrap();
    assert!(matches!(
        reduction::transversal_connections(&w.contrast, &[0.0, 0.0], &k, 1e-8),
        Err(ReductionError::NotKoszul { .. })
    ));
}

#[test]
fn lie_invariance_iff_representative_independence() {
    let tol = 1e-8;
    let opts = ReduceOptions::default();
    for m in [models::singular_r3().unwrap(), models::fubini_study(2).unwrap()] {
        for w in quotient_points(&m, 13, 5) {
            let r = reduction::reduce(&m.contrast, &m.charts[0], &w, &opts).unwrap();
            assert!(r.diagnostics.lie_residual <= tol && r.diagnostics.representative_residual <= tol, "{}", m.name);
        }
    }
    let m = models::weighted_singular().unwrap();
    for w in quotient_points(&m, 14, 5) {
        match reduction::reduce(&m.contrast, &m.charts[0], &w, &opts) {
            Err(ReductionError::Failed(fail)) => {
                assert!(fail.diagnostics.lie_residual > tol);
                assert!(fail.diagnostics.representative_residual > tol);
            }
            other => panic!("expected a refusal, got {other:?}"),
        }
    }
}

#[test]
fn weighted_singular_residuals_match_symbolic_values() {
    let m = models::weighted_singular().unwrap();
    for z in [-0.5, 0.0, 0.4] {
        let p = [0.3, z];
        let k = reduction::kernel_at(&m.contrast, &p, DEFAULT_RANK_TOL).unwrap();
        let e2z = (2.0 * z).exp();
        assert!((reduction::koszul_residual(&m.contrast, &p, &k).unwrap() - e2z).abs() <= 1e-10);
        assert!((reduction::lie_derivative_residual(&m.contrast, &p, &k).unwrap() - 2.0 * e2z).abs() <= 1e-9);
    }
}

#[test]
fn fubini_study_leaf_transport_preserves_the_transversal_metric() {
    let m = models::fubini_study(2).unwrap();
    for p in points(&m, 15, 5) {
        for index in 0..2 {
            let t = reduction::leaf_transport(&m.contrast, Some(&m.domain), &p, index, 0.5, 100, DEFAULT_RANK_TOL).unwrap();
            assert!(t.invariance_residual <= 1e-6, "{:e}", t.invariance_residual);
        }
    }
}
