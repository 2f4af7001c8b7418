//! Jet derivatives of every zoo contrast against Ridders-extrapolated central differences.

mod common;

use infogeo::groupoid::MatrixLieGroup;
use infogeo::jets::{deriv1, deriv2, deriv3};
use infogeo::models::{self, Model};
use infogeo::sampling::Rng;

fn zoo() -> Vec<(Model, Option<MatrixLieGroup>)> {
    vec![
        (models::quad_euclid(3).unwrap(), None),
        (models::singular_r3().unwrap(), None),
        (models::gaussian_kl(false).unwrap(), None),
        (models::gaussian_kl(true).unwrap(), None),
        (models::bregman(models::Potential::Quadratic, 3).unwrap(), None),
        (models::bregman(models::Potential::LogSumExp, 3).unwrap(), None),
        (models::bregman(models::Potential::NegEntropy, 3).unwrap(), None),
        (models::fubini_study(2).unwrap(), None),
        (models::weighted_singular().unwrap(), None),
        (models::unitary_group(2).unwrap(), Some(MatrixLieGroup::su2())),
        (models::unitary_group(3).unwrap(), Some(MatrixLieGroup::unitary(3))),
    ]
}

fn arrow(model: &Model, group: &Option<MatrixLieGroup>, rng: &mut Rng) -> Vec<f64> {
    match group {
        Some(g) => {
            let coeffs: Vec<f64> = (0..g.basis().len()).map(|_| rng.range(-1.0, 1.0)).collect();
            g.to_arrow(&g.exp(&coeffs))
        }
        None => [model.domain.sample(rng), model.domain.sample(rng)].concat(),
    }
}

fn direction(n: usize, rng: &mut Rng) -> Vec<f64> {
    (0..n).map(|_| rng.range(-1.0, 1.0)).collect()
}

#[test]
fn jets_agree_with_extrapolated_differences() {
    let mut rng = Rng::seeded(2024);
    let mut worst = [0.0f64; 3];
    let mut largest = 0.0f64;
    for (model, group) in zoo() {
        let f = &model.contrast;
        let plain = |x: &[f64]| f.value(x).unwrap_or(f64::NAN);
        for _ in 0..100 {
            let p = arrow(&model, &group, &mut rng);
            let n = p.len();
            let (u, v, w) = (direction(n, &mut rng), direction(n, &mut rng), direction(n, &mut rng));
            let d1 = deriv1(f, &p, &u).unwrap();
            let d2 = deriv2(f, &p, &u, &v).unwrap();
            let d3 = deriv3(f, &p, &u, &v, &w).unwrap();
            let e1 = (d1 - common::fd_oracle(&plain, &p, &[&u])).abs();
            let e2 = (d2 - common::fd_oracle(&plain, &p, &[&u, &v])).abs();
            let e3 = (d3 - common::fd_oracle(&plain, &p, &[&u, &v, &w])).abs();
            for (k, (e, d)) in [(e1, d1), (e2, d2), (e3, d3)].into_iter().enumerate() {
                // 1e-6 absolute up to magnitude 1e3, relative beyond.
                assert!(e <= 1e-6 * (d.abs() / 1e3).max(1.0), "{} {:?} order {}: {e:e} at {p:?} {u:?} {v:?} {w:?}", model.name, model.params, k + 1);
                worst[k] = worst[k].max(e);
                largest = largest.max(d.abs());
            }
        }
    }
    println!("max |jet - fd| by order: {worst:?}, largest derivative {largest:.3e}");
}

#[test]
fn kl_slope_vanishes_on_the_diagonal() {
    let m = models::gaussian_kl(false).unwrap();
    let plain = |x: &[f64]| m.contrast.value(x).unwrap();
    let mut rng = Rng::seeded(4);
    for _ in 0..20 {
        let a = m.domain.sample(&mut rng);
        let p = [a.clone(), a].concat();
        let v = [vec![0.0, 0.0], direction(2, &mut rng)].concat();
        assert!(deriv1(&m.contrast, &p, &v).unwrap().abs() < 1e-14);
        assert!(common::richardson(&plain, &p, &[&v], 1e-5).abs() < 1e-9);
    }
}

#[test]
fn permutation_symmetry_and_multilinearity() {
    let m = models::fubini_study(2).unwrap();
    let mut rng = Rng::seeded(8);
    for _ in 0..50 {
        let p = [m.domain.sample(&mut rng), m.domain.sample(&mut rng)].concat();
        let (u, v, w) = (direction(8, &mut rng), direction(8, &mut rng), direction(8, &mut rng));
        let f = &m.contrast;
        let base = deriv3(f, &p, &u, &v, &w).unwrap();
        let scale = base.abs().max(1.0);
        for (a, b, c) in [(&u, &w, &v), (&v, &u, &w), (&v, &w, &u), (&w, &u, &v), (&w, &v, &u)] {
            assert!((deriv3(f, &p, a, b, c).unwrap() - base).abs() <= 1e-12 * scale);
        }
        assert!((deriv2(f, &p, &u, &v).unwrap() - deriv2(f, &p, &v, &u).unwrap()).abs() <= 1e-12 * scale);
        let sum: Vec<f64> = u.iter().zip(&v).map(|(a, b)| 2.0 * a + b).collect();
        let lin = deriv3(f, &p, &sum, &v, &w).unwrap();
        let parts = 2.0 * base + deriv3(f, &p, &v, &v, &w).unwrap();
        assert!((lin - parts).abs() <= 1e-11 * scale.max(lin.abs()));
    }
}
