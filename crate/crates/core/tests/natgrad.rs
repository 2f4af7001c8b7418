//! Natural-gradient runs on the zoo.

use infogeo::models;
use infogeo::natgrad::{self, OptimizeProblem};

/// Largest coordinate gap after `steps` steps between the `(μ, σ)` run and
/// the `(μ, log σ)` run mapped back through `σ = exp s`.
fn chart_gap(eta: f64, steps: usize) -> f64 {
    let sigma = OptimizeProblem::towards(models::gaussian_kl(false).unwrap(), &[1.0, 2.0], eta, steps, 0.0).unwrap();
    let log = OptimizeProblem::towards(models::gaussian_kl(true).unwrap(), &[1.0, 2f64.ln()], eta, steps, 0.0).unwrap();
    let a = natgrad::run(&sigma, &[0.0, 1.0]).unwrap();
    let b = natgrad::run(&log, &[0.0, 0.0]).unwrap();
    a.records
        .iter()
        .zip(&b.records)
        .map(|(x, y)| (x.theta[0] - y.theta[0]).abs().max((x.theta[1] - y.theta[1].exp()).abs()))
        .fold(0.0, f64::max)
}

#[test]
fn gaussian_reaches_target_within_budget() {
    let p = OptimizeProblem::towards(models::gaussian_kl(false).unwrap(), &[1.0, 2.0], 0.5, 200, 1e-8).unwrap();
    let t = natgrad::run(&p, &[0.0, 1.0]).unwrap();
    assert!(t.converged() && t.steps_taken() <= 200);
    let th = t.final_theta();
    assert!((th[0] - 1.0).abs() <= 1e-6 && (th[1] - 2.0).abs() <= 1e-6);
}

#[test]
fn singular_r3_kernel_coordinate_never_moves() {
    let p = OptimizeProblem::towards(models::singular_r3().unwrap(), &[0.4, -1.2, -3.0], 0.7, 50, 1e-12).unwrap();
    let t = natgrad::run(&p, &[0.0, 0.0, 7.0]).unwrap();
    assert!(t.records.iter().all(|r| r.theta[2] == 7.0));
}

#[test]
fn reparametrization_gap_shrinks_linearly_with_step_size() {
    // Discrete steps differ between charts at second order per step, so the
    // gap over a fixed flow time scales like η.
    let coarse = chart_gap(0.02, 25);
    let fine = chart_gap(0.01, 50);
    let finer = chart_gap(0.005, 100);
    println!("gap at flow time 0.5: η=0.02 {coarse:e}, η=0.01 {fine:e}, η=0.005 {finer:e}");
    assert!((coarse / fine - 2.0).abs() < 0.2 && (fine / finer - 2.0).abs() < 0.2);
}

mod properties {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(40))]

        #[test]
        fn updates_have_no_kernel_component(x in -2.0f64..2.0, y in -2.0f64..2.0, z in -2.0f64..2.0,
                                            tx in -2.0f64..2.0, ty in -2.0f64..2.0, tz in -2.0f64..2.0) {
            let p = OptimizeProblem::towards(models::singular_r3().unwrap(), &[tx, ty, tz], 0.3, 20, 1e-12).unwrap();
            let (next, _) = natgrad::natural_step(&p, &[x, y, z]).unwrap();
            prop_assert_eq!(next[2], z);
        }

        #[test]
        fn probed_runs_descend(mu in -2.0f64..2.0, sigma in 0.5f64..3.0, eta in 0.1f64..3.0) {
            let p = OptimizeProblem::towards(models::gaussian_kl(false).unwrap(), &[1.0, 2.0], eta, 25, 1e-10).unwrap();
            let probed = natgrad::probe_monotone_eta(&p, &[mu, sigma], 25).unwrap();
            let t = natgrad::run(&OptimizeProblem { eta: probed, ..p }, &[mu, sigma]).unwrap();
            prop_assert!(t.records.windows(2).all(|w| w[1].objective <= w[0].objective));
        }
    }
}
