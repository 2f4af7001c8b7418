//! Finite-difference oracles shared by the integration tests.
#![allow(dead_code)]

/// Nested central difference of `f` along `dirs` (order = `dirs.len()`),
/// step `h`.
pub fn central(f: &dyn Fn(&[f64]) -> f64, p: &[f64], dirs: &[&[f64]], h: f64) -> f64 {
    let k = dirs.len();
    let mut acc = 0.0;
    for signs in 0..(1usize << k) {
        let mut q = p.to_vec();
        let mut sign = 1.0;
        for (b, d) in dirs.iter().enumerate() {
            let s = if signs >> b & 1 == 1 { -1.0 } else { 1.0 };
            sign *= s;
            for (qi, di) in q.iter_mut().zip(d.iter()) {
                *qi += s * h * di;
            }
        }
        acc += sign * f(&q);
    }
    acc / (2.0 * h).powi(k as i32)
}

/// Two rounds of Richardson extrapolation on [`central`] with steps
/// `h, h/2, h/4` (error O(h⁶)).
pub fn richardson(f: &dyn Fn(&[f64]) -> f64, p: &[f64], dirs: &[&[f64]], h: f64) -> f64 {
    let a = central(f, p, dirs, h);
    let b = central(f, p, dirs, h / 2.0);
    let c = central(f, p, dirs, h / 4.0);
    let ab = (4.0 * b - a) / 3.0;
    let bc = (4.0 * c - b) / 3.0;
    (16.0 * bc - ab) / 15.0
}

pub fn unit(d: usize, i: usize) -> Vec<f64> {
    (0..d).map(|j| if j == i { 1.0 } else { 0.0 }).collect()
}

/// Ridders' extrapolation of [`central`]; the stencil reaches at most `reach`
/// from `p` in max-norm. Returns the estimate and its error estimate.
pub fn ridders(f: &dyn Fn(&[f64]) -> f64, p: &[f64], dirs: &[&[f64]], reach: f64) -> (f64, f64) {
    const SHRINK: f64 = 1.4;
    const LEVELS: usize = 12;
    let order = 2.0;
    let spread: f64 = dirs.iter().map(|d| d.iter().fold(0.0f64, |m, v| m.max(v.abs()))).sum();
    let mut table = vec![vec![0.0; LEVELS]; LEVELS];
    let mut h = reach / spread.max(f64::MIN_POSITIVE);
    table[0][0] = central(f, p, dirs, h);
    let (mut best, mut err) = (table[0][0], f64::INFINITY);
    for i in 1..LEVELS {
        h /= SHRINK;
        table[0][i] = central(f, p, dirs, h);
        let mut fac = SHRINK.powf(order);
        for j in 1..=i {
            table[j][i] = (table[j - 1][i] * fac - table[j - 1][i - 1]) / (fac - 1.0);
            fac *= SHRINK.powf(order);
            let e = (table[j][i] - table[j - 1][i]).abs().max((table[j][i] - table[j - 1][i - 1]).abs());
            if e <= err {
                err = e;
                best = table[j][i];
            }
        }
        if (table[i][i] - table[i - 1][i - 1]).abs() >= 2.0 * err {
            break;
        }
    }
    (best, err)
}

/// [`ridders`] from several initial reaches, keeping the finite estimate with
/// the smallest error estimate. `f` returns NaN outside its domain.
pub fn fd_oracle(f: &dyn Fn(&[f64]) -> f64, p: &[f64], dirs: &[&[f64]]) -> f64 {
    [0.1, 0.05, 0.02, 0.01, 0.005]
        .into_iter()
        .map(|r| ridders(f, p, dirs, r))
        .filter(|(est, err)| est.is_finite() && err.is_finite())
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .map(|(est, _)| est)
        .expect("non-empty reach list")
}
