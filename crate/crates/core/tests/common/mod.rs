//! Independent reference computations shared by the integration tests.
#![allow(dead_code)]

use vri::{eval_potential, SystemParams};

/// Right-hand side of Hamilton's equations, written out directly.
pub fn rhs(s: [f64; 4], c: f64) -> [f64; 4] {
    let [x, y, px, py] = s;
    [
        px,
        py,
        8.0 * x * (1.0 - x) + y * y * (2.0 - y * y) - c * y,
        y * (4.0 * x * (1.0 - y * y) - 1.0) - c * x,
    ]
}

pub fn rk4(s: [f64; 4], c: f64, h: f64) -> [f64; 4] {
    let add = |a: [f64; 4], b: [f64; 4], k: f64| [a[0] + k * b[0], a[1] + k * b[1], a[2] + k * b[2], a[3] + k * b[3]];
    let k1 = rhs(s, c);
    let k2 = rhs(add(s, k1, h / 2.0), c);
    let k3 = rhs(add(s, k2, h / 2.0), c);
    let k4 = rhs(add(s, k3, h), c);
    let mut out = s;
    for i in 0..4 {
        out[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    }
    out
}

/// Composite Simpson quadrature of `sum |v_k|^p` along a trajectory
/// sampled with a fine RK4 step. Returns `None` if the trajectory leaves
/// the box `|x|, |y| <= 10`.
pub fn simpson_half(s0: [f64; 4], c: f64, tau: f64, p: f64, n_steps: usize) -> Option<f64> {
    assert!(n_steps.is_multiple_of(2));
    let h = tau / n_steps as f64;
    let g = |s: [f64; 4]| rhs(s, c).iter().map(|v| v.abs().powf(p)).sum::<f64>();
    let mut s = s0;
    let mut acc = g(s);
    for i in 1..=n_steps {
        s = rk4(s, c, h);
        if s[0].abs() > 10.0 || s[1].abs() > 10.0 {
            return None;
        }
        let w = if i == n_steps {
            1.0
        } else if i % 2 == 1 {
            4.0
        } else {
            2.0
        };
        acc += w * g(s);
    }
    Some(acc * h / 3.0)
}

/// Forward plus backward descriptor by the oracle.
pub fn ld_oracle(s0: [f64; 4], c: f64, tau: f64, p: f64, n_steps: usize) -> Option<(f64, f64)> {
    let f = simpson_half(s0, c, tau, p, n_steps)?;
    let b = simpson_half([s0[0], s0[1], -s0[2], -s0[3]], c, tau, p, n_steps)?;
    Some((f, b))
}

pub fn energy(s: [f64; 4], params: &SystemParams) -> f64 {
    0.5 * s[2] * s[2] + 0.5 * s[3] * s[3] + eval_potential(s[0], s[1], params)
}
