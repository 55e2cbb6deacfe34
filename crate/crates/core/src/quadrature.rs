//! Composite quadrature rules on uniform grids.

use alloc::vec::Vec;

use crate::C64;

/// Composite Simpson rule with `n` (rounded up to even) subintervals.
pub fn simpson<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, n: usize) -> f64 {
    let n = (n.max(2) + 1) & !1;
    let h = (b - a) / n as f64;
    let mut acc = f(a) + f(b);
    for i in 1..n {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        acc += w * f(a + i as f64 * h);
    }
    acc * h / 3.0
}

/// Complex-valued composite Simpson rule.
pub fn simpson_c<F: Fn(f64) -> C64>(f: F, a: f64, b: f64, n: usize) -> C64 {
    let re = simpson(|t| f(t).re, a, b, n);
    let im = simpson(|t| f(t).im, a, b, n);
    C64::new(re, im)
}

/// Running trapezoid integral of samples `ys` on the uniform grid with spacing `h`.
/// Element `i` holds the integral from the first node to node `i`.
pub fn cumulative_trapezoid(ys: &[f64], h: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(ys.len());
    let mut acc = 0.0;
    out.push(0.0);
    for w in ys.windows(2) {
        acc += 0.5 * h * (w[0] + w[1]);
        out.push(acc);
    }
    out.truncate(ys.len());
    out
}

/// Running composite Simpson integral on a uniform grid; odd-indexed nodes use a
/// Simpson 3/8-free correction (trapezoid on the last half panel), which keeps the
/// cumulative values third-order accurate.
pub fn cumulative_simpson(ys: &[f64], h: f64) -> Vec<f64> {
    let n = ys.len();
    let mut out = alloc::vec![0.0; n];
    if n < 2 {
        return out;
    }
    for i in 1..n {
        if i % 2 == 0 {
            out[i] = out[i - 2] + h / 3.0 * (ys[i - 2] + 4.0 * ys[i - 1] + ys[i]);
        } else if i == 1 {
            // Quadratic through the first three nodes when available.
            out[1] = if n > 2 {
                h / 12.0 * (5.0 * ys[0] + 8.0 * ys[1] - ys[2])
            } else {
                0.5 * h * (ys[0] + ys[1])
            };
        } else {
            out[i] = out[i - 1] + h / 12.0 * (-ys[i - 2] + 8.0 * ys[i - 1] + 5.0 * ys[i]);
        }
    }
    out
}
