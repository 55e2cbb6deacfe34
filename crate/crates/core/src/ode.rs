//! Adaptive Dormand–Prince 5(4) integrator for the augmented flow system
//! `(φ, φ')`, integrating in either time direction.
//!
//! Steps never straddle a discontinuity of the right-hand side: the integrator
//! lands exactly on every breakpoint and output target, and stage times are
//! clamped into the open constancy interval so that a step ending on a jump
//! samples the one-sided limit it actually integrates over.

use crate::{math, C64};

pub type State = [C64; 2];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    pub rtol: f64,
    pub atol: f64,
    /// Trajectories stop once `|φ| ≥ 1 − guard`.
    pub guard: f64,
    pub h_min: f64,
    pub max_steps: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self { rtol: 1e-9, atol: 1e-9, guard: 1e-6, h_min: 1e-13, max_steps: 1_000_000 }
    }
}

impl SolverOptions {
    pub fn with_tol(tol: f64) -> Self {
        Self { rtol: tol, atol: tol, ..Self::default() }
    }

    /// Pure relative error control, for quantities that decay exponentially.
    pub fn relative(self) -> Self {
        Self { atol: 1e-300, ..self }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StopReason {
    Completed,
    /// The trajectory reached the boundary guard; values after `t` are absent.
    Boundary { t: f64 },
    StepUnderflow { t: f64 },
    MaxSteps { t: f64 },
}

impl StopReason {
    pub fn is_completed(&self) -> bool {
        matches!(self, StopReason::Completed)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct StepLog {
    pub accepted: usize,
    pub rejected: usize,
    pub evaluations: usize,
    pub h_smallest: f64,
    pub h_largest: f64,
}

// Dormand–Prince coefficients.
const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const B1: f64 = 35.0 / 384.0;
const B3: f64 = 500.0 / 1113.0;
const B4: f64 = 125.0 / 192.0;
const B5: f64 = -2187.0 / 6784.0;
const B6: f64 = 11.0 / 84.0;
// Error coefficients b − b*.
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

#[inline]
fn axpy(y: &State, terms: &[(f64, &State)], h: f64) -> State {
    let mut out = *y;
    for (c, k) in terms {
        out[0] += k[0] * (c * h);
        out[1] += k[1] * (c * h);
    }
    out
}

#[inline]
fn sq(x: f64) -> f64 {
    x * x
}

fn finite(s: &State) -> bool {
    math::is_finite(s[0]) && math::is_finite(s[1])
}

const GUARD_RESOLUTION: f64 = 1e-9;

/// Open interval `(lo, hi)` of the discontinuity partition that a step starting
/// at `t` in direction `dir` integrates over.
fn segment(disc: &[f64], t: f64, dir: f64) -> (f64, f64) {
    if disc.is_empty() {
        return (f64::NEG_INFINITY, f64::INFINITY);
    }
    if dir > 0.0 {
        let i = disc.partition_point(|d| *d <= t);
        let lo = if i == 0 { f64::NEG_INFINITY } else { disc[i - 1] };
        let hi = disc.get(i).copied().unwrap_or(f64::INFINITY);
        (lo, hi)
    } else {
        let i = disc.partition_point(|d| *d < t);
        let lo = if i == 0 { f64::NEG_INFINITY } else { disc[i - 1] };
        let hi = disc.get(i).copied().unwrap_or(f64::INFINITY);
        (lo, hi)
    }
}

fn clamp_open(t: f64, (lo, hi): (f64, f64)) -> f64 {
    let lo = if lo.is_finite() { lo.next_up() } else { lo };
    let hi = if hi.is_finite() { hi.next_down() } else { hi };
    if lo <= hi {
        t.clamp(lo, hi)
    } else {
        t
    }
}

/// Integrate `y' = rhs(t, y)` from `t0` through the monotone list `targets`
/// (all on one side of `t0`), calling `sink(i, y)` when target `i` is reached.
///
/// Targets equal to `t0` are emitted immediately with the initial state.
pub fn integrate<F, S>(
    rhs: F,
    t0: f64,
    y0: State,
    targets: &[f64],
    discontinuities: &[f64],
    opts: &SolverOptions,
    mut sink: S,
) -> (StopReason, StepLog)
where
    F: Fn(f64, &State) -> State,
    S: FnMut(usize, &State),
{
    let mut log = StepLog { h_smallest: f64::INFINITY, ..StepLog::default() };
    let mut ti = 0;
    while ti < targets.len() && targets[ti] == t0 {
        sink(ti, &y0);
        ti += 1;
    }
    if ti == targets.len() {
        return (StopReason::Completed, log);
    }
    let t_final = targets[targets.len() - 1];
    let dir = if t_final > t0 { 1.0 } else { -1.0 };

    // Breakpoints strictly between t0 and the final target, in travel order.
    let mut stops: alloc::vec::Vec<f64> = discontinuities
        .iter()
        .copied()
        .filter(|d| (d - t0) * dir > 0.0 && (t_final - d) * dir > 0.0)
        .collect();
    if dir < 0.0 {
        stops.reverse();
    }
    let mut si = 0;

    let mut t = t0;
    let mut y = y0;
    let eval = |t: f64, y: &State, seg: (f64, f64), log: &mut StepLog| {
        log.evaluations += 1;
        rhs(clamp_open(t, seg), y)
    };
    let mut seg = segment(discontinuities, t, dir);
    let mut k1 = eval(t, &y, seg, &mut log);

    // Initial step (Hairer–Nørsett–Wanner heuristic).
    let sc0 = |s: &State, i: usize| opts.atol + opts.rtol * s[i].norm();
    let d0 = (sq(y[0].norm() / sc0(&y, 0)) + sq(y[1].norm() / sc0(&y, 1))) / 2.0;
    let d1 = (sq(k1[0].norm() / sc0(&y, 0)) + sq(k1[1].norm() / sc0(&y, 1))) / 2.0;
    let mut h = if d0 < 1e-10 || d1 < 1e-10 { 1e-6 } else { 0.01 * math::sqrt(d0 / d1) };
    h = h.min((t_final - t0).abs()).max(opts.h_min);

    loop {
        if log.accepted + log.rejected >= opts.max_steps {
            return (StopReason::MaxSteps { t }, log);
        }
        let next_target = targets[ti];
        let next_stop = match stops.get(si) {
            Some(&d) if (next_target - d) * dir > 0.0 => d,
            _ => next_target,
        };
        let remaining = (next_stop - t) * dir;
        let landing = h >= remaining * (1.0 - 1e-12);
        let step = if landing { remaining } else { h };
        let hs = step * dir;

        let k2 = eval(t + C2 * hs, &axpy(&y, &[(A21, &k1)], hs), seg, &mut log);
        let k3 = eval(t + C3 * hs, &axpy(&y, &[(A31, &k1), (A32, &k2)], hs), seg, &mut log);
        let k4 = eval(t + C4 * hs, &axpy(&y, &[(A41, &k1), (A42, &k2), (A43, &k3)], hs), seg, &mut log);
        let k5 = eval(
            t + C5 * hs,
            &axpy(&y, &[(A51, &k1), (A52, &k2), (A53, &k3), (A54, &k4)], hs),
            seg,
            &mut log,
        );
        let k6 = eval(
            t + hs,
            &axpy(&y, &[(A61, &k1), (A62, &k2), (A63, &k3), (A64, &k4), (A65, &k5)], hs),
            seg,
            &mut log,
        );
        let y_new = axpy(&y, &[(B1, &k1), (B3, &k3), (B4, &k4), (B5, &k5), (B6, &k6)], hs);
        let k7 = eval(t + hs, &y_new, seg, &mut log);

        let ok = finite(&y_new) && finite(&k7);
        let err = if ok {
            let mut acc = 0.0;
            for i in 0..2 {
                let e = (k1[i] * E1 + k3[i] * E3 + k4[i] * E4 + k5[i] * E5 + k6[i] * E6 + k7[i] * E7) * hs;
                let sc = opts.atol + opts.rtol * y[i].norm().max(y_new[i].norm());
                acc += sq(e.norm() / sc);
            }
            math::sqrt(acc / 2.0)
        } else {
            f64::INFINITY
        };

        // A step that crosses the guard is retried with half the size until the
        // crossing time is resolved.
        let crosses = ok && y_new[0].norm() >= 1.0 - opts.guard;
        let coarse = step > GUARD_RESOLUTION * (1.0 + t.abs());
        if err <= 1.0 && crosses && coarse {
            log.rejected += 1;
            h = step * 0.5;
        } else if err <= 1.0 {
            log.accepted += 1;
            log.h_smallest = log.h_smallest.min(step);
            log.h_largest = log.h_largest.max(step);
            t = if landing { next_stop } else { t + hs };
            y = y_new;
            if y[0].norm() >= 1.0 - opts.guard {
                return (StopReason::Boundary { t }, log);
            }
            let mut crossed_jump = false;
            if landing {
                if si < stops.len() && stops[si] == next_stop {
                    si += 1;
                    crossed_jump = true;
                }
                while ti < targets.len() && targets[ti] == next_stop {
                    sink(ti, &y);
                    ti += 1;
                }
                if ti == targets.len() {
                    return (StopReason::Completed, log);
                }
            }
            if crossed_jump {
                seg = segment(discontinuities, t, dir);
                k1 = eval(t, &y, seg, &mut log);
            } else {
                k1 = k7;
            }
            let fac = if err == 0.0 { 5.0 } else { (0.9 * math::powf(err, -0.2)).clamp(0.2, 5.0) };
            // A landing step may have been shortened; grow from the nominal size.
            h = if landing { (step * fac).max(h) } else { step * fac };
        } else {
            log.rejected += 1;
            let fac = if err.is_finite() { (0.9 * math::powf(err, -0.2)).clamp(0.1, 0.9) } else { 0.25 };
            h = step * fac;
            if h < opts.h_min {
                return (StopReason::StepUnderflow { t }, log);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec::Vec;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    #[test]
    fn exponential_decay_to_tolerance() {
        let rhs = |_t: f64, y: &State| [-y[0], -y[1]];
        let mut out = Vec::new();
        let (stop, log) = integrate(rhs, 0.0, [c(0.5, 0.0), c(1.0, 0.0)], &[1.0, 2.0], &[], &SolverOptions::default(), |i, y| {
            out.push((i, *y))
        });
        assert!(stop.is_completed());
        assert!(log.accepted > 3);
        assert!((out[0].1[0] - c(0.5 * libm::exp(-1.0), 0.0)).norm() < 1e-9);
        assert!((out[1].1[1] - c(libm::exp(-2.0), 0.0)).norm() < 1e-9);
    }

    #[test]
    fn backward_direction() {
        let rhs = |_t: f64, y: &State| [y[0], y[1]];
        let mut got = c(0.0, 0.0);
        let (stop, _) = integrate(rhs, 1.0, [c(1.0, 0.0), c(1.0, 0.0)], &[0.5, 0.0], &[], &SolverOptions::default(), |i, y| {
            if i == 1 {
                got = y[0]
            }
        });
        assert!(stop.is_completed());
        assert!((got - c(libm::exp(-1.0), 0.0)).norm() < 1e-9);
    }

    #[test]
    fn jump_in_rhs_is_resolved_exactly() {
        // y' = a(t) with a = 0.5 before t = 0.3 and a = −1 after; y(1) = 0.15 − 0.7.
        let rhs = |t: f64, _y: &State| {
            let a = if t < 0.3 { 0.5 } else { -1.0 };
            [c(a, 0.0), c(0.0, 0.0)]
        };
        let mut got = c(0.0, 0.0);
        integrate(rhs, 0.0, [c(0.0, 0.0), c(0.0, 0.0)], &[1.0], &[0.3], &SolverOptions::default(), |_, y| got = y[0]);
        assert!((got.re - (0.15 - 0.7)).abs() < 1e-13, "{got}");
        // Same jump, integrated backwards from t = 1.
        let mut back = c(0.0, 0.0);
        integrate(rhs, 1.0, [c(-0.55, 0.0), c(0.0, 0.0)], &[0.0], &[0.3], &SolverOptions::default(), |_, y| back = y[0]);
        assert!(back.norm() < 1e-13, "{back}");
    }

    #[test]
    fn guard_stops_trajectory() {
        // y' = 1 drives the modulus across the guard.
        let rhs = |_t: f64, _y: &State| [c(1.0, 0.0), c(0.0, 0.0)];
        let mut hits = 0;
        let (stop, _) = integrate(rhs, 0.0, [c(0.5, 0.0), c(1.0, 0.0)], &[0.2, 1.0], &[], &SolverOptions::default(), |_, _| hits += 1);
        assert_eq!(hits, 1);
        assert!(matches!(stop, StopReason::Boundary { t } if (t - (0.5 - 1e-6)).abs() < 1e-8), "{stop:?}");
    }
}
