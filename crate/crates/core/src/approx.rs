//! Step-function approximation of Denjoy–Wolff data, convergence experiments for
//! evolution families and chains, and the Gronwall envelope.

use alloc::vec::Vec;

use crate::chains::{chain_options, ChainEvaluator};
use crate::error::{invalid, Error, Result};
use crate::evolution::{solve_forward, SeedGrid, TrajectorySet};
use crate::herglotz::{assemble_field, DenjoyWolffSpec, HerglotzSpec, VectorField};
use crate::ode::SolverOptions;
use crate::quadrature::cumulative_trapezoid;
use crate::{math, C64};

/// Rounding allowance of the deviation inequality.
pub const TOL_DEVIATION: f64 = 1e-12;
/// Probe nodes per approximation cell.
const PROBES_PER_CELL: usize = 16;
/// Circle samples for suprema of holomorphic quantities over a disk.
const SUP_SAMPLES: usize = 256;

/// Midpoint-sampled step function on the uniform `n`-partition of `[0, T]`,
/// held constant outside `[0, T]`.
#[derive(Debug, Clone, PartialEq)]
pub struct StepApproximant {
    pub level: usize,
    pub horizon: f64,
    /// Interior partition nodes `kT/n`, `k = 1..n`.
    pub breakpoints: Vec<f64>,
    pub values: Vec<C64>,
    /// `sup |τ − τ_n|` over `16n + 1` probe nodes.
    pub deviation: f64,
}

impl StepApproximant {
    pub fn eval(&self, t: f64) -> C64 {
        self.values[self.breakpoints.partition_point(|b| *b <= t)]
    }

    pub fn to_spec(&self) -> DenjoyWolffSpec {
        DenjoyWolffSpec::Step { breakpoints: self.breakpoints.clone(), values: self.values.clone() }
    }
}

pub fn step_approximate(tau: &DenjoyWolffSpec, n: usize, horizon: f64) -> Result<StepApproximant> {
    if n == 0 || !(horizon > 0.0) {
        return Err(invalid("step approximation needs n ≥ 1 and T > 0"));
    }
    let h = horizon / n as f64;
    let breakpoints: Vec<f64> = (1..n).map(|k| k as f64 * h).collect();
    let values: Vec<C64> = (0..n).map(|k| tau.eval((k as f64 + 0.5) * h)).collect();
    let mut s = StepApproximant { level: n, horizon, breakpoints, values, deviation: 0.0 };
    s.deviation = math::linspace(0.0, horizon, PROBES_PER_CELL * n)
        .into_iter()
        .map(|t| (tau.eval(t) - s.eval(t)).norm())
        .fold(0.0, f64::max);
    Ok(s)
}

/// `(|G − G_n|, 4|τ − τ_n||p|)` at one sample with `p = p(z, t)`.
pub fn deviation_at(p: C64, tau: C64, tau_n: C64, z: C64) -> (f64, f64) {
    let one = C64::new(1.0, 0.0);
    let g = (z - tau) * (tau.conj() * z - one);
    let g_n = (z - tau_n) * (tau_n.conj() * z - one);
    (((g - g_n) * p).norm(), 4.0 * (tau - tau_n).norm() * p.norm())
}

#[derive(Debug, Clone, PartialEq)]
pub struct DeviationReport {
    pub samples: usize,
    pub max_measured: f64,
    /// Largest `measured / bound` over samples with a positive bound.
    pub max_ratio: f64,
    pub within: usize,
}

impl DeviationReport {
    pub fn pass(&self) -> bool {
        self.within == self.samples
    }
}

/// Deviation inequality over explicit `(p, τ, τ_n, z)` samples with `|z| ≤ 1`.
/// A violation beyond rounding is an implementation bug and is fatal.
pub fn deviation_samples(samples: &[(C64, C64, C64, C64)]) -> Result<DeviationReport> {
    let mut rep = DeviationReport { samples: samples.len(), max_measured: 0.0, max_ratio: 0.0, within: 0 };
    for &(p, tau, tau_n, z) in samples {
        if z.norm() > 1.0 + 1e-15 {
            return Err(invalid("deviation samples must lie in the closed unit disk"));
        }
        let (m, b) = deviation_at(p, tau, tau_n, z);
        rep.max_measured = rep.max_measured.max(m);
        if b > 0.0 {
            rep.max_ratio = rep.max_ratio.max(m / b);
        }
        if m <= b + TOL_DEVIATION * b.max(1.0) {
            rep.within += 1;
        } else {
            return Err(Error::BoundViolation { measured: m, bound: b });
        }
    }
    Ok(rep)
}

/// Deviation inequality for `G = (p, τ)` against `G_n = (p, τ_n)` on `grid × times`.
pub fn field_deviation(
    p: &HerglotzSpec,
    tau: &DenjoyWolffSpec,
    tau_n: &DenjoyWolffSpec,
    grid: &[C64],
    times: &[f64],
) -> Result<DeviationReport> {
    let mut samples = Vec::with_capacity(grid.len() * times.len());
    for &t in times {
        let (a, b) = (tau.eval(t), tau_n.eval(t));
        for &z in grid {
            samples.push((p.eval(z, t), a, b, z));
        }
    }
    deviation_samples(&samples)
}

/// `E(t) = h(t) + ∫_{t₀}^t g(s)h(s)exp(∫_s^t g) ds` on nodes `ts` (ascending,
/// arbitrary spacing) from samples of `h` and `g` (trapezoid rule).
pub fn gronwall_envelope_sampled(ts: &[f64], h: &[f64], g: &[f64]) -> Vec<f64> {
    let n = ts.len();
    let mut out = Vec::with_capacity(n);
    if n == 0 {
        return out;
    }
    let mut big_g = 0.0;
    let mut inner = 0.0;
    let mut prev = g[0] * h[0];
    out.push(h[0]);
    for k in 1..n {
        let dt = ts[k] - ts[k - 1];
        big_g += 0.5 * dt * (g[k - 1] + g[k]);
        let cur = g[k] * h[k] * math::exp(-big_g);
        inner += 0.5 * dt * (prev + cur);
        prev = cur;
        out.push(h[k] + math::exp(big_g) * inner);
    }
    out
}

/// Envelope on `n` uniform intervals of `[t0, t1]`; returns `(nodes, values)`.
pub fn gronwall_envelope<H: Fn(f64) -> f64, G: Fn(f64) -> f64>(h: H, g: G, t0: f64, t1: f64, n: usize) -> (Vec<f64>, Vec<f64>) {
    let ts = math::linspace(t0, t1, n.max(1));
    let hs: Vec<f64> = ts.iter().map(|t| h(*t)).collect();
    let gs: Vec<f64> = ts.iter().map(|t| g(*t)).collect();
    let e = gronwall_envelope_sampled(&ts, &hs, &gs);
    (ts, e)
}

/// Settings shared by the convergence experiments.
#[derive(Debug, Clone)]
pub struct ApproxConfig {
    pub levels: Vec<usize>,
    /// Approximation horizon `T`; also the fixed chain horizon.
    pub horizon: f64,
    pub s: f64,
    pub t_end: f64,
    pub seeds: SeedGrid,
    /// Report times in `[s, t_end]`; errors are sup-norms over these.
    pub checkpoints: Vec<f64>,
    /// Uniform intervals of the dense grid on `[s, t_end]` carrying the envelope
    /// quadrature and the dense error column (breakpoints are added).
    pub intervals: usize,
    pub opts: SolverOptions,
}

impl Default for ApproxConfig {
    fn default() -> Self {
        ApproxConfig {
            levels: alloc::vec![4, 8, 16, 32],
            horizon: 4.0,
            s: 0.0,
            t_end: 2.0,
            seeds: SeedGrid::polar(&[0.3, 0.6], 8, false).expect("valid seeds"),
            checkpoints: math::linspace(0.0, 2.0, 8),
            intervals: 1024,
            opts: SolverOptions::with_tol(1e-11),
        }
    }
}

impl ApproxConfig {
    pub fn validate(&self) -> Result<()> {
        if self.levels.is_empty() || self.levels.contains(&0) {
            return Err(invalid("levels must be non-empty and positive"));
        }
        if !(self.horizon > 0.0) || !(self.t_end > self.s) || self.s < 0.0 || self.t_end > self.horizon {
            return Err(invalid("need 0 ≤ s < t_end ≤ T"));
        }
        if self.checkpoints.iter().any(|t| *t < self.s || *t > self.t_end) {
            return Err(invalid("checkpoints must lie in [s, t_end]"));
        }
        if self.intervals == 0 {
            return Err(invalid("the dense grid needs at least one interval"));
        }
        Ok(())
    }

    /// Noise floor of an error column.
    pub fn noise_floor(&self) -> f64 {
        10.0 * self.opts.rtol.max(self.opts.atol)
    }

    fn checkpoints(&self, extra: &[f64]) -> Vec<f64> {
        let mut ts = math::linspace(self.s, self.t_end, self.intervals);
        ts.extend(extra.iter().copied().filter(|b| *b > self.s && *b < self.t_end));
        ts.extend(self.checkpoints.iter().copied());
        ts.sort_by(f64::total_cmp);
        ts.dedup_by(|a, b| (*a - *b).abs() <= 1e-12 * (1.0 + b.abs()));
        ts
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LevelRow {
    pub level: usize,
    pub deviation: f64,
    /// Sup over seeds and checkpoints; for chains, each checkpoint's sup is
    /// divided by `max(1, sup|f_t|)`.
    pub error: f64,
    /// Unscaled sup over seeds and checkpoints.
    pub error_raw: f64,
    /// Sup over seeds and the dense grid (includes mid-cell times).
    pub error_dense: f64,
    /// Envelope at `t_end` (the largest value on the window).
    pub envelope: f64,
    /// Error below the envelope at every dense-grid time.
    pub within_envelope: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceTable {
    pub rows: Vec<LevelRow>,
    /// Least-squares slope of `−log error` against `log n`.
    pub order: Option<f64>,
    /// Least-squares slope of `log error` against `log deviation`.
    pub order_vs_deviation: Option<f64>,
    /// Strictly decreasing, ignoring pairs already at the noise floor.
    pub monotone: bool,
    pub noise_floor: f64,
}

/// Least-squares slope of `ys` against `xs` in log–log coordinates.
pub fn fitted_slope(xs: &[f64], ys: &[f64]) -> Option<f64> {
    let pts: Vec<(f64, f64)> = xs
        .iter()
        .zip(ys)
        .filter(|(x, y)| **x > 0.0 && **y > 0.0)
        .map(|(x, y)| (math::ln(*x), math::ln(*y)))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

fn monotone(errors: &[f64], floor: f64) -> bool {
    errors.windows(2).all(|w| w[1] < w[0] || (w[0] <= floor && w[1] <= floor))
}

fn table(rows: Vec<LevelRow>, floor: f64) -> ConvergenceTable {
    let ns: Vec<f64> = rows.iter().map(|r| r.level as f64).collect();
    let errs: Vec<f64> = rows.iter().map(|r| r.error).collect();
    let devs: Vec<f64> = rows.iter().map(|r| r.deviation).collect();
    let usable: Vec<bool> = errs.iter().map(|e| *e > floor).collect();
    let pick = |v: &[f64]| -> Vec<f64> { v.iter().zip(&usable).filter(|(_, u)| **u).map(|(x, _)| *x).collect() };
    ConvergenceTable {
        order: fitted_slope(&pick(&ns), &pick(&errs)).map(|s| -s),
        order_vs_deviation: fitted_slope(&pick(&devs), &pick(&errs)),
        monotone: monotone(&errs, floor),
        noise_floor: floor,
        rows,
    }
}

/// Reference trajectories with the exact `τ`, on the uniform checkpoint grid.
pub struct EfReference {
    pub field: VectorField,
    pub checkpoints: Vec<f64>,
    pub traj: TrajectorySet,
}

pub fn ef_reference(p: &HerglotzSpec, tau: &DenjoyWolffSpec, cfg: &ApproxConfig) -> Result<EfReference> {
    cfg.validate()?;
    let field = assemble_field(p.clone(), tau.clone())?;
    let mut breaks = Vec::new();
    for n in &cfg.levels {
        breaks.extend((1..*n).map(|k| k as f64 * cfg.horizon / *n as f64));
    }
    let checkpoints = cfg.checkpoints(&breaks);
    let traj = solve_forward(&field, cfg.s, &checkpoints, &cfg.seeds, &cfg.opts)?;
    if traj.truncated_count() > 0 {
        return Err(invalid("reference trajectories reached the boundary guard"));
    }
    Ok(EfReference { field, checkpoints, traj })
}

fn sup_on_circle<F: Fn(C64) -> f64>(r: f64, f: F) -> f64 {
    math::uniform_angles(SUP_SAMPLES).into_iter().map(|a| f(math::cis(a) * r)).fold(0.0, f64::max)
}

/// One row of the evolution-family table, with the Gronwall envelope built
/// from `h = ∫4|τ − τ_n| sup|p|` and `g = sup|∂_z G_n|` on the disk enclosing
/// both trajectories.
pub fn ef_level(p: &HerglotzSpec, tau: &DenjoyWolffSpec, n: usize, cfg: &ApproxConfig, reference: &EfReference) -> Result<LevelRow> {
    let approx = step_approximate(tau, n, cfg.horizon)?;
    let field_n = assemble_field(p.clone(), approx.to_spec())?;
    let traj = solve_forward(&field_n, cfg.s, &reference.checkpoints, &cfg.seeds, &cfg.opts)?;
    let ts = &reference.checkpoints;
    let times_idx: Vec<(usize, usize)> = ts
        .iter()
        .map(|t| (reference.traj.time_index(*t).unwrap(), traj.time_index(*t).unwrap()))
        .collect();
    let mut err_t = alloc::vec![0.0; ts.len()];
    let mut radius: f64 = 0.0;
    for (k, &(a, b)) in times_idx.iter().enumerate() {
        for si in 0..cfg.seeds.len() {
            let (Some(x), Some(y)) = (reference.traj.value(a, si), traj.value(b, si)) else {
                return Err(Error::OriginLost { t: ts[k], reason: "approximant trajectory truncated".into() });
            };
            err_t[k] = f64::max(err_t[k], (x - y).norm());
            radius = radius.max(x.norm()).max(y.norm());
        }
    }
    let radius = radius.min(1.0);
    let h_rate: Vec<f64> = ts
        .iter()
        .map(|&t| 4.0 * (tau.eval(t) - approx.eval(t)).norm() * sup_on_circle(radius, |z| p.eval(z, t).norm()))
        .collect();
    let g: Vec<f64> = ts.iter().map(|&t| sup_on_circle(radius, |z| field_n.eval_with_dz(z, t).1.norm())).collect();
    let h = integrate_nonuniform(ts, &h_rate);
    let env = gronwall_envelope_sampled(ts, &h, &g);
    let within = err_t.iter().zip(&env).all(|(e, b)| *e <= *b + cfg.noise_floor());
    let error = cfg
        .checkpoints
        .iter()
        .map(|t| err_t[ts.iter().position(|x| (x - t).abs() <= 1e-12 * (1.0 + t.abs())).unwrap()])
        .fold(0.0, f64::max);
    Ok(LevelRow {
        level: n,
        deviation: approx.deviation,
        error,
        error_raw: error,
        error_dense: err_t.iter().copied().fold(0.0, f64::max),
        envelope: *env.last().unwrap(),
        within_envelope: within,
    })
}

fn integrate_nonuniform(ts: &[f64], ys: &[f64]) -> Vec<f64> {
    if ts.windows(2).all(|w| ((w[1] - w[0]) - (ts[1] - ts[0])).abs() < 1e-12) && ts.len() > 1 {
        return cumulative_trapezoid(ys, ts[1] - ts[0]);
    }
    let mut out = Vec::with_capacity(ts.len());
    let mut acc = 0.0;
    out.push(0.0);
    for k in 1..ts.len() {
        acc += 0.5 * (ts[k] - ts[k - 1]) * (ys[k] + ys[k - 1]);
        out.push(acc);
    }
    out
}

/// Local uniform convergence of the step-approximated evolution families.
pub fn ef_convergence(p: &HerglotzSpec, tau: &DenjoyWolffSpec, cfg: &ApproxConfig) -> Result<ConvergenceTable> {
    let reference = ef_reference(p, tau, cfg)?;
    let rows = cfg.levels.iter().map(|n| ef_level(p, tau, *n, cfg, &reference)).collect::<Result<Vec<_>>>()?;
    Ok(table(rows, cfg.noise_floor()))
}

/// Reference chain values on `checkpoints × seeds` with the exact `τ`.
pub struct ChainReference {
    pub field: VectorField,
    pub values: Vec<Vec<Option<C64>>>,
}

fn chain_values(field: &VectorField, cfg: &ApproxConfig) -> Result<Vec<Vec<Option<C64>>>> {
    let opts = SolverOptions { guard: cfg.opts.guard, ..chain_options() };
    let ev = ChainEvaluator::new(field, cfg.horizon, opts)?;
    cfg.checkpoints.iter().map(|t| ev.eval(*t, cfg.seeds.points())).collect()
}

pub fn chain_reference(p: &HerglotzSpec, tau: &DenjoyWolffSpec, cfg: &ApproxConfig) -> Result<ChainReference> {
    cfg.validate()?;
    let field = assemble_field(p.clone(), tau.clone())?;
    let values = chain_values(&field, cfg)?;
    Ok(ChainReference { field, values })
}

/// One row of the chain table: sup-norm difference of the range-normalized
/// chains at horizon `T` (exact Loewner chains for every level). The envelope
/// column is not defined for chains and is left at `∞`.
pub fn chain_level(p: &HerglotzSpec, tau: &DenjoyWolffSpec, n: usize, cfg: &ApproxConfig, reference: &ChainReference) -> Result<LevelRow> {
    let approx = step_approximate(tau, n, cfg.horizon)?;
    let field_n = assemble_field(p.clone(), approx.to_spec())?;
    let values = chain_values(&field_n, cfg)?;
    let (mut err, mut raw): (f64, f64) = (0.0, 0.0);
    for (row_a, row_b) in reference.values.iter().zip(&values) {
        let (mut d, mut m): (f64, f64) = (0.0, 1.0);
        for (a, b) in row_a.iter().zip(row_b) {
            let (Some(a), Some(b)) = (a, b) else {
                return Err(invalid("chain evaluation truncated"));
            };
            d = d.max((a - b).norm());
            m = m.max(a.norm());
        }
        raw = raw.max(d);
        err = err.max(d / m);
    }
    Ok(LevelRow { level: n, deviation: approx.deviation, error: err, error_raw: raw, error_dense: raw, envelope: f64::INFINITY, within_envelope: true })
}

pub fn chain_convergence(p: &HerglotzSpec, tau: &DenjoyWolffSpec, cfg: &ApproxConfig) -> Result<ConvergenceTable> {
    let reference = chain_reference(p, tau, cfg)?;
    let rows = cfg.levels.iter().map(|n| chain_level(p, tau, *n, cfg, &reference)).collect::<Result<Vec<_>>>()?;
    Ok(table(rows, 10.0 * chain_options().rtol))
}

/// `τ(t) = t/(1 + t)`.
pub fn saturating_tau() -> DenjoyWolffSpec {
    DenjoyWolffSpec::sampled("t/(1+t)", 1.0, |t| C64::new(t / (1.0 + t), 0.0))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    #[test]
    fn step_values_and_order() {
        let tau = saturating_tau();
        let s = step_approximate(&tau, 4, 4.0).unwrap();
        let want = [1.0 / 3.0, 3.0 / 5.0, 5.0 / 7.0, 7.0 / 9.0];
        for (v, w) in s.values.iter().zip(want) {
            assert!((v.re - w).abs() < 1e-15 && v.im == 0.0);
        }
        assert_eq!(s.eval(-1.0), s.values[0]);
        assert_eq!(s.eval(9.0), s.values[3]);
        let devs: Vec<f64> = [4, 8, 16, 32].iter().map(|n| step_approximate(&tau, *n, 4.0).unwrap().deviation).collect();
        for w in devs.windows(2) {
            let r = w[1] / w[0];
            assert!(r > 0.4 && r < 0.7, "{r}");
        }
        let k = DenjoyWolffSpec::constant(0.2, -0.3);
        let s = step_approximate(&k, 7, 4.0).unwrap();
        assert_eq!(s.deviation, 0.0);
        assert!(s.values.iter().all(|v| *v == c(0.2, -0.3)));
        assert!(step_approximate(&k, 0, 4.0).is_err());
    }

    #[test]
    fn deviation_examples() {
        let (m, b) = deviation_at(c(1.0, 0.0), c(0.5, 0.0), c(0.4, 0.0), c(0.0, 0.0));
        assert!((m - 0.1).abs() < 1e-15 && (b - 0.4).abs() < 1e-15);
        let (m, b) = deviation_at(c(2.0, 1.0), c(0.3, 0.1), c(0.3, 0.1), c(0.5, 0.5));
        assert_eq!((m, b), (0.0, 0.0));
        let grid = crate::herglotz::default_disk_grid();
        let tau = saturating_tau();
        let tn = step_approximate(&tau, 4, 4.0).unwrap().to_spec();
        let rep = field_deviation(&HerglotzSpec::becker(0.5), &tau, &tn, &grid, &math::linspace(0.0, 4.0, 40)).unwrap();
        assert!(rep.pass() && rep.max_ratio <= 1.0);
    }

    #[test]
    fn envelope_oracles() {
        let (_, e) = gronwall_envelope(|_| 0.1, |_| 1.0, 0.0, 1.0, 4096);
        assert!((e.last().unwrap() - 0.1 * core::f64::consts::E).abs() < 1e-6);
        let (_, e) = gronwall_envelope(|t| t * t, |_| 0.0, 0.0, 1.0, 10);
        assert!((e.last().unwrap() - 1.0).abs() < 1e-15);
        let (_, e) = gronwall_envelope(|t| t, |_| 1.0, 0.0, 1.0, 4096);
        assert!((e.last().unwrap() - (core::f64::consts::E - 1.0)).abs() < 1e-6);
    }

    #[test]
    fn constant_tau_is_a_no_op() {
        let cfg = ApproxConfig { levels: alloc::vec![2, 4], intervals: 64, ..ApproxConfig::default() };
        assert!(ef_convergence(&HerglotzSpec::constant(1.0, 0.0), &saturating_tau(), &ApproxConfig { checkpoints: alloc::vec![3.0], ..cfg.clone() }).is_err());
        let t = ef_convergence(&HerglotzSpec::constant(1.0, 0.0), &DenjoyWolffSpec::constant(0.3, 0.0), &cfg).unwrap();
        assert!(t.rows.iter().all(|r| r.error <= cfg.noise_floor() && r.deviation == 0.0), "{t:?}");
        assert!(t.monotone);
    }

    #[test]
    fn saturating_tau_converges() {
        let cfg = ApproxConfig::default();
        let p = HerglotzSpec::constant(1.0, 0.0);
        let t = ef_convergence(&p, &saturating_tau(), &cfg).unwrap();
        assert!(t.monotone, "{t:?}");
        assert!(t.rows.iter().all(|r| r.within_envelope && r.error < r.envelope), "{t:?}");
        assert!(t.rows.last().unwrap().error <= 1e-3, "{t:?}");
        let ch = chain_convergence(&p, &saturating_tau(), &cfg).unwrap();
        assert!(ch.monotone, "{ch:?}");
        assert!(ch.rows.last().unwrap().error <= 1e-3, "{ch:?}");
    }
}
