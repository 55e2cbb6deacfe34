//! Evolution families and reverse evolution families.
//!
//! `φ_{s,t}(z)` solves `dφ/dt = G(φ, t)`, `φ(s) = z`; the reverse family
//! `ω_{s,t}(z)` solves `dw/ds = −G(w, s)` backwards from `w(t) = z`. Each seed
//! carries the variational derivative `∂_z` alongside its value, integrated from
//! `d/dt φ' = ∂_z G(φ, t) · φ'`.

use alloc::format;
use alloc::vec::Vec;

use crate::error::{invalid, Result};
use crate::geometry::hyperbolic_distance;
use crate::herglotz::VectorField;
use crate::ode::{integrate, SolverOptions, State, StepLog, StopReason};
use crate::quadrature::simpson_c;
use crate::{math, C64};

pub const DELTA_GUARD: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SeedLabel {
    Origin,
    Polar { circle: usize, angle: usize },
    Free(usize),
}

/// Concentric circles with a common uniform angle set, optionally with the origin
/// stored first.
#[derive(Debug, Clone, PartialEq)]
pub struct PolarLayout {
    pub radii: Vec<f64>,
    pub n_angles: usize,
    pub with_origin: bool,
}

impl PolarLayout {
    pub fn index(&self, circle: usize, angle: usize) -> usize {
        usize::from(self.with_origin) + circle * self.n_angles + angle
    }

    pub fn angle(&self, j: usize) -> f64 {
        core::f64::consts::TAU * j as f64 / self.n_angles as f64
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SeedGrid {
    points: Vec<C64>,
    labels: Vec<SeedLabel>,
    layout: Option<PolarLayout>,
}

impl SeedGrid {
    pub fn polar(radii: &[f64], n_angles: usize, with_origin: bool) -> Result<Self> {
        if n_angles == 0 {
            return Err(invalid("seed grid needs at least one angle"));
        }
        let mut points = Vec::new();
        let mut labels = Vec::new();
        if with_origin {
            points.push(C64::new(0.0, 0.0));
            labels.push(SeedLabel::Origin);
        }
        let angles = math::uniform_angles(n_angles);
        for (ci, r) in radii.iter().enumerate() {
            for (aj, a) in angles.iter().enumerate() {
                points.push(math::cis(*a) * *r);
                labels.push(SeedLabel::Polar { circle: ci, angle: aj });
            }
        }
        let grid = Self {
            points,
            labels,
            layout: Some(PolarLayout { radii: radii.to_vec(), n_angles, with_origin }),
        };
        grid.check()?;
        Ok(grid)
    }

    pub fn from_points(points: Vec<C64>) -> Result<Self> {
        let labels = (0..points.len())
            .map(|i| if points[i] == C64::new(0.0, 0.0) { SeedLabel::Origin } else { SeedLabel::Free(i) })
            .collect();
        let grid = Self { points, labels, layout: None };
        grid.check()?;
        Ok(grid)
    }

    fn check(&self) -> Result<()> {
        for (i, z) in self.points.iter().enumerate() {
            if !math::is_finite(*z) || z.norm() > 1.0 - DELTA_GUARD {
                return Err(invalid(format!("seed {i} = {z} is not inside |z| ≤ 1 − δ_guard")));
            }
        }
        Ok(())
    }

    pub fn points(&self) -> &[C64] {
        &self.points
    }

    pub fn labels(&self) -> &[SeedLabel] {
        &self.labels
    }

    pub fn layout(&self) -> Option<&PolarLayout> {
        self.layout.as_ref()
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn origin_index(&self) -> Option<usize> {
        self.labels.iter().position(|l| *l == SeedLabel::Origin)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Forward,
    Reverse,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SeedOutcome {
    pub stop: StopReason,
    pub log: StepLog,
    /// Number of stored times (from the start) that hold values.
    pub valid: usize,
}

/// Values `φ_{s,t}(z)` and derivatives `φ'_{s,t}(z)` on a seed grid at the stored
/// times. For reverse families the times run downward from `t` and entry `k`
/// holds `ω_{times[k], t}(z)`.
#[derive(Debug, Clone)]
pub struct TrajectorySet {
    pub start: f64,
    pub times: Vec<f64>,
    pub seeds: SeedGrid,
    pub direction: Direction,
    values: Vec<C64>,
    derivs: Vec<C64>,
    pub outcomes: Vec<SeedOutcome>,
}

impl TrajectorySet {
    fn slot(&self, ti: usize, si: usize) -> usize {
        si * self.times.len() + ti
    }

    pub fn value(&self, ti: usize, si: usize) -> Option<C64> {
        (ti < self.outcomes[si].valid).then(|| self.values[self.slot(ti, si)])
    }

    pub fn deriv(&self, ti: usize, si: usize) -> Option<C64> {
        (ti < self.outcomes[si].valid).then(|| self.derivs[self.slot(ti, si)])
    }

    pub fn time_index(&self, t: f64) -> Option<usize> {
        self.times.iter().position(|s| *s == t)
    }

    pub fn is_truncated(&self, si: usize) -> bool {
        self.outcomes[si].valid < self.times.len()
    }

    pub fn truncated_count(&self) -> usize {
        (0..self.seeds.len()).filter(|&i| self.is_truncated(i)).count()
    }

    /// Values at the last stored time (`None` for truncated seeds).
    pub fn final_values(&self) -> Vec<Option<C64>> {
        let last = self.times.len() - 1;
        (0..self.seeds.len()).map(|si| self.value(last, si)).collect()
    }
}

fn augmented(field: &VectorField, sign: f64) -> impl Fn(f64, &State) -> State + '_ {
    move |t, y| {
        let (g, dg) = field.eval_with_dz(y[0], t);
        [g * sign, dg * y[1] * sign]
    }
}

fn run(
    field: &VectorField,
    start: f64,
    times: Vec<f64>,
    seeds: &SeedGrid,
    opts: &SolverOptions,
    direction: Direction,
) -> TrajectorySet {
    let nt = times.len();
    let ns = seeds.len();
    let mut values = alloc::vec![C64::new(f64::NAN, f64::NAN); nt * ns];
    let mut derivs = values.clone();
    let mut outcomes = Vec::with_capacity(ns);
    let sign = if direction == Direction::Forward { 1.0 } else { -1.0 };
    let rhs = augmented(field, sign);
    for (si, &z) in seeds.points().iter().enumerate() {
        let mut valid = 0;
        let base = si * nt;
        let (stop, log) = integrate(
            &rhs,
            start,
            [z, C64::new(1.0, 0.0)],
            &times,
            field.discontinuities(),
            opts,
            |ti, y| {
                values[base + ti] = y[0];
                derivs[base + ti] = y[1];
                valid = ti + 1;
            },
        );
        // Exact initial data, independent of rounding inside the integrator.
        values[base] = z;
        derivs[base] = C64::new(1.0, 0.0);
        outcomes.push(SeedOutcome { stop, log, valid: valid.max(1) });
    }
    TrajectorySet { start, times, seeds: seeds.clone(), direction, values, derivs, outcomes }
}

/// Integrate `φ_{s,t}` for every seed, storing `s` and each checkpoint `> s`.
pub fn solve_forward(
    field: &VectorField,
    s: f64,
    checkpoints: &[f64],
    seeds: &SeedGrid,
    opts: &SolverOptions,
) -> Result<TrajectorySet> {
    if !(opts.rtol > 0.0 && opts.atol > 0.0) {
        return Err(invalid("tolerances must be positive"));
    }
    let mut times = alloc::vec![s];
    for &t in checkpoints {
        if t < s {
            return Err(invalid(format!("checkpoint {t} precedes the start time {s}")));
        }
        if t > *times.last().unwrap() {
            times.push(t);
        } else if t != s && t != *times.last().unwrap() {
            return Err(invalid("checkpoints must be ascending"));
        }
    }
    Ok(run(field, s, times, seeds, opts, Direction::Forward))
}

/// Integrate the reverse family from `w(t) = z` down to `s = 0`, storing every
/// requested `s ∈ [0, t)` (0 is always included).
pub fn solve_reverse(
    field: &VectorField,
    t: f64,
    s_values: &[f64],
    seeds: &SeedGrid,
    opts: &SolverOptions,
) -> Result<TrajectorySet> {
    if t < 0.0 {
        return Err(invalid("reverse family needs t ≥ 0"));
    }
    if !(opts.rtol > 0.0 && opts.atol > 0.0) {
        return Err(invalid("tolerances must be positive"));
    }
    let mut below: Vec<f64> = s_values.iter().copied().filter(|s| *s < t && *s >= 0.0).collect();
    below.push(0.0);
    below.sort_by(|a, b| b.total_cmp(a));
    below.dedup();
    let mut times = alloc::vec![t];
    times.extend(below.into_iter().filter(|s| *s < t));
    Ok(run(field, t, times, seeds, opts, Direction::Reverse))
}

/// `g_t = ω_{0,t}` on the given points; `None` for truncated trajectories.
pub fn reverse_to_origin(field: &VectorField, t: f64, points: &[C64], opts: &SolverOptions) -> Result<Vec<Option<(C64, C64)>>> {
    let seeds = SeedGrid::from_points(points.to_vec())?;
    let traj = solve_reverse(field, t, &[], &seeds, opts)?;
    let last = traj.times.len() - 1;
    Ok((0..points.len())
        .map(|si| traj.value(last, si).zip(traj.deriv(last, si)))
        .collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct SemigroupReport {
    pub max_residual: f64,
    pub worst_seed: Option<usize>,
    /// Seeds dropped because one of the legs hit the boundary guard.
    pub excluded: Vec<usize>,
}

/// Compare `φ_{s,t}` against `φ_{u,t} ∘ φ_{s,u}`, both by independent integrations.
pub fn verify_semigroup(
    field: &VectorField,
    s: f64,
    u: f64,
    t: f64,
    seeds: &SeedGrid,
    opts: &SolverOptions,
) -> Result<SemigroupReport> {
    if !(s <= u && u <= t) {
        return Err(invalid("semigroup check needs s ≤ u ≤ t"));
    }
    let direct = solve_forward(field, s, &[t], seeds, opts)?;
    let first = solve_forward(field, s, &[u], seeds, opts)?;
    let mids: Vec<Option<C64>> = first.final_values();
    let live: Vec<usize> = (0..seeds.len()).filter(|&i| mids[i].is_some()).collect();
    let mid_points: Vec<C64> = live.iter().map(|&i| mids[i].unwrap()).collect();
    let second = solve_forward(field, u, &[t], &SeedGrid::from_points(mid_points)?, opts)?;
    let composed = second.final_values();
    let direct_vals = direct.final_values();

    let mut report = SemigroupReport { max_residual: 0.0, worst_seed: None, excluded: Vec::new() };
    let mut k = 0;
    for i in 0..seeds.len() {
        let comp = if mids[i].is_some() {
            k += 1;
            composed[k - 1]
        } else {
            None
        };
        match (direct_vals[i], comp) {
            (Some(a), Some(b)) => {
                let r = (a - b).norm();
                if r > report.max_residual || report.worst_seed.is_none() {
                    report.max_residual = report.max_residual.max(r);
                    report.worst_seed = Some(i);
                }
            }
            _ => report.excluded.push(i),
        }
    }
    Ok(report)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SchwarzPickReport {
    /// Largest `d_h(φ(z₁), φ(z₂)) − d_h(z₁, z₂)` over pairs and stored times.
    pub worst_violation: f64,
    pub worst: Option<((usize, usize), usize)>,
    pub checked: usize,
    pub excluded: usize,
    pub pass: bool,
}

/// Numerical witness of the Schwarz–Pick contraction along a trajectory set.
pub fn schwarz_pick_check(traj: &TrajectorySet, pairs: &[(usize, usize)], tol_hyp: f64) -> SchwarzPickReport {
    let seeds = traj.seeds.points();
    let mut worst_violation = f64::NEG_INFINITY;
    let mut worst = None;
    let mut checked = 0;
    let mut excluded = 0;
    for &(a, b) in pairs {
        if traj.is_truncated(a) || traj.is_truncated(b) {
            excluded += 1;
            continue;
        }
        let d0 = hyperbolic_distance(seeds[a], seeds[b]);
        for ti in 0..traj.times.len() {
            let (Some(wa), Some(wb)) = (traj.value(ti, a), traj.value(ti, b)) else { continue };
            let v = hyperbolic_distance(wa, wb) - d0;
            checked += 1;
            if v > worst_violation {
                worst_violation = v;
                worst = Some(((a, b), ti));
            }
        }
    }
    if checked == 0 {
        worst_violation = 0.0;
    }
    SchwarzPickReport { worst_violation, worst, checked, excluded, pass: worst_violation <= tol_hyp }
}

/// Largest increase of `|φ_{s,t}(z)|` between consecutive stored times.
pub fn max_modulus_increase(traj: &TrajectorySet) -> f64 {
    let mut worst: f64 = 0.0;
    for si in 0..traj.seeds.len() {
        for ti in 1..traj.times.len() {
            if let (Some(a), Some(b)) = (traj.value(ti - 1, si), traj.value(ti, si)) {
                worst = worst.max(b.norm() - a.norm());
            }
        }
    }
    worst
}

#[derive(Debug, Clone, PartialEq)]
pub struct OriginDerivative {
    pub times: Vec<f64>,
    /// `φ_{0,t}(0)`.
    pub values: Vec<C64>,
    /// `φ'_{0,t}(0)` from the variational equation.
    pub derivs: Vec<C64>,
    /// `exp(−∫₀ᵗ p(0,u) du)` when `τ ≡ 0`.
    pub quadrature: Option<Vec<C64>>,
}

/// Simpson nodes per unit time for the `τ ≡ 0` cross-check.
const ORIGIN_QUAD_DENSITY: f64 = 256.0;

pub fn derivative_at_origin(field: &VectorField, checkpoints: &[f64], opts: &SolverOptions) -> Result<OriginDerivative> {
    let seeds = SeedGrid::from_points(alloc::vec![C64::new(0.0, 0.0)])?;
    let traj = solve_forward(field, 0.0, checkpoints, &seeds, opts)?;
    if traj.is_truncated(0) {
        let t = traj.times[traj.outcomes[0].valid - 1];
        return Err(crate::Error::OriginLost { t, reason: format!("{:?}", traj.outcomes[0].stop) });
    }
    let n = traj.times.len();
    let values = (0..n).map(|ti| traj.value(ti, 0).unwrap()).collect();
    let derivs = (0..n).map(|ti| traj.deriv(ti, 0).unwrap()).collect();
    let quadrature = (field.tau.constant_value() == Some(C64::new(0.0, 0.0))).then(|| {
        let mut out = Vec::with_capacity(n);
        let mut acc = C64::new(0.0, 0.0);
        let mut prev = traj.times[0];
        for &t in &traj.times {
            if t > prev {
                acc += integrate_p_origin(field, prev, t);
            }
            prev = t;
            out.push((-acc).exp());
        }
        out
    });
    Ok(OriginDerivative { times: traj.times, values, derivs, quadrature })
}

/// `∫ p(0,u) du` over `[a, b]`, split at the field's breakpoints.
fn integrate_p_origin(field: &VectorField, a: f64, b: f64) -> C64 {
    let mut cuts: Vec<f64> = alloc::vec![a];
    cuts.extend(field.discontinuities().iter().copied().filter(|d| *d > a && *d < b));
    cuts.push(b);
    let zero = C64::new(0.0, 0.0);
    cuts.windows(2)
        .map(|w| {
            let n = ((w[1] - w[0]) * ORIGIN_QUAD_DENSITY) as usize + 2;
            // Keep the panel strictly inside the interval so a right-continuous
            // jump at the right end is not sampled.
            let lo = w[0];
            let hi = w[1].next_down();
            simpson_c(|u| field.p.eval(zero, u), lo, hi, n)
        })
        .sum()
}
