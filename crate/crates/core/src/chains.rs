//! Loewner chains from evolution families.
//!
//! The range-normalized chain is the limit `f_t = lim_{H→∞} M_H⁻¹ ∘ φ_{t,H} / ψ'_{0,H}(0)`.
//! For every finite horizon `H` the right-hand side is itself an exact Loewner
//! chain on `[0, H]` with `f_0 ∈ S`, so the transition identity and the chain PDE
//! hold at any horizon; the horizon only decides how close the frames are to
//! range normalization.

use alloc::vec::Vec;
use core::f64::consts::TAU;

use crate::error::{invalid, Error, Result};
use crate::evolution::{reverse_to_origin, solve_forward, Direction, SeedGrid, TrajectorySet};
use crate::geometry::{diameter, winding_number};
use crate::herglotz::{max_abs_real_part, HerglotzSpec, VectorField};
use crate::ode::SolverOptions;
use crate::{math, C64};

pub const TOL_CHAIN: f64 = 1e-6;
pub const TOL_LIMIT: f64 = 1e-8;
pub const TOL_BETA: f64 = 1e-6;
pub const T_INFINITY: f64 = 64.0;
pub const DELTA_TRACE: f64 = 1e-3;

const ONE: C64 = C64::new(1.0, 0.0);
const ZERO: C64 = C64::new(0.0, 0.0);

/// `M(z) = (βz + α)/(1 + βᾱz)` with `|α| < 1`, `|β| = 1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Mobius {
    pub alpha: C64,
    pub beta: C64,
}

impl Mobius {
    pub const IDENTITY: Self = Self { alpha: ZERO, beta: ONE };

    pub fn apply(&self, z: C64) -> C64 {
        (self.beta * z + self.alpha) / (ONE + self.beta * self.alpha.conj() * z)
    }

    pub fn inverse(&self, w: C64) -> C64 {
        (w - self.alpha) / (self.beta * (ONE - self.alpha.conj() * w))
    }

    pub fn derivative(&self, z: C64) -> C64 {
        let d = ONE + self.beta * self.alpha.conj() * z;
        self.beta * (1.0 - self.alpha.norm_sqr()) / (d * d)
    }

    pub fn inverse_derivative(&self, w: C64) -> C64 {
        let d = ONE - self.alpha.conj() * w;
        (1.0 - self.alpha.norm_sqr()) / (self.beta * d * d)
    }
}

/// `α(t) = φ_{0,t}(0)`, `β(t) = φ'_{0,t}(0)/|φ'_{0,t}(0)|` and `ψ'_{0,t}(0)`.
#[derive(Debug, Clone, PartialEq)]
pub struct MobiusNormalizer {
    pub times: Vec<f64>,
    pub maps: Vec<Mobius>,
    /// `ψ'_{0,t}(0) = |φ'_{0,t}(0)| / (1 − |α(t)|²)`.
    pub scale: Vec<f64>,
}

fn origin_mobius(value: C64, deriv: C64, t: f64) -> Result<(Mobius, f64)> {
    let m = deriv.norm();
    if !(m > 0.0) || !m.is_finite() {
        return Err(Error::DegenerateDerivative { t });
    }
    let map = Mobius { alpha: value, beta: deriv / m };
    Ok((map, m / (1.0 - value.norm_sqr())))
}

impl MobiusNormalizer {
    pub fn normalize(traj: &TrajectorySet) -> Result<Self> {
        if traj.direction != Direction::Forward || traj.start != 0.0 {
            return Err(invalid("normalization needs a forward trajectory set starting at 0"));
        }
        let o = traj.seeds.origin_index().ok_or_else(|| invalid("trajectory set has no seed at 0"))?;
        let mut out = Self { times: Vec::new(), maps: Vec::new(), scale: Vec::new() };
        for (ti, &t) in traj.times.iter().enumerate() {
            let (Some(v), Some(d)) = (traj.value(ti, o), traj.deriv(ti, o)) else {
                return Err(Error::OriginLost { t, reason: alloc::format!("{:?}", traj.outcomes[o].stop) });
            };
            let (map, s) = if ti == 0 { (Mobius::IDENTITY, 1.0) } else { origin_mobius(v, d, t)? };
            out.times.push(t);
            out.maps.push(map);
            out.scale.push(s);
        }
        Ok(out)
    }

    /// Check `|β| = 1`, `M_t⁻¹(α) = 0`, and `ψ_{s,t}(0) = 0`, `arg ψ'_{s,t}(0) = 0`
    /// for consecutive checkpoints.
    pub fn verify(&self, field: &VectorField, opts: &SolverOptions) -> Result<NormalizerCheck> {
        let mut check = NormalizerCheck::default();
        for m in &self.maps {
            check.beta_modulus = check.beta_modulus.max((m.beta.norm() - 1.0).abs());
            check.fixed_point = check.fixed_point.max(m.inverse(m.alpha).norm());
        }
        for i in 1..self.times.len() {
            let (s, t) = (self.times[i - 1], self.times[i]);
            let (ms, mt) = (self.maps[i - 1], self.maps[i]);
            let seeds = SeedGrid::from_points(alloc::vec![ms.alpha])?;
            let tr = solve_forward(field, s, &[t], &seeds, opts)?;
            let (Some(v), Some(d)) = (tr.value(1, 0), tr.deriv(1, 0)) else {
                return Err(Error::OriginLost { t, reason: alloc::format!("{:?}", tr.outcomes[0].stop) });
            };
            let psi0 = mt.inverse(v);
            let dpsi = mt.inverse_derivative(v) * d * ms.derivative(ZERO);
            check.psi_origin = check.psi_origin.max(psi0.norm());
            check.psi_arg = check.psi_arg.max(dpsi.arg().abs());
        }
        Ok(check)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct NormalizerCheck {
    pub beta_modulus: f64,
    pub fixed_point: f64,
    pub psi_origin: f64,
    pub psi_arg: f64,
}

impl NormalizerCheck {
    pub fn pass(&self) -> bool {
        self.beta_modulus <= 1e-12 && self.fixed_point <= 1e-12 && self.psi_origin <= 1e-9 && self.psi_arg <= 1e-9
    }
}

/// Tight, purely relative control: chain values are quotients of quantities that
/// decay like `e^{−H}`.
pub fn chain_options() -> SolverOptions {
    SolverOptions { rtol: 1e-11, ..SolverOptions::default() }.relative()
}

/// [`chain_options`], tightened when `τ` is a boundary point: then `α(H) → ∂𝔻` and
/// `M_H⁻¹` cancels about `log₁₀ H` digits.
pub fn chain_options_for(field: &VectorField) -> SolverOptions {
    match field.tau.constant_value() {
        Some(tau) if tau.norm() >= 1.0 - 1e-12 => SolverOptions { rtol: 1e-13, ..chain_options() },
        _ => chain_options(),
    }
}

/// Largest `|τ(H)|` for which the chain is integrated in the chart centred at `τ(H)`.
pub const CHART_MAX: f64 = 0.9;

/// For interior `τ(H) ≠ 0` every orbit collapses onto `τ(H)` like `e^{−H}`, and in
/// the original coordinates the differences `φ_{t,H}(w) − α(H)` that carry the
/// chain cancel all their digits long before `T_∞`. Centring the chart at `τ(H)`
/// keeps them relative to zero.
pub fn chart_center(field: &VectorField, horizon: f64) -> Option<C64> {
    let c = field.tau.eval(horizon);
    (c.norm() > 0.0 && c.norm() <= CHART_MAX).then_some(c)
}

/// `(M_c(z), M_c'(z))`, or `(z, 1)` without a chart.
fn to_chart(center: Option<C64>, z: C64) -> (C64, C64) {
    match center {
        None => (z, ONE),
        Some(c) => {
            let d = ONE - c.conj() * z;
            ((z - c) / d, (1.0 - c.norm_sqr()) / (d * d))
        }
    }
}

#[derive(Debug, Clone)]
struct Chart {
    center: C64,
    field: VectorField,
    /// `α(H)` in chart coordinates.
    alpha: C64,
}

/// Evaluates the horizon-`H` chain `f_t(w) = M_H⁻¹(φ_{t,H}(w)) / ψ'_{0,H}(0)`, `t ≤ H`.
#[derive(Debug, Clone)]
pub struct ChainEvaluator<'a> {
    pub field: &'a VectorField,
    pub horizon: f64,
    pub end: Mobius,
    pub scale: f64,
    pub opts: SolverOptions,
    chart: Option<Chart>,
}

impl<'a> ChainEvaluator<'a> {
    pub fn new(field: &'a VectorField, horizon: f64, opts: SolverOptions) -> Result<Self> {
        Self::in_chart(field, horizon, opts, chart_center(field, horizon))
    }

    fn in_chart(field: &'a VectorField, horizon: f64, opts: SolverOptions, center: Option<C64>) -> Result<Self> {
        if !(horizon > 0.0) {
            return Err(invalid("chain horizon must be positive"));
        }
        let local = center.map(|c| field.conjugate(c));
        let (z0, _) = to_chart(center, ZERO);
        let seeds = SeedGrid::from_points(alloc::vec![z0])?;
        let tr = solve_forward(local.as_ref().unwrap_or(field), 0.0, &[horizon], &seeds, &opts)?;
        let (Some(v), Some(d)) = (tr.value(1, 0), tr.deriv(1, 0)) else {
            return Err(Error::OriginLost { t: horizon, reason: alloc::format!("{:?}", tr.outcomes[0].stop) });
        };
        let (Some(c), Some(local)) = (center, local) else {
            let (end, scale) = origin_mobius(v, d, horizon)?;
            return Ok(Self { field, horizon, end, scale, opts, chart: None });
        };
        // Back to the original coordinates only for `end`; frames never use it.
        let k = 1.0 - c.norm_sqr();
        let q = ONE + c.conj() * v;
        let (end, _) = origin_mobius((v + c) / q, d * k * k / (q * q), horizon)?;
        let scale = d.norm() * k / (1.0 - v.norm_sqr());
        Ok(Self { field, horizon, end, scale, opts, chart: Some(Chart { center: c, field: local, alpha: v }) })
    }

    fn center(&self) -> Option<C64> {
        self.chart.as_ref().map(|c| c.center)
    }

    fn flow_field(&self) -> &VectorField {
        self.chart.as_ref().map_or(self.field, |c| &c.field)
    }

    /// `(f, f')` from `v = φ_{t,H}(w)` and `dv/dw`, both in solver coordinates.
    fn frame(&self, v: C64, d: C64) -> (C64, C64) {
        match &self.chart {
            None => (self.end.inverse(v) / self.scale, self.end.inverse_derivative(v) * d / self.scale),
            Some(ch) => {
                let (a, c) = (ch.alpha, ch.center);
                let k = (ONE + c * a.conj()) / (self.end.beta * (ONE + c.conj() * a) * self.scale);
                let q = ONE - a.conj() * v;
                (k * (v - a) / q, k * (1.0 - a.norm_sqr()) / (q * q) * d)
            }
        }
    }

    /// `(f_t(w), f_t'(w))`; `None` where `φ_{t,H}(w)` hit the boundary guard.
    pub fn eval_with_deriv(&self, t: f64, points: &[C64]) -> Result<Vec<Option<(C64, C64)>>> {
        if t > self.horizon {
            return Err(invalid(alloc::format!("time {t} lies beyond the chain horizon {}", self.horizon)));
        }
        let mapped: Vec<(C64, C64)> = points.iter().map(|z| to_chart(self.center(), *z)).collect();
        let seeds = SeedGrid::from_points(mapped.iter().map(|m| m.0).collect())?;
        let tr = solve_forward(self.flow_field(), t, &[self.horizon], &seeds, &self.opts)?;
        let last = tr.times.len() - 1;
        Ok((0..points.len())
            .map(|i| {
                let (v, d) = (tr.value(last, i)?, tr.deriv(last, i)?);
                Some(self.frame(v, d * mapped[i].1))
            })
            .collect())
    }

    pub fn eval(&self, t: f64, points: &[C64]) -> Result<Vec<Option<C64>>> {
        Ok(self.eval_with_deriv(t, points)?.into_iter().map(|v| v.map(|x| x.0)).collect())
    }
}

/// Horizon schedule and limit tolerance.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainConfig {
    pub horizons: Vec<f64>,
    pub tol_limit: f64,
    pub opts: SolverOptions,
    /// Re-integrate the transition identity after building the frames.
    pub verify_transition: bool,
}

impl Default for ChainConfig {
    fn default() -> Self {
        Self::doubling(T_INFINITY)
    }
}

impl ChainConfig {
    /// `H_k = 2^k` up to `t_inf`.
    pub fn doubling(t_inf: f64) -> Self {
        let mut horizons = Vec::new();
        let mut h = 1.0;
        while h <= t_inf {
            horizons.push(h);
            h *= 2.0;
        }
        Self { horizons, tol_limit: TOL_LIMIT, opts: chain_options(), verify_transition: true }
    }

    pub fn fixed(horizon: f64) -> Self {
        Self { horizons: alloc::vec![horizon], ..Self::doubling(1.0) }
    }

    /// Default schedule with tolerances suited to `field`.
    pub fn for_field(field: &VectorField) -> Self {
        Self { opts: chain_options_for(field), ..Self::default() }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LimitDiagnostics {
    /// `(H, δ)`: scaled sup-norm change of the frames from the previous horizon.
    pub deltas: Vec<(f64, f64)>,
    pub horizon: f64,
    pub converged: bool,
}

type Frames = Vec<Vec<Option<C64>>>;

/// Largest `|a − b|` over common entries, relative to `max(1, sup |b|)`.
fn scaled_delta(a: &Frames, b: &Frames) -> f64 {
    let mut diff: f64 = 0.0;
    let mut size: f64 = 1.0;
    for (ra, rb) in a.iter().zip(b) {
        for (x, y) in ra.iter().zip(rb) {
            if let (Some(x), Some(y)) = (x, y) {
                diff = diff.max((x - y).norm());
                size = size.max(y.norm());
            }
        }
    }
    diff / size
}

/// Carry `(φ_{t,a}(w), φ'_{t,a}(w))` forward to `φ_{t,b}` through `φ_{a,b}`.
fn advance(field: &VectorField, a: f64, b: f64, states: &mut [Option<(C64, C64)>], opts: &SolverOptions) -> Result<()> {
    let live: Vec<usize> = (0..states.len()).filter(|&i| states[i].is_some()).collect();
    if live.is_empty() || a == b {
        return Ok(());
    }
    let seeds = SeedGrid::from_points(live.iter().map(|&i| states[i].unwrap().0).collect())?;
    let tr = solve_forward(field, a, &[b], &seeds, opts)?;
    for (k, &i) in live.iter().enumerate() {
        states[i] = match (tr.value(1, k), tr.deriv(1, k)) {
            (Some(v), Some(d)) => Some((v, d * states[i].unwrap().1)),
            _ => None,
        };
    }
    Ok(())
}

/// Runs the horizon schedule, continuing every trajectory from the previous
/// horizon instead of restarting it, and stops once the frames settle.
fn limit_loop<'a>(
    field: &'a VectorField,
    cfg: &ChainConfig,
    t_max: f64,
    points: &[(f64, Vec<C64>)],
) -> Result<(ChainEvaluator<'a>, Frames, LimitDiagnostics)> {
    let horizons: Vec<f64> = cfg.horizons.iter().copied().filter(|h| *h >= t_max && *h > 0.0).collect();
    if horizons.is_empty() {
        return Err(invalid(alloc::format!("no chain horizon covers t = {t_max}")));
    }
    // One chart for the whole schedule, so trajectories can be continued.
    let center = chart_center(field, *horizons.last().unwrap());
    let local = center.map(|c| field.conjugate(c));
    let flow = local.as_ref().unwrap_or(field);
    let mut states: Vec<(f64, Vec<Option<(C64, C64)>>)> =
        points.iter().map(|(t, pts)| (*t, pts.iter().map(|z| Some((to_chart(center, *z).0, ONE))).collect())).collect();
    let mut best: Option<(ChainEvaluator<'a>, Frames)> = None;
    let mut diag = LimitDiagnostics { deltas: Vec::new(), horizon: horizons[0], converged: false };
    for &h in &horizons {
        let ev = ChainEvaluator::in_chart(field, h, cfg.opts, center)?;
        for (t, st) in &mut states {
            advance(flow, *t, h, st, &cfg.opts)?;
            *t = h;
        }
        let frames: Frames =
            states.iter().map(|(_, st)| st.iter().map(|x| x.map(|(v, d)| ev.frame(v, d).0)).collect()).collect();
        diag.horizon = h;
        if let Some((_, prev)) = &best {
            let d = scaled_delta(prev, &frames);
            diag.deltas.push((h, d));
            if d < cfg.tol_limit {
                diag.converged = true;
                return Ok((ev, frames, diag));
            }
        }
        best = Some((ev, frames));
    }
    // A single fixed horizon is exact by construction; more than one that never
    // settled is reported as unconverged.
    diag.converged = horizons.len() == 1;
    let (ev, frames) = best.unwrap();
    Ok((ev, frames, diag))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChainLimit {
    pub values: Vec<Option<C64>>,
    pub diagnostics: LimitDiagnostics,
}

/// `h_s(z) = lim ψ_{s,t}(z)/ψ'_{0,t}(0)` on the given points.
pub fn chain_limit(field: &VectorField, s: f64, points: &[C64], cfg: &ChainConfig) -> Result<ChainLimit> {
    let ms = if s == 0.0 {
        Mobius::IDENTITY
    } else {
        let ev = ChainEvaluator::new(field, s, cfg.opts)?;
        ev.end
    };
    let mapped: Vec<C64> = points.iter().map(|z| ms.apply(*z)).collect();
    let (_, mut frames, diagnostics) = limit_loop(field, cfg, s, &[(s, mapped)])?;
    Ok(ChainLimit { values: frames.pop().unwrap(), diagnostics })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FrameTag {
    RangeNormalized,
    Decreasing,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceSpec {
    pub delta: f64,
    pub n_theta: usize,
    /// Also sample at `1 − δ/2`.
    pub second_radius: bool,
}

impl Default for TraceSpec {
    fn default() -> Self {
        Self { delta: DELTA_TRACE, n_theta: 256, second_radius: false }
    }
}

/// Samples `f_t(r e^{iθ})` on a uniform θ grid, one row per checkpoint.
#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    pub radius: f64,
    pub thetas: Vec<f64>,
    pub values: Frames,
}

impl Trace {
    fn points(&self) -> Vec<C64> {
        self.thetas.iter().map(|a| math::cis(*a) * self.radius).collect()
    }
}

#[derive(Debug, Clone)]
pub struct ChainFrames {
    pub tag: FrameTag,
    pub checkpoints: Vec<f64>,
    pub grid: SeedGrid,
    /// `[checkpoint][grid point]`.
    pub values: Frames,
    pub traces: Vec<Trace>,
    pub limit: Option<LimitDiagnostics>,
    pub transition_residual: Option<f64>,
}

impl ChainFrames {
    pub fn checkpoint_index(&self, t: f64) -> Option<usize> {
        self.checkpoints.iter().position(|s| *s == t)
    }

    pub fn trace(&self) -> &Trace {
        &self.traces[0]
    }
}

fn trace_shells(spec: &TraceSpec) -> Result<Vec<Trace>> {
    if !(spec.delta > 0.0 && spec.delta < 1.0) || spec.n_theta < 3 {
        return Err(invalid("trace needs 0 < δ_trace < 1 and at least 3 angles"));
    }
    let thetas = math::uniform_angles(spec.n_theta);
    let mut radii = alloc::vec![1.0 - spec.delta];
    if spec.second_radius {
        radii.push(1.0 - spec.delta / 2.0);
    }
    Ok(radii.into_iter().map(|radius| Trace { radius, thetas: thetas.clone(), values: Vec::new() }).collect())
}

fn check_checkpoints(checkpoints: &[f64]) -> Result<()> {
    if checkpoints.is_empty() || checkpoints[0] < 0.0 || checkpoints.windows(2).any(|w| w[1] <= w[0]) {
        return Err(invalid("checkpoints must be non-negative and strictly ascending"));
    }
    Ok(())
}

/// Range-normalized frames at the checkpoints. The horizon loop watches the grid
/// values only; traces are evaluated once at the accepted horizon.
pub fn range_normalized_chain<'a>(
    field: &'a VectorField,
    checkpoints: &[f64],
    grid: &SeedGrid,
    trace: &TraceSpec,
    cfg: &ChainConfig,
) -> Result<(ChainFrames, ChainEvaluator<'a>)> {
    check_checkpoints(checkpoints)?;
    let t_max = *checkpoints.last().unwrap();
    let requests: Vec<(f64, Vec<C64>)> = checkpoints.iter().map(|t| (*t, grid.points().to_vec())).collect();
    let (ev, values, diag) = limit_loop(field, cfg, t_max, &requests)?;
    let mut traces = trace_shells(trace)?;
    for tr in &mut traces {
        let pts = tr.points();
        tr.values = checkpoints.iter().map(|t| ev.eval(*t, &pts)).collect::<Result<_>>()?;
    }
    let mut frames = ChainFrames {
        tag: FrameTag::RangeNormalized,
        checkpoints: checkpoints.to_vec(),
        grid: grid.clone(),
        values,
        traces,
        limit: Some(diag),
        transition_residual: None,
    };
    if cfg.verify_transition {
        frames.transition_residual = Some(transition_residual(&frames, &ev)?);
    }
    Ok((frames, ev))
}

/// `max |f_s(z) − f_t(φ_{s,t}(z))|` over consecutive checkpoints.
pub fn transition_residual(frames: &ChainFrames, ev: &ChainEvaluator) -> Result<f64> {
    let mut worst: f64 = 0.0;
    for i in 1..frames.checkpoints.len() {
        let (s, t) = (frames.checkpoints[i - 1], frames.checkpoints[i]);
        let tr = solve_forward(ev.field, s, &[t], &frames.grid, &ev.opts)?;
        let live: Vec<usize> = (0..frames.grid.len()).filter(|&k| tr.value(1, k).is_some()).collect();
        let moved: Vec<C64> = live.iter().map(|&k| tr.value(1, k).unwrap()).collect();
        let ft = ev.eval(t, &moved)?;
        for (j, &k) in live.iter().enumerate() {
            if let (Some(a), Some(b)) = (frames.values[i - 1][k], ft[j]) {
                worst = worst.max((a - b).norm());
            }
        }
    }
    Ok(worst)
}

/// `f_0(0)` and `f_0'(0) − 1` through the evaluator.
pub fn normalization_error(ev: &ChainEvaluator) -> Result<(f64, f64)> {
    let v = ev.eval_with_deriv(0.0, &[ZERO])?;
    let (f, d) = v[0].ok_or(Error::OriginLost { t: 0.0, reason: "guard".into() })?;
    Ok((f.norm(), (d - ONE).norm()))
}

/// Decreasing chain `g_t = ω_{0,t}` on the grid and traces.
pub fn decreasing_chain(
    field: &VectorField,
    checkpoints: &[f64],
    grid: &SeedGrid,
    trace: &TraceSpec,
    opts: &SolverOptions,
) -> Result<ChainFrames> {
    check_checkpoints(checkpoints)?;
    let strip = |v: Vec<Option<(C64, C64)>>| v.into_iter().map(|x| x.map(|y| y.0)).collect::<Vec<_>>();
    let values = checkpoints
        .iter()
        .map(|t| reverse_to_origin(field, *t, grid.points(), opts).map(strip))
        .collect::<Result<Frames>>()?;
    let mut traces = trace_shells(trace)?;
    for tr in &mut traces {
        let pts = tr.points();
        tr.values = checkpoints
            .iter()
            .map(|t| reverse_to_origin(field, *t, &pts, opts).map(strip))
            .collect::<Result<_>>()?;
    }
    Ok(ChainFrames {
        tag: FrameTag::Decreasing,
        checkpoints: checkpoints.to_vec(),
        grid: grid.clone(),
        values,
        traces,
        limit: None,
        transition_residual: None,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ContainmentReport {
    pub checked: usize,
    /// Points of the smaller frame's trace that the larger trace does not enclose.
    pub violations: usize,
    /// Points within `eps` of the larger trace (undecided, not counted).
    pub undecided: usize,
    pub pass: bool,
}

/// Spot check of nesting by winding numbers: grid values of the smaller frame
/// against the trace polygon of the larger (consecutive checkpoints; increasing
/// for range-normalized frames, decreasing for decreasing ones). Traces at a
/// fixed radius need not nest where the domains share boundary, so the inner
/// side uses interior grid values.
pub fn check_containment(frames: &ChainFrames, eps: f64) -> ContainmentReport {
    let tr = frames.trace();
    let mut rep = ContainmentReport { checked: 0, violations: 0, undecided: 0, pass: true };
    for i in 1..frames.checkpoints.len() {
        let (inner, outer) = match frames.tag {
            FrameTag::RangeNormalized => (&frames.values[i - 1], &tr.values[i]),
            FrameTag::Decreasing => (&frames.values[i], &tr.values[i - 1]),
        };
        let poly: Vec<C64> = outer.iter().flatten().copied().collect();
        if poly.len() < 3 {
            continue;
        }
        for p in inner.iter().flatten() {
            rep.checked += 1;
            match winding_number(&poly, *p, eps) {
                Some(0) => rep.violations += 1,
                Some(_) => {}
                None => rep.undecided += 1,
            }
        }
    }
    rep.pass = rep.violations == 0;
    rep
}

/// Diameter of the last trace: an upper estimate for `diam Λ = diam ∩ g_t(𝔻)`.
pub fn lambda_diameter(frames: &ChainFrames) -> f64 {
    let tr = frames.trace();
    let pts: Vec<C64> = tr.values.last().map(|r| r.iter().flatten().copied().collect()).unwrap_or_default();
    diameter(&pts)
}

#[derive(Debug, Clone, PartialEq)]
pub enum RangeClass {
    Plane,
    Disk { radius: f64 },
    Inconclusive,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RangeReport {
    pub beta0: f64,
    pub probes: Vec<(C64, f64)>,
    pub class: RangeClass,
    /// Monotone-stabilized `|φ'|/(1 − |φ|²)` at the origin per horizon.
    pub origin_history: Vec<(f64, f64)>,
    pub deltas: Vec<f64>,
    pub horizon: f64,
    /// Whether the estimate at the origin was extrapolated beyond the last horizon.
    pub extrapolated: bool,
}

/// Limit of a non-increasing sequence sampled at horizons `hs`: the raw last value
/// once it is below `tol`, otherwise the `[1/1]` Padé extrapolant in `1/t` through
/// the last three horizons, clamped to `[0, last]`. The Padé form is exact for
/// `A/(t + c)` decay (the chordal case) and for stabilized sequences.
pub fn extrapolate_limit(hs: &[f64], bs: &[f64], tol: f64) -> (f64, bool) {
    let raw = *bs.last().unwrap_or(&0.0);
    if raw <= tol || hs.len() < 3 {
        return (raw, false);
    }
    let n = hs.len();
    // Settled within rounding: nothing to extrapolate.
    if (bs[n - 2] - raw).abs() <= 1e-12 * raw {
        return (raw, false);
    }
    // y = (a + b x)/(1 + c x)  ⇔  a + b x − c x y = y.
    let rows: Vec<[f64; 4]> = (n - 3..n)
        .map(|i| {
            let x = 1.0 / hs[i];
            [1.0, x, -x * bs[i], bs[i]]
        })
        .collect();
    match solve3(&rows) {
        Some([a, _, _]) if a.is_finite() => (a.clamp(0.0, raw), true),
        _ => (raw, false),
    }
}

/// Gaussian elimination with partial pivoting on an augmented 3×4 system.
fn solve3(rows: &[[f64; 4]]) -> Option<[f64; 3]> {
    let mut m = [rows[0], rows[1], rows[2]];
    for col in 0..3 {
        let piv = (col..3).max_by(|&a, &b| m[a][col].abs().total_cmp(&m[b][col].abs()))?;
        if m[piv][col].abs() < 1e-300 {
            return None;
        }
        m.swap(col, piv);
        for r in col + 1..3 {
            let f = m[r][col] / m[col][col];
            for c in col..4 {
                m[r][c] -= f * m[col][c];
            }
        }
    }
    let mut x = [0.0; 3];
    for r in (0..3).rev() {
        let mut acc = m[r][3];
        for c in r + 1..3 {
            acc -= m[r][c] * x[c];
        }
        x[r] = acc / m[r][r];
    }
    Some(x)
}

/// β(z) estimates along the horizon schedule and the plane/disk classification.
pub fn beta_limit(field: &VectorField, probes: &[C64], horizons: &[f64], tol_beta: f64, opts: &SolverOptions) -> Result<RangeReport> {
    if horizons.is_empty() || horizons.windows(2).any(|w| w[1] <= w[0]) || horizons[0] <= 0.0 {
        return Err(invalid("horizons must be positive and ascending"));
    }
    let mut pts = alloc::vec![ZERO];
    pts.extend(probes.iter().copied().filter(|z| *z != ZERO));
    let seeds = SeedGrid::from_points(pts.clone())?;
    let tr = solve_forward(field, 0.0, horizons, &seeds, opts)?;
    let mut estimates = Vec::with_capacity(pts.len());
    let mut origin_history = Vec::new();
    let mut extrapolated = false;
    for (si, z) in pts.iter().enumerate() {
        let mut hs = Vec::new();
        let mut bs: Vec<f64> = Vec::new();
        for (k, &h) in horizons.iter().enumerate() {
            let (Some(v), Some(d)) = (tr.value(k + 1, si), tr.deriv(k + 1, si)) else { break };
            let b = d.norm() / (1.0 - v.norm_sqr());
            let b = bs.last().map_or(b, |prev| b.min(*prev));
            hs.push(h);
            bs.push(b);
        }
        if hs.is_empty() {
            return Err(Error::OriginLost { t: horizons[0], reason: "probe trajectory truncated".into() });
        }
        let (est, ex) = extrapolate_limit(&hs, &bs, tol_beta);
        if si == 0 {
            origin_history = hs.iter().copied().zip(bs.iter().copied()).collect();
            extrapolated = ex;
        }
        estimates.push((*z, est));
    }
    let beta0 = estimates[0].1;
    let zero = beta0 <= tol_beta;
    let agree = estimates.iter().all(|(_, b)| (*b <= tol_beta) == zero);
    let class = if !agree {
        RangeClass::Inconclusive
    } else if zero {
        RangeClass::Plane
    } else {
        RangeClass::Disk { radius: 1.0 / beta0 }
    };
    let deltas = origin_history.windows(2).map(|w| (w[1].1 - w[0].1).abs()).collect();
    let horizon = origin_history.last().map_or(0.0, |x| x.0);
    Ok(RangeReport { beta0, probes: estimates[1..].to_vec(), class, origin_history, deltas, horizon, extrapolated })
}

/// `true` when `p` takes purely imaginary values at every sample: then `φ` are
/// automorphisms, the chain never grows, and there is nothing to extend.
pub fn is_conformal_only(p: &HerglotzSpec, grid: &[C64], times: &[f64], tol: f64) -> bool {
    max_abs_real_part(p, grid, times) <= tol
}

/// `max_t min_{|λ|=1} max_z |f_t(z) − λ f_0(z)|`: zero iff all frames are rotations
/// of the first.
pub fn rotation_residual(frames: &ChainFrames) -> f64 {
    let base = &frames.values[0];
    let mut worst: f64 = 0.0;
    for row in &frames.values[1..] {
        let mut acc = ZERO;
        for (a, b) in row.iter().zip(base) {
            if let (Some(a), Some(b)) = (a, b) {
                acc += a * b.conj();
            }
        }
        let lambda = if acc.norm() > 0.0 { acc / acc.norm() } else { ONE };
        for (a, b) in row.iter().zip(base) {
            if let (Some(a), Some(b)) = (a, b) {
                worst = worst.max((a - lambda * b).norm());
            }
        }
    }
    worst
}

#[derive(Debug, Clone, PartialEq)]
pub struct PdeReport {
    /// `max |∂_t f − RHS| / (|∂_z f| · sup|p|)` over interior checkpoints and the grid.
    pub max_relative: f64,
    pub max_absolute: f64,
    pub worst: (f64, C64),
    /// Richardson estimate of the `O(Δt²)` time-differencing error (relative).
    pub truncation_estimate: Option<f64>,
    pub resolution_limited: bool,
    pub interior_checkpoints: usize,
}

/// `∂_θ` of samples on a uniform circle by trigonometric interpolation.
fn spectral_dtheta(values: &[C64]) -> Vec<C64> {
    let n = values.len();
    let angles = math::uniform_angles(n);
    let half = (n / 2) as i64;
    let mut coef = Vec::with_capacity(n);
    for k in 0..n as i64 {
        let m = if k > half { k - n as i64 } else { k };
        let mut c = ZERO;
        for (j, v) in values.iter().enumerate() {
            c += v * math::cis(-(m as f64) * angles[j]);
        }
        coef.push((m, c / n as f64));
    }
    (0..n)
        .map(|j| {
            coef.iter()
                .filter(|(m, _)| n % 2 == 1 || *m != half)
                .map(|(m, c)| C64::new(0.0, *m as f64) * c * math::cis(*m as f64 * angles[j]))
                .sum()
        })
        .collect()
}

/// Three-point derivative weights at the middle of nodes `t0 < t1 < t2`.
fn centered_weights(t0: f64, t1: f64, t2: f64) -> [f64; 3] {
    let (h1, h2) = (t1 - t0, t2 - t1);
    [-h2 / (h1 * (h1 + h2)), (h2 - h1) / (h1 * h2), h1 / (h2 * (h1 + h2))]
}

/// Residual of `∂_t f = ∓G ∂_z f` (minus for range-normalized frames, plus for
/// decreasing ones) with centered time differences and spectral `∂_z`.
pub fn verify_chain_pde(frames: &ChainFrames, field: &VectorField) -> Result<PdeReport> {
    let layout = frames.grid.layout().ok_or_else(|| invalid("the chain PDE check needs a polar grid"))?;
    let m = frames.checkpoints.len();
    if m < 3 {
        return Err(invalid("the chain PDE check needs at least 3 checkpoints"));
    }
    let sign = if frames.tag == FrameTag::RangeNormalized { -1.0 } else { 1.0 };
    let n = layout.n_angles;
    let ts = &frames.checkpoints;
    let mut rep = PdeReport {
        max_relative: 0.0,
        max_absolute: 0.0,
        worst: (ts[1], ZERO),
        truncation_estimate: None,
        resolution_limited: false,
        interior_checkpoints: m - 2,
    };
    let uniform = |i: usize| -> bool {
        i >= 2 && i + 2 < m && {
            let h = ts[i + 1] - ts[i];
            [ts[i] - ts[i - 1], ts[i - 1] - ts[i - 2], ts[i + 2] - ts[i + 1]].iter().all(|d| (d - h).abs() <= 1e-12 * (1.0 + h))
        }
    };
    for i in 1..m - 1 {
        let t = ts[i];
        let w = centered_weights(ts[i - 1], t, ts[i + 1]);
        let p_sup = frames.grid.points().iter().map(|z| field.p.eval(*z, t).norm()).fold(0.0, f64::max);
        for c in 0..layout.radii.len() {
            let idx: Vec<usize> = (0..n).map(|a| layout.index(c, a)).collect();
            let row: Option<Vec<C64>> = idx.iter().map(|&k| frames.values[i][k]).collect();
            let Some(row) = row else { continue };
            let dth = spectral_dtheta(&row);
            for (a, &k) in idx.iter().enumerate() {
                let z = frames.grid.points()[k];
                let (Some(f0), Some(f2)) = (frames.values[i - 1][k], frames.values[i + 1][k]) else { continue };
                let dt = f0 * w[0] + row[a] * w[1] + f2 * w[2];
                let dz = dth[a] / (C64::new(0.0, 1.0) * z);
                let rhs = field.eval(z, t) * dz * sign;
                let res = (dt - rhs).norm();
                let scale = dz.norm() * p_sup;
                let rel = res / scale;
                if rel > rep.max_relative {
                    rep.max_relative = rel;
                    rep.worst = (t, z);
                }
                rep.max_absolute = rep.max_absolute.max(res);
                if uniform(i) {
                    if let (Some(g0), Some(g2)) = (frames.values[i - 2][k], frames.values[i + 2][k]) {
                        let h = ts[i + 1] - ts[i];
                        let wide = (g2 - g0) / (4.0 * h);
                        let est = (wide - dt).norm() / 3.0 / scale;
                        rep.truncation_estimate = Some(rep.truncation_estimate.map_or(est, |e: f64| e.max(est)));
                    }
                }
            }
        }
    }
    rep.resolution_limited = rep.truncation_estimate.is_some_and(|e| e >= 0.5 * rep.max_relative && e > TOL_CHAIN);
    Ok(rep)
}

/// Uniform checkpoints `t0 + kΔt`, `k = −w..=w`.
pub fn stencil_times(t0: f64, dt: f64, w: usize) -> Vec<f64> {
    (0..=2 * w).map(|k| t0 + (k as f64 - w as f64) * dt).collect()
}

/// Angles of a uniform θ grid (for callers building traces without frames).
pub fn theta_grid(n: usize) -> Vec<f64> {
    (0..n).map(|j| TAU * j as f64 / n as f64).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::evolution::solve_forward;
    use crate::herglotz::{assemble_field, DenjoyWolffSpec, HerglotzSpec};

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    fn exp_field() -> VectorField {
        assemble_field(HerglotzSpec::constant(1.0, 0.0), DenjoyWolffSpec::constant(0.0, 0.0)).unwrap()
    }

    fn chordal() -> VectorField {
        assemble_field(HerglotzSpec::constant(1.0, 0.0), DenjoyWolffSpec::constant(1.0, 0.0)).unwrap()
    }

    fn rotation() -> VectorField {
        assemble_field(HerglotzSpec::constant(0.0, 1.0), DenjoyWolffSpec::constant(0.0, 0.0)).unwrap()
    }

    /// Interior `τ ≡ c`, `p ≡ 1`: `M_c ∘ φ_{s,t} ∘ M_c⁻¹` is multiplication by
    /// `e^{−λ(t−s)}`, `λ = 1 − |c|²`, so `f_t = (e^{λt} M_c + c)/λ`. Without the
    /// chart the horizon-64 frames lose every digit.
    #[test]
    fn interior_attracting_point_limit() {
        let cc = c(0.0, 0.5);
        let f = assemble_field(HerglotzSpec::constant(1.0, 0.0), DenjoyWolffSpec::Constant(cc)).unwrap();
        let lambda = 1.0 - cc.norm_sqr();
        let pts = [c(0.0, 0.0), c(0.6, 0.2), c(-0.3, -0.7), c(0.1, 0.85)];
        let lim = chain_limit(&f, 0.0, &pts, &ChainConfig::doubling(64.0)).unwrap();
        assert!(lim.diagnostics.converged, "{:?}", lim.diagnostics);
        for (z, v) in pts.iter().zip(&lim.values) {
            let exact = ((*z - cc) / (ONE - cc.conj() * z) + cc) / lambda;
            assert!((v.unwrap() - exact).norm() < 1e-8, "z={z}: {v:?} vs {exact}");
        }
        let ev = ChainEvaluator::new(&f, 64.0, chain_options()).unwrap();
        let (v, d) = ev.eval_with_deriv(2.0, &[c(0.3, 0.3)]).unwrap()[0].unwrap();
        let z = c(0.3, 0.3);
        let q = ONE - cc.conj() * z;
        let g = math::exp(2.0 * lambda) / lambda;
        assert!((v - (g * (z - cc) / q + cc / lambda)).norm() < 1e-8);
        assert!((d - g * lambda / (q * q)).norm() < 1e-8);
    }

    #[test]
    fn mobius_round_trip() {
        let m = Mobius { alpha: c(0.3, -0.2), beta: math::cis(0.7) };
        for z in [c(0.0, 0.0), c(0.5, 0.1), c(-0.2, 0.8)] {
            assert!((m.inverse(m.apply(z)) - z).norm() < 1e-15);
            let h = 1e-6;
            let fd = (m.apply(z + h) - m.apply(z - h)) / (2.0 * h);
            assert!((fd - m.derivative(z)).norm() < 1e-8);
            let w = m.apply(z);
            assert!((m.inverse_derivative(w) * m.derivative(z) - ONE).norm() < 1e-12);
        }
        assert_eq!(m.apply(ZERO), m.alpha);
    }

    #[test]
    fn normalizer_examples() {
        let opts = SolverOptions::default();
        let seeds = SeedGrid::polar(&[0.5], 4, true).unwrap();

        let f = exp_field();
        let tr = solve_forward(&f, 0.0, &[0.5, 1.0], &seeds, &opts).unwrap();
        let n = MobiusNormalizer::normalize(&tr).unwrap();
        assert!(n.maps.iter().all(|m| m.alpha == ZERO && (m.beta - ONE).norm() < 1e-15));

        let f = chordal();
        let tr = solve_forward(&f, 0.0, &[1.0], &seeds, &opts).unwrap();
        let n = MobiusNormalizer::normalize(&tr).unwrap();
        assert_eq!(n.maps[0], Mobius::IDENTITY);
        assert!((n.maps[1].alpha - c(0.5, 0.0)).norm() < 1e-9);
        // φ'_{0,1}(0) = 1/(1 + 1)² > 0.
        assert!((n.maps[1].beta - ONE).norm() < 1e-9);
        let chk = n.verify(&f, &opts).unwrap();
        assert!(chk.pass(), "{chk:?}");

        let f = rotation();
        let tr = solve_forward(&f, 0.0, &[1.0, 2.0], &seeds, &opts).unwrap();
        let n = MobiusNormalizer::normalize(&tr).unwrap();
        assert!((n.maps[2].beta - math::cis(-2.0)).norm() < 1e-8);
        assert!(n.verify(&f, &opts).unwrap().pass());
    }

    #[test]
    fn chain_limit_examples() {
        let pts = [c(0.3, 0.1), c(-0.5, 0.2)];
        let r = chain_limit(&exp_field(), 0.5, &pts, &ChainConfig::default()).unwrap();
        assert!(r.diagnostics.converged);
        assert_eq!(r.diagnostics.deltas.len(), 1);
        for (z, v) in pts.iter().zip(&r.values) {
            assert!((v.unwrap() - z * libm::exp(0.5)).norm() < 1e-9);
        }
        let r = chain_limit(&rotation(), 0.0, &pts, &ChainConfig::default()).unwrap();
        for (z, v) in pts.iter().zip(&r.values) {
            assert!((v.unwrap() - z).norm() < 1e-9);
        }
    }

    #[test]
    fn becker_chain_limit_converges() {
        let f = assemble_field(HerglotzSpec::becker(0.5), DenjoyWolffSpec::constant(0.0, 0.0)).unwrap();
        let grid = SeedGrid::polar(&[0.3, 0.6, 0.9], 16, true).unwrap();
        let r = chain_limit(&f, 0.0, grid.points(), &ChainConfig::default()).unwrap();
        assert!(r.diagnostics.converged, "{:?}", r.diagnostics);
        let ev = ChainEvaluator::new(&f, r.diagnostics.horizon, chain_options()).unwrap();
        let (f0, d0) = normalization_error(&ev).unwrap();
        assert!(f0 < 1e-12 && d0 < 1e-7, "{f0} {d0}");
    }

    #[test]
    fn exponential_frames() {
        let f = exp_field();
        let grid = SeedGrid::polar(&[0.3, 0.7], 8, true).unwrap();
        let ts = [0.0, 0.5, 1.0];
        let (fr, ev) = range_normalized_chain(&f, &ts, &grid, &TraceSpec { n_theta: 32, ..TraceSpec::default() }, &ChainConfig::default()).unwrap();
        for (i, t) in ts.iter().enumerate() {
            for (k, z) in grid.points().iter().enumerate() {
                assert!((fr.values[i][k].unwrap() - z * libm::exp(*t)).norm() < 1e-9);
            }
            let v = fr.trace().values[i][0].unwrap();
            assert!((v - c(libm::exp(*t) * (1.0 - DELTA_TRACE), 0.0)).norm() < 1e-9);
        }
        assert!(fr.transition_residual.unwrap() < 1e-9);
        let (a, b) = normalization_error(&ev).unwrap();
        assert!(a < 1e-15 && b < 1e-12);
        assert!(check_containment(&fr, 1e-12).pass);
    }

    #[test]
    fn chordal_frames_are_a_chain() {
        let f = chordal();
        let grid = SeedGrid::polar(&[0.3, 0.6], 8, true).unwrap();
        let ts = [0.0, 0.5, 1.0];
        let (fr, ev) = range_normalized_chain(&f, &ts, &grid, &TraceSpec { n_theta: 64, ..TraceSpec::default() }, &ChainConfig::default()).unwrap();
        let diag = fr.limit.clone().unwrap();
        assert!(!diag.converged);
        assert_eq!(diag.horizon, 64.0);
        assert!(fr.transition_residual.unwrap() < TOL_CHAIN);
        let (a, b) = normalization_error(&ev).unwrap();
        assert!(a < 1e-12 && b < 1e-9);
        // Close to the limit chain z/(1 − z) − t at the last horizon.
        for (i, t) in ts.iter().enumerate() {
            for (k, z) in grid.points().iter().enumerate() {
                let exact = z / (ONE - z) - *t;
                assert!((fr.values[i][k].unwrap() - exact).norm() < 0.1);
            }
        }
        assert!(check_containment(&fr, 1e-9).pass);
    }

    #[test]
    fn rotation_frames_are_rotations() {
        let f = rotation();
        let grid = SeedGrid::polar(&[0.3, 0.6], 8, true).unwrap();
        let ts = [0.0, 1.0, 2.0];
        let (fr, _) = range_normalized_chain(&f, &ts, &grid, &TraceSpec { n_theta: 16, ..TraceSpec::default() }, &ChainConfig::default()).unwrap();
        assert!(rotation_residual(&fr) < 1e-9);
        for (k, z) in grid.points().iter().enumerate() {
            assert!((fr.values[2][k].unwrap() - z * math::cis(2.0)).norm() < 1e-9);
        }
        assert!(is_conformal_only(&f.p, grid.points(), &ts, 0.0));
        assert!(!is_conformal_only(&exp_field().p, grid.points(), &ts, 0.0));
    }

    #[test]
    fn decreasing_frames() {
        let f = exp_field();
        let grid = SeedGrid::polar(&[0.3, 0.7], 8, true).unwrap();
        let ts = [0.0, 0.5, 1.0, 3.0];
        let fr = decreasing_chain(&f, &ts, &grid, &TraceSpec { n_theta: 32, ..TraceSpec::default() }, &SolverOptions::default()).unwrap();
        for (k, z) in grid.points().iter().enumerate() {
            assert_eq!(fr.values[0][k].unwrap(), *z);
            assert!((fr.values[2][k].unwrap() - z * libm::exp(-1.0)).norm() < 1e-9);
        }
        assert!(check_containment(&fr, 1e-12).pass);
        assert!((lambda_diameter(&fr) - 2.0 * (1.0 - DELTA_TRACE) * libm::exp(-3.0)).abs() < 1e-8);

        let f = chordal();
        let fr = decreasing_chain(&f, &[0.0, 4.0, 16.0], &grid, &TraceSpec { n_theta: 64, ..TraceSpec::default() }, &SolverOptions::default()).unwrap();
        let ds: Vec<f64> = (0..3).map(|i| diameter(&fr.trace().values[i].iter().flatten().copied().collect::<Vec<_>>())).collect();
        assert!(ds[1] < 0.5 * ds[0] && ds[2] < 0.3 * ds[1], "{ds:?}");
    }

    #[test]
    fn beta_examples() {
        let hs = ChainConfig::default().horizons;
        let opts = chain_options();
        let probes = [c(0.3, 0.0), c(-0.2, 0.5)];
        let r = beta_limit(&exp_field(), &probes, &hs, TOL_BETA, &opts).unwrap();
        assert_eq!(r.class, RangeClass::Plane);
        assert!(r.beta0 < 1e-20);
        let r = beta_limit(&rotation(), &probes, &hs, TOL_BETA, &opts).unwrap();
        assert!((r.beta0 - 1.0).abs() < 1e-9);
        assert!(matches!(r.class, RangeClass::Disk { radius } if (radius - 1.0).abs() < 1e-9));
        let r = beta_limit(&chordal(), &probes, &hs, TOL_BETA, &opts).unwrap();
        assert_eq!(r.class, RangeClass::Plane, "{r:?}");
        assert!(r.extrapolated);
        let raw = r.origin_history.last().unwrap().1;
        assert!((raw - 1.0 / 129.0).abs() < 1e-9);
    }

    #[test]
    fn extrapolation_respects_limits() {
        let hs = [8.0, 16.0, 32.0, 64.0];
        let flat = [0.5; 4];
        assert_eq!(extrapolate_limit(&hs, &flat, 1e-6), (0.5, false));
        let decay: Vec<f64> = hs.iter().map(|h| 0.25 + 1.0 / h).collect();
        assert!((extrapolate_limit(&hs, &decay, 1e-6).0 - 0.25).abs() < 1e-12);
        let chordal: Vec<f64> = hs.iter().map(|h| 0.7 / (2.0 * h + 1.3)).collect();
        assert!(extrapolate_limit(&hs, &chordal, 1e-6).0 < 1e-14);
        let tiny = [1e-3, 1e-5, 1e-7, 1e-9];
        assert_eq!(extrapolate_limit(&hs, &tiny, 1e-6), (1e-9, false));
    }

    #[test]
    fn spectral_derivative_of_monomials() {
        let n = 32;
        let z: Vec<C64> = math::uniform_angles(n).iter().map(|a| math::cis(*a) * 0.5).collect();
        let f: Vec<C64> = z.iter().map(|z| z * z * z + z.inv()).collect();
        let d = spectral_dtheta(&f);
        for (k, z) in z.iter().enumerate() {
            let exact = (z * z * 3.0 - z.inv() * z.inv()) * C64::new(0.0, 1.0) * z;
            assert!((d[k] - exact).norm() < 1e-12);
        }
    }

    #[test]
    fn exponential_pde_residual_is_second_order() {
        let f = exp_field();
        let grid = SeedGrid::polar(&[0.4, 0.8], 32, false).unwrap();
        let spec = TraceSpec { n_theta: 8, ..TraceSpec::default() };
        let mut res = Vec::new();
        for dt in [0.02, 0.01] {
            let (fr, _) = range_normalized_chain(&f, &stencil_times(0.5, dt, 2), &grid, &spec, &ChainConfig::fixed(4.0)).unwrap();
            let r = verify_chain_pde(&fr, &f).unwrap();
            assert!(r.truncation_estimate.is_some());
            res.push(r.max_relative);
        }
        assert!(res[1] < 1e-4);
        let order = math::log2(res[0] / res[1]);
        assert!(order > 1.9, "{res:?}");
    }
}
