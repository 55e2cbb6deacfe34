//! Berkson–Porta data, Herglotz vector fields and pointwise criteria.
//!
//! A Herglotz function `p(z, t)` is holomorphic in `z ∈ 𝔻`, locally integrable
//! in `t` and has `Re p ≥ 0`. Together with a Denjoy–Wolff function `τ(t)` in the
//! closed disk it defines the generator
//!
//! ```text
//! G(z, t) = (z − τ(t)) (τ̄(t) z − 1) p(z, t)
//! ```
//!
//! whose flow is the evolution family. The checks in this module are sampled
//! certificates over a disk grid and a set of time nodes; they never prove a
//! property symbolically.

use alloc::format;
use alloc::string::String;
use alloc::sync::Arc;
use alloc::vec::Vec;
use core::f64::consts::{FRAC_PI_2, PI};
use core::fmt;

use crate::error::{invalid, Error, Result};
use crate::{math, C64};

/// Step of the centered finite difference used for `∂_z p`.
pub const DZ_STEP: f64 = 1e-5;
/// Step of the Cauchy–Riemann residual check.
pub const HOLO_STEP: f64 = 1e-4;
pub const TOL_HOLO: f64 = 1e-6;
pub const TOL_CRITERION: f64 = 1e-6;
pub const TOL_HERGLOTZ: f64 = 1e-12;

pub type PointEvaluator = Arc<dyn Fn(C64, f64) -> C64 + Send + Sync>;
pub type TimeEvaluator = Arc<dyn Fn(f64) -> C64 + Send + Sync>;

const ONE: C64 = C64::new(1.0, 0.0);

fn interp_table(table: &[(f64, C64)], t: f64) -> C64 {
    match table.len() {
        0 => C64::new(0.0, 0.0),
        1 => table[0].1,
        _ => {
            if t <= table[0].0 {
                return table[0].1;
            }
            let last = table[table.len() - 1];
            if t >= last.0 {
                return last.1;
            }
            let i = table.partition_point(|(s, _)| *s <= t) - 1;
            let (t0, v0) = table[i];
            let (t1, v1) = table[i + 1];
            let w = (t - t0) / (t1 - t0);
            v0 * (1.0 - w) + v1 * w
        }
    }
}

fn check_ascending(times: impl Iterator<Item = f64>, what: &str) -> Result<()> {
    let mut prev = f64::NEG_INFINITY;
    for t in times {
        if !t.is_finite() {
            return Err(invalid(format!("{what}: non-finite time {t}")));
        }
        if t <= prev {
            return Err(invalid(format!("{what}: times must be strictly increasing")));
        }
        prev = t;
    }
    Ok(())
}

/// Time profile with complex values.
#[derive(Debug, Clone, PartialEq)]
pub enum TimeProfile {
    Constant(C64),
    /// `(t, value)` pairs, linearly interpolated and held constant outside.
    Table(Vec<(f64, C64)>),
}

impl TimeProfile {
    pub fn eval(&self, t: f64) -> C64 {
        match self {
            TimeProfile::Constant(c) => *c,
            TimeProfile::Table(tab) => interp_table(tab, t),
        }
    }

    fn nodes(&self) -> Vec<C64> {
        match self {
            TimeProfile::Constant(c) => alloc::vec![*c],
            TimeProfile::Table(tab) => tab.iter().map(|(_, v)| *v).collect(),
        }
    }

    fn validate(&self, what: &str) -> Result<()> {
        if let TimeProfile::Table(tab) = self {
            if tab.is_empty() {
                return Err(invalid(format!("{what}: empty table")));
            }
            check_ascending(tab.iter().map(|(t, _)| *t), what)?;
        }
        Ok(())
    }
}

/// Phase `θ(t)` of a unimodular driving function `κ(t) = e^{iθ(t)}`.
#[derive(Debug, Clone, PartialEq)]
pub enum Phase {
    Constant(f64),
    /// `θ(t) = angle + speed · t`.
    Linear { angle: f64, speed: f64 },
    /// `(t, θ)` pairs, linearly interpolated in the angle.
    Table(Vec<(f64, f64)>),
}

impl Phase {
    pub fn angle(&self, t: f64) -> f64 {
        match self {
            Phase::Constant(a) => *a,
            Phase::Linear { angle, speed } => angle + speed * t,
            Phase::Table(tab) => {
                let as_c: Vec<(f64, C64)> =
                    tab.iter().map(|(s, a)| (*s, C64::new(*a, 0.0))).collect();
                interp_table(&as_c, t).re
            }
        }
    }

    pub fn kappa(&self, t: f64) -> C64 {
        math::cis(self.angle(t))
    }
}

/// One time slab of a rational Herglotz function `num(z) / den(z)`.
#[derive(Debug, Clone, PartialEq)]
pub struct RationalPiece {
    /// The piece is active for `t ≥ start` until the next piece starts.
    pub start: f64,
    /// Polynomial coefficients in increasing degree.
    pub num: Vec<C64>,
    pub den: Vec<C64>,
}

fn horner(coeffs: &[C64], z: C64) -> C64 {
    coeffs.iter().rev().fold(C64::new(0.0, 0.0), |acc, c| acc * z + c)
}

/// Specification of a Herglotz function.
#[derive(Clone)]
pub enum HerglotzSpec {
    /// `p ≡ c`.
    Constant(C64),
    /// `p(z, t) = (κ(t) + z) / (κ(t) − z)` for unimodular `κ`.
    MobiusKernel { driving: Phase },
    /// Values in the sector `|arg w| ≤ kπ/2`:
    /// `p(z, t) = c(t) · ((1 + z)/(1 − z))^{k − 2|arg c(t)|/π}`.
    Sector { opening: f64, profile: TimeProfile },
    /// Piecewise-in-time rational functions of `z`.
    RationalTable(Vec<RationalPiece>),
    /// `z`-independent values `p(t)` from a `(t, value)` table.
    UserSampled(Vec<(f64, C64)>),
    /// Arbitrary evaluator supplied by the caller.
    Custom { label: String, eval: PointEvaluator },
}

impl fmt::Debug for HerglotzSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            HerglotzSpec::Constant(c) => f.debug_tuple("Constant").field(c).finish(),
            HerglotzSpec::MobiusKernel { driving } => f
                .debug_struct("MobiusKernel")
                .field("driving", driving)
                .finish(),
            HerglotzSpec::Sector { opening, profile } => f
                .debug_struct("Sector")
                .field("opening", opening)
                .field("profile", profile)
                .finish(),
            HerglotzSpec::RationalTable(t) => f.debug_tuple("RationalTable").field(t).finish(),
            HerglotzSpec::UserSampled(t) => f.debug_tuple("UserSampled").field(t).finish(),
            HerglotzSpec::Custom { label, .. } => f.debug_struct("Custom").field("label", label).finish(),
        }
    }
}

impl HerglotzSpec {
    pub fn constant(re: f64, im: f64) -> Self {
        HerglotzSpec::Constant(C64::new(re, im))
    }

    /// `(1 + cz) / (1 − cz)`: satisfies `|p − 1| / |p + 1| = |c z|`.
    pub fn becker(c: f64) -> Self {
        HerglotzSpec::RationalTable(alloc::vec![RationalPiece {
            start: 0.0,
            num: alloc::vec![ONE, C64::new(c, 0.0)],
            den: alloc::vec![ONE, C64::new(-c, 0.0)],
        }])
    }

    pub fn custom<F>(label: impl Into<String>, f: F) -> Self
    where
        F: Fn(C64, f64) -> C64 + Send + Sync + 'static,
    {
        HerglotzSpec::Custom { label: label.into(), eval: Arc::new(f) }
    }

    pub fn eval(&self, z: C64, t: f64) -> C64 {
        match self {
            HerglotzSpec::Constant(c) => *c,
            HerglotzSpec::MobiusKernel { driving } => {
                let k = driving.kappa(t);
                (k + z) / (k - z)
            }
            HerglotzSpec::Sector { opening, profile } => {
                let c = profile.eval(t);
                let power = sector_power(*opening, c);
                if power == 0.0 {
                    return c;
                }
                let w = (ONE + z) / (ONE - z);
                c * (w.ln() * power).exp()
            }
            HerglotzSpec::RationalTable(pieces) => {
                let i = pieces.partition_point(|pc| pc.start <= t).max(1) - 1;
                let pc = &pieces[i];
                horner(&pc.num, z) / horner(&pc.den, z)
            }
            HerglotzSpec::UserSampled(tab) => interp_table(tab, t),
            HerglotzSpec::Custom { eval, .. } => eval(z, t),
        }
    }

    /// `∂_z p` by a centered difference of step [`DZ_STEP`] taken tangentially,
    /// so both stencil points keep the modulus of `z` (to second order).
    pub fn dz(&self, z: C64, t: f64) -> C64 {
        let dir = if z.norm() > 1e-3 { C64::new(0.0, 1.0) * z / z.norm() } else { ONE };
        let h = dir * DZ_STEP;
        (self.eval(z + h, t) - self.eval(z - h, t)) / (h * 2.0)
    }

    /// Times where the specification itself jumps in `t`.
    pub fn breakpoints(&self) -> Vec<f64> {
        match self {
            HerglotzSpec::RationalTable(pieces) => pieces.iter().skip(1).map(|p| p.start).collect(),
            _ => Vec::new(),
        }
    }

    /// `true` for the kinds whose values do not depend on `z`.
    pub fn is_z_independent(&self) -> bool {
        match self {
            HerglotzSpec::Constant(_) | HerglotzSpec::UserSampled(_) => true,
            HerglotzSpec::Sector { opening, profile } => profile
                .nodes()
                .iter()
                .all(|c| sector_power(*opening, *c) == 0.0),
            _ => false,
        }
    }

    /// Structural validation; sampled properties are checked by [`check_herglotz`].
    pub fn validate(&self) -> Result<()> {
        match self {
            HerglotzSpec::Constant(c) => {
                if !math::is_finite(*c) {
                    return Err(invalid("constant Herglotz value must be finite"));
                }
            }
            HerglotzSpec::MobiusKernel { driving } => {
                if let Phase::Table(tab) = driving {
                    if tab.is_empty() {
                        return Err(invalid("mobius_kernel: empty driving table"));
                    }
                    check_ascending(tab.iter().map(|(t, _)| *t), "mobius_kernel.driving")?;
                }
            }
            HerglotzSpec::Sector { opening, profile } => {
                if !(0.0..1.0).contains(opening) {
                    return Err(invalid("sector: opening must lie in [0,1)"));
                }
                profile.validate("sector.profile")?;
                for c in profile.nodes() {
                    if c.norm() > 0.0 && c.arg().abs() > opening * FRAC_PI_2 + 1e-12 {
                        return Err(invalid(format!(
                            "sector: profile value {c} lies outside |arg| ≤ {opening}·π/2"
                        )));
                    }
                }
            }
            HerglotzSpec::RationalTable(pieces) => {
                if pieces.is_empty() {
                    return Err(invalid("rational_table: no pieces"));
                }
                check_ascending(pieces.iter().map(|p| p.start), "rational_table")?;
                for (i, pc) in pieces.iter().enumerate() {
                    if pc.num.is_empty() || pc.den.is_empty() {
                        return Err(invalid(format!("rational_table[{i}]: empty polynomial")));
                    }
                    if pc.den[0].norm() == 0.0 {
                        return Err(invalid(format!("rational_table[{i}]: den(0) = 0")));
                    }
                }
            }
            HerglotzSpec::UserSampled(tab) => {
                if tab.is_empty() {
                    return Err(invalid("user_sampled: empty table"));
                }
                check_ascending(tab.iter().map(|(t, _)| *t), "user_sampled")?;
            }
            HerglotzSpec::Custom { .. } => {}
        }
        Ok(())
    }
}

fn sector_power(opening: f64, c: C64) -> f64 {
    if c.norm() == 0.0 {
        return 0.0;
    }
    (opening - 2.0 * c.arg().abs() / PI).max(0.0)
}

/// Specification of a Denjoy–Wolff function `τ : [0, ∞) → 𝔻̄`.
#[derive(Clone)]
pub enum DenjoyWolffSpec {
    Constant(C64),
    /// `τ = values[i]` on `[breakpoints[i-1], breakpoints[i])`, right-continuous.
    Step { breakpoints: Vec<f64>, values: Vec<C64> },
    /// Caller-supplied evaluator with a declared bound on `|τ|`.
    Sampled { label: String, eval: TimeEvaluator, bound: f64 },
}

impl fmt::Debug for DenjoyWolffSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DenjoyWolffSpec::Constant(c) => f.debug_tuple("Constant").field(c).finish(),
            DenjoyWolffSpec::Step { breakpoints, values } => f
                .debug_struct("Step")
                .field("breakpoints", breakpoints)
                .field("values", values)
                .finish(),
            DenjoyWolffSpec::Sampled { label, bound, .. } => f
                .debug_struct("Sampled")
                .field("label", label)
                .field("bound", bound)
                .finish(),
        }
    }
}

/// Horizon over which sampled `τ` evaluators are probed for `|τ| ≤ 1`.
const TAU_PROBE_HORIZON: f64 = 64.0;
const TAU_PROBE_COUNT: usize = 4097;

impl DenjoyWolffSpec {
    pub fn constant(re: f64, im: f64) -> Self {
        DenjoyWolffSpec::Constant(C64::new(re, im))
    }

    pub fn sampled<F>(label: impl Into<String>, bound: f64, f: F) -> Self
    where
        F: Fn(f64) -> C64 + Send + Sync + 'static,
    {
        DenjoyWolffSpec::Sampled { label: label.into(), eval: Arc::new(f), bound }
    }

    /// `τ(t) = target · t / (1 + t)`.
    pub fn saturating(target: C64) -> Self {
        Self::sampled("saturating", target.norm(), move |t| target * (t / (1.0 + t)))
    }

    /// Linear interpolation of a `(t, τ)` table.
    pub fn table(table: Vec<(f64, C64)>) -> Self {
        let bound = table.iter().map(|(_, v)| v.norm()).fold(0.0, f64::max);
        Self::sampled("table", bound, move |t| interp_table(&table, t))
    }

    pub fn eval(&self, t: f64) -> C64 {
        match self {
            DenjoyWolffSpec::Constant(c) => *c,
            DenjoyWolffSpec::Step { breakpoints, values } => {
                values[breakpoints.partition_point(|b| *b <= t)]
            }
            DenjoyWolffSpec::Sampled { eval, .. } => eval(t),
        }
    }

    pub fn breakpoints(&self) -> &[f64] {
        match self {
            DenjoyWolffSpec::Step { breakpoints, .. } => breakpoints,
            _ => &[],
        }
    }

    pub fn constant_value(&self) -> Option<C64> {
        match self {
            DenjoyWolffSpec::Constant(c) => Some(*c),
            DenjoyWolffSpec::Step { values, .. } if values.len() == 1 => Some(values[0]),
            _ => None,
        }
    }

    pub fn is_sampled(&self) -> bool {
        matches!(self, DenjoyWolffSpec::Sampled { .. })
    }

    /// Structural checks plus `|τ| ≤ 1` at every probe.
    pub fn validate(&self) -> Result<()> {
        let modulus_ok = |t: f64, v: C64| -> Result<()> {
            let m = v.norm();
            if !m.is_finite() || m > 1.0 + 1e-12 {
                Err(Error::TauModulus { t, modulus: m })
            } else {
                Ok(())
            }
        };
        match self {
            DenjoyWolffSpec::Constant(c) => modulus_ok(0.0, *c),
            DenjoyWolffSpec::Step { breakpoints, values } => {
                check_ascending(breakpoints.iter().copied(), "step.breakpoints")?;
                if values.len() != breakpoints.len() + 1 {
                    return Err(invalid(format!(
                        "step: {} values for {} breakpoints (need one more value)",
                        values.len(),
                        breakpoints.len()
                    )));
                }
                for (i, v) in values.iter().enumerate() {
                    let t = if i == 0 { 0.0 } else { breakpoints[i - 1] };
                    modulus_ok(t, *v)?;
                }
                Ok(())
            }
            DenjoyWolffSpec::Sampled { eval, bound, .. } => {
                if !(0.0..=1.0).contains(bound) {
                    return Err(invalid(format!("sampled τ: declared bound {bound} outside [0,1]")));
                }
                for t in math::linspace(0.0, TAU_PROBE_HORIZON, TAU_PROBE_COUNT - 1) {
                    modulus_ok(t, eval(t))?;
                }
                Ok(())
            }
        }
    }
}

/// A Herglotz vector field `G = (z − τ)(τ̄z − 1)p`.
#[derive(Clone, Debug)]
pub struct VectorField {
    pub p: HerglotzSpec,
    pub tau: DenjoyWolffSpec,
    discontinuities: Vec<f64>,
}

/// Assemble the Berkson–Porta product after validating both factors.
pub fn assemble_field(p: HerglotzSpec, tau: DenjoyWolffSpec) -> Result<VectorField> {
    p.validate()?;
    tau.validate()?;
    let mut disc: Vec<f64> = tau.breakpoints().to_vec();
    disc.extend(p.breakpoints());
    disc.sort_by(f64::total_cmp);
    disc.dedup();
    Ok(VectorField { p, tau, discontinuities: disc })
}

impl VectorField {
    pub fn discontinuities(&self) -> &[f64] {
        &self.discontinuities
    }

    /// The same flow in the chart `w = M_c(z) = (z − c)/(1 − c̄z)`, `|c| < 1`:
    /// `G̃(w) = M_c'(z) G(z)` is again Berkson–Porta with `τ̃ = M_c ∘ τ` and
    /// `p̃(w) = p(M_c⁻¹ w) |1 − c̄τ|² / (1 − |c|²)`.
    pub fn conjugate(&self, c: C64) -> VectorField {
        let to = move |z: C64| (z - c) / (ONE - c.conj() * z);
        let tau = match &self.tau {
            DenjoyWolffSpec::Constant(v) => DenjoyWolffSpec::Constant(to(*v)),
            DenjoyWolffSpec::Step { breakpoints, values } => {
                DenjoyWolffSpec::Step { breakpoints: breakpoints.clone(), values: values.iter().map(|v| to(*v)).collect() }
            }
            DenjoyWolffSpec::Sampled { label, eval, .. } => {
                let eval = eval.clone();
                DenjoyWolffSpec::sampled(label.clone(), 1.0, move |t| to(eval(t)))
            }
        };
        let (p, orig) = (self.p.clone(), self.tau.clone());
        let k = 1.0 - c.norm_sqr();
        let p = HerglotzSpec::custom("chart", move |w, t| {
            let z = (w + c) / (ONE + c.conj() * w);
            p.eval(z, t) * (ONE - c.conj() * orig.eval(t)).norm_sqr() / k
        });
        VectorField { p, tau, discontinuities: self.discontinuities.clone() }
    }

    pub fn eval(&self, z: C64, t: f64) -> C64 {
        let tau = self.tau.eval(t);
        if z == tau && tau.norm() < 1.0 {
            return C64::new(0.0, 0.0);
        }
        (z - tau) * (tau.conj() * z - ONE) * self.p.eval(z, t)
    }

    /// `(G, ∂_z G)`, with `∂_z p` by centered differences.
    pub fn eval_with_dz(&self, z: C64, t: f64) -> (C64, C64) {
        let tau = self.tau.eval(t);
        let p = self.p.eval(z, t);
        let a = z - tau;
        let b = tau.conj() * z - ONE;
        let g = if z == tau && tau.norm() < 1.0 { C64::new(0.0, 0.0) } else { a * b * p };
        let dp = if self.p.is_z_independent() { C64::new(0.0, 0.0) } else { self.p.dz(z, t) };
        let dg = b * p + a * tau.conj() * p + a * b * dp;
        (g, dg)
    }
}

/// Concentric circles `r ∈ {0.1, …, 0.9, 0.95, 0.99}` times 256 angles.
pub fn default_disk_grid() -> Vec<C64> {
    let mut radii: Vec<f64> = (1..=9).map(|i| i as f64 / 10.0).collect();
    radii.extend([0.95, 0.99]);
    polar_points(&radii, 256)
}

pub fn polar_points(radii: &[f64], n_angles: usize) -> Vec<C64> {
    let angles = math::uniform_angles(n_angles);
    radii
        .iter()
        .flat_map(|r| angles.iter().map(move |a| math::cis(*a) * *r))
        .collect()
}

/// Almost-everywhere reading of per-time failures: an isolated failing node
/// (all existing neighbours pass) is a warning, anything else fails.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeVerdict {
    pub pass: bool,
    /// Indices of failing time nodes that were downgraded to warnings.
    pub warnings: Vec<usize>,
    pub failing: Vec<usize>,
}

pub fn time_verdict(failed: &[bool]) -> TimeVerdict {
    let n = failed.len();
    let mut warnings = Vec::new();
    let mut failing = Vec::new();
    for i in 0..n {
        if !failed[i] {
            continue;
        }
        let left = i.checked_sub(1).map(|j| failed[j]);
        let right = if i + 1 < n { Some(failed[i + 1]) } else { None };
        let has_neighbour = left.is_some() || right.is_some();
        let isolated = has_neighbour && !left.unwrap_or(false) && !right.unwrap_or(false);
        if isolated {
            warnings.push(i);
        } else {
            failing.push(i);
        }
    }
    TimeVerdict { pass: failing.is_empty(), warnings, failing }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HerglotzReport {
    pub min_re: f64,
    pub worst: (C64, f64),
    /// `min Re p` as a margin for the strict inequality `Re p > 0`.
    pub strict_margin: f64,
    pub non_finite: Vec<(C64, f64)>,
    pub verdict: TimeVerdict,
    pub pass: bool,
}

/// Sampled check of `Re p ≥ −tol` over `grid × times`.
pub fn check_herglotz(p: &HerglotzSpec, grid: &[C64], times: &[f64], tol: f64) -> Result<HerglotzReport> {
    if grid.is_empty() || times.is_empty() {
        return Err(invalid("check_herglotz: empty grid or time set"));
    }
    let mut min_re = f64::INFINITY;
    let mut worst = (grid[0], times[0]);
    let mut non_finite = Vec::new();
    let mut failed = alloc::vec![false; times.len()];
    for (ti, &t) in times.iter().enumerate() {
        for &z in grid {
            let v = p.eval(z, t);
            if !math::is_finite(v) {
                non_finite.push((z, t));
                failed[ti] = true;
                continue;
            }
            if v.re < min_re {
                min_re = v.re;
                worst = (z, t);
            }
            if v.re < -tol {
                failed[ti] = true;
            }
        }
    }
    let verdict = time_verdict(&failed);
    let pass = verdict.pass && non_finite.is_empty();
    Ok(HerglotzReport { min_re, worst, strict_margin: min_re, non_finite, verdict, pass })
}

#[derive(Debug, Clone, PartialEq)]
pub struct RatioReport {
    pub max_ratio: f64,
    pub worst: (C64, f64),
    /// Samples where numerator and denominator both vanished.
    pub skipped: usize,
    pub verdict: TimeVerdict,
    pub pass: bool,
}

fn check_k(k: f64) -> Result<()> {
    if !(0.0..1.0).contains(&k) {
        return Err(invalid(format!("k = {k} must lie in [0,1)")));
    }
    Ok(())
}

fn ratio_scan<F>(grid: &[C64], times: &[f64], k: f64, tol: f64, ratio: F) -> Result<RatioReport>
where
    F: Fn(C64, f64) -> Option<f64>,
{
    check_k(k)?;
    if grid.is_empty() || times.is_empty() {
        return Err(invalid("empty grid or time set"));
    }
    let mut max_ratio = f64::NEG_INFINITY;
    let mut worst = (grid[0], times[0]);
    let mut skipped = 0;
    let mut failed = alloc::vec![false; times.len()];
    for (ti, &t) in times.iter().enumerate() {
        for &z in grid {
            match ratio(z, t) {
                None => skipped += 1,
                Some(r) => {
                    let r = if r.is_nan() { f64::INFINITY } else { r };
                    if r > max_ratio {
                        max_ratio = r;
                        worst = (z, t);
                    }
                    if r > k + tol {
                        failed[ti] = true;
                    }
                }
            }
        }
    }
    if max_ratio == f64::NEG_INFINITY {
        max_ratio = 0.0;
    }
    let verdict = time_verdict(&failed);
    Ok(RatioReport { max_ratio, worst, skipped, pass: verdict.pass, verdict })
}

/// Becker criterion `|p − 1| / |p + 1| ≤ k` on the grid.
pub fn check_becker(p: &HerglotzSpec, grid: &[C64], times: &[f64], k: f64, tol: f64) -> Result<RatioReport> {
    ratio_scan(grid, times, k, tol, |z, t| {
        let v = p.eval(z, t);
        let den = (v + ONE).norm();
        if den == 0.0 {
            Some(f64::INFINITY)
        } else {
            Some((v - ONE).norm() / den)
        }
    })
}

/// Pair inequality `|p − q̄| ≤ k |p + q|` on the grid.
pub fn check_pair(
    p: &HerglotzSpec,
    q: &HerglotzSpec,
    grid: &[C64],
    times: &[f64],
    k: f64,
    tol: f64,
) -> Result<RatioReport> {
    ratio_scan(grid, times, k, tol, |z, t| pair_ratio(p.eval(z, t), q.eval(z, t)))
}

/// `|p − q̄| / |p + q|`; `None` when both vanish.
pub fn pair_ratio(p: C64, q: C64) -> Option<f64> {
    let num = (p - q.conj()).norm();
    let den = (p + q).norm();
    if den == 0.0 {
        if num == 0.0 {
            None
        } else {
            Some(f64::INFINITY)
        }
    } else {
        Some(num / den)
    }
}

/// Quasiconformality constant for `p` with values in `|arg w| < kπ/2`.
pub fn sector_bound(k: f64) -> Result<f64> {
    check_k(k)?;
    Ok(math::sin(k * FRAC_PI_2))
}

/// Half-plane form `p_H(ζ, t) = 2 p(K⁻¹(ζ), t)` with `K(z) = (1 + z)/(1 − z)`.
#[derive(Debug, Clone)]
pub struct HalfPlaneHerglotz {
    p: HerglotzSpec,
}

pub fn cayley_transfer(p: HerglotzSpec) -> Result<HalfPlaneHerglotz> {
    p.validate()?;
    Ok(HalfPlaneHerglotz { p })
}

impl HalfPlaneHerglotz {
    pub fn eval(&self, zeta: C64, t: f64) -> Result<C64> {
        if zeta + ONE == C64::new(0.0, 0.0) {
            return Err(Error::Domain(String::from("ζ = −1 is the pole of K⁻¹")));
        }
        Ok(self.p.eval(cayley_inverse(zeta), t) * 2.0)
    }
}

pub fn cayley(z: C64) -> C64 {
    (ONE + z) / (ONE - z)
}

pub fn cayley_inverse(zeta: C64) -> C64 {
    (zeta - ONE) / (zeta + ONE)
}

#[derive(Debug, Clone, PartialEq)]
pub struct HolomorphyReport {
    pub max_residual: f64,
    pub worst: (C64, f64),
    pub pass: bool,
}

/// Fourth-order centered difference of `f` along the direction `e`.
fn diff5(f: impl Fn(C64) -> C64, z: C64, e: C64) -> C64 {
    let h = e.norm();
    (f(z - e * 2.0) - f(z - e) * 8.0 + f(z + e) * 8.0 - f(z + e * 2.0)) / (12.0 * h)
}

/// Relative Cauchy–Riemann residual `|∂_y p − i ∂_x p| / max(1, |p|, |∂_x p|)`
/// with five-point centered differences of step [`HOLO_STEP`]. The three-point
/// stencil leaves an `O(h²/dist(z, ∂𝔻)²)` residual that swamps the tolerance
/// for kernels with a pole on the circle.
pub fn check_holomorphic(p: &HerglotzSpec, grid: &[C64], times: &[f64], tol: f64) -> HolomorphyReport {
    let h = HOLO_STEP;
    let mut max_residual: f64 = 0.0;
    let mut worst = (C64::new(0.0, 0.0), 0.0);
    for &t in times {
        for &z in grid {
            let dx = diff5(|w| p.eval(w, t), z, C64::new(h, 0.0));
            let dy = diff5(|w| p.eval(w, t), z, C64::new(0.0, h));
            let scale = 1.0f64.max(p.eval(z, t).norm()).max(dx.norm());
            let r = (dy - C64::new(0.0, 1.0) * dx).norm() / scale;
            let r = if r.is_nan() { f64::INFINITY } else { r };
            if r > max_residual {
                max_residual = r;
                worst = (z, t);
            }
        }
    }
    HolomorphyReport { max_residual, worst, pass: max_residual <= tol }
}

/// Largest `|Re p|` over the samples: zero means `p(𝔻, t) ⊂ iℝ` at every node.
pub fn max_abs_real_part(p: &HerglotzSpec, grid: &[C64], times: &[f64]) -> f64 {
    times
        .iter()
        .flat_map(|&t| grid.iter().map(move |&z| p.eval(z, t).re.abs()))
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    #[test]
    fn field_examples() {
        let g = assemble_field(HerglotzSpec::constant(1.0, 0.0), DenjoyWolffSpec::constant(0.0, 0.0)).unwrap();
        assert_eq!(g.eval(c(0.5, 0.0), 3.0), c(-0.5, 0.0));
        let g = assemble_field(HerglotzSpec::constant(1.0, 0.0), DenjoyWolffSpec::constant(1.0, 0.0)).unwrap();
        assert_eq!(g.eval(c(0.0, 0.0), 0.7), c(1.0, 0.0));
        let g = assemble_field(HerglotzSpec::constant(1.0, 0.0), DenjoyWolffSpec::constant(0.3, 0.0)).unwrap();
        assert_eq!(g.eval(c(0.3, 0.0), 0.2), c(0.0, 0.0));
    }

    #[test]
    fn field_rejects_tau_outside_disk() {
        let err = assemble_field(
            HerglotzSpec::constant(1.0, 0.0),
            DenjoyWolffSpec::sampled("bad", 1.0, |t| c(0.5 + t, 0.0)),
        )
        .unwrap_err();
        match err {
            Error::TauModulus { t, modulus } => {
                assert!(t > 0.5 && modulus > 1.0);
            }
            e => panic!("unexpected {e:?}"),
        }
        let step = DenjoyWolffSpec::Step { breakpoints: alloc::vec![1.0], values: alloc::vec![c(0.0, 0.0), c(1.2, 0.0)] };
        assert!(matches!(
            assemble_field(HerglotzSpec::constant(1.0, 0.0), step),
            Err(Error::TauModulus { .. })
        ));
    }

    #[test]
    fn step_tau_is_right_continuous() {
        let tau = DenjoyWolffSpec::Step {
            breakpoints: alloc::vec![1.0, 2.0],
            values: alloc::vec![c(0.1, 0.0), c(0.2, 0.0), c(0.3, 0.0)],
        };
        tau.validate().unwrap();
        assert_eq!(tau.eval(0.99), c(0.1, 0.0));
        assert_eq!(tau.eval(1.0), c(0.2, 0.0));
        assert_eq!(tau.eval(5.0), c(0.3, 0.0));
        let bad = DenjoyWolffSpec::Step { breakpoints: alloc::vec![2.0, 1.0], values: alloc::vec![c(0.0, 0.0); 3] };
        assert!(bad.validate().is_err());
        let short = DenjoyWolffSpec::Step { breakpoints: alloc::vec![1.0], values: alloc::vec![c(0.0, 0.0)] };
        assert!(short.validate().is_err());
    }

    #[test]
    fn discontinuities_follow_tau() {
        let tau = DenjoyWolffSpec::Step { breakpoints: alloc::vec![0.5, 1.5], values: alloc::vec![c(0.0, 0.0); 3] };
        let g = assemble_field(HerglotzSpec::constant(1.0, 0.0), tau).unwrap();
        assert_eq!(g.discontinuities(), &[0.5, 1.5]);
        let g = assemble_field(HerglotzSpec::constant(1.0, 0.0), DenjoyWolffSpec::saturating(c(1.0, 0.0))).unwrap();
        assert!(g.discontinuities().is_empty());
    }

    #[test]
    fn herglotz_examples() {
        let grid = default_disk_grid();
        let times = [0.0, 1.0];
        let r = check_herglotz(&HerglotzSpec::constant(1.0, 0.0), &grid, &times, TOL_HERGLOTZ).unwrap();
        assert_eq!(r.min_re, 1.0);
        assert!(r.pass);
        let r = check_herglotz(&HerglotzSpec::constant(0.0, 1.0), &grid, &times, TOL_HERGLOTZ).unwrap();
        assert_eq!(r.min_re, 0.0);
        assert!(r.pass);
        // (0.9 + z)/(0.9 − z) has its pole inside the disk: large/negative values near 0.9.
        let p = HerglotzSpec::RationalTable(alloc::vec![RationalPiece {
            start: 0.0,
            num: alloc::vec![c(0.9, 0.0), c(1.0, 0.0)],
            den: alloc::vec![c(0.9, 0.0), c(-1.0, 0.0)],
        }]);
        let near: Vec<C64> = polar_points(&[0.89, 0.9, 0.91, 0.95], 256);
        let r = check_herglotz(&p, &near, &times, TOL_HERGLOTZ).unwrap();
        assert!(!r.pass);
        assert!(!r.non_finite.is_empty() || r.min_re < -1.0);
    }

    #[test]
    fn becker_examples() {
        let grid = default_disk_grid();
        let times = [0.0, 0.5, 1.0];
        let r = check_becker(&HerglotzSpec::constant(1.0, 0.0), &grid, &times, 0.0, TOL_CRITERION).unwrap();
        assert_eq!(r.max_ratio, 0.0);
        assert!(r.pass);
        let r = check_becker(&HerglotzSpec::becker(0.5), &grid, &times, 0.5, TOL_CRITERION).unwrap();
        assert!((r.max_ratio - 0.5 * 0.99).abs() < 1e-10);
        assert!(r.pass);
        let r = check_becker(&HerglotzSpec::constant(0.0, 1.0), &grid, &times, 0.9, TOL_CRITERION).unwrap();
        assert!((r.max_ratio - 1.0).abs() < 1e-15);
        assert!(!r.pass);
        let r = check_becker(&HerglotzSpec::constant(-1.0, 0.0), &grid, &times, 0.5, TOL_CRITERION).unwrap();
        assert!(r.max_ratio.is_infinite() && !r.pass);
        assert!(check_becker(&HerglotzSpec::constant(1.0, 0.0), &grid, &times, 1.0, 0.0).is_err());
    }

    #[test]
    fn pair_examples() {
        let grid = default_disk_grid();
        let times = [0.0, 1.0];
        let one = HerglotzSpec::constant(1.0, 0.0);
        let r = check_pair(&one, &one, &grid, &times, 0.0, TOL_CRITERION).unwrap();
        assert_eq!(r.max_ratio, 0.0);
        let rot = HerglotzSpec::Constant(math::cis(PI / 6.0));
        let r = check_pair(&rot, &rot, &grid, &times, 0.5, TOL_CRITERION).unwrap();
        assert!((r.max_ratio - 0.5).abs() < 1e-12);
        assert!(r.pass);
        let i = HerglotzSpec::constant(0.0, 1.0);
        let r = check_pair(&one, &i, &grid, &times, 0.99, TOL_CRITERION).unwrap();
        assert!((r.max_ratio - 1.0).abs() < 1e-12);
        assert!(!r.pass);
        assert_eq!(pair_ratio(c(0.0, 0.0), c(0.0, 0.0)), None);
        assert_eq!(pair_ratio(c(0.0, 1.0), c(0.0, -1.0)), None);
        assert_eq!(pair_ratio(c(1.0, 1.0), c(-1.0, -1.0)), Some(f64::INFINITY));
    }

    #[test]
    fn sector_bound_values() {
        assert_eq!(sector_bound(0.0).unwrap(), 0.0);
        assert!((sector_bound(1.0 / 3.0).unwrap() - 0.5).abs() < 1e-15);
        assert!((sector_bound(0.5).unwrap() - 0.70710678118654752).abs() < 1e-15);
        assert!(sector_bound(1.0).is_err());
    }

    #[test]
    fn cayley_examples() {
        let h = cayley_transfer(HerglotzSpec::constant(1.0, 0.0)).unwrap();
        assert_eq!(h.eval(c(0.3, 2.0), 0.0).unwrap(), c(2.0, 0.0));
        let h = cayley_transfer(HerglotzSpec::custom("id", |z, _| z)).unwrap();
        assert_eq!(h.eval(c(1.0, 0.0), 0.0).unwrap(), c(0.0, 0.0));
        let k = HerglotzSpec::MobiusKernel { driving: Phase::Constant(0.0) };
        let h = cayley_transfer(k).unwrap();
        assert!((h.eval(c(3.0, 0.0), 0.0).unwrap() - c(6.0, 0.0)).norm() < 1e-14);
        assert!(matches!(h.eval(c(-1.0, 0.0), 0.0), Err(Error::Domain(_))));
    }

    #[test]
    fn mobius_kernel_is_normalized() {
        let k = HerglotzSpec::MobiusKernel { driving: Phase::Linear { angle: 0.3, speed: 1.7 } };
        for t in [0.0, 0.4, 2.0] {
            assert!((k.eval(c(0.0, 0.0), t) - c(1.0, 0.0)).norm() < 1e-15);
        }
        let r = check_herglotz(&k, &default_disk_grid(), &[0.0, 1.0], TOL_HERGLOTZ).unwrap();
        assert!(r.pass && r.min_re > 0.0);
    }

    #[test]
    fn sector_kind_stays_in_sector() {
        let p = HerglotzSpec::Sector { opening: 0.5, profile: TimeProfile::Constant(math::cis(0.2)) };
        p.validate().unwrap();
        let grid = default_disk_grid();
        let max_arg = grid.iter().map(|z| p.eval(*z, 0.0).arg().abs()).fold(0.0, f64::max);
        assert!(max_arg <= 0.5 * FRAC_PI_2 + 1e-12);
        assert!(max_arg > 0.5 * FRAC_PI_2 - 0.05);
        let bad = HerglotzSpec::Sector { opening: 0.2, profile: TimeProfile::Constant(math::cis(0.5)) };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn holomorphy_of_builtins() {
        let grid = default_disk_grid();
        let times = [0.0, 0.7];
        let specs = [
            HerglotzSpec::constant(1.0, 0.5),
            HerglotzSpec::becker(0.5),
            HerglotzSpec::MobiusKernel { driving: Phase::Linear { angle: 0.0, speed: 1.0 } },
            HerglotzSpec::Sector { opening: 0.6, profile: TimeProfile::Constant(c(1.0, 0.2)) },
            HerglotzSpec::UserSampled(alloc::vec![(0.0, c(1.0, 0.0)), (1.0, c(2.0, 1.0))]),
        ];
        for p in &specs {
            let r = check_holomorphic(p, &grid, &times, TOL_HOLO);
            assert!(r.pass, "{p:?}: {}", r.max_residual);
        }
        let anti = HerglotzSpec::custom("conj", |z: C64, _| C64::new(1.0, 0.0) + z.conj() * 0.5);
        assert!(!check_holomorphic(&anti, &grid, &times, TOL_HOLO).pass);
    }

    #[test]
    fn time_verdict_rules() {
        let v = time_verdict(&[false, true, false, false]);
        assert!(v.pass);
        assert_eq!(v.warnings, alloc::vec![1]);
        let v = time_verdict(&[false, true, true, false]);
        assert!(!v.pass);
        let v = time_verdict(&[true]);
        assert!(!v.pass);
    }

    #[test]
    fn field_derivative_matches_product_rule() {
        let g = assemble_field(HerglotzSpec::becker(0.5), DenjoyWolffSpec::constant(0.2, -0.1)).unwrap();
        let z = c(0.3, 0.4);
        let (_, dg) = g.eval_with_dz(z, 0.0);
        let h = 1e-6;
        let fd = (g.eval(z + h, 0.0) - g.eval(z - h, 0.0)) / (2.0 * h);
        assert!((dg - fd).norm() < 1e-8);
    }

    #[test]
    fn conjugate_pushes_the_field_forward() {
        let g = assemble_field(
            HerglotzSpec::becker(0.4),
            DenjoyWolffSpec::Step { breakpoints: alloc::vec![1.0], values: alloc::vec![c(0.2, 0.1), c(0.0, 1.0)] },
        )
        .unwrap();
        let cc = c(0.1, 0.5);
        let h = g.conjugate(cc);
        assert_eq!(h.discontinuities(), g.discontinuities());
        for (z, t) in [(c(0.3, -0.2), 0.5), (c(-0.6, 0.1), 2.0)] {
            let w = (z - cc) / (ONE - cc.conj() * z);
            let dm = (1.0 - cc.norm_sqr()) / (ONE - cc.conj() * z).powi(2);
            assert!((h.eval(w, t) - dm * g.eval(z, t)).norm() < 1e-14);
        }
    }
}
