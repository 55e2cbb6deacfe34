//! Quasiconformal extension atlases and Beltrami coefficients.
//!
//! The welded map is sampled on a `(row, θ)` grid of trace points: the source
//! `1/conj(g_t(ρe^{iθ}))` of the decreasing chain is sent to the target
//! `f_t(ρe^{iθ})` of the increasing chain, `ρ = 1 − δ_trace`.
//!
//! The increasing frames may come from any horizon: two chains of the same
//! evolution family differ by post-composition with a conformal map, which
//! changes neither the Beltrami coefficient nor injectivity.

use alloc::collections::BTreeMap;
use alloc::vec::Vec;

use crate::chains::{ChainEvaluator, ChainFrames};
use crate::error::{invalid, Error, Result};
use crate::evolution::reverse_to_origin;
use crate::geometry::winding_number;
use crate::herglotz::{DenjoyWolffSpec, HerglotzSpec, VectorField};
use crate::ode::SolverOptions;
use crate::{math, C64};

pub const TOL_DILAT: f64 = 0.02;
/// Formula samples with `|P + Q|` below this are masked.
pub const DENOM_FLOOR: f64 = 1e-12;
/// Atlases with more colliding nodes than this fraction are rejected.
pub const MAX_COLLISION_FRACTION: f64 = 0.01;
/// Collision threshold as a fraction of the local neighbour spacing.
const COLLISION_SCALE: f64 = 0.25;
/// Welded nodes where the trace offset alone turns `φ[τ](ρζ)` (real and positive
/// on the circle) by more than this angle are unresolved. Only a boundary `τ`
/// triggers it, within `O(δ/angle)` of `τ`.
pub const OFFSET_ANGLE: f64 = 0.01;

const ONE: C64 = C64::new(1.0, 0.0);
const ZERO: C64 = C64::new(0.0, 0.0);

type Grid<T> = Vec<Vec<T>>;

#[derive(Debug, Clone, PartialEq)]
pub struct InjectivityReport {
    /// Median per-node collision threshold.
    pub threshold: f64,
    /// Smallest distance between non-neighbouring live nodes that the search
    /// examined (`∞` when no pair came within the search radius).
    pub min_separation: f64,
    pub colliding_nodes: usize,
    pub fraction: f64,
}

/// Samples of the welded map. Rows are times (or radii for the Becker and
/// interior atlases); columns are uniform angles, periodic.
#[derive(Debug, Clone)]
pub struct ExtensionAtlas {
    pub rows: Vec<f64>,
    pub thetas: Vec<f64>,
    pub radius: f64,
    pub source: Grid<Option<C64>>,
    pub target: Grid<Option<C64>>,
    pub mask: Grid<bool>,
    /// Closed-form Beltrami coefficient, including the unimodular prefactor.
    pub mu_formula: Grid<Option<C64>>,
    /// Prefactor-free ratio `(P − Q̄)/(P + Q)`; same modulus as `mu_formula`.
    pub ratio: Grid<Option<C64>>,
    pub mu_fd: Grid<Option<C64>>,
    /// Nodes excluded from both estimators because the sampled map there is
    /// dominated by the trace offset (see [`OFFSET_ANGLE`]).
    pub unresolved: Grid<bool>,
    pub injectivity: InjectivityReport,
    pub coverage: Option<f64>,
    pub prefactor: Option<PrefactorCheck>,
}

/// Consistency of the analytic prefactor `conj(B)/B`, `B = ζg'/g²`, with the one
/// built from centered time differences of the `g` traces.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PrefactorCheck {
    /// `max |conj(B)/B − (conj(D)/D)(Q/Q̄)|` with `D = ∂_t g/g²` by differences.
    pub with_q_phase: f64,
    /// Same, without the `Q/Q̄` factor.
    pub without_q_phase: f64,
}

impl ExtensionAtlas {
    pub fn live_cells(&self) -> usize {
        self.mask.iter().flatten().filter(|m| !**m).count()
    }

    pub fn masked_cells(&self) -> usize {
        self.mask.iter().flatten().filter(|m| **m).count()
    }
}

/// `f_t((1 − δ)e^{iθ})` (or `g_t`) at a checkpoint of the frames.
pub fn boundary_trace(frames: &ChainFrames, t: f64) -> Result<&[Option<C64>]> {
    let i = frames.checkpoint_index(t).ok_or(Error::MissingTime { t })?;
    Ok(&frames.trace().values[i])
}

fn phi_tau(z: C64, tau: C64) -> C64 {
    (z - tau) * (ONE - tau.conj() * z) / z
}

/// Closed-form Beltrami coefficient at the trace point `ζ` for constant `τ` on
/// the evaluation window, given `g = g_t(ζ)` and `g' = g_t'(ζ)`. Returns
/// `(μ, ratio)` with `ratio = (P − Q̄)/(P + Q)`, `P = φ[τ](ζ)p`, `Q = φ[τ](ζ)q`.
pub fn beltrami_formula(p: C64, q: C64, tau: C64, zeta: C64, g: C64, dg: C64) -> Option<(C64, C64)> {
    let phi = phi_tau(zeta, tau);
    let (big_p, big_q) = (phi * p, phi * q);
    let den = big_p + big_q;
    if den.norm() < DENOM_FLOOR {
        return None;
    }
    let ratio = (big_p - big_q.conj()) / den;
    let b = zeta * dg / (g * g);
    if !(b.norm() > 0.0) || !math::is_finite(b) {
        return None;
    }
    Some((b.conj() / b * ratio, ratio))
}

/// 3×3 samples around a node: `src[a][b]`, `dst[a][b]` at grid-parameter
/// offsets `(x[a], y[b])` (row, angle); the node itself is `[1][1]`.
#[derive(Debug, Clone, Copy)]
pub struct Stencil {
    pub src: [[C64; 3]; 3],
    pub dst: [[C64; 3]; 3],
    pub x: [f64; 3],
    pub y: [f64; 3],
}

/// `μ = ∂_z̄Φ/∂_zΦ` from least-squares quadratic fits of source and target in
/// the grid parameters: the linear coefficients give `S_x, S_y, T_x, T_y`, and
/// `T_• = ∂_zΦ·S_• + ∂_z̄Φ·conj(S_•)` is solved for the Wirtinger derivatives.
/// Fitting in parameter space keeps curvature along a long stencil side out of
/// the short side's derivative, so strongly anisotropic cells stay accurate.
/// Exact for affine `Φ`; `None` when the source directions are near-collinear.
pub fn stencil_mu(st: &Stencil) -> Option<C64> {
    let (sx, sy) = linear_part(&st.src, st.x, st.y)?;
    let (tx, ty) = linear_part(&st.dst, st.x, st.y)?;
    let det = sx * sy.conj() - sx.conj() * sy;
    if !(det.norm() > 1e-8 * sx.norm() * sy.norm()) {
        return None;
    }
    let a = (tx * sy.conj() - ty * sx.conj()) / det;
    let b = (sx * ty - sy * tx) / det;
    (a.norm() > 0.0 && math::is_finite(b / a)).then(|| b / a)
}

/// [`stencil_mu`] in the reflected chart `u = 1/s`, where welded sources
/// `1/conj(g)` are a smooth image of the grid even when `g` passes near 0
/// (source near `∞`). `μ_s = μ_u · s²/s̄²`.
fn stencil_mu_reflected(st: &Stencil) -> Option<C64> {
    let c = st.src[1][1];
    if st.src.iter().flatten().any(|s| *s == ZERO) {
        return None;
    }
    let inv = Stencil { src: st.src.map(|row| row.map(|s| ONE / s)), ..*st };
    Some(stencil_mu(&inv)? * (c * c / (c.conj() * c.conj())))
}

/// Linear coefficients of the least-squares fit
/// `f ≈ c₀ + c₁x + c₂y + c₃x² + c₄y² + c₅xy` over the stencil.
fn linear_part(f: &[[C64; 3]; 3], x: [f64; 3], y: [f64; 3]) -> Option<(C64, C64)> {
    let hx = x.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let hy = y.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if !(hx > 0.0 && hy > 0.0) {
        return None;
    }
    let mut n = [[0.0f64; 6]; 6];
    let mut r = [ZERO; 6];
    for a in 0..3 {
        for b in 0..3 {
            let (u, v) = (x[a] / hx, y[b] / hy);
            let basis = [1.0, u, v, u * u, v * v, u * v];
            for k in 0..6 {
                for l in 0..6 {
                    n[k][l] += basis[k] * basis[l];
                }
                r[k] += f[a][b] * basis[k];
            }
        }
    }
    let c = solve_normal(n, r)?;
    Some((c[1] / hx, c[2] / hy))
}

fn solve_normal<const N: usize>(mut m: [[f64; N]; N], mut r: [C64; N]) -> Option<[C64; N]> {
    for col in 0..N {
        let piv = (col..N).max_by(|&a, &b| m[a][col].abs().total_cmp(&m[b][col].abs()))?;
        if m[piv][col].abs() < 1e-12 {
            return None;
        }
        m.swap(col, piv);
        r.swap(col, piv);
        for row in col + 1..N {
            let f = m[row][col] / m[col][col];
            for c in col..N {
                m[row][c] -= f * m[col][c];
            }
            let rc = r[col];
            r[row] -= rc * f;
        }
    }
    let mut x = [ZERO; N];
    for row in (0..N).rev() {
        let mut acc = r[row];
        for c in row + 1..N {
            acc -= x[c] * m[row][c];
        }
        x[row] = acc / m[row][row];
    }
    x.iter().all(|v| math::is_finite(*v)).then_some(x)
}

fn median(mut v: Vec<f64>) -> f64 {
    if v.is_empty() {
        return 0.0;
    }
    v.sort_by(f64::total_cmp);
    v[v.len() / 2]
}

fn cell_key(z: C64, size: f64) -> (i64, i64) {
    (math::floor(z.re / size) as i64, math::floor(z.im / size) as i64)
}

/// Collision search: two live nodes that are not grid neighbours but lie closer
/// than both of their thresholds are masked. A node's threshold is a fraction of
/// its smallest grid-neighbour spacing, so traces that crowd towards a boundary
/// attracting point are not mistaken for overlaps. Nodes are hashed on a grid of
/// cell size `2^L ≥ threshold`, one level `L` per octave.
fn injectivity(source: &Grid<Option<C64>>, mask: &mut Grid<bool>) -> InjectivityReport {
    let rows = source.len();
    let cols = source.first().map_or(0, |r| r.len());
    let live = |i: usize, j: usize| if mask[i][j] { None } else { source[i][j] };
    let mut thr = alloc::vec![alloc::vec![0.0f64; cols]; rows];
    for i in 0..rows {
        for j in 0..cols {
            let Some(a) = live(i, j) else { continue };
            let mut near = f64::INFINITY;
            let mut around = alloc::vec![(i, (j + 1) % cols), (i, (j + cols - 1) % cols)];
            if i + 1 < rows {
                around.push((i + 1, j));
            }
            if i > 0 {
                around.push((i - 1, j));
            }
            for (k, l) in around {
                if let Some(b) = live(k, l) {
                    near = near.min((a - b).norm());
                }
            }
            thr[i][j] = if near.is_finite() { COLLISION_SCALE * near } else { 0.0 };
        }
    }
    let threshold = median(thr.iter().flatten().copied().filter(|t| *t > 0.0).collect());
    let mut rep = InjectivityReport { threshold, min_separation: f64::INFINITY, colliding_nodes: 0, fraction: 0.0 };
    let level = |t: f64| math::ceil(math::log2(t)) as i32;
    let mut buckets: BTreeMap<(i32, i64, i64), Vec<(usize, usize)>> = BTreeMap::new();
    for i in 0..rows {
        for j in 0..cols {
            if let (Some(z), true) = (live(i, j), thr[i][j] > 0.0) {
                let lv = level(thr[i][j]);
                let (cx, cy) = cell_key(z, math::powf(2.0, lv as f64));
                buckets.entry((lv, cx, cy)).or_default().push((i, j));
            }
        }
    }
    let levels: Vec<i32> = {
        let mut v: Vec<i32> = buckets.keys().map(|k| k.0).collect();
        v.dedup();
        v
    };
    let neighbours = |(i, j): (usize, usize), (k, l): (usize, usize)| -> bool {
        let di = i.abs_diff(k);
        let dj = j.abs_diff(l);
        di <= 1 && (dj <= 1 || dj + 1 == cols)
    };
    let mut hit = alloc::vec![alloc::vec![false; cols]; rows];
    for i in 0..rows {
        for j in 0..cols {
            let (Some(z), true) = (live(i, j), thr[i][j] > 0.0) else { continue };
            let own = level(thr[i][j]);
            // Partners on coarser levels find this node from their side.
            for &lv in levels.iter().take_while(|l| **l <= own) {
                let (cx, cy) = cell_key(z, math::powf(2.0, lv as f64));
                for dx in -1..=1 {
                    for dy in -1..=1 {
                        let Some(list) = buckets.get(&(lv, cx + dx, cy + dy)) else { continue };
                        for &(k, l) in list {
                            if (k, l) == (i, j) || neighbours((i, j), (k, l)) {
                                continue;
                            }
                            let d = (z - source[k][l].unwrap()).norm();
                            rep.min_separation = rep.min_separation.min(d);
                            if d < thr[i][j].min(thr[k][l]) {
                                hit[i][j] = true;
                                hit[k][l] = true;
                            }
                        }
                    }
                }
            }
        }
    }
    let live_count = mask.iter().flatten().filter(|m| !**m).count().max(1);
    for i in 0..rows {
        for j in 0..cols {
            if hit[i][j] {
                rep.colliding_nodes += 1;
                mask[i][j] = true;
            }
        }
    }
    rep.fraction = rep.colliding_nodes as f64 / live_count as f64;
    rep
}

/// `μ_fd` at every node whose 3×3 stencil (rows `i ± 1`, periodic columns) is live;
/// rows flagged in `kinks` (stencils straddling a breakpoint of `τ`) are skipped.
fn beltrami_fd(atlas: &ExtensionAtlas, kinks: &[bool], reflected: bool) -> Grid<Option<C64>> {
    let fit = if reflected { stencil_mu_reflected } else { stencil_mu };
    let rows = atlas.rows.len();
    let cols = atlas.thetas.len();
    let dtheta = core::f64::consts::TAU / cols as f64;
    let mut out = alloc::vec![alloc::vec![None; cols]; rows];
    for i in 1..rows.saturating_sub(1) {
        if kinks.get(i).copied().unwrap_or(false) {
            continue;
        }
        let x = [atlas.rows[i - 1] - atlas.rows[i], 0.0, atlas.rows[i + 1] - atlas.rows[i]];
        for j in 0..cols {
            if atlas.unresolved[i][j] {
                continue;
            }
            let mut st = Stencil { src: [[ZERO; 3]; 3], dst: [[ZERO; 3]; 3], x, y: [-dtheta, 0.0, dtheta] };
            let mut ok = true;
            for a in 0..3 {
                for b in 0..3 {
                    let (k, l) = (i + a - 1, (j + cols + b - 1) % cols);
                    match (atlas.source[k][l], atlas.target[k][l], atlas.mask[k][l]) {
                        (Some(s), Some(t), false) => {
                            st.src[a][b] = s;
                            st.dst[a][b] = t;
                        }
                        _ => ok = false,
                    }
                }
            }
            if ok {
                out[i][j] = fit(&st);
            }
        }
    }
    out
}

/// Fraction of annulus samples (between the outermost point of the first row and
/// the innermost point of the last) inside live quads.
fn coverage(atlas: &ExtensionAtlas) -> Option<f64> {
    let rows = atlas.rows.len();
    let cols = atlas.thetas.len();
    if rows < 2 {
        return None;
    }
    let r_in = atlas.source[0].iter().flatten().map(|z| z.norm()).fold(0.0, f64::max);
    let r_out = atlas.source[rows - 1].iter().flatten().map(|z| z.norm()).fold(f64::INFINITY, f64::min);
    if !(r_out > r_in) {
        return None;
    }
    let mut quads: Vec<[C64; 4]> = Vec::new();
    for i in 0..rows - 1 {
        for j in 0..cols {
            let idx = [(i, j), (i + 1, j), (i + 1, (j + 1) % cols), (i, (j + 1) % cols)];
            let q: Option<Vec<C64>> = idx.iter().map(|&(k, l)| if atlas.mask[k][l] { None } else { atlas.source[k][l] }).collect();
            if let Some(q) = q {
                quads.push([q[0], q[1], q[2], q[3]]);
            }
        }
    }
    if quads.is_empty() {
        return Some(0.0);
    }
    let size = median(
        quads
            .iter()
            .map(|q| (q[0] - q[2]).norm().max((q[1] - q[3]).norm()))
            .collect(),
    )
    .max(1e-300);
    let mut buckets: BTreeMap<(i64, i64), Vec<usize>> = BTreeMap::new();
    for (n, q) in quads.iter().enumerate() {
        let (lo_x, hi_x) = q.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |a, z| (a.0.min(z.re), a.1.max(z.re)));
        let (lo_y, hi_y) = q.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |a, z| (a.0.min(z.im), a.1.max(z.im)));
        let (x0, y0) = cell_key(C64::new(lo_x, lo_y), size);
        let (x1, y1) = cell_key(C64::new(hi_x, hi_y), size);
        if (x1 - x0) * (y1 - y0) > 10_000 {
            continue;
        }
        for x in x0..=x1 {
            for y in y0..=y1 {
                buckets.entry((x, y)).or_default().push(n);
            }
        }
    }
    let (nr, na) = (32usize, 256usize);
    let mut inside = 0usize;
    for a in 0..nr {
        let r = r_in + (r_out - r_in) * (a as f64 + 0.5) / nr as f64;
        for b in 0..na {
            let z = math::cis(core::f64::consts::TAU * (b as f64 + 0.5) / na as f64) * r;
            let hit = buckets
                .get(&cell_key(z, size))
                .is_some_and(|list| list.iter().any(|&n| matches!(winding_number(&quads[n], z, 0.0), Some(w) if w != 0) || winding_number(&quads[n], z, 0.0).is_none()));
            if hit {
                inside += 1;
            }
        }
    }
    Some(inside as f64 / (nr * na) as f64)
}

fn assemble(
    rows: Vec<f64>,
    thetas: Vec<f64>,
    radius: f64,
    source: Grid<Option<C64>>,
    target: Grid<Option<C64>>,
    mu_formula: Grid<Option<C64>>,
    ratio: Grid<Option<C64>>,
    kinks: &[bool],
    unresolved: Option<Grid<bool>>,
) -> Result<ExtensionAtlas> {
    // Only welded atlases carry a resolution mask, and only they are sampled as reflections.
    let reflected = unresolved.is_some();
    let mut mask: Grid<bool> = source
        .iter()
        .zip(&target)
        .map(|(s, t)| s.iter().zip(t).map(|(a, b)| a.is_none() || b.is_none()).collect())
        .collect();
    let inj = injectivity(&source, &mut mask);
    if inj.fraction > MAX_COLLISION_FRACTION {
        return Err(Error::AtlasRejected(alloc::format!(
            "{} of {} live nodes collide (threshold {:.3e})",
            inj.colliding_nodes,
            source.len() * thetas.len(),
            inj.threshold
        )));
    }
    let rows_n = rows.len();
    let cols = thetas.len();
    let mut atlas = ExtensionAtlas {
        rows,
        thetas,
        radius,
        source,
        target,
        mask,
        mu_formula,
        ratio,
        mu_fd: alloc::vec![alloc::vec![None; cols]; rows_n],
        unresolved: unresolved.unwrap_or_else(|| alloc::vec![alloc::vec![false; cols]; rows_n]),
        injectivity: inj,
        coverage: None,
        prefactor: None,
    };
    atlas.mu_fd = beltrami_fd(&atlas, kinks, reflected);
    atlas.coverage = coverage(&atlas);
    Ok(atlas)
}

fn check_grid(rows: &[f64], n_theta: usize, delta: f64) -> Result<()> {
    if rows.len() < 3 || n_theta < 3 {
        return Err(invalid("an atlas needs at least 3 rows and 3 angles"));
    }
    if rows.windows(2).any(|w| w[1] <= w[0]) {
        return Err(invalid("atlas rows must be strictly ascending"));
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(invalid("δ_trace must lie in (0, 1)"));
    }
    Ok(())
}

/// `Φ(1/conj(g_t(ρe^{iθ}))) = f_t(ρe^{iθ})` on `times × θ`. `f` evaluates the
/// increasing chain of `(p, τ)`; `g_field` is `(q, τ)`.
pub fn build_extension(
    f: &ChainEvaluator,
    g_field: &VectorField,
    times: &[f64],
    n_theta: usize,
    delta: f64,
    opts: &SolverOptions,
) -> Result<ExtensionAtlas> {
    check_grid(times, n_theta, delta)?;
    if times[0] < 0.0 || *times.last().unwrap() > f.horizon {
        return Err(invalid(alloc::format!("atlas times must lie in [0, {}]", f.horizon)));
    }
    let rho = 1.0 - delta;
    let thetas = math::uniform_angles(n_theta);
    let zetas: Vec<C64> = thetas.iter().map(|a| math::cis(*a) * rho).collect();
    let p = &f.field.p;
    let q = &g_field.p;
    let tau = &g_field.tau;
    let formula_ok = !tau.is_sampled();
    let mut source = Vec::with_capacity(times.len());
    let mut target = Vec::with_capacity(times.len());
    let mut gs = Vec::with_capacity(times.len());
    let mut mu = Vec::with_capacity(times.len());
    let mut ratio = Vec::with_capacity(times.len());
    for &t in times {
        target.push(f.eval(t, &zetas)?);
        let g = reverse_to_origin(g_field, t, &zetas, opts)?;
        source.push(g.iter().map(|v| v.and_then(|(w, _)| (w.norm() > 0.0).then(|| ONE / w.conj()))).collect());
        let tau_t = tau.eval(t);
        let (m, r): (Vec<_>, Vec<_>) = zetas
            .iter()
            .zip(&g)
            .map(|(z, gv)| {
                let v = formula_ok.then_some(*gv).flatten().and_then(|(w, dw)| beltrami_formula(p.eval(*z, t), q.eval(*z, t), tau_t, *z, w, dw));
                (v.map(|x| x.0), v.map(|x| x.1))
            })
            .unzip();
        mu.push(m);
        ratio.push(r);
        gs.push(g);
    }
    let kinks = kink_rows(times, tau);
    let unresolved = unresolved_nodes(times, &zetas, tau);
    let mut atlas = assemble(times.to_vec(), thetas, rho, source, target, mu, ratio, &kinks, Some(unresolved))?;
    if formula_ok {
        atlas.prefactor = prefactor_check(times, &zetas, &gs, p, q, tau, &kinks);
    }
    Ok(atlas)
}

/// `|arg φ[τ(t)](ρζ)| > OFFSET_ANGLE`. At radius `ρ < 1` the welded samples
/// carry an extra dilatation of about that angle (`2δ/θ` next to a boundary
/// `τ`), which belongs to the sampling, not to the extension.
fn unresolved_nodes(times: &[f64], zetas: &[C64], tau: &DenjoyWolffSpec) -> Grid<bool> {
    times
        .iter()
        .map(|t| {
            let tau_t = tau.eval(*t);
            zetas.iter().map(|z| phi_tau(*z, tau_t).arg().abs() > OFFSET_ANGLE).collect()
        })
        .collect()
}

/// Rows whose centered time stencil straddles a breakpoint of `τ`.
fn kink_rows(times: &[f64], tau: &DenjoyWolffSpec) -> Vec<bool> {
    let bps = tau.breakpoints();
    (0..times.len())
        .map(|i| {
            let lo = times[i.saturating_sub(1)];
            let hi = times[(i + 1).min(times.len() - 1)];
            bps.iter().any(|b| *b > lo && *b <= hi)
        })
        .collect()
}

fn prefactor_check(
    times: &[f64],
    zetas: &[C64],
    gs: &[Vec<Option<(C64, C64)>>],
    p: &HerglotzSpec,
    q: &HerglotzSpec,
    tau: &DenjoyWolffSpec,
    kinks: &[bool],
) -> Option<PrefactorCheck> {
    let _ = p;
    let mut out = PrefactorCheck { with_q_phase: 0.0, without_q_phase: 0.0 };
    let mut any = false;
    for i in 1..times.len().saturating_sub(1) {
        if kinks[i] {
            continue;
        }
        let t = times[i];
        let tau_t = tau.eval(t);
        for (j, z) in zetas.iter().enumerate() {
            let (Some((g0, _)), Some((g1, dg1)), Some((g2, _))) = (gs[i - 1][j], gs[i][j], gs[i + 1][j]) else { continue };
            let b = z * dg1 / (g1 * g1);
            let analytic = b.conj() / b;
            let d = (g2 - g0) / (times[i + 1] - times[i - 1]) / (g1 * g1);
            let big_q = phi_tau(*z, tau_t) * q.eval(*z, t);
            let plain = d.conj() / d;
            out.with_q_phase = out.with_q_phase.max((analytic - plain * big_q / big_q.conj()).norm());
            out.without_q_phase = out.without_q_phase.max((analytic - plain).norm());
            any = true;
        }
    }
    any.then_some(out)
}

/// Becker's radial extension `F(re^{iθ}) = f_{log r}(ρe^{iθ})` for `r ≥ 1`, on
/// rows `log r ∈ log_r` (`τ ≡ 0`). The formula column is
/// `(z/z̄)(p − 1)/(p + 1)` at `z = re^{iθ}`.
pub fn becker_extension(f: &ChainEvaluator, log_r: &[f64], n_theta: usize, delta: f64) -> Result<ExtensionAtlas> {
    check_grid(log_r, n_theta, delta)?;
    if f.field.tau.constant_value() != Some(ZERO) {
        return Err(invalid("the Becker extension needs τ ≡ 0"));
    }
    if log_r[0] < 0.0 {
        return Err(invalid("the Becker extension is sampled on r ≥ 1"));
    }
    let last = *log_r.last().unwrap();
    if last > f.horizon {
        return Err(invalid(alloc::format!(
            "r = {:.6} is beyond the chain horizon; achievable r_max = {:.6}",
            math::exp(last),
            math::exp(f.horizon)
        )));
    }
    let rho = 1.0 - delta;
    let thetas = math::uniform_angles(n_theta);
    let zetas: Vec<C64> = thetas.iter().map(|a| math::cis(*a) * rho).collect();
    let mut source = Vec::new();
    let mut target = Vec::new();
    let mut mu = Vec::new();
    let mut ratio = Vec::new();
    for &t in log_r {
        target.push(f.eval(t, &zetas)?);
        source.push(thetas.iter().map(|a| Some(math::cis(*a) * math::exp(t))).collect());
        let (m, r): (Vec<_>, Vec<_>) = thetas
            .iter()
            .zip(&zetas)
            .map(|(a, z)| {
                let p = f.field.p.eval(*z, t);
                let den = p + ONE;
                if den.norm() < DENOM_FLOOR {
                    return (None, None);
                }
                let r = (p - ONE) / den;
                (Some(math::cis(2.0 * a) * r), Some(r))
            })
            .unzip();
        mu.push(m);
        ratio.push(r);
    }
    assemble(log_r.to_vec(), thetas, rho, source, target, mu, ratio, &[], None)
}

/// `max_θ |F(1·e^{iθ}) − f_0((1 − δ/2)e^{iθ})|`: mismatch between the outer
/// extension at `r = 1` and the inner map closer to the circle.
pub fn becker_continuity(f: &ChainEvaluator, n_theta: usize, delta: f64) -> Result<f64> {
    let thetas = math::uniform_angles(n_theta);
    let outer: Vec<C64> = thetas.iter().map(|a| math::cis(*a) * (1.0 - delta)).collect();
    let inner: Vec<C64> = thetas.iter().map(|a| math::cis(*a) * (1.0 - delta / 2.0)).collect();
    let a = f.eval(0.0, &outer)?;
    let b = f.eval(0.0, &inner)?;
    Ok(a.iter()
        .zip(&b)
        .filter_map(|(x, y)| Some((x.as_ref()? - y.as_ref()?).norm()))
        .fold(0.0, f64::max))
}

/// Atlas of `f_0` itself on `radii × θ` inside the disk (conformal: `μ = 0`).
pub fn interior_atlas(f: &ChainEvaluator, radii: &[f64], n_theta: usize) -> Result<ExtensionAtlas> {
    check_grid(radii, n_theta, 0.5)?;
    if radii[0] <= 0.0 || *radii.last().unwrap() >= 1.0 {
        return Err(invalid("interior radii must lie in (0, 1)"));
    }
    let thetas = math::uniform_angles(n_theta);
    let mut source = Vec::new();
    let mut target = Vec::new();
    for &r in radii {
        let pts: Vec<C64> = thetas.iter().map(|a| math::cis(*a) * r).collect();
        target.push(f.eval(0.0, &pts)?);
        source.push(pts.into_iter().map(Some).collect());
    }
    let zeros: Grid<Option<C64>> = radii.iter().map(|_| alloc::vec![Some(ZERO); n_theta]).collect();
    assemble(radii.to_vec(), thetas, 1.0, source, target, zeros.clone(), zeros, &[], None)
}

/// Atlas from explicit samples (e.g. a synthetic map), with no formula column.
pub fn atlas_from_samples(rows: Vec<f64>, n_theta: usize, source: Grid<C64>, target: Grid<C64>) -> Result<ExtensionAtlas> {
    check_grid(&rows, n_theta, 0.5)?;
    let wrap = |g: Grid<C64>| g.into_iter().map(|r| r.into_iter().map(Some).collect()).collect();
    let none: Grid<Option<C64>> = rows.iter().map(|_| alloc::vec![None; n_theta]).collect();
    assemble(rows, math::uniform_angles(n_theta), 1.0, wrap(source), wrap(target), none.clone(), none, &[], None)
}

#[derive(Debug, Clone, PartialEq)]
pub struct DilatationReport {
    pub max_formula: Option<f64>,
    pub max_fd: f64,
    /// `max |μ_formula − μ_fd|` over nodes carrying both.
    pub agreement: Option<f64>,
    pub fd_cells: usize,
    pub masked_cells: usize,
    pub unresolved_cells: usize,
    pub sense_preserving: bool,
    pub k: f64,
    pub pass: bool,
}

/// Pass iff both estimates stay below `k + tol` on live cells.
pub fn dilatation_report(atlas: &ExtensionAtlas, k: f64, tol: f64) -> DilatationReport {
    let mut max_formula: Option<f64> = None;
    let mut max_fd: f64 = 0.0;
    let mut agreement: Option<f64> = None;
    let mut fd_cells = 0;
    for i in 0..atlas.rows.len() {
        for j in 0..atlas.thetas.len() {
            if atlas.mask[i][j] || atlas.unresolved[i][j] {
                continue;
            }
            if let Some(m) = atlas.mu_formula[i][j] {
                max_formula = Some(max_formula.map_or(m.norm(), |x| x.max(m.norm())));
            }
            if let Some(m) = atlas.mu_fd[i][j] {
                fd_cells += 1;
                max_fd = max_fd.max(m.norm());
                if let Some(f) = atlas.mu_formula[i][j] {
                    let d = (f - m).norm();
                    agreement = Some(agreement.map_or(d, |x| x.max(d)));
                }
            }
        }
    }
    let bound = k + tol;
    let pass = max_fd <= bound && max_formula.is_none_or(|m| m <= bound) && fd_cells > 0;
    DilatationReport {
        max_formula,
        max_fd,
        agreement,
        fd_cells,
        masked_cells: atlas.masked_cells(),
        unresolved_cells: atlas.unresolved.iter().flatten().filter(|u| **u).count(),
        sense_preserving: max_fd < 1.0,
        k,
        pass,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chains::chain_options;
    use crate::herglotz::{assemble_field, pair_ratio};
    use core::f64::consts::PI;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    fn field(p: HerglotzSpec, tau: DenjoyWolffSpec) -> VectorField {
        assemble_field(p, tau).unwrap()
    }

    fn rows(t: f64, n: usize) -> Vec<f64> {
        math::linspace(0.0, t, n - 1)
    }

    #[test]
    fn fit_is_exact_for_affine_maps() {
        let x = [-0.3, 0.0, 0.2];
        let y = [-0.01, 0.0, 0.01];
        let src: [[C64; 3]; 3] = core::array::from_fn(|a| core::array::from_fn(|b| math::cis(y[b]) * (1.5 + x[a]) + c(0.0, x[a] * x[a])));
        let dst = src.map(|row| row.map(|z| c(0.5, 1.0) + z * c(2.0, -1.0) + z.conj() * c(0.6, -0.3)));
        let mu = stencil_mu(&Stencil { src, dst, x, y }).unwrap();
        assert!((mu - c(0.6, -0.3) / c(2.0, -1.0)).norm() < 1e-12);
        let line = src.map(|row| row.map(|z| c(z.re, 2.0 * z.re)));
        assert!(stencil_mu(&Stencil { src: line, dst, x, y }).is_none());
    }

    #[test]
    fn synthetic_affine_atlas() {
        let rs = math::linspace(1.2, 2.0, 15);
        let n = 64;
        let src: Grid<C64> = rs.iter().map(|r| math::uniform_angles(n).iter().map(|a| math::cis(*a) * *r).collect()).collect();
        let dst: Grid<C64> = src.iter().map(|row| row.iter().map(|z| z + z.conj() * 0.3).collect()).collect();
        let atlas = atlas_from_samples(rs, n, src, dst).unwrap();
        let rep = dilatation_report(&atlas, 0.3, 1e-10);
        assert!((rep.max_fd - 0.3).abs() < 1e-10, "{rep:?}");
        assert!(rep.pass && rep.max_formula.is_none());
        assert_eq!(atlas.injectivity.colliding_nodes, 0);
        assert!(atlas.coverage.unwrap() > 0.999);
    }

    #[test]
    fn formula_identities() {
        let z = c(0.3, 0.5);
        let g = z * 0.5;
        let dg = c(0.5, 0.0);
        for p in [c(1.0, 0.0), c(2.0, 0.7), math::cis(PI / 6.0)] {
            let (mu, ratio) = beltrami_formula(p, p, ZERO, z, g, dg).unwrap();
            assert!((mu.norm() - ratio.norm()).abs() < 1e-15);
            assert!((ratio.norm() - pair_ratio(p, p).unwrap()).abs() < 1e-12);
            assert!((ratio.norm() - math::sin(p.arg().abs())).abs() < 1e-12);
        }
        let (mu, _) = beltrami_formula(c(1.5, 0.0), c(1.5, 0.0), ZERO, z, g, dg).unwrap();
        assert_eq!(mu.norm(), 0.0);
        let zeta = math::cis(0.4) * 0.999;
        let p = (ONE + zeta * 0.5) / (ONE - zeta * 0.5);
        let (_, r) = beltrami_formula(p, ONE, ZERO, zeta, zeta, ONE).unwrap();
        assert!((r.norm() - 0.5 * 0.999).abs() < 1e-12);
        assert!(beltrami_formula(ONE, -ONE, ZERO, z, g, dg).is_none());
    }

    #[test]
    fn conformal_atlas() {
        let f = field(HerglotzSpec::constant(1.0, 0.0), DenjoyWolffSpec::constant(0.0, 0.0));
        let ev = ChainEvaluator::new(&f, 1.0, chain_options()).unwrap();
        let atlas = build_extension(&ev, &f, &rows(1.0, 16), 64, 1e-3, &SolverOptions::default()).unwrap();
        let rep = dilatation_report(&atlas, 0.0, 0.01);
        assert!(rep.pass, "{rep:?}");
        assert!(rep.max_formula.unwrap() < 1e-12);
        assert!(rep.agreement.unwrap() < 0.01);
        // Sources are e^t e^{iθ}/ρ.
        let s = atlas.source[15][0].unwrap();
        assert!((s - c(libm::exp(1.0) / (1.0 - 1e-3), 0.0)).norm() < 1e-8);
        assert!(atlas.coverage.unwrap() > 0.99);
    }

    #[test]
    fn becker_atlas_small() {
        let f = field(HerglotzSpec::becker(0.5), DenjoyWolffSpec::constant(0.0, 0.0));
        let ev = ChainEvaluator::new(&f, 1.0, chain_options()).unwrap();
        let atlas = becker_extension(&ev, &rows(1.0, 16), 64, 1e-3).unwrap();
        let rep = dilatation_report(&atlas, 0.5, TOL_DILAT);
        assert!(rep.sense_preserving);
        assert!((rep.max_formula.unwrap() - 0.5 * (1.0 - 1e-3)).abs() < 1e-9);
        assert!(rep.agreement.unwrap() < 0.1, "{rep:?}");
        assert!(becker_extension(&ev, &rows(2.0, 16), 64, 1e-3).is_err());
        let gap = becker_continuity(&ev, 64, 1e-3).unwrap();
        assert!(gap < 1e-2, "{gap}");
        let inside = interior_atlas(&ev, &math::linspace(0.1, 0.9, 63), 256).unwrap();
        let r = dilatation_report(&inside, 0.0, 0.01);
        assert!(r.pass, "{r:?}");
    }

    #[test]
    fn complex_q_prefactor() {
        let p = HerglotzSpec::Constant(math::cis(PI / 6.0));
        let f = field(p.clone(), DenjoyWolffSpec::constant(0.0, 0.0));
        let ev = ChainEvaluator::new(&f, 1.0, chain_options()).unwrap();
        let atlas = build_extension(&ev, &f, &rows(1.0, 32), 64, 1e-3, &SolverOptions::default()).unwrap();
        let rep = dilatation_report(&atlas, 0.5, TOL_DILAT);
        assert!((rep.max_formula.unwrap() - 0.5).abs() < 1e-9);
        assert!(rep.agreement.unwrap() < 0.02, "{rep:?}");
        let pf = atlas.prefactor.unwrap();
        assert!(pf.with_q_phase < 1e-3 && pf.without_q_phase > 0.5, "{pf:?}");
    }
}
