//! Command dispatch: each command runs one module's study on a scenario, writes
//! its artifacts and records key scalars and pass/fail flags in the summary.

use std::path::Path;
use std::str::FromStr;
use std::time::Instant;

use anyhow::{anyhow, bail, Result};
use loewner_core::approx::{
    chain_level, chain_reference, deviation_samples, ef_level, ef_reference, field_deviation, fitted_slope, step_approximate, ApproxConfig,
    ConvergenceTable, LevelRow,
};
use loewner_core::chains::{
    beta_limit, chain_options, chain_options_for, check_containment, decreasing_chain, is_conformal_only, lambda_diameter, normalization_error,
    range_normalized_chain, rotation_residual, stencil_times, verify_chain_pde, ChainConfig, ChainEvaluator, ChainFrames, RangeClass, TraceSpec,
};
use loewner_core::evolution::{derivative_at_origin, max_modulus_increase, schwarz_pick_check, solve_forward, verify_semigroup, SeedGrid};
use loewner_core::extension::{becker_continuity, becker_extension, build_extension, dilatation_report, interior_atlas, ExtensionAtlas};
use loewner_core::herglotz::{
    assemble_field, check_becker, check_herglotz, check_holomorphic, check_pair, default_disk_grid, max_abs_real_part, sector_bound, HerglotzSpec,
    VectorField,
};
use loewner_core::math::linspace;
use loewner_core::ode::SolverOptions;
use loewner_core::C64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Map, Value};

use crate::config::{HerglotzDesc, ScenarioConfig};
use crate::output::{ramp, Artifacts, Summary, Svg};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Evolve,
    Chain,
    Range,
    Extend,
    Becker,
    Check,
    Approx,
}

impl Command {
    pub const ALL: [Command; 7] = [Command::Evolve, Command::Chain, Command::Range, Command::Extend, Command::Becker, Command::Check, Command::Approx];

    pub fn name(self) -> &'static str {
        match self {
            Command::Evolve => "evolve",
            Command::Chain => "chain",
            Command::Range => "range",
            Command::Extend => "extend",
            Command::Becker => "becker",
            Command::Check => "check",
            Command::Approx => "approx",
        }
    }
}

impl FromStr for Command {
    type Err = anyhow::Error;

    fn from_str(s: &str) -> Result<Self> {
        Command::ALL.into_iter().find(|c| c.name() == s).ok_or_else(|| anyhow!("unknown command `{s}`"))
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct RunOptions {
    /// Zero every wall-clock field so that artifacts are byte-identical across runs.
    pub deterministic: bool,
}

/// Below this, p is treated as purely imaginary (the `T = 0` regime).
const TOL_CONFORMAL: f64 = 1e-12;
/// Stencil spacings of the chain-PDE study.
const PDE_DT: [f64; 2] = [0.01, 0.005];
const PDE_ANGLES: usize = 256;
/// Residuals below this carry no measurable convergence order.
const PDE_NOISE: f64 = 1e-9;
const MIN_PDE_ORDER: f64 = 1.9;
const MIN_ATLAS_ORDER: f64 = 1.0;
/// μ disagreement below this is rounding, with no measurable order.
const ATLAS_NOISE: f64 = 1e-9;
/// Half-width of the PDE stencil window kept clear of `τ` breakpoints.
const PDE_CLEARANCE: f64 = 0.05;
const MAX_COLLISION_FRACTION: f64 = loewner_core::extension::MAX_COLLISION_FRACTION;

struct Run<'a> {
    cfg: &'a ScenarioConfig,
    art: Artifacts,
    metrics: Map<String, Value>,
    warnings: Vec<String>,
    pass: bool,
    opts: RunOptions,
}

impl Run<'_> {
    fn put(&mut self, key: &str, v: Value) {
        self.metrics.insert(key.into(), v);
    }

    fn require(&mut self, ok: bool, what: &str) {
        if !ok {
            self.pass = false;
            self.warnings.push(format!("failed: {what}"));
        }
    }

    fn ms(&self, start: Instant) -> u64 {
        if self.opts.deterministic {
            0
        } else {
            start.elapsed().as_millis() as u64
        }
    }
}

fn cj(z: C64) -> Value {
    json!([z.re, z.im])
}

fn field_p(cfg: &ScenarioConfig) -> Result<VectorField> {
    Ok(assemble_field(cfg.p.spec(), cfg.tau.spec())?)
}

fn field_q(cfg: &ScenarioConfig) -> Result<VectorField> {
    Ok(assemble_field(cfg.q_or_default().spec(), cfg.tau.spec())?)
}

fn solver(cfg: &ScenarioConfig) -> SolverOptions {
    SolverOptions::with_tol(cfg.time.tol)
}

fn check_times(cfg: &ScenarioConfig) -> Vec<f64> {
    if cfg.time.t_end > 0.0 {
        linspace(0.0, cfg.time.t_end, 64)
    } else {
        vec![0.0]
    }
}

/// `T = 0`: both `p` and `q` purely imaginary on the check grid.
/// Decided by `p` alone: with `Re p ≡ 0` the forward flow is a rotation whatever
/// the default `q` is, and there is nothing to extend.
fn conformal_only(cfg: &ScenarioConfig) -> bool {
    is_conformal_only(&cfg.p.spec(), &default_disk_grid(), &check_times(cfg), TOL_CONFORMAL)
}

/// Runs `command`, writes artifacts and the summary under `out`. Fatal module
/// errors become a failing summary with the error recorded.
pub fn run_pipeline(cfg: &ScenarioConfig, command: Command, out: &Path, opts: RunOptions) -> Result<Summary> {
    let start = Instant::now();
    let art = Artifacts::new(out, cfg.outputs.csv, cfg.outputs.svg)?;
    let mut run = Run { cfg, art, metrics: Map::new(), warnings: Vec::new(), pass: true, opts };
    let res = match command {
        Command::Evolve => evolve(&mut run),
        Command::Chain => chain(&mut run),
        Command::Range => range(&mut run),
        Command::Extend => extend(&mut run),
        Command::Becker => becker(&mut run),
        Command::Check => check(&mut run),
        Command::Approx => approx(&mut run),
    };
    let error = res.err().map(|e| format!("{e:#}"));
    let summary = Summary {
        scenario: cfg.name.clone(),
        command: command.name().into(),
        pass: run.pass && error.is_none(),
        metrics: run.metrics,
        warnings: run.warnings,
        error,
        artifacts: run.art.written,
        runtime_ms: if opts.deterministic { 0 } else { start.elapsed().as_millis() as u64 },
    };
    summary.write(&out.join(&cfg.outputs.summary))?;
    Ok(summary)
}

fn evolve(run: &mut Run) -> Result<()> {
    let cfg = run.cfg;
    let field = field_p(cfg)?;
    let opts = solver(cfg);
    let seeds = SeedGrid::polar(&cfg.grid.circles, cfg.grid.angles, false)?;
    let cps = cfg.time.checkpoints();
    let traj = solve_forward(&field, 0.0, &cps, &seeds, &opts)?;
    let mut rows = Vec::new();
    for (si, z) in seeds.points().iter().enumerate() {
        let trunc = traj.is_truncated(si);
        for (ti, t) in traj.times.iter().enumerate() {
            let (Some(v), Some(d)) = (traj.value(ti, si), traj.deriv(ti, si)) else { continue };
            rows.push((si, z.re, z.im, *t, v.re, v.im, d.re, d.im, trunc as u8));
        }
    }
    run.art.csv("trajectories.csv", &["seed_index", "re_z0", "im_z0", "t", "re_phi", "im_phi", "re_dphi", "im_dphi", "truncated_flag"], rows)?;
    run.put("seeds", json!(seeds.len()));
    run.put("truncated", json!(traj.truncated_count()));
    let t = cfg.time.t_end;
    if t > 0.0 {
        let sg = verify_semigroup(&field, 0.0, t / 2.0, t, &seeds, &opts)?;
        run.put("semigroup", json!({"s": 0.0, "u": t / 2.0, "t": t, "max_residual": sg.max_residual, "excluded": sg.excluded.len()}));
        run.require(sg.max_residual <= cfg.criteria.tol_semigroup, "semigroup residual within criteria.tol_semigroup");
    }
    let pairs: Vec<(usize, usize)> = (1..seeds.len()).map(|k| (k - 1, k)).collect();
    let sp = schwarz_pick_check(&traj, &pairs, 1e-9);
    run.put("schwarz_pick", json!({"worst_violation": sp.worst_violation, "checked": sp.checked, "pass": sp.pass}));
    run.require(sp.pass, "Schwarz–Pick contraction");
    run.put("max_modulus_increase", json!(max_modulus_increase(&traj)));
    let od = derivative_at_origin(&field, &cps, &opts)?;
    let mut origin = json!({
        "t": od.times,
        "abs_dphi": od.derivs.iter().map(|d| d.norm()).collect::<Vec<_>>(),
    });
    if let Some(q) = &od.quadrature {
        let err = od.derivs.iter().zip(q).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
        origin["quadrature_error"] = json!(err);
        run.require(err <= 1e-8, "φ'_{0,t}(0) against exp(−∫p(0,u)du)");
    }
    run.put("origin_derivative", origin);
    let mut svg = Svg::new(&format!("{}: trajectories", cfg.name));
    for si in 0..seeds.len() {
        let pts: Vec<Option<C64>> = (0..traj.times.len()).map(|ti| traj.value(ti, si)).collect();
        svg.path(&pts, false, &ramp(si as f64 / seeds.len() as f64), 1.0);
    }
    svg.path(&unit_circle(), true, "#888888", 0.5);
    run.art.svg("trajectories.svg", &svg)
}

fn unit_circle() -> Vec<Option<C64>> {
    (0..256).map(|j| Some(loewner_core::math::cis(std::f64::consts::TAU * j as f64 / 256.0))).collect()
}

fn trace_spec(cfg: &ScenarioConfig) -> TraceSpec {
    TraceSpec { delta: cfg.grid.delta_trace, n_theta: cfg.grid.theta_nodes, second_radius: false }
}

fn limit_config(cfg: &ScenarioConfig, field: &VectorField) -> ChainConfig {
    ChainConfig { tol_limit: cfg.criteria.tol_limit, verify_transition: true, ..ChainConfig { opts: chain_options_for(field), ..ChainConfig::doubling(cfg.criteria.t_infinity) } }
}

fn frames_csv(run: &mut Run, name: &str, frames: &ChainFrames) -> Result<()> {
    let mut rows = Vec::new();
    for (ti, t) in frames.checkpoints.iter().enumerate() {
        for (k, z) in frames.grid.points().iter().enumerate() {
            if let Some(v) = frames.values[ti][k] {
                rows.push((*t, k, z.re, z.im, v.re, v.im));
            }
        }
    }
    run.art.csv(name, &["checkpoint", "grid_point", "re_z", "im_z", "re_value", "im_value"], rows)
}

fn traces_svg(run: &mut Run, name: &str, frames: &ChainFrames, title: &str) -> Result<()> {
    let mut svg = Svg::new(title);
    let n = frames.checkpoints.len().max(2) - 1;
    for (i, row) in frames.trace().values.iter().enumerate() {
        svg.path(row, true, &ramp(i as f64 / n as f64), 1.0);
    }
    run.art.svg(name, &svg)
}

/// `t_end/2`, or the nearest point of `[0.1, t_end]` whose stencil window
/// clears every breakpoint (the PDE holds a.e., not across a jump of `τ`).
fn pde_center(t_end: f64, breaks: &[f64]) -> f64 {
    let clear = |t: f64| breaks.iter().all(|b| (b - t).abs() > PDE_CLEARANCE);
    let mid = (t_end / 2.0).max(0.1);
    (0..=200)
        .flat_map(|k| {
            let d = k as f64 * PDE_CLEARANCE / 2.0;
            [mid + d, mid - d]
        })
        .find(|t| *t >= 0.1 && clear(*t))
        .unwrap_or(mid)
}

/// Chain-PDE residual at `Δt = 0.01` on the limit frames, and the order under
/// `Δt` halving on fixed-horizon frames (`H = 2·t_max`, same PDE).
fn pde_study(run: &mut Run, field: &VectorField, limit_cfg: &ChainConfig) -> Result<()> {
    let cfg = run.cfg;
    let t0 = pde_center(cfg.time.t_end, field.discontinuities());
    let grid = SeedGrid::polar(&cfg.grid.circles, PDE_ANGLES, false)?;
    let shell = TraceSpec { n_theta: 8, ..trace_spec(cfg) };
    let lim = ChainConfig { verify_transition: false, ..limit_cfg.clone() };
    let (frames, _) = range_normalized_chain(field, &stencil_times(t0, PDE_DT[0], 2), &grid, &shell, &lim)?;
    let limit = verify_chain_pde(&frames, field)?;
    let mut fixed = Vec::new();
    for dt in PDE_DT {
        let ts = stencil_times(t0, dt, 2);
        let h = 2.0 * ts[ts.len() - 1];
        let fc = ChainConfig { opts: limit_cfg.opts, ..ChainConfig::fixed(h) };
        let (fr, _) = range_normalized_chain(field, &ts, &grid, &shell, &fc)?;
        fixed.push(verify_chain_pde(&fr, field)?.max_relative);
    }
    let at_noise = fixed[0] < PDE_NOISE;
    let order = (!at_noise).then(|| (fixed[0] / fixed[1]).log2());
    run.put(
        "pde",
        json!({
            "t0": t0,
            "dt": PDE_DT,
            "limit_horizon": frames.limit.as_ref().map(|d| d.horizon),
            "max_relative": limit.max_relative,
            "max_absolute": limit.max_absolute,
            "truncation_estimate": limit.truncation_estimate,
            "resolution_limited": limit.resolution_limited,
            "fixed_horizon_residuals": fixed,
            "order": order,
            "at_noise_floor": at_noise,
        }),
    );
    run.require(limit.max_relative <= cfg.criteria.tol_pde, "chain-PDE relative residual within criteria.tol_pde");
    if let Some(o) = order {
        run.require(o >= MIN_PDE_ORDER, "chain-PDE residual order ≥ 1.9 under Δt halving");
    } else {
        run.warnings.push("chain-PDE residual is at the rounding floor; no convergence order measured".into());
    }
    Ok(())
}

fn chain(run: &mut Run) -> Result<()> {
    let cfg = run.cfg;
    if cfg.time.t_end <= 0.0 {
        bail!("the chain command needs time.t_end > 0");
    }
    let field = field_p(cfg)?;
    let lc = limit_config(cfg, &field);
    let grid = SeedGrid::polar(&cfg.grid.circles, cfg.grid.angles, false)?;
    let cps = cfg.time.checkpoints();
    let (frames, ev) = range_normalized_chain(&field, &cps, &grid, &trace_spec(cfg), &lc)?;
    let diag = frames.limit.clone().expect("limit frames carry diagnostics");
    run.put(
        "limit",
        json!({"horizon": diag.horizon, "converged": diag.converged, "deltas": diag.deltas.iter().map(|(h, d)| json!([h, d])).collect::<Vec<_>>()}),
    );
    if !diag.converged {
        run.warnings.push(format!("chain limit not converged to {:e} by horizon {}", cfg.criteria.tol_limit, diag.horizon));
    }
    let (f0, d0) = normalization_error(&ev)?;
    run.put("normalization", json!({"abs_f0_0": f0, "abs_df0_0_minus_1": d0}));
    run.require(f0 <= cfg.criteria.tol_chain && d0 <= cfg.criteria.tol_chain, "f_0(0) = 0, f_0'(0) = 1");
    let tr = frames.transition_residual.unwrap_or(f64::NAN);
    run.put("transition_residual", json!(tr));
    run.require(tr <= cfg.criteria.tol_chain, "transition identity f_s = f_t ∘ φ_{s,t}");
    let cont = check_containment(&frames, 1e-9);
    run.put("containment", json!({"checked": cont.checked, "violations": cont.violations, "undecided": cont.undecided}));
    run.require(cont.pass, "range-normalized frames increase");
    let conformal = conformal_only(cfg);
    run.put("conformal_only", json!(conformal));
    if conformal {
        let rr = rotation_residual(&frames);
        run.put("rotation_residual", json!(rr));
        run.require(rr <= cfg.criteria.tol_rotation, "T = 0: frames coincide up to rotation");
    }
    frames_csv(run, "frames.csv", &frames)?;
    traces_svg(run, "traces.svg", &frames, &format!("{}: f_t traces", cfg.name))?;

    let fq = field_q(cfg)?;
    let dec = decreasing_chain(&fq, &cps, &grid, &trace_spec(cfg), &chain_options_for(&fq))?;
    let dcont = check_containment(&dec, 1e-9);
    run.put(
        "decreasing",
        json!({"containment_violations": dcont.violations, "lambda_diameter": lambda_diameter(&dec)}),
    );
    run.require(dcont.pass, "decreasing frames decrease");
    frames_csv(run, "decreasing.csv", &dec)?;
    traces_svg(run, "decreasing_traces.svg", &dec, &format!("{}: g_t traces", cfg.name))?;

    pde_study(run, &field, &lc)
}

fn range(run: &mut Run) -> Result<()> {
    let cfg = run.cfg;
    let field = field_p(cfg)?;
    let probes: Vec<C64> = (0..8).map(|j| loewner_core::math::cis(std::f64::consts::TAU * j as f64 / 8.0) * 0.5).collect();
    let horizons = ChainConfig::doubling(cfg.criteria.t_infinity).horizons;
    let rep = beta_limit(&field, &probes, &horizons, cfg.criteria.tol_beta, &chain_options_for(&field))?;
    let class = match rep.class {
        RangeClass::Plane => json!({"kind": "plane"}),
        RangeClass::Disk { radius } => json!({"kind": "disk", "radius": radius}),
        RangeClass::Inconclusive => json!({"kind": "inconclusive"}),
    };
    run.put("beta0", json!(rep.beta0));
    run.put("classification", class);
    run.put("extrapolated", json!(rep.extrapolated));
    run.put("horizon", json!(rep.horizon));
    run.put("probes", json!(rep.probes.iter().map(|(z, b)| json!({"z": cj(*z), "beta": b})).collect::<Vec<_>>()));
    if rep.extrapolated {
        run.warnings.push("β(0) extrapolated beyond the last horizon".into());
    }
    run.require(rep.class != RangeClass::Inconclusive, "range classification conclusive");
    run.art.csv("range.csv", &["horizon", "beta_origin"], rep.origin_history.iter().copied())
}

/// Dilatation target: the configured `k`, else the measured pair ratio.
fn target_k(cfg: &ScenarioConfig, p: &HerglotzSpec, q: &HerglotzSpec) -> Result<f64> {
    if let Some(k) = cfg.criteria.k {
        return Ok(k);
    }
    let r = check_pair(p, q, &default_disk_grid(), &check_times(cfg), 1.0 - 1e-12, cfg.criteria.tol_criterion)?;
    Ok(r.max_ratio)
}

fn atlas_csv(run: &mut Run, atlas: &ExtensionAtlas, row_name: &str) -> Result<()> {
    let mut rows = Vec::new();
    let z = |v: Option<C64>| v.map_or((f64::NAN, f64::NAN), |c| (c.re, c.im));
    for (i, r) in atlas.rows.iter().enumerate() {
        for (j, th) in atlas.thetas.iter().enumerate() {
            let (a, b) = z(atlas.source[i][j]);
            let (c, d) = z(atlas.target[i][j]);
            let (e, f) = z(atlas.mu_formula[i][j]);
            let (g, h) = z(atlas.mu_fd[i][j]);
            rows.push((*r, *th, a, b, c, d, e, f, g, h, atlas.mask[i][j] as u8));
        }
    }
    run.art.csv(
        "atlas.csv",
        &[row_name, "theta", "re_src", "im_src", "re_dst", "im_dst", "re_mu_f", "im_mu_f", "re_mu_fd", "im_mu_fd", "masked"],
        rows,
    )
}

fn atlas_svg(run: &mut Run, atlas: &ExtensionAtlas) -> Result<()> {
    let n = atlas.rows.len().max(2) - 1;
    let stride = (atlas.rows.len() / 16).max(1);
    for (name, grid) in [("atlas_source.svg", &atlas.source), ("atlas_target.svg", &atlas.target)] {
        let mut svg = Svg::new(&format!("{}: {}", run.cfg.name, name.trim_end_matches(".svg")));
        for (i, row) in grid.iter().enumerate().step_by(stride) {
            svg.path(row, true, &ramp(i as f64 / n as f64), 1.0);
        }
        run.art.svg(name, &svg)?;
    }
    Ok(())
}

fn dilatation_metrics(run: &mut Run, atlas: &ExtensionAtlas, k: f64) -> f64 {
    let rep = dilatation_report(atlas, k, run.cfg.criteria.tol_dilat);
    run.put(
        "dilatation",
        json!({
            "k": k,
            "max_mu_formula": rep.max_formula,
            "max_mu_fd": rep.max_fd,
            "agreement": rep.agreement,
            "fd_cells": rep.fd_cells,
            "masked_cells": rep.masked_cells,
            "unresolved_cells": rep.unresolved_cells,
            "sense_preserving": rep.sense_preserving,
        }),
    );
    if rep.unresolved_cells > 0 {
        run.warnings.push(format!(
            "{} atlas cells lie where the trace offset dominates the row step (boundary attracting point); μ_fd is not evaluated there",
            rep.unresolved_cells
        ));
    }
    run.put(
        "injectivity",
        json!({
            "threshold": atlas.injectivity.threshold,
            "colliding_nodes": atlas.injectivity.colliding_nodes,
            "fraction": atlas.injectivity.fraction,
            "min_separation": atlas.injectivity.min_separation,
        }),
    );
    run.put("coverage", json!(atlas.coverage));
    run.require(rep.pass, "max |μ| ≤ k + tol_dilat for both estimators");
    run.require(atlas.injectivity.fraction <= MAX_COLLISION_FRACTION, "atlas injectivity");
    if let Some(a) = rep.agreement {
        run.require(a <= run.cfg.criteria.tol_dilat, "μ_formula and μ_fd agree within tol_dilat");
    }
    rep.agreement.unwrap_or(f64::NAN)
}

fn skip_conformal(run: &mut Run) -> Result<()> {
    run.put("skipped", json!(true));
    run.put("conformal_only", json!(true));
    run.warnings.push(
        "extension skipped: p is purely imaginary (T = 0), so every φ_{s,t} is a rotation, the chain never grows and there is no boundary to extend across".into(),
    );
    Ok(())
}

fn extend(run: &mut Run) -> Result<()> {
    let cfg = run.cfg;
    if conformal_only(cfg) {
        return skip_conformal(run);
    }
    if cfg.time.t_end <= 0.0 {
        bail!("the extend command needs time.t_end > 0");
    }
    let fp = field_p(cfg)?;
    let fq = field_q(cfg)?;
    let k = target_k(cfg, &fp.p, &fq.p)?;
    let ev = ChainEvaluator::new(&fp, cfg.time.t_end, chain_options_for(&fp))?;
    let rows = linspace(0.0, cfg.time.t_end, cfg.grid.atlas_rows - 1);
    let atlas = build_extension(&ev, &fq, &rows, cfg.grid.theta_nodes, cfg.grid.delta_trace, &chain_options_for(&fq))?;
    if fp.tau.is_sampled() {
        run.warnings.push("τ is sampled: no closed-form μ; dilatation certified by μ_fd plus the approx command's convergence evidence".into());
    }
    dilatation_metrics(run, &atlas, k);
    if let Some(pf) = atlas.prefactor {
        run.put("prefactor_consistency", json!({"with_q_phase": pf.with_q_phase, "without_q_phase": pf.without_q_phase}));
    }
    atlas_csv(run, &atlas, "t")?;
    atlas_svg(run, &atlas)
}

fn becker(run: &mut Run) -> Result<()> {
    let cfg = run.cfg;
    if conformal_only(cfg) {
        return skip_conformal(run);
    }
    let field = field_p(cfg)?;
    if field.tau.constant_value() != Some(C64::new(0.0, 0.0)) {
        bail!("the Becker extension needs τ ≡ 0");
    }
    if cfg.time.t_end <= 0.0 {
        bail!("the becker command needs time.t_end > 0");
    }
    let grid = default_disk_grid();
    let times = check_times(cfg);
    let ratio = check_becker(&field.p, &grid, &times, 1.0 - 1e-12, cfg.criteria.tol_criterion)?;
    let k = cfg.criteria.k.unwrap_or(ratio.max_ratio);
    let r_max = grid.iter().map(|z| z.norm()).fold(0.0, f64::max);
    run.put("becker_ratio", json!({"max": ratio.max_ratio, "grid_r_max": r_max, "k_times_r_max": k * r_max}));
    run.require(ratio.max_ratio <= k + cfg.criteria.tol_criterion, "Becker ratio |p − 1|/|p + 1| ≤ k");
    let ev = ChainEvaluator::new(&field, cfg.time.t_end, chain_options_for(&field))?;
    let (n_rows, n_theta) = (cfg.grid.atlas_rows, cfg.grid.theta_nodes);
    let log_r = linspace(0.0, cfg.time.t_end, n_rows - 1);
    let atlas = becker_extension(&ev, &log_r, n_theta, cfg.grid.delta_trace)?;
    let coarse = dilatation_metrics(run, &atlas, k);
    let fine_atlas = becker_extension(&ev, &linspace(0.0, cfg.time.t_end, 2 * (n_rows - 1)), 2 * n_theta, cfg.grid.delta_trace)?;
    let fine = dilatation_report(&fine_atlas, k, cfg.criteria.tol_dilat).agreement.unwrap_or(f64::NAN);
    let at_noise = coarse < ATLAS_NOISE;
    let order = (!at_noise).then(|| (coarse / fine).log2());
    run.put("grid_doubling", json!({"agreement_coarse": coarse, "agreement_fine": fine, "order": order, "at_noise_floor": at_noise}));
    match order {
        Some(o) => run.require(o >= MIN_ATLAS_ORDER, "μ disagreement shrinks with order ≥ 1 under grid doubling"),
        None => run.warnings.push("μ estimators agree to rounding; no grid-doubling order measured".into()),
    }
    let inside = interior_atlas(&ev, &linspace(0.1, 0.9, n_rows - 1), n_theta)?;
    let irep = dilatation_report(&inside, 0.0, 0.01);
    run.put("interior_max_mu_fd", json!(irep.max_fd));
    run.require(irep.pass, "F = f_0 is conformal inside (max |μ_fd| ≤ 0.01)");
    run.put("continuity_gap", json!(becker_continuity(&ev, n_theta, cfg.grid.delta_trace)?));
    run.put("r_max", json!(cfg.time.t_end.exp()));
    atlas_csv(run, &atlas, "log_r")?;
    atlas_svg(run, &atlas)
}

fn check(run: &mut Run) -> Result<()> {
    let cfg = run.cfg;
    let grid = default_disk_grid();
    let times = check_times(cfg);
    let tol = cfg.criteria.tol_criterion;
    let p = cfg.p.spec();
    let q = cfg.q_or_default().spec();
    cfg.tau.spec().validate()?;
    for (name, spec) in [("p", &p), ("q", &q)] {
        let h = check_herglotz(spec, &grid, &times, 1e-12)?;
        let holo = check_holomorphic(spec, &grid, &times, loewner_core::herglotz::TOL_HOLO);
        run.put(&format!("herglotz_{name}"), json!({"min_re": h.min_re, "strict_margin": h.strict_margin, "isolated_failures": h.verdict.warnings.len()}));
        run.put(&format!("holomorphy_{name}"), json!(holo.max_residual));
        run.require(h.pass, &format!("Re {name} ≥ 0"));
        run.require(holo.pass, &format!("{name} holomorphic"));
        if !h.verdict.warnings.is_empty() {
            run.warnings.push(format!("Re {name} < 0 at {} isolated time node(s)", h.verdict.warnings.len()));
        }
    }
    let kk = cfg.criteria.k.unwrap_or(1.0 - 1e-12);
    let becker = check_becker(&p, &grid, &times, kk, tol)?;
    let pair = check_pair(&p, &q, &grid, &times, kk, tol)?;
    run.put("becker_ratio", json!(becker.max_ratio));
    run.put("pair_ratio", json!(pair.max_ratio));
    run.require(pair.pass, "pair inequality |p − q̄| ≤ k|p + q|");
    if cfg.tau.is_constant() && cfg.tau.spec().constant_value() == Some(C64::new(0.0, 0.0)) && cfg.q.is_none() {
        run.require(becker.pass, "Becker inequality |p − 1| ≤ k|p + 1|");
    }
    if let HerglotzDesc::Sector { k, .. } = &cfg.p {
        let bound = sector_bound(*k)?;
        run.put("sector_bound", json!(bound));
        run.require(pair.max_ratio <= bound + tol, "pair ratio within the sector bound");
    }
    run.put("k", json!(cfg.criteria.k));
    let t_zero = conformal_only(cfg);
    run.put("conformal_only", json!(t_zero));
    run.put("max_abs_re_p", json!(max_abs_real_part(&p, &grid, &times)));
    if t_zero {
        run.warnings.push("T = 0: p is purely imaginary; the evolution consists of rotations (conformal only)".into());
    }
    Ok(())
}

fn approx_table(rows: &[LevelRow], floor: f64) -> ConvergenceTable {
    let ns: Vec<f64> = rows.iter().map(|r| r.level as f64).collect();
    let es: Vec<f64> = rows.iter().map(|r| r.error).collect();
    let keep: Vec<usize> = (0..rows.len()).filter(|i| es[*i] > floor).collect();
    let pick = |v: &[f64]| keep.iter().map(|i| v[*i]).collect::<Vec<_>>();
    ConvergenceTable {
        order: fitted_slope(&pick(&ns), &pick(&es)).map(|s| -s),
        order_vs_deviation: fitted_slope(&pick(&rows.iter().map(|r| r.deviation).collect::<Vec<_>>()), &pick(&es)),
        monotone: es.windows(2).all(|w| w[1] < w[0] || (w[0] <= floor && w[1] <= floor)),
        noise_floor: floor,
        rows: rows.to_vec(),
    }
}

fn approx(run: &mut Run) -> Result<()> {
    let cfg = run.cfg;
    let a = &cfg.approx;
    let p = cfg.p.spec();
    let tau = cfg.tau.spec();
    let acfg = ApproxConfig {
        levels: a.levels.clone(),
        horizon: a.horizon,
        t_end: a.t_end,
        checkpoints: linspace(0.0, a.t_end, 8),
        ..ApproxConfig::default()
    };
    let t0 = Instant::now();
    let ef_ref = ef_reference(&p, &tau, &acfg)?;
    let ch_ref = chain_reference(&p, &tau, &acfg)?;
    let ref_ms = run.ms(t0);
    let mut ef_rows = Vec::new();
    let mut ch_rows = Vec::new();
    let mut csv_rows = Vec::new();
    for &n in &a.levels {
        let t0 = Instant::now();
        let e = ef_level(&p, &tau, n, &acfg, &ef_ref)?;
        let c = chain_level(&p, &tau, n, &acfg, &ch_ref)?;
        let ms = run.ms(t0);
        csv_rows.push((n, e.deviation, e.error, c.error, e.envelope, ms, e.error_dense, c.error_raw));
        ef_rows.push(e);
        ch_rows.push(c);
    }
    run.art.csv(
        "approx.csv",
        &["level_n", "deviation", "ef_error", "chain_error", "gronwall_envelope", "runtime_ms", "ef_error_dense", "chain_error_raw"],
        csv_rows,
    )?;
    let ef = approx_table(&ef_rows, acfg.noise_floor());
    let ch = approx_table(&ch_rows, 10.0 * chain_options().rtol);
    let last_ef = ef.rows.last().map_or(0.0, |r| r.error);
    let last_ch = ch.rows.last().map_or(0.0, |r| r.error);
    run.put(
        "ef",
        json!({"errors": ef.rows.iter().map(|r| r.error).collect::<Vec<_>>(), "dense_errors": ef.rows.iter().map(|r| r.error_dense).collect::<Vec<_>>(),
               "envelopes": ef.rows.iter().map(|r| r.envelope).collect::<Vec<_>>(), "within_envelope": ef.rows.iter().all(|r| r.within_envelope),
               "order": ef.order, "order_vs_deviation": ef.order_vs_deviation, "monotone": ef.monotone}),
    );
    run.put(
        "chain",
        json!({"errors": ch.rows.iter().map(|r| r.error).collect::<Vec<_>>(), "raw_errors": ch.rows.iter().map(|r| r.error_raw).collect::<Vec<_>>(),
               "order": ch.order, "monotone": ch.monotone}),
    );
    run.put("deviations", json!(ef.rows.iter().map(|r| r.deviation).collect::<Vec<_>>()));
    run.put("reference_ms", json!(ref_ms));
    run.require(ef.monotone, "evolution-family errors strictly decrease");
    run.require(ch.monotone, "chain errors strictly decrease");
    run.require(ef.rows.iter().all(|r| r.within_envelope), "evolution-family errors below the Gronwall envelope");
    run.require(last_ef <= cfg.criteria.tol_approx && last_ch <= cfg.criteria.tol_approx, "finest-level errors within criteria.tol_approx");

    // Deviation inequality: randomized samples plus the grid for every level.
    let mut rng = ChaCha8Rng::seed_from_u64(a.seed);
    let disk = |rng: &mut ChaCha8Rng| {
        let r = rng.random::<f64>().sqrt();
        loewner_core::math::cis(std::f64::consts::TAU * rng.random::<f64>()) * r
    };
    let samples: Vec<(C64, C64, C64, C64)> = (0..a.samples)
        .map(|_| {
            let pv = C64::new(3.0 * rng.random::<f64>(), 6.0 * rng.random::<f64>() - 3.0);
            (pv, disk(&mut rng), disk(&mut rng), disk(&mut rng))
        })
        .collect();
    let dev = deviation_samples(&samples)?;
    let grid = default_disk_grid();
    let dev_times = linspace(0.0, a.horizon, 64);
    let mut grid_ratio: f64 = 0.0;
    for &n in &a.levels {
        let tn = step_approximate(&tau, n, a.horizon)?.to_spec();
        grid_ratio = grid_ratio.max(field_deviation(&p, &tau, &tn, &grid, &dev_times)?.max_ratio);
    }
    run.put("deviation_inequality", json!({"samples": dev.samples, "within": dev.within, "max_ratio": dev.max_ratio, "grid_max_ratio": grid_ratio}));
    run.require(dev.pass(), "|G − G_n| ≤ 4|τ − τ_n||p| on every sample");
    if tau.constant_value().is_some() {
        run.warnings.push("τ is constant: every approximation level is exact".into());
    }
    Ok(())
}
