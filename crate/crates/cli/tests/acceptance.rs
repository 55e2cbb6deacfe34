//! One pass/fail line per acceptance criterion. Runs the library directly (no
//! subprocess) so timings measure the computation, not process start-up.

use std::process::ExitCode;
use std::time::Instant;

use loewner_cli::{run_pipeline, scenarios, Command, RunOptions, ScenarioConfig, Summary};
use loewner_core::chains::{decreasing_chain, range_normalized_chain, ChainConfig, TraceSpec};
use loewner_core::evolution::{derivative_at_origin, solve_forward, verify_semigroup, SeedGrid};
use loewner_core::herglotz::{assemble_field, sector_bound, DenjoyWolffSpec, HerglotzSpec, VectorField};
use loewner_core::math::linspace;
use loewner_core::ode::SolverOptions;
use loewner_core::C64;
use serde_json::Value;

type Check = Result<(bool, String), String>;

fn scenario(name: &str) -> ScenarioConfig {
    scenarios::builtin(name, None).unwrap_or_else(|| panic!("missing scenario {name}"))
}

fn run(name: &str, command: Command) -> Result<Summary, String> {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let s = run_pipeline(&scenario(name), command, dir.path(), RunOptions::default()).map_err(|e| format!("{e:#}"))?;
    match &s.error {
        Some(e) => Err(format!("{name} {}: {e}", command.name())),
        None => Ok(s),
    }
}

fn num(s: &Summary, path: &[&str]) -> Result<f64, String> {
    let mut v: &Value = s.metrics.get(path[0]).ok_or_else(|| format!("no metric {}", path[0]))?;
    for key in &path[1..] {
        v = v.get(*key).ok_or_else(|| format!("no metric {}", path.join(".")))?;
    }
    v.as_f64().ok_or_else(|| format!("metric {} is not a number", path.join(".")))
}

fn nums(s: &Summary, path: &[&str]) -> Result<Vec<f64>, String> {
    let mut v: &Value = s.metrics.get(path[0]).ok_or_else(|| format!("no metric {}", path[0]))?;
    for key in &path[1..] {
        v = v.get(*key).ok_or_else(|| format!("no metric {}", path.join(".")))?;
    }
    v.as_array()
        .and_then(|a| a.iter().map(Value::as_f64).collect())
        .ok_or_else(|| format!("metric {} is not a number list", path.join(".")))
}

fn field(p: HerglotzSpec, re: f64, im: f64) -> VectorField {
    assemble_field(p, DenjoyWolffSpec::constant(re, im)).unwrap()
}

fn seeds64() -> SeedGrid {
    SeedGrid::polar(&[0.2, 0.4, 0.6, 0.8], 16, false).unwrap()
}

/// Worst `|computed − exact(t, z)|` over a `[checkpoint][seed]` table.
fn worst(times: &[f64], grid: &SeedGrid, value: impl Fn(usize, usize) -> Option<C64>, exact: impl Fn(f64, C64) -> C64) -> f64 {
    let mut w: f64 = 0.0;
    for (ti, &t) in times.iter().enumerate() {
        for (si, &z) in grid.points().iter().enumerate() {
            w = w.max(value(ti, si).map_or(f64::INFINITY, |v| (v - exact(t, z)).norm()));
        }
    }
    w
}

fn exponential_oracle() -> Check {
    let start = Instant::now();
    let f = field(HerglotzSpec::constant(1.0, 0.0), 0.0, 0.0);
    let grid = seeds64();
    let times = linspace(0.0, 4.0, 9);
    let opts = SolverOptions::with_tol(1e-12).relative();
    let tr = solve_forward(&f, 0.0, &times, &grid, &opts).map_err(|e| e.to_string())?;
    let phi = worst(&times, &grid, |t, s| tr.value(t, s), |t, z| z * (-t).exp());
    let (chain, _) = range_normalized_chain(&f, &times, &grid, &TraceSpec::default(), &ChainConfig::doubling(64.0)).map_err(|e| e.to_string())?;
    // f_t grows like e^t: compare relative to |f_t(z)|.
    let ft = worst(&times, &grid, |t, s| chain.values[t][s].map(|v| v * (-times[t]).exp()), |_, z| z);
    let dec = decreasing_chain(&f, &times, &grid, &TraceSpec::default(), &opts).map_err(|e| e.to_string())?;
    let gt = worst(&times, &grid, |t, s| dec.values[t][s], |t, z| z * (-t).exp());
    let range = run("exponential", Command::Range)?;
    let beta = num(&range, &["beta0"])?;
    let plane = range.metrics["classification"]["kind"] == "plane";
    let secs = start.elapsed().as_secs_f64();
    let pass = phi <= 1e-8 && ft <= 1e-8 && gt <= 1e-8 && beta <= 1e-8 && plane && secs < 5.0;
    Ok((pass, format!("|φ−e^(−t)z| {phi:.1e}, |e^(−t)f_t−z| {ft:.1e}, |g_t−e^(−t)z| {gt:.1e}, β(0) {beta:.1e}, plane {plane}, {secs:.2} s")))
}

fn chordal_oracle() -> Check {
    let start = Instant::now();
    let f = field(HerglotzSpec::constant(1.0, 0.0), 1.0, 0.0);
    let grid = seeds64();
    let times = linspace(0.0, 4.0, 17);
    let tr = solve_forward(&f, 0.0, &times, &grid, &SolverOptions::with_tol(1e-12)).map_err(|e| e.to_string())?;
    let one = C64::new(1.0, 0.0);
    let err = worst(&times, &grid, |t, s| tr.value(t, s), |t, z| one + (z - one) / (one - (z - one) * t));
    let range = run("chordal-constant", Command::Range)?;
    let beta = num(&range, &["beta0"])?;
    let plane = range.metrics["classification"]["kind"] == "plane";
    let secs = start.elapsed().as_secs_f64();
    let pass = err <= 1e-8 && beta <= 1e-6 && plane && secs < 10.0;
    Ok((pass, format!("max error {err:.1e} on 64 seeds, t ≤ 4; β(0) {beta:.1e}, plane {plane}, {secs:.2} s")))
}

fn semigroup() -> Check {
    let mut parts = Vec::new();
    let mut pass = true;
    for name in scenarios::NAMES {
        let cfg = scenario(name);
        let f = assemble_field(cfg.p.spec(), cfg.tau.spec()).map_err(|e| e.to_string())?;
        let rep = verify_semigroup(&f, 0.0, 1.0, 2.0, &seeds64(), &SolverOptions::with_tol(1e-9)).map_err(|e| e.to_string())?;
        pass &= rep.max_residual <= 1e-6 && rep.excluded.len() < 64;
        parts.push(format!("{name} {:.1e}", rep.max_residual));
    }
    Ok((pass, parts.join(", ")))
}

fn becker() -> Check {
    let s = run("becker-k", Command::Becker)?;
    let ratio = num(&s, &["becker_ratio", "max"])?;
    let target = num(&s, &["becker_ratio", "k_times_r_max"])?;
    let formula = num(&s, &["dilatation", "max_mu_formula"])?;
    let fd = num(&s, &["dilatation", "max_mu_fd"])?;
    let agree = num(&s, &["dilatation", "agreement"])?;
    let order = num(&s, &["grid_doubling", "order"]).unwrap_or(f64::NAN);
    let pass = (ratio - target).abs() <= 1e-6 && formula <= 0.52 && fd <= 0.52 && agree <= 0.02 && order >= 1.0;
    Ok((pass, format!("ratio {ratio:.9} vs 0.5·r_max {target:.9}; max|μ| formula {formula:.4}, fd {fd:.4}; agreement {agree:.1e}; order {order:.2}")))
}

fn sector() -> Check {
    let s = run("sector-k", Command::Check)?;
    let ratio = num(&s, &["pair_ratio"])?;
    let bound = sector_bound(1.0 / 3.0).map_err(|e| e.to_string())?;
    let sin = (std::f64::consts::PI / 6.0).sin();
    let pass = (ratio - sin).abs() <= 1e-6 && (bound - sin).abs() <= 1e-12;
    Ok((pass, format!("pair ratio {ratio:.12}, sector_bound(1/3) {bound:.12}")))
}

fn deviation() -> Check {
    let s = run("measurable-tau", Command::Approx)?;
    let n = num(&s, &["deviation_inequality", "samples"])?;
    let within = num(&s, &["deviation_inequality", "within"])?;
    let pass = n >= 1e4 && within == n;
    Ok((pass, format!("{within} of {n} samples within 4|τ−τ_n||p|")))
}

fn sci(v: &[f64]) -> String {
    let parts: Vec<String> = v.iter().map(|x| format!("{x:.1e}")).collect();
    format!("[{}]", parts.join(", "))
}

fn strictly_decreasing(v: &[f64]) -> bool {
    v.windows(2).all(|w| w[1] < w[0])
}

fn approx() -> Check {
    let start = Instant::now();
    let cfg = scenario("measurable-tau");
    let s = run("measurable-tau", Command::Approx)?;
    let secs = start.elapsed().as_secs_f64();
    let ef = nums(&s, &["ef", "errors"])?;
    let env = nums(&s, &["ef", "envelopes"])?;
    let ch = nums(&s, &["chain", "errors"])?;
    let levels = cfg.approx.levels.clone();
    let below = ef.iter().zip(&env).all(|(e, g)| e <= g);
    let pass = levels == [4, 8, 16, 32]
        && strictly_decreasing(&ef)
        && strictly_decreasing(&ch)
        && ef.last().is_some_and(|e| *e <= 1e-3)
        && ch.last().is_some_and(|e| *e <= 1e-3)
        && below
        && secs < 60.0;
    Ok((pass, format!("levels {levels:?}; ef {}; chain {}; below envelope {below}; {secs:.1} s", sci(&ef), sci(&ch))))
}

fn pde() -> Check {
    let mut parts = Vec::new();
    let mut pass = true;
    for name in ["becker-k", "chordal-constant"] {
        let r_max = scenario(name).grid.circles.iter().copied().fold(0.0, f64::max);
        let s = run(name, Command::Chain)?;
        let rel = num(&s, &["pde", "max_relative"])?;
        let fixed = nums(&s, &["pde", "fixed_horizon_residuals"])?;
        let order = num(&s, &["pde", "order"]).unwrap_or(f64::NAN);
        pass &= r_max <= 0.8 && rel <= 1e-3 && fixed[0] <= 1e-3 && order >= 1.9;
        parts.push(format!("{name}: residual {rel:.1e} (fixed horizon {:.1e}), order {order:.2}", fixed[0]));
    }
    Ok((pass, parts.join("; ")))
}

fn decay_law() -> Check {
    let times = linspace(0.0, 8.0, 33);
    let opts = SolverOptions::with_tol(1e-12).relative();
    let mut parts = Vec::new();
    let mut pass = true;
    for (name, p) in [("p ≡ 1", HerglotzSpec::constant(1.0, 0.0)), ("Becker k = 0.5", HerglotzSpec::becker(0.5))] {
        let od = derivative_at_origin(&field(p, 0.0, 0.0), &times, &opts).map_err(|e| e.to_string())?;
        let err = od.times.iter().zip(&od.derivs).map(|(t, d)| (d.norm() - (-t).exp()).abs()).fold(0.0, f64::max);
        pass &= err <= 1e-8;
        parts.push(format!("{name}: {err:.1e}"));
    }
    Ok((pass, format!("max ||φ'_(0,t)(0)| − e^(−t)| up to t = 8: {}", parts.join(", "))))
}

fn rotation() -> Check {
    let check = run("rotation", Command::Check)?;
    let conformal = check.metrics["conformal_only"] == true;
    let mut skipped = true;
    for cmd in [Command::Extend, Command::Becker] {
        let s = run("rotation", cmd)?;
        skipped &= s.pass && s.metrics["skipped"] == true && s.warnings.iter().any(|w| w.contains("skipped"));
    }
    let chain = run("rotation", Command::Chain)?;
    let rr = num(&chain, &["rotation_residual"])?;
    let pass = conformal && skipped && rr <= 1e-9;
    Ok((pass, format!("conformal-only {conformal}, extension skipped with explanation {skipped}, rotation residual {rr:.1e}")))
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Check); 10] = [
        ("exponential oracle", exponential_oracle),
        ("chordal Riccati oracle", chordal_oracle),
        ("semigroup axiom", semigroup),
        ("Becker dilatation", becker),
        ("pair / sector consistency", sector),
        ("deviation inequality", deviation),
        ("approximation lemma", approx),
        ("chain-PDE residual", pde),
        ("range decay law", decay_law),
        ("degenerate detection", rotation),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let (pass, detail) = f().unwrap_or_else(|e| (false, format!("error: {e}")));
        failed += usize::from(!pass);
        println!("criterion {:>2} {} {name}: {detail}", i + 1, if pass { "PASS" } else { "FAIL" });
    }
    println!("acceptance: {} of {} criteria pass", criteria.len() - failed, criteria.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
