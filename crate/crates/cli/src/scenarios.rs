//! Built-in scenarios: constant, step and measurable `τ`, plus the radial,
//! chordal, rotation, Becker and sector regimes.

use std::f64::consts::FRAC_PI_2;

use crate::config::{Cx, HerglotzDesc, PieceDesc, ProfileDesc, ScenarioConfig, TauDesc};

pub const NAMES: [&str; 7] = ["exponential", "chordal-constant", "rotation", "becker-k", "sector-k", "measurable-tau", "step-tau"];

/// Default `k` of the parametrized scenarios.
pub const DEFAULT_BECKER_K: f64 = 0.5;
/// Sector opening giving pair ratio `sin(π/6) = 1/2`.
pub const DEFAULT_SECTOR_K: f64 = 1.0 / 3.0;

pub fn becker_p(k: f64) -> HerglotzDesc {
    HerglotzDesc::RationalTable {
        pieces: vec![PieceDesc { start: 0.0, num: vec![Cx::Re(1.0), Cx::Re(k)], den: vec![Cx::Re(1.0), Cx::Re(-k)] }],
    }
}

/// `p = e^{ikπ/2}·(1 + t/2)`: values on the edge of the sector `|arg w| ≤ kπ/2`.
pub fn sector_p(k: f64) -> HerglotzDesc {
    let (s, c) = (k * FRAC_PI_2).sin_cos();
    let table = [0.0, 1.0, 2.0, 4.0].iter().map(|t| [*t, c * (1.0 + t / 2.0), s * (1.0 + t / 2.0)]).collect();
    HerglotzDesc::Sector { k, profile: ProfileDesc::Table { table } }
}

/// Built-in scenario by name; `k` parametrizes `becker-k` and `sector-k`.
pub fn builtin(name: &str, k: Option<f64>) -> Option<ScenarioConfig> {
    let one = HerglotzDesc::constant(1.0, 0.0);
    let zero = TauDesc::constant(0.0, 0.0);
    let cfg = match name {
        "exponential" => ScenarioConfig::new(name, one, zero),
        "chordal-constant" => {
            let mut c = ScenarioConfig::new(name, one, TauDesc::constant(1.0, 0.0));
            c.time.t_end = 4.0;
            c
        }
        "rotation" => ScenarioConfig::new(name, HerglotzDesc::constant(0.0, 1.0), zero),
        "becker-k" => {
            let k = k.unwrap_or(DEFAULT_BECKER_K);
            let mut c = ScenarioConfig::new(name, becker_p(k), zero);
            c.criteria.k = Some(k);
            c
        }
        "sector-k" => {
            let k = k.unwrap_or(DEFAULT_SECTOR_K);
            let mut c = ScenarioConfig::new(name, sector_p(k), zero);
            c.q = Some(sector_p(k));
            c.criteria.k = Some((k * FRAC_PI_2).sin());
            c
        }
        "measurable-tau" => ScenarioConfig::new(name, one, TauDesc::Saturating { target: Cx::Re(1.0) }),
        "step-tau" => ScenarioConfig::new(name, one, TauDesc::Step { breakpoints: vec![1.0], values: vec![Cx::Re(0.0), Cx::Pair([0.0, 0.5])] }),
        _ => return None,
    };
    Some(cfg)
}
