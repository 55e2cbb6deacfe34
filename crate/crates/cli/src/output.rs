//! Artifact emission: CSV tables, SVG curve plots and the JSON summary.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use loewner_core::C64;
use serde::Serialize;
use serde_json::{Map, Value};

/// Output directory plus the switches from the `outputs` section.
pub struct Artifacts {
    pub dir: PathBuf,
    pub csv: bool,
    pub svg: bool,
    pub written: Vec<String>,
}

impl Artifacts {
    pub fn new(dir: &Path, csv: bool, svg: bool) -> Result<Self> {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        Ok(Artifacts { dir: dir.to_path_buf(), csv, svg, written: Vec::new() })
    }

    pub fn csv<R: Serialize>(&mut self, name: &str, header: &[&str], rows: impl IntoIterator<Item = R>) -> Result<()> {
        if !self.csv {
            return Ok(());
        }
        let path = self.dir.join(name);
        let mut w = csv::WriterBuilder::new().has_headers(false).from_path(&path).with_context(|| format!("writing {}", path.display()))?;
        w.write_record(header)?;
        for r in rows {
            w.serialize(r)?;
        }
        w.flush()?;
        self.written.push(name.to_string());
        Ok(())
    }

    pub fn svg(&mut self, name: &str, doc: &Svg) -> Result<()> {
        if !self.svg {
            return Ok(());
        }
        let path = self.dir.join(name);
        fs::write(&path, doc.render()).with_context(|| format!("writing {}", path.display()))?;
        self.written.push(name.to_string());
        Ok(())
    }
}

/// Time colour ramp from blue (`u = 0`) to red (`u = 1`).
pub fn ramp(u: f64) -> String {
    let u = u.clamp(0.0, 1.0);
    let r = (40.0 + 215.0 * u).round() as u8;
    let b = (255.0 - 215.0 * u).round() as u8;
    format!("#{r:02x}40{b:02x}")
}

/// Polylines in the complex plane, fitted to a square viewport.
#[derive(Default)]
pub struct Svg {
    paths: Vec<(Vec<C64>, bool, String, f64)>,
    title: String,
}

impl Svg {
    pub fn new(title: &str) -> Self {
        Svg { paths: Vec::new(), title: title.into() }
    }

    /// Adds a polyline; non-finite points split it.
    pub fn path(&mut self, pts: &[Option<C64>], closed: bool, colour: &str, width: f64) {
        let mut run = Vec::new();
        let complete = pts.iter().all(|p| p.is_some_and(|z| z.re.is_finite() && z.im.is_finite()));
        for p in pts {
            match p {
                Some(z) if z.re.is_finite() && z.im.is_finite() => run.push(*z),
                _ => {
                    if run.len() > 1 {
                        self.paths.push((std::mem::take(&mut run), false, colour.into(), width));
                    }
                    run.clear();
                }
            }
        }
        if run.len() > 1 {
            self.paths.push((run, closed && complete, colour.into(), width));
        }
    }

    pub fn render(&self) -> String {
        const SIZE: f64 = 800.0;
        const PAD: f64 = 20.0;
        let pts = self.paths.iter().flat_map(|p| p.0.iter());
        let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
        for z in pts {
            x0 = x0.min(z.re);
            x1 = x1.max(z.re);
            y0 = y0.min(z.im);
            y1 = y1.max(z.im);
        }
        if !x0.is_finite() {
            (x0, x1, y0, y1) = (-1.0, 1.0, -1.0, 1.0);
        }
        let span = (x1 - x0).max(y1 - y0).max(1e-12);
        let scale = (SIZE - 2.0 * PAD) / span;
        let mut out = String::new();
        let _ = writeln!(out, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{SIZE}" height="{SIZE}" viewBox="0 0 {SIZE} {SIZE}">"#);
        let _ = writeln!(out, "<title>{}</title>", escape(&self.title));
        let _ = writeln!(out, r#"<rect width="100%" height="100%" fill="white"/>"#);
        for (pts, closed, colour, width) in &self.paths {
            let mut d = String::new();
            for (i, z) in pts.iter().enumerate() {
                let x = PAD + (z.re - x0) * scale;
                let y = SIZE - PAD - (z.im - y0) * scale;
                let _ = write!(d, "{}{x:.2},{y:.2}", if i == 0 { "M" } else { " L" });
            }
            if *closed {
                d.push_str(" Z");
            }
            let _ = writeln!(out, r#"<path d="{d}" fill="none" stroke="{colour}" stroke-width="{width}"/>"#);
        }
        out.push_str("</svg>\n");
        out
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// `{scenario, command, pass, metrics, warnings, runtime_ms}` plus the failure
/// record and the list of written artifacts.
#[derive(Debug, Clone, Serialize)]
pub struct Summary {
    pub scenario: String,
    pub command: String,
    pub pass: bool,
    pub metrics: Map<String, Value>,
    pub warnings: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub artifacts: Vec<String>,
    pub runtime_ms: u64,
}

impl Summary {
    pub fn metric(&self, key: &str) -> Option<&Value> {
        key.split('.').try_fold(None::<&Value>, |acc, k| match acc {
            None => self.metrics.get(k).map(Some),
            Some(Value::Object(m)) => m.get(k).map(Some),
            Some(_) => None,
        })?
    }

    pub fn f64(&self, key: &str) -> Option<f64> {
        self.metric(key).and_then(Value::as_f64)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)? + "\n";
        fs::write(path, text).with_context(|| format!("writing {}", path.display()))
    }
}
