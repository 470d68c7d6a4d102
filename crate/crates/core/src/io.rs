//! File formats: measures and reports as JSON, fields as CSV with full
//! f64 precision (17 significant digits, so round trips are exact), and
//! parameter files as flat `key = value` text mirroring the ParamSet field
//! names.

use crate::criteria::ParamSet;
use crate::error::{Result, WolffError};
use crate::field::{Field, SampleSet};
use crate::measure::Measure;
use crate::potential::Truncation;
use std::collections::BTreeMap;
use std::path::Path;

pub fn load_measure(path: &Path) -> Result<Measure> {
    let text = std::fs::read_to_string(path)?;
    let m: Measure = serde_json::from_str(&text)?;
    Ok(m)
}

pub fn save_measure(path: &Path, mu: &Measure) -> Result<()> {
    std::fs::write(path, serde_json::to_string_pretty(mu)?)?;
    Ok(())
}

/// Full-precision float formatting: 17 significant digits round-trip f64.
pub fn fmt_f64(x: f64) -> String {
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    format!("{x:.16e}")
}

pub fn parse_f64(s: &str) -> Option<f64> {
    match s.trim() {
        "inf" => Some(f64::INFINITY),
        "-inf" => Some(f64::NEG_INFINITY),
        t => t.parse().ok(),
    }
}

/// Field to CSV: coordinate columns then the value column.
pub fn field_to_csv(field: &Field) -> String {
    let dim = match &field.samples {
        SampleSet::Grid { grid } => grid.dim(),
        SampleSet::Scattered { points } => points.first().map_or(0, |p| p.len()),
    };
    let mut out = String::new();
    for a in 0..dim {
        out.push_str(&format!("x{a},"));
    }
    out.push_str("value\n");
    for i in 0..field.samples.len() {
        let p = field.samples.point(i);
        for c in &p {
            out.push_str(&fmt_f64(*c));
            out.push(',');
        }
        out.push_str(&fmt_f64(field.values[i]));
        out.push('\n');
    }
    out
}

pub fn save_field_csv(path: &Path, field: &Field) -> Result<()> {
    std::fs::write(path, field_to_csv(field))?;
    Ok(())
}

/// Flat `key = value` parameter text; `#` starts a comment.
pub fn parse_kv(text: &str) -> Result<BTreeMap<String, String>> {
    let mut map = BTreeMap::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            return Err(WolffError::Config {
                field: format!("line {}", lineno + 1),
                reason: format!("expected `key = value`, got `{line}`"),
            });
        };
        map.insert(k.trim().to_string(), v.trim().trim_matches('"').to_string());
    }
    Ok(map)
}

fn kv_f64(map: &BTreeMap<String, String>, key: &str) -> Result<f64> {
    let raw = map.get(key).ok_or_else(|| WolffError::Config {
        field: key.to_string(),
        reason: "missing".into(),
    })?;
    parse_f64(raw).ok_or_else(|| WolffError::Config {
        field: key.to_string(),
        reason: format!("not a number: `{raw}`"),
    })
}

/// ParamSet from parameter text with keys N, p, q1, q2, alpha, beta, R.
pub fn params_from_text(text: &str) -> Result<ParamSet> {
    let map = parse_kv(text)?;
    let n = kv_f64(&map, "N")?;
    if !(n >= 1.0 && n <= 6.0 && n.fract() == 0.0) {
        return Err(WolffError::Config { field: "N".into(), reason: "need an integer 1..=6".into() });
    }
    let radius = Truncation::from_value(kv_f64(&map, "R")?);
    ParamSet::new(
        n as usize,
        kv_f64(&map, "p")?,
        kv_f64(&map, "q1")?,
        kv_f64(&map, "q2")?,
        kv_f64(&map, "alpha")?,
        kv_f64(&map, "beta")?,
        radius,
    )
}

pub fn params_to_text(ps: &ParamSet) -> String {
    format!(
        "N = {}\np = {}\nq1 = {}\nq2 = {}\nalpha = {}\nbeta = {}\nR = {}\n",
        ps.n_dim,
        fmt_f64(ps.p),
        fmt_f64(ps.q1),
        fmt_f64(ps.q2),
        fmt_f64(ps.alpha),
        fmt_f64(ps.beta),
        fmt_f64(ps.radius.value()),
    )
}
