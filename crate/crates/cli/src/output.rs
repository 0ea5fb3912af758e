//! Result and manifest writers. Result numbers in CSV are serialized with
//! 17 significant digits so identical runs diff byte-identically; JSON uses
//! shortest-round-trip floats (also lossless).

use num_complex::Complex64;
use qweak_core::Operator;
use serde_json::{json, Value};
use std::io::Write;
use std::path::{Path, PathBuf};

use crate::error::CliResult;

/// 17 significant digits, round-trip safe.
pub fn fmt_f(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn complex_json(z: Complex64) -> Value {
    json!([z.re, z.im])
}

pub fn operator_json(op: &Operator) -> Value {
    let d = op.dim();
    let rows: Vec<Value> = (0..d)
        .map(|i| {
            Value::Array(
                (0..d)
                    .map(|j| complex_json(op.entries()[[i, j]]))
                    .collect(),
            )
        })
        .collect();
    json!({
        "dims": op.space().dims(),
        "entries": rows,
    })
}

#[derive(Clone, Debug)]
pub struct Check {
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

impl Check {
    pub fn new(name: &str, pass: bool, detail: String) -> Self {
        Self {
            name: name.to_string(),
            pass,
            detail,
        }
    }

    pub fn json(&self) -> Value {
        json!({ "name": self.name, "pass": self.pass, "detail": self.detail })
    }
}

pub fn write_json(dir: &Path, name: &str, value: &Value) -> CliResult<PathBuf> {
    let path = dir.join(name);
    let mut f = std::fs::File::create(&path)?;
    writeln!(f, "{}", serde_json::to_string_pretty(value).expect("json"))?;
    Ok(path)
}

/// Curve CSV: first column tau, one column per method; missing points are
/// empty cells.
pub fn write_curve_csv(
    dir: &Path,
    name: &str,
    taus: &[f64],
    columns: &[(&str, Vec<Option<f64>>)],
) -> CliResult<PathBuf> {
    let path = dir.join(name);
    let mut f = std::fs::File::create(&path)?;
    let header: Vec<&str> = std::iter::once("tau")
        .chain(columns.iter().map(|(n, _)| *n))
        .collect();
    writeln!(f, "{}", header.join(","))?;
    for (k, tau) in taus.iter().enumerate() {
        let mut row = vec![fmt_f(*tau)];
        for (_, col) in columns {
            row.push(col[k].map(fmt_f).unwrap_or_default());
        }
        writeln!(f, "{}", row.join(","))?;
    }
    Ok(path)
}

pub fn write_trajectory_csv(
    dir: &Path,
    name: &str,
    record: &qweak_core::TrajectoryRecord,
) -> CliResult<PathBuf> {
    let path = dir.join(name);
    let mut f = std::fs::File::create(&path)?;
    writeln!(f, "t,xw,jump")?;
    let mut jump_iter = record.jumps.iter().peekable();
    for (t, xw) in record.times.iter().zip(record.xw.iter()) {
        let jumped = jump_iter.peek().is_some_and(|&&j| (j - t).abs() < 1e-12);
        if jumped {
            jump_iter.next();
        }
        writeln!(f, "{},{},{}", fmt_f(*t), fmt_f(*xw), u8::from(jumped))?;
    }
    Ok(path)
}

/// The run manifest is written on every run, success or failure.
pub struct Manifest<'a> {
    pub command: &'a str,
    pub config_text: &'a str,
    pub wall_time_s: f64,
    pub checks: &'a [Check],
    pub error: Option<String>,
    pub outputs: &'a [PathBuf],
}

pub fn write_manifest(dir: &Path, m: &Manifest) -> std::io::Result<()> {
    std::fs::create_dir_all(dir)?;
    let value = json!({
        "artifact": {
            "name": "qweak",
            "version": env!("CARGO_PKG_VERSION"),
        },
        "command": m.command,
        "config": m.config_text,
        "wall_time_s": m.wall_time_s,
        "checks": m.checks.iter().map(Check::json).collect::<Vec<_>>(),
        "all_checks_pass": m.checks.iter().all(|c| c.pass),
        "error": m.error,
        "outputs": m.outputs.iter().map(|p| p.display().to_string()).collect::<Vec<_>>(),
    });
    let mut f = std::fs::File::create(dir.join("manifest.json"))?;
    writeln!(f, "{}", serde_json::to_string_pretty(&value).expect("json"))
}
