//! Result rows and their CSV encoding.

use std::collections::BTreeMap;
use std::fs;
use std::io::{self, Write};
use std::path::Path;

use crate::{BenchError, Result};

/// One measured quantity at one sweep point.
#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub experiment: String,
    pub parameters: BTreeMap<String, f64>,
    pub seed: Option<u64>,
    pub metric: String,
    pub value: f64,
    pub stderr: Option<f64>,
    /// Wall-clock seconds of the task that produced the row.
    pub runtime: f64,
}

impl ResultRow {
    /// `key=value` pairs joined by `;`, sorted by key, seed last.
    pub fn parameter_text(&self) -> String {
        let mut parts: Vec<String> =
            self.parameters.iter().map(|(k, v)| format!("{k}={}", format_value(*v))).collect();
        if let Some(s) = self.seed {
            parts.push(format!("seed={s}"));
        }
        parts.join(";")
    }

    /// Parameter lookup that also answers `seed`.
    pub fn param(&self, key: &str) -> Option<f64> {
        if key == "seed" {
            return self.seed.map(|s| s as f64);
        }
        self.parameters.get(key).copied()
    }
}

pub const HEADER: [&str; 5] = ["experiment", "parameters", "metric", "value", "stderr"];

/// Shortest round-trip decimal, in exponent form outside `[1e-5, 1e16)`,
/// `inf`/`-inf` for infinities.
pub fn format_value(v: f64) -> String {
    if v == f64::INFINITY {
        "inf".into()
    } else if v == f64::NEG_INFINITY {
        "-inf".into()
    } else if v == 0.0 || (1e-5..1e16).contains(&v.abs()) {
        v.to_string()
    } else {
        format!("{v:e}")
    }
}

fn field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// Header plus one line per row. Runtimes are appended as a sixth column
/// only when `timings` is set, since they break byte-for-byte determinism.
pub fn write_csv<W: Write>(rows: &[ResultRow], timings: bool, mut w: W) -> io::Result<()> {
    let mut header = HEADER.join(",");
    if timings {
        header.push_str(",runtime_s");
    }
    writeln!(w, "{header}")?;
    for r in rows {
        let stderr = r.stderr.map(format_value).unwrap_or_default();
        write!(
            w,
            "{},{},{},{},{}",
            field(&r.experiment),
            field(&r.parameter_text()),
            field(&r.metric),
            format_value(r.value),
            stderr
        )?;
        if timings {
            write!(w, ",{:.3}", r.runtime)?;
        }
        writeln!(w)?;
    }
    Ok(())
}

/// Write to a temporary file next to `path`, then rename over it.
pub fn write_csv_atomic(path: &Path, rows: &[ResultRow], timings: bool) -> Result<()> {
    let name = path
        .file_name()
        .ok_or_else(|| BenchError::Config(format!("output path {} has no file name", path.display())))?;
    let tmp = path.with_file_name(format!(".{}.tmp{}", name.to_string_lossy(), std::process::id()));
    let result = (|| {
        let mut file = io::BufWriter::new(fs::File::create(&tmp)?);
        write_csv(rows, timings, &mut file)?;
        file.into_inner().map_err(|e| e.into_error())?.sync_all()?;
        fs::rename(&tmp, path)
    })();
    if let Err(e) = result {
        let _ = fs::remove_file(&tmp);
        return Err(BenchError::io(path, e));
    }
    Ok(())
}
