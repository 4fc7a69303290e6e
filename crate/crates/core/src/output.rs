//! CSV tables with `#` metadata lines, and JSON sidecars.
//!
//! Layout of a table file:
//!
//! ```text
//! # key: value
//! # ...
//! col_a,col_b,...
//! 1.0000000000000000e0,...
//! ```
//!
//! Values are written with 17 significant digits so that a read gives back the
//! same bits. Non-finite values are written as `nan`, `inf` and `-inf`.

use crate::{Error, Result};
use serde::Serialize;
use std::fmt::Write as _;
use std::path::Path;

/// Column sets the scenarios emit, as read by the plotting tool.
pub mod schema {
    pub const TRACE: [&str; 5] = ["k_bt_over_wc", "t_over_Tc", "fidelity", "log_negativity", "mean_n"];
    pub const SWEEP_TAIL: [&str; 4] = ["xi", "fidelity", "max_trace_drift", "ok"];
    pub const NOISE_COMPARISON: [&str; 4] = ["kappa_nbar_over_wc", "xi_uncorrelated", "xi_correlated", "ratio"];
    pub const JITTER: [&str; 4] = ["nbar", "kappa_nbar_over_wc", "xi_window", "xi_point"];
    pub const SPLITTING: [&str; 4] = ["omega_q_over_wc", "xi_aligned", "xi_dfs", "xi_closed_form"];
    pub const GATE_MAP: [&str; 4] = ["kappa_nbar_over_wc", "gamma_over_wc", "avg_gate_error", "ent_infidelity"];
}

#[derive(Clone, Debug, PartialEq)]
pub struct CsvTable {
    pub metadata: Vec<(String, String)>,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

pub fn format_value(v: f64) -> String {
    if v.is_nan() {
        "nan".into()
    } else if v.is_infinite() {
        if v > 0.0 { "inf".into() } else { "-inf".into() }
    } else {
        format!("{v:.16e}")
    }
}

fn parse_value(s: &str) -> Option<f64> {
    match s {
        "nan" => Some(f64::NAN),
        "inf" => Some(f64::INFINITY),
        "-inf" => Some(f64::NEG_INFINITY),
        _ => s.parse().ok(),
    }
}

impl CsvTable {
    pub fn new(columns: &[&str]) -> Self {
        CsvTable { metadata: Vec::new(), columns: columns.iter().map(|s| s.to_string()).collect(), rows: Vec::new() }
    }

    pub fn meta(&mut self, key: &str, value: impl Into<String>) -> &mut Self {
        self.metadata.push((key.to_string(), value.into()));
        self
    }

    pub fn push(&mut self, row: Vec<f64>) -> Result<()> {
        if row.len() != self.columns.len() {
            return Err(Error::LayoutMismatch(format!("row has {} values for {} columns", row.len(), self.columns.len())));
        }
        self.rows.push(row);
        Ok(())
    }

    pub fn column(&self, name: &str) -> Result<Vec<f64>> {
        let k = self
            .columns
            .iter()
            .position(|c| c == name)
            .ok_or_else(|| Error::InvalidConfig(format!("missing column `{name}`")))?;
        Ok(self.rows.iter().map(|r| r[k]).collect())
    }

    pub fn render(&self) -> String {
        let mut s = String::new();
        for (k, v) in &self.metadata {
            // Metadata values stay on one line.
            let _ = writeln!(s, "# {k}: {}", v.replace('\n', " "));
        }
        let _ = writeln!(s, "{}", self.columns.join(","));
        for r in &self.rows {
            let cells: Vec<String> = r.iter().map(|v| format_value(*v)).collect();
            let _ = writeln!(s, "{}", cells.join(","));
        }
        s
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.render())?;
        Ok(())
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut metadata = Vec::new();
        let mut columns: Option<Vec<String>> = None;
        let mut rows = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            if let Some(m) = line.strip_prefix('#') {
                let m = m.trim_start();
                let (k, v) = m.split_once(':').unwrap_or((m, ""));
                metadata.push((k.trim().to_string(), v.trim().to_string()));
                continue;
            }
            if line.trim().is_empty() {
                continue;
            }
            match &columns {
                None => columns = Some(line.split(',').map(|s| s.trim().to_string()).collect()),
                Some(cols) => {
                    let row: Option<Vec<f64>> = line.split(',').map(|s| parse_value(s.trim())).collect();
                    let row = row.ok_or_else(|| Error::InvalidConfig(format!("line {}: unparsable value", lineno + 1)))?;
                    if row.len() != cols.len() {
                        return Err(Error::InvalidConfig(format!(
                            "line {}: {} values for {} columns",
                            lineno + 1,
                            row.len(),
                            cols.len()
                        )));
                    }
                    rows.push(row);
                }
            }
        }
        let columns = columns.ok_or_else(|| Error::InvalidConfig("table has no header row".into()))?;
        Ok(CsvTable { metadata, columns, rows })
    }

    /// Reads a table and checks that every `required` column is present.
    pub fn read(path: &Path, required: &[&str]) -> Result<Self> {
        let t = Self::parse(&std::fs::read_to_string(path)?)?;
        t.require(required)?;
        Ok(t)
    }

    pub fn require(&self, required: &[&str]) -> Result<()> {
        for r in required {
            if !self.columns.iter().any(|c| c == r) {
                return Err(Error::InvalidConfig(format!("missing column `{r}`")));
            }
        }
        Ok(())
    }

    pub fn meta_value(&self, key: &str) -> Option<&str> {
        self.metadata.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::InvalidConfig(e.to_string()))?;
    std::fs::write(path, text + "\n")?;
    Ok(())
}
