use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use dynlab::geometry::fmt_sig;
use serde::Serialize;
use serde_json::{json, Value};

/// A CSV table: header plus rows of preformatted cells.
pub struct Table {
    pub name: String,
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(name: impl Into<String>, header: &[&str]) -> Self {
        Self {
            name: name.into(),
            header: header.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push_floats(&mut self, row: &[f64]) {
        self.rows.push(row.iter().map(|&v| fmt_sig(v)).collect());
    }

    pub fn push(&mut self, row: Vec<String>) {
        self.rows.push(row);
    }

    pub fn to_csv(&self) -> String {
        let mut s = self.header.join(",");
        s.push('\n');
        for r in &self.rows {
            let _ = writeln!(s, "{}", r.join(","));
        }
        s
    }
}

pub struct Outcome {
    pub command: &'static str,
    pub config: Value,
    pub payload: Value,
    pub pass: bool,
    pub verdict: String,
    pub tables: Vec<Table>,
}

impl Outcome {
    pub fn new(
        command: &'static str,
        config: impl Serialize,
        payload: impl Serialize,
    ) -> Result<Self> {
        Ok(Self {
            command,
            config: serde_json::to_value(config)?,
            payload: serde_json::to_value(payload)?,
            pass: true,
            verdict: "pass".into(),
            tables: Vec::new(),
        })
    }

    pub fn judge(mut self, pass: bool, ok: &str, failed: &str) -> Self {
        self.pass = pass;
        self.verdict = if pass { ok } else { failed }.into();
        self
    }

    /// Report with sorted keys (serde_json maps are ordered).
    pub fn to_json(&self) -> Result<String> {
        let v = json!({
            "command": self.command,
            "config": self.config,
            "payload": self.payload,
            "summary": { "pass": self.pass, "verdict": self.verdict },
            "provenance": { "tool": "dyn-lab", "version": env!("CARGO_PKG_VERSION") },
        });
        let mut s = serde_json::to_string_pretty(&v)?;
        s.push('\n');
        Ok(s)
    }

    /// Prints the report and writes it plus the CSV tables when `out` is set.
    pub fn emit(&self, out: Option<&Path>) -> Result<()> {
        let text = self.to_json()?;
        print!("{text}");
        if let Some(path) = out {
            if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
                std::fs::create_dir_all(dir)
                    .with_context(|| format!("out: cannot create {}", dir.display()))?;
            }
            std::fs::write(path, &text)
                .with_context(|| format!("out: cannot write {}", path.display()))?;
            for t in &self.tables {
                let p = table_path(path, &t.name);
                std::fs::write(&p, t.to_csv())
                    .with_context(|| format!("out: cannot write {}", p.display()))?;
            }
        }
        Ok(())
    }
}

fn table_path(report: &Path, name: &str) -> PathBuf {
    let stem = report
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or("report");
    report.with_file_name(format!("{stem}_{name}.csv"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_layout() {
        let mut t = Table::new("scan", &["n", "value"]);
        t.push_floats(&[1.0, 0.1 + 0.2]);
        assert_eq!(t.to_csv(), "n,value\n1,0.3\n");
        assert_eq!(
            table_path(Path::new("a/run.json"), "scan"),
            Path::new("a/run_scan.csv")
        );
    }

    #[test]
    fn keys_are_sorted() {
        let o = Outcome::new("x", json!({"b": 1, "a": 2}), json!({"z": 0, "y": [1]})).unwrap();
        let s = o.to_json().unwrap();
        assert!(s.find("\"a\"").unwrap() < s.find("\"b\"").unwrap());
        assert!(s.find("\"command\"").unwrap() < s.find("\"config\"").unwrap());
        assert!(s.find("\"y\"").unwrap() < s.find("\"z\"").unwrap());
    }
}
