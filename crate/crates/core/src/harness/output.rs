use std::io::Write;
use std::path::Path;

use serde::Serialize;
use serde_json::Value;

use crate::error::Result;

/// Summary written by every subcommand as `report.json` and `report.csv`.
#[derive(Clone, Debug, Serialize)]
pub struct Report {
    pub command: String,
    pub version: &'static str,
    pub config_hash: String,
    pub passed: bool,
    pub details: Value,
}

impl Report {
    pub fn new(command: &str, config_hash: String, passed: bool, details: impl Serialize) -> Result<Self> {
        Ok(Self {
            command: command.to_string(),
            version: env!("CARGO_PKG_VERSION"),
            config_hash,
            passed,
            details: serde_json::to_value(details)?,
        })
    }

    /// `(section, key, value)` rows: `section` is the top-level key of
    /// `details`, `key` the dotted path below it.
    pub fn rows(&self) -> Vec<(String, String, String)> {
        let mut out = vec![
            ("report".into(), "command".into(), self.command.clone()),
            ("report".into(), "passed".into(), self.passed.to_string()),
        ];
        match &self.details {
            Value::Object(map) => {
                for (section, v) in map {
                    flatten(section, "", v, &mut out);
                }
            }
            v => flatten("details", "", v, &mut out),
        }
        out
    }

    pub fn write(&self, out: &Path) -> Result<()> {
        std::fs::create_dir_all(out)?;
        std::fs::write(out.join("report.json"), serde_json::to_string_pretty(self)?)?;
        let mut w = std::io::BufWriter::new(std::fs::File::create(out.join("report.csv"))?);
        writeln!(w, "section,key,value")?;
        for (s, k, v) in self.rows() {
            writeln!(w, "{},{},{}", quote(&s), quote(&k), quote(&v))?;
        }
        w.flush()?;
        Ok(())
    }
}

fn flatten(section: &str, prefix: &str, v: &Value, out: &mut Vec<(String, String, String)>) {
    let join = |k: &str| if prefix.is_empty() { k.to_string() } else { format!("{prefix}.{k}") };
    match v {
        Value::Object(map) => {
            for (k, v) in map {
                flatten(section, &join(k), v, out);
            }
        }
        Value::Array(items) => {
            for (i, v) in items.iter().enumerate() {
                flatten(section, &join(&i.to_string()), v, out);
            }
        }
        Value::String(s) => out.push((section.into(), prefix.into(), s.clone())),
        v => out.push((section.into(), prefix.into(), v.to_string())),
    }
}

fn quote(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}
