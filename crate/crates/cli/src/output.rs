use std::fmt::Write as _;
use std::path::Path;

use serde::Serialize;
use serde_json::{json, Value};

use crate::config::{command_name, Format, RunConfig};

/// One file produced by a run.
pub struct Artifact {
    pub name: String,
    pub body: String,
}

/// Wraps a payload with the version, config hash and seed.
pub fn envelope(config: &RunConfig, payload: impl Serialize) -> Value {
    json!({
        "toolkit_version": fisher_curvature::VERSION,
        "config_hash": config.hash(),
        "seed": config.seed,
        "command": command_name(config.command),
        "config": config,
        "result": payload,
    })
}

/// Structured error document.
pub fn error_doc(config: &RunConfig, kind: &str, message: &str) -> Value {
    json!({
        "error": { "kind": kind, "message": message },
        "toolkit_version": fisher_curvature::VERSION,
        "config_hash": config.hash(),
        "seed": config.seed,
    })
}

pub fn json_artifact(name: &str, config: &RunConfig, payload: impl Serialize) -> Artifact {
    let mut body = serde_json::to_string_pretty(&envelope(config, payload)).expect("report serializes");
    body.push('\n');
    Artifact {
        name: name.to_string(),
        body,
    }
}

/// CSV with a header row; `{}` on `f64` is the shortest round-trip form.
pub struct Csv {
    body: String,
}

impl Csv {
    pub fn new(header: &[&str]) -> Self {
        Self {
            body: header.join(",") + "\n",
        }
    }

    pub fn row(&mut self, cells: &[String]) {
        self.body.push_str(&cells.join(","));
        self.body.push('\n');
    }

    pub fn into_artifact(self, name: &str) -> Artifact {
        Artifact {
            name: name.to_string(),
            body: self.body,
        }
    }
}

pub fn num(v: f64) -> String {
    format!("{v}")
}

/// Writes every artifact into `out`, or prints the first one of the chosen
/// format to stdout.
pub fn emit(config: &RunConfig, artifacts: &[Artifact]) -> std::io::Result<()> {
    match &config.out {
        Some(dir) => {
            std::fs::create_dir_all(dir)?;
            for a in artifacts {
                std::fs::write(dir.join(&a.name), &a.body)?;
            }
            Ok(())
        }
        None => {
            let ext = match config.format {
                Format::Json => ".json",
                Format::Csv => ".csv",
            };
            let chosen = artifacts
                .iter()
                .find(|a| a.name.ends_with(ext))
                .or_else(|| artifacts.first());
            if let Some(a) = chosen {
                print!("{}", a.body);
            }
            Ok(())
        }
    }
}

pub fn write_error(out: Option<&Path>, doc: &Value) {
    let text = serde_json::to_string_pretty(doc).expect("error serializes");
    eprintln!("{text}");
    if let Some(dir) = out {
        if std::fs::create_dir_all(dir).is_ok() {
            let _ = std::fs::write(dir.join("error.json"), text + "\n");
        }
    }
}

/// Aligned plain-text table.
pub fn text_table(header: &[&str], rows: &[Vec<String>]) -> String {
    let cols = header.len();
    let width: Vec<usize> = (0..cols)
        .map(|c| rows.iter().map(|r| r[c].len()).chain([header[c].len()]).max().unwrap_or(0))
        .collect();
    let mut s = String::new();
    let line = |s: &mut String, cells: &[&str]| {
        for (c, cell) in cells.iter().enumerate() {
            let _ = write!(s, "{:<w$}", cell, w = width[c] + 2);
        }
        s.truncate(s.trim_end().len());
        s.push('\n');
    };
    line(&mut s, header);
    for r in rows {
        line(&mut s, &r.iter().map(String::as_str).collect::<Vec<_>>());
    }
    s
}
