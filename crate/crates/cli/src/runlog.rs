//! One JSON record per invocation: resolved config, seed, outcome.

use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use anyhow::Context;
use serde::Serialize;

use crate::commands::Report;
use crate::config::CliConfig;

#[derive(Debug, Serialize)]
pub struct RunLog {
    pub command: String,
    pub version: &'static str,
    pub argv: Vec<String>,
    pub seed: u64,
    pub config: CliConfig,
    pub started_at: u64,
    pub elapsed_secs: f64,
    pub status: &'static str,
    pub error: Option<String>,
    pub outputs: Vec<PathBuf>,
    pub metrics: serde_json::Value,
    #[serde(skip)]
    clock: Option<Instant>,
}

impl RunLog {
    pub fn start(command: &str, config: &CliConfig) -> Self {
        Self {
            command: command.into(),
            version: env!("CARGO_PKG_VERSION"),
            argv: std::env::args().collect(),
            seed: config.seed,
            config: config.clone(),
            started_at: SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs()),
            elapsed_secs: 0.0,
            status: "running",
            error: None,
            outputs: Vec::new(),
            metrics: serde_json::Value::Null,
            clock: Some(Instant::now()),
        }
    }

    fn stop(&mut self) {
        self.elapsed_secs = self.clock.take().map_or(0.0, |c| c.elapsed().as_secs_f64());
    }

    pub fn finish_ok(&mut self, report: &Report) {
        self.stop();
        self.status = "ok";
        self.outputs = report.outputs.clone();
        self.metrics = report.metrics.clone();
    }

    pub fn finish_err(&mut self, e: &anyhow::Error) {
        self.stop();
        self.status = "error";
        self.error = Some(one_line(e));
    }

    pub fn write(&self, path: &Path) -> anyhow::Result<()> {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        }
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
    }
}

/// `run.json` inside a directory output, `<stem>.run.json` beside a file.
pub fn default_path(out: &Path, out_is_dir: bool) -> PathBuf {
    if out_is_dir {
        return out.join("run.json");
    }
    let stem = out.file_stem().map_or_else(|| "out".into(), |s| s.to_string_lossy().into_owned());
    out.with_file_name(format!("{stem}.run.json"))
}

/// The error chain on a single line. Causes already spelled out by the
/// message above them are skipped.
pub fn one_line(e: &anyhow::Error) -> String {
    let mut out = String::new();
    for cause in e.chain() {
        let msg = cause.to_string();
        if out.contains(&msg) {
            continue;
        }
        if !out.is_empty() {
            out.push_str(": ");
        }
        out.push_str(&msg);
    }
    out.replace(['\n', '\r'], " ")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn log_paths() {
        assert_eq!(default_path(Path::new("a/out.wav"), false), PathBuf::from("a/out.run.json"));
        assert_eq!(default_path(Path::new("model"), true), PathBuf::from("model/run.json"));
    }

    #[test]
    fn chain_is_one_line() {
        let e = anyhow::anyhow!("inner\nline").context("outer");
        assert_eq!(one_line(&e), "outer: inner line");
        let io = std::io::Error::new(std::io::ErrorKind::NotFound, "gone");
        let e = anyhow::Error::new(mimic_core::Error::io(Path::new("a.wav"), io));
        assert_eq!(one_line(&e), "a.wav: gone");
    }
}
