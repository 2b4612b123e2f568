use std::io::Write;
use std::path::Path;
use std::time::Instant;

use kronmde::{Error, Result};
use serde::Serialize;

/// Provenance block embedded in every output file.
#[derive(Debug, Serialize)]
pub struct Metadata<'a, C: Serialize> {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: &'static str,
    pub model_hash: &'a str,
    pub config: &'a C,
    pub seed: Option<u64>,
    pub wall_clock_s: f64,
}

pub struct Run<'a, C: Serialize> {
    pub command: &'static str,
    pub config: &'a C,
    pub model_hash: String,
    pub seed: Option<u64>,
    started: Instant,
}

impl<'a, C: Serialize> Run<'a, C> {
    pub fn start(command: &'static str, config: &'a C) -> Self {
        Run {
            command,
            config,
            model_hash: String::new(),
            seed: None,
            started: Instant::now(),
        }
    }

    pub fn metadata(&self) -> Metadata<'_, C> {
        Metadata {
            tool: "kronmde",
            version: env!("CARGO_PKG_VERSION"),
            command: self.command,
            model_hash: &self.model_hash,
            config: self.config,
            seed: self.seed,
            wall_clock_s: self.started.elapsed().as_secs_f64(),
        }
    }

    /// CSV body behind a single `# {json}` metadata line.
    pub fn write_csv(&self, out: Option<&Path>, body: &str) -> Result<()> {
        let header = serde_json::to_string(&self.metadata())?;
        emit(out, &format!("# {header}\n{body}"))
    }

    /// JSON report: the metadata under `"metadata"` next to the fields of `body`.
    pub fn write_json<B: Serialize>(&self, out: Option<&Path>, body: &B) -> Result<()> {
        #[derive(Serialize)]
        struct Report<'b, M: Serialize, B: Serialize> {
            metadata: M,
            #[serde(flatten)]
            body: &'b B,
        }
        let report = Report {
            metadata: self.metadata(),
            body,
        };
        let mut text = serde_json::to_string_pretty(&report)?;
        text.push('\n');
        emit(out, &text)
    }
}

pub fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(path) => std::fs::write(path, text).map_err(|e| io_error(path, e)),
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout.write_all(text.as_bytes())?;
            stdout.flush()?;
            Ok(())
        }
    }
}

pub fn io_error(path: &Path, e: std::io::Error) -> Error {
    Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display())))
}
