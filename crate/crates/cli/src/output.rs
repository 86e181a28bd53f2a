//! Output directory: headered CSV files, the resolved config echo and the manifest.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Core(#[from] qssep_core::Error),
    #[error("self-test failed: {0}")]
    SelfTest(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        use qssep_core::Error as E;
        match self {
            CliError::Usage(_) => 2,
            CliError::Core(E::InvalidArgument(_) | E::Budget(_)) => 2,
            CliError::Core(E::NonConvergence { .. }) => 3,
            CliError::Core(E::InvariantViolation(_)) | CliError::SelfTest(_) => 4,
            CliError::Io { .. } | CliError::Csv { .. } => 5,
        }
    }

    pub fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io { path: path.to_path_buf(), source }
    }
}

pub type CliResult<T> = Result<T, CliError>;

pub struct OutputDir {
    root: PathBuf,
    outputs: Vec<String>,
    started: Instant,
    started_unix: u64,
}

#[derive(Serialize)]
struct Manifest<'a> {
    tool: &'static str,
    version: &'static str,
    subcommand: &'a str,
    config: serde_json::Value,
    seed: u64,
    threads: Option<usize>,
    started_unix: u64,
    wall_time_s: f64,
    outputs: &'a [String],
    summary: serde_json::Value,
}

impl OutputDir {
    pub fn create(root: &Path) -> CliResult<Self> {
        fs::create_dir_all(root).map_err(|e| CliError::io(root, e))?;
        let started_unix = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
        Ok(Self { root: root.to_path_buf(), outputs: Vec::new(), started: Instant::now(), started_unix })
    }

    /// Writes `header` followed by one record per row. The header is explicit so
    /// that empty tables still carry their schema.
    pub fn write_csv<T: Serialize>(&mut self, name: &str, header: &[&str], rows: &[T]) -> CliResult<()> {
        let path = self.root.join(name);
        let csv_err = |source| CliError::Csv { path: path.clone(), source };
        let mut w = csv::WriterBuilder::new().has_headers(false).from_path(&path).map_err(csv_err)?;
        w.write_record(header).map_err(csv_err)?;
        for r in rows {
            w.serialize(r).map_err(csv_err)?;
        }
        w.flush().map_err(|e| CliError::io(&path, e))?;
        self.outputs.push(name.to_string());
        Ok(())
    }

    pub fn write_text(&mut self, name: &str, content: &str) -> CliResult<()> {
        let path = self.root.join(name);
        fs::write(&path, content).map_err(|e| CliError::io(&path, e))?;
        self.outputs.push(name.to_string());
        Ok(())
    }

    /// Writes `config.toml` and `manifest.json`.
    pub fn finish(
        mut self,
        subcommand: &str,
        config: &toml::Table,
        seed: u64,
        threads: Option<usize>,
        summary: serde_json::Value,
    ) -> CliResult<()> {
        let text = toml::to_string(config).map_err(|e| CliError::Usage(format!("cannot echo config: {e}")))?;
        self.write_text("config.toml", &text)?;
        let manifest = Manifest {
            tool: "qssep",
            version: env!("CARGO_PKG_VERSION"),
            subcommand,
            config: serde_json::to_value(config).unwrap_or(serde_json::Value::Null),
            seed,
            threads,
            started_unix: self.started_unix,
            wall_time_s: self.started.elapsed().as_secs_f64(),
            outputs: &self.outputs,
            summary,
        };
        let path = self.root.join("manifest.json");
        let json = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
        fs::write(&path, json + "\n").map_err(|e| CliError::io(&path, e))
    }
}
