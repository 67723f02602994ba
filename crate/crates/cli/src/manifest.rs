use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use serde::Serialize;

use crate::config::PipelineConfig;
use crate::error::CliError;

/// Record of one invocation, written as `<output>/<command>.manifest.json`.
#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub args: Vec<String>,
    pub config_hash: String,
    pub config: PipelineConfig,
    pub seeds: Seeds,
    pub versions: Versions,
    pub started_unix: u64,
    pub elapsed_seconds: f64,
    pub status: String,
    pub outputs: Vec<PathBuf>,
}

#[derive(Debug, Serialize)]
pub struct Seeds {
    pub synth: u64,
    pub ocr_init: u64,
    pub ocr_train: u64,
    pub fusion_init: u64,
    pub fusion_train: u64,
}

#[derive(Debug, Serialize)]
pub struct Versions {
    pub vrid: &'static str,
    pub scalar: &'static str,
}

pub struct RunRecorder {
    manifest: RunManifest,
    started: Instant,
}

impl RunRecorder {
    pub fn start(command: &str, config: &PipelineConfig) -> Self {
        let started_unix = SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0);
        Self {
            manifest: RunManifest {
                command: command.to_string(),
                args: std::env::args().collect(),
                config_hash: config.hash(),
                config: config.clone(),
                seeds: Seeds {
                    synth: config.synth.seed,
                    ocr_init: config.ocr.seed,
                    ocr_train: config.ocr.train.seed,
                    fusion_init: config.fusion.seed,
                    fusion_train: config.fusion.train.seed,
                },
                versions: Versions {
                    vrid: env!("CARGO_PKG_VERSION"),
                    scalar: "f32",
                },
                started_unix,
                elapsed_seconds: 0.0,
                status: "running".into(),
                outputs: Vec::new(),
            },
            started: Instant::now(),
        }
    }

    pub fn config_hash(&self) -> &str {
        &self.manifest.config_hash
    }

    pub fn output(&mut self, path: impl Into<PathBuf>) {
        self.manifest.outputs.push(path.into());
    }

    pub fn finish(
        mut self,
        dir: &Path,
        result: &Result<(), CliError>,
    ) -> Result<PathBuf, CliError> {
        self.manifest.elapsed_seconds = self.started.elapsed().as_secs_f64();
        self.manifest.status = match result {
            Ok(()) => "ok".into(),
            Err(e) => format!("error: {}", e.kind()),
        };
        std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir.display().to_string(), e))?;
        let path = dir.join(format!("{}.manifest.json", self.manifest.command));
        let text = serde_json::to_string_pretty(&self.manifest).map_err(vrid::Error::from)?;
        std::fs::write(&path, text).map_err(|e| CliError::io(path.display().to_string(), e))?;
        Ok(path)
    }
}
