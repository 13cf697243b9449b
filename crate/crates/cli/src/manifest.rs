use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use serde::Serialize;
use serde_json::Value;

use rnnlab::serialize::to_json_pretty;

pub const GIT_DESCRIBE: &str = env!("RNNLAB_GIT_DESCRIBE");

/// Record of one invocation, written next to its artifacts.
#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub command: String,
    /// Arguments after the program name; `rnnlab replay` feeds them back in.
    pub argv: Vec<String>,
    pub config: Value,
    pub seed: u64,
    pub artifacts: Vec<PathBuf>,
    pub started_at_unix: f64,
    pub wall_clock_secs: f64,
    pub version: &'static str,
    pub git_describe: &'static str,
    pub status: String,
    pub exit_code: i32,
}

pub struct Recorder {
    command: String,
    argv: Vec<String>,
    started_at_unix: f64,
    clock: Instant,
}

impl Recorder {
    pub fn start(command: &str, argv: &[String]) -> Self {
        let started_at_unix = SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_secs_f64())
            .unwrap_or(0.0);
        Self {
            command: command.to_string(),
            argv: argv.to_vec(),
            started_at_unix,
            clock: Instant::now(),
        }
    }

    /// Writes the manifest to `path` and returns it.
    pub fn finish(
        self,
        path: &Path,
        config: Value,
        seed: u64,
        artifacts: Vec<PathBuf>,
        status: &str,
        exit_code: i32,
    ) -> anyhow::Result<RunManifest> {
        let manifest = RunManifest {
            command: self.command,
            argv: self.argv,
            config,
            seed,
            artifacts,
            started_at_unix: self.started_at_unix,
            wall_clock_secs: self.clock.elapsed().as_secs_f64(),
            version: env!("CARGO_PKG_VERSION"),
            git_describe: GIT_DESCRIBE,
            status: status.to_string(),
            exit_code,
        };
        write_text(path, &(to_json_pretty(&manifest)? + "\n"))?;
        Ok(manifest)
    }
}

pub fn write_text(path: &Path, text: &str) -> anyhow::Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| anyhow::anyhow!("cannot create {}: {e}", dir.display()))?;
    }
    std::fs::write(path, text).map_err(|e| anyhow::anyhow!("cannot write {}: {e}", path.display()))
}

/// `<path>.manifest.json` for single-file outputs.
pub fn sidecar(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_os_string();
    s.push(".manifest.json");
    PathBuf::from(s)
}
