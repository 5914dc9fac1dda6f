//! Output files. CSV payloads are a pure function of config and seed; wall
//! clock data goes to `meta.json` only.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use serde::Serialize;
use serde_json::{json, Map, Value};

use crate::error::CliError;

pub const SCHEMA_VERSION: &str = "1";

/// Shortest round-trip representation in exponent form.
pub fn f(x: f64) -> String {
    format!("{x:e}")
}

pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    let dir = path.parent().ok_or_else(|| CliError::Io(format!("{} has no parent", path.display())))?;
    fs::create_dir_all(dir)?;
    let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("out");
    let tmp = dir.join(format!(".{name}.tmp{}", std::process::id()));
    fs::write(&tmp, bytes)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

pub struct Artifacts {
    pub dir: PathBuf,
    subcommand: &'static str,
    header: Vec<(String, String)>,
    files: Vec<String>,
    meta: Map<String, Value>,
    started: SystemTime,
    clock: Instant,
}

impl Artifacts {
    pub fn new(root: &Path, subcommand: &'static str, header: Vec<(String, String)>) -> Result<Self, CliError> {
        let dir = root.join(subcommand);
        fs::create_dir_all(&dir)?;
        Ok(Artifacts { dir, subcommand, header, files: vec![], meta: Map::new(), started: SystemTime::now(), clock: Instant::now() })
    }

    /// `# schema=ekman.<name>.v<version> key=value ...` followed by the
    /// column line and one line per row.
    pub fn csv(&mut self, name: &str, columns: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<(), CliError> {
        let mut s = format!("# schema=ekman.{}.{}.v{SCHEMA_VERSION}", self.subcommand, name.trim_end_matches(".csv"));
        for (k, v) in &self.header {
            let _ = write!(s, " {k}={v}");
        }
        s.push('\n');
        s.push_str(&columns.join(","));
        s.push('\n');
        for row in rows {
            debug_assert_eq!(row.len(), columns.len());
            s.push_str(&row.join(","));
            s.push('\n');
        }
        self.write(name, s.as_bytes())
    }

    pub fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<(), CliError> {
        let mut bytes = serde_json::to_vec_pretty(value)?;
        bytes.push(b'\n');
        self.write(name, &bytes)
    }

    fn write(&mut self, name: &str, bytes: &[u8]) -> Result<(), CliError> {
        write_atomic(&self.dir.join(name), bytes)?;
        self.files.push(name.to_string());
        Ok(())
    }

    /// Extra non-deterministic information for the sidecar.
    pub fn note(&mut self, key: &str, value: Value) {
        self.meta.insert(key.to_string(), value);
    }

    pub fn finish(mut self) -> Result<PathBuf, CliError> {
        let secs = |t: SystemTime| t.duration_since(UNIX_EPOCH).map(|d| d.as_secs_f64()).unwrap_or(0.0);
        let header: Map<String, Value> = self.header.iter().map(|(k, v)| (k.clone(), Value::String(v.clone()))).collect();
        let mut meta = json!({
            "subcommand": self.subcommand,
            "schema_version": SCHEMA_VERSION,
            "header": header,
            "files": self.files,
            "started_unix_s": secs(self.started),
            "finished_unix_s": secs(SystemTime::now()),
            "runtime_s": self.clock.elapsed().as_secs_f64(),
        });
        meta.as_object_mut().expect("object").append(&mut self.meta);
        let path = self.dir.join("meta.json");
        write_atomic(&path, &serde_json::to_vec_pretty(&meta)?)?;
        Ok(self.dir)
    }
}
