//! Atomic file output and the run manifest.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use crate::error::CliError;

/// Write `contents` to `<dir>/<name>` through a temporary file and a rename.
pub fn write_atomic(dir: &Path, name: &str, contents: &[u8]) -> Result<PathBuf, CliError> {
    let target = dir.join(name);
    let tmp = dir.join(format!(".{name}.tmp"));
    let mut f = fs::File::create(&tmp).map_err(|e| CliError::io(&tmp, e))?;
    f.write_all(contents).map_err(|e| CliError::io(&tmp, e))?;
    f.sync_all().map_err(|e| CliError::io(&tmp, e))?;
    drop(f);
    fs::rename(&tmp, &target).map_err(|e| CliError::io(&target, e))?;
    Ok(target)
}

/// Record of one run: config echo, version, stage timings, flags and files.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunManifest {
    pub config: Vec<(String, String)>,
    pub version: String,
    pub stages: Vec<(String, f64)>,
    pub flags: Vec<(String, String)>,
    pub files: Vec<String>,
    pub status: String,
}

impl RunManifest {
    pub fn flag(&mut self, key: impl Into<String>, value: impl ToString) {
        self.flags.push((key.into(), value.to_string()));
    }

    pub fn render(&self) -> String {
        let mut s = String::new();
        s.push_str(&format!("version = {}\n", self.version));
        s.push_str(&format!("status = {}\n", self.status));
        for (k, v) in &self.config {
            s.push_str(&format!("config.{k} = {v}\n"));
        }
        for (k, t) in &self.stages {
            s.push_str(&format!("wall_seconds.{k} = {t:.6}\n"));
        }
        for (k, v) in &self.flags {
            s.push_str(&format!("flag.{k} = {v}\n"));
        }
        s.push_str(&format!("files = {}\n", self.files.join(", ")));
        s
    }

    /// Look up a rendered key in manifest text.
    pub fn lookup<'a>(text: &'a str, key: &str) -> Option<&'a str> {
        text.lines().find_map(|l| l.split_once(" = ").filter(|(k, _)| *k == key).map(|(_, v)| v))
    }
}
