//! Versioned JSON envelope shared by every `mintool` command, plus the
//! directory summary used by `mintool report`.
//!
//! Reports carry no timings, paths or host data, so rerunning a command with
//! the same parameters reproduces the file byte for byte.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Status {
    Ok,
    /// A sampled inequality failed or an estimate came out non-positive.
    Violation,
    /// A solve or an audit did not reach its target.
    Failed,
}

impl Status {
    pub fn exit_code(&self) -> i32 {
        match self {
            Status::Ok => 0,
            Status::Violation | Status::Failed => 1,
        }
    }

    pub fn from_ok(ok: bool, otherwise: Status) -> Status {
        if ok {
            Status::Ok
        } else {
            otherwise
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub schema_version: u32,
    pub command: String,
    pub seed: u64,
    pub params: Value,
    pub status: Status,
    pub result: Value,
}

impl Report {
    pub fn new(command: &str, seed: u64, params: impl Serialize, status: Status, result: impl Serialize) -> Result<Self> {
        Ok(Report {
            schema_version: SCHEMA_VERSION,
            command: command.into(),
            seed,
            params: serde_json::to_value(params)?,
            status,
            result: serde_json::to_value(result)?,
        })
    }

    /// Pretty JSON with a trailing newline.
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut out = serde_json::to_vec_pretty(self)?;
        out.push(b'\n');
        Ok(out)
    }

    /// Writes `<dir>/<name>.json`, creating `dir` if needed.
    pub fn write(&self, dir: &Path, name: &str) -> Result<PathBuf> {
        fs::create_dir_all(dir)?;
        let path = dir.join(format!("{name}.json"));
        fs::File::create(&path)?.write_all(&self.to_bytes()?)?;
        Ok(path)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let report: Report = serde_json::from_slice(&fs::read(path)?)?;
        if report.schema_version != SCHEMA_VERSION {
            return Err(Error::Invalid(format!(
                "{}: schema version {} is not supported",
                path.display(),
                report.schema_version
            )));
        }
        Ok(report)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SummaryEntry {
    pub file: String,
    pub command: String,
    pub seed: u64,
    pub status: Status,
}

/// Reads every report in `dir` (not recursing, skipping other JSON files and
/// earlier summaries), sorted by file name.
pub fn summarize(dir: &Path) -> Result<Vec<SummaryEntry>> {
    let mut files: Vec<PathBuf> = fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|e| e == "json"))
        .collect();
    files.sort();
    let mut out = Vec::new();
    for path in files {
        let Ok(value) = serde_json::from_slice::<Value>(&fs::read(&path)?) else {
            continue;
        };
        if value.get("schema_version").is_none() {
            continue;
        }
        let report = Report::read(&path)?;
        if report.command == "report" {
            continue;
        }
        out.push(SummaryEntry {
            file: path.file_name().unwrap_or_default().to_string_lossy().into_owned(),
            command: report.command,
            seed: report.seed,
            status: report.status,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_and_summary() {
        let dir = tempfile::tempdir().unwrap();
        let r = Report::new("verify", 7, serde_json::json!({"suite": "main"}), Status::Ok, 1.5).unwrap();
        r.write(dir.path(), "verify-main").unwrap();
        let bad = Report::new("solve", 0, (), Status::Failed, ()).unwrap();
        bad.write(dir.path(), "solve").unwrap();
        fs::write(dir.path().join("u.json"), b"{\"format\": \"minsurf-field\"}").unwrap();
        assert_eq!(Report::read(&dir.path().join("verify-main.json")).unwrap(), r);
        let s = summarize(dir.path()).unwrap();
        assert_eq!(s.len(), 2);
        assert_eq!(s[0].command, "solve");
        assert_eq!(s[1].status, Status::Ok);
    }
}
