use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::Serialize;
use serde_json::{json, Value};

use super::experiment::ExperimentReport;
use crate::secagg::Transcript;
use crate::Result;

pub const REPORT_FILE: &str = "report.jsonl";
pub const TRANSCRIPT_FILE: &str = "transcript.jsonl";
pub const CONFIG_ECHO_FILE: &str = "config.echo";
pub const META_FILE: &str = "meta.json";

fn tagged(kind: &str, body: &impl Serialize) -> Result<Value> {
    let mut v = serde_json::to_value(body)?;
    match v.as_object_mut() {
        Some(obj) => {
            let mut out = serde_json::Map::with_capacity(obj.len() + 1);
            out.insert("type".into(), json!(kind));
            out.append(obj);
            Ok(Value::Object(out))
        }
        None => Ok(json!({ "type": kind, "value": v })),
    }
}

/// The `report.jsonl` lines: header with the config echo, the initial state,
/// one line per round, the attack outcome if any, then the summary.
pub fn report_lines(report: &ExperimentReport) -> Result<Vec<String>> {
    let mut lines = Vec::with_capacity(report.rounds.len() + 4);
    let mut header = tagged("header", &report.header)?;
    header["config"] = serde_json::to_value(&report.config)?;
    lines.push(header.to_string());
    lines.push(tagged("initial", &report.initial)?.to_string());
    for r in &report.rounds {
        lines.push(tagged("round", r)?.to_string());
    }
    if let Some(a) = &report.attack {
        lines.push(tagged("attack", a)?.to_string());
    }
    lines.push(tagged("summary", &report.summary)?.to_string());
    Ok(lines)
}

fn write_lines(path: &Path, lines: impl IntoIterator<Item = String>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for l in lines {
        writeln!(w, "{l}")?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_transcript(transcript: &Transcript, path: &Path) -> Result<()> {
    let lines = transcript
        .records()
        .iter()
        .map(serde_json::to_string)
        .collect::<std::result::Result<Vec<_>, _>>()?;
    write_lines(path, lines)
}

/// Writes `report.jsonl`, `config.echo` and, for secure runs,
/// `transcript.jsonl` into `dir`. Nothing written here depends on the clock.
pub fn write_report(report: &ExperimentReport, dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    let path = dir.join(REPORT_FILE);
    write_lines(&path, report_lines(report)?)?;
    written.push(path);
    let path = dir.join(CONFIG_ECHO_FILE);
    fs::write(&path, report.config.to_toml()?)?;
    written.push(path);
    if let Some(t) = &report.transcript {
        let path = dir.join(TRANSCRIPT_FILE);
        write_transcript(t, &path)?;
        written.push(path);
    }
    Ok(written)
}

/// Wall-clock metadata, kept apart from the reproducible report.
pub fn write_meta(dir: &Path, command: &str) -> Result<PathBuf> {
    fs::create_dir_all(dir)?;
    let secs = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    let path = dir.join(META_FILE);
    let meta =
        json!({ "created_unix": secs, "command": command, "version": env!("CARGO_PKG_VERSION") });
    fs::write(&path, serde_json::to_string_pretty(&meta)?)?;
    Ok(path)
}
