//! Newline-delimited JSON traces. The first line is a header; every later
//! line is one retained snapshot. Each line carries the SHA-256 of its own
//! compact encoding under `sha256`.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use super::config::{ModelKind, RunConfig};
use crate::error::{Error, Result};
use crate::summaries::{McmcTrace, Snapshot};

pub const TRACE_VERSION: u32 = 1;
const CHECKSUM: &str = "sha256";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceHeader {
    pub version: u32,
    pub seed: u64,
    pub config_sha: String,
    pub model: ModelKind,
    pub config: RunConfig,
    /// Item labels in registry order.
    pub items: Vec<String>,
    /// Ranking labels in dataset order.
    pub lists: Vec<String>,
}

fn digest(v: &Value) -> String {
    hex::encode(Sha256::digest(serde_json::to_string(v).expect("json").as_bytes()))
}

fn seal<T: Serialize>(x: &T) -> Result<String> {
    let mut v = serde_json::to_value(x).map_err(|e| Error::Io(e.into()))?;
    let sum = digest(&v);
    v.as_object_mut().expect("records are objects").insert(CHECKSUM.into(), Value::String(sum));
    Ok(serde_json::to_string(&v).expect("json"))
}

fn open<T: for<'de> Deserialize<'de>>(text: &str, line: usize) -> Result<T> {
    let corrupt = |m: String| Error::CorruptTrace { line, message: m };
    let mut v: Value = serde_json::from_str(text).map_err(|e| corrupt(e.to_string()))?;
    let obj = v.as_object_mut().ok_or_else(|| corrupt("record is not an object".into()))?;
    let sum = match obj.remove(CHECKSUM) {
        Some(Value::String(s)) => s,
        _ => return Err(corrupt("missing checksum".into())),
    };
    if digest(&v) != sum {
        return Err(corrupt("checksum mismatch".into()));
    }
    serde_json::from_value(v).map_err(|e| corrupt(e.to_string()))
}

/// Appends snapshots one line at a time, flushing after each, so a crash
/// loses at most the line being written.
pub struct TraceWriter {
    out: BufWriter<File>,
}

impl TraceWriter {
    pub fn create(path: &Path, header: &TraceHeader) -> Result<Self> {
        let mut out = BufWriter::new(File::create(path)?);
        writeln!(out, "{}", seal(header)?)?;
        out.flush()?;
        Ok(Self { out })
    }

    pub fn append(&mut self, s: &Snapshot) -> Result<()> {
        writeln!(self.out, "{}", seal(s)?)?;
        self.out.flush()?;
        Ok(())
    }

    pub fn finish(mut self) -> Result<()> {
        self.out.flush()?;
        self.out.get_ref().sync_all()?;
        Ok(())
    }
}

pub fn write_trace(path: &Path, header: &TraceHeader, trace: &McmcTrace) -> Result<()> {
    let mut w = TraceWriter::create(path, header)?;
    for s in trace.snapshots() {
        w.append(s)?;
    }
    w.finish()
}

pub fn read_trace(path: &Path) -> Result<(TraceHeader, McmcTrace)> {
    read_trace_from(BufReader::new(File::open(path)?))
}

/// A final line without its newline is taken to be an interrupted append
/// and ignored; any other damaged line is an error.
pub fn read_trace_from<R: BufRead>(mut reader: R) -> Result<(TraceHeader, McmcTrace)> {
    let mut buf = String::new();
    let mut lineno = 0;
    let mut header: Option<TraceHeader> = None;
    let mut trace = McmcTrace::default();
    loop {
        buf.clear();
        if reader.read_line(&mut buf)? == 0 {
            break;
        }
        lineno += 1;
        let complete = buf.ends_with('\n');
        let text = buf.trim_end();
        if text.is_empty() {
            continue;
        }
        match &header {
            None => {
                let h: TraceHeader = open(text, lineno)?;
                if h.version != TRACE_VERSION {
                    return Err(Error::CorruptTrace { line: lineno, message: format!("unsupported version {}", h.version) });
                }
                trace = McmcTrace::new(h.seed, h.config_sha.clone());
                header = Some(h);
            }
            Some(h) => {
                let s: Snapshot = match open(text, lineno) {
                    Ok(s) => s,
                    Err(_) if !complete => break,
                    Err(e) => return Err(e),
                };
                if s.assignments.len() != h.lists.len() {
                    return Err(Error::CorruptTrace { line: lineno, message: "wrong number of assignments".into() });
                }
                trace.push(s).map_err(|e| Error::CorruptTrace { line: lineno, message: e.to_string() })?;
            }
        }
    }
    let header = header.ok_or(Error::CorruptTrace { line: 1, message: "missing header".into() })?;
    Ok((header, trace))
}
