use std::collections::HashMap;
use std::fs::OpenOptions;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{Completion, GatewayError};

pub const TRANSCRIPT_FORMAT: &str = "specprobe-transcript";
pub const TRANSCRIPT_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    format: String,
    version: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TranscriptEntry {
    pub fingerprint: String,
    pub model_id: String,
    pub completion: Completion,
}

/// JSON-lines transcript: a header line, then one entry per line.
#[derive(Debug)]
pub struct Transcript {
    path: PathBuf,
    entries: Vec<TranscriptEntry>,
    by_fingerprint: HashMap<String, usize>,
}

impl Transcript {
    pub fn open(path: &Path) -> Result<Self, GatewayError> {
        let mut t = Self { path: path.to_path_buf(), entries: Vec::new(), by_fingerprint: HashMap::new() };
        if !path.exists() {
            return Ok(t);
        }
        let io = |e| GatewayError::io(path, e);
        let mut lines = BufReader::new(std::fs::File::open(path).map_err(io)?).lines();
        match lines.next() {
            None => return Ok(t),
            Some(first) => {
                let header: Header = serde_json::from_str(&first.map_err(io)?)
                    .map_err(|e| GatewayError::Transcript(format!("bad header: {e}")))?;
                if header.format != TRANSCRIPT_FORMAT || header.version != TRANSCRIPT_VERSION {
                    return Err(GatewayError::Transcript(format!(
                        "unsupported transcript {} v{}",
                        header.format, header.version
                    )));
                }
            }
        }
        for (n, line) in lines.enumerate() {
            let line = line.map_err(io)?;
            if line.trim().is_empty() {
                continue;
            }
            let entry: TranscriptEntry =
                serde_json::from_str(&line).map_err(|e| GatewayError::Transcript(format!("line {}: {e}", n + 2)))?;
            if t.by_fingerprint.contains_key(&entry.fingerprint) {
                return Err(GatewayError::Transcript(format!("duplicate fingerprint {}", entry.fingerprint)));
            }
            t.by_fingerprint.insert(entry.fingerprint.clone(), t.entries.len());
            t.entries.push(entry);
        }
        Ok(t)
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[TranscriptEntry] {
        &self.entries
    }

    pub fn get(&self, fingerprint: &str) -> Option<&TranscriptEntry> {
        self.by_fingerprint.get(fingerprint).map(|&i| &self.entries[i])
    }

    /// Append an entry. Re-recording an existing fingerprint replaces it
    /// and rewrites the file so fingerprints stay unique.
    pub fn record(&mut self, entry: TranscriptEntry) -> Result<(), GatewayError> {
        if let Some(&i) = self.by_fingerprint.get(&entry.fingerprint) {
            self.entries[i] = entry;
            return self.rewrite();
        }
        let fresh = !self.path.exists() || std::fs::metadata(&self.path).map(|m| m.len() == 0).unwrap_or(true);
        let mut file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&self.path)
            .map_err(|e| GatewayError::io(&self.path, e))?;
        let mut buf = String::new();
        if fresh {
            buf.push_str(&header_line());
        }
        buf.push_str(&serde_json::to_string(&entry).expect("entry serialises"));
        buf.push('\n');
        file.write_all(buf.as_bytes()).map_err(|e| GatewayError::io(&self.path, e))?;
        self.by_fingerprint.insert(entry.fingerprint.clone(), self.entries.len());
        self.entries.push(entry);
        Ok(())
    }

    fn rewrite(&self) -> Result<(), GatewayError> {
        let mut buf = header_line();
        for e in &self.entries {
            buf.push_str(&serde_json::to_string(e).expect("entry serialises"));
            buf.push('\n');
        }
        std::fs::write(&self.path, buf).map_err(|e| GatewayError::io(&self.path, e))
    }
}

fn header_line() -> String {
    let mut s = serde_json::to_string(&Header { format: TRANSCRIPT_FORMAT.into(), version: TRANSCRIPT_VERSION })
        .expect("header serialises");
    s.push('\n');
    s
}
