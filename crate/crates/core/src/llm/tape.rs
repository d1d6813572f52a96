use std::collections::{HashMap, VecDeque};
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::{ChatBackend, ChatRequest, LlmError};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TapeEntry {
    pub request_hash: String,
    pub reply: String,
}

struct Reel {
    pending: VecDeque<String>,
    last: String,
}

/// Replays recorded replies keyed by request hash. Repeated requests consume
/// their replies in recording order; once exhausted the last one repeats.
pub struct TapeBackend {
    reels: Mutex<HashMap<String, Reel>>,
}

impl TapeBackend {
    pub fn from_entries(entries: impl IntoIterator<Item = TapeEntry>) -> Self {
        let mut reels: HashMap<String, Reel> = HashMap::new();
        for e in entries {
            reels
                .entry(e.request_hash)
                .and_modify(|r| r.pending.push_back(e.reply.clone()))
                .or_insert_with(|| Reel {
                    pending: VecDeque::from([e.reply.clone()]),
                    last: e.reply,
                });
        }
        TapeBackend {
            reels: Mutex::new(reels),
        }
    }

    pub fn load(path: &Path) -> Result<Self, LlmError> {
        let file = File::open(path).map_err(|e| LlmError::Io(format!("{}: {e}", path.display())))?;
        let mut entries = Vec::new();
        for (i, line) in BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|e| LlmError::Io(e.to_string()))?;
            if line.trim().is_empty() {
                continue;
            }
            let entry = serde_json::from_str(&line).map_err(|e| LlmError::Config(format!("tape line {}: {e}", i + 1)))?;
            entries.push(entry);
        }
        Ok(Self::from_entries(entries))
    }
}

impl ChatBackend for TapeBackend {
    fn complete(&self, request: &ChatRequest) -> Result<String, LlmError> {
        let hash = request.hash();
        let mut reels = self.reels.lock().expect("tape lock");
        let reel = reels.get_mut(&hash).ok_or(LlmError::TapeMiss(hash))?;
        if let Some(next) = reel.pending.pop_front() {
            reel.last = next;
        }
        Ok(reel.last.clone())
    }
}

/// Passes calls through and appends every successful exchange to a tape file.
pub struct TapeRecorder<B> {
    inner: B,
    out: Mutex<File>,
}

impl<B: ChatBackend> TapeRecorder<B> {
    pub fn create(inner: B, path: &Path) -> Result<Self, LlmError> {
        let out = OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(|e| LlmError::Io(format!("{}: {e}", path.display())))?;
        Ok(TapeRecorder {
            inner,
            out: Mutex::new(out),
        })
    }
}

impl<B: ChatBackend> ChatBackend for TapeRecorder<B> {
    fn complete(&self, request: &ChatRequest) -> Result<String, LlmError> {
        let reply = self.inner.complete(request)?;
        let entry = TapeEntry {
            request_hash: request.hash(),
            reply: reply.clone(),
        };
        let mut line = serde_json::to_string(&entry).expect("tape entries serialize");
        line.push('\n');
        let mut out = self.out.lock().expect("tape lock");
        out.write_all(line.as_bytes()).map_err(|e| LlmError::Io(e.to_string()))?;
        Ok(reply)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::llm::ScriptedBackend;

    #[test]
    fn record_then_replay() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.jsonl");
        let a = ChatRequest::single("a", 8);
        let b = ChatRequest::single("b", 8);
        {
            let rec = TapeRecorder::create(ScriptedBackend::new(["1", "2", "3"]), &path).unwrap();
            assert_eq!(rec.complete(&a).unwrap(), "1");
            assert_eq!(rec.complete(&b).unwrap(), "2");
            assert_eq!(rec.complete(&a).unwrap(), "3");
        }
        let tape = TapeBackend::load(&path).unwrap();
        assert_eq!(tape.complete(&b).unwrap(), "2");
        assert_eq!(tape.complete(&a).unwrap(), "1");
        assert_eq!(tape.complete(&a).unwrap(), "3");
        assert_eq!(tape.complete(&a).unwrap(), "3");
        assert!(matches!(
            tape.complete(&ChatRequest::single("c", 8)),
            Err(LlmError::TapeMiss(_))
        ));
    }
}
