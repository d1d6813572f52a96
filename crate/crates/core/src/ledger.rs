//! The dictionary of every explored prompt, persisted as newline-delimited
//! JSON.

use std::collections::HashMap;
use std::fmt;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use promst_envs::ErrorKind;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Prompt identifier. Ids are zero-padded creation counters, so lexicographic
/// order is creation order.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PromptId(pub String);

impl PromptId {
    pub fn from_seq(seq: usize) -> Self {
        PromptId(format!("p{seq:06}"))
    }
}

impl fmt::Display for PromptId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prompt {
    pub id: PromptId,
    pub parent_id: Option<PromptId>,
    pub level: usize,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeedbackItem {
    #[serde(rename = "type")]
    pub error_type: ErrorKind,
    pub text: String,
    /// Index of the trial the feedback was rendered from.
    #[serde(default)]
    pub trial: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptRecord {
    #[serde(flatten)]
    pub prompt: Prompt,
    pub per_trial_scores: Vec<f64>,
    pub mean_score: f64,
    pub feedback: Vec<FeedbackItem>,
    /// Prompt texts from the root down to the parent.
    pub ancestors: Vec<String>,
}

pub fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        0.0
    } else {
        xs.iter().sum::<f64>() / xs.len() as f64
    }
}

impl PromptRecord {
    pub fn new(prompt: Prompt, per_trial_scores: Vec<f64>, feedback: Vec<FeedbackItem>, ancestors: Vec<String>) -> Self {
        let mean_score = mean(&per_trial_scores);
        PromptRecord {
            prompt,
            per_trial_scores,
            mean_score,
            feedback,
            ancestors,
        }
    }

    pub fn id(&self) -> &PromptId {
        &self.prompt.id
    }

    /// Ancestors of a child of this record.
    pub fn child_ancestors(&self) -> Vec<String> {
        let mut out = self.ancestors.clone();
        out.push(self.prompt.text.clone());
        out
    }
}

#[derive(Debug, Error)]
pub enum LedgerError {
    #[error("prompt id {0} is already recorded")]
    Duplicate(PromptId),
    #[error("ledger is empty")]
    Empty,
    #[error("invalid record {id}: {reason}")]
    Invalid { id: PromptId, reason: String },
    #[error("ledger line {line}: {reason}")]
    Parse { line: usize, reason: String },
    #[error("ledger I/O: {0}")]
    Io(#[from] std::io::Error),
}

/// Append-only prompt ledger, optionally backed by a file.
#[derive(Debug, Default)]
pub struct Ledger {
    records: Vec<PromptRecord>,
    by_id: HashMap<PromptId, usize>,
    sink: Option<(PathBuf, File)>,
}

impl Ledger {
    pub fn in_memory() -> Self {
        Self::default()
    }

    /// Start a fresh ledger file, truncating any existing one.
    pub fn create(path: impl AsRef<Path>) -> Result<Self, LedgerError> {
        let path = path.as_ref().to_path_buf();
        let file = File::create(&path)?;
        Ok(Ledger {
            sink: Some((path, file)),
            ..Self::default()
        })
    }

    /// Load a ledger file without attaching it for writes.
    pub fn load(path: impl AsRef<Path>) -> Result<Self, LedgerError> {
        let reader = BufReader::new(File::open(path)?);
        let mut ledger = Ledger::in_memory();
        for (i, line) in reader.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let record: PromptRecord = serde_json::from_str(&line).map_err(|e| LedgerError::Parse {
                line: i + 1,
                reason: e.to_string(),
            })?;
            ledger.insert(record).map_err(|e| LedgerError::Parse {
                line: i + 1,
                reason: e.to_string(),
            })?;
        }
        Ok(ledger)
    }

    /// Load a ledger file and keep appending to it.
    pub fn open(path: impl AsRef<Path>) -> Result<Self, LedgerError> {
        let path = path.as_ref().to_path_buf();
        let mut ledger = Self::load(&path)?;
        let file = OpenOptions::new().append(true).open(&path)?;
        ledger.sink = Some((path, file));
        Ok(ledger)
    }

    pub fn path(&self) -> Option<&Path> {
        self.sink.as_ref().map(|(p, _)| p.as_path())
    }

    fn check(&self, r: &PromptRecord) -> Result<(), LedgerError> {
        let invalid = |reason: String| {
            Err(LedgerError::Invalid {
                id: r.prompt.id.clone(),
                reason,
            })
        };
        if self.by_id.contains_key(&r.prompt.id) {
            return Err(LedgerError::Duplicate(r.prompt.id.clone()));
        }
        if r.prompt.text.trim().is_empty() {
            return invalid("prompt text is empty".into());
        }
        if r.per_trial_scores.is_empty() {
            return invalid("no trial scores".into());
        }
        if (r.mean_score - mean(&r.per_trial_scores)).abs() > 1e-9 {
            return invalid(format!("mean_score {} is not the mean of the trial scores", r.mean_score));
        }
        match &r.prompt.parent_id {
            None => {
                if r.prompt.level != 0 || !r.ancestors.is_empty() {
                    return invalid("a root prompt has level 0 and no ancestors".into());
                }
            }
            Some(pid) => {
                let Some(parent) = self.get(pid) else {
                    return invalid(format!("parent {pid} is not recorded"));
                };
                if r.prompt.level <= parent.prompt.level {
                    return invalid(format!(
                        "level {} is not after parent level {}",
                        r.prompt.level, parent.prompt.level
                    ));
                }
                if r.ancestors != parent.child_ancestors() {
                    return invalid("ancestors do not follow the parent chain".into());
                }
            }
        }
        Ok(())
    }

    fn insert(&mut self, record: PromptRecord) -> Result<(), LedgerError> {
        self.check(&record)?;
        self.by_id.insert(record.prompt.id.clone(), self.records.len());
        self.records.push(record);
        Ok(())
    }

    /// Validate, persist, and index one record.
    pub fn record(&mut self, record: PromptRecord) -> Result<(), LedgerError> {
        self.check(&record)?;
        if let Some((_, file)) = &mut self.sink {
            let mut line = serde_json::to_string(&record).expect("records serialize");
            line.push('\n');
            file.write_all(line.as_bytes())?;
            file.flush()?;
        }
        self.insert(record)
    }

    pub fn get(&self, id: &PromptId) -> Option<&PromptRecord> {
        self.by_id.get(id).map(|&i| &self.records[i])
    }

    pub fn records(&self) -> &[PromptRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn contains_text(&self, text: &str) -> bool {
        self.records.iter().any(|r| r.prompt.text == text)
    }

    /// Highest-scoring records, ties broken by ascending id.
    pub fn top_k(&self, k: usize) -> Result<Vec<&PromptRecord>, LedgerError> {
        if self.records.is_empty() {
            return Err(LedgerError::Empty);
        }
        let mut sorted: Vec<&PromptRecord> = self.records.iter().collect();
        sorted.sort_by(|a, b| {
            b.mean_score
                .total_cmp(&a.mean_score)
                .then_with(|| a.prompt.id.cmp(&b.prompt.id))
        });
        sorted.truncate(k);
        Ok(sorted)
    }

    pub fn max_score(&self) -> Result<f64, LedgerError> {
        self.records
            .iter()
            .map(|r| r.mean_score)
            .max_by(f64::total_cmp)
            .ok_or(LedgerError::Empty)
    }

    pub fn best(&self) -> Result<&PromptRecord, LedgerError> {
        Ok(self.top_k(1)?[0])
    }

    /// `(text, mean_score)` pairs for surrogate training.
    pub fn dataset(&self) -> Vec<(String, f64)> {
        self.records.iter().map(|r| (r.prompt.text.clone(), r.mean_score)).collect()
    }

    pub fn to_ndjson(&self) -> String {
        self.records
            .iter()
            .map(|r| serde_json::to_string(r).expect("records serialize") + "\n")
            .collect()
    }
}
