//! JSONL dataset reading/writing and the positional-question filter.
//!
//! One record per line:
//! `{id, question, answers, table: {headers, rows}, question_type?, relevant_cells?, aggregation?, source?, provenance?}`.

use std::collections::{BTreeSet, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::perturb::PerturbationRecord;
use crate::table::{validate, QAInstance};

pub const DEFAULT_POSITIONAL_WORDS: [&str; 13] = [
    "first", "second", "third", "last", "top", "bottom", "before", "previous", "latter", "after",
    "next", "below", "above",
];

#[derive(Debug, thiserror::Error)]
pub enum IngestError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("line {line}: instance {id} is invalid: {}", violations.join("; "))]
    Validation {
        line: usize,
        id: String,
        violations: Vec<String>,
    },
    #[error("line {line}: duplicate instance id {id}")]
    DuplicateId { line: usize, id: String },
    #[error("positional word list is empty")]
    EmptyWordList,
}

/// A dataset line: the instance plus, for derived files, how it was produced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetRecord {
    #[serde(flatten)]
    pub instance: QAInstance,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub provenance: Option<PerturbationRecord>,
}

impl From<QAInstance> for DatasetRecord {
    fn from(instance: QAInstance) -> Self {
        DatasetRecord {
            instance,
            provenance: None,
        }
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> IngestError + '_ {
    move |source| IngestError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Parses and validates JSONL records; blank lines are skipped.
pub fn parse_records<R: BufRead>(reader: R) -> Result<Vec<DatasetRecord>, IngestError> {
    let mut records = Vec::new();
    let mut seen = HashSet::new();
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line.map_err(|e| IngestError::Parse {
            line: line_no,
            message: e.to_string(),
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let record: DatasetRecord =
            serde_json::from_str(&line).map_err(|e| IngestError::Parse {
                line: line_no,
                message: e.to_string(),
            })?;
        let violations = validate(&record.instance);
        if !violations.is_empty() {
            return Err(IngestError::Validation {
                line: line_no,
                id: record.instance.id.clone(),
                violations,
            });
        }
        if !seen.insert(record.instance.id.clone()) {
            return Err(IngestError::DuplicateId {
                line: line_no,
                id: record.instance.id,
            });
        }
        records.push(record);
    }
    Ok(records)
}

pub fn read_records(path: impl AsRef<Path>) -> Result<Vec<DatasetRecord>, IngestError> {
    let path = path.as_ref();
    let file = File::open(path).map_err(io_err(path))?;
    parse_records(BufReader::new(file))
}

/// Loads a dataset file, validating every instance; file order is preserved.
pub fn load_dataset(path: impl AsRef<Path>) -> Result<Vec<QAInstance>, IngestError> {
    Ok(read_records(path)?
        .into_iter()
        .map(|r| r.instance)
        .collect())
}

pub fn write_records<'a, I>(path: impl AsRef<Path>, records: I) -> Result<(), IngestError>
where
    I: IntoIterator<Item = &'a DatasetRecord>,
{
    let path = path.as_ref();
    let file = File::create(path).map_err(io_err(path))?;
    let mut out = BufWriter::new(file);
    for record in records {
        let line = serde_json::to_string(record).expect("dataset records always serialize");
        writeln!(out, "{line}").map_err(io_err(path))?;
    }
    out.flush().map_err(io_err(path))
}

pub fn write_dataset(path: impl AsRef<Path>, instances: &[QAInstance]) -> Result<(), IngestError> {
    let records: Vec<DatasetRecord> = instances.iter().cloned().map(Into::into).collect();
    write_records(path, &records)
}

/// Lowercased tokens split on non-alphanumeric boundaries.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect()
}

/// Words whose presence marks a question as referring to table layout.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PositionalWordList {
    words: BTreeSet<String>,
}

impl Default for PositionalWordList {
    fn default() -> Self {
        PositionalWordList {
            words: DEFAULT_POSITIONAL_WORDS
                .iter()
                .map(|w| w.to_string())
                .collect(),
        }
    }
}

impl PositionalWordList {
    pub fn from_words<I, S>(words: I) -> Result<Self, IngestError>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let words: BTreeSet<String> = words
            .into_iter()
            .map(|w| w.as_ref().trim().to_lowercase())
            .filter(|w| !w.is_empty())
            .collect();
        if words.is_empty() {
            return Err(IngestError::EmptyWordList);
        }
        Ok(PositionalWordList { words })
    }

    /// Reads one word per line.
    pub fn load(path: impl AsRef<Path>) -> Result<Self, IngestError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(io_err(path))?;
        Self::from_words(text.lines())
    }

    pub fn contains(&self, token: &str) -> bool {
        self.words.contains(token)
    }

    pub fn words(&self) -> impl Iterator<Item = &str> {
        self.words.iter().map(String::as_str)
    }

    pub fn matches(&self, question: &str) -> bool {
        tokenize(question).iter().any(|t| self.contains(t))
    }
}

/// Splits instances into (kept, removed); removed questions mention a
/// positional word. Input order is preserved within each side.
pub fn filter_positional_questions(
    instances: Vec<QAInstance>,
    words: &PositionalWordList,
) -> (Vec<QAInstance>, Vec<QAInstance>) {
    instances
        .into_iter()
        .partition(|i| !words.matches(&i.question))
}
