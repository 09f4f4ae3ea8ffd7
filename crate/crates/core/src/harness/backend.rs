//! Model backends: precomputed prediction files, subprocesses, HTTP
//! endpoints and the built-in reference models.

use std::collections::BTreeMap;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::reference::{ReferenceError, ReferenceModel};
use super::serialize::serialize;
use crate::classify::ComparativeLexicon;
use crate::external::{self, ExternalError};
use crate::metrics::Condition;
use crate::table::QAInstance;

#[derive(Debug, thiserror::Error)]
pub enum BackendError {
    #[error("no prediction for {id} under {condition}")]
    Missing { condition: Condition, id: String },
    #[error("{path}: {message}")]
    File { path: PathBuf, message: String },
    #[error(transparent)]
    External(#[from] ExternalError),
    #[error(transparent)]
    Reference(#[from] ReferenceError),
}

pub trait ModelBackend: Sync {
    /// Identifier written into reports.
    fn model_id(&self) -> String;

    fn predict(&self, condition: Condition, instance: &QAInstance) -> Result<String, BackendError>;
}

/// One line of a predictions file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PredictionLine {
    pub instance_id: String,
    pub prediction: String,
}

pub fn read_predictions(path: &Path) -> Result<BTreeMap<String, String>, BackendError> {
    let file_err = |message: String| BackendError::File {
        path: path.to_path_buf(),
        message,
    };
    let file = std::fs::File::open(path).map_err(|e| file_err(e.to_string()))?;
    let mut out = BTreeMap::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| file_err(e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: PredictionLine =
            serde_json::from_str(&line).map_err(|e| file_err(format!("line {}: {e}", i + 1)))?;
        if out
            .insert(rec.instance_id.clone(), rec.prediction)
            .is_some()
        {
            return Err(file_err(format!(
                "line {}: duplicate id {}",
                i + 1,
                rec.instance_id
            )));
        }
    }
    Ok(out)
}

pub fn write_predictions(
    path: &Path,
    predictions: &BTreeMap<String, String>,
) -> std::io::Result<()> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    for (id, prediction) in predictions {
        let line = PredictionLine {
            instance_id: id.clone(),
            prediction: prediction.clone(),
        };
        writeln!(
            out,
            "{}",
            serde_json::to_string(&line).expect("plain strings serialize")
        )?;
    }
    out.flush()
}

/// File stem used for a condition: `original`, or `<kind>.seed<k>`.
pub fn condition_file_stem(condition: Condition) -> String {
    condition.to_string()
}

type PredictionCache = BTreeMap<Condition, Arc<BTreeMap<String, String>>>;

/// Reads `original.jsonl` and `<kind>.seed<k>.jsonl` from a directory,
/// falling back to `<kind>.jsonl` for a condition without a per-seed file.
#[derive(Debug)]
pub struct FileBackend {
    dir: PathBuf,
    model_id: String,
    cache: Mutex<PredictionCache>,
}

impl FileBackend {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        let dir = dir.into();
        let model_id = dir
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_else(|| "file".into());
        FileBackend {
            dir,
            model_id,
            cache: Mutex::new(BTreeMap::new()),
        }
    }

    fn path_for(&self, condition: Condition) -> PathBuf {
        let per_seed = self
            .dir
            .join(format!("{}.jsonl", condition_file_stem(condition)));
        match condition {
            Condition::Perturbed { kind, .. } if !per_seed.exists() => {
                self.dir.join(format!("{}.jsonl", kind.name()))
            }
            _ => per_seed,
        }
    }

    fn predictions(
        &self,
        condition: Condition,
    ) -> Result<Arc<BTreeMap<String, String>>, BackendError> {
        let mut cache = self.cache.lock().expect("cache lock poisoned");
        if let Some(p) = cache.get(&condition) {
            return Ok(Arc::clone(p));
        }
        let loaded = Arc::new(read_predictions(&self.path_for(condition))?);
        cache.insert(condition, Arc::clone(&loaded));
        Ok(loaded)
    }
}

impl ModelBackend for FileBackend {
    fn model_id(&self) -> String {
        self.model_id.clone()
    }

    fn predict(&self, condition: Condition, instance: &QAInstance) -> Result<String, BackendError> {
        self.predictions(condition)?
            .get(&instance.id)
            .cloned()
            .ok_or_else(|| BackendError::Missing {
                condition,
                id: instance.id.clone(),
            })
    }
}

/// Question and serialized table on stdin, one per line; the first stdout
/// line is the answer.
pub fn model_input(instance: &QAInstance) -> String {
    format!(
        "{}\n{}\n",
        instance.question.replace('\n', " "),
        serialize(&instance.table)
    )
}

#[derive(Debug, Clone)]
pub struct SubprocessBackend {
    pub command: String,
    pub timeout: Duration,
    pub retries: usize,
}

impl ModelBackend for SubprocessBackend {
    fn model_id(&self) -> String {
        format!("subprocess:{}", self.command)
    }

    fn predict(&self, _: Condition, instance: &QAInstance) -> Result<String, BackendError> {
        let input = model_input(instance);
        let out = external::with_retries(self.retries, || {
            external::run_with_stdin(&self.command, &input, self.timeout)
        })?;
        Ok(out.lines().next().unwrap_or("").trim().to_string())
    }
}

#[derive(Serialize)]
struct AnswerRequest<'a> {
    question: &'a str,
    table_serialized: String,
}

#[derive(Deserialize)]
struct AnswerResponse {
    answer: String,
}

/// POSTs `{question, table_serialized}` and reads `{answer}`.
#[derive(Debug, Clone)]
pub struct HttpBackend {
    pub url: String,
    pub timeout: Duration,
    pub retries: usize,
}

impl ModelBackend for HttpBackend {
    fn model_id(&self) -> String {
        format!("http:{}", self.url)
    }

    fn predict(&self, _: Condition, instance: &QAInstance) -> Result<String, BackendError> {
        let body = AnswerRequest {
            question: &instance.question,
            table_serialized: serialize(&instance.table).into_string(),
        };
        let resp: AnswerResponse = external::with_retries(self.retries, || {
            external::post_json(&self.url, &body, self.timeout)
        })?;
        Ok(resp.answer)
    }
}

#[derive(Debug, Clone)]
pub struct ReferenceBackend {
    pub model: ReferenceModel,
    pub lexicon: ComparativeLexicon,
}

impl ReferenceBackend {
    pub fn new(model: ReferenceModel) -> Self {
        ReferenceBackend {
            model,
            lexicon: ComparativeLexicon::default(),
        }
    }
}

impl ModelBackend for ReferenceBackend {
    fn model_id(&self) -> String {
        self.model.to_string()
    }

    fn predict(&self, _: Condition, instance: &QAInstance) -> Result<String, BackendError> {
        Ok(self.model.run(instance, &self.lexicon)?)
    }
}
