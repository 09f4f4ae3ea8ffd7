//! Extraction (EQ) vs reasoning (RQ) question labelling.
//!
//! The rule-based labeller marks a question RQ when no gold answer appears
//! verbatim (after normalization) among the table cells, or when the question
//! carries a comparative/superlative cue. The combined strategy keeps an EQ
//! label only when a secondary classifier agrees.

use std::collections::BTreeSet;
use std::path::Path;
use std::time::Duration;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::external::{self, ExternalError};
use crate::harness::serialize::serialize;
use crate::ingest::tokenize;
use crate::table::{normalize_answer, QAInstance, QuestionType, Table};

pub const DEFAULT_EXPLICIT_WORDS: &[&str] = &[
    "most", "least", "more", "less", "fewer", "fewest", "best", "worst", "greater", "greatest",
    "smaller", "higher", "lower", "larger", "bigger", "longer", "shorter", "earlier", "later",
    "highest", "lowest", "largest", "smallest", "longest", "shortest", "latest", "earliest",
    "biggest",
];

pub const DEFAULT_EXCEPTIONS: &[&str] = &[
    "other",
    "another",
    "number",
    "order",
    "over",
    "under",
    "after",
    "never",
    "water",
    "player",
    "river",
    "per",
    "summer",
    "winter",
    "winner",
    "runner",
    "member",
    "manager",
    "leader",
    "owner",
    "driver",
    "partner",
    "writer",
    "singer",
    "teacher",
    "officer",
    "minister",
    "premier",
    "center",
    "corner",
    "chapter",
    "quarter",
    "character",
    "career",
    "letter",
    "paper",
    "power",
    "tower",
    "mother",
    "father",
    "brother",
    "sister",
    "daughter",
    "september",
    "october",
    "november",
    "december",
];

#[derive(Debug, thiserror::Error)]
pub enum ClassifyError {
    #[error("lexicon words also listed as exceptions: {0:?}")]
    LexiconConflict(Vec<String>),
    #[error("reading lexicon {path}: {message}")]
    LexiconFile { path: String, message: String },
    #[error("secondary classifier failed: {0}")]
    Secondary(#[from] ExternalError),
    #[error("secondary classifier returned unrecognized label {0:?}")]
    BadLabel(String),
}

/// Comparative/superlative cue detector replacing a POS tagger: an explicit
/// word list, `-est`/`-er` suffix rules and an exception list.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ComparativeLexicon {
    explicit_words: BTreeSet<String>,
    exceptions: BTreeSet<String>,
    min_est_stem: usize,
    min_er_stem: usize,
}

/// Overrides for [`ComparativeLexicon`]; absent fields keep the defaults.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LexiconConfig {
    #[serde(default)]
    pub explicit_words: Option<Vec<String>>,
    #[serde(default)]
    pub exceptions: Option<Vec<String>>,
    #[serde(default)]
    pub min_est_stem: Option<usize>,
    #[serde(default)]
    pub min_er_stem: Option<usize>,
}

impl Default for ComparativeLexicon {
    fn default() -> Self {
        Self::new(
            DEFAULT_EXPLICIT_WORDS.iter().copied(),
            DEFAULT_EXCEPTIONS.iter().copied(),
        )
        .expect("default lexicon is consistent")
    }
}

impl ComparativeLexicon {
    pub fn new<I, J, S, T>(explicit: I, exceptions: J) -> Result<Self, ClassifyError>
    where
        I: IntoIterator<Item = S>,
        J: IntoIterator<Item = T>,
        S: AsRef<str>,
        T: AsRef<str>,
    {
        let explicit_words: BTreeSet<String> = explicit
            .into_iter()
            .map(|w| w.as_ref().to_lowercase())
            .collect();
        let exceptions: BTreeSet<String> = exceptions
            .into_iter()
            .map(|w| w.as_ref().to_lowercase())
            .collect();
        let overlap: Vec<String> = explicit_words.intersection(&exceptions).cloned().collect();
        if !overlap.is_empty() {
            return Err(ClassifyError::LexiconConflict(overlap));
        }
        Ok(ComparativeLexicon {
            explicit_words,
            exceptions,
            min_est_stem: 3,
            min_er_stem: 4,
        })
    }

    pub fn from_config(config: &LexiconConfig) -> Result<Self, ClassifyError> {
        let defaults = Self::default();
        let explicit = config
            .explicit_words
            .clone()
            .unwrap_or_else(|| defaults.explicit_words.iter().cloned().collect());
        let exceptions = config
            .exceptions
            .clone()
            .unwrap_or_else(|| defaults.exceptions.iter().cloned().collect());
        let mut lexicon = Self::new(explicit, exceptions)?;
        lexicon.min_est_stem = config.min_est_stem.unwrap_or(defaults.min_est_stem);
        lexicon.min_er_stem = config.min_er_stem.unwrap_or(defaults.min_er_stem);
        Ok(lexicon)
    }

    /// Loads a JSON [`LexiconConfig`].
    pub fn load(path: impl AsRef<Path>) -> Result<Self, ClassifyError> {
        let path = path.as_ref();
        let file_err = |message: String| ClassifyError::LexiconFile {
            path: path.display().to_string(),
            message,
        };
        let text = std::fs::read_to_string(path).map_err(|e| file_err(e.to_string()))?;
        let config: LexiconConfig =
            serde_json::from_str(&text).map_err(|e| file_err(e.to_string()))?;
        Self::from_config(&config)
    }

    pub fn is_cue(&self, token: &str) -> bool {
        let token = token.to_lowercase();
        if self.exceptions.contains(&token) {
            return false;
        }
        if self.explicit_words.contains(&token) {
            return true;
        }
        let stem_len = |suffix: &str| token.strip_suffix(suffix).map(|s| s.chars().count());
        matches!(stem_len("est"), Some(n) if n >= self.min_est_stem)
            || matches!(stem_len("er"), Some(n) if n >= self.min_er_stem)
    }

    pub fn has_cue(&self, question: &str) -> bool {
        tokenize(question).iter().any(|t| self.is_cue(t))
    }
}

/// Pluggable second opinion consulted by [`classify_combined`].
pub trait SecondaryClassifier: Sync {
    fn classify(
        &self,
        question: &str,
        table: &Table,
        answers: &[String],
    ) -> Result<QuestionType, ClassifyError>;
}

/// Always answers the same label.
#[derive(Debug, Clone, Copy)]
pub struct ConstantClassifier(pub QuestionType);

impl SecondaryClassifier for ConstantClassifier {
    fn classify(&self, _: &str, _: &Table, _: &[String]) -> Result<QuestionType, ClassifyError> {
        Ok(self.0)
    }
}

impl<F> SecondaryClassifier for F
where
    F: Fn(&str, &Table, &[String]) -> Result<QuestionType, ClassifyError> + Sync,
{
    fn classify(
        &self,
        question: &str,
        table: &Table,
        answers: &[String],
    ) -> Result<QuestionType, ClassifyError> {
        self(question, table, answers)
    }
}

fn parse_label(text: &str) -> Result<QuestionType, ClassifyError> {
    match text
        .split_whitespace()
        .next()
        .map(str::to_uppercase)
        .as_deref()
    {
        Some("EQ") => Ok(QuestionType::Extraction),
        Some("RQ") => Ok(QuestionType::Reasoning),
        _ => Err(ClassifyError::BadLabel(text.trim().to_string())),
    }
}

/// Runs a shell command per question. Stdin carries the question on the first
/// line and the serialized table on the second; stdout must start with `EQ`
/// or `RQ`.
#[derive(Debug, Clone)]
pub struct SubprocessClassifier {
    pub command: String,
    pub timeout: Duration,
    pub retries: usize,
}

impl SecondaryClassifier for SubprocessClassifier {
    fn classify(
        &self,
        question: &str,
        table: &Table,
        _: &[String],
    ) -> Result<QuestionType, ClassifyError> {
        let input = format!("{}\n{}\n", question.replace('\n', " "), serialize(table));
        let out = external::with_retries(self.retries, || {
            external::run_with_stdin(&self.command, &input, self.timeout)
        })?;
        parse_label(&out)
    }
}

/// POSTs `{question, table_serialized, answers}` and expects `{"label": "EQ"|"RQ"}`.
#[derive(Debug, Clone)]
pub struct HttpClassifier {
    pub url: String,
    pub timeout: Duration,
    pub retries: usize,
}

#[derive(Serialize)]
struct ClassifyRequest<'a> {
    question: &'a str,
    table_serialized: String,
    answers: &'a [String],
}

#[derive(Deserialize)]
struct ClassifyResponse {
    label: String,
}

impl SecondaryClassifier for HttpClassifier {
    fn classify(
        &self,
        question: &str,
        table: &Table,
        answers: &[String],
    ) -> Result<QuestionType, ClassifyError> {
        let body = ClassifyRequest {
            question,
            table_serialized: serialize(table).into_string(),
            answers,
        };
        let resp: ClassifyResponse = external::with_retries(self.retries, || {
            external::post_json(&self.url, &body, self.timeout)
        })?;
        parse_label(&resp.label)
    }
}

pub fn answer_in_table(instance: &QAInstance) -> bool {
    let gold: BTreeSet<String> = instance.normalized_answers().into_iter().collect();
    instance
        .table
        .cells()
        .any(|(_, cell)| gold.contains(&normalize_answer(cell.raw())))
}

pub fn classify_rule_based(instance: &QAInstance, lexicon: &ComparativeLexicon) -> QuestionType {
    if !answer_in_table(instance) || lexicon.has_cue(&instance.question) {
        QuestionType::Reasoning
    } else {
        QuestionType::Extraction
    }
}

pub fn classify_combined(
    instance: &QAInstance,
    lexicon: &ComparativeLexicon,
    secondary: &dyn SecondaryClassifier,
) -> Result<QuestionType, ClassifyError> {
    if classify_rule_based(instance, lexicon) == QuestionType::Reasoning {
        return Ok(QuestionType::Reasoning);
    }
    let label = secondary.classify(&instance.question, &instance.table, &instance.answers)?;
    Ok(if label == QuestionType::Extraction {
        QuestionType::Extraction
    } else {
        QuestionType::Reasoning
    })
}

pub enum Strategy<'a> {
    RuleBased,
    Combined(&'a dyn SecondaryClassifier),
}

#[derive(Debug, Default)]
pub struct ClassifyOutcome {
    pub instances: Vec<QAInstance>,
    /// (instance id, error) for instances left UNKNOWN.
    pub failures: Vec<(String, String)>,
}

/// Labels a dataset. Existing EQ/RQ annotations are kept unless `relabel`.
/// At most `max_in_flight` instances are classified concurrently.
pub fn classify_all(
    instances: Vec<QAInstance>,
    lexicon: &ComparativeLexicon,
    strategy: &Strategy<'_>,
    max_in_flight: usize,
    relabel: bool,
) -> ClassifyOutcome {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(max_in_flight.max(1))
        .build()
        .expect("thread pool");
    let results: Vec<(QAInstance, Option<String>)> = pool.install(|| {
        instances
            .into_par_iter()
            .map(|mut inst| {
                if !relabel && inst.question_type != QuestionType::Unknown {
                    return (inst, None);
                }
                let label = match strategy {
                    Strategy::RuleBased => Ok(classify_rule_based(&inst, lexicon)),
                    Strategy::Combined(secondary) => classify_combined(&inst, lexicon, *secondary),
                };
                match label {
                    Ok(l) => {
                        inst.question_type = l;
                        (inst, None)
                    }
                    Err(e) => {
                        inst.question_type = QuestionType::Unknown;
                        (inst, Some(e.to_string()))
                    }
                }
            })
            .collect()
    });
    let mut outcome = ClassifyOutcome::default();
    for (inst, err) in results {
        if let Some(e) = err {
            outcome.failures.push((inst.id.clone(), e));
        }
        outcome.instances.push(inst);
    }
    outcome
}
