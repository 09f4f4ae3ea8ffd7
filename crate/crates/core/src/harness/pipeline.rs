//! Perturb, query a backend and score, for every requested `(kind, seed)`.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Duration;

use num_traits::Float;
use rayon::prelude::*;
use serde::Deserialize;

use super::backend::{
    BackendError, FileBackend, HttpBackend, ModelBackend, ReferenceBackend, SubprocessBackend,
};
use super::reference::ReferenceModel;
use super::report::{
    BackendFailure, ConditionResult, KindSummary, MetricsReport, ReportFlags, ReportMetadata,
    SkippedInstance,
};
use super::serialize::{length_filter, token_count};
use crate::classify::{ComparativeLexicon, LexiconConfig};
use crate::ingest::{filter_positional_questions, load_dataset, PositionalWordList};
use crate::metrics::{aggregate_seeds, gap_from_outcomes, vp_from_outcomes, Condition};
use crate::perturb::{self, Family, PerturbationKind};
use crate::table::{normalize_answer, QAInstance};

pub const DEFAULT_SEEDS: [u64; 5] = [0, 1, 2, 3, 4];
pub const DEFAULT_MAX_IN_FLIGHT: usize = 4;
pub const DEFAULT_TIMEOUT_SECS: u64 = 30;

const SERIALIZATION_NOTE: &str =
    "flat \"col : h1 | h2 row 1 : c11 | c12\" text shared by every backend; scores from systems that use their own serialization are not directly comparable";
const TOKEN_NOTE: &str = "whitespace-split tokens of the serialized table plus the question";

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error("config error: {0}")]
    Config(String),
    #[error("data error: {0}")]
    Data(String),
}

impl PipelineError {
    /// Process exit code: 1 for configuration problems, 2 for data problems.
    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::Config(_) => 1,
            PipelineError::Data(_) => 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase", deny_unknown_fields)]
pub enum BackendConfig {
    Reference {
        model: String,
        #[serde(default)]
        answer: Option<String>,
    },
    File {
        dir: PathBuf,
    },
    Subprocess {
        command: String,
        #[serde(default = "default_timeout")]
        timeout_secs: u64,
        #[serde(default)]
        retries: usize,
    },
    Http {
        url: String,
        #[serde(default = "default_timeout")]
        timeout_secs: u64,
        #[serde(default)]
        retries: usize,
    },
}

fn default_timeout() -> u64 {
    DEFAULT_TIMEOUT_SECS
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    dataset: PathBuf,
    #[serde(default)]
    kinds: Option<Vec<String>>,
    #[serde(default)]
    seeds: Option<Vec<u64>>,
    #[serde(default)]
    max_tokens: Option<usize>,
    #[serde(default)]
    max_in_flight: Option<usize>,
    backend: BackendConfig,
    #[serde(default)]
    lexicon: Option<LexiconConfig>,
    #[serde(default)]
    positional_filter: bool,
    #[serde(default)]
    positional_words: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub dataset: PathBuf,
    pub kinds: Vec<PerturbationKind>,
    pub seeds: Vec<u64>,
    pub max_tokens: Option<usize>,
    pub max_in_flight: usize,
    pub backend: BackendConfig,
    pub lexicon: LexiconConfig,
    /// Drop questions mentioning a positional word before evaluating.
    pub positional_filter: bool,
    /// Word list for the positional filter; the built-in list when absent.
    pub positional_words: Option<PathBuf>,
}

/// Perturbation kinds evaluated when a config does not list any.
pub fn default_kinds() -> Vec<PerturbationKind> {
    PerturbationKind::ALL
        .into_iter()
        .filter(|k| *k != PerturbationKind::Shortened)
        .collect()
}

impl PipelineConfig {
    /// Parses TOML; relative paths are resolved against `base_dir`.
    pub fn from_toml(text: &str, base_dir: &Path) -> Result<Self, PipelineError> {
        let raw: RawConfig =
            toml::from_str(text).map_err(|e| PipelineError::Config(e.to_string()))?;
        let kinds = match raw.kinds {
            None => default_kinds(),
            Some(names) => names
                .iter()
                .map(|n| n.parse::<PerturbationKind>())
                .collect::<Result<Vec<_>, _>>()
                .map_err(PipelineError::Config)?,
        };
        let seeds = raw.seeds.unwrap_or_else(|| DEFAULT_SEEDS.to_vec());
        if seeds.is_empty() {
            return Err(PipelineError::Config("seeds must not be empty".into()));
        }
        if raw.max_tokens == Some(0) {
            return Err(PipelineError::Config(
                "max_tokens must be at least 1".into(),
            ));
        }
        let max_in_flight = raw.max_in_flight.unwrap_or(DEFAULT_MAX_IN_FLIGHT);
        if max_in_flight == 0 {
            return Err(PipelineError::Config(
                "max_in_flight must be at least 1".into(),
            ));
        }
        let resolve = |p: PathBuf| if p.is_absolute() { p } else { base_dir.join(p) };
        let backend = match raw.backend {
            BackendConfig::File { dir } => BackendConfig::File { dir: resolve(dir) },
            other => other,
        };
        Ok(PipelineConfig {
            dataset: resolve(raw.dataset),
            kinds,
            seeds,
            max_tokens: raw.max_tokens,
            max_in_flight,
            backend,
            lexicon: raw.lexicon.unwrap_or_default(),
            positional_filter: raw.positional_filter || raw.positional_words.is_some(),
            positional_words: raw.positional_words.map(resolve),
        })
    }

    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| PipelineError::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or_else(|| Path::new("."));
        Self::from_toml(&text, base)
    }

    pub fn build_lexicon(&self) -> Result<ComparativeLexicon, PipelineError> {
        ComparativeLexicon::from_config(&self.lexicon)
            .map_err(|e| PipelineError::Config(e.to_string()))
    }

    pub fn build_backend(
        &self,
        lexicon: &ComparativeLexicon,
    ) -> Result<Box<dyn ModelBackend>, PipelineError> {
        Ok(match &self.backend {
            BackendConfig::Reference { model, answer } => {
                let model = ReferenceModel::from_name(model, answer.as_deref())
                    .map_err(|e| PipelineError::Config(e.to_string()))?;
                Box::new(ReferenceBackend {
                    model,
                    lexicon: lexicon.clone(),
                })
            }
            BackendConfig::File { dir } => {
                if !dir.is_dir() {
                    return Err(PipelineError::Config(format!(
                        "prediction directory {} does not exist",
                        dir.display()
                    )));
                }
                Box::new(FileBackend::new(dir.clone()))
            }
            BackendConfig::Subprocess {
                command,
                timeout_secs,
                retries,
            } => Box::new(SubprocessBackend {
                command: command.clone(),
                timeout: Duration::from_secs(*timeout_secs),
                retries: *retries,
            }),
            BackendConfig::Http {
                url,
                timeout_secs,
                retries,
            } => Box::new(HttpBackend {
                url: url.clone(),
                timeout: Duration::from_secs(*timeout_secs),
                retries: *retries,
            }),
        })
    }
}

/// In-memory evaluation settings.
#[derive(Debug, Clone)]
pub struct EvalOptions {
    pub dataset_label: String,
    pub kinds: Vec<PerturbationKind>,
    pub seeds: Vec<u64>,
    pub max_tokens: Option<usize>,
    pub max_in_flight: usize,
    pub lexicon: ComparativeLexicon,
    pub positional: Option<PositionalWordList>,
}

impl Default for EvalOptions {
    fn default() -> Self {
        EvalOptions {
            dataset_label: String::new(),
            kinds: default_kinds(),
            seeds: DEFAULT_SEEDS.to_vec(),
            max_tokens: None,
            max_in_flight: DEFAULT_MAX_IN_FLIGHT,
            lexicon: ComparativeLexicon::default(),
            positional: None,
        }
    }
}

/// Loads the dataset and backend named by `config` and evaluates them.
pub fn run_pipeline(config: &PipelineConfig) -> Result<MetricsReport<f64>, PipelineError> {
    let lexicon = config.build_lexicon()?;
    let backend = config.build_backend(&lexicon)?;
    let positional = if config.positional_filter {
        Some(match &config.positional_words {
            Some(p) => {
                PositionalWordList::load(p).map_err(|e| PipelineError::Config(e.to_string()))?
            }
            None => PositionalWordList::default(),
        })
    } else {
        None
    };
    let instances =
        load_dataset(&config.dataset).map_err(|e| PipelineError::Data(e.to_string()))?;
    let label = config
        .dataset
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default();
    let options = EvalOptions {
        dataset_label: label,
        kinds: config.kinds.clone(),
        seeds: config.seeds.clone(),
        max_tokens: config.max_tokens,
        max_in_flight: config.max_in_flight,
        lexicon,
        positional,
    };
    evaluate(instances, backend.as_ref(), &options)
}

struct Scored {
    preds: BTreeMap<String, String>,
    failures: Vec<BackendFailure>,
}

fn query(
    pool: &rayon::ThreadPool,
    backend: &dyn ModelBackend,
    condition: Condition,
    instances: &[QAInstance],
) -> Scored {
    let results: Vec<(String, Result<String, BackendError>)> = pool.install(|| {
        instances
            .par_iter()
            .map(|i| (i.id.clone(), backend.predict(condition, i)))
            .collect()
    });
    let mut preds = BTreeMap::new();
    let mut failures = Vec::new();
    for (id, r) in results {
        match r {
            Ok(p) => {
                preds.insert(id, p);
            }
            Err(e) => failures.push(BackendFailure {
                condition,
                instance_id: id,
                error: e.to_string(),
            }),
        }
    }
    Scored { preds, failures }
}

fn is_correct(preds: &BTreeMap<String, String>, inst: &QAInstance) -> bool {
    preds.get(&inst.id).is_some_and(|p| inst.is_correct(p))
}

fn frac<F: Float>(num: usize, den: usize) -> F {
    if den == 0 {
        F::zero()
    } else {
        F::from(num).expect("fits") / F::from(den).expect("fits")
    }
}

struct Baseline<'a> {
    condition: Condition,
    instances: BTreeMap<&'a str, &'a QAInstance>,
    preds: &'a BTreeMap<String, String>,
}

fn score<F: Float>(
    condition: Condition,
    instances: &[QAInstance],
    preds: &BTreeMap<String, String>,
    baseline: Option<&Baseline<'_>>,
    lexicon: &ComparativeLexicon,
    changes_answer: bool,
) -> ConditionResult<F> {
    let n = instances.len();
    let after: Vec<bool> = instances.iter().map(|i| is_correct(preds, i)).collect();
    let correct = after.iter().filter(|&&c| c).count();
    let missing = instances
        .iter()
        .filter(|i| !preds.contains_key(&i.id))
        .count();
    let em: F = frac(correct, n);
    let mut result = ConditionResult {
        condition,
        baseline: None,
        n,
        correct,
        missing,
        em,
        baseline_em: None,
        emd: None,
        vp: None,
        gap: None,
        em_against_original_answers: None,
    };
    let Some(base) = baseline else { return result };
    let before: Vec<bool> = instances
        .iter()
        .map(|i| {
            let b = base
                .instances
                .get(i.id.as_str())
                .expect("perturbed ids come from the baseline");
            is_correct(base.preds, b)
        })
        .collect();
    let pairs: Vec<(bool, bool)> = before.iter().copied().zip(after.iter().copied()).collect();
    let baseline_em: F = frac(before.iter().filter(|&&c| c).count(), n);
    result.baseline = Some(base.condition);
    result.baseline_em = Some(baseline_em);
    result.emd = Some(em - baseline_em);
    result.vp = Some(vp_from_outcomes(pairs.iter().copied()));
    result.gap = Some(gap_from_outcomes(
        instances
            .iter()
            .map(|i| lexicon.has_cue(&i.question))
            .zip(pairs.iter().copied()),
    ));
    if changes_answer {
        let old_correct = instances
            .iter()
            .filter(|i| {
                let b = base.instances[i.id.as_str()];
                preds.get(&i.id).is_some_and(|p| b.is_correct(p))
            })
            .count();
        result.em_against_original_answers = Some(frac(old_correct, n));
    }
    result
}

/// Evaluates `backend` on `instances` under ORIGINAL and every requested
/// `(kind, seed)`.
///
/// Structure and relevance kinds are compared against ORIGINAL. Value kinds
/// are compared against the SHORTENED condition, which is evaluated once
/// whenever a value kind is requested. Instances a perturbation cannot be
/// applied to are itemized in `skipped`; backend errors are itemized in
/// `failures` and scored wrong.
pub fn evaluate<F: Float>(
    instances: Vec<QAInstance>,
    backend: &dyn ModelBackend,
    options: &EvalOptions,
) -> Result<MetricsReport<F>, PipelineError> {
    let total = instances.len();
    let mut skipped = Vec::new();
    let mut failures = Vec::new();
    let mut instances = instances;
    if let Some(words) = &options.positional {
        let (kept, removed) = filter_positional_questions(instances, words);
        skipped.extend(removed.into_iter().map(|i| SkippedInstance {
            condition: Condition::Original,
            instance_id: i.id,
            reason: "question mentions a positional word".into(),
        }));
        instances = kept;
    }
    if let Some(max) = options.max_tokens {
        let (kept, dropped) = length_filter(instances, max);
        skipped.extend(dropped.into_iter().map(|i| SkippedInstance {
            condition: Condition::Original,
            reason: format!("{} tokens exceed max_tokens {max}", token_count(&i)),
            instance_id: i.id,
        }));
        instances = kept;
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(options.max_in_flight.max(1))
        .build()
        .map_err(|e| PipelineError::Config(e.to_string()))?;
    let lexicon = &options.lexicon;

    let original = query(&pool, backend, Condition::Original, &instances);
    if !instances.is_empty() && original.failures.len() == instances.len() {
        return Err(PipelineError::Config(format!(
            "backend {} failed on every ORIGINAL instance; first error: {}",
            backend.model_id(),
            original.failures[0].error
        )));
    }
    failures.extend(original.failures);
    let original_preds = original.preds;
    let mut conditions = vec![score::<F>(
        Condition::Original,
        &instances,
        &original_preds,
        None,
        lexicon,
        false,
    )];
    let original_base = Baseline {
        condition: Condition::Original,
        instances: instances.iter().map(|i| (i.id.as_str(), i)).collect(),
        preds: &original_preds,
    };

    let apply_all = |kind: PerturbationKind, seed: u64, skipped: &mut Vec<SkippedInstance>| {
        let condition = Condition::Perturbed { kind, seed };
        let mut out = Vec::new();
        for inst in instances
            .iter()
            .filter(|i| i.question_type == kind.question_type())
        {
            match perturb::apply(kind, inst, seed) {
                Ok(p) => out.push(p.instance),
                Err(e) => skipped.push(SkippedInstance {
                    condition,
                    instance_id: inst.id.clone(),
                    reason: e.to_string(),
                }),
            }
        }
        out
    };

    let wants_value = options.kinds.iter().any(|k| k.family() == Family::Value);
    let shortened_condition = Condition::Perturbed {
        kind: PerturbationKind::Shortened,
        seed: 0,
    };
    let shortened_instances = if wants_value {
        apply_all(PerturbationKind::Shortened, 0, &mut skipped)
    } else {
        Vec::new()
    };
    let shortened = query(&pool, backend, shortened_condition, &shortened_instances);
    failures.extend(shortened.failures);
    let shortened_preds = shortened.preds;
    if wants_value {
        conditions.push(score(
            shortened_condition,
            &shortened_instances,
            &shortened_preds,
            Some(&original_base),
            lexicon,
            false,
        ));
    }
    let shortened_base = Baseline {
        condition: shortened_condition,
        instances: shortened_instances
            .iter()
            .map(|i| (i.id.as_str(), i))
            .collect(),
        preds: &shortened_preds,
    };

    let mut table_independent: Option<bool> = None;
    let mut summaries = Vec::new();
    for &kind in &options.kinds {
        if kind == PerturbationKind::Shortened {
            continue;
        }
        let base = if kind.family() == Family::Value {
            &shortened_base
        } else {
            &original_base
        };
        let mut per_seed = Vec::new();
        for &seed in &options.seeds {
            let condition = Condition::Perturbed { kind, seed };
            let perturbed = apply_all(kind, seed, &mut skipped);
            let scored = query(&pool, backend, condition, &perturbed);
            failures.extend(scored.failures);
            if kind == PerturbationKind::RemoveTable {
                let unchanged = perturbed.iter().all(|i| {
                    match (scored.preds.get(&i.id), original_preds.get(&i.id)) {
                        (Some(a), Some(b)) => normalize_answer(a) == normalize_answer(b),
                        _ => false,
                    }
                });
                table_independent =
                    Some(table_independent.unwrap_or(true) && unchanged && !perturbed.is_empty());
            }
            let result = score::<F>(
                condition,
                &perturbed,
                &scored.preds,
                Some(base),
                lexicon,
                kind.changes_answer(),
            );
            per_seed.push(result.clone());
            conditions.push(result);
        }
        let values = |f: &dyn Fn(&ConditionResult<F>) -> Option<F>| -> Option<Vec<F>> {
            per_seed.iter().map(f).collect()
        };
        let summarize = |v: Option<Vec<F>>| v.and_then(|v| aggregate_seeds(&v).ok());
        let em = summarize(values(&|c| Some(c.em)));
        let emd = summarize(values(&|c| c.emd));
        let vp = summarize(values(&|c| c.vp.map(|v| v.vp)));
        let gap = summarize(values(&|c| c.gap.and_then(|g| g.gap)));
        if let (Some(em), Some(emd), Some(vp)) = (em, emd, vp) {
            summaries.push(KindSummary {
                kind,
                em,
                emd,
                vp,
                gap,
            });
        }
    }

    Ok(MetricsReport {
        model_id: backend.model_id(),
        metadata: ReportMetadata {
            dataset: options.dataset_label.clone(),
            instances: total,
            evaluated_instances: instances.len(),
            kinds: options.kinds.clone(),
            seeds: options.seeds.clone(),
            max_tokens: options.max_tokens,
            serialization: SERIALIZATION_NOTE.into(),
            token_counting: TOKEN_NOTE.into(),
        },
        conditions,
        summaries,
        flags: ReportFlags { table_independent },
        skipped,
        failures,
    })
}
