//! Exact match (Em), exact-match difference (Emd), variation percentage (VP)
//! and seed aggregation.
//!
//! Fractions are generic over [`Float`]; counts are always integers so a
//! report can be re-derived exactly.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use num_traits::Float;
use serde::{Deserialize, Serialize};

use crate::classify::ComparativeLexicon;
use crate::perturb::PerturbationKind;
use crate::table::{normalize_answer, QAInstance};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum MetricsError {
    #[error("predictions reference unknown instance ids: {0:?}")]
    UnknownIds(Vec<String>),
    #[error("prediction sets cover different ids (only before: {only_before:?}, only after: {only_after:?})")]
    IdMismatch {
        only_before: Vec<String>,
        only_after: Vec<String>,
    },
    #[error("no values to aggregate")]
    Empty,
}

/// Evaluation condition: the unperturbed dataset or a `(kind, seed)` pair.
///
/// Rendered and serialized as `original` or `<kind>.seed<k>`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Condition {
    Original,
    Perturbed { kind: PerturbationKind, seed: u64 },
}

impl fmt::Display for Condition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Condition::Original => f.write_str("original"),
            Condition::Perturbed { kind, seed } => write!(f, "{kind}.seed{seed}"),
        }
    }
}

impl FromStr for Condition {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s == "original" {
            return Ok(Condition::Original);
        }
        let (kind, seed) = s
            .rsplit_once(".seed")
            .ok_or_else(|| format!("condition {s:?} is neither original nor <kind>.seed<k>"))?;
        Ok(Condition::Perturbed {
            kind: kind.parse()?,
            seed: seed.parse().map_err(|e| format!("condition {s:?}: {e}"))?,
        })
    }
}

impl Serialize for Condition {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Condition {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Predictions of one model under one condition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionSet {
    pub model_id: String,
    pub condition: Condition,
    pub entries: BTreeMap<String, String>,
}

impl PredictionSet {
    pub fn new(model_id: impl Into<String>, condition: Condition) -> Self {
        PredictionSet {
            model_id: model_id.into(),
            condition,
            entries: BTreeMap::new(),
        }
    }

    pub fn with_entries<I, K, V>(mut self, entries: I) -> Self
    where
        I: IntoIterator<Item = (K, V)>,
        K: Into<String>,
        V: Into<String>,
    {
        self.entries
            .extend(entries.into_iter().map(|(k, v)| (k.into(), v.into())));
        self
    }
}

fn frac<F: Float>(num: usize, den: usize) -> F {
    if den == 0 {
        return F::zero();
    }
    F::from(num).expect("count fits") / F::from(den).expect("count fits")
}

/// Ids in `preds` that `gold` does not know about.
fn unknown_ids(preds: &PredictionSet, gold: &[QAInstance]) -> Vec<String> {
    let known: BTreeSet<&str> = gold.iter().map(|i| i.id.as_str()).collect();
    preds
        .entries
        .keys()
        .filter(|k| !known.contains(k.as_str()))
        .cloned()
        .collect()
}

/// Per-instance correctness; a missing prediction is `false`.
pub fn correctness(
    preds: &PredictionSet,
    gold: &[QAInstance],
) -> Result<BTreeMap<String, bool>, MetricsError> {
    let unknown = unknown_ids(preds, gold);
    if !unknown.is_empty() {
        return Err(MetricsError::UnknownIds(unknown));
    }
    Ok(gold
        .iter()
        .map(|inst| {
            let ok = preds
                .entries
                .get(&inst.id)
                .is_some_and(|p| inst.is_correct(p));
            (inst.id.clone(), ok)
        })
        .collect())
}

/// Correct / total counts behind an Em value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EmCount {
    pub correct: usize,
    pub total: usize,
    pub missing: usize,
}

impl EmCount {
    pub fn fraction<F: Float>(&self) -> F {
        frac(self.correct, self.total)
    }
}

pub fn em_count(preds: &PredictionSet, gold: &[QAInstance]) -> Result<EmCount, MetricsError> {
    let correct = correctness(preds, gold)?;
    Ok(EmCount {
        correct: correct.values().filter(|&&c| c).count(),
        total: gold.len(),
        missing: gold
            .iter()
            .filter(|i| !preds.entries.contains_key(&i.id))
            .count(),
    })
}

/// Fraction of gold instances answered correctly; 0 for an empty gold set.
pub fn em<F: Float>(preds: &PredictionSet, gold: &[QAInstance]) -> Result<F, MetricsError> {
    Ok(em_count(preds, gold)?.fraction())
}

pub fn emd<F: Float>(em_perturbed: F, em_original: F) -> F {
    em_perturbed - em_original
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VpResult<F> {
    pub vp: F,
    pub c2w: usize,
    pub w2c: usize,
    pub n: usize,
}

impl<F: Float> VpResult<F> {
    pub fn percent(&self) -> F {
        self.vp * F::from(100).expect("100 fits")
    }
}

/// VP from `(correct_before, correct_after)` pairs.
pub fn vp_from_outcomes<F: Float>(outcomes: impl IntoIterator<Item = (bool, bool)>) -> VpResult<F> {
    let (mut c2w, mut w2c, mut n) = (0, 0, 0);
    for (before, after) in outcomes {
        n += 1;
        match (before, after) {
            (true, false) => c2w += 1,
            (false, true) => w2c += 1,
            _ => {}
        }
    }
    VpResult {
        vp: frac(c2w + w2c, n),
        c2w,
        w2c,
        n,
    }
}

fn id_set(p: &PredictionSet) -> BTreeSet<&String> {
    p.entries.keys().collect()
}

fn check_same_ids(before: &PredictionSet, after: &PredictionSet) -> Result<(), MetricsError> {
    let (a, b) = (id_set(before), id_set(after));
    if a == b {
        return Ok(());
    }
    Err(MetricsError::IdMismatch {
        only_before: a.difference(&b).map(|s| s.to_string()).collect(),
        only_after: b.difference(&a).map(|s| s.to_string()).collect(),
    })
}

/// VP with separate gold before and after, over the ids of `gold_after`
/// that `gold_before` also knows.
pub fn vp_with_gold<F: Float>(
    before: &PredictionSet,
    gold_before: &[QAInstance],
    after: &PredictionSet,
    gold_after: &[QAInstance],
) -> Result<VpResult<F>, MetricsError> {
    check_same_ids(before, after)?;
    let cb = correctness(before, gold_before)?;
    let ca = correctness(after, gold_after)?;
    Ok(vp_from_outcomes(
        ca.iter().filter_map(|(id, &a)| cb.get(id).map(|&b| (b, a))),
    ))
}

/// VP between two prediction sets covering the same ids, scored against the
/// same gold.
pub fn vp<F: Float>(
    before: &PredictionSet,
    after: &PredictionSet,
    gold: &[QAInstance],
) -> Result<VpResult<F>, MetricsError> {
    let covered: BTreeSet<&String> = id_set(before);
    let gold: Vec<QAInstance> = gold
        .iter()
        .filter(|i| covered.contains(&i.id))
        .cloned()
        .collect();
    vp_with_gold(before, &gold, after, &gold)
}

/// Fraction of shared ids whose normalized predictions differ.
pub fn disagreement_rate<F: Float>(
    a: &PredictionSet,
    b: &PredictionSet,
) -> Result<F, MetricsError> {
    check_same_ids(a, b)?;
    let differing = a
        .entries
        .iter()
        .filter(|(id, p)| normalize_answer(p) != normalize_answer(&b.entries[*id]))
        .count();
    Ok(frac(differing, a.entries.len()))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeedSummary<F> {
    pub mean: F,
    /// Sample standard deviation (n - 1 denominator); 0 for one value.
    pub std: F,
    pub n: usize,
}

pub fn aggregate_seeds<F: Float>(values: &[F]) -> Result<SeedSummary<F>, MetricsError> {
    if values.is_empty() {
        return Err(MetricsError::Empty);
    }
    let n = values.len();
    let count = F::from(n).expect("count fits");
    let mean = values.iter().fold(F::zero(), |acc, &v| acc + v) / count;
    let std = if n == 1 {
        F::zero()
    } else {
        let ss = values
            .iter()
            .fold(F::zero(), |acc, &v| acc + (v - mean) * (v - mean));
        (ss / (count - F::one())).sqrt()
    };
    Ok(SeedSummary { mean, std, n })
}

/// VP split by whether the question carries a comparative cue. `gap` is
/// `None` when either split is empty.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GapResult<F> {
    pub compare: Option<VpResult<F>>,
    pub noncompare: Option<VpResult<F>>,
    pub gap: Option<F>,
}

pub(crate) fn gap_from_outcomes<F: Float>(
    outcomes: impl IntoIterator<Item = (bool, (bool, bool))>,
) -> GapResult<F> {
    let (cmp, non): (Vec<_>, Vec<_>) = outcomes.into_iter().partition(|(is_cmp, _)| *is_cmp);
    let split = |v: Vec<(bool, (bool, bool))>| {
        (!v.is_empty()).then(|| vp_from_outcomes(v.into_iter().map(|(_, o)| o)))
    };
    let compare = split(cmp);
    let noncompare = split(non);
    let gap = match (&compare, &noncompare) {
        (Some(c), Some(n)) => Some(c.vp - n.vp),
        _ => None,
    };
    GapResult {
        compare,
        noncompare,
        gap,
    }
}

/// VP on comparative-cue questions minus VP on the rest.
pub fn vp_gap<F: Float>(
    before: &PredictionSet,
    after: &PredictionSet,
    gold: &[QAInstance],
    lexicon: &ComparativeLexicon,
) -> Result<GapResult<F>, MetricsError> {
    check_same_ids(before, after)?;
    let covered = id_set(before);
    let gold: Vec<&QAInstance> = gold.iter().filter(|i| covered.contains(&i.id)).collect();
    let owned: Vec<QAInstance> = gold.iter().map(|i| (*i).clone()).collect();
    let cb = correctness(before, &owned)?;
    let ca = correctness(after, &owned)?;
    Ok(gap_from_outcomes(gold.iter().map(|i| {
        (lexicon.has_cue(&i.question), (cb[&i.id], ca[&i.id]))
    })))
}
