//! Table perturbations and their provenance records.
//!
//! Every perturbation is a pure function of `(instance, kind, seed)`. The
//! returned [`PerturbationRecord`] holds enough parameters to rebuild the
//! output without the random stream; see [`replay`].

pub mod relevance;
pub mod structure;
pub mod value;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::oracle::OracleError;
use crate::rng::Rng;
use crate::table::{AggregationKind, CellCoord, QAInstance, QuestionType, Table};

pub use relevance::{remove_relevant_cells, remove_table, shift_relevant_rows};
pub use structure::{
    locate_target, partition_indices, shift_target_col, shift_target_row, shuffle_cols,
    shuffle_rows, transpose, transpose_table, untranspose_table, ColPart, Partition, RowPart,
    TargetLocation,
};
pub use value::{
    apply_edits, import_annotated, modify_answer_change, modify_no_change, shorten, value_ac,
    value_nc, EditClass, ShortenedTable, ValueEdit,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum PerturbationKind {
    ShuffleRows,
    ShuffleCols,
    TargetRowTop,
    TargetRowMiddle,
    TargetRowBottom,
    TargetColFront,
    TargetColBack,
    Transpose,
    RemoveRelevant,
    RemoveTable,
    ShiftRelevantRows,
    ValueAc,
    ValueNc,
    /// Restriction to the cells an aggregation reads; the baseline of the
    /// value perturbations.
    Shortened,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Family {
    Structure,
    Relevance,
    Value,
}

impl PerturbationKind {
    pub const ALL: [PerturbationKind; 14] = [
        PerturbationKind::ShuffleRows,
        PerturbationKind::ShuffleCols,
        PerturbationKind::TargetRowTop,
        PerturbationKind::TargetRowMiddle,
        PerturbationKind::TargetRowBottom,
        PerturbationKind::TargetColFront,
        PerturbationKind::TargetColBack,
        PerturbationKind::Transpose,
        PerturbationKind::RemoveRelevant,
        PerturbationKind::RemoveTable,
        PerturbationKind::ShiftRelevantRows,
        PerturbationKind::ValueAc,
        PerturbationKind::ValueNc,
        PerturbationKind::Shortened,
    ];

    pub const STRUCTURE: [PerturbationKind; 8] = [
        PerturbationKind::ShuffleRows,
        PerturbationKind::ShuffleCols,
        PerturbationKind::TargetRowTop,
        PerturbationKind::TargetRowMiddle,
        PerturbationKind::TargetRowBottom,
        PerturbationKind::TargetColFront,
        PerturbationKind::TargetColBack,
        PerturbationKind::Transpose,
    ];

    /// Lowercase name used on the command line and in file names.
    pub fn name(self) -> &'static str {
        match self {
            PerturbationKind::ShuffleRows => "shuffle_rows",
            PerturbationKind::ShuffleCols => "shuffle_cols",
            PerturbationKind::TargetRowTop => "target_row_top",
            PerturbationKind::TargetRowMiddle => "target_row_middle",
            PerturbationKind::TargetRowBottom => "target_row_bottom",
            PerturbationKind::TargetColFront => "target_col_front",
            PerturbationKind::TargetColBack => "target_col_back",
            PerturbationKind::Transpose => "transpose",
            PerturbationKind::RemoveRelevant => "remove_relevant",
            PerturbationKind::RemoveTable => "remove_table",
            PerturbationKind::ShiftRelevantRows => "shift_relevant_rows",
            PerturbationKind::ValueAc => "value_ac",
            PerturbationKind::ValueNc => "value_nc",
            PerturbationKind::Shortened => "shortened",
        }
    }

    pub fn family(self) -> Family {
        use PerturbationKind::*;
        match self {
            ShuffleRows | ShuffleCols | TargetRowTop | TargetRowMiddle | TargetRowBottom
            | TargetColFront | TargetColBack | Transpose => Family::Structure,
            RemoveRelevant | RemoveTable | ShiftRelevantRows => Family::Relevance,
            ValueAc | ValueNc | Shortened => Family::Value,
        }
    }

    /// Question type the perturbation is defined for.
    pub fn question_type(self) -> QuestionType {
        match self.family() {
            Family::Structure => QuestionType::Extraction,
            Family::Relevance | Family::Value => QuestionType::Reasoning,
        }
    }

    /// Whether the output depends on the seed.
    pub fn is_randomized(self) -> bool {
        !matches!(
            self,
            PerturbationKind::Transpose
                | PerturbationKind::RemoveRelevant
                | PerturbationKind::RemoveTable
                | PerturbationKind::Shortened
        )
    }

    /// Whether the gold answer changes under the perturbation.
    pub fn changes_answer(self) -> bool {
        self == PerturbationKind::ValueAc
    }
}

impl fmt::Display for PerturbationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for PerturbationKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let wanted = s.trim().to_lowercase();
        PerturbationKind::ALL
            .into_iter()
            .find(|k| k.name() == wanted)
            .ok_or_else(|| format!("unknown perturbation kind {s:?}"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Axis {
    Rows,
    Cols,
}

/// Kind-specific parameters sufficient to replay a perturbation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum PerturbationParams {
    /// `order[i]` is the input index placed at output position `i`.
    Permutation {
        axis: Axis,
        order: Vec<usize>,
    },
    TargetShift {
        axis: Axis,
        target: TargetLocation,
        from: usize,
        to: usize,
        part_range: [usize; 2],
    },
    Transpose {
        index_headers: bool,
        original_rows: usize,
        original_cols: usize,
    },
    RemoveRelevant {
        cells: Vec<CellCoord>,
    },
    RemoveTable {
        original_rows: usize,
        original_cols: usize,
    },
    ShiftRelevantRows {
        rows: Vec<usize>,
        insert_at: usize,
        no_op: bool,
    },
    Shorten {
        row_map: Vec<usize>,
        col_map: Vec<usize>,
    },
    ValueEdits {
        row_map: Vec<usize>,
        col_map: Vec<usize>,
        edits: Vec<ValueEdit>,
        original_answers: Vec<String>,
        new_answers: Vec<String>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerturbationRecord {
    pub kind: PerturbationKind,
    pub seed: u64,
    pub source_id: String,
    pub params: PerturbationParams,
}

/// A derived instance together with its provenance.
#[derive(Debug, Clone, PartialEq)]
pub struct Perturbed {
    pub instance: QAInstance,
    pub record: PerturbationRecord,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum PerturbError {
    #[error("{kind} is defined for {expected} questions, instance is {found}")]
    NotApplicable {
        kind: PerturbationKind,
        expected: QuestionType,
        found: QuestionType,
    },
    #[error("no table cell matches a gold answer")]
    NoTargetFound,
    #[error("table has {found} rows, need at least {needed}")]
    TooFewRows { needed: usize, found: usize },
    #[error("table has {found} columns, need at least {needed}")]
    TooFewColumns { needed: usize, found: usize },
    #[error("missing annotation: {0}")]
    MissingAnnotation(&'static str),
    #[error("invalid instance: {}", .0.join("; "))]
    Invalid(Vec<String>),
    #[error("oracle: {0}")]
    Oracle(#[from] OracleError),
    #[error("oracle answer {oracle:?} does not match gold answers {gold:?}")]
    AnswerMismatch { oracle: String, gold: Vec<String> },
    #[error("{0:?} does not support this value perturbation")]
    UnsupportedKind(AggregationKind),
    #[error("cannot perturb: {0}")]
    CannotPerturb(String),
    #[error("edit at {coord} expected {expected:?}, found {found:?}")]
    EditMismatch {
        coord: CellCoord,
        expected: String,
        found: String,
    },
    #[error("record kind {record} cannot be replayed as {requested}")]
    ReplayMismatch {
        record: PerturbationKind,
        requested: PerturbationKind,
    },
}

pub(crate) fn stream(kind: PerturbationKind, instance: &QAInstance, seed: u64) -> Rng {
    Rng::derive(seed, &instance.id, kind.name())
}

pub(crate) fn check_valid(instance: &QAInstance) -> Result<(), PerturbError> {
    let violations = crate::table::validate(instance);
    if violations.is_empty() {
        Ok(())
    } else {
        Err(PerturbError::Invalid(violations))
    }
}

/// Applies `kind` to `instance` with `seed`, enforcing the question type the
/// kind is defined for.
pub fn apply(
    kind: PerturbationKind,
    instance: &QAInstance,
    seed: u64,
) -> Result<Perturbed, PerturbError> {
    let expected = kind.question_type();
    if instance.question_type != expected {
        return Err(PerturbError::NotApplicable {
            kind,
            expected,
            found: instance.question_type,
        });
    }
    check_valid(instance)?;
    use PerturbationKind::*;
    match kind {
        ShuffleRows => shuffle_rows(instance, seed),
        ShuffleCols => shuffle_cols(instance, seed),
        TargetRowTop => shift_target_row(instance, RowPart::Top, seed),
        TargetRowMiddle => shift_target_row(instance, RowPart::Middle, seed),
        TargetRowBottom => shift_target_row(instance, RowPart::Bottom, seed),
        TargetColFront => shift_target_col(instance, ColPart::Front, seed),
        TargetColBack => shift_target_col(instance, ColPart::Back, seed),
        Transpose => Ok(transpose(instance, true, seed)),
        RemoveRelevant => remove_relevant_cells(instance, seed),
        RemoveTable => Ok(remove_table(instance, seed)),
        ShiftRelevantRows => shift_relevant_rows(instance, seed),
        ValueAc => value_ac(instance, seed),
        ValueNc => value_nc(instance, seed),
        Shortened => value::shorten_instance(instance, seed),
    }
}

/// Rebuilds a perturbed instance from the original and a record, without
/// drawing random numbers.
pub fn replay(
    original: &QAInstance,
    record: &PerturbationRecord,
) -> Result<QAInstance, PerturbError> {
    use PerturbationParams as P;
    let mut out = original.clone();
    match &record.params {
        P::Permutation {
            axis: Axis::Rows,
            order,
        } => {
            structure::reorder_rows(&mut out, order);
        }
        P::Permutation {
            axis: Axis::Cols,
            order,
        } => {
            structure::reorder_cols(&mut out, order);
        }
        P::TargetShift { axis, from, to, .. } => {
            let n = match axis {
                Axis::Rows => out.table.n_rows(),
                Axis::Cols => out.table.n_cols(),
            };
            let order = structure::move_order(n, *from, *to);
            match axis {
                Axis::Rows => structure::reorder_rows(&mut out, &order),
                Axis::Cols => structure::reorder_cols(&mut out, &order),
            }
        }
        P::Transpose { index_headers, .. } => {
            out = transpose(original, *index_headers, record.seed).instance;
        }
        P::RemoveRelevant { cells } => {
            for c in cells {
                out.table.rows[c.row][c.col] = crate::table::Cell::blank();
            }
        }
        P::RemoveTable { .. } => {
            out = remove_table(original, record.seed).instance;
        }
        P::ShiftRelevantRows {
            rows, insert_at, ..
        } => {
            let order = relevance::block_order(out.table.n_rows(), rows, *insert_at);
            structure::reorder_rows(&mut out, &order);
        }
        P::Shorten { row_map, col_map } => {
            out = value::project(original, row_map, col_map)?;
        }
        P::ValueEdits {
            row_map,
            col_map,
            edits,
            new_answers,
            ..
        } => {
            let projected = value::project(original, row_map, col_map)?;
            out = value::edited_instance(&projected, edits, new_answers.clone())?;
        }
    }
    Ok(out)
}

/// Occurrences of gold-matching values among data cells, sorted.
pub fn answer_cell_multiset(table: &Table, answers: &[String]) -> Vec<String> {
    let gold: Vec<String> = answers.iter().map(|a| crate::normalize_answer(a)).collect();
    let mut found: Vec<String> = table
        .cells()
        .map(|(_, c)| crate::normalize_answer(c.raw()))
        .filter(|v| gold.contains(v))
        .collect();
    found.sort();
    found
}
