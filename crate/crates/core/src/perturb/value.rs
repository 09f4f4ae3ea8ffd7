//! Value perturbations for reasoning questions.
//!
//! The table is first shortened to the cells an aggregation reads. Then one
//! or two cells are edited so that the oracle answer changes (AC) or stays
//! the same (NC). Every candidate edit is re-checked with the oracle before
//! it is emitted; ties and non-qualifying draws are resampled a bounded
//! number of times.

use std::cmp::Ordering;
use std::collections::BTreeSet;
use std::io::{BufRead, BufReader};
use std::path::Path;

use num_bigint::BigInt;
use num_traits::{One, Signed, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};

use super::{
    stream, PerturbError, PerturbationKind, PerturbationParams, PerturbationRecord, Perturbed,
};
use crate::ingest::IngestError;
use crate::oracle::{column_values, evaluate_aggregation, extremal_row, numeric_at};
use crate::rng::Rng;
use crate::scalar::Scalar;
use crate::table::{
    normalize_answer, validate, AggregationDescriptor, AggregationKind, Cell, CellCoord,
    QAInstance, Table,
};
use crate::Exact;

/// Draws per perturbation before giving up.
pub const MAX_ATTEMPTS: usize = 16;

/// Multipliers for answer-preserving inflation.
pub const INFLATE_RANGE: (u64, u64) = (10, 1000);

/// Divisors for answer-preserving deflation; all keep decimals terminating.
pub const DEFLATE_DIVISORS: [u64; 10] = [2, 4, 5, 8, 10, 20, 25, 50, 100, 1000];

const SWAP_WORDS: &[(&str, &str)] = &[
    ("west", "east"),
    ("north", "south"),
    ("left", "right"),
    ("old", "new"),
    ("big", "small"),
    ("up", "down"),
    ("home", "away"),
    ("red", "blue"),
    ("yes", "no"),
    ("won", "lost"),
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum EditClass {
    Numeric,
    String,
    RowRemoval,
}

/// One cell change. For `RowRemoval`, `coord.row` is removed and `old` is the
/// content of `coord` before removal.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValueEdit {
    pub coord: CellCoord,
    pub old: String,
    pub new: String,
    pub edit_class: EditClass,
}

/// A table restricted to the cells an aggregation reads.
#[derive(Debug, Clone, PartialEq)]
pub struct ShortenedTable {
    pub table: Table,
    /// Original row index of each shortened row.
    pub row_map: Vec<usize>,
    /// Original column index of each shortened column.
    pub col_map: Vec<usize>,
    /// The descriptor in shortened coordinates.
    pub descriptor: AggregationDescriptor,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValueModification {
    pub table: Table,
    pub edits: Vec<ValueEdit>,
    pub answer: String,
}

fn descriptor(instance: &QAInstance) -> Result<&AggregationDescriptor, PerturbError> {
    instance
        .aggregation
        .as_ref()
        .ok_or(PerturbError::MissingAnnotation("aggregation"))
}

fn shorten_maps(instance: &QAInstance, d: &AggregationDescriptor) -> (Vec<usize>, Vec<usize>) {
    let mut cols = BTreeSet::from([d.value_col]);
    cols.extend(d.label_col);
    cols.extend(d.filter.as_ref().map(|f| f.col));
    let rows: Vec<usize> = match (&d.kind, &d.operands) {
        (AggregationKind::Diff | AggregationKind::CompareTwo, Some(ops)) => {
            cols.extend(ops.iter().map(|c| c.col));
            ops.iter()
                .map(|c| c.row)
                .collect::<BTreeSet<_>>()
                .into_iter()
                .collect()
        }
        _ => (0..instance.table.n_rows()).collect(),
    };
    (rows, cols.into_iter().collect())
}

fn position(map: &[usize], index: usize, what: &str) -> Result<usize, PerturbError> {
    map.iter().position(|&i| i == index).ok_or_else(|| {
        PerturbError::Invalid(vec![format!("{what} {index} not kept by shortening")])
    })
}

/// Restricts `instance` to the given original rows/columns, remapping the
/// annotations. Relevant cells outside the projection are dropped.
pub(crate) fn project(
    instance: &QAInstance,
    row_map: &[usize],
    col_map: &[usize],
) -> Result<QAInstance, PerturbError> {
    let t = &instance.table;
    if let Some(&r) = row_map.iter().find(|&&r| r >= t.n_rows()) {
        return Err(PerturbError::Invalid(vec![format!("row {r} out of range")]));
    }
    if let Some(&c) = col_map.iter().find(|&&c| c >= t.n_cols()) {
        return Err(PerturbError::Invalid(vec![format!(
            "column {c} out of range"
        )]));
    }
    let table = Table {
        headers: col_map.iter().map(|&c| t.headers[c].clone()).collect(),
        rows: row_map
            .iter()
            .map(|&r| col_map.iter().map(|&c| t.rows[r][c].clone()).collect())
            .collect(),
    };
    let mut out = instance.clone();
    out.table = table;
    out.relevant_cells = instance.relevant_cells.as_ref().map(|cells| {
        cells
            .iter()
            .filter_map(|c| {
                let row = row_map.iter().position(|&r| r == c.row)?;
                let col = col_map.iter().position(|&k| k == c.col)?;
                Some(CellCoord::new(row, col))
            })
            .collect()
    });
    if let Some(d) = &instance.aggregation {
        let mut nd = d.clone();
        nd.value_col = position(col_map, d.value_col, "column")?;
        if let Some(l) = d.label_col {
            nd.label_col = Some(position(col_map, l, "column")?);
        }
        if let (Some(f), Some(nf)) = (&d.filter, nd.filter.as_mut()) {
            nf.col = position(col_map, f.col, "column")?;
        }
        if let Some(ops) = &d.operands {
            let mut mapped = [CellCoord::new(0, 0); 2];
            for (slot, c) in mapped.iter_mut().zip(ops) {
                *slot = CellCoord::new(
                    position(row_map, c.row, "row")?,
                    position(col_map, c.col, "column")?,
                );
            }
            nd.operands = Some(mapped);
        }
        out.aggregation = Some(nd);
    }
    Ok(out)
}

/// Shortens the instance's table to the rows and columns its aggregation
/// reads. The oracle answer is checked to be unchanged.
pub fn shorten(
    instance: &QAInstance,
) -> Result<(ShortenedTable, PerturbationRecord), PerturbError> {
    shorten_seeded(instance, 0)
}

fn shorten_seeded(
    instance: &QAInstance,
    seed: u64,
) -> Result<(ShortenedTable, PerturbationRecord), PerturbError> {
    let d = descriptor(instance)?;
    super::check_valid(instance)?;
    let (row_map, col_map) = shorten_maps(instance, d);
    let projected = project(instance, &row_map, &col_map)?;
    let descriptor = projected
        .aggregation
        .clone()
        .expect("projection keeps the descriptor");
    let before = evaluate_aggregation(&instance.table, d)?;
    let after = evaluate_aggregation(&projected.table, &descriptor)?;
    if normalize_answer(&before) != normalize_answer(&after) {
        return Err(PerturbError::CannotPerturb(format!(
            "shortening changed the oracle answer from {before:?} to {after:?}"
        )));
    }
    let record = PerturbationRecord {
        kind: PerturbationKind::Shortened,
        seed,
        source_id: instance.id.clone(),
        params: PerturbationParams::Shorten {
            row_map: row_map.clone(),
            col_map: col_map.clone(),
        },
    };
    Ok((
        ShortenedTable {
            table: projected.table,
            row_map,
            col_map,
            descriptor,
        },
        record,
    ))
}

pub(crate) fn shorten_instance(
    instance: &QAInstance,
    seed: u64,
) -> Result<Perturbed, PerturbError> {
    let (short, record) = shorten_seeded(instance, seed)?;
    let instance = project(instance, &short.row_map, &short.col_map)?;
    Ok(Perturbed { instance, record })
}

/// Applies edits after checking each `old` value. Cell edits are applied
/// before row removals.
pub fn apply_edits(table: &Table, edits: &[ValueEdit]) -> Result<Table, PerturbError> {
    for e in edits {
        let found = table.cell(e.coord).ok_or_else(|| {
            PerturbError::Invalid(vec![format!("edit at {} out of range", e.coord)])
        })?;
        if found.raw() != e.old {
            return Err(PerturbError::EditMismatch {
                coord: e.coord,
                expected: e.old.clone(),
                found: found.raw().to_string(),
            });
        }
    }
    let mut out = table.clone();
    for e in edits
        .iter()
        .filter(|e| e.edit_class != EditClass::RowRemoval)
    {
        out.rows[e.coord.row][e.coord.col] = Cell::new(e.new.clone());
    }
    for row in removed_rows(edits).into_iter().rev() {
        out.rows.remove(row);
    }
    Ok(out)
}

fn removed_rows(edits: &[ValueEdit]) -> Vec<usize> {
    edits
        .iter()
        .filter(|e| e.edit_class == EditClass::RowRemoval)
        .map(|e| e.coord.row)
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect()
}

/// Applies `edits` to a (shortened) instance, sets the answers and shifts row
/// annotations past removed rows.
pub(crate) fn edited_instance(
    projected: &QAInstance,
    edits: &[ValueEdit],
    answers: Vec<String>,
) -> Result<QAInstance, PerturbError> {
    let mut out = projected.clone();
    out.table = apply_edits(&projected.table, edits)?;
    out.answers = answers;
    let removed = removed_rows(edits);
    if !removed.is_empty() {
        let shift = |row: usize| -> Option<usize> {
            (!removed.contains(&row)).then(|| row - removed.iter().filter(|&&r| r < row).count())
        };
        if let Some(cells) = out.relevant_cells.as_mut() {
            *cells = cells
                .iter()
                .filter_map(|c| shift(c.row).map(|row| CellCoord::new(row, c.col)))
                .collect();
        }
        if let Some(agg) = out.aggregation.as_mut() {
            if let Some(ops) = agg.operands.as_mut() {
                for c in ops.iter_mut() {
                    c.row = shift(c.row).ok_or_else(|| {
                        PerturbError::CannotPerturb("row removal deleted an operand".into())
                    })?;
                }
            }
        }
    }
    Ok(out)
}

fn exact_int(v: u64) -> Exact {
    Exact::from_integer(BigInt::from(v))
}

/// Integer delta in `[1, max(1, ceil(10 * spread))]`.
fn sample_delta(rng: &mut Rng, spread: &Exact) -> Exact {
    let hi = (spread.abs() * exact_int(10)).ceil().to_integer();
    let hi = hi
        .to_u64()
        .unwrap_or(u64::MAX / 2)
        .clamp(1, 1_000_000_000_000);
    exact_int(rng.range_inclusive(1, hi))
}

fn spread(values: &[Exact]) -> Exact {
    let max = values
        .iter()
        .max_by(|a, b| a.partial_cmp(b).unwrap_or(Ordering::Equal));
    let min = values
        .iter()
        .min_by(|a, b| a.partial_cmp(b).unwrap_or(Ordering::Equal));
    match (max, min) {
        (Some(a), Some(b)) => a - b,
        _ => Exact::zero(),
    }
}

fn at_least_one(x: Exact) -> Exact {
    if x < Exact::one() {
        Exact::one()
    } else {
        x
    }
}

fn inflate(rng: &mut Rng, v: &Exact, spread: &Exact) -> Exact {
    let factor = exact_int(rng.range_inclusive(INFLATE_RANGE.0, INFLATE_RANGE.1));
    if v.is_positive() {
        v * factor
    } else {
        v + factor * at_least_one(spread.clone())
    }
}

fn deflate(rng: &mut Rng, v: &Exact, spread: &Exact) -> Exact {
    let divisor = exact_int(DEFLATE_DIVISORS[rng.index(DEFLATE_DIVISORS.len())]);
    if v.is_positive() {
        v / divisor
    } else {
        v - divisor * at_least_one(spread.clone())
    }
}

fn numeric_edit(table: &Table, coord: CellCoord, new: Exact) -> ValueEdit {
    ValueEdit {
        coord,
        old: table.cell(coord).expect("coord in range").raw().to_string(),
        new: new.to_canonical(),
        edit_class: EditClass::Numeric,
    }
}

fn string_edit(table: &Table, coord: CellCoord, new: String) -> ValueEdit {
    ValueEdit {
        coord,
        old: table.cell(coord).expect("coord in range").raw().to_string(),
        new,
        edit_class: EditClass::String,
    }
}

fn swap_word(word: &str) -> Option<String> {
    let lower = word.to_lowercase();
    let swapped = SWAP_WORDS.iter().find_map(|(a, b)| {
        if lower == *a {
            Some(*b)
        } else if lower == *b {
            Some(*a)
        } else {
            None
        }
    })?;
    let mut chars = word.chars();
    Some(match chars.next() {
        Some(c) if c.is_uppercase() => {
            let mut s: String = swapped[..1].to_uppercase();
            s.push_str(&swapped[1..]);
            s
        }
        _ => swapped.to_string(),
    })
}

/// A different string for `old` whose normalized form avoids `avoid`.
///
/// Antonym swaps (West/East, ...) are tried first, then numbered suffixes.
pub fn alter_text(old: &str, avoid: &[String]) -> String {
    let mut candidates = Vec::new();
    let words: Vec<&str> = old.split(' ').collect();
    if let Some((i, swapped)) = words
        .iter()
        .enumerate()
        .find_map(|(i, w)| swap_word(w).map(|s| (i, s)))
    {
        let mut replaced: Vec<String> = words.iter().map(|w| w.to_string()).collect();
        replaced[i] = swapped;
        candidates.push(replaced.join(" "));
    }
    for suffix in ["II", "III", "IV", "V", "VI"] {
        candidates.push(if old.is_empty() {
            suffix.to_string()
        } else {
            format!("{old} {suffix}")
        });
    }
    let old_norm = normalize_answer(old);
    candidates
        .into_iter()
        .find(|c| {
            let n = normalize_answer(c);
            n != old_norm && !avoid.contains(&n)
        })
        .unwrap_or_else(|| format!("{old} (changed)"))
}

fn is_numeric(table: &Table, coord: CellCoord) -> bool {
    table.cell(coord).and_then(Cell::number).is_some()
}

fn propose_change(short: &ShortenedTable, rng: &mut Rng) -> Result<Vec<ValueEdit>, PerturbError> {
    use AggregationKind::*;
    let t = &short.table;
    let d = &short.descriptor;
    let n = t.n_rows();
    match d.kind {
        Argmax | Argmin => {
            if n < 2 {
                return Err(PerturbError::TooFewRows {
                    needed: 2,
                    found: n,
                });
            }
            let values: Vec<Exact> = column_values(t, d.value_col)?;
            let want = if d.kind == Argmax {
                Ordering::Greater
            } else {
                Ordering::Less
            };
            let ext = extremal_row(&values, want, d.kind)?;
            let others: Vec<Exact> = values
                .iter()
                .enumerate()
                .filter(|(i, _)| *i != ext)
                .map(|(_, v)| v.clone())
                .collect();
            let runner_up = extremal_row(&others, want, d.kind)
                .map(|i| others[i].clone())
                .or_else(|_| {
                    // tie among the others: any of them is the runner-up value
                    let pick = if d.kind == Argmax {
                        others.iter().max()
                    } else {
                        others.iter().min()
                    };
                    pick.cloned().ok_or(PerturbError::TooFewRows {
                        needed: 2,
                        found: n,
                    })
                })?;
            let delta = sample_delta(rng, &spread(&values));
            let new = if d.kind == Argmin {
                runner_up + delta
            } else {
                runner_up - delta
            };
            Ok(vec![numeric_edit(t, CellCoord::new(ext, d.value_col), new)])
        }
        Count => {
            let f = d
                .filter
                .as_ref()
                .ok_or(PerturbError::MissingAnnotation("filter"))?;
            if n == 0 {
                return Err(PerturbError::TooFewRows {
                    needed: 1,
                    found: 0,
                });
            }
            let wanted = normalize_answer(&f.value);
            let matching: Vec<usize> = (0..n)
                .filter(|&r| normalize_answer(t.rows[r][f.col].raw()) == wanted)
                .collect();
            if matching.is_empty() {
                let r = rng.index(n);
                return Ok(vec![string_edit(
                    t,
                    CellCoord::new(r, f.col),
                    f.value.clone(),
                )]);
            }
            let r = matching[rng.index(matching.len())];
            let coord = CellCoord::new(r, f.col);
            if rng.coin() {
                Ok(vec![ValueEdit {
                    coord,
                    old: t.rows[r][f.col].raw().to_string(),
                    new: String::new(),
                    edit_class: EditClass::RowRemoval,
                }])
            } else {
                let new = alter_text(t.rows[r][f.col].raw(), &[wanted]);
                Ok(vec![string_edit(t, coord, new)])
            }
        }
        Sum | Avg => {
            if n == 0 {
                return Err(PerturbError::TooFewRows {
                    needed: 1,
                    found: 0,
                });
            }
            let values: Vec<Exact> = column_values(t, d.value_col)?;
            let r = rng.index(n);
            let delta = sample_delta(rng, &spread(&values));
            let new = if rng.coin() {
                &values[r] + delta
            } else {
                &values[r] - delta
            };
            Ok(vec![numeric_edit(t, CellCoord::new(r, d.value_col), new)])
        }
        Diff | CompareTwo => {
            let ops = d
                .operands
                .ok_or(PerturbError::MissingAnnotation("operands"))?;
            let va: Exact = numeric_at(t, ops[0])?;
            let vb: Exact = numeric_at(t, ops[1])?;
            let gap = (&va - &vb).abs();
            let delta = sample_delta(rng, &gap);
            if d.kind == Diff {
                let i = rng.index(2);
                let v = if i == 0 { &va } else { &vb };
                let new = if rng.coin() { v + delta } else { v - delta };
                return Ok(vec![numeric_edit(t, ops[i], new)]);
            }
            let (smaller, larger) = if va < vb {
                (ops[0], &vb)
            } else {
                (ops[1], &va)
            };
            Ok(vec![numeric_edit(t, smaller, larger + delta)])
        }
    }
}

fn propose_keep(short: &ShortenedTable, rng: &mut Rng) -> Result<Vec<ValueEdit>, PerturbError> {
    use AggregationKind::*;
    let t = &short.table;
    let d = &short.descriptor;
    let n = t.n_rows();
    match d.kind {
        Argmax | Argmin => {
            if n < 2 {
                return Err(PerturbError::TooFewRows {
                    needed: 2,
                    found: n,
                });
            }
            let values: Vec<Exact> = column_values(t, d.value_col)?;
            let want = if d.kind == Argmax {
                Ordering::Greater
            } else {
                Ordering::Less
            };
            let ext = extremal_row(&values, want, d.kind)?;
            let candidates: Vec<usize> = (0..n).filter(|&r| r != ext).collect();
            let r = candidates[rng.index(candidates.len())];
            let s = spread(&values);
            let new = if d.kind == Argmin {
                inflate(rng, &values[r], &s)
            } else {
                deflate(rng, &values[r], &s)
            };
            Ok(vec![numeric_edit(t, CellCoord::new(r, d.value_col), new)])
        }
        Count => {
            let f = d
                .filter
                .as_ref()
                .ok_or(PerturbError::MissingAnnotation("filter"))?;
            let wanted = normalize_answer(&f.value);
            let mut candidates: Vec<CellCoord> = Vec::new();
            for r in 0..n {
                for c in 0..t.n_cols() {
                    let matches = normalize_answer(t.rows[r][f.col].raw()) == wanted;
                    if c != f.col || !matches {
                        candidates.push(CellCoord::new(r, c));
                    }
                }
            }
            if candidates.is_empty() {
                return Err(PerturbError::CannotPerturb(
                    "every cell takes part in the count".into(),
                ));
            }
            let coord = candidates[rng.index(candidates.len())];
            if coord.col != f.col && is_numeric(t, coord) {
                let v: Exact = numeric_at(t, coord)?;
                let delta = sample_delta(rng, &Exact::one());
                return Ok(vec![numeric_edit(t, coord, v + delta)]);
            }
            let avoid = if coord.col == f.col {
                vec![wanted]
            } else {
                vec![]
            };
            Ok(vec![string_edit(
                t,
                coord,
                alter_text(t.rows[coord.row][coord.col].raw(), &avoid),
            )])
        }
        Sum | Avg | Diff => {
            let operands: Vec<CellCoord> = d.operands.map(|o| o.to_vec()).unwrap_or_default();
            let candidates: Vec<CellCoord> = t
                .cells()
                .map(|(coord, _)| coord)
                .filter(|c| match d.kind {
                    Diff => !operands.contains(c),
                    _ => c.col != d.value_col,
                })
                .filter(|c| !is_numeric(t, *c))
                .collect();
            if candidates.is_empty() {
                return Err(PerturbError::UnsupportedKind(d.kind));
            }
            let coord = candidates[rng.index(candidates.len())];
            Ok(vec![string_edit(
                t,
                coord,
                alter_text(t.rows[coord.row][coord.col].raw(), &[]),
            )])
        }
        CompareTwo => {
            let ops = d
                .operands
                .ok_or(PerturbError::MissingAnnotation("operands"))?;
            let va: Exact = numeric_at(t, ops[0])?;
            let vb: Exact = numeric_at(t, ops[1])?;
            let gap = (&va - &vb).abs();
            let (coord, larger) = if va > vb { (ops[0], va) } else { (ops[1], vb) };
            Ok(vec![numeric_edit(t, coord, inflate(rng, &larger, &gap))])
        }
    }
}

fn generate(
    short: &ShortenedTable,
    rng: &mut Rng,
    want_change: bool,
    propose: fn(&ShortenedTable, &mut Rng) -> Result<Vec<ValueEdit>, PerturbError>,
) -> Result<ValueModification, PerturbError> {
    let original = normalize_answer(&evaluate_aggregation(&short.table, &short.descriptor)?);
    for _ in 0..MAX_ATTEMPTS {
        let edits = propose(short, rng)?;
        if edits.is_empty()
            || edits.len() > 2
            || edits
                .iter()
                .any(|e| e.old == e.new && e.edit_class != EditClass::RowRemoval)
        {
            continue;
        }
        let table = apply_edits(&short.table, &edits)?;
        let mut descriptor = short.descriptor.clone();
        if let Some(ops) = descriptor.operands.as_mut() {
            let removed = removed_rows(&edits);
            if ops.iter().any(|c| removed.contains(&c.row)) {
                continue;
            }
            for c in ops.iter_mut() {
                c.row -= removed.iter().filter(|&&r| r < c.row).count();
            }
        }
        match evaluate_aggregation(&table, &descriptor) {
            Ok(answer) if (normalize_answer(&answer) != original) == want_change => {
                return Ok(ValueModification {
                    table,
                    edits,
                    answer,
                });
            }
            _ => continue,
        }
    }
    let what = if want_change {
        "answer-changing"
    } else {
        "answer-preserving"
    };
    Err(PerturbError::CannotPerturb(format!(
        "no {what} edit found after {MAX_ATTEMPTS} attempts"
    )))
}

/// Finds at most two edits that change the oracle answer.
pub fn modify_answer_change(
    short: &ShortenedTable,
    rng: &mut Rng,
) -> Result<ValueModification, PerturbError> {
    generate(short, rng, true, propose_change)
}

/// Finds at most two edits that keep the oracle answer.
pub fn modify_no_change(
    short: &ShortenedTable,
    rng: &mut Rng,
) -> Result<ValueModification, PerturbError> {
    generate(short, rng, false, propose_keep)
}

fn value_perturbation(
    instance: &QAInstance,
    seed: u64,
    kind: PerturbationKind,
) -> Result<Perturbed, PerturbError> {
    let (short, _) = shorten(instance)?;
    let oracle = evaluate_aggregation(&short.table, &short.descriptor)?;
    if !instance
        .normalized_answers()
        .contains(&normalize_answer(&oracle))
    {
        return Err(PerturbError::AnswerMismatch {
            oracle,
            gold: instance.answers.clone(),
        });
    }
    let mut rng = stream(kind, instance, seed);
    let (modification, answers) = if kind == PerturbationKind::ValueAc {
        let m = modify_answer_change(&short, &mut rng)?;
        let answers = vec![m.answer.clone()];
        (m, answers)
    } else {
        (
            modify_no_change(&short, &mut rng)?,
            instance.answers.clone(),
        )
    };
    let projected = project(instance, &short.row_map, &short.col_map)?;
    let edited = edited_instance(&projected, &modification.edits, answers.clone())?;
    Ok(Perturbed {
        instance: edited,
        record: PerturbationRecord {
            kind,
            seed,
            source_id: instance.id.clone(),
            params: PerturbationParams::ValueEdits {
                row_map: short.row_map,
                col_map: short.col_map,
                edits: modification.edits,
                original_answers: instance.answers.clone(),
                new_answers: answers,
            },
        },
    })
}

/// Shortened, answer-changed instance whose gold answer is the new oracle
/// answer.
pub fn value_ac(instance: &QAInstance, seed: u64) -> Result<Perturbed, PerturbError> {
    value_perturbation(instance, seed, PerturbationKind::ValueAc)
}

/// Shortened, answer-preserving instance.
pub fn value_nc(instance: &QAInstance, seed: u64) -> Result<Perturbed, PerturbError> {
    value_perturbation(instance, seed, PerturbationKind::ValueNc)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "status", content = "reason", rename_all = "snake_case")]
pub enum ImportStatus {
    Accepted,
    /// No aggregation descriptor to check against.
    Unchecked,
    Inconsistent(String),
}

/// Line format for externally annotated value perturbations: a dataset record
/// plus the edits (in the record's table coordinates), the expected answer
/// after editing, and `kind` (`VALUE_AC` or `VALUE_NC`).
#[derive(Debug, Clone, Deserialize, Serialize)]
pub struct AnnotatedRecord {
    #[serde(flatten)]
    pub instance: QAInstance,
    pub edits: Vec<ValueEdit>,
    pub expected_answer: String,
    pub kind: PerturbationKind,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnnotatedPerturbation {
    pub original: QAInstance,
    /// Edited instance with `expected_answer` as gold; equal to `original`
    /// when the edits could not be applied.
    pub instance: QAInstance,
    pub edits: Vec<ValueEdit>,
    pub expected_answer: String,
    pub kind: PerturbationKind,
    pub status: ImportStatus,
}

fn check_annotated(record: &AnnotatedRecord) -> (QAInstance, ImportStatus) {
    let original = &record.instance;
    let inconsistent = |why: String| (original.clone(), ImportStatus::Inconsistent(why));
    if record.edits.is_empty() || record.edits.len() > 2 {
        return inconsistent(format!(
            "expected 1 or 2 edits, found {}",
            record.edits.len()
        ));
    }
    let edited = match edited_instance(
        original,
        &record.edits,
        vec![record.expected_answer.clone()],
    ) {
        Ok(e) => e,
        Err(e) => return inconsistent(e.to_string()),
    };
    let (Some(before_desc), Some(after_desc)) = (&original.aggregation, &edited.aggregation) else {
        return (edited, ImportStatus::Unchecked);
    };
    let before = evaluate_aggregation(&original.table, before_desc);
    let after = evaluate_aggregation(&edited.table, after_desc);
    let (before, after) = match (before, after) {
        (Ok(b), Ok(a)) => (normalize_answer(&b), normalize_answer(&a)),
        (Err(e), _) | (_, Err(e)) => {
            return (edited, ImportStatus::Inconsistent(format!("oracle: {e}")))
        }
    };
    let expected = normalize_answer(&record.expected_answer);
    let status = if expected != after {
        ImportStatus::Inconsistent(format!(
            "expected answer {expected:?} but oracle gives {after:?}"
        ))
    } else if record.kind == PerturbationKind::ValueAc && before == after {
        ImportStatus::Inconsistent("answer-changing edit leaves the oracle answer unchanged".into())
    } else if record.kind == PerturbationKind::ValueNc && before != after {
        ImportStatus::Inconsistent(format!(
            "answer-preserving edit changes the oracle answer from {before:?}"
        ))
    } else {
        ImportStatus::Accepted
    };
    (edited, status)
}

pub fn parse_annotated<R: BufRead>(reader: R) -> Result<Vec<AnnotatedPerturbation>, IngestError> {
    let mut out = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let parse_err = |message: String| IngestError::Parse {
            line: line_no,
            message,
        };
        let line = line.map_err(|e| parse_err(e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        let record: AnnotatedRecord =
            serde_json::from_str(&line).map_err(|e| parse_err(e.to_string()))?;
        if !matches!(
            record.kind,
            PerturbationKind::ValueAc | PerturbationKind::ValueNc
        ) {
            return Err(parse_err(format!(
                "kind must be VALUE_AC or VALUE_NC, found {}",
                record.kind
            )));
        }
        let violations = validate(&record.instance);
        if !violations.is_empty() {
            return Err(IngestError::Validation {
                line: line_no,
                id: record.instance.id.clone(),
                violations,
            });
        }
        let (instance, status) = check_annotated(&record);
        out.push(AnnotatedPerturbation {
            original: record.instance,
            instance,
            edits: record.edits,
            expected_answer: record.expected_answer,
            kind: record.kind,
            status,
        });
    }
    Ok(out)
}

/// Reads annotated value perturbations, oracle-checking each record that
/// carries a descriptor. Failing records are flagged, never dropped.
pub fn import_annotated(path: impl AsRef<Path>) -> Result<Vec<AnnotatedPerturbation>, IngestError> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|source| IngestError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_annotated(BufReader::new(file))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::perturb::replay;
    use crate::table::{CountFilter, QuestionType};

    fn votes_instance() -> QAInstance {
        let t = Table::new(["Name", "Votes"], [["Leslie", "15"], ["Olsson", "4"]]).unwrap();
        QAInstance::new(
            "votes",
            "Who received the least amount of votes?",
            vec!["Olsson".into()],
            t,
        )
        .with_type(QuestionType::Reasoning)
        .with_aggregation(AggregationDescriptor {
            kind: AggregationKind::Argmin,
            value_col: 1,
            label_col: Some(0),
            filter: None,
            operands: None,
        })
    }

    fn west_instance() -> QAInstance {
        let t = Table::new(
            ["Title", "Direction", "Year"],
            [
                ["Go West Young Man", "West", "1936"],
                ["Westbound", "West", "1959"],
                ["North by Northwest", "North", "1959"],
                ["East of Eden", "East", "1955"],
            ],
        )
        .unwrap();
        QAInstance::new(
            "west",
            "How many films are set going West?",
            vec!["2".into()],
            t,
        )
        .with_type(QuestionType::Reasoning)
        .with_aggregation(AggregationDescriptor {
            kind: AggregationKind::Count,
            value_col: 1,
            label_col: Some(0),
            filter: Some(CountFilter {
                col: 1,
                value: "West".into(),
            }),
            operands: None,
        })
    }

    fn sum_instance() -> QAInstance {
        let t = Table::new(["Item", "Qty"], [["a", "3"], ["b", "4"], ["c", "5"]]).unwrap();
        QAInstance::new("sum", "What is the total quantity?", vec!["12".into()], t)
            .with_type(QuestionType::Reasoning)
            .with_aggregation(AggregationDescriptor {
                kind: AggregationKind::Sum,
                value_col: 1,
                label_col: Some(0),
                filter: None,
                operands: None,
            })
    }

    fn edit(row: usize, col: usize, old: &str, new: &str, class: EditClass) -> ValueEdit {
        ValueEdit {
            coord: CellCoord::new(row, col),
            old: old.into(),
            new: new.into(),
            edit_class: class,
        }
    }

    #[test]
    fn worked_manual_edits() {
        let v = votes_instance();
        let d = v.aggregation.clone().unwrap();
        let t = apply_edits(&v.table, &[edit(1, 1, "4", "361", EditClass::Numeric)]).unwrap();
        assert_eq!(evaluate_aggregation(&t, &d).unwrap(), "Leslie");
        let t = apply_edits(&v.table, &[edit(0, 1, "15", "1500", EditClass::Numeric)]).unwrap();
        assert_eq!(evaluate_aggregation(&t, &d).unwrap(), "Olsson");

        let w = west_instance();
        let d = w.aggregation.clone().unwrap();
        let t = apply_edits(&w.table, &[edit(0, 1, "West", "", EditClass::RowRemoval)]).unwrap();
        assert_eq!(evaluate_aggregation(&t, &d).unwrap(), "1");
        let changed = alter_text("Go West Young Man", &[]);
        assert_eq!(changed, "Go East Young Man");
        let t = apply_edits(
            &w.table,
            &[edit(0, 0, "Go West Young Man", &changed, EditClass::String)],
        )
        .unwrap();
        assert_eq!(evaluate_aggregation(&t, &d).unwrap(), "2");

        let s = sum_instance();
        let d = s.aggregation.clone().unwrap();
        let t = apply_edits(&s.table, &[edit(2, 1, "5", "9", EditClass::Numeric)]).unwrap();
        assert_eq!(evaluate_aggregation(&t, &d).unwrap(), "16");
    }

    #[test]
    fn edit_old_value_is_checked() {
        let v = votes_instance();
        let err = apply_edits(&v.table, &[edit(1, 1, "5", "361", EditClass::Numeric)]).unwrap_err();
        assert!(matches!(err, PerturbError::EditMismatch { .. }));
    }

    #[test]
    fn shorten_projects_columns() {
        let rows: Vec<Vec<String>> = (0..10)
            .map(|r| {
                (0..6)
                    .map(|c| {
                        if c == 3 {
                            (r * 7 % 11).to_string()
                        } else {
                            format!("x{r}{c}")
                        }
                    })
                    .collect()
            })
            .collect();
        let t = Table::new(["a", "b", "c", "d", "e", "f"], rows).unwrap();
        let inst = QAInstance::new("s", "Who has the lowest d?", vec!["x00".into()], t)
            .with_type(QuestionType::Reasoning)
            .with_aggregation(AggregationDescriptor {
                kind: AggregationKind::Argmin,
                value_col: 3,
                label_col: Some(0),
                filter: None,
                operands: None,
            });
        let (short, record) = shorten(&inst).unwrap();
        assert_eq!((short.table.n_rows(), short.table.n_cols()), (10, 2));
        assert_eq!(short.col_map, vec![0, 3]);
        assert_eq!(short.descriptor.value_col, 1);
        assert_eq!(short.descriptor.label_col, Some(0));
        assert_eq!(
            evaluate_aggregation(&short.table, &short.descriptor).unwrap(),
            evaluate_aggregation(&inst.table, inst.aggregation.as_ref().unwrap()).unwrap()
        );
        assert_eq!(record.kind, PerturbationKind::Shortened);
        let mut bare = inst.clone();
        bare.aggregation = None;
        assert_eq!(
            shorten(&bare).unwrap_err(),
            PerturbError::MissingAnnotation("aggregation")
        );
    }

    #[test]
    fn diff_shortening_keeps_operand_rows() {
        let t = Table::new(
            ["Period", "Revenue", "Cost"],
            [
                ["Q1 2018", "10", "1"],
                ["Q2 2018", "12", "2"],
                ["Q3 2018", "17", "3"],
            ],
        )
        .unwrap();
        let inst = QAInstance::new(
            "d",
            "What is the change in revenue from Q2 2018 to Q3 2018?",
            vec!["5".into()],
            t,
        )
        .with_type(QuestionType::Reasoning)
        .with_aggregation(AggregationDescriptor {
            kind: AggregationKind::Diff,
            value_col: 1,
            label_col: Some(0),
            filter: None,
            operands: Some([CellCoord::new(2, 1), CellCoord::new(1, 1)]),
        });
        let (short, _) = shorten(&inst).unwrap();
        assert_eq!(short.row_map, vec![1, 2]);
        assert_eq!(short.col_map, vec![0, 1]);
        assert_eq!(
            short.descriptor.operands,
            Some([CellCoord::new(1, 1), CellCoord::new(0, 1)])
        );
        assert_eq!(
            evaluate_aggregation(&short.table, &short.descriptor).unwrap(),
            "5"
        );
        for seed in 0..30 {
            let ac = value_ac(&inst, seed).unwrap();
            assert_ne!(normalize_answer(&ac.instance.answers[0]), "5");
            let nc = value_nc(&inst, seed).unwrap();
            let d = nc.instance.aggregation.as_ref().unwrap();
            assert_eq!(evaluate_aggregation(&nc.instance.table, d).unwrap(), "5");
        }
        let mut numeric_labels = inst.clone();
        for (r, year) in ["2017", "2018", "2019"].iter().enumerate() {
            numeric_labels.table.rows[r][0] = Cell::new(*year);
        }
        assert_eq!(
            value_nc(&numeric_labels, 0).unwrap_err(),
            PerturbError::UnsupportedKind(AggregationKind::Diff)
        );
    }

    #[test]
    fn generated_edits_are_sound_and_replayable() {
        for inst in [votes_instance(), west_instance(), sum_instance()] {
            let original =
                evaluate_aggregation(&inst.table, inst.aggregation.as_ref().unwrap()).unwrap();
            for seed in 0..50 {
                let ac = value_ac(&inst, seed).unwrap();
                let d = ac.instance.aggregation.as_ref().unwrap();
                let now = evaluate_aggregation(&ac.instance.table, d).unwrap();
                assert_ne!(
                    normalize_answer(&now),
                    normalize_answer(&original),
                    "{} seed {seed}",
                    inst.id
                );
                assert_eq!(ac.instance.answers, vec![now]);
                assert_eq!(replay(&inst, &ac.record).unwrap(), ac.instance);

                let nc = value_nc(&inst, seed).unwrap();
                let d = nc.instance.aggregation.as_ref().unwrap();
                let now = evaluate_aggregation(&nc.instance.table, d).unwrap();
                assert_eq!(
                    normalize_answer(&now),
                    normalize_answer(&original),
                    "{} seed {seed}",
                    inst.id
                );
                assert_eq!(replay(&inst, &nc.record).unwrap(), nc.instance);
                let PerturbationParams::ValueEdits { edits, .. } = &nc.record.params else {
                    panic!()
                };
                assert!((1..=2).contains(&edits.len()));
                if inst.id == "votes" {
                    // the answer label is never edited
                    assert!(edits.iter().all(|e| e.coord.col == 1));
                }
            }
        }
    }

    #[test]
    fn argmin_ac_on_votes_yields_leslie() {
        let ac = value_ac(&votes_instance(), 0).unwrap();
        assert_eq!(ac.instance.answers, vec!["Leslie".to_string()]);
    }

    #[test]
    fn argmax_nc_deflates_non_extremal() {
        let t = Table::new(["n", "v"], [["a", "10"], ["b", "8"], ["c", "3"]]).unwrap();
        let mut inst = QAInstance::new("m", "Who has the most?", vec!["a".into()], t)
            .with_type(QuestionType::Reasoning)
            .with_aggregation(AggregationDescriptor {
                kind: AggregationKind::Argmax,
                value_col: 1,
                label_col: Some(0),
                filter: None,
                operands: None,
            });
        let d = inst.aggregation.clone().unwrap();
        let t = apply_edits(&inst.table, &[edit(1, 1, "8", "4", EditClass::Numeric)]).unwrap();
        assert_eq!(evaluate_aggregation(&t, &d).unwrap(), "a");
        for seed in 0..20 {
            let nc = value_nc(&inst, seed).unwrap();
            assert_eq!(nc.instance.table.rows[0][1].raw(), "10");
        }
        inst.answers = vec!["b".into()];
        assert!(matches!(
            value_nc(&inst, 0),
            Err(PerturbError::AnswerMismatch { .. })
        ));
    }

    #[test]
    fn sum_nc_without_string_cells_is_unsupported() {
        let t = Table::new(["v"], [["1"], ["2"]]).unwrap();
        let inst = QAInstance::new("s", "What is the total?", vec!["3".into()], t)
            .with_type(QuestionType::Reasoning)
            .with_aggregation(AggregationDescriptor {
                kind: AggregationKind::Sum,
                value_col: 0,
                label_col: None,
                filter: None,
                operands: None,
            });
        assert_eq!(
            value_nc(&inst, 0).unwrap_err(),
            PerturbError::UnsupportedKind(AggregationKind::Sum)
        );
        assert!(value_ac(&inst, 0).is_ok());
    }

    #[test]
    fn single_row_extremal_cannot_perturb() {
        let t = Table::new(["n", "v"], [["a", "1"]]).unwrap();
        let inst = QAInstance::new("one", "Who has the most?", vec!["a".into()], t)
            .with_type(QuestionType::Reasoning)
            .with_aggregation(AggregationDescriptor {
                kind: AggregationKind::Argmax,
                value_col: 1,
                label_col: Some(0),
                filter: None,
                operands: None,
            });
        assert!(matches!(
            value_ac(&inst, 0),
            Err(PerturbError::TooFewRows { .. })
        ));
    }

    #[test]
    fn alter_text_avoids_values() {
        assert_eq!(alter_text("West", &["east".into()]), "West II");
        assert_eq!(alter_text("north", &[]), "south");
        assert_eq!(alter_text("Plain", &[]), "Plain II");
        assert_eq!(alter_text("", &[]), "II");
    }

    #[test]
    fn import_flags() {
        let base = west_instance();
        let line = |kind: &str, edits: &str, expected: &str, with_desc: bool| {
            let mut inst = serde_json::to_value(&base).unwrap();
            if !with_desc {
                inst.as_object_mut().unwrap().remove("aggregation");
            }
            let obj = inst.as_object_mut().unwrap();
            obj.insert("kind".into(), serde_json::Value::String(kind.into()));
            obj.insert(
                "expected_answer".into(),
                serde_json::Value::String(expected.into()),
            );
            obj.insert("edits".into(), serde_json::from_str(edits).unwrap());
            serde_json::to_string(&inst).unwrap()
        };
        let remove =
            r#"[{"coord":{"row":0,"col":1},"old":"West","new":"","edit_class":"ROW_REMOVAL"}]"#;
        let rename = r#"[{"coord":{"row":0,"col":0},"old":"Go West Young Man","new":"Go East Young Man","edit_class":"STRING"}]"#;
        let text = [
            line("VALUE_AC", remove, "1", true),
            line("VALUE_NC", remove, "1", true),
            line("VALUE_NC", rename, "2", false),
            line("VALUE_NC", rename, "2", true),
        ]
        .join("\n");
        let out = parse_annotated(text.as_bytes()).unwrap();
        assert_eq!(out[0].status, ImportStatus::Accepted);
        assert_eq!(out[0].instance.table.n_rows(), 3);
        assert!(matches!(out[1].status, ImportStatus::Inconsistent(_)));
        assert_eq!(out[2].status, ImportStatus::Unchecked);
        assert_eq!(out[3].status, ImportStatus::Accepted);

        let bad = line("SHUFFLE_ROWS", remove, "1", true);
        assert!(matches!(
            parse_annotated(bad.as_bytes()),
            Err(IngestError::Parse { line: 1, .. })
        ));
    }
}
