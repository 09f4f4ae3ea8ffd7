//! Table and QA-instance data model plus answer normalization.

use std::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::scalar::Scalar;
use crate::Exact;

/// A table cell: the raw text plus its parsed numeric value, if any.
///
/// Blank cells hold the empty string.
#[derive(Debug, Clone, PartialEq)]
pub struct Cell {
    raw: String,
    number: Option<Exact>,
}

impl Cell {
    pub fn new(raw: impl Into<String>) -> Self {
        let raw = raw.into();
        let number = Exact::parse_decimal(&raw);
        Cell { raw, number }
    }

    pub fn blank() -> Self {
        Cell::new("")
    }

    pub fn raw(&self) -> &str {
        &self.raw
    }

    pub fn number(&self) -> Option<&Exact> {
        self.number.as_ref()
    }

    pub fn is_blank(&self) -> bool {
        self.raw.is_empty()
    }
}

impl From<&str> for Cell {
    fn from(raw: &str) -> Self {
        Cell::new(raw)
    }
}

impl From<String> for Cell {
    fn from(raw: String) -> Self {
        Cell::new(raw)
    }
}

impl Serialize for Cell {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.raw)
    }
}

impl<'de> Deserialize<'de> for Cell {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        String::deserialize(deserializer).map(Cell::new)
    }
}

/// Zero-based coordinate of a data cell; the header row is not counted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct CellCoord {
    pub row: usize,
    pub col: usize,
}

impl CellCoord {
    pub const fn new(row: usize, col: usize) -> Self {
        CellCoord { row, col }
    }
}

impl fmt::Display for CellCoord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{})", self.row, self.col)
    }
}

/// A header row over a grid of cells.
///
/// The grid may be ragged when built with [`Table::from_grid_unchecked`] or
/// deserialized; [`validate`] reports that. Every perturbation assumes a
/// rectangular table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Table {
    pub headers: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("row {row} has {found} cells, expected {expected}")]
pub struct RaggedRow {
    pub row: usize,
    pub found: usize,
    pub expected: usize,
}

impl Table {
    /// Builds a rectangular table, rejecting ragged rows.
    pub fn new<H, R, C>(headers: H, rows: R) -> Result<Self, RaggedRow>
    where
        H: IntoIterator,
        H::Item: Into<String>,
        R: IntoIterator,
        R::Item: IntoIterator<Item = C>,
        C: Into<Cell>,
    {
        let table = Self::from_grid_unchecked(headers, rows);
        let expected = table.n_cols();
        match table.rows.iter().position(|r| r.len() != expected) {
            Some(row) => Err(RaggedRow {
                row,
                found: table.rows[row].len(),
                expected,
            }),
            None => Ok(table),
        }
    }

    pub fn from_grid_unchecked<H, R, C>(headers: H, rows: R) -> Self
    where
        H: IntoIterator,
        H::Item: Into<String>,
        R: IntoIterator,
        R::Item: IntoIterator<Item = C>,
        C: Into<Cell>,
    {
        Table {
            headers: headers.into_iter().map(Into::into).collect(),
            rows: rows
                .into_iter()
                .map(|r| r.into_iter().map(Into::into).collect())
                .collect(),
        }
    }

    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn n_cols(&self) -> usize {
        self.headers.len()
    }

    pub fn cell(&self, coord: CellCoord) -> Option<&Cell> {
        self.rows.get(coord.row).and_then(|r| r.get(coord.col))
    }

    pub fn contains(&self, coord: CellCoord) -> bool {
        coord.row < self.n_rows() && coord.col < self.n_cols()
    }

    pub fn column(&self, col: usize) -> impl Iterator<Item = &Cell> + '_ {
        self.rows.iter().filter_map(move |r| r.get(col))
    }

    /// Row-major iterator over data cells with their coordinates.
    pub fn cells(&self) -> impl Iterator<Item = (CellCoord, &Cell)> + '_ {
        self.rows.iter().enumerate().flat_map(|(r, row)| {
            row.iter()
                .enumerate()
                .map(move |(c, cell)| (CellCoord::new(r, c), cell))
        })
    }

    pub fn is_rectangular(&self) -> bool {
        self.rows.iter().all(|r| r.len() == self.n_cols())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub enum QuestionType {
    #[serde(rename = "EQ")]
    Extraction,
    #[serde(rename = "RQ")]
    Reasoning,
    #[default]
    #[serde(rename = "UNKNOWN")]
    Unknown,
}

impl fmt::Display for QuestionType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            QuestionType::Extraction => "EQ",
            QuestionType::Reasoning => "RQ",
            QuestionType::Unknown => "UNKNOWN",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum AggregationKind {
    Argmax,
    Argmin,
    Count,
    Sum,
    Avg,
    Diff,
    CompareTwo,
}

impl AggregationKind {
    pub const ALL: [AggregationKind; 7] = [
        AggregationKind::Argmax,
        AggregationKind::Argmin,
        AggregationKind::Count,
        AggregationKind::Sum,
        AggregationKind::Avg,
        AggregationKind::Diff,
        AggregationKind::CompareTwo,
    ];
}

/// Row predicate for COUNT: normalized equality on one column.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CountFilter {
    pub col: usize,
    pub value: String,
}

/// Machine-readable description of how an RQ's answer is derived.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AggregationDescriptor {
    pub kind: AggregationKind,
    pub value_col: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label_col: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub filter: Option<CountFilter>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub operands: Option<[CellCoord; 2]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QAInstance {
    pub id: String,
    pub question: String,
    pub answers: Vec<String>,
    pub table: Table,
    #[serde(default)]
    pub question_type: QuestionType,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub relevant_cells: Option<Vec<CellCoord>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub aggregation: Option<AggregationDescriptor>,
    #[serde(default)]
    pub source: String,
}

impl QAInstance {
    pub fn new(
        id: impl Into<String>,
        question: impl Into<String>,
        answers: Vec<String>,
        table: Table,
    ) -> Self {
        QAInstance {
            id: id.into(),
            question: question.into(),
            answers,
            table,
            question_type: QuestionType::Unknown,
            relevant_cells: None,
            aggregation: None,
            source: String::new(),
        }
    }

    pub fn with_type(mut self, question_type: QuestionType) -> Self {
        self.question_type = question_type;
        self
    }

    pub fn with_relevant_cells(mut self, cells: Vec<CellCoord>) -> Self {
        self.relevant_cells = Some(cells);
        self
    }

    pub fn with_aggregation(mut self, descriptor: AggregationDescriptor) -> Self {
        self.aggregation = Some(descriptor);
        self
    }

    pub fn with_source(mut self, source: impl Into<String>) -> Self {
        self.source = source.into();
        self
    }

    /// Normalized gold answers.
    pub fn normalized_answers(&self) -> Vec<String> {
        self.answers.iter().map(|a| normalize_answer(a)).collect()
    }

    /// True when `prediction` normalizes equal to any gold answer.
    pub fn is_correct(&self, prediction: &str) -> bool {
        let p = normalize_answer(prediction);
        self.answers.iter().any(|a| normalize_answer(a) == p)
    }
}

/// Canonical form used for exact match: lowercase, trimmed, internal
/// whitespace collapsed, and numbers rendered as canonical decimals.
pub fn normalize_answer(raw: &str) -> String {
    let collapsed = raw
        .split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
        .to_lowercase();
    match Exact::parse_decimal(&collapsed) {
        Some(n) => n.to_canonical(),
        None => collapsed,
    }
}

/// Lists every violated invariant of `instance`; empty when it is well formed.
pub fn validate(instance: &QAInstance) -> Vec<String> {
    let mut violations = Vec::new();
    let table = &instance.table;
    let (n_rows, n_cols) = (table.n_rows(), table.n_cols());

    if instance.id.is_empty() {
        violations.push("instance id is empty".to_string());
    }
    if instance.answers.is_empty() {
        violations.push("answers list is empty".to_string());
    }
    for (i, a) in instance.answers.iter().enumerate() {
        if a.is_empty() {
            violations.push(format!("answer {i} is an empty string"));
        }
    }
    for (r, row) in table.rows.iter().enumerate() {
        if row.len() != n_cols {
            violations.push(format!(
                "row {r} has {} cells, expected {n_cols}",
                row.len()
            ));
        }
    }
    let shape = format!("{n_rows}x{n_cols}");
    if let Some(cells) = &instance.relevant_cells {
        for c in cells.iter().filter(|c| !table.contains(**c)) {
            violations.push(format!("relevant cell {c} out of range for {shape} table"));
        }
    }
    if let Some(agg) = &instance.aggregation {
        let col_ok = |col: usize| col < n_cols;
        if !col_ok(agg.value_col) {
            violations.push(format!(
                "aggregation value_col {} out of range for {shape} table",
                agg.value_col
            ));
        }
        if let Some(l) = agg.label_col.filter(|l| !col_ok(*l)) {
            violations.push(format!(
                "aggregation label_col {l} out of range for {shape} table"
            ));
        }
        if let Some(f) = agg.filter.as_ref().filter(|f| !col_ok(f.col)) {
            violations.push(format!(
                "aggregation filter column {} out of range for {shape} table",
                f.col
            ));
        }
        if let Some(ops) = &agg.operands {
            for c in ops.iter().filter(|c| !table.contains(**c)) {
                violations.push(format!(
                    "aggregation operand {c} out of range for {shape} table"
                ));
            }
        }
        match agg.kind {
            AggregationKind::Argmax | AggregationKind::Argmin if agg.label_col.is_none() => {
                violations.push(format!("{:?} aggregation requires label_col", agg.kind));
            }
            AggregationKind::Count if agg.filter.is_none() => {
                violations.push("COUNT aggregation requires filter".to_string());
            }
            AggregationKind::Diff | AggregationKind::CompareTwo if agg.operands.is_none() => {
                violations.push(format!("{:?} aggregation requires operands", agg.kind));
            }
            _ => {}
        }
    }
    violations
}

#[cfg(test)]
mod tests {
    use super::*;

    fn votes() -> Table {
        Table::new(
            ["Name", "Votes", "Party"],
            [["Leslie", "15", "A"], ["Olsson", "4", "B"]],
        )
        .unwrap()
    }

    fn instance(table: Table) -> QAInstance {
        QAInstance::new(
            "q1",
            "Who received the least amount of votes?",
            vec!["Olsson".into()],
            table,
        )
    }

    #[test]
    fn cells_parse_numbers() {
        assert!(Cell::new("15").number().is_some());
        assert!(Cell::new("$1,500").number().is_some());
        assert!(Cell::new("12%").number().is_some());
        assert!(Cell::new("Leslie").number().is_none());
        assert!(Cell::new("").number().is_none());
        assert!(Cell::new("2019-05-01").number().is_none());
    }

    #[test]
    fn normalize_examples() {
        assert_eq!(normalize_answer("  Leslie "), "leslie");
        assert_eq!(normalize_answer("1,500"), "1500");
        assert_eq!(normalize_answer("2.50%"), "2.5");
        assert_eq!(normalize_answer("New\t  York\nCity"), "new york city");
        assert_eq!(normalize_answer("$ 3.0"), "3");
        assert_eq!(normalize_answer(""), "");
    }

    #[test]
    fn normalized_numbers_agree_with_float_parser() {
        // independent oracle: std's float parser on the stripped literal
        for raw in ["1,500", "2.50%", "-0.0", "$12.000", "0.0625", "+7"] {
            let stripped: String = raw
                .chars()
                .filter(|c| !matches!(c, ',' | '$' | '%' | '+'))
                .collect();
            let expected: f64 = stripped.parse().unwrap();
            let got: f64 = normalize_answer(raw).parse().unwrap();
            assert_eq!(got, expected, "{raw}");
            assert!(!normalize_answer(raw).ends_with('0') || !normalize_answer(raw).contains('.'));
        }
    }

    #[test]
    fn valid_instance_has_no_violations() {
        let inst = instance(votes()).with_relevant_cells(vec![CellCoord::new(1, 1)]);
        assert!(validate(&inst).is_empty());
    }

    #[test]
    fn ragged_row_is_reported() {
        let table = Table::from_grid_unchecked(["a", "b", "c"], vec![vec!["1", "2"]]);
        let inst = instance(table);
        assert_eq!(
            validate(&inst),
            vec!["row 0 has 2 cells, expected 3".to_string()]
        );
        assert!(Table::new(["a", "b", "c"], vec![vec!["1", "2"]]).is_err());
    }

    #[test]
    fn out_of_range_relevant_cell() {
        let table = Table::new(["a", "b"], [["1", "2"], ["3", "4"], ["5", "6"]]).unwrap();
        let inst = instance(table).with_relevant_cells(vec![CellCoord::new(5, 0)]);
        let v = validate(&inst);
        assert_eq!(v.len(), 1);
        assert!(v[0].contains("(5,0)"), "{v:?}");
    }

    #[test]
    fn aggregation_requirements() {
        let mut inst = instance(votes()).with_aggregation(AggregationDescriptor {
            kind: AggregationKind::Argmin,
            value_col: 1,
            label_col: None,
            filter: None,
            operands: None,
        });
        assert_eq!(validate(&inst).len(), 1);
        inst.aggregation.as_mut().unwrap().label_col = Some(7);
        assert_eq!(validate(&inst).len(), 1);
        inst.aggregation.as_mut().unwrap().label_col = Some(0);
        assert!(validate(&inst).is_empty());
        inst.aggregation.as_mut().unwrap().kind = AggregationKind::Count;
        assert_eq!(
            validate(&inst),
            vec!["COUNT aggregation requires filter".to_string()]
        );
        inst.aggregation.as_mut().unwrap().kind = AggregationKind::Diff;
        assert_eq!(validate(&inst).len(), 1);
    }

    #[test]
    fn empty_answers_rejected() {
        let mut inst = instance(votes());
        inst.answers = vec![];
        assert_eq!(validate(&inst).len(), 1);
        inst.answers = vec!["".into()];
        assert_eq!(validate(&inst).len(), 1);
    }

    #[test]
    fn serde_shape() {
        let inst = instance(votes()).with_type(QuestionType::Reasoning);
        let json = serde_json::to_value(&inst).unwrap();
        assert_eq!(json["table"]["rows"][0][0], "Leslie");
        assert_eq!(json["question_type"], "RQ");
        let back: QAInstance = serde_json::from_value(json).unwrap();
        assert_eq!(back, inst);
        assert!(back.table.rows[0][1].number().is_some());
    }
}
