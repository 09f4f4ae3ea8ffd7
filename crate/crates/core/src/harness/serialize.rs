//! Flat text rendering of tables for model input.
//!
//! Layout: `col : h1 | h2 row 1 : c11 | c12 row 2 : c21 | c22`. Inside a
//! header or cell, `\` becomes `\\`, `|` becomes `\|` and `:` becomes `\:`,
//! so separators and row markers are never ambiguous and [`parse`] recovers
//! any table with at least one column.

use std::fmt;

use crate::table::{Cell, QAInstance, Table};

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct SerializedTable(String);

impl SerializedTable {
    pub fn as_str(&self) -> &str {
        &self.0
    }

    pub fn into_string(self) -> String {
        self.0
    }

    /// Whitespace-split token count.
    pub fn token_count(&self) -> usize {
        self.0.split_whitespace().count()
    }
}

impl fmt::Display for SerializedTable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ParseError {
    #[error("missing \"col : \" prefix")]
    MissingPrefix,
    #[error("dangling escape at end of input")]
    DanglingEscape,
    #[error("row {row} has {found} cells, header has {expected}")]
    RowWidth {
        row: usize,
        expected: usize,
        found: usize,
    },
}

fn escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for ch in s.chars() {
        if matches!(ch, '\\' | '|' | ':') {
            out.push('\\');
        }
        out.push(ch);
    }
    out
}

fn join_escaped<'a>(out: &mut String, items: impl Iterator<Item = &'a str>) {
    for (i, item) in items.enumerate() {
        if i > 0 {
            out.push_str(" | ");
        }
        out.push_str(&escape(item));
    }
}

pub fn serialize(table: &Table) -> SerializedTable {
    let mut out = String::from("col : ");
    join_escaped(&mut out, table.headers.iter().map(String::as_str));
    for (i, row) in table.rows.iter().enumerate() {
        out.push_str(&format!(" row {} : ", i + 1));
        join_escaped(&mut out, row.iter().map(Cell::raw));
    }
    SerializedTable(out)
}

/// Characters tagged with whether they were escaped.
type Scanned = Vec<(char, bool)>;

fn scan(text: &str) -> Result<Scanned, ParseError> {
    let mut out = Vec::with_capacity(text.len());
    let mut chars = text.chars();
    while let Some(ch) = chars.next() {
        if ch == '\\' {
            out.push((chars.next().ok_or(ParseError::DanglingEscape)?, true));
        } else {
            out.push((ch, false));
        }
    }
    Ok(out)
}

fn find_plain(hay: &[(char, bool)], needle: &str, from: usize) -> Option<usize> {
    let needle: Vec<char> = needle.chars().collect();
    (from..=hay.len().checked_sub(needle.len())?).find(|&i| {
        hay[i..i + needle.len()]
            .iter()
            .zip(&needle)
            .all(|(&(c, esc), &n)| !esc && c == n)
    })
}

fn split_cells(segment: &[(char, bool)]) -> Vec<String> {
    let mut cells = Vec::new();
    let mut start = 0;
    while let Some(at) = find_plain(segment, " | ", start) {
        cells.push(segment[start..at].iter().map(|&(c, _)| c).collect());
        start = at + 3;
    }
    cells.push(segment[start..].iter().map(|&(c, _)| c).collect());
    cells
}

/// Parses the output of [`serialize`]. A table with zero columns renders the
/// same as one with a single empty header and is read back as the latter.
pub fn parse(text: &str) -> Result<Table, ParseError> {
    let scanned = scan(text)?;
    let prefix = "col : ";
    if find_plain(&scanned, prefix, 0) != Some(0) {
        return Err(ParseError::MissingPrefix);
    }
    let mut segments = Vec::new();
    let mut start = prefix.chars().count();
    let mut row = 1;
    loop {
        let marker = format!(" row {row} : ");
        match find_plain(&scanned, &marker, start) {
            Some(at) => {
                segments.push(&scanned[start..at]);
                start = at + marker.chars().count();
                row += 1;
            }
            None => {
                segments.push(&scanned[start..]);
                break;
            }
        }
    }
    let headers = split_cells(segments[0]);
    let mut rows = Vec::with_capacity(segments.len() - 1);
    for (i, seg) in segments[1..].iter().enumerate() {
        let cells = split_cells(seg);
        if cells.len() != headers.len() {
            return Err(ParseError::RowWidth {
                row: i + 1,
                expected: headers.len(),
                found: cells.len(),
            });
        }
        rows.push(cells);
    }
    Ok(Table::from_grid_unchecked(headers, rows))
}

/// Whitespace tokens of the serialized table plus the question.
pub fn token_count(instance: &QAInstance) -> usize {
    serialize(&instance.table).token_count() + instance.question.split_whitespace().count()
}

/// Splits instances into those within `max_tokens` and those above it.
pub fn length_filter(
    instances: Vec<QAInstance>,
    max_tokens: usize,
) -> (Vec<QAInstance>, Vec<QAInstance>) {
    instances
        .into_iter()
        .partition(|inst| token_count(inst) <= max_tokens)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pinned_examples() {
        let t = Table::new(["Name", "Votes"], [["Leslie", "15"], ["Olsson", "4"]]).unwrap();
        assert_eq!(
            serialize(&t).as_str(),
            "col : Name | Votes row 1 : Leslie | 15 row 2 : Olsson | 4"
        );
        let dummy = Table::new(["None"], [["None"]]).unwrap();
        assert_eq!(serialize(&dummy).as_str(), "col : None row 1 : None");
    }

    #[test]
    fn escaping_round_trips() {
        let t = Table::new(
            ["a | b", "c:d", "row 1"],
            [
                ["x row 2 : y", "", "back\\slash"],
                [" | ", "trailing ", "|"],
            ],
        )
        .unwrap();
        let s = serialize(&t);
        assert!(s.as_str().contains("a \\| b"));
        assert_eq!(parse(s.as_str()).unwrap(), t);
    }

    #[test]
    fn tricky_markers() {
        for t in [
            Table::new(["x row 1"], [["row 2"], ["y"]]).unwrap(),
            Table::new(["h"], [[""], [""]]).unwrap(),
            Table::new(["h", "g"], Vec::<Vec<String>>::new()).unwrap(),
            Table::new([""], [["a row 1"]]).unwrap(),
        ] {
            assert_eq!(
                parse(serialize(&t).as_str()).unwrap(),
                t,
                "{}",
                serialize(&t)
            );
        }
    }

    #[test]
    fn parse_errors() {
        assert_eq!(parse("cols : a"), Err(ParseError::MissingPrefix));
        assert_eq!(parse("col : a\\"), Err(ParseError::DanglingEscape));
        assert!(matches!(
            parse("col : a | b row 1 : c"),
            Err(ParseError::RowWidth { .. })
        ));
    }

    #[test]
    fn length_filter_examples() {
        let t = Table::new(["Name", "Votes"], [["Leslie", "15"]]).unwrap();
        let small = QAInstance::new("s", "Who?", vec!["Leslie".into()], t);
        let wide: Vec<String> = (0..300).map(|i| format!("h{i}")).collect();
        let big_table = Table::new(wide.clone(), [wide.clone()]).unwrap();
        let big = QAInstance::new("b", "Which value?", vec!["h1".into()], big_table);
        assert!(token_count(&big) > 512);
        let (kept, dropped) = length_filter(vec![small.clone(), big], 512);
        assert_eq!(kept.len(), 1);
        assert_eq!(dropped[0].id, "b");
        let (kept, dropped) = length_filter(vec![small], 1);
        assert!(kept.is_empty());
        assert_eq!(dropped.len(), 1);
    }
}
