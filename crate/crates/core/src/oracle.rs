//! Aggregation executor over annotated descriptors.
//!
//! Generic over [`Scalar`]; [`evaluate_aggregation`] uses exact arithmetic.
//! Running the same descriptor through `f64` gives an independent route for
//! checks.

use std::cmp::Ordering;

use crate::scalar::Scalar;
use crate::table::{normalize_answer, AggregationDescriptor, AggregationKind, CellCoord, Table};
use crate::Exact;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum OracleError {
    #[error("cell {0} is not numeric")]
    NonNumericCell(CellCoord),
    #[error("{0:?} is tied")]
    TieDetected(AggregationKind),
    #[error("{kind:?} requires {field}")]
    MissingField {
        kind: AggregationKind,
        field: &'static str,
    },
    #[error("{0} is outside the table")]
    OutOfRange(CellCoord),
    #[error("aggregation over an empty table")]
    EmptyTable,
}

pub fn evaluate_aggregation(
    table: &Table,
    descriptor: &AggregationDescriptor,
) -> Result<String, OracleError> {
    evaluate_aggregation_with::<Exact>(table, descriptor)
}

pub(crate) fn numeric_at<S: Scalar>(table: &Table, coord: CellCoord) -> Result<S, OracleError> {
    let cell = table.cell(coord).ok_or(OracleError::OutOfRange(coord))?;
    S::parse_decimal(cell.raw()).ok_or(OracleError::NonNumericCell(coord))
}

pub(crate) fn column_values<S: Scalar>(table: &Table, col: usize) -> Result<Vec<S>, OracleError> {
    (0..table.n_rows())
        .map(|r| numeric_at(table, CellCoord::new(r, col)))
        .collect()
}

fn label_at(table: &Table, row: usize, label_col: usize) -> Result<String, OracleError> {
    let coord = CellCoord::new(row, label_col);
    table
        .cell(coord)
        .map(|c| c.raw().to_string())
        .ok_or(OracleError::OutOfRange(coord))
}

/// Row of the unique extremum; `want` is `Greater` for the maximum.
pub(crate) fn extremal_row<S: Scalar>(
    values: &[S],
    want: Ordering,
    kind: AggregationKind,
) -> Result<usize, OracleError> {
    let mut best = 0;
    let first = values.first().ok_or(OracleError::EmptyTable)?;
    let mut best_value = first;
    for (i, v) in values.iter().enumerate().skip(1) {
        if v.partial_cmp(best_value) == Some(want) {
            best = i;
            best_value = v;
        }
    }
    let ties = values.iter().filter(|v| *v == best_value).count();
    if ties > 1 {
        return Err(OracleError::TieDetected(kind));
    }
    Ok(best)
}

pub fn count_matches(table: &Table, col: usize, value: &str) -> usize {
    let wanted = normalize_answer(value);
    table
        .column(col)
        .filter(|c| normalize_answer(c.raw()) == wanted)
        .count()
}

pub fn evaluate_aggregation_with<S: Scalar>(
    table: &Table,
    descriptor: &AggregationDescriptor,
) -> Result<String, OracleError> {
    use AggregationKind::*;
    let kind = descriptor.kind;
    let missing = |field| OracleError::MissingField { kind, field };
    match kind {
        Argmax | Argmin => {
            let label_col = descriptor.label_col.ok_or(missing("label_col"))?;
            let values = column_values::<S>(table, descriptor.value_col)?;
            let want = if kind == Argmax {
                Ordering::Greater
            } else {
                Ordering::Less
            };
            let row = extremal_row(&values, want, kind)?;
            label_at(table, row, label_col)
        }
        Count => {
            let filter = descriptor.filter.as_ref().ok_or(missing("filter"))?;
            if filter.col >= table.n_cols() {
                return Err(OracleError::OutOfRange(CellCoord::new(0, filter.col)));
            }
            Ok(count_matches(table, filter.col, &filter.value).to_string())
        }
        Sum | Avg => {
            let values = column_values::<S>(table, descriptor.value_col)?;
            if values.is_empty() {
                return Err(OracleError::EmptyTable);
            }
            let total = values.iter().cloned().fold(S::zero(), |acc, v| acc + v);
            let result = if kind == Sum {
                total
            } else {
                total / S::from_usize(values.len()).expect("row count fits the scalar")
            };
            Ok(result.to_canonical())
        }
        Diff | CompareTwo => {
            let [a, b] = descriptor.operands.ok_or(missing("operands"))?;
            let va = numeric_at::<S>(table, a)?;
            let vb = numeric_at::<S>(table, b)?;
            if kind == Diff {
                return Ok((va - vb).to_canonical());
            }
            let winner = match va.partial_cmp(&vb) {
                Some(Ordering::Greater) => a,
                Some(Ordering::Less) => b,
                _ => return Err(OracleError::TieDetected(kind)),
            };
            match descriptor.label_col {
                Some(l) => label_at(table, winner.row, l),
                None => Ok(table
                    .cell(winner)
                    .expect("operand checked")
                    .raw()
                    .to_string()),
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::table::CountFilter;

    fn desc(kind: AggregationKind, value_col: usize) -> AggregationDescriptor {
        AggregationDescriptor {
            kind,
            value_col,
            label_col: None,
            filter: None,
            operands: None,
        }
    }

    fn votes() -> Table {
        Table::new(["Name", "Votes"], [["Leslie", "15"], ["Olsson", "4"]]).unwrap()
    }

    #[test]
    fn argmin_votes() {
        let d = AggregationDescriptor {
            label_col: Some(0),
            ..desc(AggregationKind::Argmin, 1)
        };
        assert_eq!(evaluate_aggregation(&votes(), &d).unwrap(), "Olsson");
        let d = AggregationDescriptor {
            kind: AggregationKind::Argmax,
            ..d
        };
        assert_eq!(evaluate_aggregation(&votes(), &d).unwrap(), "Leslie");
    }

    #[test]
    fn count_west() {
        let t = Table::new(
            ["Title", "Direction"],
            [
                ["Go West Young Man", "West"],
                ["Westward Ho", "west"],
                ["North Star", "North"],
                ["East of Eden", "East"],
            ],
        )
        .unwrap();
        let d = AggregationDescriptor {
            filter: Some(CountFilter {
                col: 1,
                value: "West".into(),
            }),
            ..desc(AggregationKind::Count, 1)
        };
        assert_eq!(evaluate_aggregation(&t, &d).unwrap(), "2");
    }

    #[test]
    fn sum_avg_diff() {
        let t = Table::new(["v"], [["3"], ["4"], ["5"]]).unwrap();
        assert_eq!(
            evaluate_aggregation(&t, &desc(AggregationKind::Sum, 0)).unwrap(),
            "12"
        );
        assert_eq!(
            evaluate_aggregation(&t, &desc(AggregationKind::Avg, 0)).unwrap(),
            "4"
        );
        let d = AggregationDescriptor {
            operands: Some([CellCoord::new(0, 0), CellCoord::new(2, 0)]),
            ..desc(AggregationKind::Diff, 0)
        };
        assert_eq!(evaluate_aggregation(&t, &d).unwrap(), "-2");
        let t = Table::new(["v"], [["1"], ["1"], ["2"]]).unwrap();
        assert_eq!(
            evaluate_aggregation(&t, &desc(AggregationKind::Avg, 0)).unwrap(),
            "1.333333"
        );
        let t = Table::new(["v"], [["0.1"], ["0.2"]]).unwrap();
        assert_eq!(
            evaluate_aggregation(&t, &desc(AggregationKind::Sum, 0)).unwrap(),
            "0.3"
        );
    }

    #[test]
    fn compare_two() {
        let d = AggregationDescriptor {
            label_col: Some(0),
            operands: Some([CellCoord::new(0, 1), CellCoord::new(1, 1)]),
            ..desc(AggregationKind::CompareTwo, 1)
        };
        assert_eq!(evaluate_aggregation(&votes(), &d).unwrap(), "Leslie");
        let no_label = AggregationDescriptor {
            label_col: None,
            ..d.clone()
        };
        assert_eq!(evaluate_aggregation(&votes(), &no_label).unwrap(), "15");
        let tied = Table::new(["Name", "Votes"], [["a", "3"], ["b", "3.0"]]).unwrap();
        assert_eq!(
            evaluate_aggregation(&tied, &d),
            Err(OracleError::TieDetected(AggregationKind::CompareTwo))
        );
    }

    #[test]
    fn errors() {
        let t = Table::new(["Name", "Votes"], [["a", "3"], ["b", "x"]]).unwrap();
        let d = AggregationDescriptor {
            label_col: Some(0),
            ..desc(AggregationKind::Argmax, 1)
        };
        assert_eq!(
            evaluate_aggregation(&t, &d),
            Err(OracleError::NonNumericCell(CellCoord::new(1, 1)))
        );
        let tied = Table::new(["Name", "Votes"], [["a", "3"], ["b", "3"], ["c", "1"]]).unwrap();
        assert_eq!(
            evaluate_aggregation(&tied, &d),
            Err(OracleError::TieDetected(AggregationKind::Argmax))
        );
        let empty = Table::new(["Name", "Votes"], Vec::<Vec<String>>::new()).unwrap();
        assert_eq!(
            evaluate_aggregation(&empty, &d),
            Err(OracleError::EmptyTable)
        );
        assert!(matches!(
            evaluate_aggregation(&t, &desc(AggregationKind::Count, 0)),
            Err(OracleError::MissingField { .. })
        ));
    }

    #[test]
    fn float_route_agrees_on_simple_tables() {
        let t = Table::new(["n", "v"], [["a", "1.5"], ["b", "-2"], ["c", "7.25"]]).unwrap();
        for kind in [
            AggregationKind::Argmax,
            AggregationKind::Argmin,
            AggregationKind::Sum,
            AggregationKind::Avg,
        ] {
            let d = AggregationDescriptor {
                label_col: Some(0),
                ..desc(kind, 1)
            };
            assert_eq!(
                evaluate_aggregation(&t, &d).unwrap(),
                evaluate_aggregation_with::<f64>(&t, &d).unwrap(),
                "{kind:?}"
            );
        }
    }
}
