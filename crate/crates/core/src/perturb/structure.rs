//! Answer-preserving structure perturbations for extraction questions:
//! shuffles, target row/column shifts and transposition.

use std::ops::Range;

use serde::{Deserialize, Serialize};

use super::{
    stream, Axis, PerturbError, PerturbationKind, PerturbationParams, PerturbationRecord, Perturbed,
};
use crate::table::{normalize_answer, Cell, CellCoord, QAInstance, Table};

/// First gold-matching data cell in row-major order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TargetLocation {
    pub row: usize,
    pub col: usize,
    pub ambiguous: bool,
}

impl TargetLocation {
    pub fn coord(&self) -> CellCoord {
        CellCoord::new(self.row, self.col)
    }
}

/// Headers are never targets.
pub fn locate_target(instance: &QAInstance) -> Result<TargetLocation, PerturbError> {
    let gold = instance.normalized_answers();
    let mut matches = instance
        .table
        .cells()
        .filter(|(_, c)| gold.contains(&normalize_answer(c.raw())))
        .map(|(coord, _)| coord);
    let first = matches.next().ok_or(PerturbError::NoTargetFound)?;
    Ok(TargetLocation {
        row: first.row,
        col: first.col,
        ambiguous: matches.next().is_some(),
    })
}

/// Contiguous, near-equal split of `0..n`; earlier parts take the remainder.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Partition {
    pub ranges: Vec<Range<usize>>,
}

impl Partition {
    pub fn part_count(&self) -> usize {
        self.ranges.len()
    }
}

pub fn partition_indices(n: usize, parts: usize) -> Result<Partition, PerturbError> {
    assert!(parts >= 1, "partition needs at least one part");
    if n < parts {
        return Err(PerturbError::TooFewRows {
            needed: parts,
            found: n,
        });
    }
    let base = n / parts;
    let extra = n % parts;
    let mut start = 0;
    let ranges = (0..parts)
        .map(|i| {
            let len = base + usize::from(i < extra);
            let r = start..start + len;
            start += len;
            r
        })
        .collect();
    Ok(Partition { ranges })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RowPart {
    Top,
    Middle,
    Bottom,
}

impl RowPart {
    pub fn index(self) -> usize {
        self as usize
    }

    fn kind(self) -> PerturbationKind {
        match self {
            RowPart::Top => PerturbationKind::TargetRowTop,
            RowPart::Middle => PerturbationKind::TargetRowMiddle,
            RowPart::Bottom => PerturbationKind::TargetRowBottom,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ColPart {
    Front,
    Back,
}

impl ColPart {
    pub fn index(self) -> usize {
        self as usize
    }

    fn kind(self) -> PerturbationKind {
        match self {
            ColPart::Front => PerturbationKind::TargetColFront,
            ColPart::Back => PerturbationKind::TargetColBack,
        }
    }
}

/// Inverse of an order vector: `inv[old] = new`.
pub(crate) fn inverse(order: &[usize]) -> Vec<usize> {
    let mut inv = vec![0; order.len()];
    for (new, &old) in order.iter().enumerate() {
        inv[old] = new;
    }
    inv
}

/// Order that moves index `from` to final position `to`, keeping the rest in
/// their relative order.
pub(crate) fn move_order(n: usize, from: usize, to: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).filter(|&i| i != from).collect();
    order.insert(to, from);
    order
}

/// Reorders rows and remaps row indices in the annotations.
pub(crate) fn reorder_rows(instance: &mut QAInstance, order: &[usize]) {
    let rows = std::mem::take(&mut instance.table.rows);
    let mut slots: Vec<Option<Vec<Cell>>> = rows.into_iter().map(Some).collect();
    instance.table.rows = order
        .iter()
        .map(|&i| slots[i].take().expect("order is a permutation"))
        .collect();
    let inv = inverse(order);
    if let Some(cells) = instance.relevant_cells.as_mut() {
        for c in cells.iter_mut() {
            c.row = inv[c.row];
        }
    }
    if let Some(ops) = instance
        .aggregation
        .as_mut()
        .and_then(|a| a.operands.as_mut())
    {
        for c in ops.iter_mut() {
            c.row = inv[c.row];
        }
    }
}

/// Reorders columns (headers travel with their column) and remaps column
/// indices in the annotations.
pub(crate) fn reorder_cols(instance: &mut QAInstance, order: &[usize]) {
    let table = &mut instance.table;
    table.headers = order.iter().map(|&i| table.headers[i].clone()).collect();
    for row in table.rows.iter_mut() {
        *row = order.iter().map(|&i| row[i].clone()).collect();
    }
    let inv = inverse(order);
    if let Some(cells) = instance.relevant_cells.as_mut() {
        for c in cells.iter_mut() {
            c.col = inv[c.col];
        }
    }
    if let Some(agg) = instance.aggregation.as_mut() {
        agg.value_col = inv[agg.value_col];
        if let Some(l) = agg.label_col.as_mut() {
            *l = inv[*l];
        }
        if let Some(f) = agg.filter.as_mut() {
            f.col = inv[f.col];
        }
        if let Some(ops) = agg.operands.as_mut() {
            for c in ops.iter_mut() {
                c.col = inv[c.col];
            }
        }
    }
}

fn record(
    kind: PerturbationKind,
    seed: u64,
    instance: &QAInstance,
    params: PerturbationParams,
) -> PerturbationRecord {
    PerturbationRecord {
        kind,
        seed,
        source_id: instance.id.clone(),
        params,
    }
}

/// Uniform (Fisher–Yates) shuffle of all rows.
pub fn shuffle_rows(instance: &QAInstance, seed: u64) -> Result<Perturbed, PerturbError> {
    let kind = PerturbationKind::ShuffleRows;
    let order = stream(kind, instance, seed).permutation(instance.table.n_rows());
    let mut out = instance.clone();
    reorder_rows(&mut out, &order);
    Ok(Perturbed {
        instance: out,
        record: record(
            kind,
            seed,
            instance,
            PerturbationParams::Permutation {
                axis: Axis::Rows,
                order,
            },
        ),
    })
}

/// Uniform shuffle of all columns, headers included.
pub fn shuffle_cols(instance: &QAInstance, seed: u64) -> Result<Perturbed, PerturbError> {
    let kind = PerturbationKind::ShuffleCols;
    let order = stream(kind, instance, seed).permutation(instance.table.n_cols());
    let mut out = instance.clone();
    reorder_cols(&mut out, &order);
    Ok(Perturbed {
        instance: out,
        record: record(
            kind,
            seed,
            instance,
            PerturbationParams::Permutation {
                axis: Axis::Cols,
                order,
            },
        ),
    })
}

/// Moves the target row to a uniformly drawn index inside the requested third
/// of the final table. The partition is computed over the final `n` rows, so
/// the removed row occupies a virtual slot while the rest keep their order.
pub fn shift_target_row(
    instance: &QAInstance,
    part: RowPart,
    seed: u64,
) -> Result<Perturbed, PerturbError> {
    let n = instance.table.n_rows();
    if n < 3 {
        return Err(PerturbError::TooFewRows {
            needed: 3,
            found: n,
        });
    }
    let target = locate_target(instance)?;
    let range = partition_indices(n, 3)?.ranges[part.index()].clone();
    let kind = part.kind();
    let mut rng = stream(kind, instance, seed);
    let to = range.start + rng.index(range.len());
    let mut out = instance.clone();
    reorder_rows(&mut out, &move_order(n, target.row, to));
    let params = PerturbationParams::TargetShift {
        axis: Axis::Rows,
        target,
        from: target.row,
        to,
        part_range: [range.start, range.end],
    };
    Ok(Perturbed {
        instance: out,
        record: record(kind, seed, instance, params),
    })
}

/// Column analogue of [`shift_target_row`] with two parts.
pub fn shift_target_col(
    instance: &QAInstance,
    part: ColPart,
    seed: u64,
) -> Result<Perturbed, PerturbError> {
    let n = instance.table.n_cols();
    if n < 2 {
        return Err(PerturbError::TooFewColumns {
            needed: 2,
            found: n,
        });
    }
    let target = locate_target(instance)?;
    let range = partition_indices(n, 2)?.ranges[part.index()].clone();
    let kind = part.kind();
    let mut rng = stream(kind, instance, seed);
    let to = range.start + rng.index(range.len());
    let mut out = instance.clone();
    reorder_cols(&mut out, &move_order(n, target.col, to));
    let params = PerturbationParams::TargetShift {
        axis: Axis::Cols,
        target,
        from: target.col,
        to,
        part_range: [range.start, range.end],
    };
    Ok(Perturbed {
        instance: out,
        record: record(kind, seed, instance, params),
    })
}

/// Transposes the grid.
///
/// With `index_headers` the new headers are `"0".."n_rows"`, the old header
/// row becomes column 0, and cell `(r, c)` moves to `(c, r + 1)`. Without it,
/// the first original column becomes the header row and cell `(r, c)` for
/// `c >= 1` moves to `(c - 1, r + 1)`.
pub fn transpose_table(table: &Table, index_headers: bool) -> Table {
    let n_rows = table.n_rows();
    let column = |c: usize| -> Vec<Cell> {
        std::iter::once(Cell::new(table.headers[c].clone()))
            .chain(table.rows.iter().map(|r| r[c].clone()))
            .collect()
    };
    if index_headers {
        Table {
            headers: (0..=n_rows).map(|i| i.to_string()).collect(),
            rows: (0..table.n_cols()).map(column).collect(),
        }
    } else if table.n_cols() == 0 {
        Table {
            headers: vec![],
            rows: vec![],
        }
    } else {
        Table {
            headers: column(0).into_iter().map(|c| c.raw().to_string()).collect(),
            rows: (1..table.n_cols()).map(column).collect(),
        }
    }
}

/// Inverse of `transpose_table(_, true)`.
pub fn untranspose_table(table: &Table) -> Table {
    let n_rows = table.n_cols().saturating_sub(1);
    Table {
        headers: table.rows.iter().map(|r| r[0].raw().to_string()).collect(),
        rows: (1..=n_rows)
            .map(|j| table.rows.iter().map(|r| r[j].clone()).collect())
            .collect(),
    }
}

/// Transposes the table; relevant cells follow the index mapping and the
/// aggregation descriptor is dropped since it no longer describes the grid.
pub fn transpose(instance: &QAInstance, index_headers: bool, seed: u64) -> Perturbed {
    let mut out = instance.clone();
    out.table = transpose_table(&instance.table, index_headers);
    out.aggregation = None;
    out.relevant_cells = instance.relevant_cells.as_ref().map(|cells| {
        cells
            .iter()
            .filter_map(|c| {
                if index_headers {
                    Some(CellCoord::new(c.col, c.row + 1))
                } else {
                    (c.col >= 1).then(|| CellCoord::new(c.col - 1, c.row + 1))
                }
            })
            .collect()
    });
    let params = PerturbationParams::Transpose {
        index_headers,
        original_rows: instance.table.n_rows(),
        original_cols: instance.table.n_cols(),
    };
    Perturbed {
        instance: out,
        record: record(PerturbationKind::Transpose, seed, instance, params),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::perturb::{answer_cell_multiset, replay};
    use crate::table::QuestionType;

    fn grid(n_rows: usize, n_cols: usize) -> Table {
        let headers: Vec<String> = (0..n_cols).map(|c| format!("h{c}")).collect();
        let rows: Vec<Vec<String>> = (0..n_rows)
            .map(|r| (0..n_cols).map(|c| format!("r{r}c{c}")).collect())
            .collect();
        Table::new(headers, rows).unwrap()
    }

    fn eq(table: Table, answer: &str) -> QAInstance {
        QAInstance::new("t", "What is x?", vec![answer.into()], table)
            .with_type(QuestionType::Extraction)
    }

    #[test]
    fn locate_examples() {
        let t = Table::new(["n", "v"], [["Leslie", "15"], ["Olsson", "4"]]).unwrap();
        let loc = locate_target(&eq(t, "15")).unwrap();
        assert_eq!((loc.row, loc.col, loc.ambiguous), (0, 1, false));

        let t = Table::new(["a", "b"], [["x", "1"], ["2", "3"], ["4", "x"]]).unwrap();
        let loc = locate_target(&eq(t.clone(), "x")).unwrap();
        assert_eq!((loc.row, loc.col, loc.ambiguous), (0, 0, true));

        assert_eq!(
            locate_target(&eq(t, "zzz")),
            Err(PerturbError::NoTargetFound)
        );
    }

    #[test]
    fn headers_never_targets() {
        let t = Table::new(["x", "b"], [["1", "2"]]).unwrap();
        assert_eq!(locate_target(&eq(t, "x")), Err(PerturbError::NoTargetFound));
    }

    #[test]
    fn partition_examples() {
        let p = partition_indices(12, 3).unwrap();
        assert_eq!(p.ranges, vec![0..4, 4..8, 8..12]);
        let p = partition_indices(10, 3).unwrap();
        assert_eq!(p.ranges, vec![0..4, 4..7, 7..10]);
        assert_eq!(
            partition_indices(2, 3),
            Err(PerturbError::TooFewRows {
                needed: 3,
                found: 2
            })
        );
        let p = partition_indices(5, 2).unwrap();
        assert_eq!(p.ranges, vec![0..3, 3..5]);
    }

    #[test]
    fn partition_size_arithmetic() {
        for n in 1..40 {
            for parts in 1..=n.min(5) {
                let p = partition_indices(n, parts).unwrap();
                let sizes: Vec<usize> = p.ranges.iter().map(|r| r.len()).collect();
                assert_eq!(sizes.iter().sum::<usize>(), n);
                assert!(sizes.windows(2).all(|w| w[0] >= w[1] && w[0] - w[1] <= 1));
                assert_eq!(p.ranges[0].start, 0);
                assert!(p.ranges.windows(2).all(|w| w[0].end == w[1].start));
            }
        }
    }

    #[test]
    fn shuffle_single_row_is_identity() {
        let inst = eq(grid(1, 3), "r0c1");
        assert_eq!(shuffle_rows(&inst, 9).unwrap().instance, inst);
    }

    #[test]
    fn shuffle_replays_from_record() {
        let inst = eq(grid(3, 2), "r1c1");
        for seed in 0..20 {
            let p = shuffle_rows(&inst, seed).unwrap();
            assert_eq!(replay(&inst, &p.record).unwrap(), p.instance);
            let PerturbationParams::Permutation { order, .. } = &p.record.params else {
                panic!("wrong params");
            };
            for (new, &old) in order.iter().enumerate() {
                assert_eq!(p.instance.table.rows[new], inst.table.rows[old]);
            }
        }
    }

    #[test]
    fn column_shuffle_keeps_headers_aligned() {
        let inst = eq(grid(4, 5), "r2c3");
        for seed in 0..10 {
            let out = shuffle_cols(&inst, seed).unwrap().instance;
            for (c, h) in out.table.headers.iter().enumerate() {
                let orig = h[1..].parse::<usize>().unwrap();
                for r in 0..4 {
                    assert_eq!(out.table.rows[r][c].raw(), format!("r{r}c{orig}"));
                }
            }
        }
    }

    #[test]
    fn target_shift_lands_in_part() {
        let inst = eq(grid(12, 3), "r5c2");
        for seed in 0..300 {
            for (part, range) in [
                (RowPart::Top, 0..4),
                (RowPart::Middle, 4..8),
                (RowPart::Bottom, 8..12),
            ] {
                let p = shift_target_row(&inst, part, seed).unwrap();
                let loc = locate_target(&p.instance).unwrap();
                assert!(range.contains(&loc.row), "{part:?} {loc:?}");
                assert_eq!(loc.col, 2);
                assert_eq!(replay(&inst, &p.record).unwrap(), p.instance);
                let others: Vec<_> = p
                    .instance
                    .table
                    .rows
                    .iter()
                    .filter(|r| r[2].raw() != "r5c2")
                    .collect();
                let expected: Vec<_> = inst
                    .table
                    .rows
                    .iter()
                    .filter(|r| r[2].raw() != "r5c2")
                    .collect();
                assert_eq!(others, expected);
            }
        }
    }

    #[test]
    fn target_col_shift() {
        let inst = eq(grid(3, 5), "r1c0");
        for seed in 0..50 {
            let back = shift_target_col(&inst, ColPart::Back, seed).unwrap();
            assert!((3..5).contains(&locate_target(&back.instance).unwrap().col));
            assert!(back.instance.table.headers.contains(&"h0".to_string()));
            let front = shift_target_col(&inst, ColPart::Front, seed).unwrap();
            assert!((0..3).contains(&locate_target(&front.instance).unwrap().col));
        }
        let narrow = eq(grid(4, 1), "r1c0");
        assert_eq!(
            shift_target_col(&narrow, ColPart::Front, 0).unwrap_err(),
            PerturbError::TooFewColumns {
                needed: 2,
                found: 1
            }
        );
        let short = eq(grid(2, 2), "r1c0");
        assert!(matches!(
            shift_target_row(&short, RowPart::Top, 0),
            Err(PerturbError::TooFewRows { .. })
        ));
    }

    #[test]
    fn transpose_examples() {
        let t = Table::new(["A", "B", "C"], [["1", "2", "3"], ["4", "5", "6"]]).unwrap();
        let tt = transpose_table(&t, true);
        assert_eq!(tt.headers, ["0", "1", "2"]);
        assert_eq!(tt.n_rows(), 3);
        let col0: Vec<&str> = tt.rows.iter().map(|r| r[0].raw()).collect();
        assert_eq!(col0, ["A", "B", "C"]);
        assert_eq!(tt.rows[2][1].raw(), "3");
        assert_eq!(tt.rows[0][2].raw(), "4");
        assert_eq!(untranspose_table(&tt), t);

        let empty = Table::new(["x", "y"], Vec::<Vec<String>>::new()).unwrap();
        let te = transpose_table(&empty, true);
        assert_eq!((te.n_rows(), te.n_cols()), (2, 1));
        assert_eq!(untranspose_table(&te), empty);

        let plain = transpose_table(&t, false);
        assert_eq!(plain.headers, ["A", "1", "4"]);
        assert_eq!(
            plain.rows[0].iter().map(Cell::raw).collect::<Vec<_>>(),
            ["B", "2", "5"]
        );
    }

    #[test]
    fn transpose_preserves_answer_cells_and_moves_annotations() {
        let inst = eq(grid(3, 2), "r2c1").with_relevant_cells(vec![CellCoord::new(2, 1)]);
        let p = transpose(&inst, true, 0);
        assert_eq!(
            answer_cell_multiset(&p.instance.table, &inst.answers),
            answer_cell_multiset(&inst.table, &inst.answers)
        );
        let moved = p.instance.relevant_cells.as_ref().unwrap()[0];
        assert_eq!(moved, CellCoord::new(1, 3));
        assert_eq!(p.instance.table.cell(moved).unwrap().raw(), "r2c1");
        assert!(crate::validate(&p.instance).is_empty());
    }
}
