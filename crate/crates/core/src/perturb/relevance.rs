//! Perturbations probing whether a system reads the relevant cells.

use std::collections::BTreeSet;

use super::structure::reorder_rows;
use super::{
    stream, PerturbError, PerturbationKind, PerturbationParams, PerturbationRecord, Perturbed,
};
use crate::table::{Cell, CellCoord, QAInstance, Table};

/// Header and single cell of the dummy table.
pub const DUMMY_VALUE: &str = "None";

fn relevant(instance: &QAInstance) -> Result<&[CellCoord], PerturbError> {
    match instance.relevant_cells.as_deref() {
        Some(cells) if !cells.is_empty() => Ok(cells),
        _ => Err(PerturbError::MissingAnnotation("relevant_cells")),
    }
}

/// Blanks every relevant cell; the grid shape and answers stay as they are.
pub fn remove_relevant_cells(instance: &QAInstance, seed: u64) -> Result<Perturbed, PerturbError> {
    let cells = relevant(instance)?;
    let out_of_range: Vec<String> = cells
        .iter()
        .filter(|c| !instance.table.contains(**c))
        .map(|c| format!("relevant cell {c} out of range"))
        .collect();
    if !out_of_range.is_empty() {
        return Err(PerturbError::Invalid(out_of_range));
    }
    let distinct: Vec<CellCoord> = cells
        .iter()
        .copied()
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let mut out = instance.clone();
    for c in &distinct {
        out.table.rows[c.row][c.col] = Cell::blank();
    }
    Ok(Perturbed {
        instance: out,
        record: PerturbationRecord {
            kind: PerturbationKind::RemoveRelevant,
            seed,
            source_id: instance.id.clone(),
            params: PerturbationParams::RemoveRelevant { cells: distinct },
        },
    })
}

/// Replaces the table with a 1×1 dummy whose header and cell are `"None"`.
/// Annotations referring to the old grid are dropped.
pub fn remove_table(instance: &QAInstance, seed: u64) -> Perturbed {
    let mut out = instance.clone();
    out.table = Table::new([DUMMY_VALUE], [[DUMMY_VALUE]]).expect("1x1 table is rectangular");
    out.relevant_cells = None;
    out.aggregation = None;
    Perturbed {
        instance: out,
        record: PerturbationRecord {
            kind: PerturbationKind::RemoveTable,
            seed,
            source_id: instance.id.clone(),
            params: PerturbationParams::RemoveTable {
                original_rows: instance.table.n_rows(),
                original_cols: instance.table.n_cols(),
            },
        },
    }
}

/// Output order placing the sorted `block` rows contiguously at `insert_at`
/// among the remaining rows.
pub(crate) fn block_order(n: usize, block: &[usize], insert_at: usize) -> Vec<usize> {
    let mut rest: Vec<usize> = (0..n).filter(|i| !block.contains(i)).collect();
    let tail = rest.split_off(insert_at.min(rest.len()));
    rest.extend_from_slice(block);
    rest.extend(tail);
    rest
}

/// Moves the relevant rows, as one block in their original order, to a
/// uniformly drawn insertion point in `[0, n_remaining]`. When every row is
/// relevant the table is left unchanged and the record is flagged `no_op`.
pub fn shift_relevant_rows(instance: &QAInstance, seed: u64) -> Result<Perturbed, PerturbError> {
    let kind = PerturbationKind::ShiftRelevantRows;
    let n = instance.table.n_rows();
    let rows: Vec<usize> = relevant(instance)?
        .iter()
        .map(|c| c.row)
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    if let Some(&bad) = rows.iter().find(|&&r| r >= n) {
        return Err(PerturbError::Invalid(vec![format!(
            "relevant row {bad} out of range"
        )]));
    }
    let remaining = n - rows.len();
    let mut out = instance.clone();
    let (insert_at, no_op) = if remaining == 0 {
        (0, true)
    } else {
        let at = stream(kind, instance, seed).index(remaining + 1);
        reorder_rows(&mut out, &block_order(n, &rows, at));
        (at, false)
    };
    Ok(Perturbed {
        instance: out,
        record: PerturbationRecord {
            kind,
            seed,
            source_id: instance.id.clone(),
            params: PerturbationParams::ShiftRelevantRows {
                rows,
                insert_at,
                no_op,
            },
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::perturb::replay;
    use crate::table::QuestionType;

    fn votes() -> QAInstance {
        let t = Table::new(["Name", "Votes"], [["Leslie", "15"], ["Olsson", "4"]]).unwrap();
        QAInstance::new(
            "v",
            "Who received the least amount of votes?",
            vec!["Olsson".into()],
            t,
        )
        .with_type(QuestionType::Reasoning)
        .with_relevant_cells(vec![CellCoord::new(0, 1), CellCoord::new(1, 1)])
    }

    fn five_rows(relevant_rows: &[usize]) -> QAInstance {
        let rows: Vec<Vec<String>> = (0..5)
            .map(|r| vec![format!("n{r}"), r.to_string()])
            .collect();
        let t = Table::new(["Name", "Score"], rows).unwrap();
        QAInstance::new("f", "q", vec!["n0".into()], t)
            .with_type(QuestionType::Reasoning)
            .with_relevant_cells(
                relevant_rows
                    .iter()
                    .map(|&r| CellCoord::new(r, 1))
                    .collect(),
            )
    }

    #[test]
    fn remove_relevant_blanks_only_listed_cells() {
        let inst = votes();
        let p = remove_relevant_cells(&inst, 0).unwrap();
        let t = &p.instance.table;
        assert_eq!(t.rows[0][1].raw(), "");
        assert_eq!(t.rows[1][1].raw(), "");
        assert_eq!(t.rows[0][0].raw(), "Leslie");
        assert_eq!(t.rows[1][0].raw(), "Olsson");
        assert_eq!(p.instance.answers, inst.answers);
        assert_eq!(p.instance.question, inst.question);
        assert_eq!(replay(&inst, &p.record).unwrap(), p.instance);
    }

    #[test]
    fn remove_relevant_needs_annotation() {
        let mut inst = votes();
        inst.relevant_cells = Some(vec![]);
        assert_eq!(
            remove_relevant_cells(&inst, 0).unwrap_err(),
            PerturbError::MissingAnnotation("relevant_cells")
        );
        inst.relevant_cells = None;
        assert!(remove_relevant_cells(&inst, 0).is_err());
        inst.relevant_cells = Some(vec![CellCoord::new(9, 0)]);
        assert!(matches!(
            remove_relevant_cells(&inst, 0),
            Err(PerturbError::Invalid(_))
        ));
    }

    #[test]
    fn dummy_table() {
        let inst = votes();
        let once = remove_table(&inst, 0);
        assert_eq!(once.instance.table.headers, ["None"]);
        assert_eq!(once.instance.table.rows[0][0].raw(), "None");
        let twice = remove_table(&once.instance, 0);
        assert_eq!(twice.instance, once.instance);
        assert_eq!(
            once.record.params,
            PerturbationParams::RemoveTable {
                original_rows: 2,
                original_cols: 2
            }
        );
    }

    #[test]
    fn shift_single_row_positions_cover_range() {
        let inst = five_rows(&[2]);
        let mut seen = [0usize; 5];
        for seed in 0..500 {
            let p = shift_relevant_rows(&inst, seed).unwrap();
            let pos = p
                .instance
                .table
                .rows
                .iter()
                .position(|r| r[0].raw() == "n2")
                .unwrap();
            seen[pos] += 1;
            assert_eq!(p.instance.relevant_cells.as_ref().unwrap()[0].row, pos);
            assert_eq!(replay(&inst, &p.record).unwrap(), p.instance);
        }
        assert!(seen.iter().all(|&c| c > 60), "{seen:?}");
    }

    #[test]
    fn shift_keeps_block_contiguous_and_ordered() {
        let inst = five_rows(&[3, 1]);
        for seed in 0..100 {
            let p = shift_relevant_rows(&inst, seed).unwrap();
            let names: Vec<&str> = p.instance.table.rows.iter().map(|r| r[0].raw()).collect();
            let i1 = names.iter().position(|n| *n == "n1").unwrap();
            assert_eq!(names[i1 + 1], "n3");
            let rest: Vec<&str> = names
                .iter()
                .copied()
                .filter(|n| *n != "n1" && *n != "n3")
                .collect();
            assert_eq!(rest, ["n0", "n2", "n4"]);
        }
    }

    #[test]
    fn shift_all_rows_is_no_op() {
        let inst = five_rows(&[0, 1, 2, 3, 4]);
        let p = shift_relevant_rows(&inst, 3).unwrap();
        assert_eq!(p.instance, inst);
        assert!(matches!(
            p.record.params,
            PerturbationParams::ShiftRelevantRows { no_op: true, .. }
        ));
    }
}
