use freb_core::harness::serialize::{parse, serialize};
use freb_core::metrics::{disagreement_rate, emd, vp, Condition, PredictionSet};
use freb_core::perturb::{self, answer_cell_multiset, replay};
use freb_core::{
    normalize_answer, validate, Cell, CellCoord, PerturbationKind, QAInstance, QuestionType, Table,
};
use proptest::prelude::*;

fn cell_text() -> impl Strategy<Value = String> {
    prop_oneof![
        "[a-zA-Z0-9 ]{0,8}",
        "[a-z|:\\\\ ]{0,8}",
        Just(" row 1 : ".to_string()),
        Just(" | ".to_string()),
        "-?[0-9]{1,4}(\\.[0-9]{1,3})?",
    ]
}

fn table(min_cols: usize) -> impl Strategy<Value = Table> {
    (min_cols..6usize, 0..7usize).prop_flat_map(|(cols, rows)| {
        (
            prop::collection::vec(cell_text(), cols),
            prop::collection::vec(prop::collection::vec(cell_text(), cols), rows),
        )
            .prop_map(|(headers, rows)| Table {
                headers,
                rows: rows
                    .into_iter()
                    .map(|r| r.into_iter().map(Cell::new).collect())
                    .collect(),
            })
    })
}

/// An extraction instance whose answer is one of its own cells.
fn eq_instance() -> impl Strategy<Value = QAInstance> {
    (2..6usize, 3..10usize)
        .prop_flat_map(|(cols, rows)| {
            (
                prop::collection::vec(prop::collection::vec("[a-z]{1,3}", cols), rows),
                0..rows,
                0..cols,
            )
        })
        .prop_map(|(grid, r, c)| {
            let answer = grid[r][c].clone();
            let headers: Vec<String> = (0..grid[0].len()).map(|i| format!("H{i}")).collect();
            let t = Table::new(headers, grid).expect("rectangular");
            QAInstance::new("p", "What is listed?", vec![answer], t)
                .with_type(QuestionType::Extraction)
        })
}

fn prediction_pair() -> impl Strategy<Value = (Vec<QAInstance>, PredictionSet, PredictionSet)> {
    let vocab = prop::sample::select(vec!["a", "b", "7", "7.0", " B", "c"]);
    prop::collection::vec((vocab.clone(), vocab.clone(), vocab), 1..30).prop_map(|rows| {
        let t = Table::new(["x"], [["y"]]).expect("rectangular");
        let gold = rows
            .iter()
            .enumerate()
            .map(|(i, (g, _, _))| {
                QAInstance::new(format!("i{i}"), "q", vec![g.to_string()], t.clone())
            })
            .collect();
        let a = PredictionSet::new("m", Condition::Original).with_entries(
            rows.iter()
                .enumerate()
                .map(|(i, (_, p, _))| (format!("i{i}"), *p)),
        );
        let b = PredictionSet::new("m", Condition::Original).with_entries(
            rows.iter()
                .enumerate()
                .map(|(i, (_, _, p))| (format!("i{i}"), *p)),
        );
        (gold, a, b)
    })
}

proptest! {
    #[test]
    fn normalization_is_idempotent(s in "\\PC{0,20}") {
        let once = normalize_answer(&s);
        prop_assert_eq!(normalize_answer(&once), once);
    }

    #[test]
    fn numeric_renderings_normalize_equal(n in -99_999i64..99_999, zeros in 0usize..4) {
        let plain = n.to_string();
        let padded = format!("{n}.{}", "0".repeat(zeros.max(1)));
        let abs = n.unsigned_abs();
        let grouped = if abs >= 1000 {
            format!("{}{},{:03}", if n < 0 { "-" } else { "" }, abs / 1000, abs % 1000)
        } else {
            plain.clone()
        };
        let want = normalize_answer(&plain);
        prop_assert_eq!(normalize_answer(&padded), want.clone());
        prop_assert_eq!(normalize_answer(&grouped), want.clone());
        prop_assert_eq!(normalize_answer(&format!("  {plain} ")), want);
    }

    #[test]
    fn validate_reports_each_mutation(inst in eq_instance(), which in 0usize..4) {
        prop_assert!(validate(&inst).is_empty());
        let mut bad = inst.clone();
        match which {
            0 => { bad.table.rows[0].pop(); }
            1 => bad.answers.clear(),
            2 => bad.id.clear(),
            _ => bad.relevant_cells = Some(vec![CellCoord::new(bad.table.n_rows(), 0)]),
        }
        prop_assert!(!validate(&bad).is_empty());
    }

    #[test]
    fn serialization_round_trips(t in table(1)) {
        let text = serialize(&t);
        prop_assert_eq!(parse(text.as_str()).unwrap(), t);
    }

    #[test]
    fn permutations_are_seeded_and_answer_preserving(inst in eq_instance(), seed in any::<u64>()) {
        for kind in PerturbationKind::STRUCTURE {
            let a = perturb::apply(kind, &inst, seed).unwrap();
            let b = perturb::apply(kind, &inst, seed).unwrap();
            prop_assert_eq!(&a, &b);
            prop_assert_eq!(
                answer_cell_multiset(&a.instance.table, &a.instance.answers),
                answer_cell_multiset(&inst.table, &inst.answers)
            );
            prop_assert_eq!(replay(&inst, &a.record).unwrap(), a.instance);
        }
    }

    #[test]
    fn variation_bounds((gold, a, b) in prediction_pair()) {
        let same = vp::<f64>(&a, &a, &gold).unwrap();
        prop_assert_eq!(same.vp, 0.0);
        let v = vp::<f64>(&a, &b, &gold).unwrap();
        prop_assert!((0.0..=1.0).contains(&v.vp));
        let d: f64 = disagreement_rate(&a, &b).unwrap();
        prop_assert!(v.vp <= d + 1e-12);
        let back = vp::<f64>(&b, &a, &gold).unwrap();
        prop_assert_eq!((back.c2w, back.w2c), (v.w2c, v.c2w));
    }

    #[test]
    fn emd_is_antisymmetric(x in 0.0f64..=1.0, y in 0.0f64..=1.0) {
        prop_assert_eq!(emd(x, y), -emd(y, x));
        prop_assert_eq!(emd(x, x), 0.0);
    }
}

#[test]
fn zero_column_table_reads_back_as_one_empty_header() {
    let t = Table {
        headers: vec![],
        rows: vec![],
    };
    let back = parse(serialize(&t).as_str()).unwrap();
    assert_eq!(back.headers, vec![String::new()]);
    assert!(back.rows.is_empty());
}
