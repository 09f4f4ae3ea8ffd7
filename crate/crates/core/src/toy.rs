//! Deterministic synthetic dataset covering every aggregation kind.
//!
//! Tables for superlative and two-way comparison questions are sorted so
//! that the answer row comes last, the layout a last-row shortcut exploits.
//! Some answers are `"2019"`. Extraction questions avoid comparative cues
//! and positional words, and reasoning answers never appear verbatim in
//! their table, so the rule-based classifier reproduces the assigned labels.

use crate::classify::answer_in_table;
use crate::oracle::evaluate_aggregation;
use crate::rng::Rng;
use crate::table::{
    AggregationDescriptor, AggregationKind, CellCoord, CountFilter, QAInstance, QuestionType, Table,
};

pub const TOY_SEED: u64 = 20_240_311;
pub const EXTRACTION_COUNT: usize = 100;
pub const PER_AGGREGATION: usize = 20;

const FIRST: &[&str] = &[
    "Alice", "Bruno", "Chiara", "Dmitri", "Elena", "Farid", "Greta", "Hiro", "Ines", "Jonas",
    "Kofi", "Lena", "Mateo", "Nadia", "Omar", "Priya", "Quinn", "Rosa", "Sven", "Tomas", "Uma",
    "Vera",
];
const LAST: &[&str] = &[
    "Moreau",
    "Okafor",
    "Silva",
    "Tanaka",
    "Novak",
    "Haddad",
    "Lindqvist",
    "Rossi",
    "Kowalski",
    "Nakamura",
    "Dubois",
    "Ibrahim",
    "Costa",
    "Jensen",
    "Lopez",
    "Mensah",
    "Nilsson",
    "Petrov",
];
const COUNTRIES: &[&str] = &[
    "Brazil", "Canada", "Chile", "Denmark", "Egypt", "Finland", "Ghana", "India", "Japan", "Kenya",
    "Mexico", "Norway", "Peru", "Portugal", "Spain", "Turkey", "Vietnam", "Uganda",
];
const CITIES: &[&str] = &[
    "Lisbon", "Osaka", "Nairobi", "Lima", "Oslo", "Cairo", "Quito", "Dakar", "Hanoi", "Krakow",
    "Porto", "Seville", "Tromso", "Accra", "Bergen", "Recife",
];
const CLUBS: &[&str] = &[
    "Comets", "Herons", "Wolves", "Owls", "Foxes", "Ravens", "Bisons", "Lynxes", "Falcons",
    "Hawks", "Pumas", "Cobras", "Eagles", "Mustangs", "Vipers", "Otters",
];
const TITLE_ADJ: &[&str] = &[
    "Silent", "Hidden", "Broken", "Golden", "Distant", "Crimson", "Frozen", "Wild",
];
const TITLE_NOUN: &[&str] = &[
    "Road", "Valley", "Harbor", "Garden", "Bridge", "Island", "Mountain", "Meadow",
];
const DIRECTIONS: &[&str] = &["North", "South", "East", "West"];
const ITEMS: &[&str] = &[
    "Bolts", "Nails", "Screws", "Hinges", "Rivets", "Clamps", "Washers", "Springs",
];
const DEPOTS: &[&str] = &["Depot A", "Depot B", "Depot C"];

fn sample<'a>(rng: &mut Rng, pool: &[&'a str], n: usize) -> Vec<&'a str> {
    rng.permutation(pool.len())
        .into_iter()
        .take(n)
        .map(|i| pool[i])
        .collect()
}

fn distinct_ints(rng: &mut Rng, lo: u64, hi: u64, n: usize) -> Vec<u64> {
    let mut out: Vec<u64> = Vec::with_capacity(n);
    while out.len() < n {
        let v = rng.range_inclusive(lo, hi);
        if !out.contains(&v) {
            out.push(v);
        }
    }
    out
}

fn names(rng: &mut Rng, n: usize) -> Vec<String> {
    let firsts = sample(rng, FIRST, n);
    let lasts = sample(rng, LAST, n);
    firsts
        .iter()
        .zip(&lasts)
        .map(|(f, l)| format!("{f} {l}"))
        .collect()
}

fn grid(headers: &[&str], columns: Vec<Vec<String>>) -> Table {
    let n = columns.first().map_or(0, Vec::len);
    let rows: Vec<Vec<String>> = (0..n)
        .map(|r| columns.iter().map(|c| c[r].clone()).collect())
        .collect();
    Table::new(headers.iter().copied(), rows).expect("columns have equal length")
}

fn strings<T: ToString>(v: &[T]) -> Vec<String> {
    v.iter().map(ToString::to_string).collect()
}

fn extraction(rng: &mut Rng, index: usize) -> QAInstance {
    let n = rng.range_inclusive(6, 12) as usize;
    let people = names(rng, n);
    let mut years = distinct_ints(rng, 2001, 2024, n);
    if !years.contains(&2019) {
        years[0] = 2019;
    }
    let table = grid(
        &["Name", "Country", "City", "Year", "Club"],
        vec![
            people.clone(),
            strings(&sample(rng, COUNTRIES, n)),
            strings(&sample(rng, CITIES, n)),
            strings(&years),
            strings(&sample(rng, CLUBS, n)),
        ],
    );
    let (row, col) = if index.is_multiple_of(10) {
        (
            years.iter().position(|&y| y == 2019).expect("2019 present"),
            3,
        )
    } else {
        (rng.index(n), 1 + rng.index(4))
    };
    let name = &people[row];
    let question = match col {
        1 => format!("Which country is {name} from?"),
        2 => format!("In which city was {name} born?"),
        3 => format!("In what year did {name} join the league?"),
        _ => format!("Which club does {name} represent?"),
    };
    let answer = table.rows[row][col].raw().to_string();
    QAInstance::new(format!("toy-eq-{index:03}"), question, vec![answer], table)
        .with_type(QuestionType::Extraction)
        .with_relevant_cells(vec![CellCoord::new(row, 0), CellCoord::new(row, col)])
        .with_source("toy")
}

fn descriptor(kind: AggregationKind, value_col: usize) -> AggregationDescriptor {
    AggregationDescriptor {
        kind,
        value_col,
        label_col: Some(0),
        filter: None,
        operands: None,
    }
}

struct Draft {
    question: String,
    table: Table,
    descriptor: AggregationDescriptor,
    relevant: Vec<CellCoord>,
}

fn extremal(rng: &mut Rng, kind: AggregationKind, variant: usize) -> Draft {
    let n = rng.range_inclusive(5, 10) as usize;
    let mut votes = distinct_ints(rng, 100, 5000, n);
    votes.sort_unstable();
    if kind == AggregationKind::Argmin {
        votes.reverse();
    }
    let table = grid(
        &["Candidate", "Votes", "Club"],
        vec![
            names(rng, n),
            strings(&votes),
            strings(&sample(rng, CLUBS, n)),
        ],
    );
    let question = match (kind, variant % 2) {
        (AggregationKind::Argmax, 0) => "Who received the most votes?",
        (AggregationKind::Argmax, _) => "Which candidate got the highest number of votes?",
        (_, 0) => "Who received the least votes?",
        _ => "Which candidate got the fewest votes?",
    };
    Draft {
        question: question.into(),
        table,
        descriptor: descriptor(kind, 1),
        relevant: vec![CellCoord::new(n - 1, 0), CellCoord::new(n - 1, 1)],
    }
}

fn count(rng: &mut Rng) -> Draft {
    let n = rng.range_inclusive(5, 10) as usize;
    let mut titles = Vec::new();
    for i in rng
        .permutation(TITLE_ADJ.len() * TITLE_NOUN.len())
        .into_iter()
        .take(n)
    {
        titles.push(format!(
            "The {} {}",
            TITLE_ADJ[i / TITLE_NOUN.len()],
            TITLE_NOUN[i % TITLE_NOUN.len()]
        ));
    }
    let target = DIRECTIONS[rng.index(DIRECTIONS.len())];
    let mut dirs: Vec<String> = (0..n)
        .map(|_| DIRECTIONS[rng.index(DIRECTIONS.len())].to_string())
        .collect();
    if !dirs.iter().any(|d| d == target) {
        let r = rng.index(n);
        dirs[r] = target.to_string();
    }
    let years: Vec<u64> = (0..n).map(|_| rng.range_inclusive(1950, 2020)).collect();
    let relevant = (0..n)
        .filter(|&r| dirs[r] == target)
        .map(|r| CellCoord::new(r, 1))
        .collect();
    Draft {
        question: format!("How many films are headed {target}?"),
        table: grid(
            &["Title", "Direction", "Year"],
            vec![titles, dirs, strings(&years)],
        ),
        descriptor: AggregationDescriptor {
            filter: Some(CountFilter {
                col: 1,
                value: target.into(),
            }),
            ..descriptor(AggregationKind::Count, 1)
        },
        relevant,
    }
}

fn sum(rng: &mut Rng, variant: usize) -> Draft {
    let n = rng.range_inclusive(3, 8) as usize;
    let mut qty: Vec<u64> = (0..n).map(|_| rng.range_inclusive(1, 400)).collect();
    let head: u64 = qty[..n - 1].iter().sum();
    if variant.is_multiple_of(4) && head < 2019 {
        qty[n - 1] = 2019 - head;
    }
    let depots: Vec<String> = (0..n)
        .map(|_| DEPOTS[rng.index(DEPOTS.len())].to_string())
        .collect();
    Draft {
        question: "What is the total quantity of all items?".into(),
        table: grid(
            &["Item", "Quantity", "Warehouse"],
            vec![strings(&sample(rng, ITEMS, n)), strings(&qty), depots],
        ),
        descriptor: descriptor(AggregationKind::Sum, 1),
        relevant: (0..n).map(|r| CellCoord::new(r, 1)).collect(),
    }
}

fn avg(rng: &mut Rng) -> Draft {
    let n = rng.range_inclusive(3, 8) as usize;
    let scores: Vec<u64> = (0..n).map(|_| rng.range_inclusive(50, 100)).collect();
    Draft {
        question: "What is the average score?".into(),
        table: grid(
            &["Athlete", "Score", "Club"],
            vec![
                names(rng, n),
                strings(&scores),
                strings(&sample(rng, CLUBS, n)),
            ],
        ),
        descriptor: descriptor(AggregationKind::Avg, 1),
        relevant: (0..n).map(|r| CellCoord::new(r, 1)).collect(),
    }
}

fn diff(rng: &mut Rng) -> Draft {
    let n = rng.range_inclusive(4, 8) as usize;
    let periods: Vec<String> = (0..n)
        .map(|i| format!("Q{} {}", i % 4 + 1, 2018 + i / 4))
        .collect();
    let revenue = distinct_ints(rng, 1000, 9000, n);
    let cost: Vec<u64> = (0..n).map(|_| rng.range_inclusive(100, 900)).collect();
    let pair = sample_pair(rng, n);
    let (from, to) = (pair.0.min(pair.1), pair.0.max(pair.1));
    Draft {
        question: format!(
            "What is the change in revenue from {} to {}?",
            periods[from], periods[to]
        ),
        table: grid(
            &["Period", "Revenue", "Cost"],
            vec![periods, strings(&revenue), strings(&cost)],
        ),
        descriptor: AggregationDescriptor {
            operands: Some([CellCoord::new(to, 1), CellCoord::new(from, 1)]),
            ..descriptor(AggregationKind::Diff, 1)
        },
        relevant: vec![CellCoord::new(from, 1), CellCoord::new(to, 1)],
    }
}

fn sample_pair(rng: &mut Rng, n: usize) -> (usize, usize) {
    let p = rng.permutation(n);
    (p[0], p[1])
}

fn compare_two(rng: &mut Rng) -> Draft {
    let n = rng.range_inclusive(4, 9) as usize;
    let mut members = distinct_ints(rng, 50, 3000, n);
    members.sort_unstable();
    let clubs = strings(&sample(rng, CLUBS, n));
    let other = rng.index(n - 1);
    let last = n - 1;
    let (x, y) = if rng.coin() {
        (other, last)
    } else {
        (last, other)
    };
    Draft {
        question: format!("Which club has more members, {} or {}?", clubs[x], clubs[y]),
        table: grid(
            &["Club", "Members", "City"],
            vec![
                clubs.clone(),
                strings(&members),
                strings(&sample(rng, CITIES, n)),
            ],
        ),
        descriptor: AggregationDescriptor {
            operands: Some([CellCoord::new(x, 1), CellCoord::new(y, 1)]),
            ..descriptor(AggregationKind::CompareTwo, 1)
        },
        relevant: vec![CellCoord::new(other, 1), CellCoord::new(last, 1)],
    }
}

fn reasoning(rng: &mut Rng, kind: AggregationKind, variant: usize) -> QAInstance {
    loop {
        let draft = match kind {
            AggregationKind::Argmax | AggregationKind::Argmin => extremal(rng, kind, variant),
            AggregationKind::Count => count(rng),
            AggregationKind::Sum => sum(rng, variant),
            AggregationKind::Avg => avg(rng),
            AggregationKind::Diff => diff(rng),
            AggregationKind::CompareTwo => compare_two(rng),
        };
        let answer =
            evaluate_aggregation(&draft.table, &draft.descriptor).expect("toy tables have no ties");
        let tag = format!("{kind:?}").to_lowercase();
        let inst = QAInstance::new(
            format!("toy-{tag}-{variant:03}"),
            draft.question,
            vec![answer],
            draft.table,
        )
        .with_type(QuestionType::Reasoning)
        .with_relevant_cells(draft.relevant)
        .with_aggregation(draft.descriptor)
        .with_source("toy");
        let cue_kind = matches!(
            kind,
            AggregationKind::Argmax | AggregationKind::Argmin | AggregationKind::CompareTwo
        );
        if cue_kind || !answer_in_table(&inst) {
            return inst;
        }
    }
}

/// The bundled toy set: [`EXTRACTION_COUNT`] extraction questions followed by
/// [`PER_AGGREGATION`] reasoning questions per aggregation kind.
pub fn toy_dataset() -> Vec<QAInstance> {
    toy_dataset_with_seed(TOY_SEED)
}

pub fn toy_dataset_with_seed(seed: u64) -> Vec<QAInstance> {
    let mut rng = Rng::from_seed(seed);
    let mut out: Vec<QAInstance> = (0..EXTRACTION_COUNT)
        .map(|i| extraction(&mut rng, i))
        .collect();
    for kind in AggregationKind::ALL {
        for v in 0..PER_AGGREGATION {
            out.push(reasoning(&mut rng, kind, v));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classify::{classify_rule_based, ComparativeLexicon};
    use crate::ingest::PositionalWordList;
    use crate::table::validate;

    #[test]
    fn toy_set_is_valid_and_deterministic() {
        let a = toy_dataset();
        assert_eq!(a, toy_dataset());
        assert!(a.len() >= 200);
        let lex = ComparativeLexicon::default();
        let positional = PositionalWordList::default();
        let mut ids = std::collections::BTreeSet::new();
        for inst in &a {
            assert!(
                validate(inst).is_empty(),
                "{}: {:?}",
                inst.id,
                validate(inst)
            );
            assert!(ids.insert(inst.id.clone()));
            assert_eq!(
                classify_rule_based(inst, &lex),
                inst.question_type,
                "{}",
                inst.id
            );
            assert!(!positional.matches(&inst.question), "{}", inst.id);
            assert!(inst.answers.iter().all(|x| x.to_lowercase() != "none"));
            assert!(
                !inst.table.headers.iter().any(|h| inst.is_correct(h)),
                "{}",
                inst.id
            );
            if let Some(d) = &inst.aggregation {
                assert_eq!(
                    evaluate_aggregation(&inst.table, d).unwrap(),
                    inst.answers[0]
                );
            }
        }
        for kind in AggregationKind::ALL {
            let n = a
                .iter()
                .filter(|i| i.aggregation.as_ref().is_some_and(|d| d.kind == kind))
                .count();
            assert_eq!(n, PER_AGGREGATION);
        }
        assert!(a.iter().filter(|i| i.answers[0] == "2019").count() >= 10);
    }
}
