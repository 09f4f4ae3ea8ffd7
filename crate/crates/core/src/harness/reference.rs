//! Built-in deterministic models used to probe the harness itself.

use std::fmt;
use std::str::FromStr;

use crate::classify::ComparativeLexicon;
use crate::oracle::{evaluate_aggregation, OracleError};
use crate::perturb::locate_target;
use crate::table::{CellCoord, QAInstance};

pub const DEFAULT_MAJORITY_ANSWER: &str = "2019";

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ReferenceModel {
    /// Executes the aggregation descriptor, or retrieves the gold-matching
    /// cell when there is none.
    FaithfulOracle,
    /// Answers cue questions with the label cell of the last row.
    LastRowBiased,
    /// Answers cue questions with the label cell of the first row.
    FirstRowBiased,
    /// Always outputs the same string.
    MajorityAnswer(String),
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ReferenceError {
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error("no aggregation descriptor and no table cell matches a gold answer")]
    NoEvidence,
    #[error("table has no rows")]
    EmptyTable,
    #[error("unknown reference model {0:?}")]
    UnknownModel(String),
}

impl ReferenceModel {
    pub fn name(&self) -> &'static str {
        match self {
            ReferenceModel::FaithfulOracle => "FAITHFUL_ORACLE",
            ReferenceModel::LastRowBiased => "LAST_ROW_BIASED",
            ReferenceModel::FirstRowBiased => "FIRST_ROW_BIASED",
            ReferenceModel::MajorityAnswer(_) => "MAJORITY_ANSWER",
        }
    }

    /// Parses a model name; `answer` sets the MAJORITY_ANSWER output.
    pub fn from_name(name: &str, answer: Option<&str>) -> Result<Self, ReferenceError> {
        match name.trim().to_uppercase().as_str() {
            "FAITHFUL_ORACLE" => Ok(ReferenceModel::FaithfulOracle),
            "LAST_ROW_BIASED" => Ok(ReferenceModel::LastRowBiased),
            "FIRST_ROW_BIASED" => Ok(ReferenceModel::FirstRowBiased),
            "MAJORITY_ANSWER" => Ok(ReferenceModel::MajorityAnswer(
                answer.unwrap_or(DEFAULT_MAJORITY_ANSWER).to_string(),
            )),
            _ => Err(ReferenceError::UnknownModel(name.to_string())),
        }
    }

    pub fn run(
        &self,
        instance: &QAInstance,
        lexicon: &ComparativeLexicon,
    ) -> Result<String, ReferenceError> {
        match self {
            ReferenceModel::FaithfulOracle => faithful(instance),
            ReferenceModel::LastRowBiased | ReferenceModel::FirstRowBiased => {
                if !lexicon.has_cue(&instance.question) {
                    return faithful(instance);
                }
                let t = &instance.table;
                if t.n_rows() == 0 {
                    return Err(ReferenceError::EmptyTable);
                }
                let row = if *self == ReferenceModel::LastRowBiased {
                    t.n_rows() - 1
                } else {
                    0
                };
                let col = instance
                    .aggregation
                    .as_ref()
                    .and_then(|d| d.label_col)
                    .unwrap_or(0);
                t.cell(CellCoord::new(row, col))
                    .map(|c| c.raw().to_string())
                    .ok_or(ReferenceError::EmptyTable)
            }
            ReferenceModel::MajorityAnswer(answer) => Ok(answer.clone()),
        }
    }
}

fn faithful(instance: &QAInstance) -> Result<String, ReferenceError> {
    if let Some(d) = &instance.aggregation {
        return Ok(evaluate_aggregation(&instance.table, d)?);
    }
    let target = locate_target(instance).map_err(|_| ReferenceError::NoEvidence)?;
    Ok(instance
        .table
        .cell(target.coord())
        .expect("located cell exists")
        .raw()
        .to_string())
}

impl fmt::Display for ReferenceModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ReferenceModel::MajorityAnswer(a) => write!(f, "MAJORITY_ANSWER({a})"),
            other => f.write_str(other.name()),
        }
    }
}

impl FromStr for ReferenceModel {
    type Err = ReferenceError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ReferenceModel::from_name(s, None)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::table::{AggregationDescriptor, AggregationKind, QuestionType, Table};

    fn votes() -> QAInstance {
        let t = Table::new(["Name", "Votes"], [["Leslie", "15"], ["Olsson", "4"]]).unwrap();
        QAInstance::new(
            "v",
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

    #[test]
    fn examples() {
        let lex = ComparativeLexicon::default();
        let v = votes();
        assert_eq!(
            ReferenceModel::FaithfulOracle.run(&v, &lex).unwrap(),
            "Olsson"
        );
        assert_eq!(
            ReferenceModel::LastRowBiased.run(&v, &lex).unwrap(),
            "Olsson"
        );
        assert_eq!(
            ReferenceModel::FirstRowBiased.run(&v, &lex).unwrap(),
            "Leslie"
        );
        let majority = ReferenceModel::from_name("majority_answer", None).unwrap();
        assert_eq!(majority.run(&v, &lex).unwrap(), "2019");
    }

    #[test]
    fn faithful_without_descriptor() {
        let lex = ComparativeLexicon::default();
        let mut v = votes();
        v.aggregation = None;
        assert_eq!(
            ReferenceModel::FaithfulOracle.run(&v, &lex).unwrap(),
            "Olsson"
        );
        v.answers = vec!["Nobody".into()];
        assert_eq!(
            ReferenceModel::FaithfulOracle.run(&v, &lex),
            Err(ReferenceError::NoEvidence)
        );
        assert!(ReferenceModel::from_name("GPT", None).is_err());
    }
}
