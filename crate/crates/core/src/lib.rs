//! Fine-grained robustness benchmarking for table question answering.
//!
//! The crate turns a table-QA dataset into a set of perturbed evaluation
//! conditions and scores model predictions against them:
//!
//! - [`table`]: the table / QA-instance model and answer normalization
//! - [`ingest`]: JSONL datasets and the positional-question filter
//! - [`classify`]: extraction vs reasoning question labelling
//! - [`perturb`]: structure, relevance and value perturbations
//! - [`oracle`]: the aggregation executor used to certify value edits
//! - [`metrics`]: exact match, exact-match difference, variation percentage
//! - [`harness`]: table serialization, model backends, reference models and
//!   the end-to-end pipeline
//!
//! Numeric code is generic over [`scalar::Scalar`] (cell arithmetic) and
//! [`num_traits::Float`] (metric fractions); the aliases below fix the
//! concrete types used by default.

pub mod classify;
pub mod external;
pub mod harness;
pub mod ingest;
pub mod metrics;
pub mod oracle;
pub mod perturb;
pub mod rng;
pub mod scalar;
pub mod table;
pub mod toy;

/// Exact decimal arithmetic used for cell values and oracle answers.
pub type Exact = num_rational::BigRational;

/// Floating type used for metric fractions in reports.
pub type Fraction = f64;

pub type MetricsReport = harness::report::MetricsReport<Fraction>;
pub type VpResult = metrics::VpResult<Fraction>;
pub type GapResult = metrics::GapResult<Fraction>;
pub type SeedSummary = metrics::SeedSummary<Fraction>;

pub use classify::{
    classify_combined, classify_rule_based, ComparativeLexicon, SecondaryClassifier,
};
pub use ingest::{filter_positional_questions, load_dataset, PositionalWordList};
pub use oracle::evaluate_aggregation;
pub use perturb::{PerturbationKind, PerturbationRecord, Perturbed};
pub use rng::Rng;
pub use table::{
    normalize_answer, validate, AggregationDescriptor, AggregationKind, Cell, CellCoord,
    CountFilter, QAInstance, QuestionType, Table,
};
