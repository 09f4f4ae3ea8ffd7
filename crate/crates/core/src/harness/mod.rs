//! End-to-end evaluation: serialization, model backends, reference models,
//! the pipeline and its report.

pub mod backend;
pub mod pipeline;
pub mod reference;
pub mod report;
pub mod serialize;

pub use backend::{FileBackend, HttpBackend, ModelBackend, ReferenceBackend, SubprocessBackend};
pub use pipeline::{evaluate, run_pipeline, EvalOptions, PipelineConfig, PipelineError};
pub use reference::ReferenceModel;
pub use serialize::{length_filter, serialize, SerializedTable};
