//! Generation of the three machine-involved classes from prompt templates
//! and pluggable providers, followed by artifact cleaning.

mod clean;
mod pipeline;
mod prompt;
mod provider;

use thiserror::Error;

pub use clean::{clean_generation, Cleaner};
pub use pipeline::{
    generate_machine, humanize, polish, run_generation, task_statement, GenerationConfig, GenerationJob,
    GenerationSummary, JobFailure, JobProvenance, JobSource, JobStatus,
};
pub use prompt::{render_prompt, PromptCatalog, PromptTemplate, TrailingPrompt, DEFAULT_TRAILING, PLACEHOLDER};
pub(crate) use provider::stable_hash;
pub use provider::{FnProvider, MockProvider, ProviderClient, ProviderError, RetryPolicy, TokenBucket};

use crate::corpus::Label;

#[derive(Debug, Error)]
pub enum GenError {
    #[error("invalid template: {0}")]
    Template(String),
    #[error("placeholder/source mismatch: {0}")]
    PlaceholderMismatch(String),
    #[error("catalog line {line}: {message}")]
    Catalog { line: usize, message: String },
    #[error("{operation} requires {expected} input but {id:?} is {found}")]
    WrongInputClass { operation: &'static str, id: String, expected: Label, found: Label },
    #[error("no prompt template for class {label} in domain {domain:?}")]
    NoTemplate { label: Label, domain: String },
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}
