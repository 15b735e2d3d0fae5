//! Configuration, evidence store, filter chain and reports.

use std::io;

use thiserror::Error;

use crate::align::AlignError;
use crate::motif::MotifError;
use crate::partition::PartitionError;
use crate::seqio::SeqError;
use crate::toolio::ToolError;

pub mod config;
pub mod curate;
pub mod evidence;
pub mod report;
pub mod scorecard;

pub use config::{Config, CurationConfig, FilterConfig, MaxIdRounding, SplitConfig, TrainSpec};
pub use curate::{curate, CurationReport};
pub use evidence::{EvidenceStore, HOOK_KINDS};
pub use report::{write_reports, ReportPaths};
pub use scorecard::{apply_filters, build_scorecards, cdf, Evidence, FunnelReport, Scorecard, Stage, Verdict};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PipelineError {
    #[error("invalid configuration: {0}")]
    ConfigInvalid(String),
    #[error("evidence references unknown id '{0}'")]
    UnknownEvidenceId(String),
    #[error("empty input: {0}")]
    EmptyInput(String),
    #[error("missing input: {0}")]
    MissingInput(String),
    #[error("{context}: {source}")]
    Tool { context: String, source: ToolError },
    #[error(transparent)]
    Seq(#[from] SeqError),
    #[error(transparent)]
    Align(#[from] AlignError),
    #[error(transparent)]
    Partition(#[from] PartitionError),
    #[error(transparent)]
    Motif(#[from] MotifError),
    #[error("external command failed: {0}")]
    Hook(String),
    #[error("I/O error: {0}")]
    Io(String),
}

impl From<ToolError> for PipelineError {
    fn from(source: ToolError) -> Self {
        PipelineError::Tool {
            context: "tool output".into(),
            source,
        }
    }
}

impl From<io::Error> for PipelineError {
    fn from(e: io::Error) -> Self {
        PipelineError::Io(e.to_string())
    }
}

impl PipelineError {
    pub fn in_file(path: &std::path::Path) -> impl Fn(ToolError) -> PipelineError + '_ {
        move |source| PipelineError::Tool {
            context: path.display().to_string(),
            source,
        }
    }

    /// Process exit status: 2 for I/O, 1 for everything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::Io(_)
            | PipelineError::Seq(SeqError::Io(_))
            | PipelineError::Partition(PartitionError::Io(_))
            | PipelineError::Tool {
                source: ToolError::Io(_),
                ..
            } => 2,
            _ => 1,
        }
    }
}
