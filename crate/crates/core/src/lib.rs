//! Commonsense question answering over a spectral (truncated SVD) view of
//! a ConceptNet-style assertion graph, plus the rules for administering and
//! scoring verbal subtests against it.

pub mod container;
pub mod engine;
pub mod error;
pub mod kb;
pub mod model;
pub mod pipeline;
pub mod psychometrics;
pub mod sparse;
pub mod spectral;
pub mod subtest;
pub mod text;

pub use engine::{run_batch, Administration, Engine, Presentation, Query, Response};
pub use error::{Error, Result};
pub use kb::{Assertion, Direction, Feature, Polarity, PruneConfig, Vocabulary, Weighting};
pub use model::{IngestConfig, IngestSummary, KnowledgeModel, RelationSet};
pub use pipeline::{Answer, Candidate, ClueState, PipelineConfig, QuestionPlan, SpecialFilter};
pub use spectral::{AnswerList, Category, ScoredFeature, SpectralModel, SvdOptions};
pub use subtest::Subtest;
