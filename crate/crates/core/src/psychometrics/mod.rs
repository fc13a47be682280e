//! Item pools, administration rules, norm tables and score reports.

pub mod norms;
pub mod pool;
pub mod report;
pub mod session;
pub mod transcript;

pub use norms::{Age, AgeBand, NormTable, RangeRow};
pub use pool::{Item, ItemContent, ItemPool, SubtestPool};
pub use report::{build_report, viq_percentile, Composition, CompositionScore, RegimenReport, Report};
pub use session::{CompletionReason, ItemResult, Regimen, ScoreRecord, Session, Step, SubtestProgress, SubtestStatus};
pub use transcript::{Clock, TranscriptRecord};
