use std::io::{BufRead, Write};
use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pipeline::{Candidate, QuestionPlan};
use crate::subtest::Subtest;

pub const TRANSCRIPT_SCHEMA: &str = "veriq.transcript.v1";

/// Source of record timestamps. `Logical` gives reproducible transcripts.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Clock {
    #[default]
    System,
    Logical,
}

impl Clock {
    pub fn timestamp_ms(self, seq: u64) -> u64 {
        match self {
            Clock::System => SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map_or(0, |d| d.as_millis() as u64),
            Clock::Logical => seq * 1000,
        }
    }
}

/// One presented item or clue, with the engine's answers and, once
/// scored, the examiner's scores.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TranscriptRecord {
    pub schema: String,
    pub seq: u64,
    pub subtest: Subtest,
    pub item_id: String,
    pub clue_index: usize,
    pub prompt: String,
    pub plan: Option<QuestionPlan>,
    pub answers: Vec<Candidate>,
    pub error: Option<String>,
    pub max_points: u8,
    pub scores: Option<Vec<u8>>,
    pub strict: Option<u8>,
    pub relaxed: Option<u8>,
    pub timestamp_ms: u64,
}

impl TranscriptRecord {
    pub fn is_scored(&self) -> bool {
        self.scores.is_some()
    }
}

pub fn write_transcript<W: Write>(mut out: W, records: &[TranscriptRecord]) -> Result<()> {
    for record in records {
        serde_json::to_writer(&mut out, record)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

pub fn append_record<W: Write>(mut out: W, record: &TranscriptRecord) -> Result<()> {
    let mut line = serde_json::to_vec(record)?;
    line.push(b'\n');
    out.write_all(&line)?;
    out.flush()?;
    Ok(())
}

pub fn read_transcript<R: BufRead>(reader: R) -> Result<Vec<TranscriptRecord>> {
    let mut records = Vec::new();
    for (n, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let record: TranscriptRecord =
            serde_json::from_str(&line).map_err(|e| Error::Transcript(format!("line {}: {e}", n + 1)))?;
        if record.schema != TRANSCRIPT_SCHEMA {
            return Err(Error::Transcript(format!("line {}: unsupported schema {:?}", n + 1, record.schema)));
        }
        records.push(record);
    }
    Ok(records)
}

pub fn load_transcript(path: impl AsRef<Path>) -> Result<Vec<TranscriptRecord>> {
    read_transcript(std::io::BufReader::new(std::fs::File::open(path)?))
}
