use std::collections::BTreeMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::psychometrics::pool::{Item, ItemPool};
use crate::spectral::ANSWER_LIST_LEN;
use crate::subtest::Subtest;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regimen {
    /// Only the rank-1 candidate counts.
    Strict,
    /// The best of the five candidates counts.
    Relaxed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SubtestStatus {
    Pending,
    Active,
    Discontinued,
    Exhausted,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CompletionReason {
    Discontinued,
    Exhausted,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubtestProgress {
    pub subtest: Subtest,
    pub cursor: usize,
    pub clue_index: usize,
    pub zero_run: usize,
    pub status: SubtestStatus,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "step", rename_all = "snake_case")]
pub enum Step {
    Present {
        subtest: Subtest,
        item_id: String,
        clue_index: usize,
        prompt: String,
        max_points: u8,
    },
    SubtestComplete {
        subtest: Subtest,
        reason: CompletionReason,
        next: Option<Subtest>,
    },
    SessionComplete,
}

/// Scores for one presentation (an item, or one clue of a Word Reasoning
/// item).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScoreRecord {
    pub subtest: Subtest,
    pub item_id: String,
    pub clue_index: usize,
    pub scores: Vec<u8>,
    pub strict: u8,
    pub relaxed: u8,
}

/// Final scores for an administered item.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ItemResult {
    pub subtest: Subtest,
    pub item_id: String,
    pub clues_used: usize,
    pub strict: u8,
    pub relaxed: u8,
}

impl ItemResult {
    pub fn score(&self, regimen: Regimen) -> u8 {
        match regimen {
            Regimen::Strict => self.strict,
            Regimen::Relaxed => self.relaxed,
        }
    }
}

/// Strict is the rank-1 score, relaxed the best of all candidates.
pub fn regimen_scores(scores: &[u8]) -> (u8, u8) {
    let strict = scores.first().copied().unwrap_or(0);
    let relaxed = scores.iter().copied().max().unwrap_or(0);
    (strict, relaxed)
}

/// Administration state for one examinee over an item pool. Subtests run
/// in pool order, each from its first item.
#[derive(Debug, Clone)]
pub struct Session {
    pool: Arc<ItemPool>,
    progress: Vec<SubtestProgress>,
    current: usize,
    records: Vec<ScoreRecord>,
    results: Vec<ItemResult>,
    /// Relaxed score so far for a Word Reasoning item between clues.
    pending_relaxed: u8,
    just_completed: Option<(Subtest, CompletionReason)>,
}

impl Session {
    pub fn new(pool: Arc<ItemPool>) -> Self {
        let mut progress: Vec<SubtestProgress> = pool
            .subtests()
            .iter()
            .map(|p| SubtestProgress {
                subtest: p.subtest,
                cursor: 0,
                clue_index: 0,
                zero_run: 0,
                status: SubtestStatus::Pending,
            })
            .collect();
        progress[0].status = SubtestStatus::Active;
        Self {
            pool,
            progress,
            current: 0,
            records: Vec::new(),
            results: Vec::new(),
            pending_relaxed: 0,
            just_completed: None,
        }
    }

    pub fn pool(&self) -> &ItemPool {
        &self.pool
    }

    pub fn progress(&self) -> &[SubtestProgress] {
        &self.progress
    }

    pub fn records(&self) -> &[ScoreRecord] {
        &self.records
    }

    pub fn results(&self) -> &[ItemResult] {
        &self.results
    }

    pub fn is_complete(&self) -> bool {
        self.current >= self.progress.len()
    }

    /// The item and clue awaiting scores, if any.
    pub fn current_item(&self) -> Option<(&Item, usize)> {
        let progress = self.progress.get(self.current)?;
        let item = &self.pool.subtests()[self.current].items[progress.cursor];
        Some((item, progress.clue_index))
    }

    pub fn next_step(&self) -> Step {
        if let Some((subtest, reason)) = self.just_completed {
            return Step::SubtestComplete {
                subtest,
                reason,
                next: self.progress.get(self.current).map(|p| p.subtest),
            };
        }
        match self.current_item() {
            Some((item, clue_index)) => Step::Present {
                subtest: item.subtest,
                item_id: item.id.clone(),
                clue_index,
                prompt: item.prompt(clue_index).to_string(),
                max_points: item.max_points,
            },
            None => Step::SessionComplete,
        }
    }

    /// Records the examiner's per-candidate scores for the current
    /// presentation and advances clue, item or subtest.
    pub fn record_scores(&mut self, item_id: &str, scores: &[u8]) -> Result<Step> {
        let Some((item, clue_index)) = self.current_item() else {
            return Err(Error::NotCurrent(item_id.to_string()));
        };
        if item.id != item_id {
            return Err(Error::NotCurrent(item_id.to_string()));
        }
        if scores.len() > ANSWER_LIST_LEN {
            return Err(Error::InvalidScores(format!(
                "at most {ANSWER_LIST_LEN} candidate scores, got {}",
                scores.len()
            )));
        }
        if let Some(bad) = scores.iter().find(|&&s| s > item.max_points) {
            return Err(Error::InvalidScores(format!("score {bad} exceeds max_points {}", item.max_points)));
        }
        let (strict, relaxed) = regimen_scores(scores);
        let subtest = item.subtest;
        let clues = item.presentations();
        let item_id = item.id.clone();
        self.just_completed = None;
        self.records.push(ScoreRecord {
            subtest,
            item_id: item_id.clone(),
            clue_index,
            scores: scores.to_vec(),
            strict,
            relaxed,
        });
        self.pending_relaxed = self.pending_relaxed.max(relaxed);

        let run = self.pool.subtests()[self.current].discontinue_run;
        let n_items = self.pool.subtests()[self.current].items.len();
        let progress = &mut self.progress[self.current];
        if strict == 0 && clue_index + 1 < clues {
            progress.clue_index += 1;
            return Ok(self.next_step());
        }
        self.results.push(ItemResult {
            subtest,
            item_id,
            clues_used: clue_index + 1,
            strict,
            relaxed: std::mem::take(&mut self.pending_relaxed),
        });
        progress.zero_run = if strict == 0 { progress.zero_run + 1 } else { 0 };
        progress.cursor += 1;
        progress.clue_index = 0;
        let reason = if progress.zero_run >= run {
            Some((SubtestStatus::Discontinued, CompletionReason::Discontinued))
        } else if progress.cursor >= n_items {
            Some((SubtestStatus::Exhausted, CompletionReason::Exhausted))
        } else {
            None
        };
        if let Some((status, reason)) = reason {
            progress.status = status;
            self.just_completed = Some((subtest, reason));
            self.current += 1;
            if let Some(next) = self.progress.get_mut(self.current) {
                next.status = SubtestStatus::Active;
            }
        }
        Ok(self.next_step())
    }

    /// Points per subtest over finished items; subtests never reached
    /// score 0.
    pub fn raw_scores(&self, regimen: Regimen) -> BTreeMap<Subtest, u32> {
        let mut raw: BTreeMap<Subtest, u32> = self.progress.iter().map(|p| (p.subtest, 0)).collect();
        for result in &self.results {
            *raw.entry(result.subtest).or_default() += u32::from(result.score(regimen));
        }
        raw
    }

    pub fn administered(&self, subtest: Subtest) -> usize {
        self.results.iter().filter(|r| r.subtest == subtest).count()
    }
}
