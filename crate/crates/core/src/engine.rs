//! Binds a knowledge model to item pools: answering items, driving a
//! session, and producing transcripts. The CLI, HTTP service and Python
//! bindings all go through this layer.

use std::collections::HashMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::KnowledgeModel;
use crate::pipeline::{self, Answer, Candidate, ClueState, PipelineConfig, QuestionPlan};
use crate::psychometrics::norms::{Age, NormTable};
use crate::psychometrics::pool::{Item, ItemContent, ItemPool};
use crate::psychometrics::report::{build_report, Composition, Report};
use crate::psychometrics::session::{Session, Step};
use crate::psychometrics::transcript::{Clock, TranscriptRecord, TRANSCRIPT_SCHEMA};
use crate::subtest::Subtest;

/// A free-standing question for one subtest.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Query {
    Open { subtest: Subtest, question: String },
    Vocabulary(String),
    WordReasoning(Vec<String>),
    Similarities(String, String),
}

#[derive(Debug)]
pub struct Engine {
    model: KnowledgeModel,
    config: PipelineConfig,
}

/// The engine's response to one presentation. Pipeline failures are kept
/// as text so a batch can carry on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Response {
    pub plan: Option<QuestionPlan>,
    pub answers: Vec<Candidate>,
    pub error: Option<String>,
}

impl From<Result<Answer>> for Response {
    fn from(result: Result<Answer>) -> Self {
        match result {
            Ok(answer) => Response {
                answers: answer.candidates(),
                plan: Some(answer.plan),
                error: None,
            },
            Err(e) => Response {
                plan: None,
                answers: Vec::new(),
                error: Some(e.to_string()),
            },
        }
    }
}

impl Engine {
    pub fn new(model: KnowledgeModel, config: PipelineConfig) -> Self {
        Self { model, config }
    }

    pub fn model(&self) -> &KnowledgeModel {
        &self.model
    }

    pub fn config(&self) -> &PipelineConfig {
        &self.config
    }

    pub fn answer(&self, query: &Query) -> Result<Answer> {
        let (model, config) = (&self.model, &self.config);
        match query {
            Query::Open { subtest, question } => match subtest {
                Subtest::Information | Subtest::Comprehension => {
                    pipeline::answer_open_question(question, *subtest, model, config)
                }
                Subtest::Vocabulary => pipeline::answer_vocabulary(question, model, config),
                Subtest::WordReasoning => {
                    pipeline::answer_word_reasoning(&ClueState::new(question.clone()), model, config)
                }
                Subtest::Similarities => {
                    let (a, b) = pipeline::parse_similarity_frame(question)
                        .ok_or_else(|| Error::Argument(format!("no \"X and Y are both\" frame in {question:?}")))?;
                    pipeline::answer_similarities(&a, &b, model, config)
                }
            },
            Query::Vocabulary(word) => pipeline::answer_vocabulary(word, model, config),
            Query::WordReasoning(clues) => {
                pipeline::answer_word_reasoning(&ClueState::from_clues(clues.iter().cloned())?, model, config)
            }
            Query::Similarities(a, b) => pipeline::answer_similarities(a, b, model, config),
        }
    }

    /// Word Reasoning items see every clue up to and including `clue_index`.
    pub fn answer_item(&self, item: &Item, clue_index: usize) -> Result<Answer> {
        let query = match &item.content {
            ItemContent::Question(q) => Query::Open {
                subtest: item.subtest,
                question: q.clone(),
            },
            ItemContent::Word(w) => Query::Vocabulary(w.clone()),
            ItemContent::Clues(clues) => Query::WordReasoning(clues[..=clue_index.min(clues.len() - 1)].to_vec()),
            ItemContent::Pair { a, b, .. } => Query::Similarities(a.clone(), b.clone()),
        };
        self.answer(&query)
    }

    pub fn respond(&self, item: &Item, clue_index: usize) -> Response {
        self.answer_item(item, clue_index).into()
    }
}

/// What the examiner sees for the presentation awaiting scores.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Presentation {
    pub subtest: Subtest,
    pub item_id: String,
    pub clue_index: usize,
    pub clue_count: usize,
    pub prompt: String,
    pub max_points: u8,
    pub rubric: String,
    pub zero_run: usize,
    #[serde(flatten)]
    pub response: Response,
}

fn record_for(seq: u64, item: &Item, clue_index: usize, response: Response, clock: Clock) -> TranscriptRecord {
    TranscriptRecord {
        schema: TRANSCRIPT_SCHEMA.to_string(),
        seq,
        subtest: item.subtest,
        item_id: item.id.clone(),
        clue_index,
        prompt: item.prompt(clue_index).to_string(),
        plan: response.plan,
        answers: response.answers,
        error: response.error,
        max_points: item.max_points,
        scores: None,
        strict: None,
        relaxed: None,
        timestamp_ms: clock.timestamp_ms(seq),
    }
}

/// Every item and every clue, unscored, in pool order.
pub fn run_batch(engine: &Engine, pool: &ItemPool, clock: Clock) -> Vec<TranscriptRecord> {
    let mut records = Vec::new();
    for subtest in pool.subtests() {
        for item in &subtest.items {
            for clue in 0..item.presentations() {
                let seq = records.len() as u64;
                records.push(record_for(seq, item, clue, engine.respond(item, clue), clock));
            }
        }
    }
    records
}

/// A live session: the rule state plus the engine answers shown to the
/// examiner and the transcript so far.
#[derive(Debug, Clone)]
pub struct Administration {
    engine: Arc<Engine>,
    session: Session,
    clock: Clock,
    transcript: Vec<TranscriptRecord>,
    current: Option<Presentation>,
}

impl Administration {
    pub fn new(engine: Arc<Engine>, pool: Arc<ItemPool>, clock: Clock) -> Self {
        let mut admin = Self {
            engine,
            session: Session::new(pool),
            clock,
            transcript: Vec::new(),
            current: None,
        };
        admin.refresh();
        admin
    }

    fn refresh(&mut self) {
        self.current = self.session.current_item().map(|(item, clue_index)| Presentation {
            subtest: item.subtest,
            item_id: item.id.clone(),
            clue_index,
            clue_count: item.presentations(),
            prompt: item.prompt(clue_index).to_string(),
            max_points: item.max_points,
            rubric: item.rubric.clone(),
            zero_run: self
                .session
                .progress()
                .iter()
                .find(|p| p.subtest == item.subtest)
                .map_or(0, |p| p.zero_run),
            response: self.engine.respond(item, clue_index),
        });
    }

    pub fn session(&self) -> &Session {
        &self.session
    }

    pub fn step(&self) -> Step {
        self.session.next_step()
    }

    pub fn current(&self) -> Option<&Presentation> {
        self.current.as_ref()
    }

    pub fn transcript(&self) -> &[TranscriptRecord] {
        &self.transcript
    }

    pub fn clock(&self) -> Clock {
        self.clock
    }

    /// Scores must cover exactly the candidates shown.
    pub fn record_scores(&mut self, item_id: &str, scores: &[u8]) -> Result<Step> {
        let presentation = self
            .current
            .as_ref()
            .filter(|p| p.item_id == item_id)
            .ok_or_else(|| Error::NotCurrent(item_id.to_string()))?;
        if scores.len() != presentation.response.answers.len() {
            return Err(Error::InvalidScores(format!(
                "expected {} scores (one per candidate), got {}",
                presentation.response.answers.len(),
                scores.len()
            )));
        }
        let (item, clue_index) = self.session.current_item().expect("presentation implies a current item");
        let item = item.clone();
        let response = presentation.response.clone();
        let step = self.session.record_scores(item_id, scores)?;
        let score = self.session.records().last().expect("just recorded");
        let mut record = record_for(self.transcript.len() as u64, &item, clue_index, response, self.clock);
        record.scores = Some(score.scores.clone());
        record.strict = Some(score.strict);
        record.relaxed = Some(score.relaxed);
        self.transcript.push(record);
        self.refresh();
        Ok(step)
    }

    pub fn report(&self, norms: &NormTable, age: Age, compositions: &[Composition]) -> Result<Report> {
        build_report(&self.session, norms, age, compositions)
    }

    /// Re-administers a scored transcript (a session transcript, or a batch
    /// transcript with scores filled in). Stops at the first presentation
    /// with no scored record; records the rules never reach are ignored.
    pub fn replay(engine: Arc<Engine>, pool: Arc<ItemPool>, clock: Clock, records: &[TranscriptRecord]) -> Result<Self> {
        let scored: HashMap<(String, usize), &TranscriptRecord> = records
            .iter()
            .filter(|r| r.is_scored())
            .map(|r| ((r.item_id.clone(), r.clue_index), r))
            .collect();
        let mut admin = Self::new(engine, pool, clock);
        while let Some(current) = admin.current() {
            let Some(&record) = scored.get(&(current.item_id.clone(), current.clue_index)) else {
                break;
            };
            let texts = |answers: &[Candidate]| answers.iter().map(|c| c.text.clone()).collect::<Vec<_>>();
            if texts(&record.answers) != texts(&current.response.answers) {
                log::warn!(
                    "item {} clue {}: recorded answers differ from this model's answers",
                    record.item_id,
                    record.clue_index
                );
            }
            let item_id = current.item_id.clone();
            let scores = record.scores.clone().unwrap_or_default();
            admin
                .record_scores(&item_id, &scores)
                .map_err(|e| Error::Transcript(format!("item {item_id} clue {}: {e}", record.clue_index)))?;
        }
        Ok(admin)
    }
}
