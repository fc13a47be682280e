use std::collections::HashSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pipeline::{parse_similarity_frame, MAX_CLUES};
use crate::subtest::Subtest;

pub const POOL_SCHEMA: &str = "veriq.pool.v1";
pub const DEFAULT_DISCONTINUE_RUN: usize = 5;

/// What the examiner reads out, by subtest shape.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ItemContent {
    Question(String),
    Word(String),
    Clues(Vec<String>),
    Pair { a: String, b: String, prompt: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Item {
    pub id: String,
    pub subtest: Subtest,
    pub content: ItemContent,
    pub max_points: u8,
    pub rubric: String,
}

impl Item {
    /// One per clue for Word Reasoning, otherwise one.
    pub fn presentations(&self) -> usize {
        match &self.content {
            ItemContent::Clues(clues) => clues.len(),
            _ => 1,
        }
    }

    pub fn prompt(&self, clue_index: usize) -> &str {
        match &self.content {
            ItemContent::Question(p) | ItemContent::Word(p) => p,
            ItemContent::Clues(clues) => &clues[clue_index.min(clues.len() - 1)],
            ItemContent::Pair { prompt, .. } => prompt,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubtestPool {
    pub subtest: Subtest,
    pub discontinue_run: usize,
    pub items: Vec<Item>,
}

impl SubtestPool {
    pub fn is_core(&self) -> bool {
        self.subtest.is_core()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ItemPool {
    subtests: Vec<SubtestPool>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct PoolFile {
    schema: String,
    subtests: Vec<RawSubtest>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSubtest {
    subtest: Subtest,
    #[serde(default = "default_run")]
    discontinue_run: usize,
    items: Vec<RawItem>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawItem {
    id: String,
    #[serde(default)]
    prompt: Option<String>,
    #[serde(default)]
    clues: Option<Vec<String>>,
    #[serde(default)]
    words: Option<Vec<String>>,
    max_points: u8,
    #[serde(default)]
    rubric: String,
}

fn default_run() -> usize {
    DEFAULT_DISCONTINUE_RUN
}

fn nonblank(s: &str) -> bool {
    !s.trim().is_empty()
}

fn convert_item(raw: RawItem, subtest: Subtest, at: &str) -> Result<Item> {
    let fail = |field: &str, msg: &str| Error::Pool(format!("{at}.{field}: {msg}"));
    if !nonblank(&raw.id) {
        return Err(fail("id", "must not be empty"));
    }
    if !matches!(raw.max_points, 1 | 2) {
        return Err(fail("max_points", "must be 1 or 2"));
    }
    let content = match subtest {
        Subtest::WordReasoning => {
            if raw.prompt.is_some() || raw.words.is_some() {
                return Err(fail("clues", "word_reasoning items take clues only"));
            }
            let clues = raw.clues.ok_or_else(|| fail("clues", "missing"))?;
            if clues.is_empty() || clues.len() > MAX_CLUES {
                return Err(fail("clues", &format!("expected 1 to {MAX_CLUES} clues, got {}", clues.len())));
            }
            if !clues.iter().all(|c| nonblank(c)) {
                return Err(fail("clues", "blank clue"));
            }
            ItemContent::Clues(clues)
        }
        Subtest::Similarities => {
            if raw.clues.is_some() {
                return Err(fail("clues", "only word_reasoning items take clues"));
            }
            match (raw.words, raw.prompt) {
                (Some(words), prompt) => {
                    let [a, b]: [String; 2] = words
                        .try_into()
                        .map_err(|_| fail("words", "expected exactly two words"))?;
                    if !nonblank(&a) || !nonblank(&b) {
                        return Err(fail("words", "blank word"));
                    }
                    let prompt = prompt.unwrap_or_else(|| format!("{a} and {b} are both ___"));
                    ItemContent::Pair { a, b, prompt }
                }
                (None, Some(prompt)) => {
                    let (a, b) = parse_similarity_frame(&prompt)
                        .ok_or_else(|| fail("prompt", "no \"X and Y are both\" frame"))?;
                    ItemContent::Pair { a, b, prompt }
                }
                (None, None) => return Err(fail("words", "missing")),
            }
        }
        _ => {
            if raw.clues.is_some() || raw.words.is_some() {
                return Err(fail("prompt", &format!("{subtest} items take a prompt only")));
            }
            let prompt = raw.prompt.filter(|p| nonblank(p)).ok_or_else(|| fail("prompt", "missing"))?;
            if subtest == Subtest::Vocabulary {
                ItemContent::Word(prompt)
            } else {
                ItemContent::Question(prompt)
            }
        }
    };
    Ok(Item {
        id: raw.id,
        subtest,
        content,
        max_points: raw.max_points,
        rubric: raw.rubric,
    })
}

impl ItemPool {
    pub fn new(subtests: Vec<SubtestPool>) -> Result<Self> {
        if subtests.is_empty() {
            return Err(Error::Pool("no subtests".into()));
        }
        let mut seen_subtests = HashSet::new();
        let mut seen_ids = HashSet::new();
        for pool in &subtests {
            if !seen_subtests.insert(pool.subtest) {
                return Err(Error::Pool(format!("subtest {} listed twice", pool.subtest)));
            }
            if pool.items.is_empty() {
                return Err(Error::Pool(format!("subtest {} has no items", pool.subtest)));
            }
            if pool.discontinue_run == 0 {
                return Err(Error::Pool(format!("subtest {}: discontinue_run must be at least 1", pool.subtest)));
            }
            for item in &pool.items {
                if item.subtest != pool.subtest {
                    return Err(Error::Pool(format!("item {} filed under the wrong subtest", item.id)));
                }
                if !seen_ids.insert(item.id.as_str()) {
                    return Err(Error::Pool(format!("duplicate item id {:?}", item.id)));
                }
            }
        }
        Ok(Self { subtests })
    }

    pub fn from_json(json: &str) -> Result<Self> {
        let file: PoolFile = serde_json::from_str(json).map_err(|e| Error::Pool(e.to_string()))?;
        if file.schema != POOL_SCHEMA {
            return Err(Error::Pool(format!("schema: expected {POOL_SCHEMA:?}, got {:?}", file.schema)));
        }
        let subtests = file
            .subtests
            .into_iter()
            .enumerate()
            .map(|(i, raw)| {
                let items = raw
                    .items
                    .into_iter()
                    .enumerate()
                    .map(|(j, item)| convert_item(item, raw.subtest, &format!("subtests[{i}].items[{j}]")))
                    .collect::<Result<Vec<_>>>()?;
                Ok(SubtestPool {
                    subtest: raw.subtest,
                    discontinue_run: raw.discontinue_run,
                    items,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(subtests)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn subtests(&self) -> &[SubtestPool] {
        &self.subtests
    }

    pub fn get(&self, subtest: Subtest) -> Option<&SubtestPool> {
        self.subtests.iter().find(|p| p.subtest == subtest)
    }

    pub fn item(&self, id: &str) -> Option<&Item> {
        self.subtests.iter().flat_map(|p| &p.items).find(|item| item.id == id)
    }
}
