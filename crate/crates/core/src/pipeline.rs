//! Turning subtest items into categories and relation filters, and running
//! the per-subtest answer procedures against a [`KnowledgeModel`].

use std::collections::{BTreeMap, BTreeSet, HashSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kb::{Feature, Vocabulary};
use crate::model::{KnowledgeModel, RelationSet};
use crate::spectral::{AnswerList, Category, ScoredFeature, ANSWER_LIST_LEN};
use crate::subtest::Subtest;
use crate::text::{self, TextConfig};

pub const WHY_RELATIONS: &[&str] = &[
    "Causes",
    "Desires",
    "UsedFor",
    "HasPrerequisite",
    "CausesDesire",
    "MotivatedByGoal",
    "HasSubevent",
];
pub const WHERE_RELATIONS: &[&str] = &["AtLocation", "NearLocation"];
/// Not enumerated anywhere authoritative; a best guess at relations that fit
/// "what" questions.
pub const WHAT_RELATIONS: &[&str] = &[
    "IsA",
    "HasA",
    "HasProperty",
    "UsedFor",
    "CapableOf",
    "DefinedAs",
    "MadeOf",
    "PartOf",
    "ReceivesAction",
    "HasSubevent",
    "Causes",
    "CreatedBy",
    "SymbolOf",
];
pub const VOCABULARY_RELATIONS: &[&str] = &[
    "IsA",
    "HasA",
    "HasProperty",
    "UsedFor",
    "CapableOf",
    "DefinedAs",
    "MotivatedByGoal",
    "Causes",
];
pub const WORD_REASONING_STOP_CONCEPTS: &[&str] = &[
    "person", "get", "need", "make", "out", "up", "often", "look", "not", "keep", "see", "come",
];
pub const REFERENCE_COLORS: &[&str] = &[
    "black", "white", "red", "orange", "yellow", "green", "blue", "indigo", "violet",
];
pub const REFERENCE_NUMBERS: &[&str] = &[
    "one", "two", "three", "four", "five", "six", "seven", "eight", "nine", "ten", "eleven", "twelve", "thirteen",
    "fourteen", "fifteen", "sixteen", "seventeen", "eighteen", "nineteen", "twenty",
];
pub const ANSWER_EXCLUSIONS: &[&str] = &["color", "number", "person", "yourself", "many", "part", "organ", "much"];

fn set(items: &[&str]) -> BTreeSet<String> {
    items.iter().map(|s| s.to_string()).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub text: TextConfig,
    pub why_relations: RelationSet,
    pub where_relations: RelationSet,
    pub what_relations: RelationSet,
    /// Empty disables the Vocabulary relation filter.
    pub vocabulary_relations: RelationSet,
    pub word_reasoning_stop_concepts: BTreeSet<String>,
    pub colors: Vec<String>,
    pub numbers: Vec<String>,
    pub answer_exclusions: BTreeSet<String>,
    /// Fraction of the weakest reference score a candidate must reach.
    pub threshold_ratio: f64,
    pub drop_subsumed: bool,
    pub similarity_neighbors: usize,
    pub similarity_features: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            text: TextConfig::default(),
            why_relations: set(WHY_RELATIONS),
            where_relations: set(WHERE_RELATIONS),
            what_relations: set(WHAT_RELATIONS),
            vocabulary_relations: set(VOCABULARY_RELATIONS),
            word_reasoning_stop_concepts: set(WORD_REASONING_STOP_CONCEPTS),
            colors: REFERENCE_COLORS.iter().map(|s| s.to_string()).collect(),
            numbers: REFERENCE_NUMBERS.iter().map(|s| s.to_string()).collect(),
            answer_exclusions: set(ANSWER_EXCLUSIONS),
            threshold_ratio: 0.95,
            drop_subsumed: true,
            similarity_neighbors: 2,
            similarity_features: 100,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RemovalReason {
    QuestionWord,
    PhraseTrigger,
    StopConcept,
    Subsumed,
    Unknown,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Removed {
    pub concept: String,
    pub reason: RemovalReason,
}

impl Removed {
    fn new(concept: impl Into<String>, reason: RemovalReason) -> Self {
        Self {
            concept: concept.into(),
            reason,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpecialFilter {
    #[default]
    None,
    Color,
    Number,
}

/// Outcome of routing, before concept extraction.
#[derive(Debug, Clone, PartialEq)]
pub struct Route {
    pub tokens: Vec<String>,
    pub removed: Vec<Removed>,
    pub allowed_relations: RelationSet,
    pub special: SpecialFilter,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuestionPlan {
    pub subtest: Subtest,
    pub retained: Vec<String>,
    pub removed: Vec<Removed>,
    /// Empty means unrestricted.
    pub allowed_relations: RelationSet,
    pub special: SpecialFilter,
}

impl QuestionPlan {
    pub fn category(&self) -> Category {
        Category::uniform(self.retained.iter().cloned())
    }

    fn relation_filter(&self) -> Option<&RelationSet> {
        (!self.allowed_relations.is_empty()).then_some(&self.allowed_relations)
    }
}

/// How an answer is read out to the examiner.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnswerMode {
    /// The rendered feature, e.g. "AtLocation zoo".
    Feature,
    /// Just the feature's concept (Word Reasoning names a thing).
    Concept,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub text: String,
    pub feature: Feature,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Answer {
    pub plan: QuestionPlan,
    pub answers: AnswerList,
    pub mode: AnswerMode,
}

impl Answer {
    pub fn candidates(&self) -> Vec<Candidate> {
        self.answers
            .iter()
            .map(|sf| Candidate {
                text: match self.mode {
                    AnswerMode::Feature => sf.feature.to_string(),
                    AnswerMode::Concept => sf.feature.concept.clone(),
                },
                feature: sf.feature.clone(),
                score: sf.score,
            })
            .collect()
    }
}

fn starts_with(words: &[String], prefix: &[&str]) -> bool {
    words.len() >= prefix.len() && words.iter().zip(prefix).all(|(w, p)| w == p)
}

fn contains_phrase(words: &[String], phrase: &[&str]) -> bool {
    words.windows(phrase.len()).any(|w| w.iter().zip(phrase).all(|(a, b)| a == b))
}

fn take_tokens(tokens: &mut Vec<String>, removed: &mut Vec<Removed>, word: &str, reason: RemovalReason, first_only: bool) {
    let mut taken = false;
    tokens.retain(|t| {
        if t == word && !(first_only && taken) {
            taken = true;
            false
        } else {
            true
        }
    });
    if taken {
        let entry = Removed::new(word, reason);
        if !removed.contains(&entry) {
            removed.push(entry);
        }
    }
}

/// Applies the question-form rules in priority order: "what color",
/// "how many", leading why / where / what, then relation phrase triggers
/// anywhere in the question.
pub fn route_question(question: &str, tokens: &[String], config: &PipelineConfig) -> Route {
    let words = text::raw_words(question);
    let mut tokens = tokens.to_vec();
    let mut removed = Vec::new();
    let mut allowed = RelationSet::new();
    let mut special = SpecialFilter::None;

    let color_question = (starts_with(&words, &["what", "color"]) || starts_with(&words, &["what", "colors"]))
        && words.get(2).is_some_and(|w| w == "is" || w == "are")
        || starts_with(&words, &["what", "is", "the", "color", "of"]);
    if color_question {
        special = SpecialFilter::Color;
        take_tokens(&mut tokens, &mut removed, "what", RemovalReason::QuestionWord, true);
        take_tokens(&mut tokens, &mut removed, "color", RemovalReason::PhraseTrigger, false);
        allowed = config.what_relations.clone();
    } else if contains_phrase(&words, &["how", "many"]) {
        special = SpecialFilter::Number;
        take_tokens(&mut tokens, &mut removed, "how", RemovalReason::QuestionWord, true);
        take_tokens(&mut tokens, &mut removed, "many", RemovalReason::QuestionWord, true);
    } else {
        let leading = words.first().map(String::as_str);
        let rule = match leading {
            Some("why") => Some(&config.why_relations),
            Some("where") => Some(&config.where_relations),
            Some("what") => Some(&config.what_relations),
            _ => None,
        };
        if let (Some(word), Some(relations)) = (leading, rule) {
            take_tokens(&mut tokens, &mut removed, word, RemovalReason::QuestionWord, true);
            allowed = relations.clone();
        }
    }

    let mut triggered = RelationSet::new();
    let made_of = contains_phrase(&words, &["made", "of"])
        || contains_phrase(&words, &["make", "from"])
        || contains_phrase(&words, &["made", "out", "of"]);
    if made_of {
        triggered.insert("MadeOf".to_string());
        for w in ["make", "out", "of", "from"] {
            take_tokens(&mut tokens, &mut removed, w, RemovalReason::PhraseTrigger, false);
        }
    }
    if words.iter().any(|w| w == "use" || w == "used") {
        triggered.insert("UsedFor".to_string());
        take_tokens(&mut tokens, &mut removed, "use", RemovalReason::PhraseTrigger, false);
    }
    if !triggered.is_empty() {
        allowed = triggered;
    }

    Route {
        tokens,
        removed,
        allowed_relations: allowed,
        special,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Extraction {
    pub retained: Vec<String>,
    pub removed: Vec<Removed>,
}

/// Matches adjacent token pairs, then single tokens, against the vocabulary.
/// With `drop_subsumed`, a single-word match that also occurs inside a
/// matched two-word concept is dropped.
pub fn extract_concepts(tokens: &[String], vocabulary: &Vocabulary, drop_subsumed: bool) -> Result<Extraction> {
    let bigrams: Vec<(usize, String)> = tokens
        .windows(2)
        .enumerate()
        .map(|(i, pair)| (i, format!("{} {}", pair[0], pair[1])))
        .filter(|(_, bg)| vocabulary.contains(bg))
        .collect();
    let covered: HashSet<usize> = bigrams.iter().flat_map(|&(i, _)| [i, i + 1]).collect();
    let bigram_tokens: HashSet<&str> = bigrams.iter().flat_map(|&(i, _)| [tokens[i].as_str(), tokens[i + 1].as_str()]).collect();

    let mut retained: Vec<String> = Vec::new();
    let mut removed: Vec<Removed> = Vec::new();
    let push_unique = |list: &mut Vec<String>, item: &str| {
        if !list.iter().any(|x| x == item) {
            list.push(item.to_string());
        }
    };
    let mut bigram_iter = bigrams.iter().peekable();
    for (i, token) in tokens.iter().enumerate() {
        while let Some((_, bg)) = bigram_iter.next_if(|(start, _)| *start == i) {
            push_unique(&mut retained, bg);
        }
        if vocabulary.contains(token) {
            if drop_subsumed && bigram_tokens.contains(token.as_str()) {
                let entry = Removed::new(token.clone(), RemovalReason::Subsumed);
                if !removed.contains(&entry) {
                    removed.push(entry);
                }
            } else {
                push_unique(&mut retained, token);
            }
        } else if !covered.contains(&i) {
            let entry = Removed::new(token.clone(), RemovalReason::Unknown);
            if !removed.contains(&entry) {
                removed.push(entry);
            }
        }
    }
    // a subsumed unigram may have been retained earlier by position
    if drop_subsumed {
        retained.retain(|c| c.contains(' ') || !bigram_tokens.contains(c.as_str()));
    }
    if retained.is_empty() {
        return Err(Error::NoConcepts(tokens.join(" ")));
    }
    Ok(Extraction { retained, removed })
}

/// Builds the full plan for an Information or Comprehension question.
pub fn plan_open_question(question: &str, vocabulary: &Vocabulary, subtest: Subtest, config: &PipelineConfig) -> Result<QuestionPlan> {
    let tokens = text::normalize_text(question, &config.text);
    let route = route_question(question, &tokens, config);
    let extraction = extract_concepts(&route.tokens, vocabulary, config.drop_subsumed)
        .map_err(|_| Error::NoConcepts(question.to_string()))?;
    let mut removed = route.removed;
    removed.extend(extraction.removed);
    Ok(QuestionPlan {
        subtest,
        retained: extraction.retained,
        removed,
        allowed_relations: route.allowed_relations,
        special: route.special,
    })
}

/// Keeps candidates whose concept scores at least `threshold_ratio` times
/// the weakest reference concept on `IsA color` (or `IsA number`), minus the
/// configured exclusions.
pub fn filter_color_number(
    candidates: Vec<ScoredFeature>,
    kind: SpecialFilter,
    model: &KnowledgeModel,
    config: &PipelineConfig,
) -> Result<Vec<ScoredFeature>> {
    let (reference, target) = match kind {
        SpecialFilter::None => return Ok(candidates),
        SpecialFilter::Color => (&config.colors, "color"),
        SpecialFilter::Number => (&config.numbers, "number"),
    };
    if !model.vocabulary().contains(target) {
        return Err(Error::Config(format!("knowledge base has no {target:?} concept")));
    }
    let probe = Feature::right("IsA", target);
    let reference_scores = reference
        .iter()
        .filter(|c| model.vocabulary().contains(c))
        .map(|c| model.feature_score(c, &probe))
        .collect::<Result<Vec<f64>>>()?;
    let Some(floor) = reference_scores.into_iter().reduce(f64::min) else {
        return Err(Error::Config(format!("empty {target} reference set")));
    };
    let threshold = config.threshold_ratio * floor;
    let mut kept = Vec::new();
    for candidate in candidates {
        let concept = &candidate.feature.concept;
        if config.answer_exclusions.contains(concept) {
            continue;
        }
        if model.feature_score(concept, &probe)? >= threshold {
            kept.push(candidate);
        }
    }
    Ok(kept)
}

/// Information and Comprehension: route, extract, project, filter.
pub fn answer_open_question(question: &str, subtest: Subtest, model: &KnowledgeModel, config: &PipelineConfig) -> Result<Answer> {
    let plan = plan_open_question(question, model.vocabulary(), subtest, config)?;
    let limit = match plan.special {
        SpecialFilter::None => Some(ANSWER_LIST_LEN),
        _ => None,
    };
    let ranked = model.predict_features(&plan.category(), plan.relation_filter(), limit)?;
    let ranked = filter_color_number(ranked, plan.special, model, config)?;
    Ok(Answer {
        plan,
        answers: AnswerList::from_ranked(ranked),
        mode: AnswerMode::Feature,
    })
}

/// Resolves a single word (or "What is a ___?" frame) to a vocabulary
/// concept.
pub fn lookup_word(word: &str, vocabulary: &Vocabulary, config: &PipelineConfig) -> Result<String> {
    let tokens: Vec<String> = text::normalize_text(word, &config.text)
        .into_iter()
        .filter(|t| !text::is_question_word(t))
        .collect();
    let joined = tokens.join(" ");
    if vocabulary.contains(&joined) {
        return Ok(joined);
    }
    let raw = crate::kb::normalize_concept(word);
    if vocabulary.contains(&raw) {
        return Ok(raw);
    }
    Err(Error::UnknownConcepts(vec![word.trim().to_string()]))
}

pub fn answer_vocabulary(word: &str, model: &KnowledgeModel, config: &PipelineConfig) -> Result<Answer> {
    let concept = lookup_word(word, model.vocabulary(), config)?;
    let plan = QuestionPlan {
        subtest: Subtest::Vocabulary,
        retained: vec![concept],
        removed: Vec::new(),
        allowed_relations: config.vocabulary_relations.clone(),
        special: SpecialFilter::None,
    };
    let ranked = model.predict_features(&plan.category(), plan.relation_filter(), Some(ANSWER_LIST_LEN))?;
    Ok(Answer {
        plan,
        answers: AnswerList::from_ranked(ranked),
        mode: AnswerMode::Feature,
    })
}

pub const MAX_CLUES: usize = 3;

/// Clues heard so far for one Word Reasoning item.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ClueState {
    clues: Vec<String>,
}

impl ClueState {
    pub fn new(first: impl Into<String>) -> Self {
        Self {
            clues: vec![first.into()],
        }
    }

    pub fn from_clues<I, S>(clues: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut state = Self::default();
        for clue in clues {
            state.push(clue)?;
        }
        if state.clues.is_empty() {
            return Err(Error::Argument("word reasoning needs at least one clue".into()));
        }
        Ok(state)
    }

    pub fn push(&mut self, clue: impl Into<String>) -> Result<()> {
        if self.clues.len() >= MAX_CLUES {
            return Err(Error::Argument(format!("at most {MAX_CLUES} clues per item")));
        }
        self.clues.push(clue.into());
        Ok(())
    }

    pub fn clues(&self) -> &[String] {
        &self.clues
    }

    /// Concepts from every clue so far, stop-concepts removed. Each clue is
    /// extracted on its own so a later clue never shrinks the set.
    pub fn plan(&self, vocabulary: &Vocabulary, config: &PipelineConfig) -> Result<QuestionPlan> {
        let mut retained: Vec<String> = Vec::new();
        let mut removed: Vec<Removed> = Vec::new();
        for clue in &self.clues {
            let tokens = text::normalize_text(clue, &config.text);
            let Ok(extraction) = extract_concepts(&tokens, vocabulary, config.drop_subsumed) else {
                removed.extend(tokens.into_iter().map(|t| Removed::new(t, RemovalReason::Unknown)));
                continue;
            };
            for concept in extraction.retained {
                if config.word_reasoning_stop_concepts.contains(&concept) {
                    removed.push(Removed::new(concept, RemovalReason::StopConcept));
                } else if !retained.contains(&concept) {
                    retained.push(concept);
                }
            }
            removed.extend(extraction.removed);
        }
        let mut seen = HashSet::new();
        removed.retain(|r| seen.insert(r.clone()));
        if retained.is_empty() {
            return Err(Error::NoConcepts(self.clues.join(" / ")));
        }
        Ok(QuestionPlan {
            subtest: Subtest::WordReasoning,
            retained,
            removed,
            allowed_relations: RelationSet::new(),
            special: SpecialFilter::None,
        })
    }
}

/// Ranks features for the accumulated clues and reads out the five best
/// distinct concepts.
pub fn answer_word_reasoning(clues: &ClueState, model: &KnowledgeModel, config: &PipelineConfig) -> Result<Answer> {
    let plan = clues.plan(model.vocabulary(), config)?;
    let ranked = model.predict_features(&plan.category(), None, None)?;
    let mut seen = HashSet::new();
    let best_per_concept: Vec<ScoredFeature> = ranked
        .into_iter()
        .filter(|sf| seen.insert(sf.feature.concept.clone()))
        .take(ANSWER_LIST_LEN)
        .collect();
    Ok(Answer {
        plan,
        answers: AnswerList::from_ranked(best_per_concept),
        mode: AnswerMode::Concept,
    })
}

/// The scored feature set for one Similarities word: its concept plus its
/// nearest neighbors, each contributing its top features, duplicates merged
/// by max.
pub fn similarity_set(concept: &str, model: &KnowledgeModel, config: &PipelineConfig) -> Result<BTreeMap<Feature, f64>> {
    let mut concepts = vec![concept.to_string()];
    concepts.extend(
        model
            .concept_neighbors(concept, config.similarity_neighbors.max(1))?
            .into_iter()
            .take(config.similarity_neighbors)
            .map(|(c, _)| c),
    );
    let mut merged: BTreeMap<Feature, f64> = BTreeMap::new();
    for c in concepts {
        for sf in model.predict_features(&Category::uniform([c]), None, Some(config.similarity_features))? {
            merged
                .entry(sf.feature)
                .and_modify(|s| *s = s.max(sf.score))
                .or_insert(sf.score);
        }
    }
    Ok(merged)
}

pub fn answer_similarities(word_a: &str, word_b: &str, model: &KnowledgeModel, config: &PipelineConfig) -> Result<Answer> {
    let a = lookup_word(word_a, model.vocabulary(), config);
    let b = lookup_word(word_b, model.vocabulary(), config);
    let (a, b) = match (a, b) {
        (Ok(a), Ok(b)) => (a, b),
        (Err(_), Err(_)) => return Err(Error::UnknownConcepts(vec![word_a.to_string(), word_b.to_string()])),
        (Err(e), _) | (_, Err(e)) => return Err(e),
    };
    let set_a = similarity_set(&a, model, config)?;
    let set_b = similarity_set(&b, model, config)?;
    let shared: Vec<ScoredFeature> = set_a
        .iter()
        .filter_map(|(f, sa)| {
            set_b.get(f).map(|sb| ScoredFeature {
                feature: f.clone(),
                score: sa + sb,
            })
        })
        .collect();
    let mut retained = vec![a];
    if !retained.contains(&b) {
        retained.push(b);
    }
    Ok(Answer {
        plan: QuestionPlan {
            subtest: Subtest::Similarities,
            retained,
            removed: Vec::new(),
            allowed_relations: RelationSet::new(),
            special: SpecialFilter::None,
        },
        answers: AnswerList::from_ranked(shared),
        mode: AnswerMode::Feature,
    })
}

/// Pulls the two words out of "Finish what I say. X and Y are both ___".
pub fn parse_similarity_frame(prompt: &str) -> Option<(String, String)> {
    let mut words = text::raw_words(prompt);
    if starts_with(&words, &["finish", "what", "i", "say"]) {
        words.drain(..4);
    }
    let and = words.iter().position(|w| w == "and")?;
    let are = words.iter().skip(and).position(|w| w == "are")? + and;
    let strip = |ws: &[String]| {
        ws.iter()
            .filter(|w| !matches!(w.as_str(), "a" | "an" | "the"))
            .cloned()
            .collect::<Vec<_>>()
            .join(" ")
    };
    let (a, b) = (strip(&words[..and]), strip(&words[and + 1..are]));
    (!a.is_empty() && !b.is_empty()).then_some((a, b))
}
