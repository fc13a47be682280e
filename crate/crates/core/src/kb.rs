//! Assertion dump ingest: parsing, vocabulary pruning and the signed
//! concept x feature matrix.

use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::io::BufRead;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sparse::CsrMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Polarity {
    Negative,
    Positive,
}

impl Polarity {
    pub fn sign(self) -> f64 {
        match self {
            Polarity::Positive => 1.0,
            Polarity::Negative => -1.0,
        }
    }

    fn parse(field: &str) -> Option<Self> {
        match field.trim() {
            "1" | "+1" | "+" | "pos" | "positive" => Some(Polarity::Positive),
            "-1" | "-" | "neg" | "negative" => Some(Polarity::Negative),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Assertion {
    pub concept_left: String,
    pub relation: String,
    pub concept_right: String,
    pub strength: f64,
    pub polarity: Polarity,
    pub language: String,
}

/// Which side of the relation the feature's concept sits on.
///
/// A `Right` feature `(r, d)` attached to concept `c` reads "c r d" and
/// renders as `"r d"`; a `Left` feature `(r, c)` attached to `d` renders as
/// `"c r"`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Left,
    Right,
}

/// A matrix column. Field order gives the canonical tie-break ordering:
/// relation, then concept, then direction.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Feature {
    pub relation: String,
    pub concept: String,
    pub direction: Direction,
}

impl Feature {
    pub fn new(direction: Direction, relation: impl Into<String>, concept: impl Into<String>) -> Self {
        Self {
            relation: relation.into(),
            concept: concept.into(),
            direction,
        }
    }

    pub fn right(relation: impl Into<String>, concept: impl Into<String>) -> Self {
        Self::new(Direction::Right, relation, concept)
    }

    pub fn left(relation: impl Into<String>, concept: impl Into<String>) -> Self {
        Self::new(Direction::Left, relation, concept)
    }

    pub fn render(&self) -> String {
        self.to_string()
    }
}

impl fmt::Display for Feature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.direction {
            Direction::Right => write!(f, "{} {}", self.relation, self.concept),
            Direction::Left => write!(f, "{} {}", self.concept, self.relation),
        }
    }
}

/// Lowercases, maps `_`/`-`/whitespace to single spaces and drops any other
/// punctuation.
pub fn normalize_concept(raw: &str) -> String {
    let mut cleaned = String::with_capacity(raw.len());
    for ch in raw.chars() {
        if ch.is_alphanumeric() {
            cleaned.extend(ch.to_lowercase());
        } else if ch.is_whitespace() || ch == '_' || ch == '-' {
            cleaned.push(' ');
        }
    }
    cleaned.split_whitespace().collect::<Vec<_>>().join(" ")
}

#[derive(Debug, Clone, Default)]
pub struct ParseReport {
    pub assertions: Vec<Assertion>,
    pub lines: usize,
    pub malformed: usize,
    pub filtered_language: usize,
}

impl ParseReport {
    pub fn malformed_fraction(&self) -> f64 {
        if self.lines == 0 {
            0.0
        } else {
            self.malformed as f64 / self.lines as f64
        }
    }

    /// True when more than a tenth of the data lines could not be parsed.
    pub fn warn_malformed(&self) -> bool {
        self.malformed_fraction() > 0.10
    }
}

/// Reads a tab-separated assertion dump:
/// `lang  left  relation  right  strength  polarity  frequency`.
///
/// Malformed lines are counted and skipped. An optional header line starting
/// with `lang` is ignored. The frequency column is accepted but unused.
pub fn parse_assertions<R: BufRead>(reader: R, language: Option<&str>) -> Result<ParseReport> {
    let mut report = ParseReport::default();
    for (lineno, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::Ingest(format!("line {}: {e}", lineno + 1)))?;
        let trimmed = line.trim_end_matches(['\r', '\n']);
        if trimmed.trim().is_empty() || trimmed.starts_with('#') {
            continue;
        }
        if lineno == 0 && trimmed.split('\t').next().map(str::trim) == Some("lang") {
            continue;
        }
        report.lines += 1;
        match parse_line(trimmed) {
            Some(a) => {
                if language.is_some_and(|lang| lang != a.language) {
                    report.filtered_language += 1;
                } else {
                    report.assertions.push(a);
                }
            }
            None => report.malformed += 1,
        }
    }
    if report.warn_malformed() {
        log::warn!(
            "{} of {} dump lines were malformed and skipped",
            report.malformed,
            report.lines
        );
    }
    Ok(report)
}

fn parse_line(line: &str) -> Option<Assertion> {
    let fields: Vec<&str> = line.split('\t').collect();
    if fields.len() != 7 {
        return None;
    }
    let language = fields[0].trim().to_lowercase();
    let concept_left = normalize_concept(fields[1]);
    let relation = fields[2].trim().to_string();
    let concept_right = normalize_concept(fields[3]);
    let strength: f64 = fields[4].trim().parse().ok()?;
    let polarity = Polarity::parse(fields[5])?;
    let frequency = fields[6].trim();
    if !frequency.is_empty() {
        frequency.parse::<f64>().ok()?;
    }
    if language.is_empty() || concept_left.is_empty() || concept_right.is_empty() || relation.is_empty() {
        return None;
    }
    if relation.chars().any(char::is_whitespace) || !strength.is_finite() {
        return None;
    }
    Some(Assertion {
        concept_left,
        relation,
        concept_right,
        strength,
        polarity,
        language,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PruneConfig {
    pub min_strength: f64,
    pub min_concept_degree: usize,
}

impl Default for PruneConfig {
    fn default() -> Self {
        Self {
            min_strength: 1.0,
            min_concept_degree: 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Vocabulary {
    concepts: Vec<String>,
    concept_index: HashMap<String, usize>,
    features: Vec<Feature>,
    feature_index: HashMap<Feature, usize>,
    degrees: Vec<usize>,
    config: PruneConfig,
}

impl Vocabulary {
    pub(crate) fn from_parts(
        concepts: Vec<String>,
        features: Vec<Feature>,
        degrees: Vec<usize>,
        config: PruneConfig,
    ) -> Result<Self> {
        if degrees.len() != concepts.len() {
            return Err(Error::Format("degree table length mismatch".into()));
        }
        let concept_index: HashMap<_, _> = concepts.iter().cloned().enumerate().map(|(i, c)| (c, i)).collect();
        let feature_index: HashMap<_, _> = features.iter().cloned().enumerate().map(|(i, f)| (f, i)).collect();
        if concept_index.len() != concepts.len() || feature_index.len() != features.len() {
            return Err(Error::Format("duplicate vocabulary entries".into()));
        }
        Ok(Self {
            concepts,
            concept_index,
            features,
            feature_index,
            degrees,
            config,
        })
    }

    pub fn concepts(&self) -> &[String] {
        &self.concepts
    }

    pub fn features(&self) -> &[Feature] {
        &self.features
    }

    pub fn degrees(&self) -> &[usize] {
        &self.degrees
    }

    pub fn config(&self) -> PruneConfig {
        self.config
    }

    pub fn concept_id(&self, concept: &str) -> Option<usize> {
        self.concept_index.get(concept).copied()
    }

    pub fn feature_id(&self, feature: &Feature) -> Option<usize> {
        self.feature_index.get(feature).copied()
    }

    pub fn contains(&self, concept: &str) -> bool {
        self.concept_index.contains_key(concept)
    }

    pub fn degree(&self, concept: &str) -> Option<usize> {
        self.concept_id(concept).map(|i| self.degrees[i])
    }

    pub fn n_concepts(&self) -> usize {
        self.concepts.len()
    }

    pub fn n_features(&self) -> usize {
        self.features.len()
    }

    /// Whether an assertion belongs to the retained knowledge base.
    pub fn retains(&self, a: &Assertion) -> bool {
        a.strength >= self.config.min_strength
            && self.contains(&a.concept_left)
            && self.contains(&a.concept_right)
    }
}

/// Drops weak assertions and low-degree concepts until nothing changes, then
/// assigns dense lexicographic indices to the surviving concepts and
/// features.
pub fn prune_and_index(assertions: &[Assertion], config: PruneConfig) -> Result<Vocabulary> {
    if config.min_strength.is_nan() || config.min_strength < 0.0 {
        return Err(Error::Argument("min_strength must be >= 0".into()));
    }
    let mut live: Vec<&Assertion> = assertions
        .iter()
        .filter(|a| a.strength >= config.min_strength)
        .collect();
    let mut degrees: HashMap<&str, usize>;
    loop {
        degrees = concept_degrees(&live);
        let before = live.len();
        live.retain(|a| {
            degrees[a.concept_left.as_str()] >= config.min_concept_degree
                && degrees[a.concept_right.as_str()] >= config.min_concept_degree
        });
        if live.len() == before {
            break;
        }
    }
    // a concept left with no assertions has degree 0 and drops out here
    let concepts: BTreeSet<&str> = degrees
        .iter()
        .filter(|(_, &d)| d >= config.min_concept_degree && d > 0)
        .map(|(&c, _)| c)
        .collect();
    if concepts.is_empty() {
        return Err(Error::EmptyKnowledgeBase);
    }
    let features: BTreeSet<Feature> = live
        .iter()
        .flat_map(|a| {
            [
                Feature::right(a.relation.clone(), a.concept_right.clone()),
                Feature::left(a.relation.clone(), a.concept_left.clone()),
            ]
        })
        .collect();
    let concepts: Vec<String> = concepts.into_iter().map(str::to_string).collect();
    let degree_list = concepts.iter().map(|c| degrees[c.as_str()]).collect();
    Vocabulary::from_parts(concepts, features.into_iter().collect(), degree_list, config)
}

/// Number of assertions each concept takes part in; a self-relation counts once.
fn concept_degrees<'a>(assertions: &[&'a Assertion]) -> HashMap<&'a str, usize> {
    let mut degrees = HashMap::new();
    for a in assertions {
        *degrees.entry(a.concept_left.as_str()).or_insert(0) += 1;
        if a.concept_right != a.concept_left {
            *degrees.entry(a.concept_right.as_str()).or_insert(0) += 1;
        }
    }
    degrees
}

/// Maps assertion strength to a non-negative matrix weight.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Weighting {
    /// `min(sqrt(max(s, 0)), cap)`
    SqrtCapped { cap: f64 },
    Identity,
}

impl Default for Weighting {
    fn default() -> Self {
        Weighting::SqrtCapped { cap: 10.0 }
    }
}

impl Weighting {
    pub fn weight(self, strength: f64) -> f64 {
        match self {
            Weighting::SqrtCapped { cap } => strength.max(0.0).sqrt().min(cap),
            Weighting::Identity => strength,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConceptFeatureMatrix {
    pub matrix: CsrMatrix,
    pub skipped: usize,
}

/// Each retained assertion `(c, r, d)` with polarity `p` adds `p * w(s)` to
/// cell `[c, Right(r, d)]` and to its mirror `[d, Left(r, c)]`.
pub fn build_matrix(assertions: &[Assertion], vocabulary: &Vocabulary, weighting: Weighting) -> Result<ConceptFeatureMatrix> {
    let mut triplets = Vec::with_capacity(assertions.len() * 2);
    let mut skipped = 0;
    for a in assertions {
        if a.strength < vocabulary.config.min_strength {
            continue;
        }
        let (Some(left), Some(right)) = (
            vocabulary.concept_id(&a.concept_left),
            vocabulary.concept_id(&a.concept_right),
        ) else {
            skipped += 1;
            continue;
        };
        let right_feature = Feature::right(a.relation.clone(), a.concept_right.clone());
        let left_feature = Feature::left(a.relation.clone(), a.concept_left.clone());
        let (Some(rf), Some(lf)) = (vocabulary.feature_id(&right_feature), vocabulary.feature_id(&left_feature)) else {
            skipped += 1;
            continue;
        };
        let value = a.polarity.sign() * weighting.weight(a.strength);
        triplets.push((left, rf, value));
        triplets.push((right, lf, value));
    }
    if skipped > 0 {
        log::warn!("{skipped} assertions referenced unindexed concepts and were skipped");
    }
    let matrix = CsrMatrix::from_triplets(vocabulary.n_concepts(), vocabulary.n_features(), &triplets)?;
    Ok(ConceptFeatureMatrix { matrix, skipped })
}
