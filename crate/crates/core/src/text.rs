//! Question text normalization: tokenizing, stopword removal and a small
//! rule-based lemmatizer.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

/// Question words survive stopword removal so routing can see them.
pub const QUESTION_WORDS: &[&str] = &["why", "where", "what", "how"];

pub const DEFAULT_STOPWORDS: &[&str] = &[
    "a", "about", "all", "also", "am", "an", "and", "any", "are", "as", "at", "be", "been", "being", "both", "but",
    "by", "can", "could", "did", "do", "does", "doing", "done", "for", "from", "had", "has", "have", "having", "he",
    "her", "hers", "him", "his", "i", "if", "in", "into", "is", "it", "its", "itself", "just", "me", "my", "of", "on",
    "or", "our", "ours", "she", "should", "so", "some", "such", "than", "that", "the", "their", "them", "then",
    "there", "these", "they", "this", "those", "to", "too", "us", "very", "was", "we", "were", "when", "which",
    "while", "who", "whom", "will", "with", "would", "you", "your", "yours",
];

/// Irregular inflections mapped to their base form.
const IRREGULAR: &[(&str, &str)] = &[
    ("ate", "eat"),
    ("became", "become"),
    ("began", "begin"),
    ("bought", "buy"),
    ("brought", "bring"),
    ("built", "build"),
    ("came", "come"),
    ("caught", "catch"),
    ("children", "child"),
    ("did", "do"),
    ("drank", "drink"),
    ("drove", "drive"),
    ("feet", "foot"),
    ("fell", "fall"),
    ("felt", "feel"),
    ("found", "find"),
    ("gave", "give"),
    ("geese", "goose"),
    ("gone", "go"),
    ("got", "get"),
    ("grew", "grow"),
    ("had", "have"),
    ("heard", "hear"),
    ("held", "hold"),
    ("kept", "keep"),
    ("knew", "know"),
    ("knives", "knife"),
    ("leaves", "leaf"),
    ("left", "leave"),
    ("made", "make"),
    ("men", "man"),
    ("met", "meet"),
    ("mice", "mouse"),
    ("ran", "run"),
    ("said", "say"),
    ("sang", "sing"),
    ("sat", "sit"),
    ("saw", "see"),
    ("seen", "see"),
    ("slept", "sleep"),
    ("spoke", "speak"),
    ("stood", "stand"),
    ("swam", "swim"),
    ("taken", "take"),
    ("taught", "teach"),
    ("teeth", "tooth"),
    ("thought", "think"),
    ("threw", "throw"),
    ("told", "tell"),
    ("took", "take"),
    ("went", "go"),
    ("wives", "wife"),
    ("women", "woman"),
    ("wore", "wear"),
    ("wrote", "write"),
    // e-final verbs the suffix rules would cut short
    ("baked", "bake"),
    ("baking", "bake"),
    ("closed", "close"),
    ("closing", "close"),
    ("having", "have"),
    ("liked", "like"),
    ("lived", "live"),
    ("living", "live"),
    ("loved", "love"),
    ("making", "make"),
    ("moved", "move"),
    ("served", "serve"),
    ("shaking", "shake"),
    ("smiled", "smile"),
    ("taking", "take"),
    ("used", "use"),
    ("using", "use"),
    ("writing", "write"),
];

/// Words that look inflected but are their own base form. Disabling this
/// table reproduces the classic failure of reading the noun "saw" as the
/// verb "see".
const PROTECTED: &[&str] = &[
    "always", "bed", "bus", "ceiling", "clothes", "evening", "gas", "glasses", "hundred", "king", "lens",
    "morning", "news", "nothing", "pants", "red", "ring", "saw", "scissors", "seed", "series", "sled", "species",
    "speed", "spring", "string", "swing", "thing", "wing", "something", "anything", "everything", "building",
    "painting", "clothing", "sometimes", "ways", "yes",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TextConfig {
    pub stopwords: BTreeSet<String>,
    /// Consult the protected-word table before applying lemma rules.
    pub use_exceptions: bool,
}

impl Default for TextConfig {
    fn default() -> Self {
        Self {
            stopwords: DEFAULT_STOPWORDS.iter().map(|s| s.to_string()).collect(),
            use_exceptions: true,
        }
    }
}

/// Lowercased words with punctuation removed; no stopword or lemma
/// processing. Routing uses this to see phrases like "made of".
pub fn raw_words(text: &str) -> Vec<String> {
    let chars: Vec<char> = text.chars().collect();
    let mut words = Vec::new();
    let mut current = String::new();
    let mut i = 0;
    while i < chars.len() {
        let ch = chars[i];
        if ch.is_alphanumeric() {
            current.extend(ch.to_lowercase());
        } else if ch == '\'' || ch == '\u{2019}' {
            // possessive "'s" is dropped; other apostrophes just vanish
            let possessive = matches!(chars.get(i + 1), Some('s' | 'S'))
                && !chars.get(i + 2).is_some_and(|c| c.is_alphanumeric());
            if possessive {
                i += 1;
            }
        } else if !current.is_empty() {
            words.push(std::mem::take(&mut current));
        }
        i += 1;
    }
    if !current.is_empty() {
        words.push(current);
    }
    words
}

/// Tokens ready for concept lookup: lowercased, punctuation stripped,
/// stopwords dropped (question words kept) and lemmatized.
pub fn normalize_text(text: &str, config: &TextConfig) -> Vec<String> {
    raw_words(text)
        .into_iter()
        .filter(|w| is_question_word(w) || !config.stopwords.contains(w))
        .map(|w| lemmatize(&w, config.use_exceptions))
        .filter(|w| is_question_word(w) || !config.stopwords.contains(w))
        .collect()
}

pub fn is_question_word(word: &str) -> bool {
    QUESTION_WORDS.contains(&word)
}

pub fn lemmatize(word: &str, use_exceptions: bool) -> String {
    if use_exceptions && PROTECTED.contains(&word) {
        return word.to_string();
    }
    if let Some((_, base)) = IRREGULAR.iter().find(|(form, _)| *form == word) {
        return base.to_string();
    }
    if word.len() <= 3 || !word.is_ascii() {
        return word.to_string();
    }
    if let Some(stem) = word.strip_suffix("ies") {
        if word.len() > 4 {
            return format!("{stem}y");
        }
    }
    if let Some(stem) = word.strip_suffix("es") {
        if word.ends_with("sses") || ["ch", "sh", "x", "z"].iter().any(|s| stem.ends_with(s)) {
            return stem.to_string();
        }
    }
    if word.ends_with("ss") || word.ends_with("us") || word.ends_with("is") {
        return word.to_string();
    }
    if let Some(stem) = word.strip_suffix('s') {
        return stem.to_string();
    }
    if let Some(stem) = word.strip_suffix("ied") {
        return format!("{stem}y");
    }
    if let Some(stem) = word.strip_suffix("ed") {
        if word.len() >= 5 && !word.ends_with("eed") {
            return undouble(stem);
        }
    }
    if let Some(stem) = word.strip_suffix("ing") {
        if word.len() >= 6 {
            return undouble(stem);
        }
    }
    word.to_string()
}

/// "stopp" -> "stop", "runn" -> "run"; "ll", "ss" and "zz" endings stay.
fn undouble(stem: &str) -> String {
    let bytes = stem.as_bytes();
    let n = bytes.len();
    if n >= 3 && bytes[n - 1] == bytes[n - 2] && !b"aeiouylsz".contains(&bytes[n - 1]) {
        stem[..n - 1].to_string()
    } else {
        stem.to_string()
    }
}
