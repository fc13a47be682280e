use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::Error;

/// The five verbal subtests. Declaration order is the report order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Subtest {
    Information,
    Vocabulary,
    WordReasoning,
    Comprehension,
    Similarities,
}

impl Subtest {
    pub const ALL: [Subtest; 5] = [
        Subtest::Information,
        Subtest::Vocabulary,
        Subtest::WordReasoning,
        Subtest::Comprehension,
        Subtest::Similarities,
    ];

    /// Information, Vocabulary and Word Reasoning are core; the rest are
    /// supplemental.
    pub fn is_core(self) -> bool {
        matches!(self, Subtest::Information | Subtest::Vocabulary | Subtest::WordReasoning)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Subtest::Information => "information",
            Subtest::Vocabulary => "vocabulary",
            Subtest::WordReasoning => "word_reasoning",
            Subtest::Comprehension => "comprehension",
            Subtest::Similarities => "similarities",
        }
    }
}

impl fmt::Display for Subtest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Subtest {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let key = s.trim().to_ascii_lowercase().replace(['-', ' '], "_");
        Subtest::ALL
            .into_iter()
            .find(|t| t.as_str() == key)
            .ok_or_else(|| Error::Argument(format!("unknown subtest {s:?}")))
    }
}
