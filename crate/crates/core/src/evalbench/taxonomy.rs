//! Discipline taxonomy used to tag benchmark tasks.

use serde::{Deserialize, Serialize};

const REFERENCE_JSON: &str = include_str!("../../data/taxonomy.json");

pub const UNKNOWN_DISCIPLINE: &str = "unknown";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Discipline {
    pub discipline: String,
    pub topics: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Taxonomy {
    pub disciplines: Vec<Discipline>,
}

impl Taxonomy {
    /// The shipped 19-discipline table.
    pub fn reference() -> Self {
        serde_json::from_str(REFERENCE_JSON).expect("bundled taxonomy is valid JSON")
    }

    pub fn topic_count(&self) -> usize {
        self.disciplines.iter().map(|d| d.topics.len()).sum()
    }

    /// Whether `tag` is a discipline, a fine-grained topic, or `unknown`.
    pub fn accepts(&self, tag: &str) -> bool {
        tag == UNKNOWN_DISCIPLINE || self.position(tag).is_some()
    }

    /// Index of the discipline `tag` names or belongs to.
    pub fn position(&self, tag: &str) -> Option<usize> {
        self.disciplines
            .iter()
            .position(|d| d.discipline == tag || d.topics.iter().any(|t| t == tag))
    }
}

impl Default for Taxonomy {
    fn default() -> Self {
        Self::reference()
    }
}
