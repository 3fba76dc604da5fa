use serde::{Deserialize, Serialize};

use crate::ontology::SynsetId;

/// Knowledge source a triple or probe instance comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Source {
    WordNet,
    WikiData,
    ConceptNet,
}

impl Source {
    pub const ALL: [Source; 3] = [Source::WordNet, Source::WikiData, Source::ConceptNet];

    pub fn as_str(self) -> &'static str {
        match self {
            Source::WordNet => "WordNet",
            Source::WikiData => "WikiData",
            Source::ConceptNet => "ConceptNet",
        }
    }
}

impl std::fmt::Display for Source {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A (head, relation, tail) assertion between synsets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundedTriple {
    pub head: SynsetId,
    pub relation: String,
    pub tail: SynsetId,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub score: Option<f64>,
    pub provenance: String,
}

impl GroundedTriple {
    pub fn new(head: SynsetId, relation: impl Into<String>, tail: SynsetId, provenance: impl Into<String>) -> Self {
        GroundedTriple {
            head,
            relation: relation.into(),
            tail,
            score: None,
            provenance: provenance.into(),
        }
    }
}
