//! Relation inventory, verbalization templates and determiner learning.

use std::collections::{BTreeMap, HashMap};

use crate::error::{Error, Result};
use crate::lm::MASK;
use crate::ontology::WnRelation;
use crate::triple::Source;

/// Head-slot placeholder inside stored assertions.
pub const HEAD_SLOT: &str = "[H]";

/// WikiData relations with their templates, in reporting order.
pub const WIKIDATA_RELATIONS: [(&str, &str, &str); 10] = [
    ("P31", "Instance of", "is an example of"),
    ("P361", "Part of", "is part of"),
    ("P366", "Use", "is used for"),
    ("P186", "Made from", "is made from"),
    ("P461", "Opposite of", "is the opposite of"),
    ("P737", "Influenced by", "is influenced by"),
    ("P2283", "Uses", "uses"),
    ("P463", "Member of", "is a member of"),
    ("P1535", "Used by", "is used by"),
    ("P279", "Subclass of", "is a type of"),
];

/// ConceptNet relations in reporting order; others are reported after these.
pub const CONCEPTNET_RELATIONS: [&str; 18] = [
    "AtLocation",
    "UsedFor",
    "IsA",
    "Causes",
    "HasSubevent",
    "HasPrerequisite",
    "HasProperty",
    "CapableOf",
    "MotivatedByGoal",
    "HasA",
    "PartOf",
    "CausesDesire",
    "ReceivesAction",
    "MadeOf",
    "Desires",
    "CreatedBy",
    "HasFirstSubevent",
    "HasLastSubevent",
];

/// Words counted as determiners when learning them from sentences.
pub const DETERMINERS: [&str; 16] = [
    "a", "an", "any", "her", "his", "its", "my", "our", "some", "that", "the", "their", "these", "this", "those", "your",
];

fn wordnet_template(rel: WnRelation) -> Option<&'static str> {
    Some(match rel {
        WnRelation::Hypernym => "is a type of",
        WnRelation::MemberHolonym => "is a member of",
        WnRelation::PartHolonym => "is part of",
        WnRelation::Antonym => "is the opposite of",
        WnRelation::InstanceHypernym => "is an example of",
        WnRelation::SubstanceMeronym => "is made of",
        _ => return None,
    })
}

/// Full WikiData relation name, e.g. `P31 (Instance of)`, from either the
/// bare property id or the full name.
pub fn wikidata_relation_name(name: &str) -> Option<String> {
    let code = name.split_whitespace().next()?;
    WIKIDATA_RELATIONS
        .iter()
        .find(|(c, label, _)| *c == code && (name == *c || name == format!("{c} ({label})")))
        .map(|(c, label, _)| format!("{c} ({label})"))
}

/// Middle words of the template for a source/relation pair.
pub fn template(source: Source, relation: &str) -> Result<&'static str> {
    let found = match source {
        Source::WordNet => WnRelation::from_name(relation).and_then(wordnet_template),
        Source::WikiData => wikidata_relation_name(relation).and_then(|full| {
            WIKIDATA_RELATIONS
                .iter()
                .find(|(c, label, _)| format!("{c} ({label})") == full)
                .map(|(_, _, t)| *t)
        }),
        Source::ConceptNet => None,
    };
    found.ok_or_else(|| Error::Invalid(format!("no template for {source} relation `{relation}`")))
}

/// Renders `[H] <template> [MASK] .` with optional determiners in front of
/// either slot; a leading determiner is capitalized.
pub fn render_template(middle: &str, head_det: &str, tail_det: &str) -> String {
    let slot = |det: &str, s: &str| if det.is_empty() { s.to_string() } else { format!("{det} {s}") };
    let text = format!("{} {middle} {} .", slot(head_det, HEAD_SLOT), slot(tail_det, MASK));
    if head_det.is_empty() {
        text
    } else {
        let mut c = text.chars();
        let first = c.next().expect("non-empty");
        first.to_uppercase().chain(c).collect()
    }
}

/// Position of a relation in the reporting order of its source.
pub fn relation_rank(source: Source, relation: &str) -> usize {
    let known = match source {
        Source::WordNet => WnRelation::PROBED.iter().position(|r| r.name() == relation),
        Source::WikiData => WIKIDATA_RELATIONS
            .iter()
            .position(|(c, l, _)| format!("{c} ({l})") == relation),
        Source::ConceptNet => CONCEPTNET_RELATIONS.iter().position(|r| *r == relation),
    };
    known.unwrap_or(usize::MAX)
}

/// Source-independent relation key used when comparing triples across
/// resources (the same relation appears under different labels).
pub fn canonical_relation(relation: &str) -> String {
    let code = relation.split_whitespace().next().unwrap_or(relation);
    let key = match (relation, code) {
        ("Hypernym", _) | (_, "P279") | ("IsA", _) => "is_a",
        ("Hypernym (Instance)", _) | (_, "P31") => "instance_of",
        ("Holonym (Part)", _) | (_, "P361") | ("PartOf", _) => "part_of",
        ("Holonym (Member)", _) | (_, "P463") => "member_of",
        ("Antonym", _) | (_, "P461") => "opposite_of",
        ("Meronym (Substance)", _) | (_, "P186") | ("MadeOf", _) => "made_of",
        (_, "P366") | ("UsedFor", _) => "used_for",
        (_, "P2283") => "uses",
        (_, "P1535") => "used_by",
        (_, "P737") => "influenced_by",
        ("HasA", _) => "has_a",
        _ => return relation.to_lowercase(),
    };
    key.to_string()
}

/// A sentence with the surface spans of a triple's head and tail.
#[derive(Debug, Clone, Copy)]
pub struct AlignedSentence<'a> {
    pub sentence: &'a str,
    /// Character offsets `[start, end)`.
    pub head_span: [usize; 2],
    pub tail_span: [usize; 2],
}

fn char_slice(s: &str, [a, b]: [usize; 2]) -> Option<&str> {
    let start = s.char_indices().map(|(i, _)| i).chain([s.len()]).nth(a)?;
    let end = s.char_indices().map(|(i, _)| i).chain([s.len()]).nth(b)?;
    (start <= end).then(|| &s[start..end])
}

fn preceding_word(s: &str, span_start: usize) -> Option<String> {
    let before = char_slice(s, [0, span_start])?;
    let word = before.split_whitespace().last()?;
    Some(word.to_lowercase())
}

/// For every surface term (lowercased) the determiner that most often
/// immediately precedes it; no determiner counts as the empty determiner,
/// ties go to the lexicographically smaller one.
pub fn learn_determiners<'a>(sentences: impl IntoIterator<Item = AlignedSentence<'a>>) -> BTreeMap<String, String> {
    let mut counts: HashMap<String, BTreeMap<String, usize>> = HashMap::new();
    for s in sentences {
        for span in [s.head_span, s.tail_span] {
            let Some(term) = char_slice(s.sentence, span) else { continue };
            let term = term.trim().to_lowercase();
            if term.is_empty() {
                continue;
            }
            let det = preceding_word(s.sentence, span[0])
                .filter(|w| DETERMINERS.contains(&w.as_str()))
                .unwrap_or_default();
            *counts.entry(term).or_default().entry(det).or_insert(0) += 1;
        }
    }
    counts
        .into_iter()
        .map(|(term, dets)| {
            // BTreeMap iterates keys ascending; keep the first maximum
            let best = dets
                .iter()
                .fold(None::<(&String, usize)>, |acc, (d, &n)| match acc {
                    Some((_, m)) if m >= n => acc,
                    _ => Some((d, n)),
                })
                .map(|(d, _)| d.clone())
                .unwrap_or_default();
            (term, best)
        })
        .collect()
}

pub(crate) fn span_text(sentence: &str, span: [usize; 2]) -> Option<&str> {
    char_slice(sentence, span)
}
