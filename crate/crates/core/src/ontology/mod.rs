//! In-memory WordNet 3.0 synset graph.

mod frequency;
mod synset_id;
mod wndb;

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sampling::sample_indices;
use crate::triple::{GroundedTriple, Source};

pub use frequency::FrequencyTable;
pub use synset_id::{Pos, SynsetId, SENSE_TOKEN_PREFIX, SENSE_TOKEN_SUFFIX};
pub use wndb::{load_wordnet, LoadReport};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Synset {
    pub id: SynsetId,
    /// Lemmas in database order, with adjective position markers removed.
    pub lemmas: Vec<String>,
    pub gloss: String,
    /// Unfolded part of speech (satellites stay `s`).
    pub pos: Pos,
}

impl Synset {
    /// The gloss without its quoted usage examples (`def; "example"`).
    pub fn definition(&self) -> &str {
        let def = match self.gloss.find("; \"") {
            Some(i) => &self.gloss[..i],
            None if self.gloss.starts_with('"') => "",
            None => &self.gloss,
        };
        match def.trim() {
            "" => self.gloss.trim(),
            d => d,
        }
    }
}

/// Synset-level WordNet relations kept by the loader.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum WnRelation {
    Hypernym,
    InstanceHypernym,
    MemberHolonym,
    PartHolonym,
    SubstanceHolonym,
    MemberMeronym,
    PartMeronym,
    SubstanceMeronym,
    Antonym,
}

impl WnRelation {
    pub const ALL: [WnRelation; 9] = [
        WnRelation::Hypernym,
        WnRelation::InstanceHypernym,
        WnRelation::MemberHolonym,
        WnRelation::PartHolonym,
        WnRelation::SubstanceHolonym,
        WnRelation::MemberMeronym,
        WnRelation::PartMeronym,
        WnRelation::SubstanceMeronym,
        WnRelation::Antonym,
    ];

    /// Relations verbalized in the probe, in reporting order.
    pub const PROBED: [WnRelation; 6] = [
        WnRelation::Hypernym,
        WnRelation::MemberHolonym,
        WnRelation::PartHolonym,
        WnRelation::Antonym,
        WnRelation::InstanceHypernym,
        WnRelation::SubstanceMeronym,
    ];

    pub fn name(self) -> &'static str {
        match self {
            WnRelation::Hypernym => "Hypernym",
            WnRelation::InstanceHypernym => "Hypernym (Instance)",
            WnRelation::MemberHolonym => "Holonym (Member)",
            WnRelation::PartHolonym => "Holonym (Part)",
            WnRelation::SubstanceHolonym => "Holonym (Substance)",
            WnRelation::MemberMeronym => "Meronym (Member)",
            WnRelation::PartMeronym => "Meronym (Part)",
            WnRelation::SubstanceMeronym => "Meronym (Substance)",
            WnRelation::Antonym => "Antonym",
        }
    }

    pub fn from_name(name: &str) -> Option<WnRelation> {
        WnRelation::ALL.into_iter().find(|r| r.name() == name)
    }

    pub(crate) fn from_pointer(symbol: &str) -> Option<WnRelation> {
        Some(match symbol {
            "@" => WnRelation::Hypernym,
            "@i" => WnRelation::InstanceHypernym,
            "#m" => WnRelation::MemberHolonym,
            "#p" => WnRelation::PartHolonym,
            "#s" => WnRelation::SubstanceHolonym,
            "%m" => WnRelation::MemberMeronym,
            "%p" => WnRelation::PartMeronym,
            "%s" => WnRelation::SubstanceMeronym,
            "!" => WnRelation::Antonym,
            _ => return None,
        })
    }
}

impl fmt::Display for WnRelation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Immutable synset graph. Synsets are stored sorted by id; relations are
/// sorted, deduplicated pairs of synset positions.
#[derive(Debug, Clone)]
pub struct Ontology {
    synsets: Vec<Synset>,
    index: HashMap<SynsetId, usize>,
    relations: BTreeMap<WnRelation, Vec<(usize, usize)>>,
    hypernyms: Vec<Vec<usize>>,
    hyponyms: Vec<Vec<usize>>,
    core: Vec<bool>,
}

impl Ontology {
    pub fn len(&self) -> usize {
        self.synsets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.synsets.is_empty()
    }

    pub fn synset(&self, id: &SynsetId) -> Option<&Synset> {
        self.index.get(id).map(|&i| &self.synsets[i])
    }

    pub fn get(&self, id: &SynsetId) -> Result<&Synset> {
        self.synset(id)
            .ok_or_else(|| Error::UnknownSynset(id.to_string()))
    }

    pub fn contains(&self, id: &SynsetId) -> bool {
        self.index.contains_key(id)
    }

    /// All synsets in id order.
    pub fn synsets(&self) -> &[Synset] {
        &self.synsets
    }

    /// Every synset id, sorted.
    pub fn full_set(&self) -> Vec<SynsetId> {
        self.synsets.iter().map(|s| s.id.clone()).collect()
    }

    /// Core synset ids, sorted.
    pub fn core_set(&self) -> Vec<SynsetId> {
        self.synsets
            .iter()
            .zip(&self.core)
            .filter(|(_, &c)| c)
            .map(|(s, _)| s.id.clone())
            .collect()
    }

    pub fn core_len(&self) -> usize {
        self.core.iter().filter(|&&c| c).count()
    }

    pub fn is_core(&self, id: &SynsetId) -> bool {
        self.index.get(id).is_some_and(|&i| self.core[i])
    }

    pub fn relation_len(&self, relation: WnRelation) -> usize {
        self.relations.get(&relation).map_or(0, Vec::len)
    }

    /// Directed pairs of a relation, sorted by (head, tail).
    pub fn relation_pairs(&self, relation: WnRelation) -> impl Iterator<Item = (&SynsetId, &SynsetId)> + '_ {
        self.relations
            .get(&relation)
            .into_iter()
            .flatten()
            .map(move |&(h, t)| (&self.synsets[h].id, &self.synsets[t].id))
    }

    pub fn hypernyms(&self, id: &SynsetId) -> Result<Vec<&SynsetId>> {
        let i = self.position(id)?;
        Ok(self.hypernyms[i].iter().map(|&h| &self.synsets[h].id).collect())
    }

    /// Synsets sharing at least one direct hypernym with `id`, excluding `id`.
    pub fn co_hyponyms(&self, id: &SynsetId) -> Result<BTreeSet<SynsetId>> {
        let i = self.position(id)?;
        let pos = self.synsets[i].pos;
        let mut out = BTreeSet::new();
        for &parent in &self.hypernyms[i] {
            for &sibling in &self.hyponyms[parent] {
                if sibling != i && self.synsets[sibling].pos == pos {
                    out.insert(self.synsets[sibling].id.clone());
                }
            }
        }
        Ok(out)
    }

    /// Highest-frequency lemma of a synset rendered with spaces; ties and
    /// unknown lemmas fall back to lexicographic order.
    pub fn most_frequent_lemma(&self, id: &SynsetId, freq: &FrequencyTable) -> Result<String> {
        let synset = self.get(id)?;
        let best = synset
            .lemmas
            .iter()
            .map(|l| (freq.count(&render_lemma(l)), l))
            .max_by(|(fa, la), (fb, lb)| fa.total_cmp(fb).then_with(|| lb.cmp(la)))
            .map(|(_, l)| l)
            .ok_or_else(|| Error::Invalid(format!("synset {id} has no lemmas")))?;
        Ok(render_lemma(best))
    }

    /// All triples of one probed WordNet relation; a uniform seeded sample of
    /// exactly `cap` triples when the population is larger. Output is sorted by
    /// (head, tail).
    pub fn extract_relation_triples(&self, relation: &str, cap: Option<usize>, seed: u64) -> Result<Vec<GroundedTriple>> {
        let rel = WnRelation::from_name(relation)
            .filter(|r| WnRelation::PROBED.contains(r))
            .ok_or_else(|| Error::UnknownRelation {
                name: relation.to_string(),
                supported: WnRelation::PROBED.iter().map(|r| r.name().to_string()).collect(),
            })?;
        let population: Vec<(&SynsetId, &SynsetId)> = self.relation_pairs(rel).collect();
        let picked = sample_indices(population.len(), cap.unwrap_or(usize::MAX), seed);
        Ok(picked
            .into_iter()
            .map(|i| {
                let (h, t) = population[i];
                GroundedTriple::new(h.clone(), rel.name(), t.clone(), Source::WordNet.as_str())
            })
            .collect())
    }

    fn position(&self, id: &SynsetId) -> Result<usize> {
        self.index
            .get(id)
            .copied()
            .ok_or_else(|| Error::UnknownSynset(id.to_string()))
    }
}

/// Multiword lemmas are stored with underscores; text uses spaces.
pub fn render_lemma(lemma: &str) -> String {
    lemma.replace('_', " ")
}

/// Assembles an [`Ontology`] from parts. Used by the database loader and by
/// callers that need small hand-built graphs.
#[derive(Debug, Default)]
pub struct OntologyBuilder {
    synsets: Vec<Synset>,
    edges: Vec<(WnRelation, SynsetId, SynsetId)>,
    core: BTreeSet<SynsetId>,
}

impl OntologyBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn synset(mut self, synset: Synset) -> Self {
        self.add_synset(synset);
        self
    }

    pub fn add_synset(&mut self, synset: Synset) {
        self.synsets.push(synset);
    }

    pub fn edge(mut self, relation: WnRelation, head: SynsetId, tail: SynsetId) -> Self {
        self.add_edge(relation, head, tail);
        self
    }

    pub fn add_edge(&mut self, relation: WnRelation, head: SynsetId, tail: SynsetId) {
        self.edges.push((relation, head, tail));
    }

    pub fn core(mut self, id: SynsetId) -> Self {
        self.core.insert(id);
        self
    }

    pub fn add_core(&mut self, id: SynsetId) {
        self.core.insert(id);
    }

    pub fn build(self) -> Result<Ontology> {
        let mut synsets = self.synsets;
        for s in &synsets {
            if s.lemmas.is_empty() || s.gloss.is_empty() {
                return Err(Error::Invalid(format!("synset {} needs lemmas and a gloss", s.id)));
            }
            if s.id.pos() != s.pos.folded() {
                return Err(Error::Invalid(format!("synset {} has part of speech {:?}", s.id, s.pos)));
            }
        }
        synsets.sort_by(|a, b| a.id.cmp(&b.id));
        if let Some(w) = synsets.windows(2).find(|w| w[0].id == w[1].id) {
            return Err(Error::Invalid(format!("duplicate synset {}", w[0].id)));
        }
        let index: HashMap<SynsetId, usize> = synsets.iter().enumerate().map(|(i, s)| (s.id.clone(), i)).collect();
        let lookup = |id: &SynsetId| index.get(id).copied().ok_or_else(|| Error::UnknownSynset(id.to_string()));

        let mut relations: BTreeMap<WnRelation, Vec<(usize, usize)>> = BTreeMap::new();
        for (rel, h, t) in &self.edges {
            relations.entry(*rel).or_default().push((lookup(h)?, lookup(t)?));
        }
        for pairs in relations.values_mut() {
            // positions follow id order, so this is the canonical (head, tail) order
            pairs.sort_unstable();
            pairs.dedup();
        }

        let mut hypernyms = vec![Vec::new(); synsets.len()];
        let mut hyponyms = vec![Vec::new(); synsets.len()];
        for &(h, t) in relations.get(&WnRelation::Hypernym).into_iter().flatten() {
            hypernyms[h].push(t);
            hyponyms[t].push(h);
        }

        let mut core = vec![false; synsets.len()];
        for id in &self.core {
            core[lookup(id)?] = true;
        }

        Ok(Ontology {
            synsets,
            index,
            relations,
            hypernyms,
            hyponyms,
            core,
        })
    }
}
