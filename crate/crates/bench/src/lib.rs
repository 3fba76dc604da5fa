//! Fixture builders shared by the benchmarks.

use std::collections::BTreeMap;
use std::sync::Arc;

use senselab_core::embedding::{EmbeddingTable, KeyOrder};
use senselab_core::lm::{inject_senses, EmbeddingInit, EnrichedModel, HiddenRule, MaskFallback, SyntheticBackend, SyntheticSpec};
use senselab_core::mapper::{AnchorPair, AnchorSet};
use senselab_core::ontology::{Ontology, OntologyBuilder, Pos, Synset, SynsetId};
use senselab_core::probe::{ProbeInstance, HEAD_SLOT};
use senselab_core::triple::Source;

pub fn cand(i: usize) -> SynsetId {
    format!("c{i:05}.n.01").parse().expect("valid synset id")
}

/// `n` unrelated core noun synsets.
pub fn flat_ontology(n: usize) -> Ontology {
    (0..n)
        .fold(OntologyBuilder::new(), |b, i| {
            b.synset(Synset {
                id: cand(i),
                lemmas: vec![format!("c{i:05}")],
                gloss: format!("definition number {i}"),
                pos: Pos::Noun,
            })
            .core(cand(i))
        })
        .build()
        .expect("flat ontology")
}

/// Table keyed by the sense tokens of `cand(0..rows.len())`.
pub fn sense_table(rows: Vec<Vec<f64>>) -> EmbeddingTable {
    let dim = rows.first().map_or(1, Vec::len);
    let mut t = EmbeddingTable::new("input", dim, KeyOrder::Sorted).expect("table");
    for (i, v) in rows.into_iter().enumerate() {
        t.push(cand(i).to_token(), v).expect("row");
    }
    t
}

/// Synthetic model whose mask state for a planted query is the given vector;
/// other queries fall back to a zero state.
pub fn planted_model(table: EmbeddingTable, planted: BTreeMap<String, Vec<f64>>) -> EnrichedModel {
    let spec = SyntheticSpec {
        name: "bench".into(),
        layers: 2,
        dim: table.dim(),
        vocab: ["is", "a", "type", "of"].map(String::from).to_vec(),
        embeddings: EmbeddingInit::Random { seed: 1 },
        hidden: HiddenRule::BagOfEmbeddings,
        planted,
        mask_fallback: MaskFallback::Zero,
        output_bias: BTreeMap::new(),
    };
    let backend = SyntheticBackend::new(spec).expect("synthetic backend");
    inject_senses(Arc::new(backend), table).expect("injection")
}

pub fn instance(i: usize, head: usize, gold: usize) -> ProbeInstance {
    ProbeInstance {
        id: format!("b{i}"),
        source: Source::WordNet,
        relation: "Hypernym".into(),
        assertion: format!("{HEAD_SLOT} is a type of [MASK] ."),
        head: cand(head),
        head_lemma: format!("c{head:05}"),
        gloss: String::new(),
        gold_tails: [cand(gold)].into_iter().collect(),
        in_core: true,
    }
}

pub fn anchor_set(source: &[Vec<f64>], target: &[Vec<f64>]) -> AnchorSet {
    let pairs = source
        .iter()
        .zip(target)
        .enumerate()
        .map(|(i, (s, t))| AnchorPair {
            key: format!("tok{i}"),
            source: s.clone(),
            target: t.clone(),
        })
        .collect();
    AnchorSet::new(source[0].len(), target[0].len(), 0, pairs).expect("anchors")
}
