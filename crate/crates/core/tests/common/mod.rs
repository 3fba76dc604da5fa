#![allow(dead_code)]

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::sync::Arc;

use rand::rngs::StdRng;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use senselab_core::embedding::{EmbeddingTable, KeyOrder};
use senselab_core::lm::{inject_senses, EmbeddingInit, EnrichedModel, HiddenRule, MaskFallback, MaskFn, SyntheticBackend, SyntheticSpec};
use senselab_core::ontology::{Ontology, OntologyBuilder, Pos, Synset, SynsetId};
use senselab_core::probe::{ProbeInstance, HEAD_SLOT};
use senselab_core::triple::Source;

pub fn fixture_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures")
}

pub fn sid(s: &str) -> SynsetId {
    s.parse().unwrap()
}

pub fn cand(i: usize) -> SynsetId {
    sid(&format!("c{i:04}.n.01"))
}

/// `n` unrelated noun synsets `c0000.n.01 ..`, all of them core.
pub fn flat_ontology(n: usize) -> Ontology {
    (0..n)
        .fold(OntologyBuilder::new(), |b, i| {
            b.synset(Synset {
                id: cand(i),
                lemmas: vec![format!("c{i:04}")],
                gloss: format!("definition number {i}"),
                pos: Pos::Noun,
            })
            .core(cand(i))
        })
        .build()
        .unwrap()
}

/// Sense vector of candidate `i` is the `i`-th unit vector, so the logit of
/// candidate `i` is component `i` of the mask state.
pub fn one_hot_table(ids: &[SynsetId]) -> EmbeddingTable {
    let n = ids.len();
    let mut t = EmbeddingTable::new("input", n, KeyOrder::Sorted).unwrap();
    let mut sorted = ids.to_vec();
    sorted.sort();
    for (i, id) in sorted.iter().enumerate() {
        let mut v = vec![0.0; n];
        v[i] = 1.0;
        t.push(id.to_token(), v).unwrap();
    }
    t
}

pub fn synthetic_spec(dim: usize, planted: BTreeMap<String, Vec<f64>>) -> SyntheticSpec {
    SyntheticSpec {
        name: "planted".into(),
        layers: 2,
        dim,
        vocab: ["is", "a", "type", "of", "can", "be", "defined", "as", "the"].map(String::from).to_vec(),
        embeddings: EmbeddingInit::Random { seed: 5 },
        hidden: HiddenRule::BagOfEmbeddings,
        planted,
        mask_fallback: MaskFallback::Zero,
        output_bias: BTreeMap::new(),
    }
}

/// Model over `ids` whose mask state for a query is exactly the logit vector
/// planted for that text (or produced by `mask_fn`).
pub fn planted_model(ids: &[SynsetId], planted: BTreeMap<String, Vec<f64>>, mask_fn: Option<MaskFn>) -> EnrichedModel {
    let mut backend = SyntheticBackend::new(synthetic_spec(ids.len(), planted)).unwrap();
    if let Some(f) = mask_fn {
        backend = backend.with_mask_fn(f);
    }
    inject_senses(Arc::new(backend), one_hot_table(ids)).unwrap()
}

pub fn instance(id: &str, head: &SynsetId, golds: &[SynsetId], relation: &str) -> ProbeInstance {
    ProbeInstance {
        id: id.to_string(),
        source: Source::WordNet,
        relation: relation.to_string(),
        assertion: format!("{HEAD_SLOT} is a type of [MASK] ."),
        head: head.clone(),
        head_lemma: head.lemma().to_string(),
        gloss: format!("definition of {}", head.lemma()),
        gold_tails: golds.iter().cloned().collect(),
        in_core: true,
    }
}

/// Logits (indexed like the sorted `ids`) under which the non-head
/// candidates rank in a seeded random order, except that each `(gold, r)`
/// lands exactly at rank `r`. The head gets the largest logit so that a
/// missing exclusion would show.
pub fn logits_with_ranks(ids: &[SynsetId], head: &SynsetId, placed: &[(SynsetId, usize)], seed: u64) -> Vec<f64> {
    let mut sorted = ids.to_vec();
    sorted.sort();
    let mut rest: Vec<&SynsetId> = sorted
        .iter()
        .filter(|c| *c != head && !placed.iter().any(|(g, _)| g == *c))
        .collect();
    rest.shuffle(&mut StdRng::seed_from_u64(seed));
    let mut by_rank: Vec<(usize, &SynsetId)> = placed.iter().map(|(g, r)| (*r, g)).collect();
    by_rank.sort();
    let mut order: Vec<&SynsetId> = rest;
    for (r, g) in by_rank {
        order.insert(r - 1, g);
    }
    let mut logits = vec![0.0; sorted.len()];
    for (pos, c) in order.iter().enumerate() {
        let i = sorted.binary_search(c).unwrap();
        logits[i] = -(pos as f64) * 0.01;
    }
    logits[sorted.binary_search(head).unwrap()] = 50.0;
    logits
}

/// Independent metric oracle: sorts the candidates by (score desc, id asc)
/// and reads hit@k and the reciprocal rank of the first gold.
pub fn oracle_metrics(scored: &[(SynsetId, f64)], golds: &[SynsetId], ks: &[usize]) -> (Vec<f64>, f64) {
    let mut s = scored.to_vec();
    s.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then_with(|| a.0.cmp(&b.0)));
    let first = s.iter().position(|(c, _)| golds.contains(c)).expect("a gold is ranked") + 1;
    (ks.iter().map(|&k| if first <= k { 1.0 } else { 0.0 }).collect(), 1.0 / first as f64)
}
