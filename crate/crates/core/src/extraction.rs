//! Novel triple extraction: co-hyponym substitution queries, a threshold
//! calibrated on known answers, and thresholded prediction.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lm::{with_pool, CandidateSet, EnrichedModel};
use crate::ontology::{render_lemma, Ontology, SynsetId};
use crate::probe::templates::canonical_relation;
use crate::probe::{render_query, GlossMode, ProbeDataset, ProbeInstance, Repr, Subset};
use crate::triple::{GroundedTriple, Source};

/// Provenance tag of extracted triples.
pub const EXTRACTED: &str = "extracted";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExtractionQuery {
    pub id: String,
    pub origin_instance: String,
    pub head: SynsetId,
    pub relation: String,
    /// Model-ready text with one mask.
    pub assertion: String,
}

/// One query per (instance, co-hyponym of its head). Heads are rendered with
/// `repr` and `gloss` as in evaluation; duplicates by (head, relation,
/// assertion) are dropped, first occurrence wins.
pub fn generate_queries<'a>(
    instances: impl IntoIterator<Item = &'a ProbeInstance>,
    onto: &Ontology,
    repr: Repr,
    gloss: GlossMode,
) -> Result<Vec<ExtractionQuery>> {
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for inst in instances {
        for co in onto.co_hyponyms(&inst.head)? {
            if co == inst.head {
                continue;
            }
            let synset = onto.get(&co)?;
            let substitute = ProbeInstance {
                head_lemma: synset.lemmas.first().map(|l| render_lemma(l)).unwrap_or_default(),
                gloss: synset.definition().to_string(),
                head: co.clone(),
                ..inst.clone()
            };
            let assertion = render_query(&substitute, repr, gloss)?;
            if seen.insert((co.clone(), inst.relation.clone(), assertion.clone())) {
                out.push(ExtractionQuery {
                    id: format!("{}#{co}", inst.id),
                    origin_instance: inst.id.clone(),
                    head: co,
                    relation: inst.relation.clone(),
                    assertion,
                });
            }
        }
    }
    Ok(out)
}

/// Median; an even count takes the mean of the two central values.
pub fn median(values: &[f64]) -> Option<f64> {
    let mut v: Vec<f64> = values.to_vec();
    if v.is_empty() {
        return None;
    }
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    Some(if v.len() % 2 == 1 { v[m] } else { (v[m - 1] + v[m]) / 2.0 })
}

/// Probability of every gold tail over all Full instances, in instance order.
pub fn gold_scores(
    model: &EnrichedModel,
    ds: &ProbeDataset,
    onto: &Ontology,
    repr: Repr,
    gloss: GlossMode,
    jobs: Option<usize>,
) -> Result<Vec<f64>> {
    let ids = onto.full_set();
    let candidates = model.candidates(ids.iter())?;
    let instances: Vec<&ProbeInstance> = ds.subset(Subset::Full).collect();
    let per: Vec<Vec<f64>> = with_pool(model.backend().concurrency_limit(), jobs, || {
        instances
            .par_iter()
            .map(|inst| {
                let query = render_query(inst, repr, gloss)?;
                let dist = model.distribution(&query, &candidates, Some(&inst.head))?;
                Ok(inst.gold_tails.iter().filter_map(|g| dist.probability(g)).collect())
            })
            .collect::<Result<_>>()
    })??;
    Ok(per.into_iter().flatten().collect())
}

/// Median probability assigned to gold tails on the Full probe.
pub fn calibrate_threshold(
    model: &EnrichedModel,
    ds: &ProbeDataset,
    onto: &Ontology,
    repr: Repr,
    gloss: GlossMode,
    jobs: Option<usize>,
) -> Result<f64> {
    let scores = gold_scores(model, ds, onto, repr, gloss, jobs)?;
    median(&scores).ok_or_else(|| Error::Invalid("no gold tail received a score; threshold undefined".into()))
}

/// Triples already asserted somewhere, with relation names normalized across
/// sources.
#[derive(Debug, Clone, Default)]
pub struct KnownTriples {
    set: HashSet<(SynsetId, String, SynsetId)>,
}

impl KnownTriples {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, head: &SynsetId, relation: &str, tail: &SynsetId) {
        self.set.insert((head.clone(), canonical_relation(relation), tail.clone()));
    }

    pub fn contains(&self, head: &SynsetId, relation: &str, tail: &SynsetId) -> bool {
        self.set
            .contains(&(head.clone(), canonical_relation(relation), tail.clone()))
    }

    pub fn add_dataset(&mut self, ds: &ProbeDataset) {
        for inst in &ds.instances {
            for t in &inst.gold_tails {
                self.insert(&inst.head, &inst.relation, t);
            }
        }
    }

    pub fn add_triples<'a>(&mut self, triples: impl IntoIterator<Item = &'a GroundedTriple>) {
        for t in triples {
            self.insert(&t.head, &t.relation, &t.tail);
        }
    }

    /// Every pair of the probed WordNet relations.
    pub fn add_wordnet(&mut self, onto: &Ontology) {
        for rel in crate::ontology::WnRelation::PROBED {
            for (h, t) in onto.relation_pairs(rel) {
                self.insert(h, rel.name(), t);
            }
        }
    }

    pub fn len(&self) -> usize {
        self.set.len()
    }

    pub fn is_empty(&self) -> bool {
        self.set.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtractedTriple {
    #[serde(flatten)]
    pub triple: GroundedTriple,
    pub query_id: String,
    pub origin_instance: String,
}

impl ExtractedTriple {
    pub fn score(&self) -> f64 {
        self.triple.score.expect("extracted triples carry a score")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtractedCkg {
    /// Sorted by (relation, head, tail).
    pub triples: Vec<ExtractedTriple>,
    pub threshold: f64,
    pub query_count: usize,
}

/// Every candidate scoring at least `threshold` for a query becomes a triple
/// unless it is the query head or already known. Repeated triples keep the
/// highest score (earliest query on ties).
pub fn extract_ckg(
    model: &EnrichedModel,
    queries: &[ExtractionQuery],
    candidates: &CandidateSet,
    threshold: f64,
    known: &KnownTriples,
    jobs: Option<usize>,
) -> Result<ExtractedCkg> {
    if !(threshold > 0.0 && threshold <= 1.0) {
        return Err(Error::Invalid(format!("threshold must be in (0, 1], got {threshold}")));
    }
    let hits: Vec<Vec<(SynsetId, f64)>> = with_pool(model.backend().concurrency_limit(), jobs, || {
        queries
            .par_iter()
            .map(|q| {
                let dist = model.distribution(&q.assertion, candidates, Some(&q.head))?;
                Ok(dist
                    .iter()
                    .filter(|&(t, p)| p >= threshold && !known.contains(&q.head, &q.relation, t))
                    .map(|(t, p)| (t.clone(), p))
                    .collect())
            })
            .collect::<Result<_>>()
    })??;
    let mut merged: BTreeMap<(String, SynsetId, SynsetId), (f64, usize)> = BTreeMap::new();
    for (qi, found) in hits.into_iter().enumerate() {
        let q = &queries[qi];
        for (tail, p) in found {
            merged
                .entry((q.relation.clone(), q.head.clone(), tail))
                .and_modify(|best| {
                    if p > best.0 {
                        *best = (p, qi);
                    }
                })
                .or_insert((p, qi));
        }
    }
    let triples = merged
        .into_iter()
        .map(|((relation, head, tail), (p, qi))| {
            let mut triple = GroundedTriple::new(head, relation, tail, EXTRACTED);
            triple.score = Some(p);
            ExtractedTriple {
                triple,
                query_id: queries[qi].id.clone(),
                origin_instance: queries[qi].origin_instance.clone(),
            }
        })
        .collect();
    Ok(ExtractedCkg {
        triples,
        threshold,
        query_count: queries.len(),
    })
}

impl ExtractedCkg {
    /// Triples per relation, most frequent first.
    pub fn relation_counts(&self) -> Vec<(String, usize)> {
        let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
        for t in &self.triples {
            *counts.entry(&t.triple.relation).or_default() += 1;
        }
        let mut v: Vec<(String, usize)> = counts.into_iter().map(|(r, n)| (r.to_string(), n)).collect();
        v.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        v
    }

    pub fn counts_tsv(&self) -> String {
        let mut out = String::from("relation\ttriples\n");
        for (r, n) in self.relation_counts() {
            out.push_str(&format!("{r}\t{n}\n"));
        }
        out.push_str(&format!("Total\t{}\n", self.triples.len()));
        out
    }

    pub fn save_jsonl(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        for t in &self.triples {
            serde_json::to_writer(&mut w, t)?;
            w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn load_jsonl(path: &Path, threshold: f64, query_count: usize) -> Result<ExtractedCkg> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let triples = text
            .lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty())
            .map(|(n, l)| serde_json::from_str(l).map_err(|e| Error::parse(path.display().to_string(), n + 1, e.to_string())))
            .collect::<Result<_>>()?;
        Ok(ExtractedCkg {
            triples,
            threshold,
            query_count,
        })
    }

    pub fn distinct_relations(&self) -> BTreeSet<&str> {
        self.triples.iter().map(|t| t.triple.relation.as_str()).collect()
    }
}

/// ConceptNet instances of a dataset, the query sources for extraction.
pub fn conceptnet_instances(ds: &ProbeDataset) -> Vec<&ProbeInstance> {
    ds.by_source(Source::ConceptNet).collect()
}
