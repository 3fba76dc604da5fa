use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::templates::{self, learn_determiners, render_template, span_text, AlignedSentence, HEAD_SLOT};
use super::{ProbeDataset, ProbeInstance};
use crate::error::{Error, Result};
use crate::lm::{count_masks, MASK};
use crate::ontology::{FrequencyTable, Ontology, SynsetId, WnRelation};
use crate::sampling::sample_indices;
use crate::triple::Source;

/// Relations with fewer Core instances than this are left out of Core.
pub const MIN_CORE_INSTANCES: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ProbeConfig {
    /// Maximum instances per WordNet relation; `None` keeps all.
    pub wordnet_cap: Option<usize>,
    pub seed: u64,
    pub min_core_instances: usize,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        ProbeConfig {
            wordnet_cap: Some(10_000),
            seed: 0,
            min_core_instances: MIN_CORE_INSTANCES,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WikiDataRecord {
    pub head_synset: SynsetId,
    pub relation: String,
    pub tail_synset: SynsetId,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConceptNetRecord {
    pub sentence: String,
    /// Character offsets `[start, end)`.
    pub head_span: [usize; 2],
    pub head_synset: String,
    pub tail_span: [usize; 2],
    pub tail_synset: String,
    pub relation: String,
}

impl ConceptNetRecord {
    fn aligned(&self) -> AlignedSentence<'_> {
        AlignedSentence {
            sentence: &self.sentence,
            head_span: self.head_span,
            tail_span: self.tail_span,
        }
    }

    /// Sentence with the head span replaced by the head slot and the tail
    /// span by the mask.
    fn assertion(&self) -> Option<String> {
        let [hs, he] = self.head_span;
        let [ts, te] = self.tail_span;
        let n = self.sentence.chars().count();
        if hs >= he || ts >= te || he > n || te > n || (hs < te && ts < he) {
            return None;
        }
        if self.sentence.contains(HEAD_SLOT) || count_masks(&self.sentence) > 0 {
            return None;
        }
        let mut out = String::new();
        for (i, c) in self.sentence.chars().enumerate() {
            if i == hs {
                out.push_str(HEAD_SLOT);
            } else if i == ts {
                out.push_str(MASK);
            }
            if !(hs..he).contains(&i) && !(ts..te).contains(&i) {
                out.push(c);
            }
        }
        Some(out)
    }
}

/// Reads `head<TAB>relation<TAB>tail` lines; a first line starting with
/// `head` is treated as a header.
pub fn load_wikidata(path: &Path) -> Result<Vec<WikiDataRecord>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let file = path.display().to_string();
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate() {
        if line.trim().is_empty() || (n == 0 && line.starts_with("head")) {
            continue;
        }
        let cols: Vec<&str> = line.split('\t').collect();
        let [h, r, t] = cols[..] else {
            return Err(Error::parse(file.clone(), n + 1, "expected 3 tab-separated columns"));
        };
        let parse = |s: &str| s.trim().parse::<SynsetId>().map_err(|e| Error::parse(file.clone(), n + 1, e.to_string()));
        out.push(WikiDataRecord {
            head_synset: parse(h)?,
            relation: r.trim().to_string(),
            tail_synset: parse(t)?,
        });
    }
    Ok(out)
}

pub fn load_conceptnet(path: &Path) -> Result<Vec<ConceptNetRecord>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let file = path.display().to_string();
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(n, l)| serde_json::from_str(l).map_err(|e| Error::parse(file.clone(), n + 1, e.to_string())))
        .collect()
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct BuildReport {
    /// Triples or records naming a synset the ontology lacks.
    pub unknown_synset: usize,
    /// Groups whose only gold answer was the head itself.
    pub head_only_gold: usize,
    /// ConceptNet records whose spans could not be turned into an assertion.
    pub unaligned: usize,
    /// Distinct heads per WordNet relation before capping.
    pub wordnet_population: BTreeMap<String, usize>,
    /// Relations removed from Core by the minimum-instance rule.
    pub dropped_core_relations: Vec<String>,
}

pub fn build_probe(
    onto: &Ontology,
    wikidata_file: Option<&Path>,
    conceptnet_file: Option<&Path>,
    freq: &FrequencyTable,
    config: &ProbeConfig,
) -> Result<(ProbeDataset, BuildReport)> {
    let wd = wikidata_file.map(load_wikidata).transpose()?.unwrap_or_default();
    let cn = conceptnet_file.map(load_conceptnet).transpose()?.unwrap_or_default();
    build_probe_from_records(onto, &wd, &cn, freq, config)
}

struct Group {
    head: SynsetId,
    tails: BTreeSet<SynsetId>,
}

fn group_pairs(pairs: impl IntoIterator<Item = (SynsetId, SynsetId)>) -> Vec<Group> {
    let mut map: BTreeMap<SynsetId, BTreeSet<SynsetId>> = BTreeMap::new();
    for (h, t) in pairs {
        map.entry(h).or_default().insert(t);
    }
    map.into_iter().map(|(head, tails)| Group { head, tails }).collect()
}

pub fn build_probe_from_records(
    onto: &Ontology,
    wikidata: &[WikiDataRecord],
    conceptnet: &[ConceptNetRecord],
    freq: &FrequencyTable,
    config: &ProbeConfig,
) -> Result<(ProbeDataset, BuildReport)> {
    let mut report = BuildReport::default();
    let dets = learn_determiners(conceptnet.iter().map(ConceptNetRecord::aligned));
    let det = |term: &str| dets.get(&term.to_lowercase()).map(String::as_str).unwrap_or("");
    let mut instances = Vec::new();

    let templated = |source: Source,
                         prefix: &str,
                         relation: &str,
                         groups: Vec<Group>,
                         report: &mut BuildReport,
                         instances: &mut Vec<ProbeInstance>|
     -> Result<()> {
        let middle = templates::template(source, relation)?;
        for Group { head, mut tails } in groups {
            tails.remove(&head);
            let Some(first) = tails.first() else {
                report.head_only_gold += 1;
                continue;
            };
            let head_lemma = onto.most_frequent_lemma(&head, freq)?;
            let tail_lemma = onto.most_frequent_lemma(first, freq)?;
            let synset = onto.get(&head)?;
            instances.push(ProbeInstance {
                id: format!("{prefix}:{relation}:{head}"),
                source,
                relation: relation.to_string(),
                assertion: render_template(middle, det(&head_lemma), det(&tail_lemma)),
                gloss: synset.definition().to_string(),
                in_core: onto.is_core(&head) && tails.iter().all(|t| onto.is_core(t)),
                head,
                head_lemma,
                gold_tails: tails,
            });
        }
        Ok(())
    };

    for rel in WnRelation::PROBED {
        let triples = onto.extract_relation_triples(rel.name(), None, config.seed)?;
        let groups = group_pairs(triples.into_iter().map(|t| (t.head, t.tail)));
        report.wordnet_population.insert(rel.name().to_string(), groups.len());
        let picked = match config.wordnet_cap {
            Some(cap) if groups.len() > cap => {
                let keep: BTreeSet<usize> = sample_indices(groups.len(), cap, config.seed).into_iter().collect();
                groups.into_iter().enumerate().filter(|(i, _)| keep.contains(i)).map(|(_, g)| g).collect()
            }
            _ => groups,
        };
        templated(Source::WordNet, "wn", rel.name(), picked, &mut report, &mut instances)?;
    }

    let mut wd_by_rel: BTreeMap<(usize, String), Vec<(SynsetId, SynsetId)>> = BTreeMap::new();
    for rec in wikidata {
        let relation = templates::wikidata_relation_name(&rec.relation)
            .ok_or_else(|| Error::Invalid(format!("no template for WikiData relation `{}`", rec.relation)))?;
        if !onto.contains(&rec.head_synset) || !onto.contains(&rec.tail_synset) {
            report.unknown_synset += 1;
            continue;
        }
        let rank = templates::relation_rank(Source::WikiData, &relation);
        wd_by_rel
            .entry((rank, relation))
            .or_default()
            .push((rec.head_synset.clone(), rec.tail_synset.clone()));
    }
    for ((_, relation), pairs) in wd_by_rel {
        templated(Source::WikiData, "wd", &relation, group_pairs(pairs), &mut report, &mut instances)?;
    }

    let mut cn_gold: BTreeMap<(SynsetId, &str), BTreeSet<SynsetId>> = BTreeMap::new();
    let mut cn_rows = Vec::new();
    for (line, rec) in conceptnet.iter().enumerate() {
        let ids = rec.head_synset.parse::<SynsetId>().ok().zip(rec.tail_synset.parse::<SynsetId>().ok());
        let Some((head, tail)) = ids.filter(|(h, t)| onto.contains(h) && onto.contains(t)) else {
            report.unknown_synset += 1;
            continue;
        };
        let (Some(assertion), Some(surface)) = (rec.assertion(), span_text(&rec.sentence, rec.head_span)) else {
            report.unaligned += 1;
            continue;
        };
        cn_gold.entry((head.clone(), rec.relation.as_str())).or_default().insert(tail);
        cn_rows.push((line + 1, rec, head, assertion, surface.trim().to_string()));
    }
    for (line, rec, head, assertion, surface) in cn_rows {
        let mut tails = cn_gold[&(head.clone(), rec.relation.as_str())].clone();
        tails.remove(&head);
        if tails.is_empty() {
            report.head_only_gold += 1;
            continue;
        }
        instances.push(ProbeInstance {
            id: format!("cn:{line}"),
            source: Source::ConceptNet,
            relation: rec.relation.clone(),
            assertion,
            gloss: onto.get(&head)?.definition().to_string(),
            in_core: onto.is_core(&head) && tails.iter().all(|t| onto.is_core(t)),
            head,
            head_lemma: surface,
            gold_tails: tails,
        });
    }

    let mut core_counts: BTreeMap<(Source, String), usize> = BTreeMap::new();
    for inst in instances.iter().filter(|i| i.in_core) {
        *core_counts.entry((inst.source, inst.relation.clone())).or_default() += 1;
    }
    let dropped: BTreeSet<(Source, String)> = core_counts
        .into_iter()
        .filter(|(_, n)| *n < config.min_core_instances)
        .map(|(k, _)| k)
        .collect();
    for inst in &mut instances {
        if inst.in_core && dropped.contains(&(inst.source, inst.relation.clone())) {
            inst.in_core = false;
        }
    }
    report.dropped_core_relations = dropped.into_iter().map(|(s, r)| format!("{s}:{r}")).collect();
    Ok((ProbeDataset::new(instances)?, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ontology::{OntologyBuilder, Pos, Synset};
    use crate::probe::Subset;

    fn sid(s: &str) -> SynsetId {
        s.parse().unwrap()
    }

    fn syn(id: &str, lemmas: &[&str], gloss: &str) -> Synset {
        Synset {
            id: sid(id),
            lemmas: lemmas.iter().map(|s| s.to_string()).collect(),
            gloss: gloss.to_string(),
            pos: Pos::Noun,
        }
    }

    fn freq() -> FrequencyTable {
        let mut f = FrequencyTable::default();
        f.insert("medicine", 10.0);
        f
    }

    fn onto(n_parts: usize, core_parts: usize) -> Ontology {
        let mut b = OntologyBuilder::new()
            .synset(syn("medicine.n.02", &["medicine", "medication"], "something that treats; \"take your medicine\""))
            .synset(syn("drug.n.01", &["drug"], "a substance used as medicine"))
            .synset(syn("car.n.01", &["car", "auto"], "a motor vehicle"))
            .edge(WnRelation::Hypernym, sid("medicine.n.02"), sid("drug.n.01"))
            .core(sid("car.n.01"));
        for i in 0..n_parts {
            let id = format!("part{i}.n.01");
            b = b
                .synset(syn(&id, &[&format!("part{i}")], "a part"))
                .edge(WnRelation::PartHolonym, sid(&id), sid("car.n.01"));
            if i < core_parts {
                b = b.core(sid(&id));
            }
        }
        b.build().unwrap()
    }

    #[test]
    fn hypernym_assertion_uses_template() {
        let o = onto(0, 0);
        let (ds, _) = build_probe_from_records(&o, &[], &[], &freq(), &ProbeConfig::default()).unwrap();
        let inst = &ds.instances[0];
        assert_eq!(inst.assertion.replace(HEAD_SLOT, &inst.head_lemma), "medicine is a type of [MASK] .");
        assert_eq!(inst.gloss, "something that treats");
        assert_eq!(inst.id, "wn:Hypernym:medicine.n.02");
    }

    #[test]
    fn core_relation_needs_ten_instances() {
        for (core_parts, expected) in [(9, 0), (10, 10)] {
            let o = onto(12, core_parts);
            let (ds, report) =
                build_probe_from_records(&o, &[], &[], &freq(), &ProbeConfig::default()).unwrap();
            assert_eq!(ds.subset(Subset::Core).count(), expected);
            assert_eq!(ds.subset(Subset::Full).count(), 13);
            assert_eq!(report.dropped_core_relations.len(), usize::from(expected == 0));
        }
    }

    #[test]
    fn cap_samples_instances() {
        let o = onto(12, 0);
        let cfg = ProbeConfig {
            wordnet_cap: Some(5),
            ..Default::default()
        };
        let (a, report) = build_probe_from_records(&o, &[], &[], &freq(), &cfg).unwrap();
        let (b, _) = build_probe_from_records(&o, &[], &[], &freq(), &cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.instances.iter().filter(|i| i.relation == "Holonym (Part)").count(), 5);
        assert_eq!(report.wordnet_population["Holonym (Part)"], 12);
    }

    #[test]
    fn wikidata_and_conceptnet_records() {
        let o = onto(0, 0);
        let wd = vec![
            WikiDataRecord {
                head_synset: sid("drug.n.01"),
                relation: "P366".into(),
                tail_synset: sid("medicine.n.02"),
            },
            WikiDataRecord {
                head_synset: sid("nothing.n.01"),
                relation: "P366".into(),
                tail_synset: sid("car.n.01"),
            },
        ];
        let cn = vec![ConceptNetRecord {
            sentence: "You can use a car to travel to the medicine".into(),
            head_span: [14, 17],
            head_synset: "car.n.01".into(),
            tail_span: [35, 43],
            tail_synset: "medicine.n.02".into(),
            relation: "UsedFor".into(),
        }];
        let (ds, report) = build_probe_from_records(&o, &wd, &cn, &freq(), &ProbeConfig::default()).unwrap();
        assert_eq!(report.unknown_synset, 1);
        let wd_inst = ds.by_source(Source::WikiData).next().unwrap();
        assert_eq!(wd_inst.relation, "P366 (Use)");
        // "medicine" is preceded by "the" in the sentence
        assert_eq!(wd_inst.assertion, "[H] is used for the [MASK] .");
        let cn_inst = ds.by_source(Source::ConceptNet).next().unwrap();
        assert_eq!(cn_inst.assertion, "You can use a [H] to travel to the [MASK]");
        assert_eq!(cn_inst.head_lemma, "car");
        assert_eq!(cn_inst.id, "cn:1");

        let bad = vec![WikiDataRecord {
            head_synset: sid("drug.n.01"),
            relation: "P9".into(),
            tail_synset: sid("car.n.01"),
        }];
        assert!(build_probe_from_records(&o, &bad, &[], &freq(), &ProbeConfig::default()).is_err());
    }

    #[test]
    fn overlapping_spans_are_unaligned() {
        let rec = ConceptNetRecord {
            sentence: "a car".into(),
            head_span: [2, 5],
            head_synset: "car.n.01".into(),
            tail_span: [3, 5],
            tail_synset: "car.n.01".into(),
            relation: "IsA".into(),
        };
        assert!(rec.assertion().is_none());
    }

    #[test]
    fn tsv_loader() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("wd.tsv");
        fs::write(&p, "head_synset\trelation\ttail_synset\ndrug.n.01\tP366\tcar.n.01\n").unwrap();
        assert_eq!(load_wikidata(&p).unwrap().len(), 1);
        fs::write(&p, "drug.n.01\tP366\n").unwrap();
        assert!(load_wikidata(&p).is_err());
    }
}
