mod common;

use std::path::PathBuf;

use common::{fixture_dir, sid};
use senselab_core::extraction::generate_queries;
use senselab_core::ontology::{load_wordnet, FrequencyTable, Ontology, WnRelation};
use senselab_core::probe::{build_probe_from_records, GlossMode, ProbeConfig, Repr, Subset};
use senselab_core::triple::Source;

fn fixture() -> Ontology {
    let dir = fixture_dir().join("wordnet");
    let (onto, report) = load_wordnet(&dir, Some(&dir.join("core.txt"))).unwrap();
    assert_eq!(report.synsets, 17);
    assert_eq!(report.core_entries, 8);
    assert_eq!(report.unmapped_core, 1);
    onto
}

#[test]
fn fixture_ids_and_relations() {
    let onto = fixture();
    assert_eq!(onto.len(), 17);
    assert_eq!(onto.core_len(), 7);
    for id in ["dog.n.01", "rome.n.01", "hot.a.01", "warm.a.01", "run.v.01", "quickly.r.01"] {
        assert!(onto.contains(&sid(id)), "{id}");
    }
    assert_eq!(onto.hypernyms(&sid("dog.n.01")).unwrap(), vec![&sid("canine.n.01")]);
    let pairs = |r| onto.relation_pairs(r).map(|(h, t)| (h.to_string(), t.to_string())).collect::<Vec<_>>();
    assert_eq!(pairs(WnRelation::PartHolonym), [("tail.n.01".to_string(), "dog.n.01".to_string())]);
    assert_eq!(pairs(WnRelation::MemberHolonym), [("wolf.n.01".to_string(), "pack.n.01".to_string())]);
    assert_eq!(pairs(WnRelation::SubstanceMeronym), [("tail.n.01".to_string(), "bone.n.01".to_string())]);
    assert_eq!(pairs(WnRelation::InstanceHypernym), [("rome.n.01".to_string(), "city.n.01".to_string())]);
    assert_eq!(pairs(WnRelation::Antonym).len(), 2);
    assert_eq!(
        onto.synset(&sid("dog.n.01")).unwrap().gloss,
        "a member of the genus Canis; \"the dog barked all night\""
    );
    assert_eq!(onto.synset(&sid("dog.n.01")).unwrap().definition(), "a member of the genus Canis");
}

#[test]
fn fixture_co_hyponyms_are_symmetric() {
    let onto = fixture();
    assert_eq!(
        onto.co_hyponyms(&sid("dog.n.01")).unwrap().into_iter().collect::<Vec<_>>(),
        vec![sid("wolf.n.01")]
    );
    for a in onto.full_set() {
        for b in onto.co_hyponyms(&a).unwrap() {
            assert!(onto.co_hyponyms(&b).unwrap().contains(&a), "{a} {b}");
        }
    }
}

#[test]
fn fixture_probe_and_queries() {
    let onto = fixture();
    let (ds, report) = build_probe_from_records(&onto, &[], &[], &FrequencyTable::default(), &ProbeConfig::default()).unwrap();
    assert_eq!(report.wordnet_population["Hypernym"], 10);
    assert_eq!(ds.by_source(Source::WordNet).count(), 10 + 1 + 1 + 2 + 1 + 1);
    // no relation reaches ten core instances in the fixture
    assert_eq!(ds.subset(Subset::Core).count(), 0);
    let dog = ds.instances.iter().find(|i| i.id == "wn:Hypernym:dog.n.01").unwrap();
    assert_eq!(dog.assertion, "[H] is a type of [MASK] .");
    let qs = generate_queries([dog], &onto, Repr::Synset, GlossMode { avg: true, pre: true }).unwrap();
    assert_eq!(qs.len(), 1);
    assert_eq!(qs[0].head, sid("wolf.n.01"));
    assert!(qs[0].assertion.starts_with("<WN:wolf.n.01> can be defined as : any of various"));
}

fn real_wordnet() -> Option<PathBuf> {
    std::env::var_os("WORDNET30_DIR").map(PathBuf::from).filter(|p| p.join("data.noun").exists())
}

#[test]
fn real_wordnet_counts_and_ids() {
    let Some(dir) = real_wordnet() else {
        eprintln!("WORDNET30_DIR not set; skipping");
        return;
    };
    let (onto, _) = load_wordnet(&dir, None).unwrap();
    assert_eq!(onto.full_set().len(), 117_659);
    assert!(onto.hypernyms(&sid("dog.n.01")).unwrap().contains(&&sid("canine.n.02")));
    assert!(onto.co_hyponyms(&sid("dog.n.01")).unwrap().contains(&sid("wolf.n.01")));
    let med = onto.synset(&sid("medicine.n.02")).unwrap();
    assert!(med.lemmas.iter().any(|l| l == "medicine"));
    assert!(onto.hypernyms(&sid("medicine.n.02")).unwrap().contains(&&sid("drug.n.01")));
}
