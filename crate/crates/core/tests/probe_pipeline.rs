mod common;

use std::collections::BTreeMap;
use std::sync::Arc;

use common::*;
use rand::rngs::StdRng;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use senselab_core::probe::{
    ablation_grid, compute_report, evaluate, render_query, EvalConfig, GlossMode, InstanceOutcome, ProbeDataset, Repr,
    Subset,
};
use senselab_core::triple::Source;

const RELATIONS: [&str; 3] = ["Hypernym", "Antonym", "Holonym (Part)"];

/// Instances with golds planted at random ranks, plus the outcomes those
/// ranks imply.
fn planted_fixture(n_cands: usize, n_inst: usize, seed: u64) -> (Vec<senselab_core::ontology::SynsetId>, ProbeDataset, BTreeMap<String, Vec<f64>>, Vec<InstanceOutcome>) {
    let ids: Vec<_> = (0..n_cands).map(cand).collect();
    let mut rng = StdRng::seed_from_u64(seed);
    let mut instances = Vec::new();
    let mut planted = BTreeMap::new();
    let mut expected = Vec::new();
    // distinct heads keep the query texts distinct
    let mut heads: Vec<usize> = (0..n_cands).collect();
    heads.shuffle(&mut rng);
    for i in 0..n_inst {
        let mut pool: Vec<usize> = (0..n_cands).filter(|&c| c != heads[i]).collect();
        pool.shuffle(&mut rng);
        pool.insert(0, heads[i]);
        let head = cand(pool[0]);
        let n_gold = rng.random_range(1..=3);
        let mut ranks: Vec<usize> = (1..n_cands).collect::<Vec<_>>();
        ranks.shuffle(&mut rng);
        let placed: Vec<_> = (0..n_gold)
            .map(|g| (cand(pool[1 + g]), if rng.random_bool(0.5) { rng.random_range(1..=12) } else { ranks[g] }))
            .collect();
        let mut placed_unique: Vec<(senselab_core::ontology::SynsetId, usize)> = Vec::new();
        for (g, r) in placed {
            if !placed_unique.iter().any(|(_, x)| *x == r) {
                placed_unique.push((g, r));
            }
        }
        let golds: Vec<_> = placed_unique.iter().map(|(g, _)| g.clone()).collect();
        let relation = RELATIONS[i % 3];
        let inst = instance(&format!("inst{i:03}"), &head, &golds, relation);
        let text = render_query(&inst, Repr::Synset, GlossMode::default()).unwrap();
        planted.insert(text, logits_with_ranks(&ids, &head, &placed_unique, seed + i as u64));
        expected.push(InstanceOutcome {
            id: inst.id.clone(),
            source: Source::WordNet,
            relation: relation.to_string(),
            best_rank: placed_unique.iter().map(|(_, r)| *r).min(),
        });
        instances.push(inst);
    }
    (ids, ProbeDataset::new(instances).unwrap(), planted, expected)
}

#[test]
fn planted_ranks_give_the_analytic_report() {
    let (ids, ds, planted, expected) = planted_fixture(120, 40, 11);
    let onto = flat_ontology(120);
    let model = planted_model(&ids, planted, None);
    let cfg = EvalConfig::new(Subset::Core, Repr::Synset, GlossMode::default());
    let report = evaluate(&model, &ds, &onto, &cfg).unwrap();
    assert_eq!(report, compute_report(&expected, &cfg.ks).unwrap());
    assert!(report.errors.is_empty());
    assert_eq!(report.all().instances, 40);
}

#[test]
fn all_golds_first_means_perfect_rows() {
    let ids: Vec<_> = (0..30).map(cand).collect();
    let onto = flat_ontology(30);
    let mut planted = BTreeMap::new();
    let mut insts = Vec::new();
    for i in 0..12 {
        let head = cand(i);
        let gold = cand(29 - i);
        let inst = instance(&format!("p{i}"), &head, std::slice::from_ref(&gold), RELATIONS[i % 3]);
        planted.insert(
            render_query(&inst, Repr::Synset, GlossMode::default()).unwrap(),
            logits_with_ranks(&ids, &head, &[(gold, 1)], i as u64),
        );
        insts.push(inst);
    }
    let model = planted_model(&ids, planted, None);
    let ds = ProbeDataset::new(insts).unwrap();
    let report = evaluate(&model, &ds, &onto, &EvalConfig::new(Subset::Core, Repr::Synset, GlossMode::default())).unwrap();
    for row in &report.rows {
        assert_eq!(row.precision[0], 1.0, "{}", row.label());
        assert_eq!(row.mrr, 1.0);
    }
}

#[test]
fn shuffling_instances_and_jobs_change_nothing() {
    let (ids, ds, planted, _) = planted_fixture(80, 30, 4);
    let onto = flat_ontology(80);
    let model = planted_model(&ids, planted, None);
    let mut cfg = EvalConfig::new(Subset::Full, Repr::Synset, GlossMode::default());
    cfg.jobs = Some(1);
    let a = evaluate(&model, &ds, &onto, &cfg).unwrap();
    let mut shuffled = ds.instances.clone();
    shuffled.shuffle(&mut StdRng::seed_from_u64(1));
    cfg.jobs = Some(4);
    let b = evaluate(&model, &ProbeDataset::new(shuffled).unwrap(), &onto, &cfg).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.to_tsv(), b.to_tsv());
}

#[test]
fn golds_outside_the_candidate_set_are_errors() {
    use senselab_core::ontology::{OntologyBuilder, Pos, Synset};
    let ids: Vec<_> = (0..5).map(cand).collect();
    let mut b = OntologyBuilder::new();
    for (i, id) in ids.iter().enumerate() {
        b = b.synset(Synset {
            id: id.clone(),
            lemmas: vec![id.lemma().into()],
            gloss: "g".into(),
            pos: Pos::Noun,
        });
        if i < 4 {
            b = b.core(id.clone());
        }
    }
    let onto = b.build().unwrap();
    let core_ids: Vec<_> = ids[..4].to_vec();
    let ds = ProbeDataset::new(vec![
        instance("ok", &ids[0], &[ids[1].clone()], "Hypernym"),
        instance("outside", &ids[0], &[ids[4].clone()], "Hypernym"),
    ])
    .unwrap();
    let model = planted_model(&core_ids, BTreeMap::new(), None);
    let report = evaluate(&model, &ds, &onto, &EvalConfig::new(Subset::Core, Repr::Synset, GlossMode::default())).unwrap();
    assert_eq!(report.errors, vec!["outside"]);
    assert_eq!(report.all().instances, 1);
}

#[test]
fn ablation_grid_invariance_and_gloss_sensitivity() {
    let ids: Vec<_> = (0..40).map(cand).collect();
    let onto = flat_ontology(40);
    let insts: Vec<_> = (0..10)
        .map(|i| instance(&format!("a{i}"), &cand(i), &[cand(20 + i)], "Hypernym"))
        .collect();
    let ds = ProbeDataset::new(insts.clone()).unwrap();

    let constant: Vec<f64> = (0..40).map(|i| (i % 7) as f64 * 0.3).collect();
    let flat = planted_model(&ids, BTreeMap::new(), Some(Arc::new(move |_: &str| Some(constant.clone()))));
    let grid = ablation_grid(&flat, &flat, &ds, &onto, None).unwrap();
    assert_eq!(grid.cells.len(), 12);
    assert!(grid.cells.iter().all(|c| c.2 == grid.cells[0].2));

    // gold at rank 1 when the gloss is prepended, rank 4 otherwise
    let mut planted = BTreeMap::new();
    for inst in &insts {
        let gold = inst.gold_tails.first().unwrap().clone();
        for repr in Repr::ALL {
            for gloss in GlossMode::ALL {
                let rank = if gloss.pre { 1 } else { 4 };
                planted.insert(
                    render_query(inst, repr, gloss).unwrap(),
                    logits_with_ranks(&ids, &inst.head, &[(gold.clone(), rank)], 3),
                );
            }
        }
    }
    let sensitive = planted_model(&ids, planted, None);
    let grid = ablation_grid(&sensitive, &sensitive, &ds, &onto, Some(2)).unwrap();
    for repr in Repr::ALL {
        for gloss in GlossMode::ALL {
            let expected = if gloss.pre { 1.0 } else { 0.25 };
            assert_eq!(grid.mrr(repr, gloss), Some(expected));
        }
    }
    assert!(grid.render_table().contains("avg+pre"));
}
