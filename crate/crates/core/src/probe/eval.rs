use std::cmp::Ordering;
use std::collections::HashMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::metrics::{compute_report, InstanceOutcome, MetricsReport};
use super::query::{render_query, GlossMode, Repr};
use super::{ProbeDataset, ProbeInstance, Subset};
use crate::embedding::{cosine, EmbeddingTable};
use crate::error::{Error, Result};
use crate::lm::{with_pool, EnrichedModel};
use crate::ontology::Ontology;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalConfig {
    pub subset: Subset,
    pub repr: Repr,
    pub gloss: GlossMode,
    pub ks: Vec<usize>,
    /// Worker cap; `None` uses every core the backend allows.
    pub jobs: Option<usize>,
}

impl EvalConfig {
    pub fn new(subset: Subset, repr: Repr, gloss: GlossMode) -> EvalConfig {
        EvalConfig {
            subset,
            repr,
            gloss,
            ks: subset.default_ks(),
            jobs: None,
        }
    }
}

fn outcome(inst: &ProbeInstance, best_rank: Option<usize>) -> InstanceOutcome {
    InstanceOutcome {
        id: inst.id.clone(),
        source: inst.source,
        relation: inst.relation.clone(),
        best_rank,
    }
}

/// Per-instance best-gold ranks under the model's filtered distribution.
pub fn instance_outcomes(
    model: &EnrichedModel,
    ds: &ProbeDataset,
    onto: &Ontology,
    cfg: &EvalConfig,
) -> Result<Vec<InstanceOutcome>> {
    let ids = cfg.subset.candidates(onto);
    let candidates = model.candidates(ids.iter())?;
    let instances: Vec<&ProbeInstance> = ds.subset(cfg.subset).collect();
    with_pool(model.backend().concurrency_limit(), cfg.jobs, || {
        instances
            .par_iter()
            .map(|inst| {
                let query = render_query(inst, cfg.repr, cfg.gloss)?;
                let dist = model.distribution(&query, &candidates, Some(&inst.head))?;
                Ok(outcome(inst, dist.best_rank(inst.gold_tails.iter())))
            })
            .collect::<Result<Vec<_>>>()
    })?
}

pub fn evaluate(model: &EnrichedModel, ds: &ProbeDataset, onto: &Ontology, cfg: &EvalConfig) -> Result<MetricsReport> {
    compute_report(&instance_outcomes(model, ds, onto, cfg)?, &cfg.ks)
}

/// Relation-agnostic baseline: candidates ranked by cosine similarity to the
/// head's vector, head excluded. Ties break on the table key, as in
/// [`rank_neighbors`](crate::embedding::rank_neighbors).
pub fn knn_evaluate(
    table: &EmbeddingTable,
    ds: &ProbeDataset,
    onto: &Ontology,
    subset: Subset,
    ks: &[usize],
) -> Result<MetricsReport> {
    let keys: Vec<String> = subset.candidates(onto).iter().map(|s| s.to_token()).collect();
    let instances: Vec<&ProbeInstance> = ds.subset(subset).collect();
    let mut missing: Vec<String> = keys
        .iter()
        .map(String::as_str)
        .chain(instances.iter().map(|i| i.head.to_token()).collect::<Vec<_>>().iter().map(String::as_str))
        .filter(|k| !table.contains(k))
        .map(str::to_string)
        .collect();
    missing.sort();
    missing.dedup();
    if !missing.is_empty() {
        return Err(Error::MissingKeys(missing));
    }
    let rows: Vec<&[f64]> = keys.iter().map(|k| table.get(k).expect("checked")).collect();
    let index: HashMap<&str, usize> = keys.iter().enumerate().map(|(i, k)| (k.as_str(), i)).collect();
    let outcomes: Vec<InstanceOutcome> = instances
        .par_iter()
        .map(|inst| {
            let head_key = inst.head.to_token();
            let query = table.get(&head_key).expect("checked");
            let scores: Vec<f64> = rows.iter().map(|r| cosine(query, r)).collect();
            let order = |a: usize, b: usize| -> Ordering { scores[b].total_cmp(&scores[a]).then_with(|| keys[a].cmp(&keys[b])) };
            let best = inst
                .gold_tails
                .iter()
                .filter_map(|g| index.get(g.to_token().as_str()).copied())
                .filter(|&i| keys[i] != head_key)
                .min_by(|&a, &b| order(a, b));
            let rank = best.map(|g| {
                1 + (0..keys.len())
                    .filter(|&c| keys[c] != head_key && order(c, g) == Ordering::Less)
                    .count()
            });
            outcome(inst, rank)
        })
        .collect();
    compute_report(&outcomes, ks)
}

/// Core MRR for every head representation and gloss mode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationGrid {
    pub cells: Vec<(Repr, GlossMode, f64)>,
}

impl AblationGrid {
    pub fn mrr(&self, repr: Repr, gloss: GlossMode) -> Option<f64> {
        self.cells.iter().find(|(r, g, _)| *r == repr && *g == gloss).map(|c| c.2)
    }

    pub fn render_table(&self) -> String {
        let mut out = format!("{:<8}", "");
        for g in GlossMode::ALL {
            out.push_str(&format!("{:>9}", g.label()));
        }
        out.push('\n');
        for r in Repr::ALL {
            out.push_str(&format!("{:<8}", r.as_str()));
            for g in GlossMode::ALL {
                let cell = self.mrr(r, g).map(|v| format!("{:.2}", v * 100.0)).unwrap_or_else(|| "-".into());
                out.push_str(&format!("{cell:>9}"));
            }
            out.push('\n');
        }
        out
    }
}

/// `annotation` holds annotation-only sense vectors, `averaged` the
/// gloss-averaged ones; `avg` cells use the latter.
pub fn ablation_grid(
    annotation: &EnrichedModel,
    averaged: &EnrichedModel,
    ds: &ProbeDataset,
    onto: &Ontology,
    jobs: Option<usize>,
) -> Result<AblationGrid> {
    let mut cells = Vec::with_capacity(12);
    for repr in Repr::ALL {
        for gloss in GlossMode::ALL {
            let model = if gloss.avg { averaged } else { annotation };
            let mut cfg = EvalConfig::new(Subset::Core, repr, gloss);
            cfg.jobs = jobs;
            let report = evaluate(model, ds, onto, &cfg)?;
            cells.push((repr, gloss, report.all().mrr));
        }
    }
    Ok(AblationGrid { cells })
}

/// k-NN results before and after mapping a table into another space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Degradation {
    pub original: MetricsReport,
    pub mapped: MetricsReport,
}

pub const DEGRADATION_KS: [usize; 2] = [1, 10];

impl Degradation {
    /// (name, original, mapped, relative change in percent) for P@1, P@10, MRR.
    pub fn summary(&self) -> Vec<(&'static str, f64, f64, f64)> {
        let (o, m) = (self.original.all(), self.mapped.all());
        let rel = |a: f64, b: f64| if a == 0.0 { 0.0 } else { (b - a) / a * 100.0 };
        [("P@1", o.precision[0], m.precision[0]), ("P@10", o.precision[1], m.precision[1]), ("MRR", o.mrr, m.mrr)]
            .into_iter()
            .map(|(n, a, b)| (n, a, b, rel(a, b)))
            .collect()
    }

    pub fn render_table(&self) -> String {
        let mut out = format!("{:<10}{:>10}{:>10}{:>10}\n", "", "original", "mapped", "delta");
        for (name, a, b, d) in self.summary() {
            out.push_str(&format!("{name:<10}{:>10.2}{:>10.2}{:>9.1}%\n", a * 100.0, b * 100.0, d));
        }
        out
    }
}

pub fn degradation_report(
    original: &EmbeddingTable,
    mapped: &EmbeddingTable,
    ds: &ProbeDataset,
    onto: &Ontology,
    subset: Subset,
) -> Result<Degradation> {
    Ok(Degradation {
        original: knn_evaluate(original, ds, onto, subset, &DEGRADATION_KS)?,
        mapped: knn_evaluate(mapped, ds, onto, subset, &DEGRADATION_KS)?,
    })
}
