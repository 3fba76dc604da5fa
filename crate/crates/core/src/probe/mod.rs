//! Masked-assertion probe over grounded relations: dataset construction,
//! query rendering and ranking evaluation.

mod build;
mod eval;
mod metrics;
mod query;
pub mod templates;

use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lm::count_masks;
use crate::ontology::{Ontology, SynsetId};
use crate::triple::Source;

pub use build::{
    build_probe, build_probe_from_records, load_conceptnet, load_wikidata, BuildReport, ConceptNetRecord, ProbeConfig,
    WikiDataRecord, MIN_CORE_INSTANCES,
};
pub use eval::{
    ablation_grid, degradation_report, evaluate, instance_outcomes, knn_evaluate, AblationGrid, Degradation, EvalConfig,
    DEGRADATION_KS,
};
pub use metrics::{compute_report, InstanceOutcome, MetricsReport, MetricsRow};
pub use query::{render_query, GlossMode, Repr};
pub use templates::{learn_determiners, AlignedSentence, HEAD_SLOT};

/// Candidate subset an evaluation ranks over.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Subset {
    Core,
    Full,
}

impl Subset {
    pub fn parse(s: &str) -> Option<Subset> {
        match s.to_ascii_lowercase().as_str() {
            "core" => Some(Subset::Core),
            "full" => Some(Subset::Full),
            _ => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Subset::Core => "core",
            Subset::Full => "full",
        }
    }

    pub fn default_ks(self) -> Vec<usize> {
        match self {
            Subset::Core => vec![1, 3, 10, 100],
            Subset::Full => vec![1, 3, 10, 100, 1000],
        }
    }

    pub fn candidates(self, onto: &Ontology) -> Vec<SynsetId> {
        match self {
            Subset::Core => onto.core_set(),
            Subset::Full => onto.full_set(),
        }
    }
}

/// One masked assertion with its gold answers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeInstance {
    pub id: String,
    pub source: Source,
    pub relation: String,
    /// Contains one [`HEAD_SLOT`] and one `[MASK]`.
    pub assertion: String,
    pub head: SynsetId,
    pub head_lemma: String,
    pub gloss: String,
    pub gold_tails: BTreeSet<SynsetId>,
    pub in_core: bool,
}

impl ProbeInstance {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Invalid(format!("probe instance {}: {m}", self.id)));
        if self.gold_tails.is_empty() {
            return bad("no gold tails");
        }
        if self.gold_tails.contains(&self.head) {
            return bad("gold tails contain the head");
        }
        if self.assertion.matches(HEAD_SLOT).count() != 1 {
            return bad("assertion needs exactly one head slot");
        }
        if count_masks(&self.assertion) != 1 {
            return bad("assertion needs exactly one [MASK]");
        }
        Ok(())
    }

    fn in_subset(&self, subset: Subset) -> bool {
        subset == Subset::Full || self.in_core
    }
}

/// Instance counts for one source or relation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CountRow {
    pub source: Option<Source>,
    pub relation: Option<String>,
    pub core: usize,
    pub full: usize,
}

impl CountRow {
    pub fn label(&self) -> String {
        match (&self.source, &self.relation) {
            (_, Some(r)) => r.clone(),
            (Some(s), None) => s.to_string(),
            (None, None) => "All".to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ProbeDataset {
    pub instances: Vec<ProbeInstance>,
}

impl ProbeDataset {
    pub fn new(instances: Vec<ProbeInstance>) -> Result<ProbeDataset> {
        let mut ids = BTreeSet::new();
        for inst in &instances {
            inst.validate()?;
            if !ids.insert(inst.id.as_str()) {
                return Err(Error::Invalid(format!("duplicate probe instance id {}", inst.id)));
            }
        }
        Ok(ProbeDataset { instances })
    }

    pub fn len(&self) -> usize {
        self.instances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instances.is_empty()
    }

    pub fn subset(&self, subset: Subset) -> impl Iterator<Item = &ProbeInstance> + '_ {
        self.instances.iter().filter(move |i| i.in_subset(subset))
    }

    pub fn by_source(&self, source: Source) -> impl Iterator<Item = &ProbeInstance> + '_ {
        self.instances.iter().filter(move |i| i.source == source)
    }

    /// All row first, then each source followed by its relations.
    pub fn counts(&self) -> Vec<CountRow> {
        let mut rel: BTreeMap<(Source, usize, &str), (usize, usize)> = BTreeMap::new();
        for inst in &self.instances {
            let key = (inst.source, templates::relation_rank(inst.source, &inst.relation), inst.relation.as_str());
            let e = rel.entry(key).or_default();
            e.1 += 1;
            e.0 += usize::from(inst.in_core);
        }
        let total = |f: &dyn Fn(&Source) -> bool| {
            rel.iter().filter(|((s, _, _), _)| f(s)).fold((0, 0), |a, (_, c)| (a.0 + c.0, a.1 + c.1))
        };
        let (core, full) = total(&|_| true);
        let mut rows = vec![CountRow {
            source: None,
            relation: None,
            core,
            full,
        }];
        for source in Source::ALL {
            let (core, full) = total(&|s| *s == source);
            if full == 0 {
                continue;
            }
            rows.push(CountRow {
                source: Some(source),
                relation: None,
                core,
                full,
            });
            for ((_, _, r), (core, full)) in rel.iter().filter(|((s, _, _), _)| *s == source) {
                rows.push(CountRow {
                    source: Some(source),
                    relation: Some(r.to_string()),
                    core: *core,
                    full: *full,
                });
            }
        }
        rows
    }

    /// Text table of [`counts`](Self::counts); zero Core cells print as `-`.
    pub fn render_counts(&self) -> String {
        render_count_rows(&self.counts())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        for inst in &self.instances {
            serde_json::to_writer(&mut w, inst)?;
            w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
        }
        w.flush().map_err(|e| Error::io(path, e))?;
        let counts = counts_path(path);
        let json = serde_json::to_string_pretty(&self.counts())?;
        std::fs::write(&counts, json + "\n").map_err(|e| Error::io(&counts, e))
    }

    pub fn load(path: &Path) -> Result<ProbeDataset> {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let mut instances = Vec::new();
        for (n, line) in BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|e| Error::io(path, e))?;
            if line.trim().is_empty() {
                continue;
            }
            let inst: ProbeInstance =
                serde_json::from_str(&line).map_err(|e| Error::parse(path.display().to_string(), n + 1, e.to_string()))?;
            instances.push(inst);
        }
        ProbeDataset::new(instances)
    }
}

/// Aligned table of count rows; zero Core cells print as `-`.
pub fn render_count_rows(rows: &[CountRow]) -> String {
    let width = rows.iter().map(|r| r.label().len() + 2).max().unwrap_or(10);
    let mut out = format!("{:<width$}{:>8}{:>8}\n", "", "Core", "Full");
    for r in rows {
        let indent = if r.relation.is_some() { "  " } else { "" };
        let core = if r.core == 0 { "-".to_string() } else { r.core.to_string() };
        out.push_str(&format!("{:<width$}{core:>8}{:>8}\n", format!("{indent}{}", r.label()), r.full));
    }
    out
}

/// Sidecar file holding the counts manifest of a saved dataset.
pub fn counts_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".counts.json");
    PathBuf::from(s)
}

#[cfg(test)]
pub(crate) mod test_support {
    use super::*;

    pub fn sid(s: &str) -> SynsetId {
        s.parse().unwrap()
    }

    pub fn instance(id: &str, source: Source, relation: &str, head: &str, golds: &[&str], core: bool) -> ProbeInstance {
        ProbeInstance {
            id: id.to_string(),
            source,
            relation: relation.to_string(),
            assertion: "[H] is a type of [MASK] .".to_string(),
            head: sid(head),
            head_lemma: sid(head).lemma().replace('_', " "),
            gloss: format!("gloss of {head}"),
            gold_tails: golds.iter().map(|g| sid(g)).collect(),
            in_core: core,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::test_support::*;
    use super::*;

    #[test]
    fn validation_rejects_bad_instances() {
        let ok = instance("a", Source::WordNet, "Hypernym", "dog.n.01", &["canine.n.02"], true);
        assert!(ok.validate().is_ok());
        let mut self_gold = ok.clone();
        self_gold.gold_tails.insert(sid("dog.n.01"));
        assert!(self_gold.validate().is_err());
        let mut no_slot = ok.clone();
        no_slot.assertion = "dog is a [MASK]".into();
        assert!(no_slot.validate().is_err());
        assert!(ProbeDataset::new(vec![ok.clone(), ok]).is_err());
    }

    #[test]
    fn counts_and_roundtrip() {
        let ds = ProbeDataset::new(vec![
            instance("1", Source::ConceptNet, "UsedFor", "pen.n.01", &["write.v.01"], false),
            instance("2", Source::WordNet, "Holonym (Part)", "wheel.n.01", &["car.n.01"], true),
            instance("3", Source::WordNet, "Hypernym", "dog.n.01", &["canine.n.02"], true),
            instance("4", Source::WordNet, "Hypernym", "cat.n.01", &["feline.n.01"], false),
        ])
        .unwrap();
        let labels: Vec<_> = ds.counts().iter().map(|r| (r.label(), r.core, r.full)).collect();
        assert_eq!(
            labels,
            vec![
                ("All".into(), 2, 4),
                ("WordNet".into(), 2, 3),
                ("Hypernym".into(), 1, 2),
                ("Holonym (Part)".into(), 1, 1),
                ("ConceptNet".into(), 0, 1),
                ("UsedFor".into(), 0, 1),
            ]
        );
        assert!(ds.render_counts().contains("  UsedFor"));
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("probe.jsonl");
        ds.save(&path).unwrap();
        assert_eq!(ProbeDataset::load(&path).unwrap(), ds);
        assert!(counts_path(&path).exists());
    }
}
