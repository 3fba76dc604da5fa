use std::fmt;
use std::path::{Path, PathBuf};

use clap::Args;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use senselab_core::probe::{GlossMode, Repr, Subset};

/// A setting that failed validation; the message names the offending key.
#[derive(Debug)]
pub struct Invalid {
    pub key: String,
    pub message: String,
}

impl fmt::Display for Invalid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "invalid setting `{}`: {}", self.key, self.message)
    }
}

impl std::error::Error for Invalid {}

pub fn invalid(key: &str, message: impl Into<String>) -> anyhow::Error {
    Invalid {
        key: key.to_string(),
        message: message.into(),
    }
    .into()
}

/// Every run setting. Each one can come from the built-in defaults, the
/// `--config` TOML file or a flag, in increasing order of precedence.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize, Args)]
#[serde(deny_unknown_fields)]
pub struct Settings {
    /// WordNet 3.0 database directory
    #[arg(long, global = true)]
    pub wordnet: Option<PathBuf>,
    /// Core synset list (one sense key or synset id per line)
    #[arg(long, global = true)]
    pub core_list: Option<PathBuf>,
    /// WikiData triples (TSV: head, relation, tail)
    #[arg(long, global = true)]
    pub wikidata: Option<PathBuf>,
    /// ConceptNet aligned sentences (JSONL)
    #[arg(long, global = true)]
    pub conceptnet: Option<PathBuf>,
    /// Lemma frequencies (TSV) used to pick surface forms
    #[arg(long, global = true)]
    pub frequencies: Option<PathBuf>,
    /// Instances kept per WordNet relation; 0 keeps all
    #[arg(long, global = true)]
    pub wordnet_cap: Option<usize>,
    #[arg(long, global = true)]
    pub min_core_instances: Option<usize>,

    /// Sense-annotated corpus (JSONL)
    #[arg(long, global = true)]
    pub annotations: Option<PathBuf>,
    /// Layer weights, L+1 floats
    #[arg(long, global = true)]
    pub profile: Option<PathBuf>,
    /// annot_only, gloss_only or average
    #[arg(long, global = true)]
    pub combine: Option<String>,
    #[arg(long, global = true)]
    pub annotation_weight: Option<f64>,

    /// Anchor corpus, one sentence per line
    #[arg(long, global = true)]
    pub corpus: Option<PathBuf>,
    /// Token counts (TSV) for anchor selection
    #[arg(long, global = true)]
    pub counts: Option<PathBuf>,
    #[arg(long, global = true)]
    pub min_count: Option<u64>,
    /// Anchor file; selected from --corpus when absent
    #[arg(long, global = true)]
    pub anchors: Option<PathBuf>,
    /// Ridge penalty for the least-squares map
    #[arg(long, global = true)]
    pub ridge: Option<f64>,
    /// Fit an intercept as well
    #[arg(long, global = true)]
    pub bias: Option<bool>,
    /// auto, normal or qr
    #[arg(long, global = true)]
    pub solver: Option<String>,

    /// Sense table to inject or rank
    #[arg(long, global = true)]
    pub senses: Option<PathBuf>,
    /// Gloss-averaged sense table for the avg ablation cells
    #[arg(long, global = true)]
    pub senses_avg: Option<PathBuf>,
    /// Linear map applied to sense tables before use
    #[arg(long, global = true)]
    pub map: Option<PathBuf>,
    /// Table before mapping (degradation)
    #[arg(long, global = true)]
    pub original: Option<PathBuf>,
    /// Table after mapping (degradation, or fit-map output)
    #[arg(long, global = true)]
    pub mapped: Option<PathBuf>,

    /// Probe dataset (JSONL)
    #[arg(long, global = true)]
    pub probe: Option<PathBuf>,
    /// synthetic:<spec.json> or file:<export dir>
    #[arg(long, global = true)]
    pub backend: Option<String>,
    /// transformed or raw
    #[arg(long, global = true)]
    pub mask_path: Option<String>,
    /// lemma, synset or slash
    #[arg(long, global = true)]
    pub repr: Option<String>,
    /// none, avg, pre or avg,pre
    #[arg(long, global = true)]
    pub gloss: Option<String>,
    /// core or full
    #[arg(long, global = true)]
    pub subset: Option<String>,
    #[arg(long, global = true, value_delimiter = ',')]
    pub ks: Option<Vec<usize>>,

    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Extraction threshold; overrides --calibration
    #[arg(long, global = true)]
    pub threshold: Option<f64>,
    /// Output of `calibrate`
    #[arg(long, global = true)]
    pub calibration: Option<PathBuf>,

    /// Worker threads; defaults to all cores
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    /// Output file; standard output when absent (where allowed)
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
}

impl Settings {
    pub fn defaults() -> Settings {
        Settings {
            wordnet_cap: Some(10_000),
            min_core_instances: Some(senselab_core::probe::MIN_CORE_INSTANCES),
            combine: Some("average".into()),
            annotation_weight: Some(0.5),
            min_count: Some(100),
            ridge: Some(0.0),
            bias: Some(false),
            solver: Some("auto".into()),
            mask_path: Some("transformed".into()),
            repr: Some("synset".into()),
            gloss: Some("none".into()),
            subset: Some("core".into()),
            seed: Some(0),
            ..Settings::default()
        }
    }

    pub fn from_toml(path: &Path) -> anyhow::Result<Settings> {
        let text = std::fs::read_to_string(path).map_err(|e| invalid("config", format!("{}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| invalid("config", format!("{}: {}", path.display(), e.message())))
    }

    /// Fields set in `over` replace those in `self`.
    pub fn overlay(self, over: &Settings) -> Settings {
        let mut base = to_map(&self);
        for (k, v) in to_map(over) {
            if !v.is_null() {
                base.insert(k, v);
            }
        }
        serde_json::from_value(Value::Object(base)).expect("settings round-trip through JSON")
    }

    pub fn require<'a, T>(&'a self, key: &str, v: &'a Option<T>) -> anyhow::Result<&'a T> {
        v.as_ref().ok_or_else(|| invalid(key, "required by this command"))
    }

    /// A required path that must exist.
    pub fn path(&self, key: &str, v: &Option<PathBuf>) -> anyhow::Result<PathBuf> {
        let p = self.require(key, v)?;
        check_exists(key, p)?;
        Ok(p.clone())
    }

    /// An optional path that, when given, must exist.
    pub fn opt_path(&self, key: &str, v: &Option<PathBuf>) -> anyhow::Result<Option<PathBuf>> {
        match v {
            Some(p) => check_exists(key, p).map(|_| Some(p.clone())),
            None => Ok(None),
        }
    }

    pub fn out(&self) -> anyhow::Result<PathBuf> {
        self.require("out", &self.out).cloned()
    }

    pub fn repr(&self) -> anyhow::Result<Repr> {
        let s = self.require("repr", &self.repr)?;
        Repr::parse(s).ok_or_else(|| invalid("repr", format!("`{s}` is not one of lemma, synset, slash")))
    }

    pub fn gloss(&self) -> anyhow::Result<GlossMode> {
        let s = self.require("gloss", &self.gloss)?;
        GlossMode::parse(s).ok_or_else(|| invalid("gloss", format!("`{s}` is not one of none, avg, pre, avg,pre")))
    }

    pub fn subset(&self) -> anyhow::Result<Subset> {
        let s = self.require("subset", &self.subset)?;
        Subset::parse(s).ok_or_else(|| invalid("subset", format!("`{s}` is not one of core, full")))
    }

    pub fn ks(&self, subset: Subset) -> anyhow::Result<Vec<usize>> {
        match &self.ks {
            Some(ks) if ks.is_empty() || ks.contains(&0) => Err(invalid("ks", "cutoffs must be positive")),
            Some(ks) => Ok(ks.clone()),
            None => Ok(subset.default_ks()),
        }
    }

    /// Checks every input path that is set, so that a bad path fails before
    /// any work starts. `mapped` is an output for `fit-map`.
    pub fn check_inputs(&self, mapped_is_output: bool) -> anyhow::Result<()> {
        let paths = [
            ("wordnet", &self.wordnet),
            ("core_list", &self.core_list),
            ("wikidata", &self.wikidata),
            ("conceptnet", &self.conceptnet),
            ("frequencies", &self.frequencies),
            ("annotations", &self.annotations),
            ("profile", &self.profile),
            ("corpus", &self.corpus),
            ("counts", &self.counts),
            ("anchors", &self.anchors),
            ("senses", &self.senses),
            ("senses_avg", &self.senses_avg),
            ("map", &self.map),
            ("original", &self.original),
            ("probe", &self.probe),
            ("calibration", &self.calibration),
        ];
        for (key, p) in paths {
            self.opt_path(key, p)?;
        }
        if !mapped_is_output {
            self.opt_path("mapped", &self.mapped)?;
        }
        Ok(())
    }

    pub fn jobs(&self) -> anyhow::Result<Option<usize>> {
        match self.jobs {
            Some(0) => Err(invalid("jobs", "must be at least 1")),
            j => Ok(j),
        }
    }
}

fn check_exists(key: &str, p: &Path) -> anyhow::Result<()> {
    if p.exists() {
        Ok(())
    } else {
        Err(invalid(key, format!("{} does not exist", p.display())))
    }
}

fn to_map(s: &Settings) -> Map<String, Value> {
    match serde_json::to_value(s).expect("settings serialize") {
        Value::Object(m) => m,
        _ => unreachable!("settings serialize to an object"),
    }
}
