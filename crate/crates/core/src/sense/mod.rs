//! Sense embeddings in the pooled hidden-state space: layer pooling,
//! annotation centroids, gloss embeddings and their combination.

mod annotations;

use std::collections::{BTreeMap, BTreeSet};
use std::ops::Range;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::embedding::{EmbeddingTable, KeyOrder};
use crate::error::{Error, Result};
use crate::lm::{MaskedLm, ModelInput, Token};
use crate::ontology::{render_lemma, Ontology, Synset, SynsetId};

pub use annotations::{load_annotations, AnnotatedOccurrence};

/// Space name given to tables built here.
pub const POOLED_SPACE: &str = "pooled";

/// Non-negative per-layer weights over the embedding layer and L transformer
/// layers, normalized to sum to 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerWeightProfile {
    weights: Vec<f64>,
}

impl LayerWeightProfile {
    pub fn new(weights: Vec<f64>) -> Result<LayerWeightProfile> {
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::Invalid("layer weights must be finite and non-negative".into()));
        }
        let total: f64 = weights.iter().sum();
        if total <= 0.0 {
            return Err(Error::Invalid("at least one layer weight must be positive".into()));
        }
        Ok(LayerWeightProfile {
            weights: weights.into_iter().map(|w| w / total).collect(),
        })
    }

    pub fn uniform(layers: usize) -> Result<LayerWeightProfile> {
        LayerWeightProfile::new(vec![1.0; layers])
    }

    pub fn one_hot(layers: usize, k: usize) -> Result<LayerWeightProfile> {
        if k >= layers {
            return Err(Error::Invalid(format!("layer {k} out of range for {layers} layers")));
        }
        let mut w = vec![0.0; layers];
        w[k] = 1.0;
        LayerWeightProfile::new(w)
    }

    /// Whitespace-separated floats, one per layer (L+1 of them).
    pub fn load(path: &Path) -> Result<LayerWeightProfile> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let name = path.display().to_string();
        let mut weights = Vec::new();
        for (n, line) in text.lines().enumerate() {
            for tok in line.split(|c: char| c.is_whitespace() || c == ',').filter(|t| !t.is_empty()) {
                let w = tok
                    .parse::<f64>()
                    .map_err(|_| Error::parse(&name, n + 1, format!("not a number: `{tok}`")))?;
                weights.push(w);
            }
        }
        LayerWeightProfile::new(weights).map_err(|e| Error::parse(&name, 0, e.to_string()))
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }
}

/// `Σ_l w_l · mean_{t ∈ positions} hidden[l][t]`.
pub fn pool_positions(
    hidden: &crate::lm::HiddenStates,
    profile: &LayerWeightProfile,
    positions: &[usize],
) -> Result<Vec<f64>> {
    if profile.len() != hidden.layers() {
        return Err(Error::DimensionMismatch {
            expected: hidden.layers(),
            found: profile.len(),
        });
    }
    if positions.is_empty() {
        return Err(Error::Invalid("cannot pool an empty span".into()));
    }
    if let Some(&p) = positions.iter().find(|&&p| p >= hidden.tokens()) {
        return Err(Error::Invalid(format!("position {p} outside {} tokens", hidden.tokens())));
    }
    let d = hidden.dim();
    let n = positions.len() as f64;
    let mut out = vec![0.0; d];
    let mut layer_mean = vec![0.0; d];
    for (l, &w) in profile.weights().iter().enumerate() {
        layer_mean.iter_mut().for_each(|x| *x = 0.0);
        for &t in positions {
            for (m, x) in layer_mean.iter_mut().zip(hidden.at(l, t)) {
                *m += x;
            }
        }
        for (o, m) in out.iter_mut().zip(&layer_mean) {
            *o += w * (m / n);
        }
    }
    if out.iter().any(|x| !x.is_finite()) {
        return Err(Error::Invalid("non-finite hidden state in pooled span".into()));
    }
    Ok(out)
}

pub fn pool_hidden_states(
    hidden: &crate::lm::HiddenStates,
    profile: &LayerWeightProfile,
    span: Range<usize>,
) -> Result<Vec<f64>> {
    if span.start >= span.end || span.end > hidden.tokens() {
        return Err(Error::Invalid(format!(
            "span [{}, {}) outside {} tokens",
            span.start,
            span.end,
            hidden.tokens()
        )));
    }
    pool_positions(hidden, profile, &span.collect::<Vec<_>>())
}

/// How the sub-word positions of a multi-token span are reduced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpanPooling {
    #[default]
    Mean,
    First,
}

/// Runs the backend on plain text and checks that tokens and states agree.
pub(crate) fn encode(backend: &dyn MaskedLm, text: &str) -> Result<(Vec<Token>, crate::lm::HiddenStates)> {
    let tokens = backend.tokenize(text)?;
    let hidden = backend.hidden_states(&ModelInput::plain(text))?;
    if tokens.len() != hidden.tokens() {
        return Err(Error::Invalid(format!(
            "backend returned {} states for {} tokens of `{text}`",
            hidden.tokens(),
            tokens.len()
        )));
    }
    Ok((tokens, hidden))
}

/// Pooled vector of one annotated occurrence.
pub fn occurrence_vector(
    backend: &dyn MaskedLm,
    profile: &LayerWeightProfile,
    occ: &AnnotatedOccurrence,
    span_pooling: SpanPooling,
) -> Result<Vec<f64>> {
    let text = occ.text();
    let (tokens, hidden) = encode(backend, &text)?;
    let bytes = occ.span_bytes();
    let mut positions: Vec<usize> = tokens
        .iter()
        .enumerate()
        .filter(|(_, t)| !t.special && t.start < bytes.end && t.end > bytes.start)
        .map(|(i, _)| i)
        .collect();
    if positions.is_empty() {
        return Err(Error::Invalid(format!("occurrence `{}` covers no tokens", occ.id)));
    }
    if span_pooling == SpanPooling::First {
        positions.truncate(1);
    }
    pool_positions(&hidden, profile, &positions)
}

/// Mean pooled vector over occurrences of one synset, summed in id order.
pub fn build_annotation_centroid(
    occs: &[AnnotatedOccurrence],
    backend: &dyn MaskedLm,
    profile: &LayerWeightProfile,
    span_pooling: SpanPooling,
) -> Result<Vec<f64>> {
    let first = occs
        .first()
        .ok_or_else(|| Error::Invalid("no occurrences to average".into()))?;
    if let Some(other) = occs.iter().find(|o| o.synset != first.synset) {
        return Err(Error::Invalid(format!(
            "occurrences mix synsets {} and {}",
            first.synset, other.synset
        )));
    }
    let mut ordered: Vec<&AnnotatedOccurrence> = occs.iter().collect();
    ordered.sort_by(|a, b| a.id.cmp(&b.id));
    let vectors = ordered
        .iter()
        .map(|o| occurrence_vector(backend, profile, o, span_pooling))
        .collect::<Result<Vec<_>>>()?;
    Ok(mean(&vectors))
}

fn mean(vectors: &[Vec<f64>]) -> Vec<f64> {
    let mut out = vec![0.0; vectors[0].len()];
    for v in vectors {
        for (o, x) in out.iter_mut().zip(v) {
            *o += x;
        }
    }
    let n = vectors.len() as f64;
    out.iter_mut().for_each(|o| *o /= n);
    out
}

/// `lemma1 , lemma2 - definition`
pub fn gloss_sentence(synset: &Synset) -> String {
    let lemmas: Vec<String> = synset.lemmas.iter().map(|l| render_lemma(l)).collect();
    format!("{} - {}", lemmas.join(" , "), synset.definition())
}

/// Pooled centroid over every non-special position of the gloss sentence.
pub fn build_gloss_embedding(synset: &Synset, backend: &dyn MaskedLm, profile: &LayerWeightProfile) -> Result<Vec<f64>> {
    let text = gloss_sentence(synset);
    let (tokens, hidden) = encode(backend, &text)?;
    let positions: Vec<usize> = tokens
        .iter()
        .enumerate()
        .filter(|(_, t)| !t.special)
        .map(|(i, _)| i)
        .collect();
    if positions.is_empty() {
        return Err(Error::Query(format!("gloss of {} has no content tokens", synset.id)));
    }
    pool_positions(&hidden, profile, &positions)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Combine {
    AnnotOnly,
    GlossOnly,
    Average,
}

impl Combine {
    pub fn parse(s: &str) -> Option<Combine> {
        match s {
            "annot_only" | "annot-only" => Some(Combine::AnnotOnly),
            "gloss_only" | "gloss-only" => Some(Combine::GlossOnly),
            "average" => Some(Combine::Average),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SenseTableOptions {
    pub combine: Combine,
    /// Weight of the annotation centroid under `Average`; the gloss gets the rest.
    pub annotation_weight: f64,
    pub span_pooling: SpanPooling,
    /// Restrict output to these synsets; `None` means every synset for the
    /// gloss-based modes and every annotated synset for `AnnotOnly`.
    pub targets: Option<Vec<SynsetId>>,
}

impl Default for SenseTableOptions {
    fn default() -> Self {
        SenseTableOptions {
            combine: Combine::Average,
            annotation_weight: 0.5,
            span_pooling: SpanPooling::Mean,
            targets: None,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SenseTableReport {
    pub annotated: usize,
    /// Synsets that fell back to the gloss embedding alone under `Average`.
    pub gloss_only: Vec<SynsetId>,
    /// Synsets with neither usable annotations nor a usable gloss.
    pub skipped: Vec<SynsetId>,
    /// Annotated synsets unknown to the ontology (occurrences ignored).
    pub unknown_annotated: Vec<SynsetId>,
}

enum Built {
    Vector(Vec<f64>, bool),
    Skipped,
}

/// One vector per covered synset keyed `<WN:id>`, sorted by key.
pub fn build_sense_table(
    onto: &Ontology,
    annotations: &[AnnotatedOccurrence],
    backend: &dyn MaskedLm,
    profile: &LayerWeightProfile,
    opts: &SenseTableOptions,
) -> Result<(EmbeddingTable, SenseTableReport)> {
    if !(0.0..=1.0).contains(&opts.annotation_weight) {
        return Err(Error::Invalid("annotation weight must lie in [0, 1]".into()));
    }
    let mut by_synset: BTreeMap<&SynsetId, Vec<AnnotatedOccurrence>> = BTreeMap::new();
    let mut unknown = BTreeSet::new();
    for occ in annotations {
        if onto.contains(&occ.synset) {
            by_synset.entry(&occ.synset).or_default().push(occ.clone());
        } else {
            unknown.insert(occ.synset.clone());
        }
    }
    let mut report = SenseTableReport {
        unknown_annotated: unknown.into_iter().collect(),
        ..Default::default()
    };
    let targets: Vec<SynsetId> = match (&opts.targets, opts.combine) {
        (Some(t), _) => {
            let mut t = t.clone();
            t.sort();
            t.dedup();
            for id in &t {
                onto.get(id)?;
            }
            t
        }
        (None, Combine::AnnotOnly) => by_synset.keys().map(|k| (*k).clone()).collect(),
        (None, _) => onto.full_set(),
    };
    let built: Vec<Result<Built>> = targets
        .par_iter()
        .map(|id| {
            let synset = onto.get(id)?;
            let annot = match (opts.combine, by_synset.get(id)) {
                (Combine::GlossOnly, _) | (_, None) => None,
                (_, Some(occs)) => Some(build_annotation_centroid(occs, backend, profile, opts.span_pooling)?),
            };
            if opts.combine == Combine::AnnotOnly {
                return Ok(annot.map_or(Built::Skipped, |v| Built::Vector(v, false)));
            }
            let gloss = match build_gloss_embedding(synset, backend, profile) {
                Ok(v) => Some(v),
                Err(Error::Query(_)) => None,
                Err(e) => return Err(e),
            };
            Ok(match (opts.combine, annot, gloss) {
                (Combine::Average, Some(a), Some(g)) => Built::Vector(blend(&a, &g, opts.annotation_weight), false),
                (Combine::Average, Some(a), None) => Built::Vector(a, false),
                (Combine::Average, None, Some(g)) => Built::Vector(g, true),
                (Combine::GlossOnly, _, Some(g)) => Built::Vector(g, false),
                _ => Built::Skipped,
            })
        })
        .collect();
    let mut table = EmbeddingTable::new(POOLED_SPACE, backend.hidden_dim(), KeyOrder::Sorted)?;
    for (id, b) in targets.iter().zip(built) {
        match b? {
            Built::Vector(v, fallback) => {
                if by_synset.contains_key(id) && opts.combine != Combine::GlossOnly {
                    report.annotated += 1;
                }
                if fallback {
                    report.gloss_only.push(id.clone());
                }
                table.push(id.to_token(), v)?;
            }
            Built::Skipped => {
                if opts.combine != Combine::AnnotOnly || opts.targets.is_some() {
                    report.skipped.push(id.clone());
                }
            }
        }
    }
    if !report.skipped.is_empty() {
        log::warn!("{} synsets skipped: no usable annotations or gloss", report.skipped.len());
    }
    if !report.unknown_annotated.is_empty() {
        log::warn!("{} annotated synsets are not in the ontology", report.unknown_annotated.len());
    }
    Ok((table, report))
}

fn blend(a: &[f64], g: &[f64], w: f64) -> Vec<f64> {
    if w == 0.5 {
        a.iter().zip(g).map(|(x, y)| (x + y) / 2.0).collect()
    } else {
        a.iter().zip(g).map(|(x, y)| w * x + (1.0 - w) * y).collect()
    }
}

/// Every text a backend must encode to build a sense table: annotation
/// sentences and gloss sentences, deduplicated and sorted.
pub fn required_texts(onto: &Ontology, annotations: &[AnnotatedOccurrence], opts: &SenseTableOptions) -> Vec<String> {
    let mut texts: Vec<String> = Vec::new();
    if opts.combine != Combine::GlossOnly {
        texts.extend(annotations.iter().map(AnnotatedOccurrence::text));
    }
    if opts.combine != Combine::AnnotOnly {
        let ids = opts.targets.clone().unwrap_or_else(|| onto.full_set());
        texts.extend(ids.iter().filter_map(|id| onto.synset(id)).map(gloss_sentence));
    }
    texts.sort();
    texts.dedup();
    texts
}
