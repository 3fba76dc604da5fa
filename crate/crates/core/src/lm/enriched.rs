use std::collections::HashMap;
use std::fmt;
use std::sync::Arc;

use super::{require_single_mask, HiddenStates, InputToken, MaskStatePath, MaskedLm, ModelInput, MASK, SEP};
use crate::embedding::{EmbeddingTable, Ranking};
use crate::error::{Error, Result};
use crate::ontology::SynsetId;

/// A backend plus an injected vocabulary of `<WN:...>` sense tokens living
/// in its input-embedding space.
#[derive(Clone)]
pub struct EnrichedModel {
    backend: Arc<dyn MaskedLm>,
    senses: EmbeddingTable,
    sense_bias: f64,
    mask_path: MaskStatePath,
}

impl fmt::Debug for EnrichedModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("EnrichedModel")
            .field("backend", &self.backend.name())
            .field("senses", &self.senses.len())
            .field("mask_path", &self.mask_path)
            .finish()
    }
}

/// Adds every row of `table` to the backend vocabulary as an atomic token.
pub fn inject_senses(backend: Arc<dyn MaskedLm>, table: EmbeddingTable) -> Result<EnrichedModel> {
    if table.dim() != backend.input_dim() {
        return Err(Error::DimensionMismatch {
            expected: backend.input_dim(),
            found: table.dim(),
        });
    }
    for key in table.keys() {
        SynsetId::from_token(key)?;
        if backend.token_id(key).is_some() {
            return Err(Error::Invalid(format!("sense token {key} collides with the base vocabulary")));
        }
    }
    Ok(EnrichedModel {
        backend,
        senses: table,
        sense_bias: 0.0,
        mask_path: MaskStatePath::default(),
    })
}

impl EnrichedModel {
    pub fn with_mask_path(mut self, path: MaskStatePath) -> Self {
        self.mask_path = path;
        self
    }

    pub fn mask_path(&self) -> MaskStatePath {
        self.mask_path
    }

    pub fn backend(&self) -> &dyn MaskedLm {
        &*self.backend
    }

    pub fn senses(&self) -> &EmbeddingTable {
        &self.senses
    }

    pub fn sense_bias(&self) -> f64 {
        self.sense_bias
    }

    pub fn vocab_size(&self) -> usize {
        self.backend.vocab().len() + self.senses.len()
    }

    pub fn input<'a>(&'a self, text: &'a str) -> ModelInput<'a> {
        ModelInput::with_senses(text, &self.senses)
    }

    pub fn tokenize<'a>(&'a self, text: &'a str) -> Result<Vec<InputToken<'a>>> {
        self.input(text).tokens(&*self.backend)
    }

    pub fn hidden_states(&self, text: &str) -> Result<HiddenStates> {
        self.backend.hidden_states(&self.input(text))
    }

    pub fn mask_state(&self, query: &str) -> Result<Vec<f64>> {
        require_single_mask(query)?;
        let v = self.backend.mask_state(&self.input(query), self.mask_path)?;
        if v.len() != self.senses.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.senses.dim(),
                found: v.len(),
            });
        }
        Ok(v)
    }

    /// Collects the injected vectors of `ids` into a scoring matrix.
    pub fn candidates<'a>(&self, ids: impl IntoIterator<Item = &'a SynsetId>) -> Result<CandidateSet> {
        CandidateSet::from_table(&self.senses, ids)
    }

    /// Filtered distribution over `candidates` minus `exclude`.
    pub fn distribution<'c>(
        &self,
        query: &str,
        candidates: &'c CandidateSet,
        exclude: Option<&SynsetId>,
    ) -> Result<Distribution<'c>> {
        let state = self.mask_state(query)?;
        let excluded = exclude.and_then(|h| candidates.position(h));
        let logits: Vec<f64> = (0..candidates.len())
            .map(|i| dot(&state, candidates.row(i)) + self.sense_bias)
            .collect();
        let mut keep = vec![true; logits.len()];
        if let Some(i) = excluded {
            keep[i] = false;
        }
        let probs = filtered_softmax(&logits, &keep)?;
        Ok(Distribution {
            candidates,
            probs,
            excluded,
        })
    }

    pub fn predict_senses(
        &self,
        query: &str,
        candidates: &CandidateSet,
        exclude: Option<&SynsetId>,
    ) -> Result<SensePrediction> {
        Ok(self.distribution(query, candidates, exclude)?.to_prediction())
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Softmax restricted to the positions with `keep[i]`; the others get 0.
/// The max is subtracted first and the normaliser is summed in index order.
pub fn filtered_softmax(logits: &[f64], keep: &[bool]) -> Result<Vec<f64>> {
    if logits.len() != keep.len() {
        return Err(Error::DimensionMismatch {
            expected: logits.len(),
            found: keep.len(),
        });
    }
    if let Some(bad) = logits.iter().zip(keep).find(|(l, k)| **k && !l.is_finite()) {
        return Err(Error::Invalid(format!("non-finite logit {}", bad.0)));
    }
    let max = logits
        .iter()
        .zip(keep)
        .filter(|(_, k)| **k)
        .map(|(l, _)| *l)
        .fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return Err(Error::Query("no candidates left after filtering".into()));
    }
    let exps: Vec<f64> = logits
        .iter()
        .zip(keep)
        .map(|(l, k)| if *k { (l - max).exp() } else { 0.0 })
        .collect();
    let total: f64 = exps.iter().sum();
    Ok(exps.into_iter().map(|e| e / total).collect())
}

/// Candidate synsets in ascending id order with their injected vectors.
#[derive(Debug, Clone)]
pub struct CandidateSet {
    ids: Vec<SynsetId>,
    index: HashMap<SynsetId, usize>,
    dim: usize,
    rows: Vec<f64>,
}

impl CandidateSet {
    pub fn from_table<'a>(table: &EmbeddingTable, ids: impl IntoIterator<Item = &'a SynsetId>) -> Result<CandidateSet> {
        let mut ids: Vec<SynsetId> = ids.into_iter().cloned().collect();
        ids.sort();
        ids.dedup();
        let mut rows = Vec::with_capacity(ids.len() * table.dim());
        let mut missing = Vec::new();
        for id in &ids {
            let token = id.to_token();
            match table.get(&token) {
                Some(v) => rows.extend_from_slice(v),
                None => missing.push(token),
            }
        }
        if !missing.is_empty() {
            return Err(Error::MissingKeys(missing));
        }
        let index = ids.iter().enumerate().map(|(i, id)| (id.clone(), i)).collect();
        Ok(CandidateSet {
            ids,
            index,
            dim: table.dim(),
            rows,
        })
    }

    pub fn ids(&self) -> &[SynsetId] {
        &self.ids
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn contains(&self, id: &SynsetId) -> bool {
        self.index.contains_key(id)
    }

    pub fn position(&self, id: &SynsetId) -> Option<usize> {
        self.index.get(id).copied()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.rows[i * self.dim..(i + 1) * self.dim]
    }
}

/// Probabilities aligned with a [`CandidateSet`]; the excluded head has none.
#[derive(Debug, Clone)]
pub struct Distribution<'c> {
    candidates: &'c CandidateSet,
    probs: Vec<f64>,
    excluded: Option<usize>,
}

impl<'c> Distribution<'c> {
    pub fn probability(&self, id: &SynsetId) -> Option<f64> {
        self.candidates
            .position(id)
            .filter(|&i| Some(i) != self.excluded)
            .map(|i| self.probs[i])
    }

    /// 1-based rank under (probability desc, id asc), without sorting.
    pub fn rank(&self, id: &SynsetId) -> Option<usize> {
        let i = self.candidates.position(id).filter(|&i| Some(i) != self.excluded)?;
        let p = self.probs[i];
        let ahead = self
            .probs
            .iter()
            .enumerate()
            .filter(|&(j, &q)| Some(j) != self.excluded && (q > p || (q == p && j < i)))
            .count();
        Some(ahead + 1)
    }

    /// Rank of the best-placed id among `ids`, if any of them is rankable.
    pub fn best_rank<'a>(&self, ids: impl IntoIterator<Item = &'a SynsetId>) -> Option<usize> {
        let best = ids
            .into_iter()
            .filter_map(|id| self.candidates.position(id))
            .filter(|&i| Some(i) != self.excluded)
            .min_by(|&a, &b| self.probs[b].total_cmp(&self.probs[a]).then(a.cmp(&b)))?;
        self.rank(&self.candidates.ids[best])
    }

    pub fn iter(&self) -> impl Iterator<Item = (&'c SynsetId, f64)> + '_ {
        self.candidates
            .ids
            .iter()
            .zip(&self.probs)
            .enumerate()
            .filter(|(i, _)| Some(*i) != self.excluded)
            .map(|(_, (id, p))| (id, *p))
    }

    pub fn len(&self) -> usize {
        self.probs.len() - usize::from(self.excluded.is_some())
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn to_prediction(&self) -> SensePrediction {
        let ranking = Ranking::from_scores(self.iter().map(|(id, p)| (id.clone(), p)).collect())
            .expect("candidate ids are unique");
        SensePrediction { ranking }
    }
}

/// Ranking over candidate senses; scores are the filtered probabilities.
#[derive(Debug, Clone, PartialEq)]
pub struct SensePrediction {
    pub ranking: Ranking<SynsetId>,
}

impl SensePrediction {
    pub fn probability(&self, id: &SynsetId) -> Option<f64> {
        self.ranking.items().iter().find(|(k, _)| k == id).map(|(_, p)| *p)
    }

    pub fn top(&self, k: usize) -> &[(SynsetId, f64)] {
        self.ranking.top(k)
    }
}

/// `<WN:s> can be defined as : {gloss} . [SEP] {assertion}`
pub fn render_with_gloss(s: &SynsetId, gloss: &str, assertion: &str) -> Result<String> {
    let gloss = gloss.trim();
    if gloss.is_empty() {
        return Err(Error::Query(format!("no gloss for {s}")));
    }
    if gloss.contains(MASK) || gloss.contains(SEP) {
        return Err(Error::Query(format!("gloss for {s} contains a reserved token")));
    }
    require_single_mask(assertion)?;
    if assertion.contains(SEP) {
        return Err(Error::Query(format!("assertion already contains {SEP}")));
    }
    Ok(format!("{} can be defined as : {gloss} . {SEP} {assertion}", s.to_token()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embedding::KeyOrder;
    use crate::lm::{EmbeddingInit, HiddenRule, InputKind, MaskFallback, SyntheticBackend, SyntheticSpec};
    use proptest::prelude::*;
    use std::collections::BTreeMap;

    fn id(s: &str) -> SynsetId {
        s.parse().unwrap()
    }

    fn backend(planted: &[(&str, Vec<f64>)]) -> Arc<dyn MaskedLm> {
        Arc::new(
            SyntheticBackend::new(SyntheticSpec {
                name: "toy".into(),
                layers: 1,
                dim: 3,
                vocab: ["a", "can", "be", "used", "for", "."].iter().map(|s| s.to_string()).collect(),
                embeddings: EmbeddingInit::Random { seed: 1 },
                hidden: HiddenRule::BagOfEmbeddings,
                planted: planted.iter().map(|(k, v)| (k.to_string(), v.clone())).collect(),
                mask_fallback: MaskFallback::Zero,
                output_bias: BTreeMap::new(),
            })
            .unwrap(),
        )
    }

    fn senses(rows: &[(&str, Vec<f64>)]) -> EmbeddingTable {
        EmbeddingTable::from_entries(
            "input",
            3,
            KeyOrder::Sorted,
            rows.iter().map(|(k, v)| (format!("<WN:{k}>"), v.clone())),
        )
        .unwrap()
    }

    #[test]
    fn sense_tokens_are_atomic() {
        let m = inject_senses(backend(&[]), senses(&[("pen.n.01", vec![1.0, 0.0, 0.0])])).unwrap();
        let toks = m.tokenize("A <WN:pen.n.01> can be used for [MASK] .").unwrap();
        let injected = toks.iter().filter(|t| matches!(t.kind, InputKind::Injected(_))).count();
        let masks = toks
            .iter()
            .filter(|t| matches!(t.kind, InputKind::Vocab(i) if m.backend().vocab()[i as usize] == MASK))
            .count();
        assert_eq!((injected, masks), (1, 1));
        assert_eq!(m.vocab_size(), m.backend().vocab().len() + 1);
        assert!(matches!(m.tokenize("<WN:ink.n.01> [MASK]"), Err(Error::Query(_))));
    }

    #[test]
    fn injection_checks() {
        assert!(matches!(
            inject_senses(backend(&[]), EmbeddingTable::new("input", 4, KeyOrder::Sorted).unwrap()),
            Err(Error::DimensionMismatch { .. })
        ));
        let bad = EmbeddingTable::from_entries("input", 3, KeyOrder::Sorted, [("pen", vec![0.0; 3])]).unwrap();
        assert!(inject_senses(backend(&[]), bad).is_err());
    }

    #[test]
    fn empty_injection_changes_nothing() {
        let b = backend(&[]);
        let m = inject_senses(b.clone(), EmbeddingTable::new("input", 3, KeyOrder::Sorted).unwrap()).unwrap();
        let text = "a pen can be used for writing";
        assert_eq!(m.hidden_states(text).unwrap(), b.hidden_states(&ModelInput::plain(text)).unwrap());
        let plain: Vec<_> = b.tokenize(text).unwrap().iter().map(|t| InputKind::Vocab(t.id)).collect();
        let enriched: Vec<_> = m.tokenize(text).unwrap().iter().map(|t| t.kind).collect();
        assert_eq!(plain, enriched);
    }

    #[test]
    fn equal_vectors_split_evenly() {
        let q = "a [MASK] .";
        let m = inject_senses(
            backend(&[(q, vec![0.3, -1.0, 2.0])]),
            senses(&[("b.n.01", vec![1.0, 1.0, 1.0]), ("a.n.01", vec![1.0, 1.0, 1.0])]),
        )
        .unwrap();
        let c = m.candidates(&[id("b.n.01"), id("a.n.01")]).unwrap();
        let p = m.predict_senses(q, &c, None).unwrap();
        assert_eq!(p.ranking.items(), &[(id("a.n.01"), 0.5), (id("b.n.01"), 0.5)]);
    }

    #[test]
    fn planted_gold_first_and_head_excluded() {
        let q = "<WN:pen.n.01> can be used for [MASK] .";
        let m = inject_senses(
            backend(&[(q, vec![0.0, 1.0, 0.0])]),
            senses(&[
                ("pen.n.01", vec![0.0, 5.0, 0.0]),
                ("writing.n.01", vec![0.0, 1.0, 0.0]),
                ("ink.n.01", vec![1.0, 0.0, 0.0]),
            ]),
        )
        .unwrap();
        let c = m.candidates(&[id("pen.n.01"), id("writing.n.01"), id("ink.n.01")]).unwrap();
        let p = m.predict_senses(q, &c, Some(&id("pen.n.01"))).unwrap();
        assert_eq!(p.ranking.len(), 2);
        assert_eq!(p.top(1)[0].0, id("writing.n.01"));
        assert!(p.probability(&id("pen.n.01")).is_none());
        let d = m.distribution(q, &c, Some(&id("pen.n.01"))).unwrap();
        assert_eq!(d.rank(&id("ink.n.01")), Some(2));
        assert_eq!(d.best_rank([&id("ink.n.01"), &id("writing.n.01")]), Some(1));
        assert_eq!(d.rank(&id("pen.n.01")), None);
        let only_head = m.candidates(&[id("pen.n.01")]).unwrap();
        assert!(matches!(m.predict_senses(q, &only_head, Some(&id("pen.n.01"))), Err(Error::Query(_))));
        assert!(matches!(m.predict_senses("no mask", &c, None), Err(Error::Query(_))));
        assert!(matches!(m.candidates(&[id("cat.n.01")]), Err(Error::MissingKeys(_))));
    }

    #[test]
    fn gloss_rendering() {
        let pen = id("pen.n.01");
        let out = render_with_gloss(&pen, "a writing implement", "A <WN:pen.n.01> can be used for [MASK] .").unwrap();
        assert_eq!(
            out,
            "<WN:pen.n.01> can be defined as : a writing implement . [SEP] A <WN:pen.n.01> can be used for [MASK] ."
        );
        assert_eq!(out.matches(SEP).count(), 1);
        assert!(render_with_gloss(&pen, " ", "x [MASK]").is_err());
        assert!(render_with_gloss(&pen, "g", "no mask").is_err());
    }

    proptest! {
        #[test]
        fn softmax_sums_to_one_and_is_shift_invariant(
            logits in proptest::collection::vec(-50.0f64..50.0, 1..40),
            drop in any::<proptest::sample::Index>(),
            shift in -1e3f64..1e3,
        ) {
            let mut keep = vec![true; logits.len()];
            if logits.len() > 1 {
                keep[drop.index(logits.len())] = false;
            }
            let p = filtered_softmax(&logits, &keep).unwrap();
            let total: f64 = p.iter().sum();
            prop_assert!((total - 1.0).abs() <= 1e-6);
            let shifted: Vec<f64> = logits.iter().map(|l| l + shift).collect();
            let q = filtered_softmax(&shifted, &keep).unwrap();
            for (a, b) in p.iter().zip(&q) {
                prop_assert!((a - b).abs() <= 1e-9);
            }
            for (pi, k) in p.iter().zip(&keep) {
                if !k { prop_assert_eq!(*pi, 0.0); }
            }
        }
    }
}
