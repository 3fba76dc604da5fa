use std::cmp::Ordering;
use std::collections::BTreeSet;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::EmbeddingTable;
use crate::error::{Error, Result};

const PAR_THRESHOLD: usize = 8192;

/// Scored keys ordered by score descending, then key ascending.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ranking<K> {
    items: Vec<(K, f64)>,
}

impl<K: Ord> Ranking<K> {
    /// Sorts arbitrary scored items into ranking order. Duplicate keys are an error.
    pub fn from_scores(mut items: Vec<(K, f64)>) -> Result<Ranking<K>> {
        items.sort_by(|a, b| rank_order(&a.0, a.1, &b.0, b.1));
        if items.windows(2).any(|w| w[0].0 == w[1].0) {
            return Err(Error::Invalid("duplicate key in ranking".into()));
        }
        Ok(Ranking { items })
    }

    pub fn items(&self) -> &[(K, f64)] {
        &self.items
    }

    pub fn into_items(self) -> Vec<(K, f64)> {
        self.items
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    /// 1-based rank of a key, if present.
    pub fn rank_of(&self, key: &K) -> Option<usize> {
        self.items.iter().position(|(k, _)| k == key).map(|p| p + 1)
    }

    pub fn top(&self, k: usize) -> &[(K, f64)] {
        &self.items[..k.min(self.items.len())]
    }
}

/// Total order used by every ranking: higher score first, ties by key.
pub(crate) fn rank_order<K: Ord>(ka: &K, sa: f64, kb: &K, sb: f64) -> Ordering {
    sb.total_cmp(&sa).then_with(|| ka.cmp(kb))
}

/// Cosine similarity; a zero vector on either side scores negative infinity.
pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let (mut dot, mut na, mut nb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        dot += x * y;
        na += x * x;
        nb += y * y;
    }
    if na == 0.0 || nb == 0.0 {
        return f64::NEG_INFINITY;
    }
    dot / (na.sqrt() * nb.sqrt())
}

/// Exact k-NN ranking of `candidates - exclude` by cosine similarity to `query`.
pub fn rank_neighbors<'a>(
    table: &EmbeddingTable,
    query: &[f64],
    candidates: impl IntoIterator<Item = &'a str>,
    exclude: &BTreeSet<&str>,
) -> Result<Ranking<String>> {
    if query.len() != table.dim() {
        return Err(Error::DimensionMismatch {
            expected: table.dim(),
            found: query.len(),
        });
    }
    let mut missing = Vec::new();
    let mut rows = Vec::new();
    let mut seen = BTreeSet::new();
    for key in candidates {
        if exclude.contains(key) || !seen.insert(key) {
            continue;
        }
        match table.position(key) {
            Some(i) => rows.push((key, i)),
            None => missing.push(key.to_string()),
        }
    }
    if !missing.is_empty() {
        return Err(Error::MissingKeys(missing));
    }
    let score = |&(key, i): &(&str, usize)| (key.to_string(), cosine(query, table.row(i)));
    let scored: Vec<(String, f64)> = if rows.len() >= PAR_THRESHOLD {
        rows.par_iter().map(score).collect()
    } else {
        rows.iter().map(score).collect()
    };
    Ranking::from_scores(scored)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embedding::KeyOrder;
    use proptest::prelude::*;

    fn table(rows: &[(&str, Vec<f64>)]) -> EmbeddingTable {
        EmbeddingTable::from_entries("t", rows[0].1.len(), KeyOrder::Insertion, rows.iter().cloned()).unwrap()
    }

    #[test]
    fn self_similarity_ranks_first() {
        let t = table(&[("a", vec![1.0, 0.0, 0.0]), ("b", vec![0.0, 1.0, 0.0]), ("c", vec![0.0, 0.0, 2.0])]);
        let r = rank_neighbors(&t, &[0.0, 0.0, 5.0], ["a", "b", "c"], &BTreeSet::new()).unwrap();
        assert_eq!(r.items()[0], ("c".to_string(), 1.0));
        // equal scores fall back to key order
        assert_eq!(r.items()[1].0, "a");
        assert_eq!(r.items()[2].0, "b");
    }

    #[test]
    fn excluded_everything_is_empty() {
        let t = table(&[("a", vec![1.0]), ("b", vec![2.0])]);
        let ex: BTreeSet<&str> = ["a", "b"].into();
        assert!(rank_neighbors(&t, &[1.0], ["a", "b"], &ex).unwrap().is_empty());
    }

    #[test]
    fn zero_vectors_rank_last() {
        let t = table(&[("z", vec![0.0, 0.0]), ("a", vec![0.0, 0.0]), ("m", vec![-1.0, 0.0])]);
        let r = rank_neighbors(&t, &[1.0, 0.0], ["z", "a", "m"], &BTreeSet::new()).unwrap();
        let keys: Vec<_> = r.items().iter().map(|(k, _)| k.as_str()).collect();
        assert_eq!(keys, ["m", "a", "z"]);
        assert_eq!(r.items()[2].1, f64::NEG_INFINITY);
    }

    #[test]
    fn errors() {
        let t = table(&[("a", vec![1.0, 0.0])]);
        assert!(matches!(
            rank_neighbors(&t, &[1.0], ["a"], &BTreeSet::new()),
            Err(Error::DimensionMismatch { .. })
        ));
        assert!(matches!(
            rank_neighbors(&t, &[1.0, 0.0], ["a", "nope"], &BTreeSet::new()),
            Err(Error::MissingKeys(k)) if k == vec!["nope".to_string()]
        ));
    }

    // brute-force oracle: angle via explicit normalisation, then a stable sort
    fn oracle(rows: &[(String, Vec<f64>)], q: &[f64]) -> Vec<String> {
        let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
        let mut scored: Vec<(String, f64)> = rows
            .iter()
            .map(|(k, v)| {
                let s = if norm(v) == 0.0 || norm(q) == 0.0 {
                    f64::NEG_INFINITY
                } else {
                    v.iter().zip(q).map(|(a, b)| (a / norm(v)) * (b / norm(q))).sum()
                };
                (k.clone(), s)
            })
            .collect();
        scored.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
        scored.into_iter().map(|(k, _)| k).collect()
    }

    proptest! {
        #[test]
        fn matches_brute_force(vals in proptest::collection::vec(proptest::collection::vec(-1.0f64..1.0, 6), 5), q in proptest::collection::vec(-1.0f64..1.0, 6)) {
            let rows: Vec<(String, Vec<f64>)> = vals.into_iter().enumerate().map(|(i, v)| (format!("c{i}"), v)).collect();
            let t = EmbeddingTable::from_entries("t", 6, KeyOrder::Insertion, rows.clone()).unwrap();
            let r = rank_neighbors(&t, &q, rows.iter().map(|(k, _)| k.as_str()), &BTreeSet::new()).unwrap();
            let got: Vec<String> = r.items().iter().map(|(k, _)| k.clone()).collect();
            prop_assert_eq!(got, oracle(&rows, &q));
        }

        #[test]
        fn scale_invariant(vals in proptest::collection::vec(proptest::collection::vec(-1.0f64..1.0, 4), 8), q in proptest::collection::vec(-1.0f64..1.0, 4), exp in -8i32..8, alpha in 0.01f64..100.0) {
            let t = EmbeddingTable::from_entries("t", 4, KeyOrder::Insertion, vals.into_iter().enumerate().map(|(i, v)| (format!("c{i}"), v))).unwrap();
            let keys: Vec<&str> = t.keys().iter().map(String::as_str).collect();
            let base = rank_neighbors(&t, &q, keys.iter().copied(), &BTreeSet::new()).unwrap();
            // power-of-two scaling is exact in binary floating point
            let pow2: Vec<f64> = q.iter().map(|x| x * 2f64.powi(exp)).collect();
            prop_assert_eq!(&rank_neighbors(&t, &pow2, keys.iter().copied(), &BTreeSet::new()).unwrap(), &base);
            let scaled: Vec<f64> = q.iter().map(|x| x * alpha).collect();
            let other = rank_neighbors(&t, &scaled, keys.iter().copied(), &BTreeSet::new()).unwrap();
            for ((_, sa), (_, sb)) in base.items().iter().zip(other.items()) {
                prop_assert!((sa - sb).abs() <= 1e-12 || (sa.is_infinite() && sa == sb));
            }
        }
    }
}
