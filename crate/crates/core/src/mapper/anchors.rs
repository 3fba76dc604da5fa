use std::collections::{BTreeMap, HashMap};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lm::{MaskedLm, TokenId};
use crate::sense::{encode, pool_positions, LayerWeightProfile};

const MAGIC: &[u8; 8] = b"SLANCHR1";

/// One anchor: a vocabulary token's pooled-space vector and its input embedding.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnchorPair {
    pub key: String,
    pub source: Vec<f64>,
    pub target: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnchorSet {
    pairs: Vec<AnchorPair>,
    min_count: u64,
    d_src: usize,
    d_tgt: usize,
}

impl AnchorSet {
    pub fn new(d_src: usize, d_tgt: usize, min_count: u64, pairs: Vec<AnchorPair>) -> Result<AnchorSet> {
        if d_src == 0 || d_tgt == 0 {
            return Err(Error::Invalid("anchor dimensions must be positive".into()));
        }
        let mut seen = std::collections::HashSet::new();
        for p in &pairs {
            if p.source.len() != d_src {
                return Err(Error::DimensionMismatch {
                    expected: d_src,
                    found: p.source.len(),
                });
            }
            if p.target.len() != d_tgt {
                return Err(Error::DimensionMismatch {
                    expected: d_tgt,
                    found: p.target.len(),
                });
            }
            if p.source.iter().chain(&p.target).any(|x| !x.is_finite()) {
                return Err(Error::Invalid(format!("anchor `{}` has a non-finite value", p.key)));
            }
            if !seen.insert(p.key.as_str()) {
                return Err(Error::Invalid(format!("duplicate anchor `{}`", p.key)));
            }
        }
        Ok(AnchorSet {
            pairs,
            min_count,
            d_src,
            d_tgt,
        })
    }

    pub fn pairs(&self) -> &[AnchorPair] {
        &self.pairs
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn min_count(&self) -> u64 {
        self.min_count
    }

    pub fn d_src(&self) -> usize {
        self.d_src
    }

    pub fn d_tgt(&self) -> usize {
        self.d_tgt
    }

    /// Binary layout: magic, then `count d_src d_tgt min_count` as u64 LE, then
    /// per pair a u32 key length, the key bytes, and the f64 LE source and
    /// target values.
    pub fn save(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        let io = |e| Error::io(path, e);
        w.write_all(MAGIC).map_err(io)?;
        for n in [self.pairs.len() as u64, self.d_src as u64, self.d_tgt as u64, self.min_count] {
            w.write_all(&n.to_le_bytes()).map_err(io)?;
        }
        for p in &self.pairs {
            w.write_all(&(p.key.len() as u32).to_le_bytes()).map_err(io)?;
            w.write_all(p.key.as_bytes()).map_err(io)?;
            for x in p.source.iter().chain(&p.target) {
                w.write_all(&x.to_le_bytes()).map_err(io)?;
            }
        }
        w.flush().map_err(io)
    }

    pub fn load(path: &Path) -> Result<AnchorSet> {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let name = path.display().to_string();
        let mut r = BufReader::new(file);
        let bad = |m: &str| Error::parse(&name, 0, m.to_string());
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic).map_err(|_| bad("truncated header"))?;
        if &magic != MAGIC {
            return Err(bad("not an anchor file"));
        }
        let mut u64s = [0u64; 4];
        for v in &mut u64s {
            let mut b = [0u8; 8];
            r.read_exact(&mut b).map_err(|_| bad("truncated header"))?;
            *v = u64::from_le_bytes(b);
        }
        let [count, d_src, d_tgt, min_count] = u64s;
        let (d_src, d_tgt) = (d_src as usize, d_tgt as usize);
        let mut pairs = Vec::with_capacity(count as usize);
        let f64s = |n: usize, r: &mut BufReader<File>| -> Result<Vec<f64>> {
            let mut buf = vec![0u8; 8 * n];
            r.read_exact(&mut buf).map_err(|_| bad("truncated anchor vector"))?;
            Ok(buf
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
                .collect())
        };
        for _ in 0..count {
            let mut len = [0u8; 4];
            r.read_exact(&mut len).map_err(|_| bad("truncated anchor key"))?;
            let mut key = vec![0u8; u32::from_le_bytes(len) as usize];
            r.read_exact(&mut key).map_err(|_| bad("truncated anchor key"))?;
            let key = String::from_utf8(key).map_err(|_| bad("anchor key is not UTF-8"))?;
            let source = f64s(d_src, &mut r)?;
            let target = f64s(d_tgt, &mut r)?;
            pairs.push(AnchorPair { key, source, target });
        }
        if r.fill_buf().map_err(|e| Error::io(path, e))?.is_empty() {
            AnchorSet::new(d_src, d_tgt, min_count, pairs)
        } else {
            Err(bad("trailing bytes after last anchor"))
        }
    }
}

/// Token counts as TSV `token<TAB>count`; tokens are taken verbatim.
pub fn load_counts(path: &Path) -> Result<HashMap<String, u64>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let name = path.display().to_string();
    let mut out = HashMap::new();
    for (n, line) in text.lines().enumerate() {
        if line.is_empty() {
            continue;
        }
        let (tok, count) = line
            .rsplit_once('\t')
            .ok_or_else(|| Error::parse(&name, n + 1, "expected `token<TAB>count`"))?;
        let count = count
            .trim()
            .parse::<u64>()
            .map_err(|_| Error::parse(&name, n + 1, format!("bad count `{count}`")))?;
        *out.entry(tok.to_string()).or_insert(0) += count;
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnchorOptions {
    /// Tokens need strictly more occurrences than this.
    pub min_count: u64,
    /// Use at most this many corpus occurrences per token (first ones in corpus order).
    pub occurrence_cap: Option<usize>,
    /// Accept fewer anchors than source dimensions (only sensible with ridge).
    pub allow_underdetermined: bool,
}

impl Default for AnchorOptions {
    fn default() -> Self {
        AnchorOptions {
            min_count: 100,
            occurrence_cap: None,
            allow_underdetermined: false,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AnchorReport {
    pub qualifying: usize,
    /// Qualifying tokens with no occurrence in the supplied corpus.
    pub unobserved: Vec<String>,
}

/// Qualifying vocabulary tokens, their pooled vectors averaged over corpus
/// occurrences (in corpus order), paired with their input embeddings.
pub fn select_anchors(
    backend: &dyn MaskedLm,
    corpus: &[String],
    counts: &HashMap<String, u64>,
    profile: &LayerWeightProfile,
    opts: &AnchorOptions,
) -> Result<(AnchorSet, AnchorReport)> {
    let qualifying: BTreeMap<TokenId, &str> = backend
        .vocab()
        .iter()
        .enumerate()
        .filter(|(_, t)| counts.get(*t).copied().unwrap_or(0) > opts.min_count)
        .map(|(i, t)| (i as TokenId, t.as_str()))
        .collect();
    let per_text: Vec<Result<Vec<(TokenId, Vec<f64>)>>> = corpus
        .par_iter()
        .map(|text| {
            let (tokens, hidden) = encode(backend, text)?;
            tokens
                .iter()
                .enumerate()
                .filter(|(_, t)| !t.special && qualifying.contains_key(&t.id))
                .map(|(i, t)| Ok((t.id, pool_positions(&hidden, profile, &[i])?)))
                .collect()
        })
        .collect();
    let mut sums: BTreeMap<TokenId, (Vec<f64>, usize)> = BTreeMap::new();
    for text in per_text {
        for (id, v) in text? {
            let (sum, n) = sums.entry(id).or_insert_with(|| (vec![0.0; v.len()], 0));
            if opts.occurrence_cap.is_some_and(|cap| *n >= cap) {
                continue;
            }
            for (s, x) in sum.iter_mut().zip(&v) {
                *s += x;
            }
            *n += 1;
        }
    }
    let mut report = AnchorReport {
        qualifying: qualifying.len(),
        unobserved: Vec::new(),
    };
    let mut pairs = Vec::new();
    for (&id, &key) in &qualifying {
        match sums.remove(&id) {
            Some((sum, n)) if n > 0 => pairs.push(AnchorPair {
                key: key.to_string(),
                source: sum.into_iter().map(|s| s / n as f64).collect(),
                target: backend.input_embedding(id)?,
            }),
            _ => report.unobserved.push(key.to_string()),
        }
    }
    if !report.unobserved.is_empty() {
        log::warn!("{} qualifying tokens never occur in the corpus", report.unobserved.len());
    }
    let d_src = backend.hidden_dim();
    if pairs.len() < d_src && !opts.allow_underdetermined {
        return Err(Error::TooFewAnchors {
            found: pairs.len(),
            dim: d_src,
        });
    }
    Ok((AnchorSet::new(d_src, backend.input_dim(), opts.min_count, pairs)?, report))
}
