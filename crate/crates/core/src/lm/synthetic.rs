//! Deterministic in-process backend for tests and desk-scale runs.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::sync::Arc;

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};
use serde::{Deserialize, Serialize};

use super::{require_single_mask, HiddenStates, InputKind, MaskStatePath, MaskedLm, ModelInput, Token, TokenId, MASK};
use crate::error::{Error, Result};

const SPECIALS: [&str; 5] = ["[PAD]", "[UNK]", "[CLS]", "[SEP]", MASK];
const UNK: TokenId = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EmbeddingInit {
    /// Uniform in [-1, 1) from a seeded stream, one row per vocabulary entry.
    Random { seed: u64 },
    /// Listed rows; anything unlisted is drawn as in `Random`.
    Explicit { vectors: BTreeMap<String, Vec<f64>>, fill_seed: u64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HiddenRule {
    /// Every layer repeats the input embeddings.
    BagOfEmbeddings,
    /// Layer 0 is the input embedding; layer l adds `l * alpha` times the
    /// mean input embedding of the whole text.
    ContextMix { alpha: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MaskFallback {
    /// Mean input vector over the non-special tokens of the query.
    #[default]
    ContextMean,
    Zero,
}

/// Declarative description of a synthetic backend (also the JSON file format
/// behind `synthetic:<path>` backend specs).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    #[serde(default = "default_name")]
    pub name: String,
    /// Transformer layers L.
    pub layers: usize,
    pub dim: usize,
    /// Regular tokens; the special tokens are added in front automatically.
    pub vocab: Vec<String>,
    pub embeddings: EmbeddingInit,
    pub hidden: HiddenRule,
    /// Exact query text -> planted mask state.
    #[serde(default)]
    pub planted: BTreeMap<String, Vec<f64>>,
    #[serde(default)]
    pub mask_fallback: MaskFallback,
    #[serde(default)]
    pub output_bias: BTreeMap<String, f64>,
}

fn default_name() -> String {
    "synthetic".into()
}

/// Programmable mask-state rule: return `Some` to override the fallback.
pub type MaskFn = Arc<dyn Fn(&str) -> Option<Vec<f64>> + Send + Sync>;

pub struct SyntheticBackend {
    spec: SyntheticSpec,
    vocab: Vec<String>,
    ids: HashMap<String, TokenId>,
    embeddings: Vec<f64>,
    bias: Vec<f64>,
    mask_fn: Option<MaskFn>,
}

impl fmt::Debug for SyntheticBackend {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SyntheticBackend")
            .field("name", &self.spec.name)
            .field("vocab", &self.vocab.len())
            .field("dim", &self.spec.dim)
            .finish()
    }
}

fn uniform(rng: &mut ChaCha8Rng) -> f64 {
    (rng.next_u64() >> 11) as f64 / (1u64 << 53) as f64 * 2.0 - 1.0
}

impl SyntheticBackend {
    pub fn new(spec: SyntheticSpec) -> Result<SyntheticBackend> {
        if spec.dim == 0 {
            return Err(Error::Invalid("synthetic backend needs dim > 0".into()));
        }
        let mut vocab: Vec<String> = SPECIALS.iter().map(|s| s.to_string()).collect();
        for t in &spec.vocab {
            if !vocab.contains(t) {
                vocab.push(t.clone());
            }
        }
        let ids: HashMap<String, TokenId> = vocab.iter().enumerate().map(|(i, t)| (t.clone(), i as TokenId)).collect();
        let (seed, explicit) = match &spec.embeddings {
            EmbeddingInit::Random { seed } => (*seed, None),
            EmbeddingInit::Explicit { vectors, fill_seed } => (*fill_seed, Some(vectors)),
        };
        let mut rng = {
            let mut bytes = [0u8; 32];
            bytes[..8].copy_from_slice(&seed.to_le_bytes());
            ChaCha8Rng::from_seed(bytes)
        };
        let mut embeddings = Vec::with_capacity(vocab.len() * spec.dim);
        for token in &vocab {
            let drawn: Vec<f64> = (0..spec.dim).map(|_| uniform(&mut rng)).collect();
            match explicit.and_then(|m| m.get(token)) {
                Some(v) if v.len() != spec.dim => {
                    return Err(Error::DimensionMismatch {
                        expected: spec.dim,
                        found: v.len(),
                    })
                }
                Some(v) => embeddings.extend_from_slice(v),
                None => embeddings.extend(drawn),
            }
        }
        if let Some(m) = explicit {
            if let Some(unknown) = m.keys().find(|k| !ids.contains_key(*k)) {
                return Err(Error::Invalid(format!("embedding given for `{unknown}`, which is not in the vocabulary")));
            }
        }
        for v in spec.planted.values() {
            if v.len() != spec.dim {
                return Err(Error::DimensionMismatch {
                    expected: spec.dim,
                    found: v.len(),
                });
            }
        }
        let mut bias = vec![0.0; vocab.len()];
        for (t, b) in &spec.output_bias {
            let id = *ids
                .get(t)
                .ok_or_else(|| Error::Invalid(format!("output bias for unknown token `{t}`")))?;
            bias[id as usize] = *b;
        }
        Ok(SyntheticBackend {
            spec,
            vocab,
            ids,
            embeddings,
            bias,
            mask_fn: None,
        })
    }

    /// Adds a programmable mask-state rule, consulted after the planted map.
    pub fn with_mask_fn(mut self, f: MaskFn) -> Self {
        self.mask_fn = Some(f);
        self
    }

    pub fn spec(&self) -> &SyntheticSpec {
        &self.spec
    }

    fn embedding(&self, id: TokenId) -> &[f64] {
        let d = self.spec.dim;
        &self.embeddings[id as usize * d..(id as usize + 1) * d]
    }

    fn input_vectors<'a>(&'a self, input: &ModelInput<'a>) -> Result<Vec<(&'a [f64], bool)>> {
        input
            .tokens(self)?
            .into_iter()
            .map(|t| {
                let v = match t.kind {
                    InputKind::Vocab(id) => self.embedding(id),
                    InputKind::Injected(v) if v.len() == self.spec.dim => v,
                    InputKind::Injected(v) => {
                        return Err(Error::DimensionMismatch {
                            expected: self.spec.dim,
                            found: v.len(),
                        })
                    }
                };
                Ok((v, t.special))
            })
            .collect()
    }
}

fn is_word_char(c: char) -> bool {
    c.is_alphanumeric() || matches!(c, '_' | '-' | '\'')
}

impl MaskedLm for SyntheticBackend {
    fn name(&self) -> &str {
        &self.spec.name
    }

    fn vocab(&self) -> &[String] {
        &self.vocab
    }

    fn token_id(&self, token: &str) -> Option<TokenId> {
        self.ids.get(token).copied()
    }

    fn num_layers(&self) -> usize {
        self.spec.layers
    }

    fn hidden_dim(&self) -> usize {
        self.spec.dim
    }

    fn input_dim(&self) -> usize {
        self.spec.dim
    }

    /// Lowercased words, single punctuation marks, and bracketed specials.
    fn tokenize(&self, text: &str) -> Result<Vec<Token>> {
        let mut out = Vec::new();
        let mut i = 0;
        let bytes = text.len();
        while i < bytes {
            let rest = &text[i..];
            if let Some(sp) = SPECIALS.iter().find(|s| rest.starts_with(*s)) {
                out.push(Token {
                    id: self.ids[*sp],
                    start: i,
                    end: i + sp.len(),
                    special: true,
                });
                i += sp.len();
                continue;
            }
            let c = rest.chars().next().expect("non-empty");
            if c.is_whitespace() {
                i += c.len_utf8();
            } else if is_word_char(c) {
                let len: usize = rest.chars().take_while(|&c| is_word_char(c)).map(char::len_utf8).sum();
                let word = rest[..len].to_lowercase();
                out.push(Token {
                    id: self.ids.get(&word).copied().unwrap_or(UNK),
                    start: i,
                    end: i + len,
                    special: false,
                });
                i += len;
            } else {
                let s = &rest[..c.len_utf8()];
                out.push(Token {
                    id: self.ids.get(s).copied().unwrap_or(UNK),
                    start: i,
                    end: i + s.len(),
                    special: false,
                });
                i += s.len();
            }
        }
        Ok(out)
    }

    fn hidden_states(&self, input: &ModelInput<'_>) -> Result<HiddenStates> {
        let vectors = self.input_vectors(input)?;
        let d = self.spec.dim;
        let t = vectors.len();
        let mut mean = vec![0.0; d];
        if let HiddenRule::ContextMix { .. } = self.spec.hidden {
            for (v, _) in &vectors {
                for (m, x) in mean.iter_mut().zip(*v) {
                    *m += x;
                }
            }
            if t > 0 {
                mean.iter_mut().for_each(|m| *m /= t as f64);
            }
        }
        Ok(HiddenStates::from_fn(self.spec.layers + 1, t, d, |l, tok, k| {
            let e = vectors[tok].0[k];
            match self.spec.hidden {
                HiddenRule::BagOfEmbeddings => e,
                HiddenRule::ContextMix { alpha } => e + l as f64 * alpha * mean[k],
            }
        }))
    }

    fn mask_state(&self, input: &ModelInput<'_>, _path: MaskStatePath) -> Result<Vec<f64>> {
        require_single_mask(input.text())?;
        if let Some(v) = self.spec.planted.get(input.text()) {
            return Ok(v.clone());
        }
        if let Some(v) = self.mask_fn.as_ref().and_then(|f| f(input.text())) {
            if v.len() != self.spec.dim {
                return Err(Error::DimensionMismatch {
                    expected: self.spec.dim,
                    found: v.len(),
                });
            }
            return Ok(v);
        }
        let mut out = vec![0.0; self.spec.dim];
        if self.spec.mask_fallback == MaskFallback::ContextMean {
            let vectors = self.input_vectors(input)?;
            let content: Vec<&[f64]> = vectors.iter().filter(|(_, s)| !s).map(|(v, _)| *v).collect();
            for v in &content {
                for (o, x) in out.iter_mut().zip(*v) {
                    *o += x;
                }
            }
            if !content.is_empty() {
                out.iter_mut().for_each(|o| *o /= content.len() as f64);
            }
        }
        Ok(out)
    }

    fn input_embedding(&self, id: TokenId) -> Result<Vec<f64>> {
        if id as usize >= self.vocab.len() {
            return Err(Error::Invalid(format!("token id {id} out of range")));
        }
        Ok(self.embedding(id).to_vec())
    }

    fn output_bias(&self, id: TokenId) -> Result<f64> {
        self.bias
            .get(id as usize)
            .copied()
            .ok_or_else(|| Error::Invalid(format!("token id {id} out of range")))
    }
}
