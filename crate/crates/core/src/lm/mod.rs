//! Masked-LM backend contract, sense-token injection and filtered prediction.
//!
//! A backend exposes tokenization, per-layer hidden states, the input
//! embedding matrix and the state at a `[MASK]` position. Two backends ship
//! with the crate: [`SyntheticBackend`], a deterministic test double, and
//! [`FileBackend`], which replays tensors exported from a real checkpoint.

mod enriched;
mod file;
mod synthetic;

use std::sync::OnceLock;

use regex::Regex;

use crate::embedding::EmbeddingTable;
use crate::error::{Error, Result};

pub use enriched::{
    filtered_softmax, inject_senses, render_with_gloss, CandidateSet, Distribution, EnrichedModel, SensePrediction,
};
pub use file::{read_f32_file, write_f32_file, EntryFiles, ExportEntry, ExportManifest, FileBackend, NO_ID};
pub use synthetic::{EmbeddingInit, HiddenRule, MaskFallback, MaskFn, SyntheticBackend, SyntheticSpec};

pub type TokenId = u32;

/// Literal mask placeholder in every text format.
pub const MASK: &str = "[MASK]";
pub const SEP: &str = "[SEP]";

/// One token of a tokenized text; offsets are byte positions in the text.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Token {
    pub id: TokenId,
    pub start: usize,
    pub end: usize,
    pub special: bool,
}

/// Hidden states for one text, `[L+1][T][D]`, layer-major.
#[derive(Debug, Clone, PartialEq)]
pub struct HiddenStates {
    layers: usize,
    tokens: usize,
    dim: usize,
    data: Vec<f64>,
}

impl HiddenStates {
    pub fn new(layers: usize, tokens: usize, dim: usize, data: Vec<f64>) -> Result<HiddenStates> {
        if layers == 0 || dim == 0 {
            return Err(Error::Invalid("hidden states need at least one layer and dimension".into()));
        }
        if data.len() != layers * tokens * dim {
            return Err(Error::DimensionMismatch {
                expected: layers * tokens * dim,
                found: data.len(),
            });
        }
        Ok(HiddenStates {
            layers,
            tokens,
            dim,
            data,
        })
    }

    pub fn from_fn(layers: usize, tokens: usize, dim: usize, mut f: impl FnMut(usize, usize, usize) -> f64) -> HiddenStates {
        let mut data = Vec::with_capacity(layers * tokens * dim);
        for l in 0..layers {
            for t in 0..tokens {
                for d in 0..dim {
                    data.push(f(l, t, d));
                }
            }
        }
        HiddenStates {
            layers,
            tokens,
            dim,
            data,
        }
    }

    /// Number of layers including the embedding layer (L+1).
    pub fn layers(&self) -> usize {
        self.layers
    }

    pub fn tokens(&self) -> usize {
        self.tokens
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn at(&self, layer: usize, token: usize) -> &[f64] {
        let start = (layer * self.tokens + token) * self.dim;
        &self.data[start..start + self.dim]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }
}

/// Which vector stands in for the mask position when scoring.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MaskStatePath {
    /// Final hidden state after the prediction-head transform.
    #[default]
    Transformed,
    /// Raw final hidden state.
    Raw,
}

/// A model input token: a vocabulary entry or an injected embedding.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum InputKind<'a> {
    Vocab(TokenId),
    Injected(&'a [f64]),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InputToken<'a> {
    pub kind: InputKind<'a>,
    pub start: usize,
    pub end: usize,
    pub special: bool,
}

/// Text handed to a backend, together with any injected sense vocabulary.
/// Backends that run from exported tensors only need the text; backends that
/// compute on token embeddings call [`ModelInput::tokens`].
#[derive(Clone, Copy)]
pub struct ModelInput<'a> {
    text: &'a str,
    senses: Option<&'a EmbeddingTable>,
}

fn sense_token_pattern() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"<WN:[^<>\s]+>").expect("valid regex"))
}

impl<'a> ModelInput<'a> {
    pub fn plain(text: &'a str) -> Self {
        ModelInput { text, senses: None }
    }

    pub fn with_senses(text: &'a str, senses: &'a EmbeddingTable) -> Self {
        ModelInput {
            text,
            senses: Some(senses),
        }
    }

    pub fn text(&self) -> &'a str {
        self.text
    }

    /// Tokenizes with the backend, keeping every injected `<WN:...>` string
    /// as one atomic token.
    pub fn tokens<B: MaskedLm + ?Sized>(&self, backend: &B) -> Result<Vec<InputToken<'a>>> {
        let vocab_tokens = |segment: &str, base: usize, out: &mut Vec<InputToken<'a>>| -> Result<()> {
            if segment.trim().is_empty() {
                return Ok(());
            }
            for t in backend.tokenize(segment)? {
                out.push(InputToken {
                    kind: InputKind::Vocab(t.id),
                    start: base + t.start,
                    end: base + t.end,
                    special: t.special,
                });
            }
            Ok(())
        };
        let mut out = Vec::new();
        let Some(senses) = self.senses.filter(|s| !s.is_empty()) else {
            vocab_tokens(self.text, 0, &mut out)?;
            return Ok(out);
        };
        let mut cursor = 0;
        for m in sense_token_pattern().find_iter(self.text) {
            let Some(vector) = senses.get(m.as_str()) else {
                return Err(Error::Query(format!("sense token {} is not in the injected vocabulary", m.as_str())));
            };
            vocab_tokens(&self.text[cursor..m.start()], cursor, &mut out)?;
            out.push(InputToken {
                kind: InputKind::Injected(vector),
                start: m.start(),
                end: m.end(),
                special: false,
            });
            cursor = m.end();
        }
        vocab_tokens(&self.text[cursor..], cursor, &mut out)?;
        Ok(out)
    }
}

/// Backend contract. Implementations must be deterministic: the same input
/// gives bit-identical outputs.
pub trait MaskedLm: Send + Sync {
    fn name(&self) -> &str;

    fn vocab(&self) -> &[String];

    fn token_id(&self, token: &str) -> Option<TokenId>;

    /// Transformer layers L; hidden states carry L+1 layers.
    fn num_layers(&self) -> usize;

    /// Width D of the hidden states.
    fn hidden_dim(&self) -> usize;

    /// Width of the input embeddings (and of the mask state used for scoring).
    fn input_dim(&self) -> usize;

    /// Tokens without sentence-boundary specials; `[MASK]` and `[SEP]` in the
    /// text come back as special tokens.
    fn tokenize(&self, text: &str) -> Result<Vec<Token>>;

    /// `[L+1][T][D]` states, where T matches the tokenization of the input.
    fn hidden_states(&self, input: &ModelInput<'_>) -> Result<HiddenStates>;

    /// State at the single mask position, `input_dim()` wide.
    fn mask_state(&self, input: &ModelInput<'_>, path: MaskStatePath) -> Result<Vec<f64>>;

    fn input_embedding(&self, id: TokenId) -> Result<Vec<f64>>;

    fn output_bias(&self, id: TokenId) -> Result<f64>;

    /// Maximum concurrent calls; `None` means unlimited.
    fn concurrency_limit(&self) -> Option<usize> {
        None
    }
}

/// Number of `[MASK]` placeholders in a text.
pub fn count_masks(text: &str) -> usize {
    text.matches(MASK).count()
}

pub(crate) fn require_single_mask(text: &str) -> Result<()> {
    match count_masks(text) {
        1 => Ok(()),
        n => Err(Error::Query(format!("expected exactly one {MASK}, found {n} in `{text}`"))),
    }
}

/// Runs `f` on a rayon pool sized by the backend's concurrency limit and `jobs`.
pub fn with_pool<R: Send>(limit: Option<usize>, jobs: Option<usize>, f: impl FnOnce() -> R + Send) -> Result<R> {
    let threads = match (limit, jobs) {
        (Some(a), Some(b)) => a.min(b),
        (Some(a), None) => a.min(rayon::current_num_threads()),
        (None, Some(b)) => b,
        (None, None) => return Ok(f()),
    }
    .max(1);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::Invalid(format!("cannot start worker pool: {e}")))?;
    Ok(pool.install(f))
}
