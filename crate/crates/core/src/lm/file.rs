//! Backend that replays tensors exported from a real checkpoint.
//!
//! Layout of an export directory:
//!
//! ```text
//! manifest.json
//! vocab.txt                one token per line, line number = token id
//! input_embeddings.f32     |vocab| x d_in little-endian f32, row-major
//! output_bias.f32          |vocab| f32 (optional; zeros when absent)
//! <entry files>            (L+1) x T x D f32 per text, layer-major
//! ```

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{require_single_mask, HiddenStates, MaskStatePath, MaskedLm, ModelInput, Token, TokenId};
use crate::error::{Error, Result};

/// Token id used for exported positions that carry no id.
pub const NO_ID: TokenId = TokenId::MAX;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntryFiles {
    /// Hidden-state tensor; defaults to `<id>.f32`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hidden: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mask_transformed: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mask_raw: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExportEntry {
    pub id: String,
    pub text: String,
    #[serde(rename = "T")]
    pub t: usize,
    /// Byte offsets `[start, end)` of each token in `text`.
    pub offsets: Vec<[usize; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub token_ids: Option<Vec<TokenId>>,
    /// Per-token special flags; when absent, zero-width tokens are special.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub special: Option<Vec<bool>>,
    #[serde(default = "no_files")]
    pub files: EntryFiles,
}

fn no_files() -> EntryFiles {
    EntryFiles {
        hidden: None,
        mask_transformed: None,
        mask_raw: None,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExportManifest {
    pub model_name: String,
    #[serde(rename = "L")]
    pub l: usize,
    #[serde(rename = "D")]
    pub d: usize,
    pub dtype: String,
    /// Input-embedding width; defaults to `D`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub d_in: Option<usize>,
    #[serde(default = "default_vocab")]
    pub vocab: String,
    #[serde(default = "default_embeddings")]
    pub input_embeddings: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_bias: Option<String>,
    pub entries: Vec<ExportEntry>,
    #[serde(default)]
    pub skipped: Vec<String>,
}

fn default_vocab() -> String {
    "vocab.txt".into()
}

fn default_embeddings() -> String {
    "input_embeddings.f32".into()
}

impl ExportManifest {
    pub fn d_in(&self) -> usize {
        self.d_in.unwrap_or(self.d)
    }
}

/// Reads a little-endian f32 file, checking its exact length.
pub fn read_f32_file(path: &Path, expected: usize) -> Result<Vec<f32>> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.len() != 4 * expected {
        return Err(Error::parse(
            path.display().to_string(),
            0,
            format!("expected {} bytes ({expected} f32 values), found {}", 4 * expected, bytes.len()),
        ));
    }
    Ok(bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect())
}

/// Writes values as little-endian f32 (the shim's wire format).
pub fn write_f32_file(path: &Path, values: impl IntoIterator<Item = f32>) -> Result<()> {
    let bytes: Vec<u8> = values.into_iter().flat_map(f32::to_le_bytes).collect();
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

#[derive(Debug)]
pub struct FileBackend {
    dir: PathBuf,
    manifest: ExportManifest,
    vocab: Vec<String>,
    ids: HashMap<String, TokenId>,
    embeddings: Vec<f32>,
    bias: Vec<f32>,
    by_text: HashMap<String, usize>,
}

impl FileBackend {
    pub fn open(dir: &Path) -> Result<FileBackend> {
        let manifest_path = dir.join("manifest.json");
        let raw = fs::read_to_string(&manifest_path).map_err(|e| Error::io(&manifest_path, e))?;
        let manifest: ExportManifest = serde_json::from_str(&raw)?;
        if manifest.dtype != "f32le" {
            return Err(Error::Invalid(format!("unsupported dtype `{}`, expected f32le", manifest.dtype)));
        }
        if manifest.d == 0 || manifest.d_in() == 0 {
            return Err(Error::Invalid("export declares a zero dimension".into()));
        }
        let vocab_path = dir.join(&manifest.vocab);
        let vocab: Vec<String> = fs::read_to_string(&vocab_path)
            .map_err(|e| Error::io(&vocab_path, e))?
            .lines()
            .map(str::to_string)
            .collect();
        let ids = vocab.iter().enumerate().map(|(i, t)| (t.clone(), i as TokenId)).collect();
        let embeddings = read_f32_file(&dir.join(&manifest.input_embeddings), vocab.len() * manifest.d_in())?;
        let bias = match &manifest.output_bias {
            Some(f) => read_f32_file(&dir.join(f), vocab.len())?,
            None => vec![0.0; vocab.len()],
        };
        let mut by_text = HashMap::new();
        for (i, e) in manifest.entries.iter().enumerate() {
            if e.offsets.len() != e.t
                || e.token_ids.as_ref().is_some_and(|v| v.len() != e.t)
                || e.special.as_ref().is_some_and(|v| v.len() != e.t)
            {
                return Err(Error::Invalid(format!("entry `{}`: per-token arrays disagree with T={}", e.id, e.t)));
            }
            if let Some([s, end]) = e.offsets.iter().find(|[s, end]| s > end || *end > e.text.len()) {
                return Err(Error::Invalid(format!("entry `{}`: offset [{s}, {end}) outside text", e.id)));
            }
            by_text.entry(e.text.clone()).or_insert(i);
        }
        Ok(FileBackend {
            dir: dir.to_path_buf(),
            manifest,
            vocab,
            ids,
            embeddings,
            bias,
            by_text,
        })
    }

    pub fn manifest(&self) -> &ExportManifest {
        &self.manifest
    }

    fn entry(&self, text: &str) -> Result<&ExportEntry> {
        self.by_text
            .get(text)
            .map(|&i| &self.manifest.entries[i])
            .ok_or_else(|| Error::Query(format!("text not present in export: `{text}`")))
    }

    fn vector_file(&self, entry: &ExportEntry, file: Option<&String>, what: &str) -> Result<Vec<f64>> {
        let file = file.ok_or_else(|| Error::Query(format!("entry `{}` has no exported {what}", entry.id)))?;
        Ok(read_f32_file(&self.dir.join(file), self.manifest.d_in())?
            .into_iter()
            .map(f64::from)
            .collect())
    }
}

impl MaskedLm for FileBackend {
    fn name(&self) -> &str {
        &self.manifest.model_name
    }

    fn vocab(&self) -> &[String] {
        &self.vocab
    }

    fn token_id(&self, token: &str) -> Option<TokenId> {
        self.ids.get(token).copied()
    }

    fn num_layers(&self) -> usize {
        self.manifest.l
    }

    fn hidden_dim(&self) -> usize {
        self.manifest.d
    }

    fn input_dim(&self) -> usize {
        self.manifest.d_in()
    }

    /// Only exported texts can be tokenized.
    fn tokenize(&self, text: &str) -> Result<Vec<Token>> {
        let e = self.entry(text)?;
        Ok((0..e.t)
            .map(|i| {
                let [start, end] = e.offsets[i];
                Token {
                    id: e.token_ids.as_ref().map_or(NO_ID, |v| v[i]),
                    start,
                    end,
                    special: e.special.as_ref().map_or(start == end, |v| v[i]),
                }
            })
            .collect())
    }

    fn hidden_states(&self, input: &ModelInput<'_>) -> Result<HiddenStates> {
        let e = self.entry(input.text())?;
        let m = &self.manifest;
        let file = e.files.hidden.clone().unwrap_or_else(|| format!("{}.f32", e.id));
        let data = read_f32_file(&self.dir.join(file), (m.l + 1) * e.t * m.d)?;
        HiddenStates::new(m.l + 1, e.t, m.d, data.into_iter().map(f64::from).collect())
    }

    fn mask_state(&self, input: &ModelInput<'_>, path: MaskStatePath) -> Result<Vec<f64>> {
        require_single_mask(input.text())?;
        let e = self.entry(input.text())?;
        match path {
            MaskStatePath::Transformed => self.vector_file(e, e.files.mask_transformed.as_ref(), "transformed mask state"),
            MaskStatePath::Raw => self.vector_file(e, e.files.mask_raw.as_ref(), "raw mask state"),
        }
    }

    fn input_embedding(&self, id: TokenId) -> Result<Vec<f64>> {
        let d = self.manifest.d_in();
        let i = id as usize;
        if i >= self.vocab.len() {
            return Err(Error::Invalid(format!("token id {id} out of range")));
        }
        Ok(self.embeddings[i * d..(i + 1) * d].iter().map(|&x| f64::from(x)).collect())
    }

    fn output_bias(&self, id: TokenId) -> Result<f64> {
        self.bias
            .get(id as usize)
            .map(|&x| f64::from(x))
            .ok_or_else(|| Error::Invalid(format!("token id {id} out of range")))
    }
}
