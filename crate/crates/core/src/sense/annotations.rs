use std::fs::File;
use std::io::{BufRead, BufReader};
use std::ops::Range;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ontology::SynsetId;

/// One sense-annotated span of a whitespace-tokenized sentence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotatedOccurrence {
    /// Canonical summation key; defaults to the zero-padded line number.
    #[serde(default)]
    pub id: String,
    pub sentence_tokens: Vec<String>,
    /// Word indices `[start, end)`.
    pub span: [usize; 2],
    pub synset: SynsetId,
}

impl AnnotatedOccurrence {
    pub fn new(
        id: impl Into<String>,
        sentence_tokens: Vec<String>,
        span: Range<usize>,
        synset: SynsetId,
    ) -> Result<AnnotatedOccurrence> {
        let occ = AnnotatedOccurrence {
            id: id.into(),
            sentence_tokens,
            span: [span.start, span.end],
            synset,
        };
        occ.validate()?;
        Ok(occ)
    }

    fn validate(&self) -> Result<()> {
        let [s, e] = self.span;
        if s >= e || e > self.sentence_tokens.len() {
            return Err(Error::Invalid(format!(
                "occurrence `{}`: span [{s}, {e}) outside {} tokens",
                self.id,
                self.sentence_tokens.len()
            )));
        }
        if self.sentence_tokens.iter().any(|t| t.is_empty()) {
            return Err(Error::Invalid(format!("occurrence `{}` has an empty token", self.id)));
        }
        Ok(())
    }

    /// The sentence as given to the backend: tokens joined by single spaces.
    pub fn text(&self) -> String {
        self.sentence_tokens.join(" ")
    }

    /// Byte range of the annotated words within [`text`](Self::text).
    pub fn span_bytes(&self) -> Range<usize> {
        let [s, e] = self.span;
        let start: usize = self.sentence_tokens[..s].iter().map(|t| t.len() + 1).sum();
        let len: usize = self.sentence_tokens[s..e].iter().map(String::len).sum::<usize>() + (e - s - 1);
        start..start + len
    }
}

/// Reads a JSONL annotation corpus, one occurrence per line.
pub fn load_annotations(path: &Path) -> Result<Vec<AnnotatedOccurrence>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let name = path.display().to_string();
    let mut out = Vec::new();
    for (n, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let mut occ: AnnotatedOccurrence =
            serde_json::from_str(&line).map_err(|e| Error::parse(&name, n + 1, e.to_string()))?;
        if occ.id.is_empty() {
            occ.id = format!("{:09}", n + 1);
        }
        occ.validate().map_err(|e| Error::parse(&name, n + 1, e.to_string()))?;
        out.push(occ);
    }
    Ok(out)
}
