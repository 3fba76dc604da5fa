use std::path::PathBuf;
use std::sync::Arc;

use senselab_core::lm::{FileBackend, MaskedLm, SyntheticBackend, SyntheticSpec};

use crate::config::invalid;

/// Parsed `--backend` value.
#[derive(Debug, Clone, PartialEq)]
pub enum BackendSpec {
    /// JSON [`SyntheticSpec`] file.
    Synthetic(PathBuf),
    /// Directory written by the hidden-state exporter.
    File(PathBuf),
}

impl BackendSpec {
    pub fn parse(s: &str) -> anyhow::Result<BackendSpec> {
        let (kind, rest) = s
            .split_once(':')
            .ok_or_else(|| invalid("backend", format!("`{s}` should look like synthetic:<spec.json> or file:<dir>")))?;
        let path = PathBuf::from(rest);
        if !path.exists() {
            return Err(invalid("backend", format!("{} does not exist", path.display())));
        }
        match kind {
            "synthetic" => Ok(BackendSpec::Synthetic(path)),
            "file" => Ok(BackendSpec::File(path)),
            other => Err(invalid("backend", format!("unknown backend kind `{other}`"))),
        }
    }

    pub fn path(&self) -> &PathBuf {
        match self {
            BackendSpec::Synthetic(p) | BackendSpec::File(p) => p,
        }
    }

    pub fn open(&self) -> anyhow::Result<Arc<dyn MaskedLm>> {
        Ok(match self {
            BackendSpec::Synthetic(p) => {
                let text = std::fs::read_to_string(p)?;
                let spec: SyntheticSpec =
                    serde_json::from_str(&text).map_err(|e| invalid("backend", format!("{}: {e}", p.display())))?;
                Arc::new(SyntheticBackend::new(spec)?)
            }
            BackendSpec::File(p) => Arc::new(FileBackend::open(p)?),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn specs_parse_and_reject() {
        let dir = tempfile::tempdir().unwrap();
        let d = dir.path().display();
        assert_eq!(BackendSpec::parse(&format!("file:{d}")).unwrap(), BackendSpec::File(dir.path().into()));
        assert!(BackendSpec::parse(&format!("onnx:{d}")).is_err());
        assert!(BackendSpec::parse("synthetic:/no/such/file.json").is_err());
        assert!(BackendSpec::parse("file").unwrap_err().to_string().contains("`backend`"));
    }
}
