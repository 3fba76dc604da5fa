use std::collections::HashMap;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

/// Term frequencies read from a `term<TAB>count` file. Terms are matched
/// case-insensitively with spaces (not underscores) between words.
#[derive(Debug, Clone, Default)]
pub struct FrequencyTable {
    counts: HashMap<String, f64>,
}

impl FrequencyTable {
    pub fn load(path: &Path) -> Result<FrequencyTable> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut table = FrequencyTable::default();
        for (n, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let (term, count) = line
                .split_once('\t')
                .ok_or_else(|| Error::parse(path.display().to_string(), n + 1, "expected term<TAB>count"))?;
            let count: f64 = count
                .trim()
                .parse()
                .ok()
                .filter(|c: &f64| c.is_finite() && *c >= 0.0)
                .ok_or_else(|| Error::parse(path.display().to_string(), n + 1, format!("bad count `{count}`")))?;
            table.insert(term, count);
        }
        Ok(table)
    }

    pub fn insert(&mut self, term: &str, count: f64) {
        self.counts.insert(normalize(term), count);
    }

    /// Frequency of a term; unknown terms count as zero.
    pub fn count(&self, term: &str) -> f64 {
        self.counts.get(&normalize(term)).copied().unwrap_or(0.0)
    }

    pub fn len(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }
}

fn normalize(term: &str) -> String {
    term.trim().replace('_', " ").to_lowercase()
}
