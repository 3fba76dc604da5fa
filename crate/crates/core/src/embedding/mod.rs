//! Named embedding spaces, their file formats, and exact cosine ranking.

mod io;
mod ranking;

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use io::{load_table, load_table_binary, load_table_text, save_table, save_table_binary, save_table_text, TableFormat};
pub use ranking::{cosine, rank_neighbors, Ranking};

/// How a table orders its keys.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum KeyOrder {
    Insertion,
    Sorted,
}

impl KeyOrder {
    pub fn as_str(self) -> &'static str {
        match self {
            KeyOrder::Insertion => "insertion",
            KeyOrder::Sorted => "sorted",
        }
    }

    pub fn parse(s: &str) -> Option<KeyOrder> {
        match s {
            "insertion" => Some(KeyOrder::Insertion),
            "sorted" => Some(KeyOrder::Sorted),
            _ => None,
        }
    }
}

/// Fixed-dimension table of finite vectors keyed by strings.
#[derive(Debug, Clone)]
pub struct EmbeddingTable {
    space_name: String,
    dim: usize,
    order: KeyOrder,
    keys: Vec<String>,
    values: Vec<f64>,
    index: HashMap<String, usize>,
}

impl PartialEq for EmbeddingTable {
    fn eq(&self, other: &Self) -> bool {
        self.space_name == other.space_name
            && self.dim == other.dim
            && self.order == other.order
            && self.keys == other.keys
            && self.values.len() == other.values.len()
            && self.values.iter().zip(&other.values).all(|(a, b)| a.to_bits() == b.to_bits())
    }
}

impl EmbeddingTable {
    pub fn new(space_name: impl Into<String>, dim: usize, order: KeyOrder) -> Result<EmbeddingTable> {
        if dim == 0 {
            return Err(Error::Invalid("embedding dimension must be positive".into()));
        }
        Ok(EmbeddingTable {
            space_name: space_name.into(),
            dim,
            order,
            keys: Vec::new(),
            values: Vec::new(),
            index: HashMap::new(),
        })
    }

    /// Builds a table from entries; with [`KeyOrder::Sorted`] the entries are
    /// sorted by key first.
    pub fn from_entries<K: Into<String>>(
        space_name: impl Into<String>,
        dim: usize,
        order: KeyOrder,
        entries: impl IntoIterator<Item = (K, Vec<f64>)>,
    ) -> Result<EmbeddingTable> {
        let mut entries: Vec<(String, Vec<f64>)> = entries.into_iter().map(|(k, v)| (k.into(), v)).collect();
        if order == KeyOrder::Sorted {
            entries.sort_by(|a, b| a.0.cmp(&b.0));
        }
        let mut table = EmbeddingTable::new(space_name, dim, KeyOrder::Insertion)?;
        for (k, v) in entries {
            table.push(k, v)?;
        }
        table.order = order;
        Ok(table)
    }

    /// Appends an entry. Sorted tables only accept keys greater than the last one.
    pub fn push(&mut self, key: impl Into<String>, vector: Vec<f64>) -> Result<()> {
        let key = key.into();
        if vector.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                found: vector.len(),
            });
        }
        if let Some(bad) = vector.iter().find(|x| !x.is_finite()) {
            return Err(Error::Invalid(format!("non-finite value {bad} for key `{key}`")));
        }
        if key.is_empty() || key.chars().any(char::is_whitespace) {
            return Err(Error::Invalid(format!("key `{key}` is empty or contains whitespace")));
        }
        if self.index.contains_key(&key) {
            return Err(Error::Invalid(format!("duplicate key `{key}`")));
        }
        if self.order == KeyOrder::Sorted && self.keys.last().is_some_and(|last| *last >= key) {
            return Err(Error::Invalid(format!("key `{key}` breaks sorted order")));
        }
        self.index.insert(key.clone(), self.keys.len());
        self.keys.push(key);
        self.values.extend_from_slice(&vector);
        Ok(())
    }

    pub fn space_name(&self) -> &str {
        &self.space_name
    }

    pub fn set_space_name(&mut self, name: impl Into<String>) {
        self.space_name = name.into();
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn order(&self) -> KeyOrder {
        self.order
    }

    pub fn len(&self) -> usize {
        self.keys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keys.is_empty()
    }

    pub fn keys(&self) -> &[String] {
        &self.keys
    }

    pub fn get(&self, key: &str) -> Option<&[f64]> {
        self.position(key).map(|i| self.row(i))
    }

    pub fn position(&self, key: &str) -> Option<usize> {
        self.index.get(key).copied()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.dim..(i + 1) * self.dim]
    }

    pub fn contains(&self, key: &str) -> bool {
        self.index.contains_key(key)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &[f64])> + '_ {
        self.keys.iter().enumerate().map(move |(i, k)| (k.as_str(), self.row(i)))
    }

    /// Keys from `wanted` that have no vector here, in the order given.
    pub fn missing<'a, I: IntoIterator<Item = &'a str>>(&self, wanted: I) -> Vec<String> {
        wanted
            .into_iter()
            .filter(|k| !self.contains(k))
            .map(str::to_string)
            .collect()
    }
}
