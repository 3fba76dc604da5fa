use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::templates::relation_rank;
use crate::error::{Error, Result};
use crate::triple::Source;

/// Ranking result of one instance. `best_rank` is the 1-based rank of the
/// best-placed gold tail, `None` when no gold tail could be ranked.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InstanceOutcome {
    pub id: String,
    pub source: Source,
    pub relation: String,
    pub best_rank: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub source: Option<Source>,
    pub relation: Option<String>,
    pub instances: usize,
    /// Fractions in `[0, 1]`, one per entry of the report's `ks`.
    pub precision: Vec<f64>,
    pub mrr: f64,
}

impl MetricsRow {
    pub fn label(&self) -> String {
        match (&self.source, &self.relation) {
            (_, Some(r)) => r.clone(),
            (Some(s), None) => s.to_string(),
            (None, None) => "All".to_string(),
        }
    }

    pub fn p_at(&self, ks: &[usize], k: usize) -> Option<f64> {
        ks.iter().position(|&x| x == k).map(|i| self.precision[i])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub ks: Vec<usize>,
    /// All, then each source followed by its relations.
    pub rows: Vec<MetricsRow>,
    /// Ids of instances that could not be ranked; not part of any mean.
    pub errors: Vec<String>,
}

/// Exact tally: how many instances had their best gold at each rank.
#[derive(Default)]
struct Tally(BTreeMap<usize, u64>);

impl Tally {
    fn add(&mut self, rank: usize) {
        *self.0.entry(rank).or_insert(0) += 1;
    }

    fn row(&self, source: Option<Source>, relation: Option<String>, ks: &[usize]) -> MetricsRow {
        let n: u64 = self.0.values().sum();
        let frac = |x: f64| if n == 0 { 0.0 } else { x / n as f64 };
        let precision = ks
            .iter()
            .map(|&k| frac(self.0.range(..=k).map(|(_, c)| *c).sum::<u64>() as f64))
            .collect();
        // ascending rank order keeps the sum independent of instance order
        let rr: f64 = self.0.iter().map(|(&r, &c)| c as f64 / r as f64).sum();
        MetricsRow {
            source,
            relation,
            instances: n as usize,
            precision,
            mrr: frac(rr),
        }
    }
}

/// Aggregates per-instance outcomes into All / source / relation rows.
/// Means are over instances.
pub fn compute_report(outcomes: &[InstanceOutcome], ks: &[usize]) -> Result<MetricsReport> {
    if ks.is_empty() || ks.contains(&0) {
        return Err(Error::Invalid("ks must be non-empty and positive".into()));
    }
    let mut ks = ks.to_vec();
    ks.sort_unstable();
    ks.dedup();
    let mut all = Tally::default();
    let mut by_source: BTreeMap<Source, Tally> = BTreeMap::new();
    let mut by_rel: BTreeMap<(Source, usize, &str), Tally> = BTreeMap::new();
    let mut errors = Vec::new();
    for o in outcomes {
        let Some(rank) = o.best_rank else {
            errors.push(o.id.clone());
            continue;
        };
        all.add(rank);
        by_source.entry(o.source).or_default().add(rank);
        by_rel
            .entry((o.source, relation_rank(o.source, &o.relation), &o.relation))
            .or_default()
            .add(rank);
    }
    errors.sort();
    let mut rows = vec![all.row(None, None, &ks)];
    for (source, tally) in &by_source {
        rows.push(tally.row(Some(*source), None, &ks));
        for ((_, _, rel), t) in by_rel.iter().filter(|((s, _, _), _)| s == source) {
            rows.push(t.row(Some(*source), Some(rel.to_string()), &ks));
        }
    }
    Ok(MetricsReport { ks, rows, errors })
}

impl MetricsReport {
    pub fn all(&self) -> &MetricsRow {
        &self.rows[0]
    }

    pub fn row(&self, label: &str) -> Option<&MetricsRow> {
        self.rows.iter().find(|r| r.label() == label)
    }

    /// Tab-separated, values in percent with two decimals.
    pub fn to_tsv(&self) -> String {
        let mut out = String::from("group\tinstances");
        for k in &self.ks {
            out.push_str(&format!("\tP@{k}"));
        }
        out.push_str("\tMRR\n");
        for r in &self.rows {
            out.push_str(&format!("{}\t{}", r.label(), r.instances));
            for p in &r.precision {
                out.push_str(&format!("\t{:.2}", p * 100.0));
            }
            out.push_str(&format!("\t{:.2}\n", r.mrr * 100.0));
        }
        out
    }

    pub fn from_tsv(text: &str) -> Result<MetricsReport> {
        let mut lines = text.lines();
        let header: Vec<&str> = lines.next().unwrap_or("").split('\t').collect();
        let bad = |m: String| Error::parse("<metrics tsv>", 1, m);
        if header.len() < 4 || header[0] != "group" || header.last() != Some(&"MRR") {
            return Err(bad("not a metrics table".into()));
        }
        let ks = header[2..header.len() - 1]
            .iter()
            .map(|h| h.strip_prefix("P@").and_then(|k| k.parse().ok()).ok_or_else(|| bad(format!("bad column {h}"))))
            .collect::<Result<Vec<usize>>>()?;
        let mut rows = Vec::new();
        let mut source = None;
        for (n, line) in lines.enumerate() {
            let cols: Vec<&str> = line.split('\t').collect();
            if cols.len() != header.len() {
                return Err(Error::parse("<metrics tsv>", n + 2, "column count"));
            }
            let num = |s: &str| s.parse::<f64>().map(|v| v / 100.0).map_err(|e| Error::parse("<metrics tsv>", n + 2, e.to_string()));
            let label = cols[0];
            let (src, rel) = if label == "All" {
                (None, None)
            } else if let Some(s) = Source::ALL.into_iter().find(|s| s.as_str() == label) {
                source = Some(s);
                (Some(s), None)
            } else {
                (source, Some(label.to_string()))
            };
            rows.push(MetricsRow {
                source: src,
                relation: rel,
                instances: cols[1].parse().map_err(|_| Error::parse("<metrics tsv>", n + 2, "instances"))?,
                precision: cols[2..cols.len() - 1].iter().map(|c| num(c)).collect::<Result<_>>()?,
                mrr: num(cols[cols.len() - 1])?,
            });
        }
        Ok(MetricsReport { ks, rows, errors: Vec::new() })
    }

    /// Aligned text table, relations indented under their source; rows with
    /// no instances print `-`.
    pub fn render_table(&self) -> String {
        let width = self.rows.iter().map(|r| r.label().len() + 2).max().unwrap_or(8).max(8);
        let mut out = format!("{:<width$}", "");
        for k in &self.ks {
            out.push_str(&format!("{:>8}", format!("P@{k}")));
        }
        out.push_str(&format!("{:>8}\n", "MRR"));
        for r in &self.rows {
            let indent = if r.relation.is_some() { "  " } else { "" };
            out.push_str(&format!("{:<width$}", format!("{indent}{}", r.label())));
            for v in r.precision.iter().chain([&r.mrr]) {
                let cell = if r.instances == 0 { "-".to_string() } else { format!("{:.2}", v * 100.0) };
                out.push_str(&format!("{cell:>8}"));
            }
            out.push('\n');
        }
        out
    }
}
