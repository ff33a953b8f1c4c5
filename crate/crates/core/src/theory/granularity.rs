use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Expected answer quality per (query, granularity); complete by
/// construction.
#[derive(Debug, Clone, PartialEq)]
pub struct QualityTable {
    queries: Vec<String>,
    granularities: Vec<String>,
    /// Row-major: `values[q * granularities.len() + g]`.
    values: Vec<f64>,
}

#[derive(Debug, Deserialize)]
struct QualityRow {
    query_id: String,
    granularity: String,
    quality: f64,
}

impl QualityTable {
    pub fn from_entries(entries: impl IntoIterator<Item = (String, String, f64)>) -> Result<Self> {
        let mut map = BTreeMap::new();
        for (q, g, f) in entries {
            if !(0.0..=1.0).contains(&f) {
                return Err(Error::invalid(format!("quality {f} for ({q}, {g}) outside [0, 1]")));
            }
            if map.insert((q.clone(), g.clone()), f).is_some() {
                return Err(Error::invalid(format!("duplicate entry ({q}, {g})")));
            }
        }
        let queries: Vec<String> = map.keys().map(|k| k.0.clone()).collect::<BTreeSet<_>>().into_iter().collect();
        let granularities: Vec<String> =
            map.keys().map(|k| k.1.clone()).collect::<BTreeSet<_>>().into_iter().collect();
        if queries.is_empty() {
            return Err(Error::IncompleteTable("no entries".into()));
        }
        let mut values = Vec::with_capacity(queries.len() * granularities.len());
        for q in &queries {
            for g in &granularities {
                let f = map
                    .get(&(q.clone(), g.clone()))
                    .ok_or_else(|| Error::IncompleteTable(format!("no value for query {q} at granularity {g}")))?;
                values.push(*f);
            }
        }
        Ok(Self {
            queries,
            granularities,
            values,
        })
    }

    /// Dense constructor; `rows[q][g]`.
    pub fn from_rows(granularities: Vec<String>, rows: Vec<(String, Vec<f64>)>) -> Result<Self> {
        let mut entries = Vec::new();
        for (q, row) in rows {
            if row.len() != granularities.len() {
                return Err(Error::IncompleteTable(format!("query {q} has {} values", row.len())));
            }
            entries.extend(granularities.iter().cloned().zip(row).map(|(g, f)| (q.clone(), g, f)));
        }
        Self::from_entries(entries)
    }

    /// Long-format CSV with header `query_id,granularity,quality`.
    pub fn load_csv(path: &Path) -> Result<Self> {
        let mut reader = csv::Reader::from_path(path)?;
        let rows: Vec<QualityRow> = reader.deserialize().collect::<std::result::Result<_, _>>()?;
        Self::from_entries(rows.into_iter().map(|r| (r.query_id, r.granularity, r.quality)))
    }

    pub fn queries(&self) -> &[String] {
        &self.queries
    }

    pub fn granularities(&self) -> &[String] {
        &self.granularities
    }

    pub fn get(&self, q: usize, g: usize) -> f64 {
        self.values[q * self.granularities.len() + g]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PolicyComparison {
    pub best_fixed_sum: f64,
    pub best_fixed_granularity: String,
    pub adaptive_sum: f64,
    pub strict: bool,
}

/// Best single granularity for all queries versus the per-query best.
pub fn compare_granularity_policies(table: &QualityTable) -> PolicyComparison {
    let nq = table.queries.len();
    let ng = table.granularities.len();
    let (best_g, best_fixed_sum) = (0..ng)
        .map(|g| (g, (0..nq).map(|q| table.get(q, g)).sum::<f64>()))
        .fold((0, f64::NEG_INFINITY), |best, cur| if cur.1 > best.1 { cur } else { best });
    let adaptive_sum: f64 = (0..nq)
        .map(|q| (0..ng).map(|g| table.get(q, g)).fold(f64::NEG_INFINITY, f64::max))
        .sum();
    PolicyComparison {
        best_fixed_sum,
        best_fixed_granularity: table.granularities[best_g].clone(),
        adaptive_sum,
        strict: adaptive_sum > best_fixed_sum,
    }
}

impl PolicyComparison {
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["best_fixed_granularity", "best_fixed_sum", "adaptive_sum", "strict"])?;
        w.write_record([
            self.best_fixed_granularity.clone(),
            format!("{:.6}", self.best_fixed_sum),
            format!("{:.6}", self.adaptive_sum),
            self.strict.to_string(),
        ])?;
        let bytes = w.into_inner().map_err(|e| Error::invalid(e.to_string()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }
}
