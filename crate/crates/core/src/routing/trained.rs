//! Multi-label linear router over hashed character 3-gram features.
//!
//! One logistic output per pathway, trained with binary cross-entropy on
//! multi-hot targets by full-batch gradient descent. At inference every
//! pathway whose sigmoid clears the threshold is selected; if none does,
//! the argmax is used.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{resolve_none, RouteSource, Router, RoutingDecision};
use crate::embed::{hash_embed_sparse, MIN_DIM};
use crate::error::{Error, Result};
use crate::pathway::{check_exclusive, parse_label_list, GranularityScheme, Pathway, PathwaySet};
use crate::vecfile;

pub const DEFAULT_THRESHOLD: f64 = 0.8;
pub const MODEL_MAGIC: &[u8; 8] = b"URAGRTR1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoutingExample {
    pub query: String,
    pub labels: PathwaySet,
}

impl RoutingExample {
    pub fn new(query: impl Into<String>, labels: impl IntoIterator<Item = Pathway>) -> Self {
        Self {
            query: query.into(),
            labels: labels.into_iter().collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RouterTrainingConfig {
    pub epochs: usize,
    /// Full-batch step size. Features are unit-norm, so steps below ~4
    /// keep the loss monotone.
    pub learning_rate: f64,
    pub seed: u64,
    pub dim: usize,
    pub threshold: f64,
    pub scheme: GranularityScheme,
}

impl Default for RouterTrainingConfig {
    fn default() -> Self {
        Self {
            epochs: 5,
            learning_rate: 0.1,
            seed: 0,
            dim: 4096,
            threshold: DEFAULT_THRESHOLD,
            scheme: GranularityScheme::Default7,
        }
    }
}

impl RouterTrainingConfig {
    fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::invalid("epochs must be at least 1"));
        }
        if self.learning_rate.is_nan() || self.learning_rate <= 0.0 {
            return Err(Error::invalid("learning rate must be positive"));
        }
        if self.dim < MIN_DIM {
            return Err(Error::DimTooSmall(self.dim));
        }
        if !(self.threshold > 0.0 && self.threshold < 1.0) {
            return Err(Error::invalid("threshold must lie in (0,1)"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainedRouterModel {
    pub dim: usize,
    pub seed: u64,
    pub scheme: GranularityScheme,
    /// Canonical order; one row of `weights` per label.
    pub labels: Vec<Pathway>,
    pub weights: Vec<f32>,
    pub bias: Vec<f32>,
    pub threshold: f64,
}

#[derive(Serialize, Deserialize)]
struct ModelHeader {
    dim: usize,
    seed: u64,
    scheme: GranularityScheme,
    labels: Vec<Pathway>,
    threshold: f64,
    bias: Vec<f32>,
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// BCE computed from the logit, stable for large |z|.
fn bce_with_logit(z: f64, y: f64) -> f64 {
    z.max(0.0) - z * y + (-z.abs()).exp().ln_1p()
}

impl TrainedRouterModel {
    /// Zero weights and biases: every label scores 0.5.
    pub fn zeros(scheme: GranularityScheme, dim: usize, seed: u64, threshold: f64) -> Self {
        let labels = scheme.pathways();
        Self {
            dim,
            seed,
            scheme,
            weights: vec![0.0; labels.len() * dim],
            bias: vec![0.0; labels.len()],
            labels,
            threshold,
        }
    }

    /// Pre-sigmoid margins in label order. Queries without any 3-gram
    /// feature get the bias alone.
    pub fn logits(&self, query: &str) -> Vec<f64> {
        let features = hash_embed_sparse(query, self.dim, self.seed).unwrap_or_default();
        self.labels
            .iter()
            .enumerate()
            .map(|(l, _)| {
                let row = &self.weights[l * self.dim..(l + 1) * self.dim];
                self.bias[l] as f64
                    + features
                        .iter()
                        .map(|&(i, v)| row[i as usize] as f64 * v)
                        .sum::<f64>()
            })
            .collect()
    }

    pub fn scores(&self, query: &str) -> Vec<(Pathway, f64)> {
        self.labels
            .iter()
            .copied()
            .zip(self.logits(query).into_iter().map(sigmoid))
            .collect()
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let header = ModelHeader {
            dim: self.dim,
            seed: self.seed,
            scheme: self.scheme,
            labels: self.labels.clone(),
            threshold: self.threshold,
            bias: self.bias.clone(),
        };
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        let json = serde_json::to_string(&header).map_err(|e| Error::json("model header", e))?;
        w.write_all(MODEL_MAGIC)
            .and_then(|_| w.write_all(json.as_bytes()))
            .and_then(|_| w.write_all(b"\n"))
            .and_then(|_| vecfile::write_block(&mut w, self.dim, &self.weights))
            .and_then(|_| w.flush())
            .map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let mut r = BufReader::new(file);
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic).map_err(|e| Error::io(path, e))?;
        if &magic != MODEL_MAGIC {
            return Err(Error::BadMagic {
                path: path.to_path_buf(),
                expected: "URAGRTR1",
            });
        }
        let mut line = String::new();
        r.read_line(&mut line).map_err(|e| Error::io(path, e))?;
        let header: ModelHeader =
            serde_json::from_str(line.trim_end()).map_err(|e| Error::json(path.display().to_string(), e))?;
        let block = vecfile::read_block(&mut r, path)?;
        if block.dim != header.dim {
            return Err(Error::DimensionMismatch {
                expected: header.dim,
                actual: block.dim,
            });
        }
        if block.count != header.labels.len() || header.bias.len() != header.labels.len() {
            return Err(Error::CountMismatch {
                what: "model labels".into(),
                expected: header.labels.len(),
                actual: block.count,
            });
        }
        let mut expected = header.scheme.pathways();
        expected.sort();
        let mut got = header.labels.clone();
        got.sort();
        if got != expected {
            return Err(Error::invalid("model labels do not cover the scheme exactly once"));
        }
        Ok(Self {
            dim: header.dim,
            seed: header.seed,
            scheme: header.scheme,
            labels: header.labels,
            weights: block.data,
            bias: header.bias,
            threshold: header.threshold,
        })
    }
}

/// Applies the threshold, argmax fallback and `none` exclusivity to a
/// scored label list. Ties in the fallback go to the earliest label.
pub fn decide(scored: &[(Pathway, f64)], threshold: f64) -> PathwaySet {
    let scores: BTreeMap<Pathway, f64> = scored.iter().copied().collect();
    let mut selected: PathwaySet = scored
        .iter()
        .filter(|(_, s)| *s >= threshold)
        .map(|(p, _)| *p)
        .collect();
    if selected.is_empty() {
        let mut best: Option<(Pathway, f64)> = None;
        for &(p, s) in scored {
            if best.is_none_or(|(_, b)| s > b) {
                best = Some((p, s));
            }
        }
        selected.extend(best.map(|(p, _)| p));
    }
    resolve_none(selected, &scores)
}

pub fn route_trained(model: &TrainedRouterModel, query: &str) -> RoutingDecision {
    let scored = model.scores(query);
    RoutingDecision {
        pathways: decide(&scored, model.threshold),
        scores: scored.into_iter().collect(),
        source: RouteSource::Trained,
    }
}

impl Router for TrainedRouterModel {
    fn route(&self, query: &str) -> Result<RoutingDecision> {
        Ok(route_trained(self, query))
    }
}

pub fn train_router(dataset: &[RoutingExample], config: &RouterTrainingConfig) -> Result<TrainedRouterModel> {
    train_router_with_history(dataset, config).map(|(m, _)| m)
}

/// Trains and also returns the mean training BCE (summed over labels)
/// before each epoch's update, followed by the final loss.
pub fn train_router_with_history(
    dataset: &[RoutingExample],
    config: &RouterTrainingConfig,
) -> Result<(TrainedRouterModel, Vec<f64>)> {
    config.validate()?;
    if dataset.is_empty() {
        return Err(Error::invalid("empty routing dataset"));
    }
    let labels = config.scheme.pathways();
    let dim = config.dim;
    let mut features = Vec::with_capacity(dataset.len());
    let mut targets = Vec::with_capacity(dataset.len());
    for ex in dataset {
        if ex.labels.is_empty() {
            return Err(Error::invalid(format!("example {:?} has no labels", ex.query)));
        }
        check_exclusive(&ex.labels, &ex.query)?;
        if let Some(bad) = ex.labels.iter().find(|p| !config.scheme.contains(**p)) {
            return Err(Error::UnknownLabel(bad.label().to_string()));
        }
        features.push(hash_embed_sparse(&ex.query, dim, config.seed)?);
        targets.push(
            labels
                .iter()
                .map(|p| if ex.labels.contains(p) { 1.0 } else { 0.0 })
                .collect::<Vec<f64>>(),
        );
    }

    let n = dataset.len() as f64;
    let n_labels = labels.len();
    let mut w = vec![0.0f64; n_labels * dim];
    let mut b = vec![0.0f64; n_labels];
    let mut grad_w = vec![0.0f64; n_labels * dim];
    let mut grad_b = vec![0.0f64; n_labels];
    let mut history = Vec::with_capacity(config.epochs + 1);

    let pass = |w: &[f64], b: &[f64], grad_w: &mut [f64], grad_b: &mut [f64]| -> f64 {
        grad_w.iter_mut().for_each(|g| *g = 0.0);
        grad_b.iter_mut().for_each(|g| *g = 0.0);
        let mut loss = 0.0;
        for (x, y) in features.iter().zip(&targets) {
            for l in 0..n_labels {
                let row = &w[l * dim..(l + 1) * dim];
                let z = b[l] + x.iter().map(|&(i, v)| row[i as usize] * v).sum::<f64>();
                loss += bce_with_logit(z, y[l]);
                let g = (sigmoid(z) - y[l]) / n;
                grad_b[l] += g;
                let grow = &mut grad_w[l * dim..(l + 1) * dim];
                for &(i, v) in x {
                    grow[i as usize] += g * v;
                }
            }
        }
        loss / n
    };

    for _ in 0..config.epochs {
        history.push(pass(&w, &b, &mut grad_w, &mut grad_b));
        for (wi, gi) in w.iter_mut().zip(&grad_w) {
            *wi -= config.learning_rate * gi;
        }
        for (bi, gi) in b.iter_mut().zip(&grad_b) {
            *bi -= config.learning_rate * gi;
        }
    }
    history.push(pass(&w, &b, &mut grad_w, &mut grad_b));

    let model = TrainedRouterModel {
        dim,
        seed: config.seed,
        scheme: config.scheme,
        labels,
        weights: w.into_iter().map(|x| x as f32).collect(),
        bias: b.into_iter().map(|x| x as f32).collect(),
        threshold: config.threshold,
    };
    Ok((model, history))
}

#[derive(Deserialize)]
struct RawExample {
    query: String,
    #[serde(default)]
    labels: Option<Vec<String>>,
    #[serde(default)]
    gold_pathways: Option<Vec<String>>,
}

/// Reads `{"query", "labels"}` lines. Gold files (`gold_pathways`) are
/// accepted too.
pub fn load_routing_dataset(path: &Path, scheme: GranularityScheme) -> Result<Vec<RoutingExample>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (lineno, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let ctx = || format!("{}:{}", path.display(), lineno + 1);
        let raw: RawExample = serde_json::from_str(&line).map_err(|e| Error::json(ctx(), e))?;
        let names = raw
            .labels
            .or(raw.gold_pathways)
            .ok_or_else(|| Error::invalid(format!("{}: missing labels", ctx())))?;
        out.push(RoutingExample {
            query: raw.query,
            labels: parse_label_list(&names, scheme)?,
        });
    }
    Ok(out)
}
