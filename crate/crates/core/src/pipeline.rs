//! Route a query, retrieve from the selected corpora, merge the contexts.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, CorpusSet};
use crate::embed::Embedder;
use crate::error::{Error, Result};
use crate::pathway::{Pathway, PathwaySet};
use crate::retrieval::{retrieve_topk_fused, unified_retrieve, FusionWeights, RetrievalResult, ScoredEntry};
use crate::routing::{RouteSource, Router, RoutingDecision};
use crate::service::LineService;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MergedEntry {
    pub pathway: Pathway,
    pub corpus_name: String,
    pub item_id: String,
    pub score: f64,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContextBundle {
    pub query_id: String,
    pub query: String,
    pub decision: RoutingDecision,
    pub contexts: Vec<(Pathway, RetrievalResult)>,
    /// Canonical pathway order, then per-corpus rank. Unified-baseline
    /// bundles keep the single score-ordered list instead.
    pub merged: Vec<MergedEntry>,
}

impl ContextBundle {
    pub fn retrieved_pathways(&self) -> PathwaySet {
        self.merged.iter().map(|e| e.pathway).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RetrieveConfig {
    pub k: usize,
    pub weights: FusionWeights,
    /// Embed the query a second time into each corpus' auxiliary text space
    /// and fuse scores for items that carry an auxiliary vector.
    pub fuse_aux: bool,
}

impl RetrieveConfig {
    pub fn new(k: usize) -> Self {
        Self {
            k,
            weights: FusionWeights::default(),
            fuse_aux: true,
        }
    }
}

/// Embeds a query once per distinct dimension.
struct QueryVectors<'a> {
    query: &'a str,
    embedder: &'a dyn Embedder,
    cache: BTreeMap<usize, Vec<f32>>,
}

impl<'a> QueryVectors<'a> {
    fn new(query: &'a str, embedder: &'a dyn Embedder) -> Self {
        Self {
            query,
            embedder,
            cache: BTreeMap::new(),
        }
    }

    fn get(&mut self, dim: usize) -> Result<Vec<f32>> {
        if let Some(v) = self.cache.get(&dim) {
            return Ok(v.clone());
        }
        let v = self.embedder.embed(self.query, dim).map_err(|e| match e {
            Error::Embedder(_) => e,
            other => Error::Embedder(other.to_string()),
        })?;
        self.cache.insert(dim, v.clone());
        Ok(v)
    }
}

fn retrieve_one(corpus: &Corpus, vectors: &mut QueryVectors, config: &RetrieveConfig) -> Result<RetrievalResult> {
    let q = vectors.get(corpus.dim())?;
    let aux = match (config.fuse_aux, corpus.aux_dim()) {
        (true, Some(d)) => Some(vectors.get(d)?),
        _ => None,
    };
    retrieve_topk_fused(&q, aux.as_deref(), corpus, config.k, config.weights)
}

fn merge(contexts: &[(Pathway, RetrievalResult)], corpora: &CorpusSet) -> Vec<MergedEntry> {
    contexts
        .iter()
        .flat_map(|(_, r)| r.entries.iter())
        .map(|e| merged_entry(e, corpora))
        .collect()
}

fn merged_entry(e: &ScoredEntry, corpora: &CorpusSet) -> MergedEntry {
    let text = corpora
        .peek(e.pathway)
        .and_then(|c| c.position(&e.item_id).map(|i| c.payload(i).display_text().to_string()))
        .unwrap_or_default();
    MergedEntry {
        pathway: e.pathway,
        corpus_name: e.corpus_name.clone(),
        item_id: e.item_id.clone(),
        score: e.score,
        text,
    }
}

/// Retrieves for an already-made routing decision. Only the corpora of the
/// selected pathways are touched.
pub fn retrieve_for_decision(
    query_id: &str,
    query: &str,
    decision: RoutingDecision,
    corpora: &CorpusSet,
    embedder: &dyn Embedder,
    config: &RetrieveConfig,
) -> Result<ContextBundle> {
    if config.k == 0 {
        return Err(Error::InvalidK);
    }
    let mut vectors = QueryVectors::new(query, embedder);
    let mut contexts = Vec::new();
    if !decision.pathways.contains(&Pathway::None) {
        for &p in &decision.pathways {
            let corpus = corpora.get(p).ok_or_else(|| Error::MissingCorpus(p.to_string()))?;
            contexts.push((p, retrieve_one(corpus, &mut vectors, config)?));
        }
    }
    let merged = merge(&contexts, corpora);
    Ok(ContextBundle {
        query_id: query_id.to_string(),
        query: query.to_string(),
        decision,
        contexts,
        merged,
    })
}

pub fn route_and_retrieve(
    query_id: &str,
    query: &str,
    router: &dyn Router,
    corpora: &CorpusSet,
    embedder: &dyn Embedder,
    config: &RetrieveConfig,
) -> Result<ContextBundle> {
    let decision = router.route(query)?;
    retrieve_for_decision(query_id, query, decision, corpora, embedder, config)
}

/// Retrieve-everything baseline: every registered corpus, canonical order.
pub fn retrieve_all_bundle(
    query_id: &str,
    query: &str,
    corpora: &CorpusSet,
    embedder: &dyn Embedder,
    config: &RetrieveConfig,
) -> Result<ContextBundle> {
    let decision = RoutingDecision::certain(corpora.pathways().collect(), RouteSource::Fixed);
    retrieve_for_decision(query_id, query, decision, corpora, embedder, config)
}

/// Unified-embedding baseline: one ranked list over the union of all
/// corpora (primary vectors only, one shared dimension).
pub fn unified_bundle(
    query_id: &str,
    query: &str,
    corpora: &CorpusSet,
    embedder: &dyn Embedder,
    k: usize,
) -> Result<ContextBundle> {
    let all: Vec<&Corpus> = corpora.pathways().filter_map(|p| corpora.get(p)).collect();
    let dim = all.first().map(|c| c.dim()).ok_or(Error::EmptyCorpus)?;
    let q = QueryVectors::new(query, embedder).get(dim)?;
    let result = unified_retrieve(&q, &all, k)?;
    let merged: Vec<MergedEntry> = result.entries.iter().map(|e| merged_entry(e, corpora)).collect();

    let mut grouped: BTreeMap<Pathway, Vec<ScoredEntry>> = BTreeMap::new();
    for e in result.entries {
        grouped.entry(e.pathway).or_default().push(e);
    }
    let contexts = grouped
        .into_iter()
        .map(|(p, entries)| (p, RetrievalResult { entries, k }))
        .collect();
    Ok(ContextBundle {
        query_id: query_id.to_string(),
        query: query.to_string(),
        decision: RoutingDecision::certain(corpora.pathways().collect(), RouteSource::Fixed),
        contexts,
        merged,
    })
}

#[derive(Serialize)]
struct GenerateContext<'a> {
    pathway: Pathway,
    id: &'a str,
    text: &'a str,
}

#[derive(Serialize)]
struct GenerateRequest<'a> {
    op: &'static str,
    query: &'a str,
    contexts: Vec<GenerateContext<'a>>,
}

#[derive(Deserialize)]
struct GenerateReply {
    answer: String,
}

pub fn generation_request(bundle: &ContextBundle) -> String {
    let request = GenerateRequest {
        op: "generate",
        query: &bundle.query,
        contexts: bundle
            .merged
            .iter()
            .map(|e| GenerateContext {
                pathway: e.pathway,
                id: &e.item_id,
                text: &e.text,
            })
            .collect(),
    };
    serde_json::to_string(&request).expect("request serializes")
}

/// Sends the query and merged contexts to an external generator and
/// returns its answer verbatim.
pub fn generate_answer(bundle: &ContextBundle, client: &dyn LineService) -> Result<String> {
    let reply = client.call(&generation_request(bundle)).map_err(|e| match e {
        Error::Transport(msg) => Error::GeneratorUnavailable(msg),
        other => other,
    })?;
    let parsed: GenerateReply =
        serde_json::from_str(&reply).map_err(|e| Error::MalformedReply(format!("{e}: {reply}")))?;
    Ok(parsed.answer)
}
