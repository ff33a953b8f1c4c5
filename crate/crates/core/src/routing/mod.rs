//! Query routers: map a query to the set of pathways to retrieve from.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::pathway::{Pathway, PathwaySet};

mod ensemble;
mod prompt;
mod random;
mod trained;

pub use ensemble::{route_ensemble_confidence, route_ensemble_majority, ConfidenceEnsemble, MajorityEnsemble};
pub use prompt::{render_prompt, route_prompt, PromptRouter, PROMPT_VERSION};
pub use random::{route_random, route_random_among, RandomRouter};
pub use trained::{
    decide, load_routing_dataset, route_trained, train_router, train_router_with_history, RouterTrainingConfig,
    RoutingExample, TrainedRouterModel, DEFAULT_THRESHOLD, MODEL_MAGIC,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RouteSource {
    Trained,
    Prompt,
    Random,
    EnsembleConfidence,
    EnsembleMajority,
    Fixed,
    Oracle,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoutingDecision {
    pub pathways: PathwaySet,
    pub scores: BTreeMap<Pathway, f64>,
    pub source: RouteSource,
}

impl RoutingDecision {
    /// Decision with every selected pathway scored 1.0.
    pub fn certain(pathways: PathwaySet, source: RouteSource) -> Self {
        let scores = pathways.iter().map(|&p| (p, 1.0)).collect();
        Self {
            pathways,
            scores,
            source,
        }
    }

    /// Highest score among the selected pathways.
    pub fn confidence(&self) -> f64 {
        self.pathways
            .iter()
            .filter_map(|p| self.scores.get(p))
            .copied()
            .fold(0.0, f64::max)
    }

    pub fn with_source(mut self, source: RouteSource) -> Self {
        self.source = source;
        self
    }
}

pub trait Router: Send + Sync {
    fn route(&self, query: &str) -> Result<RoutingDecision>;
}

impl<R: Router + ?Sized> Router for Box<R> {
    fn route(&self, query: &str) -> Result<RoutingDecision> {
        (**self).route(query)
    }
}

impl<R: Router + ?Sized> Router for &R {
    fn route(&self, query: &str) -> Result<RoutingDecision> {
        (**self).route(query)
    }
}

/// Always returns the same pathway set.
#[derive(Debug, Clone)]
pub struct FixedRouter {
    pathways: PathwaySet,
}

impl FixedRouter {
    pub fn new(pathways: impl IntoIterator<Item = Pathway>) -> Result<Self> {
        let pathways: PathwaySet = pathways.into_iter().collect();
        if pathways.is_empty() {
            return Err(crate::error::Error::invalid("fixed router needs at least one pathway"));
        }
        crate::pathway::check_exclusive(&pathways, "fixed router")?;
        Ok(Self { pathways })
    }
}

impl Router for FixedRouter {
    fn route(&self, _query: &str) -> Result<RoutingDecision> {
        Ok(RoutingDecision::certain(self.pathways.clone(), RouteSource::Fixed))
    }
}

/// Looks up gold pathways by exact query text.
#[derive(Debug, Clone, Default)]
pub struct OracleRouter {
    gold: HashMap<String, PathwaySet>,
}

impl OracleRouter {
    pub fn new(gold: impl IntoIterator<Item = (String, PathwaySet)>) -> Self {
        Self {
            gold: gold.into_iter().collect(),
        }
    }
}

impl Router for OracleRouter {
    fn route(&self, query: &str) -> Result<RoutingDecision> {
        let pathways = self
            .gold
            .get(query)
            .cloned()
            .ok_or_else(|| crate::error::Error::invalid(format!("oracle has no gold for {query:?}")))?;
        Ok(RoutingDecision::certain(pathways, RouteSource::Oracle))
    }
}

/// Resolves a co-selected `none`: keep only `none` when its score is
/// maximal among the selection, otherwise drop it.
pub(crate) fn resolve_none(mut selected: PathwaySet, scores: &BTreeMap<Pathway, f64>) -> PathwaySet {
    if selected.contains(&Pathway::None) && selected.len() > 1 {
        let score = |p: &Pathway| scores.get(p).copied().unwrap_or(0.0);
        let none_score = score(&Pathway::None);
        let best_other = selected
            .iter()
            .filter(|p| !p.is_none())
            .map(score)
            .fold(f64::NEG_INFINITY, f64::max);
        if none_score >= best_other {
            selected = PathwaySet::from([Pathway::None]);
        } else {
            selected.remove(&Pathway::None);
        }
    }
    selected
}
