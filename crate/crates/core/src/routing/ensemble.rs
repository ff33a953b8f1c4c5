//! Confidence-gated and majority-vote router ensembles.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{resolve_none, RouteSource, Router, RoutingDecision};
use crate::embed::stable_hash;
use crate::error::{Error, Result};
use crate::pathway::{Pathway, PathwaySet};

/// Keeps the trained decision when its confidence (max selected score)
/// reaches `conf_threshold`, otherwise returns `fallback`.
pub fn route_ensemble_confidence(
    trained_decision: RoutingDecision,
    fallback: RoutingDecision,
    conf_threshold: f64,
) -> RoutingDecision {
    let chosen = if trained_decision.confidence() >= conf_threshold {
        trained_decision
    } else {
        fallback
    };
    chosen.with_source(RouteSource::EnsembleConfidence)
}

/// Per-pathway vote over exactly three decisions; pathways with two or
/// more votes win. Without a majority, one input is drawn with `rng_seed`.
pub fn route_ensemble_majority(decisions: &[RoutingDecision], rng_seed: u64) -> Result<RoutingDecision> {
    if decisions.len() != 3 {
        return Err(Error::invalid(format!(
            "majority voting needs exactly 3 decisions, got {}",
            decisions.len()
        )));
    }
    let mut votes: BTreeMap<Pathway, usize> = BTreeMap::new();
    for d in decisions {
        for &p in &d.pathways {
            *votes.entry(p).or_default() += 1;
        }
    }
    let scores: BTreeMap<Pathway, f64> = votes.iter().map(|(&p, &v)| (p, v as f64 / 3.0)).collect();
    let winners: PathwaySet = votes.iter().filter(|(_, &v)| v >= 2).map(|(&p, _)| p).collect();

    if winners.is_empty() {
        // sort so the draw does not depend on input order
        let mut inputs: Vec<&RoutingDecision> = decisions.iter().collect();
        inputs.sort_by(|a, b| a.pathways.cmp(&b.pathways));
        let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
        let pick = inputs[rng.gen_range(0..3)];
        return Ok(RoutingDecision {
            pathways: pick.pathways.clone(),
            scores: pick.pathways.iter().map(|p| (*p, scores[p])).collect(),
            source: RouteSource::EnsembleMajority,
        });
    }
    let pathways = resolve_none(winners, &scores);
    Ok(RoutingDecision {
        scores: pathways.iter().map(|p| (*p, scores[p])).collect(),
        pathways,
        source: RouteSource::EnsembleMajority,
    })
}

pub struct ConfidenceEnsemble {
    pub primary: Box<dyn Router>,
    pub fallback: Box<dyn Router>,
    pub threshold: f64,
}

impl Router for ConfidenceEnsemble {
    fn route(&self, query: &str) -> Result<RoutingDecision> {
        let primary = self.primary.route(query)?;
        if primary.confidence() >= self.threshold {
            return Ok(primary.with_source(RouteSource::EnsembleConfidence));
        }
        Ok(route_ensemble_confidence(primary, self.fallback.route(query)?, self.threshold))
    }
}

pub struct MajorityEnsemble {
    pub members: [Box<dyn Router>; 3],
    pub seed: u64,
}

impl Router for MajorityEnsemble {
    fn route(&self, query: &str) -> Result<RoutingDecision> {
        let decisions = self
            .members
            .iter()
            .map(|r| r.route(query))
            .collect::<Result<Vec<_>>>()?;
        route_ensemble_majority(&decisions, stable_hash(query, self.seed))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pathway::Granularity::*;

    fn d(ps: &[Pathway]) -> RoutingDecision {
        RoutingDecision::certain(ps.iter().copied().collect(), RouteSource::Fixed)
    }

    fn scored(p: Pathway, s: f64) -> RoutingDecision {
        RoutingDecision {
            pathways: PathwaySet::from([p]),
            scores: [(p, s)].into(),
            source: RouteSource::Trained,
        }
    }

    const IMG: Pathway = Pathway::Target(Image);
    const PAR: Pathway = Pathway::Target(Paragraph);

    #[test]
    fn confidence_gate() {
        let fb = d(&[Pathway::Target(Video)]);
        let kept = route_ensemble_confidence(scored(IMG, 0.95), fb.clone(), 0.8);
        assert_eq!(kept.pathways, PathwaySet::from([IMG]));
        assert_eq!(kept.source, RouteSource::EnsembleConfidence);
        let fell = route_ensemble_confidence(scored(IMG, 0.55), fb.clone(), 0.8);
        assert_eq!(fell.pathways, fb.pathways);
        let boundary = route_ensemble_confidence(scored(IMG, 0.8), fb, 0.8);
        assert_eq!(boundary.pathways, PathwaySet::from([IMG]));
    }

    #[test]
    fn majority_examples() {
        let out = route_ensemble_majority(&[d(&[IMG]), d(&[IMG]), d(&[PAR])], 0).unwrap();
        assert_eq!(out.pathways, PathwaySet::from([IMG]));
        let out = route_ensemble_majority(
            &[d(&[PAR, IMG]), d(&[IMG]), d(&[IMG, Pathway::Target(Table)])],
            0,
        )
        .unwrap();
        assert_eq!(out.pathways, PathwaySet::from([IMG]));
        assert_eq!(out.scores[&IMG], 1.0);
    }

    #[test]
    fn tie_break_is_seeded() {
        let inputs = [d(&[PAR]), d(&[IMG]), d(&[Pathway::Target(Clip)])];
        let first = route_ensemble_majority(&inputs, 1).unwrap();
        assert!(inputs.iter().any(|i| i.pathways == first.pathways));
        for _ in 0..5 {
            assert_eq!(route_ensemble_majority(&inputs, 1).unwrap(), first);
        }
        let permuted = [inputs[2].clone(), inputs[0].clone(), inputs[1].clone()];
        assert_eq!(route_ensemble_majority(&permuted, 1).unwrap(), first);
    }

    #[test]
    fn arity_checked() {
        assert!(route_ensemble_majority(&[d(&[IMG]), d(&[IMG])], 0).is_err());
    }
}
