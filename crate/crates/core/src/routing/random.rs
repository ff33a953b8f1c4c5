//! Uniform single-pathway baseline.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{RouteSource, Router, RoutingDecision};
use crate::embed::stable_hash;
use crate::error::{Error, Result};
use crate::pathway::{GranularityScheme, Pathway, PathwaySet};

/// Draws one pathway uniformly from the scheme. Its score is the draw
/// probability `1 / |universe|`.
pub fn route_random(scheme: GranularityScheme, rng_seed: u64) -> RoutingDecision {
    route_random_among(&scheme.pathways(), rng_seed).expect("schemes are non-empty")
}

/// Uniform draw from an explicit candidate list.
pub fn route_random_among(candidates: &[Pathway], rng_seed: u64) -> Result<RoutingDecision> {
    if candidates.is_empty() {
        return Err(Error::invalid("random router needs at least one candidate"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let pick = candidates[rng.gen_range(0..candidates.len())];
    Ok(RoutingDecision {
        pathways: PathwaySet::from([pick]),
        scores: [(pick, 1.0 / candidates.len() as f64)].into(),
        source: RouteSource::Random,
    })
}

/// Seeds each draw from `(seed, query text)`, so results do not depend
/// on evaluation order.
#[derive(Debug, Clone)]
pub struct RandomRouter {
    candidates: Vec<Pathway>,
    seed: u64,
}

impl RandomRouter {
    pub fn new(scheme: GranularityScheme, seed: u64) -> Self {
        Self {
            candidates: scheme.pathways(),
            seed,
        }
    }

    pub fn among(candidates: Vec<Pathway>, seed: u64) -> Result<Self> {
        if candidates.is_empty() {
            return Err(Error::invalid("random router needs at least one candidate"));
        }
        Ok(Self { candidates, seed })
    }
}

impl Router for RandomRouter {
    fn route(&self, query: &str) -> Result<RoutingDecision> {
        route_random_among(&self.candidates, stable_hash(query, self.seed))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeMap;

    #[test]
    fn seeded_determinism() {
        assert_eq!(route_random(GranularityScheme::Default7, 9), route_random(GranularityScheme::Default7, 9));
        let r = RandomRouter::new(GranularityScheme::Default7, 4);
        assert_eq!(r.route("q").unwrap(), r.route("q").unwrap());
    }

    #[test]
    fn uniform_frequencies() {
        let mut counts = BTreeMap::new();
        let draws = 70_000;
        for seed in 0..draws {
            let d = route_random(GranularityScheme::Default7, seed);
            assert_eq!(d.pathways.len(), 1);
            *counts.entry(*d.pathways.iter().next().unwrap()).or_insert(0usize) += 1;
        }
        assert_eq!(counts.len(), 7);
        for (p, c) in counts {
            let freq = c as f64 / draws as f64;
            assert!((freq - 1.0 / 7.0).abs() <= 0.02, "{p}: {freq}");
        }
    }

    #[test]
    fn extended_draws_stay_in_scheme() {
        for seed in 0..2000 {
            let d = route_random(GranularityScheme::Extended, seed);
            assert!(d.pathways.iter().all(|p| GranularityScheme::Extended.contains(*p)));
        }
    }
}
