use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Score model `s_c = alpha·1{same modality as the query} + X_c` with
/// `X_c = beta·relevance + noise`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoreModelParams {
    pub alpha: f64,
    pub beta: f64,
    pub sigma_r: f64,
    pub sigma_eps: f64,
}

impl ScoreModelParams {
    pub fn new(alpha: f64, beta: f64, sigma_r: f64, sigma_eps: f64) -> Result<Self> {
        let p = Self {
            alpha,
            beta,
            sigma_r,
            sigma_eps,
        };
        p.validate()?;
        Ok(p)
    }

    /// Parameters whose variance proxy is exactly `sigma²`.
    pub fn with_sigma(alpha: f64, sigma: f64) -> Result<Self> {
        Self::new(alpha, 0.0, 0.0, sigma)
    }

    fn validate(&self) -> Result<()> {
        let finite = [self.alpha, self.beta, self.sigma_r, self.sigma_eps].iter().all(|v| v.is_finite());
        if !finite || self.alpha < 0.0 || self.sigma_r < 0.0 || self.sigma_eps < 0.0 {
            return Err(Error::invalid(format!("invalid score model parameters {self:?}")));
        }
        Ok(())
    }

    /// `beta²·sigma_r² + sigma_eps²`.
    pub fn variance_proxy(&self) -> f64 {
        self.beta * self.beta * self.sigma_r * self.sigma_r + self.sigma_eps * self.sigma_eps
    }

    pub fn sigma(&self) -> f64 {
        self.variance_proxy().sqrt()
    }
}

/// Sizes of the query-modality items `S`, the relevant other-modality items
/// `R`, and the remaining items `O`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusSizes {
    pub s: u64,
    pub r: u64,
    pub o: u64,
}

impl CorpusSizes {
    pub fn new(s: u64, r: u64, o: u64) -> Self {
        Self { s, r, o }
    }

    fn check(&self) -> Result<()> {
        if self.s == 0 || self.r == 0 {
            return Err(Error::invalid("|S| and |R| must both be at least 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SimOutcome {
    pub p_unified_in_r: f64,
    pub p_routed_in_r: f64,
    pub se_unified: f64,
    pub se_routed: f64,
    pub chernoff_bound: f64,
    pub trials: u64,
    pub sizes: CorpusSizes,
    pub router_acc: f64,
}

/// `|R|·|S|·exp(-alpha² / 4σ²)`; values above 1 are returned unchanged.
/// With `σ = 0` the limit is used: 0 for `alpha > 0`, `|R|·|S|` otherwise.
pub fn chernoff_bound(params: &ScoreModelParams, sizes: CorpusSizes) -> Result<f64> {
    params.validate()?;
    let pairs = sizes.r as f64 * sizes.s as f64;
    let var = params.variance_proxy();
    if var == 0.0 {
        return Ok(if params.alpha > 0.0 { 0.0 } else { pairs });
    }
    Ok(pairs * (-params.alpha * params.alpha / (4.0 * var)).exp())
}

/// Bias above which routing with accuracy `r` beats unified retrieval:
/// `2σ·sqrt(ln(|R|·|S|) / r)`.
pub fn alpha_threshold(sizes: CorpusSizes, r: f64, sigma: f64) -> Result<f64> {
    if !(r > 0.0 && r <= 1.0) {
        return Err(Error::invalid(format!("router accuracy must lie in (0, 1], got {r}")));
    }
    if !(sigma >= 0.0 && sigma.is_finite()) {
        return Err(Error::invalid(format!("sigma must be non-negative, got {sigma}")));
    }
    sizes.check()?;
    let log_pairs = (sizes.r as f64).ln() + (sizes.s as f64).ln();
    Ok(2.0 * sigma * (log_pairs / r).sqrt())
}

fn max_normal(rng: &mut ChaCha8Rng, n: u64, sigma: f64) -> f64 {
    (0..n)
        .map(|_| rng.sample::<f64, _>(StandardNormal))
        .fold(f64::NEG_INFINITY, f64::max)
        * sigma
}

/// Monte-Carlo estimate of how often the top-1 item lies in `R`, for
/// unified retrieval (argmax over all items) and for routing (success with
/// probability `router_acc`). Each trial draws from its own stream of the
/// seeded generator, so results do not depend on scheduling.
pub fn simulate_unified_vs_routed(
    params: &ScoreModelParams,
    sizes: CorpusSizes,
    router_acc: f64,
    trials: u64,
    seed: u64,
) -> Result<SimOutcome> {
    params.validate()?;
    sizes.check()?;
    if trials == 0 {
        return Err(Error::invalid("trials must be at least 1"));
    }
    if !(0.0..=1.0).contains(&router_acc) {
        return Err(Error::invalid(format!("router accuracy must lie in [0, 1], got {router_acc}")));
    }
    let sigma = params.sigma();
    let (unified, routed) = (0..trials)
        .into_par_iter()
        .map(|trial| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(trial);
            let best_s = params.alpha + max_normal(&mut rng, sizes.s, sigma);
            let best_r = max_normal(&mut rng, sizes.r, sigma);
            let best_o = max_normal(&mut rng, sizes.o, sigma);
            let unified = best_r > best_s && best_r > best_o;
            let routed = rng.gen::<f64>() < router_acc;
            (u64::from(unified), u64::from(routed))
        })
        .reduce(|| (0, 0), |a, b| (a.0 + b.0, a.1 + b.1));

    let n = trials as f64;
    let p_u = unified as f64 / n;
    let p_r = routed as f64 / n;
    Ok(SimOutcome {
        p_unified_in_r: p_u,
        p_routed_in_r: p_r,
        se_unified: (p_u * (1.0 - p_u) / n).sqrt(),
        se_routed: (p_r * (1.0 - p_r) / n).sqrt(),
        chernoff_bound: chernoff_bound(params, sizes)?,
        trials,
        sizes,
        router_acc,
    })
}

/// CSV with one row per simulated parameter set.
pub fn simulation_csv(rows: &[(ScoreModelParams, SimOutcome)]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "alpha",
        "beta",
        "sigma_r",
        "sigma_eps",
        "variance_proxy",
        "size_s",
        "size_r",
        "size_o",
        "router_acc",
        "trials",
        "p_unified_in_r",
        "se_unified",
        "p_routed_in_r",
        "se_routed",
        "chernoff_bound",
        "alpha_threshold",
    ])?;
    for (p, o) in rows {
        let threshold = if o.router_acc > 0.0 {
            format!("{:.6}", alpha_threshold(o.sizes, o.router_acc, p.sigma())?)
        } else {
            String::new()
        };
        w.write_record([
            format!("{}", p.alpha),
            format!("{}", p.beta),
            format!("{}", p.sigma_r),
            format!("{}", p.sigma_eps),
            format!("{:.6e}", p.variance_proxy()),
            o.sizes.s.to_string(),
            o.sizes.r.to_string(),
            o.sizes.o.to_string(),
            format!("{}", o.router_acc),
            o.trials.to_string(),
            format!("{:.6}", o.p_unified_in_r),
            format!("{:.6}", o.se_unified),
            format!("{:.6}", o.p_routed_in_r),
            format!("{:.6}", o.se_routed),
            format!("{:.6e}", o.chernoff_bound),
            threshold,
        ])?;
    }
    let bytes = w.into_inner().map_err(|e| Error::invalid(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}
