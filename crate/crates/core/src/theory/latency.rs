use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::corpus::Corpus;
use crate::error::{Error, Result};
use crate::pathway::{Granularity, Pathway};
use crate::retrieval::{dot, retrieve_topk, unified_retrieve, unit_query, Candidate, TopK};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Backend {
    ExactScan,
    /// Items split uniformly at random into `sqrt(n)` buckets; a query
    /// scans only the bucket with the nearest centroid. Approximate.
    Bucketed,
}

impl Backend {
    pub fn as_str(self) -> &'static str {
        match self {
            Backend::ExactScan => "exact_scan",
            Backend::Bucketed => "bucketed",
        }
    }
}

impl std::str::FromStr for Backend {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "exact_scan" => Ok(Backend::ExactScan),
            "bucketed" => Ok(Backend::Bucketed),
            other => Err(Error::invalid(format!("unknown backend {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchConfig {
    pub k: usize,
    pub n_values: Vec<usize>,
    pub dim: usize,
    pub backend: Backend,
    pub repetitions: usize,
    pub seed: u64,
    /// Fixed cost charged to every routed query, spent busy-waiting.
    pub route_cost: Duration,
    /// Result depth per retrieval.
    pub top_k: usize,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            k: 7,
            n_values: vec![10_000, 100_000],
            dim: 64,
            backend: Backend::ExactScan,
            repetitions: 5,
            seed: 0,
            route_cost: Duration::from_millis(2),
            top_k: 10,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LatencyRow {
    pub n: usize,
    pub k: usize,
    pub t_unified: f64,
    pub t_routed: f64,
    pub ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LatencyReport {
    pub backend: Backend,
    pub route_cost: f64,
    pub rows: Vec<LatencyRow>,
}

impl LatencyReport {
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["backend", "n", "k", "route_cost_s", "t_unified_s", "t_routed_s", "ratio"])?;
        for r in &self.rows {
            w.write_record([
                self.backend.as_str().to_string(),
                r.n.to_string(),
                r.k.to_string(),
                format!("{:.6}", self.route_cost),
                format!("{:.9}", r.t_unified),
                format!("{:.9}", r.t_routed),
                format!("{:.4}", r.ratio),
            ])?;
        }
        let bytes = w.into_inner().map_err(|e| Error::invalid(e.to_string()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }

    pub fn render_table(&self) -> String {
        let mut out = format!(
            "{:>10} {:>3} {:>14} {:>14} {:>8}\n",
            "N", "k", "unified (ms)", "routed (ms)", "ratio"
        );
        for r in &self.rows {
            out.push_str(&format!(
                "{:>10} {:>3} {:>14.3} {:>14.3} {:>8.2}\n",
                r.n,
                r.k,
                r.t_unified * 1e3,
                r.t_routed * 1e3,
                r.ratio
            ));
        }
        out
    }
}

/// `MemAvailable` from `/proc/meminfo`, in bytes.
pub fn available_memory() -> Option<u64> {
    let info = std::fs::read_to_string("/proc/meminfo").ok()?;
    let line = info.lines().find(|l| l.starts_with("MemAvailable:"))?;
    let kb: u64 = line.split_whitespace().nth(1)?.parse().ok()?;
    Some(kb * 1024)
}

/// Approximate resident size of `k` corpora of `n` items.
fn estimated_bytes(k: usize, n: usize, dim: usize, backend: Backend) -> u64 {
    let items = (k as u64).saturating_mul(n as u64);
    let per_item = 4 * dim as u64 + 48 + if backend == Backend::Bucketed { 32 } else { 0 };
    items.saturating_mul(per_item)
}

fn spin(cost: Duration) {
    let start = Instant::now();
    while start.elapsed() < cost {
        std::hint::spin_loop();
    }
}

fn random_rows(rng: &mut ChaCha8Rng, n: usize, dim: usize) -> Vec<f32> {
    let mut v = Vec::with_capacity(n * dim);
    for _ in 0..n {
        let row: Vec<f32> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
        let norm = row.iter().map(|x| x * x).sum::<f32>().sqrt().max(f32::MIN_POSITIVE);
        v.extend(row.iter().map(|x| x / norm));
    }
    v
}

const BENCH_PATHWAYS: [Pathway; 6] = [
    Pathway::Target(Granularity::Paragraph),
    Pathway::Target(Granularity::Document),
    Pathway::Target(Granularity::Table),
    Pathway::Target(Granularity::Image),
    Pathway::Target(Granularity::Clip),
    Pathway::Target(Granularity::Video),
];

fn synthetic_corpora(k: usize, n: usize, dim: usize, seed: u64) -> Result<Vec<Corpus>> {
    (0..k)
        .map(|c| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(c as u64);
            let ids = (0..n).map(|i| i.to_string()).collect();
            let pathway = BENCH_PATHWAYS[c % BENCH_PATHWAYS.len()];
            Corpus::from_normalized_rows(format!("bench{c:02}"), pathway, dim, ids, random_rows(&mut rng, n, dim))
        })
        .collect()
}

/// Random-assignment bucket index over one or more corpora.
struct BucketIndex<'a> {
    corpora: Vec<&'a Corpus>,
    dim: usize,
    centroids: Vec<f64>,
    buckets: Vec<Vec<(u32, u32)>>,
}

impl<'a> BucketIndex<'a> {
    fn build(corpora: Vec<&'a Corpus>, rng: &mut ChaCha8Rng) -> Self {
        let dim = corpora[0].dim();
        let total: usize = corpora.iter().map(|c| c.len()).sum();
        let nb = ((total as f64).sqrt().round() as usize).max(1);
        let mut buckets: Vec<Vec<(u32, u32)>> = vec![Vec::new(); nb];
        let mut sums = vec![0.0f64; nb * dim];
        for (ci, c) in corpora.iter().enumerate() {
            for i in 0..c.len() {
                let b = rng.gen_range(0..nb);
                buckets[b].push((ci as u32, i as u32));
                for (s, x) in sums[b * dim..(b + 1) * dim].iter_mut().zip(c.vector(i)) {
                    *s += *x as f64;
                }
            }
        }
        for row in sums.chunks_exact_mut(dim) {
            let norm = row.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm > 0.0 {
                row.iter_mut().for_each(|x| *x /= norm);
            }
        }
        Self {
            corpora,
            dim,
            centroids: sums,
            buckets,
        }
    }

    fn search(&self, query: &[f32], k: usize) -> Result<usize> {
        let q = unit_query(query)?;
        let best = self
            .centroids
            .chunks_exact(self.dim)
            .map(|c| c.iter().zip(&q).map(|(a, b)| a * b).sum::<f64>())
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(&b.1))
            .map(|(i, _)| i)
            .unwrap_or(0);
        let mut top = TopK::new(k);
        for &(ci, i) in &self.buckets[best] {
            let corpus = self.corpora[ci as usize];
            top.offer(Candidate {
                score: dot(&q, corpus.vector(i as usize)),
                corpus,
                index: i as usize,
            });
        }
        Ok(top.into_result().entries.len())
    }
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(|a, b| a.total_cmp(b));
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    }
}

fn timed(f: impl FnOnce() -> Result<usize>) -> Result<f64> {
    let start = Instant::now();
    let n = f()?;
    let elapsed = start.elapsed().as_secs_f64();
    std::hint::black_box(n);
    Ok(elapsed.max(1e-9))
}

/// Times unified retrieval over `k·N` items against a fixed routing cost
/// plus retrieval over one corpus of `N` items, for each `N`. Medians over
/// the repetitions; runs on the calling thread only.
pub fn bench_latency(config: &BenchConfig) -> Result<LatencyReport> {
    if config.k < 2 {
        return Err(Error::invalid("bench needs at least 2 pathways"));
    }
    if config.repetitions < 3 {
        return Err(Error::invalid("bench needs at least 3 repetitions"));
    }
    if config.n_values.is_empty() || config.n_values.iter().any(|&n| n < 1000) {
        return Err(Error::invalid("every corpus size must be at least 1000"));
    }
    if config.top_k == 0 {
        return Err(Error::InvalidK);
    }
    if config.dim == 0 {
        return Err(Error::invalid("dimension must be positive"));
    }
    if let Some(available) = available_memory() {
        let largest = *config.n_values.iter().max().expect("non-empty");
        let needed = estimated_bytes(config.k, largest, config.dim, config.backend);
        if needed > available {
            return Err(Error::InsufficientMemory { needed, available });
        }
    }

    let mut rows = Vec::with_capacity(config.n_values.len());
    for (ni, &n) in config.n_values.iter().enumerate() {
        let corpora = synthetic_corpora(config.k, n, config.dim, config.seed ^ (ni as u64).wrapping_mul(0x9E37))?;
        let refs: Vec<&Corpus> = corpora.iter().collect();
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        rng.set_stream(1 << 32 | ni as u64);

        let (unified_index, routed_index) = match config.backend {
            Backend::ExactScan => (None, None),
            Backend::Bucketed => (
                Some(BucketIndex::build(refs.clone(), &mut rng)),
                Some(refs.iter().map(|c| BucketIndex::build(vec![*c], &mut rng)).collect::<Vec<_>>()),
            ),
        };

        let mut t_unified = Vec::with_capacity(config.repetitions);
        let mut t_routed = Vec::with_capacity(config.repetitions);
        for rep in 0..config.repetitions {
            let query = random_rows(&mut rng, 1, config.dim);
            let target = rep % config.k;
            t_unified.push(timed(|| match &unified_index {
                None => Ok(unified_retrieve(&query, &refs, config.top_k)?.entries.len()),
                Some(index) => index.search(&query, config.top_k),
            })?);
            t_routed.push(timed(|| {
                spin(config.route_cost);
                match &routed_index {
                    None => Ok(retrieve_topk(&query, refs[target], config.top_k)?.entries.len()),
                    Some(indexes) => indexes[target].search(&query, config.top_k),
                }
            })?);
        }
        let (u, r) = (median(t_unified), median(t_routed));
        rows.push(LatencyRow {
            n,
            k: config.k,
            t_unified: u,
            t_routed: r,
            ratio: u / r,
        });
    }
    Ok(LatencyReport {
        backend: config.backend,
        route_cost: config.route_cost.as_secs_f64(),
        rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(backend: Backend) -> BenchConfig {
        BenchConfig {
            k: 3,
            n_values: vec![1000, 2000],
            dim: 16,
            backend,
            repetitions: 3,
            seed: 1,
            route_cost: Duration::ZERO,
            top_k: 5,
        }
    }

    #[test]
    fn report_shape() {
        for backend in [Backend::ExactScan, Backend::Bucketed] {
            let r = bench_latency(&small(backend)).unwrap();
            assert_eq!(r.rows.len(), 2);
            for row in &r.rows {
                assert!(row.t_unified > 0.0 && row.t_routed > 0.0);
                assert_eq!(row.ratio, row.t_unified / row.t_routed);
            }
            let csv = r.to_csv().unwrap();
            assert!(csv.starts_with("backend,n,k,"));
            assert_eq!(csv.lines().count(), 3);
        }
    }

    #[test]
    fn preconditions() {
        let mut c = small(Backend::ExactScan);
        c.k = 1;
        assert!(bench_latency(&c).is_err());
        let mut c = small(Backend::ExactScan);
        c.repetitions = 2;
        assert!(bench_latency(&c).is_err());
        let mut c = small(Backend::ExactScan);
        c.n_values = vec![999];
        assert!(bench_latency(&c).is_err());
    }

    #[test]
    fn oversized_request_is_reported() {
        if available_memory().is_none() {
            return;
        }
        let mut c = small(Backend::ExactScan);
        c.n_values = vec![1_000_000_000_000];
        assert!(matches!(bench_latency(&c), Err(Error::InsufficientMemory { .. })));
    }

    #[test]
    fn spin_waits_at_least_the_cost() {
        let start = Instant::now();
        spin(Duration::from_millis(3));
        assert!(start.elapsed() >= Duration::from_millis(3));
    }

    #[test]
    fn bucket_search_returns_from_one_bucket() {
        let corpora = synthetic_corpora(2, 1000, 8, 3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let index = BucketIndex::build(corpora.iter().collect(), &mut rng);
        assert_eq!(index.buckets.len(), 45);
        assert_eq!(index.buckets.iter().map(Vec::len).sum::<usize>(), 2000);
        let q = random_rows(&mut rng, 1, 8);
        assert!(index.search(&q, 5).unwrap() <= 5);
    }
}
