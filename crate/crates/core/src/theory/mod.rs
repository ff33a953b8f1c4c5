//! Numerical checks of the routing-versus-unified results: the modality-bias
//! tail bound, the adaptive-granularity dominance and latency scaling.

mod bound;
mod granularity;
mod latency;

pub use bound::{
    alpha_threshold, chernoff_bound, simulate_unified_vs_routed, simulation_csv, CorpusSizes, ScoreModelParams,
    SimOutcome,
};
pub use granularity::{compare_granularity_policies, PolicyComparison, QualityTable};
pub use latency::{available_memory, bench_latency, Backend, BenchConfig, LatencyReport, LatencyRow};
