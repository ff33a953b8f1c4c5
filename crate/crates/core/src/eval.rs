//! Router accuracy, modality accuracy and Recall@k over gold-labeled queries.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt::Write as _;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pathway::{check_exclusive, parse_label_list, pathway_format, GranularityScheme, Modality, Pathway, PathwaySet};
use crate::pipeline::ContextBundle;
use crate::routing::RoutingDecision;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GoldRecord {
    pub query_id: String,
    pub query: String,
    pub gold_pathways: PathwaySet,
    pub gold_items: BTreeSet<(String, String)>,
}

impl GoldRecord {
    pub fn new(
        query_id: impl Into<String>,
        query: impl Into<String>,
        gold_pathways: PathwaySet,
        gold_items: BTreeSet<(String, String)>,
    ) -> Result<Self> {
        let query_id = query_id.into();
        if gold_pathways.is_empty() {
            return Err(Error::invalid(format!("{query_id}: empty gold pathways")));
        }
        check_exclusive(&gold_pathways, &query_id)?;
        let is_none = gold_pathways.contains(&Pathway::None);
        if is_none != gold_items.is_empty() {
            return Err(Error::invalid(format!(
                "{query_id}: gold items must be empty exactly when gold is none"
            )));
        }
        Ok(Self {
            query_id,
            query: query.into(),
            gold_pathways,
            gold_items,
        })
    }

    fn is_none(&self) -> bool {
        self.gold_pathways.contains(&Pathway::None)
    }

    fn label(&self) -> String {
        pathway_format(&self.gold_pathways)
    }
}

#[derive(Deserialize)]
struct RawGold {
    query_id: String,
    query: String,
    gold_pathways: Vec<String>,
    #[serde(default)]
    gold_items: Vec<(String, String)>,
}

pub fn load_gold(path: &Path, scheme: GranularityScheme) -> Result<Vec<GoldRecord>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    let mut ids = BTreeSet::new();
    for (n, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let raw: RawGold =
            serde_json::from_str(&line).map_err(|e| Error::json(format!("{}:{}", path.display(), n + 1), e))?;
        let pathways = parse_label_list(&raw.gold_pathways, scheme)?;
        if !ids.insert(raw.query_id.clone()) {
            return Err(Error::DuplicateId(raw.query_id));
        }
        out.push(GoldRecord::new(
            raw.query_id,
            raw.query,
            pathways,
            raw.gold_items.into_iter().collect(),
        )?);
    }
    Ok(out)
}

pub fn write_gold(path: &Path, records: &[GoldRecord]) -> Result<()> {
    let mut file = std::io::BufWriter::new(std::fs::File::create(path).map_err(|e| Error::io(path, e))?);
    for r in records {
        let line = serde_json::to_string(r).map_err(|e| Error::json("gold record", e))?;
        writeln!(file, "{line}").map_err(|e| Error::io(path, e))?;
    }
    file.flush().map_err(|e| Error::io(path, e))
}

/// Pairs each row with its gold record; every gold id must be covered
/// exactly once.
fn align<'a, T>(rows: &'a [T], id: impl Fn(&T) -> &str, gold: &'a [GoldRecord]) -> Result<Vec<(&'a T, &'a GoldRecord)>> {
    let by_id: HashMap<&str, &GoldRecord> = gold.iter().map(|g| (g.query_id.as_str(), g)).collect();
    if rows.len() != gold.len() || by_id.len() != gold.len() {
        return Err(Error::IdMismatch(format!("{} rows for {} gold records", rows.len(), gold.len())));
    }
    let mut seen = BTreeSet::new();
    rows.iter()
        .map(|r| {
            let qid = id(r);
            if !seen.insert(qid.to_string()) {
                return Err(Error::IdMismatch(format!("{qid} appears twice")));
            }
            by_id
                .get(qid)
                .map(|g| (r, *g))
                .ok_or_else(|| Error::IdMismatch(format!("{qid} has no gold record")))
        })
        .collect()
}

fn ratio(hits: usize, total: usize) -> f64 {
    if total == 0 {
        0.0
    } else {
        hits as f64 / total as f64
    }
}

fn modalities(pathways: impl IntoIterator<Item = Pathway>) -> BTreeSet<Modality> {
    pathways.into_iter().filter_map(Pathway::modality).collect()
}

fn router_hit(decision: &PathwaySet, g: &GoldRecord) -> bool {
    *decision == g.gold_pathways
}

fn modality_hit(bundle: &ContextBundle, g: &GoldRecord) -> bool {
    modalities(bundle.merged.iter().map(|e| e.pathway)) == modalities(g.gold_pathways.iter().copied())
}

fn recall_hit(bundle: &ContextBundle, g: &GoldRecord, k: usize) -> bool {
    bundle
        .merged
        .iter()
        .take(k)
        .any(|e| g.gold_items.contains(&(e.corpus_name.clone(), e.item_id.clone())))
}

/// Exact-set match rate of routing decisions, keyed by query id.
pub fn router_accuracy(decisions: &[(String, RoutingDecision)], gold: &[GoldRecord]) -> Result<f64> {
    let pairs = align(decisions, |d| &d.0, gold)?;
    let hits = pairs.iter().filter(|(d, g)| router_hit(&d.1.pathways, g)).count();
    Ok(ratio(hits, pairs.len()))
}

/// Share of queries whose retrieved modality set equals the gold modality
/// set. Queries with gold `none` are not scored.
pub fn modality_accuracy(bundles: &[ContextBundle], gold: &[GoldRecord]) -> Result<f64> {
    let pairs = align(bundles, |b| &b.query_id, gold)?;
    let scored: Vec<_> = pairs.iter().filter(|(_, g)| !g.is_none()).collect();
    Ok(ratio(scored.iter().filter(|(b, g)| modality_hit(b, g)).count(), scored.len()))
}

/// Share of queries with a gold item among the first `k` merged entries.
/// Queries without gold items are not scored.
pub fn recall_at_k(bundles: &[ContextBundle], gold: &[GoldRecord], k: usize) -> Result<f64> {
    if k == 0 {
        return Err(Error::InvalidK);
    }
    let pairs = align(bundles, |b| &b.query_id, gold)?;
    let scored: Vec<_> = pairs.iter().filter(|(_, g)| !g.gold_items.is_empty()).collect();
    Ok(ratio(scored.iter().filter(|(b, g)| recall_hit(b, g, k)).count(), scored.len()))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PathwayStats {
    pub queries: usize,
    pub router_accuracy: f64,
    pub modality_accuracy: Option<f64>,
    pub recall_at: BTreeMap<usize, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ErrorRow {
    pub query_id: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalReport {
    pub queries: usize,
    pub succeeded: usize,
    pub failed: usize,
    pub router_accuracy: f64,
    pub modality_accuracy: f64,
    pub recall_at: BTreeMap<usize, f64>,
    /// Keyed by the gold label, e.g. `paragraph+image`.
    pub per_pathway: BTreeMap<String, PathwayStats>,
    pub errors: Vec<ErrorRow>,
}

#[derive(Default)]
struct Tally {
    queries: usize,
    router: usize,
    modality_scored: usize,
    modality: usize,
    recall_scored: usize,
    recall: BTreeMap<usize, usize>,
}

impl Tally {
    fn add(&mut self, g: &GoldRecord, outcome: Option<&ContextBundle>, ks: &[usize]) {
        self.queries += 1;
        self.router += usize::from(outcome.is_some_and(|b| router_hit(&b.decision.pathways, g)));
        if !g.is_none() {
            self.modality_scored += 1;
            self.modality += usize::from(outcome.is_some_and(|b| modality_hit(b, g)));
        }
        if !g.gold_items.is_empty() {
            self.recall_scored += 1;
            for &k in ks {
                *self.recall.entry(k).or_default() += usize::from(outcome.is_some_and(|b| recall_hit(b, g, k)));
            }
        }
    }

    fn recall_at(&self, ks: &[usize]) -> BTreeMap<usize, f64> {
        ks.iter()
            .map(|&k| (k, ratio(self.recall.get(&k).copied().unwrap_or(0), self.recall_scored)))
            .collect()
    }
}

/// Evaluates `run` on every gold record. Per-query failures become error
/// rows and count as misses; row order and results do not depend on the
/// number of workers.
pub fn evaluate_with<F>(gold: &[GoldRecord], ks: &[usize], workers: usize, run: F) -> Result<EvalReport>
where
    F: Fn(&GoldRecord) -> Result<ContextBundle> + Sync,
{
    if ks.is_empty() || ks.contains(&0) {
        return Err(Error::InvalidK);
    }
    let mut ks = ks.to_vec();
    ks.sort_unstable();
    ks.dedup();
    let mut ids = BTreeSet::new();
    if let Some(dup) = gold.iter().find(|g| !ids.insert(g.query_id.as_str())) {
        return Err(Error::DuplicateId(dup.query_id.clone()));
    }

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::invalid(format!("worker pool: {e}")))?;
    let outcomes: Vec<Result<ContextBundle>> = pool.install(|| gold.par_iter().map(&run).collect());

    let mut total = Tally::default();
    let mut groups: BTreeMap<String, Tally> = BTreeMap::new();
    let mut errors = Vec::new();
    for (g, outcome) in gold.iter().zip(&outcomes) {
        let bundle = match outcome {
            Ok(b) if b.query_id == g.query_id => Some(b),
            Ok(b) => {
                errors.push(ErrorRow {
                    query_id: g.query_id.clone(),
                    message: Error::IdMismatch(format!("bundle for {}", b.query_id)).to_string(),
                });
                None
            }
            Err(e) => {
                errors.push(ErrorRow {
                    query_id: g.query_id.clone(),
                    message: e.to_string(),
                });
                None
            }
        };
        total.add(g, bundle, &ks);
        groups.entry(g.label()).or_default().add(g, bundle, &ks);
    }

    let per_pathway = groups
        .into_iter()
        .map(|(label, t)| {
            let stats = PathwayStats {
                queries: t.queries,
                router_accuracy: ratio(t.router, t.queries),
                modality_accuracy: (t.modality_scored > 0).then(|| ratio(t.modality, t.modality_scored)),
                recall_at: if t.recall_scored > 0 { t.recall_at(&ks) } else { BTreeMap::new() },
            };
            (label, stats)
        })
        .collect();

    Ok(EvalReport {
        queries: gold.len(),
        succeeded: gold.len() - errors.len(),
        failed: errors.len(),
        router_accuracy: ratio(total.router, total.queries),
        modality_accuracy: ratio(total.modality, total.modality_scored),
        recall_at: total.recall_at(&ks),
        per_pathway,
        errors,
    })
}

#[derive(Debug, Clone)]
pub struct EvalConfig {
    pub ks: Vec<usize>,
    pub workers: usize,
    pub retrieve: crate::pipeline::RetrieveConfig,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            ks: vec![1, 3, 5],
            workers: 1,
            retrieve: crate::pipeline::RetrieveConfig::new(5),
        }
    }
}

/// Streams every gold query through routing and retrieval. Retrieval depth
/// is raised to the largest requested k.
pub fn run_eval(
    gold: &[GoldRecord],
    router: &dyn crate::routing::Router,
    corpora: &crate::corpus::CorpusSet,
    embedder: &dyn crate::embed::Embedder,
    config: &EvalConfig,
) -> Result<EvalReport> {
    let mut retrieve = config.retrieve;
    retrieve.k = retrieve.k.max(config.ks.iter().copied().max().unwrap_or(1));
    evaluate_with(gold, &config.ks, config.workers, |g| {
        crate::pipeline::route_and_retrieve(&g.query_id, &g.query, router, corpora, embedder, &retrieve)
    })
}

fn fixed(v: f64) -> String {
    format!("{v:.6}")
}

impl EvalReport {
    /// `scope,metric,value` rows with fixed six-digit precision.
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["scope", "metric", "value"])?;
        w.write_record(["all", "queries", &self.queries.to_string()])?;
        w.write_record(["all", "succeeded", &self.succeeded.to_string()])?;
        w.write_record(["all", "failed", &self.failed.to_string()])?;
        w.write_record(["all", "router_accuracy", &fixed(self.router_accuracy)])?;
        w.write_record(["all", "modality_accuracy", &fixed(self.modality_accuracy)])?;
        for (k, v) in &self.recall_at {
            w.write_record(["all", &format!("recall@{k}"), &fixed(*v)])?;
        }
        for (label, s) in &self.per_pathway {
            w.write_record([label.as_str(), "queries", &s.queries.to_string()])?;
            w.write_record([label.as_str(), "router_accuracy", &fixed(s.router_accuracy)])?;
            if let Some(m) = s.modality_accuracy {
                w.write_record([label.as_str(), "modality_accuracy", &fixed(m)])?;
            }
            for (k, v) in &s.recall_at {
                w.write_record([label.as_str(), &format!("recall@{k}"), &fixed(*v)])?;
            }
        }
        for e in &self.errors {
            w.write_record([e.query_id.as_str(), "error", e.message.as_str()])?;
        }
        let bytes = w.into_inner().map_err(|e| Error::invalid(e.to_string()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }

    pub fn render_table(&self) -> String {
        let ks: Vec<usize> = self.recall_at.keys().copied().collect();
        let mut header = format!("{:<24} {:>7} {:>8} {:>8}", "gold", "queries", "router", "modality");
        for k in &ks {
            let _ = write!(header, " {:>7}", format!("R@{k}"));
        }
        let mut out = header.clone();
        out.push('\n');
        out.push_str(&"-".repeat(header.len()));
        out.push('\n');
        let pct = |v: Option<f64>| v.map(|v| format!("{:.2}", 100.0 * v)).unwrap_or_else(|| "-".into());
        for (label, s) in &self.per_pathway {
            let _ = write!(
                out,
                "{:<24} {:>7} {:>8} {:>8}",
                label,
                s.queries,
                pct(Some(s.router_accuracy)),
                pct(s.modality_accuracy)
            );
            for k in &ks {
                let _ = write!(out, " {:>7}", pct(s.recall_at.get(k).copied()));
            }
            out.push('\n');
        }
        let _ = write!(
            out,
            "{:<24} {:>7} {:>8} {:>8}",
            "all",
            self.queries,
            pct(Some(self.router_accuracy)),
            pct(Some(self.modality_accuracy))
        );
        for k in &ks {
            let _ = write!(out, " {:>7}", pct(self.recall_at.get(k).copied()));
        }
        out.push('\n');
        if self.failed > 0 {
            let _ = writeln!(out, "{} of {} queries failed", self.failed, self.queries);
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pathway::Granularity::*;
    use crate::pipeline::{unified_bundle, MergedEntry, RetrieveConfig};
    use crate::routing::{FixedRouter, RandomRouter, RouteSource, Router};
    use crate::synth::{modality_gap_dataset, planted_dataset, ModalityGapConfig, PlantedConfig, MODALITY_GAP_PATHWAYS};

    fn set(ps: &[Pathway]) -> PathwaySet {
        ps.iter().copied().collect()
    }

    fn gold(id: &str, ps: &[Pathway]) -> GoldRecord {
        let items = ps
            .iter()
            .filter(|p| !p.is_none())
            .map(|p| (p.label().to_string(), format!("{id}-{}", p.label())))
            .collect();
        GoldRecord::new(id, format!("query {id}"), set(ps), items).unwrap()
    }

    fn decision(id: &str, ps: &[Pathway]) -> (String, RoutingDecision) {
        (id.to_string(), RoutingDecision::certain(set(ps), RouteSource::Fixed))
    }

    fn bundle(id: &str, entries: &[(Pathway, &str)]) -> ContextBundle {
        ContextBundle {
            query_id: id.into(),
            query: format!("query {id}"),
            decision: RoutingDecision::certain(entries.iter().map(|e| e.0).collect(), RouteSource::Fixed),
            contexts: vec![],
            merged: entries
                .iter()
                .map(|(p, item)| MergedEntry {
                    pathway: *p,
                    corpus_name: p.label().into(),
                    item_id: item.to_string(),
                    score: 1.0,
                    text: String::new(),
                })
                .collect(),
        }
    }

    const P: Pathway = Pathway::Target(Paragraph);
    const I: Pathway = Pathway::Target(Image);
    const C: Pathway = Pathway::Target(Clip);
    const V: Pathway = Pathway::Target(Video);

    #[test]
    fn gold_invariants() {
        assert!(GoldRecord::new("a", "q", set(&[Pathway::None]), BTreeSet::new()).is_ok());
        assert!(GoldRecord::new("a", "q", set(&[P]), BTreeSet::new()).is_err());
        assert!(GoldRecord::new("a", "q", set(&[Pathway::None, P]), BTreeSet::from([("p".into(), "x".into())])).is_err());
    }

    #[test]
    fn router_accuracy_examples() {
        let golds = vec![gold("a", &[P]), gold("b", &[P, I]), gold("c", &[C]), gold("d", &[Pathway::None]), gold("e", &[V])];
        let all_right: Vec<_> = golds.iter().map(|g| (g.query_id.clone(), RoutingDecision::certain(g.gold_pathways.clone(), RouteSource::Oracle))).collect();
        assert_eq!(router_accuracy(&all_right, &golds).unwrap(), 1.0);
        let four = vec![decision("a", &[P]), decision("b", &[P]), decision("c", &[C]), decision("d", &[Pathway::None]), decision("e", &[V])];
        assert_eq!(router_accuracy(&four, &golds).unwrap(), 0.8);
        let mut shuffled = four.clone();
        shuffled.reverse();
        assert_eq!(router_accuracy(&shuffled, &golds).unwrap(), 0.8);
        assert!(matches!(router_accuracy(&four[..4], &golds), Err(Error::IdMismatch(_))));
        let mut renamed = four.clone();
        renamed[0].0 = "zz".into();
        assert!(matches!(router_accuracy(&renamed, &golds), Err(Error::IdMismatch(_))));
    }

    #[test]
    fn modality_accuracy_ignores_granularity() {
        let golds = vec![gold("a", &[V]), gold("b", &[I]), gold("c", &[Pathway::None])];
        let bundles = vec![bundle("a", &[(C, "x")]), bundle("b", &[(P, "y")]), bundle("c", &[])];
        assert_eq!(modality_accuracy(&bundles, &golds).unwrap(), 0.5);
    }

    #[test]
    fn recall_examples() {
        let golds = vec![gold("a", &[P]), gold("b", &[I]), gold("c", &[Pathway::None])];
        let bundles = vec![
            bundle("a", &[(P, "a-paragraph"), (P, "other")]),
            bundle("b", &[(I, "x"), (I, "y"), (I, "b-image")]),
            bundle("c", &[]),
        ];
        assert_eq!(recall_at_k(&bundles, &golds, 1).unwrap(), 0.5);
        assert_eq!(recall_at_k(&bundles, &golds, 3).unwrap(), 1.0);
        assert!(matches!(recall_at_k(&bundles, &golds, 0), Err(Error::InvalidK)));
    }

    #[test]
    fn random_router_over_modalities_hits_a_quarter() {
        let router = RandomRouter::among(MODALITY_GAP_PATHWAYS.to_vec(), 11).unwrap();
        let golds: Vec<GoldRecord> = (0..10_000)
            .map(|i| gold(&format!("q{i}"), &[MODALITY_GAP_PATHWAYS[i % 4]]))
            .collect();
        let bundles: Vec<ContextBundle> = golds
            .iter()
            .map(|g| {
                let d = router.route(&g.query).unwrap();
                let p = *d.pathways.iter().next().unwrap();
                bundle(&g.query_id, &[(p, "x")])
            })
            .collect();
        let acc = modality_accuracy(&bundles, &golds).unwrap();
        assert!((acc - 0.25).abs() <= 0.03, "{acc}");
    }

    #[test]
    fn planted_oracle_recall_matches_membership_oracle() {
        let d = planted_dataset(PlantedConfig::default()).unwrap();
        let oracle = d.oracle_router();
        let config = EvalConfig {
            ks: vec![1, 3, 5],
            workers: 2,
            retrieve: RetrieveConfig::new(5),
        };
        let report = run_eval(&d.gold, &oracle, &d.corpora, &d.embedder, &config).unwrap();
        assert_eq!(report.router_accuracy, 1.0);
        assert_eq!(report.recall_at[&1], 1.0);
        assert_eq!(report.failed, 0);

        let bundles: Vec<ContextBundle> = d
            .gold
            .iter()
            .map(|g| crate::pipeline::route_and_retrieve(&g.query_id, &g.query, &oracle, &d.corpora, &d.embedder, &RetrieveConfig::new(3)).unwrap())
            .collect();
        let scored: Vec<_> = d.gold.iter().zip(&bundles).filter(|(g, _)| !g.gold_items.is_empty()).collect();
        let brute = scored
            .iter()
            .filter(|(g, b)| b.merged[..3.min(b.merged.len())].iter().any(|e| g.gold_items.iter().any(|(c, i)| *c == e.corpus_name && *i == e.item_id)))
            .count() as f64
            / scored.len() as f64;
        assert_eq!(recall_at_k(&bundles, &d.gold, 3).unwrap(), brute);

        let wrong = d.wrong_pathway_router();
        let report = run_eval(&d.gold, &wrong, &d.corpora, &d.embedder, &config).unwrap();
        assert_eq!(report.recall_at[&5], 0.0);
        assert_eq!(report.router_accuracy, 0.0);
    }

    #[test]
    fn recall_monotone_and_full_depth() {
        let d = planted_dataset(PlantedConfig { items_per_corpus: 5, ..Default::default() }).unwrap();
        let router = FixedRouter::new(d.corpora.pathways()).unwrap();
        let config = EvalConfig {
            ks: vec![1, 3, 5, 1000],
            workers: 1,
            retrieve: RetrieveConfig::new(1000),
        };
        let r = run_eval(&d.gold, &router, &d.corpora, &d.embedder, &config).unwrap();
        assert!(r.recall_at[&1] <= r.recall_at[&3] && r.recall_at[&3] <= r.recall_at[&5]);
        assert_eq!(r.recall_at[&1000], 1.0);
    }

    #[test]
    fn errors_become_rows() {
        let d = planted_dataset(PlantedConfig { queries: 20, ..Default::default() }).unwrap();
        let mut corpora = crate::corpus::CorpusSet::new();
        for c in d.corpora.all().filter(|c| c.pathway() != P) {
            corpora.insert(c.clone()).unwrap();
        }
        let oracle = d.oracle_router();
        let r = run_eval(&d.gold, &oracle, &corpora, &d.embedder, &EvalConfig::default()).unwrap();
        assert!(r.failed > 0);
        assert_eq!(r.failed + r.succeeded, r.queries);
        assert!(r.router_accuracy < 1.0);
        assert!(r.to_csv().unwrap().contains("missing corpus for pathway paragraph"));
    }

    #[test]
    fn csv_is_deterministic_and_permutation_invariant() {
        let d = planted_dataset(PlantedConfig::default()).unwrap();
        let router = RandomRouter::new(GranularityScheme::Default7, 5);
        let run = |gold: &[GoldRecord], workers| {
            let config = EvalConfig { workers, ..Default::default() };
            run_eval(gold, &router, &d.corpora, &d.embedder, &config).unwrap()
        };
        let a = run(&d.gold, 1);
        let b = run(&d.gold, 3);
        assert_eq!(a.to_csv().unwrap(), b.to_csv().unwrap());
        let mut reversed = d.gold.clone();
        reversed.reverse();
        assert_eq!(run(&reversed, 2).to_csv().unwrap(), a.to_csv().unwrap());
        assert!(a.render_table().contains("R@5"));
    }

    #[test]
    fn unified_vs_routed_modality_gap() {
        let d = modality_gap_dataset(ModalityGapConfig::default()).unwrap();
        let unified = evaluate_with(&d.gold, &[1, 5], 1, |g| unified_bundle(&g.query_id, &g.query, &d.corpora, &d.embedder, 5)).unwrap();
        assert!(unified.modality_accuracy <= 0.30, "{}", unified.modality_accuracy);
        let routed = run_eval(&d.gold, &d.oracle_router(), &d.corpora, &d.embedder, &EvalConfig::default()).unwrap();
        assert_eq!(routed.modality_accuracy, 1.0);
        assert_eq!(routed.recall_at[&1], 1.0);
    }

    #[test]
    fn gold_file_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("gold.jsonl");
        let golds = vec![gold("a", &[P, I]), gold("b", &[Pathway::None])];
        write_gold(&path, &golds).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.lines().next().unwrap().contains("[\"paragraph\",\"a-paragraph\"]"));
        assert_eq!(load_gold(&path, GranularityScheme::Default7).unwrap(), golds);
        std::fs::write(&path, "{\"query_id\":\"x\",\"query\":\"q\",\"gold_pathways\":[\"passage\"],\"gold_items\":[[\"p\",\"1\"]]}\n").unwrap();
        assert!(load_gold(&path, GranularityScheme::Default7).is_err());
        assert_eq!(load_gold(&path, GranularityScheme::Extended).unwrap().len(), 1);
    }
}
