//! Exact top-k retrieval over normalized corpora.
//!
//! Scores are cosine similarities computed as inner products against the
//! unit-normalized query. Ranking is by score descending, ties broken by
//! `(corpus_name, item_id)` ascending.

use std::cmp::{Ordering, Reverse};
use std::collections::BinaryHeap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::Corpus;
use crate::error::{Error, Result};
use crate::pathway::Pathway;

pub const DEFAULT_VISUAL_WEIGHT: f64 = 0.8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FusionWeights {
    pub visual_weight: f64,
}

impl FusionWeights {
    pub fn new(visual_weight: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&visual_weight) {
            return Err(Error::invalid(format!("visual weight {visual_weight} outside [0,1]")));
        }
        Ok(Self { visual_weight })
    }
}

impl Default for FusionWeights {
    fn default() -> Self {
        Self {
            visual_weight: DEFAULT_VISUAL_WEIGHT,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredEntry {
    pub item_id: String,
    pub corpus_name: String,
    pub pathway: Pathway,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievalResult {
    pub entries: Vec<ScoredEntry>,
    pub k: usize,
}

impl RetrievalResult {
    pub fn ids(&self) -> Vec<&str> {
        self.entries.iter().map(|e| e.item_id.as_str()).collect()
    }
}

pub fn cosine_score<T: Copy + Into<f64>>(a: &[T], b: &[T]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch {
            expected: a.len(),
            actual: b.len(),
        });
    }
    let (mut dot, mut na, mut nb) = (0.0f64, 0.0f64, 0.0f64);
    for (&x, &y) in a.iter().zip(b) {
        let (x, y) = (x.into(), y.into());
        dot += x * y;
        na += x * x;
        nb += y * y;
    }
    if na == 0.0 || nb == 0.0 {
        return Err(Error::ZeroVector);
    }
    Ok((dot / (na.sqrt() * nb.sqrt())).clamp(-1.0, 1.0))
}

/// Convex combination `w * visual + (1 - w) * text`.
pub fn fused_score(visual_sim: f64, text_sim: f64, weights: FusionWeights) -> Result<f64> {
    const SLACK: f64 = 1e-9;
    for s in [visual_sim, text_sim] {
        if !(-1.0 - SLACK..=1.0 + SLACK).contains(&s) {
            return Err(Error::invalid(format!("similarity {s} outside [-1,1]")));
        }
    }
    let w = weights.visual_weight;
    Ok(w * visual_sim + (1.0 - w) * text_sim)
}

/// Unit-normalized f64 copy of a query vector.
pub(crate) fn unit_query(q: &[f32]) -> Result<Vec<f64>> {
    let norm = q.iter().map(|&x| (x as f64) * (x as f64)).sum::<f64>().sqrt();
    if norm == 0.0 || !norm.is_finite() {
        return Err(Error::ZeroVector);
    }
    Ok(q.iter().map(|&x| x as f64 / norm).collect())
}

#[inline]
pub(crate) fn dot(q: &[f64], row: &[f32]) -> f64 {
    let mut acc = [0.0f64; 4];
    let mut qc = q.chunks_exact(4);
    let mut rc = row.chunks_exact(4);
    for (a, b) in (&mut qc).zip(&mut rc) {
        acc[0] += a[0] * b[0] as f64;
        acc[1] += a[1] * b[1] as f64;
        acc[2] += a[2] * b[2] as f64;
        acc[3] += a[3] * b[3] as f64;
    }
    let mut tail = 0.0;
    for (a, b) in qc.remainder().iter().zip(rc.remainder()) {
        tail += a * *b as f64;
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct Candidate<'a> {
    pub score: f64,
    pub corpus: &'a Corpus,
    pub index: usize,
}

impl Candidate<'_> {
    fn key(&self) -> (&str, &str) {
        (self.corpus.name(), self.corpus.id(self.index))
    }
}

impl PartialEq for Candidate<'_> {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Candidate<'_> {}

impl PartialOrd for Candidate<'_> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Greater means better-ranked.
impl Ord for Candidate<'_> {
    fn cmp(&self, other: &Self) -> Ordering {
        self.score
            .total_cmp(&other.score)
            .then_with(|| other.key().cmp(&self.key()))
    }
}

/// Bounded selection of the `k` best candidates.
pub(crate) struct TopK<'a> {
    k: usize,
    heap: BinaryHeap<Reverse<Candidate<'a>>>,
}

impl<'a> TopK<'a> {
    pub fn new(k: usize) -> Self {
        Self {
            k,
            heap: BinaryHeap::with_capacity(k + 1),
        }
    }

    #[inline]
    pub fn offer(&mut self, cand: Candidate<'a>) {
        if self.heap.len() < self.k {
            self.heap.push(Reverse(cand));
        } else if let Some(worst) = self.heap.peek() {
            if cand.score >= worst.0.score && cand > worst.0 {
                self.heap.pop();
                self.heap.push(Reverse(cand));
            }
        }
    }

    pub fn into_result(self) -> RetrievalResult {
        let k = self.k;
        let mut cands: Vec<Candidate> = self.heap.into_iter().map(|r| r.0).collect();
        cands.sort_by(|a, b| b.cmp(a));
        RetrievalResult {
            entries: cands
                .into_iter()
                .map(|c| ScoredEntry {
                    item_id: c.corpus.id(c.index).to_string(),
                    corpus_name: c.corpus.name().to_string(),
                    pathway: c.corpus.pathway(),
                    score: c.score,
                })
                .collect(),
            k,
        }
    }
}

fn check_dim(corpus: &Corpus, query: &[f32]) -> Result<()> {
    if corpus.dim() != query.len() {
        return Err(Error::DimensionMismatch {
            expected: corpus.dim(),
            actual: query.len(),
        });
    }
    Ok(())
}

/// Exact top-k over one corpus using primary vectors only.
pub fn retrieve_topk(query_vec: &[f32], corpus: &Corpus, k: usize) -> Result<RetrievalResult> {
    retrieve_topk_fused(query_vec, None, corpus, k, FusionWeights::default())
}

/// Exact top-k with visual/text fusion. Items with an auxiliary vector are
/// scored with [`fused_score`] when `aux_query` is given; everything else
/// falls back to the primary cosine.
pub fn retrieve_topk_fused(
    query_vec: &[f32],
    aux_query: Option<&[f32]>,
    corpus: &Corpus,
    k: usize,
    weights: FusionWeights,
) -> Result<RetrievalResult> {
    if k == 0 {
        return Err(Error::InvalidK);
    }
    check_dim(corpus, query_vec)?;
    let q = unit_query(query_vec)?;
    let aux_q = match (aux_query, corpus.aux_dim()) {
        (Some(aq), Some(d)) => {
            if aq.len() != d {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    actual: aq.len(),
                });
            }
            Some(unit_query(aq)?)
        }
        _ => None,
    };

    let mut top = TopK::new(k);
    let dim = corpus.dim();
    for (index, row) in corpus.vectors().chunks_exact(dim).enumerate() {
        let mut score = dot(&q, row);
        if let Some(aq) = &aux_q {
            if let Some(aux_row) = corpus.aux_vector(index) {
                score = fused_score(score.clamp(-1.0, 1.0), dot(aq, aux_row).clamp(-1.0, 1.0), weights)?;
            }
        }
        top.offer(Candidate { score, corpus, index });
    }
    Ok(top.into_result())
}

/// Single ranked list over the union of `corpora`, as if they had been
/// merged into one index.
pub fn unified_retrieve(query_vec: &[f32], corpora: &[&Corpus], k: usize) -> Result<RetrievalResult> {
    if k == 0 {
        return Err(Error::InvalidK);
    }
    let mut dims: Vec<usize> = corpora.iter().map(|c| c.dim()).collect();
    dims.dedup();
    if dims.len() > 1 {
        return Err(Error::NotEmbeddableInOneSpace(corpora.iter().map(|c| c.dim()).collect()));
    }
    let q = unit_query(query_vec)?;
    let mut top = TopK::new(k);
    for &corpus in corpora {
        check_dim(corpus, query_vec)?;
        let dim = corpus.dim();
        for (index, row) in corpus.vectors().chunks_exact(dim).enumerate() {
            top.offer(Candidate {
                score: dot(&q, row),
                corpus,
                index,
            });
        }
    }
    Ok(top.into_result())
}

/// Independent top-k from every corpus, in canonical pathway order.
pub fn retrieve_all(
    query_vec: &[f32],
    corpora: &[&Corpus],
    k_per_corpus: usize,
    weights: FusionWeights,
) -> Result<Vec<RetrievalResult>> {
    if k_per_corpus == 0 {
        return Err(Error::InvalidK);
    }
    let mut ordered: Vec<&Corpus> = corpora.to_vec();
    ordered.sort_by(|a, b| (a.pathway(), a.name()).cmp(&(b.pathway(), b.name())));
    ordered
        .par_iter()
        .map(|c| retrieve_topk_fused(query_vec, None, c, k_per_corpus, weights))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::CorpusItem;
    use crate::pathway::Granularity;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn one_hot_corpus() -> Corpus {
        let items = (0..3)
            .map(|i| {
                let mut v = vec![0.0; 3];
                v[i] = 1.0;
                CorpusItem::new(format!("item{}", i + 1), v)
            })
            .collect();
        Corpus::from_items("onehot", Pathway::Target(Granularity::Image), items).unwrap()
    }

    fn random_corpus(name: &str, pathway: Pathway, n: usize, dim: usize, rng: &mut ChaCha8Rng) -> Corpus {
        let items = (0..n)
            .map(|i| CorpusItem::new(format!("{name}-{i}"), (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect()))
            .collect();
        Corpus::from_items(name, pathway, items).unwrap()
    }

    #[test]
    fn cosine_examples() {
        let v = [0.3f64, -0.2, 0.9];
        assert!((cosine_score(&v, &v).unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(cosine_score(&[1.0f64, 0.0], &[0.0, 1.0]).unwrap(), 0.0);
        assert!((cosine_score(&[0.6f64, 0.8], &[1.0, 0.0]).unwrap() - 0.6).abs() < 1e-12);
        assert!(matches!(cosine_score(&[1.0f64], &[1.0, 0.0]), Err(Error::DimensionMismatch { .. })));
        assert!(matches!(cosine_score(&[0.0f64, 0.0], &[1.0, 0.0]), Err(Error::ZeroVector)));
    }

    #[test]
    fn fusion_examples() {
        let w = FusionWeights::default();
        assert!((fused_score(0.5, 1.0, w).unwrap() - 0.6).abs() < 1e-12);
        assert!((fused_score(1.0, 0.0, w).unwrap() - 0.8).abs() < 1e-12);
        assert!((fused_score(0.37, 0.37, FusionWeights::new(0.3).unwrap()).unwrap() - 0.37).abs() < 1e-12);
        assert!(fused_score(1.5, 0.0, w).is_err());
        assert!(FusionWeights::new(1.2).is_err());
    }

    #[test]
    fn onehot_query_finds_its_item() {
        let corpus = one_hot_corpus();
        let res = retrieve_topk(corpus.vector(1), &corpus, 1).unwrap();
        assert_eq!(res.ids(), ["item2"]);
        assert_eq!(res.entries[0].score, 1.0);
    }

    #[test]
    fn k_is_clamped_to_corpus_size() {
        let corpus = one_hot_corpus();
        let res = retrieve_topk(&[0.1, 0.5, 0.2], &corpus, 10).unwrap();
        assert_eq!(res.ids(), ["item2", "item3", "item1"]);
        assert_eq!(res.k, 10);
    }

    #[test]
    fn ties_break_by_corpus_then_id() {
        let items = ["b", "a", "c"]
            .iter()
            .map(|id| CorpusItem::new(*id, vec![1.0, 1.0]))
            .collect();
        let corpus = Corpus::from_items("z", Pathway::Target(Granularity::Table), items).unwrap();
        let res = retrieve_topk(&[1.0, 1.0], &corpus, 2).unwrap();
        assert_eq!(res.ids(), ["a", "b"]);
    }

    #[test]
    fn retrieve_errors() {
        let corpus = one_hot_corpus();
        assert!(matches!(retrieve_topk(&[1.0, 0.0, 0.0], &corpus, 0), Err(Error::InvalidK)));
        assert!(matches!(retrieve_topk(&[1.0, 0.0], &corpus, 1), Err(Error::DimensionMismatch { .. })));
        assert!(matches!(retrieve_topk(&[0.0; 3], &corpus, 1), Err(Error::ZeroVector)));
    }

    #[test]
    fn fusion_reorders_with_aux_query() {
        let items = vec![
            CorpusItem::new("visual", vec![1.0, 0.0]).with_aux(vec![0.0, 1.0]),
            CorpusItem::new("textual", vec![0.9, 0.436]).with_aux(vec![1.0, 0.0]),
        ];
        let corpus = Corpus::from_items("img", Pathway::Target(Granularity::Image), items).unwrap();
        let plain = retrieve_topk(&[1.0, 0.0], &corpus, 2).unwrap();
        assert_eq!(plain.ids(), ["visual", "textual"]);
        let fused = retrieve_topk_fused(&[1.0, 0.0], Some(&[1.0, 0.0]), &corpus, 2, FusionWeights::default()).unwrap();
        assert_eq!(fused.ids(), ["textual", "visual"]);
        assert!((fused.entries[1].score - 0.8).abs() < 1e-6);
        // aux query with no aux vectors in corpus degrades to primary-only
        let onehot = one_hot_corpus();
        let a = retrieve_topk_fused(&[0.2, 0.9, 0.1], Some(&[1.0]), &onehot, 3, FusionWeights::default()).unwrap();
        assert_eq!(a, retrieve_topk(&[0.2, 0.9, 0.1], &onehot, 3).unwrap());
    }

    #[test]
    fn unified_two_corpora() {
        let a = Corpus::from_items("A", Pathway::Target(Granularity::Image), vec![CorpusItem::new("x", vec![1.0, 0.2])]).unwrap();
        let b = Corpus::from_items("B", Pathway::Target(Granularity::Paragraph), vec![CorpusItem::new("y", vec![0.1, 1.0])]).unwrap();
        let res = unified_retrieve(a.vector(0), &[&a, &b], 2).unwrap();
        assert_eq!(res.entries[0].corpus_name, "A");
        assert_eq!(res.entries[0].item_id, "x");

        let c = Corpus::from_items("C", Pathway::Target(Granularity::Video), vec![CorpusItem::new("z", vec![1.0, 0.0, 0.0])]).unwrap();
        let err = unified_retrieve(&[1.0, 0.0], &[&a, &c], 1).unwrap_err();
        assert!(err.to_string().contains("not embeddable in one space"));
    }

    #[test]
    fn retrieve_all_canonical_order_and_counts() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let pathways = crate::pathway::GranularityScheme::Default7.pathways();
        let sizes = [1usize, 4, 2, 7, 3, 5];
        // insert in reverse to check ordering
        let corpora: Vec<Corpus> = pathways[1..]
            .iter()
            .zip(sizes)
            .rev()
            .map(|(p, n)| random_corpus(p.label(), *p, n, 6, &mut rng))
            .collect();
        let refs: Vec<&Corpus> = corpora.iter().collect();
        let q: Vec<f32> = (0..6).map(|_| rng.gen_range(-1.0..1.0)).collect();

        let one = retrieve_all(&q, &refs, 1, FusionWeights::default()).unwrap();
        assert_eq!(one.len(), 6);
        let order: Vec<Pathway> = one.iter().map(|r| r.entries[0].pathway).collect();
        assert_eq!(order, pathways[1..].to_vec());

        for k in [1usize, 3, 10] {
            let all = retrieve_all(&q, &refs, k, FusionWeights::default()).unwrap();
            let total: usize = all.iter().map(|r| r.entries.len()).sum();
            assert_eq!(total, sizes.iter().map(|&n| n.min(k)).sum::<usize>());
            for r in &all {
                let c = corpora.iter().find(|c| c.pathway() == r.entries[0].pathway).unwrap();
                assert_eq!(r, &retrieve_topk(&q, c, k).unwrap());
            }
        }
    }

    proptest! {
        #[test]
        fn fusion_is_monotone(text in -1.0f64..1.0, v1 in -1.0f64..1.0, v2 in -1.0f64..1.0, w in 0.0f64..=1.0) {
            let weights = FusionWeights::new(w).unwrap();
            let (lo, hi) = if v1 <= v2 { (v1, v2) } else { (v2, v1) };
            prop_assert!(fused_score(lo, text, weights).unwrap() <= fused_score(hi, text, weights).unwrap() + 1e-15);
            prop_assert_eq!(fused_score(v1, text, FusionWeights::new(1.0).unwrap()).unwrap(), v1);
            prop_assert_eq!(fused_score(v1, text, FusionWeights::new(0.0).unwrap()).unwrap(), text);
        }

        #[test]
        fn normalized_cosine_equals_inner_product(raw in proptest::collection::vec(-1.0f64..1.0, 2..32), seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let other: Vec<f64> = raw.iter().map(|_| rng.gen_range(-1.0..1.0)).collect();
            let unit = |v: &[f64]| { let n = v.iter().map(|x| x * x).sum::<f64>().sqrt(); v.iter().map(|x| x / n).collect::<Vec<_>>() };
            prop_assume!(raw.iter().any(|x| x.abs() > 1e-3) && other.iter().any(|x| x.abs() > 1e-3));
            let (a, b) = (unit(&raw), unit(&other));
            let inner: f64 = a.iter().zip(&b).map(|(x, y)| x * y).sum();
            prop_assert!((cosine_score(&a, &b).unwrap() - inner).abs() < 1e-9);
        }
    }
}
