//! Deterministic synthetic datasets: routing paraphrases, planted-gold
//! corpora and modality-biased corpora.

use std::collections::{BTreeSet, HashMap};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::corpus::{Corpus, CorpusItem, CorpusSet, Payload};
use crate::embed::{Embedder, HashEmbedder};
use crate::error::{Error, Result};
use crate::eval::GoldRecord;
use crate::pathway::{Granularity, GranularityScheme, Pathway, PathwaySet};
use crate::routing::{OracleRouter, RoutingExample};

use Granularity::*;

const SEEDS: &[(&str, &[Pathway])] = &[
    ("What is the capital of France?", &[Pathway::None]),
    ("What is the birth date of Alan Turing?", &[Pathway::Target(Paragraph)]),
    (
        "Which academic discipline do computer scientist Alan Turing and mathematician John von Neumann have in common?",
        &[Pathway::Target(Document)],
    ),
    (
        "Among the recipients of the Turing Award, who had the earliest birth year?",
        &[Pathway::Target(Table)],
    ),
    ("Describe the appearance of a blue whale.", &[Pathway::Target(Image)]),
    (
        "Describe the moment Messi scored his goal in the 2022 World Cup final.",
        &[Pathway::Target(Clip)],
    ),
    (
        "Explain how Messi scored his goal in the 2022 World Cup final.",
        &[Pathway::Target(Video)],
    ),
    ("Solve 12 × 8.", &[Pathway::None]),
    (
        "Who played a key role in the development of the iPhone?",
        &[Pathway::Target(Paragraph)],
    ),
    (
        "Which Harvard University graduate played a key role in the development of the iPhone?",
        &[Pathway::Target(Document)],
    ),
    ("What is the cheapest iPhone model available in 2023?", &[Pathway::Target(Table)]),
    ("Describe the structure of the Eiffel Tower.", &[Pathway::Target(Image)]),
    (
        "Describe the moment Darth Vader reveals he is Luke's father in Star Wars.",
        &[Pathway::Target(Clip)],
    ),
    (
        "Analyze the sequence of events leading to the fall of the Empire in Star Wars.",
        &[Pathway::Target(Video)],
    ),
    (
        "Describe the visual appearance and habitat of the blue whale.",
        &[Pathway::Target(Paragraph), Pathway::Target(Image)],
    ),
    (
        "Compare the architectural features shown in Gothic and Renaissance cathedrals.",
        &[Pathway::Target(Image), Pathway::Target(Table)],
    ),
    (
        "Describe the moment of the moon landing and explain the mission details.",
        &[Pathway::Target(Paragraph), Pathway::Target(Clip)],
    ),
];

/// The labeled examples shown in the default routing prompt.
pub fn prompt_seed_examples() -> Vec<RoutingExample> {
    SEEDS
        .iter()
        .map(|(q, labels)| RoutingExample::new(*q, labels.iter().copied()))
        .collect()
}

const PEOPLE: &[&str] = &[
    "Alan Turing", "Ada Lovelace", "Marie Curie", "Nikola Tesla", "Grace Hopper", "Isaac Newton",
    "Rosalind Franklin", "Charles Darwin", "Steve Jobs", "Lionel Messi", "Serena Williams", "Albert Einstein",
];
const ROLES: &[&str] = &["computer scientist", "mathematician", "physicist", "chemist", "engineer", "biologist"];
const COUNTRIES: &[&str] = &[
    "France", "Japan", "Brazil", "Kenya", "Canada", "Norway", "Peru", "Egypt", "India", "Chile", "Spain", "Vietnam",
];
const PRODUCTS: &[&str] = &[
    "iPhone", "Walkman", "Model T", "Game Boy", "Kindle", "Macintosh", "Polaroid camera", "PlayStation",
];
const SCHOOLS: &[&str] = &["Harvard University", "Stanford University", "MIT", "Oxford University", "Caltech", "Yale University"];
const AWARDS: &[&str] = &["Turing Award", "Nobel Prize in Physics", "Fields Medal", "Pulitzer Prize", "Abel Prize", "Wolf Prize"];
const ANIMALS: &[&str] = &[
    "blue whale", "snow leopard", "red panda", "bald eagle", "giant squid", "koala", "peacock", "axolotl", "okapi",
];
const LANDMARKS: &[&str] = &[
    "Eiffel Tower", "Golden Gate Bridge", "Sydney Opera House", "Colosseum", "Taj Mahal", "Great Wall", "Burj Khalifa",
    "Parthenon",
];
const MATCHES: &[&str] = &[
    "2022 World Cup final", "2014 World Cup semifinal", "1986 World Cup quarterfinal", "2019 Champions League final",
    "2005 Champions League final", "2010 World Cup final",
];
const FILMS: &[&str] = &["Star Wars", "The Lord of the Rings", "Jurassic Park", "The Matrix", "Titanic", "Inception"];
const SCENES: &[&str] = &[
    "the hero reveals his true identity", "the villain appears for the first time", "the ship begins to sink",
    "the final duel begins", "the door opens", "the city goes dark",
];
const ARCS: &[&str] = &["the fall of the Empire", "the final battle", "the escape", "the betrayal", "the rescue mission"];

/// Word-level synonyms applied during paraphrasing.
const SYNONYMS: &[(&str, &[&str])] = &[
    ("Describe", &["Describe", "Depict", "Portray", "Outline"]),
    ("Explain", &["Explain", "Clarify", "Walk through"]),
    ("Analyze", &["Analyze", "Examine", "Break down"]),
    ("What is", &["What is", "What's", "Tell me"]),
    ("Solve", &["Solve", "Compute", "Calculate", "Work out"]),
    ("appearance", &["appearance", "look", "visual appearance"]),
    ("structure", &["structure", "shape", "design"]),
    ("moment", &["moment", "instant", "exact moment"]),
    ("cheapest", &["cheapest", "least expensive", "lowest-priced"]),
    ("earliest", &["earliest", "oldest"]),
    ("birth date", &["birth date", "date of birth", "birthday"]),
    ("development", &["development", "invention", "creation"]),
    ("played a key role in", &["played a key role in", "was central to", "was instrumental in"]),
    ("have in common", &["have in common", "share", "both belong to"]),
    ("sequence of events", &["sequence of events", "chain of events", "series of events"]),
];

fn pick<'a>(rng: &mut ChaCha8Rng, pool: &[&'a str]) -> &'a str {
    pool[rng.gen_range(0..pool.len())]
}

fn templated(pathway: Pathway, rng: &mut ChaCha8Rng) -> String {
    let second = rng.gen_bool(0.5);
    match (pathway, second) {
        (Pathway::None, false) => format!("What is the capital of {}?", pick(rng, COUNTRIES)),
        (Pathway::None, true) => format!("Solve {} × {}.", rng.gen_range(2..100), rng.gen_range(2..100)),
        (Pathway::Target(Paragraph), false) => format!("What is the birth date of {}?", pick(rng, PEOPLE)),
        (Pathway::Target(Paragraph), true) => format!(
            "Who played a key role in the development of the {}?",
            pick(rng, PRODUCTS)
        ),
        (Pathway::Target(Document), false) => {
            let a = pick(rng, PEOPLE);
            let b = loop {
                let b = pick(rng, PEOPLE);
                if b != a {
                    break b;
                }
            };
            format!(
                "Which academic discipline do {} {a} and {} {b} have in common?",
                pick(rng, ROLES),
                pick(rng, ROLES)
            )
        }
        (Pathway::Target(Document), true) => format!(
            "Which {} graduate played a key role in the development of the {}?",
            pick(rng, SCHOOLS),
            pick(rng, PRODUCTS)
        ),
        (Pathway::Target(Table), false) => format!(
            "Among the recipients of the {}, who had the earliest birth year?",
            pick(rng, AWARDS)
        ),
        (Pathway::Target(Table), true) => format!(
            "What is the cheapest {} model available in {}?",
            pick(rng, PRODUCTS),
            rng.gen_range(1990..2025)
        ),
        (Pathway::Target(Image), false) => format!("Describe the appearance of a {}.", pick(rng, ANIMALS)),
        (Pathway::Target(Image), true) => format!("Describe the structure of the {}.", pick(rng, LANDMARKS)),
        (Pathway::Target(Clip), false) => format!(
            "Describe the moment {} scored a goal in the {}.",
            pick(rng, PEOPLE),
            pick(rng, MATCHES)
        ),
        (Pathway::Target(Clip), true) => format!(
            "Describe the moment {} in {}.",
            pick(rng, SCENES),
            pick(rng, FILMS)
        ),
        (Pathway::Target(Video), false) => format!(
            "Explain how {} scored a goal in the {}.",
            pick(rng, PEOPLE),
            pick(rng, MATCHES)
        ),
        (Pathway::Target(Video), true) => format!(
            "Analyze the sequence of events leading to {} in {}.",
            pick(rng, ARCS),
            pick(rng, FILMS)
        ),
        (Pathway::Target(g), _) => unreachable!("no paraphrase templates for {g:?}"),
    }
}

fn substitute(text: &str, rng: &mut ChaCha8Rng) -> String {
    let mut out = text.to_string();
    for (word, alternatives) in SYNONYMS {
        if out.contains(word) {
            out = out.replacen(word, pick(rng, alternatives), 1);
        }
    }
    out
}

/// `per_pathway` distinct single-label paraphrases for each pathway of the
/// default scheme, built from the seed example templates by entity and
/// synonym substitution.
pub fn routing_paraphrases(per_pathway: usize, seed: u64) -> Result<Vec<RoutingExample>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut seen = BTreeSet::new();
    let mut out = Vec::new();
    for pathway in GranularityScheme::Default7.pathways() {
        let mut made = 0;
        let mut attempts = 0;
        while made < per_pathway {
            attempts += 1;
            if attempts > 1000 * per_pathway.max(1) {
                return Err(Error::invalid(format!(
                    "could only generate {made} distinct paraphrases for {pathway}"
                )));
            }
            let query = substitute(&templated(pathway, &mut rng), &mut rng);
            if seen.insert(query.clone()) {
                out.push(RoutingExample::new(query, [pathway]));
                made += 1;
            }
        }
    }
    Ok(out)
}

/// Seeded split stratified by label set: each group contributes
/// `round(train_fraction * len)` examples to the training side.
pub fn split_examples(
    examples: &[RoutingExample],
    train_fraction: f64,
    seed: u64,
) -> (Vec<RoutingExample>, Vec<RoutingExample>) {
    let mut groups: Vec<(PathwaySet, Vec<RoutingExample>)> = Vec::new();
    for e in examples {
        match groups.iter_mut().find(|(labels, _)| *labels == e.labels) {
            Some((_, g)) => g.push(e.clone()),
            None => groups.push((e.labels.clone(), vec![e.clone()])),
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut train, mut test) = (Vec::new(), Vec::new());
    for (_, mut group) in groups {
        group.shuffle(&mut rng);
        let cut = (train_fraction.clamp(0.0, 1.0) * group.len() as f64).round() as usize;
        let rest = group.split_off(cut);
        train.extend(group);
        test.extend(rest);
    }
    (train, test)
}

fn random_unit(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-12 {
            return v.into_iter().map(|x| x / norm).collect();
        }
    }
}

/// Corpora where each relevant item is the exact embedding of its query.
pub struct PlantedDataset {
    pub corpora: CorpusSet,
    pub gold: Vec<GoldRecord>,
    pub embedder: HashEmbedder,
}

impl PlantedDataset {
    pub fn oracle_router(&self) -> OracleRouter {
        OracleRouter::new(self.gold.iter().map(|g| (g.query.clone(), g.gold_pathways.clone())))
    }

    /// Routes every query to a single pathway outside its gold set.
    pub fn wrong_pathway_router(&self) -> OracleRouter {
        let targets: Vec<Pathway> = self.corpora.pathways().collect();
        OracleRouter::new(self.gold.iter().map(|g| {
            let wrong = targets
                .iter()
                .copied()
                .find(|p| !g.gold_pathways.contains(p))
                .expect("more corpora than gold pathways");
            (g.query.clone(), PathwaySet::from([wrong]))
        }))
    }
}

#[derive(Debug, Clone, Copy)]
pub struct PlantedConfig {
    pub queries: usize,
    pub items_per_corpus: usize,
    pub dim: usize,
    pub seed: u64,
}

impl Default for PlantedConfig {
    fn default() -> Self {
        Self {
            queries: 100,
            items_per_corpus: 50,
            dim: 64,
            seed: 0,
        }
    }
}

/// Every tenth query has gold `none`, every fifth (otherwise) has two
/// pathways, the rest one; golds cycle through the default-scheme corpora.
pub fn planted_dataset(config: PlantedConfig) -> Result<PlantedDataset> {
    let embedder = HashEmbedder::new(config.seed);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let targets: Vec<Pathway> = GranularityScheme::Default7.pathways().into_iter().skip(1).collect();
    let mut items: HashMap<Pathway, Vec<CorpusItem>> = HashMap::new();
    for &p in &targets {
        let fillers = (0..config.items_per_corpus)
            .map(|j| {
                let v: Vec<f32> = random_unit(&mut rng, config.dim).into_iter().map(|x| x as f32).collect();
                CorpusItem::new(format!("{}-filler-{j}", p.label()), v)
                    .with_payload(Payload::text(format!("filler {j} of {}", p.label())))
            })
            .collect();
        items.insert(p, fillers);
    }

    let mut gold = Vec::with_capacity(config.queries);
    for i in 0..config.queries {
        let query = format!("planted query {i} concerning subject {}", i * 31 % 97);
        let query_id = format!("q{i:04}");
        let pathways: PathwaySet = if i % 10 == 9 {
            PathwaySet::from([Pathway::None])
        } else if i % 5 == 4 {
            [targets[i % targets.len()], targets[(i + 2) % targets.len()]].into()
        } else {
            [targets[i % targets.len()]].into()
        };
        let mut gold_items = BTreeSet::new();
        for &p in pathways.iter().filter(|p| !p.is_none()) {
            let id = format!("{}-planted-{i}", p.label());
            let v = embedder.embed(&query, config.dim)?;
            items
                .get_mut(&p)
                .expect("target corpus")
                .push(CorpusItem::new(id.clone(), v).with_payload(Payload::text(query.clone())));
            gold_items.insert((p.label().to_string(), id));
        }
        gold.push(GoldRecord::new(query_id, query, pathways, gold_items)?);
    }

    let mut corpora = CorpusSet::new();
    for p in targets {
        corpora.insert(Corpus::from_items(p.label(), p, items.remove(&p).unwrap_or_default())?)?;
    }
    Ok(PlantedDataset {
        corpora,
        gold,
        embedder,
    })
}

/// Returns stored vectors for known query texts.
#[derive(Debug, Clone, Default)]
pub struct LookupEmbedder {
    vectors: HashMap<String, Vec<f32>>,
}

impl LookupEmbedder {
    pub fn new(vectors: HashMap<String, Vec<f32>>) -> Self {
        Self { vectors }
    }
}

impl Embedder for LookupEmbedder {
    fn embed(&self, text: &str, dim: usize) -> Result<Vec<f32>> {
        let v = self
            .vectors
            .get(text)
            .ok_or_else(|| Error::Embedder(format!("no stored vector for {text:?}")))?;
        if v.len() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                actual: v.len(),
            });
        }
        Ok(v.clone())
    }
}

/// One corpus per modality in a shared space. Every vector is
/// `[sqrt(bias)·e_modality, sqrt(1-bias)·x]` with `x` a random unit vector,
/// so the cosine between a query and an item is
/// `bias·1{same modality} + (1-bias)·<x_q, x_i>`. Queries are textual; each
/// has one relevant item (sharing its `x`) in its gold modality.
pub struct ModalityGapDataset {
    pub corpora: CorpusSet,
    pub gold: Vec<GoldRecord>,
    pub embedder: LookupEmbedder,
}

impl ModalityGapDataset {
    pub fn oracle_router(&self) -> OracleRouter {
        OracleRouter::new(self.gold.iter().map(|g| (g.query.clone(), g.gold_pathways.clone())))
    }
}

#[derive(Debug, Clone, Copy)]
pub struct ModalityGapConfig {
    pub bias: f64,
    pub queries: usize,
    pub items_per_corpus: usize,
    pub dim: usize,
    pub seed: u64,
}

impl Default for ModalityGapConfig {
    fn default() -> Self {
        Self {
            bias: 0.6,
            queries: 200,
            items_per_corpus: 200,
            dim: 64,
            seed: 0,
        }
    }
}

pub const MODALITY_GAP_PATHWAYS: [Pathway; 4] = [
    Pathway::Target(Paragraph),
    Pathway::Target(Table),
    Pathway::Target(Image),
    Pathway::Target(Video),
];

pub fn modality_gap_dataset(config: ModalityGapConfig) -> Result<ModalityGapDataset> {
    if !(0.0..=1.0).contains(&config.bias) {
        return Err(Error::invalid("bias must lie in [0, 1]"));
    }
    if config.dim <= MODALITY_GAP_PATHWAYS.len() + 1 {
        return Err(Error::invalid(format!(
            "dimension {} leaves no room for the semantic component",
            config.dim
        )));
    }
    let semantic_dim = config.dim - MODALITY_GAP_PATHWAYS.len();
    let (a, b) = (config.bias.sqrt(), (1.0 - config.bias).sqrt());
    let compose = |slot: usize, x: &[f64]| -> Vec<f32> {
        let mut v = vec![0.0f32; config.dim];
        v[slot] = a as f32;
        for (dst, src) in v[MODALITY_GAP_PATHWAYS.len()..].iter_mut().zip(x) {
            *dst = (b * src) as f32;
        }
        v
    };

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut items: Vec<Vec<CorpusItem>> = MODALITY_GAP_PATHWAYS
        .iter()
        .enumerate()
        .map(|(slot, p)| {
            (0..config.items_per_corpus)
                .map(|j| {
                    let x = random_unit(&mut rng, semantic_dim);
                    CorpusItem::new(format!("{}-{j}", p.label()), compose(slot, &x))
                })
                .collect()
        })
        .collect();

    let mut vectors = HashMap::new();
    let mut gold = Vec::with_capacity(config.queries);
    for i in 0..config.queries {
        let slot = i % MODALITY_GAP_PATHWAYS.len();
        let pathway = MODALITY_GAP_PATHWAYS[slot];
        let x = random_unit(&mut rng, semantic_dim);
        let query = format!("modality gap query {i}");
        let id = format!("{}-relevant-{i}", pathway.label());
        items[slot].push(CorpusItem::new(id.clone(), compose(slot, &x)));
        vectors.insert(query.clone(), compose(0, &x));
        gold.push(GoldRecord::new(
            format!("g{i:04}"),
            query,
            PathwaySet::from([pathway]),
            BTreeSet::from([(pathway.label().to_string(), id)]),
        )?);
    }

    let mut corpora = CorpusSet::new();
    for (p, its) in MODALITY_GAP_PATHWAYS.iter().zip(items) {
        corpora.insert(Corpus::from_items(p.label(), *p, its)?)?;
    }
    Ok(ModalityGapDataset {
        corpora,
        gold,
        embedder: LookupEmbedder::new(vectors),
    })
}
