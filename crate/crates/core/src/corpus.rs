//! Corpus construction, persistence and the per-pathway registry.

use std::collections::{BTreeMap, HashSet};
use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pathway::Pathway;
use crate::vecfile;

pub const MANIFEST_FILE: &str = "manifest.json";
const VECTOR_FILE: &str = "vectors.bin";
const AUX_VECTOR_FILE: &str = "aux_vectors.bin";
const PAYLOAD_FILE: &str = "payloads.jsonl";

static EMPTY_PAYLOAD: Payload = Payload {
    text: None,
    caption: None,
    media_ref: None,
    meta: None,
};

/// Opaque item content carried alongside its vectors.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Payload {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub text: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub caption: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub media_ref: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub meta: Option<serde_json::Value>,
}

impl Payload {
    pub fn text(text: impl Into<String>) -> Self {
        Self {
            text: Some(text.into()),
            ..Self::default()
        }
    }

    /// Best textual rendering: text, then caption, then media reference.
    pub fn display_text(&self) -> &str {
        self.text
            .as_deref()
            .or(self.caption.as_deref())
            .or(self.media_ref.as_deref())
            .unwrap_or("")
    }
}

/// One payload-file line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PayloadRecord {
    pub id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub text: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub caption: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub media_ref: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub meta: Option<serde_json::Value>,
}

impl PayloadRecord {
    pub fn split(self) -> (String, Payload) {
        (
            self.id,
            Payload {
                text: self.text,
                caption: self.caption,
                media_ref: self.media_ref,
                meta: self.meta,
            },
        )
    }

    fn join(id: &str, p: &Payload) -> Self {
        Self {
            id: id.to_string(),
            text: p.text.clone(),
            caption: p.caption.clone(),
            media_ref: p.media_ref.clone(),
            meta: p.meta.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorpusItem {
    pub id: String,
    pub primary_vec: Vec<f32>,
    /// Caption or script embedding for visual items.
    pub aux_text_vec: Option<Vec<f32>>,
    pub payload: Payload,
}

impl CorpusItem {
    pub fn new(id: impl Into<String>, primary_vec: Vec<f32>) -> Self {
        Self {
            id: id.into(),
            primary_vec,
            aux_text_vec: None,
            payload: Payload::default(),
        }
    }

    pub fn with_aux(mut self, aux: Vec<f32>) -> Self {
        self.aux_text_vec = Some(aux);
        self
    }

    pub fn with_payload(mut self, payload: Payload) -> Self {
        self.payload = payload;
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusManifest {
    pub name: String,
    pub pathway: Pathway,
    pub dim: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub aux_dim: Option<usize>,
    pub count: usize,
    pub vector_file: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub aux_vector_file: Option<PathBuf>,
    pub payload_file: PathBuf,
}

/// Immutable, L2-normalized corpus held in memory.
///
/// Auxiliary rows are stored densely; an all-zero row marks an item
/// without an auxiliary vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    name: String,
    pathway: Pathway,
    dim: usize,
    aux_dim: Option<usize>,
    ids: Vec<String>,
    vectors: Vec<f32>,
    aux_vectors: Option<Vec<f32>>,
    payloads: Vec<Payload>,
}

impl Corpus {
    /// Validates and normalizes `items` into a corpus.
    pub fn from_items(name: impl Into<String>, pathway: Pathway, items: Vec<CorpusItem>) -> Result<Self> {
        if pathway.is_none() {
            return Err(Error::NoneCorpus);
        }
        let first = items.first().ok_or(Error::EmptyCorpus)?;
        let dim = first.primary_vec.len();
        if dim == 0 {
            return Err(Error::invalid("zero-dimensional vectors"));
        }
        let aux_dim = items
            .iter()
            .find_map(|it| it.aux_text_vec.as_ref().map(Vec::len));

        let mut seen = HashSet::with_capacity(items.len());
        let mut ids = Vec::with_capacity(items.len());
        let mut vectors = Vec::with_capacity(items.len() * dim);
        let mut aux_vectors = aux_dim.map(|d| Vec::with_capacity(items.len() * d));
        let mut payloads = Vec::with_capacity(items.len());

        for item in items {
            if item.primary_vec.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    actual: item.primary_vec.len(),
                });
            }
            if !seen.insert(item.id.clone()) {
                return Err(Error::DuplicateId(item.id));
            }
            vectors.extend(normalized(&item.primary_vec)?);
            if let (Some(buf), Some(d)) = (aux_vectors.as_mut(), aux_dim) {
                match &item.aux_text_vec {
                    Some(aux) if aux.len() != d => {
                        return Err(Error::DimensionMismatch {
                            expected: d,
                            actual: aux.len(),
                        })
                    }
                    Some(aux) => buf.extend(normalized(aux)?),
                    None => buf.extend(std::iter::repeat_n(0.0, d)),
                }
            }
            ids.push(item.id);
            payloads.push(item.payload);
        }

        Ok(Self {
            name: name.into(),
            pathway,
            dim,
            aux_dim,
            ids,
            vectors,
            aux_vectors,
            payloads,
        })
    }

    /// Builds a corpus from already-normalized row-major vectors without
    /// payloads. Used for large synthetic corpora.
    pub fn from_normalized_rows(
        name: impl Into<String>,
        pathway: Pathway,
        dim: usize,
        ids: Vec<String>,
        vectors: Vec<f32>,
    ) -> Result<Self> {
        if pathway.is_none() {
            return Err(Error::NoneCorpus);
        }
        if ids.is_empty() {
            return Err(Error::EmptyCorpus);
        }
        if dim == 0 || vectors.len() != ids.len() * dim {
            return Err(Error::DimensionMismatch {
                expected: ids.len() * dim,
                actual: vectors.len(),
            });
        }
        Ok(Self {
            name: name.into(),
            pathway,
            dim,
            aux_dim: None,
            ids,
            vectors,
            aux_vectors: None,
            payloads: Vec::new(),
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn pathway(&self) -> Pathway {
        self.pathway
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn aux_dim(&self) -> Option<usize> {
        self.aux_dim
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn id(&self, i: usize) -> &str {
        &self.ids[i]
    }

    pub fn vector(&self, i: usize) -> &[f32] {
        &self.vectors[i * self.dim..(i + 1) * self.dim]
    }

    /// Row-major view of all primary vectors.
    pub fn vectors(&self) -> &[f32] {
        &self.vectors
    }

    pub fn aux_vector(&self, i: usize) -> Option<&[f32]> {
        let d = self.aux_dim?;
        let row = &self.aux_vectors.as_ref()?[i * d..(i + 1) * d];
        row.iter().any(|&x| x != 0.0).then_some(row)
    }

    pub fn payload(&self, i: usize) -> &Payload {
        assert!(i < self.ids.len(), "item index {i} out of range");
        self.payloads.get(i).unwrap_or(&EMPTY_PAYLOAD)
    }

    pub fn position(&self, id: &str) -> Option<usize> {
        self.ids.iter().position(|x| x == id)
    }

    /// Writes the vector, auxiliary vector and payload files plus
    /// `manifest.json` into `out_dir`.
    pub fn write(&self, out_dir: &Path) -> Result<CorpusManifest> {
        fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
        vecfile::write_file(&out_dir.join(VECTOR_FILE), self.dim, &self.vectors)?;
        if let (Some(d), Some(aux)) = (self.aux_dim, &self.aux_vectors) {
            vecfile::write_file(&out_dir.join(AUX_VECTOR_FILE), d, aux)?;
        }

        let payload_path = out_dir.join(PAYLOAD_FILE);
        let file = File::create(&payload_path).map_err(|e| Error::io(&payload_path, e))?;
        let mut w = BufWriter::new(file);
        for (i, id) in self.ids.iter().enumerate() {
            let p = self.payload(i);
            let line = serde_json::to_string(&PayloadRecord::join(id, p))
                .map_err(|e| Error::json("payload", e))?;
            writeln!(w, "{line}").map_err(|e| Error::io(&payload_path, e))?;
        }
        w.flush().map_err(|e| Error::io(&payload_path, e))?;

        let manifest = CorpusManifest {
            name: self.name.clone(),
            pathway: self.pathway,
            dim: self.dim,
            aux_dim: self.aux_dim,
            count: self.len(),
            vector_file: VECTOR_FILE.into(),
            aux_vector_file: self.aux_dim.map(|_| AUX_VECTOR_FILE.into()),
            payload_file: PAYLOAD_FILE.into(),
        };
        let manifest_path = out_dir.join(MANIFEST_FILE);
        let text = serde_json::to_string_pretty(&manifest).map_err(|e| Error::json("manifest", e))?;
        fs::write(&manifest_path, text + "\n").map_err(|e| Error::io(&manifest_path, e))?;
        Ok(manifest)
    }
}

/// Unit-normalizes in f64 before narrowing back to f32.
pub(crate) fn normalized(v: &[f32]) -> Result<Vec<f32>> {
    let norm = v.iter().map(|&x| (x as f64) * (x as f64)).sum::<f64>().sqrt();
    if norm == 0.0 || !norm.is_finite() {
        return Err(Error::ZeroVector);
    }
    Ok(v.iter().map(|&x| (x as f64 / norm) as f32).collect())
}

/// Builds a corpus named after its pathway and persists it under `out_dir`.
pub fn build_corpus(items: Vec<CorpusItem>, pathway: Pathway, out_dir: &Path) -> Result<CorpusManifest> {
    build_named_corpus(pathway.label(), items, pathway, out_dir)
}

pub fn build_named_corpus(
    name: &str,
    items: Vec<CorpusItem>,
    pathway: Pathway,
    out_dir: &Path,
) -> Result<CorpusManifest> {
    Corpus::from_items(name, pathway, items)?.write(out_dir)
}

/// Loads a corpus from its manifest. Referenced files are resolved
/// relative to the manifest's directory.
pub fn load_corpus(manifest_path: &Path) -> Result<Corpus> {
    let text = fs::read_to_string(manifest_path).map_err(|e| Error::io(manifest_path, e))?;
    let manifest: CorpusManifest = serde_json::from_str(&text)
        .map_err(|e| Error::json(manifest_path.display().to_string(), e))?;
    if manifest.pathway.is_none() {
        return Err(Error::NoneCorpus);
    }
    let base = manifest_path.parent().unwrap_or(Path::new("."));

    let vectors = vecfile::read_file(&base.join(&manifest.vector_file))?;
    check_block(&manifest, "vector file", manifest.dim, &vectors)?;

    let aux_vectors = match (&manifest.aux_vector_file, manifest.aux_dim) {
        (Some(file), Some(d)) => {
            let block = vecfile::read_file(&base.join(file))?;
            check_block(&manifest, "aux vector file", d, &block)?;
            Some(block.data)
        }
        (None, None) => None,
        _ => return Err(Error::invalid("aux_dim and aux_vector_file must be set together")),
    };

    let payload_path = base.join(&manifest.payload_file);
    let reader = BufReader::new(File::open(&payload_path).map_err(|e| Error::io(&payload_path, e))?);
    let mut ids = Vec::with_capacity(manifest.count);
    let mut payloads = Vec::with_capacity(manifest.count);
    for (lineno, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io(&payload_path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let record: PayloadRecord = serde_json::from_str(&line)
            .map_err(|e| Error::json(format!("{}:{}", payload_path.display(), lineno + 1), e))?;
        let (id, payload) = record.split();
        ids.push(id);
        payloads.push(payload);
    }
    if ids.len() != manifest.count {
        return Err(Error::CountMismatch {
            what: "payload file".into(),
            expected: manifest.count,
            actual: ids.len(),
        });
    }
    let mut seen = HashSet::with_capacity(ids.len());
    if let Some(dup) = ids.iter().find(|id| !seen.insert(id.as_str())) {
        return Err(Error::DuplicateId(dup.clone()));
    }

    Ok(Corpus {
        name: manifest.name,
        pathway: manifest.pathway,
        dim: manifest.dim,
        aux_dim: manifest.aux_dim,
        ids,
        vectors: vectors.data,
        aux_vectors,
        payloads,
    })
}

fn check_block(manifest: &CorpusManifest, what: &str, dim: usize, block: &vecfile::VectorBlock) -> Result<()> {
    if block.dim != dim {
        return Err(Error::DimensionMismatch {
            expected: dim,
            actual: block.dim,
        });
    }
    if block.count != manifest.count {
        return Err(Error::CountMismatch {
            what: what.into(),
            expected: manifest.count,
            actual: block.count,
        });
    }
    Ok(())
}

/// Corpora keyed by pathway, with per-corpus access counters.
#[derive(Debug, Default)]
pub struct CorpusSet {
    corpora: BTreeMap<Pathway, Arc<Corpus>>,
    accesses: BTreeMap<Pathway, AtomicUsize>,
}

impl CorpusSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, corpus: impl Into<Arc<Corpus>>) -> Result<()> {
        let corpus = corpus.into();
        let pathway = corpus.pathway();
        if self.corpora.contains_key(&pathway) {
            return Err(Error::invalid(format!("two corpora registered for {pathway}")));
        }
        self.accesses.insert(pathway, AtomicUsize::new(0));
        self.corpora.insert(pathway, corpus);
        Ok(())
    }

    pub fn from_corpora(corpora: impl IntoIterator<Item = Corpus>) -> Result<Self> {
        let mut set = Self::new();
        for c in corpora {
            set.insert(c)?;
        }
        Ok(set)
    }

    /// Loads every `*/manifest.json` directly under `root`.
    pub fn load_dir(root: &Path) -> Result<Self> {
        let mut manifests = Vec::new();
        for entry in fs::read_dir(root).map_err(|e| Error::io(root, e))? {
            let path = entry.map_err(|e| Error::io(root, e))?.path().join(MANIFEST_FILE);
            if path.is_file() {
                manifests.push(path);
            }
        }
        manifests.sort();
        let mut set = Self::new();
        for m in manifests {
            set.insert(load_corpus(&m)?)?;
        }
        Ok(set)
    }

    /// Fetches a corpus for retrieval, counting the access.
    pub fn get(&self, pathway: Pathway) -> Option<&Corpus> {
        let corpus = self.corpora.get(&pathway)?;
        self.accesses[&pathway].fetch_add(1, Ordering::Relaxed);
        Some(corpus)
    }

    /// Fetches without touching the access counter.
    pub fn peek(&self, pathway: Pathway) -> Option<&Corpus> {
        self.corpora.get(&pathway).map(Arc::as_ref)
    }

    pub fn access_count(&self, pathway: Pathway) -> usize {
        self.accesses
            .get(&pathway)
            .map_or(0, |c| c.load(Ordering::Relaxed))
    }

    pub fn reset_access_counts(&self) {
        self.accesses.values().for_each(|c| c.store(0, Ordering::Relaxed));
    }

    pub fn pathways(&self) -> impl Iterator<Item = Pathway> + '_ {
        self.corpora.keys().copied()
    }

    /// All corpora in canonical pathway order, without counting access.
    pub fn all(&self) -> impl Iterator<Item = &Corpus> + '_ {
        self.corpora.values().map(Arc::as_ref)
    }

    pub fn len(&self) -> usize {
        self.corpora.len()
    }

    pub fn is_empty(&self) -> bool {
        self.corpora.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embed::HashEmbedder;
    use crate::embed::Embedder;
    use crate::pathway::Granularity;

    const IMAGE: Pathway = Pathway::Target(Granularity::Image);

    fn three_items() -> Vec<CorpusItem> {
        vec![
            CorpusItem::new("a", vec![1.0, 0.0, 0.0, 0.0]).with_payload(Payload::text("alpha")),
            CorpusItem::new("b", vec![0.0, 2.0, 0.0, 0.0]).with_aux(vec![3.0, 4.0]),
            CorpusItem::new("c", vec![0.0, 0.0, 1.0, 1.0]).with_payload(Payload {
                media_ref: Some("img/c.png".into()),
                meta: Some(serde_json::json!({"w": 3})),
                ..Payload::default()
            }),
        ]
    }

    #[test]
    fn build_and_reload_byte_identical() {
        let dir = tempfile::tempdir().unwrap();
        let manifest = build_corpus(three_items(), IMAGE, dir.path()).unwrap();
        assert_eq!((manifest.count, manifest.dim, manifest.aux_dim), (3, 4, Some(2)));

        let corpus = load_corpus(&dir.path().join(MANIFEST_FILE)).unwrap();
        assert_eq!(corpus.ids(), ["a", "b", "c"]);
        assert_eq!(corpus.payload(0).text.as_deref(), Some("alpha"));
        assert!(corpus.aux_vector(0).is_none());
        assert_eq!(corpus.aux_vector(1).unwrap(), &[0.6, 0.8]);

        let dir2 = tempfile::tempdir().unwrap();
        corpus.write(dir2.path()).unwrap();
        for f in [VECTOR_FILE, AUX_VECTOR_FILE, PAYLOAD_FILE, MANIFEST_FILE] {
            assert_eq!(
                fs::read(dir.path().join(f)).unwrap(),
                fs::read(dir2.path().join(f)).unwrap(),
                "{f}"
            );
        }
    }

    #[test]
    fn build_errors() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(build_corpus(vec![], IMAGE, dir.path()), Err(Error::EmptyCorpus)));
        assert!(matches!(
            build_corpus(three_items(), Pathway::None, dir.path()),
            Err(Error::NoneCorpus)
        ));
        let mut items = three_items();
        items[1].primary_vec.push(1.0);
        assert!(matches!(
            build_corpus(items, IMAGE, dir.path()),
            Err(Error::DimensionMismatch { expected: 4, actual: 5 })
        ));
        let mut items = three_items();
        items[2].id = "a".into();
        assert!(matches!(build_corpus(items, IMAGE, dir.path()), Err(Error::DuplicateId(_))));

        let file = dir.path().join("plain");
        fs::write(&file, b"x").unwrap();
        assert!(matches!(
            build_corpus(three_items(), IMAGE, &file.join("sub")),
            Err(Error::Io { .. })
        ));
    }

    #[test]
    fn load_detects_truncation_and_count_mismatch() {
        let dir = tempfile::tempdir().unwrap();
        build_corpus(three_items(), IMAGE, dir.path()).unwrap();
        let manifest = dir.path().join(MANIFEST_FILE);

        let vec_path = dir.path().join(VECTOR_FILE);
        let bytes = fs::read(&vec_path).unwrap();
        fs::write(&vec_path, &bytes[..bytes.len() - 1]).unwrap();
        let err = load_corpus(&manifest).unwrap_err();
        assert!(err.to_string().contains("truncated"), "{err}");
        fs::write(&vec_path, &bytes).unwrap();

        let mut m: CorpusManifest = serde_json::from_str(&fs::read_to_string(&manifest).unwrap()).unwrap();
        m.count = 5;
        fs::write(&manifest, serde_json::to_string(&m).unwrap()).unwrap();
        assert!(matches!(load_corpus(&manifest), Err(Error::CountMismatch { .. })));

        // vectors agree on 3 but only 2 payload lines
        m.count = 3;
        fs::write(&manifest, serde_json::to_string(&m).unwrap()).unwrap();
        let payloads = fs::read_to_string(dir.path().join(PAYLOAD_FILE)).unwrap();
        let two: String = payloads.lines().take(2).map(|l| format!("{l}\n")).collect();
        fs::write(dir.path().join(PAYLOAD_FILE), two).unwrap();
        let err = load_corpus(&manifest).unwrap_err();
        assert!(err.to_string().contains("count mismatch"), "{err}");
    }

    #[test]
    fn hashed_corpus_roundtrip_within_tolerance() {
        let embedder = HashEmbedder::new(11);
        let items: Vec<CorpusItem> = (0..1000)
            .map(|i| {
                let text = format!("document number {i} about topic {}", i % 37);
                CorpusItem::new(format!("d{i}"), embedder.embed(&text, 64).unwrap())
                    .with_payload(Payload::text(text))
            })
            .collect();
        let expected: Vec<Vec<f32>> = items.iter().map(|it| it.primary_vec.clone()).collect();
        let dir = tempfile::tempdir().unwrap();
        build_corpus(items, Pathway::Target(Granularity::Paragraph), dir.path()).unwrap();
        let corpus = load_corpus(&dir.path().join(MANIFEST_FILE)).unwrap();
        assert_eq!(corpus.len(), 1000);
        for (i, v) in expected.iter().enumerate() {
            for (a, b) in corpus.vector(i).iter().zip(v) {
                assert!((a - b).abs() <= 1e-6);
            }
            let norm: f64 = corpus.vector(i).iter().map(|&x| (x as f64).powi(2)).sum::<f64>().sqrt();
            assert!((norm - 1.0).abs() <= 1e-6);
        }
    }

    #[test]
    fn set_counts_accesses() {
        let corpus = Corpus::from_items("img", IMAGE, three_items()).unwrap();
        let mut set = CorpusSet::new();
        set.insert(corpus.clone()).unwrap();
        assert!(set.insert(corpus).is_err());
        assert_eq!(set.access_count(IMAGE), 0);
        set.peek(IMAGE).unwrap();
        set.get(IMAGE).unwrap();
        assert_eq!(set.access_count(IMAGE), 1);
        assert!(set.get(Pathway::Target(Granularity::Video)).is_none());
    }
}
