//! Embedding providers and an exact in-memory cosine index.

use std::borrow::Cow;
use std::collections::{BTreeSet, HashMap};
use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lingsig::tokenize;

pub const DEFAULT_DIMENSION: usize = 768;
pub const DEFAULT_K: usize = 32;

/// A unit-norm dense vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Embedding(Vec<f64>);

impl Embedding {
    /// Normalizes `values` to unit L2 norm. A zero vector is rejected.
    pub fn normalized(mut values: Vec<f64>) -> Result<Self> {
        let norm = values.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm <= 0.0 || !norm.is_finite() {
            return Err(Error::Embedding("cannot normalize a zero vector".into()));
        }
        values.iter_mut().for_each(|v| *v /= norm);
        Ok(Self(values))
    }

    pub fn dimension(&self) -> usize {
        self.0.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn norm(&self) -> f64 {
        self.0.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

pub fn cosine(a: &Embedding, b: &Embedding) -> Result<f64> {
    if a.dimension() != b.dimension() {
        return Err(Error::DimensionMismatch {
            expected: a.dimension(),
            actual: b.dimension(),
        });
    }
    let dot: f64 = a.0.iter().zip(&b.0).map(|(x, y)| x * y).sum();
    Ok(dot.clamp(-1.0, 1.0))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Passage {
    pub id: String,
    pub text: String,
    #[serde(default)]
    pub intent_labels: BTreeSet<String>,
    #[serde(default)]
    pub domain: Option<String>,
}

impl Passage {
    pub fn new(id: impl Into<String>, text: impl Into<String>) -> Self {
        Self {
            id: id.into(),
            text: text.into(),
            intent_labels: BTreeSet::new(),
            domain: None,
        }
    }

    pub fn with_labels<I, S>(mut self, labels: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        self.intent_labels = labels.into_iter().map(Into::into).collect();
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScoreKind {
    Cosine,
    Rerank,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScoredPassage {
    pub passage: Arc<Passage>,
    pub score: f64,
    pub kind: ScoreKind,
}

impl ScoredPassage {
    pub fn cosine(passage: Arc<Passage>, score: f64) -> Self {
        Self {
            passage,
            score,
            kind: ScoreKind::Cosine,
        }
    }

    pub fn id(&self) -> &str {
        &self.passage.id
    }
}

/// Descending score, ascending id.
pub fn rank_order(a: &ScoredPassage, b: &ScoredPassage) -> std::cmp::Ordering {
    b.score
        .total_cmp(&a.score)
        .then_with(|| a.passage.id.cmp(&b.passage.id))
}

pub trait EmbeddingProvider: Send + Sync {
    fn dimension(&self) -> usize;
    fn embed_raw(&self, text: &str) -> Result<Vec<f64>>;
}

/// Embeds `text` and enforces the provider contract: configured dimension and unit norm.
pub fn embed(text: &str, provider: &dyn EmbeddingProvider) -> Result<Embedding> {
    let raw = provider.embed_raw(text)?;
    if raw.len() != provider.dimension() {
        return Err(Error::DimensionMismatch {
            expected: provider.dimension(),
            actual: raw.len(),
        });
    }
    Embedding::normalized(raw)
}

/// Token-bag hashing embedder. Each token adds unit mass to one seeded bucket,
/// so texts sharing tokens have positive cosine and disjoint texts (barring
/// bucket collisions) have cosine zero.
#[derive(Debug, Clone)]
pub struct StubEmbedder {
    dimension: usize,
    seed: u64,
}

impl StubEmbedder {
    pub fn new(dimension: usize, seed: u64) -> Self {
        assert!(dimension > 0, "embedding dimension must be positive");
        Self { dimension, seed }
    }

    fn bucket(&self, token: &str) -> usize {
        // FNV-1a over the seed bytes then the token bytes.
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for b in self.seed.to_le_bytes().iter().chain(token.as_bytes()) {
            h ^= u64::from(*b);
            h = h.wrapping_mul(0x0100_0000_01b3);
        }
        (h % self.dimension as u64) as usize
    }
}

impl EmbeddingProvider for StubEmbedder {
    fn dimension(&self) -> usize {
        self.dimension
    }

    fn embed_raw(&self, text: &str) -> Result<Vec<f64>> {
        let mut v = vec![0.0; self.dimension];
        let tq = tokenize(text);
        if tq.tokens.is_empty() {
            v[self.bucket("\u{0}empty")] = 1.0;
        }
        for t in &tq.tokens {
            v[self.bucket(t)] += 1.0;
        }
        Ok(v)
    }
}

/// Client for an OpenAI-style `/v1/embeddings` endpoint.
pub struct RemoteEmbedder {
    agent: ureq::Agent,
    url: String,
    model: String,
    dimension: usize,
}

#[derive(Serialize)]
struct EmbeddingRequest<'a> {
    model: &'a str,
    input: [&'a str; 1],
}

#[derive(Deserialize)]
struct EmbeddingResponse {
    data: Vec<EmbeddingDatum>,
}

#[derive(Deserialize)]
struct EmbeddingDatum {
    embedding: Vec<f64>,
}

impl RemoteEmbedder {
    pub fn new(endpoint: &str, model: &str, dimension: usize, timeout: Duration) -> Self {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .build()
            .into();
        Self {
            agent,
            url: format!("{}/v1/embeddings", endpoint.trim_end_matches('/')),
            model: model.to_owned(),
            dimension,
        }
    }
}

impl EmbeddingProvider for RemoteEmbedder {
    fn dimension(&self) -> usize {
        self.dimension
    }

    fn embed_raw(&self, text: &str) -> Result<Vec<f64>> {
        let body = EmbeddingRequest {
            model: &self.model,
            input: [text],
        };
        let mut resp = self
            .agent
            .post(&self.url)
            .send_json(&body)
            .map_err(|e| Error::Embedding(e.to_string()))?;
        let parsed: EmbeddingResponse = resp
            .body_mut()
            .read_json()
            .map_err(|e| Error::Embedding(e.to_string()))?;
        parsed
            .data
            .into_iter()
            .next()
            .map(|d| d.embedding)
            .ok_or_else(|| Error::Embedding("response carried no embedding".into()))
    }
}

/// Source of passage embeddings for similarity checks after retrieval.
pub trait PassageEmbeddings: Sync {
    fn passage_embedding(&self, passage: &Passage) -> Result<Cow<'_, Embedding>>;
}

impl PassageEmbeddings for VectorStore {
    fn passage_embedding(&self, passage: &Passage) -> Result<Cow<'_, Embedding>> {
        self.embedding_of(&passage.id)
            .map(Cow::Borrowed)
            .ok_or_else(|| Error::Embedding(format!("passage `{}` is not indexed", passage.id)))
    }
}

/// Embeds passage text on demand with a provider.
pub struct OnDemand<'a>(pub &'a dyn EmbeddingProvider);

impl PassageEmbeddings for OnDemand<'_> {
    fn passage_embedding(&self, passage: &Passage) -> Result<Cow<'_, Embedding>> {
        embed(&passage.text, self.0).map(Cow::Owned)
    }
}

/// Exact cosine index. Immutable once built; passages are held in id order so
/// search output does not depend on insertion order.
#[derive(Debug, Clone)]
pub struct VectorStore {
    dimension: usize,
    passages: Vec<Arc<Passage>>,
    embeddings: Vec<Embedding>,
    by_id: HashMap<String, usize>,
}

impl VectorStore {
    pub fn build(passages: Vec<Passage>, provider: &dyn EmbeddingProvider) -> Result<Self> {
        let mut passages = passages;
        passages.sort_by(|a, b| a.id.cmp(&b.id));
        if let Some(w) = passages.windows(2).find(|w| w[0].id == w[1].id) {
            return Err(Error::DuplicatePassage(w[0].id.clone()));
        }
        if let Some(p) = passages.iter().find(|p| p.text.trim().is_empty()) {
            return Err(Error::InvalidPassage(p.id.clone()));
        }
        let embeddings = passages
            .iter()
            .map(|p| embed(&p.text, provider))
            .collect::<Result<Vec<_>>>()?;
        let by_id = passages
            .iter()
            .enumerate()
            .map(|(i, p)| (p.id.clone(), i))
            .collect();
        Ok(Self {
            dimension: provider.dimension(),
            passages: passages.into_iter().map(Arc::new).collect(),
            embeddings,
            by_id,
        })
    }

    pub fn len(&self) -> usize {
        self.passages.len()
    }

    pub fn is_empty(&self) -> bool {
        self.passages.is_empty()
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn passages(&self) -> &[Arc<Passage>] {
        &self.passages
    }

    pub fn embedding_of(&self, passage_id: &str) -> Option<&Embedding> {
        self.by_id.get(passage_id).map(|&i| &self.embeddings[i])
    }

    pub fn get(&self, passage_id: &str) -> Option<&Arc<Passage>> {
        self.by_id.get(passage_id).map(|&i| &self.passages[i])
    }

    /// Exhaustive top-`k` by cosine. Returns `min(k, len)` hits.
    pub fn search(&self, query: &Embedding, k: usize) -> Result<Vec<ScoredPassage>> {
        if query.dimension() != self.dimension {
            return Err(Error::DimensionMismatch {
                expected: self.dimension,
                actual: query.dimension(),
            });
        }
        let mut hits = self
            .passages
            .iter()
            .zip(&self.embeddings)
            .map(|(p, e)| Ok(ScoredPassage::cosine(Arc::clone(p), cosine(query, e)?)))
            .collect::<Result<Vec<_>>>()?;
        hits.sort_by(rank_order);
        hits.truncate(k);
        Ok(hits)
    }
}
