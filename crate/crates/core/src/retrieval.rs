//! Document supply: precomputed retrieval runs, a BM25 fallback over a local
//! corpus, and the unrelated-context sampler used for irrelevant tiers.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs;
use std::path::Path;

use log::warn;
use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::{BenchmarkInstance, Document};

/// Retrieval depth used throughout the pipeline.
pub const DEFAULT_TOP_K: usize = 5;

#[derive(Debug, Error)]
pub enum RetrievalError {
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("query `{query_id}` reappears at line {line} after other queries")]
    DuplicateQuery { query_id: String, line: usize },
    #[error("duplicate doc_id `{0}` in corpus")]
    DuplicateDocId(String),
    #[error("doc_id `{0}` not found in corpus")]
    UnknownDoc(String),
    #[error("no retrieval results for query `{0}`")]
    MissingQuery(String),
    #[error("need {requested} unrelated documents but only {available} are available")]
    InsufficientPool { requested: usize, available: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusEntry {
    pub doc_id: String,
    pub title: String,
    pub contents: String,
}

impl CorpusEntry {
    pub fn to_document(&self, score: Option<f64>) -> Document {
        Document {
            title: self.title.clone(),
            contents: self.contents.clone(),
            source_query_id: None,
            retrieval_score: score,
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct Corpus {
    entries: Vec<CorpusEntry>,
    by_id: HashMap<String, usize>,
}

impl Corpus {
    pub fn new(entries: Vec<CorpusEntry>) -> Result<Self, RetrievalError> {
        let mut by_id = HashMap::with_capacity(entries.len());
        for (i, e) in entries.iter().enumerate() {
            if by_id.insert(e.doc_id.clone(), i).is_some() {
                return Err(RetrievalError::DuplicateDocId(e.doc_id.clone()));
            }
        }
        Ok(Corpus { entries, by_id })
    }

    pub fn get(&self, doc_id: &str) -> Option<&CorpusEntry> {
        self.by_id.get(doc_id).map(|&i| &self.entries[i])
    }

    pub fn entries(&self) -> &[CorpusEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

fn read(path: &Path) -> Result<String, RetrievalError> {
    fs::read_to_string(path).map_err(|source| RetrievalError::Io { path: path.display().to_string(), source })
}

fn parse_jsonl<T: for<'de> Deserialize<'de>>(text: &str) -> Result<Vec<(usize, T)>, RetrievalError> {
    let rows: Vec<(usize, T)> = text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l)
                .map(|row| (i + 1, row))
                .map_err(|e| RetrievalError::Parse { line: i + 1, message: e.to_string() })
        })
        .collect::<Result<_, _>>()?;
    if rows.is_empty() {
        return Err(RetrievalError::Parse { line: 0, message: "file contains no records".into() });
    }
    Ok(rows)
}

/// Loads a JSON Lines corpus `{doc_id, title, contents}`.
pub fn load_corpus(path: &Path) -> Result<Corpus, RetrievalError> {
    let rows = parse_jsonl::<CorpusEntry>(&read(path)?)?;
    Corpus::new(rows.into_iter().map(|(_, e)| e).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredDoc {
    pub doc_id: String,
    pub score: f64,
}

#[derive(Debug, Clone, Deserialize)]
struct RunRow {
    query_id: String,
    rank: u32,
    doc_id: String,
    score: f64,
}

/// Ranked documents per query, each list at most `k` long.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct RetrievalRun {
    pub k: usize,
    pub results: BTreeMap<String, Vec<ScoredDoc>>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RunWarning {
    /// Scores were not non-increasing in rank order; the list was re-sorted.
    ScoreNotMonotone { query_id: String },
}

impl RetrievalRun {
    pub fn get(&self, query_id: &str) -> Option<&[ScoredDoc]> {
        self.results.get(query_id).map(Vec::as_slice)
    }

    pub fn truncate(&mut self, k: usize) {
        self.k = k;
        for list in self.results.values_mut() {
            list.truncate(k);
        }
    }
}

/// Parses a run file of `{query_id, rank, doc_id, score}` rows.
///
/// Lists are ordered by rank, equal ranks keeping file order. A list whose
/// scores then fail to be non-increasing is re-sorted by score (file order
/// breaking ties) and reported as a warning.
pub fn parse_retrieval_run(text: &str) -> Result<(RetrievalRun, Vec<RunWarning>), RetrievalError> {
    let rows = parse_jsonl::<RunRow>(text)?;
    let mut grouped: BTreeMap<String, Vec<(u32, usize, ScoredDoc)>> = BTreeMap::new();
    let mut closed: HashSet<String> = HashSet::new();
    let mut current: Option<String> = None;
    for (line, row) in rows {
        if current.as_deref() != Some(row.query_id.as_str()) {
            if closed.contains(&row.query_id) {
                return Err(RetrievalError::DuplicateQuery { query_id: row.query_id, line });
            }
            if let Some(prev) = current.replace(row.query_id.clone()) {
                closed.insert(prev);
            }
        }
        grouped.entry(row.query_id).or_default().push((
            row.rank,
            line,
            ScoredDoc { doc_id: row.doc_id, score: row.score },
        ));
    }

    let mut warnings = Vec::new();
    let mut results = BTreeMap::new();
    let mut k = 0;
    for (query_id, mut list) in grouped {
        list.sort_by_key(|(rank, line, _)| (*rank, *line));
        let monotone = list.windows(2).all(|w| w[0].2.score >= w[1].2.score);
        if !monotone {
            warn!("retrieval run: scores for `{query_id}` are not monotone; re-sorting");
            list.sort_by(|a, b| b.2.score.total_cmp(&a.2.score).then(a.1.cmp(&b.1)));
            warnings.push(RunWarning::ScoreNotMonotone { query_id: query_id.clone() });
        }
        k = k.max(list.len());
        results.insert(query_id, list.into_iter().map(|(_, _, d)| d).collect());
    }
    Ok((RetrievalRun { k, results }, warnings))
}

pub fn load_retrieval_run(path: &Path) -> Result<(RetrievalRun, Vec<RunWarning>), RetrievalError> {
    parse_retrieval_run(&read(path)?)
}

/// Lowercased alphanumeric tokens; whitespace and punctuation separate tokens.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bm25Params {
    pub k1: f64,
    pub b: f64,
}

impl Default for Bm25Params {
    fn default() -> Self {
        Bm25Params { k1: 1.2, b: 0.75 }
    }
}

/// In-memory BM25 index over title and contents of every corpus entry.
///
/// IDF is `ln(1 + (N - n + 0.5) / (n + 0.5))`, which stays positive for
/// terms present in most documents.
#[derive(Debug, Clone)]
pub struct Bm25Index {
    params: Bm25Params,
    doc_ids: Vec<String>,
    doc_len: Vec<f64>,
    avg_len: f64,
    postings: HashMap<String, Vec<(usize, u32)>>,
}

impl Bm25Index {
    pub fn new(corpus: &Corpus) -> Self {
        Self::with_params(corpus, Bm25Params::default())
    }

    pub fn with_params(corpus: &Corpus, params: Bm25Params) -> Self {
        let mut postings: HashMap<String, Vec<(usize, u32)>> = HashMap::new();
        let mut doc_len = Vec::with_capacity(corpus.len());
        let mut doc_ids = Vec::with_capacity(corpus.len());
        for (i, entry) in corpus.entries().iter().enumerate() {
            let mut tf: HashMap<String, u32> = HashMap::new();
            let mut len = 0usize;
            for tok in tokenize(&entry.title).into_iter().chain(tokenize(&entry.contents)) {
                *tf.entry(tok).or_default() += 1;
                len += 1;
            }
            for (term, count) in tf {
                postings.entry(term).or_default().push((i, count));
            }
            doc_len.push(len as f64);
            doc_ids.push(entry.doc_id.clone());
        }
        let avg_len = if doc_len.is_empty() {
            0.0
        } else {
            doc_len.iter().sum::<f64>() / doc_len.len() as f64
        };
        Bm25Index { params, doc_ids, doc_len, avg_len, postings }
    }

    pub fn idf(&self, term: &str) -> f64 {
        let n_docs = self.doc_ids.len() as f64;
        let df = self.postings.get(term).map_or(0, Vec::len) as f64;
        (1.0 + (n_docs - df + 0.5) / (df + 0.5)).ln()
    }

    /// Scores every document against `query`.
    pub fn scores(&self, query: &str) -> Vec<f64> {
        let mut scores = vec![0.0; self.doc_ids.len()];
        let terms: HashSet<String> = tokenize(query).into_iter().collect();
        let Bm25Params { k1, b } = self.params;
        for term in &terms {
            let Some(list) = self.postings.get(term) else { continue };
            let idf = self.idf(term);
            for &(doc, tf) in list {
                let tf = tf as f64;
                let norm = if self.avg_len > 0.0 { self.doc_len[doc] / self.avg_len } else { 0.0 };
                scores[doc] += idf * tf * (k1 + 1.0) / (tf + k1 * (1.0 - b + b * norm));
            }
        }
        scores
    }

    /// Top `k` documents by score; ties go to the smaller doc_id.
    pub fn topk(&self, query: &str, k: usize) -> Vec<ScoredDoc> {
        let scores = self.scores(query);
        let mut order: Vec<usize> = (0..scores.len()).collect();
        order.sort_by(|&a, &b| {
            scores[b].total_cmp(&scores[a]).then_with(|| self.doc_ids[a].cmp(&self.doc_ids[b]))
        });
        order
            .into_iter()
            .take(k)
            .map(|i| ScoredDoc { doc_id: self.doc_ids[i].clone(), score: scores[i] })
            .collect()
    }
}

/// Convenience wrapper around [`Bm25Index::topk`].
pub fn lexical_topk(corpus: &Corpus, query: &str, k: usize) -> Vec<ScoredDoc> {
    Bm25Index::new(corpus).topk(query, k)
}

fn resolve(corpus: &Corpus, hits: &[ScoredDoc], k: usize) -> Result<Vec<Document>, RetrievalError> {
    hits.iter()
        .take(k)
        .map(|h| {
            corpus
                .get(&h.doc_id)
                .map(|e| e.to_document(Some(h.score)))
                .ok_or_else(|| RetrievalError::UnknownDoc(h.doc_id.clone()))
        })
        .collect()
}

/// Replaces each instance's documents with its top-`k` run entries.
pub fn attach_run(
    instances: &mut [BenchmarkInstance],
    run: &RetrievalRun,
    corpus: &Corpus,
    k: usize,
) -> Result<(), RetrievalError> {
    for inst in instances {
        let hits = run.get(&inst.id).ok_or_else(|| RetrievalError::MissingQuery(inst.id.clone()))?;
        inst.documents = resolve(corpus, hits, k)?;
    }
    Ok(())
}

/// Replaces each instance's documents with BM25 top-`k` over `corpus`.
pub fn attach_lexical(
    instances: &mut [BenchmarkInstance],
    corpus: &Corpus,
    k: usize,
) -> Result<(), RetrievalError> {
    let index = Bm25Index::new(corpus);
    for inst in instances {
        let hits = index.topk(&inst.question, k);
        inst.documents = resolve(corpus, &hits, k)?;
    }
    Ok(())
}

/// Documents of many instances, addressable for sampling by owner.
pub struct UnrelatedPool<'a> {
    docs: Vec<(&'a str, &'a Document)>,
}

impl<'a> UnrelatedPool<'a> {
    pub fn new(instances: &'a [BenchmarkInstance]) -> Self {
        let docs = instances
            .iter()
            .flat_map(|inst| inst.documents.iter().map(move |d| (inst.id.as_str(), d)))
            .collect();
        UnrelatedPool { docs }
    }

    fn is_foreign(owner: &str, doc: &Document, target_id: &str) -> bool {
        owner != target_id && doc.source_query_id.as_deref() != Some(target_id)
    }

    pub fn available_for(&self, target_id: &str) -> usize {
        self.docs.iter().filter(|(o, d)| Self::is_foreign(o, d, target_id)).count()
    }

    /// Draws `n` documents not owned by `target_id`, without replacement.
    ///
    /// Tries rejection sampling over the whole pool first and falls back to
    /// sampling from the explicit eligible list when foreign documents are
    /// scarce.
    pub fn sample(
        &self,
        target_id: &str,
        n: usize,
        rng: &mut ChaCha8Rng,
    ) -> Result<Vec<usize>, RetrievalError> {
        let total = self.docs.len();
        let mut picked: Vec<usize> = Vec::with_capacity(n);
        if total > 0 {
            for _ in 0..REJECTION_TRIES * n {
                if picked.len() == n {
                    break;
                }
                let i = rng.gen_range(0..total);
                let (owner, doc) = self.docs[i];
                if Self::is_foreign(owner, doc, target_id) && !picked.contains(&i) {
                    picked.push(i);
                }
            }
        }
        if picked.len() < n {
            let eligible: Vec<usize> =
                (0..total).filter(|&i| Self::is_foreign(self.docs[i].0, self.docs[i].1, target_id)).collect();
            if eligible.len() < n {
                return Err(RetrievalError::InsufficientPool { requested: n, available: eligible.len() });
            }
            picked = index::sample(rng, eligible.len(), n).into_iter().map(|i| eligible[i]).collect();
        }
        Ok(picked)
    }

    /// Like [`UnrelatedPool::sample`], returning owned documents tagged with
    /// their source query.
    pub fn sample_documents(
        &self,
        target_id: &str,
        n: usize,
        rng: &mut ChaCha8Rng,
    ) -> Result<Vec<Document>, RetrievalError> {
        Ok(self
            .sample(target_id, n, rng)?
            .into_iter()
            .map(|i| {
                let (owner, doc) = self.docs[i];
                let mut doc = doc.clone();
                if doc.source_query_id.is_none() {
                    doc.source_query_id = Some(owner.to_string());
                }
                doc
            })
            .collect())
    }
}

const REJECTION_TRIES: usize = 8;

/// Samples `n` documents from other instances' retrieved sets, uniformly and
/// without replacement under `seed`. Each result records its source query.
pub fn sample_unrelated(
    instances: &[BenchmarkInstance],
    target_id: &str,
    n: usize,
    seed: u64,
) -> Result<Vec<Document>, RetrievalError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    UnrelatedPool::new(instances).sample_documents(target_id, n, &mut rng)
}
