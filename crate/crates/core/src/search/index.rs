use std::collections::{BTreeMap, BTreeSet};
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::snippet::{make_snippet, DEFAULT_SNIPPET_WIDTH};
use super::tokenize::tokenize;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Document {
    pub doc_id: String,
    pub url: String,
    pub title: String,
    pub body: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub topic_tags: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bm25Params {
    pub k1: f64,
    pub b: f64,
}

impl Default for Bm25Params {
    fn default() -> Self {
        Self { k1: 1.2, b: 0.75 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredResult {
    pub rank: u32,
    pub doc_id: String,
    pub score: f64,
    pub title: String,
    pub url: String,
    pub snippet: String,
}

#[derive(Debug, Error)]
pub enum SearchError {
    #[error("failed to read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: duplicate doc_id `{doc_id}`")]
    DuplicateDocId { line: usize, doc_id: String },
    #[error("line {line}: malformed record: {reason}")]
    MalformedRecord { line: usize, reason: String },
    #[error("unknown document `{0}`")]
    UnknownDoc(String),
    #[error("invalid BM25 parameters k1={k1}, b={b}")]
    InvalidParams { k1: f64, b: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
struct Posting {
    doc_id_idx: u32,
    tf: u32,
}

/// Inverted index over a fixed document set. Immutable once built.
///
/// Titles are indexed together with bodies (title tokens first, counted
/// once). No stemming or stopword removal is applied.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Index {
    documents: BTreeMap<String, Document>,
    /// doc_id -> position in `doc_ids`, which is sorted.
    doc_ids: Vec<String>,
    postings: BTreeMap<String, Vec<Posting>>,
    doc_lengths: Vec<u32>,
    avg_doc_len: f64,
    params: Bm25Params,
    snippet_width: usize,
}

impl Index {
    pub fn build(
        docs: impl IntoIterator<Item = Document>,
        params: Bm25Params,
    ) -> Result<Self, SearchError> {
        if params.k1.is_nan() || params.k1 <= 0.0 || !(0.0..=1.0).contains(&params.b) {
            return Err(SearchError::InvalidParams {
                k1: params.k1,
                b: params.b,
            });
        }
        let mut documents = BTreeMap::new();
        for (i, doc) in docs.into_iter().enumerate() {
            if documents.contains_key(&doc.doc_id) {
                return Err(SearchError::DuplicateDocId {
                    line: i + 1,
                    doc_id: doc.doc_id,
                });
            }
            documents.insert(doc.doc_id.clone(), doc);
        }
        let doc_ids: Vec<String> = documents.keys().cloned().collect();
        let mut postings: BTreeMap<String, Vec<Posting>> = BTreeMap::new();
        let mut doc_lengths = Vec::with_capacity(doc_ids.len());
        for (idx, doc) in documents.values().enumerate() {
            let mut counts: BTreeMap<String, u32> = BTreeMap::new();
            let mut len = 0u32;
            for term in tokenize(&doc.title).into_iter().chain(tokenize(&doc.body)) {
                *counts.entry(term).or_default() += 1;
                len += 1;
            }
            doc_lengths.push(len);
            for (term, tf) in counts {
                postings.entry(term).or_default().push(Posting {
                    doc_id_idx: idx as u32,
                    tf,
                });
            }
        }
        let avg_doc_len = if doc_lengths.is_empty() {
            0.0
        } else {
            doc_lengths.iter().map(|&l| l as f64).sum::<f64>() / doc_lengths.len() as f64
        };
        Ok(Self {
            documents,
            doc_ids,
            postings,
            doc_lengths,
            avg_doc_len,
            params,
            snippet_width: DEFAULT_SNIPPET_WIDTH,
        })
    }

    /// Reads a corpus file: one JSON object per line with `doc_id`, `url`,
    /// `title`, `body` and optional `topic_tags`. Blank lines are ignored.
    pub fn ingest_corpus(path: impl AsRef<Path>, params: Bm25Params) -> Result<Self, SearchError> {
        let path = path.as_ref();
        let io_err = |source| SearchError::Io {
            path: path.to_path_buf(),
            source,
        };
        let file = std::fs::File::open(path).map_err(io_err)?;
        let mut docs = Vec::new();
        let mut seen = BTreeSet::new();
        for (i, line) in BufReader::new(file).lines().enumerate() {
            let line_no = i + 1;
            let line = line.map_err(io_err)?;
            if line.trim().is_empty() {
                continue;
            }
            let doc: Document =
                serde_json::from_str(&line).map_err(|e| SearchError::MalformedRecord {
                    line: line_no,
                    reason: e.to_string(),
                })?;
            if doc.doc_id.is_empty() || doc.title.trim().is_empty() {
                return Err(SearchError::MalformedRecord {
                    line: line_no,
                    reason: "doc_id and title must be non-empty".into(),
                });
            }
            if !seen.insert(doc.doc_id.clone()) {
                return Err(SearchError::DuplicateDocId {
                    line: line_no,
                    doc_id: doc.doc_id,
                });
            }
            docs.push(doc);
        }
        Self::build(docs, params)
    }

    pub fn with_snippet_width(mut self, width: usize) -> Self {
        self.snippet_width = width.max(1);
        self
    }

    pub fn len(&self) -> usize {
        self.doc_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.doc_ids.is_empty()
    }

    pub fn vocabulary_size(&self) -> usize {
        self.postings.len()
    }

    pub fn avg_doc_len(&self) -> f64 {
        self.avg_doc_len
    }

    pub fn params(&self) -> Bm25Params {
        self.params
    }

    pub fn documents(&self) -> impl Iterator<Item = &Document> {
        self.documents.values()
    }

    pub fn doc_len(&self, doc_id: &str) -> Option<u32> {
        self.position(doc_id).map(|i| self.doc_lengths[i])
    }

    /// Postings for `term` as `(doc_id, tf)` pairs in doc_id order.
    pub fn postings(&self, term: &str) -> Vec<(&str, u32)> {
        self.postings
            .get(term)
            .map(|list| {
                list.iter()
                    .map(|p| (self.doc_ids[p.doc_id_idx as usize].as_str(), p.tf))
                    .collect()
            })
            .unwrap_or_default()
    }

    pub fn get_document(&self, doc_id: &str) -> Result<&Document, SearchError> {
        self.documents
            .get(doc_id)
            .ok_or_else(|| SearchError::UnknownDoc(doc_id.to_string()))
    }

    fn position(&self, doc_id: &str) -> Option<usize> {
        self.doc_ids
            .binary_search_by(|d| d.as_str().cmp(doc_id))
            .ok()
    }

    fn idf(&self, df: usize) -> f64 {
        let n = self.doc_ids.len() as f64;
        let df = df as f64;
        ((n - df + 0.5) / (df + 0.5) + 1.0).ln()
    }

    fn score_at(&self, terms: &[String], idx: usize) -> f64 {
        let Bm25Params { k1, b } = self.params;
        let len_norm = if self.avg_doc_len > 0.0 {
            self.doc_lengths[idx] as f64 / self.avg_doc_len
        } else {
            0.0
        };
        let mut score = 0.0;
        for term in terms {
            let Some(list) = self.postings.get(term) else {
                continue;
            };
            let Ok(pos) = list.binary_search_by_key(&(idx as u32), |p| p.doc_id_idx) else {
                continue;
            };
            let tf = list[pos].tf as f64;
            score += self.idf(list.len()) * tf * (k1 + 1.0) / (tf + k1 * (1.0 - b + b * len_norm));
        }
        score
    }

    /// BM25 score of `doc_id` for already tokenized query terms. Repeated
    /// query terms contribute once per occurrence.
    pub fn bm25_score(&self, terms: &[String], doc_id: &str) -> Result<f64, SearchError> {
        let idx = self
            .position(doc_id)
            .ok_or_else(|| SearchError::UnknownDoc(doc_id.to_string()))?;
        Ok(self.score_at(terms, idx))
    }

    /// Top `k` documents by BM25, score descending then doc_id ascending.
    /// Documents scoring zero are left out.
    pub fn search(&self, query: &str, k: usize) -> Vec<ScoredResult> {
        let terms = tokenize(query);
        if terms.is_empty() || k == 0 {
            return Vec::new();
        }
        let candidates: BTreeSet<u32> = terms
            .iter()
            .filter_map(|t| self.postings.get(t))
            .flat_map(|list| list.iter().map(|p| p.doc_id_idx))
            .collect();
        let mut scored: Vec<(f64, usize)> = candidates
            .into_iter()
            .map(|idx| (self.score_at(&terms, idx as usize), idx as usize))
            .filter(|(score, _)| *score > 0.0)
            .collect();
        // doc_ids is sorted, so index order is doc_id order.
        scored.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
        scored.truncate(k);
        scored
            .into_iter()
            .enumerate()
            .map(|(i, (score, idx))| {
                let doc = &self.documents[&self.doc_ids[idx]];
                ScoredResult {
                    rank: i as u32 + 1,
                    doc_id: doc.doc_id.clone(),
                    score,
                    title: doc.title.clone(),
                    url: doc.url.clone(),
                    snippet: make_snippet(doc, &terms, self.snippet_width),
                }
            })
            .collect()
    }

    pub fn save(&self, path: impl AsRef<Path>) -> std::io::Result<()> {
        let json = serde_json::to_string(self).map_err(std::io::Error::other)?;
        std::fs::write(path, json)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, SearchError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| SearchError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        serde_json::from_str(&text).map_err(|e| SearchError::MalformedRecord {
            line: e.line(),
            reason: e.to_string(),
        })
    }
}
