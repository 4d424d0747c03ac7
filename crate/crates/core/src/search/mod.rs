//! Local search engine: corpus ingestion, BM25 ranking and query-biased
//! snippets.

mod index;
mod snippet;
mod tokenize;

pub use index::{Bm25Params, Document, Index, ScoredResult, SearchError};
pub use snippet::{make_snippet, DEFAULT_SNIPPET_WIDTH};
pub use tokenize::{tokenize, tokenize_spans};

/// Anything that can serve a results page and the document view.
///
/// The shipped implementation is the local [`Index`]; a client for an
/// external engine maps its hits into [`ScoredResult`] behind this trait.
pub trait SearchBackend: Send + Sync {
    fn search(&self, query: &str, k: usize) -> Vec<ScoredResult>;
    fn document(&self, doc_id: &str) -> Result<&Document, SearchError>;
}

impl SearchBackend for Index {
    fn search(&self, query: &str, k: usize) -> Vec<ScoredResult> {
        Index::search(self, query, k)
    }

    fn document(&self, doc_id: &str) -> Result<&Document, SearchError> {
        self.get_document(doc_id)
    }
}
