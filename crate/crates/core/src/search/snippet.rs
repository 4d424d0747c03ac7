use std::collections::{HashMap, HashSet};

use super::index::Document;
use super::tokenize::tokenize_spans;

pub const DEFAULT_SNIPPET_WIDTH: usize = 40;

const ELLIPSIS: &str = "…";

/// Query-biased snippet: the window of `width` body tokens that contains the
/// most distinct query terms, earliest window on ties. The window is cut
/// from the original text and marked with `…` where the body continues.
pub fn make_snippet(doc: &Document, query_terms: &[String], width: usize) -> String {
    let width = width.max(1);
    let spans = tokenize_spans(&doc.body);
    if spans.len() <= width {
        return doc.body.clone();
    }
    let start = best_window(
        &spans.iter().map(|(t, _)| t.as_str()).collect::<Vec<_>>(),
        query_terms,
        width,
    );
    let end = start + width;
    let from = spans[start].1.start;
    let to = spans[end - 1].1.end;
    let mut out = String::new();
    if start > 0 {
        out.push_str(ELLIPSIS);
    }
    out.push_str(&doc.body[from..to]);
    if end < spans.len() {
        out.push_str(ELLIPSIS);
    }
    out
}

/// Start index of the best window; sliding count of distinct query terms.
fn best_window(tokens: &[&str], query_terms: &[String], width: usize) -> usize {
    let wanted: HashSet<&str> = query_terms.iter().map(String::as_str).collect();
    let mut window = WindowCounts {
        wanted,
        counts: HashMap::new(),
        distinct: 0,
    };
    for t in &tokens[..width] {
        window.enter(t);
    }
    let (mut best, mut best_start) = (window.distinct, 0);
    for start in 1..=tokens.len() - width {
        window.leave(tokens[start - 1]);
        window.enter(tokens[start + width - 1]);
        if window.distinct > best {
            best = window.distinct;
            best_start = start;
        }
    }
    best_start
}

struct WindowCounts<'a> {
    wanted: HashSet<&'a str>,
    counts: HashMap<&'a str, usize>,
    distinct: usize,
}

impl<'a> WindowCounts<'a> {
    fn enter(&mut self, t: &'a str) {
        if self.wanted.contains(t) {
            let c = self.counts.entry(t).or_insert(0);
            if *c == 0 {
                self.distinct += 1;
            }
            *c += 1;
        }
    }

    fn leave(&mut self, t: &'a str) {
        if let Some(c) = self.counts.get_mut(t) {
            *c -= 1;
            if *c == 0 {
                self.distinct -= 1;
            }
        }
    }
}
