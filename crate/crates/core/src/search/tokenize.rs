use std::ops::Range;

/// Lowercases and splits on runs of non-alphanumeric characters; empty terms
/// are dropped.
pub fn tokenize(text: &str) -> Vec<String> {
    tokenize_spans(text).into_iter().map(|(t, _)| t).collect()
}

/// Like [`tokenize`], also returning each term's byte range in `text`.
pub fn tokenize_spans(text: &str) -> Vec<(String, Range<usize>)> {
    let mut out = Vec::new();
    let mut start = None;
    for (i, ch) in text.char_indices() {
        match (ch.is_alphanumeric(), start) {
            (true, None) => start = Some(i),
            (false, Some(s)) => {
                push_term(&mut out, text, s..i);
                start = None;
            }
            _ => {}
        }
    }
    if let Some(s) = start {
        push_term(&mut out, text, s..text.len());
    }
    out
}

fn push_term(out: &mut Vec<(String, Range<usize>)>, text: &str, span: Range<usize>) {
    // Some lowercase mappings expand into combining marks; keep only the
    // alphanumeric part so re-tokenizing a term yields the same term.
    let term: String = text[span.clone()]
        .chars()
        .flat_map(char::to_lowercase)
        .filter(|c| c.is_alphanumeric())
        .collect();
    if !term.is_empty() {
        out.push((term, span));
    }
}
