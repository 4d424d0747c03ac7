//! Search tips and the per-topic tip catalog.
//!
//! Tip content is configuration. A catalog file is TOML with one table per
//! topic and one sub-table per tip kind:
//!
//! ```toml
//! [topics.probiotics.optimize_query]
//! headline = "..."
//! description = "..."
//! learning_title = "...?"
//! learning_teaser = "..."
//! learning_body = "..."
//!
//! [[topics.probiotics.optimize_query.suggestions]]
//! label = "Add \"systematic review\""
//! query = "probiotics eczema systematic review"
//! ```

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// The four tips, in the order a session normally meets them.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TipKind {
    ClarifyNeed,
    OptimizeQuery,
    ExploreResults,
    CompareResults,
}

impl TipKind {
    pub const ALL: [TipKind; 4] = [
        TipKind::ClarifyNeed,
        TipKind::OptimizeQuery,
        TipKind::ExploreResults,
        TipKind::CompareResults,
    ];

    /// 1-based position (①..④).
    pub fn number(self) -> u8 {
        self as u8 + 1
    }

    pub fn key(self) -> &'static str {
        match self {
            TipKind::ClarifyNeed => "clarify_need",
            TipKind::OptimizeQuery => "optimize_query",
            TipKind::ExploreResults => "explore_results",
            TipKind::CompareResults => "compare_results",
        }
    }

    /// Row label used in engagement tables.
    pub fn label(self) -> &'static str {
        match self {
            TipKind::ClarifyNeed => "Clarify information need",
            TipKind::OptimizeQuery => "Optimize query",
            TipKind::ExploreResults => "Result exploration",
            TipKind::CompareResults => "Compare results",
        }
    }

    pub fn allows_suggestions(self) -> bool {
        matches!(self, TipKind::ClarifyNeed | TipKind::OptimizeQuery)
    }
}

impl fmt::Display for TipKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.key())
    }
}

impl std::str::FromStr for TipKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        TipKind::ALL
            .into_iter()
            .find(|k| k.key() == s || k.number().to_string() == s)
            .ok_or_else(|| format!("unknown tip kind `{s}`"))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuerySuggestion {
    pub label: String,
    /// Full query string submitted when the suggestion is clicked.
    pub query: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SearchTip {
    pub kind: TipKind,
    pub headline: String,
    pub description: String,
    pub learning_title: String,
    pub learning_teaser: String,
    pub learning_body: String,
    #[serde(default)]
    pub suggestions: Vec<QuerySuggestion>,
}

#[derive(Debug, Error)]
pub enum CatalogError {
    #[error("failed to read catalog {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("catalog is not valid TOML: {0}")]
    Syntax(String),
    #[error("topic `{topic}` is missing tip `{kind}`")]
    MissingTip { topic: String, kind: TipKind },
    #[error("tip `{kind}` of topic `{topic}`: {reason}")]
    MalformedContent {
        topic: String,
        kind: TipKind,
        reason: String,
    },
    #[error("no tip `{kind}` for topic `{topic}`")]
    NotFound { topic: String, kind: TipKind },
}

/// On-disk shape of one tip; `kind` comes from the enclosing table.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TipEntry {
    headline: String,
    description: String,
    learning_title: String,
    learning_teaser: String,
    learning_body: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    suggestions: Vec<QuerySuggestion>,
}

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TopicEntry {
    #[serde(skip_serializing_if = "Option::is_none")]
    clarify_need: Option<TipEntry>,
    #[serde(skip_serializing_if = "Option::is_none")]
    optimize_query: Option<TipEntry>,
    #[serde(skip_serializing_if = "Option::is_none")]
    explore_results: Option<TipEntry>,
    #[serde(skip_serializing_if = "Option::is_none")]
    compare_results: Option<TipEntry>,
}

impl TopicEntry {
    fn take(&mut self, kind: TipKind) -> Option<TipEntry> {
        match kind {
            TipKind::ClarifyNeed => self.clarify_need.take(),
            TipKind::OptimizeQuery => self.optimize_query.take(),
            TipKind::ExploreResults => self.explore_results.take(),
            TipKind::CompareResults => self.compare_results.take(),
        }
    }

    fn slot(&mut self, kind: TipKind) -> &mut Option<TipEntry> {
        match kind {
            TipKind::ClarifyNeed => &mut self.clarify_need,
            TipKind::OptimizeQuery => &mut self.optimize_query,
            TipKind::ExploreResults => &mut self.explore_results,
            TipKind::CompareResults => &mut self.compare_results,
        }
    }
}

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CatalogFile {
    #[serde(default)]
    topics: BTreeMap<String, TopicEntry>,
}

/// Immutable map from (topic, kind) to tip; every topic holds all four kinds.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct TipCatalog {
    topics: BTreeMap<String, BTreeMap<TipKind, SearchTip>>,
}

const DEFAULT_CATALOG: &str = include_str!("../../../data/catalog.toml");

impl TipCatalog {
    /// The shipped catalog for the six study topics.
    pub fn builtin() -> Self {
        Self::from_toml_str(DEFAULT_CATALOG).expect("bundled catalog is valid")
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, CatalogError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| CatalogError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_toml_str(&text)
    }

    pub fn from_toml_str(text: &str) -> Result<Self, CatalogError> {
        let file: CatalogFile =
            toml::from_str(text).map_err(|e| CatalogError::Syntax(e.to_string()))?;
        let mut topics = BTreeMap::new();
        for (topic, mut entry) in file.topics {
            let mut tips = BTreeMap::new();
            for kind in TipKind::ALL {
                let raw = entry.take(kind).ok_or_else(|| CatalogError::MissingTip {
                    topic: topic.clone(),
                    kind,
                })?;
                tips.insert(kind, build_tip(&topic, kind, raw)?);
            }
            topics.insert(topic, tips);
        }
        Ok(Self { topics })
    }

    pub fn to_toml_string(&self) -> String {
        let mut file = CatalogFile::default();
        for (topic, tips) in &self.topics {
            let mut entry = TopicEntry::default();
            for (kind, tip) in tips {
                *entry.slot(*kind) = Some(TipEntry {
                    headline: tip.headline.clone(),
                    description: tip.description.clone(),
                    learning_title: tip.learning_title.clone(),
                    learning_teaser: tip.learning_teaser.clone(),
                    learning_body: tip.learning_body.clone(),
                    suggestions: tip.suggestions.clone(),
                });
            }
            file.topics.insert(topic.clone(), entry);
        }
        toml::to_string(&file).expect("catalog serializes")
    }

    pub fn tip_for(&self, topic: &str, kind: TipKind) -> Result<&SearchTip, CatalogError> {
        self.topics
            .get(topic)
            .and_then(|tips| tips.get(&kind))
            .ok_or_else(|| CatalogError::NotFound {
                topic: topic.to_string(),
                kind,
            })
    }

    pub fn contains_topic(&self, topic: &str) -> bool {
        self.topics.contains_key(topic)
    }

    pub fn topics(&self) -> impl Iterator<Item = &str> {
        self.topics.keys().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.topics.values().map(BTreeMap::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.topics.is_empty()
    }

    pub fn tips(&self) -> impl Iterator<Item = (&str, &SearchTip)> {
        self.topics
            .iter()
            .flat_map(|(topic, tips)| tips.values().map(move |tip| (topic.as_str(), tip)))
    }
}

fn build_tip(topic: &str, kind: TipKind, raw: TipEntry) -> Result<SearchTip, CatalogError> {
    let malformed = |reason: &str| CatalogError::MalformedContent {
        topic: topic.to_string(),
        kind,
        reason: reason.to_string(),
    };
    if raw.headline.trim().is_empty() {
        return Err(malformed("headline is empty"));
    }
    if raw.description.trim().is_empty() {
        return Err(malformed("description is empty"));
    }
    if !raw.learning_title.trim_end().ends_with('?') {
        return Err(malformed("learning_title must be phrased as a question"));
    }
    if !raw.suggestions.is_empty() && !kind.allows_suggestions() {
        return Err(malformed(
            "only clarify_need and optimize_query tips carry suggestions",
        ));
    }
    let mut suggestions = Vec::with_capacity(raw.suggestions.len());
    for s in raw.suggestions {
        let query = s.query.trim();
        if query.is_empty() {
            return Err(malformed("suggestion query is empty"));
        }
        suggestions.push(QuerySuggestion {
            label: s.label,
            query: query.to_string(),
        });
    }
    Ok(SearchTip {
        kind,
        headline: raw.headline,
        description: raw.description,
        learning_title: raw.learning_title,
        learning_teaser: raw.learning_teaser,
        learning_body: raw.learning_body,
        suggestions,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tip_toml(topic: &str, kind: &str, extra: &str) -> String {
        format!(
            "[topics.{topic}.{kind}]\nheadline = \"H\"\ndescription = \"D\"\n\
             learning_title = \"Why?\"\nlearning_teaser = \"T\"\nlearning_body = \"B\"\n{extra}\n"
        )
    }

    fn full_topic(topic: &str) -> String {
        TipKind::ALL
            .iter()
            .map(|k| tip_toml(topic, k.key(), ""))
            .collect()
    }

    #[test]
    fn loads_topic_with_all_four_tips() {
        let cat = TipCatalog::from_toml_str(&full_topic("probiotics")).unwrap();
        assert_eq!(cat.len(), 4);
        assert!(cat.contains_topic("probiotics"));
    }

    #[test]
    fn missing_kind_is_rejected() {
        let text: String = TipKind::ALL[..3]
            .iter()
            .map(|k| tip_toml("caffeine", k.key(), ""))
            .collect();
        match TipCatalog::from_toml_str(&text) {
            Err(CatalogError::MissingTip { topic, kind }) => {
                assert_eq!(topic, "caffeine");
                assert_eq!(kind, TipKind::CompareResults);
            }
            other => panic!("expected MissingTip, got {other:?}"),
        }
    }

    #[test]
    fn learning_title_must_be_a_question() {
        let text = full_topic("x").replacen("Why?", "Why", 1);
        assert!(matches!(
            TipCatalog::from_toml_str(&text),
            Err(CatalogError::MalformedContent { .. })
        ));
    }

    #[test]
    fn empty_headline_is_rejected() {
        let text = full_topic("x").replacen("headline = \"H\"", "headline = \"  \"", 1);
        assert!(matches!(
            TipCatalog::from_toml_str(&text),
            Err(CatalogError::MalformedContent { .. })
        ));
    }

    #[test]
    fn suggestions_only_on_first_two_kinds() {
        let sugg = "[[topics.x.explore_results.suggestions]]\nlabel = \"l\"\nquery = \"q\"\n";
        let text = format!("{}{}", full_topic("x"), sugg);
        assert!(matches!(
            TipCatalog::from_toml_str(&text),
            Err(CatalogError::MalformedContent {
                kind: TipKind::ExploreResults,
                ..
            })
        ));
    }

    #[test]
    fn suggestion_queries_are_trimmed() {
        let sugg = "[[topics.x.optimize_query.suggestions]]\nlabel = \"l\"\nquery = \"  a b \"\n";
        let cat = TipCatalog::from_toml_str(&format!("{}{}", full_topic("x"), sugg)).unwrap();
        let tip = cat.tip_for("x", TipKind::OptimizeQuery).unwrap();
        assert_eq!(tip.suggestions[0].query, "a b");
    }

    #[test]
    fn unknown_topic_is_not_found() {
        let cat = TipCatalog::builtin();
        assert!(matches!(
            cat.tip_for("unknown-topic", TipKind::ClarifyNeed),
            Err(CatalogError::NotFound { .. })
        ));
    }

    #[test]
    fn builtin_catalog_covers_study_topics() {
        let cat = TipCatalog::builtin();
        let topics: Vec<_> = cat.topics().collect();
        assert_eq!(
            topics,
            [
                "antioxidants",
                "benzodiazepines",
                "caffeine",
                "melatonin",
                "probiotics",
                "traction"
            ]
        );
        let clarify = cat.tip_for("probiotics", TipKind::ClarifyNeed).unwrap();
        assert_eq!(clarify.kind, TipKind::ClarifyNeed);
    }

    #[test]
    fn probiotics_query_tip_offers_systematic_review() {
        let cat = TipCatalog::builtin();
        let tip = cat.tip_for("probiotics", TipKind::OptimizeQuery).unwrap();
        assert!(!tip.suggestions.is_empty());
        assert!(tip
            .suggestions
            .iter()
            .any(|s| s.query == "probiotics eczema systematic review"));
    }

    #[test]
    fn melatonin_query_tip_offers_cochrane_review() {
        let cat = TipCatalog::builtin();
        let tip = cat.tip_for("melatonin", TipKind::OptimizeQuery).unwrap();
        assert!(tip
            .suggestions
            .iter()
            .any(|s| s.query.contains("Cochrane review")));
    }

    #[test]
    fn missing_file_is_io_error() {
        assert!(matches!(
            TipCatalog::load("/nonexistent/catalog.toml"),
            Err(CatalogError::Io { .. })
        ));
    }

    #[test]
    fn kind_ordering_and_parsing() {
        assert!(TipKind::ClarifyNeed < TipKind::OptimizeQuery);
        assert!(TipKind::ExploreResults < TipKind::CompareResults);
        assert_eq!("3".parse::<TipKind>().unwrap(), TipKind::ExploreResults);
        assert_eq!(
            "compare_results".parse::<TipKind>().unwrap(),
            TipKind::CompareResults
        );
    }
}
