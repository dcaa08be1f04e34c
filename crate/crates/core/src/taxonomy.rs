//! SE macro-task taxonomy, literature evidence records, and keyword
//! screening over titles and abstracts.

use std::collections::{BTreeSet, HashSet};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Taxonomy JSON shipped with the crate.
pub static BUNDLED_TAXONOMY: &str = include_str!("../data/taxonomy.json");
/// Evidence JSON lines shipped with the crate.
pub static BUNDLED_EVIDENCE: &str = include_str!("../data/evidence.jsonl");

#[derive(Debug, Error, PartialEq)]
pub enum TaxonomyError {
    #[error("schema error at {path}: {message}")]
    SchemaError { path: String, message: String },
    #[error("i/o error on {path}: {message}")]
    Io { path: String, message: String },
    #[error("invalid keyword query: {0}")]
    InvalidQuery(String),
}

fn schema(path: impl Into<String>, message: impl Into<String>) -> TaxonomyError {
    TaxonomyError::SchemaError {
        path: path.into(),
        message: message.into(),
    }
}

fn read(path: &Path) -> Result<String, TaxonomyError> {
    std::fs::read_to_string(path).map_err(|e| TaxonomyError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaxonomyEntry {
    pub macro_id: String,
    pub name: String,
    pub sub_tasks: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Taxonomy {
    entries: Vec<TaxonomyEntry>,
}

impl Taxonomy {
    /// Validates entries: unique non-empty ids, non-empty names and
    /// sub-task lists.
    pub fn new(entries: Vec<TaxonomyEntry>) -> Result<Self, TaxonomyError> {
        if entries.is_empty() {
            return Err(schema("$", "taxonomy has no entries"));
        }
        let mut ids = HashSet::new();
        for (i, e) in entries.iter().enumerate() {
            if e.macro_id.trim().is_empty() {
                return Err(schema(format!("[{i}].macro_id"), "empty macro id"));
            }
            if !ids.insert(e.macro_id.as_str()) {
                return Err(schema(format!("[{i}].macro_id"), format!("duplicate macro id {:?}", e.macro_id)));
            }
            if e.name.trim().is_empty() {
                return Err(schema(format!("[{i}].name"), "empty name"));
            }
            if e.sub_tasks.is_empty() {
                return Err(schema(format!("[{i}].sub_tasks"), "no sub-tasks"));
            }
            if let Some(j) = e.sub_tasks.iter().position(|s| s.trim().is_empty()) {
                return Err(schema(format!("[{i}].sub_tasks[{j}]"), "empty sub-task"));
            }
        }
        Ok(Self { entries })
    }

    pub fn from_json(text: &str) -> Result<Self, TaxonomyError> {
        if text.trim().is_empty() {
            return Err(schema("$", "empty taxonomy file"));
        }
        let entries: Vec<TaxonomyEntry> = serde_json::from_str(text).map_err(|e| {
            schema(format!("line {} column {}", e.line(), e.column()), e.to_string())
        })?;
        Self::new(entries)
    }

    /// The taxonomy shipped with the crate.
    pub fn bundled() -> Self {
        Self::from_json(BUNDLED_TAXONOMY).expect("bundled taxonomy is valid")
    }

    pub fn entries(&self) -> &[TaxonomyEntry] {
        &self.entries
    }

    pub fn get(&self, macro_id: &str) -> Option<&TaxonomyEntry> {
        self.entries.iter().find(|e| e.macro_id == macro_id)
    }

    pub fn ids(&self) -> BTreeSet<&str> {
        self.entries.iter().map(|e| e.macro_id.as_str()).collect()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.entries).expect("taxonomy serializes")
    }
}

pub fn load_taxonomy(path: impl AsRef<Path>) -> Result<Taxonomy, TaxonomyError> {
    Taxonomy::from_json(&read(path.as_ref())?)
}

/// One literature record linking PTM names to macro tasks.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvidenceDoc {
    pub doc_id: String,
    pub title: String,
    #[serde(rename = "abstract")]
    pub abstract_text: String,
    pub venue: String,
    pub year: i32,
    pub ptm_names: Vec<String>,
    pub macro_ids: Vec<String>,
    pub included: bool,
}

/// Validation rules for evidence records.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvidencePolicy {
    /// Inclusive publication-year window for included records.
    pub year_from: i32,
    pub year_to: i32,
}

impl Default for EvidencePolicy {
    fn default() -> Self {
        Self {
            year_from: 2018,
            year_to: 2024,
        }
    }
}

/// Parses JSON-lines evidence and checks it against a taxonomy.
pub fn parse_evidence(text: &str, taxonomy: &Taxonomy, policy: &EvidencePolicy) -> Result<Vec<EvidenceDoc>, TaxonomyError> {
    let ids = taxonomy.ids();
    let mut seen = HashSet::new();
    let mut docs = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let at = |field: &str| format!("line {}: {field}", i + 1);
        let doc: EvidenceDoc = serde_json::from_str(line).map_err(|e| schema(at("$"), e.to_string()))?;
        if doc.doc_id.trim().is_empty() {
            return Err(schema(at("doc_id"), "empty doc id"));
        }
        if !seen.insert(doc.doc_id.clone()) {
            return Err(schema(at("doc_id"), format!("duplicate doc id {:?}", doc.doc_id)));
        }
        if let Some((j, bad)) = doc.macro_ids.iter().enumerate().find(|(_, m)| !ids.contains(m.as_str())) {
            return Err(schema(at(&format!("macro_ids[{j}]")), format!("unknown macro id {bad:?}")));
        }
        if doc.included && !(policy.year_from..=policy.year_to).contains(&doc.year) {
            return Err(schema(
                at("year"),
                format!(
                    "included record from {} is outside {}..={}",
                    doc.year, policy.year_from, policy.year_to
                ),
            ));
        }
        docs.push(doc);
    }
    if docs.is_empty() {
        return Err(schema("$", "evidence file has no records"));
    }
    Ok(docs)
}

pub fn load_evidence(path: impl AsRef<Path>, taxonomy: &Taxonomy, policy: &EvidencePolicy) -> Result<Vec<EvidenceDoc>, TaxonomyError> {
    parse_evidence(&read(path.as_ref())?, taxonomy, policy)
}

/// The evidence corpus shipped with the crate, validated against
/// [`Taxonomy::bundled`].
pub fn bundled_evidence() -> Vec<EvidenceDoc> {
    parse_evidence(BUNDLED_EVIDENCE, &Taxonomy::bundled(), &EvidencePolicy::default())
        .expect("bundled evidence is valid")
}

pub fn evidence_to_jsonl(docs: &[EvidenceDoc]) -> String {
    let mut out = String::new();
    for d in docs {
        out.push_str(&serde_json::to_string(d).expect("evidence serializes"));
        out.push('\n');
    }
    out
}

/// Lowercase alphanumeric words of `text`.
pub fn words(text: &str) -> Vec<String> {
    text.to_lowercase()
        .split(|c: char| !c.is_alphanumeric())
        .filter(|w| !w.is_empty())
        .map(str::to_string)
        .collect()
}

/// A keyword or phrase. A trailing `*` makes the last word a prefix.
#[derive(Debug, Clone, PartialEq, Eq)]
struct Pattern {
    words: Vec<String>,
    prefix: bool,
}

impl Pattern {
    fn parse(keyword: &str) -> Result<Self, TaxonomyError> {
        let trimmed = keyword.trim();
        let (body, prefix) = match trimmed.strip_suffix('*') {
            Some(body) => (body, true),
            None => (trimmed, false),
        };
        let words = words(body);
        if words.is_empty() {
            return Err(TaxonomyError::InvalidQuery(format!("keyword {keyword:?} has no words")));
        }
        Ok(Self { words, prefix })
    }

    fn matches(&self, text: &[String]) -> bool {
        let n = self.words.len();
        if text.len() < n {
            return false;
        }
        text.windows(n).any(|window| {
            window.iter().zip(&self.words).enumerate().all(|(k, (have, want))| {
                if self.prefix && k == n - 1 {
                    have.starts_with(want.as_str())
                } else {
                    have == want
                }
            })
        })
    }
}

/// Conjunction of keyword groups; a group matches when any of its keywords
/// occurs in the title or abstract.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct KeywordQuery {
    pub groups: Vec<Vec<String>>,
}

impl KeywordQuery {
    pub fn new(groups: Vec<Vec<String>>) -> Result<Self, TaxonomyError> {
        if groups.is_empty() {
            return Err(TaxonomyError::InvalidQuery("query has no groups".into()));
        }
        for (i, g) in groups.iter().enumerate() {
            if g.is_empty() {
                return Err(TaxonomyError::InvalidQuery(format!("group {i} is empty")));
            }
            for k in g {
                Pattern::parse(k)?;
            }
        }
        Ok(Self { groups })
    }

    /// The literature search used to collect the evidence corpus: model
    /// terms AND support terms AND development terms.
    pub fn literature_default() -> Self {
        let g = |ks: &[&str]| ks.iter().map(|s| s.to_string()).collect::<Vec<_>>();
        Self::new(vec![
            g(&["pre-trained model*", "PTM*", "large language model*", "LLM", "transformer*"]),
            g(&["support*", "recommend*", "task*", "automat*"]),
            g(&["requirement*", "develop*", "source code"]),
        ])
        .expect("default query is valid")
    }

    fn compiled(&self) -> Vec<Vec<Pattern>> {
        self.groups
            .iter()
            .map(|g| g.iter().map(|k| Pattern::parse(k).expect("validated")).collect())
            .collect()
    }

    pub fn matches(&self, doc: &EvidenceDoc) -> bool {
        let text = words(&format!("{} {}", doc.title, doc.abstract_text));
        self.compiled()
            .iter()
            .all(|group| group.iter().any(|p| p.matches(&text)))
    }
}

/// Documents satisfying every group of the query, in input order.
pub fn screen<'a>(docs: &'a [EvidenceDoc], query: &KeywordQuery) -> Vec<&'a EvidenceDoc> {
    let groups = query.compiled();
    docs.iter()
        .filter(|d| {
            let text = words(&format!("{} {}", d.title, d.abstract_text));
            groups.iter().all(|g| g.iter().any(|p| p.matches(&text)))
        })
        .collect()
}

/// Macro tasks of included documents whose abstract mentions `name` as a
/// whole word (or word sequence). Case-insensitive.
pub fn tasks_for_ptm(name: &str, docs: &[EvidenceDoc]) -> BTreeSet<String> {
    let pattern = Pattern {
        words: words(name),
        prefix: false,
    };
    if pattern.words.is_empty() {
        return BTreeSet::new();
    }
    docs.iter()
        .filter(|d| d.included && pattern.matches(&words(&d.abstract_text)))
        .flat_map(|d| d.macro_ids.iter().cloned())
        .collect()
}
