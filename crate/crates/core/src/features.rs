//! Model-card preprocessing and TF-IDF document vectors.

use std::collections::{HashMap, HashSet};
use std::sync::OnceLock;

use regex::Regex;
use rust_stemmers::{Algorithm, Stemmer};
use serde::{Deserialize, Serialize};
use thiserror::Error;

static STOPWORDS_EN: &str = include_str!("../data/stopwords_en.txt");

#[derive(Debug, Error, PartialEq)]
pub enum FeatureError {
    #[error("cannot fit a feature space on an empty corpus")]
    EmptyCorpus,
    #[error("feature artifact is inconsistent: {0}")]
    InvalidArtifact(String),
}

/// The bundled English stopword list.
pub fn stopwords() -> &'static HashSet<&'static str> {
    static SET: OnceLock<HashSet<&'static str>> = OnceLock::new();
    SET.get_or_init(|| {
        STOPWORDS_EN
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty())
            .collect()
    })
}

fn url_pattern() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"(?i)\b(?:https?|ftp)://\S+|\bwww\.\S+").unwrap())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct PreprocessOptions {
    /// Apply the Snowball English stemmer after stopword removal.
    pub stemming: bool,
}

/// Lowercase alphanumeric tokens of a model card.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenStream {
    pub tokens: Vec<String>,
}

impl TokenStream {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn joined(&self) -> String {
        self.tokens.join(" ")
    }
}

/// Removes a leading YAML front-matter block delimited by `---` lines.
fn strip_front_matter(text: &str) -> &str {
    let trimmed = text.trim_start_matches('\u{feff}').trim_start();
    let mut lines = trimmed.split_inclusive('\n');
    let mut offset = match lines.next() {
        Some(first) if first.trim_end() == "---" => first.len(),
        _ => return text,
    };
    for line in lines {
        offset += line.len();
        let fence = line.trim_end();
        if fence == "---" || fence == "..." {
            return &trimmed[offset..];
        }
    }
    // unterminated: not front matter
    text
}

/// Drops fenced code blocks (``` or ~~~), fences included.
fn strip_code_fences(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    let mut open: Option<&str> = None;
    for line in text.split_inclusive('\n') {
        let lead = line.trim_start();
        let marker = if lead.starts_with("```") {
            Some("```")
        } else if lead.starts_with("~~~") {
            Some("~~~")
        } else {
            None
        };
        match (open, marker) {
            (None, Some(m)) => open = Some(m),
            (Some(o), Some(m)) if o == m => open = None,
            (None, None) => out.push_str(line),
            _ => {}
        }
    }
    out
}

/// Turns raw card text into a token stream.
///
/// Front matter, fenced code and URLs are removed, the rest is lowercased and
/// split on non-alphanumeric runs. Tokens shorter than two characters and
/// stopwords are dropped.
pub fn preprocess(card_text: &str, options: &PreprocessOptions) -> TokenStream {
    let body = strip_front_matter(card_text);
    let body = strip_code_fences(body);
    let body = url_pattern().replace_all(&body, " ");
    let lower = body.to_lowercase();
    let stop = stopwords();
    let stemmer = options.stemming.then(|| Stemmer::create(Algorithm::English));

    let tokens = lower
        .split(|c: char| !c.is_alphanumeric())
        .filter(|t| t.chars().count() >= 2 && !stop.contains(t))
        .filter_map(|t| match &stemmer {
            Some(s) => {
                let stemmed = s.stem(t).into_owned();
                (stemmed.chars().count() >= 2 && !stop.contains(stemmed.as_str())).then_some(stemmed)
            }
            None => Some(t.to_string()),
        })
        .collect();
    TokenStream { tokens }
}

/// Terms fed to the vocabulary: unigrams, plus space-joined n-grams up to
/// `ngram_max`.
pub fn terms(tokens: &TokenStream, ngram_max: usize) -> Vec<String> {
    let mut out = tokens.tokens.clone();
    for n in 2..=ngram_max {
        out.extend(tokens.tokens.windows(n).map(|w| w.join(" ")));
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FitOptions {
    /// Minimum number of documents a term must occur in.
    pub min_df: usize,
    pub ngram_max: usize,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            min_df: 2,
            ngram_max: 1,
        }
    }
}

/// Serialized form of [`FeatureSpace`].
#[derive(Serialize, Deserialize)]
struct FeatureSpaceArtifact {
    vocabulary: Vec<String>,
    idf: Vec<f64>,
    n_docs_fitted: usize,
    #[serde(default = "default_ngram")]
    ngram_max: usize,
}

fn default_ngram() -> usize {
    1
}

/// Vocabulary and IDF weights learned from a training corpus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "FeatureSpaceArtifact", into = "FeatureSpaceArtifact")]
pub struct FeatureSpace {
    vocabulary: Vec<String>,
    index: HashMap<String, usize>,
    idf: Vec<f64>,
    n_docs_fitted: usize,
    ngram_max: usize,
}

impl TryFrom<FeatureSpaceArtifact> for FeatureSpace {
    type Error = FeatureError;

    fn try_from(a: FeatureSpaceArtifact) -> Result<Self, Self::Error> {
        if a.vocabulary.len() != a.idf.len() {
            return Err(FeatureError::InvalidArtifact(format!(
                "{} vocabulary entries but {} idf weights",
                a.vocabulary.len(),
                a.idf.len()
            )));
        }
        if let Some(bad) = a.idf.iter().find(|w| !(w.is_finite() && **w > 0.0)) {
            return Err(FeatureError::InvalidArtifact(format!("non-positive idf weight {bad}")));
        }
        let index: HashMap<String, usize> = a
            .vocabulary
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i))
            .collect();
        if index.len() != a.vocabulary.len() {
            return Err(FeatureError::InvalidArtifact("duplicate vocabulary entry".into()));
        }
        Ok(Self {
            vocabulary: a.vocabulary,
            index,
            idf: a.idf,
            n_docs_fitted: a.n_docs_fitted,
            ngram_max: a.ngram_max.max(1),
        })
    }
}

impl From<FeatureSpace> for FeatureSpaceArtifact {
    fn from(s: FeatureSpace) -> Self {
        Self {
            vocabulary: s.vocabulary,
            idf: s.idf,
            n_docs_fitted: s.n_docs_fitted,
            ngram_max: s.ngram_max,
        }
    }
}

impl FeatureSpace {
    /// Learns the vocabulary (first-seen order) and smoothed IDF weights
    /// `ln((1 + N) / (1 + df)) + 1`.
    pub fn fit(documents: &[TokenStream], options: &FitOptions) -> Result<Self, FeatureError> {
        if documents.is_empty() {
            return Err(FeatureError::EmptyCorpus);
        }
        let ngram_max = options.ngram_max.max(1);
        let mut order: Vec<String> = Vec::new();
        let mut df: HashMap<String, usize> = HashMap::new();
        for doc in documents {
            let mut seen = HashSet::new();
            for term in terms(doc, ngram_max) {
                if seen.contains(&term) {
                    continue;
                }
                match df.get_mut(&term) {
                    Some(count) => *count += 1,
                    None => {
                        df.insert(term.clone(), 1);
                        order.push(term.clone());
                    }
                }
                seen.insert(term);
            }
        }

        let n = documents.len() as f64;
        let min_df = options.min_df.max(1);
        let mut vocabulary = Vec::new();
        let mut idf = Vec::new();
        for term in order {
            let count = df[&term];
            if count >= min_df {
                idf.push(((1.0 + n) / (1.0 + count as f64)).ln() + 1.0);
                vocabulary.push(term);
            }
        }
        let index = vocabulary
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i))
            .collect();
        Ok(Self {
            vocabulary,
            index,
            idf,
            n_docs_fitted: documents.len(),
            ngram_max,
        })
    }

    pub fn len(&self) -> usize {
        self.vocabulary.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vocabulary.is_empty()
    }

    pub fn vocabulary(&self) -> &[String] {
        &self.vocabulary
    }

    pub fn idf(&self) -> &[f64] {
        &self.idf
    }

    pub fn n_docs_fitted(&self) -> usize {
        self.n_docs_fitted
    }

    pub fn ngram_max(&self) -> usize {
        self.ngram_max
    }

    pub fn index_of(&self, term: &str) -> Option<usize> {
        self.index.get(term).copied()
    }

    /// Sublinear TF times IDF, L2-normalized. Out-of-vocabulary terms are
    /// ignored.
    pub fn transform(&self, doc: &TokenStream) -> DocVector {
        let mut tf: HashMap<usize, u32> = HashMap::new();
        for term in terms(doc, self.ngram_max) {
            if let Some(i) = self.index_of(&term) {
                *tf.entry(i).or_insert(0) += 1;
            }
        }
        let mut entries: Vec<(usize, f64)> = tf
            .into_iter()
            .map(|(i, count)| (i, (1.0 + (count as f64).ln()) * self.idf[i]))
            .collect();
        entries.sort_unstable_by_key(|e| e.0);
        let mut v = DocVector { entries };
        v.normalize();
        v
    }
}

/// Sparse vector with strictly increasing indices.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DocVector {
    entries: Vec<(usize, f64)>,
}

impl DocVector {
    /// Builds a vector from arbitrary pairs; duplicates are summed, zeros
    /// dropped.
    pub fn from_pairs(pairs: impl IntoIterator<Item = (usize, f64)>) -> Self {
        let mut entries: Vec<(usize, f64)> = pairs.into_iter().collect();
        entries.sort_by_key(|e| e.0);
        let mut merged: Vec<(usize, f64)> = Vec::with_capacity(entries.len());
        for (i, w) in entries {
            match merged.last_mut() {
                Some(last) if last.0 == i => last.1 += w,
                _ => merged.push((i, w)),
            }
        }
        merged.retain(|e| e.1 != 0.0);
        Self { entries: merged }
    }

    /// Dense slice to sparse.
    pub fn from_dense(values: &[f64]) -> Self {
        Self::from_pairs(values.iter().copied().enumerate())
    }

    pub fn entries(&self) -> &[(usize, f64)] {
        &self.entries
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.entries.iter().copied()
    }

    pub fn nnz(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// One past the largest index, or 0 for the empty vector.
    pub fn min_dim(&self) -> usize {
        self.entries.last().map_or(0, |e| e.0 + 1)
    }

    pub fn norm(&self) -> f64 {
        self.entries.iter().map(|e| e.1 * e.1).sum::<f64>().sqrt()
    }

    pub fn dot_dense(&self, dense: &[f64]) -> f64 {
        self.entries.iter().map(|&(i, w)| w * dense[i]).sum()
    }

    pub fn dot(&self, other: &DocVector) -> f64 {
        let (mut a, mut b) = (self.entries.iter().peekable(), other.entries.iter().peekable());
        let mut sum = 0.0;
        while let (Some(&&(i, x)), Some(&&(j, y))) = (a.peek(), b.peek()) {
            match i.cmp(&j) {
                std::cmp::Ordering::Less => {
                    a.next();
                }
                std::cmp::Ordering::Greater => {
                    b.next();
                }
                std::cmp::Ordering::Equal => {
                    sum += x * y;
                    a.next();
                    b.next();
                }
            }
        }
        sum
    }

    pub fn scaled(&self, k: f64) -> DocVector {
        DocVector {
            entries: self.entries.iter().map(|&(i, w)| (i, w * k)).collect(),
        }
    }

    fn normalize(&mut self) {
        let norm = self.norm();
        if norm > 0.0 {
            for e in &mut self.entries {
                e.1 /= norm;
            }
        }
    }
}
