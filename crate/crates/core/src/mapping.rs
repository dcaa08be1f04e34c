//! Name-similarity mapping from PTMs to pipeline tags and SE tasks.
//!
//! Given the name of a model known to serve a task, every registry entry
//! whose bare name is close enough in edit distance is taken as a variant of
//! it, and the variant's pipeline tag is mapped to the task.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::registry::Registry;
use crate::taxonomy::{self, EvidenceDoc};

/// Default similarity threshold.
pub const DEFAULT_THRESHOLD: f64 = 0.8;

#[derive(Debug, Error, PartialEq)]
pub enum MappingError {
    #[error("PTM name is empty")]
    EmptyName,
    #[error("task name is empty")]
    EmptyTask,
    #[error("threshold must be in (0, 1], got {0}")]
    InvalidThreshold(f64),
}

/// Edit distance with unit insert, delete and substitute costs.
pub fn levenshtein(a: &str, b: &str) -> usize {
    edit_distance(a, b, 1)
}

/// Edit distance with unit insert/delete and the given substitution cost.
pub fn edit_distance(a: &str, b: &str, substitution: usize) -> usize {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    if a.is_empty() {
        return b.len();
    }
    if b.is_empty() {
        return a.len();
    }
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = vec![0; b.len() + 1];
    for (i, ca) in a.iter().enumerate() {
        cur[0] = i + 1;
        for (j, cb) in b.iter().enumerate() {
            let sub = prev[j] + if ca == cb { 0 } else { substitution };
            cur[j + 1] = sub.min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// Ratio similarity `(|a| + |b| - d) / (|a| + |b|)` where `d` is the edit
/// distance with substitutions costing 2. Lengths are in characters; two
/// empty strings have similarity 1.
pub fn name_similarity(a: &str, b: &str) -> f64 {
    let total = a.chars().count() + b.chars().count();
    if total == 0 {
        return 1.0;
    }
    (total - edit_distance(a, b, 2)) as f64 / total as f64
}

/// Lowercased segment after the last `/`.
pub fn normalize_name(id: &str) -> String {
    id.rsplit('/').next().unwrap_or(id).trim().to_lowercase()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MatchOptions {
    pub threshold: f64,
    /// Require `score > threshold` instead of `score >= threshold`.
    pub strict: bool,
}

impl Default for MatchOptions {
    fn default() -> Self {
        Self {
            threshold: DEFAULT_THRESHOLD,
            strict: false,
        }
    }
}

impl MatchOptions {
    pub fn with_threshold(threshold: f64) -> Self {
        Self {
            threshold,
            ..Default::default()
        }
    }

    fn validate(&self) -> Result<(), MappingError> {
        if self.threshold > 0.0 && self.threshold <= 1.0 {
            Ok(())
        } else {
            Err(MappingError::InvalidThreshold(self.threshold))
        }
    }

    fn accepts(&self, score: f64) -> bool {
        if self.strict {
            score > self.threshold
        } else {
            score >= self.threshold
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchResult {
    pub model_id: String,
    pub matched_name: String,
    pub pipeline_tag: Option<String>,
    pub score: f64,
}

/// Registry entries whose normalized name is similar to `ptm_name`, best
/// first, ties by model id.
pub fn find_similar(ptm_name: &str, registry: &Registry, options: &MatchOptions) -> Result<Vec<MatchResult>, MappingError> {
    options.validate()?;
    let query = normalize_name(ptm_name);
    if query.is_empty() {
        return Err(MappingError::EmptyName);
    }
    let mut matches: Vec<MatchResult> = registry
        .records
        .iter()
        .filter_map(|r| {
            let name = normalize_name(&r.model_id);
            let score = name_similarity(&query, &name);
            options.accepts(score).then(|| MatchResult {
                model_id: r.model_id.clone(),
                matched_name: name,
                pipeline_tag: r.pipeline_tag.clone(),
                score,
            })
        })
        .collect();
    matches.sort_by(|a, b| b.score.total_cmp(&a.score).then_with(|| a.model_id.cmp(&b.model_id)));
    Ok(matches)
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct MappingEntry {
    pub pipeline_tag: String,
    pub task: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskMapping {
    pub matches: Vec<MatchResult>,
    pub mapping: BTreeSet<MappingEntry>,
    pub dominant_tag: Option<String>,
    /// Matches skipped because they carry no pipeline tag.
    pub untagged_matches: usize,
}

/// Pairs every distinct tag among the matches of `ptm_name` with `task`.
pub fn map_task(ptm_name: &str, task: &str, registry: &Registry, options: &MatchOptions) -> Result<TaskMapping, MappingError> {
    if task.trim().is_empty() {
        return Err(MappingError::EmptyTask);
    }
    let matches = find_similar(ptm_name, registry, options)?;
    let mapping = matches
        .iter()
        .filter_map(|m| m.pipeline_tag.as_ref())
        .map(|tag| MappingEntry {
            pipeline_tag: tag.clone(),
            task: task.to_string(),
        })
        .collect();
    let untagged_matches = matches.iter().filter(|m| m.pipeline_tag.is_none()).count();
    Ok(TaskMapping {
        dominant_tag: dominant_tag(&matches),
        mapping,
        untagged_matches,
        matches,
    })
}

/// Most frequent tag among the matches, ties lexicographically.
pub fn dominant_tag(matches: &[MatchResult]) -> Option<String> {
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for tag in matches.iter().filter_map(|m| m.pipeline_tag.as_deref()) {
        *counts.entry(tag).or_insert(0) += 1;
    }
    let mut best: Option<(&str, usize)> = None;
    // BTreeMap iterates in lexicographic order, so strict > keeps the first
    for (tag, n) in counts {
        if best.is_none_or(|(_, m)| n > m) {
            best = Some((tag, n));
        }
    }
    best.map(|(t, _)| t.to_string())
}

/// One row of the explanatory PTM -> tag -> macro-task table.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExplanationRow {
    pub ptm: String,
    pub pipeline_tag: Option<String>,
    pub macro_ids: BTreeSet<String>,
}

impl fmt::Display for ExplanationRow {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let macros: Vec<&str> = self.macro_ids.iter().map(String::as_str).collect();
        write!(
            f,
            "{} | {} | {}",
            self.ptm,
            self.pipeline_tag.as_deref().unwrap_or("-"),
            if macros.is_empty() { "-".to_string() } else { macros.join(", ") }
        )
    }
}

pub fn explain_mapping(
    ptm_name: &str,
    registry: &Registry,
    evidence: &[EvidenceDoc],
    options: &MatchOptions,
) -> Result<ExplanationRow, MappingError> {
    let matches = find_similar(ptm_name, registry, options)?;
    Ok(ExplanationRow {
        ptm: ptm_name.trim().to_string(),
        pipeline_tag: dominant_tag(&matches),
        macro_ids: taxonomy::tasks_for_ptm(ptm_name, evidence),
    })
}
