//! Two-stage shaping of the classification dataset: drop records with
//! missing card or tag, then drop records whose tag is rare and whose
//! download count is low.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::registry::Registry;

#[derive(Debug, Error, PartialEq)]
pub enum FilterError {
    #[error("cannot compute thresholds on an empty dataset")]
    EmptyDataset,
    #[error("threshold {name} must be a finite non-negative number, got {value}")]
    InvalidThreshold { name: &'static str, value: f64 },
}

/// A record that has both a model card and a pipeline tag.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabeledRecord {
    pub model_id: String,
    pub card_data: String,
    pub pipeline_tag: String,
    pub likes: u64,
    pub downloads: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dataset {
    pub records: Vec<LabeledRecord>,
}

impl Dataset {
    pub fn new(records: Vec<LabeledRecord>) -> Self {
        Self { records }
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Number of records per tag.
    pub fn support(&self) -> BTreeMap<&str, usize> {
        let mut support = BTreeMap::new();
        for r in &self.records {
            *support.entry(r.pipeline_tag.as_str()).or_insert(0) += 1;
        }
        support
    }

    pub fn tags(&self) -> BTreeSet<&str> {
        self.records.iter().map(|r| r.pipeline_tag.as_str()).collect()
    }

    pub fn labels(&self) -> Vec<String> {
        self.records.iter().map(|r| r.pipeline_tag.clone()).collect()
    }

    pub fn cards(&self) -> Vec<&str> {
        self.records.iter().map(|r| r.card_data.as_str()).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Combine {
    /// Drop a record only if both conditions hold.
    #[default]
    And,
    /// Drop a record if either condition holds.
    Or,
}

impl std::str::FromStr for Combine {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "and" => Ok(Combine::And),
            "or" => Ok(Combine::Or),
            _ => Err(format!("unknown combine mode {s:?} (expected AND or OR)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FilterThresholds {
    /// Per-tag support threshold (median support by default).
    pub alpha: f64,
    /// Downloads threshold (mean downloads by default).
    pub beta: f64,
    pub combine: Combine,
}

impl FilterThresholds {
    pub fn new(alpha: f64, beta: f64, combine: Combine) -> Result<Self, FilterError> {
        for (name, value) in [("alpha", alpha), ("beta", beta)] {
            if !value.is_finite() || value < 0.0 {
                return Err(FilterError::InvalidThreshold { name, value });
            }
        }
        Ok(Self {
            alpha,
            beta,
            combine,
        })
    }

    /// Whether a record with the given tag support and downloads is dropped.
    pub fn drops(&self, support: usize, downloads: u64) -> bool {
        let rare = support as f64 <= self.alpha;
        let unpopular = downloads as f64 <= self.beta;
        match self.combine {
            Combine::And => rare && unpopular,
            Combine::Or => rare || unpopular,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterReport {
    pub initial_ptms: usize,
    pub initial_tags: usize,
    pub dropped_missing: usize,
    pub dropped_threshold: usize,
    pub tags_removed: usize,
    pub final_ptms: usize,
    pub final_tags: usize,
    pub thresholds: FilterThresholds,
}

impl FilterReport {
    pub fn is_consistent(&self) -> bool {
        self.initial_ptms >= self.dropped_missing + self.dropped_threshold
            && self.final_ptms == self.initial_ptms - self.dropped_missing - self.dropped_threshold
            && self.initial_tags >= self.tags_removed
            && self.final_tags == self.initial_tags - self.tags_removed
    }

    /// Fixed-width text table with one row per filtering stage.
    pub fn to_table(&self) -> String {
        let rows = [
            (
                "PTMs in the initial dump".to_string(),
                self.initial_ptms.to_string(),
                self.initial_tags.to_string(),
            ),
            (
                "PTMs with missing data".to_string(),
                self.dropped_missing.to_string(),
                "-".to_string(),
            ),
            (
                format!(
                    "PTMs with support<=alpha {} downloads<=beta",
                    match self.thresholds.combine {
                        Combine::And => "and",
                        Combine::Or => "or",
                    }
                ),
                self.dropped_threshold.to_string(),
                self.tags_removed.to_string(),
            ),
            (
                "D_f".to_string(),
                self.final_ptms.to_string(),
                self.final_tags.to_string(),
            ),
        ];
        let width = rows.iter().map(|r| r.0.len()).max().unwrap_or(0);
        let mut out = String::new();
        out.push_str(&format!("{:<width$} | {:>8} | {:>15}\n", "", "#PTMs", "#pipeline tags"));
        out.push_str(&format!("{}-+-{}-+-{}\n", "-".repeat(width), "-".repeat(8), "-".repeat(15)));
        for (label, ptms, tags) in rows {
            out.push_str(&format!("{label:<width$} | {ptms:>8} | {tags:>15}\n"));
        }
        out.push_str(&format!(
            "alpha (median support) = {}, beta (mean downloads) = {}\n",
            self.thresholds.alpha, self.thresholds.beta
        ));
        out
    }
}

impl fmt::Display for FilterReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_table())
    }
}

/// Keeps only records that carry both a card and a tag.
pub fn drop_missing(registry: &Registry) -> (Dataset, usize) {
    let records: Vec<LabeledRecord> = registry
        .records
        .iter()
        .filter_map(|r| match (&r.card_data, &r.pipeline_tag) {
            (Some(card), Some(tag)) => Some(LabeledRecord {
                model_id: r.model_id.clone(),
                card_data: card.clone(),
                pipeline_tag: tag.clone(),
                likes: r.likes,
                downloads: r.downloads,
            }),
            _ => None,
        })
        .collect();
    let dropped = registry.records.len() - records.len();
    (Dataset::new(records), dropped)
}

fn median(sorted: &[usize]) -> f64 {
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2] as f64
    } else {
        (sorted[n / 2 - 1] as f64 + sorted[n / 2] as f64) / 2.0
    }
}

/// alpha = median per-tag support, beta = mean downloads.
pub fn compute_thresholds(dataset: &Dataset, combine: Combine) -> Result<FilterThresholds, FilterError> {
    if dataset.is_empty() {
        return Err(FilterError::EmptyDataset);
    }
    let mut supports: Vec<usize> = dataset.support().into_values().collect();
    supports.sort_unstable();
    let alpha = median(&supports);
    let total: u128 = dataset.records.iter().map(|r| r.downloads as u128).sum();
    let beta = total as f64 / dataset.len() as f64;
    FilterThresholds::new(alpha, beta, combine)
}

/// Applies the threshold stage. Supports are computed on `dataset` itself.
///
/// The returned report covers this stage only: `initial_*` describe the
/// input dataset and `dropped_missing` is zero. [`run_filter`] produces the
/// full two-stage report.
pub fn apply_thresholds(dataset: &Dataset, thresholds: &FilterThresholds) -> (Dataset, FilterReport) {
    let support = dataset.support();
    let kept: Vec<LabeledRecord> = dataset
        .records
        .iter()
        .filter(|r| !thresholds.drops(support[r.pipeline_tag.as_str()], r.downloads))
        .cloned()
        .collect();
    let kept = Dataset::new(kept);
    let initial_tags = support.len();
    let final_tags = kept.tags().len();
    let report = FilterReport {
        initial_ptms: dataset.len(),
        initial_tags,
        dropped_missing: 0,
        dropped_threshold: dataset.len() - kept.len(),
        tags_removed: initial_tags - final_tags,
        final_ptms: kept.len(),
        final_tags,
        thresholds: *thresholds,
    };
    (kept, report)
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct FilterOptions {
    pub combine: Combine,
    /// Overrides the computed median support.
    pub alpha: Option<f64>,
    /// Overrides the computed mean downloads.
    pub beta: Option<f64>,
}

/// Runs both stages on a registry and fills every report row.
///
/// Tag counts cover records that carry a tag in the raw registry, so a tag
/// whose records all lack cards counts as removed.
pub fn run_filter(registry: &Registry, options: &FilterOptions) -> Result<(Dataset, FilterReport), FilterError> {
    let initial_tags: BTreeSet<&str> = registry
        .records
        .iter()
        .filter_map(|r| r.pipeline_tag.as_deref())
        .collect();
    let (with_data, dropped_missing) = drop_missing(registry);

    let thresholds = match (options.alpha, options.beta) {
        (Some(alpha), Some(beta)) => FilterThresholds::new(alpha, beta, options.combine)?,
        _ => {
            let computed = compute_thresholds(&with_data, options.combine)?;
            FilterThresholds::new(
                options.alpha.unwrap_or(computed.alpha),
                options.beta.unwrap_or(computed.beta),
                options.combine,
            )?
        }
    };
    let (kept, stage) = apply_thresholds(&with_data, &thresholds);
    let final_tags = stage.final_tags;
    let report = FilterReport {
        initial_ptms: registry.records.len(),
        initial_tags: initial_tags.len(),
        dropped_missing,
        dropped_threshold: stage.dropped_threshold,
        tags_removed: initial_tags.len() - final_tags,
        final_ptms: kept.len(),
        final_tags,
        thresholds,
    };
    Ok((kept, report))
}
