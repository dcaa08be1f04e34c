//! Stratified k-fold cross-validation with precision, recall and F1.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::classifiers::{self, ClassifierError, ClassifierKind, Hyperparams};
use crate::features::{self, FeatureError, FeatureSpace, FitOptions, PreprocessOptions, TokenStream};
use crate::filter::Dataset;

#[derive(Debug, Error, PartialEq)]
pub enum EvalError {
    #[error("k must be at least 2, got {0}")]
    InvalidK(usize),
    #[error("too few samples: {0}")]
    TooFewSamples(String),
    #[error("y_true has {0} labels but y_pred has {1}")]
    LengthMismatch(usize, usize),
    #[error("fold {fold}: {source}")]
    Features {
        fold: usize,
        #[source]
        source: FeatureError,
    },
    #[error("fold {fold}: {source}")]
    Training {
        fold: usize,
        #[source]
        source: ClassifierError,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Averaging {
    /// Mean over classes weighted by true-class support.
    #[default]
    Weighted,
    /// Unweighted mean over classes.
    Macro,
    /// Global counts; equals accuracy for single-label data.
    Micro,
}

impl std::str::FromStr for Averaging {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "weighted" => Ok(Averaging::Weighted),
            "macro" => Ok(Averaging::Macro),
            "micro" => Ok(Averaging::Micro),
            _ => Err(format!("unknown averaging {s:?} (expected weighted, macro or micro)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Prf {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: usize,
}

/// Metrics of one prediction run, before it is attached to a fold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub per_class: BTreeMap<String, ClassMetrics>,
    pub weighted: Prf,
    pub macro_avg: Prf,
    pub micro: Prf,
}

impl Metrics {
    pub fn averaged(&self, averaging: Averaging) -> Prf {
        match averaging {
            Averaging::Weighted => self.weighted,
            Averaging::Macro => self.macro_avg,
            Averaging::Micro => self.micro,
        }
    }
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

fn harmonic(p: f64, r: f64) -> f64 {
    if p + r == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    }
}

/// Per-class and averaged precision/recall/F1.
///
/// Classes are the union of true and predicted labels. Zero denominators
/// yield 0.
pub fn compute_metrics<S: AsRef<str>>(y_true: &[S], y_pred: &[S]) -> Result<Metrics, EvalError> {
    if y_true.len() != y_pred.len() {
        return Err(EvalError::LengthMismatch(y_true.len(), y_pred.len()));
    }
    if y_true.is_empty() {
        return Err(EvalError::TooFewSamples("no predictions to score".into()));
    }
    // (tp, fp, fn)
    let mut counts: BTreeMap<&str, (usize, usize, usize)> = BTreeMap::new();
    for (t, p) in y_true.iter().zip(y_pred) {
        let (t, p) = (t.as_ref(), p.as_ref());
        if t == p {
            counts.entry(t).or_default().0 += 1;
        } else {
            counts.entry(p).or_default().1 += 1;
            counts.entry(t).or_default().2 += 1;
        }
    }

    let n = y_true.len();
    let mut per_class = BTreeMap::new();
    let (mut weighted, mut macro_avg) = (Prf::default(), Prf::default());
    let mut tp_total = 0;
    for (&label, &(tp, fp, fn_)) in &counts {
        let precision = ratio(tp, tp + fp);
        let recall = ratio(tp, tp + fn_);
        let f1 = harmonic(precision, recall);
        let support = tp + fn_;
        let share = support as f64 / n as f64;
        weighted.precision += share * precision;
        weighted.recall += share * recall;
        weighted.f1 += share * f1;
        macro_avg.precision += precision;
        macro_avg.recall += recall;
        macro_avg.f1 += f1;
        tp_total += tp;
        per_class.insert(
            label.to_string(),
            ClassMetrics {
                precision,
                recall,
                f1,
                support,
            },
        );
    }
    let k = counts.len() as f64;
    macro_avg.precision /= k;
    macro_avg.recall /= k;
    macro_avg.f1 /= k;
    let accuracy = ratio(tp_total, n);
    Ok(Metrics {
        per_class,
        weighted,
        macro_avg,
        micro: Prf {
            precision: accuracy,
            recall: accuracy,
            f1: accuracy,
        },
    })
}

/// Stratified fold assignment.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Folds {
    /// Test indices of each fold, ascending.
    pub folds: Vec<Vec<usize>>,
    /// Classes with fewer than k members; their samples are in no fold.
    pub dropped_classes: Vec<String>,
}

impl Folds {
    pub fn k(&self) -> usize {
        self.folds.len()
    }

    /// All indices that were assigned to a fold, ascending.
    pub fn retained(&self) -> Vec<usize> {
        let mut all: Vec<usize> = self.folds.iter().flatten().copied().collect();
        all.sort_unstable();
        all
    }

    /// Retained indices outside fold `i`.
    pub fn train_indices(&self, i: usize) -> Vec<usize> {
        let mut idx: Vec<usize> = self
            .folds
            .iter()
            .enumerate()
            .filter(|(j, _)| *j != i)
            .flat_map(|(_, f)| f.iter().copied())
            .collect();
        idx.sort_unstable();
        idx
    }
}

/// Splits samples into `k` stratified folds.
///
/// Each class is shuffled with a seeded RNG, classes are laid end to end in
/// sorted label order, and the sequence is dealt round-robin into the folds.
/// Fold sizes and per-class counts therefore differ by at most one.
pub fn make_folds<S: AsRef<str>>(labels: &[S], k: usize, seed: u64) -> Result<Folds, EvalError> {
    if k < 2 {
        return Err(EvalError::InvalidK(k));
    }
    let mut by_class: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, l) in labels.iter().enumerate() {
        by_class.entry(l.as_ref()).or_default().push(i);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut dealt = Vec::with_capacity(labels.len());
    let mut dropped_classes = Vec::new();
    for (label, mut members) in by_class {
        if members.len() < k {
            log::warn!(
                "class {label:?} has {} samples, fewer than k = {k}; dropping it",
                members.len()
            );
            dropped_classes.push(label.to_string());
            continue;
        }
        members.shuffle(&mut rng);
        dealt.extend(members);
    }
    if dealt.is_empty() {
        return Err(EvalError::TooFewSamples(format!("no class has at least {k} samples")));
    }
    let mut folds = vec![Vec::new(); k];
    for (pos, idx) in dealt.into_iter().enumerate() {
        folds[pos % k].push(idx);
    }
    folds.iter_mut().for_each(|f| f.sort_unstable());
    Ok(Folds {
        folds,
        dropped_classes,
    })
}

/// One held-out prediction.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Prediction {
    pub index: usize,
    pub truth: String,
    pub predicted: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldMetrics {
    /// 1-based.
    pub fold_index: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub per_class: BTreeMap<String, ClassMetrics>,
    pub weighted: Prf,
    #[serde(rename = "macro")]
    pub macro_avg: Prf,
    pub micro: Prf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub predictions: Option<Vec<Prediction>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvReport {
    pub classifier: ClassifierKind,
    pub averaging: Averaging,
    pub folds: Vec<FoldMetrics>,
    pub averages: Prf,
    pub seed: u64,
    pub dropped_classes: Vec<String>,
}

/// Everything needed to go from card text to a prediction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub preprocess: PreprocessOptions,
    pub fit: FitOptions,
    pub hyperparams: Hyperparams,
    pub averaging: Averaging,
    /// Keep per-fold predictions in the report.
    pub keep_predictions: bool,
}

impl PipelineConfig {
    pub fn new(hyperparams: Hyperparams) -> Self {
        Self {
            preprocess: PreprocessOptions::default(),
            fit: FitOptions::default(),
            hyperparams,
            averaging: Averaging::default(),
            keep_predictions: false,
        }
    }
}

fn mean_of(folds: &[FoldMetrics]) -> Prf {
    let k = folds.len() as f64;
    Prf {
        precision: folds.iter().map(|f| f.precision).sum::<f64>() / k,
        recall: folds.iter().map(|f| f.recall).sum::<f64>() / k,
        f1: folds.iter().map(|f| f.f1).sum::<f64>() / k,
    }
}

/// Runs k-fold cross-validation over a filtered dataset.
///
/// Per fold the feature space is fitted on the training split only. Folds
/// run in parallel; the report is identical to a sequential run.
pub fn evaluate_cv(dataset: &Dataset, config: &PipelineConfig, k: usize, seed: u64) -> Result<CvReport, EvalError> {
    let labels = dataset.labels();
    let folds = make_folds(&labels, k, seed)?;
    let retained_classes: BTreeSet<&str> = folds.retained().iter().map(|&i| labels[i].as_str()).collect();
    if retained_classes.len() < 2 {
        return Err(EvalError::TooFewSamples(format!(
            "{} class(es) have at least {k} samples; two are required",
            retained_classes.len()
        )));
    }

    let tokens: Vec<TokenStream> = dataset
        .records
        .par_iter()
        .map(|r| features::preprocess(&r.card_data, &config.preprocess))
        .collect();

    let fold_results: Vec<Result<FoldMetrics, EvalError>> = (0..k)
        .into_par_iter()
        .map(|i| run_fold(&folds, i, &tokens, &labels, config))
        .collect();
    let fold_metrics = fold_results.into_iter().collect::<Result<Vec<_>, _>>()?;

    Ok(CvReport {
        classifier: config.hyperparams.kind(),
        averaging: config.averaging,
        averages: mean_of(&fold_metrics),
        folds: fold_metrics,
        seed,
        dropped_classes: folds.dropped_classes.clone(),
    })
}

fn run_fold(
    folds: &Folds,
    i: usize,
    tokens: &[TokenStream],
    labels: &[String],
    config: &PipelineConfig,
) -> Result<FoldMetrics, EvalError> {
    let fold = i + 1;
    let train_idx = folds.train_indices(i);
    let test_idx = &folds.folds[i];

    let train_tokens: Vec<TokenStream> = train_idx.iter().map(|&j| tokens[j].clone()).collect();
    let space = FeatureSpace::fit(&train_tokens, &config.fit).map_err(|source| EvalError::Features { fold, source })?;
    let train_x: Vec<_> = train_tokens.iter().map(|t| space.transform(t)).collect();
    let train_y: Vec<&str> = train_idx.iter().map(|&j| labels[j].as_str()).collect();
    let model = classifiers::train(&train_x, &train_y, space.len(), &config.hyperparams)
        .map_err(|source| EvalError::Training { fold, source })?;

    let mut y_true = Vec::with_capacity(test_idx.len());
    let mut y_pred = Vec::with_capacity(test_idx.len());
    for &j in test_idx {
        let v = space.transform(&tokens[j]);
        let p = model.predict(&v).map_err(|source| EvalError::Training { fold, source })?;
        y_true.push(labels[j].as_str());
        y_pred.push(p);
    }
    let metrics = compute_metrics(&y_true, &y_pred)?;
    let chosen = metrics.averaged(config.averaging);
    let predictions = config.keep_predictions.then(|| {
        test_idx
            .iter()
            .zip(y_true.iter().zip(&y_pred))
            .map(|(&index, (t, p))| Prediction {
                index,
                truth: t.to_string(),
                predicted: p.to_string(),
            })
            .collect()
    });
    Ok(FoldMetrics {
        fold_index: fold,
        precision: chosen.precision,
        recall: chosen.recall,
        f1: chosen.f1,
        per_class: metrics.per_class,
        weighted: metrics.weighted,
        macro_avg: metrics.macro_avg,
        micro: metrics.micro,
        predictions,
    })
}

/// Renders one or more reports side by side: a row per fold plus an
/// average row, and P/R/F1 columns per classifier.
pub fn render_table(reports: &[&CvReport]) -> String {
    let mut out = String::new();
    let col = 8;
    let mut header1 = format!("{:<7}", "");
    let mut header2 = format!("{:<7}", "Fold");
    for metric in ["Precision", "Recall", "F1 Score"] {
        let span = col * reports.len() + reports.len().saturating_sub(1);
        header1.push_str(&format!(" | {metric:^span$}"));
        let names: Vec<String> = reports.iter().map(|r| format!("{:>col$}", r.classifier.to_string())).collect();
        header2.push_str(&format!(" | {}", names.join(" ")));
    }
    out.push_str(header1.trim_end());
    out.push('\n');
    out.push_str(&header2);
    out.push('\n');
    out.push_str(&"-".repeat(header2.len()));
    out.push('\n');

    let n_folds = reports.iter().map(|r| r.folds.len()).max().unwrap_or(0);
    let cell = |v: Option<f64>| v.map_or(format!("{:>col$}", "-"), |v| format!("{v:>col$.3}"));
    for f in 0..n_folds {
        let mut line = format!("{:<7}", f + 1);
        for pick in [0usize, 1, 2] {
            let cells: Vec<String> = reports
                .iter()
                .map(|r| {
                    cell(r.folds.get(f).map(|m| match pick {
                        0 => m.precision,
                        1 => m.recall,
                        _ => m.f1,
                    }))
                })
                .collect();
            line.push_str(&format!(" | {}", cells.join(" ")));
        }
        out.push_str(&line);
        out.push('\n');
    }
    out.push_str(&"-".repeat(header2.len()));
    out.push('\n');
    let mut line = format!("{:<7}", "Average");
    for pick in [0usize, 1, 2] {
        let cells: Vec<String> = reports
            .iter()
            .map(|r| {
                cell(Some(match pick {
                    0 => r.averages.precision,
                    1 => r.averages.recall,
                    _ => r.averages.f1,
                }))
            })
            .collect();
        line.push_str(&format!(" | {}", cells.join(" ")));
    }
    out.push_str(&line);
    out.push('\n');
    out
}
