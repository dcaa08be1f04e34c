//! Linear text classifiers over TF-IDF vectors: Complement Naive Bayes and a
//! one-vs-rest linear SVC.
//!
//! Both produce a [`ClassifierModel`] holding a `classes × features` weight
//! matrix and a per-class bias. Scores are
//!
//! * CNB: `f_c(x) = -sum_i x_i * w[c][i]` where `w[c][i] = ln theta_{~c,i}`
//!   is estimated from every document *not* in class `c`,
//! * SVC: `f_c(x) = w_c . x + b_c`,
//!
//! and prediction is the argmax, ties going to the lowest class index.

use std::collections::HashMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::features::DocVector;

#[derive(Debug, Error, PartialEq)]
pub enum ClassifierError {
    #[error("training set is empty")]
    EmptyTrainingSet,
    #[error("{vectors} vectors but {labels} labels")]
    LengthMismatch { vectors: usize, labels: usize },
    #[error("training labels contain a single class ({0:?}); at least two are required")]
    SingleClassCorpus(String),
    #[error("vector has dimension {found} but the model expects {expected}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("invalid hyperparameter: {0}")]
    InvalidHyperparameter(String),
    #[error("invalid model artifact: {0}")]
    InvalidArtifact(String),
}

pub type Result<T, E = ClassifierError> = std::result::Result<T, E>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ClassifierKind {
    Cnb,
    Svc,
}

impl std::fmt::Display for ClassifierKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ClassifierKind::Cnb => "CNB",
            ClassifierKind::Svc => "SVC",
        })
    }
}

impl std::str::FromStr for ClassifierKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "cnb" => Ok(ClassifierKind::Cnb),
            "svc" => Ok(ClassifierKind::Svc),
            _ => Err(format!("unknown classifier {s:?} (expected cnb or svc)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CnbParams {
    /// Additive smoothing, must be positive.
    pub smoothing: f64,
    pub normalize_weights: bool,
}

impl Default for CnbParams {
    fn default() -> Self {
        Self {
            smoothing: 1.0,
            normalize_weights: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SvcParams {
    /// Hinge-loss weight `C`.
    pub c: f64,
    /// Cap on solver work, in passes over the training set.
    pub epochs: usize,
    pub seed: u64,
}

impl SvcParams {
    pub fn with_seed(seed: u64) -> Self {
        Self {
            c: 1.0,
            epochs: 50,
            seed,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Hyperparams {
    Cnb(CnbParams),
    Svc(SvcParams),
}

impl Hyperparams {
    pub fn kind(&self) -> ClassifierKind {
        match self {
            Hyperparams::Cnb(_) => ClassifierKind::Cnb,
            Hyperparams::Svc(_) => ClassifierKind::Svc,
        }
    }
}

#[derive(Serialize, Deserialize)]
struct ModelArtifact {
    kind: ClassifierKind,
    classes: Vec<String>,
    weights: Vec<f64>,
    bias: Vec<f64>,
    hyperparams: Hyperparams,
}

/// Trained classifier parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ModelArtifact", into = "ModelArtifact")]
pub struct ClassifierModel {
    kind: ClassifierKind,
    classes: Vec<String>,
    n_features: usize,
    /// Row-major, `classes.len() * n_features`.
    weights: Vec<f64>,
    bias: Vec<f64>,
    hyperparams: Hyperparams,
}

impl TryFrom<ModelArtifact> for ClassifierModel {
    type Error = ClassifierError;

    fn try_from(a: ModelArtifact) -> Result<Self> {
        let bad = |msg: String| Err(ClassifierError::InvalidArtifact(msg));
        if a.classes.is_empty() {
            return bad("no classes".into());
        }
        let mut seen = std::collections::HashSet::new();
        if !a.classes.iter().all(|c| seen.insert(c)) {
            return bad("duplicate class".into());
        }
        if a.hyperparams.kind() != a.kind {
            return bad(format!("kind {} with {} hyperparameters", a.kind, a.hyperparams.kind()));
        }
        if !a.weights.len().is_multiple_of(a.classes.len()) {
            return bad(format!(
                "{} weights do not divide into {} classes",
                a.weights.len(),
                a.classes.len()
            ));
        }
        if a.bias.len() != a.classes.len() {
            return bad(format!("{} biases for {} classes", a.bias.len(), a.classes.len()));
        }
        Ok(Self {
            kind: a.kind,
            n_features: a.weights.len() / a.classes.len(),
            classes: a.classes,
            weights: a.weights,
            bias: a.bias,
            hyperparams: a.hyperparams,
        })
    }
}

impl From<ClassifierModel> for ModelArtifact {
    fn from(m: ClassifierModel) -> Self {
        Self {
            kind: m.kind,
            classes: m.classes,
            weights: m.weights,
            bias: m.bias,
            hyperparams: m.hyperparams,
        }
    }
}

impl ClassifierModel {
    pub fn kind(&self) -> ClassifierKind {
        self.kind
    }

    pub fn classes(&self) -> &[String] {
        &self.classes
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub fn hyperparams(&self) -> &Hyperparams {
        &self.hyperparams
    }

    pub fn bias(&self) -> &[f64] {
        &self.bias
    }

    /// Weight row of class `c`.
    pub fn weights(&self, c: usize) -> &[f64] {
        &self.weights[c * self.n_features..(c + 1) * self.n_features]
    }

    fn check_dim(&self, vector: &DocVector) -> Result<()> {
        let found = vector.min_dim();
        if found > self.n_features {
            return Err(ClassifierError::DimensionMismatch {
                expected: self.n_features,
                found,
            });
        }
        Ok(())
    }

    /// Per-class scores, in class order.
    pub fn predict_scores(&self, vector: &DocVector) -> Result<Vec<f64>> {
        self.check_dim(vector)?;
        let sign = match self.kind {
            ClassifierKind::Cnb => -1.0,
            ClassifierKind::Svc => 1.0,
        };
        Ok((0..self.classes.len())
            .map(|c| sign * vector.dot_dense(self.weights(c)) + self.bias[c])
            .collect())
    }

    /// Index of the winning class.
    pub fn predict_index(&self, vector: &DocVector) -> Result<usize> {
        Ok(argmax(&self.predict_scores(vector)?))
    }

    pub fn predict(&self, vector: &DocVector) -> Result<&str> {
        Ok(&self.classes[self.predict_index(vector)?])
    }
}

/// First index of the maximum.
pub fn argmax(scores: &[f64]) -> usize {
    let mut best = 0;
    for (i, &s) in scores.iter().enumerate().skip(1) {
        if s > scores[best] {
            best = i;
        }
    }
    best
}

/// Classes in first-seen order and the class index of every label.
fn encode_labels<S: AsRef<str>>(labels: &[S]) -> (Vec<String>, Vec<usize>) {
    let mut classes: Vec<String> = Vec::new();
    let mut lookup: HashMap<&str, usize> = HashMap::new();
    let mut encoded = Vec::with_capacity(labels.len());
    for label in labels {
        let label = label.as_ref();
        let idx = *lookup.entry(label).or_insert_with(|| {
            classes.push(label.to_string());
            classes.len() - 1
        });
        encoded.push(idx);
    }
    (classes, encoded)
}

fn validate_corpus<S: AsRef<str>>(
    vectors: &[DocVector],
    labels: &[S],
    n_features: usize,
) -> Result<(Vec<String>, Vec<usize>)> {
    if vectors.len() != labels.len() {
        return Err(ClassifierError::LengthMismatch {
            vectors: vectors.len(),
            labels: labels.len(),
        });
    }
    if vectors.is_empty() {
        return Err(ClassifierError::EmptyTrainingSet);
    }
    if let Some(found) = vectors.iter().map(DocVector::min_dim).find(|&d| d > n_features) {
        return Err(ClassifierError::DimensionMismatch {
            expected: n_features,
            found,
        });
    }
    let (classes, encoded) = encode_labels(labels);
    if classes.len() < 2 {
        return Err(ClassifierError::SingleClassCorpus(classes[0].clone()));
    }
    Ok((classes, encoded))
}

/// Trains Complement Naive Bayes.
///
/// For every class `c`, feature mass is accumulated over the documents of
/// all other classes: `theta = (N_{~c,i} + a) / (N_{~c} + a * F)` and the
/// stored weight is `ln theta`. With `normalize_weights`, each row is divided
/// by its L1 norm.
pub fn train_cnb<S: AsRef<str>>(
    vectors: &[DocVector],
    labels: &[S],
    n_features: usize,
    params: CnbParams,
) -> Result<ClassifierModel> {
    if !(params.smoothing.is_finite() && params.smoothing > 0.0) {
        return Err(ClassifierError::InvalidHyperparameter(format!(
            "smoothing must be positive, got {}",
            params.smoothing
        )));
    }
    let (classes, encoded) = validate_corpus(vectors, labels, n_features)?;
    let k = classes.len();

    let mut per_class = vec![0.0; k * n_features];
    for (v, &c) in vectors.iter().zip(&encoded) {
        let row = &mut per_class[c * n_features..(c + 1) * n_features];
        for (i, w) in v.iter() {
            row[i] += w;
        }
    }
    let mut total = vec![0.0; n_features];
    for c in 0..k {
        for (t, x) in total.iter_mut().zip(&per_class[c * n_features..(c + 1) * n_features]) {
            *t += x;
        }
    }

    let a = params.smoothing;
    let mut weights = vec![0.0; k * n_features];
    for c in 0..k {
        let own = &per_class[c * n_features..(c + 1) * n_features];
        let complement: Vec<f64> = total.iter().zip(own).map(|(t, o)| t - o).collect();
        let mass: f64 = complement.iter().sum();
        let denom = mass + a * n_features as f64;
        let row = &mut weights[c * n_features..(c + 1) * n_features];
        for (w, n) in row.iter_mut().zip(&complement) {
            *w = ((n + a) / denom).ln();
        }
        if params.normalize_weights {
            let l1: f64 = row.iter().map(|w| w.abs()).sum();
            if l1 > 0.0 {
                row.iter_mut().for_each(|w| *w /= l1);
            }
        }
    }

    Ok(ClassifierModel {
        kind: ClassifierKind::Cnb,
        classes,
        n_features,
        weights,
        bias: vec![0.0; k],
        hyperparams: Hyperparams::Cnb(params),
    })
}

/// Stopping tolerance on the maximal KKT violation.
const SVC_TOLERANCE: f64 = 1e-5;
const TAU: f64 = 1e-12;

/// Solver trace of one binary (one-vs-rest) problem.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinaryTrace {
    pub class: String,
    pub iterations: usize,
    pub converged: bool,
    /// Primal objective of the best iterate so far, one entry per checkpoint.
    pub primal: Vec<f64>,
    /// Dual objective (minimization form) at each checkpoint.
    pub dual: Vec<f64>,
}

impl BinaryTrace {
    pub fn final_objective(&self) -> f64 {
        *self.primal.last().expect("at least one checkpoint")
    }
}

/// Primal SVM objective `(1/2)|w|^2 + C * sum max(0, 1 - y (w.x + b))`.
pub fn svm_objective(w: &[f64], b: f64, vectors: &[DocVector], y: &[f64], c: f64) -> f64 {
    let reg = 0.5 * w.iter().map(|x| x * x).sum::<f64>();
    let loss: f64 = vectors
        .iter()
        .zip(y)
        .map(|(x, &yi)| (1.0 - yi * (x.dot_dense(w) + b)).max(0.0))
        .sum();
    reg + c * loss
}

/// Feature-major view of the training set.
struct Postings {
    lists: Vec<Vec<(usize, f64)>>,
}

impl Postings {
    fn build(vectors: &[DocVector], n_features: usize) -> Self {
        let mut lists = vec![Vec::new(); n_features];
        for (d, v) in vectors.iter().enumerate() {
            for (i, w) in v.iter() {
                lists[i].push((d, w));
            }
        }
        Self { lists }
    }

    /// `out[t] = x_t . x` for every training document `t`.
    fn kernel_column(&self, x: &DocVector, out: &mut [f64]) {
        out.iter_mut().for_each(|o| *o = 0.0);
        for (i, w) in x.iter() {
            for &(d, v) in &self.lists[i] {
                out[d] += w * v;
            }
        }
    }
}

/// Solves one binary soft-margin problem with an unregularized bias by SMO
/// on the dual, keeping `w = sum alpha_i y_i x_i` explicit.
///
/// Working pairs are chosen by maximal violation with second-order
/// information. `order` fixes the scan order and so the tie-breaking.
#[allow(clippy::too_many_arguments)]
fn solve_binary(
    vectors: &[DocVector],
    postings: &Postings,
    sq_norms: &[f64],
    y: &[f64],
    n_features: usize,
    c: f64,
    max_iter: usize,
    order: &[usize],
) -> (Vec<f64>, f64, usize, bool, Vec<f64>, Vec<f64>) {
    let n = vectors.len();
    let mut alpha = vec![0.0; n];
    let mut grad = vec![-1.0; n];
    let mut w = vec![0.0; n_features];
    let mut col_i = vec![0.0; n];

    let upper = |a: f64| a >= c;
    let lower = |a: f64| a <= 0.0;

    let mut best: Option<(Vec<f64>, f64, f64)> = None;
    let mut primal_trace = Vec::new();
    let mut dual_trace = Vec::new();
    let checkpoint_every = n.max(1);

    let mut iter = 0;
    let mut converged = false;

    let mut checkpoint = |w: &[f64], alpha: &[f64], grad: &[f64], best: &mut Option<(Vec<f64>, f64, f64)>| {
        let b = -compute_rho(alpha, grad, y, c);
        let obj = svm_objective(w, b, vectors, y, c);
        let dual = 0.5 * w.iter().map(|x| x * x).sum::<f64>() - alpha.iter().sum::<f64>();
        if best.as_ref().is_none_or(|(_, _, o)| obj < *o) {
            *best = Some((w.to_vec(), b, obj));
        }
        primal_trace.push(best.as_ref().unwrap().2);
        dual_trace.push(dual);
    };

    while iter < max_iter {
        if iter > 0 && iter % checkpoint_every == 0 {
            // refresh the gradient from w to shed accumulated rounding
            for t in 0..n {
                grad[t] = y[t] * vectors[t].dot_dense(&w) - 1.0;
            }
            checkpoint(&w, &alpha, &grad, &mut best);
        }

        // select i: maximal -y_t G_t over I_up
        let mut gmax = f64::NEG_INFINITY;
        let mut i_sel = None;
        for &t in order {
            let v = -y[t] * grad[t];
            let in_up = if y[t] > 0.0 { !upper(alpha[t]) } else { !lower(alpha[t]) };
            if in_up && v >= gmax {
                gmax = v;
                i_sel = Some(t);
            }
        }
        let Some(i) = i_sel else {
            converged = true;
            break;
        };
        postings.kernel_column(&vectors[i], &mut col_i);

        // select j over I_low with second-order gain
        let mut gmax2 = f64::NEG_INFINITY;
        let mut j_sel = None;
        let mut best_gain = f64::INFINITY;
        for &t in order {
            let in_low = if y[t] > 0.0 { !lower(alpha[t]) } else { !upper(alpha[t]) };
            if !in_low {
                continue;
            }
            let v = y[t] * grad[t];
            if v >= gmax2 {
                gmax2 = v;
            }
            let diff = gmax + v;
            if diff > 0.0 {
                let quad = sq_norms[i] + sq_norms[t] - 2.0 * col_i[t];
                let gain = -(diff * diff) / if quad > 0.0 { quad } else { TAU };
                if gain <= best_gain {
                    best_gain = gain;
                    j_sel = Some(t);
                }
            }
        }
        if gmax + gmax2 < SVC_TOLERANCE || j_sel.is_none() {
            converged = true;
            break;
        }
        let j = j_sel.unwrap();
        iter += 1;

        let (old_i, old_j) = (alpha[i], alpha[j]);
        let quad = {
            let q = sq_norms[i] + sq_norms[j] - 2.0 * col_i[j];
            if q > 0.0 {
                q
            } else {
                TAU
            }
        };
        if y[i] != y[j] {
            let delta = (-grad[i] - grad[j]) / quad;
            let diff = alpha[i] - alpha[j];
            alpha[i] += delta;
            alpha[j] += delta;
            if diff > 0.0 {
                if alpha[j] < 0.0 {
                    alpha[j] = 0.0;
                    alpha[i] = diff;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = -diff;
            }
            if diff > 0.0 {
                if alpha[i] > c {
                    alpha[i] = c;
                    alpha[j] = c - diff;
                }
            } else if alpha[j] > c {
                alpha[j] = c;
                alpha[i] = c + diff;
            }
        } else {
            let delta = (grad[i] - grad[j]) / quad;
            let sum = alpha[i] + alpha[j];
            alpha[i] -= delta;
            alpha[j] += delta;
            if sum > c {
                if alpha[i] > c {
                    alpha[i] = c;
                    alpha[j] = sum - c;
                }
            } else if alpha[j] < 0.0 {
                alpha[j] = 0.0;
                alpha[i] = sum;
            }
            if sum > c {
                if alpha[j] > c {
                    alpha[j] = c;
                    alpha[i] = sum - c;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = sum;
            }
        }

        // w += y_i d_i x_i + y_j d_j x_j, then G_t += y_t x_t . dw
        let di = (alpha[i] - old_i) * y[i];
        let dj = (alpha[j] - old_j) * y[j];
        let dw = DocVector::from_pairs(
            vectors[i]
                .iter()
                .map(|(f, v)| (f, v * di))
                .chain(vectors[j].iter().map(|(f, v)| (f, v * dj))),
        );
        for (f, d) in dw.iter() {
            w[f] += d;
            for &(t, v) in &postings.lists[f] {
                grad[t] += y[t] * v * d;
            }
        }
    }

    for t in 0..n {
        grad[t] = y[t] * vectors[t].dot_dense(&w) - 1.0;
    }
    checkpoint(&w, &alpha, &grad, &mut best);
    let (w, b, _) = best.expect("final checkpoint recorded");
    (w, b, iter, converged, primal_trace, dual_trace)
}

/// Offset from the KKT conditions: mean over free vectors, else the midpoint
/// of the feasible interval.
fn compute_rho(alpha: &[f64], grad: &[f64], y: &[f64], c: f64) -> f64 {
    let (mut ub, mut lb) = (f64::INFINITY, f64::NEG_INFINITY);
    let (mut sum_free, mut nr_free) = (0.0, 0usize);
    for t in 0..alpha.len() {
        let yg = y[t] * grad[t];
        if alpha[t] >= c {
            if y[t] < 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else if alpha[t] <= 0.0 {
            if y[t] > 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else {
            nr_free += 1;
            sum_free += yg;
        }
    }
    if nr_free > 0 {
        sum_free / nr_free as f64
    } else {
        (ub + lb) / 2.0
    }
}

/// Trains a one-vs-rest linear SVC; see [`train_svc_traced`].
pub fn train_svc<S: AsRef<str>>(
    vectors: &[DocVector],
    labels: &[S],
    n_features: usize,
    params: SvcParams,
) -> Result<ClassifierModel> {
    train_svc_traced(vectors, labels, n_features, params).map(|(m, _)| m)
}

/// Trains one binary classifier per class, each minimizing
/// `(1/2)|w|^2 + C * sum max(0, 1 - y (w.x + b))`.
///
/// Each binary problem gets at most `epochs * n` SMO steps. A problem that
/// hits the cap is reported through the trace and a warning, and its best
/// iterate is kept. Results do not depend on thread scheduling.
pub fn train_svc_traced<S: AsRef<str>>(
    vectors: &[DocVector],
    labels: &[S],
    n_features: usize,
    params: SvcParams,
) -> Result<(ClassifierModel, Vec<BinaryTrace>)> {
    if !(params.c.is_finite() && params.c > 0.0) {
        return Err(ClassifierError::InvalidHyperparameter(format!(
            "C must be positive, got {}",
            params.c
        )));
    }
    if params.epochs == 0 {
        return Err(ClassifierError::InvalidHyperparameter("epochs must be at least 1".into()));
    }
    let (classes, encoded) = validate_corpus(vectors, labels, n_features)?;
    let n = vectors.len();
    let postings = Postings::build(vectors, n_features);
    let sq_norms: Vec<f64> = vectors.iter().map(|v| v.dot(v)).collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(params.seed));
    let max_iter = params.epochs.saturating_mul(n);

    let solved: Vec<(Vec<f64>, f64, BinaryTrace)> = (0..classes.len())
        .into_par_iter()
        .map(|c| {
            let y: Vec<f64> = encoded.iter().map(|&e| if e == c { 1.0 } else { -1.0 }).collect();
            let (w, b, iterations, converged, primal, dual) =
                solve_binary(vectors, &postings, &sq_norms, &y, n_features, params.c, max_iter, &order);
            if !converged {
                log::warn!(
                    "SVC for class {:?} stopped after {iterations} steps without meeting tolerance",
                    classes[c]
                );
            }
            let trace = BinaryTrace {
                class: classes[c].clone(),
                iterations,
                converged,
                primal,
                dual,
            };
            (w, b, trace)
        })
        .collect();

    let mut weights = Vec::with_capacity(classes.len() * n_features);
    let mut bias = Vec::with_capacity(classes.len());
    let mut traces = Vec::with_capacity(classes.len());
    for (w, b, trace) in solved {
        weights.extend(w);
        bias.push(b);
        traces.push(trace);
    }
    let model = ClassifierModel {
        kind: ClassifierKind::Svc,
        classes,
        n_features,
        weights,
        bias,
        hyperparams: Hyperparams::Svc(params),
    };
    Ok((model, traces))
}

/// Dispatches on the hyperparameter variant.
pub fn train<S: AsRef<str>>(
    vectors: &[DocVector],
    labels: &[S],
    n_features: usize,
    hyperparams: &Hyperparams,
) -> Result<ClassifierModel> {
    match *hyperparams {
        Hyperparams::Cnb(p) => train_cnb(vectors, labels, n_features, p),
        Hyperparams::Svc(p) => train_svc(vectors, labels, n_features, p),
    }
}
