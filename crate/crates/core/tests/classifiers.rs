use proptest::prelude::*;
use ptm_catalog::classifiers::{
    self, ClassifierKind, ClassifierModel, CnbParams, Hyperparams, SvcParams,
};
use ptm_catalog::features::DocVector;

fn dense(rows: &[&[f64]]) -> Vec<DocVector> {
    rows.iter().map(|r| DocVector::from_dense(r)).collect()
}

/// Direct evaluation of the complement formula, one cell at a time.
fn cnb_oracle(x: &[Vec<f64>], y: &[&str], class: &str, i: usize, a: f64) -> f64 {
    let f = x[0].len();
    let mut n_ci = 0.0;
    let mut n_c = 0.0;
    for (row, &label) in x.iter().zip(y) {
        if label != class {
            n_ci += row[i];
            n_c += row.iter().sum::<f64>();
        }
    }
    ((n_ci + a) / (n_c + a * f as f64)).ln()
}

#[test]
fn cnb_weights_match_formula_on_hand_corpus() {
    let x = vec![
        vec![2.0, 0.0, 1.0, 0.0],
        vec![0.0, 3.0, 0.0, 1.0],
        vec![1.0, 1.0, 0.0, 4.0],
    ];
    let y = ["a", "b", "c"];
    let rows: Vec<&[f64]> = x.iter().map(Vec::as_slice).collect();
    for a in [1.0, 0.5, 0.01] {
        let params = CnbParams { smoothing: a, normalize_weights: false };
        let model = classifiers::train_cnb(&dense(&rows), &y, 4, params).unwrap();
        assert_eq!(model.classes(), ["a", "b", "c"]);
        assert!(model.bias().iter().all(|&b| b == 0.0));
        for (c, class) in y.iter().enumerate() {
            for i in 0..4 {
                let want = cnb_oracle(&x, &y, class, i, a);
                assert!((model.weights(c)[i] - want).abs() <= 1e-12, "{class} {i}");
            }
        }
    }
    // class a, feature 0 by hand: complement rows b,c give N=1, total 10; (1+1)/(10+4)
    let model = classifiers::train_cnb(&dense(&rows), &y, 4, CnbParams::default()).unwrap();
    assert!((model.weights(0)[0] - (2.0f64 / 14.0).ln()).abs() <= 1e-12);
}

#[test]
fn cnb_normalized_rows_have_unit_l1() {
    let rows: [&[f64]; 3] = [&[1.0, 0.0, 2.0], &[0.0, 1.0, 0.0], &[3.0, 1.0, 0.0]];
    let params = CnbParams { smoothing: 1.0, normalize_weights: true };
    let model = classifiers::train_cnb(&dense(&rows), &["x", "y", "x"], 3, params).unwrap();
    for c in 0..2 {
        let l1: f64 = model.weights(c).iter().map(|w| w.abs()).sum();
        assert!((l1 - 1.0).abs() < 1e-12);
    }
}

const QP_X: [[f64; 2]; 8] = [
    [1.0, 2.0],
    [2.0, 3.0],
    [3.0, 3.0],
    [2.0, 0.5],
    [0.0, 0.0],
    [1.0, -1.0],
    [-1.0, 0.5],
    [2.5, 1.0],
];
const QP_Y: [&str; 8] = ["pos", "pos", "pos", "pos", "neg", "neg", "neg", "neg"];
/// Optimal primal values from an external QP solve of the 8-point problem.
const QP_OPTIMUM_C1: f64 = 3.0;
const QP_OPTIMUM_C05: f64 = 1.69375;

fn qp_vectors() -> (Vec<DocVector>, Vec<f64>) {
    let x = QP_X.iter().map(|r| DocVector::from_dense(r)).collect();
    let y = QP_Y.iter().map(|&l| if l == "pos" { 1.0 } else { -1.0 }).collect();
    (x, y)
}

/// Zooming grid search over (w1, w2, b) on the convex primal.
fn grid_oracle(c: f64) -> f64 {
    let (x, y) = qp_vectors();
    let mut center = [0.0f64; 3];
    let mut span = 4.0;
    let mut best = f64::INFINITY;
    for _ in 0..40 {
        let steps = 16i32;
        let mut round_best = (f64::INFINITY, center);
        for i in -steps..=steps {
            for j in -steps..=steps {
                for k in -steps..=steps {
                    let p = [
                        center[0] + span * i as f64 / steps as f64,
                        center[1] + span * j as f64 / steps as f64,
                        center[2] + span * k as f64 / steps as f64,
                    ];
                    let v = classifiers::svm_objective(&p[..2], p[2], &x, &y, c);
                    if v < round_best.0 {
                        round_best = (v, p);
                    }
                }
            }
        }
        best = best.min(round_best.0);
        center = round_best.1;
        span *= 0.6;
    }
    best
}

fn svc_objective(c: f64, seed: u64) -> f64 {
    let (x, y) = qp_vectors();
    let params = SvcParams { c, epochs: 200, seed };
    let model = classifiers::train_svc(&x, &QP_Y, 2, params).unwrap();
    let pos = model.classes().iter().position(|l| l == "pos").unwrap();
    classifiers::svm_objective(model.weights(pos), model.bias()[pos], &x, &y, c)
}

#[test]
fn svc_reaches_qp_optimum() {
    for (c, frozen) in [(1.0, QP_OPTIMUM_C1), (0.5, QP_OPTIMUM_C05)] {
        let grid = grid_oracle(c);
        assert!((grid - frozen).abs() < 1e-3, "grid {grid} vs frozen {frozen}");
        for seed in [0, 7, 42] {
            let got = svc_objective(c, seed);
            assert!((got - frozen).abs() <= 1e-3, "C={c} seed={seed}: {got}");
        }
    }
}

#[test]
fn svc_traces_are_monotone() {
    let (x, _) = qp_vectors();
    let (_, traces) = classifiers::train_svc_traced(&x, &QP_Y, 2, SvcParams::with_seed(3)).unwrap();
    assert_eq!(traces.len(), 2);
    for t in &traces {
        assert!(t.converged);
        assert!(!t.primal.is_empty() && !t.dual.is_empty());
        assert!(t.primal.windows(2).all(|w| w[1] <= w[0] + 1e-12));
        assert!(t.dual.windows(2).all(|w| w[1] <= w[0] + 1e-12));
        // weak duality: -dual (maximization form) never exceeds the primal
        assert!(-t.dual.last().unwrap() <= t.final_objective() + 1e-6);
        assert!((t.final_objective() - QP_OPTIMUM_C1).abs() <= 1e-3);
    }
}

#[test]
fn svc_is_deterministic_per_seed() {
    let (x, _) = qp_vectors();
    let a = classifiers::train_svc(&x, &QP_Y, 2, SvcParams::with_seed(11)).unwrap();
    let b = classifiers::train_svc(&x, &QP_Y, 2, SvcParams::with_seed(11)).unwrap();
    assert_eq!(a, b);
    assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
}

#[test]
fn predict_scores_match_naive_loop() {
    let rows: [&[f64]; 4] = [&[1.0, 0.0, 0.5], &[0.0, 2.0, 0.0], &[0.2, 0.1, 3.0], &[1.0, 1.0, 0.0]];
    let labels = ["p", "q", "r", "p"];
    let probe = DocVector::from_pairs([(0, 0.3), (2, 0.9)]);
    for hp in [Hyperparams::Cnb(CnbParams::default()), Hyperparams::Svc(SvcParams::with_seed(1))] {
        let model = classifiers::train(&dense(&rows), &labels, 3, &hp).unwrap();
        let scores = model.predict_scores(&probe).unwrap();
        let dense_probe = [0.3, 0.0, 0.9];
        for (c, &s) in scores.iter().enumerate() {
            let mut dot = 0.0;
            for (x, w) in dense_probe.iter().zip(model.weights(c)) {
                dot += x * w;
            }
            let want = match model.kind() {
                ClassifierKind::Cnb => -dot,
                ClassifierKind::Svc => dot + model.bias()[c],
            };
            assert!((s - want).abs() < 1e-12);
        }
        let best = classifiers::argmax(&scores);
        assert_eq!(model.predict(&probe).unwrap(), model.classes()[best]);
    }
}

#[test]
fn empty_vector_scores_by_hand() {
    let rows: [&[f64]; 2] = [&[1.0, 0.0], &[0.0, 1.0]];
    let empty = DocVector::from_pairs([]);
    let cnb = classifiers::train_cnb(&dense(&rows), &["a", "b"], 2, CnbParams::default()).unwrap();
    assert_eq!(cnb.predict_scores(&empty).unwrap(), vec![0.0, 0.0]);
    // all-zero scores tie; the first class wins
    assert_eq!(cnb.predict(&empty).unwrap(), "a");
    let svc = classifiers::train_svc(&dense(&rows), &["a", "b"], 2, SvcParams::with_seed(0)).unwrap();
    assert_eq!(svc.predict_scores(&empty).unwrap(), svc.bias().to_vec());
}

#[test]
fn artifacts_round_trip() {
    let rows: [&[f64]; 3] = [&[1.0, 0.0, 0.5], &[0.0, 2.0, 0.0], &[0.2, 0.1, 3.0]];
    for hp in [Hyperparams::Cnb(CnbParams::default()), Hyperparams::Svc(SvcParams::with_seed(5))] {
        let model = classifiers::train(&dense(&rows), &["x", "y", "z"], 3, &hp).unwrap();
        let json = serde_json::to_string(&model).unwrap();
        let back: ClassifierModel = serde_json::from_str(&json).unwrap();
        assert_eq!(back, model);
        assert_eq!(back.n_features(), 3);
    }
}

/// Documents over class-private feature blocks.
fn disjoint_corpus(classes: usize, per_class: usize, width: usize, picks: &[u8]) -> (Vec<DocVector>, Vec<String>) {
    let mut vectors = Vec::new();
    let mut labels = Vec::new();
    let mut p = 0;
    for c in 0..classes {
        for _ in 0..per_class {
            let mut pairs: Vec<(usize, f64)> = (0..2)
                .map(|_| {
                    let off = picks[p % picks.len()] as usize % width;
                    p += 1;
                    (c * width + off, 1.0 + (picks[p % picks.len()] % 3) as f64)
                })
                .collect();
            pairs.sort_by_key(|e| e.0);
            pairs.dedup_by_key(|e| e.0);
            vectors.push(DocVector::from_pairs(pairs));
            labels.push(format!("c{c}"));
        }
    }
    (vectors, labels)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn disjoint_vocabularies_are_fit_exactly(
        classes in 2usize..5,
        per_class in 1usize..6,
        picks in prop::collection::vec(any::<u8>(), 1..40),
        seed in any::<u64>(),
    ) {
        let width = 4;
        let (x, y) = disjoint_corpus(classes, per_class, width, &picks);
        let n_features = classes * width;
        for hp in [Hyperparams::Cnb(CnbParams::default()), Hyperparams::Svc(SvcParams::with_seed(seed))] {
            let model = classifiers::train(&x, &y, n_features, &hp).unwrap();
            for (v, label) in x.iter().zip(&y) {
                prop_assert_eq!(model.predict(v).unwrap(), label.as_str());
            }
        }
    }

    #[test]
    fn cnb_predictions_are_scale_invariant(
        picks in prop::collection::vec(any::<u8>(), 1..40),
        probe in prop::collection::vec((0usize..12, 0.1f64..5.0), 1..6),
        scale in 0.01f64..100.0,
    ) {
        let (x, y) = disjoint_corpus(3, 3, 4, &picks);
        let model = classifiers::train_cnb(&x, &y, 12, CnbParams::default()).unwrap();
        let mut probe = probe;
        probe.sort_by_key(|e| e.0);
        probe.dedup_by_key(|e| e.0);
        let v = DocVector::from_pairs(probe);
        prop_assert_eq!(model.predict(&v).unwrap(), model.predict(&v.scaled(scale)).unwrap());
    }
}
