#![allow(dead_code)]

use std::collections::BTreeMap;

use ptm_catalog::filter::{Dataset, LabeledRecord};
use ptm_catalog::registry::{PtmRecord, Registry};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Word `j` of class `c`'s private vocabulary.
pub fn class_word(c: usize, j: usize) -> String {
    format!("k{c}t{j}")
}

/// `per_class` cards for each of `classes` tags. Each card draws
/// `class_words` tokens from its class vocabulary and `noise_words` from a
/// shared pool; `confusion` is the chance a class token is taken from a
/// random other class instead.
pub fn synthetic_corpus(
    classes: usize,
    per_class: usize,
    class_words: usize,
    noise_words: usize,
    confusion: f64,
    seed: u64,
) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut records = Vec::new();
    for i in 0..per_class {
        for c in 0..classes {
            let mut words = Vec::new();
            for _ in 0..class_words {
                let owner = if confusion > 0.0 && rng.gen::<f64>() < confusion {
                    rng.gen_range(0..classes)
                } else {
                    c
                };
                words.push(class_word(owner, rng.gen_range(0..12)));
            }
            for _ in 0..noise_words {
                words.push(format!("shared{}", rng.gen_range(0..20)));
            }
            records.push(LabeledRecord {
                model_id: format!("m{c}-{i}"),
                card_data: format!("# Model card\n\n{}\n", words.join(" ")),
                pipeline_tag: format!("tag-{c}"),
                likes: 0,
                downloads: 0,
            });
        }
    }
    Dataset::new(records)
}

/// Checks partition, balance and stratification of folds by direct counting.
pub fn check_fold_laws(labels: &[String], folds: &[Vec<usize>], k: usize) -> Result<(), String> {
    if folds.len() != k {
        return Err(format!("expected {k} folds, got {}", folds.len()));
    }
    let mut class_sizes: BTreeMap<&str, usize> = BTreeMap::new();
    for l in labels {
        *class_sizes.entry(l).or_default() += 1;
    }
    let mut seen = vec![0usize; labels.len()];
    for f in folds {
        for &i in f {
            seen[i] += 1;
        }
    }
    for (i, l) in labels.iter().enumerate() {
        let want = usize::from(class_sizes[l.as_str()] >= k);
        if seen[i] != want {
            return Err(format!("sample {i} ({l}) appears {} times", seen[i]));
        }
    }
    let sizes: Vec<usize> = folds.iter().map(Vec::len).collect();
    if sizes.iter().max().unwrap() - sizes.iter().min().unwrap() > 1 {
        return Err(format!("fold sizes {sizes:?}"));
    }
    for (class, &n) in &class_sizes {
        if n < k {
            continue;
        }
        let counts: Vec<usize> = folds
            .iter()
            .map(|f| f.iter().filter(|&&i| labels[i] == *class).count())
            .collect();
        if counts.iter().max().unwrap() - counts.iter().min().unwrap() > 1 {
            return Err(format!("class {class} counts {counts:?}"));
        }
    }
    Ok(())
}

/// Weighted precision, recall and F1 from an explicit confusion matrix.
pub fn confusion_weighted(y_true: &[String], y_pred: &[String]) -> (f64, f64, f64) {
    let mut labels: Vec<&String> = y_true.iter().chain(y_pred).collect();
    labels.sort();
    labels.dedup();
    let n = labels.len();
    let pos = |l: &String| labels.iter().position(|x| *x == l).unwrap();
    let mut m = vec![vec![0usize; n]; n];
    for (t, p) in y_true.iter().zip(y_pred) {
        m[pos(t)][pos(p)] += 1;
    }
    let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
    let total = y_true.len() as f64;
    let (mut wp, mut wr, mut wf) = (0.0, 0.0, 0.0);
    #[allow(clippy::needless_range_loop)]
    for c in 0..n {
        let tp = m[c][c];
        let row: usize = m[c].iter().sum();
        let col: usize = (0..n).map(|r| m[r][c]).sum();
        let p = ratio(tp, col);
        let r = ratio(tp, row);
        let f = if p + r == 0.0 { 0.0 } else { 2.0 * p * r / (p + r) };
        let w = row as f64 / total;
        wp += w * p;
        wr += w * r;
        wf += w * f;
    }
    (wp, wr, wf)
}

pub fn rec(id: &str, card: bool, tag: Option<&str>, downloads: u64) -> PtmRecord {
    PtmRecord::new(id, card.then_some("a model card"), tag, 0, downloads).unwrap()
}

/// Twenty records with hand-assigned tags and downloads.
pub fn twenty_record_fixture() -> Registry {
    let rows: [(&str, bool, Option<&str>, u64); 20] = [
        ("r01", true, Some("fill-mask"), 500),
        ("r02", true, Some("fill-mask"), 10),
        ("r03", true, Some("fill-mask"), 0),
        ("r04", true, Some("fill-mask"), 40),
        ("r05", true, Some("fill-mask"), 90),
        ("r06", true, Some("text-classification"), 5),
        ("r07", true, Some("text-classification"), 300),
        ("r08", true, Some("text-classification"), 20),
        ("r09", true, Some("summarization"), 2),
        ("r10", true, Some("summarization"), 1_000),
        ("r11", true, Some("translation"), 3),
        ("r12", true, Some("token-classification"), 7),
        ("r13", true, Some("token-classification"), 0),
        ("r14", false, Some("fill-mask"), 9_999),
        ("r15", true, None, 50),
        ("r16", false, None, 0),
        ("r17", true, Some("text-generation"), 60),
        ("r18", true, Some("text-generation"), 61),
        ("r19", false, Some("image-classification"), 10),
        ("r20", true, Some("text-classification"), 64),
    ];
    Registry::from_records(
        rows.iter().map(|(id, c, t, d)| rec(id, *c, *t, *d)).collect(),
        "fixture",
    )
}
