//! Categorization of pre-trained models (PTMs) from registry metadata.
//!
//! The crate covers two workflows:
//!
//! * predicting a model's pipeline tag from its model card: [`registry`]
//!   ingestion, [`filter`] dataset shaping, [`features`] TF-IDF vectors,
//!   [`classifiers`] (Complement Naive Bayes and linear SVC) and
//!   [`evaluation`] by stratified cross-validation;
//! * mapping PTM names to software-engineering macro tasks: [`mapping`]
//!   matches names against the registry by edit-distance similarity, and
//!   [`taxonomy`] holds the macro tasks and the literature evidence.

pub mod classifiers;
pub mod evaluation;
pub mod features;
pub mod filter;
pub mod mapping;
pub mod registry;
pub mod taxonomy;

pub use classifiers::{ClassifierKind, ClassifierModel, CnbParams, Hyperparams, SvcParams};
pub use evaluation::{compute_metrics, evaluate_cv, make_folds, CvReport, PipelineConfig};
pub use features::{preprocess, DocVector, FeatureSpace, TokenStream};
pub use filter::{run_filter, Dataset, FilterReport, FilterThresholds};
pub use mapping::{explain_mapping, find_similar, map_task, MatchOptions};
pub use registry::{ingest, IngestOptions, PtmRecord, Registry};
pub use taxonomy::{EvidenceDoc, KeywordQuery, Taxonomy};

/// The bundled example registry export (CSV).
pub static BUNDLED_REGISTRY_CSV: &str = include_str!("../data/registry_fixture.csv");

/// Parses [`BUNDLED_REGISTRY_CSV`].
pub fn bundled_registry() -> Registry {
    let mut reader = csv::Reader::from_reader(BUNDLED_REGISTRY_CSV.as_bytes());
    let records = reader
        .records()
        .map(|row| {
            let row = row.expect("bundled registry is valid CSV");
            PtmRecord::new(
                &row[0],
                Some(&row[1]),
                Some(&row[2]),
                row[3].parse().expect("likes"),
                row[4].parse().expect("downloads"),
            )
            .expect("model id")
        })
        .collect();
    Registry::from_records(records, "bundled:registry_fixture.csv")
}
