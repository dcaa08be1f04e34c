use std::fs;
use std::io::{self, Write};
use std::path::Path;

use ptm_catalog::classifiers::{self, CnbParams, Hyperparams, SvcParams};
use ptm_catalog::evaluation::{self, CvReport, PipelineConfig};
use ptm_catalog::features::{self, FeatureSpace, FitOptions, PreprocessOptions};
use ptm_catalog::filter::{self, Dataset, FilterOptions, FilterReport};
use ptm_catalog::mapping::{self, MatchOptions};
use ptm_catalog::registry::{self, IngestOptions, Registry, RegistryStats};
use ptm_catalog::taxonomy::{self, EvidenceDoc, EvidencePolicy, KeywordQuery, Taxonomy};
use serde::Serialize;

use crate::config::{ClassifierChoice, RunConfig};
use crate::error::CliError;

fn write_json<T: Serialize>(dir: &Path, name: &str, value: &T) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| CliError::Data(e.to_string()))?;
    text.push('\n');
    write_text(dir, name, &text)
}

fn write_text(dir: &Path, name: &str, text: &str) -> Result<(), CliError> {
    fs::create_dir_all(dir)
        .map_err(|e| CliError::Data(format!("cannot create {}: {e}", dir.display())))?;
    let path = dir.join(name);
    fs::write(&path, text).map_err(|e| CliError::Data(format!("cannot write {}: {e}", path.display())))?;
    log::info!("wrote {}", path.display());
    Ok(())
}

/// Writes to stdout; a closed pipe ends output quietly.
fn emit(text: &str) -> Result<(), CliError> {
    let mut out = io::stdout().lock();
    match out.write_all(text.as_bytes()).and_then(|()| out.flush()) {
        Err(e) if e.kind() != io::ErrorKind::BrokenPipe => Err(e.into()),
        _ => Ok(()),
    }
}

fn print_json<T: Serialize>(value: &T) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| CliError::Data(e.to_string()))?;
    text.push('\n');
    emit(&text)
}

fn load_registry(cfg: &RunConfig) -> Result<Registry, CliError> {
    match &cfg.registry {
        Some(path) => Ok(registry::ingest(path, &IngestOptions::default())?),
        None => Ok(ptm_catalog::bundled_registry()),
    }
}

fn load_evidence(cfg: &RunConfig) -> Result<Vec<EvidenceDoc>, CliError> {
    let taxonomy = match &cfg.taxonomy {
        Some(path) => taxonomy::load_taxonomy(path)?,
        None => Taxonomy::bundled(),
    };
    match &cfg.evidence {
        Some(path) => Ok(taxonomy::load_evidence(path, &taxonomy, &EvidencePolicy::default())?),
        None if cfg.taxonomy.is_none() => Ok(taxonomy::bundled_evidence()),
        None => Ok(taxonomy::parse_evidence(
            taxonomy::BUNDLED_EVIDENCE,
            &taxonomy,
            &EvidencePolicy::default(),
        )?),
    }
}

fn filtered(cfg: &RunConfig) -> Result<(Dataset, FilterReport), CliError> {
    let reg = load_registry(cfg)?;
    let options = FilterOptions {
        combine: cfg.combine,
        alpha: cfg.alpha,
        beta: cfg.beta,
    };
    Ok(filter::run_filter(&reg, &options)?)
}

fn hyperparams(cfg: &RunConfig) -> Vec<Hyperparams> {
    let cnb = Hyperparams::Cnb(CnbParams {
        smoothing: cfg.smoothing,
        normalize_weights: cfg.normalize_weights,
    });
    let svc = Hyperparams::Svc(SvcParams {
        c: cfg.c,
        epochs: cfg.epochs,
        seed: cfg.seed,
    });
    match cfg.classifier {
        ClassifierChoice::Cnb => vec![cnb],
        ClassifierChoice::Svc => vec![svc],
        ClassifierChoice::Both => vec![svc, cnb],
    }
}

#[derive(Serialize)]
struct IngestSummary<'a> {
    source: &'a str,
    ingested: usize,
    rejected: usize,
    stats: RegistryStats,
}

pub fn ingest(cfg: &RunConfig, strict: bool, delimiter: u8) -> Result<(), CliError> {
    let path = cfg
        .registry
        .as_ref()
        .ok_or_else(|| CliError::Config("ingest needs --registry or a registry key in the config".into()))?;
    let options = IngestOptions {
        delimiter,
        strict,
        ..Default::default()
    };
    let reg = registry::ingest(path, &options)?;
    let mut out = Vec::new();
    registry::write_jsonl(&reg.records, &mut out)?;
    write_text(&cfg.out_dir, "registry.jsonl", &String::from_utf8_lossy(&out))?;
    let summary = IngestSummary {
        source: &reg.source_path,
        ingested: reg.ingested_count,
        rejected: reg.rejected_count,
        stats: registry::registry_stats(&reg),
    };
    write_json(&cfg.out_dir, "ingest_report.json", &summary)?;
    print_json(&summary)
}

pub fn filter(cfg: &RunConfig) -> Result<(), CliError> {
    let (_, report) = filtered(cfg)?;
    write_json(&cfg.out_dir, "filter_report.json", &report)?;
    let table = report.to_table();
    write_text(&cfg.out_dir, "filter_report.txt", &table)?;
    emit(&table)
}

pub fn train(cfg: &RunConfig) -> Result<(), CliError> {
    let (dataset, _) = filtered(cfg)?;
    let preprocess = PreprocessOptions { stemming: cfg.stemming };
    let tokens: Vec<_> = dataset.cards().into_iter().map(|c| features::preprocess(c, &preprocess)).collect();
    let fit = FitOptions {
        min_df: cfg.min_df,
        ..Default::default()
    };
    let space = FeatureSpace::fit(&tokens, &fit)?;
    let vectors: Vec<_> = tokens.iter().map(|t| space.transform(t)).collect();
    let labels = dataset.labels();
    write_json(&cfg.out_dir, "features.json", &space)?;
    for hp in hyperparams(cfg) {
        let model = classifiers::train(&vectors, &labels, space.len(), &hp)?;
        let name = format!("model_{}.json", hp.kind().to_string().to_lowercase());
        write_json(&cfg.out_dir, &name, &model)?;
        emit(&format!(
            "{}: {} classes, {} features, {} documents -> {}\n",
            hp.kind(),
            model.classes().len(),
            model.n_features(),
            vectors.len(),
            cfg.out_dir.join(&name).display()
        ))?;
    }
    Ok(())
}

pub fn evaluate(cfg: &RunConfig) -> Result<(), CliError> {
    let (dataset, _) = filtered(cfg)?;
    let mut reports: Vec<CvReport> = Vec::new();
    for hp in hyperparams(cfg) {
        let mut pipeline = PipelineConfig::new(hp);
        pipeline.preprocess = PreprocessOptions { stemming: cfg.stemming };
        pipeline.fit.min_df = cfg.min_df;
        pipeline.averaging = cfg.averaging;
        let report = evaluation::evaluate_cv(&dataset, &pipeline, cfg.k, cfg.seed)?;
        let name = format!("cv_report_{}.json", report.classifier.to_string().to_lowercase());
        write_json(&cfg.out_dir, &name, &report)?;
        reports.push(report);
    }
    let refs: Vec<&CvReport> = reports.iter().collect();
    let table = evaluation::render_table(&refs);
    write_text(&cfg.out_dir, "cv_table.txt", &table)?;
    emit(&table)
}

pub fn map(cfg: &RunConfig, ptm: &str, task: &str) -> Result<(), CliError> {
    let reg = load_registry(cfg)?;
    let options = MatchOptions {
        threshold: cfg.threshold,
        strict: cfg.strict,
    };
    let mapping = mapping::map_task(ptm, task, &reg, &options)?;
    print_json(&mapping)
}

pub fn explain(cfg: &RunConfig, names: &[String], json: bool) -> Result<(), CliError> {
    let reg = load_registry(cfg)?;
    let evidence = load_evidence(cfg)?;
    let options = MatchOptions {
        threshold: cfg.threshold,
        strict: cfg.strict,
    };
    let rows = names
        .iter()
        .map(|n| mapping::explain_mapping(n, &reg, &evidence, &options))
        .collect::<Result<Vec<_>, _>>()?;
    if json {
        return print_json(&rows);
    }
    let text: String = rows.iter().map(|r| format!("{r}\n")).collect();
    emit(&text)
}

pub fn screen(cfg: &RunConfig) -> Result<(), CliError> {
    let evidence = load_evidence(cfg)?;
    let text: String = taxonomy::screen(&evidence, &KeywordQuery::literature_default())
        .into_iter()
        .filter(|d| d.included)
        .map(|d| format!("{}\n", d.doc_id))
        .collect();
    emit(&text)
}
