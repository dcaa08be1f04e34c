//! Registry metadata export ingestion.
//!
//! The export carries one row per model with the columns
//! `model_id,card_data,pipeline_tag,likes,downloads`. CSV (RFC-4180 quoting)
//! is the canonical format; JSON-lines with the same keys is accepted too.

use std::collections::{BTreeSet, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Column names of the export, in canonical order.
pub const COLUMNS: [&str; 5] = ["model_id", "card_data", "pipeline_tag", "likes", "downloads"];

#[derive(Debug, Error)]
pub enum RegistryError {
    #[error("registry file not found: {0}")]
    FileNotFound(PathBuf),
    #[error("header is missing required columns: {missing:?}")]
    HeaderMismatch { missing: Vec<String> },
    #[error("malformed row {row}: {reason}")]
    MalformedRow { row: usize, reason: String },
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = RegistryError> = std::result::Result<T, E>;

/// One registry row.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PtmRecord {
    pub model_id: String,
    pub card_data: Option<String>,
    pub pipeline_tag: Option<String>,
    pub likes: u64,
    pub downloads: u64,
}

impl PtmRecord {
    /// Builds a record, applying the empty-to-absent normalization.
    ///
    /// Returns `None` when `model_id` is blank.
    pub fn new(
        model_id: &str,
        card_data: Option<&str>,
        pipeline_tag: Option<&str>,
        likes: u64,
        downloads: u64,
    ) -> Option<Self> {
        let model_id = model_id.trim();
        if model_id.is_empty() {
            return None;
        }
        Some(Self {
            model_id: model_id.to_string(),
            card_data: card_data.and_then(non_blank).map(str::to_string),
            pipeline_tag: pipeline_tag.and_then(non_blank).map(|t| t.trim().to_string()),
            likes,
            downloads,
        })
    }

    pub fn has_card(&self) -> bool {
        self.card_data.is_some()
    }

    pub fn has_tag(&self) -> bool {
        self.pipeline_tag.is_some()
    }
}

fn non_blank(s: &str) -> Option<&str> {
    if s.trim().is_empty() {
        None
    } else {
        Some(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExportFormat {
    /// Pick by extension: `.jsonl`/`.ndjson` are JSON-lines, anything else CSV.
    #[default]
    Auto,
    Csv,
    Jsonl,
}

#[derive(Debug, Clone)]
pub struct IngestOptions {
    pub delimiter: u8,
    /// Fail on the first malformed row instead of skipping and counting it.
    pub strict: bool,
    pub format: ExportFormat,
}

impl Default for IngestOptions {
    fn default() -> Self {
        Self {
            delimiter: b',',
            strict: false,
            format: ExportFormat::Auto,
        }
    }
}

/// An ingested export. Immutable once built.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Registry {
    pub records: Vec<PtmRecord>,
    pub source_path: String,
    pub ingested_count: usize,
    pub rejected_count: usize,
}

impl Registry {
    pub fn from_records(records: Vec<PtmRecord>, source_path: impl Into<String>) -> Self {
        let mut seen = HashSet::new();
        let mut kept = Vec::with_capacity(records.len());
        let mut rejected = 0;
        for record in records {
            if seen.insert(record.model_id.clone()) {
                kept.push(record);
            } else {
                rejected += 1;
            }
        }
        Self {
            ingested_count: kept.len(),
            records: kept,
            source_path: source_path.into(),
            rejected_count: rejected,
        }
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct RegistryStats {
    pub records: usize,
    pub distinct_tags: usize,
    pub missing_card: usize,
    pub missing_tag: usize,
}

pub fn registry_stats(registry: &Registry) -> RegistryStats {
    let tags: BTreeSet<&str> = registry
        .records
        .iter()
        .filter_map(|r| r.pipeline_tag.as_deref())
        .collect();
    RegistryStats {
        records: registry.records.len(),
        distinct_tags: tags.len(),
        missing_card: registry.records.iter().filter(|r| !r.has_card()).count(),
        missing_tag: registry.records.iter().filter(|r| !r.has_tag()).count(),
    }
}

/// Reads a registry export. See [`IngestOptions`] for the knobs.
pub fn ingest(path: impl AsRef<Path>, options: &IngestOptions) -> Result<Registry> {
    let path = path.as_ref();
    if !path.is_file() {
        return Err(RegistryError::FileNotFound(path.to_path_buf()));
    }
    let jsonl = match options.format {
        ExportFormat::Jsonl => true,
        ExportFormat::Csv => false,
        ExportFormat::Auto => matches!(
            path.extension().and_then(|e| e.to_str()),
            Some("jsonl") | Some("ndjson")
        ),
    };
    if jsonl {
        ingest_jsonl(path, options)
    } else {
        ingest_csv(path, options)
    }
}

/// Accumulates rows, enforcing uniqueness and the reject-or-fail policy.
struct Builder {
    strict: bool,
    seen: HashSet<String>,
    records: Vec<PtmRecord>,
    rejected: usize,
}

impl Builder {
    fn new(strict: bool) -> Self {
        Self {
            strict,
            seen: HashSet::new(),
            records: Vec::new(),
            rejected: 0,
        }
    }

    fn reject(&mut self, row: usize, reason: String) -> Result<()> {
        if self.strict {
            return Err(RegistryError::MalformedRow { row, reason });
        }
        log::debug!("skipping row {row}: {reason}");
        self.rejected += 1;
        Ok(())
    }

    fn push(&mut self, row: usize, parsed: std::result::Result<PtmRecord, String>) -> Result<()> {
        match parsed {
            Ok(record) => {
                if self.seen.insert(record.model_id.clone()) {
                    self.records.push(record);
                } else {
                    // first occurrence wins, in both modes
                    log::debug!("duplicate model_id {:?} at row {row}", record.model_id);
                    self.rejected += 1;
                }
                Ok(())
            }
            Err(reason) => self.reject(row, reason),
        }
    }

    fn finish(self, path: &Path) -> Registry {
        Registry {
            ingested_count: self.records.len(),
            records: self.records,
            source_path: path.display().to_string(),
            rejected_count: self.rejected,
        }
    }
}

fn is_null_token(s: &str) -> bool {
    let t = s.trim();
    t.is_empty() || t.eq_ignore_ascii_case("null") || t == "\\N"
}

/// Parses a count column. `Ok(None)` means the value is NULL.
fn parse_count(raw: &str, column: &str) -> std::result::Result<Option<u64>, String> {
    if is_null_token(raw) {
        return Ok(None);
    }
    raw.trim()
        .parse::<u64>()
        .map(Some)
        .map_err(|_| format!("{column} is not a non-negative integer: {raw:?}"))
}

fn resolve_count(
    value: Option<u64>,
    column: &str,
    strict: bool,
) -> std::result::Result<u64, String> {
    match value {
        Some(v) => Ok(v),
        None if strict => Err(format!("{column} is NULL")),
        None => Ok(0),
    }
}

fn ingest_csv(path: &Path, options: &IngestOptions) -> Result<Registry> {
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(options.delimiter)
        .flexible(true)
        .has_headers(true)
        .from_path(path)?;

    let headers = reader.headers()?.clone();
    let mut positions = [0usize; 5];
    let mut missing = Vec::new();
    for (slot, column) in COLUMNS.iter().enumerate() {
        match headers
            .iter()
            .position(|h| h.trim().trim_start_matches('\u{feff}').eq_ignore_ascii_case(column))
        {
            Some(p) => positions[slot] = p,
            None => missing.push(column.to_string()),
        }
    }
    if !missing.is_empty() {
        return Err(RegistryError::HeaderMismatch { missing });
    }

    let mut builder = Builder::new(options.strict);
    for (i, row) in reader.records().enumerate() {
        let row_no = i + 1;
        let row = match row {
            Ok(row) => row,
            Err(e) if e.is_io_error() => return Err(e.into()),
            Err(e) => {
                builder.reject(row_no, e.to_string())?;
                continue;
            }
        };
        if row.len() != headers.len() {
            builder.reject(
                row_no,
                format!("expected {} fields, found {}", headers.len(), row.len()),
            )?;
            continue;
        }
        let field = |slot: usize| row.get(positions[slot]).unwrap_or("");
        let parsed = (|| {
            let likes = resolve_count(parse_count(field(3), "likes")?, "likes", options.strict)?;
            let downloads = resolve_count(
                parse_count(field(4), "downloads")?,
                "downloads",
                options.strict,
            )?;
            PtmRecord::new(field(0), Some(field(1)), Some(field(2)), likes, downloads)
                .ok_or_else(|| "model_id is empty".to_string())
        })();
        builder.push(row_no, parsed)?;
    }
    Ok(builder.finish(path))
}

/// JSON-lines row; counts are kept loose so that NULLs and bad values are
/// reported as rejections rather than hard parse failures.
#[derive(Deserialize)]
struct JsonRow {
    model_id: Option<String>,
    card_data: Option<String>,
    pipeline_tag: Option<String>,
    likes: Option<serde_json::Value>,
    downloads: Option<serde_json::Value>,
}

fn json_count(value: Option<&serde_json::Value>, column: &str) -> std::result::Result<Option<u64>, String> {
    match value {
        None | Some(serde_json::Value::Null) => Ok(None),
        Some(serde_json::Value::Number(n)) => n
            .as_u64()
            .map(Some)
            .ok_or_else(|| format!("{column} is not a non-negative integer: {n}")),
        Some(serde_json::Value::String(s)) => parse_count(s, column),
        Some(other) => Err(format!("{column} has unexpected type: {other}")),
    }
}

fn ingest_jsonl(path: &Path, options: &IngestOptions) -> Result<Registry> {
    let reader = BufReader::new(File::open(path)?);
    let mut builder = Builder::new(options.strict);
    let mut row_no = 0;
    for line in reader.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        row_no += 1;
        let parsed = serde_json::from_str::<JsonRow>(&line)
            .map_err(|e| e.to_string())
            .and_then(|row| {
                let likes = resolve_count(json_count(row.likes.as_ref(), "likes")?, "likes", options.strict)?;
                let downloads = resolve_count(
                    json_count(row.downloads.as_ref(), "downloads")?,
                    "downloads",
                    options.strict,
                )?;
                PtmRecord::new(
                    row.model_id.as_deref().unwrap_or(""),
                    row.card_data.as_deref(),
                    row.pipeline_tag.as_deref(),
                    likes,
                    downloads,
                )
                .ok_or_else(|| "model_id is empty".to_string())
            });
        builder.push(row_no, parsed)?;
    }
    Ok(builder.finish(path))
}

/// Writes records in the canonical CSV export format.
pub fn write_csv<W: Write>(records: &[PtmRecord], out: W) -> Result<()> {
    let mut writer = csv::WriterBuilder::new()
        .quote_style(csv::QuoteStyle::Necessary)
        .from_writer(out);
    writer.write_record(COLUMNS)?;
    for r in records {
        let likes = r.likes.to_string();
        let downloads = r.downloads.to_string();
        writer.write_record([
            r.model_id.as_str(),
            r.card_data.as_deref().unwrap_or(""),
            r.pipeline_tag.as_deref().unwrap_or(""),
            likes.as_str(),
            downloads.as_str(),
        ])?;
    }
    writer.flush()?;
    Ok(())
}

/// Writes records as JSON-lines, absent fields as `null`.
pub fn write_jsonl<W: Write>(records: &[PtmRecord], out: W) -> Result<()> {
    let mut out = BufWriter::new(out);
    for r in records {
        serde_json::to_writer(&mut out, r)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}
