use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::bootstrap::MetricResult;
use super::metrics::{Metric, Scores};

pub const CSV_COLUMNS: [&str; 10] = [
    "Model", "Traits", "Metric", "Mean", "Std", "2.5%", "25%", "50%", "75%", "97.5%",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub model: String,
    pub traits: usize,
    pub result: MetricResult,
}

/// Per-cell bookkeeping that does not fit the table columns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellSummary {
    pub model: String,
    pub traits: usize,
    pub n_predictions: usize,
    pub n_participants: usize,
    pub parse_failures: usize,
    /// Point estimates with failures counted as wrong.
    pub failures_as_wrong: Scores,
    /// Point estimates with failures dropped; absent when every prediction failed.
    pub failures_excluded: Option<Scores>,
    /// Per-question averaged variant, when enabled.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub per_question: Option<Scores>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellFailure {
    pub model: String,
    pub traits: usize,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub schema_version: u32,
    pub config_hash: String,
    pub rows: Vec<ReportRow>,
    #[serde(default)]
    pub cells: Vec<CellSummary>,
    #[serde(default)]
    pub failures: Vec<CellFailure>,
}

/// One parsed CSV line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CsvRow {
    #[serde(rename = "Model")]
    pub model: String,
    #[serde(rename = "Traits")]
    pub traits: usize,
    #[serde(rename = "Metric")]
    pub metric: String,
    #[serde(rename = "Mean")]
    pub mean: f64,
    #[serde(rename = "Std")]
    pub std: f64,
    #[serde(rename = "2.5%")]
    pub p2_5: f64,
    #[serde(rename = "25%")]
    pub p25: f64,
    #[serde(rename = "50%")]
    pub p50: f64,
    #[serde(rename = "75%")]
    pub p75: f64,
    #[serde(rename = "97.5%")]
    pub p97_5: f64,
}

impl CsvRow {
    pub fn values(&self) -> [f64; 7] {
        [
            self.mean, self.std, self.p2_5, self.p25, self.p50, self.p75, self.p97_5,
        ]
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ReportError {
    #[error("report has no rows")]
    Empty,
    #[error("writing {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("csv header is {found:?}, expected {CSV_COLUMNS:?}")]
    Header { found: Vec<String> },
    #[error("missing '# config_hash:' line")]
    MissingHash,
}

impl EvalReport {
    pub fn new(config_hash: impl Into<String>) -> Self {
        Self {
            schema_version: crate::SCHEMA_VERSION,
            config_hash: config_hash.into(),
            rows: vec![],
            cells: vec![],
            failures: vec![],
        }
    }

    /// Rows ordered by model (first appearance), trait count, then metric.
    pub fn sort_rows(&mut self) {
        let mut models: Vec<String> = Vec::new();
        for r in &self.rows {
            if !models.contains(&r.model) {
                models.push(r.model.clone());
            }
        }
        let pos = |m: &str| models.iter().position(|x| x == m).unwrap_or(usize::MAX);
        self.rows.sort_by(|a, b| {
            pos(&a.model)
                .cmp(&pos(&b.model))
                .then(a.traits.cmp(&b.traits))
                .then(a.result.metric.cmp(&b.result.metric))
        });
    }

    pub fn row(&self, model: &str, traits: usize, metric: Metric) -> Option<&MetricResult> {
        self.rows
            .iter()
            .find(|r| r.model == model && r.traits == traits && r.result.metric == metric)
            .map(|r| &r.result)
    }

    pub fn to_csv(&self) -> Result<String, ReportError> {
        if self.rows.is_empty() {
            return Err(ReportError::Empty);
        }
        let mut out = format!("# config_hash: {}\n", self.config_hash).into_bytes();
        {
            let mut w = csv::WriterBuilder::new()
                .terminator(csv::Terminator::Any(b'\n'))
                .from_writer(&mut out);
            w.write_record(CSV_COLUMNS)?;
            for r in &self.rows {
                let m = &r.result;
                let mut rec = vec![
                    r.model.clone(),
                    r.traits.to_string(),
                    m.metric.label().to_string(),
                ];
                rec.extend(
                    [m.mean, m.std]
                        .iter()
                        .chain(&m.percentiles)
                        .map(|v| format!("{v:.3}")),
                );
                w.write_record(&rec)?;
            }
            w.flush().map_err(|source| ReportError::Io {
                path: "<buffer>".into(),
                source,
            })?;
        }
        Ok(String::from_utf8(out).expect("csv output is utf-8"))
    }

    pub fn to_json(&self) -> Result<String, ReportError> {
        if self.rows.is_empty() {
            return Err(ReportError::Empty);
        }
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }

    pub fn from_json(text: &str) -> Result<Self, ReportError> {
        Ok(serde_json::from_str(text)?)
    }

    /// Write `<stem>.csv` and `<stem>.json`.
    pub fn emit(&self, dir: &Path, stem: &str) -> Result<(), ReportError> {
        for (ext, body) in [("csv", self.to_csv()?), ("json", self.to_json()?)] {
            let path = dir.join(format!("{stem}.{ext}"));
            let io = |source| ReportError::Io {
                path: path.display().to_string(),
                source,
            };
            let mut f = std::fs::File::create(&path).map_err(io)?;
            f.write_all(body.as_bytes()).map_err(io)?;
        }
        Ok(())
    }
}

/// Parse emitted CSV back into rows and the config hash.
pub fn parse_csv(text: &str) -> Result<(String, Vec<CsvRow>), ReportError> {
    let first = text.lines().next().unwrap_or_default();
    let hash = first
        .strip_prefix("# config_hash: ")
        .ok_or(ReportError::MissingHash)?
        .trim()
        .to_string();
    let body = &text[first.len()..];
    let mut r = csv::ReaderBuilder::new().from_reader(body.trim_start().as_bytes());
    let header: Vec<String> = r.headers()?.iter().map(String::from).collect();
    if header != CSV_COLUMNS {
        return Err(ReportError::Header { found: header });
    }
    let rows = r.deserialize().collect::<Result<Vec<CsvRow>, _>>()?;
    Ok((hash, rows))
}
