//! Suite execution and report rendering.

use std::collections::{BTreeSet, HashMap, HashSet};
use std::io::Write;
use std::path::Path;

use serde::Serialize;
use thiserror::Error;

use crate::config::{EmbeddingFormat, Expected, Experiment, PreparedTest};
use crate::embedding::{self, EmbeddingTable, LoadOptions};
use crate::lexicon::{resolve, DropReason};
use crate::parallel;
use crate::weat::{run_weat, Comparator, Method, PermutationAxis, StdConvention, WeatResult};

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("cannot write {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("csv output failed: {0}")]
    Csv(#[from] csv::Error),
    #[error("json output failed: {0}")]
    Json(#[from] serde_json::Error),
    #[error("report has no computed rows")]
    NoComputedRows,
}

impl ReportError {
    pub fn exit_code(&self) -> i32 {
        match self {
            ReportError::NoComputedRows => 2,
            _ => 1,
        }
    }
}

pub const SKIPPED_UNAVAILABLE: &str = "skipped: embedding unavailable";

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CellStatus {
    Computed,
    Skipped { reason: String },
    Failed { error: String },
}

impl CellStatus {
    pub fn label(&self) -> String {
        match self {
            CellStatus::Computed => "ok".to_string(),
            CellStatus::Skipped { reason } => reason.clone(),
            CellStatus::Failed { error } => format!("error: {error}"),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SuiteRow {
    pub embedding: String,
    pub test: String,
    pub status: CellStatus,
    pub d: Option<f64>,
    pub p: Option<f64>,
    pub m: Option<usize>,
    pub n: Option<usize>,
    pub method: Option<Method>,
    pub seed: u64,
    pub comparator: Comparator,
    pub std_convention: StdConvention,
    pub axis: PermutationAxis,
    pub audit_summary: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub expected: Option<Expected>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub matches_expected: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub result: Option<WeatResult>,
}

impl SuiteRow {
    pub fn is_computed(&self) -> bool {
        self.status == CellStatus::Computed
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SuiteReport {
    pub name: Option<String>,
    pub rows: Vec<SuiteRow>,
}

impl SuiteReport {
    pub fn computed(&self) -> impl Iterator<Item = &SuiteRow> {
        self.rows.iter().filter(|r| r.is_computed())
    }
}

fn audit_summary(result: &WeatResult) -> String {
    if result.audit.is_empty() {
        return "none".to_string();
    }
    result
        .audit
        .iter()
        .map(|e| {
            let why = match e.reason {
                DropReason::Oov => "oov",
                DropReason::DroppedForBalance => "balance",
            };
            format!("{}:{}:{why}", e.set, e.token)
        })
        .collect::<Vec<_>>()
        .join(" ")
}

enum Loaded {
    Table(EmbeddingTable),
    Missing,
    Failed(String),
}

fn needed_tokens(exp: &Experiment, embedding: &str) -> HashSet<String> {
    exp.tests
        .iter()
        .filter(|t| t.embeddings.iter().any(|e| e == embedding))
        .flat_map(|t| {
            t.spec
                .sets()
                .into_iter()
                .flat_map(|(_, s)| s.tokens().to_vec())
                .collect::<Vec<_>>()
        })
        .collect()
}

fn load_embeddings(exp: &Experiment) -> HashMap<String, Loaded> {
    let entries = &exp.config.embeddings;
    let loaded = parallel::map(entries, |entry| {
        let path = exp.embedding_path(entry);
        if !path.is_file() {
            return Loaded::Missing;
        }
        let options = LoadOptions {
            lowercase: entry.lowercase,
            restrict_to: Some(needed_tokens(exp, &entry.name)),
            ..Default::default()
        };
        let result = match entry.format {
            EmbeddingFormat::Glove => embedding::load_glove_text(&path, &options),
            EmbeddingFormat::Word2vec => embedding::load_word2vec_text(&path, &options),
        };
        match result {
            Ok(t) => Loaded::Table(t),
            Err(e) => Loaded::Failed(e.to_string()),
        }
    });
    entries.iter().map(|e| e.name.clone()).zip(loaded).collect()
}

fn run_cell(exp: &Experiment, test: &PreparedTest, embedding: &str, loaded: &Loaded) -> SuiteRow {
    let plan = exp.plan_for(test);
    let convention = exp.config.std_convention;
    let expected = test.expected.get(embedding).copied();
    let mut row = SuiteRow {
        embedding: embedding.to_string(),
        test: test.spec.test_name.clone(),
        status: CellStatus::Computed,
        d: None,
        p: None,
        m: None,
        n: None,
        method: None,
        seed: test.seed,
        comparator: plan.comparator,
        std_convention: convention,
        axis: plan.axis,
        audit_summary: String::new(),
        expected,
        matches_expected: None,
        result: None,
    };
    let table = match loaded {
        Loaded::Table(t) => t,
        Loaded::Missing => {
            row.status = CellStatus::Skipped {
                reason: SKIPPED_UNAVAILABLE.to_string(),
            };
            return row;
        }
        Loaded::Failed(e) => {
            row.status = CellStatus::Failed { error: e.clone() };
            return row;
        }
    };
    let outcome = resolve(&test.spec, table, test.seed)
        .map_err(|e| e.to_string())
        .and_then(|r| run_weat(&r, &plan, convention).map_err(|e| e.to_string()));
    match outcome {
        Ok(result) => {
            row.d = Some(result.effect_size_d);
            row.p = Some(result.p_value);
            row.m = Some(result.m);
            row.n = Some(result.n);
            row.method = Some(result.method);
            row.audit_summary = audit_summary(&result);
            row.matches_expected = expected.map(|e| e.matches(result.effect_size_d, result.p_value));
            row.result = Some(result);
        }
        Err(e) => row.status = CellStatus::Failed { error: e },
    }
    row
}

/// Runs every (test × embedding) cell. Rows follow config order: tests in
/// declaration order, and for each test its embeddings in declaration order.
pub fn run_suite(exp: &Experiment) -> SuiteReport {
    let loaded = load_embeddings(exp);
    let declared: Vec<&str> = exp.config.embeddings.iter().map(|e| e.name.as_str()).collect();
    let cells: Vec<(&PreparedTest, &str)> = exp
        .tests
        .iter()
        .flat_map(|t| {
            declared
                .iter()
                .filter(|e| t.embeddings.iter().any(|x| x == *e))
                .map(move |e| (t, *e))
        })
        .collect();
    let rows = parallel::map(&cells, |(test, emb)| run_cell(exp, test, emb, &loaded[*emb]));
    SuiteReport {
        name: exp.config.name.clone(),
        rows,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ReportFormat {
    #[default]
    Csv,
    Json,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Rounding {
    /// Effect size truncated toward zero at 2 decimals; p rounded up at 3
    /// decimals, or `<10^-2` below 0.01.
    #[default]
    Paper,
    Full,
}

// The nearest integer, when `x` is within rounding noise of one.
fn snapped(x: f64) -> Option<f64> {
    let r = x.round();
    ((x - r).abs() < 1e-9 * r.abs().max(1.0)).then_some(r)
}

pub fn format_d_paper(d: f64) -> String {
    let scaled = d * 100.0;
    let hundredths = snapped(scaled).unwrap_or_else(|| scaled.trunc());
    let v = hundredths / 100.0;
    let v = if v == 0.0 { 0.0 } else { v };
    format!("{v:.2}")
}

pub fn format_p_paper(p: f64) -> String {
    if p < 0.01 {
        return "<10^-2".to_string();
    }
    let scaled = p * 1000.0;
    let thousandths = snapped(scaled).unwrap_or_else(|| scaled.ceil());
    format!("{:.3}", thousandths / 1000.0)
}

fn format_value(v: Option<f64>, rounding: Rounding, paper: fn(f64) -> String) -> String {
    match (v, rounding) {
        (None, _) => String::new(),
        (Some(v), Rounding::Paper) => paper(v),
        (Some(v), Rounding::Full) => v.to_string(),
    }
}

pub const CSV_COLUMNS: [&str; 12] = [
    "embedding",
    "test",
    "d",
    "p",
    "m",
    "n",
    "method",
    "seed",
    "comparator",
    "std_convention",
    "axis",
    "status",
];

#[derive(Serialize)]
struct JsonRow<'a> {
    #[serde(flatten)]
    row: &'a SuiteRow,
    #[serde(skip_serializing_if = "Option::is_none")]
    d_display: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    p_display: Option<String>,
}

#[derive(Serialize)]
struct JsonReport<'a> {
    name: &'a Option<String>,
    rounding: &'static str,
    rows: Vec<JsonRow<'a>>,
}

pub fn write_report<W: Write>(
    report: &SuiteReport,
    format: ReportFormat,
    rounding: Rounding,
    out: W,
) -> Result<(), ReportError> {
    match format {
        ReportFormat::Csv => {
            let mut w = csv::Writer::from_writer(out);
            w.write_record(CSV_COLUMNS)?;
            for r in &report.rows {
                w.write_record([
                    r.embedding.clone(),
                    r.test.clone(),
                    format_value(r.d, rounding, format_d_paper),
                    format_value(r.p, rounding, format_p_paper),
                    r.m.map(|m| m.to_string()).unwrap_or_default(),
                    r.n.map(|n| n.to_string()).unwrap_or_default(),
                    r.method.map(|m| m.to_string()).unwrap_or_default(),
                    r.seed.to_string(),
                    r.comparator.to_string(),
                    r.std_convention.to_string(),
                    r.axis.to_string(),
                    r.status.label(),
                ])?;
            }
            w.flush().map_err(|source| ReportError::Io {
                path: "<csv>".into(),
                source,
            })?;
        }
        ReportFormat::Json => {
            let paper = rounding == Rounding::Paper;
            let doc = JsonReport {
                name: &report.name,
                rounding: if paper { "paper" } else { "full" },
                rows: report
                    .rows
                    .iter()
                    .map(|row| JsonRow {
                        row,
                        d_display: row.d.filter(|_| paper).map(format_d_paper),
                        p_display: row.p.filter(|_| paper).map(format_p_paper),
                    })
                    .collect(),
            };
            let mut out = out;
            serde_json::to_writer_pretty(&mut out, &doc)?;
            writeln!(out).map_err(|source| ReportError::Io {
                path: "<json>".into(),
                source,
            })?;
        }
    }
    Ok(())
}

fn create(path: &Path) -> Result<std::io::BufWriter<std::fs::File>, ReportError> {
    std::fs::File::create(path)
        .map(std::io::BufWriter::new)
        .map_err(|source| ReportError::Io {
            path: path.display().to_string(),
            source,
        })
}

pub fn emit_report(
    report: &SuiteReport,
    format: ReportFormat,
    rounding: Rounding,
    path: impl AsRef<Path>,
) -> Result<(), ReportError> {
    write_report(report, format, rounding, create(path.as_ref())?)
}

/// |d| at or above this is conventionally a large effect.
pub const LARGE_EFFECT: f64 = 0.80;
pub const SIGNIFICANCE: f64 = 0.05;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PlotPoint {
    pub embedding: String,
    pub test: String,
    pub d: f64,
    pub p: f64,
    pub significant: bool,
}

/// Bar-chart data grouped by test, in order of each test's first row.
pub fn plot_data(report: &SuiteReport) -> Result<Vec<PlotPoint>, ReportError> {
    let mut tests: Vec<&str> = Vec::new();
    let mut seen = BTreeSet::new();
    for r in report.computed() {
        if seen.insert(r.test.as_str()) {
            tests.push(&r.test);
        }
    }
    let points: Vec<PlotPoint> = tests
        .iter()
        .flat_map(|t| report.computed().filter(move |r| r.test == *t))
        .map(|r| {
            let (d, p) = (r.d.unwrap_or_default(), r.p.unwrap_or(1.0));
            PlotPoint {
                embedding: r.embedding.clone(),
                test: r.test.clone(),
                d,
                p,
                significant: d.abs() >= LARGE_EFFECT && p < SIGNIFICANCE,
            }
        })
        .collect();
    if points.is_empty() {
        return Err(ReportError::NoComputedRows);
    }
    Ok(points)
}

pub fn emit_plot_data(report: &SuiteReport, path: impl AsRef<Path>) -> Result<(), ReportError> {
    let points = plot_data(report)?;
    let mut out = create(path.as_ref())?;
    serde_json::to_writer_pretty(&mut out, &points)?;
    writeln!(out).map_err(|source| ReportError::Io {
        path: path.as_ref().display().to_string(),
        source,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(test: &str, emb: &str, d: Option<f64>, p: Option<f64>) -> SuiteRow {
        SuiteRow {
            embedding: emb.into(),
            test: test.into(),
            status: if d.is_some() {
                CellStatus::Computed
            } else {
                CellStatus::Skipped {
                    reason: SKIPPED_UNAVAILABLE.into(),
                }
            },
            d,
            p,
            m: d.map(|_| 8),
            n: d.map(|_| 8),
            method: d.map(|_| Method::Exact),
            seed: 1,
            comparator: Comparator::Geq,
            std_convention: StdConvention::Population,
            axis: PermutationAxis::Target,
            audit_summary: String::new(),
            expected: None,
            matches_expected: None,
            result: None,
        }
    }

    #[test]
    fn two_decimal_truncation_and_p_ceiling() {
        assert_eq!(format_d_paper(-0.927), "-0.92");
        assert_eq!(format_d_paper(1.279), "1.27");
        assert_eq!(format_d_paper(0.29), "0.29");
        assert_eq!(format_d_paper(-0.004), "0.00");
        assert_eq!(format_d_paper(2.0), "2.00");
        assert_eq!(format_p_paper(0.0312), "0.032");
        assert_eq!(format_p_paper(0.031), "0.031");
        assert_eq!(format_p_paper(0.004), "<10^-2");
        assert_eq!(format_p_paper(1.0), "1.000");
    }

    #[test]
    fn csv_has_fixed_columns_and_status() {
        let report = SuiteReport {
            name: None,
            rows: vec![
                row("calm", "g", Some(-0.861), Some(0.0466)),
                row("calm", "ac", None, None),
            ],
        };
        let mut buf = Vec::new();
        write_report(&report, ReportFormat::Csv, Rounding::Paper, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], CSV_COLUMNS.join(","));
        assert_eq!(
            lines[1],
            "g,calm,-0.86,0.047,8,8,exact,1,geq,population,target,ok"
        );
        assert_eq!(
            lines[2],
            "ac,calm,,,,,,1,geq,population,target,skipped: embedding unavailable"
        );

        let mut buf = Vec::new();
        write_report(&report, ReportFormat::Csv, Rounding::Full, &mut buf).unwrap();
        assert!(String::from_utf8(buf).unwrap().contains("-0.861,0.0466"));
    }

    #[test]
    fn json_keeps_full_precision() {
        let report = SuiteReport {
            name: Some("s".into()),
            rows: vec![row("t", "g", Some(-0.927), Some(0.0312))],
        };
        let mut buf = Vec::new();
        write_report(&report, ReportFormat::Json, Rounding::Paper, &mut buf).unwrap();
        let v: serde_json::Value = serde_json::from_slice(&buf).unwrap();
        assert_eq!(v["rows"][0]["d"], -0.927);
        assert_eq!(v["rows"][0]["d_display"], "-0.92");
        assert_eq!(v["rows"][0]["p_display"], "0.032");
        assert_eq!(v["rows"][0]["status"]["kind"], "computed");
    }

    #[test]
    fn plot_data_grouping_and_flags() {
        let report = SuiteReport {
            name: None,
            rows: vec![
                row("calm", "ac", Some(1.31), Some(0.004)),
                row("pleasant", "ac", Some(1.04), Some(0.016)),
                row("calm", "g", Some(0.85), Some(0.045)),
                row("calm", "tw", Some(-0.86), Some(0.047)),
                row("calm", "none", None, None),
            ],
        };
        let pts = plot_data(&report).unwrap();
        let order: Vec<(&str, &str)> = pts
            .iter()
            .map(|p| (p.test.as_str(), p.embedding.as_str()))
            .collect();
        assert_eq!(
            order,
            [("calm", "ac"), ("calm", "g"), ("calm", "tw"), ("pleasant", "ac")]
        );
        assert!(pts.iter().all(|p| p.significant));

        let single = SuiteReport {
            name: None,
            rows: vec![row("t", "g", Some(0.3), Some(0.4))],
        };
        let pts = plot_data(&single).unwrap();
        assert_eq!(pts.len(), 1);
        assert!(!pts[0].significant);

        let skipped = SuiteReport {
            name: None,
            rows: vec![row("t", "g", None, None)],
        };
        assert!(matches!(plot_data(&skipped), Err(ReportError::NoComputedRows)));
    }
}
