//! Run reports and their on-disk formats.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::plot::{render_loglog, Series};
use crate::spec::{ExperimentSpec, Kind};

/// A rectangular table; every cell is already formatted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Table {
    pub name: String,
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(name: &str, header: &[&str]) -> Self {
        Self { name: name.to_string(), header: header.iter().map(|s| s.to_string()).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len(), "row width in table {}", self.name);
        self.rows.push(row);
    }

    /// Column index by header name.
    pub fn column(&self, name: &str) -> Option<usize> {
        self.header.iter().position(|h| h == name)
    }

    /// CSV text with a header row.
    pub fn to_csv(&self) -> Result<String, csv::Error> {
        let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::CRLF).from_writer(Vec::new());
        w.write_record(&self.header)?;
        for row in &self.rows {
            w.write_record(row)?;
        }
        let bytes = w.into_inner().map_err(|e| csv::Error::from(io::Error::other(e.to_string())))?;
        Ok(String::from_utf8(bytes).expect("csv output is UTF-8"))
    }
}

/// Formats a number for tables: shortest round-trip representation.
pub fn num(v: f64) -> String {
    if v.is_nan() {
        "NaN".into()
    } else if v.is_infinite() {
        if v > 0.0 { "inf".into() } else { "-inf".into() }
    } else {
        format!("{v}")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Relation {
    /// `value <= tolerance`
    AtMost,
    /// `value >= tolerance`
    AtLeast,
    /// `|value - target| <= tolerance`
    Within,
    /// Boolean check; value is 1 or 0.
    Holds,
}

/// One pass/fail verdict with the value it rests on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    /// Diagnostic value; `None` when it is not a finite number.
    pub value: Option<f64>,
    pub relation: Relation,
    /// Bound (or half-width for `within`).
    pub tolerance: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target: Option<f64>,
    pub pass: bool,
    pub detail: String,
}

fn finite(v: f64) -> Option<f64> {
    v.is_finite().then_some(v)
}

impl Check {
    pub fn at_most(name: impl Into<String>, value: f64, bound: f64, detail: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            value: finite(value),
            relation: Relation::AtMost,
            tolerance: bound,
            target: None,
            pass: value <= bound,
            detail: detail.into(),
        }
    }

    pub fn at_least(name: impl Into<String>, value: f64, bound: f64, detail: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            value: finite(value),
            relation: Relation::AtLeast,
            tolerance: bound,
            target: None,
            pass: value >= bound,
            detail: detail.into(),
        }
    }

    pub fn within(name: impl Into<String>, value: f64, target: f64, tol: f64, detail: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            value: finite(value),
            relation: Relation::Within,
            tolerance: tol,
            target: Some(target),
            pass: (value - target).abs() <= tol,
            detail: detail.into(),
        }
    }

    pub fn holds(name: impl Into<String>, ok: bool, detail: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            value: Some(if ok { 1.0 } else { 0.0 }),
            relation: Relation::Holds,
            tolerance: 1.0,
            target: None,
            pass: ok,
            detail: detail.into(),
        }
    }

    /// One-line human summary.
    pub fn summary(&self) -> String {
        let v = self.value.map_or_else(|| "n/a".to_string(), num);
        let rel = match self.relation {
            Relation::AtMost => format!("{v} <= {}", num(self.tolerance)),
            Relation::AtLeast => format!("{v} >= {}", num(self.tolerance)),
            Relation::Within => {
                format!("|{v} - {}| <= {}", num(self.target.unwrap_or(f64::NAN)), num(self.tolerance))
            }
            Relation::Holds => (if self.pass { "holds" } else { "violated" }).to_string(),
        };
        let verdict = if self.pass { "PASS" } else { "FAIL" };
        if self.detail.is_empty() {
            format!("{verdict} {}: {rel}", self.name)
        } else {
            format!("{verdict} {}: {rel} ({})", self.name, self.detail)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WallTime {
    pub label: String,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSize {
    pub label: String,
    pub h: f64,
    pub nodes: [usize; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub config: ExperimentSpec,
    pub code_version: String,
    pub grid_sizes: Vec<GridSize>,
}

/// A log-log line plot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Plot {
    pub name: String,
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub series: Vec<Series>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub kind: Kind,
    pub seed: u64,
    pub tables: Vec<Table>,
    pub checks: Vec<Check>,
    pub wall_times: Vec<WallTime>,
    pub provenance: Provenance,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub plots: Vec<Plot>,
    /// Files written by [`emit_report`].
    #[serde(default)]
    pub files: Vec<PathBuf>,
}

impl RunReport {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    pub fn table(&self, name: &str) -> Option<&Table> {
        self.tables.iter().find(|t| t.name == name)
    }

    /// Checks whose name starts with `prefix`.
    pub fn checks_named<'a>(&'a self, prefix: &'a str) -> impl Iterator<Item = &'a Check> + 'a {
        self.checks.iter().filter(move |c| c.name.starts_with(prefix))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Formats {
    pub csv: bool,
    pub json: bool,
    pub svg: bool,
}

impl Default for Formats {
    fn default() -> Self {
        Self { csv: true, json: true, svg: true }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum EmitError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("{path}: {source}")]
    Csv { path: PathBuf, source: csv::Error },
    #[error("{path}: {source}")]
    Json { path: PathBuf, source: serde_json::Error },
}

fn write(path: &Path, contents: &str) -> Result<(), EmitError> {
    fs::write(path, contents).map_err(|source| EmitError::Io { path: path.to_path_buf(), source })
}

/// Writes the report into `dir`; file names embed the kind, a UTC timestamp
/// and the seed. Returns the written paths.
pub fn emit_report(report: &RunReport, dir: &Path, formats: Formats) -> Result<Vec<PathBuf>, EmitError> {
    fs::create_dir_all(dir).map_err(|source| EmitError::Io { path: dir.to_path_buf(), source })?;
    let stamp = chrono::Utc::now().format("%Y%m%dT%H%M%S%.3fZ");
    let stem = format!("{}_{stamp}_seed{}", report.kind, report.seed);
    let mut files = Vec::new();
    if formats.csv {
        for t in &report.tables {
            let path = dir.join(format!("{stem}_{}.csv", t.name));
            let body = t.to_csv().map_err(|source| EmitError::Csv { path: path.clone(), source })?;
            write(&path, &body)?;
            files.push(path);
        }
    }
    if formats.svg {
        for p in &report.plots {
            let path = dir.join(format!("{stem}_{}.svg", p.name));
            write(&path, &render_loglog(p))?;
            files.push(path);
        }
    }
    if formats.json {
        let path = dir.join(format!("{stem}.json"));
        let mut summary = report.clone();
        summary.files = files.clone();
        let body = serde_json::to_string_pretty(&summary)
            .map_err(|source| EmitError::Json { path: path.clone(), source })?;
        write(&path, &body)?;
        files.push(path);
    }
    Ok(files)
}
