//! Benchmark data model: task instances, modality payloads and composition
//! statistics.
//!
//! Benchmark files are JSON-Lines with exactly six fields per record:
//! `domain, task, description, output_size, input, label`. Forecast payloads
//! are `timestamp,value` CSV blocks; tabular payloads are CSV tables whose
//! target column carries [`MASK_TOKEN`] in the rows to be predicted.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::io::Read;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::error::{BenchError, PayloadError};

/// Sentinel marking a tabular target cell that must be predicted.
pub const MASK_TOKEN: &str = "__MASK__";

/// Header line of every serialized series.
pub const SERIES_HEADER: &str = "timestamp,value";

/// Field names of a benchmark record, in file order.
pub const RECORD_FIELDS: [&str; 6] = ["domain", "task", "description", "output_size", "input", "label"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Domain {
    Material,
    Energy,
    Space,
    Biology,
    Clinic,
    Drug,
    Economy,
    Business,
    Infrastructure,
}

impl Domain {
    pub const ALL: [Domain; 9] = [
        Domain::Material,
        Domain::Energy,
        Domain::Space,
        Domain::Biology,
        Domain::Clinic,
        Domain::Drug,
        Domain::Economy,
        Domain::Business,
        Domain::Infrastructure,
    ];

    pub fn label(self) -> &'static str {
        match self {
            Domain::Material => "material",
            Domain::Energy => "energy",
            Domain::Space => "space",
            Domain::Biology => "biology",
            Domain::Clinic => "clinic",
            Domain::Drug => "drug",
            Domain::Economy => "economy",
            Domain::Business => "business",
            Domain::Infrastructure => "infrastructure",
        }
    }

    pub fn parent(self) -> ParentDomain {
        match self {
            Domain::Material | Domain::Energy | Domain::Space => ParentDomain::Physical,
            Domain::Biology | Domain::Clinic | Domain::Drug => ParentDomain::Life,
            Domain::Economy | Domain::Business | Domain::Infrastructure => ParentDomain::Social,
        }
    }
}

impl FromStr for Domain {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let lowered = s.trim().to_ascii_lowercase();
        Domain::ALL
            .iter()
            .copied()
            .find(|d| d.label() == lowered)
            .ok_or_else(|| format!("unknown domain `{s}`"))
    }
}

impl fmt::Display for Domain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ParentDomain {
    Physical,
    Life,
    Social,
}

impl ParentDomain {
    pub const ALL: [ParentDomain; 3] = [ParentDomain::Physical, ParentDomain::Life, ParentDomain::Social];

    pub fn label(self) -> &'static str {
        match self {
            ParentDomain::Physical => "physical",
            ParentDomain::Life => "life",
            ParentDomain::Social => "social",
        }
    }
}

/// Task-type label stored in the `task` field.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TaskKind {
    /// Open-ended natural-language question answering.
    Qa,
    /// Time-series point forecast of `output_size` steps.
    Forecast,
    /// Tabular classification of the masked target cells.
    Classification,
    /// Tabular regression of the masked target cells.
    Regression,
}

impl TaskKind {
    pub const ALL: [TaskKind; 4] = [TaskKind::Qa, TaskKind::Forecast, TaskKind::Classification, TaskKind::Regression];

    pub fn label(self) -> &'static str {
        match self {
            TaskKind::Qa => "qa",
            TaskKind::Forecast => "forecast",
            TaskKind::Classification => "classification",
            TaskKind::Regression => "regression",
        }
    }

    pub fn modality(self) -> Modality {
        match self {
            TaskKind::Qa => Modality::NaturalLanguage,
            TaskKind::Forecast => Modality::TimeSeries,
            TaskKind::Classification | TaskKind::Regression => Modality::Tabular,
        }
    }

    pub fn is_tabular(self) -> bool {
        self.modality() == Modality::Tabular
    }
}

impl FromStr for TaskKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "qa" | "natural-language qa" | "nl" => Ok(TaskKind::Qa),
            "forecast" | "time-series forecast" | "ts" => Ok(TaskKind::Forecast),
            "classification" | "tabular classification" => Ok(TaskKind::Classification),
            "regression" | "tabular regression" => Ok(TaskKind::Regression),
            _ => Err(format!("unknown task type `{s}`")),
        }
    }
}

impl fmt::Display for TaskKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Modality {
    NaturalLanguage,
    TimeSeries,
    Tabular,
}

impl Modality {
    pub fn label(self) -> &'static str {
        match self {
            Modality::NaturalLanguage => "natural-language",
            Modality::TimeSeries => "time-series",
            Modality::Tabular => "tabular",
        }
    }
}

/// One benchmark row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskInstance {
    pub domain: Domain,
    pub task: TaskKind,
    pub description: String,
    pub output_size: u64,
    pub input: String,
    pub label: String,
}

impl TaskInstance {
    /// Checks the record-level invariants. Errors carry the offending field.
    pub fn validate(&self) -> Result<(), (&'static str, String)> {
        if self.input.trim().is_empty() {
            return Err(("input", "must be non-empty".into()));
        }
        if self.label.trim().is_empty() {
            return Err(("label", "must be non-empty".into()));
        }
        match self.task {
            TaskKind::Qa => {}
            TaskKind::Forecast => {
                if self.output_size == 0 {
                    return Err(("output_size", "must be >= 1 for forecast tasks".into()));
                }
                parse_series_csv(&self.input).map_err(|e| ("input", e.to_string()))?;
                let gold = parse_series_csv(&self.label).map_err(|e| ("label", e.to_string()))?;
                if gold.len() as u64 != self.output_size {
                    return Err((
                        "label",
                        format!("gold continuation has {} points, output_size is {}", gold.len(), self.output_size),
                    ));
                }
            }
            TaskKind::Classification | TaskKind::Regression => {
                if self.output_size == 0 {
                    return Err(("output_size", "must be >= 1 for tabular tasks".into()));
                }
                let table = self.table().map_err(|e| ("input", e.to_string()))?;
                if table.masked_rows.len() as u64 != self.output_size {
                    return Err((
                        "input",
                        format!("{} masked rows, output_size is {}", table.masked_rows.len(), self.output_size),
                    ));
                }
                let gold = parse_value_list(&self.label, Some(&table.target_column));
                if gold.len() as u64 != self.output_size {
                    return Err((
                        "label",
                        format!("{} gold values, output_size is {}", gold.len(), self.output_size),
                    ));
                }
                if self.task == TaskKind::Regression {
                    if let Some(bad) = gold.iter().find(|v| parse_finite(v).is_none()) {
                        return Err(("label", format!("non-numeric regression target `{bad}`")));
                    }
                }
            }
        }
        Ok(())
    }

    /// Parses the input as a series (forecast tasks).
    pub fn series(&self) -> Result<Series, PayloadError> {
        parse_series_csv(&self.input)
    }

    /// Parses the input as a table, locating the target column by its mask cells.
    pub fn table(&self) -> Result<Table, PayloadError> {
        let target = detect_target_column(&self.input)?;
        parse_table_csv(&self.input, &target, MASK_TOKEN)
    }
}

/// A final answer parsed under its task's output contract.
#[derive(Debug, Clone, PartialEq)]
pub enum ParsedAnswer {
    Text(String),
    Series(Series),
    Values(Vec<String>),
}

impl TaskInstance {
    /// Parses a raw answer under the output contract: non-empty text of at
    /// most `output_size` characters for QA (0 means uncapped); exactly
    /// `output_size` series points or values otherwise.
    pub fn parse_answer(&self, raw: &str) -> Result<ParsedAnswer, String> {
        match self.task {
            TaskKind::Qa => {
                let text = raw.trim();
                if text.is_empty() {
                    return Err("empty answer".into());
                }
                let len = text.chars().count() as u64;
                if self.output_size > 0 && len > self.output_size {
                    return Err(format!("answer has {len} characters, limit is {}", self.output_size));
                }
                Ok(ParsedAnswer::Text(text.to_string()))
            }
            TaskKind::Forecast => {
                let series = parse_series_csv(raw).map_err(|e| e.to_string())?;
                if series.len() as u64 != self.output_size {
                    return Err(format!("expected {} points, got {}", self.output_size, series.len()));
                }
                Ok(ParsedAnswer::Series(series))
            }
            TaskKind::Classification | TaskKind::Regression => {
                let target = self.table().map(|t| t.target_column).ok();
                let values = parse_value_list(raw, target.as_deref());
                if values.len() as u64 != self.output_size {
                    return Err(format!("expected {} values, got {}", self.output_size, values.len()));
                }
                if self.task == TaskKind::Regression {
                    if let Some(bad) = values.iter().find(|v| parse_finite(v).is_none()) {
                        return Err(format!("non-numeric value `{bad}`"));
                    }
                }
                Ok(ParsedAnswer::Values(values))
            }
        }
    }
}

/// An ordered, validated collection of task instances.
#[derive(Debug, Clone, PartialEq)]
pub struct BenchmarkSet {
    pub instances: Vec<TaskInstance>,
    pub source_path: String,
}

impl BenchmarkSet {
    pub fn len(&self) -> usize {
        self.instances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instances.is_empty()
    }

    /// Serializes to JSON-Lines, LF-terminated, fields in schema order.
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for inst in &self.instances {
            out.push_str(&serde_json::to_string(inst).expect("task instance serializes"));
            out.push('\n');
        }
        out
    }
}

/// Loads and validates a JSON-Lines benchmark file.
pub fn load_benchmark(path: impl AsRef<Path>) -> Result<BenchmarkSet, BenchError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|source| BenchError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let instances = parse_benchmark_jsonl(&text)?;
    Ok(BenchmarkSet {
        instances,
        source_path: path.display().to_string(),
    })
}

/// Parses JSON-Lines text into validated instances. Blank lines are ignored;
/// record indices count non-blank lines from zero.
pub fn parse_benchmark_jsonl(text: &str) -> Result<Vec<TaskInstance>, BenchError> {
    let mut instances = Vec::new();
    for (index, line) in text.lines().filter(|l| !l.trim().is_empty()).enumerate() {
        let value: Value = serde_json::from_str(line).map_err(|e| BenchError::Malformed {
            index,
            reason: format!("not a JSON object: {e}"),
        })?;
        let Value::Object(map) = value else {
            return Err(BenchError::Malformed {
                index,
                reason: "not a JSON object".into(),
            });
        };
        instances.push(instance_from_map(index, &map)?);
    }
    if instances.is_empty() {
        return Err(BenchError::NoRecords);
    }
    Ok(instances)
}

fn instance_from_map(index: usize, map: &Map<String, Value>) -> Result<TaskInstance, BenchError> {
    if map.len() != RECORD_FIELDS.len() {
        let extra: Vec<&str> = map
            .keys()
            .map(String::as_str)
            .filter(|k| !RECORD_FIELDS.contains(k))
            .collect();
        return Err(BenchError::Malformed {
            index,
            reason: format!(
                "expected {} fields, found {}{}",
                RECORD_FIELDS.len(),
                map.len(),
                if extra.is_empty() { String::new() } else { format!(" (unexpected: {})", extra.join(", ")) }
            ),
        });
    }
    let text_field = |field: &'static str| -> Result<String, BenchError> {
        match map.get(field) {
            Some(Value::String(s)) => Ok(s.clone()),
            Some(_) => Err(BenchError::invalid(index, field, "expected a string")),
            None => Err(BenchError::invalid(index, field, "missing")),
        }
    };
    let domain = text_field("domain")?
        .parse::<Domain>()
        .map_err(|e| BenchError::invalid(index, "domain", e))?;
    let task = text_field("task")?
        .parse::<TaskKind>()
        .map_err(|e| BenchError::invalid(index, "task", e))?;
    let output_size = match map.get("output_size") {
        Some(v) => v
            .as_u64()
            .ok_or_else(|| BenchError::invalid(index, "output_size", "expected a non-negative integer"))?,
        None => return Err(BenchError::invalid(index, "output_size", "missing")),
    };
    let inst = TaskInstance {
        domain,
        task,
        description: text_field("description")?,
        output_size,
        input: text_field("input")?,
        label: text_field("label")?,
    };
    inst.validate()
        .map_err(|(field, reason)| BenchError::invalid(index, field, reason))?;
    Ok(inst)
}

/// Converts a CSV file with the six schema columns into validated instances.
pub fn convert_csv<R: Read>(reader: R) -> Result<Vec<TaskInstance>, BenchError> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let headers = rdr
        .headers()
        .map_err(|e| BenchError::Malformed { index: 0, reason: e.to_string() })?
        .clone();
    let names: Vec<&str> = headers.iter().collect();
    if names != RECORD_FIELDS {
        return Err(BenchError::Malformed {
            index: 0,
            reason: format!("CSV header must be `{}`", RECORD_FIELDS.join(",")),
        });
    }
    let mut out = Vec::new();
    for (index, record) in rdr.records().enumerate() {
        let record = record.map_err(|e| BenchError::Malformed { index, reason: e.to_string() })?;
        let mut map = Map::new();
        for (name, cell) in RECORD_FIELDS.iter().zip(record.iter()) {
            let value = if *name == "output_size" {
                cell.trim()
                    .parse::<u64>()
                    .map(Value::from)
                    .map_err(|_| BenchError::invalid(index, "output_size", "expected a non-negative integer"))?
            } else {
                Value::String(cell.to_string())
            };
            map.insert((*name).to_string(), value);
        }
        out.push(instance_from_map(index, &map)?);
    }
    if out.is_empty() {
        return Err(BenchError::NoRecords);
    }
    Ok(out)
}

/// A univariate series of `(timestamp, value)` points. Timestamps are opaque
/// tokens ordered by position.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Series {
    pub points: Vec<(String, f64)>,
}

impl Series {
    pub fn new(points: Vec<(String, f64)>) -> Self {
        Series { points }
    }

    /// Builds a series with integer timestamps `start, start+1, ...`.
    pub fn from_values(start: i64, values: &[f64]) -> Self {
        Series {
            points: values
                .iter()
                .enumerate()
                .map(|(i, v)| ((start + i as i64).to_string(), *v))
                .collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn values(&self) -> Vec<f64> {
        self.points.iter().map(|(_, v)| *v).collect()
    }

    pub fn timestamps(&self) -> Vec<&str> {
        self.points.iter().map(|(t, _)| t.as_str()).collect()
    }

    /// `timestamp,value` CSV, no trailing newline.
    pub fn to_csv(&self) -> String {
        let mut out = String::from(SERIES_HEADER);
        for (t, v) in &self.points {
            out.push('\n');
            out.push_str(t);
            out.push(',');
            out.push_str(&format_number(*v));
        }
        out
    }

    /// Timestamps for the `horizon` steps after the last point. Integer
    /// timestamps continue with the last observed stride; anything else gets
    /// a `+k` suffix on the last token.
    pub fn future_timestamps(&self, horizon: usize) -> Vec<String> {
        let stamps: Vec<Option<i64>> = self.points.iter().map(|(t, _)| t.trim().parse::<i64>().ok()).collect();
        let last = stamps.last().copied().flatten();
        match last {
            Some(last) if stamps.iter().all(Option::is_some) => {
                let stride = if stamps.len() >= 2 {
                    let prev = stamps[stamps.len() - 2].unwrap_or(last - 1);
                    if last > prev { last - prev } else { 1 }
                } else {
                    1
                };
                (1..=horizon as i64).map(|k| (last + k * stride).to_string()).collect()
            }
            _ => {
                let base = self.points.last().map(|(t, _)| t.as_str()).unwrap_or("t");
                (1..=horizon).map(|k| format!("{base}+{k}")).collect()
            }
        }
    }
}

/// Renders a number the way payloads serialize it: shortest round-trip form.
pub fn format_number(v: f64) -> String {
    format!("{v}")
}

pub(crate) fn parse_finite(s: &str) -> Option<f64> {
    s.trim().parse::<f64>().ok().filter(|v| v.is_finite())
}

/// Parses a `timestamp,value` CSV block.
pub fn parse_series_csv(text: &str) -> Result<Series, PayloadError> {
    let mut lines = text.lines().enumerate();
    let header = lines
        .by_ref()
        .find(|(_, l)| !l.trim().is_empty())
        .map(|(_, l)| l.trim())
        .ok_or(PayloadError::MissingHeader { expected: SERIES_HEADER })?;
    if header.replace(' ', "") != SERIES_HEADER {
        return Err(PayloadError::MissingHeader { expected: SERIES_HEADER });
    }
    let mut points = Vec::new();
    for (i, line) in lines {
        let line_no = i + 1;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        let (ts, value) = trimmed.split_once(',').ok_or_else(|| PayloadError::BadLine {
            line: line_no,
            reason: "expected `timestamp,value`".into(),
        })?;
        if value.contains(',') {
            return Err(PayloadError::BadLine {
                line: line_no,
                reason: "more than two fields".into(),
            });
        }
        let parsed: f64 = value.trim().parse().map_err(|_| PayloadError::NonNumeric {
            line: line_no,
            cell: value.trim().to_string(),
        })?;
        if !parsed.is_finite() {
            return Err(PayloadError::NonFinite { line: line_no });
        }
        points.push((ts.trim().to_string(), parsed));
    }
    if points.is_empty() {
        return Err(PayloadError::EmptySeries);
    }
    Ok(Series { points })
}

/// One table cell: numeric when it parses as a finite decimal, text otherwise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Cell {
    Number(f64),
    Text(String),
}

impl Cell {
    pub fn parse(raw: &str) -> Cell {
        let t = raw.trim();
        match parse_finite(t) {
            Some(v) => Cell::Number(v),
            None => Cell::Text(t.to_string()),
        }
    }

    pub fn render(&self) -> String {
        match self {
            Cell::Number(v) => format_number(*v),
            Cell::Text(s) => s.clone(),
        }
    }

    pub fn as_number(&self) -> Option<f64> {
        match self {
            Cell::Number(v) => Some(*v),
            Cell::Text(s) => parse_finite(s),
        }
    }

    pub fn is_mask(&self, mask_token: &str) -> bool {
        matches!(self, Cell::Text(s) if s == mask_token)
    }
}

/// A table with a designated target column, some of whose cells are masked.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
    pub target_column: String,
    pub masked_rows: Vec<usize>,
}

impl Table {
    pub fn target_index(&self) -> usize {
        self.columns
            .iter()
            .position(|c| c == &self.target_column)
            .expect("target column validated at construction")
    }

    /// Rows whose target is observed, in table order.
    pub fn observed_rows(&self) -> impl Iterator<Item = (usize, &Vec<Cell>)> {
        self.rows
            .iter()
            .enumerate()
            .filter(move |(i, _)| !self.masked_rows.contains(i))
    }

    pub fn to_csv(&self) -> String {
        let mut wtr = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
        wtr.write_record(&self.columns).expect("in-memory write");
        for row in &self.rows {
            wtr.write_record(row.iter().map(Cell::render)).expect("in-memory write");
        }
        let bytes = wtr.into_inner().expect("in-memory flush");
        let mut text = String::from_utf8(bytes).expect("utf-8 cells");
        if text.ends_with('\n') {
            text.pop();
        }
        text
    }

    /// Validates structural invariants for a table built in memory.
    pub fn check(&self) -> Result<(), PayloadError> {
        if !self.columns.contains(&self.target_column) {
            return Err(PayloadError::MissingTargetColumn(self.target_column.clone()));
        }
        for (i, row) in self.rows.iter().enumerate() {
            if row.len() != self.columns.len() {
                return Err(PayloadError::RaggedRow {
                    row: i,
                    expected: self.columns.len(),
                    found: row.len(),
                });
            }
        }
        if let Some(bad) = self.masked_rows.iter().find(|r| **r >= self.rows.len()) {
            return Err(PayloadError::BadLine {
                line: *bad,
                reason: "masked row index out of range".into(),
            });
        }
        Ok(())
    }
}

fn csv_records(text: &str) -> Result<Vec<csv::StringRecord>, PayloadError> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| PayloadError::Csv(e.to_string()))?;
        if rec.len() == 1 && rec.get(0).is_some_and(str::is_empty) {
            continue;
        }
        out.push(rec);
    }
    Ok(out)
}

/// Parses a CSV table; rows whose target cell equals `mask_token` are masked.
pub fn parse_table_csv(text: &str, target_column: &str, mask_token: &str) -> Result<Table, PayloadError> {
    let records = csv_records(text)?;
    let (header, body) = records.split_first().ok_or(PayloadError::MissingHeader { expected: "column names" })?;
    let columns: Vec<String> = header.iter().map(str::to_string).collect();
    let target_idx = columns
        .iter()
        .position(|c| c == target_column)
        .ok_or_else(|| PayloadError::MissingTargetColumn(target_column.to_string()))?;
    let mut rows = Vec::with_capacity(body.len());
    let mut masked_rows = Vec::new();
    for (i, rec) in body.iter().enumerate() {
        if rec.len() != columns.len() {
            return Err(PayloadError::RaggedRow {
                row: i,
                expected: columns.len(),
                found: rec.len(),
            });
        }
        let row: Vec<Cell> = rec
            .iter()
            .map(|raw| if raw == mask_token { Cell::Text(raw.to_string()) } else { Cell::parse(raw) })
            .collect();
        if row[target_idx].is_mask(mask_token) {
            masked_rows.push(i);
        }
        rows.push(row);
    }
    Ok(Table {
        columns,
        rows,
        target_column: target_column.to_string(),
        masked_rows,
    })
}

/// Finds the single column that contains mask cells.
pub fn detect_target_column(text: &str) -> Result<String, PayloadError> {
    let records = csv_records(text)?;
    let (header, body) = records.split_first().ok_or(PayloadError::MissingHeader { expected: "column names" })?;
    let mut found: Vec<usize> = Vec::new();
    for rec in body {
        for (j, cell) in rec.iter().enumerate() {
            if cell == MASK_TOKEN && !found.contains(&j) {
                found.push(j);
            }
        }
    }
    match found.as_slice() {
        [j] => header
            .get(*j)
            .map(str::to_string)
            .ok_or(PayloadError::RaggedRow { row: 0, expected: header.len(), found: *j + 1 }),
        [] => Err(PayloadError::NoMaskedTarget),
        _ => Err(PayloadError::AmbiguousTarget),
    }
}

/// Parses a flat list of values: a bracketed list (`[a, b]`) or one value per
/// line, with comma-separated lines flattened. A leading line equal to
/// `header` is dropped.
pub fn parse_value_list(text: &str, header: Option<&str>) -> Vec<String> {
    let trimmed = text.trim();
    if let Some(inner) = trimmed.strip_prefix('[').and_then(|t| t.strip_suffix(']')) {
        return inner
            .split(',')
            .map(|c| c.trim().trim_matches(|ch| ch == '"' || ch == '\'').to_string())
            .filter(|c| !c.is_empty())
            .collect();
    }
    let mut lines: Vec<&str> = trimmed.lines().map(str::trim).filter(|l| !l.is_empty()).collect();
    if let (Some(h), Some(first)) = (header, lines.first()) {
        if *first == h {
            lines.remove(0);
        }
    }
    lines
        .into_iter()
        .flat_map(|l| l.split(','))
        .map(|c| c.trim().trim_matches(|ch| ch == '"' || ch == '\'').to_string())
        .filter(|c| !c.is_empty())
        .collect()
}

/// Category axis for composition statistics.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    ParentDomain,
    SubDomain,
    Modality,
}

impl Axis {
    pub fn category(self, inst: &TaskInstance) -> &'static str {
        match self {
            Axis::ParentDomain => inst.domain.parent().label(),
            Axis::SubDomain => inst.domain.label(),
            Axis::Modality => inst.task.modality().label(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CompositionStats {
    pub counts: BTreeMap<String, usize>,
    pub normalized_entropy: f64,
}

/// Category counts and normalized Shannon entropy along `axis`.
pub fn composition_stats(instances: &[TaskInstance], axis: Axis) -> Result<CompositionStats, BenchError> {
    if instances.is_empty() {
        return Err(BenchError::NoRecords);
    }
    let mut counts: BTreeMap<String, usize> = BTreeMap::new();
    for inst in instances {
        *counts.entry(axis.category(inst).to_string()).or_default() += 1;
    }
    let values: Vec<usize> = counts.values().copied().collect();
    Ok(CompositionStats {
        normalized_entropy: normalized_entropy(&values),
        counts,
    })
}

/// `-Σ p ln p / ln K` over the nonzero counts; zero when fewer than two
/// categories are populated.
pub fn normalized_entropy(counts: &[usize]) -> f64 {
    let nonzero: Vec<f64> = counts.iter().filter(|c| **c > 0).map(|c| *c as f64).collect();
    if nonzero.len() < 2 {
        return 0.0;
    }
    let total: f64 = nonzero.iter().sum();
    let h: f64 = nonzero
        .iter()
        .map(|c| {
            let p = c / total;
            -p * p.ln()
        })
        .sum();
    (h / (nonzero.len() as f64).ln()).clamp(0.0, 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn forecast_instance(output_size: u64, label: &str) -> TaskInstance {
        TaskInstance {
            domain: Domain::Energy,
            task: TaskKind::Forecast,
            description: "d".into(),
            output_size,
            input: "timestamp,value\n0,1\n1,2".into(),
            label: label.into(),
        }
    }

    #[test]
    fn series_direct_parse() {
        let s = parse_series_csv("timestamp,value\n0,1.5\n1,2.0").unwrap();
        assert_eq!(s.points, vec![("0".to_string(), 1.5), ("1".to_string(), 2.0)]);
    }

    #[test]
    fn series_header_only_is_empty() {
        assert_eq!(parse_series_csv("timestamp,value").unwrap_err(), PayloadError::EmptySeries);
        assert_eq!(parse_series_csv("timestamp,value\n").unwrap_err(), PayloadError::EmptySeries);
    }

    #[test]
    fn series_non_numeric_reports_line() {
        let err = parse_series_csv("timestamp,value\n0,abc").unwrap_err();
        assert_eq!(err, PayloadError::NonNumeric { line: 2, cell: "abc".into() });
        assert!(err.to_string().contains("line 2"));
    }

    #[test]
    fn series_missing_header() {
        assert!(matches!(parse_series_csv("0,1\n1,2"), Err(PayloadError::MissingHeader { .. })));
        assert!(matches!(parse_series_csv(""), Err(PayloadError::MissingHeader { .. })));
    }

    #[test]
    fn series_rejects_nan() {
        assert_eq!(parse_series_csv("timestamp,value\n0,NaN").unwrap_err(), PayloadError::NonFinite { line: 2 });
    }

    #[test]
    fn future_timestamps_follow_stride() {
        let s = Series::from_values(0, &[1.0; 50]);
        assert_eq!(s.future_timestamps(3), vec!["50", "51", "52"]);
        let s = Series::new(vec![("0".into(), 1.0), ("5".into(), 1.0)]);
        assert_eq!(s.future_timestamps(2), vec!["10", "15"]);
        let s = Series::new(vec![("2024-01".into(), 1.0)]);
        assert_eq!(s.future_timestamps(1), vec!["2024-01+1"]);
    }

    #[test]
    fn table_masks_and_errors() {
        let text = "x,y\n1,A\n2,__MASK__\n3,B\n4,__MASK__";
        let t = parse_table_csv(text, "y", MASK_TOKEN).unwrap();
        assert_eq!(t.masked_rows, vec![1, 3]);
        assert_eq!(t.rows.len(), 4);
        assert_eq!(t.rows[0][0], Cell::Number(1.0));
        assert_eq!(
            parse_table_csv(text, "z", MASK_TOKEN).unwrap_err(),
            PayloadError::MissingTargetColumn("z".into())
        );
        let ragged = "x,y\n1,A\n2\n";
        assert_eq!(
            parse_table_csv(ragged, "y", MASK_TOKEN).unwrap_err(),
            PayloadError::RaggedRow { row: 1, expected: 2, found: 1 }
        );
        assert_eq!(detect_target_column(text).unwrap(), "y");
        assert_eq!(parse_table_csv(&t.to_csv(), "y", MASK_TOKEN).unwrap(), t);
    }

    #[test]
    fn value_lists() {
        assert_eq!(parse_value_list("[A, 'B', \"C\"]", None), vec!["A", "B", "C"]);
        assert_eq!(parse_value_list("price\n3\n4\n", Some("price")), vec!["3", "4"]);
        assert_eq!(parse_value_list("A\nB", Some("y")), vec!["A", "B"]);
        assert!(parse_value_list("", None).is_empty());
    }

    #[test]
    fn forecast_output_size_zero_is_invalid() {
        let inst = forecast_instance(0, "timestamp,value\n2,3");
        assert_eq!(inst.validate().unwrap_err().0, "output_size");
        let inst = forecast_instance(2, "timestamp,value\n2,3");
        assert_eq!(inst.validate().unwrap_err().0, "label");
        assert!(forecast_instance(1, "timestamp,value\n2,3").validate().is_ok());
    }

    #[test]
    fn jsonl_errors_name_record_and_field() {
        assert!(matches!(parse_benchmark_jsonl(""), Err(BenchError::NoRecords)));
        assert!(matches!(parse_benchmark_jsonl("\n\n"), Err(BenchError::NoRecords)));
        let good = serde_json::to_string(&forecast_instance(1, "timestamp,value\n2,3")).unwrap();
        let bad = serde_json::to_string(&forecast_instance(0, "timestamp,value\n2,3")).unwrap();
        let err = parse_benchmark_jsonl(&format!("{good}\n{bad}\n")).unwrap_err();
        match err {
            BenchError::Invalid { index, field, .. } => {
                assert_eq!(index, 1);
                assert_eq!(field, "output_size");
            }
            other => panic!("unexpected {other:?}"),
        }
        let five = r#"{"domain":"energy","task":"qa","description":"","input":"q","label":"a"}"#;
        assert!(matches!(parse_benchmark_jsonl(five), Err(BenchError::Malformed { index: 0, .. })));
        let wrong_domain = r#"{"domain":"chemistry","task":"qa","description":"","output_size":5,"input":"q","label":"a"}"#;
        assert!(matches!(
            parse_benchmark_jsonl(wrong_domain),
            Err(BenchError::Invalid { field: "domain", .. })
        ));
    }

    #[test]
    fn jsonl_field_order_matches_schema() {
        let line = serde_json::to_string(&forecast_instance(1, "timestamp,value\n2,3")).unwrap();
        let positions: Vec<usize> = RECORD_FIELDS
            .iter()
            .map(|f| line.find(&format!("\"{f}\"")).unwrap())
            .collect();
        assert!(positions.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn entropy_degenerate_and_uniform() {
        assert_eq!(normalized_entropy(&[7]), 0.0);
        assert_eq!(normalized_entropy(&[7, 0, 0]), 0.0);
        assert!((normalized_entropy(&[5, 5, 5]) - 1.0).abs() < 1e-12);
        assert!((normalized_entropy(&[64, 60, 76]) - 0.995).abs() < 1e-3);
    }

    #[test]
    fn convert_csv_roundtrip() {
        let csv_text = "domain,task,description,output_size,input,label\nenergy,qa,desc,10,What?,42\n";
        let out = convert_csv(csv_text.as_bytes()).unwrap();
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].label, "42");
        let bad_header = "domain,task\nenergy,qa\n";
        assert!(convert_csv(bad_header.as_bytes()).is_err());
    }
}
