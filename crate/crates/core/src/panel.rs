//! Multi-node hourly price panels and their on-disk formats.
//!
//! CSV layout: a mandatory header whose first column is `timestamp`
//! (ISO-8601, hourly aligned) followed by one column per node. A node column
//! may carry its market component as a suffix, e.g. `bus12:MCC`.
//!
//! JSON layout: `{ "start": <iso8601>, "nodes": [names], "values": [[..]] }`
//! with `values` row-major, one inner array per hour holding one price per
//! node.

use std::fmt;
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use chrono::{DateTime, Duration, NaiveDateTime, Timelike};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const TIMESTAMP_FORMAT: &str = "%Y-%m-%dT%H:%M:%S";

/// Which part of a locational marginal price a series represents.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum ComponentRole {
    /// Marginal congestion component.
    Mcc,
    /// Marginal energy component.
    Mec,
    /// Marginal loss component.
    Mlc,
    /// Full locational marginal price.
    Lmp,
    #[default]
    Other,
}

impl ComponentRole {
    pub fn as_str(self) -> &'static str {
        match self {
            ComponentRole::Mcc => "MCC",
            ComponentRole::Mec => "MEC",
            ComponentRole::Mlc => "MLC",
            ComponentRole::Lmp => "LMP",
            ComponentRole::Other => "OTHER",
        }
    }
}

impl FromStr for ComponentRole {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "MCC" => Ok(ComponentRole::Mcc),
            "MEC" => Ok(ComponentRole::Mec),
            "MLC" => Ok(ComponentRole::Mlc),
            "LMP" => Ok(ComponentRole::Lmp),
            "OTHER" => Ok(ComponentRole::Other),
            _ => Err(Error::MalformedFile(format!("unknown component role `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct NodeId {
    pub name: String,
    #[serde(default)]
    pub role: ComponentRole,
}

impl NodeId {
    pub fn new(name: impl Into<String>) -> Self {
        Self::with_role(name, ComponentRole::Other)
    }

    pub fn with_role(name: impl Into<String>, role: ComponentRole) -> Self {
        Self {
            name: name.into(),
            role,
        }
    }

    /// Parses a column label, splitting off a trailing `:ROLE` when the
    /// suffix names a known component.
    pub fn parse_label(label: &str) -> Self {
        if let Some((name, suffix)) = label.rsplit_once(':') {
            if let Ok(role) = suffix.parse::<ComponentRole>() {
                if !name.is_empty() {
                    return Self::with_role(name, role);
                }
            }
        }
        Self::new(label)
    }

    pub fn label(&self) -> String {
        match self.role {
            ComponentRole::Other => self.name.clone(),
            role => format!("{}:{}", self.name, role.as_str()),
        }
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name)
    }
}

/// Borrowed view of one node's series.
#[derive(Debug, Clone, Copy)]
pub struct SeriesView<'a> {
    pub node: &'a NodeId,
    pub values: &'a [f64],
}

impl<'a> SeriesView<'a> {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn cumulative_sum(&self) -> Vec<f64> {
        cumulative_sum(self.values)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PanelFormat {
    Csv,
    Json,
}

impl PanelFormat {
    /// Guesses the format from a file extension, defaulting to CSV.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(ext) if ext.eq_ignore_ascii_case("json") => PanelFormat::Json,
            _ => PanelFormat::Csv,
        }
    }
}

/// N nodes by T contiguous hourly samples. Immutable once built.
#[derive(Debug, Clone, PartialEq)]
pub struct Panel {
    nodes: Vec<NodeId>,
    start: NaiveDateTime,
    /// One row per node.
    values: Vec<Vec<f64>>,
}

impl Panel {
    pub fn new(nodes: Vec<NodeId>, start: NaiveDateTime, values: Vec<Vec<f64>>) -> Result<Self> {
        if nodes.is_empty() || values.is_empty() {
            return Err(Error::EmptyPanel);
        }
        if nodes.len() != values.len() {
            return Err(Error::MalformedFile(format!(
                "{} node labels for {} series",
                nodes.len(),
                values.len()
            )));
        }
        let t = values[0].len();
        if t == 0 {
            return Err(Error::EmptyPanel);
        }
        if t < 2 {
            return Err(Error::SeriesTooShort {
                needed: 2,
                actual: t,
            });
        }
        for (i, row) in values.iter().enumerate() {
            if row.len() != t {
                return Err(Error::MalformedFile(format!(
                    "series `{}` has {} samples, expected {t}",
                    nodes[i].name,
                    row.len()
                )));
            }
            if let Some(k) = row.iter().position(|v| !v.is_finite()) {
                return Err(Error::MissingValue { row: k, column: i + 1 });
            }
        }
        let mut seen = std::collections::HashSet::new();
        for node in &nodes {
            if node.name.is_empty() {
                return Err(Error::MalformedFile("empty node name".into()));
            }
            if !seen.insert(node.name.as_str()) {
                return Err(Error::MalformedFile(format!(
                    "duplicate node name `{}`",
                    node.name
                )));
            }
        }
        if start.minute() != 0 || start.second() != 0 || start.nanosecond() != 0 {
            return Err(Error::MalformedFile(format!(
                "start time {start} is not hour-aligned"
            )));
        }
        Ok(Self {
            nodes,
            start,
            values,
        })
    }

    /// Builds a panel from named series with roles left as `Other`.
    pub fn from_series<S: Into<String>>(
        names: impl IntoIterator<Item = S>,
        start: NaiveDateTime,
        values: Vec<Vec<f64>>,
    ) -> Result<Self> {
        let nodes = names.into_iter().map(NodeId::new).collect();
        Self::new(nodes, start, values)
    }

    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }

    /// Number of hourly samples per node.
    pub fn len(&self) -> usize {
        self.values[0].len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn nodes(&self) -> &[NodeId] {
        &self.nodes
    }

    pub fn start(&self) -> NaiveDateTime {
        self.start
    }

    pub fn timestamp(&self, index: usize) -> NaiveDateTime {
        self.start + Duration::hours(index as i64)
    }

    pub fn series(&self, index: usize) -> SeriesView<'_> {
        SeriesView {
            node: &self.nodes[index],
            values: &self.values[index],
        }
    }

    pub fn iter_series(&self) -> impl ExactSizeIterator<Item = SeriesView<'_>> + '_ {
        self.nodes
            .iter()
            .zip(&self.values)
            .map(|(node, values)| SeriesView { node, values })
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.values
    }

    /// Applies `f` to every series, keeping labels and timing.
    pub fn try_map_series<F>(&self, mut f: F) -> Result<Panel>
    where
        F: FnMut(&[f64]) -> Result<Vec<f64>>,
    {
        let values = self
            .values
            .iter()
            .map(|row| f(row))
            .collect::<Result<Vec<_>>>()?;
        Panel::new(self.nodes.clone(), self.start, values)
    }

    pub fn scaled(&self, factor: f64) -> Panel {
        Panel {
            nodes: self.nodes.clone(),
            start: self.start,
            values: self
                .values
                .iter()
                .map(|row| row.iter().map(|v| v * factor).collect())
                .collect(),
        }
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header = Vec::with_capacity(self.nodes.len() + 1);
        header.push("timestamp".to_string());
        header.extend(self.nodes.iter().map(NodeId::label));
        w.write_record(&header)?;
        let mut record = Vec::with_capacity(header.len());
        for t in 0..self.len() {
            record.clear();
            record.push(self.timestamp(t).format(TIMESTAMP_FORMAT).to_string());
            record.extend(self.values.iter().map(|row| format!("{}", row[t])));
            w.write_record(&record)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_json<W: Write>(&self, writer: W) -> Result<()> {
        let doc = PanelJson {
            start: self.start.format(TIMESTAMP_FORMAT).to_string(),
            nodes: self.nodes.iter().map(NodeId::label).collect(),
            values: (0..self.len())
                .map(|t| self.values.iter().map(|row| row[t]).collect())
                .collect(),
        };
        serde_json::to_writer(writer, &doc)?;
        Ok(())
    }

    pub fn save(&self, path: &Path, format: PanelFormat) -> Result<()> {
        let mut out = BufWriter::new(File::create(path)?);
        match format {
            PanelFormat::Csv => self.write_csv(&mut out)?,
            PanelFormat::Json => self.write_json(&mut out)?,
        }
        out.flush()?;
        Ok(())
    }
}

#[derive(Serialize, Deserialize)]
struct PanelJson {
    start: String,
    nodes: Vec<String>,
    values: Vec<Vec<f64>>,
}

/// Reads and validates a panel file.
pub fn load_panel(path: &Path, format: PanelFormat) -> Result<Panel> {
    let file = File::open(path)?;
    let reader = BufReader::new(file);
    match format {
        PanelFormat::Csv => read_csv(reader),
        PanelFormat::Json => read_json(reader),
    }
}

pub fn read_csv<R: std::io::Read>(reader: R) -> Result<Panel> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let header = rdr.headers()?.clone();
    if header.is_empty() || header.get(0) != Some("timestamp") {
        return Err(Error::MalformedFile(
            "first header column must be `timestamp`".into(),
        ));
    }
    let nodes: Vec<NodeId> = header.iter().skip(1).map(NodeId::parse_label).collect();
    if nodes.is_empty() {
        return Err(Error::EmptyPanel);
    }
    let mut values = vec![Vec::new(); nodes.len()];
    let mut start = None;
    for (row, record) in rdr.records().enumerate() {
        let record = record?;
        if record.len() != header.len() {
            return Err(Error::MalformedFile(format!(
                "row {} has {} fields, header has {}",
                row + 1,
                record.len(),
                header.len()
            )));
        }
        let ts = parse_timestamp(&record[0])?;
        check_contiguous(&mut start, row, ts)?;
        for (col, cell) in record.iter().skip(1).enumerate() {
            values[col].push(parse_cell(cell, row + 1, col + 1)?);
        }
    }
    let start = start.ok_or(Error::EmptyPanel)?;
    Panel::new(nodes, start, values)
}

pub fn read_json<R: std::io::Read>(reader: R) -> Result<Panel> {
    let doc: PanelJson = serde_json::from_reader(reader)
        .map_err(|e| Error::MalformedFile(format!("invalid panel JSON: {e}")))?;
    let start = parse_timestamp(&doc.start)?;
    let nodes: Vec<NodeId> = doc.nodes.iter().map(|s| NodeId::parse_label(s)).collect();
    if nodes.is_empty() || doc.values.is_empty() {
        return Err(Error::EmptyPanel);
    }
    let mut values = vec![Vec::with_capacity(doc.values.len()); nodes.len()];
    for (row, hour) in doc.values.iter().enumerate() {
        if hour.len() != nodes.len() {
            return Err(Error::MalformedFile(format!(
                "hour {row} has {} values for {} nodes",
                hour.len(),
                nodes.len()
            )));
        }
        for (col, &v) in hour.iter().enumerate() {
            values[col].push(v);
        }
    }
    Panel::new(nodes, start, values)
}

fn check_contiguous(
    start: &mut Option<NaiveDateTime>,
    row: usize,
    ts: NaiveDateTime,
) -> Result<()> {
    match *start {
        None => {
            *start = Some(ts);
            Ok(())
        }
        Some(s) => {
            let expected = s + Duration::hours(row as i64);
            if ts != expected {
                Err(Error::GapDetected {
                    row: row + 1,
                    expected: expected.format(TIMESTAMP_FORMAT).to_string(),
                    found: ts.format(TIMESTAMP_FORMAT).to_string(),
                })
            } else {
                Ok(())
            }
        }
    }
}

/// Accepts RFC 3339 (converted to UTC) or a naive `YYYY-MM-DD[T ]HH:MM[:SS]`.
pub fn parse_timestamp(s: &str) -> Result<NaiveDateTime> {
    let ts = if let Ok(dt) = DateTime::parse_from_rfc3339(s) {
        dt.naive_utc()
    } else {
        const FORMATS: [&str; 4] = [
            "%Y-%m-%dT%H:%M:%S",
            "%Y-%m-%d %H:%M:%S",
            "%Y-%m-%dT%H:%M",
            "%Y-%m-%d %H:%M",
        ];
        FORMATS
            .iter()
            .find_map(|f| NaiveDateTime::parse_from_str(s, f).ok())
            .ok_or_else(|| Error::MalformedFile(format!("unparseable timestamp `{s}`")))?
    };
    if ts.minute() != 0 || ts.second() != 0 || ts.nanosecond() != 0 {
        return Err(Error::MalformedFile(format!(
            "timestamp `{s}` is not hour-aligned"
        )));
    }
    Ok(ts)
}

fn parse_cell(cell: &str, row: usize, column: usize) -> Result<f64> {
    if cell.is_empty() || matches!(cell.to_ascii_lowercase().as_str(), "na" | "nan" | "null") {
        return Err(Error::MissingValue { row, column });
    }
    let v: f64 = cell.parse().map_err(|_| {
        Error::MalformedFile(format!("row {row}, column {column}: `{cell}` is not a number"))
    })?;
    if !v.is_finite() {
        return Err(Error::MissingValue { row, column });
    }
    Ok(v)
}

/// Running sum: `out[k] = x[0] + .. + x[k]`.
pub fn cumulative_sum(values: &[f64]) -> Vec<f64> {
    values
        .iter()
        .scan(0.0, |acc, &v| {
            *acc += v;
            Some(*acc)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn start() -> NaiveDateTime {
        parse_timestamp("2014-01-01T00:00:00").unwrap()
    }

    #[test]
    fn cumsum_examples() {
        assert_eq!(cumulative_sum(&[1.0, 2.0, 3.0]), vec![1.0, 3.0, 6.0]);
        assert_eq!(cumulative_sum(&[5.0]), vec![5.0]);
        assert_eq!(
            cumulative_sum(&[1.0, -1.0, 1.0, -1.0]),
            vec![1.0, 0.0, 1.0, 0.0]
        );
    }

    #[test]
    fn two_rows_one_node() {
        let csv = "timestamp,a\n2014-01-01T00:00:00,1.5\n2014-01-01T01:00:00,-2\n";
        let p = read_csv(csv.as_bytes()).unwrap();
        assert_eq!((p.n_nodes(), p.len()), (1, 2));
        assert_eq!(p.series(0).values, &[1.5, -2.0]);
    }

    #[test]
    fn gap_is_rejected() {
        let csv = "timestamp,a\n2014-01-01T00:00:00,1\n2014-01-01T02:00:00,2\n";
        assert!(matches!(
            read_csv(csv.as_bytes()),
            Err(Error::GapDetected { row: 2, .. })
        ));
    }

    #[test]
    fn bad_rows_and_headers() {
        let short = "timestamp,a,b\n2014-01-01T00:00:00,1\n";
        assert!(matches!(read_csv(short.as_bytes()), Err(Error::MalformedFile(_))));
        let no_ts = "time,a\n2014-01-01T00:00:00,1\n";
        assert!(matches!(read_csv(no_ts.as_bytes()), Err(Error::MalformedFile(_))));
        let empty = "timestamp,a\n";
        assert!(matches!(read_csv(empty.as_bytes()), Err(Error::EmptyPanel)));
        let missing = "timestamp,a\n2014-01-01T00:00:00,\n2014-01-01T01:00:00,1\n";
        assert!(matches!(
            read_csv(missing.as_bytes()),
            Err(Error::MissingValue { row: 1, column: 1 })
        ));
        let one_row = "timestamp,a\n2014-01-01T00:00:00,1\n";
        assert!(matches!(
            read_csv(one_row.as_bytes()),
            Err(Error::SeriesTooShort { .. })
        ));
    }

    #[test]
    fn duplicate_names_rejected() {
        let csv = "timestamp,a,a\n2014-01-01T00:00:00,1,2\n2014-01-01T01:00:00,1,2\n";
        assert!(matches!(read_csv(csv.as_bytes()), Err(Error::MalformedFile(_))));
    }

    #[test]
    fn role_suffix_is_parsed() {
        let csv = "timestamp,bus1:MCC,hub:lmp,plain:thing\n\
                   2014-01-01T00:00:00,1,2,3\n2014-01-01T01:00:00,1,2,3\n";
        let p = read_csv(csv.as_bytes()).unwrap();
        assert_eq!(p.nodes()[0], NodeId::with_role("bus1", ComponentRole::Mcc));
        assert_eq!(p.nodes()[1], NodeId::with_role("hub", ComponentRole::Lmp));
        assert_eq!(p.nodes()[2], NodeId::new("plain:thing"));
    }

    #[test]
    fn rfc3339_and_space_separated_timestamps() {
        assert_eq!(parse_timestamp("2014-01-01 05:00:00").unwrap(), start() + Duration::hours(5));
        assert_eq!(
            parse_timestamp("2014-01-01T06:00:00+01:00").unwrap(),
            start() + Duration::hours(5)
        );
        assert!(parse_timestamp("2014-01-01T05:30:00").is_err());
    }

    #[test]
    fn json_layout_is_row_major() {
        let doc = r#"{"start":"2014-01-01T00:00:00","nodes":["a","b"],"values":[[1,10],[2,20],[3,30]]}"#;
        let p = read_json(doc.as_bytes()).unwrap();
        assert_eq!(p.series(0).values, &[1.0, 2.0, 3.0]);
        assert_eq!(p.series(1).values, &[10.0, 20.0, 30.0]);
        let mut out = Vec::new();
        p.write_json(&mut out).unwrap();
        assert_eq!(read_json(out.as_slice()).unwrap(), p);
    }

    proptest! {
        #[test]
        fn csv_round_trip_is_bit_identical(
            rows in prop::collection::vec(prop::collection::vec(-1e12f64..1e12, 3), 2..40)
        ) {
            let values: Vec<Vec<f64>> = (0..3).map(|c| rows.iter().map(|r| r[c]).collect()).collect();
            let p = Panel::from_series(["x", "y", "z"], start(), values).unwrap();
            let mut buf = Vec::new();
            p.write_csv(&mut buf).unwrap();
            let back = read_csv(buf.as_slice()).unwrap();
            for (a, b) in p.rows().iter().zip(back.rows()) {
                for (u, v) in a.iter().zip(b) {
                    prop_assert_eq!(u.to_bits(), v.to_bits());
                }
            }
            prop_assert_eq!(back.nodes(), p.nodes());
        }

        #[test]
        fn cumsum_is_linear(
            x in prop::collection::vec(-1e3f64..1e3, 1..64),
            a in -10.0f64..10.0,
            b in -10.0f64..10.0,
        ) {
            let y: Vec<f64> = x.iter().rev().copied().collect();
            let combo: Vec<f64> = x.iter().zip(&y).map(|(u, v)| a * u + b * v).collect();
            let lhs = cumulative_sum(&combo);
            let (cx, cy) = (cumulative_sum(&x), cumulative_sum(&y));
            for k in 0..x.len() {
                let rhs = a * cx[k] + b * cy[k];
                prop_assert!((lhs[k] - rhs).abs() <= 1e-9 * (1.0 + rhs.abs() + (a * cx[k]).abs() + (b * cy[k]).abs()));
            }
        }

        #[test]
        fn differencing_cumsum_recovers_series(x in prop::collection::vec(-1e3f64..1e3, 1..64)) {
            let c = cumulative_sum(&x);
            let scale = x.iter().map(|v| v.abs()).sum::<f64>().max(1.0);
            prop_assert!((c[0] - x[0]).abs() == 0.0);
            for k in 1..x.len() {
                prop_assert!(((c[k] - c[k - 1]) - x[k]).abs() <= 1e-12 * scale);
            }
        }
    }
}
