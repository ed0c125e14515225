//! Multivariate time-series panels, CSV ingestion and lag sets.
//!
//! A [`TimeSeriesPanel`] holds `n` named series observed at `T` common time
//! points. Values are stored as an `n x T` matrix in column-major order, so
//! the observation vector at each time point is contiguous in memory.

use std::collections::HashSet;
use std::io::{Read, Write};

use nalgebra::{DMatrix, DVectorView};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Labels attached to the time axis of a panel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TimeIndex {
    Integers(Vec<i64>),
    Labels(Vec<String>),
}

impl TimeIndex {
    pub fn sequential(len: usize) -> Self {
        TimeIndex::Integers((0..len as i64).collect())
    }

    pub fn len(&self) -> usize {
        match self {
            TimeIndex::Integers(v) => v.len(),
            TimeIndex::Labels(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn is_strictly_increasing(&self) -> bool {
        match self {
            TimeIndex::Integers(v) => v.windows(2).all(|w| w[0] < w[1]),
            TimeIndex::Labels(v) => v.windows(2).all(|w| w[0] < w[1]),
        }
    }

    fn label(&self, t: usize) -> String {
        match self {
            TimeIndex::Integers(v) => v[t].to_string(),
            TimeIndex::Labels(v) => v[t].clone(),
        }
    }

    fn slice(&self, start: usize) -> TimeIndex {
        match self {
            TimeIndex::Integers(v) => TimeIndex::Integers(v[start..].to_vec()),
            TimeIndex::Labels(v) => TimeIndex::Labels(v[start..].to_vec()),
        }
    }
}

/// `n` named series of equal length `T`.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeriesPanel {
    names: Vec<String>,
    values: DMatrix<f64>,
    time_index: TimeIndex,
}

impl TimeSeriesPanel {
    /// Builds a panel from an `n x T` matrix (rows are variables).
    pub fn new(names: Vec<String>, values: DMatrix<f64>, time_index: TimeIndex) -> Result<Self> {
        if names.is_empty() {
            return Err(Error::contract("a panel needs at least one series"));
        }
        if values.nrows() != names.len() {
            return Err(Error::contract(format!(
                "{} names for {} series",
                names.len(),
                values.nrows()
            )));
        }
        if values.ncols() < 2 {
            return Err(Error::contract("a panel needs at least two observations"));
        }
        if time_index.len() != values.ncols() {
            return Err(Error::contract("time index length differs from the number of observations"));
        }
        if !time_index.is_strictly_increasing() {
            return Err(Error::contract("time index must be strictly increasing"));
        }
        let mut seen = HashSet::new();
        for name in &names {
            if !seen.insert(name.as_str()) {
                return Err(Error::Schema(format!("duplicate series name '{name}'")));
            }
        }
        if let Some((pos, _)) = values.iter().enumerate().find(|(_, v)| !v.is_finite()) {
            let (i, t) = (pos % values.nrows(), pos / values.nrows());
            return Err(Error::Ingestion {
                row: t + 1,
                column: names[i].clone(),
                message: "non-finite value".into(),
            });
        }
        Ok(Self {
            names,
            values,
            time_index,
        })
    }

    /// Builds a panel from per-series vectors with a sequential time index.
    pub fn from_series<S: Into<String>>(names: Vec<S>, series: Vec<Vec<f64>>) -> Result<Self> {
        let names: Vec<String> = names.into_iter().map(Into::into).collect();
        let len = series.first().map_or(0, Vec::len);
        if series.iter().any(|s| s.len() != len) {
            return Err(Error::contract("series have different lengths"));
        }
        let values = DMatrix::from_fn(series.len(), len, |i, t| series[i][t]);
        Self::new(names, values, TimeIndex::sequential(len))
    }

    pub fn n(&self) -> usize {
        self.values.nrows()
    }

    /// Number of observations `T`.
    pub fn len(&self) -> usize {
        self.values.ncols()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn time_index(&self) -> &TimeIndex {
        &self.time_index
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn require_index(&self, name: &str) -> Result<usize> {
        self.index_of(name)
            .ok_or_else(|| Error::Schema(format!("unknown series '{name}'")))
    }

    /// Observation vector at time `t`.
    pub fn observation(&self, t: usize) -> DVectorView<'_, f64> {
        self.values.column(t)
    }

    pub fn series(&self, i: usize) -> Vec<f64> {
        self.values.row(i).iter().copied().collect()
    }

    /// Sub-panel with the named series, in the order given.
    pub fn select<S: AsRef<str>>(&self, names: &[S]) -> Result<Self> {
        let idx = names
            .iter()
            .map(|n| self.require_index(n.as_ref()))
            .collect::<Result<Vec<_>>>()?;
        self.select_indices(&idx)
    }

    pub fn select_indices(&self, idx: &[usize]) -> Result<Self> {
        let names = idx.iter().map(|&i| self.names[i].clone()).collect();
        let values = self.values.select_rows(idx);
        Self::new(names, values, self.time_index.clone())
    }

    /// Drops the first `start` observations.
    pub fn slice_from(&self, start: usize) -> Result<Self> {
        let values = self.values.columns(start, self.len() - start).into_owned();
        Self::new(self.names.clone(), values, self.time_index.slice(start))
    }

    /// Replaces the values, keeping names and time index.
    pub fn with_values(&self, values: DMatrix<f64>) -> Result<Self> {
        Self::new(self.names.clone(), values, self.time_index.clone())
    }

    /// Rescales every series to sample mean 0 and sample variance 1.
    pub fn standardize(&self) -> Result<Self> {
        let len = self.len() as f64;
        let mut out = self.values.clone();
        for i in 0..self.n() {
            let row = self.values.row(i);
            let mean = row.sum() / len;
            let var = row.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (len - 1.0);
            let scale = mean.abs().max(1.0);
            if var.sqrt() <= 1e-14 * scale {
                return Err(Error::DegenerateSeries(self.names[i].clone()));
            }
            let sd = var.sqrt();
            for t in 0..self.len() {
                out[(i, t)] = (self.values[(i, t)] - mean) / sd;
            }
        }
        self.with_values(out)
    }
}

/// A non-empty sorted set of positive lags.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "Vec<usize>", into = "Vec<usize>")]
pub struct LagSpec {
    lags: Vec<usize>,
}

impl LagSpec {
    pub fn new(mut lags: Vec<usize>) -> Result<Self> {
        lags.sort_unstable();
        lags.dedup();
        if lags.is_empty() {
            return Err(Error::contract("lag set must not be empty"));
        }
        if lags[0] == 0 {
            return Err(Error::contract("lags must be positive"));
        }
        Ok(Self { lags })
    }

    /// Lags `1..=p`.
    pub fn contiguous(p: usize) -> Result<Self> {
        Self::new((1..=p).collect())
    }

    pub fn lags(&self) -> &[usize] {
        &self.lags
    }

    pub fn max_lag(&self) -> usize {
        *self.lags.last().expect("non-empty")
    }

    pub fn count(&self) -> usize {
        self.lags.len()
    }

    /// Parses `"1,2,5"` or `"1-3"` style specifications.
    pub fn parse(text: &str) -> Result<Self> {
        let mut lags = Vec::new();
        for part in text.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            if let Some((a, b)) = part.split_once('-') {
                let a: usize = a.trim().parse().map_err(|_| Error::contract(format!("bad lag '{part}'")))?;
                let b: usize = b.trim().parse().map_err(|_| Error::contract(format!("bad lag '{part}'")))?;
                lags.extend(a..=b);
            } else {
                lags.push(part.parse().map_err(|_| Error::contract(format!("bad lag '{part}'")))?);
            }
        }
        Self::new(lags)
    }
}

impl TryFrom<Vec<usize>> for LagSpec {
    type Error = Error;
    fn try_from(v: Vec<usize>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<LagSpec> for Vec<usize> {
    fn from(l: LagSpec) -> Self {
        l.lags
    }
}

impl std::fmt::Display for LagSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let parts: Vec<String> = self.lags.iter().map(ToString::to_string).collect();
        write!(f, "{}", parts.join(","))
    }
}

/// CSV dialect for [`load_panel`] and [`write_panel`].
#[derive(Debug, Clone)]
pub struct CsvOptions {
    pub delimiter: u8,
    /// Column holding the time labels; when absent, observations are numbered from 0.
    pub time_column: Option<String>,
}

impl Default for CsvOptions {
    fn default() -> Self {
        Self {
            delimiter: b',',
            time_column: None,
        }
    }
}

/// Reads the `schema` columns of a delimited text stream with a header row.
///
/// An empty `schema` selects every column except the time column. Without an
/// explicit time column, a column headed `time` is taken as one, matching
/// [`write_panel`].
pub fn load_panel<R: Read, S: AsRef<str>>(
    source: R,
    schema: &[S],
    options: &CsvOptions,
) -> Result<TimeSeriesPanel> {
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(options.delimiter)
        .has_headers(true)
        .flexible(true)
        .from_reader(source);
    let headers: Vec<String> = reader.headers()?.iter().map(|h| h.trim().to_string()).collect();

    let time_col = match &options.time_column {
        Some(name) => Some(
            headers
                .iter()
                .position(|h| h == name)
                .ok_or_else(|| Error::Schema(format!("missing time column '{name}'")))?,
        ),
        None if schema.is_empty() => headers.iter().position(|h| h == "time"),
        None => None,
    };
    let wanted: Vec<String> = if schema.is_empty() {
        headers
            .iter()
            .enumerate()
            .filter(|(i, _)| Some(*i) != time_col)
            .map(|(_, h)| h.clone())
            .collect()
    } else {
        schema.iter().map(|s| s.as_ref().to_string()).collect()
    };
    let cols = wanted
        .iter()
        .map(|name| {
            headers
                .iter()
                .position(|h| h == name)
                .ok_or_else(|| Error::Schema(format!("missing column '{name}'")))
        })
        .collect::<Result<Vec<_>>>()?;

    let mut data: Vec<f64> = Vec::new();
    let mut labels: Vec<String> = Vec::new();
    for (line, record) in reader.records().enumerate() {
        let record = record?;
        let row = line + 1;
        for (&c, name) in cols.iter().zip(&wanted) {
            let cell = record.get(c).map(str::trim).unwrap_or("");
            if cell.is_empty() {
                return Err(Error::Ingestion {
                    row,
                    column: name.clone(),
                    message: "missing value".into(),
                });
            }
            let v: f64 = cell.parse().map_err(|_| Error::Ingestion {
                row,
                column: name.clone(),
                message: format!("cannot parse '{cell}' as a number"),
            })?;
            if !v.is_finite() {
                return Err(Error::Ingestion {
                    row,
                    column: name.clone(),
                    message: format!("non-finite value '{cell}'"),
                });
            }
            data.push(v);
        }
        if let Some(tc) = time_col {
            let cell = record.get(tc).map(str::trim).unwrap_or("");
            if cell.is_empty() {
                return Err(Error::Ingestion {
                    row,
                    column: headers[tc].clone(),
                    message: "missing time label".into(),
                });
            }
            labels.push(cell.to_string());
        }
    }
    let len = data.len() / wanted.len().max(1);
    // data is laid out observation by observation, which is column-major for n x T
    let values = DMatrix::from_vec(wanted.len(), len, data);
    let time_index = if time_col.is_some() {
        match labels.iter().map(|l| l.parse::<i64>()).collect::<std::result::Result<Vec<_>, _>>() {
            Ok(ints) => TimeIndex::Integers(ints),
            Err(_) => TimeIndex::Labels(labels),
        }
    } else {
        TimeIndex::sequential(len)
    };
    TimeSeriesPanel::new(wanted, values, time_index)
}

/// Writes a panel as delimited text with a `time` column followed by the series.
///
/// Values use the shortest representation that parses back to the same `f64`.
pub fn write_panel<W: Write>(panel: &TimeSeriesPanel, sink: W, delimiter: u8) -> Result<()> {
    let mut writer = csv::WriterBuilder::new().delimiter(delimiter).from_writer(sink);
    let mut header = vec!["time".to_string()];
    header.extend(panel.names().iter().cloned());
    writer.write_record(&header)?;
    for t in 0..panel.len() {
        let mut row = vec![panel.time_index.label(t)];
        row.extend(panel.observation(t).iter().map(|v| format!("{v:?}")));
        writer.write_record(&row)?;
    }
    writer.flush()?;
    Ok(())
}
