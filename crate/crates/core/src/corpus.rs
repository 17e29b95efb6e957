//! Time-series database loading and addressing.
//!
//! A corpus is an immutable collection of identified series plus the
//! per-series metadata (seasonal period, required horizon) the rest of the
//! stack needs. Three concrete CSV layouts are supported; anything else is an
//! error, not a guess. Interior missing observations are repaired by linear
//! interpolation between their neighbors, leading/trailing gaps are trimmed.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::{BufRead, BufReader, Read};
use std::path::Path;

use crate::error::{Error, Result};

/// One raw series with identity, seasonal period and required horizon.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeries {
    pub id: String,
    pub values: Vec<f64>,
    /// Seasonal period M (12 monthly, 7 daily-weekly, 1 non-seasonal).
    pub frequency: usize,
    /// Required forecast length h.
    pub horizon: usize,
    /// Whether every observed value is a whole number; drives the epsilon
    /// choice in the log transform.
    pub is_integer_valued: bool,
}

impl TimeSeries {
    pub fn new(id: impl Into<String>, values: Vec<f64>, frequency: usize, horizon: usize) -> Result<Self> {
        let id = id.into();
        if values.is_empty() {
            return Err(Error::data(&id, "series has no observations"));
        }
        if let Some(v) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::data(&id, format!("non-finite value {v}")));
        }
        if frequency == 0 {
            return Err(Error::data(&id, "frequency must be at least 1"));
        }
        if horizon == 0 {
            return Err(Error::data(&id, "horizon must be at least 1"));
        }
        let is_integer_valued = values.iter().all(|v| v.fract() == 0.0);
        Ok(TimeSeries {
            id,
            values,
            frequency,
            horizon,
            is_integer_valued,
        })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Split off the final `horizon` observations as the withheld test window.
pub fn train_test_split(series: &TimeSeries) -> Result<(TimeSeries, Vec<f64>)> {
    let h = series.horizon;
    if series.len() <= h {
        return Err(Error::data(
            &series.id,
            format!("length {} too short to withhold {h} test points", series.len()),
        ));
    }
    let split = series.len() - h;
    let train = TimeSeries::new(
        series.id.clone(),
        series.values[..split].to_vec(),
        series.frequency,
        series.horizon,
    )?;
    Ok((train, series.values[split..].to_vec()))
}

/// The dataset layouts the loader understands.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DatasetFormat {
    /// `id;horizon;frequency;v1;v2;...`, one series per row.
    Cif2016,
    /// Header row of series ids, one column per series, rows are days,
    /// empty cells are missing. Daily-weekly period, 56-step horizon.
    Nn5,
    /// `id,frequency,horizon,v1,...`, one series per row.
    Generic,
}

impl DatasetFormat {
    pub fn parse(tag: &str) -> Result<Self> {
        match tag.to_ascii_lowercase().as_str() {
            "cif" | "cif2016" => Ok(DatasetFormat::Cif2016),
            "nn5" => Ok(DatasetFormat::Nn5),
            "generic" => Ok(DatasetFormat::Generic),
            other => Err(Error::parse(
                "format",
                format!("unknown dataset format `{other}` (expected cif|nn5|generic)"),
            )),
        }
    }

    pub fn tag(&self) -> &'static str {
        match self {
            DatasetFormat::Cif2016 => "cif",
            DatasetFormat::Nn5 => "nn5",
            DatasetFormat::Generic => "generic",
        }
    }
}

const NN5_FREQUENCY: usize = 7;
const NN5_HORIZON: usize = 56;

/// A validated, immutable set of series.
#[derive(Debug, Clone)]
pub struct Corpus {
    pub name: String,
    series: Vec<TimeSeries>,
    index: BTreeMap<String, usize>,
}

impl Corpus {
    pub fn new(name: impl Into<String>, series: Vec<TimeSeries>) -> Result<Self> {
        let mut index = BTreeMap::new();
        for (i, s) in series.iter().enumerate() {
            if index.insert(s.id.clone(), i).is_some() {
                return Err(Error::data(&s.id, "duplicate series id"));
            }
        }
        Ok(Corpus {
            name: name.into(),
            series,
            index,
        })
    }

    pub fn len(&self) -> usize {
        self.series.len()
    }

    pub fn is_empty(&self) -> bool {
        self.series.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &TimeSeries> {
        self.series.iter()
    }

    pub fn get(&self, id: &str) -> Option<&TimeSeries> {
        self.index.get(id).map(|&i| &self.series[i])
    }

    pub fn ids(&self) -> Vec<String> {
        self.series.iter().map(|s| s.id.clone()).collect()
    }
}

/// Forecasts for one external method, consumed as data for benchmarking.
#[derive(Debug, Clone)]
pub struct ExternalForecastSet {
    pub method_name: String,
    pub forecasts: BTreeMap<String, Vec<f64>>,
}

fn is_missing(cell: &str) -> bool {
    let t = cell.trim();
    t.is_empty() || t.eq_ignore_ascii_case("na") || t.eq_ignore_ascii_case("nan")
}

fn parse_cell(cell: &str, location: &str) -> Result<f64> {
    cell.trim()
        .parse::<f64>()
        .map_err(|_| Error::parse(location, format!("non-numeric value `{}`", cell.trim())))
}

fn parse_usize(cell: &str, location: &str, what: &str) -> Result<usize> {
    cell.trim()
        .parse::<usize>()
        .map_err(|_| Error::parse(location, format!("bad {what} `{}`", cell.trim())))
}

/// Repair a raw observation row: trim leading/trailing gaps, fill interior
/// gaps by linear interpolation between the nearest observed neighbors.
pub fn repair_missing(raw: &[Option<f64>]) -> Option<Vec<f64>> {
    let first = raw.iter().position(|v| v.is_some())?;
    let last = raw.iter().rposition(|v| v.is_some())?;
    let slice = &raw[first..=last];
    let mut out = Vec::with_capacity(slice.len());
    let mut i = 0;
    while i < slice.len() {
        match slice[i] {
            Some(v) => {
                out.push(v);
                i += 1;
            }
            None => {
                let gap_start = i;
                while slice[i].is_none() {
                    i += 1;
                }
                let left = out[gap_start - 1];
                let right = slice[i].unwrap();
                let gap = i - gap_start;
                for g in 0..gap {
                    let frac = (g + 1) as f64 / (gap + 1) as f64;
                    out.push(left + (right - left) * frac);
                }
            }
        }
    }
    Some(out)
}

fn skip_header_comments(lines: Vec<String>) -> Vec<String> {
    lines
        .into_iter()
        .filter(|l| !l.trim_start().starts_with('#'))
        .collect()
}

fn read_lines(reader: impl Read) -> Result<Vec<String>> {
    let buf = BufReader::new(reader);
    let mut lines = Vec::new();
    for line in buf.lines() {
        lines.push(line?);
    }
    Ok(lines)
}

/// Load a corpus from a reader under the declared format.
pub fn load_corpus_from(reader: impl Read, format: DatasetFormat, name: &str) -> Result<Corpus> {
    let lines = skip_header_comments(read_lines(reader)?);
    let series = match format {
        DatasetFormat::Cif2016 => parse_rowwise(&lines, ';', ColumnOrder::HorizonFirst)?,
        DatasetFormat::Generic => parse_rowwise(&lines, ',', ColumnOrder::FrequencyFirst)?,
        DatasetFormat::Nn5 => parse_columnwise(&lines)?,
    };
    if series.is_empty() {
        return Err(Error::parse(name, "no series found"));
    }
    if matches!(format, DatasetFormat::Cif2016 | DatasetFormat::Nn5) {
        let freq = series[0].frequency;
        if let Some(bad) = series.iter().find(|s| s.frequency != freq) {
            return Err(Error::data(
                &bad.id,
                format!("frequency {} differs from dataset frequency {freq}", bad.frequency),
            ));
        }
    }
    Corpus::new(name, series)
}

/// Load a corpus from a file path.
pub fn load_corpus(path: &Path, format: DatasetFormat) -> Result<Corpus> {
    let file = std::fs::File::open(path)
        .map_err(|e| Error::parse(path.display().to_string(), e.to_string()))?;
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "corpus".to_string());
    load_corpus_from(file, format, &name)
}

enum ColumnOrder {
    /// id;horizon;frequency;values...
    HorizonFirst,
    /// id,frequency,horizon,values...
    FrequencyFirst,
}

fn parse_rowwise(lines: &[String], sep: char, order: ColumnOrder) -> Result<Vec<TimeSeries>> {
    let mut out = Vec::new();
    for (lineno, line) in lines.iter().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let loc = format!("line {}", lineno + 1);
        let cells: Vec<&str> = line.split(sep).collect();
        if cells.len() < 4 {
            return Err(Error::parse(&loc, "expected id, horizon, frequency and at least one value"));
        }
        let id = cells[0].trim();
        if id.is_empty() {
            return Err(Error::parse(&loc, "empty series id"));
        }
        let (horizon, frequency) = match order {
            ColumnOrder::HorizonFirst => (
                parse_usize(cells[1], &loc, "horizon")?,
                parse_usize(cells[2], &loc, "frequency")?,
            ),
            ColumnOrder::FrequencyFirst => {
                let f = parse_usize(cells[1], &loc, "frequency")?;
                let h = parse_usize(cells[2], &loc, "horizon")?;
                (h, f)
            }
        };
        let mut raw = Vec::with_capacity(cells.len() - 3);
        for cell in &cells[3..] {
            if is_missing(cell) {
                raw.push(None);
            } else {
                raw.push(Some(parse_cell(cell, &loc)?));
            }
        }
        let values = repair_missing(&raw)
            .ok_or_else(|| Error::data(id, "series has no observed values"))?;
        out.push(TimeSeries::new(id, values, frequency, horizon)?);
    }
    Ok(out)
}

fn parse_columnwise(lines: &[String]) -> Result<Vec<TimeSeries>> {
    if lines.is_empty() {
        return Err(Error::parse("nn5", "missing header row"));
    }
    let ids: Vec<String> = lines[0].split(',').map(|c| c.trim().to_string()).collect();
    if ids.iter().any(|id| id.is_empty()) {
        return Err(Error::parse("header", "empty series id"));
    }
    let mut columns: Vec<Vec<Option<f64>>> = vec![Vec::new(); ids.len()];
    for (lineno, line) in lines.iter().enumerate().skip(1) {
        let loc = format!("line {}", lineno + 1);
        if line.trim().is_empty() {
            // a blank row is a day with every series missing
            for col in &mut columns {
                col.push(None);
            }
            continue;
        }
        let cells: Vec<&str> = line.split(',').collect();
        if cells.len() != ids.len() {
            return Err(Error::parse(
                &loc,
                format!("expected {} columns, found {}", ids.len(), cells.len()),
            ));
        }
        for (col, cell) in cells.iter().enumerate() {
            if is_missing(cell) {
                columns[col].push(None);
            } else {
                columns[col].push(Some(parse_cell(cell, &loc)?));
            }
        }
    }
    let mut out = Vec::new();
    for (id, raw) in ids.into_iter().zip(columns) {
        let values = repair_missing(&raw)
            .ok_or_else(|| Error::data(&id, "series has no observed values"))?;
        out.push(TimeSeries::new(id, values, NN5_FREQUENCY, NN5_HORIZON)?);
    }
    Ok(out)
}

/// Serialize a corpus in the generic row-wise layout; reloading reproduces
/// every value bit-for-bit.
pub fn write_generic(corpus: &Corpus) -> String {
    let mut out = String::from("# groupcast corpus v1\n");
    for s in corpus.iter() {
        let _ = write!(out, "{},{},{}", s.id, s.frequency, s.horizon);
        for v in &s.values {
            let _ = write!(out, ",{v}");
        }
        out.push('\n');
    }
    out
}

/// Load external per-method forecast files: `method,series_id,f1,...,fh`.
/// Rows may mix methods; one set is returned per method name, in name order.
pub fn load_external_forecasts(reader: impl Read) -> Result<Vec<ExternalForecastSet>> {
    let lines = skip_header_comments(read_lines(reader)?);
    let mut by_method: BTreeMap<String, BTreeMap<String, Vec<f64>>> = BTreeMap::new();
    for (lineno, line) in lines.iter().enumerate() {
        let loc = format!("line {}", lineno + 1);
        let cells: Vec<&str> = line.split(',').collect();
        if cells.len() < 3 {
            return Err(Error::parse(&loc, "expected method, series id and at least one value"));
        }
        let method = cells[0].trim().to_string();
        let series_id = cells[1].trim().to_string();
        if method.is_empty() || series_id.is_empty() {
            return Err(Error::parse(&loc, "empty method or series id"));
        }
        let mut values = Vec::with_capacity(cells.len() - 2);
        for cell in &cells[2..] {
            values.push(parse_cell(cell, &loc)?);
        }
        if by_method
            .entry(method.clone())
            .or_default()
            .insert(series_id.clone(), values)
            .is_some()
        {
            return Err(Error::parse(
                &loc,
                format!("duplicate forecast row for ({method}, {series_id})"),
            ));
        }
    }
    Ok(by_method
        .into_iter()
        .map(|(method_name, forecasts)| ExternalForecastSet {
            method_name,
            forecasts,
        })
        .collect())
}

/// Check that an external forecast set covers a corpus and matches horizons.
pub fn validate_external(set: &ExternalForecastSet, corpus: &Corpus) -> Result<()> {
    for series in corpus.iter() {
        match set.forecasts.get(&series.id) {
            None => {
                return Err(Error::data(
                    &series.id,
                    format!("method `{}` has no forecast for this series", set.method_name),
                ))
            }
            Some(f) if f.len() != series.horizon => {
                return Err(Error::data(
                    &series.id,
                    format!(
                        "method `{}` forecast length {} does not match horizon {}",
                        set.method_name,
                        f.len(),
                        series.horizon
                    ),
                ))
            }
            _ => {}
        }
    }
    Ok(())
}
