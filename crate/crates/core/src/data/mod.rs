//! CSV ingestion with FRED-MD style transformation codes, instrument files
//! and the TOML run configuration.

mod config;

pub use config::{
    DataConfig, EvaluateConfig, ForecastConfig, GirfConfig, RunConfig, RunOptions, SimulateConfig,
};

use std::collections::BTreeMap;
use std::path::Path;

use chrono::NaiveDate;
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::favar::PanelData;
use crate::identify::Instrument;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "i32", into = "i32")]
pub enum TransformCode {
    /// No transformation.
    Level,
    /// First difference.
    Diff,
    /// Natural log.
    Log,
    /// First difference of the log.
    LogDiff,
    /// First difference of the percent change, `Δ(x_t / x_{t-1} - 1)`.
    PctChangeDiff,
}

impl TryFrom<i32> for TransformCode {
    type Error = Error;

    fn try_from(code: i32) -> Result<Self> {
        match code {
            1 => Ok(TransformCode::Level),
            2 => Ok(TransformCode::Diff),
            4 => Ok(TransformCode::Log),
            5 => Ok(TransformCode::LogDiff),
            7 => Ok(TransformCode::PctChangeDiff),
            c => Err(Error::Data(format!("unsupported transformation code {c} (expected 1, 2, 4, 5 or 7)"))),
        }
    }
}

impl From<TransformCode> for i32 {
    fn from(c: TransformCode) -> i32 {
        match c {
            TransformCode::Level => 1,
            TransformCode::Diff => 2,
            TransformCode::Log => 4,
            TransformCode::LogDiff => 5,
            TransformCode::PctChangeDiff => 7,
        }
    }
}

impl TransformCode {
    /// Leading observations consumed by the transformation.
    pub fn lost_obs(self) -> usize {
        match self {
            TransformCode::Level | TransformCode::Log => 0,
            TransformCode::Diff | TransformCode::LogDiff => 1,
            TransformCode::PctChangeDiff => 2,
        }
    }

    pub fn needs_positive(self) -> bool {
        matches!(self, TransformCode::Log | TransformCode::LogDiff | TransformCode::PctChangeDiff)
    }
}

fn diff(v: &[f64]) -> Vec<f64> {
    v.windows(2).map(|w| w[1] - w[0]).collect()
}

/// Transformed series, `lost_obs()` shorter than the input and aligned to
/// its later dates. Missing values (NaN) propagate.
pub fn apply_transform(series: &[f64], code: TransformCode) -> Result<Vec<f64>> {
    if code.needs_positive() {
        if let Some(i) = series.iter().position(|v| *v <= 0.0) {
            return Err(Error::Data(format!(
                "code {} needs positive values, got {} at row {i}",
                i32::from(code),
                series[i]
            )));
        }
    }
    if series.len() < code.lost_obs() {
        return Err(Error::Data(format!(
            "{} observations are too few for code {}",
            series.len(),
            i32::from(code)
        )));
    }
    Ok(match code {
        TransformCode::Level => series.to_vec(),
        TransformCode::Diff => diff(series),
        TransformCode::Log => series.iter().map(|v| v.ln()).collect(),
        TransformCode::LogDiff => diff(&series.iter().map(|v| v.ln()).collect::<Vec<_>>()),
        TransformCode::PctChangeDiff => {
            let pct: Vec<f64> = series.windows(2).map(|w| w[1] / w[0] - 1.0).collect();
            diff(&pct)
        }
    })
}

/// Parse an ISO (`YYYY-MM-DD`) or `M/D/YYYY` date and return it in ISO form.
pub fn parse_date(s: &str) -> Result<String> {
    let s = s.trim();
    NaiveDate::parse_from_str(s, "%Y-%m-%d")
        .or_else(|_| NaiveDate::parse_from_str(s, "%m/%d/%Y"))
        .map(|d| d.format("%Y-%m-%d").to_string())
        .map_err(|_| Error::Data(format!("unparseable date '{s}'")))
}

fn parse_value(s: &str) -> Option<f64> {
    let s = s.trim();
    if s.is_empty() || s.eq_ignore_ascii_case("na") || s.eq_ignore_ascii_case("nan") || s == "." {
        return Some(f64::NAN);
    }
    s.parse().ok()
}

/// A CSV panel as read: ISO dates, column names, optional transformation
/// codes and raw columns (NaN for missing cells).
#[derive(Clone, Debug, PartialEq)]
pub struct RawPanel {
    pub dates: Vec<String>,
    pub names: Vec<String>,
    pub codes: Option<Vec<i32>>,
    pub columns: Vec<Vec<f64>>,
}

impl RawPanel {
    pub fn column(&self, name: &str) -> Result<&[f64]> {
        self.names
            .iter()
            .position(|n| n == name)
            .map(|j| self.columns[j].as_slice())
            .ok_or_else(|| Error::Data(format!("column '{name}' not found")))
    }
}

/// First column dates, header row of names, and an optional second row of
/// codes recognized by a first cell that is not a date.
pub fn read_csv_panel(path: &Path) -> Result<RawPanel> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).flexible(false).from_path(path)?;
    let header = rdr.headers()?.clone();
    if header.len() < 2 {
        return Err(Error::Data(format!("{}: need a date column and at least one series", path.display())));
    }
    let names: Vec<String> = header.iter().skip(1).map(|s| s.trim().to_string()).collect();
    let mut dates = Vec::new();
    let mut codes = None;
    let mut columns = vec![Vec::new(); names.len()];
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let first = rec.get(0).unwrap_or("");
        if i == 0 && parse_date(first).is_err() {
            let c = rec
                .iter()
                .skip(1)
                .map(|s| {
                    s.trim()
                        .parse::<f64>()
                        .ok()
                        .filter(|v| v.fract() == 0.0)
                        .map(|v| v as i32)
                        .ok_or_else(|| Error::Data(format!("invalid transformation code '{s}'")))
                })
                .collect::<Result<Vec<i32>>>()?;
            codes = Some(c);
            continue;
        }
        dates.push(parse_date(first)?);
        for (j, cell) in rec.iter().skip(1).enumerate() {
            let v = parse_value(cell).ok_or_else(|| {
                Error::Data(format!("non-numeric value '{cell}' for {} on {first}", names[j]))
            })?;
            columns[j].push(v);
        }
    }
    if dates.is_empty() {
        return Err(Error::Data(format!("{}: no data rows", path.display())));
    }
    if dates.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Data(format!("{}: dates must be strictly increasing", path.display())));
    }
    Ok(RawPanel { dates, names, codes, columns })
}

/// Transform one raw column and pad it back to full length with leading
/// NaNs. Non-positive inputs under log codes name the variable and date.
fn transform_column(raw: &RawPanel, j: usize, code: TransformCode) -> Result<Vec<f64>> {
    let col = &raw.columns[j];
    if code.needs_positive() {
        if let Some(i) = col.iter().position(|v| *v <= 0.0) {
            return Err(Error::Data(format!(
                "{} has non-positive value {} on {} under code {}",
                raw.names[j],
                col[i],
                raw.dates[i],
                i32::from(code)
            )));
        }
    }
    let mut out = vec![f64::NAN; code.lost_obs().min(col.len())];
    out.extend(apply_transform(col, code)?);
    Ok(out)
}

fn first_finite(v: &[f64]) -> Option<usize> {
    v.iter().position(|x| x.is_finite())
}

fn last_finite(v: &[f64]) -> Option<usize> {
    v.iter().rposition(|x| x.is_finite())
}

/// Panel plus the first usable date of each transformed series.
#[derive(Clone, Debug)]
pub struct LoadedPanel {
    pub panel: PanelData,
    pub first_usable: Vec<(String, String)>,
}

/// Read, transform and trim a panel to the window where every series
/// (and the observed factor) is available.
pub fn load_panel(path: &Path, config: &DataConfig) -> Result<LoadedPanel> {
    let raw = read_csv_panel(path)?;
    let mut codes: BTreeMap<String, i32> = BTreeMap::new();
    for (j, name) in raw.names.iter().enumerate() {
        let c = raw.codes.as_ref().map(|c| c[j]).unwrap_or(config.default_code);
        codes.insert(name.clone(), c);
    }
    for (name, c) in &config.code_overrides {
        if !codes.contains_key(name) {
            return Err(Error::Data(format!("code override for unknown column '{name}'")));
        }
        codes.insert(name.clone(), *c);
    }
    if let (Some(z), Some(c)) = (&config.observed_factor, config.observed_factor_code) {
        codes.insert(z.clone(), c);
    }
    let z_idx = match &config.observed_factor {
        Some(z) => Some(
            raw.names
                .iter()
                .position(|n| n == z)
                .ok_or_else(|| Error::Data(format!("observed factor column '{z}' not found")))?,
        ),
        None => None,
    };
    let selected: Vec<usize> = (0..raw.names.len())
        .filter(|&j| Some(j) != z_idx)
        .filter(|&j| config.exclude.iter().all(|e| e != &raw.names[j]))
        .collect();
    if selected.is_empty() {
        return Err(Error::Data("no panel columns left after role assignment".into()));
    }

    let mut transformed = Vec::new();
    for &j in selected.iter().chain(z_idx.iter()) {
        let code = TransformCode::try_from(codes[&raw.names[j]])
            .map_err(|e| Error::Data(format!("{}: {e}", raw.names[j])))?;
        transformed.push(transform_column(&raw, j, code)?);
    }
    let mut first_usable = Vec::new();
    let mut start = 0usize;
    let mut end = raw.dates.len();
    for (k, &j) in selected.iter().chain(z_idx.iter()).enumerate() {
        let col = &transformed[k];
        let (Some(f), Some(l)) = (first_finite(col), last_finite(col)) else {
            return Err(Error::Data(format!("{} has no usable observations", raw.names[j])));
        };
        first_usable.push((raw.names[j].clone(), raw.dates[f].clone()));
        start = start.max(f);
        end = end.min(l + 1);
    }
    if let Some(s) = &config.start {
        let s = parse_date(s)?;
        start = start.max(raw.dates.partition_point(|d| *d < s));
    }
    if let Some(e) = &config.end {
        let e = parse_date(e)?;
        end = end.min(raw.dates.partition_point(|d| *d <= e));
    }
    if start >= end {
        return Err(Error::Data("series share no common complete window".into()));
    }
    let t = end - start;
    let n = selected.len();
    let x = DMatrix::from_fn(t, n, |i, k| transformed[k][start + i]);
    let z = z_idx.map(|_| transformed[n][start..end].to_vec());
    let names: Vec<String> = selected.iter().map(|&j| raw.names[j].clone()).collect();
    let code_list = names.iter().map(|nm| codes[nm]).collect();
    let panel = PanelData::new(
        x,
        z,
        names,
        config.observed_factor.clone(),
        raw.dates[start..end].to_vec(),
        code_list,
    )?;
    Ok(LoadedPanel { panel, first_usable })
}

/// Two-column dated series (date, value); blank cells are skipped.
pub fn load_instrument(path: &Path) -> Result<Instrument> {
    let raw = read_csv_panel(path)?;
    if raw.columns.len() != 1 {
        return Err(Error::Data(format!(
            "{}: instrument file must have exactly one value column",
            path.display()
        )));
    }
    let (dates, values) = raw
        .dates
        .into_iter()
        .zip(raw.columns[0].iter().copied())
        .filter(|(_, v)| v.is_finite())
        .unzip();
    Ok(Instrument { dates, values })
}
