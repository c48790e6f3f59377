//! Columnar dump of a chain: one CSV per parameter block with a header row
//! and rows ordered by draw, plus `meta.json` and `forests.jsonl`.

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::chain::{ChainDraw, ChainResult, TraceRow};
use super::kalman::StateSpace;
use super::var::VarCoefficients;
use super::FavarConfig;
use crate::bart::{Forest, SweepStats, TargetScale};
use crate::error::{Error, Result};

#[derive(Serialize, Deserialize)]
struct Meta {
    config: FavarConfig,
    n_draws: usize,
    n_obs: usize,
    n_vars: usize,
    n_factors: usize,
    n_lags: usize,
    observed_factor: bool,
    sample_offset: usize,
    variable_names: Vec<String>,
    scales: Vec<TargetScale>,
    z: Option<Vec<f64>>,
    pca_reference: Vec<Vec<f64>>,
    move_stats: SweepStats,
    forests_stored: bool,
}

fn y_names(observed: bool, j: usize) -> Vec<String> {
    let mut v = Vec::new();
    if observed {
        v.push("z".to_string());
    }
    v.extend((1..=j).map(|k| format!("f{k}")));
    v
}

fn writer(dir: &Path, name: &str) -> Result<csv::Writer<fs::File>> {
    let path = dir.join(name);
    let file = fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
    Ok(csv::Writer::from_writer(file))
}

fn row(prefix: &[String], values: impl Iterator<Item = f64>) -> Vec<String> {
    prefix
        .iter()
        .cloned()
        .chain(values.map(|v| format!("{v:e}")))
        .collect()
}

/// Write `result` under `dir` (created if missing).
pub fn write_chain(result: &ChainResult, variable_names: &[String], dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let first = result
        .draws
        .first()
        .ok_or_else(|| Error::Config("cannot dump an empty chain".into()))?;
    let (t, j) = first.factors.shape();
    let m = first.state.var.n_vars;
    let l = first.state.var.n_lags;
    let n = first.state.loadings.nrows();
    let observed = result.observed_factor();
    let ynames = y_names(observed, j);
    let forests_stored = result.draws.iter().all(|d| !d.forests.is_empty());

    let meta = Meta {
        config: result.config.clone(),
        n_draws: result.n_draws(),
        n_obs: t,
        n_vars: n,
        n_factors: j,
        n_lags: l,
        observed_factor: observed,
        sample_offset: result.sample_offset,
        variable_names: variable_names.to_vec(),
        scales: result.scales.clone(),
        z: result.z.clone(),
        pca_reference: result
            .pca_reference
            .row_iter()
            .map(|r| r.iter().copied().collect())
            .collect(),
        move_stats: result.move_stats.clone(),
        forests_stored,
    };
    let path = dir.join("meta.json");
    fs::write(&path, serde_json::to_string_pretty(&meta)?).map_err(|e| Error::io(&path, e))?;

    let mut fw = writer(dir, "factors.csv")?;
    let mut header = vec!["draw".to_string(), "t".to_string()];
    header.extend((1..=j).map(|k| format!("f{k}")));
    fw.write_record(&header)?;
    let mut vw = writer(dir, "var_coef.csv")?;
    let mut header = vec!["draw".to_string(), "regressor".to_string()];
    header.extend(ynames.iter().cloned());
    vw.write_record(&header)?;
    let mut cw = writer(dir, "innov_cov.csv")?;
    let mut header = vec!["draw".to_string(), "row".to_string()];
    header.extend(ynames.iter().cloned());
    cw.write_record(&header)?;
    let mut lw = writer(dir, "loadings.csv")?;
    let mut header = vec!["draw".to_string(), "variable".to_string()];
    header.extend(ynames.iter().cloned());
    lw.write_record(&header)?;
    let mut mw = writer(dir, "meas_var.csv")?;
    let mut header = vec!["draw".to_string()];
    header.extend(variable_names.iter().cloned());
    mw.write_record(&header)?;

    let regressors: Vec<String> = (1..=l)
        .flat_map(|lag| ynames.iter().map(move |y| format!("{y}_lag{lag}")))
        .chain(std::iter::once("const".to_string()))
        .collect();
    let forest_path = dir.join("forests.jsonl");
    let mut forest_out = if forests_stored {
        let f = fs::File::create(&forest_path).map_err(|e| Error::io(&forest_path, e))?;
        Some(BufWriter::new(f))
    } else {
        None
    };
    for (i, d) in result.draws.iter().enumerate() {
        let di = i.to_string();
        for tt in 0..t {
            fw.write_record(row(&[di.clone(), tt.to_string()], d.factors.row(tt).iter().copied()))?;
        }
        for (r, name) in regressors.iter().enumerate() {
            vw.write_record(row(&[di.clone(), name.clone()], d.state.var.b.row(r).iter().copied()))?;
        }
        for r in 0..m {
            cw.write_record(row(&[di.clone(), ynames[r].clone()], d.state.innov_cov.row(r).iter().copied()))?;
        }
        for r in 0..n {
            let name = variable_names.get(r).cloned().unwrap_or_else(|| format!("x{}", r + 1));
            lw.write_record(row(&[di.clone(), name], d.state.loadings.row(r).iter().copied()))?;
        }
        mw.write_record(row(&[di.clone()], d.state.meas_var.iter().copied()))?;
        if let Some(out) = forest_out.as_mut() {
            serde_json::to_writer(&mut *out, &d.forests)?;
            out.write_all(b"\n").map_err(|e| Error::io(&forest_path, e))?;
        }
    }
    for w in [&mut fw, &mut vw, &mut cw, &mut lw, &mut mw] {
        w.flush().map_err(|e| Error::io(dir, e))?;
    }
    if let Some(mut out) = forest_out {
        out.flush().map_err(|e| Error::io(&forest_path, e))?;
    }

    let mut tw = writer(dir, "trace.csv")?;
    for r in &result.trace {
        tw.serialize(r)?;
    }
    tw.flush().map_err(|e| Error::io(dir, e))?;
    Ok(())
}

/// Numeric rows of a dump file grouped by draw index, skipping `skip`
/// label columns after the draw column.
fn read_blocks(dir: &Path, name: &str, skip: usize) -> Result<BTreeMap<usize, Vec<Vec<f64>>>> {
    let path = dir.join(name);
    let mut rdr = csv::Reader::from_path(&path)?;
    let mut out: BTreeMap<usize, Vec<Vec<f64>>> = BTreeMap::new();
    for rec in rdr.records() {
        let rec = rec?;
        let draw: usize = rec
            .get(0)
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::Data(format!("{}: bad draw index", path.display())))?;
        let vals = rec
            .iter()
            .skip(1 + skip)
            .map(|s| {
                s.parse::<f64>()
                    .map_err(|_| Error::Data(format!("{}: cannot parse '{s}'", path.display())))
            })
            .collect::<Result<Vec<f64>>>()?;
        out.entry(draw).or_default().push(vals);
    }
    Ok(out)
}

fn to_matrix(rows: &[Vec<f64>]) -> DMatrix<f64> {
    let c = rows.first().map_or(0, |r| r.len());
    DMatrix::from_fn(rows.len(), c, |i, j| rows[i][j])
}

/// Load a chain written by [`write_chain`]; returns the result and the
/// panel variable names.
pub fn read_chain(dir: &Path) -> Result<(ChainResult, Vec<String>)> {
    let path = dir.join("meta.json");
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let meta: Meta = serde_json::from_str(&text)?;
    let factors = read_blocks(dir, "factors.csv", 1)?;
    let coefs = read_blocks(dir, "var_coef.csv", 1)?;
    let covs = read_blocks(dir, "innov_cov.csv", 1)?;
    let loads = read_blocks(dir, "loadings.csv", 1)?;
    let meas = read_blocks(dir, "meas_var.csv", 0)?;
    let mut forests: Vec<Vec<Forest>> = Vec::new();
    if meta.forests_stored {
        let fp = dir.join("forests.jsonl");
        let f = fs::File::open(&fp).map_err(|e| Error::io(&fp, e))?;
        for line in BufReader::new(f).lines() {
            let line = line.map_err(|e| Error::io(&fp, e))?;
            if !line.trim().is_empty() {
                forests.push(serde_json::from_str(&line)?);
            }
        }
    }
    let m = meta.n_factors + usize::from(meta.observed_factor);
    let mut draws = Vec::with_capacity(meta.n_draws);
    for i in 0..meta.n_draws {
        let missing = |what: &str| Error::Data(format!("draw {i} missing from {what}"));
        let b = to_matrix(coefs.get(&i).ok_or_else(|| missing("var_coef.csv"))?);
        draws.push(ChainDraw {
            state: StateSpace {
                loadings: to_matrix(loads.get(&i).ok_or_else(|| missing("loadings.csv"))?),
                meas_var: meas
                    .get(&i)
                    .and_then(|r| r.first().cloned())
                    .ok_or_else(|| missing("meas_var.csv"))?,
                var: VarCoefficients::new(m, meta.n_lags, b)?,
                innov_cov: to_matrix(covs.get(&i).ok_or_else(|| missing("innov_cov.csv"))?),
                observed_factor: meta.observed_factor,
            },
            factors: to_matrix(factors.get(&i).ok_or_else(|| missing("factors.csv"))?),
            forests: forests.get(i).cloned().unwrap_or_default(),
        });
    }
    let mut trace = Vec::new();
    let tp = dir.join("trace.csv");
    if tp.exists() {
        let mut rdr = csv::Reader::from_path(&tp)?;
        for r in rdr.deserialize::<TraceRow>() {
            trace.push(r?);
        }
    }
    let result = ChainResult {
        config: meta.config,
        draws,
        trace,
        sample_offset: meta.sample_offset,
        scales: meta.scales,
        z: meta.z,
        pca_reference: to_matrix(&meta.pca_reference),
        move_stats: meta.move_stats,
    };
    Ok((result, meta.variable_names))
}
