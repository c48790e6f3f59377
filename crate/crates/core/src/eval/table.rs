use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{cumulative_abs_log_scores, log_score, rmse, KdeOptions};
use crate::error::{Error, Result};
use crate::linalg;

/// One predictive draw in long format.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnsembleRecord {
    pub variable: String,
    pub origin: String,
    pub horizon: usize,
    pub draw: usize,
    pub value: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RealizedRecord {
    pub variable: String,
    pub origin: String,
    pub horizon: usize,
    pub value: f64,
}

/// How per-period log scores are aggregated in the table.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LsAggregate {
    Mean,
    Sum,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalOptions {
    pub kde: KdeOptions,
    pub aggregate: LsAggregate,
}

impl Default for EvalOptions {
    fn default() -> Self {
        EvalOptions {
            kde: KdeOptions::default(),
            aggregate: LsAggregate::Mean,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalRow {
    pub variable: String,
    pub horizon: usize,
    pub n_origins: usize,
    /// RMSE of the ensemble mean.
    pub rmse: f64,
    pub log_score: f64,
    pub n_floored: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoreSeries {
    pub variable: String,
    pub horizon: usize,
    pub origin: String,
    pub log_score: f64,
    pub cumulative_abs: f64,
}

type Key = (String, usize, String);

/// Score every (variable, horizon, origin) that has both draws and a
/// realized value. Origins are ordered lexically, so ISO dates sort in time.
pub fn evaluate(
    ensembles: &[EnsembleRecord],
    realized: &[RealizedRecord],
    options: &EvalOptions,
) -> Result<(Vec<EvalRow>, Vec<ScoreSeries>)> {
    let mut draws: BTreeMap<Key, Vec<(usize, f64)>> = BTreeMap::new();
    for e in ensembles {
        draws
            .entry((e.variable.clone(), e.horizon, e.origin.clone()))
            .or_default()
            .push((e.draw, e.value));
    }
    let mut truth: BTreeMap<Key, f64> = BTreeMap::new();
    for r in realized {
        if truth
            .insert((r.variable.clone(), r.horizon, r.origin.clone()), r.value)
            .is_some()
        {
            return Err(Error::Data(format!(
                "duplicate realized value for {} h={} at {}",
                r.variable, r.horizon, r.origin
            )));
        }
    }

    // (variable, horizon) -> [(origin, mean, realized, score)]
    let mut groups: BTreeMap<(String, usize), Vec<(String, f64, f64, super::LogScore)>> = BTreeMap::new();
    for (key, mut d) in draws {
        let Some(&actual) = truth.get(&key) else { continue };
        d.sort_by_key(|(i, _)| *i);
        let v: Vec<f64> = d.into_iter().map(|(_, x)| x).collect();
        let s = log_score(&v, actual, &options.kde)?;
        let (var, h, origin) = key;
        groups.entry((var, h)).or_default().push((origin, linalg::mean(&v), actual, s));
    }
    if groups.is_empty() {
        return Err(Error::Data("no forecast matches a realized value".into()));
    }

    let mut rows = Vec::new();
    let mut series = Vec::new();
    for ((var, h), entries) in groups {
        let means: Vec<f64> = entries.iter().map(|e| e.1).collect();
        let actual: Vec<f64> = entries.iter().map(|e| e.2).collect();
        let scores: Vec<f64> = entries.iter().map(|e| e.3.value).collect();
        let total: f64 = scores.iter().sum();
        let ls = match options.aggregate {
            LsAggregate::Mean => total / scores.len() as f64,
            LsAggregate::Sum => total,
        };
        let cum = cumulative_abs_log_scores(&scores);
        for (e, c) in entries.iter().zip(&cum) {
            series.push(ScoreSeries {
                variable: var.clone(),
                horizon: h,
                origin: e.0.clone(),
                log_score: e.3.value,
                cumulative_abs: *c,
            });
        }
        rows.push(EvalRow {
            variable: var,
            horizon: h,
            n_origins: entries.len(),
            rmse: rmse(&means, &actual)?,
            log_score: ls,
            n_floored: entries.iter().filter(|e| e.3.floored).count(),
        });
    }
    Ok((rows, series))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(var: &str, origin: &str, draw: usize, value: f64) -> EnsembleRecord {
        EnsembleRecord {
            variable: var.into(),
            origin: origin.into(),
            horizon: 1,
            draw,
            value,
        }
    }

    #[test]
    fn table_matches_direct_calls() {
        let mut e = Vec::new();
        for (o, shift) in [("2001-01-01", 0.0), ("2001-02-01", 1.0)] {
            for i in 0..50 {
                e.push(rec("a", o, i, shift + (i as f64 - 25.0) / 10.0));
            }
        }
        let r = vec![
            RealizedRecord { variable: "a".into(), origin: "2001-01-01".into(), horizon: 1, value: 0.3 },
            RealizedRecord { variable: "a".into(), origin: "2001-02-01".into(), horizon: 1, value: 0.5 },
        ];
        let (rows, series) = evaluate(&e, &r, &EvalOptions::default()).unwrap();
        assert_eq!(rows.len(), 1);
        let d0: Vec<f64> = (0..50).map(|i| (i as f64 - 25.0) / 10.0).collect();
        let d1: Vec<f64> = d0.iter().map(|x| x + 1.0).collect();
        let k = KdeOptions::default();
        let s0 = log_score(&d0, 0.3, &k).unwrap().value;
        let s1 = log_score(&d1, 0.5, &k).unwrap().value;
        assert_eq!(rows[0].log_score, (s0 + s1) / 2.0);
        let m0 = linalg::mean(&d0);
        let m1 = linalg::mean(&d1);
        assert_eq!(rows[0].rmse, rmse(&[m0, m1], &[0.3, 0.5]).unwrap());
        assert_eq!(series[1].cumulative_abs, s0.abs() + s1.abs());

        let sum = EvalOptions { aggregate: LsAggregate::Sum, ..Default::default() };
        let (rows, _) = evaluate(&e, &r, &sum).unwrap();
        assert_eq!(rows[0].log_score, s0 + s1);
    }

    #[test]
    fn unmatched_inputs_are_an_error() {
        let e = vec![rec("a", "x", 0, 1.0), rec("a", "x", 1, 2.0)];
        assert!(evaluate(&e, &[], &EvalOptions::default()).is_err());
    }
}
