use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::EvalOptions;
use crate::favar::{FactorScheme, FavarConfig, ForecastOptions};
use crate::identify::GirfOptions;
use crate::sim::{experiment_chain, DgpKind, DgpSpec, ExperimentConfig, MonteCarloConfig};

/// `[run]`: seed, thread count and output directory.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunOptions {
    pub seed: u64,
    /// Worker threads; unset uses every core.
    pub threads: Option<usize>,
    pub out_dir: PathBuf,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions {
            seed: 1,
            threads: None,
            out_dir: PathBuf::from("out"),
        }
    }
}

/// `[data]`: input files and variable roles.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    pub panel: Option<PathBuf>,
    /// Column used as the observed factor Z (removed from the panel).
    pub observed_factor: Option<String>,
    /// Transformation code for Z, overriding the file's code row.
    pub observed_factor_code: Option<i32>,
    /// Code used when the file has no code row.
    pub default_code: i32,
    pub code_overrides: BTreeMap<String, i32>,
    /// Columns dropped from the panel.
    pub exclude: Vec<String>,
    pub start: Option<String>,
    pub end: Option<String>,
    pub instrument: Option<PathBuf>,
    /// Panel columns reported by `forecast`; empty means all.
    pub targets: Vec<String>,
}

impl Default for DataConfig {
    fn default() -> Self {
        DataConfig {
            panel: None,
            observed_factor: None,
            observed_factor_code: None,
            default_code: 1,
            code_overrides: BTreeMap::new(),
            exclude: Vec::new(),
            start: None,
            end: None,
            instrument: None,
            targets: Vec::new(),
        }
    }
}

/// `[sim]`: the synthetic DGP, the chain used on it and the experiment
/// and Monte Carlo settings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulateConfig {
    pub dgp: DgpSpec,
    pub chain: FavarConfig,
    pub eval_start: f64,
    pub schemes: Vec<FactorScheme>,
    pub kinds: Vec<DgpKind>,
    pub n_reps: usize,
    /// `simulate` also runs the forecast experiment.
    pub run_experiment: bool,
}

impl Default for SimulateConfig {
    fn default() -> Self {
        let e = ExperimentConfig::default();
        SimulateConfig {
            dgp: e.dgp,
            chain: experiment_chain(),
            eval_start: e.eval_start,
            schemes: e.schemes,
            kinds: e.kinds,
            n_reps: MonteCarloConfig::default().n_reps,
            run_experiment: true,
        }
    }
}

impl SimulateConfig {
    pub fn experiment(&self) -> ExperimentConfig {
        ExperimentConfig {
            dgp: self.dgp.clone(),
            chain: self.chain.clone(),
            eval_start: self.eval_start,
            schemes: self.schemes.clone(),
            kinds: self.kinds.clone(),
        }
    }

    pub fn monte_carlo(&self) -> MonteCarloConfig {
        MonteCarloConfig {
            dgp: self.dgp.clone(),
            chain: self.chain.clone(),
            n_reps: self.n_reps,
            kinds: self.kinds.clone(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ForecastConfig {
    pub horizon: usize,
    pub options: ForecastOptions,
}

impl Default for ForecastConfig {
    fn default() -> Self {
        ForecastConfig {
            horizon: 12,
            options: ForecastOptions::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GirfConfig {
    pub options: GirfOptions,
    /// Also simulate the opposite-signed shock and report the asymmetry.
    pub both_signs: bool,
}

impl Default for GirfConfig {
    fn default() -> Self {
        GirfConfig {
            options: GirfOptions::default(),
            both_signs: true,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvaluateConfig {
    /// Long-format predictive draws: variable, origin, horizon, draw, value.
    pub ensembles: Option<PathBuf>,
    /// Realized values: variable, origin, horizon, value.
    pub realized: Option<PathBuf>,
    pub options: EvalOptions,
}

/// Whole run configuration, one TOML section per module. Every key has a
/// default, so an empty file is valid.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub run: RunOptions,
    pub data: DataConfig,
    pub favar: FavarConfig,
    pub forecast: ForecastConfig,
    pub girf: GirfConfig,
    pub sim: SimulateConfig,
    pub evaluate: EvaluateConfig,
}

fn resolve(base: &Path, p: &mut Option<PathBuf>) {
    if let Some(path) = p {
        if path.is_relative() {
            *path = base.join(&*path);
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Read a config file; relative input paths resolve against its
    /// directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = RunConfig::from_toml(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        resolve(base, &mut cfg.data.panel);
        resolve(base, &mut cfg.data.instrument);
        resolve(base, &mut cfg.evaluate.ensembles);
        resolve(base, &mut cfg.evaluate.realized);
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        self.favar.validate()?;
        self.sim.dgp.validate()?;
        self.sim.chain.validate()?;
        if self.forecast.horizon == 0 {
            return Err(Error::Config("forecast.horizon must be at least 1".into()));
        }
        if self.run.threads == Some(0) {
            return Err(Error::Config("run.threads must be at least 1".into()));
        }
        Ok(())
    }
}
