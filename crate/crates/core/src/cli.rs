//! Command-line front end. Every subcommand reads one TOML config; flags
//! override its `[run]` section. Exit codes: 0 success, 1 runtime error,
//! 2 usage or configuration error.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use chrono::{Months, NaiveDate};
use clap::{Parser, Subcommand};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::data::{load_instrument, load_panel, RunConfig};
use crate::error::{Error, Result};
use crate::eval::{evaluate, EnsembleRecord, RealizedRecord};
use crate::favar::{forecast, read_chain, run_chain, write_chain};
use crate::identify::{girf, sign_asymmetry};
use crate::sim::{monte_carlo, recursive_forecast_experiment, simulate_factor, simulate_panel, DgpSpec};

#[derive(Debug, Parser)]
#[command(name = "fabart", version, about = "FAVAR with a BART measurement equation")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// TOML run configuration.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[arg(long, global = true)]
    pub out_dir: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate the synthetic panels and run the factor forecast experiment.
    Simulate,
    /// Factor-recovery Monte Carlo on the synthetic DGPs.
    Montecarlo,
    /// Run the Gibbs sampler on the configured panel and dump the draws.
    Estimate,
    /// Predictive ensembles from dumped draws.
    Forecast,
    /// Instrument-identified generalized impulse responses.
    Girf,
    /// Score predictive ensembles against realized values.
    Evaluate,
}

enum Failure {
    Usage(String),
    Runtime(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Runtime(e)
    }
}

/// Parse `args` (including the program name) and run; returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(&cli) {
        Ok(()) => 0,
        Err(Failure::Usage(msg)) => {
            eprintln!("usage error: {msg}");
            2
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e}");
            1
        }
    }
}

fn load_config(cli: &Cli) -> std::result::Result<RunConfig, Failure> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p).map_err(|e| match e {
            Error::Io { .. } => Failure::Runtime(e),
            e => Failure::Usage(e.to_string()),
        })?,
        None => RunConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.run.seed = s;
    }
    if let Some(t) = cli.threads {
        if t == 0 {
            return Err(Failure::Usage("--threads must be at least 1".into()));
        }
        cfg.run.threads = Some(t);
    }
    if let Some(d) = &cli.out_dir {
        cfg.run.out_dir = d.clone();
    }
    Ok(cfg)
}

fn out_subdir(cfg: &RunConfig, name: &str) -> Result<PathBuf> {
    let d = cfg.run.out_dir.join(name);
    fs::create_dir_all(&d).map_err(|e| Error::io(&d, e))?;
    Ok(d)
}

fn require<'a>(p: &'a Option<PathBuf>, key: &str) -> std::result::Result<&'a Path, Failure> {
    p.as_deref().ok_or_else(|| Failure::Usage(format!("config key {key} is required")))
}

fn execute(cli: &Cli) -> std::result::Result<(), Failure> {
    let cfg = load_config(cli)?;
    if let Some(t) = cfg.run.threads {
        // a second call in the same process keeps the first pool
        let _ = rayon::ThreadPoolBuilder::new().num_threads(t).build_global();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.run.seed);
    match cli.command {
        Command::Simulate => cmd_simulate(&cfg, &mut rng),
        Command::Montecarlo => cmd_montecarlo(&cfg, &mut rng),
        Command::Estimate => cmd_estimate(&cfg, &mut rng),
        Command::Forecast => cmd_forecast(&cfg, &mut rng),
        Command::Girf => cmd_girf(&cfg, &mut rng),
        Command::Evaluate => cmd_evaluate(&cfg),
    }
}

/// Monthly dates starting in January 2000.
fn monthly_dates(n: usize) -> Vec<String> {
    let start = NaiveDate::from_ymd_opt(2000, 1, 1).unwrap();
    (0..n)
        .map(|i| (start + Months::new(i as u32)).format("%Y-%m-%d").to_string())
        .collect()
}

fn cmd_simulate(cfg: &RunConfig, rng: &mut ChaCha8Rng) -> std::result::Result<(), Failure> {
    let tables = out_subdir(cfg, "tables")?;
    let sim = &cfg.sim;
    // same seed sequence as the experiment, so the written panels are the
    // ones it estimates on
    let mut probe = rng.clone();
    let factor_seed: u64 = probe.random();
    let panel_seed: u64 = probe.random();
    let factor = simulate_factor(&sim.dgp, &mut ChaCha8Rng::seed_from_u64(factor_seed))?;
    let dates = monthly_dates(factor.len());
    let path = tables.join("sim_factor.csv");
    let mut w = csv::Writer::from_path(&path).map_err(Error::from)?;
    w.write_record(["date", "factor"]).map_err(Error::from)?;
    for (d, f) in dates.iter().zip(&factor) {
        w.write_record([d.clone(), f.to_string()]).map_err(Error::from)?;
    }
    w.flush().map_err(|e| Error::io(&path, e))?;
    for &kind in &sim.kinds {
        let spec = DgpSpec { kind, ..sim.dgp.clone() };
        let p = simulate_panel(&factor, &spec, &mut ChaCha8Rng::seed_from_u64(panel_seed))?;
        let path = tables.join(format!("sim_panel_{}.csv", kind.name()));
        let mut w = csv::Writer::from_path(&path).map_err(Error::from)?;
        let mut header = vec!["date".to_string()];
        header.extend((1..=p.x.ncols()).map(|j| format!("x{j}")));
        w.write_record(&header).map_err(Error::from)?;
        for (t, d) in dates.iter().enumerate() {
            let mut row = vec![d.clone()];
            row.extend(p.x.row(t).iter().map(|v| v.to_string()));
            w.write_record(&row).map_err(Error::from)?;
        }
        w.flush().map_err(|e| Error::io(&path, e))?;
        println!("simulate: {} panel {}x{} -> {}", kind.name(), p.x.nrows(), p.x.ncols(), path.display());
    }
    if sim.run_experiment {
        let res = recursive_forecast_experiment(&sim.experiment(), rng)?;
        let path = tables.join("forecast_rmse.csv");
        res.write_csv(&path)?;
        for r in &res.rows {
            println!(
                "simulate: {} {} {} rmse {:.4} ratio {:.3}",
                r.dgp.name(),
                r.estimator,
                r.scheme,
                r.rmse,
                r.ratio_to_rw
            );
        }
        println!("simulate: forecast table -> {}", path.display());
    }
    Ok(())
}

fn cmd_montecarlo(cfg: &RunConfig, rng: &mut ChaCha8Rng) -> std::result::Result<(), Failure> {
    let tables = out_subdir(cfg, "tables")?;
    let res = monte_carlo(&cfg.sim.monte_carlo(), rng)?;
    res.write_correlations(&tables.join("mc_correlations.csv"))?;
    res.write_errors(&tables.join("mc_errors.csv"))?;
    let path = tables.join("mc_summary.csv");
    let mut w = csv::Writer::from_path(&path).map_err(Error::from)?;
    w.write_record(["dgp", "n_reps", "mean_correlation", "error_grand_mean"])
        .map_err(Error::from)?;
    for s in &res.summaries {
        w.write_record([
            s.kind.name().to_string(),
            s.correlations.len().to_string(),
            s.mean_correlation().to_string(),
            s.error_grand_mean().to_string(),
        ])
        .map_err(Error::from)?;
        println!(
            "montecarlo: {} mean correlation {:.4} error mean {:.4} over {} reps",
            s.kind.name(),
            s.mean_correlation(),
            s.error_grand_mean(),
            s.correlations.len()
        );
    }
    w.flush().map_err(|e| Error::io(&path, e))?;
    Ok(())
}

fn panel_path(cfg: &RunConfig) -> std::result::Result<&Path, Failure> {
    require(&cfg.data.panel, "data.panel")
}

fn cmd_estimate(cfg: &RunConfig, rng: &mut ChaCha8Rng) -> std::result::Result<(), Failure> {
    let loaded = load_panel(panel_path(cfg)?, &cfg.data)?;
    let p = &loaded.panel;
    println!(
        "estimate: panel {}x{} from {} to {}",
        p.n_obs(),
        p.n_vars(),
        p.dates.first().map(String::as_str).unwrap_or("?"),
        p.dates.last().map(String::as_str).unwrap_or("?")
    );
    let res = run_chain(p, &cfg.favar, rng)?;
    let dir = out_subdir(cfg, "draws")?;
    write_chain(&res, &p.names, &dir)?;
    let tables = out_subdir(cfg, "tables")?;
    let path = tables.join("diagnostics.csv");
    let mut w = csv::Writer::from_path(&path).map_err(Error::from)?;
    for d in res.diagnostics() {
        w.serialize(d).map_err(Error::from)?;
    }
    w.flush().map_err(|e| Error::io(&path, e))?;
    println!(
        "estimate: {} retained draws, tree acceptance {:.3} -> {}",
        res.n_draws(),
        res.move_stats.acceptance_rate(),
        dir.display()
    );
    Ok(())
}

fn read_draws(cfg: &RunConfig) -> Result<(crate::favar::ChainResult, Vec<String>)> {
    read_chain(&cfg.run.out_dir.join("draws"))
}

fn cmd_forecast(cfg: &RunConfig, rng: &mut ChaCha8Rng) -> std::result::Result<(), Failure> {
    let loaded = load_panel(panel_path(cfg)?, &cfg.data)?;
    let p = &loaded.panel;
    let (res, names) = read_draws(cfg)?;
    if names != p.names {
        return Err(Failure::Runtime(Error::Data("dumped draws do not match the panel columns".into())));
    }
    let ens = forecast(&res, p, cfg.forecast.horizon, &cfg.forecast.options, rng)?;
    let targets: Vec<usize> = if cfg.data.targets.is_empty() {
        (0..p.n_vars()).collect()
    } else {
        cfg.data
            .targets
            .iter()
            .map(|t| {
                p.names
                    .iter()
                    .position(|n| n == t)
                    .ok_or_else(|| Failure::Usage(format!("target '{t}' is not a panel column")))
            })
            .collect::<std::result::Result<_, _>>()?
    };
    let origin = p.dates.last().cloned().unwrap_or_default();
    let dir = out_subdir(cfg, "forecasts")?;
    let path = dir.join("ensemble.csv");
    let mut w = csv::Writer::from_path(&path).map_err(Error::from)?;
    let mut emit = |variable: &str, h: usize, draws: Vec<f64>| -> Result<()> {
        for (i, v) in draws.into_iter().enumerate() {
            w.serialize(EnsembleRecord {
                variable: variable.to_string(),
                origin: origin.clone(),
                horizon: h,
                draw: i,
                value: v,
            })?;
        }
        Ok(())
    };
    for h in 1..=ens.horizon {
        if let (Some(z), Some(name)) = (ens.z_draws(h), &p.z_name) {
            emit(name, h, z)?;
        }
        for &j in &targets {
            emit(&p.names[j], h, ens.x_draws(j, h))?;
        }
    }
    w.flush().map_err(|e| Error::io(&path, e))?;
    println!(
        "forecast: {} paths, horizon {}, origin {} -> {}",
        ens.x.len(),
        ens.horizon,
        origin,
        path.display()
    );
    Ok(())
}

fn cmd_girf(cfg: &RunConfig, rng: &mut ChaCha8Rng) -> std::result::Result<(), Failure> {
    let loaded = load_panel(panel_path(cfg)?, &cfg.data)?;
    let p = &loaded.panel;
    let inst = load_instrument(require(&cfg.data.instrument, "data.instrument")?)?;
    let (res, _) = read_draws(cfg)?;
    let aligned = inst.align(&p.dates[res.sample_offset..]);
    let dir = out_subdir(cfg, "girf")?;
    let mut opts = cfg.girf.options;
    let name_z = |r: &mut crate::identify::GirfResult| {
        if let (true, Some(n)) = (res.observed_factor(), &p.z_name) {
            r.variables[0] = n.clone();
        }
    };
    let mut pos = girf(&res, &aligned, p.standardization(), &p.names, &opts, rng)?;
    name_z(&mut pos);
    pos.write_tidy(&dir.join("girf_positive.csv"))?;
    println!(
        "girf: {} draws used, {} weak, {} explosive, mean rho^2 {:.3}",
        pos.n_used, pos.n_weak, pos.n_explosive, pos.mean_rho_sq
    );
    if cfg.girf.both_signs {
        opts.shock_sign = -opts.shock_sign;
        let mut neg = girf(&res, &aligned, p.standardization(), &p.names, &opts, rng)?;
        name_z(&mut neg);
        neg.write_tidy(&dir.join("girf_negative.csv"))?;
        let asym = sign_asymmetry(&pos, &neg);
        let path = dir.join("sign_asymmetry.csv");
        let mut w = csv::Writer::from_path(&path).map_err(Error::from)?;
        w.write_record(["variable", "horizon", "value"]).map_err(Error::from)?;
        for (v, name) in pos.variables.iter().enumerate() {
            for (k, h) in pos.horizons.iter().enumerate() {
                w.write_record([name.clone(), h.to_string(), asym[v][k].to_string()])
                    .map_err(Error::from)?;
            }
        }
        w.flush().map_err(|e| Error::io(&path, e))?;
    }
    println!("girf: responses -> {}", dir.display());
    Ok(())
}

fn read_records<T: serde::de::DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let mut r = csv::Reader::from_path(path)?;
    r.deserialize().map(|x| x.map_err(Error::from)).collect()
}

fn cmd_evaluate(cfg: &RunConfig) -> std::result::Result<(), Failure> {
    let ens: Vec<EnsembleRecord> = read_records(require(&cfg.evaluate.ensembles, "evaluate.ensembles")?)?;
    let real: Vec<RealizedRecord> = read_records(require(&cfg.evaluate.realized, "evaluate.realized")?)?;
    let (rows, series) = evaluate(&ens, &real, &cfg.evaluate.options)?;
    let tables = out_subdir(cfg, "tables")?;
    let path = tables.join("evaluation.csv");
    let mut w = csv::Writer::from_path(&path).map_err(Error::from)?;
    for r in &rows {
        w.serialize(r).map_err(Error::from)?;
    }
    w.flush().map_err(|e| Error::io(&path, e))?;
    let spath = tables.join("score_series.csv");
    let mut w = csv::Writer::from_path(&spath).map_err(Error::from)?;
    for s in &series {
        w.serialize(s).map_err(Error::from)?;
    }
    w.flush().map_err(|e| Error::io(&spath, e))?;
    let floored: usize = rows.iter().map(|r| r.n_floored).sum();
    println!(
        "evaluate: {} variable-horizon rows, {} scored origins, {} floored -> {}",
        rows.len(),
        series.len(),
        floored,
        path.display()
    );
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_subcommand_is_a_usage_error() {
        assert_eq!(run(["fabart", "frobnicate"]), 2);
        assert_eq!(run(["fabart"]), 2);
    }

    #[test]
    fn invalid_config_is_a_usage_error() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.toml");
        fs::write(&p, "[favar]\nbogus = 1\n").unwrap();
        assert_eq!(run(["fabart", "estimate", "--config", p.to_str().unwrap()]), 2);
    }

    #[test]
    fn missing_panel_key_is_a_usage_error() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("out");
        assert_eq!(run(["fabart", "estimate", "--out-dir", out.to_str().unwrap()]), 2);
    }

    #[test]
    fn monthly_dates_roll_over_years() {
        let d = monthly_dates(14);
        assert_eq!(d[0], "2000-01-01");
        assert_eq!(d[13], "2001-02-01");
    }
}
