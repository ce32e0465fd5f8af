//! The five pipeline stages. Each reads its inputs from files, writes its
//! outputs into the run's output directory and is deterministic for a
//! fixed configuration.

use std::collections::{hash_map::Entry, HashMap};
use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use sigsde::calibration::{calibrate, CalibrationInstrument, CalibrationProblem, CalibrationResult, ExpectationPolynomial};
use sigsde::expected_signature::TruncationPolicy;
use sigsde::market_lab::{bs_market, BsModel, PathModel, PricedSet};
use sigsde::path_signature::DiscretePath;
use sigsde::payoffs::{
    mc_prices, read_instruments_csv, write_instruments_csv, InstrumentKind, MarketInstrument, PathStats, SignaturePayoff,
    SignatureRegression,
};
use sigsde::rng::uniform_grid;
use sigsde::sig_sde::{simulate_batch, SigSdeParams};
use sigsde::stats::par_chunks;
use sigsde::tensor_algebra::pair;

use crate::config::*;
use crate::error::{CliError, CliResult};

/// Which instrument list a fitted payoff came from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InstrumentSet {
    Calibration,
    Heldout,
}

/// One entry of the fitted-payoff file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FittedPayoff {
    pub id: String,
    pub set: InstrumentSet,
    pub instrument: MarketInstrument,
    pub payoff: SignaturePayoff,
    pub in_sample_rmse: f64,
    pub holdout_rmse: f64,
    pub payoff_std: f64,
    pub payoff_mean: f64,
}

fn create(path: &Path) -> CliResult<BufWriter<File>> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(dir)?;
        }
    }
    let f = File::create(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    Ok(BufWriter::new(f))
}

fn open(path: &Path) -> CliResult<BufReader<File>> {
    let f = File::open(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    Ok(BufReader::new(f))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> CliResult<T> {
    serde_json::from_reader(open(path)?).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

fn priced_csv(path: &Path, set: &PricedSet) -> CliResult<()> {
    let mut w = create(path)?;
    write_instruments_csv(&mut w, &set.instruments)?;
    w.flush()?;
    Ok(())
}

/// Black–Scholes market: `market.csv`, `heldout.csv`, the per-instrument
/// standard errors and a manifest.
pub fn cmd_gen_market(cfg: &RunConfig) -> CliResult<()> {
    cfg.validate_gen_market()?;
    let market = bs_market(&cfg.gen_market)?;
    let out = &cfg.out_dir;
    priced_csv(&out.join(MARKET_CSV), &market.calibration)?;
    priced_csv(&out.join(HELDOUT_CSV), &market.heldout)?;

    let mut w = csv::Writer::from_writer(create(&out.join(MARKET_ERRORS_CSV))?);
    w.write_record(["instrument_id", "set", "standard_error"])?;
    for (set, priced) in [("calibration", &market.calibration), ("heldout", &market.heldout)] {
        for (inst, se) in priced.instruments.iter().zip(&priced.standard_errors) {
            w.write_record([inst.id(), set.to_string(), se.to_string()])?;
        }
    }
    w.flush()?;

    #[derive(Serialize)]
    struct Manifest<'a> {
        schema_version: u32,
        #[serde(flatten)]
        manifest: &'a sigsde::market_lab::MarketManifest,
        config: &'a sigsde::market_lab::MarketConfig,
    }
    write_json(
        &out.join(MARKET_MANIFEST),
        &Manifest { schema_version: SCHEMA_VERSION, manifest: &market.manifest, config: &cfg.gen_market },
    )
}

fn read_params(path: &Path) -> CliResult<SigSdeParams> {
    let value: serde_json::Value = read_json(path)?;
    let inner = match value.get("params") {
        Some(p) => p.clone(),
        None => value,
    };
    serde_json::from_value(inner).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

fn reference_paths(model: &PathModel, grid: &[f64], n: usize, seed: u64) -> CliResult<Vec<DiscretePath>> {
    let chunks = par_chunks(n, |range| -> sigsde::Result<Vec<DiscretePath>> {
        let mut sampler = model.sampler(grid)?;
        range.map(|i| sampler.sample(seed, i as u64)).collect()
    });
    let mut out = Vec::with_capacity(n);
    for c in chunks {
        out.extend(c?);
    }
    Ok(out)
}

/// Regress every market and held-out payoff on signature features of
/// reference paths: `payoffs.json` and `fit_report.csv`.
pub fn cmd_fit_payoffs(cfg: &RunConfig) -> CliResult<()> {
    cfg.validate_fit_payoffs()?;
    let f = &cfg.fit_payoffs;
    let mut instruments = Vec::new();
    for (set, file, name) in [
        (InstrumentSet::Calibration, &f.market_file, MARKET_CSV),
        (InstrumentSet::Heldout, &f.heldout_file, HELDOUT_CSV),
    ] {
        let path = cfg.resolve(file, name);
        for inst in read_instruments_csv(open(&path)?)? {
            inst.validate(f.x0, f.horizon).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
            instruments.push((set, inst));
        }
    }
    if instruments.is_empty() {
        return Err(CliError::Config("no instruments to fit".into()));
    }
    let model = match f.reference_model {
        ReferenceModel::BlackScholes => PathModel::BlackScholes(BsModel::new(f.sigma, f.x0)?),
        ReferenceModel::SigSde => {
            let path = f.params_file.as_ref().expect("validated");
            PathModel::SigSde(read_params(path)?)
        }
    };
    let grid = uniform_grid(f.horizon, f.steps);
    let paths = reference_paths(&model, &grid, f.n_paths, f.seed)?;
    let stats = paths.iter().map(PathStats::new).collect::<sigsde::Result<Vec<_>>>()?;

    let mut regressions: Vec<(f64, SignatureRegression)> = Vec::new();
    let mut fitted = Vec::with_capacity(instruments.len());
    for (set, inst) in instruments {
        let slot = match regressions.iter().position(|(t, _)| *t == inst.maturity) {
            Some(s) => s,
            None => {
                regressions.push((inst.maturity, SignatureRegression::new(&paths, inst.maturity, f.order, f.ridge)?));
                regressions.len() - 1
            }
        };
        let y = stats.iter().map(|s| s.payoff(&inst)).collect::<sigsde::Result<Vec<_>>>()?;
        let report = regressions[slot].1.fit(&y)?;
        fitted.push(FittedPayoff {
            id: inst.id(),
            set,
            instrument: inst,
            payoff: report.payoff,
            in_sample_rmse: report.in_sample_rmse,
            holdout_rmse: report.holdout_rmse,
            payoff_std: report.payoff_std,
            payoff_mean: report.payoff_mean,
        });
    }

    write_json(&cfg.out_dir.join(PAYOFFS_JSON), &fitted)?;
    let mut w = csv::Writer::from_writer(create(&cfg.out_dir.join(FIT_REPORT_CSV))?);
    w.write_record(["instrument_id", "set", "in_sample_rmse", "holdout_rmse", "payoff_std", "payoff_mean"])?;
    for p in &fitted {
        let set = if p.set == InstrumentSet::Calibration { "calibration" } else { "heldout" };
        w.write_record([
            p.id.clone(),
            set.to_string(),
            p.in_sample_rmse.to_string(),
            p.holdout_rmse.to_string(),
            p.payoff_std.to_string(),
            p.payoff_mean.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_payoffs(path: &Path) -> CliResult<Vec<FittedPayoff>> {
    read_json(path)
}

/// Bachelier scale implied by the longest-dated at-the-money vanilla call.
fn atm_scale(payoffs: &[&FittedPayoff], x0: f64) -> Option<f64> {
    payoffs
        .iter()
        .filter(|p| p.instrument.kind == InstrumentKind::VanillaCall && (p.instrument.strike - x0).abs() < 1e-12)
        .filter_map(|p| p.instrument.price.map(|price| (p.instrument.maturity, price)))
        .max_by(|a, b| a.0.total_cmp(&b.0))
        .map(|(t, price)| price * (2.0 * std::f64::consts::PI / t).sqrt())
}

/// Build the calibration problem from the fitted calibration payoffs.
pub fn calibration_problem(cfg: &RunConfig) -> CliResult<CalibrationProblem> {
    cfg.validate_calibrate()?;
    let c = &cfg.calibrate;
    let payoffs = read_payoffs(&cfg.resolve(&c.payoffs_file, PAYOFFS_JSON))?;
    let selected: Vec<&FittedPayoff> = payoffs.iter().filter(|p| p.set == InstrumentSet::Calibration).collect();
    for id in c.weights.keys() {
        if !selected.iter().any(|p| &p.id == id) {
            return Err(CliError::Config(format!("weight given for unknown instrument {id}")));
        }
    }
    let instruments = selected
        .iter()
        .map(|p| {
            let price = p.instrument.price.ok_or_else(|| CliError::Config(format!("{} has no market price", p.id)))?;
            Ok(CalibrationInstrument {
                id: p.id.clone(),
                payoff: p.payoff.clone(),
                price,
                weight: c.weights.get(&p.id).copied().unwrap_or(1.0),
            })
        })
        .collect::<CliResult<Vec<_>>>()?;
    let mut optimizer = c.optimizer.clone();
    if optimizer.initial_scale.is_none() && c.atm_start {
        optimizer.initial_scale = atm_scale(&selected, c.x0);
    }
    Ok(CalibrationProblem::new(instruments, c.order, c.x0, optimizer)?)
}

/// Fit `ℓ` to the calibration payoffs: `calibration.json` and
/// `residuals.csv`. Outputs are written even when the best start did not
/// converge, which is then reported as a numerical failure.
pub fn cmd_calibrate(cfg: &RunConfig) -> CliResult<CalibrationResult> {
    let problem = calibration_problem(cfg)?;
    let result = calibrate(&problem)?;
    write_json(&cfg.out_dir.join(CALIBRATION_JSON), &result)?;
    let mut w = create(&cfg.out_dir.join(RESIDUALS_CSV))?;
    result.write_residuals_csv(&mut w)?;
    w.flush()?;
    if !result.converged {
        return Err(CliError::Numerical(format!(
            "best start stopped without convergence (objective {:e})",
            result.objective
        )));
    }
    Ok(result)
}

/// One row of `prices.csv`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PriceRow {
    pub instrument_id: String,
    pub algebraic_price: f64,
    pub mc_price: Option<f64>,
    pub mc_se: Option<f64>,
    pub fit_holdout_rmse: f64,
    pub market_price: Option<f64>,
}

/// Algebraic prices of fitted payoffs under given parameters, with Monte
/// Carlo prices of the underlying products as reference: `prices.csv`.
pub fn cmd_price(cfg: &RunConfig) -> CliResult<Vec<PriceRow>> {
    cfg.validate_price()?;
    let p = &cfg.price;
    let params = read_params(&cfg.resolve(&p.params_file, CALIBRATION_JSON))?;
    let payoffs = read_payoffs(&cfg.resolve(&p.payoffs_file, PAYOFFS_JSON))?;
    let selected: Vec<&FittedPayoff> = payoffs
        .iter()
        .filter(|f| match p.set {
            PriceSet::All => true,
            PriceSet::Heldout => f.set == InstrumentSet::Heldout,
            PriceSet::Calibration => f.set == InstrumentSet::Calibration,
        })
        .collect();
    if selected.is_empty() {
        return Err(CliError::Config("no payoffs selected for pricing".into()));
    }
    let word_order = selected.iter().map(|f| f.payoff.order()).max().unwrap_or(0);
    let poly = ExpectationPolynomial::new(params.order(), word_order, p.algebra_order, TruncationPolicy::Report)?;
    let ell = params.to_vector();
    let mut esigs: HashMap<u64, sigsde::LinearFunctional> = HashMap::new();
    let mut algebraic = Vec::with_capacity(selected.len());
    for f in &selected {
        let t = f.payoff.maturity;
        if let Entry::Vacant(e) = esigs.entry(t.to_bits()) {
            e.insert(poly.expected_signature(&ell, t)?);
        }
        algebraic.push(pair(&f.payoff.phi, &esigs[&t.to_bits()])?);
    }
    let mc = if p.mc_paths > 0 {
        let grid = uniform_grid(p.horizon, p.steps);
        let insts: Vec<MarketInstrument> = selected.iter().map(|f| f.instrument.clone()).collect();
        Some(mc_prices(&PathModel::SigSde(params.clone()), &insts, &grid, p.mc_paths, p.seed)?)
    } else {
        None
    };
    let rows: Vec<PriceRow> = selected
        .iter()
        .enumerate()
        .map(|(i, f)| PriceRow {
            instrument_id: f.id.clone(),
            algebraic_price: algebraic[i],
            mc_price: mc.as_ref().map(|m| m[i].mean),
            mc_se: mc.as_ref().map(|m| m[i].se),
            fit_holdout_rmse: f.holdout_rmse,
            market_price: f.instrument.price,
        })
        .collect();
    if rows.iter().any(|r| !r.algebraic_price.is_finite()) {
        return Err(CliError::Numerical("non-finite algebraic price".into()));
    }
    let mut w = csv::Writer::from_writer(create(&cfg.out_dir.join(PRICES_CSV))?);
    for r in &rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(rows)
}

/// Sample paths of the model: `paths.csv` with one column per path.
pub fn cmd_simulate(cfg: &RunConfig) -> CliResult<()> {
    cfg.validate_simulate()?;
    let s = &cfg.simulate;
    let params = match &s.params {
        Some(p) => p.clone(),
        None => read_params(&cfg.resolve(&s.params_file, CALIBRATION_JSON))?,
    };
    let grid = uniform_grid(s.horizon, s.steps);
    let paths = simulate_batch(&params, &grid, s.n_paths, s.seed)?;
    let mut values = Vec::with_capacity(grid.len() * paths.len());
    for k in 0..grid.len() {
        values.extend(paths.iter().map(|p| p.values()[k]));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(CliError::Numerical("simulation produced non-finite values".into()));
    }
    let table = DiscretePath::from_flat(grid, paths.len(), values)?;
    let mut w = create(&cfg.out_dir.join(PATHS_CSV))?;
    table.write_csv(&mut w)?;
    w.flush()?;
    Ok(())
}

pub const COMMANDS: [&str; 5] = ["gen-market", "fit-payoffs", "calibrate", "price", "simulate"];

/// Load, override, validate and run one command.
pub fn run(command: &str, config: Option<&Path>, overrides: &Overrides) -> CliResult<()> {
    let mut cfg = match config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    cfg.apply(overrides, command);
    cfg.validate()?;
    match command {
        "gen-market" => cmd_gen_market(&cfg),
        "fit-payoffs" => cmd_fit_payoffs(&cfg),
        "calibrate" => cmd_calibrate(&cfg).map(|_| ()),
        "price" => cmd_price(&cfg).map(|_| ()),
        "simulate" => cmd_simulate(&cfg),
        other => Err(CliError::Config(format!("unknown command {other}"))),
    }
}
