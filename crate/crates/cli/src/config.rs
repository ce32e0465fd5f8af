//! The run configuration: one JSON document with a section per command.
//! Every section is optional and falls back to the defaults of the
//! synthetic Black–Scholes experiment; unknown keys are rejected.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sigsde::calibration::CalibrationConfig;
use sigsde::market_lab::MarketConfig;
use sigsde::payoffs::{maturity_index, Ridge};
use sigsde::rng::uniform_grid;
use sigsde::sig_sde::SigSdeParams;

use crate::error::{CliError, CliResult};

pub const SCHEMA_VERSION: u32 = 1;

pub const MARKET_CSV: &str = "market.csv";
pub const HELDOUT_CSV: &str = "heldout.csv";
pub const MARKET_ERRORS_CSV: &str = "market_errors.csv";
pub const MARKET_MANIFEST: &str = "manifest.json";
pub const PAYOFFS_JSON: &str = "payoffs.json";
pub const FIT_REPORT_CSV: &str = "fit_report.csv";
pub const CALIBRATION_JSON: &str = "calibration.json";
pub const RESIDUALS_CSV: &str = "residuals.csv";
pub const PRICES_CSV: &str = "prices.csv";
pub const PATHS_CSV: &str = "paths.csv";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub schema_version: u32,
    pub out_dir: PathBuf,
    pub gen_market: MarketConfig,
    pub fit_payoffs: FitPayoffsConfig,
    pub calibrate: CalibrateConfig,
    pub price: PriceConfig,
    pub simulate: SimulateConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            out_dir: PathBuf::from("out"),
            gen_market: MarketConfig::default(),
            fit_payoffs: FitPayoffsConfig::default(),
            calibrate: CalibrateConfig::default(),
            price: PriceConfig::default(),
            simulate: SimulateConfig::default(),
        }
    }
}

/// Law of the paths the payoffs are regressed on.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReferenceModel {
    BlackScholes,
    SigSde,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FitPayoffsConfig {
    pub reference_model: ReferenceModel,
    /// Volatility of the Black–Scholes reference.
    pub sigma: f64,
    pub x0: f64,
    /// Parameters of the Sig-SDE reference.
    pub params_file: Option<PathBuf>,
    /// Signature order of the fitted payoffs.
    pub order: usize,
    pub n_paths: usize,
    pub steps: usize,
    pub horizon: f64,
    pub seed: u64,
    pub ridge: Ridge,
    pub market_file: Option<PathBuf>,
    pub heldout_file: Option<PathBuf>,
}

impl Default for FitPayoffsConfig {
    fn default() -> Self {
        Self {
            reference_model: ReferenceModel::BlackScholes,
            sigma: 0.2,
            x0: 1.0,
            params_file: None,
            order: 4,
            n_paths: 20_000,
            steps: 100,
            horizon: 1.0,
            seed: 7,
            ridge: Ridge::Default,
            market_file: None,
            heldout_file: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CalibrateConfig {
    /// Model order `N`.
    pub order: usize,
    pub x0: f64,
    pub payoffs_file: Option<PathBuf>,
    pub optimizer: CalibrationConfig,
    /// Per-instrument weights by id; missing ids weigh 1.
    pub weights: BTreeMap<String, f64>,
    /// Seed the first start from the at-the-money vanilla price when no
    /// initial scale is given.
    pub atm_start: bool,
}

impl Default for CalibrateConfig {
    fn default() -> Self {
        Self {
            order: 4,
            x0: 1.0,
            payoffs_file: None,
            optimizer: CalibrationConfig::default(),
            weights: BTreeMap::new(),
            atm_start: true,
        }
    }
}

/// Which fitted payoffs to price.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PriceSet {
    Heldout,
    Calibration,
    All,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PriceConfig {
    pub set: PriceSet,
    pub payoffs_file: Option<PathBuf>,
    /// A calibration result or a bare parameter file.
    pub params_file: Option<PathBuf>,
    /// Monte Carlo paths for the reference price; 0 skips Monte Carlo.
    pub mc_paths: usize,
    pub steps: usize,
    pub horizon: f64,
    pub seed: u64,
    pub algebra_order: usize,
}

impl Default for PriceConfig {
    fn default() -> Self {
        Self {
            set: PriceSet::Heldout,
            payoffs_file: None,
            params_file: None,
            mc_paths: 100_000,
            steps: 100,
            horizon: 1.0,
            seed: 11,
            algebra_order: sigsde::expected_signature::DEFAULT_ALGEBRA_ORDER,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimulateConfig {
    /// Inline parameters; takes precedence over `params_file`.
    pub params: Option<SigSdeParams>,
    pub params_file: Option<PathBuf>,
    pub n_paths: usize,
    pub steps: usize,
    pub horizon: f64,
    pub seed: u64,
}

impl Default for SimulateConfig {
    fn default() -> Self {
        Self { params: None, params_file: None, n_paths: 1000, steps: 500, horizon: 1.0, seed: 13 }
    }
}

/// Command-line overrides applied on top of the file.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub paths: Option<usize>,
    pub out: Option<PathBuf>,
}

fn invalid(msg: impl Into<String>) -> CliError {
    CliError::Config(msg.into())
}

fn check_grid_times(name: &str, times: &[f64], horizon: f64, steps: usize) -> CliResult<()> {
    if times.is_empty() {
        return Err(invalid(format!("{name} is empty")));
    }
    let grid = uniform_grid(horizon, steps);
    for &t in times {
        maturity_index(&grid, t).map_err(|e| invalid(format!("{name}: {e}")))?;
        if t <= 0.0 {
            return Err(invalid(format!("{name}: maturity {t} must be positive")));
        }
    }
    Ok(())
}

fn check_positive(name: &str, values: &[f64]) -> CliResult<()> {
    if values.is_empty() {
        return Err(invalid(format!("{name} is empty")));
    }
    if values.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
        return Err(invalid(format!("{name} must contain positive values")));
    }
    Ok(())
}

impl RunConfig {
    /// Reads a configuration file; missing sections take defaults.
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| invalid(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| invalid(format!("{}: {e}", path.display())))
    }

    pub fn apply(&mut self, o: &Overrides, command: &str) {
        if let Some(out) = &o.out {
            self.out_dir = out.clone();
        }
        if let Some(seed) = o.seed {
            match command {
                "gen-market" => self.gen_market.seed = seed,
                "fit-payoffs" => self.fit_payoffs.seed = seed,
                "calibrate" => self.calibrate.optimizer.seed = seed,
                "price" => self.price.seed = seed,
                _ => self.simulate.seed = seed,
            }
        }
        if let Some(n) = o.paths {
            match command {
                "gen-market" => self.gen_market.n_paths = n,
                "fit-payoffs" => self.fit_payoffs.n_paths = n,
                "price" => self.price.mc_paths = n,
                "simulate" => self.simulate.n_paths = n,
                _ => {}
            }
        }
    }

    pub fn validate(&self) -> CliResult<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(invalid(format!("schema_version {} is not supported (expected {SCHEMA_VERSION})", self.schema_version)));
        }
        Ok(())
    }

    pub fn validate_gen_market(&self) -> CliResult<()> {
        let m = &self.gen_market;
        check_positive("gen_market.sigma", &[m.sigma])?;
        check_positive("gen_market.x0", &[m.x0])?;
        check_positive("gen_market.horizon", &[m.horizon])?;
        if m.steps == 0 || m.n_paths < 2 {
            return Err(invalid("gen_market needs steps ≥ 1 and n_paths ≥ 2"));
        }
        let g = &m.grid;
        for (name, v) in [
            ("vanilla_strikes", &g.vanilla_strikes),
            ("variance_strikes", &g.variance_strikes),
            ("barrier_strikes", &g.barrier_strikes),
            ("barrier_levels", &g.barrier_levels),
            ("heldout_strikes", &g.heldout_strikes),
            ("heldout_levels", &g.heldout_levels),
        ] {
            check_positive(&format!("gen_market.grid.{name}"), v)?;
        }
        if g.barrier_levels.iter().chain(&g.heldout_levels).any(|&l| l >= m.x0) {
            return Err(invalid("barrier levels must lie below the spot"));
        }
        for (name, v) in [
            ("vanilla_maturities", g.vanilla_maturities.clone()),
            ("variance_maturities", g.variance_maturities.clone()),
            ("barrier_maturity", vec![g.barrier_maturity]),
            ("heldout_maturity", vec![g.heldout_maturity]),
        ] {
            check_grid_times(&format!("gen_market.grid.{name}"), &v, m.horizon, m.steps)?;
        }
        Ok(())
    }

    pub fn validate_fit_payoffs(&self) -> CliResult<()> {
        let f = &self.fit_payoffs;
        check_positive("fit_payoffs.horizon", &[f.horizon])?;
        check_positive("fit_payoffs.x0", &[f.x0])?;
        if f.order == 0 || f.steps == 0 {
            return Err(invalid("fit_payoffs needs order ≥ 1 and steps ≥ 1"));
        }
        let features = (1usize << (f.order + 1)) - 1;
        if f.n_paths < 10 * features {
            return Err(invalid(format!("fit_payoffs.n_paths must be at least {} for order {}", 10 * features, f.order)));
        }
        match f.reference_model {
            ReferenceModel::BlackScholes => check_positive("fit_payoffs.sigma", &[f.sigma])?,
            ReferenceModel::SigSde if f.params_file.is_none() => {
                return Err(invalid("fit_payoffs.params_file is required for the sig_sde reference"))
            }
            ReferenceModel::SigSde => {}
        }
        if let Ridge::Value(l) = f.ridge {
            if !(l >= 0.0 && l.is_finite()) {
                return Err(invalid("fit_payoffs.ridge must be non-negative"));
            }
        }
        Ok(())
    }

    pub fn validate_calibrate(&self) -> CliResult<()> {
        let c = &self.calibrate;
        let o = &c.optimizer;
        if c.order == 0 {
            return Err(invalid("calibrate.order must be positive"));
        }
        if o.starts == 0 || o.max_iter == 0 || o.algebra_order == 0 {
            return Err(invalid("calibrate.optimizer needs positive starts, max_iter and algebra_order"));
        }
        if !(o.tol_g > 0.0 && o.tol_x > 0.0 && o.perturbation >= 0.0) {
            return Err(invalid("calibrate.optimizer tolerances must be positive"));
        }
        if c.weights.values().any(|w| !(*w > 0.0 && w.is_finite())) {
            return Err(invalid("calibrate.weights must be positive"));
        }
        check_positive("calibrate.x0", &[c.x0])
    }

    pub fn validate_price(&self) -> CliResult<()> {
        let p = &self.price;
        if p.mc_paths == 1 || p.steps == 0 || p.algebra_order == 0 {
            return Err(invalid("price needs mc_paths of 0 or ≥ 2, steps ≥ 1 and algebra_order ≥ 1"));
        }
        check_positive("price.horizon", &[p.horizon])
    }

    pub fn validate_simulate(&self) -> CliResult<()> {
        let s = &self.simulate;
        if s.n_paths == 0 || s.steps == 0 {
            return Err(invalid("simulate needs n_paths ≥ 1 and steps ≥ 1"));
        }
        check_positive("simulate.horizon", &[s.horizon])
    }

    /// `explicit` if set, else `name` inside the output directory.
    pub fn resolve(&self, explicit: &Option<PathBuf>, name: &str) -> PathBuf {
        explicit.clone().unwrap_or_else(|| self.out_dir.join(name))
    }
}
