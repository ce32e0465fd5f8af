//! WebAssembly bindings behind `www/index.html`.
//!
//! The page offers three operations: load the Black–Scholes parameters for
//! a given volatility, simulate sample paths together with their
//! volatility series, and compare the closed-form expected signature of the
//! price path with a Monte Carlo estimate. Each operation is a plain Rust
//! function so it can be tested natively; the `#[wasm_bindgen]` wrappers only
//! convert errors and buffers for JavaScript.

use serde::Serialize;
use sigsde::expected_signature::{model_expected_signature, TruncationPolicy};
use sigsde::market_lab::{bs_sig_params, mc_expected_signature, BsModel};
use sigsde::path_signature::{add_time, DiscretePath};
use sigsde::rng::{brownian_increments, path_rng, uniform_grid};
use sigsde::sig_sde::{simulate, simulate_from_increments, volatility_series, SigSdeParams};
use sigsde::{Error, LinearFunctional, MultiIndex, Result};
use wasm_bindgen::prelude::*;

const MAX_PATHS: usize = 200_000;
const MAX_STEPS: usize = 2_000;
const ALGEBRA_ORDER: usize = 10;

fn check_sizes(n_paths: usize, steps: usize, horizon: f64) -> Result<()> {
    if n_paths == 0 || n_paths > MAX_PATHS {
        return Err(Error::InvalidArgument(format!("path count must be in 1..={MAX_PATHS}")));
    }
    if steps == 0 || steps > MAX_STEPS {
        return Err(Error::InvalidArgument(format!("step count must be in 1..={MAX_STEPS}")));
    }
    if !(horizon.is_finite() && horizon > 0.0) {
        return Err(Error::InvalidArgument(format!("horizon must be positive, got {horizon}")));
    }
    Ok(())
}

/// Reads `ℓ` from its JSON form; the model order is the longest word used.
pub fn parse_params(ell_json: &str, x0: f64) -> Result<SigSdeParams> {
    let ell: LinearFunctional =
        serde_json::from_str(ell_json).map_err(|e| Error::InvalidArgument(format!("bad parameter JSON: {e}")))?;
    let order = ell.iter().map(|(w, _)| w.len()).max().unwrap_or(0).max(1);
    SigSdeParams::new(order, ell, x0)
}

/// JSON for the `ℓ` that reproduces geometric Brownian motion up to `order`.
pub fn bs_parameters_json(sigma: f64, x0: f64, order: usize) -> Result<String> {
    let params = bs_sig_params(&BsModel::new(sigma, x0)?, order)?;
    serde_json::to_string_pretty(params.ell()).map_err(|e| Error::Numerical(e.to_string()))
}

/// Sample paths on a uniform grid, stored row by row.
#[derive(Clone, Debug, PartialEq)]
pub struct SimulationData {
    pub times: Vec<f64>,
    pub values: Vec<f64>,
    pub vols: Vec<f64>,
}

pub fn simulate_paths(params: &SigSdeParams, n_paths: usize, steps: usize, horizon: f64, seed: u64) -> Result<SimulationData> {
    check_sizes(n_paths, steps, horizon)?;
    let grid = uniform_grid(horizon, steps);
    let mut values = Vec::with_capacity(n_paths * grid.len());
    let mut vols = Vec::with_capacity(n_paths * grid.len());
    let mut dw = Vec::new();
    for i in 0..n_paths {
        let mut rng = path_rng(seed, i as u64);
        brownian_increments(&mut rng, &grid, &mut dw);
        let x = simulate_from_increments(params, &grid, &dw)?;
        let mut w = Vec::with_capacity(grid.len());
        w.push(0.0);
        for (k, d) in dw.iter().enumerate() {
            w.push(w[k] + d);
        }
        let driver = DiscretePath::scalar(grid.clone(), w)?;
        values.extend_from_slice(x.values());
        vols.extend(volatility_series(params, &driver)?);
    }
    Ok(SimulationData { times: grid, values, vols })
}

#[derive(Clone, Debug, Serialize)]
pub struct WordComparison {
    pub word: String,
    pub algebraic: f64,
    pub monte_carlo: f64,
    pub standard_error: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct SignatureCheck {
    pub maturity: f64,
    pub n_paths: usize,
    pub truncated_pairs: usize,
    pub rows: Vec<WordComparison>,
}

/// Expected signature of `(t, X_t)` on `[0, maturity]` for every word up to
/// `word_order`: closed form next to a Monte Carlo estimate.
pub fn signature_check(
    params: &SigSdeParams,
    maturity: f64,
    word_order: usize,
    n_paths: usize,
    steps: usize,
    seed: u64,
) -> Result<SignatureCheck> {
    check_sizes(n_paths, steps, maturity)?;
    if !(1..=4).contains(&word_order) {
        return Err(Error::InvalidArgument(format!("word order must be in 1..=4, got {word_order}")));
    }
    let exact = model_expected_signature(params, maturity, word_order, ALGEBRA_ORDER, TruncationPolicy::Report)?;
    let grid = uniform_grid(maturity, steps);
    let mc = mc_expected_signature(|rng| simulate(params, &grid, rng).map(|p| add_time(&p)), word_order, n_paths, seed)?;
    let rows = MultiIndex::all_words(2, word_order)?
        .into_iter()
        .filter(|w| !w.is_empty())
        .map(|w| {
            let est = mc.estimate(w.letters());
            let algebraic = exact.esig.coef(w.letters());
            WordComparison { word: w.to_string(), algebraic, monte_carlo: est.mean, standard_error: est.se }
        })
        .collect();
    Ok(SignatureCheck { maturity, n_paths, truncated_pairs: exact.truncation.dropped_pairs, rows })
}

fn js_err(e: Error) -> JsError {
    JsError::new(&e.to_string())
}

#[wasm_bindgen]
pub fn bs_parameters(sigma: f64, x0: f64, order: usize) -> std::result::Result<String, JsError> {
    bs_parameters_json(sigma, x0, order).map_err(js_err)
}

/// Simulation result handed to JavaScript as flat typed arrays.
#[wasm_bindgen]
pub struct Simulation {
    inner: SimulationData,
}

#[wasm_bindgen]
impl Simulation {
    #[wasm_bindgen(getter)]
    pub fn points(&self) -> usize {
        self.inner.times.len()
    }

    pub fn times(&self) -> Vec<f64> {
        self.inner.times.clone()
    }

    pub fn values(&self) -> Vec<f64> {
        self.inner.values.clone()
    }

    pub fn vols(&self) -> Vec<f64> {
        self.inner.vols.clone()
    }
}

#[wasm_bindgen]
pub fn simulate_model(
    ell_json: &str,
    x0: f64,
    n_paths: usize,
    steps: usize,
    horizon: f64,
    seed: u32,
) -> std::result::Result<Simulation, JsError> {
    let params = parse_params(ell_json, x0).map_err(js_err)?;
    let inner = simulate_paths(&params, n_paths, steps, horizon, seed as u64).map_err(js_err)?;
    Ok(Simulation { inner })
}

/// Returns the comparison table as JSON.
#[wasm_bindgen]
pub fn expected_signature_check(
    ell_json: &str,
    x0: f64,
    maturity: f64,
    word_order: usize,
    n_paths: usize,
    steps: usize,
    seed: u32,
) -> std::result::Result<String, JsError> {
    let params = parse_params(ell_json, x0).map_err(js_err)?;
    let check = signature_check(&params, maturity, word_order, n_paths, steps, seed as u64).map_err(js_err)?;
    serde_json::to_string(&check).map_err(|e| JsError::new(&e.to_string()))
}
