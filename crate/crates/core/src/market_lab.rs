//! Reference models and Monte Carlo oracles: exact Black–Scholes paths and
//! prices, the synthetic calibration market, the signature lift of
//! Black–Scholes, and empirical expected signatures.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::path_signature::{path_signature_dense, DiscretePath};
use crate::payoffs::{mc_prices, InstrumentKind, MarketInstrument};
use crate::rng::{brownian_increments, path_rng, uniform_grid, PathRng};
use crate::sig_sde::{SigSdeParams, Simulator};
use crate::stats::{par_chunks, McEstimate, MomentAccumulator};
use crate::tensor_algebra::{concat_lf, lin_comb, DenseTensor, LinearFunctional};

/// Geometric Brownian motion `dX = σ X dW` with zero rates.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BsModel {
    pub sigma: f64,
    pub x0: f64,
}

impl BsModel {
    pub fn new(sigma: f64, x0: f64) -> Result<Self> {
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(Error::InvalidArgument(format!("sigma must be positive, got {sigma}")));
        }
        if !(x0 > 0.0 && x0.is_finite()) {
            return Err(Error::InvalidArgument(format!("spot must be positive, got {x0}")));
        }
        Ok(Self { sigma, x0 })
    }

    /// Exact lognormal values on `grid` for the given Brownian increments.
    pub fn values_from_increments(&self, grid: &[f64], dw: &[f64], out: &mut Vec<f64>) {
        out.clear();
        let mut x = self.x0;
        out.push(x);
        for (w, &dwk) in grid.windows(2).zip(dw) {
            x *= (self.sigma * dwk - 0.5 * self.sigma * self.sigma * (w[1] - w[0])).exp();
            out.push(x);
        }
    }
}

fn check_grid(grid: &[f64]) -> Result<()> {
    if grid.len() < 2 || grid[0] != 0.0 || grid.windows(2).any(|w| !(w[1] > w[0])) || grid.iter().any(|t| !t.is_finite()) {
        return Err(Error::InvalidArgument("grid must start at 0 and increase strictly".into()));
    }
    Ok(())
}

/// One exact Black–Scholes path on `grid`.
pub fn bs_simulate<R: rand::Rng + ?Sized>(model: &BsModel, grid: &[f64], rng: &mut R) -> Result<DiscretePath> {
    check_grid(grid)?;
    let mut dw = Vec::with_capacity(grid.len() - 1);
    brownian_increments(rng, grid, &mut dw);
    let mut values = Vec::with_capacity(grid.len());
    model.values_from_increments(grid, &dw, &mut values);
    DiscretePath::scalar(grid.to_vec(), values)
}

fn d1_d2(model: &BsModel, strike: f64, t: f64) -> Result<(f64, f64)> {
    if !(strike > 0.0 && t > 0.0) {
        return Err(Error::InvalidArgument(format!("strike and maturity must be positive, got K={strike}, t={t}")));
    }
    let s = model.sigma * t.sqrt();
    let d1 = ((model.x0 / strike).ln() + 0.5 * s * s) / s;
    Ok((d1, d1 - s))
}

/// Black–Scholes call price at zero rates.
pub fn bs_call_price(model: &BsModel, strike: f64, t: f64) -> Result<f64> {
    let (d1, d2) = d1_d2(model, strike, t)?;
    let n = Normal::standard();
    Ok(model.x0 * n.cdf(d1) - strike * n.cdf(d2))
}

/// Black–Scholes put price at zero rates.
pub fn bs_put_price(model: &BsModel, strike: f64, t: f64) -> Result<f64> {
    let (d1, d2) = d1_d2(model, strike, t)?;
    let n = Normal::standard();
    Ok(strike * n.cdf(-d2) - model.x0 * n.cdf(-d1))
}

/// Signature-model parameters whose volatility functional is the truncated
/// lift of `σ x0 exp(σ W_t − σ² t / 2)`.
/// This is `σ x0 Σ_{k≤N} a^{⊗k}` with `a = σ(2) − σ²/2 (1)`.
pub fn bs_sig_params(model: &BsModel, order: usize) -> Result<SigSdeParams> {
    if order == 0 {
        return Err(Error::InvalidArgument("lift order must be at least 1".into()));
    }
    let s = model.sigma;
    let gen = LinearFunctional::from_letters(2, [(&[2u8][..], s), (&[1u8][..], -0.5 * s * s)])?;
    let mut power = LinearFunctional::unit(2)?;
    let mut sum = power.clone();
    for _ in 0..order {
        power = concat_lf(&power, &gen, Some(order))?;
        sum = lin_comb(1.0, &sum, 1.0, &power)?;
    }
    SigSdeParams::new(order, sum.scale(s * model.x0), model.x0)
}

/// A path law that can be sampled per index.
#[derive(Clone, Debug, PartialEq)]
pub enum PathModel {
    BlackScholes(BsModel),
    SigSde(SigSdeParams),
}

impl PathModel {
    pub fn x0(&self) -> f64 {
        match self {
            PathModel::BlackScholes(m) => m.x0,
            PathModel::SigSde(p) => p.x0(),
        }
    }

    /// A reusable sampler on `grid`; each thread should own one.
    pub fn sampler(&self, grid: &[f64]) -> Result<PathSampler> {
        check_grid(grid)?;
        let engine = match self {
            PathModel::BlackScholes(m) => Engine::Bs(*m),
            PathModel::SigSde(p) => Engine::Sig(Box::new(Simulator::new(p)?)),
        };
        Ok(PathSampler { grid: grid.to_vec(), engine, dw: Vec::new() })
    }
}

enum Engine {
    Bs(BsModel),
    Sig(Box<Simulator>),
}

/// Draws path `index` of stream `seed`; equal arguments give equal paths.
pub struct PathSampler {
    grid: Vec<f64>,
    engine: Engine,
    dw: Vec<f64>,
}

impl PathSampler {
    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    pub fn sample(&mut self, seed: u64, index: u64) -> Result<DiscretePath> {
        let mut values = Vec::with_capacity(self.grid.len());
        self.sample_values(&mut path_rng(seed, index), &mut values);
        DiscretePath::scalar(self.grid.clone(), values)
    }

    /// Values on the grid using increments drawn from `rng`.
    pub fn sample_values(&mut self, rng: &mut PathRng, out: &mut Vec<f64>) {
        brownian_increments(rng, &self.grid, &mut self.dw);
        match &mut self.engine {
            Engine::Bs(m) => m.values_from_increments(&self.grid, &self.dw, out),
            Engine::Sig(sim) => sim.run(&self.grid, &self.dw, out),
        }
    }
}

fn stepped(lo_milli: i64, hi_milli: i64, step_milli: i64) -> Vec<f64> {
    (0..)
        .map(|k| lo_milli + k * step_milli)
        .take_while(|&v| v <= hi_milli)
        .map(|v| v as f64 / 1000.0)
        .collect()
}

/// Product grids of the synthetic market.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MarketGrid {
    pub vanilla_strikes: Vec<f64>,
    pub vanilla_maturities: Vec<f64>,
    pub variance_strikes: Vec<f64>,
    pub variance_maturities: Vec<f64>,
    pub barrier_strikes: Vec<f64>,
    pub barrier_levels: Vec<f64>,
    pub barrier_maturity: f64,
    pub heldout_strikes: Vec<f64>,
    pub heldout_levels: Vec<f64>,
    pub heldout_maturity: f64,
}

impl Default for MarketGrid {
    fn default() -> Self {
        let maturities = stepped(400, 1000, 50);
        let barrier_strikes = stepped(900, 1020, 20);
        Self {
            vanilla_strikes: stepped(500, 1100, 100),
            vanilla_maturities: maturities.clone(),
            variance_strikes: stepped(10, 40, 5),
            variance_maturities: maturities,
            barrier_strikes: barrier_strikes.clone(),
            barrier_levels: stepped(600, 900, 20),
            barrier_maturity: 1.0,
            heldout_strikes: barrier_strikes,
            heldout_levels: stepped(700, 820, 10),
            heldout_maturity: 1.0,
        }
    }
}

impl MarketGrid {
    /// Vanilla, variance and down-and-out instruments, unpriced.
    pub fn calibration_instruments(&self) -> Vec<MarketInstrument> {
        let mut out = Vec::new();
        for &t in &self.vanilla_maturities {
            for &k in &self.vanilla_strikes {
                out.push(MarketInstrument::new(InstrumentKind::VanillaCall, k, t, None));
            }
        }
        for &t in &self.variance_maturities {
            for &k in &self.variance_strikes {
                out.push(MarketInstrument::new(InstrumentKind::VarianceCall, k, t, None));
            }
        }
        for &l in &self.barrier_levels {
            for &k in &self.barrier_strikes {
                out.push(MarketInstrument::new(InstrumentKind::BarrierDownOutCall, k, self.barrier_maturity, Some(l)));
            }
        }
        out
    }

    /// Down-and-in puts kept out of calibration.
    pub fn heldout_instruments(&self) -> Vec<MarketInstrument> {
        let mut out = Vec::new();
        for &l in &self.heldout_levels {
            for &k in &self.heldout_strikes {
                out.push(MarketInstrument::new(InstrumentKind::BarrierDownInPut, k, self.heldout_maturity, Some(l)));
            }
        }
        out
    }
}

/// Settings for generating the Black–Scholes market.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MarketConfig {
    pub sigma: f64,
    pub x0: f64,
    pub horizon: f64,
    pub steps: usize,
    pub n_paths: usize,
    pub seed: u64,
    pub grid: MarketGrid,
}

impl Default for MarketConfig {
    fn default() -> Self {
        Self { sigma: 0.2, x0: 1.0, horizon: 1.0, steps: 100, n_paths: 100_000, seed: 42, grid: MarketGrid::default() }
    }
}

/// Priced instruments with their Monte Carlo standard errors (zero for
/// closed-form prices).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PricedSet {
    pub instruments: Vec<MarketInstrument>,
    pub standard_errors: Vec<f64>,
}

/// The generated market and its provenance.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MarketManifest {
    pub generator: String,
    pub model: BsModel,
    pub horizon: f64,
    pub steps: usize,
    pub n_paths: usize,
    pub seed: u64,
    pub calibration_count: usize,
    pub heldout_count: usize,
    pub max_standard_error: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GeneratedMarket {
    pub calibration: PricedSet,
    pub heldout: PricedSet,
    pub manifest: MarketManifest,
}

fn price_set(model: &BsModel, instruments: Vec<MarketInstrument>, grid: &[f64], n_paths: usize, seed: u64) -> Result<PricedSet> {
    let (closed, mc): (Vec<usize>, Vec<usize>) =
        (0..instruments.len()).partition(|&i| instruments[i].kind == InstrumentKind::VanillaCall);
    let mc_insts: Vec<MarketInstrument> = mc.iter().map(|&i| instruments[i].clone()).collect();
    let estimates = mc_prices(&PathModel::BlackScholes(*model), &mc_insts, grid, n_paths, seed)?;
    let mut priced = instruments;
    let mut se = vec![0.0; priced.len()];
    for &i in &closed {
        priced[i].price = Some(bs_call_price(model, priced[i].strike, priced[i].maturity)?);
    }
    for (&i, e) in mc.iter().zip(&estimates) {
        priced[i].price = Some(e.mean);
        se[i] = e.se;
    }
    Ok(PricedSet { instruments: priced, standard_errors: se })
}

/// Black–Scholes prices for the calibration and held-out grids: vanillas in
/// closed form, everything else by Monte Carlo on a uniform grid.
pub fn bs_market(cfg: &MarketConfig) -> Result<GeneratedMarket> {
    let model = BsModel::new(cfg.sigma, cfg.x0)?;
    if cfg.steps == 0 || !(cfg.horizon > 0.0) {
        return Err(Error::InvalidArgument("steps and horizon must be positive".into()));
    }
    let grid = uniform_grid(cfg.horizon, cfg.steps);
    let calibration = price_set(&model, cfg.grid.calibration_instruments(), &grid, cfg.n_paths, cfg.seed)?;
    let heldout = price_set(&model, cfg.grid.heldout_instruments(), &grid, cfg.n_paths, cfg.seed.wrapping_add(1))?;
    let max_standard_error = calibration.standard_errors.iter().chain(&heldout.standard_errors).copied().fold(0.0, f64::max);
    let manifest = MarketManifest {
        generator: concat!("sigsde ", env!("CARGO_PKG_VERSION")).to_string(),
        model,
        horizon: cfg.horizon,
        steps: cfg.steps,
        n_paths: cfg.n_paths,
        seed: cfg.seed,
        calibration_count: calibration.instruments.len(),
        heldout_count: heldout.instruments.len(),
        max_standard_error,
    };
    Ok(GeneratedMarket { calibration, heldout, manifest })
}

/// Empirical expected signature with per-coefficient standard errors.
#[derive(Clone, Debug, PartialEq)]
pub struct MonteCarloSignature {
    pub mean: LinearFunctional,
    pub se: LinearFunctional,
    pub n_paths: usize,
}

impl MonteCarloSignature {
    pub fn estimate(&self, letters: &[u8]) -> McEstimate {
        McEstimate { mean: self.mean.coef(letters), se: self.se.coef(letters), n: self.n_paths }
    }
}

/// Mean signature of `order` over `n_paths` paths; `sample` receives the
/// stream of path `i` under `seed`.
pub fn mc_expected_signature<F>(sample: F, order: usize, n_paths: usize, seed: u64) -> Result<MonteCarloSignature>
where
    F: Fn(&mut PathRng) -> Result<DiscretePath> + Sync + Send,
{
    if n_paths < 2 {
        return Err(Error::InvalidArgument("Monte Carlo needs at least 2 paths".into()));
    }
    let d = sample(&mut path_rng(seed, 0))?.dim();
    let width = DenseTensor::zeros(d, order)?.as_slice().len();
    let chunks = par_chunks(n_paths, |range| -> Result<MomentAccumulator> {
        let mut acc = MomentAccumulator::new(width);
        for i in range {
            let path = sample(&mut path_rng(seed, i as u64))?;
            if path.dim() != d {
                return Err(Error::InvalidPath("sampled paths change dimension".into()));
            }
            acc.push(path_signature_dense(&path, order)?.as_slice());
        }
        Ok(acc)
    });
    let mut total = MomentAccumulator::new(width);
    for c in chunks {
        total = total.merge(&c?);
    }
    let est = total.estimates();
    let mut mean = DenseTensor::zeros(d, order)?;
    let mut se = DenseTensor::zeros(d, order)?;
    for (i, e) in est.iter().enumerate() {
        mean.as_mut_slice()[i] = e.mean;
        se.as_mut_slice()[i] = e.se;
    }
    Ok(MonteCarloSignature { mean: mean.to_functional(), se: se.to_functional(), n_paths })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::path_signature::add_time;
    use crate::stats::mean_se;

    fn bs() -> BsModel {
        BsModel::new(0.2, 1.0).unwrap()
    }

    #[test]
    fn call_price_examples() {
        let n = Normal::standard();
        let atm = bs_call_price(&bs(), 1.0, 1.0).unwrap();
        assert!((atm - (2.0 * n.cdf(0.1) - 1.0)).abs() < 1e-14);
        assert!((atm - 0.07966).abs() < 1e-5);
        assert!((bs_call_price(&bs(), 1e-8, 1.0).unwrap() - (1.0 - 1e-8)).abs() < 1e-12);
        assert!((bs_call_price(&bs(), 0.9, 1e-10).unwrap() - 0.1).abs() < 1e-12);
        assert!(bs_call_price(&bs(), 1.0, 0.0).is_err());
        // put-call parity at zero rates
        for k in [0.7, 1.0, 1.3] {
            let c = bs_call_price(&bs(), k, 0.6).unwrap();
            let p = bs_put_price(&bs(), k, 0.6).unwrap();
            assert!((c - p - (1.0 - k)).abs() < 1e-14);
        }
    }

    #[test]
    fn model_validation() {
        assert!(BsModel::new(0.0, 1.0).is_err());
        assert!(BsModel::new(0.2, -1.0).is_err());
    }

    #[test]
    fn lift_coefficients() {
        let p = bs_sig_params(&bs(), 4).unwrap();
        assert!((p.ell().coef(&[]) - 0.2).abs() < 1e-15);
        assert!((p.ell().coef(&[2]) - 0.04).abs() < 1e-15);
        assert!((p.ell().coef(&[1]) + 0.004).abs() < 1e-15);
        assert!((p.ell().coef(&[2, 2]) - 0.2 * 0.04).abs() < 1e-15);
        assert!((p.ell().coef(&[2, 1]) + 0.2 * 0.2 * 0.02).abs() < 1e-15);
        assert!((p.ell().coef(&[2, 2, 2, 2]) - 0.2f64.powi(5)).abs() < 1e-15);
        assert!(bs_sig_params(&bs(), 0).is_err());
    }

    #[test]
    fn gbm_moments() {
        let grid = uniform_grid(1.0, 4);
        let finals: Vec<(f64, f64)> = (0..20_000)
            .map(|i| {
                let p = bs_simulate(&bs(), &grid, &mut path_rng(3, i)).unwrap();
                let x = p.values()[4];
                (x, x.ln())
            })
            .collect();
        let m = mean_se(&finals.iter().map(|f| f.0).collect::<Vec<_>>());
        assert!((m.mean - 1.0).abs() < 3.0 * m.se, "{m:?}");
        let logs: Vec<f64> = finals.iter().map(|f| f.1).collect();
        let mu = logs.iter().sum::<f64>() / logs.len() as f64;
        let dev: Vec<f64> = logs.iter().map(|l| (l - mu) * (l - mu)).collect();
        let v = mean_se(&dev);
        assert!((v.mean - 0.04).abs() < 3.0 * v.se, "{v:?}");
    }

    #[test]
    fn zero_vol_limit_is_constant() {
        let m = BsModel { sigma: 1e-300, x0: 1.3 };
        let p = bs_simulate(&m, &uniform_grid(1.0, 5), &mut path_rng(0, 0)).unwrap();
        assert!(p.values().iter().all(|&x| x == 1.3));
    }

    #[test]
    fn default_grid_sizes() {
        let g = MarketGrid::default();
        assert_eq!(g.vanilla_strikes, vec![0.5, 0.6, 0.7, 0.8, 0.9, 1.0, 1.1]);
        assert_eq!(g.vanilla_maturities.len(), 13);
        assert_eq!(g.variance_strikes, vec![0.01, 0.015, 0.02, 0.025, 0.03, 0.035, 0.04]);
        assert_eq!(g.barrier_strikes, vec![0.9, 0.92, 0.94, 0.96, 0.98, 1.0, 1.02]);
        assert_eq!(g.barrier_levels.len(), 16);
        assert_eq!(g.heldout_levels.len(), 13);
        assert_eq!(g.calibration_instruments().len(), 7 * 13 * 2 + 7 * 16);
        assert_eq!(g.heldout_instruments().len(), 7 * 13);
    }

    #[test]
    fn small_market_is_priced_and_reproducible() {
        let cfg = MarketConfig {
            n_paths: 2000,
            steps: 20,
            grid: MarketGrid {
                vanilla_maturities: vec![0.5, 1.0],
                variance_maturities: vec![1.0],
                barrier_levels: vec![0.8],
                heldout_levels: vec![0.8],
                ..MarketGrid::default()
            },
            ..MarketConfig::default()
        };
        let a = bs_market(&cfg).unwrap();
        let b = bs_market(&cfg).unwrap();
        assert_eq!(a, b);
        for (inst, se) in a.calibration.instruments.iter().zip(&a.calibration.standard_errors) {
            assert!(inst.price.unwrap() >= 0.0);
            assert_eq!(*se == 0.0, inst.kind == InstrumentKind::VanillaCall);
        }
        assert_eq!(a.manifest.calibration_count, 14 + 7 + 7);
    }

    #[test]
    fn deterministic_sampler_has_zero_error() {
        let path = DiscretePath::new(vec![0.0, 1.0, 2.0], vec![vec![0.0, 0.0], vec![1.0, 0.5], vec![0.3, 2.0]]).unwrap();
        let mc = mc_expected_signature(|_| Ok(path.clone()), 3, 10, 0).unwrap();
        assert!(mc.se.is_zero());
        let exact = path_signature_dense(&path, 3).unwrap().to_functional();
        for (w, c) in exact.iter() {
            assert!((mc.mean.get(w) - c).abs() < 1e-12);
        }
    }

    #[test]
    fn brownian_second_moment() {
        let grid = uniform_grid(1.0, 16);
        let mc = mc_expected_signature(
            |rng| {
                let mut dw = Vec::new();
                brownian_increments(rng, &grid, &mut dw);
                let mut w = vec![0.0];
                for x in &dw {
                    w.push(w.last().unwrap() + x);
                }
                Ok(add_time(&DiscretePath::scalar(grid.clone(), w)?))
            },
            2,
            20_000,
            9,
        )
        .unwrap();
        let e2 = mc.estimate(&[2]);
        assert!(e2.mean.abs() < 4.0 * e2.se);
        let e22 = mc.estimate(&[2, 2]);
        assert!((e22.mean - 0.5).abs() < 4.0 * e22.se);
    }
}
