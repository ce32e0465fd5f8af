//! Pathwise payoffs of the calibration products, their regression onto
//! signature features, algebraic pricing by pairing with an expected
//! signature, and Monte Carlo prices as the reference.

use std::fmt;
use std::io::{Read, Write};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::market_lab::PathModel;
use crate::path_signature::{add_time, for_each_prefix_signature, DiscretePath};
use crate::stats::{par_chunks, McEstimate, MomentAccumulator};
use crate::tensor_algebra::{pair, LinearFunctional, MultiIndex};

const TIME_TOL: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InstrumentKind {
    VanillaCall,
    VarianceCall,
    BarrierDownOutCall,
    BarrierDownInPut,
}

impl InstrumentKind {
    pub fn as_str(self) -> &'static str {
        match self {
            InstrumentKind::VanillaCall => "vanilla_call",
            InstrumentKind::VarianceCall => "variance_call",
            InstrumentKind::BarrierDownOutCall => "barrier_down_out_call",
            InstrumentKind::BarrierDownInPut => "barrier_down_in_put",
        }
    }

    pub fn is_barrier(self) -> bool {
        matches!(self, InstrumentKind::BarrierDownOutCall | InstrumentKind::BarrierDownInPut)
    }
}

impl fmt::Display for InstrumentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for InstrumentKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "vanilla_call" => InstrumentKind::VanillaCall,
            "variance_call" => InstrumentKind::VarianceCall,
            "barrier_down_out_call" => InstrumentKind::BarrierDownOutCall,
            "barrier_down_in_put" => InstrumentKind::BarrierDownInPut,
            other => return Err(Error::Parse(format!("unknown instrument kind {other}"))),
        })
    }
}

/// A payoff specification with an optional observed price. Variance-call
/// strikes are in variance units.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MarketInstrument {
    pub kind: InstrumentKind,
    pub strike: f64,
    pub maturity: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub barrier: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub price: Option<f64>,
}

impl MarketInstrument {
    pub fn new(kind: InstrumentKind, strike: f64, maturity: f64, barrier: Option<f64>) -> Self {
        Self { kind, strike, maturity, barrier, price: None }
    }

    pub fn with_price(mut self, price: f64) -> Self {
        self.price = Some(price);
        self
    }

    pub fn validate(&self, x0: f64, horizon: f64) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidInstrument(format!("{}: {m}", self.id())));
        if !(self.strike > 0.0 && self.strike.is_finite()) {
            return bad("strike must be positive".into());
        }
        if !(self.maturity > 0.0 && self.maturity <= horizon + TIME_TOL) {
            return bad(format!("maturity must lie in (0, {horizon}]"));
        }
        match (self.kind.is_barrier(), self.barrier) {
            (true, None) => return bad("barrier level missing".into()),
            (true, Some(l)) if !(l < x0) => return bad(format!("barrier {l} must be below spot {x0}")),
            (false, Some(_)) => return bad("barrier given for a non-barrier product".into()),
            _ => {}
        }
        if let Some(p) = self.price {
            if !p.is_finite() {
                return bad("non-finite price".into());
            }
        }
        Ok(())
    }

    /// Stable textual identifier, e.g. `vanilla_call_K0.9_t0.5`.
    pub fn id(&self) -> String {
        match self.barrier {
            Some(l) => format!("{}_K{}_t{}_L{}", self.kind, self.strike, self.maturity, l),
            None => format!("{}_K{}_t{}", self.kind, self.strike, self.maturity),
        }
    }
}

/// Instrument list CSV: `kind,strike,maturity,barrier,price`.
pub fn write_instruments_csv<W: Write>(w: W, instruments: &[MarketInstrument]) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(["kind", "strike", "maturity", "barrier", "price"])?;
    for inst in instruments {
        wtr.write_record([
            inst.kind.as_str().to_string(),
            inst.strike.to_string(),
            inst.maturity.to_string(),
            inst.barrier.map(|x| x.to_string()).unwrap_or_default(),
            inst.price.map(|x| x.to_string()).unwrap_or_default(),
        ])?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn read_instruments_csv<R: Read>(r: R) -> Result<Vec<MarketInstrument>> {
    let mut rdr = csv::Reader::from_reader(r);
    let headers = rdr.headers()?.clone();
    if headers.iter().collect::<Vec<_>>() != ["kind", "strike", "maturity", "barrier", "price"] {
        return Err(Error::Parse("expected header kind,strike,maturity,barrier,price".into()));
    }
    let num = |s: &str| s.trim().parse::<f64>().map_err(|e| Error::Parse(format!("{s}: {e}")));
    let opt = |s: &str| if s.trim().is_empty() { Ok(None) } else { num(s).map(Some) };
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        out.push(MarketInstrument {
            kind: rec[0].parse()?,
            strike: num(&rec[1])?,
            maturity: num(&rec[2])?,
            barrier: opt(&rec[3])?,
            price: opt(&rec[4])?,
        });
    }
    Ok(out)
}

/// Index of the sample at time `t` on `times`.
pub fn maturity_index(times: &[f64], t: f64) -> Result<usize> {
    let last = *times.last().expect("non-empty grid");
    if t > last + TIME_TOL {
        return Err(Error::InvalidInstrument(format!("maturity {t} beyond path horizon {last}")));
    }
    let k = times.partition_point(|&s| s < t - TIME_TOL);
    if k < times.len() && (times[k] - t).abs() <= TIME_TOL {
        Ok(k)
    } else {
        Err(Error::InvalidInstrument(format!("maturity {t} is not a sampling time")))
    }
}

/// Running minimum and discrete quadratic variation of a scalar path, so
/// many instruments can be read off one path in O(1) each.
pub struct PathStats<'a> {
    path: &'a DiscretePath,
    running_min: Vec<f64>,
    running_qv: Vec<f64>,
}

impl<'a> PathStats<'a> {
    pub fn new(path: &'a DiscretePath) -> Result<Self> {
        if path.dim() != 1 {
            return Err(Error::InvalidPath(format!("payoffs need a scalar path, got dimension {}", path.dim())));
        }
        let v = path.values();
        let mut running_min = Vec::with_capacity(v.len());
        let mut running_qv = Vec::with_capacity(v.len());
        let (mut m, mut q) = (v[0], 0.0);
        running_min.push(m);
        running_qv.push(q);
        for w in v.windows(2) {
            m = m.min(w[1]);
            q += (w[1] - w[0]) * (w[1] - w[0]);
            running_min.push(m);
            running_qv.push(q);
        }
        Ok(Self { path, running_min, running_qv })
    }

    pub fn payoff(&self, inst: &MarketInstrument) -> Result<f64> {
        let k = maturity_index(self.path.times(), inst.maturity)?;
        let x = self.path.values()[k];
        let barrier = || inst.barrier.ok_or_else(|| Error::InvalidInstrument(format!("{}: barrier missing", inst.id())));
        Ok(match inst.kind {
            InstrumentKind::VanillaCall => (x - inst.strike).max(0.0),
            InstrumentKind::VarianceCall => (self.running_qv[k] - inst.strike).max(0.0),
            InstrumentKind::BarrierDownOutCall => {
                if self.running_min[k] > barrier()? {
                    (x - inst.strike).max(0.0)
                } else {
                    0.0
                }
            }
            InstrumentKind::BarrierDownInPut => {
                if self.running_min[k] < barrier()? {
                    (inst.strike - x).max(0.0)
                } else {
                    0.0
                }
            }
        })
    }
}

/// Pathwise payoff; barriers are monitored at the sampling times.
pub fn evaluate_payoff(path: &DiscretePath, inst: &MarketInstrument) -> Result<f64> {
    PathStats::new(path)?.payoff(inst)
}

/// A payoff `⟨φ, X̂_{0,T}⟩` on the signature of `(t, X)`.
#[derive(Clone, Debug, PartialEq)]
pub struct SignaturePayoff {
    pub phi: LinearFunctional,
    pub maturity: f64,
}

#[derive(Serialize, Deserialize)]
struct SignaturePayoffRepr {
    #[serde(flatten)]
    phi: LinearFunctional,
    maturity: f64,
}

impl Serialize for SignaturePayoff {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        SignaturePayoffRepr { phi: self.phi.clone(), maturity: self.maturity }.serialize(s)
    }
}

impl<'de> Deserialize<'de> for SignaturePayoff {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let r = SignaturePayoffRepr::deserialize(d)?;
        SignaturePayoff::new(r.phi, r.maturity).map_err(serde::de::Error::custom)
    }
}

impl SignaturePayoff {
    pub fn new(phi: LinearFunctional, maturity: f64) -> Result<Self> {
        if phi.d() != 2 {
            return Err(Error::AlphabetMismatch { left: phi.d(), right: 2 });
        }
        if !(maturity > 0.0 && maturity.is_finite()) {
            return Err(Error::InvalidArgument(format!("maturity must be positive, got {maturity}")));
        }
        Ok(Self { phi, maturity })
    }

    /// Longest word in `φ`.
    pub fn order(&self) -> usize {
        self.phi.max_word_len()
    }
}

/// `⟨φ, E[X̂_{0,T}]⟩`.
pub fn price_signature_payoff(payoff: &SignaturePayoff, esig: &LinearFunctional) -> Result<f64> {
    if let Some(n) = esig.max_order() {
        if n < payoff.order() {
            return Err(Error::AlgebraOrderTooSmall { algebra_order: n, needed: payoff.order() });
        }
    }
    pair(&payoff.phi, esig)
}

/// Signature features of `(t, X)` over `[0, t_k]` at selected sampling
/// indices, one row block per index.
pub fn signature_features(path: &DiscretePath, indices: &[usize], order: usize) -> Result<Vec<Vec<f64>>> {
    let hat = add_time(path);
    let mut rows = vec![Vec::new(); indices.len()];
    for_each_prefix_signature(&hat, order, |k, s| {
        for (slot, &want) in indices.iter().enumerate() {
            if want == k {
                rows[slot] = s.as_slice().to_vec();
            }
        }
    })?;
    if rows.iter().any(|r| r.is_empty()) {
        return Err(Error::InvalidArgument("feature index outside the path".into()));
    }
    Ok(rows)
}

/// Ridge penalty for the payoff regression.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Ridge {
    /// Plain least squares; rank deficiency is an error.
    None,
    /// `1e-6 · trace(XᵀX) / features`.
    Default,
    Value(f64),
}

/// Least-squares regression of payoffs on signature features of a fixed
/// path sample at one maturity. The first 80% of paths train, the rest are
/// held out.
pub struct SignatureRegression {
    maturity: f64,
    order: usize,
    words: Vec<MultiIndex>,
    train: DMatrix<f64>,
    holdout: DMatrix<f64>,
    solve: DMatrix<f64>,
}

/// Fitted payoff and its diagnostics.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub payoff: SignaturePayoff,
    pub in_sample_rmse: f64,
    pub holdout_rmse: f64,
    /// Standard deviation of the payoff over all paths.
    pub payoff_std: f64,
    /// Mean payoff over all paths.
    pub payoff_mean: f64,
}

impl SignatureRegression {
    pub fn new(paths: &[DiscretePath], maturity: f64, order: usize, ridge: Ridge) -> Result<Self> {
        let words = MultiIndex::all_words(2, order)?;
        let p = words.len();
        if paths.len() < 10 * p {
            return Err(Error::InvalidArgument(format!(
                "{} paths for {p} features; need at least {}",
                paths.len(),
                10 * p
            )));
        }
        let n_train = paths.len() * 4 / 5;
        let mut rows = Vec::with_capacity(paths.len() * p);
        for path in paths {
            let k = maturity_index(path.times(), maturity)?;
            rows.extend(signature_features(path, &[k], order)?.remove(0));
        }
        let all = DMatrix::from_row_slice(paths.len(), p, &rows);
        let train = all.rows(0, n_train).into_owned();
        let holdout = all.rows(n_train, paths.len() - n_train).into_owned();

        let gram_trace: f64 = train.iter().map(|x| x * x).sum();
        let lambda = match ridge {
            Ridge::None => 0.0,
            Ridge::Default => 1e-6 * gram_trace / p as f64,
            Ridge::Value(l) if l >= 0.0 && l.is_finite() => l,
            Ridge::Value(l) => return Err(Error::InvalidArgument(format!("ridge must be non-negative, got {l}"))),
        };
        let svd = train.clone().svd(true, true);
        let (u, v_t) = (svd.u.expect("requested"), svd.v_t.expect("requested"));
        let s_max = svd.singular_values.max();
        let tol = s_max * 1e-12 * (n_train.max(p) as f64);
        let rank = svd.singular_values.iter().filter(|&&s| s > tol).count();
        if lambda == 0.0 && rank < p {
            return Err(Error::RankDeficient { rank, features: p });
        }
        // β = V diag(s / (s² + λ)) Uᵀ y; minimum norm on the null space
        let shrink = DVector::from_iterator(
            svd.singular_values.len(),
            svd.singular_values.iter().map(|&s| if s > tol || lambda > 0.0 { s / (s * s + lambda) } else { 0.0 }),
        );
        let solve = v_t.transpose() * DMatrix::from_diagonal(&shrink) * u.transpose();
        Ok(Self { maturity, order, words, train, holdout, solve })
    }

    pub fn n_paths(&self) -> usize {
        self.train.nrows() + self.holdout.nrows()
    }

    /// Fit the payoff samples `y` (one per path, in path order).
    pub fn fit(&self, y: &[f64]) -> Result<FitReport> {
        if y.len() != self.n_paths() {
            return Err(Error::InvalidArgument(format!("{} payoffs for {} paths", y.len(), self.n_paths())));
        }
        let n_train = self.train.nrows();
        let y_train = DVector::from_column_slice(&y[..n_train]);
        let y_hold = DVector::from_column_slice(&y[n_train..]);
        let beta = &self.solve * &y_train;
        let rmse = |x: &DMatrix<f64>, y: &DVector<f64>| {
            let r = x * &beta - y;
            (r.norm_squared() / y.len().max(1) as f64).sqrt()
        };
        let phi = LinearFunctional::from_terms(2, self.words.iter().cloned().zip(beta.iter().copied()))?
            .with_max_order(self.order);
        let stats = crate::stats::mean_se(y);
        Ok(FitReport {
            payoff: SignaturePayoff::new(phi, self.maturity)?,
            in_sample_rmse: rmse(&self.train, &y_train),
            holdout_rmse: rmse(&self.holdout, &y_hold),
            payoff_std: stats.se * (y.len() as f64).sqrt(),
            payoff_mean: stats.mean,
        })
    }
}

/// Regress one instrument's payoff on signature features of `paths`.
pub fn fit_signature_payoff(paths: &[DiscretePath], inst: &MarketInstrument, order: usize, ridge: Ridge) -> Result<FitReport> {
    let reg = SignatureRegression::new(paths, inst.maturity, order, ridge)?;
    let y = paths.iter().map(|p| evaluate_payoff(p, inst)).collect::<Result<Vec<_>>>()?;
    reg.fit(&y)
}

/// Monte Carlo prices of several instruments on shared paths.
pub fn mc_prices(model: &PathModel, instruments: &[MarketInstrument], grid: &[f64], n_paths: usize, seed: u64) -> Result<Vec<McEstimate>> {
    if n_paths < 2 {
        return Err(Error::InvalidArgument("Monte Carlo needs at least 2 paths".into()));
    }
    let horizon = *grid.last().ok_or_else(|| Error::InvalidArgument("empty grid".into()))?;
    for inst in instruments {
        inst.validate(model.x0(), horizon)?;
        maturity_index(grid, inst.maturity)?;
    }
    let chunks = par_chunks(n_paths, |range| -> Result<MomentAccumulator> {
        let mut sampler = model.sampler(grid)?;
        let mut acc = MomentAccumulator::new(instruments.len());
        let mut row = vec![0.0; instruments.len()];
        for i in range {
            let path = sampler.sample(seed, i as u64)?;
            let stats = PathStats::new(&path)?;
            for (r, inst) in row.iter_mut().zip(instruments) {
                *r = stats.payoff(inst)?;
            }
            acc.push(&row);
        }
        Ok(acc)
    });
    let mut total = MomentAccumulator::new(instruments.len());
    for c in chunks {
        total = total.merge(&c?);
    }
    Ok(total.estimates())
}

/// Monte Carlo price and standard error of one instrument.
pub fn mc_price(model: &PathModel, inst: &MarketInstrument, grid: &[f64], n_paths: usize, seed: u64) -> Result<McEstimate> {
    Ok(mc_prices(model, std::slice::from_ref(inst), grid, n_paths, seed)?[0])
}
