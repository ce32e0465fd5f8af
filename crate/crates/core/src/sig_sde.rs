//! The signature model `dX_t = ⟨ℓ, Ŵ_{0,t}⟩ dW_t`, `X_0 = x0`.
//!
//! Channel conventions for the lead-lag driver `Ŵ^{LL}` are
//! `1 = t`, `2 = W^lag`, `3 = W^lead`. In these coordinates
//! `X_t = ⟨x0·∅ + ℓ⊗(3), Ŵ^{LL}_{0,t}⟩`: the integrand reads the lagged
//! channels and the lead channel is the integrator, which reproduces Itô
//! (left-point) sums.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::expected_signature::TruncationReport;
use crate::path_signature::{add_time, for_each_prefix_signature, DiscretePath};
use crate::rng::{brownian_increments, path_rng};
use crate::stats::par_chunks;
use crate::tensor_algebra::{shuffle_words_into, DenseProjector, DenseTensor, LinearFunctional, MultiIndex, SegmentScratch};

/// Lead-lag channel of time.
pub const TIME: u8 = 1;
/// Lead-lag channel of the lagged Brownian motion.
pub const LAG: u8 = 2;
/// Lead-lag channel of the leading Brownian motion (the integrator).
pub const LEAD: u8 = 3;

/// Model parameters: the volatility functional `ℓ` over words in `(t, W)`
/// of length at most `order`, and the initial spot.
#[derive(Clone, Debug, PartialEq)]
pub struct SigSdeParams {
    order: usize,
    ell: LinearFunctional,
    x0: f64,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ParamsRepr {
    #[serde(rename = "N")]
    order: usize,
    x0: f64,
    ell: LinearFunctional,
}

impl Serialize for SigSdeParams {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        ParamsRepr { order: self.order, x0: self.x0, ell: self.ell.clone() }.serialize(s)
    }
}

impl<'de> Deserialize<'de> for SigSdeParams {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let r = ParamsRepr::deserialize(d)?;
        SigSdeParams::new(r.order, r.ell, r.x0).map_err(serde::de::Error::custom)
    }
}

impl SigSdeParams {
    pub fn new(order: usize, ell: LinearFunctional, x0: f64) -> Result<Self> {
        if order == 0 {
            return Err(Error::InvalidArgument("model order must be positive".into()));
        }
        if ell.d() != 2 {
            return Err(Error::AlphabetMismatch { left: ell.d(), right: 2 });
        }
        if ell.max_word_len() > order {
            return Err(Error::InvalidArgument(format!(
                "ℓ has a word of length {} above the model order {order}",
                ell.max_word_len()
            )));
        }
        if !x0.is_finite() || ell.iter().any(|(_, c)| !c.is_finite()) {
            return Err(Error::InvalidArgument("non-finite parameter".into()));
        }
        Ok(Self { order, ell: ell.with_max_order(order), x0 })
    }

    pub fn zero(order: usize, x0: f64) -> Result<Self> {
        Self::new(order, LinearFunctional::zero(2)?, x0)
    }

    /// `ℓ = σ·∅`: Bachelier dynamics with volatility `σ`.
    pub fn constant_vol(sigma: f64, x0: f64, order: usize) -> Result<Self> {
        Self::new(order, LinearFunctional::scalar(2, sigma)?, x0)
    }

    /// Words indexing the parameter vector, in length-then-lex order.
    pub fn parameter_words(order: usize) -> Result<Vec<MultiIndex>> {
        MultiIndex::all_words(2, order)
    }

    /// `Σ_{k=0..N} 2^k`.
    pub fn parameter_count(order: usize) -> usize {
        (1usize << (order + 1)) - 1
    }

    pub fn from_vector(order: usize, x0: f64, coefs: &[f64]) -> Result<Self> {
        let words = Self::parameter_words(order)?;
        if coefs.len() != words.len() {
            return Err(Error::InvalidArgument(format!(
                "expected {} coefficients, got {}",
                words.len(),
                coefs.len()
            )));
        }
        let ell = LinearFunctional::from_terms(2, words.into_iter().zip(coefs.iter().copied()))?;
        Self::new(order, ell, x0)
    }

    pub fn to_vector(&self) -> Vec<f64> {
        Self::parameter_words(self.order)
            .expect("valid alphabet")
            .iter()
            .map(|w| self.ell.get(w))
            .collect()
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn ell(&self) -> &LinearFunctional {
        &self.ell
    }

    pub fn x0(&self) -> f64 {
        self.x0
    }

    pub fn require_positive_spot(&self) -> Result<()> {
        if self.x0 <= 0.0 {
            return Err(Error::InvalidArgument(format!("initial spot must be positive, got {}", self.x0)));
        }
        Ok(())
    }
}

/// `ℓ⊗(3)` in the lead-lag alphabet.
fn integrator_functional(params: &SigSdeParams) -> Result<LinearFunctional> {
    let lead = LinearFunctional::from_word(MultiIndex::letter(3, LEAD)?, 1.0);
    params.ell.relabel(3, &[TIME, LAG])?.concat(&lead, None)
}

/// `x0·∅ + ℓ⊗(3)`: pairs with the lead-lag signature of the driver to give
/// `X_t`.
pub fn path_functional(params: &SigSdeParams) -> Result<LinearFunctional> {
    let mut f = integrator_functional(params)?;
    f.add_term(MultiIndex::empty(3)?, params.x0);
    Ok(f)
}

/// Builds the word lifts `C_I(ℓ)` by successive half-shuffles with the
/// generators `P_1 = (1)` and `P_2 = ℓ⊗(3)`, truncating every product at
/// the algebra order and recording what was dropped.
pub struct LiftBuilder {
    algebra_order: usize,
    generators: [LinearFunctional; 2],
    length_scale: f64,
    report: TruncationReport,
}

impl LiftBuilder {
    /// `horizon` only feeds the dropped-mass estimate of the report.
    pub fn new(params: &SigSdeParams, algebra_order: usize, horizon: f64) -> Result<Self> {
        let mut report = TruncationReport { algebra_order, ..Default::default() };
        let length_scale = horizon + 6.0 * horizon.sqrt();
        let p1 = LinearFunctional::from_word(MultiIndex::letter(3, TIME)?, 1.0);
        let full = integrator_functional(params)?;
        let mut p2 = LinearFunctional::zero(3)?.with_max_order(algebra_order);
        for (w, c) in full.iter() {
            if w.len() > algebra_order {
                record_drop(&mut report, w.len(), c.abs(), length_scale);
            } else {
                p2.add_term(w.clone(), c);
            }
        }
        let p1 = if algebra_order == 0 {
            record_drop(&mut report, 1, 1.0, length_scale);
            LinearFunctional::zero(3)?
        } else {
            p1
        };
        Ok(Self { algebra_order, generators: [p1, p2], length_scale, report })
    }

    pub fn generator(&self, letter: u8) -> Result<&LinearFunctional> {
        match letter {
            1 | 2 => Ok(&self.generators[letter as usize - 1]),
            _ => Err(Error::LetterOutOfRange { letter: letter as usize, d: 2 }),
        }
    }

    /// `lift ≻ P_letter`, truncated.
    pub fn extend(&mut self, lift: &LinearFunctional, letter: u8) -> Result<LinearFunctional> {
        let cap = self.algebra_order;
        let g = match letter {
            1 | 2 => &self.generators[letter as usize - 1],
            _ => return Err(Error::LetterOutOfRange { letter: letter as usize, d: 2 }),
        };
        let mut map = std::collections::HashMap::new();
        let mut scratch = std::collections::HashMap::new();
        for (v, b) in g.iter() {
            let (prefix, last) = v.split_last().expect("generators have no empty word");
            for (u, a) in lift.iter() {
                let n = u.len() + v.len();
                if n > cap {
                    let count = binomial(n - 1, u.len());
                    record_drop(&mut self.report, n, (a * b).abs() * count, self.length_scale);
                    continue;
                }
                scratch.clear();
                shuffle_words_into(u.letters(), prefix.letters(), a * b, &mut scratch);
                for (mut key, c) in scratch.drain() {
                    key.push(last);
                    *map.entry(key).or_insert(0.0) += c;
                }
            }
        }
        let mut out = LinearFunctional::zero(3)?.with_max_order(cap);
        for (key, c) in map {
            out.add_term(MultiIndex::new(3, &key)?, c);
        }
        Ok(out)
    }

    pub fn report(&self) -> &TruncationReport {
        &self.report
    }

    pub fn into_report(self) -> TruncationReport {
        self.report
    }
}

fn record_drop(report: &mut TruncationReport, n: usize, mass: f64, length_scale: f64) {
    report.dropped_pairs += 1;
    report.max_needed_order = report.max_needed_order.max(n);
    let mut bound = mass;
    for k in 1..=n {
        bound *= length_scale / k as f64;
    }
    report.dropped_mass_bound += bound;
}

fn binomial(n: usize, k: usize) -> f64 {
    let k = k.min(n - k);
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// `C_I(ℓ) = (…((P_{i_1} ≻ P_{i_2}) ≻ P_{i_3}) ≻ …) ≻ P_{i_n}`, so that
/// `X̂^{(I)}_{s,t} = ⟨C_I(ℓ), Ŵ^{LL}_{s,t}⟩`.
pub fn lift_word(word: &MultiIndex, params: &SigSdeParams, algebra_order: usize) -> Result<LinearFunctional> {
    if word.d() != 2 {
        return Err(Error::AlphabetMismatch { left: word.d(), right: 2 });
    }
    let letters = word.letters();
    let (&first, rest) = letters
        .split_first()
        .ok_or_else(|| Error::InvalidArgument("cannot lift the empty word".into()))?;
    let mut builder = LiftBuilder::new(params, algebra_order, 1.0)?;
    let mut lift = builder.generator(first)?.clone();
    for &a in rest {
        lift = builder.extend(&lift, a)?;
    }
    Ok(lift)
}

fn check_grid(grid: &[f64]) -> Result<()> {
    if grid.len() < 2 {
        return Err(Error::InvalidArgument("simulation grid needs at least 2 points".into()));
    }
    if grid[0] != 0.0 {
        return Err(Error::InvalidArgument(format!("simulation grid must start at 0, got {}", grid[0])));
    }
    if grid.windows(2).any(|w| !(w[1] > w[0])) || grid.iter().any(|t| !t.is_finite()) {
        return Err(Error::InvalidArgument("simulation grid must be strictly increasing".into()));
    }
    Ok(())
}

/// Incremental sampler: keeps the running lead-lag signature of the driver
/// at order `N+1` and reads `X` off it after every step.
pub struct Simulator {
    x0: f64,
    sig: DenseTensor,
    projector: DenseProjector,
    scratch: SegmentScratch,
}

impl Simulator {
    pub fn new(params: &SigSdeParams) -> Result<Self> {
        let sig = DenseTensor::identity(3, params.order + 1)?;
        let projector = DenseProjector::new(&path_functional(params)?, &sig)?;
        Ok(Self { x0: params.x0, sig, projector, scratch: SegmentScratch::default() })
    }

    /// Values of `X` on `grid` given the Brownian increments over it.
    pub fn run(&mut self, grid: &[f64], dw: &[f64], out: &mut Vec<f64>) {
        debug_assert_eq!(dw.len() + 1, grid.len());
        self.sig.reset_identity();
        out.clear();
        out.push(self.x0);
        for (k, &dwk) in dw.iter().enumerate() {
            let dt = grid[k + 1] - grid[k];
            self.sig.mul_segment_exp(&[0.0, 0.0, dwk], &mut self.scratch);
            self.sig.mul_segment_exp(&[dt, dwk, 0.0], &mut self.scratch);
            out.push(self.projector.apply(&self.sig));
        }
    }

    /// Running lead-lag signature after the last [`run`](Self::run).
    pub fn driver_signature(&self) -> &DenseTensor {
        &self.sig
    }
}

/// Path of `X` driven by the given Brownian increments.
pub fn simulate_from_increments(params: &SigSdeParams, grid: &[f64], dw: &[f64]) -> Result<DiscretePath> {
    check_grid(grid)?;
    if dw.len() + 1 != grid.len() {
        return Err(Error::InvalidArgument(format!(
            "{} increments for a grid of {} points",
            dw.len(),
            grid.len()
        )));
    }
    let mut sim = Simulator::new(params)?;
    let mut values = Vec::with_capacity(grid.len());
    sim.run(grid, dw, &mut values);
    DiscretePath::scalar(grid.to_vec(), values)
}

/// One sample path of the model on `grid` (which must start at 0).
pub fn simulate<R: rand::Rng + ?Sized>(params: &SigSdeParams, grid: &[f64], rng: &mut R) -> Result<DiscretePath> {
    check_grid(grid)?;
    let mut dw = Vec::with_capacity(grid.len() - 1);
    brownian_increments(rng, grid, &mut dw);
    simulate_from_increments(params, grid, &dw)
}

/// `n_paths` sample paths, path `i` drawn from stream `i` of `seed`.
pub fn simulate_batch(params: &SigSdeParams, grid: &[f64], n_paths: usize, seed: u64) -> Result<Vec<DiscretePath>> {
    check_grid(grid)?;
    Simulator::new(params)?;
    let chunks = par_chunks(n_paths, |range| {
        let mut sim = Simulator::new(params).expect("validated");
        let mut dw = Vec::new();
        range
            .map(|i| {
                let mut rng = path_rng(seed, i as u64);
                brownian_increments(&mut rng, grid, &mut dw);
                let mut values = Vec::with_capacity(grid.len());
                sim.run(grid, &dw, &mut values);
                DiscretePath::scalar(grid.to_vec(), values)
            })
            .collect::<Result<Vec<_>>>()
    });
    Ok(chunks.into_iter().collect::<Result<Vec<_>>>()?.into_iter().flatten().collect())
}

/// `Σ_{t_k} = ⟨ℓ, Ŵ_{0,t_k}⟩` along a sampled scalar Brownian path.
pub fn volatility_series(params: &SigSdeParams, driver: &DiscretePath) -> Result<Vec<f64>> {
    if driver.dim() != 1 {
        return Err(Error::InvalidPath(format!("driver must be scalar, got dimension {}", driver.dim())));
    }
    let hat = add_time(driver);
    let like = DenseTensor::zeros(2, params.order)?;
    let proj = DenseProjector::new(&params.ell, &like)?;
    let mut out = Vec::with_capacity(driver.len());
    for_each_prefix_signature(&hat, params.order, |_, s| out.push(proj.apply(s)))?;
    Ok(out)
}
