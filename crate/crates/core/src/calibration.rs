//! Fitting `ℓ` to observed prices of signature payoffs.
//!
//! Each model expected-signature coefficient `E[X̂^{(I)}_{0,t}]` is a
//! polynomial in the coefficients of `ℓ` whose monomials scale with the
//! maturity as `t^{h}` for a half-integer `h`. [`ExpectationPolynomial`]
//! builds that polynomial once, so the pricing error and its Jacobian are
//! cheap to evaluate for every maturity in a calibration set. The
//! minimisation itself is a multi-start Levenberg–Marquardt iteration.

use std::collections::HashMap;
use std::io::Write;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use smallvec::SmallVec;

use crate::error::{Error, Result};
use crate::expected_signature::{LeadLagExpectation, TruncationPolicy, DEFAULT_ALGEBRA_ORDER};
use crate::payoffs::SignaturePayoff;
use crate::sig_sde::{SigSdeParams, LEAD, TIME};
use crate::tensor_algebra::{half_shuffle, LinearFunctional, MultiIndex};

type Vars = SmallVec<[u16; 4]>;

#[derive(Clone, Debug)]
struct Monomial {
    vars: Vars,
    coef: f64,
}

/// Monomials of one word sharing the maturity exponent `half_degree / 2`.
#[derive(Clone, Debug)]
struct Group {
    half_degree: u32,
    monomials: Vec<Monomial>,
}

/// `E[X̂^{(I)}_{0,t}]` for every word `I` up to a given length, as
/// polynomials in the coefficient vector of `ℓ`.
#[derive(Clone, Debug)]
pub struct ExpectationPolynomial {
    model_order: usize,
    word_order: usize,
    algebra_order: usize,
    words: Vec<MultiIndex>,
    groups: Vec<Vec<Group>>,
    dropped_tuples: usize,
}

/// Values (and optionally gradients) of every word's expectation at one
/// maturity.
#[derive(Clone, Debug)]
pub struct Evaluation {
    pub values: Vec<f64>,
    /// Row `k` is the gradient of `values[k]`; empty when not requested.
    pub gradients: Vec<Vec<f64>>,
}

impl ExpectationPolynomial {
    /// Polynomials for words of length `≤ word_order` under a model of order
    /// `model_order`, with lifted words capped at `algebra_order` letters.
    pub fn new(model_order: usize, word_order: usize, algebra_order: usize, policy: TruncationPolicy) -> Result<Self> {
        if model_order == 0 {
            return Err(Error::InvalidArgument("model order must be positive".into()));
        }
        let params = SigSdeParams::parameter_words(model_order)?;
        let gens = params
            .iter()
            .map(|k| {
                let mut letters: Vec<u8> = k.letters().iter().map(|&a| if a == 1 { TIME } else { crate::sig_sde::LAG }).collect();
                letters.push(LEAD);
                Ok(LinearFunctional::from_word(MultiIndex::new(3, &letters)?, 1.0))
            })
            .collect::<Result<Vec<_>>>()?;
        let time_gen = LinearFunctional::from_word(MultiIndex::letter(3, TIME)?, 1.0);
        let ll = LeadLagExpectation::new(1.0, algebra_order)?;
        let mut cache: HashMap<MultiIndex, f64> = HashMap::new();

        let words = MultiIndex::all_words(2, word_order)?;
        let mut groups = Vec::with_capacity(words.len());
        let mut dropped_tuples = 0;
        for word in &words {
            let mut acc: HashMap<(u32, Vars), f64> = HashMap::new();
            if !word.is_empty() {
                let mut walk = Walk {
                    word: word.letters(),
                    params: &params,
                    gens: &gens,
                    time_gen: &time_gen,
                    cap: algebra_order,
                    ll: &ll,
                    cache: &mut cache,
                    acc: &mut acc,
                    dropped: 0,
                };
                walk.descend(0, None, &mut Vars::new())?;
                dropped_tuples += walk.dropped;
            }
            let mut by_degree: HashMap<u32, Vec<Monomial>> = HashMap::new();
            for ((h, vars), coef) in acc {
                if coef != 0.0 {
                    by_degree.entry(h).or_default().push(Monomial { vars, coef });
                }
            }
            let mut g: Vec<Group> = by_degree
                .into_iter()
                .map(|(half_degree, mut monomials)| {
                    monomials.sort_by(|a, b| a.vars.cmp(&b.vars));
                    Group { half_degree, monomials }
                })
                .collect();
            g.sort_by_key(|g| g.half_degree);
            groups.push(g);
        }
        if policy == TruncationPolicy::Fail && dropped_tuples > 0 {
            return Err(Error::AlgebraOrderTooSmall { algebra_order, needed: algebra_order + 1 });
        }
        Ok(Self { model_order, word_order, algebra_order, words, groups, dropped_tuples })
    }

    pub fn model_order(&self) -> usize {
        self.model_order
    }

    pub fn word_order(&self) -> usize {
        self.word_order
    }

    pub fn algebra_order(&self) -> usize {
        self.algebra_order
    }

    /// Words `I` in length-then-lex order, starting with `∅`.
    pub fn words(&self) -> &[MultiIndex] {
        &self.words
    }

    /// Number of parameter-word tuples whose lift exceeded the algebra order.
    pub fn dropped_tuples(&self) -> usize {
        self.dropped_tuples
    }

    pub fn monomial_count(&self) -> usize {
        self.groups.iter().flatten().map(|g| g.monomials.len()).sum()
    }

    /// Position of `word` in [`words`](Self::words).
    pub fn word_index(&self, word: &MultiIndex) -> Option<usize> {
        self.words.binary_search(word).ok()
    }

    /// Expectations at each maturity, with gradients if `with_gradient`.
    pub fn evaluate(&self, ell: &[f64], maturities: &[f64], with_gradient: bool) -> Result<Vec<Evaluation>> {
        let p = SigSdeParams::parameter_count(self.model_order);
        if ell.len() != p {
            return Err(Error::InvalidArgument(format!("expected {p} coefficients, got {}", ell.len())));
        }
        let mut out: Vec<Evaluation> = maturities
            .iter()
            .map(|_| Evaluation {
                values: vec![0.0; self.words.len()],
                gradients: if with_gradient { vec![vec![0.0; p]; self.words.len()] } else { Vec::new() },
            })
            .collect();
        let mut grad = vec![0.0; p];
        for (k, groups) in self.groups.iter().enumerate() {
            if k == 0 {
                for e in out.iter_mut() {
                    e.values[0] = 1.0;
                }
                continue;
            }
            for g in groups {
                let (value, touched) = group_value(g, ell, with_gradient.then_some(&mut grad));
                for (e, &t) in out.iter_mut().zip(maturities) {
                    let scale = t.sqrt().powi(g.half_degree as i32);
                    e.values[k] += scale * value;
                    if with_gradient {
                        for &j in &touched {
                            e.gradients[k][j] += scale * grad[j];
                        }
                    }
                }
                for &j in &touched {
                    grad[j] = 0.0;
                }
            }
        }
        Ok(out)
    }

    /// `E[X̂_{0,t}]` over all words up to the word order.
    pub fn expected_signature(&self, ell: &[f64], t: f64) -> Result<LinearFunctional> {
        let e = self.evaluate(ell, &[t], false)?.remove(0);
        LinearFunctional::from_terms(2, self.words.iter().cloned().zip(e.values)).map(|f| f.with_max_order(self.word_order))
    }
}

fn group_value(g: &Group, ell: &[f64], grad: Option<&mut Vec<f64>>) -> (f64, Vec<usize>) {
    let mut value = 0.0;
    match grad {
        None => {
            for m in &g.monomials {
                value += m.coef * m.vars.iter().map(|&j| ell[j as usize]).product::<f64>();
            }
            (value, Vec::new())
        }
        Some(grad) => {
            let mut touched = Vec::new();
            for m in &g.monomials {
                let x: SmallVec<[f64; 4]> = m.vars.iter().map(|&j| ell[j as usize]).collect();
                value += m.coef * x.iter().product::<f64>();
                for (i, &j) in m.vars.iter().enumerate() {
                    let others: f64 = x.iter().enumerate().filter(|&(q, _)| q != i).map(|(_, v)| v).product();
                    let j = j as usize;
                    if grad[j] == 0.0 && !touched.contains(&j) {
                        touched.push(j);
                    }
                    grad[j] += m.coef * others;
                }
            }
            (value, touched)
        }
    }
}

struct Walk<'a> {
    word: &'a [u8],
    params: &'a [MultiIndex],
    gens: &'a [LinearFunctional],
    time_gen: &'a LinearFunctional,
    cap: usize,
    ll: &'a LeadLagExpectation,
    cache: &'a mut HashMap<MultiIndex, f64>,
    acc: &'a mut HashMap<(u32, Vars), f64>,
    dropped: usize,
}

impl Walk<'_> {
    /// Extends the lift of `word[..pos]` by the generators available for
    /// `word[pos]`, one parameter word at a time.
    fn descend(&mut self, pos: usize, lift: Option<&LinearFunctional>, vars: &mut Vars) -> Result<()> {
        if pos == self.word.len() {
            return self.close(lift.expect("non-empty word"), vars);
        }
        let used = lift.map_or(0, |l| l.max_word_len());
        let still_needed = self.word.len() - pos - 1;
        if self.word[pos] == 1 {
            if used + 1 + still_needed > self.cap {
                self.dropped += 1;
                return Ok(());
            }
            let next = extend(lift, self.time_gen)?;
            return self.descend(pos + 1, Some(&next), vars);
        }
        for (j, (k, g)) in self.params.iter().zip(self.gens).enumerate() {
            if used + k.len() + 1 + still_needed > self.cap {
                self.dropped += 1;
                continue;
            }
            let next = extend(lift, g)?;
            vars.push(j as u16);
            self.descend(pos + 1, Some(&next), vars)?;
            vars.pop();
        }
        Ok(())
    }

    fn close(&mut self, lift: &LinearFunctional, vars: &Vars) -> Result<()> {
        let mut value = 0.0;
        let mut half_degree = None;
        for (w, c) in lift.iter() {
            half_degree.get_or_insert_with(|| (2 * w.count(TIME) + w.count(crate::sig_sde::LAG) + w.count(LEAD)) as u32);
            let e = match self.cache.get(w) {
                Some(&e) => e,
                None => {
                    let e = self.ll.coefficient(w.letters())?;
                    self.cache.insert(w.clone(), e);
                    e
                }
            };
            value += c * e;
        }
        if let Some(h) = half_degree {
            let mut key = vars.clone();
            key.sort_unstable();
            *self.acc.entry((h, key)).or_insert(0.0) += value;
        }
        Ok(())
    }
}

fn extend(lift: Option<&LinearFunctional>, gen: &LinearFunctional) -> Result<LinearFunctional> {
    match lift {
        None => Ok(gen.clone()),
        Some(l) => half_shuffle(l, gen, None),
    }
}

/// One calibration target: a signature payoff, its observed price and a
/// positive weight.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CalibrationInstrument {
    pub id: String,
    pub payoff: SignaturePayoff,
    pub price: f64,
    #[serde(default = "one")]
    pub weight: f64,
}

fn one() -> f64 {
    1.0
}

/// Optimizer settings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CalibrationConfig {
    pub starts: usize,
    pub seed: u64,
    pub tol_g: f64,
    pub tol_x: f64,
    pub max_iter: usize,
    pub algebra_order: usize,
    /// Scale of the `∅` coefficient for the first start; searched for when
    /// absent.
    pub initial_scale: Option<f64>,
    /// Standard deviation of the start perturbations relative to the
    /// initial scale.
    pub perturbation: f64,
}

impl Default for CalibrationConfig {
    fn default() -> Self {
        Self {
            starts: 8,
            seed: 0,
            tol_g: 1e-10,
            tol_x: 1e-12,
            max_iter: 2000,
            algebra_order: DEFAULT_ALGEBRA_ORDER,
            initial_scale: None,
            perturbation: 0.25,
        }
    }
}

/// Instruments, model order, spot and optimizer settings.
#[derive(Clone, Debug)]
pub struct CalibrationProblem {
    pub instruments: Vec<CalibrationInstrument>,
    pub order: usize,
    pub x0: f64,
    pub config: CalibrationConfig,
    poly: ExpectationPolynomial,
    /// Per instrument: maturity slot and dense payoff coefficients.
    layout: Vec<(usize, Vec<(usize, f64)>)>,
    maturities: Vec<f64>,
}

impl CalibrationProblem {
    pub fn new(instruments: Vec<CalibrationInstrument>, order: usize, x0: f64, config: CalibrationConfig) -> Result<Self> {
        if instruments.is_empty() {
            return Err(Error::InvalidArgument("calibration needs at least one instrument".into()));
        }
        if config.starts == 0 || config.max_iter == 0 {
            return Err(Error::InvalidArgument("starts and max_iter must be positive".into()));
        }
        for inst in &instruments {
            if !(inst.weight > 0.0 && inst.weight.is_finite()) || !inst.price.is_finite() {
                return Err(Error::InvalidInstrument(format!("{}: weight must be positive and price finite", inst.id)));
            }
        }
        let word_order = instruments.iter().map(|i| i.payoff.order()).max().unwrap_or(0);
        let poly = ExpectationPolynomial::new(order, word_order, config.algebra_order, TruncationPolicy::Report)?;
        let mut maturities: Vec<f64> = Vec::new();
        let mut layout = Vec::with_capacity(instruments.len());
        for inst in &instruments {
            let t = inst.payoff.maturity;
            let slot = match maturities.iter().position(|&m| m == t) {
                Some(s) => s,
                None => {
                    maturities.push(t);
                    maturities.len() - 1
                }
            };
            let coefs = inst
                .payoff
                .phi
                .iter()
                .map(|(w, c)| Ok((poly.word_index(w).expect("within word order"), c)))
                .collect::<Result<Vec<_>>>()?;
            layout.push((slot, coefs));
        }
        Ok(Self { instruments, order, x0, config, poly, layout, maturities })
    }

    pub fn parameter_count(&self) -> usize {
        SigSdeParams::parameter_count(self.order)
    }

    pub fn polynomial(&self) -> &ExpectationPolynomial {
        &self.poly
    }

    /// Model prices `⟨φ_i, E[X̂_{0,t_i}]⟩`.
    pub fn model_prices(&self, ell: &[f64]) -> Result<Vec<f64>> {
        let evals = self.poly.evaluate(ell, &self.maturities, false)?;
        Ok(self
            .layout
            .iter()
            .map(|(slot, coefs)| coefs.iter().map(|&(k, c)| c * evals[*slot].values[k]).sum())
            .collect())
    }

    /// Weighted residuals `√w_i (price_i(ℓ) − p_i)` and optionally their
    /// Jacobian.
    pub fn residuals(&self, ell: &[f64], with_jacobian: bool) -> Result<(DVector<f64>, Option<DMatrix<f64>>)> {
        let evals = self.poly.evaluate(ell, &self.maturities, with_jacobian)?;
        let m = self.instruments.len();
        let p = self.parameter_count();
        let mut r = DVector::zeros(m);
        let mut jac = with_jacobian.then(|| DMatrix::zeros(m, p));
        for (i, ((slot, coefs), inst)) in self.layout.iter().zip(&self.instruments).enumerate() {
            let e = &evals[*slot];
            let sw = inst.weight.sqrt();
            let price: f64 = coefs.iter().map(|&(k, c)| c * e.values[k]).sum();
            r[i] = sw * (price - inst.price);
            if let Some(j) = jac.as_mut() {
                for &(k, c) in coefs {
                    for (col, g) in e.gradients[k].iter().enumerate() {
                        j[(i, col)] += sw * c * g;
                    }
                }
            }
        }
        Ok((r, jac))
    }

    /// `Σ w_i (⟨φ_i, E[X̂_{0,t_i}]⟩ − p_i)²`.
    pub fn objective(&self, ell: &[f64]) -> Result<f64> {
        Ok(self.residuals(ell, false)?.0.norm_squared())
    }

    /// Gradient of the objective from the polynomial structure.
    pub fn gradient(&self, ell: &[f64]) -> Result<Vec<f64>> {
        let (r, j) = self.residuals(ell, true)?;
        Ok((j.expect("requested").transpose() * r * 2.0).iter().copied().collect())
    }

    /// Central finite-difference gradient of the objective.
    pub fn gradient_fd(&self, ell: &[f64], h: f64) -> Result<Vec<f64>> {
        let mut x = ell.to_vec();
        (0..ell.len())
            .map(|j| {
                x[j] = ell[j] + h;
                let up = self.objective(&x)?;
                x[j] = ell[j] - h;
                let down = self.objective(&x)?;
                x[j] = ell[j];
                Ok((up - down) / (2.0 * h))
            })
            .collect()
    }

    fn start_points(&self) -> Result<Vec<Vec<f64>>> {
        let p = self.parameter_count();
        let scale = match self.config.initial_scale {
            Some(s) => s,
            None => self.search_scale()?,
        };
        let mut first = vec![0.0; p];
        first[0] = scale;
        let mut rng = ChaCha8Rng::seed_from_u64(self.config.seed);
        let sd = self.config.perturbation * scale.abs().max(1e-3);
        let mut starts = vec![first.clone()];
        for _ in 1..self.config.starts {
            starts.push(
                first
                    .iter()
                    .map(|&x| {
                        let z: f64 = StandardNormal.sample(&mut rng);
                        x + sd * z
                    })
                    .collect(),
            );
        }
        Ok(starts)
    }

    /// Golden-section search for the best `ℓ = s·∅` with `s ∈ [0, 2]`.
    fn search_scale(&self) -> Result<f64> {
        let p = self.parameter_count();
        let f = |s: f64| -> Result<f64> {
            let mut x = vec![0.0; p];
            x[0] = s;
            self.objective(&x)
        };
        let g = (5f64.sqrt() - 1.0) / 2.0;
        let (mut a, mut b) = (0.0, 2.0);
        let (mut c, mut d) = (b - g * (b - a), a + g * (b - a));
        let (mut fc, mut fd) = (f(c)?, f(d)?);
        for _ in 0..60 {
            if fc < fd {
                b = d;
                d = c;
                fd = fc;
                c = b - g * (b - a);
                fc = f(c)?;
            } else {
                a = c;
                c = d;
                fc = fd;
                d = a + g * (b - a);
                fd = f(d)?;
            }
        }
        Ok(0.5 * (a + b))
    }
}

/// Why a start stopped.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    Gradient,
    Step,
    MaxIter,
    Stalled,
    Diverged,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StartTrace {
    pub start: usize,
    pub initial_objective: f64,
    pub final_objective: f64,
    pub iterations: usize,
    pub reason: StopReason,
    /// Objective after every accepted step, starting with the initial one.
    pub objective_trace: Vec<f64>,
    #[serde(skip)]
    pub point: Vec<f64>,
}

impl StartTrace {
    /// Stalling means no damping level produced a decrease, which happens
    /// at a stationary point once rounding dominates.
    pub fn converged(&self) -> bool {
        matches!(self.reason, StopReason::Gradient | StopReason::Step | StopReason::Stalled)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Residual {
    pub instrument_id: String,
    pub model_price: f64,
    pub market_price: f64,
    pub abs_error: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CalibrationResult {
    pub params: SigSdeParams,
    pub objective: f64,
    pub converged: bool,
    pub best_start: usize,
    pub residuals: Vec<Residual>,
    pub starts: Vec<StartTrace>,
    /// Parameter-word tuples dropped by the algebra truncation.
    pub dropped_tuples: usize,
}

impl CalibrationResult {
    /// Residual table `instrument_id,model_price,market_price,abs_error`.
    pub fn write_residuals_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        for r in &self.residuals {
            wtr.serialize(r)?;
        }
        wtr.flush()?;
        Ok(())
    }
}

fn levenberg_marquardt(problem: &CalibrationProblem, start: usize, x0: Vec<f64>) -> StartTrace {
    let cfg = &problem.config;
    let mut x = x0;
    let diverged = |x: Vec<f64>, f0: f64| StartTrace {
        start,
        initial_objective: f0,
        final_objective: f64::INFINITY,
        iterations: 0,
        reason: StopReason::Diverged,
        objective_trace: vec![f0],
        point: x,
    };
    let Ok((mut r, Some(mut j))) = problem.residuals(&x, true) else {
        return diverged(x, f64::NAN);
    };
    let mut f = r.norm_squared();
    if !f.is_finite() {
        return diverged(x, f);
    }
    let f_initial = f;
    let mut trace = vec![f];
    let mut a = j.transpose() * &j;
    let mut g = j.transpose() * &r;
    // damping relative to the largest curvature, grown by `nu` on rejection
    let mut mu = 1e-3 * (0..a.nrows()).map(|k| a[(k, k)]).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
    let mut nu = 2.0;
    let mut reason = StopReason::MaxIter;
    let mut iterations = 0;
    while iterations < cfg.max_iter {
        if 2.0 * g.amax() < cfg.tol_g {
            reason = StopReason::Gradient;
            break;
        }
        iterations += 1;
        let mut damped = a.clone();
        for k in 0..damped.nrows() {
            damped[(k, k)] += mu;
        }
        let Some(chol) = damped.cholesky() else {
            mu *= nu;
            nu *= 2.0;
            continue;
        };
        let step = chol.solve(&(-&g));
        let x_norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
        if step.norm() < cfg.tol_x * (x_norm + cfg.tol_x) {
            reason = StopReason::Step;
            break;
        }
        let predicted = -(2.0 * step.dot(&g) + step.dot(&(&a * &step)));
        let trial: Vec<f64> = x.iter().zip(step.iter()).map(|(a, b)| a + b).collect();
        let accepted = match problem.residuals(&trial, true) {
            Ok((rt, Some(jt))) if rt.norm_squared().is_finite() && rt.norm_squared() < f => {
                let ft = rt.norm_squared();
                let rho = if predicted > 0.0 { (f - ft) / predicted } else { 1.0 };
                x = trial;
                r = rt;
                j = jt;
                f = ft;
                a = j.transpose() * &j;
                g = j.transpose() * &r;
                trace.push(f);
                mu *= (1.0 - (2.0 * rho - 1.0).powi(3)).max(1.0 / 3.0);
                nu = 2.0;
                true
            }
            _ => false,
        };
        if !accepted {
            mu *= nu;
            nu *= 2.0;
            if !mu.is_finite() || nu > 1e30 {
                reason = StopReason::Stalled;
                break;
            }
        }
    }
    StartTrace { start, initial_objective: f_initial, final_objective: f, iterations, reason, objective_trace: trace, point: x }
}

/// Multi-start Levenberg–Marquardt; returns the lowest objective, ties
/// going to the earlier start.
pub fn calibrate(problem: &CalibrationProblem) -> Result<CalibrationResult> {
    let starts = problem.start_points()?;
    let traces: Vec<StartTrace> = starts
        .into_par_iter()
        .enumerate()
        .map(|(i, x)| levenberg_marquardt(problem, i, x))
        .collect();
    let best = traces
        .iter()
        .filter(|t| t.final_objective.is_finite())
        .min_by(|a, b| a.final_objective.total_cmp(&b.final_objective).then(a.start.cmp(&b.start)))
        .ok_or(Error::AllStartsDiverged(traces.len()))?;
    let params = SigSdeParams::from_vector(problem.order, problem.x0, &best.point)?;
    let prices = problem.model_prices(&best.point)?;
    let residuals = problem
        .instruments
        .iter()
        .zip(prices)
        .map(|(inst, model_price)| Residual {
            instrument_id: inst.id.clone(),
            model_price,
            market_price: inst.price,
            abs_error: (model_price - inst.price).abs(),
        })
        .collect();
    Ok(CalibrationResult {
        params,
        objective: best.final_objective,
        converged: best.converged(),
        best_start: best.start,
        residuals,
        dropped_tuples: problem.poly.dropped_tuples(),
        starts: traces.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expected_signature::model_expected_signature;
    use rand::Rng;

    fn random_ell(order: usize, scale: f64, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p = SigSdeParams::parameter_count(order);
        (0..p).map(|k| if k == 0 { 0.3 } else { scale * rng.gen_range(-1.0..1.0) }).collect()
    }

    #[test]
    fn polynomial_matches_direct_route() {
        for (order, word_order, algebra) in [(1, 3, 6), (2, 3, 10), (2, 4, 8)] {
            let poly = ExpectationPolynomial::new(order, word_order, algebra, TruncationPolicy::Report).unwrap();
            let ell = random_ell(order, 0.2, order as u64);
            let params = SigSdeParams::from_vector(order, 1.0, &ell).unwrap();
            for t in [0.4, 1.0] {
                let direct = model_expected_signature(&params, t, word_order, algebra, TruncationPolicy::Report).unwrap().esig;
                let via = poly.expected_signature(&ell, t).unwrap();
                for w in poly.words() {
                    let (a, b) = (direct.get(w), via.get(w));
                    assert!((a - b).abs() <= 1e-12 * (1.0 + a.abs()), "{w}: {a} vs {b}");
                }
            }
        }
    }

    #[test]
    fn truncation_is_reported_or_refused() {
        let poly = ExpectationPolynomial::new(2, 3, 4, TruncationPolicy::Report).unwrap();
        assert!(poly.dropped_tuples() > 0);
        assert!(ExpectationPolynomial::new(2, 3, 4, TruncationPolicy::Fail).is_err());
        let exact = ExpectationPolynomial::new(1, 2, 6, TruncationPolicy::Fail).unwrap();
        assert_eq!(exact.dropped_tuples(), 0);
    }

    #[test]
    fn zero_volatility_expectations() {
        let poly = ExpectationPolynomial::new(2, 3, 10, TruncationPolicy::Report).unwrap();
        let e = poly.expected_signature(&[0.0; 7], 0.8).unwrap();
        for w in poly.words() {
            let expected = if w.count(2) == 0 { 0.8f64.powi(w.len() as i32) / (1..=w.len()).product::<usize>() as f64 } else { 0.0 };
            assert!((e.get(w) - expected).abs() < 1e-15, "{w}");
        }
    }

    fn instrument(id: &str, phi: &[(&[u8], f64)], t: f64, price: f64) -> CalibrationInstrument {
        CalibrationInstrument {
            id: id.into(),
            payoff: SignaturePayoff::new(LinearFunctional::from_letters(2, phi.iter().copied()).unwrap(), t).unwrap(),
            price,
            weight: 1.0,
        }
    }

    #[test]
    fn constant_payoff_has_zero_objective() {
        let p = CalibrationProblem::new(vec![instrument("c", &[(&[], 1.0)], 1.0, 1.0)], 2, 1.0, CalibrationConfig::default()).unwrap();
        for seed in 0..3 {
            assert_eq!(p.objective(&random_ell(2, 1.0, seed)).unwrap(), 0.0);
        }
        assert!(CalibrationProblem::new(vec![], 2, 1.0, CalibrationConfig::default()).is_err());
    }

    fn rich_instruments(prices: impl Fn(usize) -> f64) -> Vec<CalibrationInstrument> {
        let phis: Vec<Vec<(&[u8], f64)>> = vec![
            vec![(&[2, 2], 1.0)],
            vec![(&[2, 2], 0.5), (&[1, 2], 0.3)],
            vec![(&[2, 2, 2], 1.0), (&[2], 0.1)],
            vec![(&[1, 2, 2], 1.0)],
            vec![(&[2, 1, 2], 0.7), (&[2, 2], -0.2)],
            vec![(&[2, 2, 1], 1.0)],
            vec![(&[2, 2, 2, 2], 1.0)],
            vec![(&[1, 2, 2, 2], 0.4), (&[2, 2], 0.1)],
        ];
        let mut out = Vec::new();
        for (a, t) in [0.5, 1.0].iter().enumerate() {
            for (b, phi) in phis.iter().enumerate() {
                let i = a * phis.len() + b;
                out.push(instrument(&format!("i{i}"), phi, *t, prices(i)));
            }
        }
        out
    }

    #[test]
    fn analytic_gradient_matches_finite_differences() {
        let problem = CalibrationProblem::new(rich_instruments(|i| 0.01 * i as f64), 2, 1.0, CalibrationConfig::default()).unwrap();
        let ell = random_ell(2, 0.3, 11);
        let g = problem.gradient(&ell).unwrap();
        let fd = problem.gradient_fd(&ell, 1e-5).unwrap();
        let scale = g.iter().map(|v| v.abs()).fold(0.0, f64::max);
        for (a, b) in g.iter().zip(&fd) {
            assert!((a - b).abs() <= 1e-4 * scale, "{a} vs {b}");
        }
    }

    #[test]
    fn recovers_prices_of_a_known_model() {
        let truth = random_ell(2, 0.1, 5);
        let template = CalibrationProblem::new(rich_instruments(|_| 0.0), 2, 1.0, CalibrationConfig::default()).unwrap();
        let prices = template.model_prices(&truth).unwrap();
        let cfg = CalibrationConfig { starts: 4, seed: 3, ..CalibrationConfig::default() };
        let problem = CalibrationProblem::new(rich_instruments(|i| prices[i]), 2, 1.0, cfg).unwrap();
        let result = calibrate(&problem).unwrap();
        assert!(result.objective <= 1e-10, "{}", result.objective);
        for r in &result.residuals {
            assert!(r.abs_error < 1e-5);
        }
        for t in &result.starts {
            assert!(t.final_objective <= t.initial_objective);
            assert!(t.objective_trace.windows(2).all(|w| w[1] < w[0]));
        }
        assert_eq!(calibrate(&problem).unwrap(), result);
    }

    #[test]
    fn residual_csv_layout() {
        let problem = CalibrationProblem::new(
            vec![instrument("a", &[(&[2, 2], 1.0)], 1.0, 0.02)],
            1,
            1.0,
            CalibrationConfig { starts: 1, initial_scale: Some(0.1), ..CalibrationConfig::default() },
        )
        .unwrap();
        let result = calibrate(&problem).unwrap();
        let mut buf = Vec::new();
        result.write_residuals_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("instrument_id,model_price,market_price,abs_error\na,"));
        assert!(result.objective < 1e-20);
    }
}
