//! Closed-form expected signatures.
//!
//! For the time-augmented Brownian motion `Ŵ = (t, W)` the expected
//! signature is `E_T = exp(T·(1) + T/2·(2,2))`. The lead-lag lift over the
//! three channels `(t, W^lag, W^lead)` differs from `Ŵ` only through the
//! area between the two Brownian channels, which accumulates like `±½ dt`.
//! Its coefficients are therefore obtained by cutting a word into blocks of
//! length one or two, mapping each block with [`alpha`], and pairing the
//! resulting word with `E_T`.
//!
//! The model expected signature `E[X̂_{0,T}]` of `(t, X)` follows by pairing
//! the word lifts `C_I(ℓ)` of [`crate::sig_sde`] with that closed form.

use std::collections::HashMap;
use std::sync::{Arc, OnceLock, RwLock};

use serde::Serialize;

use crate::error::{Error, Result};
use crate::sig_sde::{LiftBuilder, SigSdeParams};
use crate::tensor_algebra::{exp_lf, LinearFunctional, MultiIndex};

/// Longest word for which block decompositions are enumerated.
pub const MAX_DECOMPOSITION_LEN: usize = 24;

/// Default truncation of every functional built while lifting words.
pub const DEFAULT_ALGEBRA_ORDER: usize = 10;

/// An ordered tuple of blocks of length one or two whose concatenation is
/// the source word.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct BlockDecomposition {
    pub blocks: Vec<MultiIndex>,
}

impl BlockDecomposition {
    pub fn concat(&self) -> Result<MultiIndex> {
        let d = self.blocks.first().map(|b| b.d()).unwrap_or(1);
        let mut w = MultiIndex::empty(d)?;
        for b in &self.blocks {
            w = w.concat(b)?;
        }
        Ok(w)
    }
}

/// All compositions of `word` into blocks of length 1 or 2.
///
/// Bit `g` of the mask marks a cut in gap `g` (between letters `g` and
/// `g+1`); masks are visited from "cut everywhere" downwards and those
/// leaving a block longer than two are skipped.
pub fn decompositions(word: &MultiIndex) -> Result<Vec<BlockDecomposition>> {
    let n = word.len();
    if n == 0 {
        return Err(Error::InvalidArgument("decompositions of the empty word".into()));
    }
    if n > MAX_DECOMPOSITION_LEN {
        return Err(Error::WordTooLong { len: n, cap: MAX_DECOMPOSITION_LEN });
    }
    let gaps = n - 1;
    let letters = word.letters();
    let mut out = Vec::new();
    for mask in (0..(1u32 << gaps)).rev() {
        let mut blocks = Vec::new();
        let mut start = 0;
        let mut ok = true;
        for g in 0..=gaps {
            let cut = g == gaps || mask & (1 << g) != 0;
            if cut {
                if g + 1 - start > 2 {
                    ok = false;
                    break;
                }
                blocks.push(MultiIndex::new(word.d(), &letters[start..=g])?);
                start = g + 1;
            }
        }
        if ok {
            out.push(BlockDecomposition { blocks });
        }
    }
    Ok(out)
}

/// Image of a single block under the lead-lag correction map, as
/// `(letter, coefficient)` in the two-letter alphabet of `Ŵ`.
fn alpha_block(block: &[u8]) -> Option<(u8, f64)> {
    match block {
        [1] => Some((1, 1.0)),
        [2] | [3] => Some((2, 1.0)),
        [2, 3] => Some((1, -0.5)),
        [3, 2] => Some((1, 0.5)),
        _ => None,
    }
}

/// The block map `(1)↦(1)`, `(2)↦(2)`, `(3)↦(2)`, `(2,3)↦−½(1)`,
/// `(3,2)↦½(1)`, everything else `↦ 0`. Inputs are three-letter blocks;
/// outputs live in the alphabet of the lead-lag lift so they can be
/// concatenated blockwise.
pub fn alpha(block: &MultiIndex) -> Result<LinearFunctional> {
    if block.d() != 3 {
        return Err(Error::AlphabetMismatch { left: block.d(), right: 3 });
    }
    if !(1..=2).contains(&block.len()) {
        return Err(Error::InvalidArgument(format!("alpha takes blocks of length 1 or 2, got {block}")));
    }
    match alpha_block(block.letters()) {
        Some((a, c)) => Ok(LinearFunctional::from_word(MultiIndex::letter(3, a)?, c)),
        None => LinearFunctional::zero(3),
    }
}

/// `E_T = exp(T·(1) + T/2·(2,2))`, the expected Stratonovich signature of
/// `(t, W_t)` on `[0, T]`, truncated at `order`.
pub fn bm_expected_signature(horizon: f64, order: usize) -> Result<LinearFunctional> {
    check_horizon(horizon)?;
    let gen = LinearFunctional::from_letters(2, [(&[1u8][..], horizon), (&[2, 2], horizon / 2.0)])?;
    exp_lf(&gen, order)
}

fn check_horizon(horizon: f64) -> Result<()> {
    if !(horizon.is_finite() && horizon > 0.0) {
        return Err(Error::InvalidArgument(format!("horizon must be positive, got {horizon}")));
    }
    Ok(())
}

type Memo = RwLock<HashMap<(u64, usize), Arc<LinearFunctional>>>;

/// Memoized [`bm_expected_signature`], shared across threads.
pub fn bm_expected_signature_cached(horizon: f64, order: usize) -> Result<Arc<LinearFunctional>> {
    static MEMO: OnceLock<Memo> = OnceLock::new();
    let memo = MEMO.get_or_init(Default::default);
    let key = (horizon.to_bits(), order);
    if let Some(hit) = memo.read().expect("memo poisoned").get(&key) {
        return Ok(hit.clone());
    }
    let value = Arc::new(bm_expected_signature(horizon, order)?);
    memo.write().expect("memo poisoned").entry(key).or_insert(value.clone());
    Ok(value)
}

/// Expected lead-lag signature coefficients, evaluated word by word.
#[derive(Clone, Debug)]
pub struct LeadLagExpectation {
    horizon: f64,
    e_t: Arc<LinearFunctional>,
    order: usize,
}

impl LeadLagExpectation {
    /// Ready for words up to length `order`.
    pub fn new(horizon: f64, order: usize) -> Result<Self> {
        Ok(Self { horizon, e_t: bm_expected_signature_cached(horizon, order)?, order })
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    /// `E[Ŵ^{LL,(I)}_{0,T}] = Σ_{P(I)} ⟨α(I_1)⊗…⊗α(I_k), E_T⟩`.
    pub fn coefficient(&self, word: &[u8]) -> Result<f64> {
        if word.len() > self.order {
            return Err(Error::AlgebraOrderTooSmall { algebra_order: self.order, needed: word.len() });
        }
        if word.len() > MAX_DECOMPOSITION_LEN {
            return Err(Error::WordTooLong { len: word.len(), cap: MAX_DECOMPOSITION_LEN });
        }
        if word.iter().any(|&l| !(1..=3).contains(&l)) {
            return Err(Error::LetterOutOfRange { letter: *word.iter().max().unwrap() as usize, d: 3 });
        }
        let mut image = Vec::with_capacity(word.len());
        Ok(self.walk(word, &mut image, 1.0))
    }

    fn walk(&self, rest: &[u8], image: &mut Vec<u8>, coef: f64) -> f64 {
        if rest.is_empty() {
            return coef * self.e_t.coef(image);
        }
        let mut total = 0.0;
        for take in 1..=2.min(rest.len()) {
            if let Some((a, c)) = alpha_block(&rest[..take]) {
                image.push(a);
                total += self.walk(&rest[take..], image, coef * c);
                image.pop();
            }
        }
        total
    }
}

/// Expected signature of the lead-lag Brownian motion over all words of
/// the three-letter alphabet up to `order`.
pub fn leadlag_bm_expected_signature(horizon: f64, order: usize) -> Result<LinearFunctional> {
    let ll = LeadLagExpectation::new(horizon, order)?;
    let mut out = LinearFunctional::zero(3)?.with_max_order(order);
    for w in MultiIndex::all_words(3, order)? {
        let c = ll.coefficient(w.letters())?;
        out.add_term(w, c);
    }
    Ok(out)
}

/// What happened to words longer than the algebra order while lifting.
#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct TruncationReport {
    pub algebra_order: usize,
    /// Term pairs whose product was dropped.
    pub dropped_pairs: usize,
    /// Longest word that would have been produced.
    pub max_needed_order: usize,
    /// `Σ |coef| · L^n / n!` over dropped terms, with the heuristic path
    /// length `L = T + 6√T` (time plus a three-sigma range for each
    /// Brownian channel).
    pub dropped_mass_bound: f64,
}

impl TruncationReport {
    pub fn is_exact(&self) -> bool {
        self.dropped_pairs == 0
    }
}

/// How to react when lifted words exceed the algebra order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum TruncationPolicy {
    #[default]
    Report,
    Fail,
}

#[derive(Clone, Debug)]
pub struct ModelExpectedSignature {
    /// Coefficients over words in `(t, X)`.
    pub esig: LinearFunctional,
    pub truncation: TruncationReport,
}

/// `E[X̂_{0,T}]` for every word of length `≤ word_order` in the channels
/// `(t, X)`, with all intermediate functionals truncated at
/// `algebra_order`.
pub fn model_expected_signature(
    params: &SigSdeParams,
    horizon: f64,
    word_order: usize,
    algebra_order: usize,
    policy: TruncationPolicy,
) -> Result<ModelExpectedSignature> {
    check_horizon(horizon)?;
    let ll = LeadLagExpectation::new(horizon, algebra_order)?;
    let mut builder = LiftBuilder::new(params, algebra_order, horizon)?;
    let mut cache: HashMap<MultiIndex, f64> = HashMap::new();
    let mut esig = LinearFunctional::scalar(2, 1.0)?.with_max_order(word_order);
    // breadth-first so every lift extends its already-built prefix
    let mut frontier: Vec<(MultiIndex, LinearFunctional)> = Vec::new();
    for a in 1..=2u8 {
        if word_order == 0 {
            break;
        }
        let w = MultiIndex::letter(2, a)?;
        frontier.push((w, builder.generator(a)?.clone()));
    }
    while !frontier.is_empty() {
        let mut next = Vec::new();
        for (word, lift) in frontier {
            let mut value = 0.0;
            for (w, c) in lift.iter() {
                let e = match cache.get(w) {
                    Some(&e) => e,
                    None => {
                        let e = ll.coefficient(w.letters())?;
                        cache.insert(w.clone(), e);
                        e
                    }
                };
                value += c * e;
            }
            esig.add_term(word.clone(), value);
            if word.len() < word_order {
                for a in 1..=2u8 {
                    let ext = builder.extend(&lift, a)?;
                    next.push((word.push(a)?, ext));
                }
            }
        }
        frontier = next;
    }
    let truncation = builder.into_report();
    if policy == TruncationPolicy::Fail && !truncation.is_exact() {
        return Err(Error::AlgebraOrderTooSmall {
            algebra_order,
            needed: truncation.max_needed_order,
        });
    }
    Ok(ModelExpectedSignature { esig, truncation })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn w(d: usize, l: &[u8]) -> MultiIndex {
        MultiIndex::new(d, l).unwrap()
    }

    fn shown(ds: &[BlockDecomposition]) -> Vec<String> {
        let mut v: Vec<String> = ds
            .iter()
            .map(|d| d.blocks.iter().map(|b| b.to_string()).collect::<Vec<_>>().join(""))
            .collect();
        v.sort();
        v
    }

    #[test]
    fn decomposition_examples() {
        let ds = decompositions(&w(3, &[1, 2, 3])).unwrap();
        assert_eq!(shown(&ds), ["(1)(2)(3)", "(1)(2,3)", "(1,2)(3)"]);
        let ds = decompositions(&w(3, &[3, 2])).unwrap();
        assert_eq!(shown(&ds), ["(3)(2)", "(3,2)"]);
        let ds = decompositions(&w(3, &[1, 3, 2, 2])).unwrap();
        assert_eq!(
            shown(&ds),
            ["(1)(3)(2)(2)", "(1)(3)(2,2)", "(1)(3,2)(2)", "(1,3)(2)(2)", "(1,3)(2,2)"]
        );
        for d in &ds {
            assert_eq!(d.concat().unwrap(), w(3, &[1, 3, 2, 2]));
        }
        assert_eq!(ds[0].blocks.len(), 4, "cut-everywhere comes first");
    }

    #[test]
    fn decomposition_counts_follow_fibonacci() {
        let (mut a, mut b) = (1usize, 2usize);
        for n in 1..=12 {
            let expected = if n == 1 { 1 } else if n == 2 { 2 } else {
                let c = a + b;
                a = b;
                b = c;
                c
            };
            let word = MultiIndex::new(3, &vec![1; n]).unwrap();
            assert_eq!(decompositions(&word).unwrap().len(), expected, "n = {n}");
        }
    }

    #[test]
    fn decomposition_limits() {
        assert!(decompositions(&MultiIndex::empty(3).unwrap()).is_err());
        let long = MultiIndex::new(3, &[1; 25]).unwrap();
        assert_eq!(decompositions(&long), Err(Error::WordTooLong { len: 25, cap: 24 }));
    }

    #[test]
    fn alpha_table() {
        let one = |a: u8, c: f64| LinearFunctional::from_word(w(3, &[a]), c);
        assert_eq!(alpha(&w(3, &[1])).unwrap(), one(1, 1.0));
        assert_eq!(alpha(&w(3, &[2])).unwrap(), one(2, 1.0));
        assert_eq!(alpha(&w(3, &[3])).unwrap(), one(2, 1.0));
        assert_eq!(alpha(&w(3, &[2, 3])).unwrap(), one(1, -0.5));
        assert_eq!(alpha(&w(3, &[3, 2])).unwrap(), one(1, 0.5));
        for zero in [&[1u8, 1][..], &[1, 2], &[2, 2], &[3, 3], &[3, 1]] {
            assert!(alpha(&w(3, zero)).unwrap().is_zero());
        }
        assert!(alpha(&w(3, &[1, 2, 3])).is_err());
    }

    #[test]
    fn bm_expected_signature_examples() {
        let t = 0.8;
        let e = bm_expected_signature(t, 6).unwrap();
        assert_eq!(e.coef(&[1]), t);
        assert_eq!(e.coef(&[2]), 0.0);
        assert_eq!(e.coef(&[2, 2]), t / 2.0);
        for word in MultiIndex::all_words(2, 6).unwrap() {
            if word.count(2) % 2 == 1 {
                assert_eq!(e.get(&word), 0.0, "{word}");
            }
        }
        assert!(bm_expected_signature(0.0, 2).is_err());
    }

    #[test]
    fn leadlag_examples() {
        let t = 1.0;
        let ll = LeadLagExpectation::new(t, 4).unwrap();
        assert_eq!(ll.coefficient(&[2, 3]).unwrap(), 0.0);
        assert_eq!(ll.coefficient(&[3, 2]).unwrap(), t);
        assert_eq!(ll.coefficient(&[3, 2, 3]).unwrap(), 0.0);
        let t = 0.37;
        let ll = LeadLagExpectation::new(t, 4).unwrap();
        assert!((ll.coefficient(&[3, 2]).unwrap() - t).abs() < 1e-16);
        // E[(2,3)] + E[(3,2)] = E[W_T²] = T
        assert!((ll.coefficient(&[2, 3]).unwrap() + ll.coefficient(&[3, 2]).unwrap() - t).abs() < 1e-16);
        assert_eq!(ll.coefficient(&[]).unwrap(), 1.0);
        assert!(ll.coefficient(&[1, 1, 1, 1, 1]).is_err());
    }

    #[test]
    fn leadlag_matches_explicit_decomposition_sum() {
        // Independent route: enumerate decompositions, multiply alpha images.
        let t = 0.9;
        let e_t = bm_expected_signature(t, 6).unwrap();
        let ll = LeadLagExpectation::new(t, 6).unwrap();
        for word in MultiIndex::all_words(3, 5).unwrap().into_iter().skip(1) {
            let mut total = 0.0;
            for dec in decompositions(&word).unwrap() {
                let mut prod = LinearFunctional::unit(3).unwrap();
                for b in &dec.blocks {
                    prod = prod.concat(&alpha(b).unwrap(), None).unwrap();
                }
                let reduced = prod.relabel(2, &[1, 2, 2]).unwrap();
                total += reduced.pair(&e_t).unwrap();
            }
            assert!((ll.coefficient(word.letters()).unwrap() - total).abs() < 1e-15, "{word}");
        }
    }

    #[test]
    fn model_expected_signature_constant_vol() {
        let sigma = 0.3;
        let t = 0.7;
        let params = SigSdeParams::constant_vol(sigma, 1.0, 2).unwrap();
        let m = model_expected_signature(&params, t, 4, 10, TruncationPolicy::Fail).unwrap();
        assert!(m.truncation.is_exact());
        assert_eq!(m.esig.coef(&[2]), 0.0);
        assert!((m.esig.coef(&[1]) - t).abs() < 1e-15);
        assert!((m.esig.coef(&[2, 2]) - sigma * sigma * t / 2.0).abs() < 1e-15);
        // Bachelier: E[(X_T-x)^4]/4! = 3 σ⁴ T² / 24
        let k4 = 3.0 * sigma.powi(4) * t * t / 24.0;
        assert!((m.esig.coef(&[2, 2, 2, 2]) - k4).abs() < 1e-15);
        assert_eq!(m.esig.coef(&[2, 2, 2]), 0.0);
    }

    #[test]
    fn model_expected_signature_reports_truncation() {
        let params = SigSdeParams::constant_vol(0.2, 1.0, 2).unwrap();
        // (2,2,2) needs words of length 3 with a constant ℓ; order 2 drops them
        let m = model_expected_signature(&params, 1.0, 3, 2, TruncationPolicy::Report).unwrap();
        assert!(!m.truncation.is_exact());
        assert_eq!(m.truncation.max_needed_order, 3);
        assert!(model_expected_signature(&params, 1.0, 3, 2, TruncationPolicy::Fail).is_err());
    }
}
