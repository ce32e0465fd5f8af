use std::collections::btree_map::Entry;
use std::collections::{BTreeMap, HashMap};
use std::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use super::word::{check_alphabet, same_alphabet, Letters, MultiIndex};
use crate::error::{Error, Result};

/// A finitely supported real map on words: parameters, payoffs and
/// (expected) signatures all live here.
///
/// Terms are kept in canonical sparse form: no stored coefficient is exactly
/// `0.0`, and iteration follows the length-then-lexicographic word order.
#[derive(Clone)]
pub struct LinearFunctional {
    d: u8,
    max_order: Option<usize>,
    terms: BTreeMap<MultiIndex, f64>,
}

impl LinearFunctional {
    /// The zero functional over `d` letters.
    pub fn zero(d: usize) -> Result<Self> {
        Ok(Self { d: check_alphabet(d)?, max_order: None, terms: BTreeMap::new() })
    }

    /// `c · ∅`.
    pub fn scalar(d: usize, c: f64) -> Result<Self> {
        let mut f = Self::zero(d)?;
        f.add_term(MultiIndex::empty(d)?, c);
        Ok(f)
    }

    pub fn unit(d: usize) -> Result<Self> {
        Self::scalar(d, 1.0)
    }

    /// `c · w`.
    pub fn from_word(w: MultiIndex, c: f64) -> Self {
        let mut f = Self { d: w.d_u8(), max_order: None, terms: BTreeMap::new() };
        f.add_term(w, c);
        f
    }

    /// Convenience constructor from raw letter slices; repeated words add up.
    pub fn from_letters<'a, I>(d: usize, terms: I) -> Result<Self>
    where
        I: IntoIterator<Item = (&'a [u8], f64)>,
    {
        let mut f = Self::zero(d)?;
        for (letters, c) in terms {
            f.add_term(MultiIndex::new(d, letters)?, c);
        }
        Ok(f)
    }

    pub fn from_terms<I>(d: usize, terms: I) -> Result<Self>
    where
        I: IntoIterator<Item = (MultiIndex, f64)>,
    {
        let mut f = Self::zero(d)?;
        for (w, c) in terms {
            same_alphabet(d, w.d())?;
            f.add_term(w, c);
        }
        Ok(f)
    }

    pub(crate) fn from_letter_map(d: u8, map: HashMap<Letters, f64>, max_order: Option<usize>) -> Self {
        let terms = map
            .into_iter()
            .filter(|(_, c)| *c != 0.0)
            .map(|(l, c)| (MultiIndex::from_letters_unchecked(d, l), c))
            .collect();
        Self { d, max_order, terms }
    }

    pub fn d(&self) -> usize {
        self.d as usize
    }

    pub fn max_order(&self) -> Option<usize> {
        self.max_order
    }

    /// Declare a truncation order, dropping longer words.
    pub fn with_max_order(mut self, n: usize) -> Self {
        self.terms.retain(|w, _| w.len() <= n);
        self.max_order = Some(n);
        self
    }

    pub fn get(&self, w: &MultiIndex) -> f64 {
        self.terms.get(w).copied().unwrap_or(0.0)
    }

    /// Coefficient of the word spelled by `letters`; zero when absent or
    /// when a letter is outside the alphabet.
    pub fn coef(&self, letters: &[u8]) -> f64 {
        match MultiIndex::new(self.d(), letters) {
            Ok(w) => self.get(&w),
            Err(_) => 0.0,
        }
    }

    pub fn constant(&self) -> f64 {
        self.terms
            .iter()
            .next()
            .filter(|(w, _)| w.is_empty())
            .map(|(_, c)| *c)
            .unwrap_or(0.0)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&MultiIndex, f64)> + '_ {
        self.terms.iter().map(|(w, c)| (w, *c))
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    /// Length of the longest stored word (0 for the zero functional).
    pub fn max_word_len(&self) -> usize {
        self.terms.keys().next_back().map(|w| w.len()).unwrap_or(0)
    }

    /// Add `c` to the coefficient of `w`, pruning an exact zero.
    ///
    /// Panics if `w` is over a different alphabet.
    pub fn add_term(&mut self, w: MultiIndex, c: f64) {
        assert_eq!(w.d(), self.d(), "word alphabet differs from functional alphabet");
        if let Some(n) = self.max_order {
            if w.len() > n {
                return;
            }
        }
        if c == 0.0 {
            return;
        }
        match self.terms.entry(w) {
            Entry::Vacant(e) => {
                e.insert(c);
            }
            Entry::Occupied(mut e) => {
                let v = *e.get() + c;
                if v == 0.0 {
                    e.remove();
                } else {
                    *e.get_mut() = v;
                }
            }
        }
    }

    pub fn scale(&self, a: f64) -> Self {
        let mut out = Self { d: self.d, max_order: self.max_order, terms: BTreeMap::new() };
        if a != 0.0 {
            for (w, c) in &self.terms {
                let v = a * c;
                if v != 0.0 {
                    out.terms.insert(w.clone(), v);
                }
            }
        }
        out
    }

    /// Same coefficients with letters remapped by `map[letter - 1]` into an
    /// alphabet of size `d`.
    pub fn relabel(&self, d: usize, map: &[u8]) -> Result<Self> {
        if map.len() != self.d() {
            return Err(Error::InvalidArgument(format!(
                "relabel map has {} entries for alphabet {}",
                map.len(),
                self.d()
            )));
        }
        let mut out = Self::zero(d)?;
        out.max_order = self.max_order;
        for (w, c) in &self.terms {
            let letters: Vec<u8> = w.letters().iter().map(|&l| map[l as usize - 1]).collect();
            out.add_term(MultiIndex::new(d, &letters)?, *c);
        }
        Ok(out)
    }

    pub fn concat(&self, other: &Self, order: Option<usize>) -> Result<Self> {
        concat_lf(self, other, order)
    }

    pub fn shuffle(&self, other: &Self, order: Option<usize>) -> Result<Self> {
        shuffle_lf(self, other, order)
    }

    pub fn half_shuffle(&self, other: &Self, order: Option<usize>) -> Result<Self> {
        half_shuffle(self, other, order)
    }

    pub fn pair(&self, other: &Self) -> Result<f64> {
        pair(self, other)
    }

    pub fn truncate(&self, n: usize) -> Self {
        truncate(self, n)
    }
}

// Equality ignores the declared truncation order.
impl PartialEq for LinearFunctional {
    fn eq(&self, other: &Self) -> bool {
        self.d == other.d && self.terms == other.terms
    }
}

impl fmt::Debug for LinearFunctional {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self}")
    }
}

impl fmt::Display for LinearFunctional {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            return write!(f, "0");
        }
        for (i, (w, c)) in self.terms.iter().enumerate() {
            if i > 0 {
                write!(f, " + ")?;
            }
            write!(f, "{c}·{w}")?;
        }
        Ok(())
    }
}

fn check_pair(f: &LinearFunctional, g: &LinearFunctional) -> Result<()> {
    same_alphabet(f.d(), g.d())
}

fn accumulate(map: &mut HashMap<Letters, f64>, key: Letters, c: f64) {
    *map.entry(key).or_insert(0.0) += c;
}

/// Bilinear concatenation; words longer than `order` are dropped.
pub fn concat_lf(f: &LinearFunctional, g: &LinearFunctional, order: Option<usize>) -> Result<LinearFunctional> {
    check_pair(f, g)?;
    let cap = order.unwrap_or(usize::MAX);
    let mut map = HashMap::new();
    for (u, a) in &f.terms {
        if u.len() > cap {
            break;
        }
        for (v, b) in &g.terms {
            if u.len() + v.len() > cap {
                break;
            }
            let mut key = Letters::from_slice(u.letters());
            key.extend_from_slice(v.letters());
            accumulate(&mut map, key, a * b);
        }
    }
    Ok(LinearFunctional::from_letter_map(f.d, map, order))
}

/// Every interleaving of `u` and `v`, each added with weight `c`.
pub(crate) fn shuffle_words_into(u: &[u8], v: &[u8], c: f64, out: &mut HashMap<Letters, f64>) {
    fn rec(u: &[u8], v: &[u8], buf: &mut Letters, c: f64, out: &mut HashMap<Letters, f64>) {
        match (u.split_first(), v.split_first()) {
            (None, None) => accumulate(out, buf.clone(), c),
            (Some((&a, ur)), None) => {
                let n = buf.len();
                buf.push(a);
                buf.extend_from_slice(ur);
                accumulate(out, buf.clone(), c);
                buf.truncate(n);
            }
            (None, Some((&b, vr))) => {
                let n = buf.len();
                buf.push(b);
                buf.extend_from_slice(vr);
                accumulate(out, buf.clone(), c);
                buf.truncate(n);
            }
            (Some((&a, ur)), Some((&b, vr))) => {
                buf.push(a);
                rec(ur, v, buf, c, out);
                buf.pop();
                buf.push(b);
                rec(u, vr, buf, c, out);
                buf.pop();
            }
        }
    }
    let mut buf = Letters::new();
    rec(u, v, &mut buf, c, out);
}

/// Shuffle product of two words. Coefficients are the (integer) number of
/// interleavings producing each word.
pub fn shuffle(i: &MultiIndex, j: &MultiIndex) -> Result<LinearFunctional> {
    same_alphabet(i.d(), j.d())?;
    let mut map = HashMap::new();
    shuffle_words_into(i.letters(), j.letters(), 1.0, &mut map);
    Ok(LinearFunctional::from_letter_map(i.d_u8(), map, None))
}

/// Bilinear extension of the word shuffle.
pub fn shuffle_lf(f: &LinearFunctional, g: &LinearFunctional, order: Option<usize>) -> Result<LinearFunctional> {
    check_pair(f, g)?;
    let cap = order.unwrap_or(usize::MAX);
    let mut map = HashMap::new();
    for (u, a) in &f.terms {
        if u.len() > cap {
            break;
        }
        for (v, b) in &g.terms {
            if u.len() + v.len() > cap {
                break;
            }
            shuffle_words_into(u.letters(), v.letters(), a * b, &mut map);
        }
    }
    Ok(LinearFunctional::from_letter_map(f.d, map, order))
}

/// Half-shuffle `F ≻ G`, the word rule `u ≻ (v⊗a) = (u ⧢ v)⊗a` extended
/// bilinearly. Pairing with a signature gives `∫ ⟨F,X⟩ ∘ d⟨G,X⟩`.
pub fn half_shuffle(f: &LinearFunctional, g: &LinearFunctional, order: Option<usize>) -> Result<LinearFunctional> {
    check_pair(f, g)?;
    let c0 = g.constant();
    if c0 != 0.0 {
        return Err(Error::ConstantIntegrator(c0));
    }
    let cap = order.unwrap_or(usize::MAX);
    let mut map: HashMap<Letters, f64> = HashMap::new();
    let mut scratch: HashMap<Letters, f64> = HashMap::new();
    for (v, b) in &g.terms {
        let (prefix, last) = v.split_last().expect("non-empty integrator word");
        for (u, a) in &f.terms {
            if u.len() + v.len() > cap {
                break;
            }
            scratch.clear();
            shuffle_words_into(u.letters(), prefix.letters(), a * b, &mut scratch);
            for (mut key, c) in scratch.drain() {
                key.push(last);
                accumulate(&mut map, key, c);
            }
        }
    }
    Ok(LinearFunctional::from_letter_map(f.d, map, order))
}

/// `⟨F, G⟩ = Σ_K F^(K) G^(K)`.
pub fn pair(f: &LinearFunctional, g: &LinearFunctional) -> Result<f64> {
    check_pair(f, g)?;
    let (small, large) = if f.len() <= g.len() { (f, g) } else { (g, f) };
    Ok(small.terms.iter().map(|(w, c)| c * large.get(w)).sum())
}

/// `αF + βG`, canonicalized.
pub fn lin_comb(alpha: f64, f: &LinearFunctional, beta: f64, g: &LinearFunctional) -> Result<LinearFunctional> {
    check_pair(f, g)?;
    let max_order = match (f.max_order, g.max_order) {
        (Some(a), Some(b)) => Some(a.max(b)),
        _ => None,
    };
    let mut out = LinearFunctional { d: f.d, max_order, terms: BTreeMap::new() };
    for (w, c) in &f.terms {
        out.add_term(w.clone(), alpha * c);
    }
    for (w, c) in &g.terms {
        out.add_term(w.clone(), beta * c);
    }
    Ok(out)
}

/// Truncated tensor exponential `∅ + Σ_{k=1..order} F^{⊗k}/k!`.
pub fn exp_lf(f: &LinearFunctional, order: usize) -> Result<LinearFunctional> {
    let c0 = f.constant();
    if c0 != 0.0 {
        return Err(Error::NonzeroConstantTerm(c0));
    }
    let mut result = LinearFunctional::unit(f.d())?.with_max_order(order);
    let mut power = result.clone();
    for k in 1..=order {
        power = concat_lf(&power, f, Some(order))?.scale(1.0 / k as f64);
        if power.is_zero() {
            break;
        }
        result = lin_comb(1.0, &result, 1.0, &power)?;
    }
    Ok(result.with_max_order(order))
}

/// Drop every word longer than `n`.
pub fn truncate(f: &LinearFunctional, n: usize) -> LinearFunctional {
    f.clone().with_max_order(n)
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TermRepr {
    word: Vec<u8>,
    coef: f64,
}

#[derive(Serialize, Deserialize)]
struct FunctionalRepr {
    d: usize,
    terms: Vec<TermRepr>,
}

impl Serialize for LinearFunctional {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        FunctionalRepr {
            d: self.d(),
            terms: self
                .terms
                .iter()
                .map(|(w, c)| TermRepr { word: w.letters().to_vec(), coef: *c })
                .collect(),
        }
        .serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for LinearFunctional {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error as _;
        let repr = FunctionalRepr::deserialize(deserializer)?;
        LinearFunctional::try_from(repr).map_err(D::Error::custom)
    }
}

impl TryFrom<FunctionalRepr> for LinearFunctional {
    type Error = Error;

    fn try_from(repr: FunctionalRepr) -> Result<Self> {
        let mut f = LinearFunctional::zero(repr.d)?;
        for t in repr.terms {
            let w = MultiIndex::new(repr.d, &t.word)?;
            if !t.coef.is_finite() {
                return Err(Error::Parse(format!("non-finite coefficient for {w}")));
            }
            if f.terms.contains_key(&w) {
                return Err(Error::DuplicateWord(w.to_string()));
            }
            if t.coef != 0.0 {
                f.terms.insert(w, t.coef);
            }
        }
        Ok(f)
    }
}
