//! Dense truncated tensors, stored level by level. Used in the hot loops
//! (segment exponentials, Chen products, Monte Carlo accumulation); the
//! public currency stays the sparse [`LinearFunctional`].
//!
//! Within level `m` the word `(a_1, ..., a_m)` sits at the base-`d` offset
//! `Σ (a_i - 1) d^{m-i}`, so appending a letter maps index `p` to `p·d + a - 1`.

use std::collections::HashMap;

use super::functional::LinearFunctional;
use super::word::{check_alphabet, Letters, MultiIndex};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct DenseTensor {
    d: usize,
    order: usize,
    offsets: Vec<usize>,
    data: Vec<f64>,
}

impl DenseTensor {
    pub fn zeros(d: usize, order: usize) -> Result<Self> {
        check_alphabet(d)?;
        let mut offsets = Vec::with_capacity(order + 2);
        let mut total = 0usize;
        let mut width = 1usize;
        for _ in 0..=order {
            offsets.push(total);
            total = total
                .checked_add(width)
                .ok_or_else(|| Error::InvalidArgument("dense tensor too large".into()))?;
            width = width
                .checked_mul(d)
                .ok_or_else(|| Error::InvalidArgument("dense tensor too large".into()))?;
        }
        offsets.push(total);
        Ok(Self { d, order, offsets, data: vec![0.0; total] })
    }

    /// The signature of a constant path: `∅` only.
    pub fn identity(d: usize, order: usize) -> Result<Self> {
        let mut t = Self::zeros(d, order)?;
        t.data[0] = 1.0;
        Ok(t)
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn level(&self, m: usize) -> &[f64] {
        &self.data[self.offsets[m]..self.offsets[m + 1]]
    }

    pub fn reset_identity(&mut self) {
        self.data.fill(0.0);
        self.data[0] = 1.0;
    }

    /// Flat index of a word, if it fits the truncation.
    pub fn index_of(&self, letters: &[u8]) -> Option<usize> {
        if letters.len() > self.order {
            return None;
        }
        let mut p = 0usize;
        for &a in letters {
            if a == 0 || a as usize > self.d {
                return None;
            }
            p = p * self.d + (a as usize - 1);
        }
        Some(self.offsets[letters.len()] + p)
    }

    pub fn get(&self, letters: &[u8]) -> f64 {
        self.index_of(letters).map(|i| self.data[i]).unwrap_or(0.0)
    }

    /// In-place right multiplication by the exponential of a level-one
    /// increment, i.e. extending a signature by one straight segment.
    ///
    /// Level `m` becomes `Σ_k S_{m-k} ⊗ Δ^{⊗k}/k!`, evaluated by Horner's
    /// rule from the top level down so lower levels are still unmodified
    /// when read.
    pub fn mul_segment_exp(&mut self, delta: &[f64], scratch: &mut SegmentScratch) {
        debug_assert_eq!(delta.len(), self.d);
        let d = self.d;
        scratch.ensure(d, self.order);
        let SegmentScratch { a, b } = scratch;
        for m in (1..=self.order).rev() {
            let s0 = self.data[0];
            let inv = 1.0 / m as f64;
            for (x, &di) in a[..d].iter_mut().zip(delta) {
                *x = s0 * di * inv;
            }
            let mut len = d;
            for j in 1..m {
                let lvl = &self.data[self.offsets[j]..self.offsets[j + 1]];
                for (x, &s) in a[..len].iter_mut().zip(lvl) {
                    *x += s;
                }
                let inv = 1.0 / (m - j) as f64;
                for p in 0..len {
                    let ap = a[p] * inv;
                    let row = &mut b[p * d..p * d + d];
                    for (y, &di) in row.iter_mut().zip(delta) {
                        *y = ap * di;
                    }
                }
                len *= d;
                std::mem::swap(a, b);
            }
            let lvl = &mut self.data[self.offsets[m]..self.offsets[m + 1]];
            for (s, &x) in lvl.iter_mut().zip(&a[..len]) {
                *s += x;
            }
        }
    }

    /// Truncated tensor product (Chen): level `m` of the result is
    /// `Σ_k self_k ⊗ other_{m-k}`.
    pub fn mul(&self, other: &DenseTensor) -> Result<DenseTensor> {
        if self.d != other.d {
            return Err(Error::AlphabetMismatch { left: self.d, right: other.d });
        }
        if self.order != other.order {
            return Err(Error::InvalidArgument(format!(
                "truncation orders differ: {} vs {}",
                self.order, other.order
            )));
        }
        let mut out = DenseTensor::zeros(self.d, self.order)?;
        for m in 0..=self.order {
            for k in 0..=m {
                let left = self.level(k);
                let right = other.level(m - k);
                let width = right.len();
                let base = out.offsets[m];
                for (p, &l) in left.iter().enumerate() {
                    if l == 0.0 {
                        continue;
                    }
                    let dst = &mut out.data[base + p * width..base + (p + 1) * width];
                    for (y, &r) in dst.iter_mut().zip(right) {
                        *y += l * r;
                    }
                }
            }
        }
        Ok(out)
    }

    pub fn to_functional(&self) -> LinearFunctional {
        let d8 = self.d as u8;
        let mut map = HashMap::with_capacity(self.data.len());
        let mut letters = Letters::new();
        for m in 0..=self.order {
            for (p, &c) in self.level(m).iter().enumerate() {
                if c == 0.0 {
                    continue;
                }
                letters.clear();
                let mut q = p;
                for _ in 0..m {
                    letters.push((q % self.d) as u8 + 1);
                    q /= self.d;
                }
                letters.reverse();
                map.insert(letters.clone(), c);
            }
        }
        LinearFunctional::from_letter_map(d8, map, Some(self.order))
    }

    pub fn from_functional(f: &LinearFunctional, order: usize) -> Result<Self> {
        let mut t = Self::zeros(f.d(), order)?;
        for (w, c) in f.iter() {
            if let Some(i) = t.index_of(w.letters()) {
                t.data[i] = c;
            }
        }
        Ok(t)
    }

    /// Words in the same order as the flat storage.
    pub fn words(&self) -> Result<Vec<MultiIndex>> {
        MultiIndex::all_words(self.d, self.order)
    }
}

/// Reusable buffers for [`DenseTensor::mul_segment_exp`].
#[derive(Default, Debug, Clone)]
pub struct SegmentScratch {
    a: Vec<f64>,
    b: Vec<f64>,
}

impl SegmentScratch {
    fn ensure(&mut self, d: usize, order: usize) {
        let need = d.pow(order.max(1) as u32);
        if self.a.len() < need {
            self.a.resize(need, 0.0);
            self.b.resize(need, 0.0);
        }
    }
}

/// Precomputed sparse dot product against a dense tensor.
#[derive(Clone, Debug)]
pub struct DenseProjector {
    entries: Vec<(usize, f64)>,
}

impl DenseProjector {
    /// Pairs `f` with tensors shaped like `like`; words beyond the
    /// truncation are an error, since dropping them would silently change
    /// the value.
    pub fn new(f: &LinearFunctional, like: &DenseTensor) -> Result<Self> {
        if f.d() != like.d {
            return Err(Error::AlphabetMismatch { left: f.d(), right: like.d });
        }
        let mut entries = Vec::with_capacity(f.len());
        for (w, c) in f.iter() {
            let i = like.index_of(w.letters()).ok_or(Error::AlgebraOrderTooSmall {
                algebra_order: like.order,
                needed: w.len(),
            })?;
            entries.push((i, c));
        }
        Ok(Self { entries })
    }

    pub fn apply(&self, t: &DenseTensor) -> f64 {
        self.entries.iter().map(|&(i, c)| c * t.data[i]).sum()
    }
}
