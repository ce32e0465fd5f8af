//! Signatures of sampled paths under piecewise-linear interpolation,
//! computed as a left-to-right Chen product of segment exponentials, plus
//! the add-time and lead-lag path transforms.

use std::io::{Read, Write};

use crate::error::{Error, Result};
use crate::tensor_algebra::{concat_lf, exp_lf, DenseTensor, LinearFunctional, SegmentScratch};

/// Time-stamped samples of a `d`-dimensional path.
#[derive(Clone, Debug, PartialEq)]
pub struct DiscretePath {
    times: Vec<f64>,
    dim: usize,
    values: Vec<f64>,
}

impl DiscretePath {
    pub fn new(times: Vec<f64>, points: Vec<Vec<f64>>) -> Result<Self> {
        let dim = points.first().map(|p| p.len()).unwrap_or(0);
        if points.iter().any(|p| p.len() != dim) {
            return Err(Error::InvalidPath("inconsistent point dimension".into()));
        }
        let values = points.into_iter().flatten().collect();
        Self::from_flat(times, dim, values)
    }

    /// Points stored row-major: sample `k` is `values[k*dim..(k+1)*dim]`.
    pub fn from_flat(times: Vec<f64>, dim: usize, values: Vec<f64>) -> Result<Self> {
        if times.len() < 2 {
            return Err(Error::InvalidPath(format!("need at least 2 samples, got {}", times.len())));
        }
        if dim == 0 {
            return Err(Error::InvalidPath("zero-dimensional path".into()));
        }
        if values.len() != times.len() * dim {
            return Err(Error::InvalidPath(format!(
                "{} values for {} samples of dimension {dim}",
                values.len(),
                times.len()
            )));
        }
        if times.iter().chain(&values).any(|x| !x.is_finite()) {
            return Err(Error::InvalidPath("non-finite sample".into()));
        }
        if times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidPath("times must be strictly increasing".into()));
        }
        Ok(Self { times, dim, values })
    }

    pub fn scalar(times: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        Self::from_flat(times, 1, values)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn point(&self, k: usize) -> &[f64] {
        &self.values[k * self.dim..(k + 1) * self.dim]
    }

    /// Samples of one channel (0-based).
    pub fn channel(&self, c: usize) -> Vec<f64> {
        (0..self.len()).map(|k| self.values[k * self.dim + c]).collect()
    }

    pub fn increment(&self, k: usize, out: &mut [f64]) {
        let (a, b) = (self.point(k), self.point(k + 1));
        for ((o, x), y) in out.iter_mut().zip(a).zip(b) {
            *o = y - x;
        }
    }

    /// Sub-path on the first `n` samples.
    pub fn prefix(&self, n: usize) -> Result<Self> {
        Self::from_flat(self.times[..n].to_vec(), self.dim, self.values[..n * self.dim].to_vec())
    }

    /// Same points on new (strictly increasing) times.
    pub fn with_times(&self, times: Vec<f64>) -> Result<Self> {
        if times.len() != self.len() {
            return Err(Error::InvalidPath("time grid length differs".into()));
        }
        Self::from_flat(times, self.dim, self.values.clone())
    }

    /// Total variation in the ℓ¹ norm of the piecewise-linear interpolation.
    pub fn total_variation(&self) -> f64 {
        let mut inc = vec![0.0; self.dim];
        (0..self.len() - 1)
            .map(|k| {
                self.increment(k, &mut inc);
                inc.iter().map(|x| x.abs()).sum::<f64>()
            })
            .sum()
    }

    /// CSV with header `time,c1,...,cd`; floats use the shortest decimal
    /// that round-trips exactly.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        let mut header = vec!["time".to_string()];
        header.extend((1..=self.dim).map(|c| format!("c{c}")));
        wtr.write_record(&header)?;
        for k in 0..self.len() {
            let mut row = vec![self.times[k].to_string()];
            row.extend(self.point(k).iter().map(|x| x.to_string()));
            wtr.write_record(&row)?;
        }
        wtr.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(r: R) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(r);
        let headers = rdr.headers()?.clone();
        if headers.get(0) != Some("time") || headers.len() < 2 {
            return Err(Error::Parse("expected header time,c1,...".into()));
        }
        for (i, h) in headers.iter().enumerate().skip(1) {
            if h != format!("c{i}") {
                return Err(Error::Parse(format!("unexpected column {h}")));
            }
        }
        let dim = headers.len() - 1;
        let mut times = Vec::new();
        let mut values = Vec::new();
        for rec in rdr.records() {
            let rec = rec?;
            let mut it = rec.iter().map(|s| s.trim().parse::<f64>().map_err(|e| Error::Parse(format!("{s}: {e}"))));
            times.push(it.next().ok_or_else(|| Error::Parse("empty row".into()))??);
            for x in it {
                values.push(x?);
            }
        }
        Self::from_flat(times, dim, values)
    }
}

/// A signature truncated at `order`: the `∅` coefficient is exactly one.
#[derive(Clone, Debug, PartialEq)]
pub struct Signature {
    order: usize,
    functional: LinearFunctional,
}

impl Signature {
    pub fn new(functional: LinearFunctional, order: usize) -> Result<Self> {
        if functional.constant() != 1.0 {
            return Err(Error::InvalidSignature(format!(
                "empty-word coefficient is {}, expected 1",
                functional.constant()
            )));
        }
        if functional.max_word_len() > order {
            return Err(Error::InvalidSignature(format!(
                "word of length {} above order {order}",
                functional.max_word_len()
            )));
        }
        Ok(Self { order, functional: functional.with_max_order(order) })
    }

    /// Signature of a constant path.
    pub fn identity(d: usize, order: usize) -> Result<Self> {
        Self::new(LinearFunctional::unit(d)?, order)
    }

    pub fn from_dense(t: &DenseTensor) -> Self {
        Self { order: t.order(), functional: t.to_functional() }
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn d(&self) -> usize {
        self.functional.d()
    }

    pub fn as_functional(&self) -> &LinearFunctional {
        &self.functional
    }

    pub fn into_functional(self) -> LinearFunctional {
        self.functional
    }

    pub fn coef(&self, letters: &[u8]) -> f64 {
        self.functional.coef(letters)
    }

    pub fn to_dense(&self) -> Result<DenseTensor> {
        DenseTensor::from_functional(&self.functional, self.order)
    }
}

/// `X̂_t = (t, X_t)`: time becomes channel 1, the original channels shift up.
pub fn add_time(path: &DiscretePath) -> DiscretePath {
    let dim = path.dim + 1;
    let mut values = Vec::with_capacity(path.len() * dim);
    for k in 0..path.len() {
        values.push(path.times[k]);
        values.extend_from_slice(path.point(k));
    }
    DiscretePath { times: path.times.clone(), dim, values }
}

fn canonical_grid(path: &DiscretePath, nodes: usize) -> Vec<f64> {
    let t0 = path.times[0];
    let span = path.times[path.len() - 1] - t0;
    let steps = (nodes - 1) as f64;
    (0..nodes).map(|k| t0 + span * k as f64 / steps).collect()
}

/// Lead-lag transform: `2d` channels laid out as (lag block, lead block) on
/// `2n+1` nodes. Even nodes repeat a sample in both blocks; on odd nodes
/// the lead block has already advanced to the next sample.
pub fn lead_lag(path: &DiscretePath) -> Result<DiscretePath> {
    if path.len() < 2 {
        return Err(Error::InvalidPath("lead-lag needs at least 2 samples".into()));
    }
    let d = path.dim;
    let nodes = 2 * path.len() - 1;
    let mut values = Vec::with_capacity(nodes * 2 * d);
    for k in 0..path.len() {
        let z = path.point(k);
        values.extend_from_slice(z);
        values.extend_from_slice(z);
        if k + 1 < path.len() {
            values.extend_from_slice(z);
            values.extend_from_slice(path.point(k + 1));
        }
    }
    Ok(DiscretePath { times: canonical_grid(path, nodes), dim: 2 * d, values })
}

/// Lead-lag of a time-augmented scalar path with three channels
/// `(t, W^lag, W^lead)`. Time is not doubled: each interval first moves
/// the lead channel, then advances time together with the lag channel.
pub fn lead_lag_with_time(path: &DiscretePath) -> Result<DiscretePath> {
    if path.dim != 1 {
        return Err(Error::InvalidPath(format!("expected a scalar path, got dimension {}", path.dim)));
    }
    let n = path.len();
    let nodes = 2 * n - 1;
    let mut values = Vec::with_capacity(nodes * 3);
    for k in 0..n {
        let (t, w) = (path.times[k], path.values[k]);
        values.extend_from_slice(&[t, w, w]);
        if k + 1 < n {
            values.extend_from_slice(&[t, w, path.values[k + 1]]);
        }
    }
    Ok(DiscretePath { times: canonical_grid(path, nodes), dim: 3, values })
}

/// Signature of one straight segment: word `(k_1..k_n)` gets `Π Δ_{k_i} / n!`.
pub fn segment_signature(increment: &[f64], order: usize) -> Result<Signature> {
    let mut level1 = LinearFunctional::zero(increment.len())?;
    for (i, &x) in increment.iter().enumerate() {
        level1.add_term(crate::tensor_algebra::MultiIndex::letter(increment.len(), i as u8 + 1)?, x);
    }
    Signature::new(exp_lf(&level1, order)?, order)
}

/// Chen's identity: the signature of the concatenated path.
pub fn chen_concat(first: &Signature, second: &Signature) -> Result<Signature> {
    if first.order != second.order {
        return Err(Error::InvalidArgument(format!(
            "signature orders differ: {} vs {}",
            first.order, second.order
        )));
    }
    let f = concat_lf(&first.functional, &second.functional, Some(first.order))?;
    Signature::new(f, first.order)
}

/// Dense signature of the piecewise-linear interpolation of `path`.
pub fn path_signature_dense(path: &DiscretePath, order: usize) -> Result<DenseTensor> {
    let mut sig = DenseTensor::identity(path.dim, order)?;
    let mut scratch = SegmentScratch::default();
    let mut inc = vec![0.0; path.dim];
    for k in 0..path.len() - 1 {
        path.increment(k, &mut inc);
        sig.mul_segment_exp(&inc, &mut scratch);
    }
    Ok(sig)
}

pub fn path_signature(path: &DiscretePath, order: usize) -> Result<Signature> {
    Ok(Signature::from_dense(&path_signature_dense(path, order)?))
}

/// Visits the running signature over `[t_0, t_k]` for every sample `k`,
/// starting with the identity at `k = 0`.
pub fn for_each_prefix_signature<F>(path: &DiscretePath, order: usize, mut visit: F) -> Result<()>
where
    F: FnMut(usize, &DenseTensor),
{
    let mut sig = DenseTensor::identity(path.dim, order)?;
    let mut scratch = SegmentScratch::default();
    let mut inc = vec![0.0; path.dim];
    visit(0, &sig);
    for k in 0..path.len() - 1 {
        path.increment(k, &mut inc);
        sig.mul_segment_exp(&inc, &mut scratch);
        visit(k + 1, &sig);
    }
    Ok(())
}
