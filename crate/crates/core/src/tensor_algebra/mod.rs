//! Sparse free-tensor-algebra arithmetic over words: concatenation,
//! shuffle, half-shuffle, pairing, linear combination and the truncated
//! exponential.

mod dense;
mod functional;
mod word;

pub use dense::{DenseProjector, DenseTensor, SegmentScratch};
pub use functional::{concat_lf, exp_lf, half_shuffle, lin_comb, pair, shuffle, shuffle_lf, truncate, LinearFunctional};
pub use word::{concat, MultiIndex};

pub(crate) use functional::shuffle_words_into;
