//! Dense linear algebra, the seeded generator, and reverse-mode gradients.

mod matrix;
mod rng;
mod tape;

use alloc::vec::Vec;

use crate::error::{Error, Result};

pub use matrix::Matrix;
pub use rng::{gumbel_from_uniform, sample_gumbel, RngState, GUMBEL_EPS};
pub use tape::{grad, Gradients, Tape, Var};

/// Default negative slope of the hidden-layer activation.
pub const LEAKY_SLOPE: f64 = 0.2;

pub fn leaky_relu(x: f64, slope: f64) -> f64 {
    if x >= 0.0 {
        x
    } else {
        slope * x
    }
}

/// Numerically stable softmax (max subtracted before exponentiating).
pub fn softmax(v: &[f64]) -> Result<Vec<f64>> {
    if v.is_empty() {
        return Err(Error::Empty("softmax"));
    }
    if !v.iter().all(|x| x.is_finite()) {
        return Err(Error::NonFinite("softmax"));
    }
    let mut out = v.to_vec();
    softmax_in_place(&mut out);
    Ok(out)
}

pub(crate) fn softmax_in_place(v: &mut [f64]) {
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for x in v.iter_mut() {
        *x = libm::exp(*x - max);
        total += *x;
    }
    for x in v.iter_mut() {
        *x /= total;
    }
}

/// Equal-width bin of `v` among `bins` bins spanning `[lo, hi]`.
///
/// The last bin is closed on the right. A zero-width range puts everything
/// in bin 0.
pub fn equal_width_bin(v: f64, lo: f64, hi: f64, bins: usize) -> usize {
    let width = hi - lo;
    if width.is_nan() || width <= 0.0 {
        return 0;
    }
    let pos = (v - lo) / width * bins as f64;
    if pos <= 0.0 {
        0
    } else {
        (libm::floor(pos) as usize).min(bins - 1)
    }
}
