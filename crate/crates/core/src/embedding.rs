//! Histogram embeddings of feature columns.
//!
//! Each feature column `u_j` is summarized by `b` equal-width bins over its
//! observed range. With `ρ` the fraction of samples in each bin and `ν` the
//! mean value inside each bin, the embedding is the elementwise product
//! `ρ ⊙ ν`. Empty bins take the bin midpoint as their mean, so they
//! contribute zero. Both weight-predictor networks read these rows.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::numerics::{equal_width_bin, Matrix};

/// One embedding row per feature (`d × b`).
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureEmbeddings {
    table: Matrix,
}

impl FeatureEmbeddings {
    pub fn from_table(table: Matrix) -> Result<Self> {
        if table.rows() == 0 || table.cols() == 0 {
            return Err(Error::Empty("FeatureEmbeddings"));
        }
        Ok(FeatureEmbeddings { table })
    }

    /// Number of features `d`.
    pub fn features(&self) -> usize {
        self.table.rows()
    }

    /// Embedding width `b`.
    pub fn width(&self) -> usize {
        self.table.cols()
    }

    pub fn table(&self) -> &Matrix {
        &self.table
    }

    pub fn row(&self, j: usize) -> &[f64] {
        self.table.row(j)
    }
}

/// Per-feature inputs of the weight predictors.
///
/// `Embedded` is the normal, compact configuration. `Identity` stands for a
/// `d × d` identity table: the predictors then hold one free weight column
/// per feature, which is the dense ablation.
#[derive(Clone, Copy, Debug)]
pub enum FeatureTable<'a> {
    Embedded(&'a FeatureEmbeddings),
    Identity { features: usize },
}

impl FeatureTable<'_> {
    pub fn features(&self) -> usize {
        match self {
            FeatureTable::Embedded(e) => e.features(),
            FeatureTable::Identity { features } => *features,
        }
    }

    /// Input width of the predictor networks.
    pub fn width(&self) -> usize {
        match self {
            FeatureTable::Embedded(e) => e.width(),
            FeatureTable::Identity { features } => *features,
        }
    }
}

/// Bin frequencies (`ρ`) and bin means (`ν`) of one feature column.
#[derive(Clone, Debug, PartialEq)]
pub struct Histogram {
    pub frequencies: Vec<f64>,
    pub means: Vec<f64>,
}

impl Histogram {
    pub fn embedding(&self) -> Vec<f64> {
        self.frequencies
            .iter()
            .zip(&self.means)
            .map(|(r, m)| r * m)
            .collect()
    }
}

/// Histogram of one column with `bins` equal-width bins.
///
/// Values are accumulated in sorted order, so the result does not depend on
/// the order of samples.
pub fn histogram(column: &[f64], bins: usize) -> Result<Histogram> {
    let n = column.len();
    if n == 0 {
        return Err(Error::Empty("histogram"));
    }
    if bins == 0 || bins > n {
        return Err(Error::invalid("embedding size b must satisfy 1 <= b <= n"));
    }
    let mut sorted = column.to_vec();
    sorted.sort_by(f64::total_cmp);
    let (lo, hi) = (sorted[0], sorted[n - 1]);

    let mut counts = vec![0usize; bins];
    let mut sums = vec![0.0; bins];
    for &v in &sorted {
        let i = equal_width_bin(v, lo, hi, bins);
        counts[i] += 1;
        sums[i] += v;
    }
    let width = (hi - lo) / bins as f64;
    let frequencies = counts.iter().map(|&c| c as f64 / n as f64).collect();
    let means = counts
        .iter()
        .zip(&sums)
        .enumerate()
        .map(|(i, (&c, &s))| {
            if c == 0 {
                lo + (i as f64 + 0.5) * width
            } else {
                s / c as f64
            }
        })
        .collect();
    Ok(Histogram { frequencies, means })
}

/// Embeds every column of `x` (`n × d`) into `b` dimensions.
pub fn compute_embeddings(x: &Matrix, b: usize) -> Result<FeatureEmbeddings> {
    let (n, d) = x.shape();
    if n == 0 || d == 0 {
        return Err(Error::Empty("compute_embeddings"));
    }
    if b == 0 || b > n {
        return Err(Error::invalid(alloc::format!(
            "embedding size b = {b} must satisfy 1 <= b <= n = {n}"
        )));
    }
    let mut table = Vec::with_capacity(d * b);
    for j in 0..d {
        let h = histogram(&x.column(j), b)?;
        table.extend(h.embedding());
    }
    FeatureEmbeddings::from_table(Matrix::from_vec(d, b, table)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::RngState;
    use proptest::prelude::*;

    #[test]
    fn hand_computed_two_bins() {
        let h = histogram(&[1.0, 1.0, 2.0, 4.0], 2).unwrap();
        assert_eq!(h.frequencies, [0.75, 0.25]);
        assert!((h.means[0] - 4.0 / 3.0).abs() < 1e-15);
        assert_eq!(h.means[1], 4.0);
        let phi = h.embedding();
        assert!((phi[0] - 1.0).abs() < 1e-12);
        assert!((phi[1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn constant_feature_lands_in_first_bin() {
        let x = Matrix::from_vec(3, 1, vec![2.5; 3]).unwrap();
        let e = compute_embeddings(&x, 3).unwrap();
        assert_eq!(e.row(0), &[2.5, 0.0, 0.0]);
    }

    #[test]
    fn scaling_a_feature_scales_its_embedding() {
        let u = [0.3, -1.2, 2.2, 0.9, 1.7, -0.4];
        let doubled: Vec<f64> = u.iter().map(|v| 2.0 * v).collect();
        let a = histogram(&u, 3).unwrap();
        let b = histogram(&doubled, 3).unwrap();
        assert_eq!(a.frequencies, b.frequencies);
        for (x, y) in a.embedding().iter().zip(b.embedding()) {
            assert!((2.0 * x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn size_limits() {
        let x = Matrix::zeros(3, 2);
        assert!(compute_embeddings(&x, 4).is_err());
        assert!(compute_embeddings(&x, 0).is_err());
        assert_eq!(compute_embeddings(&x, 3).unwrap().table().shape(), (2, 3));
    }

    proptest! {
        #[test]
        fn frequencies_sum_to_one_and_shape_is_fixed(
            seed in 0u64..1000, n in 1usize..40, d in 1usize..6, b_frac in 0.0f64..1.0
        ) {
            let mut rng = RngState::new(seed);
            let b = 1 + ((n - 1) as f64 * b_frac) as usize;
            let data: Vec<f64> = (0..n * d).map(|_| rng.standard_normal() * 3.0).collect();
            let x = Matrix::from_vec(n, d, data).unwrap();
            let e = compute_embeddings(&x, b).unwrap();
            prop_assert_eq!(e.table().shape(), (d, b));
            prop_assert!(e.table().is_finite());
            for j in 0..d {
                let h = histogram(&x.column(j), b).unwrap();
                let total: f64 = h.frequencies.iter().sum();
                prop_assert!((total - 1.0).abs() < 1e-12);
            }
        }

        #[test]
        fn shuffling_samples_leaves_embeddings_unchanged(seed in 0u64..500) {
            let mut rng = RngState::new(seed);
            let (n, d) = (25, 4);
            let data: Vec<f64> = (0..n * d).map(|_| rng.standard_normal()).collect();
            let x = Matrix::from_vec(n, d, data).unwrap();
            let mut order: Vec<usize> = (0..n).collect();
            rng.shuffle(&mut order);
            let shuffled = x.select_rows(&order).unwrap();
            prop_assert_eq!(compute_embeddings(&x, 5).unwrap(), compute_embeddings(&shuffled, 5).unwrap());
        }
    }
}
