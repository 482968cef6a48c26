//! Accuracy, reconstruction error, pairwise mutual information, model size.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::data::Dataset;
use crate::embedding::FeatureTable;
use crate::error::{Error, Result};
use crate::network::{self, Architecture, FsNetModel};
use crate::numerics::{equal_width_bin, Matrix};

/// Default bins per feature for the mutual-information estimate.
pub const MI_BINS: usize = 10;

#[derive(Clone, Debug, PartialEq)]
pub struct EvalReport {
    pub accuracy: f64,
    /// Mean over samples of `‖x − x̂‖²`.
    pub recon_error: f64,
    /// Nats.
    pub avg_mi: f64,
    pub mi_bins: usize,
    pub param_count_predictor: usize,
    pub param_count_dense: usize,
    /// Analytic ratio of the two counts.
    pub compression_ratio: f64,
    pub samples: usize,
}

/// Index of the largest entry; the lowest index wins ties.
pub fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = i;
        }
    }
    best
}

pub fn accuracy_from_probs(probs: &Matrix, y: &[usize]) -> Result<f64> {
    if probs.rows() != y.len() {
        return Err(Error::invalid(format!(
            "{} predictions for {} labels",
            probs.rows(),
            y.len()
        )));
    }
    if y.is_empty() {
        return Err(Error::Empty("accuracy"));
    }
    let correct = y
        .iter()
        .enumerate()
        .filter(|&(i, &label)| argmax(probs.row(i)) == label)
        .count();
    Ok(correct as f64 / y.len() as f64)
}

/// Fraction of samples whose most probable class is the label.
pub fn accuracy(model: &FsNetModel, selected: &[usize], data: &Dataset) -> Result<f64> {
    let probs = network::classify_batch(model, selected, &data.x)?;
    accuracy_from_probs(&probs, &data.y)
}

/// `(1/n) Σᵢ ‖xᵢ − x̂ᵢ‖²`.
pub fn mean_squared_norm(recon: &Matrix, x: &Matrix) -> Result<f64> {
    if recon.shape() != x.shape() {
        return Err(Error::Shape {
            op: "mean_squared_norm",
            left: recon.shape(),
            right: x.shape(),
        });
    }
    if x.rows() == 0 {
        return Err(Error::Empty("reconstruction error"));
    }
    let total: f64 = recon
        .as_slice()
        .iter()
        .zip(x.as_slice())
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    Ok(total / x.rows() as f64)
}

/// Inference-path reconstruction error on `data`.
pub fn reconstruction_error(
    model: &FsNetModel,
    table: &FeatureTable<'_>,
    selected: &[usize],
    data: &Dataset,
) -> Result<f64> {
    let out = network::infer_batch(model, table, selected, &data.x)?;
    mean_squared_norm(&out.recon, &data.x)
}

fn bin_column(column: &[f64], bins: usize) -> Vec<usize> {
    let lo = column.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = column.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    column.iter().map(|&v| equal_width_bin(v, lo, hi, bins)).collect()
}

fn plug_in_mi(a: &[usize], b: &[usize], bins: usize) -> f64 {
    let n = a.len() as f64;
    let mut joint = vec![0usize; bins * bins];
    let mut pa = vec![0usize; bins];
    let mut pb = vec![0usize; bins];
    for (&i, &j) in a.iter().zip(b) {
        joint[i * bins + j] += 1;
        pa[i] += 1;
        pb[j] += 1;
    }
    let mut mi = 0.0;
    for i in 0..bins {
        for j in 0..bins {
            let c = joint[i * bins + j];
            if c > 0 {
                let c = c as f64;
                mi += c / n * libm::log(c * n / (pa[i] as f64 * pb[j] as f64));
            }
        }
    }
    mi.max(0.0)
}

/// Plug-in mutual information (nats) of two columns, equal-width bins each.
pub fn mutual_information(a: &[f64], b: &[f64], bins: usize) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::invalid("columns differ in length"));
    }
    if a.is_empty() {
        return Err(Error::Empty("mutual_information"));
    }
    if bins == 0 {
        return Err(Error::invalid("need at least one bin"));
    }
    Ok(plug_in_mi(&bin_column(a, bins), &bin_column(b, bins), bins))
}

/// Mean pairwise mutual information over the features in `selected`:
/// `2 / (K (K − 1)) Σ_{i<j} I(X_i, X_j)`.
pub fn avg_mutual_information(x: &Matrix, selected: &[usize], bins: usize) -> Result<f64> {
    let k = selected.len();
    if k < 2 {
        return Err(Error::invalid("average mutual information needs at least two features"));
    }
    if x.rows() == 0 {
        return Err(Error::Empty("avg_mutual_information"));
    }
    if bins == 0 {
        return Err(Error::invalid("need at least one bin"));
    }
    if let Some(&j) = selected.iter().find(|&&j| j >= x.cols()) {
        return Err(Error::Index { index: j, len: x.cols() });
    }
    let binned: Vec<Vec<usize>> = selected.iter().map(|&j| bin_column(&x.column(j), bins)).collect();
    let mut total = 0.0;
    for i in 0..k {
        for j in i + 1..k {
            total += plug_in_mi(&binned[i], &binned[j], bins);
        }
    }
    Ok(2.0 * total / (k * (k - 1)) as f64)
}

/// `(dK + h′d + s) / (bK + h′b + s)` for `d` features and embedding size `b`.
pub fn compression_ratio(arch: &Architecture, d: usize, b: usize, bias: bool) -> f64 {
    arch.param_count(d, bias) as f64 / arch.param_count(b, bias) as f64
}

/// Every metric for a trained model on `data`.
pub fn evaluate(
    model: &FsNetModel,
    table: &FeatureTable<'_>,
    selected: &[usize],
    data: &Dataset,
    mi_bins: usize,
) -> Result<EvalReport> {
    let out = network::infer_batch(model, table, selected, &data.x)?;
    let arch = &model.arch;
    let bias = model.config.bias;
    let b = model.config.b;
    Ok(EvalReport {
        accuracy: accuracy_from_probs(&out.probs, &data.y)?,
        recon_error: mean_squared_norm(&out.recon, &data.x)?,
        avg_mi: avg_mutual_information(&data.x, selected, mi_bins)?,
        mi_bins,
        param_count_predictor: arch.param_count(b, bias),
        param_count_dense: arch.param_count(arch.input_dim, bias),
        compression_ratio: compression_ratio(arch, arch.input_dim, b, bias),
        samples: data.x.rows(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::RngState;
    use proptest::prelude::*;

    #[test]
    fn argmax_prefers_lowest_on_ties() {
        assert_eq!(argmax(&[0.5, 0.5]), 0);
        assert_eq!(argmax(&[0.1, 0.7, 0.7]), 1);
    }

    #[test]
    fn accuracy_cases() {
        let p = Matrix::from_rows(&[[0.9, 0.1], [0.2, 0.8], [0.5, 0.5], [0.5, 0.5]]).unwrap();
        assert_eq!(accuracy_from_probs(&p, &[0, 1, 0, 0]).unwrap(), 1.0);
        assert_eq!(accuracy_from_probs(&p, &[0, 1, 1, 0]).unwrap(), 0.75);
        let constant = Matrix::from_rows(&[[0.6, 0.4]; 4]).unwrap();
        assert_eq!(accuracy_from_probs(&constant, &[0, 1, 0, 1]).unwrap(), 0.5);
    }

    #[test]
    fn squared_norm_cases() {
        let x = Matrix::from_rows(&[[1.0, 2.0], [3.0, -1.0]]).unwrap();
        assert_eq!(mean_squared_norm(&x, &x).unwrap(), 0.0);
        assert_eq!(mean_squared_norm(&Matrix::zeros(2, 2), &x).unwrap(), (5.0 + 10.0) / 2.0);
    }

    fn entropy(col: &[f64], bins: usize) -> f64 {
        let b = bin_column(col, bins);
        let mut counts = vec![0usize; bins];
        for i in b {
            counts[i] += 1;
        }
        let n = col.len() as f64;
        counts
            .iter()
            .filter(|&&c| c > 0)
            .map(|&c| -(c as f64 / n) * libm::log(c as f64 / n))
            .sum()
    }

    #[test]
    fn self_information_is_entropy() {
        let mut rng = RngState::new(3);
        let col: Vec<f64> = (0..500).map(|_| rng.standard_normal()).collect();
        let mi = mutual_information(&col, &col, 10).unwrap();
        assert!((mi - entropy(&col, 10)).abs() < 1e-12);
    }

    #[test]
    fn independent_uniforms_have_little_information() {
        let mut rng = RngState::new(11);
        let n = 10_000;
        let data: Vec<f64> = (0..2 * n).map(|_| rng.uniform()).collect();
        let x = Matrix::from_vec(n, 2, data).unwrap();
        let mi = avg_mutual_information(&x, &[0, 1], 10).unwrap();
        assert!(mi <= 0.05, "{mi}");
    }

    #[test]
    fn two_features_average_is_the_pair() {
        let mut rng = RngState::new(12);
        let data: Vec<f64> = (0..300).map(|_| rng.standard_normal()).collect();
        let x = Matrix::from_vec(100, 3, data).unwrap();
        let pair = mutual_information(&x.column(0), &x.column(2), 10).unwrap();
        assert_eq!(avg_mutual_information(&x, &[0, 2], 10).unwrap(), pair);
        assert!(avg_mutual_information(&x, &[0], 10).is_err());
    }

    #[test]
    fn compression_fixed_point_and_growth() {
        let arch = Architecture::standard(500, 10, 2);
        assert_eq!(compression_ratio(&arch, 10, 10, false), 1.0);
        let mut prev = 1.0;
        for d in [20, 100, 1000, 7129] {
            let cr = compression_ratio(&arch, d, 10, false);
            assert!(cr > prev);
            prev = cr;
        }
    }

    proptest! {
        #[test]
        fn average_mi_ignores_feature_order(seed in 0u64..300) {
            let mut rng = RngState::new(seed);
            let data: Vec<f64> = (0..60 * 5).map(|_| rng.standard_normal()).collect();
            let x = Matrix::from_vec(60, 5, data).unwrap();
            let mut s = vec![0, 1, 2, 3, 4];
            let a = avg_mutual_information(&x, &s, 10).unwrap();
            rng.shuffle(&mut s);
            let b = avg_mutual_information(&x, &s, 10).unwrap();
            prop_assert!((a - b).abs() < 1e-12);
            prop_assert!(a >= 0.0);
        }
    }
}
