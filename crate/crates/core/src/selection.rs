//! Concrete selection gates.
//!
//! Training path: a `K × b` predictor turns each feature embedding into a
//! distribution over the `K` selection neurons (`Δ_s`, one softmax per
//! feature column). Row `k` of the gate matrix is then a Gumbel-softmax
//! sample over features, `softmax((ln Δ_s[k] + g) / τ)`, and the selected
//! inputs are `M · x`. As `τ` shrinks the rows approach one-hot vectors.
//!
//! Inference path: [`unique_argmax`] turns `Mᵀ` into `K` distinct feature
//! indices and the network reads `x` at those coordinates.

use alloc::vec;
use alloc::vec::Vec;

use crate::embedding::FeatureTable;
use crate::error::{Error, Result};
use crate::numerics::{Matrix, RngState, Tape, Var};

/// `Δ_s` entries are floored here before taking logs; a softmax over `K`
/// can underflow to zero.
pub const LOG_FLOOR: f64 = 1e-30;

/// Weights `W_ωs` (`K × b`) of the selection predictor.
#[derive(Clone, Debug, PartialEq)]
pub struct SelectionPredictor {
    pub weights: Matrix,
}

impl SelectionPredictor {
    pub fn new(weights: Matrix) -> Self {
        SelectionPredictor { weights }
    }

    pub fn selected(&self) -> usize {
        self.weights.rows()
    }

    pub fn param_count(&self) -> usize {
        self.weights.len()
    }
}

/// `Δ_s` (`K × d`, columns on the simplex) together with the temperature.
#[derive(Clone, Debug, PartialEq)]
pub struct ConcreteState {
    pub logits: Matrix,
    pub tau: f64,
}

/// Relaxed selection matrix `M` (`K × d`); each row sums to one.
#[derive(Clone, Debug, PartialEq)]
pub struct GateMatrix {
    pub gates: Matrix,
}

impl GateMatrix {
    /// Exact one-hot gates for the given feature indices.
    pub fn one_hot(indices: &[usize], features: usize) -> Result<Self> {
        let mut gates = Matrix::zeros(indices.len(), features);
        for (k, &j) in indices.iter().enumerate() {
            if j >= features {
                return Err(Error::Index {
                    index: j,
                    len: features,
                });
            }
            gates.set(k, j, 1.0);
        }
        Ok(GateMatrix { gates })
    }
}

/// The feature table as recorded on a tape.
pub(crate) enum BoundTable {
    Embedded(Var),
    Identity,
}

impl BoundTable {
    pub(crate) fn bind(tape: &mut Tape, table: &FeatureTable<'_>) -> Self {
        match table {
            FeatureTable::Embedded(e) => BoundTable::Embedded(tape.constant(e.table().clone())),
            FeatureTable::Identity { .. } => BoundTable::Identity,
        }
    }

    /// `W · φᵀ`: one output column per feature.
    pub(crate) fn project(&self, tape: &mut Tape, weights: Var) -> Result<Var> {
        match self {
            BoundTable::Embedded(e) => tape.matmul_t(weights, *e),
            BoundTable::Identity => Ok(weights),
        }
    }
}

fn check_width(weights: &Matrix, table: &FeatureTable<'_>, op: &'static str) -> Result<()> {
    if weights.cols() != table.width() {
        return Err(Error::Shape {
            op,
            left: weights.shape(),
            right: (table.features(), table.width()),
        });
    }
    Ok(())
}

/// Records `Δ_s = softmax_K(W_ωs φ(u_j))` for all features.
pub(crate) fn record_logits(tape: &mut Tape, weights: Var, table: &BoundTable) -> Result<Var> {
    let scores = table.project(tape, weights)?;
    tape.softmax_cols(scores)
}

/// Records the Gumbel-softmax rows for fixed noise `gumbel` (`K × d`).
pub(crate) fn record_gates(tape: &mut Tape, logits: Var, gumbel: &Matrix, tau: f64) -> Result<Var> {
    if tau.is_nan() || tau <= 0.0 {
        return Err(Error::invalid("temperature must be positive"));
    }
    let log_delta = tape.ln_floor(logits, LOG_FLOOR)?;
    let noise = tape.constant(gumbel.clone());
    let perturbed = tape.add(log_delta, noise)?;
    let scaled = tape.scale(perturbed, 1.0 / tau)?;
    tape.softmax_rows(scaled)
}

/// Column `j` of `Δ_s` is `softmax(W_ωs · φ(u_j))`.
pub fn predict_logits(
    pred: &SelectionPredictor,
    table: &FeatureTable<'_>,
    tau: f64,
) -> Result<ConcreteState> {
    check_width(&pred.weights, table, "predict_logits")?;
    let mut tape = Tape::new();
    let w = tape.constant(pred.weights.clone());
    let bound = BoundTable::bind(&mut tape, table);
    let logits = record_logits(&mut tape, w, &bound)?;
    Ok(ConcreteState {
        logits: tape.value(logits)?.clone(),
        tau,
    })
}

/// Draws a `K × d` Gumbel noise matrix, row by row.
pub fn sample_gumbel_matrix(rng: &mut RngState, rows: usize, cols: usize) -> Matrix {
    let data = (0..rows * cols).map(|_| rng.gumbel()).collect();
    Matrix::from_raw(rows, cols, data)
}

/// Gates for explicit noise; [`sample_gates`] draws the noise itself.
pub fn gates_with_noise(state: &ConcreteState, gumbel: &Matrix) -> Result<GateMatrix> {
    if gumbel.shape() != state.logits.shape() {
        return Err(Error::Shape {
            op: "gates_with_noise",
            left: state.logits.shape(),
            right: gumbel.shape(),
        });
    }
    let mut tape = Tape::new();
    let logits = tape.constant(state.logits.clone());
    let m = record_gates(&mut tape, logits, gumbel, state.tau)?;
    Ok(GateMatrix {
        gates: tape.value(m)?.clone(),
    })
}

/// Samples `M` with fresh Gumbel noise for every row.
pub fn sample_gates(state: &ConcreteState, rng: &mut RngState) -> Result<GateMatrix> {
    let (k, d) = state.logits.shape();
    let gumbel = sample_gumbel_matrix(rng, k, d);
    gates_with_noise(state, &gumbel)
}

/// `SEL(x) = M x`.
pub fn select_forward(m: &GateMatrix, x: &[f64]) -> Result<Vec<f64>> {
    if m.gates.cols() != x.len() {
        return Err(Error::Shape {
            op: "select_forward",
            left: m.gates.shape(),
            right: (x.len(), 1),
        });
    }
    Ok((0..m.gates.rows())
        .map(|k| m.gates.row(k).iter().zip(x).map(|(a, b)| a * b).sum())
        .collect())
}

/// Geometric schedule `τ0 · (τE / τ0)^(e / E)`.
pub fn anneal_temperature(epoch: usize, epochs: usize, tau0: f64, tau_end: f64) -> Result<f64> {
    if epochs == 0 {
        return Err(Error::invalid("annealing needs at least one epoch"));
    }
    if epoch > epochs {
        return Err(Error::invalid("epoch beyond the schedule"));
    }
    if !(tau0 > 0.0 && tau_end > 0.0) {
        return Err(Error::invalid("temperatures must be positive"));
    }
    Ok(if epoch == 0 {
        tau0
    } else if epoch == epochs {
        tau_end
    } else {
        tau0 * libm::pow(tau_end / tau0, epoch as f64 / epochs as f64)
    })
}

/// Greedy extraction of `K` distinct rows from a nonnegative `d × K` matrix.
///
/// Each round takes the largest remaining cell `(x, y)`, records row `x`, and
/// retires row `x` and column `y`. Ties go to the lowest row, then the lowest
/// column. Retired cells are skipped rather than compared as zeros, so the
/// result stays duplicate-free even when live cells are zero.
pub fn unique_argmax(a: &Matrix) -> Result<Vec<usize>> {
    let (d, k) = a.shape();
    if k > d {
        return Err(Error::invalid(alloc::format!(
            "unique_argmax needs K <= d, got K = {k}, d = {d}"
        )));
    }
    let mut row_used = vec![false; d];
    let mut col_used = vec![false; k];
    let mut picked = Vec::with_capacity(k);
    for _ in 0..k {
        let mut best: Option<(usize, usize, f64)> = None;
        for (x, used) in row_used.iter().enumerate() {
            if *used {
                continue;
            }
            for (y, &v) in a.row(x).iter().enumerate() {
                if col_used[y] {
                    continue;
                }
                if best.is_none_or(|(_, _, bv)| v > bv) {
                    best = Some((x, y, v));
                }
            }
        }
        let (x, y, _) = best.expect("a live cell remains while fewer than K rows are picked");
        row_used[x] = true;
        col_used[y] = true;
        picked.push(x);
    }
    Ok(picked)
}

/// Per-row argmax of `M` (`K × d`), lowest index on ties. May repeat features.
pub fn row_argmax(m: &GateMatrix) -> Vec<usize> {
    (0..m.gates.rows())
        .map(|k| {
            let row = m.gates.row(k);
            let mut best = 0;
            for (j, &v) in row.iter().enumerate() {
                if v > row[best] {
                    best = j;
                }
            }
            best
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embedding::FeatureEmbeddings;
    use proptest::prelude::*;

    fn emb(rows: &[&[f64]]) -> FeatureEmbeddings {
        FeatureEmbeddings::from_table(Matrix::from_rows(rows).unwrap()).unwrap()
    }

    #[test]
    fn zero_predictor_gives_uniform_columns() {
        let e = emb(&[&[0.3, 1.0], &[-2.0, 0.1], &[0.0, 0.0]]);
        let pred = SelectionPredictor::new(Matrix::zeros(4, 2));
        let s = predict_logits(&pred, &FeatureTable::Embedded(&e), 1.0).unwrap();
        assert_eq!(s.logits.shape(), (4, 3));
        assert!(s.logits.as_slice().iter().all(|&v| (v - 0.25).abs() < 1e-15));
    }

    #[test]
    fn single_neuron_columns_are_one() {
        let e = emb(&[&[0.3, 1.0], &[-2.0, 0.1]]);
        let pred = SelectionPredictor::new(Matrix::from_rows(&[[5.0, -3.0]]).unwrap());
        let s = predict_logits(&pred, &FeatureTable::Embedded(&e), 1.0).unwrap();
        assert_eq!(s.logits.as_slice(), &[1.0, 1.0]);
    }

    #[test]
    fn duplicate_features_share_columns() {
        let e = emb(&[&[0.3, 1.0], &[-2.0, 0.1], &[0.3, 1.0]]);
        let pred = SelectionPredictor::new(Matrix::from_rows(&[[1.0, 2.0], [-0.5, 0.7]]).unwrap());
        let s = predict_logits(&pred, &FeatureTable::Embedded(&e), 1.0).unwrap();
        assert_eq!(s.logits.column(0), s.logits.column(2));
        assert_ne!(s.logits.column(0), s.logits.column(1));
    }

    #[test]
    fn predictor_width_must_match_embeddings() {
        let e = emb(&[&[0.3, 1.0]]);
        let pred = SelectionPredictor::new(Matrix::zeros(2, 3));
        assert!(predict_logits(&pred, &FeatureTable::Embedded(&e), 1.0).is_err());
    }

    fn state(logits: Matrix, tau: f64) -> ConcreteState {
        ConcreteState { logits, tau }
    }

    #[test]
    fn hot_gates_are_nearly_uniform() {
        let mut rng = RngState::new(11);
        let d = 10;
        let mut col = vec![0.0; 3 * d];
        for (i, v) in col.iter_mut().enumerate() {
            *v = 0.05 + (i % 7) as f64 * 0.1;
        }
        let s = state(Matrix::from_vec(3, d, col).unwrap(), 1e6);
        let m = sample_gates(&s, &mut rng).unwrap();
        for v in m.gates.as_slice() {
            assert!((v - 0.1).abs() < 1e-3);
        }
    }

    #[test]
    fn cold_gates_are_one_hot() {
        let mut rng = RngState::new(12);
        let d = 10;
        let mut row = vec![0.01 / 9.0; d];
        row[4] = 0.99;
        let s = state(Matrix::from_vec(1, d, row).unwrap(), 1e-4);
        let m = sample_gates(&s, &mut rng).unwrap();
        let max = m.gates.as_slice().iter().copied().fold(0.0, f64::max);
        assert!(max > 0.999);
    }

    #[test]
    fn one_hot_selection_reads_coordinates() {
        let m = GateMatrix::one_hot(&[2, 0], 3).unwrap();
        assert_eq!(select_forward(&m, &[7.0, 8.0, 9.0]).unwrap(), [9.0, 7.0]);
        let uniform = GateMatrix {
            gates: Matrix::filled(2, 4, 0.25),
        };
        assert_eq!(select_forward(&uniform, &[1.0, 2.0, 3.0, 6.0]).unwrap(), [3.0, 3.0]);
        assert_eq!(select_forward(&uniform, &[0.0; 4]).unwrap(), [0.0, 0.0]);
        assert!(select_forward(&uniform, &[0.0; 3]).is_err());
    }

    #[test]
    fn schedule_endpoints_and_midpoint() {
        assert_eq!(anneal_temperature(0, 4000, 10.0, 0.01).unwrap(), 10.0);
        assert_eq!(anneal_temperature(4000, 4000, 10.0, 0.01).unwrap(), 0.01);
        let mid = anneal_temperature(2000, 4000, 10.0, 0.01).unwrap();
        assert!((mid - libm::sqrt(0.1)).abs() < 1e-12);
        assert!(anneal_temperature(0, 0, 10.0, 0.01).is_err());
    }

    #[test]
    fn unique_argmax_hand_traces() {
        let a = Matrix::from_rows(&[[0.9, 0.8], [0.5, 0.4]]).unwrap();
        assert_eq!(unique_argmax(&a).unwrap(), [0, 1]);
        let b = Matrix::from_rows(&[[0.9, 0.1], [0.8, 0.7], [0.2, 0.3]]).unwrap();
        assert_eq!(unique_argmax(&b).unwrap(), [0, 1]);
    }

    #[test]
    fn unique_argmax_one_hot_columns() {
        let mut a = Matrix::zeros(5, 3);
        a.set(3, 0, 1.0);
        a.set(1, 1, 0.9);
        a.set(4, 2, 0.8);
        assert_eq!(unique_argmax(&a).unwrap(), [3, 1, 4]);
    }

    #[test]
    fn unique_argmax_all_zero_still_distinct() {
        assert_eq!(unique_argmax(&Matrix::zeros(4, 3)).unwrap(), [0, 1, 2]);
    }

    #[test]
    fn unique_argmax_rejects_wide_input() {
        assert!(unique_argmax(&Matrix::zeros(2, 3)).is_err());
    }

    #[test]
    fn row_argmax_may_repeat() {
        let m = GateMatrix {
            gates: Matrix::from_rows(&[[0.1, 0.9], [0.2, 0.8]]).unwrap(),
        };
        assert_eq!(row_argmax(&m), [1, 1]);
        assert_eq!(unique_argmax(&m.gates.transpose()).unwrap(), [1, 0]);
    }

    proptest! {
        #[test]
        fn gate_rows_lie_on_simplex(
            seed in 0u64..10_000,
            tau in prop_oneof![Just(1e-4), Just(0.01), Just(1.0), Just(10.0), Just(1e6)],
        ) {
            let mut rng = RngState::new(seed);
            let (k, d) = (3, 12);
            let raw: Vec<f64> = (0..k * d).map(|_| rng.standard_normal() * 4.0).collect();
            let mut t = Tape::new();
            let z = t.constant(Matrix::from_vec(k, d, raw).unwrap());
            let delta = t.softmax_cols(z).unwrap();
            let s = state(t.value(delta).unwrap().clone(), tau);
            let m = sample_gates(&s, &mut rng).unwrap();
            for r in 0..k {
                let row = m.gates.row(r);
                let total: f64 = row.iter().sum();
                prop_assert!((total - 1.0).abs() < 1e-12);
                prop_assert!(row.iter().all(|&v| (0.0..=1.0).contains(&v)));
            }
        }

        #[test]
        fn unique_argmax_returns_distinct_rows(seed in 0u64..10_000, d in 1usize..15, kf in 0.0f64..1.0) {
            let mut rng = RngState::new(seed);
            let k = 1 + ((d - 1) as f64 * kf) as usize;
            let data: Vec<f64> = (0..d * k).map(|_| rng.uniform()).collect();
            let s = unique_argmax(&Matrix::from_vec(d, k, data).unwrap()).unwrap();
            prop_assert_eq!(s.len(), k);
            let mut sorted = s.clone();
            sorted.sort_unstable();
            sorted.dedup();
            prop_assert_eq!(sorted.len(), k);
            prop_assert!(s.iter().all(|&i| i < d));
        }
    }
}
