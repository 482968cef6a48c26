//! Full-batch training: loss, RMSprop, temperature annealing, final `S`.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use crate::data::Dataset;
use crate::embedding::{compute_embeddings, FeatureEmbeddings, FeatureTable};
use crate::error::{Error, Result};
use crate::evaluator;
use crate::network::{self, Architecture, DropoutMasks, FsNetModel, Selection};
use crate::numerics::{Matrix, RngState, Tape, LEAKY_SLOPE};
use crate::selection::{self, BoundTable, GateMatrix};

/// Floor applied to class probabilities inside the log.
pub const PROB_FLOOR: f64 = 1e-12;

/// RNG streams derived from the run seed.
pub mod streams {
    pub const INIT: u64 = 0;
    pub const GUMBEL: u64 = 1;
    pub const DROPOUT: u64 = 2;
    pub const INFERENCE: u64 = 3;
}

/// Where the selection and reconstruction weights come from.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub enum Mode {
    /// Predicted from `b`-wide feature embeddings.
    #[default]
    Predictor,
    /// Learned directly, one column per feature.
    Dense,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Predictor => "predictor",
            Mode::Dense => "dense",
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "predictor" => Ok(Mode::Predictor),
            "dense" => Ok(Mode::Dense),
            other => Err(Error::invalid(format!("unknown mode {other:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    /// Number of selected features `K`.
    pub k: usize,
    /// Embedding size `b`.
    pub b: usize,
    pub lambda: f64,
    pub lr: f64,
    pub epochs: usize,
    pub tau0: f64,
    pub tau_end: f64,
    pub dropout: f64,
    pub seed: u64,
    pub mode: Mode,
    pub encoder: Vec<usize>,
    pub classifier: Vec<usize>,
    pub decoder: Vec<usize>,
    pub rms_decay: f64,
    pub rms_eps: f64,
    pub leaky_slope: f64,
    pub bias: bool,
    /// Z-score inputs before training; the reconstruction target is then the
    /// standardized input.
    pub standardize: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            k: 10,
            b: 10,
            lambda: 1.0,
            lr: 1e-3,
            epochs: 4000,
            tau0: 10.0,
            tau_end: 0.01,
            dropout: 0.2,
            seed: 0,
            mode: Mode::Predictor,
            encoder: vec![64, 32, 16],
            classifier: Vec::new(),
            decoder: vec![32, 64],
            rms_decay: 0.9,
            rms_eps: 1e-8,
            leaky_slope: LEAKY_SLOPE,
            bias: false,
            standardize: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let check = |ok: bool, msg: &str| if ok { Ok(()) } else { Err(Error::invalid(msg)) };
        check(self.k >= 1, "K must be at least 1")?;
        check(self.b >= 1, "b must be at least 1")?;
        check(self.lambda >= 0.0 && self.lambda.is_finite(), "lambda must be finite and >= 0")?;
        check(self.lr >= 0.0 && self.lr.is_finite(), "learning rate must be finite and >= 0")?;
        check(self.epochs >= 1, "epochs must be at least 1")?;
        check(
            self.tau0.is_finite() && self.tau_end > 0.0 && self.tau0 > self.tau_end,
            "temperatures must satisfy tau0 > tauE > 0",
        )?;
        check((0.0..1.0).contains(&self.dropout), "dropout must lie in [0, 1)")?;
        check((0.0..1.0).contains(&self.rms_decay), "RMSprop decay must lie in [0, 1)")?;
        check(self.rms_eps > 0.0 && self.rms_eps.is_finite(), "RMSprop epsilon must be positive")?;
        check(self.leaky_slope.is_finite(), "leaky slope must be finite")?;
        check(
            !self.encoder.is_empty() && !self.decoder.is_empty(),
            "encoder and decoder need at least one layer",
        )?;
        Ok(())
    }

    /// Input width of the weight predictors for `d` features.
    pub fn predictor_width(&self, d: usize) -> usize {
        match self.mode {
            Mode::Predictor => self.b,
            Mode::Dense => d,
        }
    }

    pub fn temperature(&self, epoch: usize) -> Result<f64> {
        selection::anneal_temperature(epoch, self.epochs, self.tau0, self.tau_end)
    }
}

/// Loss split into its two terms (`total = class + λ · recon`).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossParts {
    pub total: f64,
    pub class: f64,
    pub recon: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpochRecord {
    /// 1-based.
    pub epoch: usize,
    pub tau: f64,
    pub loss: f64,
    pub class_loss: f64,
    pub recon_loss: f64,
    /// Inference-path accuracy on the training data with this epoch's `S`.
    pub train_accuracy: f64,
    pub test_accuracy: Option<f64>,
    pub test_recon: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainReport {
    pub records: Vec<EpochRecord>,
    pub selected: Vec<usize>,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub model: FsNetModel,
    /// Training-data embeddings; `None` in dense mode.
    pub embeddings: Option<FeatureEmbeddings>,
    pub report: TrainReport,
}

impl TrainOutcome {
    pub fn selected(&self) -> &[usize] {
        &self.report.selected
    }

    pub fn feature_table(&self) -> Result<FeatureTable<'_>> {
        self.model.feature_table(self.embeddings.as_ref())
    }
}

/// Random draws of one training step.
#[derive(Clone, Debug, PartialEq)]
pub struct StepNoise {
    /// `K × d` Gumbel noise.
    pub gumbel: Matrix,
    pub tau: f64,
    pub masks: DropoutMasks,
}

/// One-hot rows of the labels, `n × classes`.
pub fn one_hot_labels(y: &[usize], classes: usize) -> Result<Matrix> {
    let mut m = Matrix::zeros(y.len(), classes);
    for (i, &label) in y.iter().enumerate() {
        if label >= classes {
            return Err(Error::Label { label, classes });
        }
        m.set(i, label, 1.0);
    }
    Ok(m)
}

struct Recorded {
    tape: Tape,
    params: network::BoundModel,
    total: crate::numerics::Var,
    parts: LossParts,
    gates: Option<crate::numerics::Var>,
}

fn record_loss(
    model: &FsNetModel,
    table: &FeatureTable<'_>,
    x: &Matrix,
    y: &[usize],
    selection: Selection<'_>,
    masks: &DropoutMasks,
    trainable: bool,
) -> Result<Recorded> {
    network::check_inputs(model, x.cols(), table)?;
    if y.len() != x.rows() {
        return Err(Error::invalid(format!(
            "{} labels for {} samples",
            y.len(),
            x.rows()
        )));
    }
    let targets = one_hot_labels(y, model.arch.classes)?;
    let mut tape = Tape::new();
    let params = model.bind(&mut tape, trainable);
    let bound = BoundTable::bind(&mut tape, table);
    let f = network::record_forward(&mut tape, model, &params, &bound, x, selection, masks)?;

    let log_p = tape.ln_floor(f.probs, PROB_FLOOR)?;
    let t = tape.constant(targets);
    let picked = tape.mul(log_p, t)?;
    let summed = tape.sum(picked)?;
    let class = tape.scale(summed, -1.0)?;

    let xv = tape.constant(x.clone());
    let diff = tape.sub(f.recon, xv)?;
    let sq = tape.mul(diff, diff)?;
    let recon = tape.sum(sq)?;
    let weighted = tape.scale(recon, model.config.lambda)?;
    let total = tape.add(class, weighted)?;

    let parts = LossParts {
        total: tape.scalar(total)?,
        class: tape.scalar(class)?,
        recon: tape.scalar(recon)?,
    };
    Ok(Recorded {
        tape,
        params,
        total,
        parts,
        gates: f.gates,
    })
}

/// Sum of cross-entropies plus `λ` times the summed squared reconstruction
/// error, with inputs gated by `M` (`K × d`). No dropout.
pub fn loss(
    model: &FsNetModel,
    table: &FeatureTable<'_>,
    x: &Matrix,
    y: &[usize],
    gates: &Matrix,
) -> Result<LossParts> {
    let r = record_loss(
        model,
        table,
        x,
        y,
        Selection::Gates(gates),
        &DropoutMasks::none(),
        false,
    )?;
    Ok(r.parts)
}

/// Training loss and its gradient for every parameter, in
/// [`FsNetModel::named_params`] order, for fixed noise.
pub fn loss_and_gradients(
    model: &FsNetModel,
    table: &FeatureTable<'_>,
    x: &Matrix,
    y: &[usize],
    noise: &StepNoise,
) -> Result<(LossParts, Vec<Matrix>)> {
    let r = record_loss(
        model,
        table,
        x,
        y,
        Selection::Concrete {
            gumbel: &noise.gumbel,
            tau: noise.tau,
        },
        &noise.masks,
        true,
    )?;
    let grads = gradients_of(&r, model)?;
    Ok((r.parts, grads))
}

fn gradients_of(r: &Recorded, model: &FsNetModel) -> Result<Vec<Matrix>> {
    let mut g = r.tape.backward(r.total)?;
    r.params
        .vars()
        .into_iter()
        .zip(model.named_params())
        .map(|(v, (_, m))| g.take_or_zeros(v, m.shape()))
        .collect()
}

/// Per-parameter running averages of squared gradients.
#[derive(Clone, Debug, PartialEq)]
pub struct RmsProp {
    pub decay: f64,
    pub eps: f64,
    pub state: Vec<Matrix>,
}

impl RmsProp {
    pub fn new(model: &FsNetModel) -> Self {
        RmsProp {
            decay: model.config.rms_decay,
            eps: model.config.rms_eps,
            state: model
                .named_params()
                .into_iter()
                .map(|(_, m)| Matrix::zeros(m.rows(), m.cols()))
                .collect(),
        }
    }

    pub fn step(&mut self, model: &mut FsNetModel, grads: &[Matrix], lr: f64) -> Result<()> {
        let params = model.params_mut();
        if params.len() != grads.len() || params.len() != self.state.len() {
            return Err(Error::invalid("gradient count differs from parameter count"));
        }
        for ((w, g), v) in params.into_iter().zip(grads).zip(&mut self.state) {
            rmsprop_step(w, g, v, lr, self.decay, self.eps)?;
        }
        Ok(())
    }
}

/// `v ← ρv + (1−ρ)g²`, then `w ← w − η g / (√v + ε)`, elementwise.
pub fn rmsprop_step(
    w: &mut Matrix,
    g: &Matrix,
    v: &mut Matrix,
    lr: f64,
    decay: f64,
    eps: f64,
) -> Result<()> {
    if w.shape() != g.shape() || w.shape() != v.shape() {
        return Err(Error::Shape {
            op: "rmsprop_step",
            left: w.shape(),
            right: g.shape(),
        });
    }
    for ((wi, &gi), vi) in w
        .as_mut_slice()
        .iter_mut()
        .zip(g.as_slice())
        .zip(v.as_mut_slice())
    {
        *vi = decay * *vi + (1.0 - decay) * gi * gi;
        *wi -= lr * gi / (libm::sqrt(*vi) + eps);
    }
    Ok(())
}

/// Trains on `data` (already preprocessed) with no held-out set.
pub fn train(data: &Dataset, config: &TrainConfig) -> Result<TrainOutcome> {
    train_with_validation(data, None, config)
}

/// Trains on `train`; per-epoch test metrics are recorded when `test` is given.
pub fn train_with_validation(
    train: &Dataset,
    test: Option<&Dataset>,
    config: &TrainConfig,
) -> Result<TrainOutcome> {
    train_observed(train, test, config, &mut |_| {})
}

/// [`train_with_validation`], calling `observe` after every epoch.
pub fn train_observed(
    train: &Dataset,
    test: Option<&Dataset>,
    config: &TrainConfig,
    observe: &mut dyn FnMut(&EpochRecord),
) -> Result<TrainOutcome> {
    config.validate()?;
    let (n, d) = train.x.shape();
    if n == 0 {
        return Err(Error::Empty("training set"));
    }
    if config.k > d {
        return Err(Error::invalid(format!(
            "cannot select K = {} of d = {d} features",
            config.k
        )));
    }
    if let Some(t) = test {
        if t.x.cols() != d || t.classes != train.classes {
            return Err(Error::Shape {
                op: "test set",
                left: (train.classes, d),
                right: (t.classes, t.x.cols()),
            });
        }
    }
    let arch = Architecture::from_config(config, d, train.classes);
    let mut model = FsNetModel::init(config, &arch, &mut RngState::with_stream(config.seed, streams::INIT))?;
    let embeddings = match config.mode {
        Mode::Predictor => Some(compute_embeddings(&train.x, config.b)?),
        Mode::Dense => None,
    };
    let mut gumbel_rng = RngState::with_stream(config.seed, streams::GUMBEL);
    let mut dropout_rng = RngState::with_stream(config.seed, streams::DROPOUT);
    let mut optimizer = RmsProp::new(&model);
    let mut records = Vec::with_capacity(config.epochs);

    for epoch in 1..=config.epochs {
        let tau = config.temperature(epoch)?;
        let diverged = |e: Error| match e {
            Error::NonFinite(_) => Error::Diverged { epoch, tau },
            other => other,
        };
        let table = model.feature_table(embeddings.as_ref())?;
        let noise = StepNoise {
            gumbel: selection::sample_gumbel_matrix(&mut gumbel_rng, config.k, d),
            tau,
            masks: DropoutMasks::sample(&arch, n, config.dropout, &mut dropout_rng),
        };
        let r = record_loss(
            &model,
            &table,
            &train.x,
            &train.y,
            Selection::Concrete {
                gumbel: &noise.gumbel,
                tau,
            },
            &noise.masks,
            true,
        )
        .map_err(diverged)?;
        let grads = gradients_of(&r, &model).map_err(diverged)?;
        let gates = r.gates.expect("concrete selection records gates");
        let epoch_selection = selection::unique_argmax(&r.tape.value(gates)?.transpose())?;
        let parts = r.parts;
        drop(r);

        optimizer.step(&mut model, &grads, config.lr)?;
        if model.named_params().iter().any(|(_, m)| !m.is_finite()) {
            return Err(Error::Diverged { epoch, tau });
        }

        let train_accuracy = evaluator::accuracy(&model, &epoch_selection, train).map_err(diverged)?;
        let (test_accuracy, test_recon) = match test {
            Some(t) => {
                let table = model.feature_table(embeddings.as_ref())?;
                let out = network::infer_batch(&model, &table, &epoch_selection, &t.x).map_err(diverged)?;
                (
                    Some(evaluator::accuracy_from_probs(&out.probs, &t.y)?),
                    Some(evaluator::mean_squared_norm(&out.recon, &t.x)?),
                )
            }
            None => (None, None),
        };
        let record = EpochRecord {
            epoch,
            tau,
            loss: parts.total,
            class_loss: parts.class,
            recon_loss: parts.recon,
            train_accuracy,
            test_accuracy,
            test_recon,
        };
        observe(&record);
        records.push(record);
    }

    let table = model.feature_table(embeddings.as_ref())?;
    let selected = final_selection(&model, &table)?;
    model.selected = Some(selected.clone());
    Ok(TrainOutcome {
        model,
        embeddings,
        report: TrainReport { records, selected },
    })
}

/// The gate matrix `M` drawn at `τE` from the inference stream.
pub fn final_gates(model: &FsNetModel, table: &FeatureTable<'_>) -> Result<GateMatrix> {
    let state = selection::predict_logits(&model.selector, table, model.config.tau_end)?;
    let mut rng = RngState::with_stream(model.config.seed, streams::INFERENCE);
    selection::sample_gates(&state, &mut rng)
}

/// `S = uargmax(Mᵀ)` for the gates of [`final_gates`].
pub fn final_selection(model: &FsNetModel, table: &FeatureTable<'_>) -> Result<Vec<usize>> {
    selection::unique_argmax(&final_gates(model, table)?.gates.transpose())
}

/// Class probabilities for one sample from its selected coordinates.
pub fn predict(model: &FsNetModel, selected: &[usize], x: &[f64]) -> Result<Vec<f64>> {
    let row = Matrix::row_vector(x)?;
    let p = network::classify_batch(model, selected, &row)?;
    Ok(p.as_slice().to_vec())
}

/// [`predict`] for every row of `x`.
pub fn predict_batch(model: &FsNetModel, selected: &[usize], x: &Matrix) -> Result<Matrix> {
    network::classify_batch(model, selected, x)
}

/// Human-readable one-line summary of an epoch, used by progress output.
pub fn describe(record: &EpochRecord) -> String {
    format!(
        "epoch {} tau {:.4} loss {:.6} class {:.6} recon {:.6} train_acc {:.4}",
        record.epoch, record.tau, record.loss, record.class_loss, record.recon_loss, record.train_accuracy
    )
}
