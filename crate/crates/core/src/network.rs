//! Encoder, classifier, decoder, and the predicted reconstruction layer.
//!
//! Dense layers store `out × in` weights and act on batches laid out one
//! sample per row, so a layer is `σ(H · Wᵀ)`. Hidden layers use leaky ReLU;
//! the classifier ends in a softmax. The reconstruction layer has no weights
//! of its own: row `j` of `W^(r)` is `tanh(W_ωr · φ(u_j))`.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::embedding::FeatureTable;
use crate::error::{Error, Result};
use crate::numerics::{Matrix, RngState, Tape, Var};
use crate::selection::{self, BoundTable, SelectionPredictor};
use crate::trainer::{Mode, TrainConfig};

/// Layer widths of one model.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Architecture {
    /// `d`
    pub input_dim: usize,
    /// `K`
    pub selected: usize,
    pub encoder: Vec<usize>,
    /// Hidden widths between the encoder output and the softmax head.
    pub classifier: Vec<usize>,
    /// `|Y|`
    pub classes: usize,
    pub decoder: Vec<usize>,
}

impl Architecture {
    /// `d → K → 64 → 32 → 16 (→ |Y|) → 32 → 64 → d`
    pub fn standard(input_dim: usize, selected: usize, classes: usize) -> Self {
        Architecture {
            input_dim,
            selected,
            encoder: vec![64, 32, 16],
            classifier: Vec::new(),
            classes,
            decoder: vec![32, 64],
        }
    }

    pub fn from_config(config: &TrainConfig, input_dim: usize, classes: usize) -> Self {
        Architecture {
            input_dim,
            selected: config.k,
            encoder: config.encoder.clone(),
            classifier: config.classifier.clone(),
            classes,
            decoder: config.decoder.clone(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.selected == 0 || self.input_dim == 0 {
            return Err(Error::invalid("K and d must be positive"));
        }
        if self.selected > self.input_dim {
            return Err(Error::invalid(format!(
                "cannot select K = {} of d = {} features",
                self.selected, self.input_dim
            )));
        }
        if self.encoder.is_empty() || self.decoder.is_empty() {
            return Err(Error::invalid("encoder and decoder need at least one layer"));
        }
        if self.classes < 2 {
            return Err(Error::invalid("need at least two classes"));
        }
        let all = self.encoder.iter().chain(&self.classifier).chain(&self.decoder);
        if all.into_iter().any(|&w| w == 0) {
            return Err(Error::invalid("layer widths must be positive"));
        }
        Ok(())
    }

    /// Width `h` of the encoder output.
    pub fn hidden_width(&self) -> usize {
        *self.encoder.last().expect("validated architecture")
    }

    /// Width `h′` of the decoder output.
    pub fn recon_width(&self) -> usize {
        *self.decoder.last().expect("validated architecture")
    }

    /// `(out, in)` of each encoder layer.
    pub fn encoder_shapes(&self) -> Vec<(usize, usize)> {
        chain_shapes(self.selected, &self.encoder)
    }

    pub fn classifier_shapes(&self) -> Vec<(usize, usize)> {
        let mut widths = self.classifier.clone();
        widths.push(self.classes);
        chain_shapes(self.hidden_width(), &widths)
    }

    pub fn decoder_shapes(&self) -> Vec<(usize, usize)> {
        chain_shapes(self.hidden_width(), &self.decoder)
    }

    /// `s = |θ_e| + |θ_c| + |θ_d|`, weights only unless `bias` is set.
    pub fn stack_param_count(&self, bias: bool) -> usize {
        self.encoder_shapes()
            .into_iter()
            .chain(self.classifier_shapes())
            .chain(self.decoder_shapes())
            .map(|(o, i)| o * i + if bias { o } else { 0 })
            .sum()
    }

    /// Trainable parameters when both predictors read `width`-dimensional
    /// inputs: `K·width + h′·width + s`. Use `width = b` for the compact
    /// model and `width = d` for the dense one.
    pub fn param_count(&self, width: usize, bias: bool) -> usize {
        (self.selected + self.recon_width()) * width + self.stack_param_count(bias)
    }
}

fn chain_shapes(input: usize, widths: &[usize]) -> Vec<(usize, usize)> {
    let mut prev = input;
    widths
        .iter()
        .map(|&w| {
            let shape = (w, prev);
            prev = w;
            shape
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct Layer {
    /// `out × in`
    pub weight: Matrix,
    /// `1 × out`
    pub bias: Option<Matrix>,
}

/// Fully connected layers applied in order.
#[derive(Clone, Debug, PartialEq)]
pub struct DenseStack {
    pub layers: Vec<Layer>,
}

/// What follows the last layer of a stack.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) enum Head {
    LeakyRelu,
    Softmax,
}

impl DenseStack {
    pub fn from_weights(weights: Vec<Matrix>) -> Result<Self> {
        let stack = DenseStack {
            layers: weights
                .into_iter()
                .map(|weight| Layer { weight, bias: None })
                .collect(),
        };
        stack.check_chain()?;
        Ok(stack)
    }

    pub fn input_width(&self) -> usize {
        self.layers.first().map_or(0, |l| l.weight.cols())
    }

    pub fn output_width(&self) -> usize {
        self.layers.last().map_or(0, |l| l.weight.rows())
    }

    pub fn param_count(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weight.len() + l.bias.as_ref().map_or(0, Matrix::len))
            .sum()
    }

    pub fn check_chain(&self) -> Result<()> {
        for pair in self.layers.windows(2) {
            if pair[1].weight.cols() != pair[0].weight.rows() {
                return Err(Error::Shape {
                    op: "DenseStack",
                    left: pair[0].weight.shape(),
                    right: pair[1].weight.shape(),
                });
            }
        }
        for l in &self.layers {
            if let Some(b) = &l.bias {
                if b.shape() != (1, l.weight.rows()) {
                    return Err(Error::Shape {
                        op: "DenseStack bias",
                        left: l.weight.shape(),
                        right: b.shape(),
                    });
                }
            }
        }
        Ok(())
    }

    fn glorot(shapes: &[(usize, usize)], bias: bool, rng: &mut RngState) -> Self {
        DenseStack {
            layers: shapes
                .iter()
                .map(|&(o, i)| Layer {
                    weight: glorot_uniform(o, i, rng),
                    bias: bias.then(|| Matrix::zeros(1, o)),
                })
                .collect(),
        }
    }

    fn bind(&self, tape: &mut Tape, trainable: bool) -> Vec<BoundLayer> {
        self.layers
            .iter()
            .map(|l| BoundLayer {
                weight: leaf(tape, &l.weight, trainable),
                bias: l.bias.as_ref().map(|b| leaf(tape, b, trainable)),
            })
            .collect()
    }
}

/// Weights `W_ωr` (`h′ × b`) of the reconstruction predictor.
#[derive(Clone, Debug, PartialEq)]
pub struct ReconPredictor {
    pub weights: Matrix,
}

impl ReconPredictor {
    pub fn new(weights: Matrix) -> Self {
        ReconPredictor { weights }
    }

    pub fn param_count(&self) -> usize {
        self.weights.len()
    }
}

/// Parameters, configuration, and (once trained) the selected features.
#[derive(Clone, Debug, PartialEq)]
pub struct FsNetModel {
    pub config: TrainConfig,
    pub arch: Architecture,
    pub selector: SelectionPredictor,
    pub encoder: DenseStack,
    pub classifier: DenseStack,
    pub decoder: DenseStack,
    pub reconstructor: ReconPredictor,
    pub selected: Option<Vec<usize>>,
}

/// Glorot-uniform initialization of every parameter group.
pub fn init_params(config: &TrainConfig, arch: &Architecture, rng: &mut RngState) -> Result<FsNetModel> {
    FsNetModel::init(config, arch, rng)
}

impl FsNetModel {
    pub fn init(config: &TrainConfig, arch: &Architecture, rng: &mut RngState) -> Result<Self> {
        config.validate()?;
        arch.validate()?;
        let width = config.predictor_width(arch.input_dim);
        let selector = SelectionPredictor::new(glorot_uniform(arch.selected, width, rng));
        let encoder = DenseStack::glorot(&arch.encoder_shapes(), config.bias, rng);
        let classifier = DenseStack::glorot(&arch.classifier_shapes(), config.bias, rng);
        let decoder = DenseStack::glorot(&arch.decoder_shapes(), config.bias, rng);
        let reconstructor = ReconPredictor::new(glorot_uniform(arch.recon_width(), width, rng));
        Ok(FsNetModel {
            config: config.clone(),
            arch: arch.clone(),
            selector,
            encoder,
            classifier,
            decoder,
            reconstructor,
            selected: None,
        })
    }

    pub fn mode(&self) -> Mode {
        self.config.mode
    }

    /// Input width of both predictors (`b`, or `d` in dense mode).
    pub fn predictor_width(&self) -> usize {
        self.selector.weights.cols()
    }

    /// Checks every parameter shape against the architecture.
    pub fn validate(&self) -> Result<()> {
        self.arch.validate()?;
        let width = self.config.predictor_width(self.arch.input_dim);
        let expect = |m: &Matrix, shape: (usize, usize), op: &'static str| {
            if m.shape() == shape {
                Ok(())
            } else {
                Err(Error::Shape {
                    op,
                    left: m.shape(),
                    right: shape,
                })
            }
        };
        expect(&self.selector.weights, (self.arch.selected, width), "selector")?;
        expect(
            &self.reconstructor.weights,
            (self.arch.recon_width(), width),
            "reconstructor",
        )?;
        for (stack, shapes, op) in [
            (&self.encoder, self.arch.encoder_shapes(), "encoder"),
            (&self.classifier, self.arch.classifier_shapes(), "classifier"),
            (&self.decoder, self.arch.decoder_shapes(), "decoder"),
        ] {
            if stack.layers.len() != shapes.len() {
                return Err(Error::invalid(format!("{op}: wrong number of layers")));
            }
            for (l, &s) in stack.layers.iter().zip(&shapes) {
                expect(&l.weight, s, op)?;
                if l.bias.is_some() != self.config.bias {
                    return Err(Error::invalid(format!("{op}: bias presence disagrees with config")));
                }
            }
            stack.check_chain()?;
        }
        if let Some(s) = &self.selected {
            if s.len() != self.arch.selected {
                return Err(Error::invalid("selected index count differs from K"));
            }
            if let Some(&bad) = s.iter().find(|&&j| j >= self.arch.input_dim) {
                return Err(Error::Index {
                    index: bad,
                    len: self.arch.input_dim,
                });
            }
        }
        Ok(())
    }

    /// The table the predictors read. Predictor mode needs the embeddings of
    /// the training data; dense mode ignores them.
    pub fn feature_table<'a>(
        &self,
        embeddings: Option<&'a crate::FeatureEmbeddings>,
    ) -> Result<FeatureTable<'a>> {
        match self.config.mode {
            Mode::Dense => Ok(FeatureTable::Identity {
                features: self.arch.input_dim,
            }),
            Mode::Predictor => {
                let e = embeddings
                    .ok_or_else(|| Error::invalid("predictor mode needs feature embeddings"))?;
                if e.features() != self.arch.input_dim || e.width() != self.predictor_width() {
                    return Err(Error::Shape {
                        op: "feature_table",
                        left: (self.arch.input_dim, self.predictor_width()),
                        right: e.table().shape(),
                    });
                }
                Ok(FeatureTable::Embedded(e))
            }
        }
    }

    /// Trainable parameter count.
    pub fn param_count(&self) -> usize {
        self.selector.param_count()
            + self.encoder.param_count()
            + self.classifier.param_count()
            + self.decoder.param_count()
            + self.reconstructor.param_count()
    }

    /// Every parameter matrix with a stable name, in optimizer order.
    pub fn named_params(&self) -> Vec<(String, &Matrix)> {
        let mut out = vec![(String::from("selector"), &self.selector.weights)];
        for (name, stack) in [
            ("encoder", &self.encoder),
            ("classifier", &self.classifier),
            ("decoder", &self.decoder),
        ] {
            for (i, l) in stack.layers.iter().enumerate() {
                out.push((format!("{name}.{i}.weight"), &l.weight));
                if let Some(b) = &l.bias {
                    out.push((format!("{name}.{i}.bias"), b));
                }
            }
        }
        out.push((String::from("reconstructor"), &self.reconstructor.weights));
        out
    }

    /// Same order as [`FsNetModel::named_params`].
    pub fn params_mut(&mut self) -> Vec<&mut Matrix> {
        let mut out = vec![&mut self.selector.weights];
        for stack in [&mut self.encoder, &mut self.classifier, &mut self.decoder] {
            for l in stack.layers.iter_mut() {
                out.push(&mut l.weight);
                if let Some(b) = l.bias.as_mut() {
                    out.push(b);
                }
            }
        }
        out.push(&mut self.reconstructor.weights);
        out
    }

    pub(crate) fn bind(&self, tape: &mut Tape, trainable: bool) -> BoundModel {
        BoundModel {
            selector: leaf(tape, &self.selector.weights, trainable),
            encoder: self.encoder.bind(tape, trainable),
            classifier: self.classifier.bind(tape, trainable),
            decoder: self.decoder.bind(tape, trainable),
            reconstructor: leaf(tape, &self.reconstructor.weights, trainable),
        }
    }
}

fn leaf(tape: &mut Tape, m: &Matrix, trainable: bool) -> Var {
    if trainable {
        tape.param(m.clone())
    } else {
        tape.constant(m.clone())
    }
}

/// Glorot-uniform `rows × cols` matrix, bound `sqrt(6 / (fan_in + fan_out))`.
pub fn glorot_uniform(rows: usize, cols: usize, rng: &mut RngState) -> Matrix {
    let bound = glorot_bound(cols, rows);
    let data = (0..rows * cols).map(|_| rng.uniform_in(-bound, bound)).collect();
    Matrix::from_raw(rows, cols, data)
}

pub fn glorot_bound(fan_in: usize, fan_out: usize) -> f64 {
    libm::sqrt(6.0 / (fan_in + fan_out) as f64)
}

pub(crate) struct BoundLayer {
    weight: Var,
    bias: Option<Var>,
}

/// Model parameters as tape leaves, in [`FsNetModel::named_params`] order.
pub(crate) struct BoundModel {
    pub selector: Var,
    pub encoder: Vec<BoundLayer>,
    pub classifier: Vec<BoundLayer>,
    pub decoder: Vec<BoundLayer>,
    pub reconstructor: Var,
}

impl BoundModel {
    pub fn vars(&self) -> Vec<Var> {
        let mut out = vec![self.selector];
        for stack in [&self.encoder, &self.classifier, &self.decoder] {
            for l in stack {
                out.push(l.weight);
                out.extend(l.bias);
            }
        }
        out.push(self.reconstructor);
        out
    }
}

/// Dropout masks (already scaled by `1 / (1 - p)`) for each hidden output.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct DropoutMasks {
    pub encoder: Vec<Matrix>,
    pub classifier: Vec<Matrix>,
    pub decoder: Vec<Matrix>,
}

impl DropoutMasks {
    pub fn none() -> Self {
        Self::default()
    }

    /// Inverted-dropout masks for a batch of `rows` samples.
    pub fn sample(arch: &Architecture, rows: usize, rate: f64, rng: &mut RngState) -> Self {
        if rate <= 0.0 {
            return Self::none();
        }
        let keep = 1.0 - rate;
        let mut draw = |widths: &[usize]| -> Vec<Matrix> {
            widths
                .iter()
                .map(|&w| {
                    let data = (0..rows * w)
                        .map(|_| if rng.uniform() < keep { 1.0 / keep } else { 0.0 })
                        .collect();
                    Matrix::from_raw(rows, w, data)
                })
                .collect()
        };
        let encoder = draw(&arch.encoder);
        let classifier = draw(&arch.classifier);
        let decoder = draw(&arch.decoder);
        DropoutMasks {
            encoder,
            classifier,
            decoder,
        }
    }
}

pub(crate) fn record_stack(
    tape: &mut Tape,
    layers: &[BoundLayer],
    input: Var,
    slope: f64,
    masks: &[Matrix],
    head: Head,
) -> Result<Var> {
    let mut h = input;
    for (i, layer) in layers.iter().enumerate() {
        let mut z = tape.matmul_t(h, layer.weight)?;
        if let Some(b) = layer.bias {
            z = tape.add_row(z, b)?;
        }
        let last = i + 1 == layers.len();
        if last && head == Head::Softmax {
            h = tape.softmax_rows(z)?;
        } else {
            h = tape.leaky_relu(z, slope)?;
            if let Some(mask) = masks.get(i) {
                let m = tape.constant(mask.clone());
                h = tape.mul(h, m)?;
            }
        }
    }
    Ok(h)
}

/// `W^(r)ᵀ = tanh(W_ωr · φᵀ)`, shape `h′ × d`.
pub(crate) fn record_recon_weights(tape: &mut Tape, weights: Var, table: &BoundTable) -> Result<Var> {
    let scores = table.project(tape, weights)?;
    tape.tanh(scores)
}

/// Tape handles for one batched forward pass.
pub(crate) struct Forward {
    pub gates: Option<Var>,
    pub probs: Var,
    pub recon: Var,
}

/// What feeds the encoder.
pub(crate) enum Selection<'a> {
    /// Relaxed gates `M` from fixed Gumbel noise at temperature `tau`.
    Concrete { gumbel: &'a Matrix, tau: f64 },
    /// Given gates.
    Gates(&'a Matrix),
    /// Hard coordinates `x^S`.
    Indices(&'a [usize]),
}

pub(crate) fn record_forward(
    tape: &mut Tape,
    model: &FsNetModel,
    params: &BoundModel,
    table: &BoundTable,
    x: &Matrix,
    selection: Selection<'_>,
    masks: &DropoutMasks,
) -> Result<Forward> {
    let slope = model.config.leaky_slope;
    let (xs, gates) = match selection {
        Selection::Concrete { gumbel, tau } => {
            let logits = selection::record_logits(tape, params.selector, table)?;
            let m = selection::record_gates(tape, logits, gumbel, tau)?;
            let xv = tape.constant(x.clone());
            (tape.matmul_t(xv, m)?, Some(m))
        }
        Selection::Gates(g) => {
            let m = tape.constant(g.clone());
            let xv = tape.constant(x.clone());
            (tape.matmul_t(xv, m)?, Some(m))
        }
        Selection::Indices(s) => (tape.constant(x.select_columns(s)?), None),
    };
    let h = record_stack(tape, &params.encoder, xs, slope, &masks.encoder, Head::LeakyRelu)?;
    let probs = record_stack(tape, &params.classifier, h, slope, &masks.classifier, Head::Softmax)?;
    let h_tilde = record_stack(tape, &params.decoder, h, slope, &masks.decoder, Head::LeakyRelu)?;
    let w_rt = record_recon_weights(tape, params.reconstructor, table)?;
    let recon = tape.matmul(h_tilde, w_rt)?;
    Ok(Forward {
        gates,
        probs,
        recon,
    })
}

/// Deterministic batch outputs of the inference path (`x^S`, no dropout).
#[derive(Clone, Debug, PartialEq)]
pub struct Inference {
    /// `n × |Y|` class probabilities.
    pub probs: Matrix,
    /// `n × d` reconstruction.
    pub recon: Matrix,
}

pub fn infer_batch(
    model: &FsNetModel,
    table: &FeatureTable<'_>,
    selected: &[usize],
    x: &Matrix,
) -> Result<Inference> {
    check_inputs(model, x.cols(), table)?;
    if selected.len() != model.arch.selected {
        return Err(Error::invalid(format!(
            "expected {} selected features, got {}",
            model.arch.selected,
            selected.len()
        )));
    }
    let mut tape = Tape::new();
    let params = model.bind(&mut tape, false);
    let bound = BoundTable::bind(&mut tape, table);
    let f = record_forward(
        &mut tape,
        model,
        &params,
        &bound,
        x,
        Selection::Indices(selected),
        &DropoutMasks::none(),
    )?;
    Ok(Inference {
        probs: tape.value(f.probs)?.clone(),
        recon: tape.value(f.recon)?.clone(),
    })
}

/// Class probabilities from the hard selection only; no table needed.
pub fn classify_batch(model: &FsNetModel, selected: &[usize], x: &Matrix) -> Result<Matrix> {
    if x.cols() != model.arch.input_dim {
        return Err(Error::Shape {
            op: "classify_batch",
            left: (x.rows(), model.arch.input_dim),
            right: x.shape(),
        });
    }
    let xs = x.select_columns(selected)?;
    if xs.cols() != model.arch.selected {
        return Err(Error::invalid("selected index count differs from K"));
    }
    let slope = model.config.leaky_slope;
    let mut tape = Tape::new();
    let enc = model.encoder.bind(&mut tape, false);
    let cls = model.classifier.bind(&mut tape, false);
    let input = tape.constant(xs);
    let h = record_stack(&mut tape, &enc, input, slope, &[], Head::LeakyRelu)?;
    let p = record_stack(&mut tape, &cls, h, slope, &[], Head::Softmax)?;
    Ok(tape.value(p)?.clone())
}

pub(crate) fn check_inputs(model: &FsNetModel, cols: usize, table: &FeatureTable<'_>) -> Result<()> {
    if cols != model.arch.input_dim || table.features() != model.arch.input_dim {
        return Err(Error::Shape {
            op: "model input",
            left: (model.arch.input_dim, model.predictor_width()),
            right: (cols, table.width()),
        });
    }
    if table.width() != model.predictor_width() {
        return Err(Error::Shape {
            op: "predictor width",
            left: model.selector.weights.shape(),
            right: (table.features(), table.width()),
        });
    }
    Ok(())
}

fn run_stack(stack: &DenseStack, input: &[f64], slope: f64, head: Head) -> Result<Vec<f64>> {
    stack.check_chain()?;
    if input.len() != stack.input_width() {
        return Err(Error::Shape {
            op: "stack input",
            left: (1, stack.input_width()),
            right: (1, input.len()),
        });
    }
    let mut tape = Tape::new();
    let layers = stack.bind(&mut tape, false);
    let x = tape.constant(Matrix::row_vector(input)?);
    let out = record_stack(&mut tape, &layers, x, slope, &[], head)?;
    Ok(tape.value(out)?.as_slice().to_vec())
}

/// `ENC(x^S)`: leaky ReLU after every layer.
pub fn encode(enc: &DenseStack, xs: &[f64], slope: f64) -> Result<Vec<f64>> {
    run_stack(enc, xs, slope, Head::LeakyRelu)
}

/// `f(h)`: leaky ReLU on hidden layers, softmax on the last.
pub fn classify(cls: &DenseStack, h: &[f64], slope: f64) -> Result<Vec<f64>> {
    run_stack(cls, h, slope, Head::Softmax)
}

/// `DEC(h)`: leaky ReLU after every layer.
pub fn decode(dec: &DenseStack, h: &[f64], slope: f64) -> Result<Vec<f64>> {
    run_stack(dec, h, slope, Head::LeakyRelu)
}

/// `x̂_j = tanh(W_ωr φ(u_j)) · h̃`.
pub fn reconstruct(rp: &ReconPredictor, table: &FeatureTable<'_>, h_tilde: &[f64]) -> Result<Vec<f64>> {
    if rp.weights.cols() != table.width() {
        return Err(Error::Shape {
            op: "reconstruct",
            left: rp.weights.shape(),
            right: (table.features(), table.width()),
        });
    }
    if h_tilde.len() != rp.weights.rows() {
        return Err(Error::Shape {
            op: "reconstruct",
            left: rp.weights.shape(),
            right: (1, h_tilde.len()),
        });
    }
    let mut tape = Tape::new();
    let w = tape.constant(rp.weights.clone());
    let bound = BoundTable::bind(&mut tape, table);
    let w_rt = record_recon_weights(&mut tape, w, &bound)?;
    let h = tape.constant(Matrix::row_vector(h_tilde)?);
    let out = tape.matmul(h, w_rt)?;
    Ok(tape.value(out)?.as_slice().to_vec())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embedding::FeatureEmbeddings;

    fn rand_matrix(rng: &mut RngState, r: usize, c: usize) -> Matrix {
        let data = (0..r * c).map(|_| rng.uniform_in(-1.0, 1.0)).collect();
        Matrix::from_vec(r, c, data).unwrap()
    }

    #[test]
    fn zero_encoder_outputs_zero() {
        let enc = DenseStack::from_weights(vec![Matrix::zeros(4, 3), Matrix::zeros(2, 4)]).unwrap();
        assert_eq!(encode(&enc, &[1.0, -2.0, 3.0], 0.2).unwrap(), [0.0, 0.0]);
    }

    #[test]
    fn identity_layer_passes_nonnegative_input() {
        let enc = DenseStack::from_weights(vec![Matrix::identity(3)]).unwrap();
        assert_eq!(encode(&enc, &[0.5, 0.0, 2.0], 0.2).unwrap(), [0.5, 0.0, 2.0]);
        let dec = DenseStack::from_weights(vec![Matrix::identity(2)]).unwrap();
        assert_eq!(decode(&dec, &[1.5, 3.0], 0.2).unwrap(), [1.5, 3.0]);
    }

    #[test]
    fn stack_rejects_broken_chain() {
        assert!(DenseStack::from_weights(vec![Matrix::zeros(4, 3), Matrix::zeros(2, 5)]).is_err());
        let enc = DenseStack::from_weights(vec![Matrix::zeros(4, 3)]).unwrap();
        assert!(encode(&enc, &[1.0, 2.0], 0.2).is_err());
    }

    #[test]
    fn zero_classifier_is_uniform() {
        let cls = DenseStack::from_weights(vec![Matrix::zeros(4, 3)]).unwrap();
        let p = classify(&cls, &[1.0, 2.0, 3.0], 0.2).unwrap();
        assert!(p.iter().all(|&v| (v - 0.25).abs() < 1e-15));
    }

    #[test]
    fn equal_logits_split_evenly() {
        let cls = DenseStack::from_weights(vec![Matrix::from_rows(&[[1.0, 2.0], [1.0, 2.0]]).unwrap()]).unwrap();
        assert_eq!(classify(&cls, &[0.3, -0.9], 0.2).unwrap(), [0.5, 0.5]);
    }

    #[test]
    fn classifier_output_on_simplex() {
        let mut rng = RngState::new(4);
        let cls = DenseStack::from_weights(vec![rand_matrix(&mut rng, 5, 4), rand_matrix(&mut rng, 3, 5)]).unwrap();
        let p = classify(&cls, &[3.0, -1.0, 0.2, 8.0], 0.2).unwrap();
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(p.iter().all(|&v| v > 0.0 && v < 1.0));
    }

    fn small_emb() -> FeatureEmbeddings {
        FeatureEmbeddings::from_table(Matrix::from_rows(&[[0.2, -0.4], [1.0, 0.3], [0.2, -0.4]]).unwrap()).unwrap()
    }

    #[test]
    fn reconstruction_cases() {
        let e = small_emb();
        let table = FeatureTable::Embedded(&e);
        let rp = ReconPredictor::new(Matrix::from_rows(&[[0.5, -1.0], [2.0, 0.1], [0.3, 0.3]]).unwrap());
        assert_eq!(reconstruct(&rp, &table, &[0.0; 3]).unwrap(), [0.0; 3]);
        let zero = ReconPredictor::new(Matrix::zeros(3, 2));
        assert_eq!(reconstruct(&zero, &table, &[1.0, 2.0, 3.0]).unwrap(), [0.0; 3]);
        let x = reconstruct(&rp, &table, &[1.0, -2.0, 0.5]).unwrap();
        assert_eq!(x[0], x[2]);
        assert_ne!(x[0], x[1]);
        let want: f64 = (0..3)
            .map(|i| {
                let w = rp.weights.row(i);
                libm::tanh(w[0] * 1.0 + w[1] * 0.3) * [1.0, -2.0, 0.5][i]
            })
            .sum();
        assert!((x[1] - want).abs() < 1e-14);
    }

    #[test]
    fn init_is_deterministic_and_bounded() {
        let config = TrainConfig::default();
        let arch = Architecture::standard(300, 10, 3);
        let a = FsNetModel::init(&config, &arch, &mut RngState::new(9)).unwrap();
        let b = FsNetModel::init(&config, &arch, &mut RngState::new(9)).unwrap();
        assert_eq!(a, b);
        a.validate().unwrap();
        for (name, m) in a.named_params() {
            let bound = glorot_bound(m.cols(), m.rows());
            assert!(m.as_slice().iter().all(|w| w.abs() <= bound), "{name}");
        }
    }

    #[test]
    fn predictor_count_ignores_d_dense_count_grows_with_it() {
        let config = TrainConfig::default();
        let count = |d: usize, mode: Mode| {
            let cfg = TrainConfig { mode, ..config.clone() };
            let arch = Architecture::standard(d, 10, 2);
            FsNetModel::init(&cfg, &arch, &mut RngState::new(1)).unwrap().param_count()
        };
        assert_eq!(count(4434, Mode::Predictor), count(22283, Mode::Predictor));
        let arch = Architecture::standard(4434, 10, 2);
        assert_eq!(count(4434, Mode::Predictor), arch.param_count(10, false));
        assert_eq!(
            count(22283, Mode::Dense) - count(4434, Mode::Dense),
            (10 + 64) * (22283 - 4434)
        );
    }

    /// Central differences on a tiny encoder: every weight.
    #[test]
    fn encoder_gradients_match_finite_differences() {
        let mut rng = RngState::new(22);
        let weights = vec![rand_matrix(&mut rng, 4, 3), rand_matrix(&mut rng, 2, 4)];
        let x = rand_matrix(&mut rng, 5, 3);
        let target = rand_matrix(&mut rng, 5, 2);
        // Central differences are only valid away from the activation kink.
        let z1 = x.matmul(&weights[0].transpose()).unwrap();
        let h1 = z1.map(|v| crate::numerics::leaky_relu(v, 0.2));
        let z2 = h1.matmul(&weights[1].transpose()).unwrap();
        let margin = z1.as_slice().iter().chain(z2.as_slice()).fold(f64::INFINITY, |m, v| m.min(v.abs()));
        assert!(margin > 1e-3, "fixture sits on a kink: {margin}");
        let loss_of = |ws: &[Matrix]| -> (f64, Vec<Matrix>) {
            let mut t = Tape::new();
            let stack = DenseStack::from_weights(ws.to_vec()).unwrap();
            let bound = stack.bind(&mut t, true);
            let xv = t.constant(x.clone());
            let out = record_stack(&mut t, &bound, xv, 0.2, &[], Head::LeakyRelu).unwrap();
            let tv = t.constant(target.clone());
            let diff = t.sub(out, tv).unwrap();
            let sq = t.mul(diff, diff).unwrap();
            let l = t.sum(sq).unwrap();
            let mut g = t.backward(l).unwrap();
            let grads = bound
                .iter()
                .zip(ws)
                .map(|(b, w)| g.take_or_zeros(b.weight, w.shape()).unwrap())
                .collect();
            (t.scalar(l).unwrap(), grads)
        };
        let (_, analytic) = loss_of(&weights);
        let h = 1e-5;
        for li in 0..weights.len() {
            for idx in 0..weights[li].len() {
                let mut plus = weights.clone();
                let mut minus = weights.clone();
                plus[li].as_mut_slice()[idx] += h;
                minus[li].as_mut_slice()[idx] -= h;
                let numeric = (loss_of(&plus).0 - loss_of(&minus).0) / (2.0 * h);
                let an = analytic[li].as_slice()[idx];
                let err = (an - numeric).abs();
                assert!(err < 1e-8 || err / an.abs().max(numeric.abs()) < 1e-4, "layer {li} idx {idx}: {an} vs {numeric}");
            }
        }
    }
}
