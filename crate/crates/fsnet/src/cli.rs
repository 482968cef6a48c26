//! The `fsnet` command.
//!
//! Every command loads and checks all of its inputs before touching the file
//! system, then writes each output to a temporary file and renames it into
//! place. Exit codes: 0 success, 1 divergence during training, 2 usage or
//! input errors.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use anyhow::{anyhow, bail, Context};
use clap::{Args, Parser, Subcommand};
use fsnet_core::data::{self, make_synthetic, make_synthetic_duplicated, SplitSpec};
use fsnet_core::trainer::{self, final_selection, train_observed};
use fsnet_core::{evaluator, Dataset, Mode, Standardizer, TrainConfig};
use serde::Serialize;

use crate::artifact::{prep_path, serialized_size, Bundle, ModelFile, PrepFile};
use crate::config::{self, ConfigOverrides};
use crate::delimited::{read_table, write_dataset, LabelColumn, TableOptions};
use crate::manifest::{manifest_path, RunManifest};
use crate::report::{write_train_report, EvalDoc};
use crate::FormatError;

pub const EXIT_OK: i32 = 0;
pub const EXIT_DIVERGED: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "fsnet", version, about = "Feature selection with weight-predictor networks")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train a model and write it with its sidecar, report, and manifest.
    Train(TrainArgs),
    /// Print the selected features in extraction order.
    Select(SelectArgs),
    /// Evaluate a model on labelled data.
    Eval(EvalArgs),
    /// Class probabilities for every row of a table.
    Predict(PredictArgs),
    /// Generate a planted-feature dataset.
    Synth(SynthArgs),
    /// Split a dataset into train and test files.
    Split(SplitArgs),
    /// Parameter counts and file sizes for both modes.
    Sizes(SizesArgs),
}

/// Comma-separated layer widths; the empty string is no hidden layers.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Widths(pub Vec<usize>);

impl FromStr for Widths {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let s = s.trim();
        if s.is_empty() {
            return Ok(Widths(Vec::new()));
        }
        s.split(',')
            .map(|w| w.trim().parse::<usize>().map_err(|_| format!("bad layer width {w:?}")))
            .collect::<Result<_, _>>()
            .map(Widths)
    }
}

/// `a..b` (half-open) or `a..=b`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SeedRange(pub Vec<u64>);

impl FromStr for SeedRange {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let bad = || format!("seed range must look like 0..20 or 0..=19, got {s:?}");
        let (lo, hi, inclusive) = if let Some((a, b)) = s.split_once("..=") {
            (a, b, true)
        } else if let Some((a, b)) = s.split_once("..") {
            (a, b, false)
        } else {
            return Err(bad());
        };
        let lo: u64 = lo.trim().parse().map_err(|_| bad())?;
        let hi: u64 = hi.trim().parse().map_err(|_| bad())?;
        let seeds: Vec<u64> = if inclusive { (lo..=hi).collect() } else { (lo..hi).collect() };
        if seeds.is_empty() {
            return Err(format!("seed range {s:?} is empty"));
        }
        Ok(SeedRange(seeds))
    }
}

/// Training hyperparameters; unset flags fall back to the config file, then
/// to the built-in defaults.
#[derive(Clone, Debug, Default, Args)]
pub struct TrainFlags {
    /// Number of features to select.
    #[arg(long)]
    pub k: Option<usize>,
    /// Histogram bins per feature embedding.
    #[arg(long)]
    pub b: Option<usize>,
    /// Weight of the reconstruction loss.
    #[arg(long)]
    pub lambda: Option<f64>,
    /// RMSprop learning rate.
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Initial temperature.
    #[arg(long)]
    pub tau0: Option<f64>,
    /// Final temperature.
    #[arg(long = "tauE", alias = "tau-end")]
    pub tau_end: Option<f64>,
    #[arg(long)]
    pub dropout: Option<f64>,
    /// Seed for initialization, noise, and dropout [default: 0].
    #[arg(long)]
    pub seed: Option<u64>,
    /// `predictor` or `dense`.
    #[arg(long)]
    pub mode: Option<String>,
    /// Encoder hidden widths, e.g. `64,32,16`.
    #[arg(long)]
    pub encoder: Option<Widths>,
    /// Classifier hidden widths; empty for a single softmax layer.
    #[arg(long)]
    pub classifier: Option<Widths>,
    /// Decoder hidden widths.
    #[arg(long)]
    pub decoder: Option<Widths>,
    #[arg(long)]
    pub rms_decay: Option<f64>,
    #[arg(long)]
    pub rms_eps: Option<f64>,
    #[arg(long)]
    pub leaky_slope: Option<f64>,
    /// Add bias vectors to every dense layer.
    #[arg(long)]
    pub bias: bool,
    /// Train on raw inputs instead of z-scores.
    #[arg(long)]
    pub raw_target: bool,
}

impl TrainFlags {
    pub fn overrides(&self) -> ConfigOverrides {
        ConfigOverrides {
            k: self.k,
            b: self.b,
            lambda: self.lambda,
            lr: self.lr,
            epochs: self.epochs,
            tau0: self.tau0,
            tau_end: self.tau_end,
            dropout: self.dropout,
            seed: self.seed,
            mode: self.mode.clone(),
            encoder: self.encoder.clone().map(|w| w.0),
            classifier: self.classifier.clone().map(|w| w.0),
            decoder: self.decoder.clone().map(|w| w.0),
            rms_decay: self.rms_decay,
            rms_eps: self.rms_eps,
            leaky_slope: self.leaky_slope,
            bias: self.bias.then_some(true),
            standardize: self.raw_target.then_some(false),
        }
    }
}

#[derive(Clone, Debug, Default, Args)]
pub struct TableFlags {
    /// Field delimiter: a single character or `tab` [default: tab for .tsv, comma otherwise].
    #[arg(long)]
    pub delimiter: Option<String>,
    /// The first row is data, not column names.
    #[arg(long)]
    pub no_header: bool,
    /// `first`, `last`, `none`, or a 0-based column index.
    #[arg(long, default_value = "last")]
    pub label_col: LabelColumn,
}

impl TableFlags {
    pub fn options(&self, path: &Path) -> anyhow::Result<TableOptions> {
        let mut opts = TableOptions::for_path(path);
        if let Some(d) = &self.delimiter {
            opts.delimiter = parse_delimiter(d)?;
        }
        opts.header = !self.no_header;
        opts.label = self.label_col;
        Ok(opts)
    }
}

fn parse_delimiter(s: &str) -> anyhow::Result<u8> {
    match s {
        "tab" | "\\t" | "\t" => Ok(b'\t'),
        _ if s.len() == 1 && s.is_ascii() => Ok(s.as_bytes()[0]),
        _ => bail!("delimiter must be one ASCII character or `tab`, got {s:?}"),
    }
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Labelled training data (CSV or TSV).
    #[arg(long)]
    pub data: PathBuf,
    /// Separate labelled test data, evaluated every epoch.
    #[arg(long, conflicts_with = "split")]
    pub test: Option<PathBuf>,
    /// Hold out a stratified test split; the value is the training fraction.
    #[arg(long)]
    pub split: Option<f64>,
    /// Seed for `--split` [default: the training seed].
    #[arg(long)]
    pub split_seed: Option<u64>,
    /// Model file; the sidecar goes to `<out>.prep`.
    #[arg(long)]
    pub out: PathBuf,
    /// Per-epoch report [default: `<out>.report.tsv`].
    #[arg(long)]
    pub report: Option<PathBuf>,
    /// TOML file of training settings.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Train once per seed; outputs gain a `.seed<N>` suffix.
    #[arg(long, conflicts_with = "seed")]
    pub seeds: Option<SeedRange>,
    /// Print progress to stderr every N epochs.
    #[arg(long, default_value_t = 0)]
    pub progress: usize,
    #[command(flatten)]
    pub flags: TrainFlags,
    #[command(flatten)]
    pub table: TableFlags,
}

#[derive(Debug, Args)]
pub struct SelectArgs {
    #[arg(long)]
    pub model: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// Labelled evaluation data.
    #[arg(long)]
    pub data: PathBuf,
    /// Report file [default: stdout].
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Bins per feature for mutual information.
    #[arg(long, default_value_t = evaluator::MI_BINS)]
    pub mi_bins: usize,
    #[command(flatten)]
    pub table: TableFlags,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    /// Prediction table [default: stdout].
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub table: TableFlags,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub n: usize,
    #[arg(long)]
    pub d: usize,
    #[arg(long)]
    pub k_star: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Dataset file; the planted indices go to `<out>.planted.toml`.
    #[arg(long)]
    pub out: PathBuf,
    /// Overwrite one free column with a copy of each planted feature.
    #[arg(long)]
    pub duplicate: bool,
}

#[derive(Debug, Args)]
pub struct SplitArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, default_value_t = 0.8)]
    pub fraction: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Sample without regard to class.
    #[arg(long)]
    pub no_stratify: bool,
    #[arg(long)]
    pub train_out: PathBuf,
    #[arg(long)]
    pub test_out: PathBuf,
    #[command(flatten)]
    pub table: TableFlags,
}

#[derive(Debug, Args)]
pub struct SizesArgs {
    /// Input dimension.
    #[arg(long)]
    pub d: usize,
    #[arg(long, default_value_t = 2)]
    pub classes: usize,
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[command(flatten)]
    pub flags: TrainFlags,
}

/// Exit code for an error: 1 when training diverged, 2 otherwise.
pub fn exit_code(err: &anyhow::Error) -> i32 {
    let diverged = err.chain().any(|e| {
        matches!(e.downcast_ref::<fsnet_core::Error>(), Some(fsnet_core::Error::Diverged { .. }))
            || matches!(
                e.downcast_ref::<FormatError>(),
                Some(FormatError::Core(fsnet_core::Error::Diverged { .. }))
            )
    });
    if diverged {
        EXIT_DIVERGED
    } else {
        EXIT_USAGE
    }
}

/// Parses `args` (program name first), runs the command, and returns the exit code.
pub fn main_with<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let text = e.render().to_string();
            let _ = if e.use_stderr() { err.write_all(text.as_bytes()) } else { out.write_all(text.as_bytes()) };
            return code;
        }
    };
    match run(&cli.command, out, err) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            let _ = writeln!(err, "error: {e:#}");
            exit_code(&e)
        }
    }
}

pub fn run(command: &Command, out: &mut dyn Write, err: &mut dyn Write) -> anyhow::Result<()> {
    match command {
        Command::Train(a) => cmd_train(a, out, err),
        Command::Select(a) => cmd_select(a, out),
        Command::Eval(a) => cmd_eval(a, out),
        Command::Predict(a) => cmd_predict(a, out),
        Command::Synth(a) => cmd_synth(a),
        Command::Split(a) => cmd_split(a),
        Command::Sizes(a) => cmd_sizes(a, out),
    }
}

/// Files staged in memory and written together.
#[derive(Default)]
struct Outputs {
    files: Vec<(PathBuf, Vec<u8>)>,
}

impl Outputs {
    fn add(&mut self, path: PathBuf, data: impl Into<Vec<u8>>) {
        self.files.push((path, data.into()));
    }

    /// Records every staged file in `manifest`, then stages the manifest at `at`.
    fn seal(&mut self, manifest: &mut RunManifest, at: PathBuf) -> anyhow::Result<()> {
        for (p, data) in &self.files {
            manifest.output(p, data);
        }
        let text = manifest.render()?;
        self.add(at, text);
        Ok(())
    }

    fn commit(self) -> anyhow::Result<()> {
        let mut staged = Vec::with_capacity(self.files.len());
        let result = (|| -> anyhow::Result<()> {
            for (path, data) in &self.files {
                if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
                    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
                }
                let mut tmp = path.as_os_str().to_owned();
                tmp.push(format!(".tmp{}", std::process::id()));
                let tmp = PathBuf::from(tmp);
                std::fs::write(&tmp, data).with_context(|| format!("writing {}", tmp.display()))?;
                staged.push((tmp, path));
            }
            Ok(())
        })();
        if let Err(e) = result {
            for (tmp, _) in &staged {
                let _ = std::fs::remove_file(tmp);
            }
            return Err(e);
        }
        for (tmp, path) in &staged {
            std::fs::rename(tmp, path).with_context(|| format!("renaming into {}", path.display()))?;
        }
        Ok(())
    }
}

fn file_name(path: &Path) -> String {
    path.file_name().map_or_else(|| path.display().to_string(), |n| n.to_string_lossy().into_owned())
}

fn with_suffix(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

/// `runs/m.fsn` → `runs/m.seed3.fsn`
pub fn seeded_path(path: &Path, seed: u64) -> PathBuf {
    let stem = path.file_stem().map_or_else(String::new, |s| s.to_string_lossy().into_owned());
    let name = match path.extension() {
        Some(ext) => format!("{stem}.seed{seed}.{}", ext.to_string_lossy()),
        None => format!("{stem}.seed{seed}"),
    };
    path.with_file_name(name)
}

fn load_labelled(path: &Path, table: &TableFlags) -> anyhow::Result<Dataset> {
    let t = read_table(path, &table.options(path)?)?;
    t.into_dataset().with_context(|| format!("reading {}", path.display()))
}

fn load_with_vocab(path: &Path, table: &TableFlags, vocab: &[String]) -> anyhow::Result<Dataset> {
    let t = read_table(path, &table.options(path)?)?;
    t.into_dataset_with(vocab).with_context(|| format!("reading {}", path.display()))
}

fn cmd_train(a: &TrainArgs, out: &mut dyn Write, err: &mut dyn Write) -> anyhow::Result<()> {
    let base = config::resolve(a.config.as_deref(), &a.flags.overrides())?;
    let full = load_labelled(&a.data, &a.table)?;
    let vocab = full.class_names.clone().unwrap_or_default();
    let given_test = match &a.test {
        Some(p) => Some(load_with_vocab(p, &a.table, &vocab)?),
        None => None,
    };
    if let Some(f) = a.split {
        if !(f > 0.0 && f < 1.0) {
            bail!("--split must lie strictly between 0 and 1, got {f}");
        }
    }

    let seeds = match &a.seeds {
        Some(r) => r.0.clone(),
        None => vec![base.seed],
    };
    for &seed in &seeds {
        let config = TrainConfig { seed, ..base.clone() };
        let (model_out, report_out) = match &a.seeds {
            Some(_) => (
                seeded_path(&a.out, seed),
                a.report.as_deref().map(|r| seeded_path(r, seed)),
            ),
            None => (a.out.clone(), a.report.clone()),
        };
        let report_out = report_out.unwrap_or_else(|| with_suffix(&model_out, ".report.tsv"));

        let (train, test) = match (a.split, &given_test) {
            (Some(f), _) => {
                let spec = SplitSpec {
                    train_fraction: f,
                    seed: a.split_seed.unwrap_or(seed),
                    stratified: true,
                };
                let (tr, te) = data::split(&full, &spec)?;
                (tr, Some(te))
            }
            (None, t) => (full.clone(), t.clone()),
        };
        let (train, test, standardizer) = if config.standardize {
            let s = Standardizer::fit(&train.x)?;
            let tr = train.with_inputs(s.apply(&train.x)?)?;
            let te = test.map(|t| t.with_inputs(s.apply(&t.x)?)).transpose()?;
            (tr, te, Some(s))
        } else {
            (train, test, None)
        };

        let every = a.progress;
        let outcome = train_observed(&train, test.as_ref(), &config, &mut |r| {
            if every > 0 && (r.epoch % every == 0 || r.epoch == config.epochs) {
                let _ = writeln!(err, "seed {seed} {}", trainer::describe(r));
            }
        })?;

        let manifest_out = manifest_path(&model_out);
        let model_file = ModelFile {
            model: outcome.model.clone(),
            classes: vocab.clone(),
            manifest: Some(file_name(&manifest_out)),
        };
        let prep = PrepFile {
            features: train.features(),
            standardizer,
            embeddings: outcome.embeddings.clone(),
            feature_names: full.feature_names.clone(),
        };
        let mut report = Vec::new();
        write_train_report(&mut report, &outcome.report)?;

        let mut manifest = RunManifest::start("train", seed);
        manifest.input(&a.data)?;
        if let Some(t) = &a.test {
            manifest.input(t)?;
        }
        if let Some(c) = &a.config {
            manifest.input(c)?;
        }
        manifest.config = Some(ConfigOverrides::from_config(&config));

        let mut files = Outputs::default();
        files.add(model_out.clone(), model_file.render()?);
        files.add(prep_path(&model_out), prep.render()?);
        files.add(report_out, report);
        files.seal(&mut manifest, manifest_out)?;
        files.commit()?;

        let table = outcome.feature_table()?;
        let mut line = format!(
            "seed {seed} selected {}",
            outcome.selected().iter().map(ToString::to_string).collect::<Vec<_>>().join(",")
        );
        line += &format!(
            " train_accuracy {}",
            evaluator::accuracy(&outcome.model, outcome.selected(), &train)?
        );
        if let Some(t) = &test {
            let r = evaluator::evaluate(&outcome.model, &table, outcome.selected(), t, evaluator::MI_BINS)?;
            line += &format!(" test_accuracy {} test_recon {}", r.accuracy, r.recon_error);
        }
        writeln!(out, "{line}")?;
    }
    Ok(())
}

fn load_bundle(path: &Path) -> anyhow::Result<Bundle> {
    Bundle::load(path).with_context(|| format!("loading model {}", path.display()))
}

fn cmd_select(a: &SelectArgs, out: &mut dyn Write) -> anyhow::Result<()> {
    let bundle = load_bundle(&a.model)?;
    let stored = bundle.file.selected()?;
    let recomputed = final_selection(&bundle.file.model, &bundle.table()?)?;
    if recomputed != stored {
        bail!(
            "model {} is inconsistent: stored selection {:?} differs from its weights' selection {:?}",
            a.model.display(),
            stored,
            recomputed
        );
    }
    for &j in stored {
        writeln!(out, "{j}\t{}", bundle.feature_name(j))?;
    }
    Ok(())
}

/// Standardized evaluation inputs, with a shape error naming both sides.
fn model_inputs(bundle: &Bundle, data: Dataset, path: &Path) -> anyhow::Result<Dataset> {
    let d = bundle.file.model.arch.input_dim;
    if data.features() != d {
        return Err(anyhow!(
            "{} has shape {}x{} but the model expects inputs of shape nx{d}",
            path.display(),
            data.samples(),
            data.features()
        ));
    }
    let x = bundle.prep.transform(&data.x)?;
    Ok(data.with_inputs(x)?)
}

fn cmd_eval(a: &EvalArgs, out: &mut dyn Write) -> anyhow::Result<()> {
    let bundle = load_bundle(&a.model)?;
    let data = load_with_vocab(&a.data, &a.table, &bundle.file.classes)?;
    let data = model_inputs(&bundle, data, &a.data)?;
    let model = &bundle.file.model;
    let selected = bundle.file.selected()?;
    let report = evaluator::evaluate(model, &bundle.table()?, selected, &data, a.mi_bins)?;

    let d = model.arch.input_dim;
    let classes = model.arch.classes;
    let predictor = TrainConfig {
        mode: Mode::Predictor,
        ..model.config.clone()
    };
    let dense = TrainConfig {
        mode: Mode::Dense,
        ..model.config.clone()
    };
    let doc = EvalDoc::new(
        model.config.mode.as_str(),
        model.config.k,
        &report,
        serialized_size(&predictor, d, classes)?,
        serialized_size(&dense, d, classes)?,
    );
    let text = doc.render()?;
    match &a.out {
        None => out.write_all(text.as_bytes())?,
        Some(p) => {
            let mut manifest = RunManifest::start("eval", model.config.seed);
            manifest.input(&a.model)?;
            manifest.input(&a.data)?;
            let mut files = Outputs::default();
            files.add(p.clone(), text);
            files.seal(&mut manifest, manifest_path(p))?;
            files.commit()?;
        }
    }
    Ok(())
}

fn cmd_predict(a: &PredictArgs, out: &mut dyn Write) -> anyhow::Result<()> {
    let bundle = load_bundle(&a.model)?;
    let table = read_table(&a.data, &a.table.options(&a.data)?)?;
    let d = bundle.file.model.arch.input_dim;
    if table.x.cols() != d {
        bail!(
            "{} has shape {}x{} but the model expects inputs of shape nx{d}",
            a.data.display(),
            table.x.rows(),
            table.x.cols()
        );
    }
    let x = bundle.prep.transform(&table.x)?;
    let probs = trainer::predict_batch(&bundle.file.model, bundle.file.selected()?, &x)?;

    let mut buf = Vec::new();
    {
        let mut w = csv::WriterBuilder::new().delimiter(b'\t').from_writer(&mut buf);
        let mut header = vec!["row".to_string(), "predicted".to_string()];
        header.extend(bundle.file.classes.iter().map(|c| format!("p_{c}")));
        w.write_record(&header)?;
        for i in 0..probs.rows() {
            let p = probs.row(i);
            let mut rec = vec![i.to_string(), bundle.file.classes[evaluator::argmax(p)].clone()];
            rec.extend(p.iter().map(ToString::to_string));
            w.write_record(&rec)?;
        }
        w.flush()?;
    }
    match &a.out {
        None => out.write_all(&buf)?,
        Some(p) => {
            let mut manifest = RunManifest::start("predict", bundle.file.model.config.seed);
            manifest.input(&a.model)?;
            manifest.input(&a.data)?;
            let mut files = Outputs::default();
            files.add(p.clone(), buf);
            files.seal(&mut manifest, manifest_path(p))?;
            files.commit()?;
        }
    }
    Ok(())
}

/// Contents of `<dataset>.planted.toml`.
#[derive(Debug, Serialize, serde::Deserialize, PartialEq)]
pub struct PlantedDoc {
    pub n: usize,
    pub d: usize,
    pub k_star: usize,
    pub seed: u64,
    pub planted: Vec<usize>,
    /// `[planted, copy]` column pairs of a duplicated set.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub copies: Vec<[usize; 2]>,
    pub manifest: String,
}

pub fn planted_path(dataset: &Path) -> PathBuf {
    with_suffix(dataset, ".planted.toml")
}

fn cmd_synth(a: &SynthArgs) -> anyhow::Result<()> {
    let (synthetic, copies) = if a.duplicate {
        let dup = make_synthetic_duplicated(a.n, a.d, a.k_star, a.seed)?;
        (dup.synthetic, dup.copies.iter().map(|&(p, c)| [p, c]).collect())
    } else {
        (make_synthetic(a.n, a.d, a.k_star, a.seed)?, Vec::new())
    };
    let mut csv = Vec::new();
    write_dataset(&mut csv, &synthetic.dataset, TableOptions::for_path(&a.out).delimiter)?;
    let manifest_out = manifest_path(&a.out);
    let doc = PlantedDoc {
        n: a.n,
        d: a.d,
        k_star: a.k_star,
        seed: a.seed,
        planted: synthetic.planted,
        copies,
        manifest: file_name(&manifest_out),
    };
    let mut manifest = RunManifest::start(if a.duplicate { "synth --duplicate" } else { "synth" }, a.seed);
    let mut files = Outputs::default();
    files.add(a.out.clone(), csv);
    files.add(planted_path(&a.out), toml::to_string(&doc)?);
    files.seal(&mut manifest, manifest_out)?;
    files.commit()
}

fn cmd_split(a: &SplitArgs) -> anyhow::Result<()> {
    let data = load_labelled(&a.data, &a.table)?;
    let spec = SplitSpec {
        train_fraction: a.fraction,
        seed: a.seed,
        stratified: !a.no_stratify,
    };
    let (train, test) = data::split(&data, &spec)?;
    let mut files = Outputs::default();
    for (path, part) in [(&a.train_out, &train), (&a.test_out, &test)] {
        let mut buf = Vec::new();
        write_dataset(&mut buf, part, TableOptions::for_path(path).delimiter)?;
        files.add(path.clone(), buf);
    }
    let mut manifest = RunManifest::start("split", a.seed);
    manifest.input(&a.data)?;
    files.seal(&mut manifest, manifest_path(&a.train_out))?;
    files.commit()
}

/// Output of `fsnet sizes`.
#[derive(Debug, Serialize, serde::Deserialize, PartialEq)]
pub struct SizesDoc {
    pub d: usize,
    pub k: usize,
    pub b: usize,
    pub param_count_predictor: usize,
    pub param_count_dense: usize,
    pub compression_ratio: f64,
    pub file_bytes_predictor: usize,
    pub file_bytes_dense: usize,
    pub file_size_ratio: f64,
}

fn cmd_sizes(a: &SizesArgs, out: &mut dyn Write) -> anyhow::Result<()> {
    let config = config::resolve(a.config.as_deref(), &a.flags.overrides())?;
    if a.classes < 2 {
        bail!("--classes must be at least 2");
    }
    let arch = fsnet_core::Architecture::from_config(&config, a.d, a.classes);
    arch.validate()?;
    let predictor = TrainConfig {
        mode: Mode::Predictor,
        ..config.clone()
    };
    let dense = TrainConfig {
        mode: Mode::Dense,
        ..config.clone()
    };
    let fp = serialized_size(&predictor, a.d, a.classes)?;
    let fd = serialized_size(&dense, a.d, a.classes)?;
    let doc = SizesDoc {
        d: a.d,
        k: config.k,
        b: config.b,
        param_count_predictor: arch.param_count(config.b, config.bias),
        param_count_dense: arch.param_count(a.d, config.bias),
        compression_ratio: evaluator::compression_ratio(&arch, a.d, config.b, config.bias),
        file_bytes_predictor: fp,
        file_bytes_dense: fd,
        file_size_ratio: fd as f64 / fp as f64,
    };
    out.write_all(toml::to_string(&doc)?.as_bytes())?;
    Ok(())
}
