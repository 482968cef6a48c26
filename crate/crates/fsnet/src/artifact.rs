//! Trained-model files and preprocessing sidecars.
//!
//! The model file holds the configuration, every trainable matrix, the class
//! vocabulary, and `S`. Everything whose size grows with `d` apart from the
//! dense-mode weights (the input transform, the feature embeddings, feature
//! names) goes to the sidecar, `<model>.prep`.

use std::path::{Path, PathBuf};

use fsnet_core::{
    Architecture, FeatureEmbeddings, FeatureTable, FsNetModel, Matrix, Mode, RngState, Standardizer, TrainConfig,
};

use crate::textdoc::TextDoc;
use crate::FormatError;

pub const MODEL_FORMAT: &str = "fsnet-model";
pub const PREP_FORMAT: &str = "fsnet-prep";
pub const VERSION: u32 = 1;
/// Recorded so readers know how embeddings were binned.
pub const BINNING: &str = "equal-width-last-closed";

#[derive(Clone, Debug, PartialEq)]
pub struct ModelFile {
    pub model: FsNetModel,
    /// Label strings by class code.
    pub classes: Vec<String>,
    /// File name of the manifest that produced the model.
    pub manifest: Option<String>,
}

fn join<T: ToString>(v: &[T]) -> String {
    v.iter().map(ToString::to_string).collect::<Vec<_>>().join(",")
}

fn config_fields(doc: &mut TextDoc, c: &TrainConfig) {
    doc.push("mode", c.mode);
    doc.push("k", c.k);
    doc.push("b", c.b);
    doc.push("lambda", c.lambda);
    doc.push("lr", c.lr);
    doc.push("epochs", c.epochs);
    doc.push("tau0", c.tau0);
    doc.push("tau_end", c.tau_end);
    doc.push("dropout", c.dropout);
    doc.push("seed", c.seed);
    doc.push("encoder", join(&c.encoder));
    doc.push("classifier", join(&c.classifier));
    doc.push("decoder", join(&c.decoder));
    doc.push("rms_decay", c.rms_decay);
    doc.push("rms_eps", c.rms_eps);
    doc.push("leaky_slope", c.leaky_slope);
    doc.push("bias", c.bias);
    doc.push("standardize", c.standardize);
}

fn read_config(doc: &TextDoc) -> Result<TrainConfig, FormatError> {
    Ok(TrainConfig {
        mode: doc.parsed::<Mode>("mode")?,
        k: doc.parsed("k")?,
        b: doc.parsed("b")?,
        lambda: doc.parsed("lambda")?,
        lr: doc.parsed("lr")?,
        epochs: doc.parsed("epochs")?,
        tau0: doc.parsed("tau0")?,
        tau_end: doc.parsed("tau_end")?,
        dropout: doc.parsed("dropout")?,
        seed: doc.parsed("seed")?,
        encoder: doc.list("encoder")?,
        classifier: doc.list("classifier")?,
        decoder: doc.list("decoder")?,
        rms_decay: doc.parsed("rms_decay")?,
        rms_eps: doc.parsed("rms_eps")?,
        leaky_slope: doc.parsed("leaky_slope")?,
        bias: doc.parsed("bias")?,
        standardize: doc.parsed("standardize")?,
    })
}

impl ModelFile {
    pub fn to_doc(&self) -> TextDoc {
        let m = &self.model;
        let mut doc = TextDoc::new(MODEL_FORMAT, VERSION);
        config_fields(&mut doc, &m.config);
        doc.push("binning", BINNING);
        doc.push("input_dim", m.arch.input_dim);
        doc.push("classes", m.arch.classes);
        doc.push("class_names", self.classes.len());
        for (i, name) in self.classes.iter().enumerate() {
            doc.push(&format!("class.{i}"), name);
        }
        if let Some(man) = &self.manifest {
            doc.push("manifest", man);
        }
        doc.push(
            "selected",
            m.selected.as_deref().map(join).unwrap_or_default(),
        );
        for (name, w) in m.named_params() {
            doc.push_matrix(&name, w);
        }
        doc
    }

    pub fn render(&self) -> Result<String, FormatError> {
        self.to_doc().render()
    }

    pub fn parse(text: &str) -> Result<Self, FormatError> {
        let doc = TextDoc::parse(text)?;
        doc.expect_format(MODEL_FORMAT, VERSION)?;
        let binning = doc.field("binning")?;
        if binning != BINNING {
            return Err(FormatError::Invalid(format!("unsupported binning {binning:?}")));
        }
        let config = read_config(&doc)?;
        let input_dim: usize = doc.parsed("input_dim")?;
        let classes: usize = doc.parsed("classes")?;
        let arch = Architecture::from_config(&config, input_dim, classes);
        // Shapes and names come from a freshly built skeleton; the file must match.
        let mut model = FsNetModel::init(&config, &arch, &mut RngState::new(0))?;
        let expected: Vec<(String, (usize, usize))> =
            model.named_params().into_iter().map(|(n, m)| (n, m.shape())).collect();
        let found: Vec<(&str, &Matrix)> = doc.matrices().collect();
        if found.len() != expected.len() {
            return Err(FormatError::Invalid(format!(
                "expected {} weight blocks, found {}",
                expected.len(),
                found.len()
            )));
        }
        for ((slot, (name, shape)), (fname, w)) in model.params_mut().into_iter().zip(&expected).zip(found) {
            if fname != name || w.shape() != *shape {
                return Err(FormatError::Invalid(format!(
                    "weight block {fname:?} {:?} where {name:?} {shape:?} was expected",
                    w.shape()
                )));
            }
            *slot = w.clone();
        }
        let selected: Vec<usize> = doc.list("selected")?;
        model.selected = (!selected.is_empty()).then_some(selected);
        model.validate()?;

        let n: usize = doc.parsed("class_names")?;
        let names = (0..n)
            .map(|i| doc.field(&format!("class.{i}")).map(str::to_string))
            .collect::<Result<Vec<_>, _>>()?;
        if names.len() != classes {
            return Err(FormatError::Invalid(format!(
                "{} class names for {classes} classes",
                names.len()
            )));
        }
        Ok(ModelFile {
            model,
            classes: names,
            manifest: doc.field("manifest").ok().map(str::to_string),
        })
    }

    pub fn selected(&self) -> Result<&[usize], FormatError> {
        self.model
            .selected
            .as_deref()
            .ok_or_else(|| FormatError::Invalid("model has no selected features".into()))
    }
}

/// Input transform, feature embeddings, and feature names of a training run.
#[derive(Clone, Debug, PartialEq)]
pub struct PrepFile {
    pub features: usize,
    pub standardizer: Option<Standardizer>,
    pub embeddings: Option<FeatureEmbeddings>,
    pub feature_names: Option<Vec<String>>,
}

impl PrepFile {
    pub fn to_doc(&self) -> TextDoc {
        let mut doc = TextDoc::new(PREP_FORMAT, VERSION);
        doc.push("features", self.features);
        doc.push("binning", BINNING);
        if let Some(s) = &self.standardizer {
            doc.push_matrix("mean", &row(&s.mean));
            doc.push_matrix("inv_scale", &row(&s.inv_scale));
        }
        if let Some(e) = &self.embeddings {
            doc.push_matrix("embedding", e.table());
        }
        if let Some(n) = &self.feature_names {
            doc.push_lines("names", n.clone());
        }
        doc
    }

    pub fn render(&self) -> Result<String, FormatError> {
        self.to_doc().render()
    }

    pub fn parse(text: &str) -> Result<Self, FormatError> {
        let doc = TextDoc::parse(text)?;
        doc.expect_format(PREP_FORMAT, VERSION)?;
        let features: usize = doc.parsed("features")?;
        let standardizer = match (doc.matrix("mean"), doc.matrix("inv_scale")) {
            (Ok(m), Ok(s)) => {
                if m.shape() != (1, features) || s.shape() != (1, features) {
                    return Err(FormatError::Invalid("standardizer width differs from feature count".into()));
                }
                Some(Standardizer {
                    mean: m.as_slice().to_vec(),
                    inv_scale: s.as_slice().to_vec(),
                })
            }
            _ => None,
        };
        let embeddings = match doc.matrix("embedding") {
            Ok(t) if t.rows() == features => Some(FeatureEmbeddings::from_table(t.clone())?),
            Ok(_) => return Err(FormatError::Invalid("embedding rows differ from feature count".into())),
            Err(_) => None,
        };
        let feature_names = doc.lines("names").map(<[String]>::to_vec);
        if feature_names.as_ref().is_some_and(|n| n.len() != features) {
            return Err(FormatError::Invalid("feature name count differs from feature count".into()));
        }
        Ok(PrepFile {
            features,
            standardizer,
            embeddings,
            feature_names,
        })
    }

    /// Applies the stored transform, if any.
    pub fn transform(&self, x: &Matrix) -> Result<Matrix, FormatError> {
        if x.cols() != self.features {
            return Err(FormatError::Invalid(format!(
                "data has {} features, the model expects {}",
                x.cols(),
                self.features
            )));
        }
        Ok(match &self.standardizer {
            Some(s) => s.apply(x)?,
            None => x.clone(),
        })
    }
}

fn row(v: &[f64]) -> Matrix {
    Matrix::from_vec(1, v.len(), v.to_vec()).expect("finite statistics")
}

/// `<model>.prep`
pub fn prep_path(model: &Path) -> PathBuf {
    let mut s = model.as_os_str().to_owned();
    s.push(".prep");
    PathBuf::from(s)
}

/// A model with its sidecar, ready for inference.
#[derive(Clone, Debug, PartialEq)]
pub struct Bundle {
    pub file: ModelFile,
    pub prep: PrepFile,
}

impl Bundle {
    pub fn load(model_path: &Path) -> Result<Self, FormatError> {
        let read = |p: &Path| std::fs::read_to_string(p).map_err(|e| FormatError::io(p, e));
        let file = ModelFile::parse(&read(model_path)?)?;
        let prep = PrepFile::parse(&read(&prep_path(model_path))?)?;
        if prep.features != file.model.arch.input_dim {
            return Err(FormatError::Invalid(format!(
                "sidecar describes {} features, the model {}",
                prep.features, file.model.arch.input_dim
            )));
        }
        Ok(Bundle { file, prep })
    }

    pub fn table(&self) -> Result<FeatureTable<'_>, FormatError> {
        Ok(self.file.model.feature_table(self.prep.embeddings.as_ref())?)
    }

    pub fn feature_name(&self, j: usize) -> String {
        self.prep
            .feature_names
            .as_ref()
            .and_then(|n| n.get(j).cloned())
            .unwrap_or_else(|| format!("x{j}"))
    }
}

/// Text size of a freshly initialized model of the given shape, in bytes.
pub fn serialized_size(config: &TrainConfig, d: usize, classes: usize) -> Result<usize, FormatError> {
    let arch = Architecture::from_config(config, d, classes);
    let mut model = FsNetModel::init(config, &arch, &mut RngState::new(config.seed))?;
    model.selected = Some((0..config.k).collect());
    let file = ModelFile {
        model,
        classes: (0..classes).map(|c| c.to_string()).collect(),
        manifest: None,
    };
    Ok(file.render()?.len())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample(mode: Mode, bias: bool) -> ModelFile {
        let config = TrainConfig {
            k: 3,
            b: 4,
            mode,
            bias,
            encoder: vec![5, 4],
            classifier: vec![3],
            decoder: vec![4, 6],
            seed: 77,
            ..TrainConfig::default()
        };
        let arch = Architecture::from_config(&config, 9, 3);
        let mut model = FsNetModel::init(&config, &arch, &mut RngState::new(5)).unwrap();
        model.selected = Some(vec![8, 0, 4]);
        ModelFile {
            model,
            classes: vec!["ALL".into(), "AML = x".into(), "3".into()],
            manifest: Some("m.manifest.toml".into()),
        }
    }

    #[test]
    fn model_round_trips_bit_exactly() {
        for (mode, bias) in [(Mode::Predictor, false), (Mode::Dense, true)] {
            let f = sample(mode, bias);
            let text = f.render().unwrap();
            let back = ModelFile::parse(&text).unwrap();
            assert_eq!(back, f);
            for ((_, a), (_, b)) in back.model.named_params().iter().zip(f.model.named_params()) {
                let bits = |m: &Matrix| m.as_slice().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
                assert_eq!(bits(a), bits(b));
            }
            assert_eq!(back.render().unwrap(), text);
        }
    }

    #[test]
    fn tampered_models_are_rejected() {
        let text = sample(Mode::Predictor, false).render().unwrap();
        assert!(ModelFile::parse(&text.replace("matrix selector 3 4", "matrix selector 3 5")).is_err());
        assert!(ModelFile::parse(&text.replace("version = 1", "version = 9")).is_err());
        assert!(ModelFile::parse(&text.replace("selected = 8,0,4", "selected = 8,0,40")).is_err());
        assert!(ModelFile::parse(&text[..text.len() / 2]).is_err());
    }

    #[test]
    fn prep_round_trips() {
        let prep = PrepFile {
            features: 3,
            standardizer: Some(Standardizer {
                mean: vec![0.5, -1.0, 1e-9],
                inv_scale: vec![2.0, 0.0, 1.0 / 3.0],
            }),
            embeddings: Some(FeatureEmbeddings::from_table(Matrix::from_rows(&[[0.1, 0.2], [0.3, 0.4], [0.0, -0.7]]).unwrap()).unwrap()),
            feature_names: Some(vec!["g1".into(), "g 2".into(), "g3".into()]),
        };
        assert_eq!(PrepFile::parse(&prep.render().unwrap()).unwrap(), prep);
        let bare = PrepFile {
            features: 3,
            standardizer: None,
            embeddings: None,
            feature_names: None,
        };
        assert_eq!(PrepFile::parse(&bare.render().unwrap()).unwrap(), bare);
    }

    #[test]
    fn dense_files_dwarf_predictor_files() {
        let config = TrainConfig::default();
        let p = serialized_size(&config, 7129, 2).unwrap();
        let d = serialized_size(&TrainConfig { mode: Mode::Dense, ..config }, 7129, 2).unwrap();
        assert!(d as f64 / p as f64 > 20.0, "{d} / {p}");
    }
}
