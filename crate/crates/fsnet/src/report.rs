//! Per-epoch training tables and flat evaluation documents.

use std::io::Write;

use fsnet_core::trainer::EpochRecord;
use fsnet_core::{EvalReport, TrainReport};
use serde::{Deserialize, Serialize};

use crate::FormatError;

pub const TRAIN_COLUMNS: [&str; 8] = [
    "epoch",
    "tau",
    "loss",
    "class_loss",
    "recon_loss",
    "train_accuracy",
    "test_accuracy",
    "test_recon",
];

fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".to_string(), |x| x.to_string())
}

/// Tab-separated, one row per epoch, `NA` where no test set was given.
pub fn write_train_report<W: Write>(out: W, report: &TrainReport) -> Result<(), FormatError> {
    let mut w = csv::WriterBuilder::new().delimiter(b'\t').from_writer(out);
    w.write_record(TRAIN_COLUMNS)?;
    for r in &report.records {
        w.write_record([
            r.epoch.to_string(),
            r.tau.to_string(),
            r.loss.to_string(),
            r.class_loss.to_string(),
            r.recon_loss.to_string(),
            r.train_accuracy.to_string(),
            opt(r.test_accuracy),
            opt(r.test_recon),
        ])?;
    }
    w.flush().map_err(|e| FormatError::Invalid(e.to_string()))?;
    Ok(())
}

pub fn read_train_report(text: &str) -> Result<Vec<EpochRecord>, FormatError> {
    let mut r = csv::ReaderBuilder::new().delimiter(b'\t').from_reader(text.as_bytes());
    let header = r.headers()?.clone();
    if header.iter().ne(TRAIN_COLUMNS) {
        return Err(FormatError::Invalid("unexpected training report columns".into()));
    }
    r.records()
        .map(|rec| {
            let rec = rec?;
            let line = rec.position().map_or(0, |p| p.line());
            let num = |i: usize| -> Result<f64, FormatError> {
                rec[i].parse().map_err(|_| FormatError::Cell {
                    line,
                    column: i + 1,
                    message: format!("{:?} is not a number", &rec[i]),
                })
            };
            let maybe = |i: usize| -> Result<Option<f64>, FormatError> {
                if &rec[i] == "NA" {
                    Ok(None)
                } else {
                    num(i).map(Some)
                }
            };
            Ok(EpochRecord {
                epoch: num(0)? as usize,
                tau: num(1)?,
                loss: num(2)?,
                class_loss: num(3)?,
                recon_loss: num(4)?,
                train_accuracy: num(5)?,
                test_accuracy: maybe(6)?,
                test_recon: maybe(7)?,
            })
        })
        .collect()
}

/// The evaluation document; field order is the key order on disk.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalDoc {
    pub mode: String,
    pub k: usize,
    pub samples: usize,
    pub accuracy: f64,
    pub recon_error: f64,
    pub avg_mi: f64,
    pub mi_bins: usize,
    pub param_count_predictor: usize,
    pub param_count_dense: usize,
    pub compression_ratio: f64,
    pub file_bytes_predictor: usize,
    pub file_bytes_dense: usize,
    pub file_size_ratio: f64,
}

/// Keys of [`EvalDoc`], in order.
pub const EVAL_KEYS: [&str; 13] = [
    "mode",
    "k",
    "samples",
    "accuracy",
    "recon_error",
    "avg_mi",
    "mi_bins",
    "param_count_predictor",
    "param_count_dense",
    "compression_ratio",
    "file_bytes_predictor",
    "file_bytes_dense",
    "file_size_ratio",
];

impl EvalDoc {
    pub fn new(mode: &str, k: usize, r: &EvalReport, bytes_predictor: usize, bytes_dense: usize) -> Self {
        EvalDoc {
            mode: mode.to_string(),
            k,
            samples: r.samples,
            accuracy: r.accuracy,
            recon_error: r.recon_error,
            avg_mi: r.avg_mi,
            mi_bins: r.mi_bins,
            param_count_predictor: r.param_count_predictor,
            param_count_dense: r.param_count_dense,
            compression_ratio: r.compression_ratio,
            file_bytes_predictor: bytes_predictor,
            file_bytes_dense: bytes_dense,
            file_size_ratio: bytes_dense as f64 / bytes_predictor as f64,
        }
    }

    pub fn render(&self) -> Result<String, FormatError> {
        toml::to_string(self).map_err(|e| FormatError::Invalid(e.to_string()))
    }

    pub fn parse(text: &str) -> Result<Self, FormatError> {
        toml::from_str(text).map_err(|e| FormatError::Invalid(e.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn train_report_round_trips() {
        let report = TrainReport {
            records: vec![
                EpochRecord {
                    epoch: 1,
                    tau: 9.5,
                    loss: 12.25,
                    class_loss: 1.0 / 3.0,
                    recon_loss: 11.9,
                    train_accuracy: 0.5,
                    test_accuracy: None,
                    test_recon: None,
                },
                EpochRecord {
                    epoch: 2,
                    tau: 0.01,
                    loss: 1e-300,
                    class_loss: 0.0,
                    recon_loss: 0.1,
                    train_accuracy: 1.0,
                    test_accuracy: Some(0.75),
                    test_recon: Some(3.5),
                },
            ],
            selected: vec![1, 2],
        };
        let mut buf = Vec::new();
        write_train_report(&mut buf, &report).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("epoch\ttau\tloss"));
        assert_eq!(read_train_report(&text).unwrap(), report.records);
    }

    #[test]
    fn eval_doc_keys_are_fixed() {
        let r = EvalReport {
            accuracy: 0.9,
            recon_error: 1.5,
            avg_mi: 0.02,
            mi_bins: 10,
            param_count_predictor: 100,
            param_count_dense: 1000,
            compression_ratio: 10.0,
            samples: 20,
        };
        let doc = EvalDoc::new("predictor", 10, &r, 2000, 50_000);
        let text = doc.render().unwrap();
        let keys: Vec<&str> = text.lines().map(|l| l.split(" = ").next().unwrap()).collect();
        assert_eq!(keys, EVAL_KEYS);
        assert_eq!(EvalDoc::parse(&text).unwrap(), doc);
        assert_eq!(doc.file_size_ratio, 25.0);
    }
}
