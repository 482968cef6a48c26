//! Delimited text tables (CSV/TSV) with one label column.

use std::collections::HashMap;
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;
use std::str::FromStr;

use fsnet_core::{Dataset, Matrix};

use crate::FormatError;

/// Which column holds the label.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum LabelColumn {
    First,
    #[default]
    Last,
    /// 0-based.
    Index(usize),
    /// Unlabelled table.
    None,
}

impl FromStr for LabelColumn {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "first" => Ok(LabelColumn::First),
            "last" => Ok(LabelColumn::Last),
            "none" => Ok(LabelColumn::None),
            other => other
                .parse()
                .map(LabelColumn::Index)
                .map_err(|_| format!("label column must be first, last, none, or an index, got {other:?}")),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TableOptions {
    pub delimiter: u8,
    pub header: bool,
    pub label: LabelColumn,
}

impl Default for TableOptions {
    fn default() -> Self {
        TableOptions {
            delimiter: b',',
            header: true,
            label: LabelColumn::Last,
        }
    }
}

impl TableOptions {
    /// Tab for `.tsv` / `.tab` files, comma otherwise.
    pub fn for_path(path: &Path) -> Self {
        let tab = matches!(
            path.extension().and_then(|e| e.to_str()),
            Some("tsv") | Some("tab")
        );
        TableOptions {
            delimiter: if tab { b'\t' } else { b',' },
            ..Self::default()
        }
    }
}

/// A parsed table: inputs, raw label strings, and column names.
#[derive(Clone, Debug, PartialEq)]
pub struct Table {
    pub x: Matrix,
    pub labels: Option<Vec<String>>,
    pub feature_names: Option<Vec<String>>,
}

impl Table {
    /// Codes labels by first appearance.
    pub fn into_dataset(self) -> Result<Dataset, FormatError> {
        let raw = self
            .labels
            .ok_or_else(|| FormatError::Invalid("table has no label column".into()))?;
        let mut vocab: Vec<String> = Vec::new();
        let mut index: HashMap<String, usize> = HashMap::new();
        let y = raw
            .into_iter()
            .map(|l| {
                *index.entry(l.clone()).or_insert_with(|| {
                    vocab.push(l);
                    vocab.len() - 1
                })
            })
            .collect();
        let classes = vocab.len();
        finish(Dataset::new(self.x, y, classes)?, self.feature_names, Some(vocab))
    }

    /// Codes labels with a fixed vocabulary; unknown labels are an error.
    pub fn into_dataset_with(self, vocab: &[String]) -> Result<Dataset, FormatError> {
        let raw = self
            .labels
            .ok_or_else(|| FormatError::Invalid("table has no label column".into()))?;
        let index: HashMap<&str, usize> = vocab.iter().enumerate().map(|(i, l)| (l.as_str(), i)).collect();
        let y = raw
            .iter()
            .enumerate()
            .map(|(row, l)| {
                index.get(l.as_str()).copied().ok_or_else(|| {
                    FormatError::Invalid(format!("data row {}: label {l:?} is not known to the model", row + 1))
                })
            })
            .collect::<Result<Vec<_>, _>>()?;
        finish(
            Dataset::with_label_space(self.x, y, vocab.len())?,
            self.feature_names,
            Some(vocab.to_vec()),
        )
    }
}

fn finish(
    data: Dataset,
    names: Option<Vec<String>>,
    classes: Option<Vec<String>>,
) -> Result<Dataset, FormatError> {
    let mut data = data;
    if let Some(n) = names {
        data = data.with_feature_names(n)?;
    }
    if let Some(c) = classes {
        data = data.with_class_names(c)?;
    }
    Ok(data)
}

pub fn read_table(path: &Path, opts: &TableOptions) -> Result<Table, FormatError> {
    let file = File::open(path).map_err(|e| FormatError::io(path, e))?;
    parse_table(file, opts)
}

pub fn parse_table<R: Read>(input: R, opts: &TableOptions) -> Result<Table, FormatError> {
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(opts.delimiter)
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(input);

    let mut width: Option<usize> = None;
    let mut label_at: Option<usize> = None;
    let mut names: Option<Vec<String>> = None;
    let mut values = Vec::new();
    let mut labels = Vec::new();
    let mut rows = 0;

    for (i, record) in reader.records().enumerate() {
        let record = record?;
        let line = record.position().map_or(i as u64 + 1, |p| p.line());
        if record.len() == 1 && record[0].is_empty() {
            continue;
        }
        let w = *width.get_or_insert(record.len());
        if record.len() != w {
            return Err(FormatError::Ragged {
                line,
                expected: w,
                found: record.len(),
            });
        }
        let at = match label_at {
            Some(at) => at,
            None => {
                let at = resolve_label(opts.label, w, line)?;
                label_at = Some(at);
                at
            }
        };
        if opts.header && names.is_none() {
            names = Some(
                record
                    .iter()
                    .enumerate()
                    .filter(|&(c, _)| c != at)
                    .map(|(_, s)| s.to_string())
                    .collect(),
            );
            continue;
        }
        for (c, cell) in record.iter().enumerate() {
            if c == at {
                if cell.is_empty() {
                    return Err(FormatError::Cell {
                        line,
                        column: c + 1,
                        message: "missing label".into(),
                    });
                }
                labels.push(cell.to_string());
                continue;
            }
            let v: f64 = cell.parse().map_err(|_| FormatError::Cell {
                line,
                column: c + 1,
                message: format!("{cell:?} is not a number"),
            })?;
            if !v.is_finite() {
                return Err(FormatError::Cell {
                    line,
                    column: c + 1,
                    message: format!("{cell:?} is not finite"),
                });
            }
            values.push(v);
        }
        rows += 1;
    }
    let w = width.ok_or_else(|| FormatError::Invalid("table is empty".into()))?;
    let d = if opts.label == LabelColumn::None { w } else { w - 1 };
    if rows == 0 || d == 0 {
        return Err(FormatError::Invalid("table has no data rows or no feature columns".into()));
    }
    Ok(Table {
        x: Matrix::from_vec(rows, d, values)?,
        labels: (opts.label != LabelColumn::None).then_some(labels),
        feature_names: names,
    })
}

/// Position of the label column, or `usize::MAX` for unlabelled tables.
fn resolve_label(label: LabelColumn, width: usize, line: u64) -> Result<usize, FormatError> {
    match label {
        LabelColumn::First => Ok(0),
        LabelColumn::Last => Ok(width - 1),
        LabelColumn::None => Ok(usize::MAX),
        LabelColumn::Index(i) if i < width => Ok(i),
        LabelColumn::Index(i) => Err(FormatError::Cell {
            line,
            column: i + 1,
            message: format!("label column {i} is outside a row of {width} fields"),
        }),
    }
}

/// Writes features (shortest round-trip decimal form) then the label.
pub fn write_dataset<W: Write>(out: W, data: &Dataset, delimiter: u8) -> Result<(), FormatError> {
    let mut w = csv::WriterBuilder::new().delimiter(delimiter).from_writer(out);
    let d = data.features();
    let mut header: Vec<String> = match &data.feature_names {
        Some(n) => n.clone(),
        None => (0..d).map(|j| format!("x{j}")).collect(),
    };
    header.push("label".into());
    w.write_record(&header)?;
    for i in 0..data.samples() {
        let mut row: Vec<String> = data.x.row(i).iter().map(|v| v.to_string()).collect();
        row.push(match &data.class_names {
            Some(names) => names[data.y[i]].clone(),
            None => data.y[i].to_string(),
        });
        w.write_record(&row)?;
    }
    w.flush().map_err(|e| FormatError::Invalid(e.to_string()))?;
    Ok(())
}
