//! Line-oriented container shared by the model and preprocessing files.
//!
//! ```text
//! format = fsnet-model
//! version = 1
//! key = value
//! ...
//! matrix <name> <rows> <cols>
//! <row 0 values separated by spaces>
//! ...
//! lines <name> <count>
//! <one string per line>
//! end
//! ```
//!
//! Floats are written in Rust's shortest round-trip form, so reading a
//! document back reproduces every value bit for bit.

use std::fmt::Write as _;

use fsnet_core::Matrix;

use crate::FormatError;

#[derive(Clone, Debug, PartialEq)]
pub enum Block {
    Matrix(String, Matrix),
    Lines(String, Vec<String>),
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TextDoc {
    pub fields: Vec<(String, String)>,
    pub blocks: Vec<Block>,
}

impl TextDoc {
    pub fn new(format: &str, version: u32) -> Self {
        let mut doc = TextDoc::default();
        doc.push("format", format);
        doc.push("version", version);
        doc
    }

    pub fn push(&mut self, key: &str, value: impl ToString) {
        self.fields.push((key.to_string(), value.to_string()));
    }

    pub fn push_matrix(&mut self, name: &str, m: &Matrix) {
        self.blocks.push(Block::Matrix(name.to_string(), m.clone()));
    }

    pub fn push_lines(&mut self, name: &str, lines: Vec<String>) {
        self.blocks.push(Block::Lines(name.to_string(), lines));
    }

    pub fn field(&self, key: &str) -> Result<&str, FormatError> {
        self.fields
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
            .ok_or_else(|| FormatError::Invalid(format!("missing field {key:?}")))
    }

    pub fn parsed<T: std::str::FromStr>(&self, key: &str) -> Result<T, FormatError> {
        let raw = self.field(key)?;
        raw.parse()
            .map_err(|_| FormatError::Invalid(format!("field {key:?} has bad value {raw:?}")))
    }

    /// Comma-separated list; empty means none.
    pub fn list<T: std::str::FromStr>(&self, key: &str) -> Result<Vec<T>, FormatError> {
        let raw = self.field(key)?;
        if raw.is_empty() {
            return Ok(Vec::new());
        }
        raw.split(',')
            .map(|s| {
                s.trim()
                    .parse()
                    .map_err(|_| FormatError::Invalid(format!("field {key:?} has bad entry {s:?}")))
            })
            .collect()
    }

    /// Checks the `format` and `version` fields.
    pub fn expect_format(&self, format: &str, version: u32) -> Result<(), FormatError> {
        let found = self.field("format")?;
        if found != format {
            return Err(FormatError::Invalid(format!("expected a {format} file, found {found:?}")));
        }
        let v: u32 = self.parsed("version")?;
        if v != version {
            return Err(FormatError::Invalid(format!(
                "{format} version {v} is not supported (expected {version})"
            )));
        }
        Ok(())
    }

    pub fn matrices(&self) -> impl Iterator<Item = (&str, &Matrix)> {
        self.blocks.iter().filter_map(|b| match b {
            Block::Matrix(n, m) => Some((n.as_str(), m)),
            Block::Lines(..) => None,
        })
    }

    pub fn matrix(&self, name: &str) -> Result<&Matrix, FormatError> {
        self.matrices()
            .find(|(n, _)| *n == name)
            .map(|(_, m)| m)
            .ok_or_else(|| FormatError::Invalid(format!("missing matrix {name:?}")))
    }

    pub fn lines(&self, name: &str) -> Option<&[String]> {
        self.blocks.iter().find_map(|b| match b {
            Block::Lines(n, l) if n == name => Some(l.as_slice()),
            _ => None,
        })
    }

    pub fn render(&self) -> Result<String, FormatError> {
        let mut out = String::new();
        for (k, v) in &self.fields {
            check_text(k)?;
            check_text(v)?;
            writeln!(out, "{k} = {v}").expect("writing to a String");
        }
        for block in &self.blocks {
            match block {
                Block::Matrix(name, m) => {
                    check_text(name)?;
                    writeln!(out, "matrix {name} {} {}", m.rows(), m.cols()).expect("writing to a String");
                    for r in 0..m.rows() {
                        let row = m.row(r);
                        for (i, v) in row.iter().enumerate() {
                            if i > 0 {
                                out.push(' ');
                            }
                            write!(out, "{v}").expect("writing to a String");
                        }
                        out.push('\n');
                    }
                }
                Block::Lines(name, lines) => {
                    check_text(name)?;
                    writeln!(out, "lines {name} {}", lines.len()).expect("writing to a String");
                    for l in lines {
                        check_text(l)?;
                        out.push_str(l);
                        out.push('\n');
                    }
                }
            }
        }
        out.push_str("end\n");
        Ok(out)
    }

    pub fn parse(text: &str) -> Result<Self, FormatError> {
        let mut doc = TextDoc::default();
        let mut lines = text.lines().enumerate().map(|(i, l)| (i as u64 + 1, l));
        let corrupt = |line: u64, msg: String| FormatError::Corrupt { line, message: msg };
        loop {
            let Some((n, line)) = lines.next() else {
                return Err(FormatError::Invalid("document ends without \"end\"".into()));
            };
            if line == "end" {
                break;
            }
            if let Some(rest) = line.strip_prefix("matrix ") {
                let parts: Vec<&str> = rest.split(' ').collect();
                let [name, rows, cols] = parts[..] else {
                    return Err(corrupt(n, "matrix header needs a name, rows and cols".into()));
                };
                let rows: usize = rows.parse().map_err(|_| corrupt(n, "bad row count".into()))?;
                let cols: usize = cols.parse().map_err(|_| corrupt(n, "bad column count".into()))?;
                let mut data = Vec::with_capacity(rows * cols);
                for _ in 0..rows {
                    let (rn, row) = lines.next().ok_or_else(|| corrupt(n, format!("matrix {name} is truncated")))?;
                    let before = data.len();
                    for tok in row.split(' ').filter(|t| !t.is_empty()) {
                        data.push(tok.parse::<f64>().map_err(|_| corrupt(rn, format!("bad number {tok:?}")))?);
                    }
                    if data.len() - before != cols {
                        return Err(corrupt(rn, format!("expected {cols} values, found {}", data.len() - before)));
                    }
                }
                let m = Matrix::from_vec(rows, cols, data).map_err(|e| corrupt(n, e.to_string()))?;
                doc.blocks.push(Block::Matrix(name.to_string(), m));
            } else if let Some(rest) = line.strip_prefix("lines ") {
                let Some((name, count)) = rest.split_once(' ') else {
                    return Err(corrupt(n, "lines header needs a name and a count".into()));
                };
                let count: usize = count.parse().map_err(|_| corrupt(n, "bad line count".into()))?;
                let mut body = Vec::with_capacity(count);
                for _ in 0..count {
                    let (_, l) = lines.next().ok_or_else(|| corrupt(n, format!("block {name} is truncated")))?;
                    body.push(l.to_string());
                }
                doc.blocks.push(Block::Lines(name.to_string(), body));
            } else if let Some((k, v)) = line.split_once(" = ") {
                doc.fields.push((k.to_string(), v.to_string()));
            } else if let Some(k) = line.strip_suffix(" =") {
                doc.fields.push((k.to_string(), String::new()));
            } else {
                return Err(corrupt(n, format!("unrecognized line {line:?}")));
            }
        }
        Ok(doc)
    }
}

fn check_text(s: &str) -> Result<(), FormatError> {
    if s.contains(['\n', '\r']) {
        return Err(FormatError::Invalid(format!("{s:?} contains a line break")));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_exact() {
        let mut doc = TextDoc::new("test", 1);
        doc.push("empty", "");
        doc.push("list", "1,2,3");
        let m = Matrix::from_rows(&[[0.1 + 0.2, -1e-308, 5e-324], [1.0 / 3.0, f64::MIN_POSITIVE, 1e300]]).unwrap();
        doc.push_matrix("w", &m);
        doc.push_lines("names", vec!["a b".into(), "c = d".into(), String::new()]);
        let text = doc.render().unwrap();
        let back = TextDoc::parse(&text).unwrap();
        assert_eq!(back, doc);
        assert_eq!(back.matrix("w").unwrap().as_slice(), m.as_slice());
        assert_eq!(back.list::<usize>("list").unwrap(), [1, 2, 3]);
        assert!(back.list::<usize>("empty").unwrap().is_empty());
        back.expect_format("test", 1).unwrap();
        assert!(back.expect_format("test", 2).is_err());
    }

    #[test]
    fn truncation_and_garbage_are_reported() {
        let text = "format = t\nmatrix w 2 2\n1 2\n";
        assert!(TextDoc::parse(text).is_err());
        let text = "format = t\nmatrix w 1 2\n1 x\nend\n";
        assert!(matches!(TextDoc::parse(text), Err(FormatError::Corrupt { line: 3, .. })));
        assert!(TextDoc::parse("what\nend\n").is_err());
    }
}
