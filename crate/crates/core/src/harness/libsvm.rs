//! LIBSVM text format: `label idx:val idx:val ...` with 1-based indices.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::linalg::Vector;
use crate::objectives::{Dataset, Sample};

/// How labels were interpreted on load.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LabelKind {
    /// Exactly two distinct labels; the smaller became `-1`, the larger `+1`.
    Binary { negative: f64, positive: f64 },
    Regression,
}

pub fn load_libsvm(path: impl AsRef<Path>) -> Result<(Dataset, LabelKind)> {
    read_libsvm(BufReader::new(File::open(path)?))
}

pub fn read_libsvm<R: BufRead>(reader: R) -> Result<(Dataset, LabelKind)> {
    let mut rows: Vec<(f64, Vec<(usize, f64)>)> = Vec::new();
    let mut dim = 0usize;
    for (lineno, line) in reader.lines().enumerate() {
        let line = line?;
        let lineno = lineno + 1;
        let content = line.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let err = |message: String| Error::Parse { line: lineno, message };
        let mut tokens = content.split_whitespace();
        let label_tok = tokens.next().expect("non-empty line has a token");
        let label: f64 = label_tok.parse().map_err(|_| err(format!("bad label '{label_tok}'")))?;
        if !label.is_finite() {
            return Err(err(format!("label '{label_tok}' is not finite")));
        }
        let mut feats = Vec::new();
        for tok in tokens {
            let (idx, val) = tok.split_once(':').ok_or_else(|| err(format!("expected idx:val, got '{tok}'")))?;
            let idx: usize = idx.parse().map_err(|_| err(format!("bad index '{idx}'")))?;
            if idx == 0 {
                return Err(err("indices are 1-based".into()));
            }
            let val: f64 = val.parse().map_err(|_| err(format!("bad value '{val}'")))?;
            if !val.is_finite() {
                return Err(err(format!("value '{val}' is not finite")));
            }
            if feats.iter().any(|&(j, _)| j == idx) {
                return Err(err(format!("index {idx} repeated")));
            }
            dim = dim.max(idx);
            feats.push((idx, val));
        }
        rows.push((label, feats));
    }
    if rows.is_empty() {
        return Err(Error::EmptyFile);
    }

    let mut distinct: Vec<f64> = Vec::new();
    for (label, _) in &rows {
        if !distinct.contains(label) {
            distinct.push(*label);
            if distinct.len() > 2 {
                break;
            }
        }
    }
    let kind = if distinct.len() == 2 {
        let (negative, positive) = (distinct[0].min(distinct[1]), distinct[0].max(distinct[1]));
        LabelKind::Binary { negative, positive }
    } else {
        LabelKind::Regression
    };

    let samples = rows
        .into_iter()
        .map(|(label, feats)| {
            let mut a = Vector::zeros(dim);
            for (idx, val) in feats {
                a[idx - 1] = val;
            }
            let target = match kind {
                LabelKind::Binary { positive, .. } => {
                    if label == positive {
                        1.0
                    } else {
                        -1.0
                    }
                }
                LabelKind::Regression => label,
            };
            Sample::new(a, target)
        })
        .collect();
    Ok((Dataset::new(samples)?, kind))
}

pub fn write_libsvm(path: impl AsRef<Path>, dataset: &Dataset) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    write_libsvm_to(&mut out, dataset)?;
    out.flush()?;
    Ok(())
}

/// Writes nonzero entries with 17 significant digits. The first row always
/// carries the last coordinate so the dimension survives a reload.
pub fn write_libsvm_to<W: Write>(out: &mut W, dataset: &Dataset) -> Result<()> {
    let p = dataset.dim();
    for (row, s) in dataset.samples().iter().enumerate() {
        write!(out, "{}", fmt17(s.target))?;
        for (j, v) in s.features.iter().enumerate() {
            if *v != 0.0 || (row == 0 && j + 1 == p) {
                write!(out, " {}:{}", j + 1, fmt17(*v))?;
            }
        }
        writeln!(out)?;
    }
    Ok(())
}

fn fmt17(v: f64) -> String {
    format!("{v:.16e}")
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn parse(text: &str) -> Result<(Dataset, LabelKind)> {
        read_libsvm(text.as_bytes())
    }

    #[test]
    fn dense_expansion() {
        let (ds, kind) = parse("1 1:0.5 3:2\n").unwrap();
        assert_eq!(ds.dim(), 3);
        assert_eq!(*ds.sample(0).features, array![0.5, 0.0, 2.0]);
        assert_eq!(ds.sample(0).target, 1.0);
        assert_eq!(kind, LabelKind::Regression);
    }

    #[test]
    fn binary_labels_map_to_signs() {
        let (ds, kind) = parse("0 1:1\n1 2:1\n0 1:3\n").unwrap();
        assert_eq!(kind, LabelKind::Binary { negative: 0.0, positive: 1.0 });
        let t: Vec<f64> = ds.samples().iter().map(|s| s.target).collect();
        assert_eq!(t, vec![-1.0, 1.0, -1.0]);
    }

    #[test]
    fn parse_errors_carry_line() {
        assert!(matches!(parse("1 3:x\n"), Err(Error::Parse { line: 1, .. })));
        assert!(matches!(parse("1 1:1\n\n2 0:1\n"), Err(Error::Parse { line: 3, .. })));
        assert!(matches!(parse("1 2\n"), Err(Error::Parse { line: 1, .. })));
        assert!(matches!(parse("\n# only a comment\n"), Err(Error::EmptyFile)));
    }

    #[test]
    fn round_trip_is_exact() {
        let ds = Dataset::new(vec![
            Sample::new(array![0.1, 0.0, 0.0], 1.0 / 3.0),
            Sample::new(array![-1e-300, std::f64::consts::PI, 0.0], -2.5),
            Sample::new(array![0.0, 0.0, 0.0], 7.0),
        ])
        .unwrap();
        let mut buf = Vec::new();
        write_libsvm_to(&mut buf, &ds).unwrap();
        let (back, _) = read_libsvm(buf.as_slice()).unwrap();
        assert_eq!(back, ds);

        // two distinct labels already in {-1, +1} are a fixed point
        let binary = Dataset::new(vec![Sample::new(array![1.5], 1.0), Sample::new(array![0.0], -1.0)]).unwrap();
        let mut buf = Vec::new();
        write_libsvm_to(&mut buf, &binary).unwrap();
        assert_eq!(read_libsvm(buf.as_slice()).unwrap().0, binary);
    }
}
