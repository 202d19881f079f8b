//! LibSVM text format: `label idx:val idx:val ...` with 1-based indices.

use std::io::BufRead;

use thiserror::Error;

use super::{DataPoint, SparseVector};

#[derive(Debug, Error)]
pub enum LibsvmError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("no data rows")]
    Empty,
    #[error("expected two distinct labels, found {0:?}")]
    Labels(Vec<f64>),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// A parsed file before label normalization.
#[derive(Debug, Clone, PartialEq)]
pub struct RawDataset {
    pub labels: Vec<f64>,
    pub rows: Vec<SparseVector>,
    /// Largest feature index seen (1-based), i.e. the dimension.
    pub dim: usize,
}

pub fn parse<R: BufRead>(reader: R) -> Result<RawDataset, LibsvmError> {
    let mut labels = Vec::new();
    let mut rows = Vec::new();
    let mut dim = 0usize;
    for (k, line) in reader.lines().enumerate() {
        let line = line?;
        let lineno = k + 1;
        let err = |message: String| LibsvmError::Parse { line: lineno, message };
        let body = line.split('#').next().unwrap_or("").trim();
        if body.is_empty() {
            continue;
        }
        let mut tokens = body.split_whitespace();
        let label_tok = tokens.next().unwrap_or_default();
        let label: f64 = label_tok
            .parse()
            .map_err(|_| err(format!("bad label {label_tok:?}")))?;
        let mut indices = Vec::new();
        let mut values = Vec::new();
        for tok in tokens {
            let (i, v) = tok
                .split_once(':')
                .ok_or_else(|| err(format!("expected idx:val, got {tok:?}")))?;
            let i: u32 = i.parse().map_err(|_| err(format!("bad index in {tok:?}")))?;
            if i == 0 {
                return Err(err("indices are 1-based".into()));
            }
            let v: f64 = v.parse().map_err(|_| err(format!("bad value in {tok:?}")))?;
            if !v.is_finite() {
                return Err(err(format!("non-finite value in {tok:?}")));
            }
            if indices.last().is_some_and(|&last| last >= i - 1) {
                return Err(err("indices must be strictly increasing".into()));
            }
            dim = dim.max(i as usize);
            if v != 0.0 {
                indices.push(i - 1);
                values.push(v);
            }
        }
        labels.push(label);
        rows.push(SparseVector { indices, values });
    }
    if rows.is_empty() {
        return Err(LibsvmError::Empty);
    }
    Ok(RawDataset { labels, rows, dim })
}

impl RawDataset {
    /// Maps labels to ±1: the smaller of two distinct raw labels becomes −1.
    /// A single-class file maps `≤ 0` to −1 and everything else to +1.
    pub fn into_points(self) -> Result<Vec<DataPoint>, LibsvmError> {
        let mut distinct: Vec<f64> = Vec::new();
        for &l in &self.labels {
            if !distinct.contains(&l) {
                distinct.push(l);
            }
        }
        distinct.sort_by(f64::total_cmp);
        let negative = match distinct.as_slice() {
            [one] => {
                if *one <= 0.0 {
                    *one
                } else {
                    f64::NAN
                }
            }
            [lo, _] => *lo,
            _ => return Err(LibsvmError::Labels(distinct)),
        };
        Ok(self
            .labels
            .into_iter()
            .zip(self.rows)
            .map(|(l, features)| DataPoint {
                features,
                label: if l == negative { -1.0 } else { 1.0 },
            })
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_single_row() {
        let raw = parse("+1 1:0.5 3:2.0\n".as_bytes()).unwrap();
        assert_eq!(raw.dim, 3);
        assert_eq!(raw.labels, vec![1.0]);
        assert_eq!(raw.rows[0].indices(), &[0, 2]);
        assert_eq!(raw.rows[0].values(), &[0.5, 2.0]);
        let pts = raw.into_points().unwrap();
        assert_eq!(pts[0].label, 1.0);
    }

    #[test]
    fn empty_input_is_an_error() {
        assert!(matches!(parse("".as_bytes()), Err(LibsvmError::Empty)));
        assert!(matches!(parse("\n  \n".as_bytes()), Err(LibsvmError::Empty)));
    }

    #[test]
    fn malformed_lines_report_line_number() {
        let text = "1 1:1\n1 2:x\n";
        match parse(text.as_bytes()) {
            Err(LibsvmError::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
        for bad in ["a 1:1", "1 0:1", "1 3:1 2:1", "1 2", "1 2:inf"] {
            assert!(matches!(parse(bad.as_bytes()), Err(LibsvmError::Parse { line: 1, .. })), "{bad}");
        }
    }

    #[test]
    fn label_conventions() {
        let map = |text: &str| -> Vec<f64> {
            parse(text.as_bytes()).unwrap().into_points().unwrap().iter().map(|p| p.label).collect()
        };
        assert_eq!(map("0 1:1\n1 1:1\n"), vec![-1.0, 1.0]);
        assert_eq!(map("-1 1:1\n+1 1:1\n"), vec![-1.0, 1.0]);
        assert_eq!(map("2 1:1\n1 1:1\n"), vec![1.0, -1.0]);
        assert_eq!(map("1 1:1\n"), vec![1.0]);
        assert_eq!(map("0 1:1\n"), vec![-1.0]);
        assert!(parse("1 1:1\n2 1:1\n3 1:1\n".as_bytes()).unwrap().into_points().is_err());
    }
}
