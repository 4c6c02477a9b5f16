//! Text data formats: rating triplets, dense matrices and labeled rows.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use gcg::losses::{LabeledDesign, MaskedObservations};
use gcg::numkit::TripletMatrix;
use ndarray::Array2;
use thiserror::Error;

use crate::config::Delimiter;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DataError {
    #[error("{path}:{line}: {message}")]
    Parse { path: String, line: usize, message: String },
    #[error("{0}: no data rows")]
    EmptyData(String),
    #[error("{path}: {message}")]
    Io { path: String, message: String },
}

fn read(path: &Path) -> Result<String, DataError> {
    std::fs::read_to_string(path).map_err(|e| DataError::Io { path: path.display().to_string(), message: e.to_string() })
}

fn write(path: &Path, text: &str) -> Result<(), DataError> {
    std::fs::write(path, text).map_err(|e| DataError::Io { path: path.display().to_string(), message: e.to_string() })
}

/// Non-blank, non-comment lines with their 1-based numbers.
fn data_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines().enumerate().map(|(k, l)| (k + 1, l.trim())).filter(|(_, l)| !l.is_empty() && !l.starts_with('#'))
}

#[derive(Debug, Clone)]
pub struct LoadedTriplets {
    /// All entries as training data.
    pub observations: MaskedObservations,
    /// Repeated `(user, item)` pairs that were overwritten.
    pub duplicates: usize,
}

/// Reads `user item rating` lines with 1-based ids; extra trailing
/// columns such as timestamps are ignored. Id `k` maps to index `k − 1`, the
/// shape comes from the largest ids, and a repeated pair keeps its last rating.
pub fn load_triplets(path: &Path, delimiter: Delimiter) -> Result<LoadedTriplets, DataError> {
    let name = path.display().to_string();
    let text = read(path)?;
    let mut entries: BTreeMap<(usize, usize), f64> = BTreeMap::new();
    let mut duplicates = 0;
    for (line, raw) in data_lines(&text) {
        let err = |message: String| DataError::Parse { path: name.clone(), line, message };
        let fields: Vec<&str> = delimiter.split(raw).collect();
        if fields.len() < 3 {
            return Err(err(format!("expected `user item rating`, found {} fields", fields.len())));
        }
        let id = |s: &str, what: &str| -> Result<usize, DataError> {
            match s.parse::<usize>() {
                Ok(v) if v >= 1 => Ok(v - 1),
                _ => Err(err(format!("{what} id `{s}` is not a positive integer"))),
            }
        };
        let (u, i) = (id(fields[0], "user")?, id(fields[1], "item")?);
        let rating: f64 = fields[2].parse().ok().filter(|v: &f64| v.is_finite()).ok_or_else(|| err(format!("rating `{}` is not a finite number", fields[2])))?;
        if entries.insert((u, i), rating).is_some() {
            duplicates += 1;
        }
    }
    if entries.is_empty() {
        return Err(DataError::EmptyData(name));
    }
    let rows = entries.keys().map(|k| k.0).max().unwrap_or(0) + 1;
    let cols = entries.keys().map(|k| k.1).max().unwrap_or(0) + 1;
    let triples = entries.into_iter().map(|((u, i), r)| (u, i, r)).collect();
    let train = TripletMatrix::new(rows, cols, triples).expect("indices bounded by the computed shape");
    let observations = MaskedObservations::new(train, None).expect("no test split");
    Ok(LoadedTriplets { observations, duplicates })
}

/// Writes entries as 1-based `user item rating` lines.
pub fn write_triplets(path: &Path, m: &TripletMatrix, delimiter: Delimiter) -> Result<(), DataError> {
    let d = delimiter.join();
    let mut out = String::new();
    for (i, j, v) in m.iter() {
        writeln!(out, "{}{d}{}{d}{v}", i + 1, j + 1).expect("write to string");
    }
    write(path, &out)
}

/// Reads rows of numbers with a common width.
pub fn load_dense(path: &Path, delimiter: Delimiter) -> Result<Array2<f64>, DataError> {
    dense_with_lines(path, delimiter).map(|(m, _)| m)
}

/// The matrix plus the source line of each row.
fn dense_with_lines(path: &Path, delimiter: Delimiter) -> Result<(Array2<f64>, Vec<usize>), DataError> {
    let name = path.display().to_string();
    let text = read(path)?;
    let mut lines = Vec::new();
    let mut values = Vec::new();
    let mut width = None;
    let mut rows = 0;
    for (line, raw) in data_lines(&text) {
        let err = |message: String| DataError::Parse { path: name.clone(), line, message };
        let row: Vec<f64> = delimiter
            .split(raw)
            .map(|s| s.parse::<f64>().ok().filter(|v| v.is_finite()).ok_or_else(|| err(format!("`{s}` is not a finite number"))))
            .collect::<Result<_, _>>()?;
        match width {
            None => width = Some(row.len()),
            Some(w) if w != row.len() => return Err(err(format!("expected {w} columns, found {}", row.len()))),
            _ => {}
        }
        values.extend(row);
        lines.push(line);
        rows += 1;
    }
    let width = width.ok_or_else(|| DataError::EmptyData(name.clone()))?;
    Ok((Array2::from_shape_vec((rows, width), values).expect("rectangular rows"), lines))
}

pub fn write_dense(path: &Path, m: &Array2<f64>, delimiter: Delimiter) -> Result<(), DataError> {
    let d = delimiter.join().to_string();
    let mut out = String::new();
    for row in m.rows() {
        let cells: Vec<String> = row.iter().map(f64::to_string).collect();
        out.push_str(&cells.join(&d));
        out.push('\n');
    }
    write(path, &out)
}

/// Reads `label f1 ... fn` rows with 1-based labels into a
/// `features × examples` design; the class count is the largest label.
pub fn load_labeled(path: &Path, delimiter: Delimiter) -> Result<LabeledDesign, DataError> {
    let name = path.display().to_string();
    let (m, lines) = dense_with_lines(path, delimiter)?;
    if m.ncols() < 2 {
        return Err(DataError::Parse { path: name, line: 1, message: "expected a label followed by at least one feature".into() });
    }
    let mut labels = Vec::with_capacity(m.nrows());
    for (k, &l) in m.column(0).iter().enumerate() {
        if l < 1.0 || l.fract() != 0.0 {
            return Err(DataError::Parse { path: name, line: lines[k], message: format!("label `{l}` is not a positive integer") });
        }
        labels.push(l as usize - 1);
    }
    let classes = labels.iter().max().map_or(0, |&c| c + 1).max(2);
    let x = m.slice(ndarray::s![.., 1..]).t().to_owned();
    LabeledDesign::new(x, labels, classes).map_err(|e| DataError::Parse { path: name, line: 1, message: e.to_string() })
}

pub fn write_labeled(path: &Path, data: &LabeledDesign, delimiter: Delimiter) -> Result<(), DataError> {
    let x = data.features();
    let mut m = Array2::zeros((data.examples(), x.nrows() + 1));
    for (k, &l) in data.labels().iter().enumerate() {
        m[[k, 0]] = (l + 1) as f64;
        m.slice_mut(ndarray::s![k, 1..]).assign(&x.column(k));
    }
    write_dense(path, &m, delimiter)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn file(text: &str) -> tempfile::NamedTempFile {
        let f = tempfile::NamedTempFile::new().unwrap();
        std::fs::write(f.path(), text).unwrap();
        f
    }

    #[test]
    fn two_ratings_make_a_two_by_two() {
        let f = file("1 1 5\n2 2 3");
        let t = load_triplets(f.path(), Delimiter::Whitespace).unwrap();
        assert_eq!(t.observations.shape(), (2, 2));
        assert_eq!(t.observations.train().nnz(), 2);
        assert_eq!(t.duplicates, 0);
    }

    #[test]
    fn empty_and_malformed_files_are_rejected() {
        let f = file("# header only\n\n");
        assert!(matches!(load_triplets(f.path(), Delimiter::Whitespace), Err(DataError::EmptyData(_))));
        let f = file("1 1 5\n1 x 3\n");
        assert!(matches!(load_triplets(f.path(), Delimiter::Whitespace), Err(DataError::Parse { line: 2, .. })));
        let f = file("1 1 5\n0 1 3\n");
        assert!(matches!(load_triplets(f.path(), Delimiter::Whitespace), Err(DataError::Parse { line: 2, .. })));
        let f = file("1,1\n");
        assert!(matches!(load_triplets(f.path(), Delimiter::Char(',')), Err(DataError::Parse { line: 1, .. })));
    }

    #[test]
    fn duplicates_keep_the_last_rating() {
        let f = file("1\t2\t4\t881250949\n1\t2\t1\t881250950\n3\t1\t2\t0\n");
        let t = load_triplets(f.path(), Delimiter::Char('\t')).unwrap();
        assert_eq!(t.duplicates, 1);
        assert_eq!(t.observations.shape(), (3, 2));
        assert_eq!(t.observations.train().iter().collect::<Vec<_>>(), vec![(0, 1, 1.0), (2, 0, 2.0)]);
    }

    #[test]
    fn triplets_round_trip() {
        let m = TripletMatrix::new(4, 3, vec![(0, 2, 1.5), (3, 0, -0.25), (1, 1, 1e-17)]).unwrap();
        let f = tempfile::NamedTempFile::new().unwrap();
        write_triplets(f.path(), &m, Delimiter::Char(',')).unwrap();
        let back = load_triplets(f.path(), Delimiter::Char(',')).unwrap();
        let mut want: Vec<_> = m.iter().collect();
        want.sort_by_key(|t| (t.0, t.1));
        assert_eq!(back.observations.train().iter().collect::<Vec<_>>(), want);
    }

    #[test]
    fn dense_and_labeled_round_trip() {
        let x = ndarray::array![[1.0, -2.5], [0.125, 3.0], [7.0, 0.0]];
        let data = LabeledDesign::new(x.clone(), vec![2, 0], 3).unwrap();
        let f = tempfile::NamedTempFile::new().unwrap();
        write_labeled(f.path(), &data, Delimiter::Whitespace).unwrap();
        let back = load_labeled(f.path(), Delimiter::Whitespace).unwrap();
        assert_eq!(back.features(), &x);
        assert_eq!(back.labels(), &[2, 0]);
        let f = file("1 2\n3\n");
        assert!(matches!(load_dense(f.path(), Delimiter::Whitespace), Err(DataError::Parse { line: 2, .. })));
    }
}
