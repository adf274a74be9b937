use std::collections::HashSet;
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::numeric::Matrix;

/// Column name written for labels by [`save_csv`].
pub const LABEL_COLUMN: &str = "label";

/// Observation matrix (rows = observations, columns = signals) with
/// optional binary anomaly labels (1 = anomaly).
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    x: Matrix,
    labels: Option<Vec<u8>>,
    column_names: Vec<String>,
}

impl Dataset {
    pub fn new(x: Matrix, labels: Option<Vec<u8>>, column_names: Vec<String>) -> Result<Self> {
        if column_names.len() != x.cols() {
            return Err(Error::shape(format!(
                "{} column names for {} columns",
                column_names.len(),
                x.cols()
            )));
        }
        let mut seen = HashSet::new();
        if let Some(dup) = column_names.iter().find(|c| !seen.insert(c.as_str())) {
            return Err(Error::Config(format!("duplicate column name {dup:?}")));
        }
        if let Some(l) = &labels {
            if l.len() != x.rows() {
                return Err(Error::shape(format!("{} labels for {} rows", l.len(), x.rows())));
            }
            if l.iter().any(|&v| v > 1) {
                return Err(Error::param("labels must be 0 or 1"));
            }
        }
        Ok(Dataset {
            x,
            labels,
            column_names,
        })
    }

    /// Dataset with generated column names `x0, x1, …`.
    pub fn unnamed(x: Matrix, labels: Option<Vec<u8>>) -> Result<Self> {
        let names = (0..x.cols()).map(|j| format!("x{j}")).collect();
        Dataset::new(x, labels, names)
    }

    pub fn x(&self) -> &Matrix {
        &self.x
    }

    pub fn labels(&self) -> Option<&[u8]> {
        self.labels.as_deref()
    }

    pub fn column_names(&self) -> &[String] {
        &self.column_names
    }

    pub fn n(&self) -> usize {
        self.x.rows()
    }

    pub fn m(&self) -> usize {
        self.x.cols()
    }

    pub fn into_parts(self) -> (Matrix, Option<Vec<u8>>, Vec<String>) {
        (self.x, self.labels, self.column_names)
    }

    pub fn select_rows(&self, indices: &[usize]) -> Dataset {
        Dataset {
            x: self.x.select_rows(indices),
            labels: self
                .labels
                .as_ref()
                .map(|l| indices.iter().map(|&i| l[i]).collect()),
            column_names: self.column_names.clone(),
        }
    }

    /// Appends the rows of `other`; column names must match. Labels are kept
    /// only when both sides carry them.
    pub fn concat(&self, other: &Dataset) -> Result<Dataset> {
        if self.column_names != other.column_names {
            return Err(Error::Config("cannot concatenate datasets with different columns".into()));
        }
        let labels = match (&self.labels, &other.labels) {
            (Some(a), Some(b)) => Some(a.iter().chain(b).copied().collect()),
            _ => None,
        };
        Dataset::new(self.x.vstack(&other.x)?, labels, self.column_names.clone())
    }

    /// SHA-256 over the shape, the IEEE bits of every value and the labels.
    pub fn fingerprint(&self) -> String {
        let mut h = Sha256::new();
        h.update((self.n() as u64).to_le_bytes());
        h.update((self.m() as u64).to_le_bytes());
        for v in self.x.data() {
            h.update(v.to_bits().to_le_bytes());
        }
        if let Some(l) = &self.labels {
            h.update(l);
        }
        let digest = h.finalize();
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// Reads a header-first CSV. `label_column`, when given, is split off into
/// the labels and must hold only 0/1.
pub fn load_csv(path: impl AsRef<Path>, label_column: Option<&str>) -> Result<Dataset> {
    let text = read_text(path.as_ref())?;
    parse_csv(&text, label_column)
}

/// Like [`load_csv`], taking labels from [`LABEL_COLUMN`] when the header has it.
pub fn load_csv_auto(path: impl AsRef<Path>) -> Result<Dataset> {
    let text = read_text(path.as_ref())?;
    let has_label = text
        .lines()
        .next()
        .is_some_and(|h| h.split(',').any(|c| c.trim() == LABEL_COLUMN));
    parse_csv(&text, has_label.then_some(LABEL_COLUMN))
}

fn read_text(path: &Path) -> Result<String> {
    let mut text = String::new();
    File::open(path)
        .and_then(|mut f| f.read_to_string(&mut text))
        .map_err(|e| Error::io(path, e))?;
    Ok(text)
}

pub fn parse_csv(text: &str, label_column: Option<&str>) -> Result<Dataset> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let header: Vec<String> = reader
        .headers()
        .map_err(|e| format_err(1, "<header>", e.to_string()))?
        .iter()
        .map(str::to_string)
        .collect();
    if header.is_empty() || header.iter().all(String::is_empty) {
        return Err(format_err(1, "<header>", "missing header row"));
    }
    let label_idx = match label_column {
        Some(name) => Some(
            header
                .iter()
                .position(|h| h == name)
                .ok_or_else(|| Error::Config(format!("label column {name:?} not found in header")))?,
        ),
        None => None,
    };

    let names: Vec<String> = header
        .iter()
        .enumerate()
        .filter(|(j, _)| Some(*j) != label_idx)
        .map(|(_, h)| h.clone())
        .collect();
    let mut data = Vec::new();
    let mut labels = label_idx.map(|_| Vec::new());
    let mut rows = 0;
    for (i, rec) in reader.records().enumerate() {
        // Line 1 is the header.
        let line = i + 2;
        let rec = rec.map_err(|e| format_err(line, "<record>", e.to_string()))?;
        if rec.len() != header.len() {
            return Err(format_err(
                line,
                "<record>",
                format!("expected {} fields, found {}", header.len(), rec.len()),
            ));
        }
        for (j, cell) in rec.iter().enumerate() {
            let value: f64 = cell
                .parse()
                .map_err(|_| format_err(line, &header[j], format!("cannot parse {cell:?} as a number")))?;
            if !value.is_finite() {
                return Err(format_err(line, &header[j], format!("non-finite value {cell:?}")));
            }
            if Some(j) == label_idx {
                let label = match value {
                    v if v == 0.0 => 0,
                    v if v == 1.0 => 1,
                    _ => return Err(format_err(line, &header[j], format!("label must be 0 or 1, got {cell:?}"))),
                };
                labels.as_mut().expect("label vector exists").push(label);
            } else {
                data.push(value);
            }
        }
        rows += 1;
    }
    let x = Matrix::new(rows, names.len(), data)?;
    Dataset::new(x, labels, names)
}

/// Writes the dataset as CSV; labels, if any, go last under [`LABEL_COLUMN`].
pub fn save_csv(dataset: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let text = to_csv_string(dataset);
    File::create(path)
        .and_then(|mut f| f.write_all(text.as_bytes()))
        .map_err(|e| Error::io(path, e))
}

pub fn to_csv_string(dataset: &Dataset) -> String {
    let mut out = String::new();
    let mut header = dataset.column_names.join(",");
    if dataset.labels.is_some() {
        header.push(',');
        header.push_str(LABEL_COLUMN);
    }
    out.push_str(&header);
    out.push('\n');
    for (i, row) in dataset.x.row_iter().enumerate() {
        let mut first = true;
        for v in row {
            if !first {
                out.push(',');
            }
            first = false;
            // Display for f64 is the shortest string that parses back exactly.
            out.push_str(&v.to_string());
        }
        if let Some(l) = &dataset.labels {
            if !first {
                out.push(',');
            }
            out.push_str(if l[i] == 1 { "1" } else { "0" });
        }
        out.push('\n');
    }
    out
}

fn format_err(row: usize, column: &str, message: impl Into<String>) -> Error {
    Error::Format {
        row,
        column: column.to_string(),
        message: message.into(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numeric::Rng;
    use proptest::prelude::*;

    #[test]
    fn plain_two_by_two() {
        let d = parse_csv("a,b\n1,2\n3,4\n", None).unwrap();
        assert_eq!(d.x().shape(), (2, 2));
        assert_eq!(d.x().data(), &[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(d.column_names(), &["a", "b"]);
        assert!(d.labels().is_none());
    }

    #[test]
    fn label_column_is_split_off() {
        let d = parse_csv("a,y\n1,0\n2,1\n", Some("y")).unwrap();
        assert_eq!(d.x().shape(), (2, 1));
        assert_eq!(d.labels(), Some(&[0u8, 1][..]));
        assert_eq!(d.column_names(), &["a"]);
    }

    #[test]
    fn errors_carry_location() {
        match parse_csv("a,b\n1,2\n3,oops\n", None) {
            Err(Error::Format { row, column, .. }) => {
                assert_eq!(row, 3);
                assert_eq!(column, "b");
            }
            other => panic!("unexpected {other:?}"),
        }
        assert!(matches!(parse_csv("a,b\n1,2\n", Some("y")), Err(Error::Config(_))));
        assert!(matches!(parse_csv("a,y\n1,2\n", Some("y")), Err(Error::Format { .. })));
        assert!(matches!(parse_csv("a,b\n1,\n", None), Err(Error::Format { .. })));
        assert!(matches!(parse_csv("a,b\n1,NaN\n", None), Err(Error::Format { .. })));
        assert!(matches!(parse_csv("a,a\n1,2\n", None), Err(Error::Config(_))));
    }

    #[test]
    fn fingerprint_tracks_content() {
        let a = parse_csv("a,b\n1,2\n", None).unwrap();
        let b = parse_csv("a,b\n1,2.0000000001\n", None).unwrap();
        assert_eq!(a.fingerprint(), a.clone().fingerprint());
        assert_ne!(a.fingerprint(), b.fingerprint());
        assert_eq!(a.fingerprint().len(), 64);
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.csv");
        let mut rng = Rng::new(3);
        let x = Matrix::new(4, 3, (0..12).map(|_| rng.standard_normal() * 1e3).collect()).unwrap();
        let d = Dataset::unnamed(x, Some(vec![0, 1, 1, 0])).unwrap();
        save_csv(&d, &path).unwrap();
        assert_eq!(load_csv(&path, Some(LABEL_COLUMN)).unwrap(), d);
        assert!(matches!(load_csv(dir.path().join("missing.csv"), None), Err(Error::Io { .. })));
    }

    proptest! {
        #[test]
        fn csv_round_trip_is_exact(
            seed in any::<u64>(),
            rows in 0usize..8,
            cols in 1usize..5,
            labelled in any::<bool>(),
        ) {
            let mut rng = Rng::new(seed);
            let data = (0..rows * cols)
                .map(|_| {
                    let exp = rng.uniform_range(-30.0, 30.0);
                    rng.standard_normal() * 10f64.powf(exp)
                })
                .collect();
            let labels = labelled.then(|| (0..rows).map(|_| rng.below(2) as u8).collect());
            let d = Dataset::unnamed(Matrix::new(rows, cols, data).unwrap(), labels).unwrap();
            let back = parse_csv(&to_csv_string(&d), labelled.then_some(LABEL_COLUMN)).unwrap();
            let bits = |m: &Matrix| m.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
            prop_assert_eq!(bits(back.x()), bits(d.x()));
            prop_assert_eq!(back.labels(), d.labels());
            prop_assert_eq!(back.column_names(), d.column_names());
        }
    }
}
