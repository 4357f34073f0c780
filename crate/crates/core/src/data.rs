//! Tabular input and the location-scale preprocessing of each series.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnTransform {
    pub name: String,
    pub median: f64,
    /// Minimum of the median-scaled column.
    pub min: f64,
    /// Positive shift added after subtracting `min`.
    pub epsilon: f64,
}

impl ColumnTransform {
    pub fn forward(&self, x: f64) -> f64 {
        x / self.median - self.min + self.epsilon
    }

    pub fn inverse(&self, y: f64) -> f64 {
        (y - self.epsilon + self.min) * self.median
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub source: Option<String>,
    pub dropped_rows: usize,
    pub preprocessing: Vec<ColumnTransform>,
    pub log: Vec<String>,
}

/// `n × d` observations, row-major, with column labels. The last column is
/// the reference coordinate of the log-ratios.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
    pub provenance: Provenance,
}

impl Dataset {
    pub fn new(columns: Vec<String>, rows: Vec<Vec<f64>>) -> Result<Self> {
        if columns.is_empty() {
            return Err(Error::domain("dataset needs at least one column"));
        }
        if let Some(row) = rows.iter().find(|r| r.len() != columns.len()) {
            return Err(Error::domain(format!(
                "row of length {} in a dataset with {} columns",
                row.len(),
                columns.len()
            )));
        }
        Ok(Dataset {
            columns,
            rows,
            provenance: Provenance::default(),
        })
    }

    pub fn n(&self) -> usize {
        self.rows.len()
    }

    pub fn d(&self) -> usize {
        self.columns.len()
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        self.rows.iter().map(|r| r[j]).collect()
    }
}

#[derive(Debug, Clone, Default)]
pub struct ColumnSpec {
    /// Columns to keep, in order; all columns when empty.
    pub columns: Vec<String>,
    /// Column moved to the last (reference) position.
    pub reference: Option<String>,
    pub delimiter: u8,
}

impl ColumnSpec {
    pub fn all() -> Self {
        ColumnSpec {
            delimiter: b',',
            ..Default::default()
        }
    }
}

/// Reads a delimited file with a header row. Rows with a missing or
/// non-numeric selected entry are dropped and counted.
pub fn load_csv(path: impl AsRef<Path>, spec: &ColumnSpec) -> Result<Dataset> {
    let path = path.as_ref();
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(if spec.delimiter == 0 { b',' } else { spec.delimiter })
        .trim(csv::Trim::All)
        .flexible(true)
        .from_path(path)
        .map_err(|e| Error::file(path, e))?;
    let header: Vec<String> = reader.headers().map_err(|e| Error::file(path, e))?.iter().map(str::to_string).collect();

    let mut names: Vec<String> = if spec.columns.is_empty() {
        header.clone()
    } else {
        spec.columns.clone()
    };
    if let Some(r) = &spec.reference {
        if !names.contains(r) {
            names.push(r.clone());
        }
        names.retain(|c| c != r);
        names.push(r.clone());
    }
    let idx: Vec<usize> = names
        .iter()
        .map(|c| {
            header.iter().position(|h| h == c).ok_or_else(|| Error::MissingColumn {
                name: c.clone(),
                available: header.clone(),
            })
        })
        .collect::<Result<_>>()?;

    let mut rows = Vec::new();
    let mut dropped = 0usize;
    for rec in reader.records() {
        let rec = rec.map_err(|e| Error::file(path, e))?;
        let parsed: Option<Vec<f64>> = idx
            .iter()
            .map(|&i| rec.get(i).and_then(|s| s.parse::<f64>().ok()).filter(|x| x.is_finite()))
            .collect();
        match parsed {
            Some(row) => rows.push(row),
            None => dropped += 1,
        }
    }
    let source = path.display().to_string();
    if rows.is_empty() {
        return Err(Error::NoRows(source));
    }
    if dropped > 0 {
        log::info!("{source}: dropped {dropped} rows with missing or non-numeric entries");
    }
    let mut ds = Dataset::new(names, rows)?;
    ds.provenance = Provenance {
        source: Some(source.clone()),
        dropped_rows: dropped,
        preprocessing: Vec::new(),
        log: vec![format!("loaded {} rows from {source}, dropped {dropped}", ds.n())],
    };
    Ok(ds)
}

pub fn write_csv(path: impl AsRef<Path>, ds: &Dataset) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(&ds.columns)?;
    for row in &ds.rows {
        w.write_record(row.iter().map(|x| x.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

fn median(x: &[f64]) -> f64 {
    let mut s = x.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len();
    if n % 2 == 1 {
        s[n / 2]
    } else {
        0.5 * (s[n / 2 - 1] + s[n / 2])
    }
}

/// Divides each column by its median, subtracts the resulting minimum, and
/// adds `ε`, half the smallest positive shifted value, so that every value
/// is strictly positive.
pub fn preprocess(ds: &Dataset) -> Result<Dataset> {
    if ds.n() == 0 {
        return Err(Error::NoRows("dataset".into()));
    }
    let mut transforms = Vec::with_capacity(ds.d());
    for (j, name) in ds.columns.iter().enumerate() {
        let col = ds.column(j);
        let med = median(&col);
        if med == 0.0 {
            return Err(Error::ZeroMedian(name.clone()));
        }
        if med < 0.0 {
            return Err(Error::domain(format!("column `{name}` has a negative median")));
        }
        let scaled: Vec<f64> = col.iter().map(|x| x / med).collect();
        let min = scaled.iter().cloned().fold(f64::INFINITY, f64::min);
        let smallest = scaled
            .iter()
            .map(|x| x - min)
            .filter(|&x| x > 0.0)
            .fold(f64::INFINITY, f64::min);
        if !smallest.is_finite() {
            return Err(Error::DegenerateColumn(name.clone()));
        }
        transforms.push(ColumnTransform {
            name: name.clone(),
            median: med,
            min,
            epsilon: 0.5 * smallest,
        });
    }
    let mut out = apply_preprocessing(ds, &transforms)?;
    out.provenance.log.push(format!(
        "preprocessed {} columns: median scaling, minimum subtraction, positive shift",
        ds.d()
    ));
    Ok(out)
}

/// Applies stored transforms, e.g. to new data under a fitted model.
pub fn apply_preprocessing(ds: &Dataset, transforms: &[ColumnTransform]) -> Result<Dataset> {
    if transforms.len() != ds.d() {
        return Err(Error::domain(format!(
            "{} column transforms for {} columns",
            transforms.len(),
            ds.d()
        )));
    }
    let rows = ds
        .rows
        .iter()
        .map(|r| r.iter().zip(transforms).map(|(&x, t)| t.forward(x)).collect())
        .collect();
    let mut out = Dataset::new(ds.columns.clone(), rows)?;
    out.provenance = ds.provenance.clone();
    out.provenance.preprocessing = transforms.to_vec();
    Ok(out)
}

/// Undoes [`preprocess`].
pub fn invert_preprocessing(ds: &Dataset) -> Result<Dataset> {
    let t = &ds.provenance.preprocessing;
    if t.len() != ds.d() {
        return Err(Error::domain("dataset carries no preprocessing record"));
    }
    let rows = ds
        .rows
        .iter()
        .map(|r| r.iter().zip(t).map(|(&y, t)| t.inverse(y)).collect())
        .collect();
    let mut out = Dataset::new(ds.columns.clone(), rows)?;
    out.provenance = ds.provenance.clone();
    out.provenance.preprocessing.clear();
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write(contents: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(contents.as_bytes()).unwrap();
        f
    }

    #[test]
    fn preprocess_example() {
        let ds = Dataset::new(vec!["a".into()], vec![vec![1.0], vec![2.0], vec![3.0]]).unwrap();
        let p = preprocess(&ds).unwrap();
        assert_eq!(p.column(0), vec![0.25, 0.75, 1.25]);
        let t = &p.provenance.preprocessing[0];
        assert_eq!((t.median, t.min, t.epsilon), (2.0, 0.5, 0.25));
        let back = invert_preprocessing(&p).unwrap();
        for (x, y) in back.column(0).iter().zip(ds.column(0)) {
            assert!((x - y).abs() <= 1e-12 * y.abs());
        }
    }

    #[test]
    fn preprocess_round_trip_on_awkward_values() {
        let rows: Vec<Vec<f64>> = (0..50).map(|i| vec![0.137 * i as f64 + 3.3, (i as f64).exp().sqrt()]).collect();
        let ds = Dataset::new(vec!["x".into(), "y".into()], rows).unwrap();
        let p = preprocess(&ds).unwrap();
        assert!(p.rows.iter().flatten().all(|&v| v > 0.0));
        let back = invert_preprocessing(&p).unwrap();
        for (a, b) in back.rows.iter().flatten().zip(ds.rows.iter().flatten()) {
            assert!((a - b).abs() <= 1e-12 * b.abs().max(1.0));
        }
    }

    #[test]
    fn preprocess_errors() {
        let c = Dataset::new(vec!["c".into()], vec![vec![4.0]; 5]).unwrap();
        assert!(matches!(preprocess(&c), Err(Error::DegenerateColumn(_))));
        let z = Dataset::new(vec!["z".into()], vec![vec![0.0], vec![0.0], vec![1.0]]).unwrap();
        assert!(matches!(preprocess(&z), Err(Error::ZeroMedian(_))));
    }

    #[test]
    fn load_drops_incomplete_rows() {
        let f = write("a,b,c\n1,2,3\n4,,6\n7,8,9\n1,x,2\n");
        let ds = load_csv(f.path(), &ColumnSpec::all()).unwrap();
        assert_eq!((ds.n(), ds.d()), (2, 3));
        assert_eq!(ds.provenance.dropped_rows, 2);
        assert_eq!(ds.rows[1], vec![7.0, 8.0, 9.0]);
    }

    #[test]
    fn load_selects_and_reorders() {
        let f = write("a;b;c\n1;2;3\n4;5;6\n");
        let spec = ColumnSpec {
            columns: vec!["c".into(), "a".into(), "b".into()],
            reference: Some("a".into()),
            delimiter: b';',
        };
        let ds = load_csv(f.path(), &spec).unwrap();
        assert_eq!(ds.columns, vec!["c", "b", "a"]);
        assert_eq!(ds.rows[0], vec![3.0, 2.0, 1.0]);
    }

    #[test]
    fn load_reports_missing_columns() {
        let f = write("a,b\n1,2\n");
        let spec = ColumnSpec {
            columns: vec!["q".into()],
            ..ColumnSpec::all()
        };
        let err = load_csv(f.path(), &spec).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("q") && msg.contains("a, b"), "{msg}");
        let f = write("a,b\n,\n");
        assert!(matches!(load_csv(f.path(), &ColumnSpec::all()), Err(Error::NoRows(_))));
        assert!(load_csv("/nonexistent/file.csv", &ColumnSpec::all()).is_err());
    }

    #[test]
    fn a_1131_row_file() {
        let mut s = String::from("x1,x2,x3\n");
        for i in 0..1131 {
            s.push_str(&format!("{},{},{}\n", i + 1, 2 * i + 1, 3 * i + 2));
        }
        let f = write(&s);
        let ds = load_csv(f.path(), &ColumnSpec::all()).unwrap();
        assert_eq!((ds.d(), ds.n()), (3, 1131));
    }
}
