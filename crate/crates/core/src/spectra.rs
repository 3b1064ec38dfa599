//! Eigenvalues of sample covariance and correlation matrices.

use std::io::Read;
use std::path::Path;

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// An `n × d` data matrix, rows are observations.
#[derive(Debug, Clone, PartialEq)]
pub struct DataMatrix {
    values: DMatrix<f64>,
}

impl DataMatrix {
    pub fn new(values: DMatrix<f64>) -> Result<Self> {
        if values.nrows() < 2 {
            return Err(Error::Input(format!("need at least 2 observations, got {}", values.nrows())));
        }
        if values.ncols() < 1 {
            return Err(Error::Input("need at least one column".into()));
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            let (r, c) = (pos % values.nrows(), pos / values.nrows());
            return Err(Error::Input(format!("non-finite entry at row {}, column {}", r + 1, c + 1)));
        }
        Ok(Self { values })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let d = rows.first().map(Vec::len).unwrap_or(0);
        if let Some(i) = rows.iter().position(|r| r.len() != d) {
            return Err(Error::Input(format!(
                "ragged input: row {} has {} fields, expected {d}",
                i + 1,
                rows[i].len()
            )));
        }
        Self::new(DMatrix::from_fn(rows.len(), d, |i, j| rows[i][j]))
    }

    /// Reads comma-separated numeric data. With `header`, the first record is
    /// skipped.
    pub fn from_csv_reader<R: Read>(reader: R, header: bool) -> Result<Self> {
        let mut rdr =
            csv::ReaderBuilder::new().has_headers(header).flexible(true).trim(csv::Trim::All).from_reader(reader);
        let mut rows = Vec::new();
        for (i, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let line = i + 1 + header as usize;
            let row = rec
                .iter()
                .enumerate()
                .map(|(j, field)| {
                    field.parse::<f64>().map_err(|_| {
                        Error::Input(format!("line {line}, column {}: cannot parse {field:?} as a number", j + 1))
                    })
                })
                .collect::<Result<Vec<f64>>>()?;
            rows.push(row);
        }
        Self::from_rows(&rows)
    }

    pub fn from_csv_path<P: AsRef<Path>>(path: P, header: bool) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        Self::from_csv_reader(std::io::BufReader::new(file), header)
    }

    pub fn n(&self) -> usize {
        self.values.nrows()
    }

    pub fn d(&self) -> usize {
        self.values.ncols()
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn into_inner(self) -> DMatrix<f64> {
        self.values
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Source {
    #[default]
    Covariance,
    Correlation,
}

/// The `K = min(d, n)` leading eigenvalues of a sample covariance or
/// correlation matrix, in descending order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumResult {
    pub eigenvalues: Vec<f64>,
    pub trace: f64,
    pub centered: bool,
    pub source: Source,
    pub n: usize,
    pub d: usize,
}

impl SpectrumResult {
    pub fn k(&self) -> usize {
        self.eigenvalues.len()
    }

    /// Wraps externally computed eigenvalues. They are sorted descending and
    /// tiny negatives are clamped to zero.
    pub fn from_eigenvalues(mut eigenvalues: Vec<f64>, n: usize, d: usize, source: Source) -> Result<Self> {
        if eigenvalues.len() != n.min(d) {
            return Err(Error::Input(format!(
                "expected min(d, n) = {} eigenvalues, got {}",
                n.min(d),
                eigenvalues.len()
            )));
        }
        if eigenvalues.iter().any(|v| !v.is_finite()) {
            return Err(Error::Input("non-finite eigenvalue".into()));
        }
        clamp_sort(&mut eigenvalues);
        let trace = eigenvalues.iter().sum();
        Ok(Self { eigenvalues, trace, centered: false, source, n, d })
    }
}

fn clamp_sort(values: &mut [f64]) {
    values.iter_mut().for_each(|v| *v = v.max(0.0));
    values.sort_by(|a, b| b.total_cmp(a));
}

/// Descending eigenvalues of `MᵀM / n` restricted to the `min(rows, cols)`
/// leading ones, computed from whichever Gram matrix is smaller.
fn gram_spectrum(m: &DMatrix<f64>, divisor: f64) -> Vec<f64> {
    let (n, d) = m.shape();
    let gram = if d <= n { m.tr_mul(m) } else { m * m.transpose() };
    let gram = gram / divisor;
    let mut values: Vec<f64> = SymmetricEigen::new(gram).eigenvalues.iter().copied().collect();
    clamp_sort(&mut values);
    values.truncate(n.min(d));
    values
}

fn centered_copy(x: &DMatrix<f64>) -> DMatrix<f64> {
    let mut c = x.clone();
    for mut col in c.column_iter_mut() {
        let mean = col.mean();
        col.add_scalar_mut(-mean);
    }
    c
}

/// Eigenvalues of `S = XᵀX / n`, or of the column-centered version when
/// `centered` is set (divisor still `n`).
pub fn covariance_spectrum(x: &DataMatrix, centered: bool) -> SpectrumResult {
    let n = x.n();
    let d = x.d();
    let eigenvalues =
        if centered { gram_spectrum(&centered_copy(&x.values), n as f64) } else { gram_spectrum(&x.values, n as f64) };
    let trace = eigenvalues.iter().sum();
    SpectrumResult { eigenvalues, trace, centered, source: Source::Covariance, n, d }
}

/// Eigenvalues of the sample correlation matrix.
pub fn correlation_spectrum(x: &DataMatrix) -> Result<SpectrumResult> {
    let n = x.n();
    let d = x.d();
    let mut z = centered_copy(&x.values);
    for (j, mut col) in z.column_iter_mut().enumerate() {
        let norm = col.norm();
        if !(norm > 0.0) || norm <= 1e-12 * (n as f64).sqrt() * col.amax().max(f64::MIN_POSITIVE) {
            return Err(Error::Input(format!("column {} has zero variance", j + 1)));
        }
        col /= norm;
    }
    // Columns now have unit norm, so ZᵀZ is the correlation matrix.
    let eigenvalues = gram_spectrum(&z, 1.0);
    let trace = eigenvalues.iter().sum();
    Ok(SpectrumResult { eigenvalues, trace, centered: true, source: Source::Correlation, n, d })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn scaled_identity_has_unit_spectrum() {
        let n = 6;
        let x = DataMatrix::new(DMatrix::identity(n, n) * (n as f64).sqrt()).unwrap();
        let s = covariance_spectrum(&x, false);
        assert_eq!(s.k(), n);
        for v in s.eigenvalues {
            assert_relative_eq!(v, 1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn hand_computed_single_column() {
        let x = DataMatrix::from_rows(&[vec![1.0], vec![3.0]]).unwrap();
        let s = covariance_spectrum(&x, false);
        assert_eq!(s.eigenvalues, vec![5.0]);
        let c = covariance_spectrum(&x, true);
        assert_relative_eq!(c.eigenvalues[0], 1.0, epsilon = 1e-14);
    }

    #[test]
    fn two_by_two_correlation() {
        // Columns with correlation exactly 0.6 by construction.
        let rows = vec![vec![1.0, 1.4], vec![-1.0, 0.2], vec![1.0, -0.2], vec![-1.0, -1.4]];
        let x = DataMatrix::from_rows(&rows).unwrap();
        let s = correlation_spectrum(&x).unwrap();
        assert_relative_eq!(s.eigenvalues[0], 1.6, epsilon = 1e-12);
        assert_relative_eq!(s.eigenvalues[1], 0.4, epsilon = 1e-12);
        assert_relative_eq!(s.trace, 2.0, epsilon = 1e-12);
    }

    #[test]
    fn zero_variance_column_is_named() {
        let x = DataMatrix::from_rows(&[vec![1.0, 2.0], vec![3.0, 2.0], vec![0.0, 2.0]]).unwrap();
        let err = correlation_spectrum(&x).unwrap_err().to_string();
        assert!(err.contains("column 2"), "{err}");
    }

    #[test]
    fn rejects_bad_input() {
        assert!(DataMatrix::from_rows(&[vec![1.0, 2.0], vec![3.0]]).is_err());
        assert!(DataMatrix::from_rows(&[vec![1.0], vec![f64::NAN]]).is_err());
        assert!(DataMatrix::from_rows(&[vec![1.0]]).is_err());
    }

    #[test]
    fn csv_with_and_without_header() {
        let data = "a,b\n1,2\n3,4\n5,7\n";
        let x = DataMatrix::from_csv_reader(data.as_bytes(), true).unwrap();
        assert_eq!((x.n(), x.d()), (3, 2));
        assert!(DataMatrix::from_csv_reader(data.as_bytes(), false).is_err());
        let ragged = "1,2\n3\n";
        assert!(DataMatrix::from_csv_reader(ragged.as_bytes(), false).is_err());
    }
}
