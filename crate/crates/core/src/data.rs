//! Observation matrices with named columns.

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// A dense n x p observation matrix; rows are i.i.d. samples, columns are
/// named covariates.
#[derive(Debug, Clone, PartialEq)]
pub struct DataMatrix {
    values: DMatrix<f64>,
    col_names: Vec<String>,
}

impl DataMatrix {
    /// Wrap a matrix with explicit column names.
    pub fn new(values: DMatrix<f64>, col_names: Vec<String>) -> Result<Self> {
        if values.nrows() == 0 || values.ncols() == 0 {
            return Err(Error::InvalidDimension(format!(
                "data matrix must be at least 1x1, got {}x{}",
                values.nrows(),
                values.ncols()
            )));
        }
        if col_names.len() != values.ncols() {
            return Err(Error::InvalidDimension(format!(
                "{} column names for {} columns",
                col_names.len(),
                values.ncols()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::DegenerateInput(
                "data matrix contains non-finite entries".into(),
            ));
        }
        Ok(Self { values, col_names })
    }

    /// Wrap a matrix with generated names `x1..xp`.
    pub fn from_matrix(values: DMatrix<f64>) -> Result<Self> {
        let names = (1..=values.ncols()).map(|j| format!("x{j}")).collect();
        Self::new(values, names)
    }

    pub fn nrows(&self) -> usize {
        self.values.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.values.ncols()
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn col_names(&self) -> &[String] {
        &self.col_names
    }

    pub fn name_of(&self, j: usize) -> &str {
        &self.col_names[j]
    }

    /// Submatrix of the given columns, in the given order.
    pub fn select_columns(&self, indices: &[usize]) -> Result<DMatrix<f64>> {
        for &j in indices {
            if j >= self.ncols() {
                return Err(Error::InvalidDimension(format!(
                    "column index {} out of range (p = {})",
                    j,
                    self.ncols()
                )));
            }
        }
        Ok(self.values.select_columns(indices.iter()))
    }

    /// Index of a column by name.
    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.col_names.iter().position(|c| c == name)
    }
}

/// Select columns of a plain matrix, preserving order.
pub(crate) fn select_columns(m: &DMatrix<f64>, indices: &[usize]) -> DMatrix<f64> {
    m.select_columns(indices.iter())
}

/// Horizontally stack blocks, skipping empty ones.
pub(crate) fn hstack(blocks: &[&DMatrix<f64>]) -> DMatrix<f64> {
    let nonempty: Vec<&DMatrix<f64>> = blocks.iter().copied().filter(|b| b.ncols() > 0).collect();
    let nrows = nonempty.first().map_or(0, |b| b.nrows());
    let ncols: usize = nonempty.iter().map(|b| b.ncols()).sum();
    let mut out = DMatrix::zeros(nrows, ncols);
    let mut at = 0;
    for b in nonempty {
        out.view_mut((0, at), (b.nrows(), b.ncols())).copy_from(b);
        at += b.ncols();
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_non_finite_and_bad_names() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, f64::NAN, 4.0]);
        assert!(DataMatrix::from_matrix(m).is_err());

        let m = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 4.0]);
        assert!(DataMatrix::new(m, vec!["a".into()]).is_err());
    }

    #[test]
    fn selects_columns_in_order() {
        let m = DMatrix::from_row_slice(2, 3, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let d = DataMatrix::from_matrix(m).unwrap();
        let s = d.select_columns(&[2, 0]).unwrap();
        assert_eq!(s, DMatrix::from_row_slice(2, 2, &[3.0, 1.0, 6.0, 4.0]));
        assert_eq!(d.column_index("x2"), Some(1));
    }
}
