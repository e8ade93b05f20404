//! Ordinary least squares with an intercept, solved by Householder QR.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{ModelError, Result};

/// A column is dependent when its QR diagonal is this small relative to its norm.
const RANK_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OlsModel {
    pub feature_names: Vec<String>,
    pub intercept: f64,
    pub coefficients: Vec<f64>,
}

impl OlsModel {
    pub fn predict_row(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.coefficients.len() {
            return Err(ModelError::Shape { expected: self.coefficients.len(), got: x.len() });
        }
        Ok(self.eval(x))
    }

    pub(crate) fn eval(&self, x: &[f64]) -> f64 {
        self.intercept + self.coefficients.iter().zip(x).map(|(b, v)| b * v).sum::<f64>()
    }

    pub fn predict(&self, data: &Dataset) -> Result<Vec<f64>> {
        data.rows().map(|r| self.predict_row(r)).collect()
    }
}

pub fn ols_fit(data: &Dataset) -> Result<OlsModel> {
    let (n, p) = (data.n_rows(), data.n_features());
    if n < p + 1 {
        return Err(ModelError::InvalidInput(format!("{n} rows cannot determine {} coefficients", p + 1)));
    }
    let design = DMatrix::from_fn(n, p + 1, |i, j| if j == 0 { 1.0 } else { data.value(i, j - 1) });
    let norms: Vec<f64> = design.column_iter().map(|c| c.norm()).collect();
    let qr = design.qr();
    let r = qr.r();
    let offending: Vec<String> = (0..=p)
        .filter(|&j| r[(j, j)].abs() <= RANK_TOLERANCE * norms[j].max(f64::MIN_POSITIVE))
        .map(|j| if j == 0 { "intercept".to_owned() } else { data.names()[j - 1].clone() })
        .collect();
    if !offending.is_empty() {
        return Err(ModelError::Singular { columns: offending });
    }
    let qty = qr.q().transpose() * DVector::from_column_slice(data.target());
    let beta = r.solve_upper_triangular(&qty).expect("non-zero diagonal checked above");
    Ok(OlsModel { feature_names: data.names().to_vec(), intercept: beta[0], coefficients: beta.iter().skip(1).copied().collect() })
}
