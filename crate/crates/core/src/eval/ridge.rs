use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Closed-form ridge regression with an unpenalized intercept.
#[derive(Clone, Debug, PartialEq)]
pub struct Ridge {
    weights: Vec<f64>,
    intercept: f64,
}

impl Ridge {
    /// Solves `(XcᵀXc + λI) w = Xcᵀyc` on centered training rows. `λ = 0`
    /// falls back to the least-squares pseudo-inverse.
    pub fn fit(cols: &[&[f64]], y: &[f64], rows: &[usize], lambda: f64) -> Result<Self> {
        if !(lambda >= 0.0) || !lambda.is_finite() {
            return Err(Error::Config("ridge lambda must be finite and non-negative".into()));
        }
        if rows.len() < 2 {
            return Err(Error::InvalidInput("ridge needs at least two training rows".into()));
        }
        if cols.is_empty() {
            return Err(Error::Empty("descriptor set"));
        }
        let n = rows.len();
        let m = cols.len();
        let means: Vec<f64> = cols
            .iter()
            .map(|c| rows.iter().map(|&r| c[r]).sum::<f64>() / n as f64)
            .collect();
        let y_mean = rows.iter().map(|&r| y[r]).sum::<f64>() / n as f64;
        let x = DMatrix::from_fn(n, m, |i, j| cols[j][rows[i]] - means[j]);
        let yc = DVector::from_fn(n, |i, _| y[rows[i]] - y_mean);

        let w = if lambda > 0.0 {
            let mut gram = x.transpose() * &x;
            for j in 0..m {
                gram[(j, j)] += lambda;
            }
            let rhs = x.transpose() * &yc;
            gram.cholesky()
                .ok_or_else(|| Error::InvalidInput("ridge system is not positive definite".into()))?
                .solve(&rhs)
        } else {
            x.svd(true, true)
                .solve(&yc, 1e-12)
                .map_err(|e| Error::InvalidInput(format!("least squares failed: {e}")))?
        };
        let weights: Vec<f64> = w.iter().copied().collect();
        let intercept = y_mean - weights.iter().zip(&means).map(|(w, m)| w * m).sum::<f64>();
        Ok(Self { weights, intercept })
    }

    pub fn predict(&self, cols: &[&[f64]], rows: &[usize]) -> Vec<f64> {
        rows.iter()
            .map(|&r| self.intercept + self.weights.iter().zip(cols).map(|(w, c)| w * c[r]).sum::<f64>())
            .collect()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn intercept(&self) -> f64 {
        self.intercept
    }
}
