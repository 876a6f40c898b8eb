use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// How 1-MAE and 1-MSE are normalized.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricsMode {
    /// Per-sample means of the absolute and squared errors.
    #[default]
    Mean,
    /// Raw error sums, without dividing by the sample count.
    #[serde(rename = "paper_literal")]
    RawSums,
}

impl std::str::FromStr for MetricsMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mean" => Ok(Self::Mean),
            "paper_literal" => Ok(Self::RawSums),
            other => Err(Error::Config(format!("unknown metrics mode '{other}'"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub one_minus_rae: f64,
    pub one_minus_mae: f64,
    pub one_minus_mse: f64,
}

/// Computes 1-RAE, 1-MAE and 1-MSE in mean form.
pub fn metrics(y_true: &[f64], y_pred: &[f64]) -> Result<Metrics> {
    metrics_with(y_true, y_pred, MetricsMode::Mean)
}

pub fn metrics_with(y_true: &[f64], y_pred: &[f64], mode: MetricsMode) -> Result<Metrics> {
    if y_true.len() != y_pred.len() {
        return Err(Error::LengthMismatch(y_true.len(), y_pred.len()));
    }
    if y_true.len() < 2 {
        return Err(Error::InvalidInput("metrics need at least two samples".into()));
    }
    if y_true.iter().all(|&v| v == y_true[0]) {
        return Err(Error::InvalidInput("relative absolute error is undefined for a constant target".into()));
    }
    let n = y_true.len() as f64;
    let mean = y_true.iter().sum::<f64>() / n;
    let mut abs_err = 0.0;
    let mut sq_err = 0.0;
    let mut abs_dev = 0.0;
    for (&y, &p) in y_true.iter().zip(y_pred) {
        abs_err += (y - p).abs();
        sq_err += (y - p) * (y - p);
        abs_dev += (y - mean).abs();
    }
    let (mae, mse) = match mode {
        MetricsMode::Mean => (abs_err / n, sq_err / n),
        MetricsMode::RawSums => (abs_err, sq_err),
    };
    Ok(Metrics {
        one_minus_rae: 1.0 - abs_err / abs_dev,
        one_minus_mae: 1.0 - mae,
        one_minus_mse: 1.0 - mse,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hand_computed_pair() {
        let m = metrics(&[0.0, 2.0], &[1.0, 1.0]).unwrap();
        assert_eq!(m.one_minus_rae, 0.0);
        assert_eq!(m.one_minus_mae, 0.0);
        assert_eq!(m.one_minus_mse, 0.0);
        let lit = metrics_with(&[0.0, 2.0], &[1.0, 1.0], MetricsMode::RawSums).unwrap();
        assert_eq!(lit.one_minus_mae, -1.0);
        assert_eq!(lit.one_minus_mse, -1.0);
        assert_eq!(lit.one_minus_rae, 0.0);
    }

    #[test]
    fn perfect_and_mean_predictors() {
        let y = [1.0, 4.0, -2.0, 7.5];
        let m = metrics(&y, &y).unwrap();
        assert_eq!((m.one_minus_rae, m.one_minus_mae, m.one_minus_mse), (1.0, 1.0, 1.0));
        let mean = y.iter().sum::<f64>() / 4.0;
        assert!(metrics(&y, &[mean; 4]).unwrap().one_minus_rae.abs() < 1e-15);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(metrics(&[1.0, 1.0], &[1.0, 2.0]).is_err());
        assert!(metrics(&[1.0, 2.0], &[1.0]).is_err());
        assert!(metrics(&[1.0], &[1.0]).is_err());
        assert!("mean".parse::<MetricsMode>().is_ok());
        assert!("sum".parse::<MetricsMode>().is_err());
    }
}
