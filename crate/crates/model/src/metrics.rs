use serde::{Deserialize, Serialize};

use crate::error::{ModelError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub rmse: f64,
    pub mae: f64,
    /// `1 − SSE/SST` about the target mean; `None` when the target is constant.
    pub r2: Option<f64>,
}

pub fn evaluate(predictions: &[f64], targets: &[f64]) -> Result<Metrics> {
    if targets.is_empty() || predictions.len() != targets.len() {
        return Err(ModelError::InvalidInput(format!("{} predictions for {} targets", predictions.len(), targets.len())));
    }
    let n = targets.len() as f64;
    let mean = targets.iter().sum::<f64>() / n;
    let sse: f64 = predictions.iter().zip(targets).map(|(p, y)| (p - y) * (p - y)).sum();
    let sae: f64 = predictions.iter().zip(targets).map(|(p, y)| (p - y).abs()).sum();
    let sst: f64 = targets.iter().map(|y| (y - mean) * (y - mean)).sum();
    Ok(Metrics { rmse: (sse / n).sqrt(), mae: sae / n, r2: (sst > 0.0).then(|| 1.0 - sse / sst) })
}

pub fn rmse(predictions: &[f64], targets: &[f64]) -> f64 {
    let sse: f64 = predictions.iter().zip(targets).map(|(p, y)| (p - y) * (p - y)).sum();
    (sse / targets.len() as f64).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn definitions() {
        let m = evaluate(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0]).unwrap();
        assert_eq!((m.rmse, m.mae, m.r2), (0.0, 0.0, Some(1.0)));
        let m = evaluate(&[2.0, 2.0, 2.0], &[1.0, 2.0, 3.0]).unwrap();
        assert_eq!(m.r2, Some(0.0));
        let m = evaluate(&[1.0, 2.0], &[1.0, 4.0]).unwrap();
        assert!((m.rmse - 2f64.sqrt()).abs() < 1e-15);
        assert_eq!(m.mae, 1.0);
        assert_eq!(evaluate(&[1.0, 2.0], &[3.0, 3.0]).unwrap().r2, None);
        assert!(evaluate(&[], &[]).is_err());
    }
}
