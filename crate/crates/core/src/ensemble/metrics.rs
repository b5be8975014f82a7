use super::EnsembleError;

fn check_lengths(pred: &[f64], truth: &[f64]) -> Result<(), EnsembleError> {
    if pred.is_empty() || pred.len() != truth.len() {
        return Err(EnsembleError::Input(format!(
            "metric needs equal non-zero lengths, got {} and {}",
            pred.len(),
            truth.len()
        )));
    }
    Ok(())
}

/// Root mean squared error.
pub fn rmse(pred: &[f64], truth: &[f64]) -> Result<f64, EnsembleError> {
    check_lengths(pred, truth)?;
    let mse = pred.iter().zip(truth).map(|(p, t)| (p - t) * (p - t)).sum::<f64>() / pred.len() as f64;
    Ok(mse.sqrt())
}

/// Symmetric mean absolute percentage error, `2/n Σ |F−A| / (|F|+|A|)`.
///
/// Reported as a fraction in `[0, 2]`; 0.0116 reads as 1.16%.
pub fn smape(pred: &[f64], truth: &[f64]) -> Result<f64, EnsembleError> {
    check_lengths(pred, truth)?;
    let mut sum = 0.0;
    for (t, (f, a)) in pred.iter().zip(truth).enumerate() {
        let denom = f.abs() + a.abs();
        if denom == 0.0 {
            return Err(EnsembleError::Undefined(format!("term {t} has |F|+|A| = 0")));
        }
        sum += (f - a).abs() / denom;
    }
    Ok(2.0 * sum / pred.len() as f64)
}
