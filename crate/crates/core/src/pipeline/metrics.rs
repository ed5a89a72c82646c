use super::PipelineError;

fn check(predictions: &[f64], actuals: &[f64]) -> Result<(), PipelineError> {
    if predictions.len() != actuals.len() {
        return Err(PipelineError::LengthMismatch(predictions.len(), actuals.len()));
    }
    if actuals.is_empty() {
        return Err(PipelineError::Empty("no entries to score".into()));
    }
    Ok(())
}

/// Mean squared error over all entries.
pub fn mse(predictions: &[f64], actuals: &[f64]) -> Result<f64, PipelineError> {
    check(predictions, actuals)?;
    let sum: f64 = predictions.iter().zip(actuals).map(|(p, a)| (p - a) * (p - a)).sum();
    Ok(sum / actuals.len() as f64)
}

/// Mean absolute percentage error over entries whose actual value is nonzero.
pub fn mape(predictions: &[f64], actuals: &[f64]) -> Result<f64, PipelineError> {
    check(predictions, actuals)?;
    let mut sum = 0.0;
    let mut count = 0usize;
    for (p, a) in predictions.iter().zip(actuals) {
        if *a != 0.0 {
            sum += ((p - a) / a).abs();
            count += 1;
        }
    }
    if count == 0 {
        return Err(PipelineError::Empty("mape: every actual value is zero".into()));
    }
    Ok(sum / count as f64)
}
