/// Mean squared error over all elements.
pub fn mse(prediction: &[f64], target: &[f64]) -> f64 {
    debug_assert_eq!(prediction.len(), target.len());
    if prediction.is_empty() {
        return 0.0;
    }
    prediction
        .iter()
        .zip(target)
        .map(|(p, t)| (p - t) * (p - t))
        .sum::<f64>()
        / prediction.len() as f64
}

/// Gradient of [`mse`] with respect to `prediction`.
pub fn mse_grad(prediction: &[f64], target: &[f64]) -> Vec<f64> {
    let k = 2.0 / prediction.len().max(1) as f64;
    prediction.iter().zip(target).map(|(p, t)| k * (p - t)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_inputs_have_zero_loss() {
        let x = [1.5, -2.0, 0.25];
        assert_eq!(mse(&x, &x), 0.0);
        assert!(mse_grad(&x, &x).iter().all(|g| *g == 0.0));
    }

    #[test]
    fn hand_values() {
        assert_eq!(mse(&[1.0, 3.0], &[0.0, 0.0]), 5.0);
        assert_eq!(mse_grad(&[1.0, 3.0], &[0.0, 0.0]), vec![1.0, 3.0]);
    }
}
