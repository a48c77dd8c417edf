use super::{NnError, Tensor};

/// Probabilities are clamped to at least this before taking the log.
pub const PROB_FLOOR: f64 = 1e-12;

/// `-w * ln p_label` for one sample and its gradient with respect to the
/// probabilities.
pub fn cross_entropy_grad(probs: &[f64], label: usize, weight: f64) -> (f64, Vec<f64>) {
    let p = probs[label];
    if p.is_nan() {
        return (f64::NAN, vec![f64::NAN; probs.len()]);
    }
    let mut grad = vec![0.0; probs.len()];
    if p > PROB_FLOOR {
        grad[label] = -weight / p;
    }
    (-weight * p.max(PROB_FLOOR).ln(), grad)
}

/// Batch mean of `-w_label * ln p_label` over the rows of `probs`
/// (`[N, K]`), with the gradient of that mean.
pub fn weighted_cross_entropy(
    probs: &Tensor,
    labels: &[usize],
    class_weights: Option<&[f64]>,
) -> Result<(f64, Tensor), NnError> {
    let (n, k) = probs.dims2()?;
    if labels.len() != n || n == 0 {
        return Err(NnError::ShapeMismatch(format!("{n} probability rows for {} labels", labels.len())));
    }
    if let Some(w) = class_weights {
        if w.len() != k {
            return Err(NnError::ShapeMismatch(format!("{} class weights for {k} classes", w.len())));
        }
    }
    if let Some(bad) = labels.iter().find(|l| **l >= k) {
        return Err(NnError::ShapeMismatch(format!("label {bad} out of range for {k} classes")));
    }
    let mut total = 0.0;
    let mut grad = Tensor::zeros(&[n, k]);
    for (row, &label) in labels.iter().enumerate() {
        let w = class_weights.map_or(1.0, |w| w[label]);
        let (loss, g) = cross_entropy_grad(&probs.data()[row * k..(row + 1) * k], label, w);
        total += loss;
        for (dst, src) in grad.data_mut()[row * k..(row + 1) * k].iter_mut().zip(g) {
            *dst = src / n as f64;
        }
    }
    Ok((total / n as f64, grad))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perfect_predictions_cost_nothing() {
        let p = Tensor::from_rows(&[[1.0, 0.0], [0.0, 1.0]]).unwrap();
        let (loss, _) = weighted_cross_entropy(&p, &[0, 1], None).unwrap();
        assert_eq!(loss, 0.0);
    }

    #[test]
    fn uniform_nine_way_is_ln9() {
        let p = Tensor::from_rows(&[[1.0 / 9.0; 9]]).unwrap();
        let (loss, _) = weighted_cross_entropy(&p, &[4], None).unwrap();
        assert!((loss - 9f64.ln()).abs() < 1e-12);
        assert!((loss - 2.1972).abs() < 1e-4);
    }

    #[test]
    fn weighted_batch_by_hand() {
        let p = Tensor::from_rows(&[[0.8, 0.2], [0.3, 0.7], [0.6, 0.4]]).unwrap();
        let (loss, grad) = weighted_cross_entropy(&p, &[0, 1, 1], Some(&[2.0, 1.0])).unwrap();
        let expect = (-2.0 * 0.8f64.ln() - 0.7f64.ln() - 0.4f64.ln()) / 3.0;
        assert!((loss - expect).abs() < 1e-12);
        assert!((grad.data()[0] - (-2.0 / 0.8 / 3.0)).abs() < 1e-12);
        assert_eq!(grad.data()[1], 0.0);
        assert!((grad.data()[5] - (-1.0 / 0.4 / 3.0)).abs() < 1e-12);
    }

    #[test]
    fn zero_probability_is_clamped() {
        let (loss, grad) = cross_entropy_grad(&[1.0, 0.0], 1, 1.0);
        assert!((loss - 12.0 * 10f64.ln()).abs() < 1e-9);
        assert!(grad.iter().all(|g| g.is_finite()));
    }

    #[test]
    fn bad_labels_are_rejected() {
        let p = Tensor::from_rows(&[[0.5, 0.5]]).unwrap();
        assert!(weighted_cross_entropy(&p, &[2], None).is_err());
        assert!(weighted_cross_entropy(&p, &[0, 1], None).is_err());
    }
}
