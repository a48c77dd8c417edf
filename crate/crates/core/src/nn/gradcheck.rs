use super::{cross_entropy_grad, Network, NnError, Tensor};

/// Unweighted cross-entropy of one sample with dropout off.
pub fn sample_loss<N: Network>(model: &N, x: &Tensor, label: usize) -> Result<f64, NnError> {
    Ok(cross_entropy_grad(&model.predict(x)?, label, 1.0).0)
}

/// Backpropagated gradient of [`sample_loss`].
pub fn analytic_gradients<N: Network>(model: &N, x: &Tensor, label: usize) -> Result<Vec<Tensor>, NnError> {
    let (probs, cache) = model.forward(x, None)?;
    let (_, dprobs) = cross_entropy_grad(&probs, label, 1.0);
    let mut grads = model.zero_grads();
    model.backward(&cache, &dprobs, &mut grads);
    Ok(grads)
}

/// Central differences of [`sample_loss`] for every parameter.
pub fn numeric_gradients<N: Network>(model: &N, x: &Tensor, label: usize, eps: f64) -> Result<Vec<Tensor>, NnError> {
    let mut probe = model.clone();
    let mut out = model.zero_grads();
    for (p, grad) in out.iter_mut().enumerate() {
        for i in 0..grad.len() {
            let orig = probe.params_mut()[p].data()[i];
            probe.params_mut()[p].data_mut()[i] = orig + eps;
            let plus = sample_loss(&probe, x, label)?;
            probe.params_mut()[p].data_mut()[i] = orig - eps;
            let minus = sample_loss(&probe, x, label)?;
            probe.params_mut()[p].data_mut()[i] = orig;
            grad.data_mut()[i] = (plus - minus) / (2.0 * eps);
        }
    }
    Ok(out)
}

/// Largest `|a - n| / max(|a|, |n|, 1e-8)` over all entries.
pub fn compare_gradients(analytic: &[Tensor], numeric: &[Tensor]) -> f64 {
    analytic
        .iter()
        .zip(numeric)
        .flat_map(|(a, n)| a.data().iter().zip(n.data()))
        .map(|(a, n)| (a - n).abs() / a.abs().max(n.abs()).max(1e-8))
        .fold(0.0, f64::max)
}

pub fn gradient_check<N: Network>(model: &N, x: &Tensor, label: usize, eps: f64) -> Result<f64, NnError> {
    let a = analytic_gradients(model, x, label)?;
    let n = numeric_gradients(model, x, label, eps)?;
    Ok(compare_gradients(&a, &n))
}
