use super::{Tensor, TensorError};

/// Compares `analytic` against central differences of `f` at `theta`.
///
/// `entries` selects `(tensor index, flat element index)` pairs to probe.
/// Returns the largest `|analytic - numeric| / max(1, |analytic|)`.
pub fn grad_check<F>(
    mut f: F,
    theta: &[Tensor],
    analytic: &[Tensor],
    h: f64,
    entries: &[(usize, usize)],
) -> Result<f64, TensorError>
where
    F: FnMut(&[Tensor]) -> f64,
{
    if h.is_nan() || h <= 0.0 {
        return Err(TensorError::InvalidArgument(format!(
            "step must be positive, got {h}"
        )));
    }
    if analytic.len() != theta.len()
        || analytic
            .iter()
            .zip(theta)
            .any(|(a, t)| a.shape() != t.shape())
    {
        return Err(TensorError::InvalidArgument(
            "analytic gradients must match parameter shapes".into(),
        ));
    }

    let mut probe = theta.to_vec();
    let mut worst: f64 = 0.0;
    for &(t, i) in entries {
        if t >= probe.len() || i >= probe[t].len() {
            return Err(TensorError::IndexOutOfRange {
                op: "grad_check",
                index: i,
                bound: probe.get(t).map_or(0, Tensor::len),
            });
        }
        let orig = probe[t].data()[i];
        probe[t].data_mut()[i] = orig + h;
        let up = f(&probe);
        probe[t].data_mut()[i] = orig - h;
        let down = f(&probe);
        probe[t].data_mut()[i] = orig;
        for v in [up, down] {
            if !v.is_finite() {
                return Err(TensorError::NonFinite(v));
            }
        }
        let numeric = (up - down) / (2.0 * h);
        let a = analytic[t].data()[i];
        worst = worst.max((a - numeric).abs() / a.abs().max(1.0));
    }
    Ok(worst)
}
