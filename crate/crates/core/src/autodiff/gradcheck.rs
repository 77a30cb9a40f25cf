use super::tensor::Tensor;

/// Central finite-difference gradient of `f` at `at`, one element at a time.
///
/// `f` must evaluate the scalar loss from scratch (typically by building a
/// fresh tape), so this stays independent of any backward implementation.
pub fn finite_diff_grad(f: impl Fn(&Tensor) -> f64, at: &Tensor, h: f64) -> Vec<f64> {
    let mut grad = vec![0.0; at.numel()];
    let mut probe = at.clone();
    for i in 0..at.numel() {
        let orig = probe.data()[i];
        probe.data_mut()[i] = orig + h;
        let plus = f(&probe);
        probe.data_mut()[i] = orig - h;
        let minus = f(&probe);
        probe.data_mut()[i] = orig;
        grad[i] = (plus - minus) / (2.0 * h);
    }
    grad
}

/// Largest relative error between two gradient vectors, with an absolute
/// guard for near-zero entries.
pub fn max_rel_err(analytic: &[f64], numeric: &[f64]) -> f64 {
    assert_eq!(analytic.len(), numeric.len());
    analytic
        .iter()
        .zip(numeric)
        .map(|(&a, &n)| (a - n).abs() / a.abs().max(n.abs()).max(1e-4))
        .fold(0.0, f64::max)
}

/// Check an analytic gradient against central finite differences.
///
/// Returns the maximum relative error; `Err` describes the first offending
/// element when the tolerance is exceeded.
pub fn check_gradients(
    f: impl Fn(&Tensor) -> f64,
    at: &Tensor,
    analytic: &[f64],
    h: f64,
    rtol: f64,
) -> Result<f64, String> {
    let numeric = finite_diff_grad(f, at, h);
    let err = max_rel_err(analytic, &numeric);
    if err > rtol {
        for (i, (&a, &n)) in analytic.iter().zip(&numeric).enumerate() {
            let e = (a - n).abs() / a.abs().max(n.abs()).max(1e-4);
            if e > rtol {
                return Err(format!(
                    "gradient mismatch at element {i}: analytic {a}, numeric {n}, rel err {e:.3e}"
                ));
            }
        }
    }
    Ok(err)
}
