use crate::error::{Error, Result};

/// Largest relative error between an analytic gradient and central
/// differences.
///
/// `f` returns the scalar value and its analytic gradient at a point; only
/// the value is used at the perturbed points. Each coordinate contributes
/// `|analytic − numeric| / max(|analytic|, |numeric|, floor)` where `floor`
/// is `1e-3 · max(1, ‖analytic‖∞)`, so coordinates whose true gradient is zero
/// are judged against the gradient scale rather than round-off. When
/// `coords` is given only those coordinates are perturbed.
pub fn finite_diff_check<F>(mut f: F, params: &[f64], step: f64, coords: Option<&[usize]>) -> Result<f64>
where
    F: FnMut(&[f64]) -> Result<(f64, Vec<f64>)>,
{
    if step <= 0.0 || !step.is_finite() {
        return Err(Error::Contract(format!("finite-difference step must be > 0, got {step}")));
    }
    let (value, analytic) = f(params)?;
    if !value.is_finite() {
        return Err(Error::NonFinite("finite_diff_check base value".into()));
    }
    if analytic.len() != params.len() {
        return Err(Error::dim("finite_diff_check", &[&[params.len()], &[analytic.len()]]));
    }
    let all: Vec<usize>;
    let coords = match coords {
        Some(c) => c,
        None => {
            all = (0..params.len()).collect();
            &all
        }
    };
    let floor = 1e-3 * analytic.iter().fold(1.0f64, |m, g| m.max(g.abs()));
    let mut p = params.to_vec();
    let mut worst = 0.0f64;
    for &i in coords {
        let orig = p[i];
        p[i] = orig + step;
        let (plus, _) = f(&p)?;
        p[i] = orig - step;
        let (minus, _) = f(&p)?;
        p[i] = orig;
        let numeric = (plus - minus) / (2.0 * step);
        if !numeric.is_finite() {
            return Err(Error::NonFinite(format!("finite difference at coordinate {i}")));
        }
        let rel = (analytic[i] - numeric).abs() / analytic[i].abs().max(numeric.abs()).max(floor);
        worst = worst.max(rel);
    }
    Ok(worst)
}
