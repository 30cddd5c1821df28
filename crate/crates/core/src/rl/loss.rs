use super::RlError;

pub const STD_FLOOR: f64 = 1e-8;

/// Batch mean, computed around the first element so a constant batch has
/// mean exactly equal to its value.
pub fn mean(x: &[f64]) -> f64 {
    let x0 = x[0];
    x0 + x.iter().map(|v| v - x0).sum::<f64>() / x.len() as f64
}

/// Population standard deviation.
pub fn std_pop(x: &[f64], mu: f64) -> f64 {
    (x.iter().map(|v| (v - mu) * (v - mu)).sum::<f64>() / x.len() as f64).sqrt()
}

/// `(x - mean) / max(std, 1e-8)` over the whole slice.
pub fn normalize(x: &[f64]) -> Result<Vec<f64>, RlError> {
    if x.len() < 2 {
        return Err(RlError::Shape(format!("cannot normalize a batch of {}", x.len())));
    }
    let mu = mean(x);
    let sd = std_pop(x, mu).max(STD_FLOOR);
    Ok(x.iter().map(|v| (v - mu) / sd).collect())
}

/// Normalizes each group's advantages independently and combines them with weights.
pub fn fuse_advantages(adv1: &[f64], adv2: &[f64], w1: f64, w2: f64) -> Result<Vec<f64>, RlError> {
    if adv1.len() != adv2.len() {
        return Err(RlError::Shape(format!("advantage groups differ: {} vs {}", adv1.len(), adv2.len())));
    }
    let n1 = normalize(adv1)?;
    let n2 = normalize(adv2)?;
    Ok(n1.iter().zip(&n2).map(|(a, b)| w1 * a + w2 * b).collect())
}

/// Mean squared error and its gradient with respect to each value.
pub fn value_loss(values: &[f64], targets: &[f64]) -> (f64, Vec<f64>) {
    let n = values.len() as f64;
    let loss = values.iter().zip(targets).map(|(v, t)| (v - t) * (v - t)).sum::<f64>() / n;
    let grad = values.iter().zip(targets).map(|(v, t)| 2.0 * (v - t) / n).collect();
    (loss, grad)
}

/// Per-sample clipped objective `min(r A, clip(r, 1-eps, 1+eps) A)` and
/// whether the unclipped branch was the one selected.
pub fn clipped_objective(ratio: f64, adv: f64, clip: f64) -> (f64, bool) {
    let unclipped = ratio * adv;
    let clipped = ratio.clamp(1.0 - clip, 1.0 + clip) * adv;
    if unclipped <= clipped {
        (unclipped, true)
    } else {
        (clipped, false)
    }
}

/// Negated mean clipped surrogate and its gradient with respect to each new log-probability.
pub fn surrogate_loss(logp_new: &[f64], logp_old: &[f64], adv: &[f64], clip: f64) -> (f64, Vec<f64>) {
    let n = logp_new.len() as f64;
    let mut loss = 0.0;
    let mut grad = Vec::with_capacity(logp_new.len());
    for i in 0..logp_new.len() {
        let ratio = (logp_new[i] - logp_old[i]).exp();
        let (obj, active) = clipped_objective(ratio, adv[i], clip);
        loss -= obj / n;
        grad.push(if active { -ratio * adv[i] / n } else { 0.0 });
    }
    (loss, grad)
}
