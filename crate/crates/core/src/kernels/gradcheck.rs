//! Central finite-difference check of the manual backward passes.

use alloc::format;
use alloc::vec::Vec;

use rand::RngExt;

use super::{MacCounter, OpInstance, Tensor};
use crate::error::{Error, Result};
use crate::rng;

/// `|a - b| / max(|a| + |b|, 1e-6)`.
///
/// The floor keeps exactly-zero analytic gradients (key-projection biases,
/// for instance, cancel inside the softmax) from dividing round-off by zero.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / (analytic.abs() + numeric.abs()).max(1e-6)
}

/// Compare analytic gradients of `loss = Σ y ⊙ r` (with a fixed random `r`)
/// against central differences, for every weight and every input element.
/// Returns the largest relative error.
pub fn grad_check(op: &OpInstance, x: &Tensor, eps: f64) -> Result<f64> {
    if !(1e-7..=1e-3).contains(&eps) {
        return Err(Error::Config(format!("finite-difference step {eps} outside [1e-7, 1e-3]")));
    }
    let (y, cache) = op.forward(x, &mut MacCounter::new())?;
    let mut rng = rng::stream(y.len() as u64, "grad_check.projection");
    let projection: Vec<f64> = (0..y.len()).map(|_| rng.random_range(-1.0..1.0)).collect();
    let dy = Tensor::from_vec(y.shape(), projection.clone())?;
    let (dx, grads) = op.backward(&cache, &dy)?;
    if !dx.is_finite() || grads.iter().any(|g| !g.is_finite()) {
        return Err(Error::NonFinite("analytic gradient".into()));
    }

    let loss = |op: &OpInstance, x: &Tensor| -> Result<f64> {
        let y = op.apply(x, &mut MacCounter::new())?;
        Ok(y.data().iter().zip(&projection).map(|(a, b)| a * b).sum())
    };
    let mut worst: f64 = 0.0;
    let mut track = |analytic: f64, plus: f64, minus: f64| -> Result<()> {
        let numeric = (plus - minus) / (2.0 * eps);
        if !numeric.is_finite() {
            return Err(Error::NonFinite("numeric gradient".into()));
        }
        worst = worst.max(relative_error(analytic, numeric));
        Ok(())
    };

    let mut probe = op.clone();
    for (p, grad) in grads.iter().enumerate() {
        for i in 0..grad.len() {
            let original = probe.params_mut()[p].data()[i];
            probe.params_mut()[p].data_mut()[i] = original + eps;
            let plus = loss(&probe, x)?;
            probe.params_mut()[p].data_mut()[i] = original - eps;
            let minus = loss(&probe, x)?;
            probe.params_mut()[p].data_mut()[i] = original;
            track(grad.data()[i], plus, minus)?;
        }
    }
    let mut xp = x.clone();
    for i in 0..x.len() {
        let original = x.data()[i];
        xp.data_mut()[i] = original + eps;
        let plus = loss(op, &xp)?;
        xp.data_mut()[i] = original - eps;
        let minus = loss(op, &xp)?;
        xp.data_mut()[i] = original;
        track(dx.data()[i], plus, minus)?;
    }
    Ok(worst)
}
