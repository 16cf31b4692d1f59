//! Finite-difference verification of analytic gradients.

use super::Tensor;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Compares the analytic gradient of `f` at `x` against central finite
/// differences and returns the maximum relative error over all elements.
///
/// `f` must map a tensor to a one-element loss. The relative error of each
/// element is `|analytic − numeric| / max(|analytic|, |numeric|, 1e-8)`;
/// the floor keeps near-zero gradients from inflating the ratio.
///
/// For trustworthy results call this with `S = f64` and a step around 1e-6:
/// the central difference truncation error is O(eps²) while the round-off
/// error is O(ulp/eps), and f64 leaves a wide window where both are tiny.
pub fn finite_difference_check<S, F>(f: &F, x: &Tensor<S>, eps: f64) -> Result<f64>
where
    S: Scalar,
    F: Fn(&Tensor<S>) -> Result<Tensor<S>>,
{
    if !(eps > 0.0) {
        return Err(Error::usage(format!(
            "finite difference step must be positive, got {eps}"
        )));
    }
    let probe = x.require_grad();
    let loss = f(&probe)?;
    if loss.numel() != 1 {
        return Err(Error::usage(format!(
            "finite_difference_check needs a one-element loss, got shape {:?}",
            loss.shape()
        )));
    }
    loss.backward()?;
    let analytic = probe
        .grad()
        .ok_or_else(|| Error::usage("loss does not depend on the probed tensor"))?;

    let base = x.data().to_vec();
    let mut max_rel = 0.0f64;
    for i in 0..base.len() {
        let mut plus = base.clone();
        plus[i] = S::from_f64(plus[i].to_f64() + eps);
        let mut minus = base.clone();
        minus[i] = S::from_f64(minus[i].to_f64() - eps);
        let lp = f(&Tensor::from_vec(plus, x.shape())?)?.value().to_f64();
        let lm = f(&Tensor::from_vec(minus, x.shape())?)?.value().to_f64();
        let numeric = (lp - lm) / (2.0 * eps);
        let a = analytic[i].to_f64();
        let denom = a.abs().max(numeric.abs()).max(1e-8);
        let rel = (a - numeric).abs() / denom;
        if !rel.is_finite() {
            return Err(Error::numeric(format!(
                "non-finite finite-difference comparison at element {i}: analytic {a}, numeric {numeric}"
            )));
        }
        max_rel = max_rel.max(rel);
    }
    Ok(max_rel)
}
