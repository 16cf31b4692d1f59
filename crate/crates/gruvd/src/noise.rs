//! Signal-dependent sensor noise.
//!
//! Real sensor noise grows with scene brightness: shot noise contributes a
//! variance proportional to the signal, readout adds a constant floor. This
//! module models that as a heteroscedastic Gaussian with variance
//! `a·y + b` for clean intensity `y`, provides deterministic sampling for
//! dataset synthesis, and estimates a per-pixel noise level map from the
//! *observed* frame — the map the denoiser receives as an extra input.
//!
//! Noise synthesis never participates in differentiation: sampled tensors
//! are fresh leaves, and gradients stop at them by construction.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::counter_normal;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Intensities are normalized to this range throughout the pipeline; the
/// variance law is anchored at its lower end.
pub const SIGNAL_RANGE: (f64, f64) = (0.0, 1.0);

/// Coefficients of the variance law `var(y) = a·y + b`.
///
/// `a` scales the signal-dependent (shot) term, `b` is the signal-free
/// (readout) floor. Both are in squared normalized-intensity units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseParams {
    pub a: f64,
    pub b: f64,
}

impl NoiseParams {
    /// Validates that both coefficients are finite and non-negative.
    pub fn new(a: f64, b: f64) -> Result<Self> {
        if !a.is_finite() || !b.is_finite() || a < 0.0 || b < 0.0 {
            return Err(Error::config(format!(
                "noise coefficients must be finite and non-negative, got a = {a}, b = {b}"
            )));
        }
        Ok(NoiseParams { a, b })
    }

    /// Standard deviation of the noise at clean intensity `y`.
    pub fn std_at(&self, y: f64) -> f64 {
        noise_variance_at(self, y).sqrt()
    }
}

/// Variance of the noise at clean intensity `y`.
///
/// Intensities below the signal range are clamped to its minimum before the
/// law is applied, so the variance never drops below the readout floor `b`.
#[inline]
pub fn noise_variance_at(params: &NoiseParams, y: f64) -> f64 {
    params.a * y.max(SIGNAL_RANGE.0) + params.b
}

/// Elementwise noise variance `a·y + b` of a clean tensor.
pub fn noise_variance<S: Scalar>(params: &NoiseParams, y: &Tensor<S>) -> Tensor<S> {
    map_values(y, |v| noise_variance_at(params, v))
}

/// Per-pixel noise *level* (standard deviation) estimated from an observed
/// frame `x`, using the observation as a stand-in for the unknown clean
/// signal: `sqrt(max(a·x + b, 0))`.
///
/// Unlike [`noise_variance`], the input is not clamped — an observed value
/// can legitimately sit below the signal range because the noise pushed it
/// there — but the affine result is floored at zero so the square root is
/// always defined.
pub fn std_map<S: Scalar>(params: &NoiseParams, x: &Tensor<S>) -> Tensor<S> {
    map_values(x, |v| (params.a * v + params.b).max(0.0).sqrt())
}

/// Adds heteroscedastic Gaussian noise to a clean tensor.
///
/// Sample `i` (flat index) is `y_i + std(y_i) · z(seed, i)` with
/// [`counter_normal`] providing the standard normal draws. Because each
/// pixel owns its counter index, the realization depends only on `(seed,
/// index)`: re-running with the same seed reproduces the noise exactly, on
/// any thread count, whether frames are sampled together or one at a time.
pub fn add_noise<S: Scalar>(params: &NoiseParams, y: &Tensor<S>, seed: u64) -> Tensor<S> {
    let data = y
        .data()
        .iter()
        .enumerate()
        .map(|(i, &v)| {
            let clean = v.to_f64();
            let sigma = params.std_at(clean);
            S::from_f64(clean + sigma * counter_normal(seed, i as u64))
        })
        .collect();
    Tensor::from_vec(data, y.shape()).expect("shape preserved")
}

/// Like [`add_noise`], but clips the result to `[lo, hi]` — the saturation
/// a real sensor applies at black and full-well levels.
pub fn add_noise_clipped<S: Scalar>(
    params: &NoiseParams,
    y: &Tensor<S>,
    seed: u64,
    lo: f64,
    hi: f64,
) -> Tensor<S> {
    let noisy = add_noise(params, y, seed);
    map_values(&noisy, |v| v.clamp(lo, hi))
}

fn map_values<S: Scalar>(t: &Tensor<S>, f: impl Fn(f64) -> f64) -> Tensor<S> {
    let data = t.data().iter().map(|&v| S::from_f64(f(v.to_f64()))).collect();
    Tensor::from_vec(data, t.shape()).expect("shape preserved")
}

/// One calibrated operating point of a sensor.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IsoEntry {
    pub iso: u32,
    pub a: f64,
    pub b: f64,
}

/// A sensor's calibration: noise coefficients measured at a set of ISO
/// (gain) settings, interpolated for everything in between.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensorProfile {
    pub name: String,
    /// Normalized intensity range the calibration applies to.
    pub signal_range: (f64, f64),
    pub table: Vec<IsoEntry>,
}

impl SensorProfile {
    /// Validates the calibration table: non-empty, positive unique ISO keys,
    /// valid coefficients.
    pub fn validate(&self) -> Result<()> {
        if self.table.is_empty() {
            return Err(Error::config(format!(
                "sensor profile '{}' has an empty calibration table",
                self.name
            )));
        }
        let mut seen = std::collections::HashSet::new();
        for e in &self.table {
            if e.iso == 0 {
                return Err(Error::config(format!(
                    "sensor profile '{}' contains ISO 0; keys must be positive",
                    self.name
                )));
            }
            if !seen.insert(e.iso) {
                return Err(Error::config(format!(
                    "sensor profile '{}' lists ISO {} twice",
                    self.name, e.iso
                )));
            }
            NoiseParams::new(e.a, e.b)?;
        }
        Ok(())
    }

    /// A plausible synthetic sensor used by the bundled datasets: shot
    /// noise grows linearly with gain, the readout floor quadratically.
    pub fn synthetic_default() -> SensorProfile {
        let table = [1600u32, 3200, 6400, 12800, 25600]
            .iter()
            .map(|&iso| {
                let gain = iso as f64 / 1600.0;
                IsoEntry {
                    iso,
                    a: 4.0e-4 * gain,
                    b: 1.0e-4 * gain * gain,
                }
            })
            .collect();
        SensorProfile {
            name: "synthetic-cmos".to_string(),
            signal_range: SIGNAL_RANGE,
            table,
        }
    }
}

/// Noise coefficients at an arbitrary ISO, interpolated from the profile.
///
/// Calibration tables are sparse and the coefficients grow multiplicatively
/// with gain, so interpolation is *geometric*: linear in `ln a` and `ln b`
/// against `ln iso`. Requests outside the calibrated range clamp to the
/// nearest endpoint. If a bracketing coefficient is zero the geometric form
/// is degenerate (it would pin the whole segment to zero), so that
/// coefficient falls back to linear interpolation in `ln iso`.
pub fn lookup_iso(profile: &SensorProfile, iso: u32) -> Result<NoiseParams> {
    profile.validate()?;
    if iso == 0 {
        return Err(Error::config("ISO must be positive"));
    }
    let mut table = profile.table.clone();
    table.sort_by_key(|e| e.iso);

    if let Some(exact) = table.iter().find(|e| e.iso == iso) {
        return NoiseParams::new(exact.a, exact.b);
    }
    let first = table.first().expect("validated non-empty");
    let last = table.last().expect("validated non-empty");
    if iso <= first.iso {
        return NoiseParams::new(first.a, first.b);
    }
    if iso >= last.iso {
        return NoiseParams::new(last.a, last.b);
    }
    let hi_idx = table.iter().position(|e| e.iso > iso).expect("iso < last");
    let (lo, hi) = (&table[hi_idx - 1], &table[hi_idx]);
    let t = ((iso as f64).ln() - (lo.iso as f64).ln()) / ((hi.iso as f64).ln() - (lo.iso as f64).ln());
    let interp = |a: f64, b: f64| {
        if a > 0.0 && b > 0.0 {
            (a.ln() * (1.0 - t) + b.ln() * t).exp()
        } else {
            a * (1.0 - t) + b * t
        }
    };
    NoiseParams::new(interp(lo.a, hi.a), interp(lo.b, hi.b))
}
