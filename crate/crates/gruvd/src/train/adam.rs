//! Adam optimizer with bias correction and optional global-norm clipping.
//!
//! Moment buffers live in the same precision as the parameters they track,
//! so checkpointed state round-trips bit-exactly in the 32-bit training
//! configuration.

use std::collections::BTreeMap;

use crate::cell::DenoiseCell;
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Anything with named, visitable parameters. Blanket-implemented for all
/// denoising cells; tests implement it for plain tensor lists.
pub trait ParamSet<S: Scalar> {
    fn visit(&self, f: &mut dyn FnMut(String, &Tensor<S>));
    fn visit_mut(&mut self, f: &mut dyn FnMut(String, &mut Tensor<S>));
}

impl<S: Scalar> ParamSet<S> for dyn DenoiseCell<S> + '_ {
    fn visit(&self, f: &mut dyn FnMut(String, &Tensor<S>)) {
        self.visit_params(f);
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(String, &mut Tensor<S>)) {
        self.visit_params_mut(f);
    }
}

impl<S: Scalar> ParamSet<S> for Vec<(String, Tensor<S>)> {
    fn visit(&self, f: &mut dyn FnMut(String, &Tensor<S>)) {
        for (name, t) in self {
            f(name.clone(), t);
        }
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(String, &mut Tensor<S>)) {
        for (name, t) in self {
            f(name.clone(), t);
        }
    }
}

/// First and second moment estimates for one parameter tensor.
#[derive(Debug, Clone)]
pub(crate) struct Moments<S> {
    pub m: Vec<S>,
    pub v: Vec<S>,
}

pub struct Adam<S: Scalar> {
    beta1: f64,
    beta2: f64,
    eps: f64,
    t: u64,
    slots: BTreeMap<String, Moments<S>>,
}

impl<S: Scalar> Adam<S> {
    pub fn new(beta1: f64, beta2: f64, eps: f64) -> Result<Adam<S>> {
        if !(0.0..1.0).contains(&beta1) || !(0.0..1.0).contains(&beta2) {
            return Err(Error::config(format!(
                "Adam betas must lie in [0, 1), got beta1={beta1}, beta2={beta2}"
            )));
        }
        if !(eps > 0.0) {
            return Err(Error::config(format!(
                "Adam epsilon must be positive, got {eps}"
            )));
        }
        Ok(Adam {
            beta1,
            beta2,
            eps,
            t: 0,
            slots: BTreeMap::new(),
        })
    }

    /// Number of completed optimizer steps.
    pub fn t(&self) -> u64 {
        self.t
    }

    /// One Adam update over every parameter in `params`, reading each
    /// tensor's accumulated gradient (a missing gradient counts as zero).
    /// When `grad_clip` is set and the global gradient norm exceeds it,
    /// all gradients are scaled down to that norm first.
    pub fn step<P: ParamSet<S> + ?Sized>(
        &mut self,
        params: &mut P,
        lr: f64,
        grad_clip: Option<f64>,
    ) -> Result<()> {
        // Pass 1: global gradient norm (accumulated in f64 so 32-bit
        // training cannot overflow the sum of squares).
        let mut norm_sq = 0.0f64;
        params.visit(&mut |_name, t| {
            if let Some(g) = t.grad() {
                for v in g {
                    let v = v.to_f64();
                    norm_sq += v * v;
                }
            }
        });
        if !norm_sq.is_finite() {
            return Err(Error::numeric(format!(
                "gradient norm is not finite at optimizer step {}",
                self.t + 1
            )));
        }
        let norm = norm_sq.sqrt();
        let scale = match grad_clip {
            Some(clip) if norm > clip => clip / norm,
            _ => 1.0,
        };

        self.t += 1;
        // Bias-corrected step size folded into the per-element update:
        //   update = lr * m_hat / (sqrt(v_hat) + eps)
        let bc1 = 1.0 - self.beta1.powf(self.t as f64);
        let bc2 = 1.0 - self.beta2.powf(self.t as f64);
        let b1 = S::from_f64(self.beta1);
        let b2 = S::from_f64(self.beta2);
        let one_m_b1 = S::from_f64(1.0 - self.beta1);
        let one_m_b2 = S::from_f64(1.0 - self.beta2);
        let inv_bc1 = S::from_f64(1.0 / bc1);
        let inv_bc2 = S::from_f64(1.0 / bc2);
        let lr_s = S::from_f64(lr);
        let eps_s = S::from_f64(self.eps);
        let scale_s = S::from_f64(scale);

        let mut failure: Option<Error> = None;
        let slots = &mut self.slots;
        let step_index = self.t;
        params.visit_mut(&mut |name, t| {
            if failure.is_some() {
                return;
            }
            let n = t.numel();
            let slot = slots.entry(name.clone()).or_insert_with(|| Moments {
                m: vec![S::ZERO; n],
                v: vec![S::ZERO; n],
            });
            if slot.m.len() != n {
                failure = Some(Error::shape(
                    "adam_step",
                    format!("moments of length {}", slot.m.len()),
                    format!("parameter '{name}' with {n} elements"),
                ));
                return;
            }
            let grad = t.grad();
            let zero;
            let g: &[S] = match &grad {
                Some(g) => g,
                None => {
                    zero = vec![S::ZERO; n];
                    &zero
                }
            };
            let mut data = t.data().to_vec();
            for i in 0..n {
                let gi = g[i] * scale_s;
                slot.m[i] = b1 * slot.m[i] + one_m_b1 * gi;
                slot.v[i] = b2 * slot.v[i] + one_m_b2 * gi * gi;
                let m_hat = slot.m[i] * inv_bc1;
                let v_hat = slot.v[i] * inv_bc2;
                data[i] -= lr_s * m_hat / (v_hat.sqrt() + eps_s);
            }
            if data.iter().any(|v| !v.is_finite()) {
                failure = Some(Error::numeric(format!(
                    "parameter '{name}' became non-finite at optimizer step {step_index}"
                )));
                return;
            }
            t.set_data(data);
        });
        match failure {
            Some(e) => Err(e),
            None => Ok(()),
        }
    }

    /// Serializes optimizer state as named rank-1 tensors (`<param>.m`,
    /// `<param>.v`), in name order.
    pub(crate) fn export_state(&self) -> Vec<(String, Tensor<S>)> {
        let mut out = Vec::with_capacity(self.slots.len() * 2);
        for (name, slot) in &self.slots {
            let m = Tensor::from_vec(slot.m.clone(), &[slot.m.len()]).expect("flat moment");
            let v = Tensor::from_vec(slot.v.clone(), &[slot.v.len()]).expect("flat moment");
            out.push((format!("{name}.m"), m));
            out.push((format!("{name}.v"), v));
        }
        out
    }

    /// Restores state exported by [`export_state`](Self::export_state).
    pub(crate) fn import_state(
        &mut self,
        t: u64,
        tensors: &[(String, Tensor<S>)],
    ) -> Result<()> {
        self.t = t;
        self.slots.clear();
        for (name, tensor) in tensors {
            let (base, field) = match name.rsplit_once('.') {
                Some(split @ (_, "m" | "v")) => split,
                _ => {
                    return Err(Error::config(format!(
                        "optimizer state holds unrecognized entry '{name}'"
                    )))
                }
            };
            let slot = self.slots.entry(base.to_string()).or_insert_with(|| Moments {
                m: Vec::new(),
                v: Vec::new(),
            });
            let data = tensor.data().to_vec();
            match field {
                "m" => slot.m = data,
                _ => slot.v = data,
            }
        }
        for (name, slot) in &self.slots {
            if slot.m.len() != slot.v.len() || slot.m.is_empty() {
                return Err(Error::config(format!(
                    "optimizer state for '{name}' is incomplete"
                )));
            }
        }
        Ok(())
    }
}
