//! Whole-model gradient verification.
//!
//! Runs a short frame sequence through a 64-bit model, backpropagates the
//! training loss, and compares every parameter's analytic gradient against
//! central finite differences evaluated through the very same code paths.
//! This exercises everything at once: convolutions, gate wiring, the
//! fusion step, and gradient flow through the recurrent carry.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::backbone::BlockKind;
use crate::cell::{build_model, run_sequence, Bptt, CellKind, DenoiseCell, FrameInput, ModelConfig};
use crate::error::{Error, Result};
use crate::rng::{mix, SplitMix64};
use crate::tensor::Tensor;
use crate::train::sequence_loss;

/// Problem size for a gradient check. The default is deliberately tiny:
/// finite differences cost two loss evaluations per parameter element.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GradCheckConfig {
    pub cell: CellKind,
    pub channels: usize,
    pub hidden_channels: usize,
    pub num_blocks: usize,
    pub height: usize,
    pub width: usize,
    pub seq_len: usize,
    /// Central-difference step. Small enough that activation kinks are
    /// almost never straddled, large enough to stay clear of rounding.
    pub eps: f64,
    pub seed: u64,
    pub w1: f64,
    pub w2: f64,
}

impl GradCheckConfig {
    pub fn tiny() -> GradCheckConfig {
        GradCheckConfig {
            cell: CellKind::GruVd,
            channels: 1,
            hidden_channels: 4,
            num_blocks: 1,
            height: 6,
            width: 6,
            seq_len: 3,
            eps: 1e-6,
            seed: 1309,
            w1: 0.1,
            w2: 1.0,
        }
    }

    fn model_config(&self) -> ModelConfig {
        ModelConfig {
            cell: self.cell,
            channels: self.channels,
            hidden_channels: self.hidden_channels,
            num_blocks: self.num_blocks,
            block_kind: BlockKind::Plain,
            reduced_update_inputs: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.model_config().validate()?;
        if self.height == 0 || self.width == 0 || self.seq_len == 0 {
            return Err(Error::config(
                "gradient check needs positive height, width, and seq_len",
            ));
        }
        if !(self.eps > 0.0) {
            return Err(Error::config(format!(
                "finite-difference step must be positive, got {}",
                self.eps
            )));
        }
        Ok(())
    }
}

/// Verification result for one parameter tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamCheck {
    pub name: String,
    pub elements: usize,
    pub max_rel_error: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub params: Vec<ParamCheck>,
    pub max_rel_error: f64,
    pub seconds: f64,
}

impl GradCheckReport {
    pub fn passes(&self, tolerance: f64) -> bool {
        self.max_rel_error < tolerance
    }

    /// One line per parameter, worst offender last.
    pub fn table(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("{:<28} {:>8} {:>14}\n", "parameter", "elems", "max rel err"));
        for p in &self.params {
            out.push_str(&format!(
                "{:<28} {:>8} {:>14.3e}\n",
                p.name, p.elements, p.max_rel_error
            ));
        }
        out.push_str(&format!(
            "overall max relative error: {:.3e} ({:.2}s)\n",
            self.max_rel_error, self.seconds
        ));
        out
    }
}

fn overwrite_param(model: &mut dyn DenoiseCell<f64>, target: &str, data: Vec<f64>) {
    let mut payload = Some(data);
    model.visit_params_mut(&mut |name, t| {
        if name == target {
            t.set_data(payload.take().expect("parameter names are unique"));
        }
    });
    assert!(payload.is_none(), "parameter '{target}' not found");
}

/// Checks every parameter gradient of a freshly initialized model against
/// central finite differences of the training loss, in 64-bit.
///
/// `inject_fault` deliberately corrupts one analytic gradient before the
/// comparison — a negative control proving the checker can actually fail.
pub fn check_model_gradients(
    cfg: &GradCheckConfig,
    inject_fault: bool,
) -> Result<GradCheckReport> {
    cfg.validate()?;
    let started = Instant::now();
    let mut model = build_model::<f64>(cfg.model_config(), mix(cfg.seed, 0))?;

    // Fixed synthetic inputs: smooth-ish noisy frames, flat noise level,
    // and independent clean targets.
    let mut rng = SplitMix64::new(mix(cfg.seed, 1));
    let shape = [1, cfg.channels, cfg.height, cfg.width];
    let frames: Vec<FrameInput<f64>> = (0..cfg.seq_len)
        .map(|_| {
            FrameInput::new(
                Tensor::randn(&shape, 0.5, &mut rng),
                Tensor::randn(&[1, 1, cfg.height, cfg.width], 0.02, &mut rng).abs(),
            )
        })
        .collect();
    let clean: Vec<Tensor<f64>> = (0..cfg.seq_len)
        .map(|_| Tensor::randn(&shape, 0.5, &mut rng))
        .collect();

    let loss_value = |model: &dyn DenoiseCell<f64>| -> Result<f64> {
        let outputs = run_sequence(model, &frames, Bptt::Full)?;
        Ok(sequence_loss(&outputs, &clean, cfg.w1, cfg.w2)?.total.value())
    };

    // Analytic pass.
    let outputs = run_sequence(model.as_ref(), &frames, Bptt::Full)?;
    let loss = sequence_loss(&outputs, &clean, cfg.w1, cfg.w2)?;
    loss.total.backward()?;
    let mut analytic: Vec<(String, Vec<f64>)> = Vec::new();
    model.visit_params(&mut |name, t| {
        let g = t.grad().unwrap_or_else(|| vec![0.0; t.numel()]);
        analytic.push((name, g));
    });
    drop(outputs);
    drop(loss);
    model.visit_params_mut(&mut |_, t| t.zero_grad());

    if inject_fault {
        // Corrupt one gradient entry; the finite-difference comparison
        // below must notice.
        if let Some((_, g)) = analytic.first_mut() {
            if let Some(v) = g.first_mut() {
                *v = *v * 2.0 + 1.0;
            }
        }
    }

    // Finite-difference pass, one parameter element at a time.
    let mut report = GradCheckReport {
        params: Vec::with_capacity(analytic.len()),
        max_rel_error: 0.0,
        seconds: 0.0,
    };
    for (name, grads) in &analytic {
        let mut baseline = Vec::new();
        model.visit_params(&mut |n, t| {
            if &n == name {
                baseline = t.data().to_vec();
            }
        });
        assert_eq!(baseline.len(), grads.len());

        let mut numeric = vec![0.0f64; baseline.len()];
        for (i, slot) in numeric.iter_mut().enumerate() {
            let mut plus = baseline.clone();
            plus[i] += cfg.eps;
            overwrite_param(model.as_mut(), name, plus);
            let up = loss_value(model.as_ref())?;

            let mut minus = baseline.clone();
            minus[i] -= cfg.eps;
            overwrite_param(model.as_mut(), name, minus);
            let down = loss_value(model.as_ref())?;

            *slot = (up - down) / (2.0 * cfg.eps);
        }
        overwrite_param(model.as_mut(), name, baseline);

        // Deviations are measured against the largest gradient magnitude
        // in the tensor. An element whose analytic and numeric values are
        // both vanishingly small (pure cancellation) would otherwise
        // divide finite-difference rounding noise by itself and dominate
        // the report without indicating any real defect.
        let scale = grads
            .iter()
            .chain(numeric.iter())
            .fold(1e-8f64, |m, v| m.max(v.abs()));
        let worst = grads
            .iter()
            .zip(&numeric)
            .map(|(a, n)| (a - n).abs() / scale)
            .fold(0.0f64, f64::max);

        report.max_rel_error = report.max_rel_error.max(worst);
        report.params.push(ParamCheck {
            name: name.clone(),
            elements: grads.len(),
            max_rel_error: worst,
        });
    }
    report.seconds = started.elapsed().as_secs_f64();
    Ok(report)
}
