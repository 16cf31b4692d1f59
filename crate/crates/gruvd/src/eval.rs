//! Quality metrics and the evaluation runner.
//!
//! Metrics are always computed in 64-bit, whatever precision the model ran
//! in. PSNR uses a documented 100 dB cap for a zero MSE; SSIM is the
//! single-scale variant with an 11×11 Gaussian window (σ = 1.5,
//! K1 = 0.01, K2 = 0.03) over valid window positions, computed per channel
//! and then averaged.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rayon::prelude::*;

use crate::cell::{init_state, run_sequence, Bptt, DenoiseCell, FrameInput};
use crate::data::EvalSequence;
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Mean squared error between two equal-shape tensors, in f64.
pub fn mse<S: Scalar>(a: &Tensor<S>, b: &Tensor<S>) -> Result<f64> {
    if a.shape() != b.shape() {
        return Err(Error::shape(
            "mse",
            format!("{:?}", a.shape()),
            format!("{:?}", b.shape()),
        ));
    }
    let n = a.numel() as f64;
    let sum: f64 = a
        .data()
        .iter()
        .zip(b.data())
        .map(|(&x, &y)| {
            let d = x.to_f64() - y.to_f64();
            d * d
        })
        .sum();
    Ok(sum / n)
}

/// Cap reported when the two inputs are identical (MSE = 0).
pub const PSNR_CAP_DB: f64 = 100.0;

/// Peak signal-to-noise ratio in dB: `10·log10(peak² / MSE)`, capped at
/// [`PSNR_CAP_DB`] when the inputs are identical.
pub fn psnr<S: Scalar>(a: &Tensor<S>, b: &Tensor<S>, peak: f64) -> Result<f64> {
    if !(peak > 0.0) {
        return Err(Error::config(format!("psnr peak must be positive, got {peak}")));
    }
    let e = mse(a, b)?;
    if e == 0.0 {
        return Ok(PSNR_CAP_DB);
    }
    Ok(10.0 * (peak * peak / e).log10())
}

const SSIM_WINDOW: usize = 11;
const SSIM_SIGMA: f64 = 1.5;
const SSIM_K1: f64 = 0.01;
const SSIM_K2: f64 = 0.03;

fn gaussian_kernel() -> [f64; SSIM_WINDOW] {
    let mut k = [0.0; SSIM_WINDOW];
    let mid = (SSIM_WINDOW / 2) as f64;
    let mut sum = 0.0;
    for (i, v) in k.iter_mut().enumerate() {
        let x = i as f64 - mid;
        *v = (-x * x / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp();
        sum += *v;
    }
    for v in &mut k {
        *v /= sum;
    }
    k
}

/// Valid-mode separable blur with an 11-tap kernel: [h, w] → [h−10, w−10].
fn valid_blur(src: &[f64], h: usize, w: usize, k: &[f64; SSIM_WINDOW]) -> Vec<f64> {
    let ow = w - (SSIM_WINDOW - 1);
    let oh = h - (SSIM_WINDOW - 1);
    let mut rows = vec![0.0; h * ow];
    for y in 0..h {
        for x in 0..ow {
            let mut acc = 0.0;
            for (i, kv) in k.iter().enumerate() {
                acc += kv * src[y * w + x + i];
            }
            rows[y * ow + x] = acc;
        }
    }
    let mut out = vec![0.0; oh * ow];
    for y in 0..oh {
        for x in 0..ow {
            let mut acc = 0.0;
            for (i, kv) in k.iter().enumerate() {
                acc += kv * rows[(y + i) * ow + x];
            }
            out[y * ow + x] = acc;
        }
    }
    out
}

/// Structural similarity between two frames of shape `[..., H, W]`.
/// Leading dimensions are treated as channels; the result is the mean over
/// channels of the mean SSIM over valid window positions.
pub fn ssim<S: Scalar>(a: &Tensor<S>, b: &Tensor<S>, peak: f64) -> Result<f64> {
    if a.shape() != b.shape() {
        return Err(Error::shape(
            "ssim",
            format!("{:?}", a.shape()),
            format!("{:?}", b.shape()),
        ));
    }
    let shape = a.shape();
    if shape.len() < 2 {
        return Err(Error::shape("ssim", "at least rank 2", format!("{shape:?}")));
    }
    let (h, w) = (shape[shape.len() - 2], shape[shape.len() - 1]);
    if h < SSIM_WINDOW || w < SSIM_WINDOW {
        return Err(Error::shape(
            "ssim",
            format!("frames at least {SSIM_WINDOW}x{SSIM_WINDOW}"),
            format!("{h}x{w}"),
        ));
    }
    if !(peak > 0.0) {
        return Err(Error::config(format!("ssim peak must be positive, got {peak}")));
    }

    let c1 = (SSIM_K1 * peak) * (SSIM_K1 * peak);
    let c2 = (SSIM_K2 * peak) * (SSIM_K2 * peak);
    let k = gaussian_kernel();
    let plane = h * w;
    let channels = a.numel() / plane;

    let mut channel_sum = 0.0;
    for ch in 0..channels {
        let pa: Vec<f64> = a.data()[ch * plane..(ch + 1) * plane]
            .iter()
            .map(|v| v.to_f64())
            .collect();
        let pb: Vec<f64> = b.data()[ch * plane..(ch + 1) * plane]
            .iter()
            .map(|v| v.to_f64())
            .collect();
        let aa: Vec<f64> = pa.iter().map(|v| v * v).collect();
        let bb: Vec<f64> = pb.iter().map(|v| v * v).collect();
        let ab: Vec<f64> = pa.iter().zip(&pb).map(|(x, y)| x * y).collect();

        let mu_a = valid_blur(&pa, h, w, &k);
        let mu_b = valid_blur(&pb, h, w, &k);
        let m_aa = valid_blur(&aa, h, w, &k);
        let m_bb = valid_blur(&bb, h, w, &k);
        let m_ab = valid_blur(&ab, h, w, &k);

        let mut acc = 0.0;
        for i in 0..mu_a.len() {
            let (ma, mb) = (mu_a[i], mu_b[i]);
            let va = m_aa[i] - ma * ma;
            let vb = m_bb[i] - mb * mb;
            let cov = m_ab[i] - ma * mb;
            acc += ((2.0 * ma * mb + c1) * (2.0 * cov + c2))
                / ((ma * ma + mb * mb + c1) * (va + vb + c2));
        }
        channel_sum += acc / mu_a.len() as f64;
    }
    Ok(channel_sum / channels as f64)
}

/// Per-frame MSE of a sequence of outputs against one static clean frame.
/// On static scenes a recurrent denoiser should drive this series down as
/// evidence accumulates across frames.
pub fn temporal_stability<S: Scalar>(
    outputs: &[Tensor<S>],
    clean_static: &Tensor<S>,
) -> Result<Vec<f64>> {
    outputs.iter().map(|y| mse(y, clean_static)).collect()
}

/// Median of a non-empty slice (mean of the middle pair for even lengths).
pub fn median(values: &[f64]) -> f64 {
    assert!(!values.is_empty(), "median of an empty slice");
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("comparable values"));
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    }
}

/// What to report as "the output" for a given evaluation row.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Variant {
    /// The noisy input itself — the floor every denoiser must beat.
    Noisy,
    /// The cell's initial per-frame estimate, before temporal fusion.
    InitialEstimate,
    /// The cell's fused output (its actual denoised frame).
    Fused,
    /// The fused output of a separately trained plain recurrent baseline.
    GruBaseline,
    /// The cell run with its carry reset to the noisy frame every step:
    /// spatial denoising only, no temporal accumulation.
    SpatialOnly,
}

impl Variant {
    pub const ALL: [Variant; 5] = [
        Variant::Noisy,
        Variant::InitialEstimate,
        Variant::Fused,
        Variant::GruBaseline,
        Variant::SpatialOnly,
    ];

    pub fn label(&self) -> &'static str {
        match self {
            Variant::Noisy => "noisy",
            Variant::InitialEstimate => "initial_estimate",
            Variant::Fused => "fused",
            Variant::GruBaseline => "gru_baseline",
            Variant::SpatialOnly => "spatial_only",
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Variant> {
        // "s_only" is the shorthand users reach for on the command line:
        // the initial estimate alone, without temporal fusion.
        if s == "s_only" {
            return Ok(Variant::InitialEstimate);
        }
        Variant::ALL
            .iter()
            .copied()
            .find(|v| v.label() == s)
            .ok_or_else(|| {
                Error::usage(format!(
                    "unknown variant '{s}' (expected one of: {})",
                    Variant::ALL.map(|v| v.label()).join(", ")
                ))
            })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrameMetrics {
    pub psnr: f64,
    pub ssim: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SequenceEval {
    pub name: String,
    pub frames: Vec<FrameMetrics>,
    pub mean_psnr: f64,
    pub mean_ssim: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VariantEval {
    pub variant: Variant,
    pub sequences: Vec<SequenceEval>,
    pub mean_psnr: f64,
    pub mean_ssim: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct EvalReport {
    pub variants: Vec<VariantEval>,
}

impl EvalReport {
    pub fn variant(&self, v: Variant) -> Option<&VariantEval> {
        self.variants.iter().find(|row| row.variant == v)
    }

    /// CSV with one row per (variant, sequence, frame), plus `mean` rows
    /// per sequence and per variant. Numeric formatting is the shortest
    /// round-trip form, so equal reports serialize to equal bytes.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("variant,sequence,frame,psnr,ssim\n");
        for var in &self.variants {
            for seq in &var.sequences {
                for (i, fm) in seq.frames.iter().enumerate() {
                    out.push_str(&format!(
                        "{},{},{},{},{}\n",
                        var.variant, seq.name, i, fm.psnr, fm.ssim
                    ));
                }
                out.push_str(&format!(
                    "{},{},mean,{},{}\n",
                    var.variant, seq.name, seq.mean_psnr, seq.mean_ssim
                ));
            }
            out.push_str(&format!(
                "{},all,mean,{},{}\n",
                var.variant, var.mean_psnr, var.mean_ssim
            ));
        }
        out
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }

    /// Compact table of per-variant means for terminal output.
    pub fn summary_table(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("{:<18} {:>10} {:>8}\n", "variant", "psnr", "ssim"));
        for var in &self.variants {
            out.push_str(&format!(
                "{:<18} {:>10.2} {:>8.4}\n",
                var.variant.label(),
                var.mean_psnr,
                var.mean_ssim
            ));
        }
        out
    }
}

/// Extracts frame `n` of a `[T, ...]` tensor as `[1, ...]`.
fn frame4<S: Scalar>(t: &Tensor<S>, n: usize) -> Tensor<S> {
    let s = t.shape();
    let frame: usize = s[1..].iter().product();
    let mut shape = s.to_vec();
    shape[0] = 1;
    Tensor::from_vec(t.data()[n * frame..(n + 1) * frame].to_vec(), &shape)
        .expect("frame slice keeps the tail shape")
}

/// Per-frame outputs of one variant on one sequence, cast to f64.
fn variant_outputs<S: Scalar>(
    variant: Variant,
    model: Option<&dyn DenoiseCell<S>>,
    baseline: Option<&dyn DenoiseCell<S>>,
    seq: &EvalSequence<S>,
) -> Result<Vec<Tensor<f64>>> {
    let frames_total = seq.noisy.shape()[0];
    let inputs: Vec<FrameInput<S>> = (0..frames_total)
        .map(|n| FrameInput::new(frame4(&seq.noisy, n), frame4(&seq.delta, n)))
        .collect();
    fn need<'a, S: Scalar>(
        m: Option<&'a dyn DenoiseCell<S>>,
        variant: Variant,
        what: &str,
    ) -> Result<&'a dyn DenoiseCell<S>> {
        m.ok_or_else(|| Error::usage(format!("variant {variant} needs a {what}")))
    }
    match variant {
        Variant::Noisy => Ok(inputs.iter().map(|f| f.x.cast::<f64>()).collect()),
        Variant::Fused => {
            let outs = run_sequence(need(model, variant, "model")?, &inputs, Bptt::Full)?;
            Ok(outs.iter().map(|o| o.y.cast::<f64>()).collect())
        }
        Variant::InitialEstimate => {
            let outs = run_sequence(need(model, variant, "model")?, &inputs, Bptt::Full)?;
            Ok(outs.iter().map(|o| o.s.cast::<f64>()).collect())
        }
        Variant::GruBaseline => {
            let outs = run_sequence(need(baseline, variant, "baseline model")?, &inputs, Bptt::Full)?;
            Ok(outs.iter().map(|o| o.y.cast::<f64>()).collect())
        }
        Variant::SpatialOnly => {
            let model = need(model, variant, "model")?;
            inputs
                .iter()
                .map(|f| {
                    let out = model.step(&f.x, &f.delta, &init_state(&f.x))?;
                    Ok(out.y.cast::<f64>())
                })
                .collect()
        }
    }
}

fn eval_one_sequence<S: Scalar>(
    variant: Variant,
    model: Option<&dyn DenoiseCell<S>>,
    baseline: Option<&dyn DenoiseCell<S>>,
    seq: &EvalSequence<S>,
    peak: f64,
) -> Result<SequenceEval> {
    let outputs = variant_outputs(variant, model, baseline, seq)?;
    let mut frames = Vec::with_capacity(outputs.len());
    for (n, out) in outputs.iter().enumerate() {
        let clean = frame4(&seq.clean, n).cast::<f64>();
        frames.push(FrameMetrics {
            psnr: psnr(out, &clean, peak)?,
            ssim: ssim(out, &clean, peak)?,
        });
    }
    let n = frames.len() as f64;
    Ok(SequenceEval {
        name: seq.name.clone(),
        mean_psnr: frames.iter().map(|f| f.psnr).sum::<f64>() / n,
        mean_ssim: frames.iter().map(|f| f.ssim).sum::<f64>() / n,
        frames,
    })
}

/// Default variant set given what is available to run.
pub fn default_variants(has_model: bool, has_baseline: bool) -> Vec<Variant> {
    let mut v = vec![Variant::Noisy];
    if has_model {
        v.extend([Variant::InitialEstimate, Variant::Fused, Variant::SpatialOnly]);
    }
    if has_baseline {
        v.push(Variant::GruBaseline);
    }
    v
}

/// Runs every requested variant over every sequence. Sequences are
/// processed in parallel and merged back in dataset order, so the report
/// is identical however many threads run.
pub fn evaluate<S: Scalar>(
    model: Option<&dyn DenoiseCell<S>>,
    baseline: Option<&dyn DenoiseCell<S>>,
    dataset: &[EvalSequence<S>],
    variants: &[Variant],
    peak: f64,
) -> Result<EvalReport> {
    if dataset.is_empty() {
        return Err(Error::usage("evaluation needs at least one sequence"));
    }
    if variants.is_empty() {
        return Err(Error::usage("evaluation needs at least one variant"));
    }
    let channels = dataset[0].clean.shape()[1];
    for m in [model, baseline].into_iter().flatten() {
        if m.channels() != channels {
            return Err(Error::shape(
                "evaluate",
                format!("a model with {channels} channels"),
                format!("{}", m.channels()),
            ));
        }
    }
    let mut report = EvalReport::default();
    for &variant in variants {
        let sequences: Vec<SequenceEval> = dataset
            .par_iter()
            .map(|seq| eval_one_sequence(variant, model, baseline, seq, peak))
            .collect::<Result<Vec<_>>>()?;
        let n = sequences.len() as f64;
        report.variants.push(VariantEval {
            variant,
            mean_psnr: sequences.iter().map(|s| s.mean_psnr).sum::<f64>() / n,
            mean_ssim: sequences.iter().map(|s| s.mean_ssim).sum::<f64>() / n,
            sequences,
        });
    }
    Ok(report)
}
