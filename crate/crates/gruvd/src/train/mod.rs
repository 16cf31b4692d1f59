//! Training: weighted two-term L1 objective, backpropagation through time
//! over frame sequences, Adam updates, learning-rate schedule, and
//! checkpointing.

pub mod adam;
pub mod checkpoint;

use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::cell::{build_model, run_sequence, Bptt, CellOutput, DenoiseCell, ModelConfig};
use crate::data::{SequenceBatch, SequenceProvider};
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;
use adam::Adam;

/// Hyper-parameters of a training run.
///
/// One "epoch" is one optimizer step on one freshly sampled batch; the
/// learning-rate decay cadence counts these steps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    /// Frames per training clip.
    pub seq_len: usize,
    /// Side length of the square spatial crop.
    pub patch: usize,
    /// Clips per batch.
    pub batch: usize,
    /// Initial learning rate.
    pub lr0: f64,
    /// Divide the learning rate every this many epochs...
    pub lr_decay_every: u64,
    /// ...by this factor.
    pub lr_decay_factor: f64,
    /// Weight of the fused-output term of the loss.
    pub w1: f64,
    /// Weight of the initial-estimate term of the loss.
    pub w2: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    /// Seed for parameter init and batch sampling.
    pub seed: u64,
    /// Total optimizer steps.
    pub max_epochs: u64,
    /// Global gradient-norm clip; `None` disables clipping.
    pub grad_clip: Option<f64>,
    /// Save a checkpoint every this many epochs (0 = only at the end).
    pub checkpoint_every: u64,
    /// Backpropagation-through-time span.
    pub bptt: Bptt,
}

impl TrainConfig {
    /// Defaults sized so a full run finishes in minutes on a laptop CPU.
    pub fn desk_default() -> TrainConfig {
        TrainConfig {
            seq_len: 8,
            patch: 32,
            batch: 4,
            lr0: 1e-3,
            lr_decay_every: 800,
            lr_decay_factor: 10.0,
            w1: 0.1,
            w2: 1.0,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            seed: 7,
            max_epochs: 2000,
            grad_clip: Some(10.0),
            checkpoint_every: 500,
            bptt: Bptt::Full,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.seq_len == 0 || self.patch == 0 || self.batch == 0 || self.max_epochs == 0 {
            return Err(Error::config(
                "seq_len, patch, batch, and max_epochs must all be positive",
            ));
        }
        if !(self.lr0 > 0.0) {
            return Err(Error::config(format!(
                "initial learning rate must be positive, got {}",
                self.lr0
            )));
        }
        if self.lr_decay_every == 0 || !(self.lr_decay_factor >= 1.0) {
            return Err(Error::config(
                "lr_decay_every must be positive and lr_decay_factor at least 1",
            ));
        }
        if self.w1 < 0.0 || self.w2 < 0.0 || self.w1 + self.w2 <= 0.0 {
            return Err(Error::config(format!(
                "loss weights must be non-negative with a positive sum, got w1={}, w2={}",
                self.w1, self.w2
            )));
        }
        if let Some(clip) = self.grad_clip {
            if !(clip > 0.0) {
                return Err(Error::config(format!(
                    "gradient clip must be positive, got {clip}"
                )));
            }
        }
        Ok(())
    }

    /// Step-decay schedule: `lr0 / factor^floor(epoch / every)`.
    pub fn learning_rate(&self, epoch: u64) -> f64 {
        let drops = (epoch / self.lr_decay_every) as f64;
        self.lr0 / self.lr_decay_factor.powf(drops)
    }
}

/// Single-frame objective: `w1 * mean|y - truth| + w2 * mean|s - truth|`.
///
/// The fused output `y` and the initial estimate `s` are both pulled toward
/// the ground truth; the subgradient of |·| at zero is taken as 0.
pub fn weighted_l1_loss<S: Scalar>(
    y: &Tensor<S>,
    s: &Tensor<S>,
    y_true: &Tensor<S>,
    w1: f64,
    w2: f64,
) -> Result<Tensor<S>> {
    let fusion = y.sub(y_true)?.abs().mean();
    let init = s.sub(y_true)?.abs().mean();
    fusion
        .scale(S::from_f64(w1))
        .add(&init.scale(S::from_f64(w2)))
}

/// A sequence loss plus the per-term means used for reporting.
pub struct SequenceLoss<S: Scalar> {
    /// Tracked scalar: `w1 * fusion + w2 * init`, averaged over frames.
    pub total: Tensor<S>,
    /// Unweighted mean absolute error of the fused outputs.
    pub fusion: f64,
    /// Unweighted mean absolute error of the initial estimates.
    pub init: f64,
}

/// Applies the objective to every frame of a sequence and averages.
pub fn sequence_loss<S: Scalar>(
    outputs: &[CellOutput<S>],
    clean: &[Tensor<S>],
    w1: f64,
    w2: f64,
) -> Result<SequenceLoss<S>> {
    if outputs.is_empty() || outputs.len() != clean.len() {
        return Err(Error::shape(
            "sequence_loss",
            format!("{} outputs", clean.len()),
            format!("{}", outputs.len()),
        ));
    }
    let mut fusion_terms = Vec::with_capacity(outputs.len());
    let mut init_terms = Vec::with_capacity(outputs.len());
    for (out, truth) in outputs.iter().zip(clean) {
        fusion_terms.push(out.y.sub(truth)?.abs().mean());
        init_terms.push(out.s.sub(truth)?.abs().mean());
    }
    let mean_of = |terms: &[Tensor<S>]| -> Result<Tensor<S>> {
        let mut acc = terms[0].clone();
        for t in &terms[1..] {
            acc = acc.add(t)?;
        }
        Ok(acc.scale(S::ONE / S::from_f64(terms.len() as f64)))
    };
    let fusion_mean = mean_of(&fusion_terms)?;
    let init_mean = mean_of(&init_terms)?;
    let total = fusion_mean
        .scale(S::from_f64(w1))
        .add(&init_mean.scale(S::from_f64(w2)))?;
    Ok(SequenceLoss {
        total,
        fusion: fusion_mean.value().to_f64(),
        init: init_mean.value().to_f64(),
    })
}

/// One row of a training log.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochRecord {
    pub epoch: u64,
    pub loss: f64,
    pub loss_fusion: f64,
    pub loss_init: f64,
    pub lr: f64,
    pub seconds: f64,
}

/// Training log. The numeric trajectory (loss, terms, learning rate) is a
/// pure function of config, data, and seed; only `seconds` varies between
/// runs.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainReport {
    pub records: Vec<EpochRecord>,
}

impl TrainReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("epoch,loss,loss_fusion,loss_init,lr,seconds\n");
        for r in &self.records {
            out.push_str(&format!(
                "{},{},{},{},{},{:.3}\n",
                r.epoch, r.loss, r.loss_fusion, r.loss_init, r.lr, r.seconds
            ));
        }
        out
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }

    pub fn last_loss(&self) -> Option<f64> {
        self.records.last().map(|r| r.loss)
    }
}

/// Drives training of one model: owns the model, the optimizer state, and
/// the epoch counter, so an interrupted run can resume bit-exactly from a
/// checkpoint.
pub struct Trainer<S: Scalar> {
    model: Box<dyn DenoiseCell<S>>,
    optimizer: Adam<S>,
    cfg: TrainConfig,
    next_epoch: u64,
}

impl<S: Scalar> Trainer<S> {
    /// Fresh trainer: parameters initialized from `cfg.seed`.
    pub fn new(model_config: ModelConfig, cfg: TrainConfig) -> Result<Trainer<S>> {
        cfg.validate()?;
        let model = build_model(model_config, cfg.seed)?;
        let optimizer = Adam::new(cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps)?;
        Ok(Trainer {
            model,
            optimizer,
            cfg,
            next_epoch: 0,
        })
    }

    /// Continues from a checkpoint directory written by a previous run.
    pub fn resume(dir: &Path) -> Result<Trainer<S>> {
        checkpoint::load_trainer(dir)
    }

    pub(crate) fn from_parts(
        model: Box<dyn DenoiseCell<S>>,
        optimizer: Adam<S>,
        cfg: TrainConfig,
        next_epoch: u64,
    ) -> Trainer<S> {
        Trainer {
            model,
            optimizer,
            cfg,
            next_epoch,
        }
    }

    pub fn model(&self) -> &dyn DenoiseCell<S> {
        self.model.as_ref()
    }

    pub fn into_model(self) -> Box<dyn DenoiseCell<S>> {
        self.model
    }

    pub fn config(&self) -> &TrainConfig {
        &self.cfg
    }

    /// The next epoch this trainer would run.
    pub fn next_epoch(&self) -> u64 {
        self.next_epoch
    }

    /// Raises or lowers the epoch budget, e.g. to extend a finished run
    /// after resuming it. Epochs already run are never undone.
    pub fn set_max_epochs(&mut self, max_epochs: u64) {
        self.cfg.max_epochs = max_epochs;
    }

    pub(crate) fn optimizer(&self) -> &Adam<S> {
        &self.optimizer
    }

    /// Runs one epoch: sample batch, forward the sequence, backpropagate
    /// the weighted loss, and apply one optimizer step.
    pub fn step_once(&mut self, provider: &dyn SequenceProvider<S>) -> Result<EpochRecord> {
        let started = Instant::now();
        let epoch = self.next_epoch;
        let batch = provider.batch(epoch)?;
        let loss = self.batch_loss(&batch)?;
        let loss_value = loss.total.value().to_f64();
        if !loss_value.is_finite() {
            return Err(Error::numeric(format!(
                "loss became non-finite ({loss_value}) at epoch {epoch}; \
                 aborting before the model diverges further"
            )));
        }
        let lr = self.cfg.learning_rate(epoch);
        loss.total.backward()?;
        self.optimizer
            .step(self.model.as_mut(), lr, self.cfg.grad_clip)?;
        self.model.visit_params_mut(&mut |_, t| t.zero_grad());
        self.next_epoch = epoch + 1;
        Ok(EpochRecord {
            epoch,
            loss: loss_value,
            loss_fusion: loss.fusion,
            loss_init: loss.init,
            lr,
            seconds: started.elapsed().as_secs_f64(),
        })
    }

    /// Forward pass and loss for one batch, without updating anything.
    pub fn batch_loss(&self, batch: &SequenceBatch<S>) -> Result<SequenceLoss<S>> {
        let frames = batch.frame_inputs();
        let outputs = run_sequence(self.model.as_ref(), &frames, self.cfg.bptt)?;
        let clean: Vec<Tensor<S>> = (0..batch.seq_len()).map(|n| batch.clean_frame(n)).collect();
        sequence_loss(&outputs, &clean, self.cfg.w1, self.cfg.w2)
    }

    /// Trains until `max_epochs`, checkpointing at the configured cadence
    /// (and always at the end when a directory is given). Returns records
    /// for the epochs run by this call.
    pub fn run(
        &mut self,
        provider: &dyn SequenceProvider<S>,
        checkpoint_dir: Option<&Path>,
        mut on_epoch: impl FnMut(&EpochRecord),
    ) -> Result<TrainReport> {
        let mut report = TrainReport::default();
        while self.next_epoch < self.cfg.max_epochs {
            let record = self.step_once(provider)?;
            on_epoch(&record);
            report.records.push(record);
            if let Some(dir) = checkpoint_dir {
                let every = self.cfg.checkpoint_every;
                if every > 0 && self.next_epoch % every == 0 && self.next_epoch < self.cfg.max_epochs
                {
                    self.save_checkpoint(dir)?;
                }
            }
        }
        if let Some(dir) = checkpoint_dir {
            self.save_checkpoint(dir)?;
        }
        Ok(report)
    }

    pub fn save_checkpoint(&self, dir: &Path) -> Result<()> {
        checkpoint::save_trainer(dir, self)
    }
}

/// Convenience entry point: fresh model, full training run.
pub fn train<S: Scalar>(
    model_config: ModelConfig,
    cfg: TrainConfig,
    provider: &dyn SequenceProvider<S>,
    checkpoint_dir: Option<&Path>,
) -> Result<(Box<dyn DenoiseCell<S>>, TrainReport)> {
    let mut trainer = Trainer::new(model_config, cfg)?;
    let report = trainer.run(provider, checkpoint_dir, |_| {})?;
    Ok((trainer.into_model(), report))
}

/// Resolves the checkpoint directory for a named run under `root`.
pub fn run_dir(root: &Path, name: &str) -> PathBuf {
    root.join(name)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cell::{init_state, CellKind, FrameInput};
    use crate::data::synth::{generate_scene, SceneKind, SyntheticSceneSpec};
    use crate::data::SceneProvider;
    use crate::noise::SensorProfile;

    fn tiny_model_config() -> ModelConfig {
        ModelConfig {
            cell: CellKind::GruVd,
            channels: 1,
            hidden_channels: 4,
            num_blocks: 1,
            block_kind: crate::backbone::BlockKind::Plain,
            reduced_update_inputs: false,
        }
    }

    fn tiny_train_config() -> TrainConfig {
        TrainConfig {
            seq_len: 3,
            patch: 8,
            batch: 2,
            lr0: 2e-3,
            lr_decay_every: 1000,
            lr_decay_factor: 10.0,
            w1: 0.1,
            w2: 1.0,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            seed: 11,
            max_epochs: 50,
            grad_clip: Some(10.0),
            checkpoint_every: 0,
            bptt: Bptt::Full,
        }
    }

    fn tiny_provider(seed: u64) -> SceneProvider<f32> {
        let scene = generate_scene(&SyntheticSceneSpec {
            kind: SceneKind::DriftingTexture,
            resolution: (16, 16),
            frames: 6,
            channels: 1,
            motion_px_per_frame: 0.7,
            texture_seed: 5,
        })
        .unwrap();
        SceneProvider::new(
            vec![scene],
            SensorProfile::synthetic_default(),
            vec![6400, 25600],
            8,
            3,
            2,
            seed,
        )
        .unwrap()
    }

    #[test]
    fn loss_weights_follow_the_documented_example() {
        // |y - truth| = 1 everywhere, |s - truth| = 2 everywhere,
        // w1 = 0.1, w2 = 1 -> 0.1 * 1 + 1 * 2 = 2.1.
        let truth = Tensor::<f64>::zeros(&[1, 1, 4, 4]);
        let y = Tensor::full(&[1, 1, 4, 4], 1.0);
        let s = Tensor::full(&[1, 1, 4, 4], -2.0);
        let loss = weighted_l1_loss(&y, &s, &truth, 0.1, 1.0).unwrap();
        assert!((loss.value() - 2.1).abs() < 1e-12);
    }

    #[test]
    fn zero_residual_means_zero_loss() {
        let truth = Tensor::<f64>::full(&[2, 1, 3, 3], 0.4);
        let loss = weighted_l1_loss(&truth, &truth, &truth, 0.1, 1.0).unwrap();
        assert_eq!(loss.value(), 0.0);
    }

    #[test]
    fn loss_is_positive_unless_both_outputs_match() {
        let truth = Tensor::<f64>::zeros(&[1, 1, 2, 2]);
        let off = Tensor::full(&[1, 1, 2, 2], 1e-6);
        for (y, s) in [(&off, &truth), (&truth, &off), (&off, &off)] {
            let loss = weighted_l1_loss(y, s, &truth, 0.1, 1.0).unwrap();
            assert!(loss.value() > 0.0);
        }
    }

    #[test]
    fn loss_rejects_mismatched_shapes() {
        let a = Tensor::<f64>::zeros(&[1, 1, 4, 4]);
        let b = Tensor::<f64>::zeros(&[1, 1, 5, 5]);
        assert!(weighted_l1_loss(&a, &a, &b, 0.1, 1.0).is_err());
    }

    #[test]
    fn learning_rate_schedule_matches_the_closed_form() {
        let mut cfg = tiny_train_config();
        cfg.lr0 = 1e-4;
        cfg.lr_decay_every = 32000;
        cfg.lr_decay_factor = 10.0;
        assert_eq!(cfg.learning_rate(0), 1e-4);
        assert_eq!(cfg.learning_rate(31999), 1e-4);
        let rel = |a: f64, b: f64| (a - b).abs() / b;
        assert!(rel(cfg.learning_rate(32000), 1e-5) < 1e-12);
        assert!(rel(cfg.learning_rate(64000), 1e-6) < 1e-12);
    }

    #[test]
    fn config_validation_rejects_bad_values() {
        let ok = tiny_train_config();
        assert!(ok.validate().is_ok());
        let mut c = ok.clone();
        c.w1 = 0.0;
        c.w2 = 0.0;
        assert!(c.validate().is_err());
        let mut c = ok.clone();
        c.w1 = -0.5;
        assert!(c.validate().is_err());
        let mut c = ok.clone();
        c.lr0 = 0.0;
        assert!(c.validate().is_err());
        let mut c = ok.clone();
        c.lr_decay_factor = 0.5;
        assert!(c.validate().is_err());
        let mut c = ok;
        c.grad_clip = Some(0.0);
        assert!(c.validate().is_err());
    }

    #[test]
    fn with_w1_zero_the_first_frame_sends_no_gradient_to_the_update_gate() {
        // The initial estimate s is computed before the update gate acts,
        // so on the first frame (whose carry is the raw input, not a model
        // output) a loss with w1 = 0 cannot reach update-gate parameters.
        // Later frames do reach them through the carry, hence one frame.
        let model = build_model::<f64>(tiny_model_config(), 3).unwrap();
        let x = Tensor::randn(&[1, 1, 6, 6], 1.0, &mut crate::rng::SplitMix64::new(1));
        let delta = Tensor::full(&[1, 1, 6, 6], 0.05);
        let truth = Tensor::zeros(&[1, 1, 6, 6]);
        let out = model.step(&x, &delta, &init_state(&x)).unwrap();
        let loss = sequence_loss(&[out], &[truth], 0.0, 1.0).unwrap();
        loss.total.backward().unwrap();
        model.visit_params(&mut |name, t| {
            let grad = t.grad();
            if name.starts_with("update_gate") {
                let zero = grad.map_or(true, |g| g.iter().all(|&v| v == 0.0));
                assert!(zero, "{name} received gradient through the w2 term");
            } else {
                // Sanity: the rest of the model does learn from this loss.
                assert!(grad.is_some(), "{name} received no gradient at all");
            }
        });
    }

    #[test]
    fn multi_frame_sequences_do_reach_the_update_gate_through_the_carry() {
        let model = build_model::<f64>(tiny_model_config(), 3).unwrap();
        let mut rng = crate::rng::SplitMix64::new(2);
        let frames: Vec<FrameInput<f64>> = (0..2)
            .map(|_| {
                FrameInput::new(
                    Tensor::randn(&[1, 1, 6, 6], 1.0, &mut rng),
                    Tensor::full(&[1, 1, 6, 6], 0.05),
                )
            })
            .collect();
        let outputs = run_sequence(model.as_ref(), &frames, Bptt::Full).unwrap();
        let clean = vec![Tensor::zeros(&[1, 1, 6, 6]); 2];
        let loss = sequence_loss(&outputs, &clean, 0.0, 1.0).unwrap();
        loss.total.backward().unwrap();
        let mut update_gate_total = 0.0;
        model.visit_params(&mut |name, t| {
            if name.starts_with("update_gate") {
                if let Some(g) = t.grad() {
                    update_gate_total += g.iter().map(|v| v.abs()).sum::<f64>();
                }
            }
        });
        assert!(update_gate_total > 0.0);
    }

    #[test]
    fn sequence_loss_decomposes_into_its_reported_terms() {
        let model = build_model::<f64>(tiny_model_config(), 9).unwrap();
        let mut rng = crate::rng::SplitMix64::new(4);
        let frames: Vec<FrameInput<f64>> = (0..3)
            .map(|_| {
                FrameInput::new(
                    Tensor::randn(&[1, 1, 6, 6], 0.5, &mut rng),
                    Tensor::full(&[1, 1, 6, 6], 0.1),
                )
            })
            .collect();
        let outputs = run_sequence(model.as_ref(), &frames, Bptt::Full).unwrap();
        let clean: Vec<Tensor<f64>> = (0..3)
            .map(|_| Tensor::randn(&[1, 1, 6, 6], 0.5, &mut rng))
            .collect();
        let loss = sequence_loss(&outputs, &clean, 0.1, 1.0).unwrap();
        let recombined = 0.1 * loss.fusion + 1.0 * loss.init;
        assert!((loss.total.value() - recombined).abs() < 1e-12);
        assert!(loss.fusion > 0.0 && loss.init > 0.0);
    }

    #[test]
    fn smoothed_loss_decreases_over_fifty_epochs() {
        let provider = tiny_provider(21);
        let (_, report) =
            train::<f32>(tiny_model_config(), tiny_train_config(), &provider, None).unwrap();
        assert_eq!(report.records.len(), 50);
        for (i, r) in report.records.iter().enumerate() {
            assert_eq!(r.epoch, i as u64);
            assert!(r.loss.is_finite());
        }
        let mean = |rs: &[EpochRecord]| {
            rs.iter().map(|r| r.loss).sum::<f64>() / rs.len() as f64
        };
        let first = mean(&report.records[..10]);
        let last = mean(&report.records[40..]);
        assert!(
            last < first,
            "smoothed loss should fall: first ten {first}, last ten {last}"
        );
    }

    #[test]
    fn training_is_deterministic() {
        let provider = tiny_provider(33);
        let mut cfg = tiny_train_config();
        cfg.max_epochs = 8;
        let (_, a) = train::<f32>(tiny_model_config(), cfg.clone(), &provider, None).unwrap();
        let (_, b) = train::<f32>(tiny_model_config(), cfg, &provider, None).unwrap();
        let losses = |r: &TrainReport| -> Vec<f64> { r.records.iter().map(|x| x.loss).collect() };
        assert_eq!(losses(&a), losses(&b));
    }

    #[test]
    fn non_finite_loss_aborts_with_a_numeric_error() {
        struct PoisonProvider;
        impl SequenceProvider<f32> for PoisonProvider {
            fn channels(&self) -> usize {
                1
            }
            fn batch(&self, _step: u64) -> Result<SequenceBatch<f32>> {
                let nan = f32::NAN;
                let shape = [1, 2, 1, 8, 8];
                let n: usize = shape.iter().product();
                Ok(SequenceBatch {
                    clean: Tensor::zeros(&shape),
                    noisy: Tensor::from_vec(vec![nan; n], &shape)?,
                    delta: Tensor::full(&[1, 2, 1, 8, 8], 0.1),
                    params: vec![crate::noise::NoiseParams::new(0.01, 1e-4).unwrap()],
                })
            }
        }
        let mut trainer =
            Trainer::<f32>::new(tiny_model_config(), tiny_train_config()).unwrap();
        let err = trainer.step_once(&PoisonProvider).unwrap_err();
        assert!(matches!(err, Error::Numeric(_)), "got {err:?}");
    }

    #[test]
    fn csv_report_round_trips_numerically() {
        let report = TrainReport {
            records: vec![
                EpochRecord {
                    epoch: 0,
                    loss: 0.125,
                    loss_fusion: 0.5,
                    loss_init: 0.075,
                    lr: 1e-3,
                    seconds: 0.25,
                },
                EpochRecord {
                    epoch: 1,
                    loss: 0.1,
                    loss_fusion: 0.45,
                    loss_init: 0.055,
                    lr: 1e-3,
                    seconds: 0.24,
                },
            ],
        };
        let csv = report.to_csv();
        let mut lines = csv.lines();
        assert_eq!(lines.next().unwrap(), "epoch,loss,loss_fusion,loss_init,lr,seconds");
        for (line, r) in lines.zip(&report.records) {
            let cols: Vec<&str> = line.split(',').collect();
            assert_eq!(cols.len(), 6);
            assert_eq!(cols[0].parse::<u64>().unwrap(), r.epoch);
            assert_eq!(cols[1].parse::<f64>().unwrap(), r.loss);
            assert_eq!(cols[4].parse::<f64>().unwrap(), r.lr);
        }
    }
}
