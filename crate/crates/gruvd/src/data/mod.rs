//! Datasets: synthetic scenes, batching, manifests, and providers.
//!
//! A dataset on disk is a directory holding one GVSQ clean sequence per
//! entry plus a `manifest.json` describing how each entry was generated and
//! how to corrupt it (ISO setting and noise seed). Noise is synthesized *on
//! load* from those fields — storing clean footage plus the recipe keeps
//! datasets small and makes every noisy pixel reproducible.

pub mod formats;
pub mod synth;

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::noise::{add_noise, lookup_iso, std_map, NoiseParams, SensorProfile};
use crate::rng::{mix, SplitMix64};
use crate::scalar::Scalar;
use crate::tensor::Tensor;
use synth::SyntheticSceneSpec;

/// One training batch: `B` independently sampled noisy clips.
pub struct SequenceBatch<S: Scalar> {
    /// Ground truth, `[B, T, C, H, W]`.
    pub clean: Tensor<S>,
    /// Noisy observations, `[B, T, C, H, W]`.
    pub noisy: Tensor<S>,
    /// Per-pixel noise level maps, `[B, T, 1, H, W]`: the std map of the
    /// noisy frames, averaged over channels when C > 1.
    pub delta: Tensor<S>,
    /// Noise coefficients used for each batch element.
    pub params: Vec<NoiseParams>,
}

impl<S: Scalar> SequenceBatch<S> {
    pub fn batch_size(&self) -> usize {
        self.clean.shape()[0]
    }

    pub fn seq_len(&self) -> usize {
        self.clean.shape()[1]
    }

    pub fn channels(&self) -> usize {
        self.clean.shape()[2]
    }

    /// Extracts frame `n` of every element from a `[B, T, C, H, W]` tensor
    /// as a `[B, C, H, W]` tensor.
    fn gather_frame(t: &Tensor<S>, n: usize) -> Tensor<S> {
        let s = t.shape();
        let (b, tt, c, h, w) = (s[0], s[1], s[2], s[3], s[4]);
        assert!(n < tt);
        let frame = c * h * w;
        let mut data = Vec::with_capacity(b * frame);
        for bi in 0..b {
            let base = (bi * tt + n) * frame;
            data.extend_from_slice(&t.data()[base..base + frame]);
        }
        Tensor::from_vec(data, &[b, c, h, w]).expect("consistent batch shapes")
    }

    /// Noisy frame `n` across the batch, `[B, C, H, W]`.
    pub fn noisy_frame(&self, n: usize) -> Tensor<S> {
        Self::gather_frame(&self.noisy, n)
    }

    /// Clean frame `n` across the batch, `[B, C, H, W]`.
    pub fn clean_frame(&self, n: usize) -> Tensor<S> {
        Self::gather_frame(&self.clean, n)
    }

    /// Noise level map for frame `n`, `[B, 1, H, W]`.
    pub fn delta_frame(&self, n: usize) -> Tensor<S> {
        Self::gather_frame(&self.delta, n)
    }

    /// The whole batch as per-frame cell inputs.
    pub fn frame_inputs(&self) -> Vec<crate::cell::FrameInput<S>> {
        (0..self.seq_len())
            .map(|n| crate::cell::FrameInput::new(self.noisy_frame(n), self.delta_frame(n)))
            .collect()
    }
}

/// Averages a `[T, C, H, W]` std map over channels to `[T, 1, H, W]`.
/// For C = 1 this is the identity.
fn channel_mean<S: Scalar>(t: &Tensor<S>) -> Tensor<S> {
    let s = t.shape();
    let (tt, c, h, w) = (s[0], s[1], s[2], s[3]);
    if c == 1 {
        return t.clone();
    }
    let plane = h * w;
    let inv = S::ONE / S::from_f64(c as f64);
    let mut data = vec![S::ZERO; tt * plane];
    for ti in 0..tt {
        for ci in 0..c {
            let base = (ti * c + ci) * plane;
            for (acc, &v) in data[ti * plane..(ti + 1) * plane]
                .iter_mut()
                .zip(&t.data()[base..base + plane])
            {
                *acc += v * inv;
            }
        }
    }
    Tensor::from_vec(data, &[tt, 1, h, w]).expect("shape arithmetic")
}

/// Per-pixel noise level map `[T, 1, H, W]` for observed noisy frames:
/// the standard-deviation map predicted by `params`, averaged over
/// channels. This is the conditioning input the denoising cell expects.
pub fn delta_from_noisy<S: Scalar>(params: &NoiseParams, noisy: &Tensor<S>) -> Tensor<S> {
    channel_mean(&std_map(params, noisy))
}

/// Corrupts one clean `[T, C, H, W]` clip: samples noise and derives the
/// noise level map from the *noisy* frames, exactly as a real pipeline
/// would (the clean signal is unknown at inference time).
pub fn corrupt_sequence<S: Scalar>(
    clean: &Tensor<S>,
    params: &NoiseParams,
    seed: u64,
) -> (Tensor<S>, Tensor<S>) {
    let noisy = add_noise(params, clean, seed);
    let delta = delta_from_noisy(params, &noisy);
    (noisy, delta)
}

/// Assembles a training batch: for each of `batch` elements, pick a scene,
/// a temporal window of `seq_len` frames, a `crop`×`crop` spatial window,
/// and an ISO from `iso_choices`; then corrupt it.
///
/// Everything is derived from `(seed, element index)`, so a batch is a pure
/// function of its arguments.
#[allow(clippy::too_many_arguments)]
pub fn make_batch<S: Scalar>(
    scenes: &[Tensor<S>],
    profile: &SensorProfile,
    iso_choices: &[u32],
    crop: usize,
    seq_len: usize,
    batch: usize,
    seed: u64,
) -> Result<SequenceBatch<S>> {
    if scenes.is_empty() {
        return Err(Error::config("make_batch needs at least one scene"));
    }
    if iso_choices.is_empty() {
        return Err(Error::config("make_batch needs at least one ISO choice"));
    }
    if batch == 0 || crop == 0 || seq_len == 0 {
        return Err(Error::config(
            "batch, crop, and seq_len must all be positive",
        ));
    }
    let c = scenes[0].shape()[1];
    for scene in scenes {
        let s = scene.shape();
        if s.len() != 4 {
            return Err(Error::shape(
                "make_batch",
                "[T, C, H, W] scenes",
                format!("{s:?}"),
            ));
        }
        if s[1] != c {
            return Err(Error::shape(
                "make_batch",
                format!("uniform channel count {c}"),
                format!("{s:?}"),
            ));
        }
        if s[0] < seq_len || s[2] < crop || s[3] < crop {
            return Err(Error::config(format!(
                "scene {:?} too small for seq_len {} / crop {}",
                s, seq_len, crop
            )));
        }
    }

    let frame = c * crop * crop;
    let clip = seq_len * frame;
    let mut clean_all = Vec::with_capacity(batch * clip);
    let mut noisy_all = Vec::with_capacity(batch * clip);
    let mut delta_all = Vec::with_capacity(batch * seq_len * crop * crop);
    let mut params_all = Vec::with_capacity(batch);

    for e in 0..batch {
        let mut rng = SplitMix64::new(mix(seed, e as u64));
        let scene = &scenes[rng.next_below(scenes.len())];
        let s = scene.shape();
        let (t_total, h, w) = (s[0], s[2], s[3]);
        let t0 = rng.next_below(t_total - seq_len + 1);
        let y0 = rng.next_below(h - crop + 1);
        let x0 = rng.next_below(w - crop + 1);
        let iso = iso_choices[rng.next_below(iso_choices.len())];
        let noise_seed = rng.next_u64();
        let params = lookup_iso(profile, iso)?;

        let mut clip_data = Vec::with_capacity(clip);
        for ti in t0..t0 + seq_len {
            for ci in 0..c {
                for y in y0..y0 + crop {
                    let base = ((ti * c + ci) * h + y) * w + x0;
                    clip_data.extend_from_slice(&scene.data()[base..base + crop]);
                }
            }
        }
        let clean = Tensor::from_vec(clip_data, &[seq_len, c, crop, crop])?;
        let (noisy, delta) = corrupt_sequence(&clean, &params, noise_seed);
        clean_all.extend_from_slice(clean.data());
        noisy_all.extend_from_slice(noisy.data());
        delta_all.extend_from_slice(delta.data());
        params_all.push(params);
    }

    Ok(SequenceBatch {
        clean: Tensor::from_vec(clean_all, &[batch, seq_len, c, crop, crop])?,
        noisy: Tensor::from_vec(noisy_all, &[batch, seq_len, c, crop, crop])?,
        delta: Tensor::from_vec(delta_all, &[batch, seq_len, 1, crop, crop])?,
        params: params_all,
    })
}

/// One dataset entry: a scene recipe plus its corruption settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub scene: SyntheticSceneSpec,
    pub iso: u32,
    /// Seed for the noise realization of this entry.
    pub seed: u64,
    /// Clean sequence file, relative to the manifest's directory.
    pub file: String,
}

/// Dataset description stored as `manifest.json` next to the sequences.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub profile: SensorProfile,
    pub entries: Vec<ManifestEntry>,
}

impl DatasetManifest {
    pub fn save(&self, dir: &Path) -> Result<()> {
        let path = dir.join("manifest.json");
        let json = serde_json::to_string_pretty(self)
            .map_err(|e| Error::config(format!("manifest serialization failed: {e}")))?;
        std::fs::write(&path, json).map_err(|e| Error::io(&path, e))
    }

    pub fn load(dir: &Path) -> Result<DatasetManifest> {
        let path = dir.join("manifest.json");
        let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let manifest: DatasetManifest = serde_json::from_str(&text)
            .map_err(|e| Error::parse(&path, e.column() as u64, e.to_string()))?;
        manifest.profile.validate()?;
        if manifest.entries.is_empty() {
            return Err(Error::config(format!(
                "manifest {} lists no entries",
                path.display()
            )));
        }
        Ok(manifest)
    }
}

/// One evaluation sequence: full frames, fixed noise realization.
pub struct EvalSequence<S: Scalar> {
    pub name: String,
    pub clean: Tensor<S>,
    pub noisy: Tensor<S>,
    pub delta: Tensor<S>,
    pub params: NoiseParams,
    /// Whether the underlying scene is static (used by temporal-stability
    /// diagnostics).
    pub is_static: bool,
}

/// Loads a dataset directory for evaluation: reads each entry's clean
/// sequence and applies its recorded corruption.
pub fn load_eval_dataset<S: Scalar>(dir: &Path) -> Result<Vec<EvalSequence<S>>> {
    let manifest = DatasetManifest::load(dir)?;
    manifest
        .entries
        .iter()
        .map(|entry| {
            let clean: Tensor<S> = formats::read_frames(&dir.join(&entry.file))?;
            let params = lookup_iso(&manifest.profile, entry.iso)?;
            let (noisy, delta) = corrupt_sequence(&clean, &params, entry.seed);
            Ok(EvalSequence {
                name: entry.file.clone(),
                clean,
                noisy,
                delta,
                params,
                is_static: entry.scene.kind == synth::SceneKind::Static,
            })
        })
        .collect()
}

/// Source of training batches.
pub trait SequenceProvider<S: Scalar>: Send + Sync {
    fn channels(&self) -> usize;

    /// The batch for a given training step. Must be a pure function of
    /// `step`, so interrupted training can resume bit-exactly.
    fn batch(&self, step: u64) -> Result<SequenceBatch<S>>;
}

/// Provider drawing random crops from a fixed set of in-memory scenes.
pub struct SceneProvider<S: Scalar> {
    scenes: Vec<Tensor<S>>,
    profile: SensorProfile,
    iso_choices: Vec<u32>,
    crop: usize,
    seq_len: usize,
    batch: usize,
    seed: u64,
}

impl<S: Scalar> SceneProvider<S> {
    pub fn new(
        scenes: Vec<Tensor<S>>,
        profile: SensorProfile,
        iso_choices: Vec<u32>,
        crop: usize,
        seq_len: usize,
        batch: usize,
        seed: u64,
    ) -> Result<Self> {
        profile.validate()?;
        // Delegate shape checks to a dry-run batch; fail at construction,
        // not mid-training.
        let provider = SceneProvider {
            scenes,
            profile,
            iso_choices,
            crop,
            seq_len,
            batch,
            seed,
        };
        provider.batch(0)?;
        Ok(provider)
    }

    /// Builds a provider over a dataset directory's clean sequences.
    pub fn from_dataset_dir(
        dir: &Path,
        crop: usize,
        seq_len: usize,
        batch: usize,
        seed: u64,
    ) -> Result<Self> {
        let manifest = DatasetManifest::load(dir)?;
        let scenes = manifest
            .entries
            .iter()
            .map(|e| formats::read_frames(&dir.join(&e.file)))
            .collect::<Result<Vec<_>>>()?;
        let iso_choices: Vec<u32> = manifest.profile.table.iter().map(|e| e.iso).collect();
        SceneProvider::new(
            scenes,
            manifest.profile,
            iso_choices,
            crop,
            seq_len,
            batch,
            seed,
        )
    }
}

impl<S: Scalar> SequenceProvider<S> for SceneProvider<S> {
    fn channels(&self) -> usize {
        self.scenes[0].shape()[1]
    }

    fn batch(&self, step: u64) -> Result<SequenceBatch<S>> {
        make_batch(
            &self.scenes,
            &self.profile,
            &self.iso_choices,
            self.crop,
            self.seq_len,
            self.batch,
            mix(self.seed, step),
        )
    }
}


#[cfg(test)]
impl Tensor<f64> {
    /// Test helper: keeps only channel 0 of a [T, C, H, W] sequence.
    fn take_channel0(&self) -> Tensor<f64> {
        let s = self.shape();
        let (t, c, h, w) = (s[0], s[1], s[2], s[3]);
        let plane = h * w;
        let mut data = Vec::with_capacity(t * plane);
        for ti in 0..t {
            let base = ti * c * plane;
            data.extend_from_slice(&self.data()[base..base + plane]);
        }
        Tensor::from_vec(data, &[t, 1, h, w]).unwrap()
    }
}
