//! Command-line interface: one binary exposing the whole pipeline.
//!
//! Subcommands: `synth` (generate clean scenes + a corruption manifest),
//! `train` (fit a model, checkpoint it, log per-epoch losses), `denoise`
//! (run a checkpoint over frames), `eval` (metric report over a dataset),
//! and `gradcheck` (finite-difference verification of every gradient).
//!
//! Conventions shared by every subcommand:
//!
//! * Precedence: explicit flags > `--config` JSON file > built-in defaults.
//! * Every run is deterministic given its flags and seed.
//! * `GRUVD_OUT_ROOT` moves default output locations (never explicit paths).
//! * Exit codes: 0 success, 2 invalid configuration or usage, 3 I/O or
//!   parse failure, 4 numeric failure (non-finite loss, failed gradient
//!   check).

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::backbone::BlockKind;
use crate::cell::{init_state, Bptt, CellKind, CellState, ModelConfig};
use crate::data::formats::{read_frames, write_frames, write_gvsq, write_pnm, BitDepth};
use crate::data::synth::{generate_scene, SceneKind, SyntheticSceneSpec};
use crate::data::{
    delta_from_noisy, load_eval_dataset, DatasetManifest, ManifestEntry, SceneProvider,
};
use crate::error::{Error, Result};
use crate::eval::{default_variants, evaluate, Variant};
use crate::gradcheck::{check_model_gradients, GradCheckConfig};
use crate::noise::{lookup_iso, IsoEntry, NoiseParams, SensorProfile, SIGNAL_RANGE};
use crate::rng::mix;
use crate::scalar::Scalar;
use crate::tensor::Tensor;
use crate::train::checkpoint::load_model;
use crate::train::{TrainConfig, Trainer};

#[derive(Debug, Parser)]
#[command(
    name = "gruvd",
    version,
    about = "Recurrent video denoising: synthesize data, train, denoise, evaluate, check gradients."
)]
pub struct Cli {
    /// Cap the worker-thread pool (default: one thread per core).
    #[arg(long, global = true, value_name = "N")]
    pub threads: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate synthetic clean scenes plus a corruption manifest.
    Synth(SynthArgs),
    /// Train a model on a dataset directory and checkpoint it.
    Train(TrainArgs),
    /// Run a trained checkpoint over a noisy frame sequence.
    Denoise(DenoiseArgs),
    /// Score denoising variants over a dataset (PSNR / SSIM report).
    Eval(EvalArgs),
    /// Verify analytic gradients against finite differences.
    Gradcheck(GradcheckArgs),
}

/// Parses the process arguments, runs the chosen subcommand, and returns the
/// process exit code.
pub fn run() -> i32 {
    let cli = Cli::parse();
    exec(&cli)
}

/// Like [`run`], but over an explicit argument list (handy for tests).
pub fn exec(cli: &Cli) -> i32 {
    if let Some(n) = cli.threads {
        // A second initialization in one process is harmless: the first
        // pool wins and the result below reports the conflict, which we
        // deliberately ignore.
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global();
    }
    let result = match &cli.command {
        Command::Synth(args) => cmd_synth(args),
        Command::Train(args) => cmd_train(args),
        Command::Denoise(args) => cmd_denoise(args),
        Command::Eval(args) => cmd_eval(args),
        Command::Gradcheck(args) => cmd_gradcheck(args),
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

/// Root for *default* output locations. Explicit path flags always win.
fn out_root() -> PathBuf {
    std::env::var_os("GRUVD_OUT_ROOT")
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from("."))
}

// ---------------------------------------------------------------------------
// Flag value parsers (names match the serialized forms in config files).
// ---------------------------------------------------------------------------

fn parse_scene_kind(s: &str) -> std::result::Result<SceneKind, String> {
    match s {
        "drifting_texture" => Ok(SceneKind::DriftingTexture),
        "moving_shapes" => Ok(SceneKind::MovingShapes),
        "static" => Ok(SceneKind::Static),
        other => Err(format!(
            "unknown scene kind '{other}' (expected drifting_texture, moving_shapes, or static)"
        )),
    }
}

fn parse_cell_kind(s: &str) -> std::result::Result<CellKind, String> {
    match s {
        "gru_vd" => Ok(CellKind::GruVd),
        "gru" => Ok(CellKind::Gru),
        other => Err(format!("unknown cell '{other}' (expected gru_vd or gru)")),
    }
}

fn parse_block_kind(s: &str) -> std::result::Result<BlockKind, String> {
    match s {
        "plain" => Ok(BlockKind::Plain),
        "distill" => Ok(BlockKind::Distill),
        other => Err(format!(
            "unknown block kind '{other}' (expected plain or distill)"
        )),
    }
}

fn parse_bptt(s: &str) -> std::result::Result<Bptt, String> {
    if s == "full" {
        return Ok(Bptt::Full);
    }
    match s.parse::<usize>() {
        Ok(k) if k > 0 => Ok(Bptt::Truncated(k)),
        _ => Err(format!(
            "expected 'full' or a positive frame count, got '{s}'"
        )),
    }
}

fn parse_variant(s: &str) -> std::result::Result<Variant, String> {
    s.parse::<Variant>().map_err(|e| e.to_string())
}

/// Loads a sensor calibration profile, defaulting to the bundled synthetic
/// sensor when no path is given.
fn load_profile(path: Option<&Path>) -> Result<SensorProfile> {
    match path {
        None => Ok(SensorProfile::synthetic_default()),
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
            let profile: SensorProfile = serde_json::from_str(&text)
                .map_err(|e| Error::parse(p, e.column() as u64, e.to_string()))?;
            profile.validate()?;
            Ok(profile)
        }
    }
}

/// Resolves the noise coefficients for an observed sequence: either given
/// directly, or looked up from a calibration profile by ISO.
fn resolve_noise(
    noise_a: Option<f64>,
    noise_b: Option<f64>,
    iso: Option<u32>,
    profile: Option<&Path>,
) -> Result<NoiseParams> {
    match (noise_a, noise_b, iso) {
        (Some(a), Some(b), None) => NoiseParams::new(a, b),
        (None, None, Some(iso)) => lookup_iso(&load_profile(profile)?, iso),
        (None, None, None) => Err(Error::usage(
            "specify the noise level: --noise-a with --noise-b, or --iso (optionally with --profile)",
        )),
        _ => Err(Error::usage(
            "give either --noise-a/--noise-b or --iso, not a mixture",
        )),
    }
}

/// Extracts frame `n` of a `[T, ...]` sequence as a `[1, ...]` batch.
fn nth_frame<S: Scalar>(seq: &Tensor<S>, n: usize) -> Tensor<S> {
    let s = seq.shape();
    let stride: usize = s[1..].iter().product();
    let mut shape = s.to_vec();
    shape[0] = 1;
    Tensor::from_vec(seq.data()[n * stride..(n + 1) * stride].to_vec(), &shape)
        .expect("frame slice keeps the tail shape")
}

// ---------------------------------------------------------------------------
// synth
// ---------------------------------------------------------------------------

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Output dataset directory [default: <out-root>/data/synth].
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,

    /// Scene kind(s); comma-separate several to cycle through them.
    #[arg(
        long,
        value_parser = parse_scene_kind,
        value_delimiter = ',',
        default_value = "drifting_texture"
    )]
    pub kind: Vec<SceneKind>,

    /// Number of scenes to generate.
    #[arg(long, default_value_t = 1)]
    pub count: usize,

    /// Frames per scene.
    #[arg(long, default_value_t = 8)]
    pub frames: usize,

    /// Square frame side in pixels.
    #[arg(long, default_value_t = 64)]
    pub size: usize,

    /// Image channels: 1 (grayscale) or 3 (color).
    #[arg(long, default_value_t = 1)]
    pub channels: usize,

    /// Scene motion in pixels per frame.
    #[arg(long, default_value_t = 0.7)]
    pub motion: f64,

    /// Master seed; every generated byte is a pure function of it.
    #[arg(long, default_value_t = 7)]
    pub seed: u64,

    /// ISO recorded for every entry [default: the profile's middle entry].
    #[arg(long)]
    pub iso: Option<u32>,

    /// Sensor calibration JSON [default: the bundled synthetic sensor].
    #[arg(long, value_name = "JSON", conflicts_with_all = ["noise_a", "noise_b"])]
    pub profile: Option<PathBuf>,

    /// Shot-noise coefficient for a single-point custom profile.
    #[arg(long, requires = "noise_b")]
    pub noise_a: Option<f64>,

    /// Readout-floor coefficient for a single-point custom profile.
    #[arg(long, requires = "noise_a")]
    pub noise_b: Option<f64>,
}

/// ISO key used for the single entry of an ad-hoc `--noise-a/--noise-b`
/// profile (the value is arbitrary; lookups clamp to the lone entry).
const CUSTOM_PROFILE_ISO: u32 = 1000;

/// The profile for a synth run and the ISO recorded when `--iso` is absent.
fn synth_profile(args: &SynthArgs) -> Result<(SensorProfile, u32)> {
    if let (Some(a), Some(b)) = (args.noise_a, args.noise_b) {
        let custom = SensorProfile {
            name: "custom".to_string(),
            signal_range: SIGNAL_RANGE,
            table: vec![IsoEntry {
                iso: CUSTOM_PROFILE_ISO,
                a,
                b,
            }],
        };
        custom.validate()?;
        return Ok((custom, CUSTOM_PROFILE_ISO));
    }
    let profile = load_profile(args.profile.as_deref())?;
    let mut isos: Vec<u32> = profile.table.iter().map(|e| e.iso).collect();
    isos.sort_unstable();
    let default_iso = isos[isos.len() / 2];
    Ok((profile, default_iso))
}

fn cmd_synth(args: &SynthArgs) -> Result<()> {
    if args.count == 0 {
        return Err(Error::config("count must be positive"));
    }
    let out = args
        .out
        .clone()
        .unwrap_or_else(|| out_root().join("data").join("synth"));
    let (profile, default_iso) = synth_profile(args)?;
    let iso = args.iso.unwrap_or(default_iso);
    lookup_iso(&profile, iso)?;

    // Validate every recipe before touching the filesystem.
    let specs: Vec<SyntheticSceneSpec> = (0..args.count)
        .map(|i| SyntheticSceneSpec {
            kind: args.kind[i % args.kind.len()],
            resolution: (args.size, args.size),
            frames: args.frames,
            channels: args.channels,
            motion_px_per_frame: args.motion,
            texture_seed: mix(args.seed, i as u64),
        })
        .collect();
    for spec in &specs {
        spec.validate()?;
    }

    std::fs::create_dir_all(&out).map_err(|e| Error::io(&out, e))?;
    let mut entries = Vec::with_capacity(args.count);
    for (i, spec) in specs.iter().enumerate() {
        let scene: Tensor<f32> = generate_scene(spec)?;
        let file = format!("scene_{i:03}.gvsq");
        write_gvsq(&out.join(&file), &scene)?;
        entries.push(ManifestEntry {
            scene: *spec,
            iso,
            // A stream separate from the texture seeds, so clean content
            // and noise realizations never correlate.
            seed: mix(args.seed, 0x4E01_5E00 + i as u64),
            file,
        });
    }
    DatasetManifest { profile, entries }.save(&out)?;
    println!(
        "wrote {} scene(s) and manifest.json to {}",
        args.count,
        out.display()
    );
    Ok(())
}

// ---------------------------------------------------------------------------
// train
// ---------------------------------------------------------------------------

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Dataset directory (manifest.json plus clean sequences).
    #[arg(long, value_name = "DIR")]
    pub dataset: PathBuf,

    /// Checkpoint directory [default: <out-root>/runs/train].
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,

    /// JSON training settings (same keys as the checkpoint's
    /// train_config.json); explicit flags override it.
    #[arg(long, value_name = "JSON")]
    pub config: Option<PathBuf>,

    /// Continue from the checkpoint in --out instead of starting fresh.
    /// Only --max-epochs (to extend the budget) and --log-every may be
    /// combined with this; everything else is already fixed by the
    /// checkpoint. The report CSV covers the resumed segment.
    #[arg(long)]
    pub resume: bool,

    /// Print a loss line every N epochs (the final epoch always prints).
    #[arg(long, default_value_t = 1, value_name = "N")]
    pub log_every: u64,

    /// Frames per training clip.
    #[arg(long)]
    pub seq_len: Option<usize>,

    /// Side of the square spatial crop.
    #[arg(long)]
    pub patch: Option<usize>,

    /// Clips per batch.
    #[arg(long)]
    pub batch: Option<usize>,

    /// Initial learning rate.
    #[arg(long)]
    pub lr0: Option<f64>,

    /// Divide the learning rate every this many epochs...
    #[arg(long)]
    pub lr_decay_every: Option<u64>,

    /// ...by this factor.
    #[arg(long)]
    pub lr_decay_factor: Option<f64>,

    /// Weight of the fused-output loss term.
    #[arg(long)]
    pub w1: Option<f64>,

    /// Weight of the initial-estimate loss term.
    #[arg(long)]
    pub w2: Option<f64>,

    /// Seed for parameter init and batch sampling.
    #[arg(long)]
    pub seed: Option<u64>,

    /// Total optimizer steps.
    #[arg(long)]
    pub max_epochs: Option<u64>,

    /// Global gradient-norm clip (set to "none" in a config file to disable).
    #[arg(long)]
    pub grad_clip: Option<f64>,

    /// Save a checkpoint every this many epochs (0 = only at the end).
    #[arg(long)]
    pub checkpoint_every: Option<u64>,

    /// Gradient span through time: "full" or a frame count.
    #[arg(long, value_parser = parse_bptt)]
    pub bptt: Option<Bptt>,

    /// Cell to train: gru_vd or gru.
    #[arg(long, value_parser = parse_cell_kind)]
    pub cell: Option<CellKind>,

    /// Hidden channels of every gate network.
    #[arg(long)]
    pub hidden: Option<usize>,

    /// Convolution blocks per gate network.
    #[arg(long)]
    pub blocks: Option<usize>,

    /// Block kind: plain or distill.
    #[arg(long, value_parser = parse_block_kind)]
    pub block_kind: Option<BlockKind>,

    /// Drop the relevance map and noise level from the fusion gate's input.
    #[arg(long)]
    pub reduced_update: bool,
}

impl TrainArgs {
    /// First flag that clashes with `--resume`, if any.
    fn resume_conflict(&self) -> Option<&'static str> {
        let checks: [(&'static str, bool); 16] = [
            ("config", self.config.is_some()),
            ("seq-len", self.seq_len.is_some()),
            ("patch", self.patch.is_some()),
            ("batch", self.batch.is_some()),
            ("lr0", self.lr0.is_some()),
            ("lr-decay-every", self.lr_decay_every.is_some()),
            ("lr-decay-factor", self.lr_decay_factor.is_some()),
            ("w1", self.w1.is_some()),
            ("w2", self.w2.is_some()),
            ("seed", self.seed.is_some()),
            ("grad-clip", self.grad_clip.is_some()),
            ("checkpoint-every", self.checkpoint_every.is_some()),
            ("bptt", self.bptt.is_some()),
            ("cell", self.cell.is_some()),
            ("hidden", self.hidden.is_some()),
            ("blocks", self.blocks.is_some()),
        ];
        if let Some((name, _)) = checks.iter().find(|(_, set)| *set) {
            return Some(name);
        }
        if self.block_kind.is_some() {
            return Some("block-kind");
        }
        if self.reduced_update {
            return Some("reduced-update");
        }
        None
    }

    fn apply_schedule(&self, cfg: &mut TrainConfig) {
        if let Some(v) = self.seq_len {
            cfg.seq_len = v;
        }
        if let Some(v) = self.patch {
            cfg.patch = v;
        }
        if let Some(v) = self.batch {
            cfg.batch = v;
        }
        if let Some(v) = self.lr0 {
            cfg.lr0 = v;
        }
        if let Some(v) = self.lr_decay_every {
            cfg.lr_decay_every = v;
        }
        if let Some(v) = self.lr_decay_factor {
            cfg.lr_decay_factor = v;
        }
        if let Some(v) = self.w1 {
            cfg.w1 = v;
        }
        if let Some(v) = self.w2 {
            cfg.w2 = v;
        }
        if let Some(v) = self.seed {
            cfg.seed = v;
        }
        if let Some(v) = self.max_epochs {
            cfg.max_epochs = v;
        }
        if let Some(v) = self.grad_clip {
            cfg.grad_clip = Some(v);
        }
        if let Some(v) = self.checkpoint_every {
            cfg.checkpoint_every = v;
        }
        if let Some(v) = self.bptt {
            cfg.bptt = v;
        }
    }

    fn apply_model(&self, cfg: &mut ModelConfig) {
        if let Some(v) = self.cell {
            cfg.cell = v;
        }
        if let Some(v) = self.hidden {
            cfg.hidden_channels = v;
        }
        if let Some(v) = self.blocks {
            cfg.num_blocks = v;
        }
        if let Some(v) = self.block_kind {
            cfg.block_kind = v;
        }
        if self.reduced_update {
            cfg.reduced_update_inputs = true;
        }
    }
}

/// Reads a partial training-settings JSON over the defaults. Unknown keys
/// are rejected so typos cannot silently fall back to defaults.
fn load_train_config(path: &Path) -> Result<TrainConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let overlay: serde_json::Value = serde_json::from_str(&text)
        .map_err(|e| Error::parse(path, e.column() as u64, e.to_string()))?;
    let serde_json::Value::Object(overlay) = overlay else {
        return Err(Error::parse(
            path,
            0,
            "training settings must be a JSON object",
        ));
    };
    let mut base =
        serde_json::to_value(TrainConfig::desk_default()).expect("settings serialize to an object");
    let map = base.as_object_mut().expect("settings are a JSON object");
    for (key, value) in overlay {
        if !map.contains_key(&key) {
            return Err(Error::config(format!(
                "unknown training config key '{key}' in {}",
                path.display()
            )));
        }
        map.insert(key, value);
    }
    serde_json::from_value(base).map_err(|e| Error::parse(path, 0, e.to_string()))
}

fn cmd_train(args: &TrainArgs) -> Result<()> {
    let out = args
        .out
        .clone()
        .unwrap_or_else(|| out_root().join("runs").join("train"));

    let mut trainer: Trainer<f32> = if args.resume {
        if let Some(flag) = args.resume_conflict() {
            return Err(Error::usage(format!(
                "--{flag} cannot be combined with --resume; the checkpoint in {} already fixes it",
                out.display()
            )));
        }
        let mut t = Trainer::resume(&out)?;
        if let Some(max) = args.max_epochs {
            t.set_max_epochs(max);
        }
        t
    } else {
        let mut cfg = match &args.config {
            Some(path) => load_train_config(path)?,
            None => TrainConfig::desk_default(),
        };
        args.apply_schedule(&mut cfg);
        let manifest = DatasetManifest::load(&args.dataset)?;
        let mut model_cfg = ModelConfig::desk_default(manifest.entries[0].scene.channels);
        args.apply_model(&mut model_cfg);
        Trainer::new(model_cfg, cfg)?
    };

    let cfg = trainer.config().clone();
    // The provider stream is derived from the training seed, so a resumed
    // run rebuilds the exact same batch sequence.
    let provider = SceneProvider::<f32>::from_dataset_dir(
        &args.dataset,
        cfg.patch,
        cfg.seq_len,
        cfg.batch,
        mix(cfg.seed, 1),
    )?;
    std::fs::create_dir_all(&out).map_err(|e| Error::io(&out, e))?;

    let log_every = args.log_every.max(1);
    let last = cfg.max_epochs.saturating_sub(1);
    let report = trainer.run(&provider, Some(&out), |rec| {
        if rec.epoch % log_every == 0 || rec.epoch == last {
            println!(
                "epoch {:>6}  loss {:.6}  fused {:.6}  initial {:.6}  lr {:.3e}  {:.2}s",
                rec.epoch, rec.loss, rec.loss_fusion, rec.loss_init, rec.lr, rec.seconds
            );
        }
    })?;

    if report.records.is_empty() {
        println!(
            "nothing to do: checkpoint in {} already reached epoch {}",
            out.display(),
            trainer.next_epoch()
        );
        return Ok(());
    }
    let csv_path = out.join("train_report.csv");
    report.save_csv(&csv_path)?;
    println!(
        "finished epoch {} with loss {:.6}; checkpoint in {}, report in {}",
        trainer.next_epoch() - 1,
        report.last_loss().expect("records are non-empty"),
        out.display(),
        csv_path.display()
    );
    Ok(())
}

// ---------------------------------------------------------------------------
// denoise
// ---------------------------------------------------------------------------

#[derive(Debug, Args)]
pub struct DenoiseArgs {
    /// Checkpoint directory written by `train`.
    #[arg(long, value_name = "DIR")]
    pub checkpoint: PathBuf,

    /// Noisy input: a .gvsq file, a single PGM/PPM frame, or a directory of
    /// frames (sorted by name).
    #[arg(long, value_name = "PATH")]
    pub input: PathBuf,

    /// Output: a directory of 16-bit frames, or a .gvsq path
    /// [default: <out-root>/denoised].
    #[arg(long, value_name = "PATH")]
    pub out: Option<PathBuf>,

    /// Shot-noise coefficient of the input.
    #[arg(long, requires = "noise_b", conflicts_with_all = ["iso", "profile"])]
    pub noise_a: Option<f64>,

    /// Readout-floor coefficient of the input.
    #[arg(long, requires = "noise_a")]
    pub noise_b: Option<f64>,

    /// Look the coefficients up from a sensor profile by ISO instead.
    #[arg(long)]
    pub iso: Option<u32>,

    /// Sensor calibration JSON for --iso [default: the bundled synthetic
    /// sensor].
    #[arg(long, value_name = "JSON")]
    pub profile: Option<PathBuf>,

    /// Also write each frame's relevance map (r), fusion weight (f), and
    /// initial estimate (s) as 8-bit images under <out>/gates/ (values
    /// clipped to [0, 1]).
    #[arg(long)]
    pub dump_gates: bool,
}

/// Writes one diagnostic map (`[1, C, H, W]`, clipped to [0, 1]) as an
/// 8-bit image.
fn dump_gate<S: Scalar>(dir: &Path, frame: usize, tag: &str, map: &Tensor<S>) -> Result<()> {
    let s = map.shape().to_vec();
    let image = Tensor::from_vec(map.data().to_vec(), &s[1..])?;
    let ext = if s[1] == 1 { "pgm" } else { "ppm" };
    write_pnm(
        &dir.join(format!("frame_{frame:04}_{tag}.{ext}")),
        &image,
        BitDepth::Eight,
    )
}

fn cmd_denoise(args: &DenoiseArgs) -> Result<()> {
    let out = args
        .out
        .clone()
        .unwrap_or_else(|| out_root().join("denoised"));
    let model = load_model::<f32>(&args.checkpoint)?;
    let frames: Tensor<f32> = read_frames(&args.input)?;
    let shape = frames.shape().to_vec();
    let (t, c, h, w) = (shape[0], shape[1], shape[2], shape[3]);
    if c != model.channels() {
        return Err(Error::shape(
            "denoise",
            format!("{}-channel input to match the checkpoint", model.channels()),
            format!("{c} channels in {}", args.input.display()),
        ));
    }
    let params = resolve_noise(args.noise_a, args.noise_b, args.iso, args.profile.as_deref())?;

    let gvsq_out = out.extension().and_then(|e| e.to_str()) == Some("gvsq");
    if args.dump_gates && gvsq_out {
        return Err(Error::usage(
            "--dump-gates needs --out to be a directory, not a .gvsq file",
        ));
    }
    let gates_dir = out.join("gates");
    if args.dump_gates {
        std::fs::create_dir_all(&gates_dir).map_err(|e| Error::io(&gates_dir, e))?;
    }

    let delta = delta_from_noisy(&params, &frames);
    let mut state = init_state(&nth_frame(&frames, 0));
    let mut fused: Vec<f32> = Vec::with_capacity(frames.numel());
    for n in 0..t {
        let x = nth_frame(&frames, n);
        let d = nth_frame(&delta, n);
        let step = model.step(&x, &d, &state)?;
        fused.extend_from_slice(step.y.data());
        if args.dump_gates {
            dump_gate(&gates_dir, n, "r", &step.r)?;
            dump_gate(&gates_dir, n, "f", &step.f)?;
            dump_gate(&gates_dir, n, "s", &step.s)?;
        }
        // Detaching the carry drops each frame's history immediately;
        // forward values are unchanged.
        state = CellState {
            y_prev: step.y.detach(),
            frame_index: n + 1,
        };
    }
    write_frames(&out, &Tensor::from_vec(fused, &[t, c, h, w])?)?;
    println!(
        "denoised {t} frame(s) from {} into {}",
        args.input.display(),
        out.display()
    );
    if args.dump_gates {
        println!("gate maps in {}", gates_dir.display());
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// eval
// ---------------------------------------------------------------------------

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Checkpoint directory of the model under evaluation.
    #[arg(long, value_name = "DIR")]
    pub checkpoint: Option<PathBuf>,

    /// Checkpoint of a plain recurrent baseline (enables gru_baseline).
    #[arg(long, value_name = "DIR")]
    pub baseline: Option<PathBuf>,

    /// Dataset directory with manifest.json.
    #[arg(long, value_name = "DIR")]
    pub dataset: PathBuf,

    /// Comma-separated rows: noisy, initial_estimate (alias s_only), fused,
    /// gru_baseline, spatial_only. noisy is always included.
    #[arg(long, value_delimiter = ',', value_parser = parse_variant)]
    pub variants: Option<Vec<Variant>>,

    /// Peak signal value for PSNR.
    #[arg(long, default_value_t = 1.0)]
    pub peak: f64,

    /// Write the full per-frame report as CSV.
    #[arg(long, value_name = "CSV")]
    pub out: Option<PathBuf>,
}

fn cmd_eval(args: &EvalArgs) -> Result<()> {
    let dataset = load_eval_dataset::<f32>(&args.dataset)?;
    let model = args.checkpoint.as_deref().map(load_model::<f32>).transpose()?;
    let baseline = args.baseline.as_deref().map(load_model::<f32>).transpose()?;
    let mut variants = match &args.variants {
        Some(v) => v.clone(),
        None => default_variants(model.is_some(), baseline.is_some()),
    };
    if !variants.contains(&Variant::Noisy) {
        variants.insert(0, Variant::Noisy);
    }
    let mut seen = std::collections::HashSet::new();
    variants.retain(|v| seen.insert(*v));

    let report = evaluate(
        model.as_deref(),
        baseline.as_deref(),
        &dataset,
        &variants,
        args.peak,
    )?;
    print!("{}", report.summary_table());
    if let Some(path) = &args.out {
        report.save_csv(path)?;
        println!("report written to {}", path.display());
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// gradcheck
// ---------------------------------------------------------------------------

#[derive(Debug, Args)]
pub struct GradcheckArgs {
    /// Cell to verify: gru_vd or gru.
    #[arg(long, value_parser = parse_cell_kind)]
    pub cell: Option<CellKind>,

    /// Image channels.
    #[arg(long)]
    pub channels: Option<usize>,

    /// Hidden channels of every gate network.
    #[arg(long)]
    pub hidden: Option<usize>,

    /// Convolution blocks per gate network.
    #[arg(long)]
    pub blocks: Option<usize>,

    /// Frame height.
    #[arg(long)]
    pub height: Option<usize>,

    /// Frame width.
    #[arg(long)]
    pub width: Option<usize>,

    /// Frames in the checked sequence.
    #[arg(long)]
    pub seq_len: Option<usize>,

    /// Central-difference step.
    #[arg(long)]
    pub eps: Option<f64>,

    /// Seed for the checked model and inputs.
    #[arg(long)]
    pub seed: Option<u64>,

    /// Maximum accepted relative error.
    #[arg(long, default_value_t = 1e-4)]
    pub tolerance: f64,

    /// Test hook: corrupt one analytic gradient to prove the checker can
    /// fail.
    #[arg(long, hide = true)]
    pub inject_gradient_fault: bool,
}

fn cmd_gradcheck(args: &GradcheckArgs) -> Result<()> {
    let mut cfg = GradCheckConfig::tiny();
    if let Some(v) = args.cell {
        cfg.cell = v;
    }
    if let Some(v) = args.channels {
        cfg.channels = v;
    }
    if let Some(v) = args.hidden {
        cfg.hidden_channels = v;
    }
    if let Some(v) = args.blocks {
        cfg.num_blocks = v;
    }
    if let Some(v) = args.height {
        cfg.height = v;
    }
    if let Some(v) = args.width {
        cfg.width = v;
    }
    if let Some(v) = args.seq_len {
        cfg.seq_len = v;
    }
    if let Some(v) = args.eps {
        cfg.eps = v;
    }
    if let Some(v) = args.seed {
        cfg.seed = v;
    }
    if !(args.tolerance > 0.0) {
        return Err(Error::config(format!(
            "tolerance must be positive, got {}",
            args.tolerance
        )));
    }

    let report = check_model_gradients(&cfg, args.inject_gradient_fault)?;
    print!("{}", report.table());
    if report.passes(args.tolerance) {
        println!("PASS: every parameter gradient within {:e} relative", args.tolerance);
        Ok(())
    } else {
        Err(Error::numeric(format!(
            "gradient check failed: max relative error {:.3e} exceeds {:e}",
            report.max_rel_error, args.tolerance
        )))
    }
}
