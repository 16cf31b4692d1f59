//! Synthetic video scenes.
//!
//! Desk-scale stand-ins for real captured footage: a band-limited texture
//! drifting with sub-pixel motion (exercises temporal fusion under motion),
//! rigid shapes moving over a flat background (sharp occlusion edges), and a
//! static scene (pure temporal accumulation). All values live in [0, 1] and
//! every scene is a pure function of its spec.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{mix, SplitMix64};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SceneKind {
    /// Smooth random texture translating diagonally at a sub-pixel rate.
    DriftingTexture,
    /// Rigid bright shapes moving over a flat background.
    MovingShapes,
    /// Frame 0 repeated verbatim.
    Static,
}

/// Deterministic recipe for one clean scene.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSceneSpec {
    pub kind: SceneKind,
    /// (height, width) in pixels.
    pub resolution: (usize, usize),
    pub frames: usize,
    /// 1 (grayscale) or 3 (color).
    pub channels: usize,
    pub motion_px_per_frame: f64,
    pub texture_seed: u64,
}

impl SyntheticSceneSpec {
    pub fn validate(&self) -> Result<()> {
        let (h, w) = self.resolution;
        if h == 0 || w == 0 {
            return Err(Error::config(format!(
                "scene resolution must be positive, got {h}x{w}"
            )));
        }
        if self.frames == 0 {
            return Err(Error::config("scene needs at least one frame"));
        }
        if self.channels != 1 && self.channels != 3 {
            return Err(Error::config(format!(
                "channels must be 1 or 3, got {}",
                self.channels
            )));
        }
        if !self.motion_px_per_frame.is_finite() {
            return Err(Error::config("motion_px_per_frame must be finite"));
        }
        Ok(())
    }
}

/// Renders the clean sequence `[T, C, H, W]` a spec describes.
pub fn generate_scene<S: Scalar>(spec: &SyntheticSceneSpec) -> Result<Tensor<S>> {
    spec.validate()?;
    let (h, w) = spec.resolution;
    let (t, c) = (spec.frames, spec.channels);
    let data = match spec.kind {
        SceneKind::DriftingTexture => drifting_texture(spec),
        SceneKind::Static => {
            let one = SyntheticSceneSpec {
                frames: 1,
                ..*spec
            };
            let frame = drifting_texture(&one);
            let mut all = Vec::with_capacity(t * frame.len());
            for _ in 0..t {
                all.extend_from_slice(&frame);
            }
            all
        }
        SceneKind::MovingShapes => moving_shapes(spec),
    };
    Tensor::from_vec(data.into_iter().map(S::from_f64).collect(), &[t, c, h, w])
}

/// Smooth canvas texture: white noise, repeatedly box-blurred, min-max
/// normalized to [0, 1].
fn smooth_canvas(seed: u64, ch: usize, height: usize, width: usize) -> Vec<f64> {
    let mut rng = SplitMix64::new(mix(seed, ch as u64));
    let mut canvas: Vec<f64> = (0..height * width).map(|_| rng.next_f64()).collect();
    // Three passes of a radius-2 separable box blur approximate a Gaussian
    // well enough to kill pixel-level noise while keeping broad structure.
    let radius = 2usize;
    let mut tmp = vec![0.0; canvas.len()];
    for _ in 0..3 {
        for y in 0..height {
            for x in 0..width {
                let lo = x.saturating_sub(radius);
                let hi = (x + radius).min(width - 1);
                let sum: f64 = canvas[y * width + lo..=y * width + hi].iter().sum();
                tmp[y * width + x] = sum / (hi - lo + 1) as f64;
            }
        }
        for x in 0..width {
            for y in 0..height {
                let lo = y.saturating_sub(radius);
                let hi = (y + radius).min(height - 1);
                let mut sum = 0.0;
                for yy in lo..=hi {
                    sum += tmp[yy * width + x];
                }
                canvas[y * width + x] = sum / (hi - lo + 1) as f64;
            }
        }
    }
    let (mut min, mut max) = (f64::INFINITY, f64::NEG_INFINITY);
    for &v in &canvas {
        min = min.min(v);
        max = max.max(v);
    }
    let span = (max - min).max(1e-12);
    for v in &mut canvas {
        *v = (*v - min) / span;
    }
    canvas
}

fn drifting_texture(spec: &SyntheticSceneSpec) -> Vec<f64> {
    let (h, w) = spec.resolution;
    let (t, c) = (spec.frames, spec.channels);
    let m = spec.motion_px_per_frame.abs();
    // The sampling window slides diagonally by `motion` per frame; the
    // canvas is padded so every bilinear read stays in bounds.
    let max_shift = (m * (t.saturating_sub(1)) as f64).ceil() as usize + 2;
    let (ch_canvas, cw_canvas) = (h + max_shift, w + max_shift);
    let canvases: Vec<Vec<f64>> = (0..c)
        .map(|ci| smooth_canvas(spec.texture_seed, ci, ch_canvas, cw_canvas))
        .collect();

    let mut out = Vec::with_capacity(t * c * h * w);
    for ti in 0..t {
        let off = m * ti as f64;
        for canvas in &canvases {
            for y in 0..h {
                for x in 0..w {
                    out.push(bilinear(canvas, cw_canvas, y as f64 + off, x as f64 + off));
                }
            }
        }
    }
    out
}

/// Bilinear sample at (fy, fx); callers guarantee the 2×2 neighborhood is
/// inside the canvas.
fn bilinear(canvas: &[f64], width: usize, fy: f64, fx: f64) -> f64 {
    let y0 = fy.floor() as usize;
    let x0 = fx.floor() as usize;
    let dy = fy - y0 as f64;
    let dx = fx - x0 as f64;
    let at = |y: usize, x: usize| canvas[y * width + x];
    (1.0 - dy) * ((1.0 - dx) * at(y0, x0) + dx * at(y0, x0 + 1))
        + dy * ((1.0 - dx) * at(y0 + 1, x0) + dx * at(y0 + 1, x0 + 1))
}

struct Shape {
    disk: bool,
    cy: f64,
    cx: f64,
    half: f64,
    vy: f64,
    vx: f64,
    color: [f64; 3],
}

fn moving_shapes(spec: &SyntheticSceneSpec) -> Vec<f64> {
    let (h, w) = spec.resolution;
    let (t, c) = (spec.frames, spec.channels);
    let mut rng = SplitMix64::new(mix(spec.texture_seed, 0xB0D1));
    let speed = spec.motion_px_per_frame;
    let count = 5;
    let shapes: Vec<Shape> = (0..count)
        .map(|_| {
            let angle = rng.next_range(0.0, std::f64::consts::TAU);
            Shape {
                disk: rng.next_below(2) == 0,
                cy: rng.next_range(0.0, h as f64),
                cx: rng.next_range(0.0, w as f64),
                half: rng.next_range(h.min(w) as f64 / 8.0, h.min(w) as f64 / 3.5),
                vy: speed * angle.sin(),
                vx: speed * angle.cos(),
                color: [
                    rng.next_range(0.35, 1.0),
                    rng.next_range(0.35, 1.0),
                    rng.next_range(0.35, 1.0),
                ],
            }
        })
        .collect();

    let background = 0.2;
    let mut out = Vec::with_capacity(t * c * h * w);
    for ti in 0..t {
        for ci in 0..c {
            for y in 0..h {
                for x in 0..w {
                    let mut v = background;
                    for s in &shapes {
                        let cy = s.cy + s.vy * ti as f64;
                        let cx = s.cx + s.vx * ti as f64;
                        let dy = y as f64 - cy;
                        let dx = x as f64 - cx;
                        let inside = if s.disk {
                            dy * dy + dx * dx <= s.half * s.half
                        } else {
                            dy.abs() <= s.half && dx.abs() <= s.half
                        };
                        if inside {
                            v = s.color[ci.min(2)];
                        }
                    }
                    out.push(v.clamp(0.0, 1.0));
                }
            }
        }
    }
    out
}
