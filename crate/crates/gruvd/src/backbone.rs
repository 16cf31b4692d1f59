//! Convolutional gate networks.
//!
//! Each gate of the recurrent cell is a small CNN: a head convolution that
//! maps the concatenated gate inputs to a hidden width, a stack of
//! residual blocks, and a tail convolution to the output channel count,
//! followed by the gate's activation. All convolutions are 3×3 (1×1 for the
//! fuse layer of the distillation variant), stride 1, same-padding, so the
//! spatial size never changes.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::SplitMix64;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

const KERNEL: usize = 3;

/// Activation applied after the tail convolution.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Sigmoid,
    Relu,
    None,
}

impl Activation {
    pub(crate) fn apply<S: Scalar>(self, x: &Tensor<S>) -> Tensor<S> {
        match self {
            Activation::Sigmoid => x.sigmoid(),
            Activation::Relu => x.relu(),
            Activation::None => x.clone(),
        }
    }
}

/// Inner block structure.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BlockKind {
    /// conv3×3 + ReLU with a residual skip.
    Plain,
    /// Channel-split variant: a quarter of the channels bypass the
    /// convolution, the rest are processed, everything is concatenated and
    /// fused by a 1×1 convolution, with a residual skip.
    Distill,
}

/// Architecture of one gate network.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConvBlockSpec {
    pub in_channels: usize,
    pub hidden_channels: usize,
    pub out_channels: usize,
    /// Total block count including the head; `1` means head + tail only.
    pub num_blocks: usize,
    pub block_kind: BlockKind,
    pub final_activation: Activation,
}

impl ConvBlockSpec {
    pub fn validate(&self) -> Result<()> {
        if self.in_channels == 0 || self.hidden_channels == 0 || self.out_channels == 0 {
            return Err(Error::config(format!(
                "channel counts must be positive: in {}, hidden {}, out {}",
                self.in_channels, self.hidden_channels, self.out_channels
            )));
        }
        if self.num_blocks == 0 {
            return Err(Error::config("num_blocks must be at least 1"));
        }
        if self.block_kind == BlockKind::Distill && self.hidden_channels % 4 != 0 {
            return Err(Error::config(format!(
                "distill blocks split off a quarter of the channels; hidden_channels {} is not divisible by 4",
                self.hidden_channels
            )));
        }
        Ok(())
    }

    /// Closed-form parameter count. Construction asserts against this, so
    /// the architecture cannot silently drift from the documented layout.
    pub fn parameter_count(&self) -> usize {
        let (i, h, o) = (self.in_channels, self.hidden_channels, self.out_channels);
        let kk = KERNEL * KERNEL;
        let inner = match self.block_kind {
            BlockKind::Plain => h * h * kk + h,
            BlockKind::Distill => {
                let rest = h - h / 4;
                rest * rest * kk + rest + h * h + h
            }
        };
        i * h * kk + h + (self.num_blocks - 1) * inner + h * o * kk + o
    }
}

struct ConvLayer<S: Scalar> {
    w: Tensor<S>,
    b: Tensor<S>,
}

impl<S: Scalar> ConvLayer<S> {
    /// Kaiming-style init: weights scaled by sqrt(2 / fan_in), zero biases.
    fn init(out_ch: usize, in_ch: usize, k: usize, rng: &mut SplitMix64) -> Self {
        let fan_in = (in_ch * k * k) as f64;
        let std = (2.0 / fan_in).sqrt();
        ConvLayer {
            w: Tensor::randn(&[out_ch, in_ch, k, k], std, rng).require_grad(),
            b: Tensor::zeros(&[out_ch]).require_grad(),
        }
    }

    fn forward(&self, x: &Tensor<S>) -> Result<Tensor<S>> {
        let k = self.w.shape()[2];
        x.conv2d(&self.w, &self.b, 1, k / 2)
    }

    fn numel(&self) -> usize {
        self.w.numel() + self.b.numel()
    }
}

enum Block<S: Scalar> {
    Plain(ConvLayer<S>),
    Distill {
        refine: ConvLayer<S>,
        fuse: ConvLayer<S>,
    },
}

/// One gate network: head conv → inner blocks → tail conv → activation.
pub struct Backbone<S: Scalar> {
    name: String,
    spec: ConvBlockSpec,
    head: ConvLayer<S>,
    blocks: Vec<Block<S>>,
    tail: ConvLayer<S>,
}

/// Builds a gate network with deterministic initialization: the same
/// `(spec, seed)` pair always yields bit-identical parameters.
pub fn build_backbone<S: Scalar>(
    name: impl Into<String>,
    spec: ConvBlockSpec,
    seed: u64,
) -> Result<Backbone<S>> {
    spec.validate()?;
    let name = name.into();
    let mut rng = SplitMix64::new(seed);
    let h = spec.hidden_channels;
    let head = ConvLayer::init(h, spec.in_channels, KERNEL, &mut rng);
    let blocks = (1..spec.num_blocks)
        .map(|_| match spec.block_kind {
            BlockKind::Plain => Block::Plain(ConvLayer::init(h, h, KERNEL, &mut rng)),
            BlockKind::Distill => {
                let rest = h - h / 4;
                Block::Distill {
                    refine: ConvLayer::init(rest, rest, KERNEL, &mut rng),
                    fuse: ConvLayer::init(h, h, 1, &mut rng),
                }
            }
        })
        .collect::<Vec<_>>();
    let tail = ConvLayer::init(spec.out_channels, h, KERNEL, &mut rng);
    let built = Backbone {
        name,
        spec,
        head,
        blocks,
        tail,
    };
    debug_assert_eq!(
        built.actual_parameter_count(),
        spec.parameter_count(),
        "constructed layout diverged from the closed-form count"
    );
    Ok(built)
}

impl<S: Scalar> Backbone<S> {
    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn spec(&self) -> &ConvBlockSpec {
        &self.spec
    }

    /// Parameter count by walking the actual layers.
    pub fn actual_parameter_count(&self) -> usize {
        let mut n = self.head.numel() + self.tail.numel();
        for b in &self.blocks {
            n += match b {
                Block::Plain(c) => c.numel(),
                Block::Distill { refine, fuse } => refine.numel() + fuse.numel(),
            };
        }
        n
    }

    /// Runs the network on a `[B, in_channels, H, W]` tensor; spatial size
    /// is preserved and the output has `out_channels` channels.
    pub fn forward(&self, x: &Tensor<S>) -> Result<Tensor<S>> {
        let s = x.shape();
        if s.len() != 4 || s[1] != self.spec.in_channels {
            return Err(Error::shape(
                &format!("forward through {}", self.name),
                format!("[B, {}, H, W]", self.spec.in_channels),
                format!("{s:?}"),
            ));
        }
        let mut t = self.head.forward(x)?.relu();
        for b in &self.blocks {
            t = match b {
                Block::Plain(c) => t.add(&c.forward(&t)?.relu())?,
                Block::Distill { refine, fuse } => {
                    let q = self.spec.hidden_channels / 4;
                    let shortcut = t.slice_channels(0, q)?;
                    let rest = t.slice_channels(q, self.spec.hidden_channels - q)?;
                    let refined = refine.forward(&rest)?.relu();
                    let cat = Tensor::concat_channels(&[&shortcut, &refined])?;
                    t.add(&fuse.forward(&cat)?)?
                }
            };
        }
        Ok(self.spec.final_activation.apply(&self.tail.forward(&t)?))
    }

    /// Visits every parameter in a fixed order with a stable hierarchical
    /// name (`head.w`, `block1.w`, ..., `tail.b`). Checkpoints, the
    /// optimizer, and gradient checking all rely on this order.
    pub fn visit_params(&self, f: &mut dyn FnMut(String, &Tensor<S>)) {
        f("head.w".into(), &self.head.w);
        f("head.b".into(), &self.head.b);
        for (i, b) in self.blocks.iter().enumerate() {
            let n = i + 1;
            match b {
                Block::Plain(c) => {
                    f(format!("block{n}.w"), &c.w);
                    f(format!("block{n}.b"), &c.b);
                }
                Block::Distill { refine, fuse } => {
                    f(format!("block{n}.refine.w"), &refine.w);
                    f(format!("block{n}.refine.b"), &refine.b);
                    f(format!("block{n}.fuse.w"), &fuse.w);
                    f(format!("block{n}.fuse.b"), &fuse.b);
                }
            }
        }
        f("tail.w".into(), &self.tail.w);
        f("tail.b".into(), &self.tail.b);
    }

    /// Mutable visit in the same order as [`Backbone::visit_params`].
    pub fn visit_params_mut(&mut self, f: &mut dyn FnMut(String, &mut Tensor<S>)) {
        f("head.w".into(), &mut self.head.w);
        f("head.b".into(), &mut self.head.b);
        for (i, b) in self.blocks.iter_mut().enumerate() {
            let n = i + 1;
            match b {
                Block::Plain(c) => {
                    f(format!("block{n}.w"), &mut c.w);
                    f(format!("block{n}.b"), &mut c.b);
                }
                Block::Distill { refine, fuse } => {
                    f(format!("block{n}.refine.w"), &mut refine.w);
                    f(format!("block{n}.refine.b"), &mut refine.b);
                    f(format!("block{n}.fuse.w"), &mut fuse.w);
                    f(format!("block{n}.fuse.b"), &mut fuse.b);
                }
            }
        }
        f("tail.w".into(), &mut self.tail.w);
        f("tail.b".into(), &mut self.tail.b);
    }
}
