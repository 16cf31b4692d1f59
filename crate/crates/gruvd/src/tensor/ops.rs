//! Differentiable tensor operations.
//!
//! Binary operations support exactly three input arrangements: identical
//! shapes, a one-element tensor against anything, and a per-channel
//! `[1, C, 1, 1]` tensor against `[B, C, H, W]`. Anything else is a shape
//! error — silent NumPy-style broadcasting is a classic source of wrong
//! gradients, so unsupported combinations fail loudly.

use super::{shape_string, Tensor};
use crate::error::{Error, Result};
use crate::scalar::{sigmoid, Scalar};

/// How the two operands of a binary op line up.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Align {
    Same,
    /// Left operand is one element, broadcast over the right.
    ScalarLhs,
    /// Right operand is one element, broadcast over the left.
    ScalarRhs,
    /// Left operand is `[1, C, 1, 1]`, broadcast over `[B, C, H, W]`.
    ChannelLhs,
    /// Right operand is `[1, C, 1, 1]`, broadcast over `[B, C, H, W]`.
    ChannelRhs,
}

fn is_channel_vector_for(small: &[usize], big: &[usize]) -> bool {
    small.len() == 4
        && big.len() == 4
        && small[0] == 1
        && small[2] == 1
        && small[3] == 1
        && small[1] == big[1]
}

fn alignment(op: &str, a: &[usize], b: &[usize]) -> Result<Align> {
    let an: usize = a.iter().product();
    let bn: usize = b.iter().product();
    if a == b {
        Ok(Align::Same)
    } else if bn == 1 {
        Ok(Align::ScalarRhs)
    } else if an == 1 {
        Ok(Align::ScalarLhs)
    } else if is_channel_vector_for(b, a) {
        Ok(Align::ChannelRhs)
    } else if is_channel_vector_for(a, b) {
        Ok(Align::ChannelLhs)
    } else {
        Err(Error::shape(
            op,
            format!(
                "matching shapes, a one-element operand, or a [1, C, 1, 1] channel operand against {}",
                shape_string(a)
            ),
            shape_string(b),
        ))
    }
}

/// Materializes the broadcast side to the full output length.
fn expand<S: Scalar>(small: &[S], out_shape: &[usize], align_channel: bool) -> Vec<S> {
    let numel: usize = out_shape.iter().product();
    if !align_channel {
        return vec![small[0]; numel];
    }
    let (b, c, h, w) = (out_shape[0], out_shape[1], out_shape[2], out_shape[3]);
    let hw = h * w;
    let mut out = Vec::with_capacity(numel);
    for _ in 0..b {
        for ci in 0..c {
            out.extend(std::iter::repeat(small[ci]).take(hw));
        }
    }
    out
}

/// Sums a full-size gradient back down to the broadcast operand's shape.
fn reduce<S: Scalar>(full: &[S], out_shape: &[usize], align_channel: bool) -> Vec<S> {
    if !align_channel {
        return vec![full.iter().copied().sum()];
    }
    let (b, c, h, w) = (out_shape[0], out_shape[1], out_shape[2], out_shape[3]);
    let hw = h * w;
    let mut acc = vec![S::ZERO; c];
    for bi in 0..b {
        for ci in 0..c {
            let base = (bi * c + ci) * hw;
            acc[ci] += full[base..base + hw].iter().copied().sum();
        }
    }
    acc
}

/// Shared plumbing for elementwise binary ops: aligns shapes, applies
/// `fwd` pairwise, and wraps `bwd` (which sees full-size operand views and
/// the output gradient) so broadcast operands receive reduced gradients.
fn binary_elementwise<S: Scalar>(
    name: &'static str,
    a: &Tensor<S>,
    b: &Tensor<S>,
    fwd: fn(S, S) -> S,
    bwd: fn(S, S, S) -> (S, S),
) -> Result<Tensor<S>> {
    let align = alignment(name, a.shape(), b.shape())?;
    let out_shape: Vec<usize> = match align {
        Align::Same | Align::ScalarRhs | Align::ChannelRhs => a.shape().to_vec(),
        Align::ScalarLhs | Align::ChannelLhs => b.shape().to_vec(),
    };
    let (lhs, rhs): (Vec<S>, Vec<S>) = match align {
        Align::Same => (a.data().to_vec(), b.data().to_vec()),
        Align::ScalarRhs => (a.data().to_vec(), expand(b.data(), &out_shape, false)),
        Align::ChannelRhs => (a.data().to_vec(), expand(b.data(), &out_shape, true)),
        Align::ScalarLhs => (expand(a.data(), &out_shape, false), b.data().to_vec()),
        Align::ChannelLhs => (expand(a.data(), &out_shape, true), b.data().to_vec()),
    };
    let data: Vec<S> = lhs.iter().zip(&rhs).map(|(&x, &y)| fwd(x, y)).collect();

    let shape_for_grad = out_shape.clone();
    Ok(Tensor::from_op(
        data,
        out_shape,
        name,
        vec![a.clone(), b.clone()],
        Box::new(move |_out, g| {
            let mut ga = Vec::with_capacity(g.len());
            let mut gb = Vec::with_capacity(g.len());
            for ((&x, &y), &go) in lhs.iter().zip(&rhs).zip(g) {
                let (da, db) = bwd(x, y, go);
                ga.push(da);
                gb.push(db);
            }
            let ga = match align {
                Align::Same | Align::ScalarRhs | Align::ChannelRhs => ga,
                Align::ScalarLhs => reduce(&ga, &shape_for_grad, false),
                Align::ChannelLhs => reduce(&ga, &shape_for_grad, true),
            };
            let gb = match align {
                Align::Same | Align::ScalarLhs | Align::ChannelLhs => gb,
                Align::ScalarRhs => reduce(&gb, &shape_for_grad, false),
                Align::ChannelRhs => reduce(&gb, &shape_for_grad, true),
            };
            vec![Some(ga), Some(gb)]
        }),
    ))
}

/// Shared plumbing for elementwise unary ops. `bwd` maps (input, output,
/// output gradient) to the input gradient.
fn unary_elementwise<S: Scalar>(
    name: &'static str,
    x: &Tensor<S>,
    fwd: fn(S) -> S,
    bwd: fn(S, S, S) -> S,
) -> Tensor<S> {
    let data: Vec<S> = x.data().iter().map(|&v| fwd(v)).collect();
    let input = x.data().to_vec();
    Tensor::from_op(
        data,
        x.shape().to_vec(),
        name,
        vec![x.clone()],
        Box::new(move |out, g| {
            let gx = input
                .iter()
                .zip(out.data())
                .zip(g)
                .map(|((&xi, &yi), &go)| bwd(xi, yi, go))
                .collect();
            vec![Some(gx)]
        }),
    )
}

impl<S: Scalar> Tensor<S> {
    pub fn add(&self, other: &Tensor<S>) -> Result<Tensor<S>> {
        binary_elementwise("add", self, other, |a, b| a + b, |_, _, g| (g, g))
    }

    pub fn sub(&self, other: &Tensor<S>) -> Result<Tensor<S>> {
        binary_elementwise("sub", self, other, |a, b| a - b, |_, _, g| (g, -g))
    }

    pub fn mul(&self, other: &Tensor<S>) -> Result<Tensor<S>> {
        binary_elementwise("mul", self, other, |a, b| a * b, |a, b, g| (b * g, a * g))
    }

    /// Multiplies every element by a constant.
    pub fn scale(&self, factor: S) -> Tensor<S> {
        let data = self.data().iter().map(|&v| v * factor).collect();
        Tensor::from_op(
            data,
            self.shape().to_vec(),
            "scale",
            vec![self.clone()],
            Box::new(move |_out, g| vec![Some(g.iter().map(|&v| v * factor).collect())]),
        )
    }

    pub fn neg(&self) -> Tensor<S> {
        self.scale(-S::ONE)
    }

    /// Elementwise absolute value. The derivative at zero is taken as 0,
    /// the midpoint of the subgradient interval.
    pub fn abs(&self) -> Tensor<S> {
        unary_elementwise(
            "abs",
            self,
            |v| v.abs(),
            |x, _, g| {
                if x > S::ZERO {
                    g
                } else if x < S::ZERO {
                    -g
                } else {
                    S::ZERO
                }
            },
        )
    }

    pub fn relu(&self) -> Tensor<S> {
        unary_elementwise(
            "relu",
            self,
            |v| v.max(S::ZERO),
            |x, _, g| if x > S::ZERO { g } else { S::ZERO },
        )
    }

    /// Logistic sigmoid, clamped into the open interval (0, 1); see
    /// [`crate::scalar::sigmoid`].
    pub fn sigmoid(&self) -> Tensor<S> {
        unary_elementwise("sigmoid", self, sigmoid, |_, y, g| y * (S::ONE - y) * g)
    }

    pub fn tanh(&self) -> Tensor<S> {
        unary_elementwise("tanh", self, |v| v.tanh(), |_, y, g| (S::ONE - y * y) * g)
    }

    /// Sum of all elements, as a rank-0 tensor.
    pub fn sum(&self) -> Tensor<S> {
        let total: S = self.data().iter().copied().sum();
        let n = self.numel();
        Tensor::from_op(
            vec![total],
            Vec::new(),
            "sum",
            vec![self.clone()],
            Box::new(move |_out, g| vec![Some(vec![g[0]; n])]),
        )
    }

    /// Mean of all elements, as a rank-0 tensor.
    pub fn mean(&self) -> Tensor<S> {
        let n = self.numel();
        assert!(n > 0, "mean of an empty tensor");
        let inv = S::ONE / S::from_f64(n as f64);
        let total: S = self.data().iter().copied().sum();
        Tensor::from_op(
            vec![total * inv],
            Vec::new(),
            "mean",
            vec![self.clone()],
            Box::new(move |_out, g| vec![Some(vec![g[0] * inv; n])]),
        )
    }

    /// Concatenates `[B, C_i, H, W]` tensors along the channel axis.
    pub fn concat_channels(parts: &[&Tensor<S>]) -> Result<Tensor<S>> {
        if parts.is_empty() {
            return Err(Error::usage("concat_channels needs at least one tensor"));
        }
        let first = parts[0].shape();
        if first.len() != 4 {
            return Err(Error::shape(
                "concat_channels",
                "rank-4 [B, C, H, W] tensors",
                shape_string(first),
            ));
        }
        let (b, h, w) = (first[0], first[2], first[3]);
        let mut channels = Vec::with_capacity(parts.len());
        for p in parts {
            let s = p.shape();
            if s.len() != 4 || s[0] != b || s[2] != h || s[3] != w {
                return Err(Error::shape(
                    "concat_channels",
                    format!("[{b}, C, {h}, {w}]"),
                    shape_string(s),
                ));
            }
            channels.push(s[1]);
        }
        let c_total: usize = channels.iter().sum();
        let hw = h * w;
        let mut data = Vec::with_capacity(b * c_total * hw);
        for bi in 0..b {
            for (p, &c) in parts.iter().zip(&channels) {
                let base = bi * c * hw;
                data.extend_from_slice(&p.data()[base..base + c * hw]);
            }
        }
        let parents: Vec<Tensor<S>> = parts.iter().map(|p| (*p).clone()).collect();
        Ok(Tensor::from_op(
            data,
            vec![b, c_total, h, w],
            "concat_channels",
            parents,
            Box::new(move |_out, g| {
                let mut grads: Vec<Option<Vec<S>>> = channels
                    .iter()
                    .map(|&c| Some(Vec::with_capacity(b * c * hw)))
                    .collect();
                let mut offset = 0;
                for _bi in 0..b {
                    for (gi, &c) in channels.iter().enumerate() {
                        let chunk = &g[offset..offset + c * hw];
                        grads[gi].as_mut().unwrap().extend_from_slice(chunk);
                        offset += c * hw;
                    }
                }
                grads
            }),
        ))
    }

    /// Extracts channels `[start, start + count)` of a `[B, C, H, W]` tensor.
    pub fn slice_channels(&self, start: usize, count: usize) -> Result<Tensor<S>> {
        let s = self.shape();
        if s.len() != 4 {
            return Err(Error::shape(
                "slice_channels",
                "rank-4 [B, C, H, W] tensor",
                shape_string(s),
            ));
        }
        let (b, c, h, w) = (s[0], s[1], s[2], s[3]);
        if count == 0 || start + count > c {
            return Err(Error::shape(
                "slice_channels",
                format!("channel range within 0..{c}"),
                format!("{start}..{}", start + count),
            ));
        }
        let hw = h * w;
        let mut data = Vec::with_capacity(b * count * hw);
        for bi in 0..b {
            let base = (bi * c + start) * hw;
            data.extend_from_slice(&self.data()[base..base + count * hw]);
        }
        Ok(Tensor::from_op(
            data,
            vec![b, count, h, w],
            "slice_channels",
            vec![self.clone()],
            Box::new(move |_out, g| {
                let mut gx = vec![S::ZERO; b * c * hw];
                for bi in 0..b {
                    let src = bi * count * hw;
                    let dst = (bi * c + start) * hw;
                    gx[dst..dst + count * hw].copy_from_slice(&g[src..src + count * hw]);
                }
                vec![Some(gx)]
            }),
        ))
    }

    /// Replicates a single-channel `[B, 1, H, W]` tensor to `[B, count, H, W]`.
    /// The backward pass sums gradients across the copies.
    pub fn repeat_channels(&self, count: usize) -> Result<Tensor<S>> {
        let s = self.shape();
        if s.len() != 4 || s[1] != 1 {
            return Err(Error::shape(
                "repeat_channels",
                "rank-4 [B, 1, H, W] tensor",
                shape_string(s),
            ));
        }
        if count == 0 {
            return Err(Error::usage("repeat_channels needs a positive count"));
        }
        let (b, h, w) = (s[0], s[2], s[3]);
        let hw = h * w;
        let mut data = Vec::with_capacity(b * count * hw);
        for bi in 0..b {
            let plane = &self.data()[bi * hw..(bi + 1) * hw];
            for _ in 0..count {
                data.extend_from_slice(plane);
            }
        }
        Ok(Tensor::from_op(
            data,
            vec![b, count, h, w],
            "repeat_channels",
            vec![self.clone()],
            Box::new(move |_out, g| {
                let mut gx = vec![S::ZERO; b * hw];
                for bi in 0..b {
                    for ci in 0..count {
                        let base = (bi * count + ci) * hw;
                        for (acc, &v) in gx[bi * hw..(bi + 1) * hw]
                            .iter_mut()
                            .zip(&g[base..base + hw])
                        {
                            *acc += v;
                        }
                    }
                }
                vec![Some(gx)]
            }),
        ))
    }
}

/// Convex blend `(1 - f) * a + f * b` with the result clamped to the
/// interval spanned by `a` and `b`.
///
/// For `f` in [0, 1] the exact blend always lies between `a` and `b`, but a
/// floating-point evaluation can overshoot by an ulp. Recurrent state
/// updates promise "output between previous state and candidate", so the
/// forward pass enforces it; the backward pass uses the analytic blend
/// derivatives (`d/df = b - a`, `d/da = 1 - f`, `d/db = f`), which match the
/// unclamped value everywhere the clamp is inactive — i.e. everywhere but a
/// measure-zero ulp boundary.
pub fn convex_fuse<S: Scalar>(f: &Tensor<S>, a: &Tensor<S>, b: &Tensor<S>) -> Result<Tensor<S>> {
    if f.shape() != a.shape() || f.shape() != b.shape() {
        return Err(Error::shape(
            "convex_fuse",
            format!("three tensors of shape {}", shape_string(f.shape())),
            format!(
                "{} and {}",
                shape_string(a.shape()),
                shape_string(b.shape())
            ),
        ));
    }
    let fd = f.data().to_vec();
    let ad = a.data().to_vec();
    let bd = b.data().to_vec();
    let data: Vec<S> = fd
        .iter()
        .zip(&ad)
        .zip(&bd)
        .map(|((&fi, &ai), &bi)| {
            let raw = (S::ONE - fi) * ai + fi * bi;
            raw.max(ai.min(bi)).min(ai.max(bi))
        })
        .collect();
    Ok(Tensor::from_op(
        data,
        f.shape().to_vec(),
        "convex_fuse",
        vec![f.clone(), a.clone(), b.clone()],
        Box::new(move |_out, g| {
            let mut gf = Vec::with_capacity(g.len());
            let mut ga = Vec::with_capacity(g.len());
            let mut gb = Vec::with_capacity(g.len());
            for (((&fi, &ai), &bi), &go) in fd.iter().zip(&ad).zip(&bd).zip(g) {
                gf.push((bi - ai) * go);
                ga.push((S::ONE - fi) * go);
                gb.push(fi * go);
            }
            vec![Some(gf), Some(ga), Some(gb)]
        }),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::finite_difference_check;

    fn t(data: &[f64], shape: &[usize]) -> Tensor<f64> {
        Tensor::from_vec(data.to_vec(), shape).unwrap()
    }

    #[test]
    fn add_and_mul_elementwise_values() {
        let a = t(&[1.0, 2.0, 3.0], &[3]);
        let b = t(&[10.0, 20.0, 30.0], &[3]);
        assert_eq!(a.add(&b).unwrap().data(), &[11.0, 22.0, 33.0]);
        assert_eq!(a.mul(&b).unwrap().data(), &[10.0, 40.0, 90.0]);
        assert_eq!(b.sub(&a).unwrap().data(), &[9.0, 18.0, 27.0]);
    }

    #[test]
    fn scalar_operand_broadcasts_both_ways() {
        let a = t(&[1.0, 2.0, 3.0, 4.0], &[2, 2]);
        let s = Tensor::scalar(10.0);
        assert_eq!(a.add(&s).unwrap().data(), &[11.0, 12.0, 13.0, 14.0]);
        assert_eq!(s.sub(&a).unwrap().data(), &[9.0, 8.0, 7.0, 6.0]);
        assert_eq!(s.sub(&a).unwrap().shape(), &[2, 2]);
    }

    #[test]
    fn channel_operand_broadcasts_over_batch_and_space() {
        let x = t(&(0..16).map(|v| v as f64).collect::<Vec<_>>(), &[2, 2, 2, 2]);
        let c = t(&[100.0, 200.0], &[1, 2, 1, 1]);
        let y = x.add(&c).unwrap();
        assert_eq!(y.shape(), &[2, 2, 2, 2]);
        assert_eq!(
            y.data(),
            &[
                100.0, 101.0, 102.0, 103.0, 204.0, 205.0, 206.0, 207.0, //
                108.0, 109.0, 110.0, 111.0, 212.0, 213.0, 214.0, 215.0
            ]
        );
    }

    #[test]
    fn mismatched_shapes_error_with_both_shapes_named() {
        let a = t(&[1.0, 2.0], &[2]);
        let b = t(&[1.0, 2.0, 3.0], &[3]);
        let err = a.add(&b).unwrap_err().to_string();
        assert!(err.contains("[2]"), "{err}");
        assert!(err.contains("[3]"), "{err}");
        // A [1, C, 1, 1] with the wrong C must not slip through.
        let x = t(&[0.0; 8], &[1, 2, 2, 2]);
        let c = t(&[1.0, 2.0, 3.0], &[1, 3, 1, 1]);
        assert!(x.mul(&c).is_err());
    }

    #[test]
    fn broadcast_gradients_reduce_back_to_operand_shape() {
        let x = Tensor::<f64>::param(vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0], &[1, 2, 2, 2])
            .unwrap();
        let c = Tensor::<f64>::param(vec![10.0, 20.0], &[1, 2, 1, 1]).unwrap();
        x.mul(&c).unwrap().sum().backward().unwrap();
        // d/dc sums x over batch and space per channel.
        assert_eq!(c.grad().unwrap(), vec![1.0 + 2.0 + 3.0 + 4.0, 5.0 + 6.0 + 7.0 + 8.0]);
        assert_eq!(
            x.grad().unwrap(),
            vec![10.0, 10.0, 10.0, 10.0, 20.0, 20.0, 20.0, 20.0]
        );

        let s = Tensor::<f64>::param(vec![3.0], &[1]).unwrap();
        let y = Tensor::<f64>::from_vec(vec![1.0, 2.0, 3.0], &[3]).unwrap();
        s.mul(&y).unwrap().sum().backward().unwrap();
        assert_eq!(s.grad().unwrap(), vec![6.0]);
    }

    #[test]
    fn activation_values_match_references() {
        let x = t(&[0.0, 2.0, -2.0], &[3]);
        let s = x.sigmoid();
        assert!((s.data()[0] - 0.5).abs() < 1e-15);
        assert!((s.data()[1] - 0.8807970779778823).abs() < 1e-15);
        let r = x.relu();
        assert_eq!(r.data(), &[0.0, 2.0, 0.0]);
        let h = x.tanh();
        assert!((h.data()[1] - 0.9640275800758169).abs() < 1e-15);
        assert_eq!(x.abs().data(), &[0.0, 2.0, 2.0]);
    }

    #[test]
    fn sum_and_mean_reduce_to_scalars() {
        let x = t(&[1.0, 2.0, 3.0, 4.0], &[2, 2]);
        assert_eq!(x.sum().value(), 10.0);
        assert_eq!(x.mean().value(), 2.5);
        assert_eq!(x.sum().shape(), &[] as &[usize]);
    }

    #[test]
    fn concat_and_slice_channels_round_trip() {
        let a = t(&[1.0, 2.0, 3.0, 4.0], &[2, 1, 1, 2]);
        let b = t(&[10.0, 20.0, 30.0, 40.0, 50.0, 60.0, 70.0, 80.0], &[2, 2, 1, 2]);
        let cat = Tensor::concat_channels(&[&a, &b]).unwrap();
        assert_eq!(cat.shape(), &[2, 3, 1, 2]);
        assert_eq!(
            cat.data(),
            &[1.0, 2.0, 10.0, 20.0, 30.0, 40.0, 3.0, 4.0, 50.0, 60.0, 70.0, 80.0]
        );
        let back_a = cat.slice_channels(0, 1).unwrap();
        let back_b = cat.slice_channels(1, 2).unwrap();
        assert_eq!(back_a.data(), a.data());
        assert_eq!(back_b.data(), b.data());
        // Mismatched spatial size must fail.
        let bad = t(&[0.0; 4], &[2, 1, 2, 1]);
        assert!(Tensor::concat_channels(&[&a, &bad]).is_err());
    }

    #[test]
    fn concat_backward_routes_gradients_to_sources() {
        let a = Tensor::<f64>::param(vec![1.0, 2.0], &[1, 1, 1, 2]).unwrap();
        let b = Tensor::<f64>::param(vec![3.0, 4.0, 5.0, 6.0], &[1, 2, 1, 2]).unwrap();
        let cat = Tensor::concat_channels(&[&a, &b]).unwrap();
        let w = t(&[1.0, 10.0, 100.0, 1000.0, 2.0, 20.0], &[1, 3, 1, 2]);
        cat.mul(&w).unwrap().sum().backward().unwrap();
        assert_eq!(a.grad().unwrap(), vec![1.0, 10.0]);
        assert_eq!(b.grad().unwrap(), vec![100.0, 1000.0, 2.0, 20.0]);
    }

    #[test]
    fn repeat_channels_replicates_and_sums_gradient() {
        let x = Tensor::<f64>::param(vec![1.0, 2.0], &[1, 1, 1, 2]).unwrap();
        let r = x.repeat_channels(3).unwrap();
        assert_eq!(r.shape(), &[1, 3, 1, 2]);
        assert_eq!(r.data(), &[1.0, 2.0, 1.0, 2.0, 1.0, 2.0]);
        r.sum().backward().unwrap();
        assert_eq!(x.grad().unwrap(), vec![3.0, 3.0]);
        assert!(t(&[0.0; 4], &[1, 2, 1, 2]).repeat_channels(2).is_err());
    }

    #[test]
    fn convex_fuse_matches_blend_and_stays_bounded() {
        let f = t(&[0.0, 1.0, 0.25], &[3]);
        let a = t(&[2.0, 2.0, 2.0], &[3]);
        let b = t(&[6.0, 6.0, 6.0], &[3]);
        let y = convex_fuse(&f, &a, &b).unwrap();
        assert_eq!(y.data(), &[2.0, 6.0, 3.0]);
        let err = convex_fuse(&f, &a, &t(&[1.0], &[1])).unwrap_err();
        assert_eq!(err.exit_code(), 2);
    }

    #[test]
    fn convex_fuse_gradients_are_analytic_blend_derivatives() {
        let f = Tensor::<f64>::param(vec![0.25], &[1]).unwrap();
        let a = Tensor::<f64>::param(vec![2.0], &[1]).unwrap();
        let b = Tensor::<f64>::param(vec![6.0], &[1]).unwrap();
        convex_fuse(&f, &a, &b).unwrap().sum().backward().unwrap();
        assert_eq!(f.grad().unwrap(), vec![4.0]); // b - a
        assert_eq!(a.grad().unwrap(), vec![0.75]); // 1 - f
        assert_eq!(b.grad().unwrap(), vec![0.25]); // f
    }

    /// Every differentiable op against central finite differences.
    #[test]
    fn elementwise_gradients_match_finite_differences() {
        let x0 = t(&[0.37, -1.21, 2.05, -0.64], &[4]);
        let checks: Vec<(&str, Box<dyn Fn(&Tensor<f64>) -> crate::error::Result<Tensor<f64>>>)> = vec![
            ("sigmoid", Box::new(|x: &Tensor<f64>| Ok(x.sigmoid().sum()))),
            ("tanh", Box::new(|x: &Tensor<f64>| Ok(x.tanh().sum()))),
            ("relu", Box::new(|x: &Tensor<f64>| Ok(x.relu().sum()))),
            ("abs", Box::new(|x: &Tensor<f64>| Ok(x.abs().sum()))),
            ("scale", Box::new(|x: &Tensor<f64>| Ok(x.scale(-2.5).sum()))),
            ("mean", Box::new(|x: &Tensor<f64>| Ok(x.mean()))),
            (
                "mul-self",
                Box::new(|x: &Tensor<f64>| Ok(x.mul(x)?.sum())),
            ),
            (
                "fuse",
                Box::new(|x: &Tensor<f64>| {
                    let f = x.sigmoid();
                    let a = x.scale(0.5);
                    let b = x.tanh();
                    Ok(convex_fuse(&f, &a, &b)?.sum())
                }),
            ),
        ];
        for (name, f) in checks {
            let err = finite_difference_check(&f, &x0, 1e-6).unwrap();
            assert!(err < 1e-7, "{name}: max relative error {err}");
        }
    }
}
