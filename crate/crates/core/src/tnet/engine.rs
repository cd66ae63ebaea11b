//! Forward and backward passes over a parameter set of any float type.
//!
//! Feature maps are channel-major (`[channel][row][col]`). Each stage is
//! conv + bias, ReLU, max-pool; the template stage is an inner product of
//! the full final map with the template kernel plus a scalar bias.

use std::fmt::Debug;
use std::iter::Sum;
use std::ops::AddAssign;

use num_traits::Float;

use super::config::{StageShape, TemplateNetConfig};

pub trait Real: Float + AddAssign + Sum + Send + Sync + Debug + 'static {}
impl<T: Float + AddAssign + Sum + Send + Sync + Debug + 'static> Real for T {}

/// Weights, or gradients, laid out like the network.
///
/// Conv weights are `[filters][in_channels][kernel][kernel]`; the template
/// is `[channels][side][side]`; `template_bias` has a single element.
#[derive(Debug, Clone, PartialEq)]
pub struct Params<T> {
    pub conv_weights: Vec<Vec<T>>,
    pub conv_biases: Vec<Vec<T>>,
    pub template: Vec<T>,
    pub template_bias: Vec<T>,
}

impl<T: Real> Params<T> {
    pub fn zeros(cfg: &TemplateNetConfig) -> Params<T> {
        let shapes = cfg.stage_shapes().expect("validated config");
        let (tc, ts) = cfg.template_shape().expect("validated config");
        Params {
            conv_weights: cfg
                .layers
                .iter()
                .zip(&shapes)
                .map(|(l, s)| vec![T::zero(); l.filters * s.in_channels * l.kernel * l.kernel])
                .collect(),
            conv_biases: cfg.layers.iter().map(|l| vec![T::zero(); l.filters]).collect(),
            template: vec![T::zero(); tc * ts * ts],
            template_bias: vec![T::zero()],
        }
    }

    /// Every tensor in canonical order: per stage weight then bias, then
    /// template and template bias.
    pub fn tensors(&self) -> Vec<&[T]> {
        let mut out = Vec::with_capacity(2 * self.conv_weights.len() + 2);
        for (w, b) in self.conv_weights.iter().zip(&self.conv_biases) {
            out.push(w.as_slice());
            out.push(b.as_slice());
        }
        out.push(&self.template);
        out.push(&self.template_bias);
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut [T]> {
        let mut out = Vec::with_capacity(2 * self.conv_weights.len() + 2);
        for (w, b) in self.conv_weights.iter_mut().zip(self.conv_biases.iter_mut()) {
            out.push(w.as_mut_slice());
            out.push(b.as_mut_slice());
        }
        out.push(&mut self.template);
        out.push(&mut self.template_bias);
        out
    }

    pub fn len(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn cast<U: Real>(&self) -> Params<U> {
        let conv = |v: &Vec<T>| v.iter().map(|&x| U::from(x).expect("finite")).collect();
        Params {
            conv_weights: self.conv_weights.iter().map(conv).collect(),
            conv_biases: self.conv_biases.iter().map(conv).collect(),
            template: conv(&self.template),
            template_bias: conv(&self.template_bias),
        }
    }

    /// `self += other`, element-wise.
    pub fn add_assign(&mut self, other: &Params<T>) {
        for (dst, src) in self.tensors_mut().into_iter().zip(other.tensors()) {
            for (d, &s) in dst.iter_mut().zip(src) {
                *d += s;
            }
        }
    }
}

/// Intermediate values of one forward pass, kept for backprop.
pub struct Trace<T> {
    /// Input to each stage.
    stage_inputs: Vec<Vec<T>>,
    /// Conv output before ReLU, per stage.
    pre_activations: Vec<Vec<T>>,
    /// For each pooled output, the flat index of its winning conv output.
    pool_argmax: Vec<Vec<usize>>,
    features: Vec<T>,
    pub logit: T,
}

impl<T: Real> Trace<T> {
    /// Which pre-activations are positive and which element won each pool
    /// window. The loss is smooth in the parameters wherever this is fixed.
    pub fn pattern(&self) -> (Vec<bool>, Vec<usize>) {
        let active = self.pre_activations.iter().flatten().map(|&v| v > T::zero()).collect();
        let winners = self.pool_argmax.iter().flatten().copied().collect();
        (active, winners)
    }
}

pub fn forward<T: Real>(cfg: &TemplateNetConfig, shapes: &[StageShape], params: &Params<T>, input: Vec<T>) -> Trace<T> {
    let mut stage_inputs = Vec::with_capacity(shapes.len());
    let mut pre_activations = Vec::with_capacity(shapes.len());
    let mut pool_argmax = Vec::with_capacity(shapes.len());
    let mut current = input;
    for (i, shape) in shapes.iter().enumerate() {
        let spec = &cfg.layers[i];
        let pre = conv_forward(
            &current,
            &params.conv_weights[i],
            &params.conv_biases[i],
            shape,
            spec.filters,
            spec.kernel,
            spec.stride,
            spec.padding,
        );
        let (pooled, argmax) = relu_pool(&pre, spec.filters, shape.conv_side, shape.pool);
        stage_inputs.push(std::mem::replace(&mut current, pooled));
        pre_activations.push(pre);
        pool_argmax.push(argmax);
    }
    let logit = params.template_bias[0]
        + params
            .template
            .iter()
            .zip(&current)
            .map(|(&w, &x)| w * x)
            .sum::<T>();
    Trace {
        stage_inputs,
        pre_activations,
        pool_argmax,
        features: current,
        logit,
    }
}

/// Gradient of the loss with respect to every parameter, given the loss
/// gradient at the template output (`d_logit`).
pub fn backward<T: Real>(
    cfg: &TemplateNetConfig,
    shapes: &[StageShape],
    params: &Params<T>,
    trace: &Trace<T>,
    d_logit: T,
) -> Params<T> {
    let mut grads = Params::zeros(cfg);
    for (g, &x) in grads.template.iter_mut().zip(&trace.features) {
        *g = d_logit * x;
    }
    grads.template_bias[0] = d_logit;
    let mut d_out: Vec<T> = params.template.iter().map(|&w| w * d_logit).collect();

    for i in (0..shapes.len()).rev() {
        let shape = &shapes[i];
        let spec = &cfg.layers[i];
        // Unpool and ReLU: route each output gradient to its argmax, then
        // keep it only where the pre-activation was positive.
        let pre = &trace.pre_activations[i];
        let mut d_pre = vec![T::zero(); pre.len()];
        for (&src, &g) in trace.pool_argmax[i].iter().zip(&d_out) {
            if pre[src] > T::zero() {
                d_pre[src] += g;
            }
        }
        let need_input_grad = i > 0;
        d_out = conv_backward(
            &trace.stage_inputs[i],
            &params.conv_weights[i],
            &d_pre,
            shape,
            spec.filters,
            spec.kernel,
            spec.stride,
            spec.padding,
            &mut grads.conv_weights[i],
            &mut grads.conv_biases[i],
            need_input_grad,
        );
    }
    grads
}

/// Output positions `ox` whose input column `ox * stride + k - pad` is in
/// `[0, len)`.
#[inline]
fn valid_range(len: usize, out_len: usize, k: usize, stride: usize, pad: usize) -> std::ops::Range<usize> {
    let (len, k, stride, pad) = (len as isize, k as isize, stride as isize, pad as isize);
    let lo = if pad > k { (pad - k + stride - 1) / stride } else { 0 };
    let hi_num = len - 1 + pad - k;
    let hi = if hi_num < 0 { -1 } else { hi_num / stride };
    let hi = hi.min(out_len as isize - 1);
    if hi < lo {
        0..0
    } else {
        lo as usize..(hi + 1) as usize
    }
}

#[allow(clippy::too_many_arguments)]
fn conv_forward<T: Real>(
    input: &[T],
    weights: &[T],
    bias: &[T],
    shape: &StageShape,
    filters: usize,
    kernel: usize,
    stride: usize,
    pad: usize,
) -> Vec<T> {
    let (in_c, in_n, out_n) = (shape.in_channels, shape.in_side, shape.conv_side);
    let plane = out_n * out_n;
    let mut out = vec![T::zero(); filters * plane];
    for f in 0..filters {
        let out_f = &mut out[f * plane..(f + 1) * plane];
        out_f.fill(bias[f]);
        for c in 0..in_c {
            let in_plane = &input[c * in_n * in_n..(c + 1) * in_n * in_n];
            for ky in 0..kernel {
                let rows = valid_range(in_n, out_n, ky, stride, pad);
                for kx in 0..kernel {
                    let w = weights[((f * in_c + c) * kernel + ky) * kernel + kx];
                    let cols = valid_range(in_n, out_n, kx, stride, pad);
                    if cols.is_empty() {
                        continue;
                    }
                    let x0 = cols.start * stride + kx - pad;
                    for oy in rows.clone() {
                        let iy = oy * stride + ky - pad;
                        let src = &in_plane[iy * in_n..(iy + 1) * in_n];
                        let dst = &mut out_f[oy * out_n + cols.start..oy * out_n + cols.end];
                        let n = dst.len();
                        if stride == 1 {
                            for (d, &s) in dst.iter_mut().zip(&src[x0..x0 + n]) {
                                *d += w * s;
                            }
                        } else {
                            for (d, &s) in dst.iter_mut().zip(src[x0..].iter().step_by(stride)) {
                                *d += w * s;
                            }
                        }
                    }
                }
            }
        }
    }
    out
}

#[allow(clippy::too_many_arguments)]
fn conv_backward<T: Real>(
    input: &[T],
    weights: &[T],
    d_pre: &[T],
    shape: &StageShape,
    filters: usize,
    kernel: usize,
    stride: usize,
    pad: usize,
    d_weights: &mut [T],
    d_bias: &mut [T],
    need_input_grad: bool,
) -> Vec<T> {
    let (in_c, in_n, out_n) = (shape.in_channels, shape.in_side, shape.conv_side);
    let plane = out_n * out_n;
    let mut d_input = if need_input_grad {
        vec![T::zero(); input.len()]
    } else {
        Vec::new()
    };
    for f in 0..filters {
        let g_f = &d_pre[f * plane..(f + 1) * plane];
        d_bias[f] = g_f.iter().copied().sum();
        for c in 0..in_c {
            let in_range = c * in_n * in_n..(c + 1) * in_n * in_n;
            for ky in 0..kernel {
                let rows = valid_range(in_n, out_n, ky, stride, pad);
                for kx in 0..kernel {
                    let cols = valid_range(in_n, out_n, kx, stride, pad);
                    if cols.is_empty() {
                        continue;
                    }
                    let widx = ((f * in_c + c) * kernel + ky) * kernel + kx;
                    let w = weights[widx];
                    let x0 = cols.start * stride + kx - pad;
                    let mut acc = T::zero();
                    for oy in rows.clone() {
                        let iy = oy * stride + ky - pad;
                        let row_start = in_range.start + iy * in_n;
                        let g = &g_f[oy * out_n + cols.start..oy * out_n + cols.end];
                        let src = &input[row_start..row_start + in_n];
                        if stride == 1 {
                            acc += g.iter().zip(&src[x0..x0 + g.len()]).map(|(&a, &b)| a * b).sum::<T>();
                        } else {
                            acc += g
                                .iter()
                                .zip(src[x0..].iter().step_by(stride))
                                .map(|(&a, &b)| a * b)
                                .sum::<T>();
                        }
                        if need_input_grad {
                            let dst = &mut d_input[row_start..row_start + in_n];
                            for (j, &gv) in g.iter().enumerate() {
                                dst[x0 + j * stride] += w * gv;
                            }
                        }
                    }
                    d_weights[widx] = acc;
                }
            }
        }
    }
    d_input
}

/// ReLU followed by non-overlapping max-pooling. Ties go to the first
/// element in row-major window order.
fn relu_pool<T: Real>(pre: &[T], channels: usize, side: usize, pool: usize) -> (Vec<T>, Vec<usize>) {
    let out_side = side / pool;
    let mut out = Vec::with_capacity(channels * out_side * out_side);
    let mut argmax = Vec::with_capacity(out.capacity());
    for c in 0..channels {
        let base = c * side * side;
        for oy in 0..out_side {
            for ox in 0..out_side {
                let mut best_idx = base + (oy * pool) * side + ox * pool;
                let mut best = pre[best_idx].max(T::zero());
                for dy in 0..pool {
                    for dx in 0..pool {
                        let idx = base + (oy * pool + dy) * side + ox * pool + dx;
                        let v = pre[idx].max(T::zero());
                        if v > best {
                            best = v;
                            best_idx = idx;
                        }
                    }
                }
                out.push(best);
                argmax.push(best_idx);
            }
        }
    }
    (out, argmax)
}
