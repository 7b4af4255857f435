//! Small convolutional building blocks for frame-level classification:
//! valid cross-correlation layers, leaky rectifier, Lp/max pooling,
//! dense stages with a sigmoid head, and analytic gradients of the
//! binary cross-entropy loss checked against finite differences.

use ndarray::{Array1, Array2, Array3, Array4};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use std::fmt::Write as FmtWrite;

use crate::error::{Error, Result};

pub const DEFAULT_LEAKY_SLOPE: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    LeakyRelu,
    Sigmoid,
}

/// Per-frequency-bin affine normalization of the input map.
#[derive(Debug, Clone)]
pub struct InputNorm {
    pub gamma: Array1<f64>,
    pub beta: Array1<f64>,
}

/// Valid (no padding, stride 1) cross-correlation layer with bias,
/// leaky rectifier and an optional trailing max pool.
#[derive(Debug, Clone)]
pub struct ConvLayer {
    /// out_channels x in_channels x kh x kw
    pub weights: Array4<f64>,
    pub bias: Array1<f64>,
    pub pool: Option<(usize, usize)>,
}

#[derive(Debug, Clone)]
pub struct DenseLayer {
    /// out x in
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
    pub activation: Activation,
}

#[derive(Debug, Clone)]
pub struct Network {
    pub input_bins: usize,
    pub input_frames: usize,
    pub norm: InputNorm,
    pub conv: Vec<ConvLayer>,
    pub dense: Vec<DenseLayer>,
    pub leaky_slope: f64,
}

/// Layer layout shared by the two stock architectures: four 3x3 conv
/// layers with channel widths 32, 16, 32, 16 and a pool after the
/// second and fourth.
#[derive(Debug, Clone)]
pub struct NetworkSpec {
    pub input_bins: usize,
    pub input_frames: usize,
    pub pool: (usize, usize),
    pub dense_hidden: Vec<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Architecture {
    /// one hidden dense layer of width 32
    SmallOne,
    /// two hidden dense layers of widths 64 and 16
    SmallTwo,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ParameterCount {
    pub input_norm: usize,
    pub conv: usize,
    pub dense: usize,
}

impl ParameterCount {
    pub fn total(&self) -> usize {
        self.input_norm + self.conv + self.dense
    }
}

pub fn leaky_relu(x: f64, slope: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        slope * x
    }
}

fn leaky_relu_deriv(x: f64, slope: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else {
        slope
    }
}

pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Valid cross-correlation plus bias; no activation.
pub fn conv_forward(input: &Array3<f64>, layer: &ConvLayer) -> Result<Array3<f64>> {
    let (cin, h, w) = input.dim();
    let (cout, cin_w, kh, kw) = layer.weights.dim();
    if cin != cin_w {
        return Err(Error::ShapeMismatch(format!(
            "conv expects {cin_w} input channels, got {cin}"
        )));
    }
    if h < kh || w < kw {
        return Err(Error::ShapeMismatch(format!(
            "input {h}x{w} smaller than kernel {kh}x{kw}"
        )));
    }
    if layer.bias.len() != cout {
        return Err(Error::LengthMismatch {
            expected: cout,
            got: layer.bias.len(),
        });
    }
    let (oh, ow) = (h - kh + 1, w - kw + 1);
    let mut out = Array3::zeros((cout, oh, ow));
    for co in 0..cout {
        for i in 0..oh {
            for j in 0..ow {
                let mut acc = layer.bias[co];
                for ci in 0..cin {
                    for di in 0..kh {
                        for dj in 0..kw {
                            acc += layer.weights[(co, ci, di, dj)] * input[(ci, i + di, j + dj)];
                        }
                    }
                }
                out[(co, i, j)] = acc;
            }
        }
    }
    Ok(out)
}

/// Full layer per the standard block: valid cross-correlation, bias,
/// leaky rectifier, then the optional max pool.
pub fn conv_layer_forward(
    input: &Array3<f64>,
    layer: &ConvLayer,
    slope: f64,
) -> Result<Array3<f64>> {
    let post = conv_forward(input, layer)?.mapv(|v| leaky_relu(v, slope));
    match layer.pool {
        Some((ph, pw)) => max_pool(&post, ph, pw),
        None => Ok(post),
    }
}

/// Lp pooling over non-overlapping ph x pw blocks (trailing partial
/// blocks are dropped): `(sum |x|^p)^(1/p)`.
pub fn lp_pool(input: &Array3<f64>, ph: usize, pw: usize, p: f64) -> Result<Array3<f64>> {
    if ph == 0 || pw == 0 || !(p >= 1.0) {
        return Err(Error::InvalidParameter(format!(
            "bad pool parameters {ph}x{pw}, p = {p}"
        )));
    }
    let (c, h, w) = input.dim();
    if ph > h || pw > w {
        return Err(Error::ShapeMismatch(format!(
            "pool {ph}x{pw} exceeds map {h}x{w}"
        )));
    }
    let (oh, ow) = (h / ph, w / pw);
    let mut out = Array3::zeros((c, oh, ow));
    for ch in 0..c {
        for i in 0..oh {
            for j in 0..ow {
                let mut acc = 0.0;
                for di in 0..ph {
                    for dj in 0..pw {
                        acc += input[(ch, i * ph + di, j * pw + dj)].abs().powf(p);
                    }
                }
                out[(ch, i, j)] = acc.powf(1.0 / p);
            }
        }
    }
    Ok(out)
}

/// Max pooling over non-overlapping blocks; ties resolve to the first
/// element in row-major block order.
pub fn max_pool(input: &Array3<f64>, ph: usize, pw: usize) -> Result<Array3<f64>> {
    Ok(max_pool_with_argmax(input, ph, pw)?.0)
}

fn max_pool_with_argmax(
    input: &Array3<f64>,
    ph: usize,
    pw: usize,
) -> Result<(Array3<f64>, Array3<(usize, usize)>)> {
    if ph == 0 || pw == 0 {
        return Err(Error::InvalidParameter("zero pool size".into()));
    }
    let (c, h, w) = input.dim();
    if ph > h || pw > w {
        return Err(Error::ShapeMismatch(format!(
            "pool {ph}x{pw} exceeds map {h}x{w}"
        )));
    }
    let (oh, ow) = (h / ph, w / pw);
    let mut out = Array3::zeros((c, oh, ow));
    let mut arg = Array3::from_elem((c, oh, ow), (0usize, 0usize));
    for ch in 0..c {
        for i in 0..oh {
            for j in 0..ow {
                let mut best = f64::NEG_INFINITY;
                let mut at = (0, 0);
                for di in 0..ph {
                    for dj in 0..pw {
                        let v = input[(ch, i * ph + di, j * pw + dj)];
                        if v > best {
                            best = v;
                            at = (i * ph + di, j * pw + dj);
                        }
                    }
                }
                out[(ch, i, j)] = best;
                arg[(ch, i, j)] = at;
            }
        }
    }
    Ok((out, arg))
}

pub fn dense_forward(input: &Array1<f64>, layer: &DenseLayer, slope: f64) -> Result<Array1<f64>> {
    if input.len() != layer.weights.ncols() {
        return Err(Error::LengthMismatch {
            expected: layer.weights.ncols(),
            got: input.len(),
        });
    }
    let z = layer.weights.dot(input) + &layer.bias;
    Ok(match layer.activation {
        Activation::LeakyRelu => z.mapv(|v| leaky_relu(v, slope)),
        Activation::Sigmoid => z.mapv(sigmoid),
    })
}

fn stock_conv_widths() -> [(usize, usize, bool); 4] {
    // (in, out, pooled after)
    [(1, 32, false), (32, 16, true), (16, 32, false), (32, 16, true)]
}

/// Output shape after the convolutional stack, and the flattened size.
pub fn conv_stack_shape(spec: &NetworkSpec) -> Result<(usize, usize, usize)> {
    let (ph, pw) = spec.pool;
    let (mut h, mut w) = (spec.input_bins, spec.input_frames);
    let mut channels = 1;
    for (_, out, pooled) in stock_conv_widths() {
        if h < 3 || w < 3 {
            return Err(Error::ShapeMismatch(format!(
                "feature map {h}x{w} too small for a 3x3 kernel"
            )));
        }
        h -= 2;
        w -= 2;
        channels = out;
        if pooled {
            h /= ph;
            w /= pw;
            if h == 0 || w == 0 {
                return Err(Error::ShapeMismatch(
                    "feature map vanished under pooling".into(),
                ));
            }
        }
    }
    Ok((channels, h, w))
}

/// Seeded Glorot-style initialization of the standard layer layout.
pub fn build_network(spec: &NetworkSpec, seed: u64) -> Result<Network> {
    let (c, h, w) = conv_stack_shape(spec)?;
    let flat = c * h * w;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut init = |fan_in: usize, fan_out: usize| {
        let scale = (6.0 / (fan_in + fan_out) as f64).sqrt();
        rng.gen_range(-scale..scale)
    };
    let conv = stock_conv_widths()
        .iter()
        .map(|&(cin, cout, pooled)| ConvLayer {
            weights: Array4::from_shape_fn((cout, cin, 3, 3), |_| init(cin * 9, cout * 9)),
            bias: Array1::zeros(cout),
            pool: pooled.then_some(spec.pool),
        })
        .collect();
    let mut dense = Vec::new();
    let mut prev = flat;
    for &width in &spec.dense_hidden {
        dense.push(DenseLayer {
            weights: Array2::from_shape_fn((width, prev), |_| init(prev, width)),
            bias: Array1::zeros(width),
            activation: Activation::LeakyRelu,
        });
        prev = width;
    }
    dense.push(DenseLayer {
        weights: Array2::from_shape_fn((1, prev), |_| init(prev, 1)),
        bias: Array1::zeros(1),
        activation: Activation::Sigmoid,
    });
    Ok(Network {
        input_bins: spec.input_bins,
        input_frames: spec.input_frames,
        norm: InputNorm {
            gamma: Array1::ones(spec.input_bins),
            beta: Array1::zeros(spec.input_bins),
        },
        conv,
        dense,
        leaky_slope: DEFAULT_LEAKY_SLOPE,
    })
}

/// Stock architectures on 80 x 115 inputs with 3x3 pools.
pub fn build_architecture(arch: Architecture, seed: u64) -> Result<Network> {
    let hidden = match arch {
        Architecture::SmallOne => vec![32],
        Architecture::SmallTwo => vec![64, 16],
    };
    build_network(
        &NetworkSpec {
            input_bins: 80,
            input_frames: 115,
            pool: (3, 3),
            dense_hidden: hidden,
        },
        seed,
    )
}

pub fn parameter_count(net: &Network) -> ParameterCount {
    let conv = net
        .conv
        .iter()
        .map(|l| l.weights.len() + l.bias.len())
        .sum();
    let dense = net
        .dense
        .iter()
        .map(|l| l.weights.len() + l.bias.len())
        .sum();
    ParameterCount {
        input_norm: net.norm.gamma.len() + net.norm.beta.len(),
        conv,
        dense,
    }
}

struct ForwardTrace {
    normalized: Array3<f64>,
    // per conv layer: pre-activation, post-activation (pre-pool), argmax
    conv_pre: Vec<Array3<f64>>,
    conv_post: Vec<Array3<f64>>,
    pool_arg: Vec<Option<Array3<(usize, usize)>>>,
    pooled: Vec<Array3<f64>>,
    dense_pre: Vec<Array1<f64>>,
    dense_out: Vec<Array1<f64>>,
}

fn forward_trace(net: &Network, input: &Array2<f64>) -> Result<ForwardTrace> {
    if input.dim() != (net.input_bins, net.input_frames) {
        return Err(Error::ShapeMismatch(format!(
            "input {:?}, network expects {}x{}",
            input.dim(),
            net.input_bins,
            net.input_frames
        )));
    }
    let mut normalized = Array3::zeros((1, net.input_bins, net.input_frames));
    for i in 0..net.input_bins {
        for j in 0..net.input_frames {
            normalized[(0, i, j)] = net.norm.gamma[i] * input[(i, j)] + net.norm.beta[i];
        }
    }
    let mut conv_pre = Vec::new();
    let mut conv_post = Vec::new();
    let mut pool_arg = Vec::new();
    let mut pooled = Vec::new();
    let mut current = normalized.clone();
    for layer in &net.conv {
        let pre = conv_forward(&current, layer)?;
        let post = pre.mapv(|v| leaky_relu(v, net.leaky_slope));
        let (next, arg) = match layer.pool {
            Some((ph, pw)) => {
                let (out, arg) = max_pool_with_argmax(&post, ph, pw)?;
                (out, Some(arg))
            }
            None => (post.clone(), None),
        };
        conv_pre.push(pre);
        conv_post.push(post);
        pool_arg.push(arg);
        pooled.push(next.clone());
        current = next;
    }
    let mut vec_in = Array1::from_iter(current.iter().copied());
    let mut dense_pre = Vec::new();
    let mut dense_out = Vec::new();
    for layer in &net.dense {
        if vec_in.len() != layer.weights.ncols() {
            return Err(Error::LengthMismatch {
                expected: layer.weights.ncols(),
                got: vec_in.len(),
            });
        }
        let z = layer.weights.dot(&vec_in) + &layer.bias;
        let out = match layer.activation {
            Activation::LeakyRelu => z.mapv(|v| leaky_relu(v, net.leaky_slope)),
            Activation::Sigmoid => z.mapv(sigmoid),
        };
        dense_pre.push(z);
        dense_out.push(out.clone());
        vec_in = out;
    }
    Ok(ForwardTrace {
        normalized,
        conv_pre,
        conv_post,
        pool_arg,
        pooled,
        dense_pre,
        dense_out,
    })
}

/// Detection probability for a single input map.
pub fn network_forward(net: &Network, input: &Array2<f64>) -> Result<f64> {
    let trace = forward_trace(net, input)?;
    Ok(trace.dense_out.last().unwrap()[0])
}

/// Binary cross-entropy of the network output against a 0/1 label.
pub fn bce_loss(p: f64, label: f64) -> f64 {
    -(label * p.ln() + (1.0 - label) * (1.0 - p).ln())
}

#[derive(Debug, Clone)]
pub struct Gradients {
    pub gamma: Array1<f64>,
    pub beta: Array1<f64>,
    pub conv_weights: Vec<Array4<f64>>,
    pub conv_bias: Vec<Array1<f64>>,
    pub dense_weights: Vec<Array2<f64>>,
    pub dense_bias: Vec<Array1<f64>>,
    pub loss: f64,
    pub probability: f64,
}

/// Analytic gradient of the BCE loss with respect to every parameter.
pub fn network_gradient(net: &Network, input: &Array2<f64>, label: f64) -> Result<Gradients> {
    if !(0.0..=1.0).contains(&label) {
        return Err(Error::InvalidParameter(format!("label {label} not in [0, 1]")));
    }
    let trace = forward_trace(net, input)?;
    let p = trace.dense_out.last().unwrap()[0];
    let loss = bce_loss(p, label);

    let mut dense_weights = vec![Array2::zeros((0, 0)); net.dense.len()];
    let mut dense_bias = vec![Array1::zeros(0); net.dense.len()];
    // head: dL/dz = p - y for sigmoid + BCE
    let mut delta = Array1::from_elem(1, p - label);
    for idx in (0..net.dense.len()).rev() {
        let layer = &net.dense[idx];
        if idx < net.dense.len() - 1 {
            // delta currently holds dL/d(output); fold in the activation
            let pre = &trace.dense_pre[idx];
            delta = Array1::from_shape_fn(delta.len(), |i| {
                delta[i] * leaky_relu_deriv(pre[i], net.leaky_slope)
            });
        }
        let layer_input: Array1<f64> = if idx == 0 {
            Array1::from_iter(trace.pooled.last().unwrap().iter().copied())
        } else {
            trace.dense_out[idx - 1].clone()
        };
        let mut wgrad = Array2::zeros(layer.weights.dim());
        for r in 0..layer.weights.nrows() {
            for c in 0..layer.weights.ncols() {
                wgrad[(r, c)] = delta[r] * layer_input[c];
            }
        }
        dense_weights[idx] = wgrad;
        dense_bias[idx] = delta.clone();
        delta = layer.weights.t().dot(&delta);
    }

    // reshape the flat gradient back onto the last pooled map
    let last_shape = trace.pooled.last().unwrap().dim();
    let mut grad_map = Array3::zeros(last_shape);
    for (g, v) in grad_map.iter_mut().zip(delta.iter()) {
        *g = *v;
    }

    let mut conv_weights = vec![Array4::zeros((0, 0, 0, 0)); net.conv.len()];
    let mut conv_bias = vec![Array1::zeros(0); net.conv.len()];
    for idx in (0..net.conv.len()).rev() {
        let layer = &net.conv[idx];
        // undo pooling: route gradient to the argmax positions
        let mut grad_post = Array3::zeros(trace.conv_post[idx].dim());
        match &trace.pool_arg[idx] {
            Some(arg) => {
                let (c, oh, ow) = grad_map.dim();
                for ch in 0..c {
                    for i in 0..oh {
                        for j in 0..ow {
                            let (ai, aj) = arg[(ch, i, j)];
                            grad_post[(ch, ai, aj)] += grad_map[(ch, i, j)];
                        }
                    }
                }
            }
            None => grad_post = grad_map,
        }
        // activation
        let pre = &trace.conv_pre[idx];
        let grad_pre = Array3::from_shape_fn(pre.dim(), |ix| {
            grad_post[ix] * leaky_relu_deriv(pre[ix], net.leaky_slope)
        });
        let layer_input = if idx == 0 {
            &trace.normalized
        } else {
            &trace.pooled[idx - 1]
        };
        let (cout, cin, kh, kw) = layer.weights.dim();
        let (_, oh, ow) = grad_pre.dim();
        let mut wgrad = Array4::zeros((cout, cin, kh, kw));
        let mut bgrad = Array1::zeros(cout);
        let mut grad_input = Array3::zeros(layer_input.dim());
        for co in 0..cout {
            for i in 0..oh {
                for j in 0..ow {
                    let d = grad_pre[(co, i, j)];
                    if d == 0.0 {
                        continue;
                    }
                    bgrad[co] += d;
                    for ci in 0..cin {
                        for di in 0..kh {
                            for dj in 0..kw {
                                wgrad[(co, ci, di, dj)] += d * layer_input[(ci, i + di, j + dj)];
                                grad_input[(ci, i + di, j + dj)] +=
                                    d * layer.weights[(co, ci, di, dj)];
                            }
                        }
                    }
                }
            }
        }
        conv_weights[idx] = wgrad;
        conv_bias[idx] = bgrad;
        grad_map = grad_input;
    }

    // input normalization: x_norm(i, j) = gamma[i] x(i, j) + beta[i]
    let mut gamma = Array1::zeros(net.input_bins);
    let mut beta = Array1::zeros(net.input_bins);
    for i in 0..net.input_bins {
        for j in 0..net.input_frames {
            gamma[i] += grad_map[(0, i, j)] * input[(i, j)];
            beta[i] += grad_map[(0, i, j)];
        }
    }

    Ok(Gradients {
        gamma,
        beta,
        conv_weights,
        conv_bias,
        dense_weights,
        dense_bias,
        loss,
        probability: p,
    })
}

/// Human-readable layer table with output shapes and parameter counts.
pub fn summary(net: &Network) -> String {
    let mut s = String::new();
    let mut shape = (1usize, net.input_bins, net.input_frames);
    let _ = writeln!(s, "layer              output shape      params");
    let _ = writeln!(
        s,
        "input-norm         {:>3}x{:>3}x{:>3}   {:>8}",
        shape.0,
        shape.1,
        shape.2,
        net.norm.gamma.len() + net.norm.beta.len()
    );
    for (i, layer) in net.conv.iter().enumerate() {
        let (cout, _, kh, kw) = layer.weights.dim();
        shape = (cout, shape.1 - kh + 1, shape.2 - kw + 1);
        let _ = writeln!(
            s,
            "conv{} {}x{}          {:>3}x{:>3}x{:>3}   {:>8}",
            i + 1,
            kh,
            kw,
            shape.0,
            shape.1,
            shape.2,
            layer.weights.len() + layer.bias.len()
        );
        if let Some((ph, pw)) = layer.pool {
            shape = (shape.0, shape.1 / ph, shape.2 / pw);
            let _ = writeln!(
                s,
                "maxpool {}x{}        {:>3}x{:>3}x{:>3}   {:>8}",
                ph, pw, shape.0, shape.1, shape.2, 0
            );
        }
    }
    let _ = writeln!(
        s,
        "flatten            {:>11}   {:>8}",
        shape.0 * shape.1 * shape.2,
        0
    );
    for (i, layer) in net.dense.iter().enumerate() {
        let _ = writeln!(
            s,
            "dense{} ({})   {:>11}   {:>8}",
            i + 1,
            match layer.activation {
                Activation::LeakyRelu => "leaky",
                Activation::Sigmoid => "sigm.",
            },
            layer.weights.nrows(),
            layer.weights.len() + layer.bias.len()
        );
    }
    let counts = parameter_count(net);
    let _ = writeln!(s, "total params: {}", counts.total());
    s
}
