//! Primitive tensor operations for the inference network.
//!
//! All operations are pure: accumulation runs in f64 for stability, storage
//! is f32, and parallel loops split over independent output cells so results
//! are identical for every thread count.

use rayon::prelude::*;

use super::weights::WeightTensor;
use super::NetworkError;

/// Dense (channels, vertical, time) activation block, row-major with time
/// fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub data: Vec<f32>,
}

impl Tensor {
    pub fn zeros(channels: usize, height: usize, width: usize) -> Self {
        Self { channels, height, width, data: vec![0.0; channels * height * width] }
    }

    pub fn from_data(
        channels: usize,
        height: usize,
        width: usize,
        data: Vec<f32>,
    ) -> Result<Self, NetworkError> {
        if data.len() != channels * height * width {
            return Err(NetworkError::Shape {
                what: "tensor construction".into(),
                expected: format!("{} values for {channels}x{height}x{width}", channels * height * width),
                got: format!("{}", data.len()),
            });
        }
        Ok(Self { channels, height, width, data })
    }

    #[inline]
    pub fn idx(&self, c: usize, v: usize, t: usize) -> usize {
        (c * self.height + v) * self.width + t
    }

    #[inline]
    pub fn get(&self, c: usize, v: usize, t: usize) -> f32 {
        self.data[self.idx(c, v, t)]
    }

    #[inline]
    pub fn set(&mut self, c: usize, v: usize, t: usize, value: f32) {
        let i = self.idx(c, v, t);
        self.data[i] = value;
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        (self.channels, self.height, self.width)
    }

    fn plane(&self) -> usize {
        self.height * self.width
    }
}

fn shape_err(what: &str, expected: String, got: String) -> NetworkError {
    NetworkError::Shape { what: what.into(), expected, got }
}

/// 2-D convolution with zero padding, unit stride, and optional dilation on
/// the time axis. Weight layout is `[out_ch, in_ch, k_vert, k_time]`.
pub fn conv2d(
    x: &Tensor,
    weight: &WeightTensor,
    bias: Option<&WeightTensor>,
    pad_v: usize,
    pad_t: usize,
    dil_t: usize,
) -> Result<Tensor, NetworkError> {
    if weight.dims.len() != 4 {
        return Err(shape_err("conv2d weight", "rank 4".into(), format!("{:?}", weight.dims)));
    }
    let (co, ci, kv, kt) = (weight.dims[0], weight.dims[1], weight.dims[2], weight.dims[3]);
    if ci != x.channels {
        return Err(shape_err(
            "conv2d input channels",
            format!("{ci} (weight {:?})", weight.dims),
            format!("{} (input {:?})", x.channels, x.shape()),
        ));
    }
    if let Some(b) = bias {
        if b.dims != [co] {
            return Err(shape_err("conv2d bias", format!("[{co}]"), format!("{:?}", b.dims)));
        }
    }
    let span_v = kv; // no vertical dilation
    let span_t = dil_t * (kt - 1) + 1;
    let oh = (x.height + 2 * pad_v).checked_sub(span_v).map(|d| d + 1).ok_or_else(|| {
        shape_err("conv2d height", format!(">= {span_v}"), format!("{}", x.height + 2 * pad_v))
    })?;
    let ow = (x.width + 2 * pad_t).checked_sub(span_t).map(|d| d + 1).ok_or_else(|| {
        shape_err("conv2d width", format!(">= {span_t}"), format!("{}", x.width + 2 * pad_t))
    })?;

    let mut out = Tensor::zeros(co, oh, ow);
    let plane = oh * ow;
    out.data
        .par_chunks_mut(plane)
        .enumerate()
        .for_each(|(c_out, chunk)| {
            let b = bias.map_or(0.0, |b| b.data[c_out] as f64);
            for ov in 0..oh {
                for ot in 0..ow {
                    let mut acc = b;
                    for c_in in 0..ci {
                        for j in 0..kv {
                            let iv = ov + j;
                            if iv < pad_v || iv - pad_v >= x.height {
                                continue;
                            }
                            let iv = iv - pad_v;
                            for l in 0..kt {
                                let it = ot + l * dil_t;
                                if it < pad_t || it - pad_t >= x.width {
                                    continue;
                                }
                                let w = weight.data[((c_out * ci + c_in) * kv + j) * kt + l];
                                acc += w as f64 * x.get(c_in, iv, it - pad_t) as f64;
                            }
                        }
                    }
                    chunk[ov * ow + ot] = acc as f32;
                }
            }
        });
    Ok(out)
}

/// Per-channel vertical convolution without padding: each channel owns one
/// `k_vert`-tap kernel, collapsing `height` to `height - k_vert + 1`.
pub fn depthwise_valid(
    x: &Tensor,
    weight: &WeightTensor,
    bias: &WeightTensor,
) -> Result<Tensor, NetworkError> {
    if weight.dims.len() != 2 || weight.dims[0] != x.channels {
        return Err(shape_err(
            "depthwise weight",
            format!("[{}, k]", x.channels),
            format!("{:?}", weight.dims),
        ));
    }
    let k = weight.dims[1];
    if bias.dims != [x.channels] {
        return Err(shape_err("depthwise bias", format!("[{}]", x.channels), format!("{:?}", bias.dims)));
    }
    if x.height < k {
        return Err(shape_err("depthwise height", format!(">= {k}"), format!("{}", x.height)));
    }
    let oh = x.height - k + 1;
    let mut out = Tensor::zeros(x.channels, oh, x.width);
    let plane = oh * x.width;
    out.data.par_chunks_mut(plane).enumerate().for_each(|(c, chunk)| {
        for ov in 0..oh {
            for t in 0..x.width {
                let mut acc = bias.data[c] as f64;
                for j in 0..k {
                    acc += weight.data[c * k + j] as f64 * x.get(c, ov + j, t) as f64;
                }
                chunk[ov * x.width + t] = acc as f32;
            }
        }
    });
    Ok(out)
}

/// Normalization with independent statistics for every (channel, vertical)
/// pair; parameter tensors are `[channels, height]`.
pub fn sbn(
    x: &Tensor,
    gamma: &WeightTensor,
    beta: &WeightTensor,
    mean: &WeightTensor,
    var: &WeightTensor,
    eps: f64,
) -> Result<Tensor, NetworkError> {
    let want = [x.channels, x.height];
    for (name, t) in [("gamma", gamma), ("beta", beta), ("mean", mean), ("var", var)] {
        if t.dims != want {
            return Err(shape_err(
                &format!("sbn {name}"),
                format!("{want:?}"),
                format!("{:?} (input {:?})", t.dims, x.shape()),
            ));
        }
    }
    let mut out = x.clone();
    out.data.par_chunks_mut(x.width).enumerate().for_each(|(row, chunk)| {
        let g = gamma.data[row] as f64;
        let b = beta.data[row] as f64;
        let m = mean.data[row] as f64;
        let s = (var.data[row] as f64 + eps).sqrt();
        for v in chunk.iter_mut() {
            *v = ((g * (*v as f64 - m) / s) + b) as f32;
        }
    });
    Ok(out)
}

/// Channel gate: global average pool, a two-layer perceptron, and a sigmoid
/// scale per channel. `fc1` is `[hidden, channels]`, `fc2` is
/// `[channels, hidden]`.
pub fn channel_attention(
    x: &Tensor,
    fc1_w: &WeightTensor,
    fc1_b: &WeightTensor,
    fc2_w: &WeightTensor,
    fc2_b: &WeightTensor,
    slope: f64,
) -> Result<Tensor, NetworkError> {
    let c = x.channels;
    if fc1_w.dims.len() != 2 || fc1_w.dims[1] != c {
        return Err(shape_err("attention fc1", format!("[hidden, {c}]"), format!("{:?}", fc1_w.dims)));
    }
    let hidden = fc1_w.dims[0];
    if fc1_b.dims != [hidden] || fc2_w.dims != [c, hidden] || fc2_b.dims != [c] {
        return Err(shape_err(
            "attention fc2",
            format!("[{c}, {hidden}] with biases [{hidden}] and [{c}]"),
            format!("{:?}/{:?}/{:?}", fc1_b.dims, fc2_w.dims, fc2_b.dims),
        ));
    }
    let plane = x.plane() as f64;
    let pooled: Vec<f64> = (0..c)
        .map(|ch| {
            let start = ch * x.plane();
            x.data[start..start + x.plane()].iter().map(|&v| v as f64).sum::<f64>() / plane
        })
        .collect();
    let hidden_act: Vec<f64> = (0..hidden)
        .map(|h| {
            let mut acc = fc1_b.data[h] as f64;
            for ch in 0..c {
                acc += fc1_w.data[h * c + ch] as f64 * pooled[ch];
            }
            if acc < 0.0 {
                acc * slope
            } else {
                acc
            }
        })
        .collect();
    let gates: Vec<f32> = (0..c)
        .map(|ch| {
            let mut acc = fc2_b.data[ch] as f64;
            for h in 0..hidden {
                acc += fc2_w.data[ch * hidden + h] as f64 * hidden_act[h];
            }
            (1.0 / (1.0 + (-acc).exp())) as f32
        })
        .collect();
    let mut out = x.clone();
    let plane = x.plane();
    out.data.par_chunks_mut(plane).enumerate().for_each(|(ch, chunk)| {
        for v in chunk.iter_mut() {
            *v *= gates[ch];
        }
    });
    Ok(out)
}

pub fn leaky_relu(x: &Tensor, slope: f64) -> Tensor {
    let mut out = x.clone();
    for v in &mut out.data {
        if *v < 0.0 {
            *v = (*v as f64 * slope) as f32;
        }
    }
    out
}

pub fn sigmoid(x: &Tensor) -> Tensor {
    let mut out = x.clone();
    for v in &mut out.data {
        *v = (1.0 / (1.0 + (-(*v as f64)).exp())) as f32;
    }
    out
}

/// Residual sum; both sides must agree in shape.
pub fn add(a: &Tensor, b: &Tensor) -> Result<Tensor, NetworkError> {
    if a.shape() != b.shape() {
        return Err(shape_err("residual add", format!("{:?}", a.shape()), format!("{:?}", b.shape())));
    }
    let mut out = a.clone();
    for (o, &v) in out.data.iter_mut().zip(&b.data) {
        *o += v;
    }
    Ok(out)
}

pub fn concat_channels(a: &Tensor, b: &Tensor) -> Result<Tensor, NetworkError> {
    if a.height != b.height || a.width != b.width {
        return Err(shape_err(
            "channel concat",
            format!("{}x{}", a.height, a.width),
            format!("{}x{}", b.height, b.width),
        ));
    }
    let mut data = Vec::with_capacity(a.data.len() + b.data.len());
    data.extend_from_slice(&a.data);
    data.extend_from_slice(&b.data);
    Ok(Tensor { channels: a.channels + b.channels, height: a.height, width: a.width, data })
}

/// Dropout acts only during training; inference passes activations through.
pub fn dropout_inference(x: &Tensor) -> Tensor {
    x.clone()
}
