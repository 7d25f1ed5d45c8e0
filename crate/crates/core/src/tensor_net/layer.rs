use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed::Rng;

/// Activation shape. Sequences are stored channel-major, `x[c * length + t]`;
/// flat vectors use `length == 1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Shape {
    pub channels: usize,
    pub length: usize,
}

impl Shape {
    pub fn new(channels: usize, length: usize) -> Self {
        Self { channels, length }
    }

    pub fn flat(units: usize) -> Self {
        Self::new(units, 1)
    }

    pub fn size(&self) -> usize {
        self.channels * self.length
    }
}

/// Architecture description of one layer. Input channel counts are inferred
/// from the preceding layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum LayerSpec {
    #[serde(rename = "conv1d")]
    Conv1d {
        out_channels: usize,
        kernel_size: usize,
        #[serde(default = "one")]
        stride: usize,
        #[serde(default)]
        padding: usize,
    },
    #[serde(rename = "dense")]
    Dense { units: usize },
    #[serde(rename = "relu")]
    Relu,
    #[serde(rename = "maxpool1d")]
    MaxPool1d {
        kernel_size: usize,
        #[serde(default = "one")]
        stride: usize,
    },
    #[serde(rename = "globalavgpool")]
    GlobalAvgPool,
    #[serde(rename = "flatten")]
    Flatten,
    /// `inner(x) + x`, with a 1x1 convolution on the skip path when the
    /// inner stack changes the channel count.
    #[serde(rename = "residual-block")]
    Residual { layers: Vec<LayerSpec> },
}

fn one() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq)]
pub struct Conv1d {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel_size: usize,
    pub stride: usize,
    pub padding: usize,
    /// `[out][in][k]`
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub inputs: usize,
    pub units: usize,
    /// `[unit][input]`
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Residual {
    pub inner: Vec<Layer>,
    /// Input shape of every inner layer.
    pub inner_shapes: Vec<Shape>,
    pub projection: Option<Conv1d>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Layer {
    Conv1d(Conv1d),
    Dense(Dense),
    Relu,
    MaxPool1d { kernel_size: usize, stride: usize },
    GlobalAvgPool,
    Flatten,
    Residual(Residual),
}

/// Per-layer state saved by the forward pass for the backward pass.
#[derive(Debug, Clone, Default)]
pub(crate) enum LayerCache {
    #[default]
    None,
    MaxPool(Vec<usize>),
    Residual {
        inner_inputs: Vec<Vec<f64>>,
        inner_caches: Vec<LayerCache>,
    },
}

fn uniform_init(rng: &mut Rng, len: usize, fan_in: usize) -> Vec<f64> {
    let bound = (6.0 / fan_in as f64).sqrt();
    (0..len).map(|_| rng.random_range(-bound..bound)).collect()
}

impl Conv1d {
    fn new(
        in_channels: usize,
        out_channels: usize,
        kernel_size: usize,
        stride: usize,
        padding: usize,
        rng: &mut Rng,
    ) -> Self {
        let fan_in = in_channels * kernel_size;
        Self {
            in_channels,
            out_channels,
            kernel_size,
            stride,
            padding,
            weight: uniform_init(rng, out_channels * fan_in, fan_in),
            bias: vec![0.0; out_channels],
        }
    }

    fn output_len(&self, len: usize) -> Option<usize> {
        let padded = len + 2 * self.padding;
        (padded >= self.kernel_size).then(|| (padded - self.kernel_size) / self.stride + 1)
    }

    /// Output positions `t` whose tap `k` reads a real (non-padding) sample.
    fn valid_range(&self, k: usize, len: usize, out_len: usize) -> (usize, usize) {
        let (p, s) = (self.padding, self.stride);
        let lo = if k >= p { 0 } else { (p - k).div_ceil(s) };
        let hi = if len + p > k {
            out_len.min((len - 1 + p - k) / s + 1)
        } else {
            0
        };
        (lo, hi.max(lo))
    }

    fn forward(&self, x: &[f64], len: usize) -> Vec<f64> {
        let out_len = self.output_len(len).expect("validated shape");
        let mut out = vec![0.0; self.out_channels * out_len];
        let (k_size, s, p) = (self.kernel_size, self.stride, self.padding);
        for o in 0..self.out_channels {
            let row = &mut out[o * out_len..(o + 1) * out_len];
            row.fill(self.bias[o]);
            for i in 0..self.in_channels {
                let xi = &x[i * len..(i + 1) * len];
                let w = &self.weight[(o * self.in_channels + i) * k_size..][..k_size];
                for (k, &wk) in w.iter().enumerate() {
                    let (lo, hi) = self.valid_range(k, len, out_len);
                    if lo >= hi {
                        continue;
                    }
                    let start = lo * s + k - p;
                    if s == 1 {
                        for (r, &xv) in row[lo..hi].iter_mut().zip(&xi[start..start + hi - lo]) {
                            *r += wk * xv;
                        }
                    } else {
                        for (j, r) in row[lo..hi].iter_mut().enumerate() {
                            *r += wk * xi[start + j * s];
                        }
                    }
                }
            }
        }
        out
    }

    fn backward(&self, x: &[f64], len: usize, grad_out: &[f64], grads: Option<&mut [f64]>) -> Vec<f64> {
        let out_len = self.output_len(len).expect("validated shape");
        let (k_size, s, p) = (self.kernel_size, self.stride, self.padding);
        let mut grad_in = vec![0.0; x.len()];
        let mut grads = grads;
        for o in 0..self.out_channels {
            let g = &grad_out[o * out_len..(o + 1) * out_len];
            for i in 0..self.in_channels {
                let xi = &x[i * len..(i + 1) * len];
                let base = (o * self.in_channels + i) * k_size;
                for k in 0..k_size {
                    let (lo, hi) = self.valid_range(k, len, out_len);
                    if lo >= hi {
                        continue;
                    }
                    let start = lo * s + k - p;
                    let wk = self.weight[base + k];
                    let gi = &mut grad_in[i * len..(i + 1) * len];
                    let mut acc = 0.0;
                    if s == 1 {
                        let xs = &xi[start..start + hi - lo];
                        let gis = &mut gi[start..start + hi - lo];
                        for ((gv, xv), giv) in g[lo..hi].iter().zip(xs).zip(gis) {
                            acc += gv * xv;
                            *giv += wk * gv;
                        }
                    } else {
                        for (j, gv) in g[lo..hi].iter().enumerate() {
                            let idx = start + j * s;
                            acc += gv * xi[idx];
                            gi[idx] += wk * gv;
                        }
                    }
                    if let Some(gr) = grads.as_deref_mut() {
                        gr[base + k] += acc;
                    }
                }
            }
            if let Some(gr) = grads.as_deref_mut() {
                gr[self.weight.len() + o] += g.iter().sum::<f64>();
            }
        }
        grad_in
    }
}

impl Dense {
    fn new(inputs: usize, units: usize, rng: &mut Rng) -> Self {
        Self {
            inputs,
            units,
            weight: uniform_init(rng, inputs * units, inputs),
            bias: vec![0.0; units],
        }
    }

    fn forward(&self, x: &[f64]) -> Vec<f64> {
        self.weight
            .chunks_exact(self.inputs)
            .zip(&self.bias)
            .map(|(row, b)| b + row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>())
            .collect()
    }

    fn backward(&self, x: &[f64], grad_out: &[f64], grads: Option<&mut [f64]>) -> Vec<f64> {
        let mut grad_in = vec![0.0; self.inputs];
        for (row, g) in self.weight.chunks_exact(self.inputs).zip(grad_out) {
            for (gi, w) in grad_in.iter_mut().zip(row) {
                *gi += w * g;
            }
        }
        if let Some(gr) = grads {
            let (gw, gb) = gr.split_at_mut(self.weight.len());
            for (row, g) in gw.chunks_exact_mut(self.inputs).zip(grad_out) {
                for (gwv, xv) in row.iter_mut().zip(x) {
                    *gwv += g * xv;
                }
            }
            for (b, g) in gb.iter_mut().zip(grad_out) {
                *b += g;
            }
        }
        grad_in
    }
}

impl Layer {
    /// Instantiates `spec` for inputs of `input` shape and returns the layer
    /// with its output shape.
    pub fn build(spec: &LayerSpec, input: Shape, rng: &mut Rng) -> Result<(Layer, Shape)> {
        let shape_err = |what: String| Err(Error::domain(format!("{what} (input shape {input:?})")));
        match *spec {
            LayerSpec::Conv1d {
                out_channels,
                kernel_size,
                stride,
                padding,
            } => {
                if out_channels == 0 || kernel_size == 0 || stride == 0 {
                    return shape_err("conv1d needs positive channels, kernel and stride".into());
                }
                let conv = Conv1d::new(input.channels, out_channels, kernel_size, stride, padding, rng);
                match conv.output_len(input.length) {
                    Some(len) => Ok((Layer::Conv1d(conv), Shape::new(out_channels, len))),
                    None => shape_err(format!("conv1d kernel {kernel_size} longer than padded input")),
                }
            }
            LayerSpec::Dense { units } => {
                if input.length != 1 {
                    return shape_err("dense expects a flat input; add flatten or globalavgpool".into());
                }
                if units == 0 {
                    return shape_err("dense needs at least one unit".into());
                }
                Ok((Layer::Dense(Dense::new(input.channels, units, rng)), Shape::flat(units)))
            }
            LayerSpec::Relu => Ok((Layer::Relu, input)),
            LayerSpec::MaxPool1d { kernel_size, stride } => {
                if kernel_size == 0 || stride == 0 || kernel_size > input.length {
                    return shape_err(format!("invalid maxpool1d kernel {kernel_size} stride {stride}"));
                }
                let len = (input.length - kernel_size) / stride + 1;
                Ok((
                    Layer::MaxPool1d { kernel_size, stride },
                    Shape::new(input.channels, len),
                ))
            }
            LayerSpec::GlobalAvgPool => Ok((Layer::GlobalAvgPool, Shape::flat(input.channels))),
            LayerSpec::Flatten => Ok((Layer::Flatten, Shape::flat(input.size()))),
            LayerSpec::Residual { ref layers } => {
                if layers.is_empty() {
                    return shape_err("residual-block needs at least one inner layer".into());
                }
                let mut inner = Vec::with_capacity(layers.len());
                let mut inner_shapes = Vec::with_capacity(layers.len());
                let mut shape = input;
                for s in layers {
                    inner_shapes.push(shape);
                    let (layer, next) = Layer::build(s, shape, rng)?;
                    inner.push(layer);
                    shape = next;
                }
                if shape.length != input.length {
                    return shape_err(format!(
                        "residual-block inner stack maps length {} to {}",
                        input.length, shape.length
                    ));
                }
                let projection = (shape.channels != input.channels)
                    .then(|| Conv1d::new(input.channels, shape.channels, 1, 1, 0, rng));
                Ok((
                    Layer::Residual(Residual {
                        inner,
                        inner_shapes,
                        projection,
                    }),
                    shape,
                ))
            }
        }
    }

    pub fn param_count(&self) -> usize {
        match self {
            Layer::Conv1d(c) => c.weight.len() + c.bias.len(),
            Layer::Dense(d) => d.weight.len() + d.bias.len(),
            Layer::Residual(r) => {
                r.inner.iter().map(Layer::param_count).sum::<usize>()
                    + r.projection.as_ref().map_or(0, |p| p.weight.len() + p.bias.len())
            }
            _ => 0,
        }
    }

    /// Visits parameter buffers in canonical order: weights before biases,
    /// inner layers before the skip projection.
    pub fn visit_params(&self, f: &mut dyn FnMut(&[f64])) {
        match self {
            Layer::Conv1d(c) => {
                f(&c.weight);
                f(&c.bias);
            }
            Layer::Dense(d) => {
                f(&d.weight);
                f(&d.bias);
            }
            Layer::Residual(r) => {
                for l in &r.inner {
                    l.visit_params(f);
                }
                if let Some(p) = &r.projection {
                    f(&p.weight);
                    f(&p.bias);
                }
            }
            _ => {}
        }
    }

    pub fn visit_params_mut(&mut self, f: &mut dyn FnMut(&mut [f64])) {
        match self {
            Layer::Conv1d(c) => {
                f(&mut c.weight);
                f(&mut c.bias);
            }
            Layer::Dense(d) => {
                f(&mut d.weight);
                f(&mut d.bias);
            }
            Layer::Residual(r) => {
                for l in &mut r.inner {
                    l.visit_params_mut(f);
                }
                if let Some(p) = &mut r.projection {
                    f(&mut p.weight);
                    f(&mut p.bias);
                }
            }
            _ => {}
        }
    }

    pub(crate) fn forward(&self, x: &[f64], shape: Shape, cache: Option<&mut LayerCache>) -> Vec<f64> {
        match self {
            Layer::Conv1d(c) => c.forward(x, shape.length),
            Layer::Dense(d) => d.forward(x),
            Layer::Relu => x.iter().map(|v| v.max(0.0)).collect(),
            Layer::MaxPool1d { kernel_size, stride } => {
                let out_len = (shape.length - kernel_size) / stride + 1;
                let mut out = Vec::with_capacity(shape.channels * out_len);
                let mut argmax = Vec::with_capacity(if cache.is_some() { out.capacity() } else { 0 });
                for c in 0..shape.channels {
                    let xc = &x[c * shape.length..(c + 1) * shape.length];
                    for t in 0..out_len {
                        let window = &xc[t * stride..t * stride + kernel_size];
                        let mut best = 0;
                        for (j, v) in window.iter().enumerate().skip(1) {
                            if *v > window[best] {
                                best = j;
                            }
                        }
                        out.push(window[best]);
                        if cache.is_some() {
                            argmax.push(c * shape.length + t * stride + best);
                        }
                    }
                }
                if let Some(cache) = cache {
                    *cache = LayerCache::MaxPool(argmax);
                }
                out
            }
            Layer::GlobalAvgPool => x
                .chunks_exact(shape.length)
                .map(|c| c.iter().sum::<f64>() / shape.length as f64)
                .collect(),
            Layer::Flatten => x.to_vec(),
            Layer::Residual(r) => {
                let keep = cache.is_some();
                let mut inner_inputs = Vec::new();
                let mut inner_caches = Vec::new();
                let mut h = x.to_vec();
                for (layer, s) in r.inner.iter().zip(&r.inner_shapes) {
                    let mut layer_cache = LayerCache::None;
                    let next = layer.forward(&h, *s, keep.then_some(&mut layer_cache));
                    if keep {
                        inner_inputs.push(std::mem::replace(&mut h, next));
                        inner_caches.push(layer_cache);
                    } else {
                        h = next;
                    }
                }
                match &r.projection {
                    Some(p) => {
                        for (o, s) in h.iter_mut().zip(p.forward(x, shape.length)) {
                            *o += s;
                        }
                    }
                    None => {
                        for (o, s) in h.iter_mut().zip(x) {
                            *o += s;
                        }
                    }
                }
                if let Some(cache) = cache {
                    *cache = LayerCache::Residual {
                        inner_inputs,
                        inner_caches,
                    };
                }
                h
            }
        }
    }

    /// Propagates `grad_out` back to the layer input. When `grads` is given,
    /// parameter gradients are accumulated into it (length `param_count`).
    pub(crate) fn backward(
        &self,
        x: &[f64],
        shape: Shape,
        cache: &LayerCache,
        grad_out: &[f64],
        grads: Option<&mut [f64]>,
    ) -> Vec<f64> {
        match self {
            Layer::Conv1d(c) => c.backward(x, shape.length, grad_out, grads),
            Layer::Dense(d) => d.backward(x, grad_out, grads),
            Layer::Relu => x
                .iter()
                .zip(grad_out)
                .map(|(v, g)| if *v > 0.0 { *g } else { 0.0 })
                .collect(),
            Layer::MaxPool1d { .. } => {
                let LayerCache::MaxPool(argmax) = cache else {
                    panic!("maxpool backward without forward cache");
                };
                let mut grad_in = vec![0.0; x.len()];
                for (idx, g) in argmax.iter().zip(grad_out) {
                    grad_in[*idx] += g;
                }
                grad_in
            }
            Layer::GlobalAvgPool => {
                let scale = 1.0 / shape.length as f64;
                grad_out
                    .iter()
                    .flat_map(|g| std::iter::repeat_n(g * scale, shape.length))
                    .collect()
            }
            Layer::Flatten => grad_out.to_vec(),
            Layer::Residual(r) => {
                let LayerCache::Residual {
                    inner_inputs,
                    inner_caches,
                } = cache
                else {
                    panic!("residual backward without forward cache");
                };
                let mut grads = grads;
                let inner_count: usize = r.inner.iter().map(Layer::param_count).sum();
                let (mut inner_grads, proj_grads) = match grads.as_deref_mut() {
                    Some(g) => {
                        let (a, b) = g.split_at_mut(inner_count);
                        (Some(a), Some(b))
                    }
                    None => (None, None),
                };

                let mut offsets = Vec::with_capacity(r.inner.len());
                let mut acc = 0;
                for l in &r.inner {
                    offsets.push(acc);
                    acc += l.param_count();
                }
                let mut g = grad_out.to_vec();
                for (idx, layer) in r.inner.iter().enumerate().rev() {
                    let slice = inner_grads
                        .as_deref_mut()
                        .map(|s| &mut s[offsets[idx]..offsets[idx] + layer.param_count()]);
                    g = layer.backward(&inner_inputs[idx], r.inner_shapes[idx], &inner_caches[idx], &g, slice);
                }
                let skip = match &r.projection {
                    Some(p) => p.backward(x, shape.length, grad_out, proj_grads),
                    None => grad_out.to_vec(),
                };
                for (a, b) in g.iter_mut().zip(skip) {
                    *a += b;
                }
                g
            }
        }
    }
}
