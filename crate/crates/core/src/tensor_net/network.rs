use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::layer::{Layer, LayerCache, LayerSpec, Shape};
use crate::error::{Error, Result};
use crate::seed::rng_from_seed;

/// Examples per gradient chunk. Chunk results are reduced in index order, so
/// batch gradients do not depend on the thread count.
const GRAD_CHUNK: usize = 8;

/// Serializable architecture: everything needed to rebuild a network except
/// its parameter values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Architecture {
    pub input_length: usize,
    pub input_channels: usize,
    pub num_classes: usize,
    pub layers: Vec<LayerSpec>,
}

/// A layered 1D network `F = F^L o ... o F^1` producing `num_classes` logits.
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    architecture: Architecture,
    layers: Vec<Layer>,
    /// `shapes[l]` is the input shape of layer `l`; the last entry is the
    /// logit shape.
    shapes: Vec<Shape>,
}

/// Activations captured during one forward pass.
///
/// Entry `l` is `F^[l](x)`, the input of layer `l` (0-based), so entry 0 is
/// the raw input and entry `L - 1` feeds the output layer.
#[derive(Debug, Clone, PartialEq)]
pub struct ActivationTrace {
    pub activations: Vec<Vec<f64>>,
    pub shapes: Vec<Shape>,
}

impl ActivationTrace {
    pub fn len(&self) -> usize {
        self.activations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.activations.is_empty()
    }

    pub fn get(&self, layer: usize) -> Option<&[f64]> {
        self.activations.get(layer).map(Vec::as_slice)
    }
}

struct ForwardPass {
    inputs: Vec<Vec<f64>>,
    caches: Vec<LayerCache>,
    logits: Vec<f64>,
}

/// Mean cross-entropy over a batch and its parameter gradient.
#[derive(Debug, Clone, PartialEq)]
pub struct LossGradient {
    pub loss: f64,
    /// Flattened in the order of [`Network::params`].
    pub gradient: Vec<f64>,
}

/// Numerically stable softmax.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exp: Vec<f64> = logits.iter().map(|z| (z - max).exp()).collect();
    let sum: f64 = exp.iter().sum();
    exp.into_iter().map(|e| e / sum).collect()
}

/// Cross-entropy of softmax(logits) against `label`.
pub fn cross_entropy(logits: &[f64], label: usize) -> f64 {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + logits.iter().map(|z| (z - max).exp()).sum::<f64>().ln();
    lse - logits[label]
}

/// Index of the largest logit; ties go to the lowest index.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate().skip(1) {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

impl Network {
    /// Builds and initializes a network. Weights are drawn from a fan-in
    /// scaled uniform distribution seeded by `seed`; biases start at zero.
    pub fn new(architecture: Architecture, seed: u64) -> Result<Self> {
        let Architecture {
            input_length,
            input_channels,
            num_classes,
            ..
        } = architecture;
        if input_length == 0 || input_channels == 0 || num_classes == 0 {
            return Err(Error::domain("network dimensions must be positive"));
        }
        if architecture.layers.is_empty() {
            return Err(Error::domain("network needs at least one layer"));
        }
        let mut rng = rng_from_seed(seed);
        let mut shape = Shape::new(input_channels, input_length);
        let mut shapes = vec![shape];
        let mut layers = Vec::with_capacity(architecture.layers.len());
        for spec in &architecture.layers {
            let (layer, next) = Layer::build(spec, shape, &mut rng)?;
            layers.push(layer);
            shapes.push(next);
            shape = next;
        }
        if shape.length != 1 || shape.channels != num_classes {
            return Err(Error::domain(format!(
                "network emits shape {shape:?}, expected {num_classes} flat logits"
            )));
        }
        Ok(Self {
            architecture,
            layers,
            shapes,
        })
    }

    pub fn architecture(&self) -> &Architecture {
        &self.architecture
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    /// Number of top-level layers `L`.
    pub fn depth(&self) -> usize {
        self.layers.len()
    }

    pub fn num_classes(&self) -> usize {
        self.architecture.num_classes
    }

    pub fn input_size(&self) -> usize {
        self.shapes[0].size()
    }

    /// Shape of trace entry `layer`.
    pub fn activation_shape(&self, layer: usize) -> Option<Shape> {
        (layer < self.depth()).then(|| self.shapes[layer])
    }

    /// Index of the penultimate activation `F^[L-1]`, the input of the
    /// output layer.
    pub fn penultimate_layer(&self) -> usize {
        self.depth() - 1
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(Layer::param_count).sum()
    }

    pub fn params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        for l in &self.layers {
            l.visit_params(&mut |p| out.extend_from_slice(p));
        }
        out
    }

    pub fn set_params(&mut self, values: &[f64]) -> Result<()> {
        if values.len() != self.param_count() {
            return Err(Error::domain(format!(
                "expected {} parameters, got {}",
                self.param_count(),
                values.len()
            )));
        }
        let mut offset = 0;
        for l in &mut self.layers {
            l.visit_params_mut(&mut |p| {
                p.copy_from_slice(&values[offset..offset + p.len()]);
                offset += p.len();
            });
        }
        Ok(())
    }

    /// Applies `update(params, grads)` buffer by buffer, in canonical order.
    pub fn update_params(&mut self, gradient: &[f64], update: &mut dyn FnMut(usize, &mut [f64], &[f64])) {
        let mut offset = 0;
        for l in &mut self.layers {
            l.visit_params_mut(&mut |p| {
                update(offset, p, &gradient[offset..offset + p.len()]);
                offset += p.len();
            });
        }
    }

    fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.input_size() {
            return Err(Error::domain(format!(
                "input has {} values, network expects {}",
                x.len(),
                self.input_size()
            )));
        }
        Ok(())
    }

    fn run(&self, x: &[f64], keep_caches: bool) -> ForwardPass {
        let mut inputs = Vec::with_capacity(self.depth());
        let mut caches = Vec::with_capacity(self.depth());
        let mut h = x.to_vec();
        for (layer, shape) in self.layers.iter().zip(&self.shapes) {
            let mut cache = LayerCache::None;
            let next = layer.forward(&h, *shape, keep_caches.then_some(&mut cache));
            inputs.push(std::mem::replace(&mut h, next));
            caches.push(cache);
        }
        ForwardPass {
            inputs,
            caches,
            logits: h,
        }
    }

    /// Logits `F(x)` together with every intermediate activation.
    pub fn forward(&self, x: &[f64]) -> Result<(Vec<f64>, ActivationTrace)> {
        self.check_input(x)?;
        let pass = self.run(x, false);
        let trace = ActivationTrace {
            activations: pass.inputs,
            shapes: self.shapes[..self.depth()].to_vec(),
        };
        Ok((pass.logits, trace))
    }

    /// Logits only, without retaining intermediate activations.
    pub fn logits(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_input(x)?;
        let mut h = x.to_vec();
        for (layer, shape) in self.layers.iter().zip(&self.shapes) {
            h = layer.forward(&h, *shape, None);
        }
        Ok(h)
    }

    /// Activation `F^[layer](x)` without computing later layers.
    pub fn activation(&self, x: &[f64], layer: usize) -> Result<Vec<f64>> {
        self.check_input(x)?;
        self.check_layer(layer)?;
        let mut h = x.to_vec();
        for (l, shape) in self.layers[..layer].iter().zip(&self.shapes) {
            h = l.forward(&h, *shape, None);
        }
        Ok(h)
    }

    /// Runs layers `layer..L` on an activation of trace entry `layer`.
    pub fn forward_from(&self, layer: usize, activation: &[f64]) -> Result<Vec<f64>> {
        self.check_layer(layer)?;
        if activation.len() != self.shapes[layer].size() {
            return Err(Error::domain(format!(
                "activation has {} values, layer {layer} expects {}",
                activation.len(),
                self.shapes[layer].size()
            )));
        }
        let mut h = activation.to_vec();
        for (l, shape) in self.layers[layer..].iter().zip(&self.shapes[layer..]) {
            h = l.forward(&h, *shape, None);
        }
        Ok(h)
    }

    fn check_layer(&self, layer: usize) -> Result<()> {
        if layer >= self.depth() {
            return Err(Error::domain(format!(
                "layer {layer} out of range for depth {}",
                self.depth()
            )));
        }
        Ok(())
    }

    fn check_class(&self, class: usize) -> Result<()> {
        if class >= self.num_classes() {
            return Err(Error::domain(format!(
                "class {class} out of range for {} classes",
                self.num_classes()
            )));
        }
        Ok(())
    }

    /// Reverse-mode gradient of logit `class` with respect to trace entry
    /// `layer`, flattened like the activation.
    pub fn grad_logit_wrt_activation(&self, x: &[f64], layer: usize, class: usize) -> Result<Vec<f64>> {
        self.check_input(x)?;
        self.check_layer(layer)?;
        self.check_class(class)?;
        let pass = self.run(x, true);
        let mut g = vec![0.0; self.num_classes()];
        g[class] = 1.0;
        for l in (layer..self.depth()).rev() {
            g = self.layers[l].backward(&pass.inputs[l], self.shapes[l], &pass.caches[l], &g, None);
        }
        Ok(g)
    }

    /// Cross-entropy loss of one example; parameter gradients are
    /// accumulated into `grads`.
    fn accumulate_example(&self, x: &[f64], label: usize, grads: &mut [f64]) -> f64 {
        let pass = self.run(x, true);
        let loss = cross_entropy(&pass.logits, label);
        let mut g = softmax(&pass.logits);
        g[label] -= 1.0;
        let mut offsets = Vec::with_capacity(self.depth());
        let mut acc = 0;
        for l in &self.layers {
            offsets.push(acc);
            acc += l.param_count();
        }
        for l in (0..self.depth()).rev() {
            let layer = &self.layers[l];
            let slice = &mut grads[offsets[l]..offsets[l] + layer.param_count()];
            g = layer.backward(&pass.inputs[l], self.shapes[l], &pass.caches[l], &g, Some(slice));
        }
        loss
    }

    /// Mean softmax cross-entropy over the batch and its gradient with
    /// respect to every trainable parameter.
    pub fn grad_loss_wrt_params(&self, inputs: &[&[f64]], labels: &[usize]) -> Result<LossGradient> {
        if inputs.is_empty() || inputs.len() != labels.len() {
            return Err(Error::domain(format!(
                "batch needs matching non-empty inputs and labels ({} vs {})",
                inputs.len(),
                labels.len()
            )));
        }
        for (x, &y) in inputs.iter().zip(labels) {
            self.check_input(x)?;
            self.check_class(y)?;
        }
        let n = self.param_count();
        let partials: Vec<(f64, Vec<f64>)> = inputs
            .par_chunks(GRAD_CHUNK)
            .zip(labels.par_chunks(GRAD_CHUNK))
            .map(|(xs, ys)| {
                let mut grads = vec![0.0; n];
                let mut loss = 0.0;
                for (x, &y) in xs.iter().zip(ys) {
                    loss += self.accumulate_example(x, y, &mut grads);
                }
                (loss, grads)
            })
            .collect();
        let scale = 1.0 / inputs.len() as f64;
        let mut gradient = vec![0.0; n];
        let mut loss = 0.0;
        for (l, g) in partials {
            loss += l;
            for (a, b) in gradient.iter_mut().zip(g) {
                *a += b;
            }
        }
        gradient.iter_mut().for_each(|g| *g *= scale);
        Ok(LossGradient {
            loss: loss * scale,
            gradient,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor_net::layer::Dense;

    fn dense_identity(n: usize) -> Network {
        let mut net = Network::new(
            Architecture {
                input_length: 1,
                input_channels: n,
                num_classes: n,
                layers: vec![LayerSpec::Dense { units: n }],
            },
            0,
        )
        .unwrap();
        let Layer::Dense(Dense { weight, bias, .. }) = &mut net.layers_mut()[0] else {
            unreachable!()
        };
        weight.iter_mut().enumerate().for_each(|(i, w)| *w = if i % (n + 1) == 0 { 1.0 } else { 0.0 });
        bias.fill(0.0);
        net
    }

    #[test]
    fn identity_dense_network() {
        let net = dense_identity(3);
        let x = [0.5, -2.0, 7.0];
        let (logits, trace) = net.forward(&x).unwrap();
        assert_eq!(logits, x.to_vec());
        assert_eq!(trace.len(), 1);
        assert_eq!(trace.get(0).unwrap(), &x);
    }

    #[test]
    fn relu_trace_records_dead_units() {
        let net = Network::new(
            Architecture {
                input_length: 4,
                input_channels: 1,
                num_classes: 2,
                layers: vec![LayerSpec::Relu, LayerSpec::Flatten, LayerSpec::Dense { units: 2 }],
            },
            1,
        )
        .unwrap();
        let x = [-1.0, -0.5, -3.0, -0.1];
        let (_, trace) = net.forward(&x).unwrap();
        assert_eq!(trace.get(1).unwrap(), &[0.0; 4]);
        let g = net.grad_logit_wrt_activation(&x, 0, 1).unwrap();
        assert_eq!(g, vec![0.0; 4]);
    }

    #[test]
    fn last_layer_gradient_is_weight_row() {
        let net = Network::new(
            Architecture {
                input_length: 6,
                input_channels: 2,
                num_classes: 3,
                layers: vec![
                    LayerSpec::Conv1d {
                        out_channels: 4,
                        kernel_size: 3,
                        stride: 1,
                        padding: 1,
                    },
                    LayerSpec::Relu,
                    LayerSpec::GlobalAvgPool,
                    LayerSpec::Dense { units: 3 },
                ],
            },
            9,
        )
        .unwrap();
        let x: Vec<f64> = (0..12).map(|i| (i as f64 * 0.37).sin()).collect();
        let Layer::Dense(d) = &net.layers()[3] else { unreachable!() };
        for c in 0..3 {
            let g = net.grad_logit_wrt_activation(&x, net.penultimate_layer(), c).unwrap();
            assert_eq!(g, d.weight[c * 4..(c + 1) * 4].to_vec());
        }
    }

    #[test]
    fn uniform_logits_give_log_c_loss() {
        let mut net = dense_identity(3);
        net.set_params(&vec![0.0; net.param_count()]).unwrap();
        let x = [1.0, 2.0, 3.0];
        let lg = net.grad_loss_wrt_params(&[&x], &[1]).unwrap();
        assert!((lg.loss - 3f64.ln()).abs() < 1e-15);
        assert!((lg.loss - 1.0986).abs() < 1e-4);
    }

    #[test]
    fn index_errors() {
        let net = dense_identity(2);
        let x = [1.0, 2.0];
        assert!(net.grad_logit_wrt_activation(&x, 1, 0).is_err());
        assert!(net.grad_logit_wrt_activation(&x, 0, 2).is_err());
        assert!(net.grad_loss_wrt_params(&[&x], &[2]).is_err());
        assert!(net.forward(&[1.0]).is_err());
    }

    #[test]
    fn softmax_sums_to_one() {
        let p = softmax(&[1000.0, -3.0, 2.5, 999.0]);
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn argmax_prefers_lowest_index() {
        assert_eq!(argmax(&[1.0, 3.0, 3.0]), 1);
        assert_eq!(argmax(&[0.0, 0.0]), 0);
    }
}
