//! Layer stack over a flat parameter vector.
//!
//! Parameter layout, in stack order:
//! - dense: weights `outputs x inputs` row-major, then `outputs` biases
//! - temporal conv: kernels `filters x channels x kernel`, then `filters` biases
//!
//! Activations and pooling carry no parameters.

use rand::Rng;
use rand_distr::{Distribution, Uniform};

use crate::nn::spec::{Activation, Architecture, ModelSpec};

#[derive(Debug, Clone, PartialEq)]
pub(crate) enum Layer {
    Dense {
        inputs: usize,
        outputs: usize,
        offset: usize,
    },
    Act(Activation),
    Conv {
        channels: usize,
        samples: usize,
        kernel: usize,
        filters: usize,
        offset: usize,
    },
    AvgPool {
        filters: usize,
        len: usize,
        pool: usize,
    },
}

impl Layer {
    fn param_count(&self) -> usize {
        match *self {
            Layer::Dense {
                inputs, outputs, ..
            } => outputs * inputs + outputs,
            Layer::Conv {
                channels,
                kernel,
                filters,
                ..
            } => filters * channels * kernel + filters,
            _ => 0,
        }
    }

    fn output_len(&self, input_len: usize) -> usize {
        match *self {
            Layer::Dense { outputs, .. } => outputs,
            Layer::Act(_) => input_len,
            Layer::Conv {
                samples,
                kernel,
                filters,
                ..
            } => filters * (samples - kernel + 1),
            Layer::AvgPool { filters, len, pool } => filters * (len / pool),
        }
    }

    fn forward(&self, params: &[f64], x: &[f64]) -> Vec<f64> {
        match *self {
            Layer::Dense {
                inputs,
                outputs,
                offset,
            } => {
                let w = &params[offset..offset + outputs * inputs];
                let b = &params[offset + outputs * inputs..offset + outputs * inputs + outputs];
                (0..outputs)
                    .map(|o| {
                        let row = &w[o * inputs..(o + 1) * inputs];
                        b[o] + row.iter().zip(x).map(|(a, b)| a * b).sum::<f64>()
                    })
                    .collect()
            }
            Layer::Act(act) => x.iter().map(|&z| act.apply(z)).collect(),
            Layer::Conv {
                channels,
                samples,
                kernel,
                filters,
                offset,
            } => {
                let out_len = samples - kernel + 1;
                let w = &params[offset..offset + filters * channels * kernel];
                let b = &params[offset + filters * channels * kernel..];
                let mut out = vec![0.0; filters * out_len];
                for f in 0..filters {
                    for tau in 0..out_len {
                        let mut acc = b[f];
                        for c in 0..channels {
                            let wk =
                                &w[(f * channels + c) * kernel..(f * channels + c + 1) * kernel];
                            let xs = &x[c * samples + tau..c * samples + tau + kernel];
                            acc += wk.iter().zip(xs).map(|(a, b)| a * b).sum::<f64>();
                        }
                        out[f * out_len + tau] = acc;
                    }
                }
                out
            }
            Layer::AvgPool { filters, len, pool } => {
                let pooled = len / pool;
                let mut out = Vec::with_capacity(filters * pooled);
                for f in 0..filters {
                    for j in 0..pooled {
                        let start = f * len + j * pool;
                        out.push(x[start..start + pool].iter().sum::<f64>() / pool as f64);
                    }
                }
                out
            }
        }
    }

    /// Propagates `grad_out` back through the layer given its input `x` and output
    /// `y`. Parameter gradients are accumulated into `grad_params` when present.
    fn backward(
        &self,
        params: &[f64],
        x: &[f64],
        y: &[f64],
        grad_out: &[f64],
        grad_params: Option<&mut [f64]>,
    ) -> Vec<f64> {
        match *self {
            Layer::Dense {
                inputs,
                outputs,
                offset,
            } => {
                let w = &params[offset..offset + outputs * inputs];
                let mut dx = vec![0.0; inputs];
                for o in 0..outputs {
                    let g = grad_out[o];
                    if g == 0.0 {
                        continue;
                    }
                    for (d, &wv) in dx.iter_mut().zip(&w[o * inputs..(o + 1) * inputs]) {
                        *d += wv * g;
                    }
                }
                if let Some(gp) = grad_params {
                    let (gw, gb) = gp[offset..offset + outputs * inputs + outputs]
                        .split_at_mut(outputs * inputs);
                    for o in 0..outputs {
                        let g = grad_out[o];
                        gb[o] += g;
                        for (d, &xv) in gw[o * inputs..(o + 1) * inputs].iter_mut().zip(x) {
                            *d += g * xv;
                        }
                    }
                }
                dx
            }
            Layer::Act(act) => x
                .iter()
                .zip(y)
                .zip(grad_out)
                .map(|((&z, &a), &g)| g * act.derivative(z, a))
                .collect(),
            Layer::Conv {
                channels,
                samples,
                kernel,
                filters,
                offset,
            } => {
                let out_len = samples - kernel + 1;
                let nw = filters * channels * kernel;
                let w = &params[offset..offset + nw];
                let mut dx = vec![0.0; channels * samples];
                for f in 0..filters {
                    for tau in 0..out_len {
                        let g = grad_out[f * out_len + tau];
                        if g == 0.0 {
                            continue;
                        }
                        for c in 0..channels {
                            let wk =
                                &w[(f * channels + c) * kernel..(f * channels + c + 1) * kernel];
                            for (d, &wv) in dx[c * samples + tau..c * samples + tau + kernel]
                                .iter_mut()
                                .zip(wk)
                            {
                                *d += wv * g;
                            }
                        }
                    }
                }
                if let Some(gp) = grad_params {
                    let (gw, gb) = gp[offset..offset + nw + filters].split_at_mut(nw);
                    for f in 0..filters {
                        for tau in 0..out_len {
                            let g = grad_out[f * out_len + tau];
                            gb[f] += g;
                            for c in 0..channels {
                                let base = (f * channels + c) * kernel;
                                let xs = &x[c * samples + tau..c * samples + tau + kernel];
                                for (d, &xv) in gw[base..base + kernel].iter_mut().zip(xs) {
                                    *d += g * xv;
                                }
                            }
                        }
                    }
                }
                dx
            }
            Layer::AvgPool { filters, len, pool } => {
                let pooled = len / pool;
                let mut dx = vec![0.0; filters * len];
                for f in 0..filters {
                    for j in 0..pooled {
                        let g = grad_out[f * pooled + j] / pool as f64;
                        let start = f * len + j * pool;
                        dx[start..start + pool].iter_mut().for_each(|d| *d = g);
                    }
                }
                dx
            }
        }
    }

    fn fan_in(&self) -> usize {
        match *self {
            Layer::Dense { inputs, .. } => inputs,
            Layer::Conv {
                channels, kernel, ..
            } => channels * kernel,
            _ => 0,
        }
    }

    fn offset(&self) -> Option<usize> {
        match *self {
            Layer::Dense { offset, .. } | Layer::Conv { offset, .. } => Some(offset),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Stack {
    layers: Vec<Layer>,
    param_count: usize,
}

impl Stack {
    /// Assumes `spec` has been validated.
    pub(crate) fn from_spec(spec: &ModelSpec) -> Self {
        let mut stack = Stack {
            layers: Vec::new(),
            param_count: 0,
        };
        let mut width = spec.input_len();
        match spec.architecture {
            Architecture::LinearSoftmax => {}
            Architecture::MultilayerPerceptron => {
                for &h in &spec.hidden {
                    width = stack.push_dense(width, h);
                    stack.layers.push(Layer::Act(spec.activation));
                }
            }
            Architecture::TemporalConvNet { kernel, pool } => {
                let filters = spec.hidden[0];
                stack.push(Layer::Conv {
                    channels: spec.channels,
                    samples: spec.samples,
                    kernel,
                    filters,
                    offset: stack.param_count,
                });
                stack.layers.push(Layer::Act(spec.activation));
                let pool_layer = Layer::AvgPool {
                    filters,
                    len: spec.samples - kernel + 1,
                    pool,
                };
                width = pool_layer.output_len(0);
                stack.layers.push(pool_layer);
            }
        }
        stack.push_dense(width, spec.classes);
        stack
    }

    fn push(&mut self, layer: Layer) {
        self.param_count += layer.param_count();
        self.layers.push(layer);
    }

    fn push_dense(&mut self, inputs: usize, outputs: usize) -> usize {
        self.push(Layer::Dense {
            inputs,
            outputs,
            offset: self.param_count,
        });
        outputs
    }

    pub(crate) fn param_count(&self) -> usize {
        self.param_count
    }

    /// Uniform on `[-1/sqrt(fan_in), 1/sqrt(fan_in)]` for weights and biases alike.
    pub(crate) fn init_params<R: Rng>(&self, rng: &mut R) -> Vec<f64> {
        let mut params = vec![0.0; self.param_count];
        for layer in &self.layers {
            if let Some(offset) = layer.offset() {
                let bound = 1.0 / (layer.fan_in() as f64).sqrt();
                let dist = Uniform::new_inclusive(-bound, bound).expect("finite bound");
                for p in &mut params[offset..offset + layer.param_count()] {
                    *p = dist.sample(rng);
                }
            }
        }
        params
    }

    /// Returns every intermediate vector: `[input, layer_1 out, ..., logits]`.
    pub(crate) fn forward(&self, params: &[f64], x: &[f64]) -> Vec<Vec<f64>> {
        let mut acts = Vec::with_capacity(self.layers.len() + 1);
        acts.push(x.to_vec());
        for layer in &self.layers {
            let next = layer.forward(params, acts.last().expect("non-empty"));
            acts.push(next);
        }
        acts
    }

    pub(crate) fn logits(&self, params: &[f64], x: &[f64]) -> Vec<f64> {
        let mut cur = x.to_vec();
        for layer in &self.layers {
            cur = layer.forward(params, &cur);
        }
        cur
    }

    /// Back-propagates `grad_logits` through the cached activations and returns the
    /// gradient with respect to the input.
    pub(crate) fn backward(
        &self,
        params: &[f64],
        acts: &[Vec<f64>],
        grad_logits: Vec<f64>,
        mut grad_params: Option<&mut [f64]>,
    ) -> Vec<f64> {
        let mut grad = grad_logits;
        for (i, layer) in self.layers.iter().enumerate().rev() {
            grad = layer.backward(
                params,
                &acts[i],
                &acts[i + 1],
                &grad,
                grad_params.as_deref_mut(),
            );
        }
        grad
    }
}

/// Numerically stable softmax.
pub(crate) fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|z| (z - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

/// `-ln softmax(logits)[label]` via log-sum-exp.
pub(crate) fn cross_entropy(logits: &[f64], label: usize) -> f64 {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + logits.iter().map(|z| (z - max).exp()).sum::<f64>().ln();
    lse - logits[label]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn param_counts() {
        let s = Stack::from_spec(&ModelSpec::linear(2, 3, 4, 0));
        assert_eq!(s.param_count(), 4 * 6 + 4);
        let s = Stack::from_spec(&ModelSpec::mlp(2, 3, 2, vec![5, 3], 0));
        assert_eq!(s.param_count(), (5 * 6 + 5) + (3 * 5 + 3) + (2 * 3 + 2));
        // conv 4 filters x 2 channels x 3 taps; 8-3+1 = 6 outputs pooled by 2 -> 3
        let s = Stack::from_spec(&ModelSpec::temporal_conv(2, 8, 3, 4, 3, 2, 0));
        assert_eq!(s.param_count(), (4 * 2 * 3 + 4) + (3 * 12 + 3));
    }

    #[test]
    fn pooling_drops_remainder() {
        let pool = Layer::AvgPool {
            filters: 1,
            len: 5,
            pool: 2,
        };
        let out = pool.forward(&[], &[1.0, 3.0, 5.0, 7.0, 100.0]);
        assert_eq!(out, vec![2.0, 6.0]);
        let dx = pool.backward(&[], &[0.0; 5], &out, &[1.0, 1.0], None);
        assert_eq!(dx, vec![0.5, 0.5, 0.5, 0.5, 0.0]);
    }

    #[test]
    fn conv_matches_hand_computation() {
        // one filter over 2 channels, kernel 2: weights c0=(1,2), c1=(-1,0.5), bias 0.25
        let conv = Layer::Conv {
            channels: 2,
            samples: 3,
            kernel: 2,
            filters: 1,
            offset: 0,
        };
        let params = [1.0, 2.0, -1.0, 0.5, 0.25];
        let x = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0];
        let out = conv.forward(&params, &x);
        // tau=0: 1*1 + 2*2 - 4 + 0.5*5 + 0.25 = 3.75
        // tau=1: 1*2 + 2*3 - 5 + 0.5*6 + 0.25 = 6.25
        assert_eq!(out, vec![3.75, 6.25]);
    }

    #[test]
    fn softmax_and_cross_entropy_agree() {
        let z = [1.0, -2.0, 0.5];
        let p = softmax(&z);
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-15);
        for (k, &pk) in p.iter().enumerate() {
            assert!((cross_entropy(&z, k) + pk.ln()).abs() < 1e-12);
        }
        let p = softmax(&[1000.0, 0.0]);
        assert!(p[0] > 0.999_999 && p[1] >= 0.0);
    }
}
