//! Test-side reference implementations, written independently of the library's
//! layer code: a direct forward pass from the flat parameter vector and central
//! finite differences of the cross-entropy loss.
#![allow(dead_code)]

use qsynth::nn::{Activation, Architecture, ModelSpec};
use qsynth::{Differentiable, EpochTensor, Model};

fn act(a: Activation, z: f64) -> f64 {
    match a {
        Activation::Relu => {
            if z > 0.0 {
                z
            } else {
                0.0
            }
        }
        Activation::Tanh => z.tanh(),
    }
}

/// `out[o] = b[o] + sum_i W[o][i] x[i]`, weights row-major then biases.
fn dense(
    params: &[f64],
    at: &mut usize,
    x: &[f64],
    outputs: usize,
    pre: &mut Vec<f64>,
) -> Vec<f64> {
    let n = x.len();
    let w = &params[*at..*at + outputs * n];
    let b = &params[*at + outputs * n..*at + outputs * n + outputs];
    *at += outputs * n + outputs;
    let mut out = b.to_vec();
    for o in 0..outputs {
        for i in 0..n {
            out[o] += w[o * n + i] * x[i];
        }
    }
    pre.extend_from_slice(&out);
    out
}

/// Logits plus every pre-activation that passes through a nonlinearity.
pub fn reference_logits(spec: &ModelSpec, params: &[f64], x: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let mut at = 0;
    let mut hidden_pre = Vec::new();
    let mut scratch = Vec::new();
    let mut h = x.to_vec();
    match spec.architecture {
        Architecture::LinearSoftmax => {}
        Architecture::MultilayerPerceptron => {
            for &width in &spec.hidden {
                let z = dense(params, &mut at, &h, width, &mut hidden_pre);
                h = z.iter().map(|&v| act(spec.activation, v)).collect();
            }
        }
        Architecture::TemporalConvNet { kernel, pool } => {
            let (c_n, t_n, f_n) = (spec.channels, spec.samples, spec.hidden[0]);
            let out_len = t_n - kernel + 1;
            let w_len = f_n * c_n * kernel;
            let mut pooled = Vec::new();
            for f in 0..f_n {
                let mut row = Vec::with_capacity(out_len);
                for tau in 0..out_len {
                    let mut z = params[at + w_len + f];
                    for c in 0..c_n {
                        for k in 0..kernel {
                            z += params[at + (f * c_n + c) * kernel + k] * x[c * t_n + tau + k];
                        }
                    }
                    hidden_pre.push(z);
                    row.push(act(spec.activation, z));
                }
                for j in 0..out_len / pool {
                    pooled.push(row[j * pool..(j + 1) * pool].iter().sum::<f64>() / pool as f64);
                }
            }
            at += w_len + f_n;
            h = pooled;
        }
    }
    let logits = dense(params, &mut at, &h, spec.classes, &mut scratch);
    assert_eq!(
        at,
        params.len(),
        "reference consumed a different parameter count"
    );
    (logits, hidden_pre)
}

pub fn reference_loss(spec: &ModelSpec, params: &[f64], x: &[f64], y: usize) -> f64 {
    let (z, _) = reference_logits(spec, params, x);
    let m = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lse = m + z.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
    lse - z[y]
}

pub fn finite_difference(
    spec: &ModelSpec,
    params: &[f64],
    x: &[f64],
    y: usize,
    h: f64,
) -> Vec<f64> {
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|i| {
            probe[i] = x[i] + h;
            let up = reference_loss(spec, params, &probe, y);
            probe[i] = x[i] - h;
            let down = reference_loss(spec, params, &probe, y);
            probe[i] = x[i];
            (up - down) / (2.0 * h)
        })
        .collect()
}

/// `|a - n| / max(|a|, |n|, 1e-3)`; the floor keeps vanishing components from
/// dominating.
pub fn relative_error(a: f64, n: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(1e-3)
}

pub const FD_STEP: f64 = 1e-5;
/// Inputs with a ReLU pre-activation closer than this to 0 are redrawn: the
/// finite-difference stencil could straddle the kink.
pub const KINK_MARGIN: f64 = 1e-2;

pub fn near_kink(spec: &ModelSpec, params: &[f64], x: &[f64]) -> bool {
    spec.activation == Activation::Relu
        && spec.architecture != Architecture::LinearSoftmax
        && reference_logits(spec, params, x)
            .1
            .iter()
            .any(|z| z.abs() < KINK_MARGIN)
}

/// Max relative error between the model's analytic input gradient and finite
/// differences of the reference loss. Also checks the reference reproduces the
/// model's logits.
pub fn gradient_error(model: &Model, x: &EpochTensor, y: usize) -> f64 {
    let spec = model.spec();
    let (ref_logits, _) = reference_logits(spec, model.params(), x.as_slice());
    for (a, b) in ref_logits.iter().zip(model.logits(x).unwrap()) {
        assert!(
            (a - b).abs() <= 1e-10 * a.abs().max(1.0),
            "logits disagree: {a} vs {b}"
        );
    }
    let analytic = model.input_gradient(x, y).unwrap();
    let numeric = finite_difference(spec, model.params(), x.as_slice(), y, FD_STEP);
    analytic
        .as_slice()
        .iter()
        .zip(&numeric)
        .map(|(&a, &n)| relative_error(a, n))
        .fold(0.0, f64::max)
}

/// The four architecture kinds exercised by gradient tests, on a 3 x 10 input. The
/// convolutional net pools 8 outputs by 3, so its remainder path is covered.
pub fn architecture_zoo(seed: u64) -> Vec<ModelSpec> {
    vec![
        ModelSpec::linear(3, 10, 3, seed),
        ModelSpec::mlp(3, 10, 2, vec![8], seed),
        ModelSpec::mlp(3, 10, 4, vec![7, 5], seed).with_activation(Activation::Tanh),
        ModelSpec::temporal_conv(3, 10, 3, 4, 3, 3, seed),
    ]
}
