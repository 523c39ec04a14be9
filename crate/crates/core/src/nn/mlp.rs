//! Fully connected networks with hand-written reverse-mode gradients.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::params::ParameterSet;
use crate::error::{AmiError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Tanh,
}

impl Activation {
    #[inline]
    fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Relu => x.max(0.0),
            Activation::Tanh => x.tanh(),
        }
    }

    /// Derivative expressed through the pre-activation `x` and output `y`.
    #[inline]
    fn derivative(self, x: f64, y: f64) -> f64 {
        match self {
            Activation::Relu => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => 1.0 - y * y,
        }
    }
}

/// Shape of a dense network. The output layer is linear.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MlpSpec {
    pub input_dim: usize,
    pub hidden_dims: Vec<usize>,
    pub output_dim: usize,
    pub activation: Activation,
}

impl MlpSpec {
    pub fn new(input_dim: usize, hidden_dims: Vec<usize>, output_dim: usize, activation: Activation) -> Self {
        Self {
            input_dim,
            hidden_dims,
            output_dim,
            activation,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.output_dim == 0 {
            return Err(AmiError::Config("mlp input/output dims must be >= 1".into()));
        }
        if self.hidden_dims.is_empty() || self.hidden_dims.contains(&0) {
            return Err(AmiError::Config("mlp hidden_dims must be non-empty and >= 1".into()));
        }
        Ok(())
    }

    /// `(fan_in, fan_out)` for every layer, input to output.
    pub fn layer_dims(&self) -> Vec<(usize, usize)> {
        let mut dims = Vec::with_capacity(self.hidden_dims.len() + 1);
        let mut prev = self.input_dim;
        for &h in &self.hidden_dims {
            dims.push((prev, h));
            prev = h;
        }
        dims.push((prev, self.output_dim));
        dims
    }

    pub fn param_count(&self) -> usize {
        self.layer_dims().iter().map(|(i, o)| i * o + o).sum()
    }
}

/// Orthogonal matrix of shape `rows x cols` scaled by `gain` (Gram-Schmidt on
/// a Gaussian draw, orthonormal along the shorter side).
pub fn orthogonal_init<R: Rng + ?Sized>(rows: usize, cols: usize, gain: f64, rng: &mut R) -> Vec<f64> {
    let (n, m) = if rows >= cols { (cols, rows) } else { (rows, cols) };
    // n vectors of length m
    let mut vecs: Vec<Vec<f64>> = (0..n)
        .map(|_| (0..m).map(|_| rng.sample::<f64, _>(StandardNormal)).collect())
        .collect();
    for i in 0..n {
        for j in 0..i {
            let dot: f64 = vecs[i].iter().zip(&vecs[j]).map(|(a, b)| a * b).sum();
            let (head, tail) = vecs.split_at_mut(i);
            for (x, y) in tail[0].iter_mut().zip(&head[j]) {
                *x -= dot * y;
            }
        }
        let norm = vecs[i].iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-12);
        vecs[i].iter_mut().for_each(|v| *v /= norm);
    }
    let mut out = vec![0.0; rows * cols];
    for r in 0..rows {
        for c in 0..cols {
            out[r * cols + c] = gain * if rows >= cols { vecs[c][r] } else { vecs[r][c] };
        }
    }
    out
}

/// Per-layer activations recorded by a forward pass, consumed by backward.
#[derive(Debug, Clone)]
pub struct MlpTrace {
    /// `inputs[k]` is the input to layer `k`; the last entry is the output.
    inputs: Vec<Vec<f64>>,
    /// Pre-activation values of the hidden layers.
    pre: Vec<Vec<f64>>,
}

impl MlpTrace {
    pub fn output(&self) -> &[f64] {
        self.inputs.last().expect("trace always has an output")
    }
}

/// An [`MlpSpec`] bound to the blocks of a [`ParameterSet`] under a name prefix.
#[derive(Debug, Clone)]
pub struct Mlp {
    spec: MlpSpec,
    prefix: String,
    weight_idx: Vec<usize>,
    bias_idx: Vec<usize>,
}

fn weight_name(prefix: &str, layer: usize) -> String {
    format!("{prefix}l{layer}/w")
}

fn bias_name(prefix: &str, layer: usize) -> String {
    format!("{prefix}l{layer}/b")
}

impl Mlp {
    /// Creates freshly initialized blocks in `params` and binds to them.
    pub fn init<R: Rng + ?Sized>(
        spec: MlpSpec,
        prefix: &str,
        hidden_gain: f64,
        output_gain: f64,
        rng: &mut R,
        params: &mut ParameterSet,
    ) -> Result<Self> {
        spec.validate()?;
        let dims = spec.layer_dims();
        let last = dims.len() - 1;
        for (k, &(fan_in, fan_out)) in dims.iter().enumerate() {
            let gain = if k == last { output_gain } else { hidden_gain };
            params.push(weight_name(prefix, k), vec![fan_out, fan_in], orthogonal_init(fan_out, fan_in, gain, rng))?;
            params.push(bias_name(prefix, k), vec![fan_out], vec![0.0; fan_out])?;
        }
        Self::bind(spec, prefix, params)
    }

    /// Binds to existing blocks, validating their shapes.
    pub fn bind(spec: MlpSpec, prefix: &str, params: &ParameterSet) -> Result<Self> {
        spec.validate()?;
        let mut weight_idx = Vec::new();
        let mut bias_idx = Vec::new();
        for (k, &(fan_in, fan_out)) in spec.layer_dims().iter().enumerate() {
            let wn = weight_name(prefix, k);
            let bn = bias_name(prefix, k);
            let wi = params
                .index_of(&wn)
                .ok_or_else(|| AmiError::Config(format!("missing parameter block `{wn}`")))?;
            let bi = params
                .index_of(&bn)
                .ok_or_else(|| AmiError::Config(format!("missing parameter block `{bn}`")))?;
            if params.block(wi).shape != [fan_out, fan_in] || params.block(bi).shape != [fan_out] {
                return Err(AmiError::Dimension(format!("layer {k} of `{prefix}` does not match spec")));
            }
            weight_idx.push(wi);
            bias_idx.push(bi);
        }
        Ok(Self {
            spec,
            prefix: prefix.to_string(),
            weight_idx,
            bias_idx,
        })
    }

    pub fn spec(&self) -> &MlpSpec {
        &self.spec
    }

    pub fn prefix(&self) -> &str {
        &self.prefix
    }

    fn check_input(&self, input: &[f64]) -> Result<()> {
        if input.len() != self.spec.input_dim {
            return Err(AmiError::Dimension(format!(
                "`{}` expects input of length {}, got {}",
                self.prefix,
                self.spec.input_dim,
                input.len()
            )));
        }
        Ok(())
    }

    pub fn forward(&self, params: &ParameterSet, input: &[f64]) -> Result<Vec<f64>> {
        self.check_input(input)?;
        let mut x = input.to_vec();
        let last = self.weight_idx.len() - 1;
        for k in 0..=last {
            let mut y = affine(params, self.weight_idx[k], self.bias_idx[k], &x);
            if k != last {
                y.iter_mut().for_each(|v| *v = self.spec.activation.apply(*v));
            }
            x = y;
        }
        Ok(x)
    }

    pub fn forward_trace(&self, params: &ParameterSet, input: &[f64]) -> Result<MlpTrace> {
        self.check_input(input)?;
        let last = self.weight_idx.len() - 1;
        let mut inputs = Vec::with_capacity(last + 2);
        let mut pre = Vec::with_capacity(last);
        inputs.push(input.to_vec());
        for k in 0..=last {
            let z = affine(params, self.weight_idx[k], self.bias_idx[k], &inputs[k]);
            if k != last {
                let a = z.iter().map(|&v| self.spec.activation.apply(v)).collect();
                pre.push(z);
                inputs.push(a);
            } else {
                inputs.push(z);
            }
        }
        Ok(MlpTrace { inputs, pre })
    }

    /// Accumulates `scale * d(output . output_grad)/d(params)` into `grads`.
    pub fn backward_into(
        &self,
        params: &ParameterSet,
        trace: &MlpTrace,
        output_grad: &[f64],
        scale: f64,
        grads: &mut ParameterSet,
    ) -> Result<()> {
        if output_grad.len() != self.spec.output_dim {
            return Err(AmiError::Dimension(format!(
                "`{}` output grad length {} != {}",
                self.prefix,
                output_grad.len(),
                self.spec.output_dim
            )));
        }
        let mut delta: Vec<f64> = output_grad.iter().map(|g| g * scale).collect();
        for k in (0..self.weight_idx.len()).rev() {
            let x = &trace.inputs[k];
            let fan_in = x.len();
            {
                let gw = &mut grads.block_mut(self.weight_idx[k]).values;
                for (o, &d) in delta.iter().enumerate() {
                    if d == 0.0 {
                        continue;
                    }
                    let row = &mut gw[o * fan_in..(o + 1) * fan_in];
                    for (g, &xi) in row.iter_mut().zip(x) {
                        *g += d * xi;
                    }
                }
            }
            {
                let gb = &mut grads.block_mut(self.bias_idx[k]).values;
                for (g, &d) in gb.iter_mut().zip(&delta) {
                    *g += d;
                }
            }
            if k == 0 {
                break;
            }
            let w = &params.block(self.weight_idx[k]).values;
            let mut prev = vec![0.0; fan_in];
            for (o, &d) in delta.iter().enumerate() {
                if d == 0.0 {
                    continue;
                }
                let row = &w[o * fan_in..(o + 1) * fan_in];
                for (p, &wi) in prev.iter_mut().zip(row) {
                    *p += d * wi;
                }
            }
            let z = &trace.pre[k - 1];
            for (i, p) in prev.iter_mut().enumerate() {
                *p *= self.spec.activation.derivative(z[i], x[i]);
            }
            delta = prev;
        }
        Ok(())
    }
}

#[inline]
fn affine(params: &ParameterSet, w_idx: usize, b_idx: usize, x: &[f64]) -> Vec<f64> {
    let w = &params.block(w_idx).values;
    let b = &params.block(b_idx).values;
    let fan_in = x.len();
    b.iter()
        .enumerate()
        .map(|(o, &bias)| {
            let row = &w[o * fan_in..(o + 1) * fan_in];
            bias + row.iter().zip(x).map(|(a, b)| a * b).sum::<f64>()
        })
        .collect()
}

/// Evaluates an unprefixed network.
pub fn forward(spec: &MlpSpec, params: &ParameterSet, input: &[f64]) -> Result<Vec<f64>> {
    Mlp::bind(spec.clone(), "", params)?.forward(params, input)
}

/// Gradient of `output . output_grad` with respect to every parameter of an
/// unprefixed network.
pub fn backward(spec: &MlpSpec, params: &ParameterSet, input: &[f64], output_grad: &[f64]) -> Result<ParameterSet> {
    let mlp = Mlp::bind(spec.clone(), "", params)?;
    let trace = mlp.forward_trace(params, input)?;
    let mut grads = params.zeros_like();
    mlp.backward_into(params, &trace, output_grad, 1.0, &mut grads)?;
    grads.check_finite()?;
    Ok(grads)
}
