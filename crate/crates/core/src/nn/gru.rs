//! Gated recurrent cell with a per-timestep logistic head, trained by
//! backpropagation through time.

use rand::Rng;

use super::mlp::orthogonal_init;
use super::params::ParameterSet;
use crate::error::{AmiError, Result};

const GATES: [&str; 3] = ["z", "r", "n"];

#[inline]
fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `out += m x` for a row-major `rows x x.len()` matrix.
#[inline]
fn matvec_add(m: &[f64], x: &[f64], out: &mut [f64]) {
    let cols = x.len();
    for (r, o) in out.iter_mut().enumerate() {
        let row = &m[r * cols..(r + 1) * cols];
        *o += row.iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
    }
}

/// `out += m^T d`
#[inline]
fn matvec_t_add(m: &[f64], d: &[f64], out: &mut [f64]) {
    let cols = out.len();
    for (r, &dr) in d.iter().enumerate() {
        if dr == 0.0 {
            continue;
        }
        let row = &m[r * cols..(r + 1) * cols];
        for (o, w) in out.iter_mut().zip(row) {
            *o += dr * w;
        }
    }
}

/// `g += d x^T`
#[inline]
fn outer_add(g: &mut [f64], d: &[f64], x: &[f64]) {
    let cols = x.len();
    for (r, &dr) in d.iter().enumerate() {
        if dr == 0.0 {
            continue;
        }
        for (gv, xv) in g[r * cols..(r + 1) * cols].iter_mut().zip(x) {
            *gv += dr * xv;
        }
    }
}

struct Step {
    h_prev: Vec<f64>,
    z: Vec<f64>,
    r: Vec<f64>,
    n: Vec<f64>,
    hn: Vec<f64>,
    h: Vec<f64>,
}

/// Recurrent binary classifier emitting `P(label = 1 | x_1..x_t)` at every `t`.
#[derive(Debug, Clone)]
pub struct GruClassifier {
    input_dim: usize,
    hidden: usize,
    prefix: String,
    // w_*, u_*, b_* for z, r, n
    w: [usize; 3],
    u: [usize; 3],
    b: [usize; 3],
    b_hn: usize,
    head_w: usize,
    head_b: usize,
}

impl GruClassifier {
    pub fn init<R: Rng + ?Sized>(
        input_dim: usize,
        hidden: usize,
        prefix: &str,
        rng: &mut R,
        params: &mut ParameterSet,
    ) -> Result<Self> {
        if input_dim == 0 || hidden == 0 {
            return Err(AmiError::Config("gru dims must be >= 1".into()));
        }
        for g in GATES {
            params.push(format!("{prefix}w_{g}"), vec![hidden, input_dim], orthogonal_init(hidden, input_dim, 1.0, rng))?;
            params.push(format!("{prefix}u_{g}"), vec![hidden, hidden], orthogonal_init(hidden, hidden, 1.0, rng))?;
            params.push(format!("{prefix}b_{g}"), vec![hidden], vec![0.0; hidden])?;
        }
        params.push(format!("{prefix}b_hn"), vec![hidden], vec![0.0; hidden])?;
        params.push(format!("{prefix}head_w"), vec![1, hidden], orthogonal_init(1, hidden, 1.0, rng))?;
        params.push(format!("{prefix}head_b"), vec![1], vec![0.0])?;
        Self::bind(input_dim, hidden, prefix, params)
    }

    pub fn bind(input_dim: usize, hidden: usize, prefix: &str, params: &ParameterSet) -> Result<Self> {
        let idx = |name: String, shape: Vec<usize>| -> Result<usize> {
            let i = params
                .index_of(&name)
                .ok_or_else(|| AmiError::Config(format!("missing parameter block `{name}`")))?;
            if params.block(i).shape != shape {
                return Err(AmiError::Dimension(format!("block `{name}` has wrong shape")));
            }
            Ok(i)
        };
        let mut w = [0; 3];
        let mut u = [0; 3];
        let mut b = [0; 3];
        for (k, g) in GATES.iter().enumerate() {
            w[k] = idx(format!("{prefix}w_{g}"), vec![hidden, input_dim])?;
            u[k] = idx(format!("{prefix}u_{g}"), vec![hidden, hidden])?;
            b[k] = idx(format!("{prefix}b_{g}"), vec![hidden])?;
        }
        Ok(Self {
            input_dim,
            hidden,
            prefix: prefix.to_string(),
            w,
            u,
            b,
            b_hn: idx(format!("{prefix}b_hn"), vec![hidden])?,
            head_w: idx(format!("{prefix}head_w"), vec![1, hidden])?,
            head_b: idx(format!("{prefix}head_b"), vec![1])?,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn hidden(&self) -> usize {
        self.hidden
    }

    fn run(&self, params: &ParameterSet, seq: &[Vec<f64>]) -> Result<(Vec<Step>, Vec<f64>)> {
        let h_dim = self.hidden;
        let val = |i: usize| params.block(i).values.as_slice();
        let mut h = vec![0.0; h_dim];
        let mut steps = Vec::with_capacity(seq.len());
        let mut logits = Vec::with_capacity(seq.len());
        for x in seq {
            if x.len() != self.input_dim {
                return Err(AmiError::Dimension(format!(
                    "`{}` expects inputs of length {}, got {}",
                    self.prefix,
                    self.input_dim,
                    x.len()
                )));
            }
            let mut z = val(self.b[0]).to_vec();
            matvec_add(val(self.w[0]), x, &mut z);
            matvec_add(val(self.u[0]), &h, &mut z);
            z.iter_mut().for_each(|v| *v = sigmoid(*v));
            let mut r = val(self.b[1]).to_vec();
            matvec_add(val(self.w[1]), x, &mut r);
            matvec_add(val(self.u[1]), &h, &mut r);
            r.iter_mut().for_each(|v| *v = sigmoid(*v));
            let mut hn = val(self.b_hn).to_vec();
            matvec_add(val(self.u[2]), &h, &mut hn);
            let mut n = val(self.b[2]).to_vec();
            matvec_add(val(self.w[2]), x, &mut n);
            for k in 0..h_dim {
                n[k] = (n[k] + r[k] * hn[k]).tanh();
            }
            let h_new: Vec<f64> = (0..h_dim).map(|k| (1.0 - z[k]) * n[k] + z[k] * h[k]).collect();
            let logit = val(self.head_b)[0] + val(self.head_w).iter().zip(&h_new).map(|(a, b)| a * b).sum::<f64>();
            logits.push(logit);
            steps.push(Step {
                h_prev: std::mem::replace(&mut h, h_new.clone()),
                z,
                r,
                n,
                hn,
                h: h_new,
            });
        }
        Ok((steps, logits))
    }

    /// Per-timestep probabilities of the positive class.
    pub fn predict(&self, params: &ParameterSet, seq: &[Vec<f64>]) -> Result<Vec<f64>> {
        Ok(self.run(params, seq)?.1.into_iter().map(sigmoid).collect())
    }

    /// Mean binary cross-entropy over all timesteps of `seq` for `label`,
    /// accumulating `scale * dloss/dparams` into `grads`. Returns the loss.
    pub fn bce_grad(
        &self,
        params: &ParameterSet,
        seq: &[Vec<f64>],
        label: bool,
        scale: f64,
        grads: &mut ParameterSet,
    ) -> Result<f64> {
        if seq.is_empty() {
            return Ok(0.0);
        }
        let (steps, logits) = self.run(params, seq)?;
        let y = if label { 1.0 } else { 0.0 };
        let inv_t = 1.0 / seq.len() as f64;
        let mut loss = 0.0;
        let dlogit: Vec<f64> = logits
            .iter()
            .map(|&l| {
                // softplus form for stability
                let sp = |v: f64| if v > 0.0 { v + (-v).exp().ln_1p() } else { v.exp().ln_1p() };
                loss += (y * sp(-l) + (1.0 - y) * sp(l)) * inv_t;
                (sigmoid(l) - y) * inv_t * scale
            })
            .collect();

        let h_dim = self.hidden;
        let head_w = params.block(self.head_w).values.clone();
        let u_z = params.block(self.u[0]).values.clone();
        let u_r = params.block(self.u[1]).values.clone();
        let u_n = params.block(self.u[2]).values.clone();
        let mut dh_next = vec![0.0; h_dim];
        for t in (0..steps.len()).rev() {
            let s = &steps[t];
            let x = &seq[t];
            let dl = dlogit[t];
            grads.block_mut(self.head_b).values[0] += dl;
            for (g, hv) in grads.block_mut(self.head_w).values.iter_mut().zip(&s.h) {
                *g += dl * hv;
            }
            let dh: Vec<f64> = (0..h_dim).map(|k| dh_next[k] + dl * head_w[k]).collect();
            let mut dz = vec![0.0; h_dim];
            let mut dn_pre = vec![0.0; h_dim];
            let mut dr = vec![0.0; h_dim];
            let mut dhn = vec![0.0; h_dim];
            let mut dh_prev = vec![0.0; h_dim];
            for k in 0..h_dim {
                let dn = dh[k] * (1.0 - s.z[k]);
                dz[k] = dh[k] * (s.h_prev[k] - s.n[k]) * s.z[k] * (1.0 - s.z[k]);
                dh_prev[k] = dh[k] * s.z[k];
                dn_pre[k] = dn * (1.0 - s.n[k] * s.n[k]);
                dr[k] = dn_pre[k] * s.hn[k] * s.r[k] * (1.0 - s.r[k]);
                dhn[k] = dn_pre[k] * s.r[k];
            }
            for (gate, d) in [(0usize, &dz), (1, &dr), (2, &dn_pre)] {
                outer_add(&mut grads.block_mut(self.w[gate]).values, d, x);
                for (g, v) in grads.block_mut(self.b[gate]).values.iter_mut().zip(d.iter()) {
                    *g += v;
                }
            }
            outer_add(&mut grads.block_mut(self.u[0]).values, &dz, &s.h_prev);
            outer_add(&mut grads.block_mut(self.u[1]).values, &dr, &s.h_prev);
            outer_add(&mut grads.block_mut(self.u[2]).values, &dhn, &s.h_prev);
            for (g, v) in grads.block_mut(self.b_hn).values.iter_mut().zip(&dhn) {
                *g += v;
            }
            matvec_t_add(&u_z, &dz, &mut dh_prev);
            matvec_t_add(&u_r, &dr, &mut dh_prev);
            matvec_t_add(&u_n, &dhn, &mut dh_prev);
            dh_next = dh_prev;
        }
        Ok(loss)
    }
}
