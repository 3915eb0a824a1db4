//! Dense multi-layer perceptron with optional per-hidden-layer LayerNorm.
//!
//! Per hidden layer the pipeline is `affine -> (LayerNorm) -> activation`;
//! the output layer is a plain affine map. Forward passes over a batch take
//! flat row-major input `(batch, in_dim)` and return flat `(batch, out_dim)`.

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// LayerNorm variance epsilon.
pub const LN_EPS: f64 = 1e-5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Activation {
    Tanh,
    Relu,
}

#[derive(Debug, Error)]
pub enum NnError {
    #[error("input length {got} is not a multiple of the input dim {in_dim}")]
    BadInputLength { got: usize, in_dim: usize },
    #[error("gradient length {got} does not match output dim {out_dim} x batch {batch}")]
    BadGradLength { got: usize, out_dim: usize, batch: usize },
}

/// Network architecture: layer sizes plus activation and LayerNorm flags.
///
/// `sizes` runs `[input, hidden..., output]`; `ln` has one flag per hidden
/// layer. The flat parameter layout per layer `i` is `W_i` (row-major
/// `out x in`), `b_i`, then `gain_i`, `bias_i` when that layer is normalized.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Arch {
    pub sizes: Vec<usize>,
    pub activation: Activation,
    pub ln: Vec<bool>,
}

impl Arch {
    pub fn new(sizes: Vec<usize>, activation: Activation, layernorm: bool) -> Self {
        assert!(sizes.len() >= 2, "need at least input and output sizes");
        assert!(sizes.iter().all(|&s| s > 0), "zero-width layer");
        let hidden = sizes.len() - 2;
        Arch {
            sizes,
            activation,
            ln: vec![layernorm; hidden],
        }
    }

    pub fn n_layers(&self) -> usize {
        self.sizes.len() - 1
    }

    pub fn in_dim(&self) -> usize {
        self.sizes[0]
    }

    pub fn out_dim(&self) -> usize {
        *self.sizes.last().unwrap()
    }

    fn is_hidden(&self, layer: usize) -> bool {
        layer < self.n_layers() - 1
    }

    fn has_ln(&self, layer: usize) -> bool {
        self.is_hidden(layer) && self.ln[layer]
    }

    /// Offset of layer `i`'s weight block in the flat parameter vector.
    fn layer_offset(&self, layer: usize) -> usize {
        let mut off = 0;
        for l in 0..layer {
            off += self.layer_len(l);
        }
        off
    }

    fn layer_len(&self, layer: usize) -> usize {
        let (inp, out) = (self.sizes[layer], self.sizes[layer + 1]);
        let mut len = out * inp + out;
        if self.has_ln(layer) {
            len += 2 * out;
        }
        len
    }

    pub fn param_len(&self) -> usize {
        (0..self.n_layers()).map(|l| self.layer_len(l)).sum()
    }
}

/// A dense network: architecture plus one flat parameter vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    pub arch: Arch,
    pub theta: Vec<f64>,
}

/// Per-layer intermediates retained by a cached forward pass.
#[derive(Debug, Clone)]
pub struct Cache {
    pub batch: usize,
    /// `acts[0]` is the input batch, `acts[i+1]` the output of layer `i`.
    acts: Vec<Vec<f64>>,
    /// Normalized pre-activations for LN layers, else empty.
    xhat: Vec<Vec<f64>>,
    /// Per-sample `1/sqrt(var + eps)` for LN layers, else empty.
    inv_std: Vec<Vec<f64>>,
}

impl Cache {
    pub fn output(&self) -> &[f64] {
        self.acts.last().unwrap()
    }
}

/// Standalone LayerNorm: `gain * (x - mean)/sqrt(var + eps) + bias` with
/// population variance.
pub fn layer_norm(x: &[f64], gain: &[f64], bias: &[f64]) -> Vec<f64> {
    assert!(x.len() >= 2, "layer_norm needs at least two elements");
    assert_eq!(x.len(), gain.len());
    assert_eq!(x.len(), bias.len());
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let var = x.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    let inv = 1.0 / (var + LN_EPS).sqrt();
    x.iter()
        .zip(gain.iter().zip(bias))
        .map(|(&v, (&g, &b))| g * (v - mean) * inv + b)
        .collect()
}

impl Mlp {
    /// Random initialization: Xavier-uniform weights for tanh, He for relu;
    /// zero biases; LN gains 1 and biases 0.
    pub fn init<R: Rng>(arch: Arch, rng: &mut R) -> Mlp {
        let mut theta = vec![0.0; arch.param_len()];
        for l in 0..arch.n_layers() {
            let (inp, out) = (arch.sizes[l], arch.sizes[l + 1]);
            let off = arch.layer_offset(l);
            let scale = match arch.activation {
                Activation::Tanh => (6.0 / (inp + out) as f64).sqrt(),
                Activation::Relu => (2.0 / inp as f64).sqrt(),
            };
            for w in theta[off..off + out * inp].iter_mut() {
                *w = rng.gen_range(-scale..scale);
            }
            if arch.has_ln(l) {
                let gain_off = off + out * inp + out;
                for g in theta[gain_off..gain_off + out].iter_mut() {
                    *g = 1.0;
                }
            }
        }
        Mlp { arch, theta }
    }

    pub fn zeros(arch: Arch) -> Mlp {
        let theta = vec![0.0; arch.param_len()];
        Mlp { arch, theta }
    }

    fn weights(&self, layer: usize) -> (&[f64], &[f64], Option<(&[f64], &[f64])>) {
        let (inp, out) = (self.arch.sizes[layer], self.arch.sizes[layer + 1]);
        let off = self.arch.layer_offset(layer);
        let w = &self.theta[off..off + out * inp];
        let b = &self.theta[off + out * inp..off + out * inp + out];
        let ln = if self.arch.has_ln(layer) {
            let g0 = off + out * inp + out;
            Some((&self.theta[g0..g0 + out], &self.theta[g0 + out..g0 + 2 * out]))
        } else {
            None
        };
        (w, b, ln)
    }

    /// Batched forward pass retaining intermediates for [`Mlp::backward`].
    pub fn forward(&self, x: &[f64]) -> Result<(Vec<f64>, Cache), NnError> {
        let in_dim = self.arch.in_dim();
        if in_dim == 0 || x.len() % in_dim != 0 || x.is_empty() {
            return Err(NnError::BadInputLength { got: x.len(), in_dim });
        }
        let batch = x.len() / in_dim;
        let n_layers = self.arch.n_layers();
        let mut acts: Vec<Vec<f64>> = Vec::with_capacity(n_layers + 1);
        acts.push(x.to_vec());
        let mut xhat = vec![Vec::new(); n_layers];
        let mut inv_std = vec![Vec::new(); n_layers];

        for l in 0..n_layers {
            let (inp, out) = (self.arch.sizes[l], self.arch.sizes[l + 1]);
            let (w, b, ln) = self.weights(l);
            let prev = &acts[l];
            let mut z = vec![0.0; batch * out];
            for s in 0..batch {
                let xi = &prev[s * inp..(s + 1) * inp];
                let zi = &mut z[s * out..(s + 1) * out];
                for (o, zo) in zi.iter_mut().enumerate() {
                    let row = &w[o * inp..(o + 1) * inp];
                    let mut acc = b[o];
                    for (wi, xv) in row.iter().zip(xi) {
                        acc += wi * xv;
                    }
                    *zo = acc;
                }
            }
            let last = l == n_layers - 1;
            if last {
                acts.push(z);
                break;
            }
            if let Some((gain, bias)) = ln {
                let mut xh = vec![0.0; batch * out];
                let mut istd = vec![0.0; batch];
                let n = out as f64;
                for s in 0..batch {
                    let zi = &mut z[s * out..(s + 1) * out];
                    let mean = zi.iter().sum::<f64>() / n;
                    let var = zi.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
                    let inv = 1.0 / (var + LN_EPS).sqrt();
                    istd[s] = inv;
                    let xhs = &mut xh[s * out..(s + 1) * out];
                    for o in 0..out {
                        xhs[o] = (zi[o] - mean) * inv;
                        zi[o] = gain[o] * xhs[o] + bias[o];
                    }
                }
                xhat[l] = xh;
                inv_std[l] = istd;
            }
            for v in z.iter_mut() {
                *v = match self.arch.activation {
                    Activation::Tanh => v.tanh(),
                    Activation::Relu => v.max(0.0),
                };
            }
            acts.push(z);
        }
        let y = acts.last().unwrap().clone();
        Ok((y, Cache { batch, acts, xhat, inv_std }))
    }

    /// Forward pass without cache retention.
    pub fn output(&self, x: &[f64]) -> Result<Vec<f64>, NnError> {
        self.forward(x).map(|(y, _)| y)
    }

    /// Reverse-mode gradients of `sum(dy . y)` w.r.t. parameters and input.
    ///
    /// `dy` is flat `(batch, out_dim)` from the same forward pass as `cache`.
    /// Gradients are summed over the batch (divide by batch for a mean loss).
    pub fn backward(&self, cache: &Cache, dy: &[f64]) -> Result<(Vec<f64>, Vec<f64>), NnError> {
        let out_dim = self.arch.out_dim();
        if dy.len() != cache.batch * out_dim {
            return Err(NnError::BadGradLength {
                got: dy.len(),
                out_dim,
                batch: cache.batch,
            });
        }
        let batch = cache.batch;
        let n_layers = self.arch.n_layers();
        let mut grads = vec![0.0; self.theta.len()];
        // Gradient with respect to the current layer's output.
        let mut d_out = dy.to_vec();

        for l in (0..n_layers).rev() {
            let (inp, out) = (self.arch.sizes[l], self.arch.sizes[l + 1]);
            let (w, _b, ln) = self.weights(l);
            let off = self.arch.layer_offset(l);
            let last = l == n_layers - 1;

            // dz: gradient at the affine output (pre-LN, pre-activation).
            let mut dz = d_out;
            if !last {
                let a = &cache.acts[l + 1];
                match self.arch.activation {
                    Activation::Tanh => {
                        for (d, &av) in dz.iter_mut().zip(a) {
                            *d *= 1.0 - av * av;
                        }
                    }
                    Activation::Relu => {
                        for (d, &av) in dz.iter_mut().zip(a) {
                            if av <= 0.0 {
                                *d = 0.0;
                            }
                        }
                    }
                }
                if let Some((gain, _bias)) = ln {
                    let xh = &cache.xhat[l];
                    let istd = &cache.inv_std[l];
                    let g0 = off + out * inp + out;
                    let n = out as f64;
                    for s in 0..batch {
                        let ds = &mut dz[s * out..(s + 1) * out];
                        let xs = &xh[s * out..(s + 1) * out];
                        // Accumulate LN parameter grads, then rewrite ds in place
                        // with the input gradient of the normalization.
                        let mut sum_dxh = 0.0;
                        let mut sum_dxh_xh = 0.0;
                        for o in 0..out {
                            grads[g0 + o] += ds[o] * xs[o];
                            grads[g0 + out + o] += ds[o];
                            let dxh = ds[o] * gain[o];
                            sum_dxh += dxh;
                            sum_dxh_xh += dxh * xs[o];
                        }
                        let inv = istd[s];
                        for o in 0..out {
                            let dxh = ds[o] * gain[o];
                            ds[o] = inv / n * (n * dxh - sum_dxh - xs[o] * sum_dxh_xh);
                        }
                    }
                }
            }

            // Parameter grads and the gradient passed to the previous layer.
            let x_in = &cache.acts[l];
            let mut d_in = vec![0.0; batch * inp];
            for s in 0..batch {
                let ds = &dz[s * out..(s + 1) * out];
                let xs = &x_in[s * inp..(s + 1) * inp];
                let dxs = &mut d_in[s * inp..(s + 1) * inp];
                for o in 0..out {
                    let g = ds[o];
                    if g == 0.0 {
                        continue;
                    }
                    let row = &w[o * inp..(o + 1) * inp];
                    let grow = &mut grads[off + o * inp..off + (o + 1) * inp];
                    for i in 0..inp {
                        grow[i] += g * xs[i];
                        dxs[i] += g * row[i];
                    }
                }
                for o in 0..out {
                    grads[off + out * inp + o] += ds[o];
                }
            }
            d_out = d_in;
        }
        Ok((grads, d_out))
    }
}
