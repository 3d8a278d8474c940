use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// One stage of a feed-forward network.
///
/// `Dense` flattens whatever it receives. `Conv1d` expects `[channels, time]`
/// and uses valid padding with stride 1. `MeanPool` averages the last axis of
/// a `[features, time]` activation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Layer {
    Dense { weight: Tensor, bias: Tensor },
    Conv1d { weight: Tensor, bias: Tensor },
    Relu,
    MeanPool,
}

impl Layer {
    pub fn name(&self) -> &'static str {
        match self {
            Layer::Dense { .. } => "dense",
            Layer::Conv1d { .. } => "conv1d",
            Layer::Relu => "relu",
            Layer::MeanPool => "mean_pool",
        }
    }

    pub fn output_shape(&self, input: &[usize]) -> Result<Vec<usize>> {
        match self {
            Layer::Dense { weight, .. } => {
                let (out, inp) = weight.dims2()?;
                let n: usize = input.iter().product();
                if n != inp {
                    return Err(Error::Shape(format!("dense layer expects {inp} inputs, got {input:?}")));
                }
                Ok(vec![out])
            }
            Layer::Conv1d { weight, .. } => {
                let [out, cin, k] = weight.shape() else {
                    return Err(Error::Shape("conv1d weight must be [out, in, kernel]".into()));
                };
                match input {
                    [c, t] if c == cin && t >= k => Ok(vec![*out, t - k + 1]),
                    _ => Err(Error::Shape(format!("conv1d expects [{cin}, >={k}], got {input:?}"))),
                }
            }
            Layer::Relu => Ok(input.to_vec()),
            Layer::MeanPool => match input {
                [f, _] => Ok(vec![*f]),
                _ => Err(Error::Shape(format!("mean pool expects [features, time], got {input:?}"))),
            },
        }
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let out_shape = self.output_shape(x.shape())?;
        let xd = x.data();
        let data = match self {
            Layer::Dense { weight, bias } => {
                let n_in = xd.len();
                let w = weight.data();
                bias.data()
                    .iter()
                    .enumerate()
                    .map(|(o, b)| b + dot(&w[o * n_in..(o + 1) * n_in], xd))
                    .collect()
            }
            Layer::Conv1d { weight, bias } => {
                let (cin, t) = (x.shape()[0], x.shape()[1]);
                let (cout, k) = (weight.shape()[0], weight.shape()[2]);
                let tout = t - k + 1;
                let w = weight.data();
                let mut out = vec![0.0; cout * tout];
                for o in 0..cout {
                    let row = &mut out[o * tout..(o + 1) * tout];
                    row.fill(bias.data()[o]);
                    for c in 0..cin {
                        let xc = &xd[c * t..(c + 1) * t];
                        let wk = &w[(o * cin + c) * k..(o * cin + c + 1) * k];
                        for (s, r) in row.iter_mut().enumerate() {
                            *r += dot(wk, &xc[s..s + k]);
                        }
                    }
                }
                out
            }
            Layer::Relu => xd.iter().map(|&v| v.max(0.0)).collect(),
            Layer::MeanPool => {
                let t = x.shape()[1];
                xd.chunks(t).map(|c| c.iter().sum::<f64>() / t as f64).collect()
            }
        };
        Tensor::new(out_shape, data).map_err(|_| Error::NonFinite("forward pass"))
    }

    /// Reverse pass. Returns the gradient with respect to the layer input and,
    /// when `want_params` is set, the gradients of each parameter in the order
    /// of [`Layer::params`].
    pub fn backward(&self, x: &Tensor, grad_out: &[f64], want_params: bool) -> (Vec<f64>, Vec<Vec<f64>>) {
        let xd = x.data();
        match self {
            Layer::Dense { weight, .. } => {
                let n_in = xd.len();
                let w = weight.data();
                let mut gx = vec![0.0; n_in];
                for (o, &g) in grad_out.iter().enumerate() {
                    if g != 0.0 {
                        axpy(g, &w[o * n_in..(o + 1) * n_in], &mut gx);
                    }
                }
                let params = if want_params {
                    let mut gw = vec![0.0; w.len()];
                    for (o, &g) in grad_out.iter().enumerate() {
                        axpy(g, xd, &mut gw[o * n_in..(o + 1) * n_in]);
                    }
                    vec![gw, grad_out.to_vec()]
                } else {
                    Vec::new()
                };
                (gx, params)
            }
            Layer::Conv1d { weight, .. } => {
                let (cin, t) = (x.shape()[0], x.shape()[1]);
                let (cout, k) = (weight.shape()[0], weight.shape()[2]);
                let tout = t - k + 1;
                let w = weight.data();
                let mut gx = vec![0.0; cin * t];
                let mut gw = if want_params { vec![0.0; w.len()] } else { Vec::new() };
                let mut gb = if want_params { vec![0.0; cout] } else { Vec::new() };
                for o in 0..cout {
                    let go = &grad_out[o * tout..(o + 1) * tout];
                    if want_params {
                        gb[o] = go.iter().sum();
                    }
                    for c in 0..cin {
                        let base = (o * cin + c) * k;
                        let wk = &w[base..base + k];
                        let xc = &xd[c * t..(c + 1) * t];
                        let gxc = &mut gx[c * t..(c + 1) * t];
                        for (s, &g) in go.iter().enumerate() {
                            axpy(g, wk, &mut gxc[s..s + k]);
                        }
                        if want_params {
                            for j in 0..k {
                                gw[base + j] += dot(go, &xc[j..j + tout]);
                            }
                        }
                    }
                }
                let params = if want_params { vec![gw, gb] } else { Vec::new() };
                (gx, params)
            }
            Layer::Relu => {
                (xd.iter().zip(grad_out).map(|(&v, &g)| if v > 0.0 { g } else { 0.0 }).collect(), Vec::new())
            }
            Layer::MeanPool => {
                let t = x.shape()[1];
                let gx = grad_out.iter().flat_map(|&g| std::iter::repeat_n(g / t as f64, t)).collect();
                (gx, Vec::new())
            }
        }
    }

    pub fn params(&self) -> Vec<&Tensor> {
        match self {
            Layer::Dense { weight, bias } | Layer::Conv1d { weight, bias } => vec![weight, bias],
            _ => Vec::new(),
        }
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor> {
        match self {
            Layer::Dense { weight, bias } | Layer::Conv1d { weight, bias } => vec![weight, bias],
            _ => Vec::new(),
        }
    }
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}
