use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

/// Layer nonlinearity. ELU uses α = 1.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Activation {
    Relu,
    Elu,
    Tanh,
    Sigmoid,
    Softmax,
    Linear,
}

impl Activation {
    pub fn name(self) -> &'static str {
        match self {
            Activation::Relu => "relu",
            Activation::Elu => "elu",
            Activation::Tanh => "tanh",
            Activation::Sigmoid => "sigmoid",
            Activation::Softmax => "softmax",
            Activation::Linear => "linear",
        }
    }

    /// Applies the activation to one vector in place.
    pub fn apply_in_place(self, v: &mut [f64]) {
        match self {
            Activation::Relu => v.iter_mut().for_each(|x| *x = x.max(0.0)),
            Activation::Elu => v.iter_mut().for_each(|x| *x = elu(*x)),
            Activation::Tanh => v.iter_mut().for_each(|x| *x = x.tanh()),
            Activation::Sigmoid => v.iter_mut().for_each(|x| *x = sigmoid(*x)),
            Activation::Softmax => softmax_in_place(v),
            Activation::Linear => {}
        }
    }

    /// Vector-Jacobian product for one row: given the pre-activation `input`,
    /// the activation `output`, and the upstream gradient, writes the gradient
    /// with respect to `input` into `out`.
    pub(crate) fn vjp(self, input: &[f64], output: &[f64], upstream: &[f64], out: &mut [f64]) {
        match self {
            Activation::Relu => {
                for i in 0..out.len() {
                    out[i] = if input[i] > 0.0 { upstream[i] } else { 0.0 };
                }
            }
            Activation::Elu => {
                for i in 0..out.len() {
                    // d/dx (e^x - 1) = e^x = y + 1 for x <= 0
                    let d = if input[i] > 0.0 { 1.0 } else { output[i] + 1.0 };
                    out[i] = upstream[i] * d;
                }
            }
            Activation::Tanh => {
                for i in 0..out.len() {
                    out[i] = upstream[i] * (1.0 - output[i] * output[i]);
                }
            }
            Activation::Sigmoid => {
                for i in 0..out.len() {
                    out[i] = upstream[i] * output[i] * (1.0 - output[i]);
                }
            }
            Activation::Softmax => {
                let dot: f64 = upstream.iter().zip(output).map(|(g, p)| g * p).sum();
                for i in 0..out.len() {
                    out[i] = output[i] * (upstream[i] - dot);
                }
            }
            Activation::Linear => out.copy_from_slice(upstream),
        }
    }
}

impl FromStr for Activation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s.trim().to_ascii_lowercase().as_str() {
            "relu" => Activation::Relu,
            "elu" => Activation::Elu,
            "tanh" => Activation::Tanh,
            "sigmoid" => Activation::Sigmoid,
            "softmax" => Activation::Softmax,
            "linear" => Activation::Linear,
            other => return Err(Error::Config(format!("unknown activation {other:?}"))),
        })
    }
}

impl fmt::Display for Activation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Applies `tag` to a copy of `v`.
pub fn activation_apply(tag: Activation, v: &[f64]) -> Result<Vec<f64>> {
    if tag == Activation::Softmax && v.is_empty() {
        return Err(Error::Domain("softmax of an empty vector".into()));
    }
    let mut out = v.to_vec();
    tag.apply_in_place(&mut out);
    Ok(out)
}

#[inline]
fn elu(x: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        x.exp_m1()
    }
}

#[inline]
fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn softmax_in_place(v: &mut [f64]) {
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for x in v.iter_mut() {
        *x = (*x - max).exp();
        total += *x;
    }
    for x in v.iter_mut() {
        *x /= total;
    }
}
