//! Small layers shared by the encoder and decoder.

use crate::autograd::Var;
use crate::error::{Error, Result};
use crate::params::{Bound, Init, ParamId, Registry};
use crate::tensor::Element;

/// Dense layer `x W + b` with `W` stored as `[in, out]`.
#[derive(Clone, Debug)]
pub struct Linear {
    pub weight: ParamId,
    pub bias: Option<ParamId>,
    pub d_in: usize,
    pub d_out: usize,
}

impl Linear {
    pub fn new(reg: &mut Registry, name: &str, d_in: usize, d_out: usize, bias: bool) -> Self {
        let weight = reg.param(format!("{name}.weight"), &[d_in, d_out], Init::fan_in(d_in));
        let bias = bias.then(|| reg.param(format!("{name}.bias"), &[d_out], Init::Zeros));
        Self {
            weight,
            bias,
            d_in,
            d_out,
        }
    }

    /// `x: [n, d_in]` to `[n, d_out]`.
    pub fn forward<'t, T: Element>(&self, p: &Bound<'t, T>, x: Var<'t, T>) -> Result<Var<'t, T>> {
        let y = x.matmul(p[self.weight])?;
        match self.bias {
            Some(b) => y.add(p[b]),
            None => Ok(y),
        }
    }
}

#[derive(Clone, Debug)]
pub struct LayerNorm {
    pub gain: ParamId,
    pub bias: ParamId,
}

impl LayerNorm {
    pub const EPS: f64 = 1e-5;

    pub fn new(reg: &mut Registry, name: &str, d: usize) -> Self {
        Self {
            gain: reg.param(format!("{name}.gain"), &[d], Init::Ones),
            bias: reg.param(format!("{name}.bias"), &[d], Init::Zeros),
        }
    }

    pub fn forward<'t, T: Element>(&self, p: &Bound<'t, T>, x: Var<'t, T>) -> Result<Var<'t, T>> {
        x.layer_norm(p[self.gain], p[self.bias], Self::EPS)
    }
}

/// 2-D convolution over `[c, h, w]`, kernel `[c_out, c_in, k, k]`.
#[derive(Clone, Debug)]
pub struct Conv2d {
    pub weight: ParamId,
    pub bias: ParamId,
    pub stride: usize,
    pub padding: usize,
}

impl Conv2d {
    pub fn new(
        reg: &mut Registry,
        name: &str,
        c_in: usize,
        c_out: usize,
        k: usize,
        stride: usize,
        padding: usize,
    ) -> Self {
        Self {
            weight: reg.param(format!("{name}.weight"), &[c_out, c_in, k, k], Init::fan_in(c_in * k * k)),
            bias: reg.param(format!("{name}.bias"), &[c_out], Init::Zeros),
            stride,
            padding,
        }
    }

    pub fn forward<'t, T: Element>(&self, p: &Bound<'t, T>, x: Var<'t, T>) -> Result<Var<'t, T>> {
        x.conv2d(p[self.weight], Some(p[self.bias]), self.stride, self.padding)
    }
}

/// Transposed convolution, kernel `[c_in, c_out, k, k]`.
#[derive(Clone, Debug)]
pub struct ConvTranspose2d {
    pub weight: ParamId,
    pub bias: ParamId,
    pub stride: usize,
}

impl ConvTranspose2d {
    pub fn new(reg: &mut Registry, name: &str, c_in: usize, c_out: usize, k: usize, stride: usize) -> Self {
        Self {
            weight: reg.param(format!("{name}.weight"), &[c_in, c_out, k, k], Init::fan_in(c_in)),
            bias: reg.param(format!("{name}.bias"), &[c_out], Init::Zeros),
            stride,
        }
    }

    pub fn forward<'t, T: Element>(&self, p: &Bound<'t, T>, x: Var<'t, T>) -> Result<Var<'t, T>> {
        x.conv_transpose2d(p[self.weight], Some(p[self.bias]), self.stride, 0)
    }
}

/// Two-layer perceptron with a SiLU in between.
#[derive(Clone, Debug)]
pub struct Mlp {
    pub fc1: Linear,
    pub fc2: Linear,
}

impl Mlp {
    pub fn new(reg: &mut Registry, name: &str, d_in: usize, hidden: usize, d_out: usize) -> Self {
        Self {
            fc1: Linear::new(reg, &format!("{name}.fc1"), d_in, hidden, true),
            fc2: Linear::new(reg, &format!("{name}.fc2"), hidden, d_out, true),
        }
    }

    pub fn forward<'t, T: Element>(&self, p: &Bound<'t, T>, x: Var<'t, T>) -> Result<Var<'t, T>> {
        let h = self.fc1.forward(p, x)?.silu()?;
        self.fc2.forward(p, h)
    }
}

/// Multi-head scaled dot-product attention with input and output
/// projections.
#[derive(Clone, Debug)]
pub struct Attention {
    pub q: Linear,
    pub k: Linear,
    pub v: Linear,
    pub out: Linear,
    pub heads: usize,
}

impl Attention {
    pub fn new(reg: &mut Registry, name: &str, d: usize, heads: usize) -> Result<Self> {
        if heads == 0 || !d.is_multiple_of(heads) {
            return Err(Error::Config(format!("width {d} is not divisible by {heads} heads")));
        }
        Ok(Self {
            q: Linear::new(reg, &format!("{name}.q"), d, d, true),
            k: Linear::new(reg, &format!("{name}.k"), d, d, true),
            v: Linear::new(reg, &format!("{name}.v"), d, d, true),
            out: Linear::new(reg, &format!("{name}.out"), d, d, true),
            heads,
        })
    }

    /// `q: [nq, d]`, `k, v: [nk, d]` to `[nq, d]`.
    pub fn forward<'t, T: Element>(
        &self,
        p: &Bound<'t, T>,
        q: Var<'t, T>,
        k: Var<'t, T>,
        v: Var<'t, T>,
    ) -> Result<Var<'t, T>> {
        Ok(self.forward_with_weights(p, q, k, v)?.0)
    }

    /// Like [`forward`](Self::forward), also returning each head's
    /// `[nq, nk]` attention matrix.
    pub fn forward_with_weights<'t, T: Element>(
        &self,
        p: &Bound<'t, T>,
        q: Var<'t, T>,
        k: Var<'t, T>,
        v: Var<'t, T>,
    ) -> Result<(Var<'t, T>, Vec<Var<'t, T>>)> {
        let q = self.q.forward(p, q)?;
        let k = self.k.forward(p, k)?;
        let v = self.v.forward(p, v)?;
        let (o, w) = attend(q, k, v, self.heads)?;
        Ok((self.out.forward(p, o)?, w))
    }
}

/// Unprojected multi-head attention over already projected `q, k, v`.
pub fn attend<'t, T: Element>(
    q: Var<'t, T>,
    k: Var<'t, T>,
    v: Var<'t, T>,
    heads: usize,
) -> Result<(Var<'t, T>, Vec<Var<'t, T>>)> {
    let d = q.shape()[1];
    if heads == 0 || !d.is_multiple_of(heads) {
        return Err(Error::Config(format!("width {d} is not divisible by {heads} heads")));
    }
    let hd = d / heads;
    let scale = 1.0 / (hd as f64).sqrt();
    let mut outs = Vec::with_capacity(heads);
    let mut weights = Vec::with_capacity(heads);
    for h in 0..heads {
        let (qh, kh, vh) = if heads == 1 {
            (q, k, v)
        } else {
            (q.narrow(1, h * hd, hd)?, k.narrow(1, h * hd, hd)?, v.narrow(1, h * hd, hd)?)
        };
        let w = qh.matmul(kh.t()?)?.mul_scalar(scale)?.softmax(1)?;
        outs.push(w.matmul(vh)?);
        weights.push(w);
    }
    let o = if heads == 1 { outs[0] } else { Var::concat(&outs, 1)? };
    Ok((o, weights))
}
