//! Differentiable operations on [`Var`].

use std::sync::Arc;

use super::{Tape, Var};
use crate::error::{dim_err, Error, Result};
use crate::tensor::kernels::{self, broadcast_shape, conv_out, expand, reduce_to, split_axis};
use crate::tensor::{Element, Tensor};

fn tensor<T: Element>(shape: &[usize], data: Vec<T>) -> Tensor<T> {
    Tensor::from_parts(shape.to_vec(), data)
}

fn check_axis(shape: &[usize], axis: usize) -> Result<()> {
    if axis >= shape.len() {
        return Err(dim_err!("axis {axis} out of range for shape {shape:?}"));
    }
    Ok(())
}

pub(crate) fn sigmoid<T: Element>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

/// `ln(1 + e^x)` without overflow.
pub(crate) fn softplus<T: Element>(x: T) -> T {
    x.max(T::zero()) + (-x.abs()).exp().ln_1p()
}

#[derive(Clone, Copy)]
enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
}

// Named ops return Result, so the operator traits do not fit.
#[allow(clippy::should_implement_trait)]
impl<'t, T: Element> Var<'t, T> {
    fn same_tape(&self, other: &Var<'t, T>) -> Result<()> {
        if std::ptr::eq(self.tape, other.tape) {
            Ok(())
        } else {
            Err(Error::Contract("operands live on different tapes".into()))
        }
    }

    fn binary(self, other: Var<'t, T>, op: BinOp) -> Result<Var<'t, T>> {
        self.same_tape(&other)?;
        let a = self.value();
        let b = other.value();
        let out_shape = broadcast_shape(a.shape(), b.shape())?;
        let ea: Arc<Vec<T>> = Arc::new(expand(a.data(), a.shape(), &out_shape));
        let eb: Arc<Vec<T>> = Arc::new(expand(b.data(), b.shape(), &out_shape));
        let data: Vec<T> = ea
            .iter()
            .zip(eb.iter())
            .map(|(&x, &y)| match op {
                BinOp::Add => x + y,
                BinOp::Sub => x - y,
                BinOp::Mul => x * y,
                BinOp::Div => x / y,
            })
            .collect();
        let name = match op {
            BinOp::Add => "add",
            BinOp::Sub => "sub",
            BinOp::Mul => "mul",
            BinOp::Div => "div",
        };
        let (sa, sb) = (a.shape().to_vec(), b.shape().to_vec());
        let os = out_shape.clone();
        self.tape.push(name, tensor(&out_shape, data), &[self, other], move |g, needs| {
            let g = g.data();
            let ga = needs[0].then(|| {
                let full: Vec<T> = match op {
                    BinOp::Add | BinOp::Sub => g.to_vec(),
                    BinOp::Mul => g.iter().zip(eb.iter()).map(|(&g, &y)| g * y).collect(),
                    BinOp::Div => g.iter().zip(eb.iter()).map(|(&g, &y)| g / y).collect(),
                };
                tensor(&sa, reduce_to(&full, &os, &sa))
            });
            let gb = needs[1].then(|| {
                let full: Vec<T> = match op {
                    BinOp::Add => g.to_vec(),
                    BinOp::Sub => g.iter().map(|&g| -g).collect(),
                    BinOp::Mul => g.iter().zip(ea.iter()).map(|(&g, &x)| g * x).collect(),
                    BinOp::Div => g
                        .iter()
                        .zip(ea.iter().zip(eb.iter()))
                        .map(|(&g, (&x, &y))| -g * x / (y * y))
                        .collect(),
                };
                tensor(&sb, reduce_to(&full, &os, &sb))
            });
            vec![ga, gb]
        })
    }

    /// Elementwise sum with trailing-aligned broadcasting.
    pub fn add(self, other: Var<'t, T>) -> Result<Var<'t, T>> {
        self.binary(other, BinOp::Add)
    }

    pub fn sub(self, other: Var<'t, T>) -> Result<Var<'t, T>> {
        self.binary(other, BinOp::Sub)
    }

    pub fn mul(self, other: Var<'t, T>) -> Result<Var<'t, T>> {
        self.binary(other, BinOp::Mul)
    }

    pub fn div(self, other: Var<'t, T>) -> Result<Var<'t, T>> {
        self.binary(other, BinOp::Div)
    }

    /// Elementwise map with derivative `df(x, y)` where `y = f(x)`.
    fn unary(
        self,
        op: &'static str,
        f: impl Fn(T) -> T,
        df: impl Fn(T, T) -> T + 'static,
    ) -> Result<Var<'t, T>> {
        let x = self.value();
        let y = Arc::new(x.map(f));
        let yb = y.clone();
        self.tape.push(op, y, &[self], move |g, _| {
            let d = g
                .data()
                .iter()
                .zip(x.data().iter().zip(yb.data()))
                .map(|(&g, (&x, &y))| g * df(x, y))
                .collect();
            vec![Some(tensor(x.shape(), d))]
        })
    }

    pub fn add_scalar(self, c: f64) -> Result<Var<'t, T>> {
        let c = T::from_f64(c);
        self.unary("add_scalar", move |x| x + c, |_, _| T::one())
    }

    pub fn mul_scalar(self, c: f64) -> Result<Var<'t, T>> {
        let c = T::from_f64(c);
        self.unary("mul_scalar", move |x| x * c, move |_, _| c)
    }

    pub fn neg(self) -> Result<Var<'t, T>> {
        self.mul_scalar(-1.0)
    }

    pub fn square(self) -> Result<Var<'t, T>> {
        self.unary("square", |x| x * x, |x, _| x + x)
    }

    pub fn exp(self) -> Result<Var<'t, T>> {
        self.unary("exp", |x| x.exp(), |_, y| y)
    }

    /// Natural log; every input must be strictly positive.
    pub fn log(self) -> Result<Var<'t, T>> {
        if let Some(v) = self.value().data().iter().find(|&&v| v <= T::zero()) {
            return Err(Error::Domain(format!("log of non-positive value {v}")));
        }
        self.unary("log", |x| x.ln(), |x, _| T::one() / x)
    }

    pub fn sigmoid(self) -> Result<Var<'t, T>> {
        self.unary("sigmoid", sigmoid, |_, y| y * (T::one() - y))
    }

    /// `x * sigmoid(x)`.
    pub fn silu(self) -> Result<Var<'t, T>> {
        self.unary("silu", |x| x * sigmoid(x), |x, _| {
            let s = sigmoid(x);
            s + x * s * (T::one() - s)
        })
    }

    pub fn softplus(self) -> Result<Var<'t, T>> {
        self.unary("softplus", softplus, |x, _| sigmoid(x))
    }

    pub fn sum(self) -> Result<Var<'t, T>> {
        let x = self.value();
        let shape = x.shape().to_vec();
        let s = x.sum();
        self.tape.push("sum", Tensor::scalar(s), &[self], move |g, _| {
            vec![Some(Tensor::full(shape.clone(), g.item()))]
        })
    }

    pub fn mean(self) -> Result<Var<'t, T>> {
        let n = self.value().numel() as f64;
        self.sum()?.mul_scalar(1.0 / n)
    }

    /// `[m,k] x [k,n] -> [m,n]`.
    pub fn matmul(self, other: Var<'t, T>) -> Result<Var<'t, T>> {
        self.same_tape(&other)?;
        let a = self.value();
        let b = other.value();
        let [m, k] = a.dims2()?;
        let [k2, n] = b.dims2()?;
        if k != k2 {
            return Err(dim_err!("matmul inner extents differ: {:?} x {:?}", a.shape(), b.shape()));
        }
        let c = kernels::matmul(a.data(), b.data(), m, k, n, false, false);
        self.tape.push("matmul", tensor(&[m, n], c), &[self, other], move |g, needs| {
            let da = needs[0].then(|| tensor(&[m, k], kernels::matmul(g.data(), b.data(), m, n, k, false, true)));
            let db = needs[1].then(|| tensor(&[k, n], kernels::matmul(a.data(), g.data(), k, m, n, true, false)));
            vec![da, db]
        })
    }

    /// Transpose of a rank-2 value.
    pub fn t(self) -> Result<Var<'t, T>> {
        let x = self.value();
        let y = x.transpose2()?;
        self.tape.push("transpose", y, &[self], |g, _| {
            vec![Some(g.transpose2().expect("rank 2"))]
        })
    }

    pub fn reshape(self, shape: &[usize]) -> Result<Var<'t, T>> {
        let x = self.value();
        let orig = x.shape().to_vec();
        let y = (*x).clone().reshape(shape.to_vec())?;
        self.tape.push("reshape", y, &[self], move |g, _| {
            vec![Some(g.clone().reshape(orig.clone()).expect("same numel"))]
        })
    }

    /// Slice `len` entries starting at `start` along `axis`.
    pub fn narrow(self, axis: usize, start: usize, len: usize) -> Result<Var<'t, T>> {
        let x = self.value();
        check_axis(x.shape(), axis)?;
        let (outer, n, inner) = split_axis(x.shape(), axis);
        if len == 0 || start + len > n {
            return Err(dim_err!("narrow {start}..{} out of range for extent {n}", start + len));
        }
        let mut data = Vec::with_capacity(outer * len * inner);
        for o in 0..outer {
            let base = (o * n + start) * inner;
            data.extend_from_slice(&x.data()[base..base + len * inner]);
        }
        let mut shape = x.shape().to_vec();
        shape[axis] = len;
        let full = x.shape().to_vec();
        self.tape.push("narrow", tensor(&shape, data), &[self], move |g, _| {
            let mut d = vec![T::zero(); full.iter().product()];
            for o in 0..outer {
                let base = (o * n + start) * inner;
                d[base..base + len * inner].copy_from_slice(&g.data()[o * len * inner..(o + 1) * len * inner]);
            }
            vec![Some(tensor(&full, d))]
        })
    }

    /// Join values along `axis`; all other extents must agree.
    pub fn concat(parts: &[Var<'t, T>], axis: usize) -> Result<Var<'t, T>> {
        let first = parts
            .first()
            .ok_or_else(|| Error::Contract("concat of zero tensors".into()))?;
        let values: Vec<Arc<Tensor<T>>> = parts.iter().map(|p| p.value()).collect();
        let base = values[0].shape().to_vec();
        check_axis(&base, axis)?;
        for (p, v) in parts.iter().zip(&values) {
            first.same_tape(p)?;
            let s = v.shape();
            if s.len() != base.len() || s.iter().zip(&base).enumerate().any(|(i, (a, b))| i != axis && a != b) {
                return Err(dim_err!("cannot concat {s:?} with {base:?} along axis {axis}"));
            }
        }
        let extents: Vec<usize> = values.iter().map(|v| v.shape()[axis]).collect();
        let total: usize = extents.iter().sum();
        let (outer, _, inner) = split_axis(&base, axis);
        let mut data = Vec::with_capacity(outer * total * inner);
        for o in 0..outer {
            for (v, &e) in values.iter().zip(&extents) {
                data.extend_from_slice(&v.data()[o * e * inner..(o + 1) * e * inner]);
            }
        }
        let mut shape = base.clone();
        shape[axis] = total;
        let shapes: Vec<Vec<usize>> = values.iter().map(|v| v.shape().to_vec()).collect();
        first.tape.push("concat", tensor(&shape, data), parts, move |g, needs| {
            let mut out = Vec::with_capacity(extents.len());
            let mut offset = 0;
            for (i, &e) in extents.iter().enumerate() {
                if needs[i] {
                    let mut d = Vec::with_capacity(outer * e * inner);
                    for o in 0..outer {
                        let b = (o * total + offset) * inner;
                        d.extend_from_slice(&g.data()[b..b + e * inner]);
                    }
                    out.push(Some(tensor(&shapes[i], d)));
                } else {
                    out.push(None);
                }
                offset += e;
            }
            out
        })
    }

    /// Reverse the order of entries along `axis`.
    pub fn flip(self, axis: usize) -> Result<Var<'t, T>> {
        let x = self.value();
        check_axis(x.shape(), axis)?;
        let shape = x.shape().to_vec();
        let y = flip_data(x.data(), &shape, axis);
        self.tape.push("flip", tensor(&shape, y), &[self], move |g, _| {
            vec![Some(tensor(&shape, flip_data(g.data(), &shape, axis)))]
        })
    }

    /// Max-shifted softmax along `axis`.
    pub fn softmax(self, axis: usize) -> Result<Var<'t, T>> {
        let x = self.value();
        check_axis(x.shape(), axis)?;
        let shape = x.shape().to_vec();
        let (outer, n, inner) = split_axis(&shape, axis);
        let mut y = vec![T::zero(); x.numel()];
        let xd = x.data();
        for o in 0..outer {
            for i in 0..inner {
                let at = |j: usize| (o * n + j) * inner + i;
                let m = (0..n).map(|j| xd[at(j)]).fold(T::neg_infinity(), T::max);
                let mut z = T::zero();
                for j in 0..n {
                    let e = (xd[at(j)] - m).exp();
                    y[at(j)] = e;
                    z += e;
                }
                for j in 0..n {
                    y[at(j)] /= z;
                }
            }
        }
        let y = Arc::new(tensor(&shape, y));
        let yb = y.clone();
        self.tape.push("softmax", y, &[self], move |g, _| {
            let (gd, yd) = (g.data(), yb.data());
            let mut dx = vec![T::zero(); gd.len()];
            for o in 0..outer {
                for i in 0..inner {
                    let at = |j: usize| (o * n + j) * inner + i;
                    let dot: T = (0..n).map(|j| gd[at(j)] * yd[at(j)]).sum();
                    for j in 0..n {
                        dx[at(j)] = yd[at(j)] * (gd[at(j)] - dot);
                    }
                }
            }
            vec![Some(tensor(&shape, dx))]
        })
    }

    /// Normalize each row over the last axis, then scale by `gain` and shift
    /// by `bias` (both of the last extent).
    pub fn layer_norm(self, gain: Var<'t, T>, bias: Var<'t, T>, eps: f64) -> Result<Var<'t, T>> {
        if eps <= 0.0 {
            return Err(Error::Domain(format!("layer_norm eps must be positive, got {eps}")));
        }
        self.same_tape(&gain)?;
        self.same_tape(&bias)?;
        let x = self.value();
        let gv = gain.value();
        let bv = bias.value();
        let d = *x.shape().last().expect("non-empty shape");
        if gv.shape() != [d] || bv.shape() != [d] {
            return Err(dim_err!(
                "layer_norm over {d} features got gain {:?} bias {:?}",
                gv.shape(),
                bv.shape()
            ));
        }
        let rows = x.numel() / d;
        let eps = T::from_f64(eps);
        let dn = T::from_f64(d as f64);
        let mut xhat = vec![T::zero(); x.numel()];
        let mut inv_std = vec![T::zero(); rows];
        let mut y = vec![T::zero(); x.numel()];
        for r in 0..rows {
            let row = &x.data()[r * d..(r + 1) * d];
            let mean = row.iter().copied().sum::<T>() / dn;
            let var = row.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>() / dn;
            let is = T::one() / (var + eps).sqrt();
            inv_std[r] = is;
            for j in 0..d {
                let h = (row[j] - mean) * is;
                xhat[r * d + j] = h;
                y[r * d + j] = h * gv.data()[j] + bv.data()[j];
            }
        }
        let shape = x.shape().to_vec();
        self.tape.push("layer_norm", tensor(&shape, y), &[self, gain, bias], move |g, needs| {
            let gd = g.data();
            let dx = needs[0].then(|| {
                let mut dx = vec![T::zero(); gd.len()];
                for r in 0..rows {
                    let gr = &gd[r * d..(r + 1) * d];
                    let hr = &xhat[r * d..(r + 1) * d];
                    let mut m1 = T::zero();
                    let mut m2 = T::zero();
                    for j in 0..d {
                        let dh = gr[j] * gv.data()[j];
                        m1 += dh;
                        m2 += dh * hr[j];
                    }
                    m1 /= dn;
                    m2 /= dn;
                    for j in 0..d {
                        let dh = gr[j] * gv.data()[j];
                        dx[r * d + j] = inv_std[r] * (dh - m1 - hr[j] * m2);
                    }
                }
                tensor(&shape, dx)
            });
            let dgain = needs[1].then(|| {
                let mut s = vec![T::zero(); d];
                for r in 0..rows {
                    for j in 0..d {
                        s[j] += gd[r * d + j] * xhat[r * d + j];
                    }
                }
                tensor(&[d], s)
            });
            let dbias = needs[2].then(|| tensor(&[d], reduce_to(gd, &shape, &[d])));
            vec![dx, dgain, dbias]
        })
    }

    /// Cross-correlation of `[c_in, h, w]` with `kernel[c_out, c_in, k, k]`.
    pub fn conv2d(
        self,
        kernel: Var<'t, T>,
        bias: Option<Var<'t, T>>,
        stride: usize,
        padding: usize,
    ) -> Result<Var<'t, T>> {
        self.same_tape(&kernel)?;
        let x = self.value();
        let w = kernel.value();
        let [cin, h, wd] = x.dims3()?;
        let (cout, k) = match w.shape() {
            &[co, ci, k1, k2] if ci == cin && k1 == k2 => (co, k1),
            s => return Err(dim_err!("conv2d kernel {s:?} does not match input channels {cin}")),
        };
        let oh = conv_out(h, k, stride, padding)?;
        let ow = conv_out(wd, k, stride, padding)?;
        let kk = cin * k * k;
        let p = oh * ow;
        let cols = kernels::im2col(x.data(), cin, h, wd, k, stride, padding, oh, ow);
        let mut out = kernels::matmul(w.data(), &cols, cout, kk, p, false, false);
        let mut parents = vec![self, kernel];
        if let Some(b) = bias {
            self.same_tape(&b)?;
            let bv = b.value();
            if bv.shape() != [cout] {
                return Err(dim_err!("conv2d bias {:?} for {cout} channels", bv.shape()));
            }
            for (c, row) in out.chunks_mut(p).enumerate() {
                row.iter_mut().for_each(|v| *v += bv.data()[c]);
            }
            parents.push(b);
        }
        let wshape = w.shape().to_vec();
        let has_bias = bias.is_some();
        self.tape.push("conv2d", tensor(&[cout, oh, ow], out), &parents, move |g, needs| {
            let gd = g.data();
            let dx = needs[0].then(|| {
                let dcols = kernels::matmul(w.data(), gd, kk, cout, p, true, false);
                tensor(&[cin, h, wd], kernels::col2im(&dcols, cin, h, wd, k, stride, padding, oh, ow))
            });
            let dw = needs[1].then(|| tensor(&wshape, kernels::matmul(gd, &cols, cout, p, kk, false, true)));
            let mut res = vec![dx, dw];
            if has_bias {
                res.push(needs[2].then(|| tensor(&[cout], gd.chunks(p).map(|r| r.iter().copied().sum()).collect())));
            }
            res
        })
    }

    /// Transposed convolution of `[c_in, h, w]` with `kernel[c_in, c_out, k, k]`;
    /// output extent `(h - 1) * stride - 2 * padding + k`.
    pub fn conv_transpose2d(
        self,
        kernel: Var<'t, T>,
        bias: Option<Var<'t, T>>,
        stride: usize,
        padding: usize,
    ) -> Result<Var<'t, T>> {
        self.same_tape(&kernel)?;
        let x = self.value();
        let w = kernel.value();
        let [cin, h, wd] = x.dims3()?;
        let (cout, k) = match w.shape() {
            &[ci, co, k1, k2] if ci == cin && k1 == k2 => (co, k1),
            s => return Err(dim_err!("conv_transpose2d kernel {s:?} does not match input channels {cin}")),
        };
        if stride == 0 {
            return Err(dim_err!("stride must be positive"));
        }
        let span = |n: usize| ((n - 1) * stride + k).checked_sub(2 * padding).filter(|&v| v > 0);
        let (oh, ow) = match (span(h), span(wd)) {
            (Some(a), Some(b)) => (a, b),
            _ => return Err(dim_err!("conv_transpose2d padding {padding} leaves no output")),
        };
        let hw = h * wd;
        let ck = cout * k * k;
        let cols = kernels::matmul(w.data(), x.data(), ck, cin, hw, true, false);
        let mut out = kernels::col2im(&cols, cout, oh, ow, k, stride, padding, h, wd);
        let plane = oh * ow;
        let mut parents = vec![self, kernel];
        if let Some(b) = bias {
            self.same_tape(&b)?;
            let bv = b.value();
            if bv.shape() != [cout] {
                return Err(dim_err!("conv_transpose2d bias {:?} for {cout} channels", bv.shape()));
            }
            for (c, row) in out.chunks_mut(plane).enumerate() {
                row.iter_mut().for_each(|v| *v += bv.data()[c]);
            }
            parents.push(b);
        }
        let wshape = w.shape().to_vec();
        let has_bias = bias.is_some();
        self.tape.push("conv_transpose2d", tensor(&[cout, oh, ow], out), &parents, move |g, needs| {
            let gd = g.data();
            let gcols = kernels::im2col(gd, cout, oh, ow, k, stride, padding, h, wd);
            let dx = needs[0].then(|| tensor(&[cin, h, wd], kernels::matmul(w.data(), &gcols, cin, ck, hw, false, false)));
            let dw = needs[1].then(|| tensor(&wshape, kernels::matmul(x.data(), &gcols, cin, hw, ck, false, true)));
            let mut res = vec![dx, dw];
            if has_bias {
                res.push(needs[2].then(|| tensor(&[cout], gd.chunks(plane).map(|r| r.iter().copied().sum()).collect())));
            }
            res
        })
    }

    /// Causal depthwise convolution over time for `[len, channels]` with
    /// `kernel[channels, width]` and `bias[channels]`: output at `t` sees
    /// inputs `t - width + 1 ..= t`.
    pub fn causal_conv1d(self, kernel: Var<'t, T>, bias: Var<'t, T>) -> Result<Var<'t, T>> {
        self.same_tape(&kernel)?;
        self.same_tape(&bias)?;
        let x = self.value();
        let w = kernel.value();
        let b = bias.value();
        let [len, ch] = x.dims2()?;
        let width = match w.shape() {
            &[c, k] if c == ch => k,
            s => return Err(dim_err!("causal_conv1d kernel {s:?} for {ch} channels")),
        };
        if b.shape() != [ch] {
            return Err(dim_err!("causal_conv1d bias {:?} for {ch} channels", b.shape()));
        }
        let (xd, wdat) = (x.data(), w.data());
        let mut y = vec![T::zero(); len * ch];
        for t in 0..len {
            let row = &mut y[t * ch..(t + 1) * ch];
            row.copy_from_slice(b.data());
            for k in 0..width {
                let Some(src) = (t + k + 1).checked_sub(width) else { continue };
                let xr = &xd[src * ch..(src + 1) * ch];
                for c in 0..ch {
                    row[c] += wdat[c * width + k] * xr[c];
                }
            }
        }
        self.tape.push("causal_conv1d", tensor(&[len, ch], y), &[self, kernel, bias], move |g, needs| {
            let gd = g.data();
            let (xd, wdat) = (x.data(), w.data());
            let mut dx = vec![T::zero(); len * ch];
            let mut dw = vec![T::zero(); ch * width];
            let mut db = vec![T::zero(); ch];
            for t in 0..len {
                let gr = &gd[t * ch..(t + 1) * ch];
                for c in 0..ch {
                    db[c] += gr[c];
                }
                for k in 0..width {
                    let Some(src) = (t + k + 1).checked_sub(width) else { continue };
                    for c in 0..ch {
                        dx[src * ch + c] += gr[c] * wdat[c * width + k];
                        dw[c * width + k] += gr[c] * xd[src * ch + c];
                    }
                }
            }
            vec![
                needs[0].then(|| tensor(&[len, ch], dx)),
                needs[1].then(|| tensor(&[ch, width], dw)),
                needs[2].then(|| tensor(&[ch], db)),
            ]
        })
    }
}

pub(crate) fn flip_data<T: Element>(x: &[T], shape: &[usize], axis: usize) -> Vec<T> {
    let (outer, n, inner) = split_axis(shape, axis);
    let mut y = Vec::with_capacity(x.len());
    for o in 0..outer {
        for j in (0..n).rev() {
            let b = (o * n + j) * inner;
            y.extend_from_slice(&x[b..b + inner]);
        }
    }
    y
}

impl<T: Element> Tape<T> {
    /// Arithmetic mean of equally shaped values.
    pub fn mean_of<'t>(&'t self, parts: &[Var<'t, T>]) -> Result<Var<'t, T>> {
        let (first, rest) = parts
            .split_first()
            .ok_or_else(|| Error::Contract("mean of an empty list".into()))?;
        let mut acc = *first;
        for p in rest {
            if p.shape() != first.shape() {
                return Err(dim_err!("mean of unequal shapes {:?} and {:?}", first.shape(), p.shape()));
            }
            acc = acc.add(*p)?;
        }
        acc.mul_scalar(1.0 / parts.len() as f64)
    }
}
