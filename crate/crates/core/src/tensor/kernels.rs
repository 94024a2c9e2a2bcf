//! Raw buffer kernels shared by the differentiable operations.

use super::Element;
use crate::error::{dim_err, Result};

/// Logical `op(A)[m,k] * op(B)[k,n]`; `ta`/`tb` mean the stored buffer is
/// the transpose of the logical operand.
#[allow(clippy::too_many_arguments)]
pub fn matmul<T: Element>(a: &[T], b: &[T], m: usize, k: usize, n: usize, ta: bool, tb: bool) -> Vec<T> {
    let mut c = vec![T::zero(); m * n];
    gemm_into(a, b, &mut c, m, k, n, ta, tb, false);
    c
}

/// `C (+)= op(A) * op(B)` into an existing buffer.
#[allow(clippy::too_many_arguments)]
pub fn gemm_into<T: Element>(
    a: &[T],
    b: &[T],
    c: &mut [T],
    m: usize,
    k: usize,
    n: usize,
    ta: bool,
    tb: bool,
    accumulate: bool,
) {
    assert_eq!(a.len(), m * k);
    assert_eq!(b.len(), k * n);
    assert_eq!(c.len(), m * n);
    let (rsa, csa) = if ta { (1, m as isize) } else { (k as isize, 1) };
    let (rsb, csb) = if tb { (1, k as isize) } else { (n as isize, 1) };
    let beta = if accumulate { T::one() } else { T::zero() };
    // SAFETY: lengths are asserted above and the strides describe those
    // exact buffers; `c` is a distinct mutable borrow.
    unsafe {
        T::gemm(
            m,
            k,
            n,
            T::one(),
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

/// Output extent of a strided window.
pub fn conv_out(len: usize, k: usize, stride: usize, pad: usize) -> Result<usize> {
    let padded = len + 2 * pad;
    if stride == 0 || k == 0 || padded < k {
        return Err(dim_err!(
            "kernel {k} does not fit input {len} with padding {pad} (stride {stride})"
        ));
    }
    Ok((padded - k) / stride + 1)
}

/// Unfold `[c, h, w]` into columns `[c*k*k, oh*ow]`.
#[allow(clippy::too_many_arguments)]
pub fn im2col<T: Element>(x: &[T], c: usize, h: usize, w: usize, k: usize, s: usize, p: usize, oh: usize, ow: usize) -> Vec<T> {
    let mut cols = vec![T::zero(); c * k * k * oh * ow];
    let plane = oh * ow;
    for ci in 0..c {
        for ky in 0..k {
            for kx in 0..k {
                let row = (ci * k + ky) * k + kx;
                let dst = &mut cols[row * plane..(row + 1) * plane];
                for oy in 0..oh {
                    let iy = (oy * s + ky) as isize - p as isize;
                    if iy < 0 || iy >= h as isize {
                        continue;
                    }
                    let src_row = &x[(ci * h + iy as usize) * w..(ci * h + iy as usize + 1) * w];
                    for ox in 0..ow {
                        let ix = (ox * s + kx) as isize - p as isize;
                        if ix >= 0 && ix < w as isize {
                            dst[oy * ow + ox] = src_row[ix as usize];
                        }
                    }
                }
            }
        }
    }
    cols
}

/// Adjoint of [`im2col`]: scatter-add columns back into `[c, h, w]`.
#[allow(clippy::too_many_arguments)]
pub fn col2im<T: Element>(cols: &[T], c: usize, h: usize, w: usize, k: usize, s: usize, p: usize, oh: usize, ow: usize) -> Vec<T> {
    let mut x = vec![T::zero(); c * h * w];
    let plane = oh * ow;
    for ci in 0..c {
        for ky in 0..k {
            for kx in 0..k {
                let row = (ci * k + ky) * k + kx;
                let src = &cols[row * plane..(row + 1) * plane];
                for oy in 0..oh {
                    let iy = (oy * s + ky) as isize - p as isize;
                    if iy < 0 || iy >= h as isize {
                        continue;
                    }
                    let base = (ci * h + iy as usize) * w;
                    for ox in 0..ow {
                        let ix = (ox * s + kx) as isize - p as isize;
                        if ix >= 0 && ix < w as isize {
                            x[base + ix as usize] += src[oy * ow + ox];
                        }
                    }
                }
            }
        }
    }
    x
}

/// Trailing-aligned broadcast of two shapes.
pub fn broadcast_shape(a: &[usize], b: &[usize]) -> Result<Vec<usize>> {
    let rank = a.len().max(b.len());
    let mut out = vec![0; rank];
    for i in 0..rank {
        let da = if i < rank - a.len() { 1 } else { a[i - (rank - a.len())] };
        let db = if i < rank - b.len() { 1 } else { b[i - (rank - b.len())] };
        out[i] = match (da, db) {
            (x, y) if x == y => x,
            (1, y) => y,
            (x, 1) => x,
            _ => return Err(dim_err!("shapes {a:?} and {b:?} do not broadcast")),
        };
    }
    Ok(out)
}

/// Strides of `shape` viewed inside `out` (zero along broadcast axes).
pub fn broadcast_strides(shape: &[usize], out: &[usize]) -> Vec<usize> {
    let lead = out.len() - shape.len();
    let mut strides = vec![0; out.len()];
    let mut acc = 1;
    for i in (0..shape.len()).rev() {
        strides[lead + i] = if shape[i] == 1 { 0 } else { acc };
        acc *= shape[i];
    }
    strides
}

/// How an operand maps onto a broadcast output.
enum Layout {
    Same,
    /// operand is the trailing block of the output, repeated
    Tile(usize),
    General(Vec<usize>),
}

fn layout(shape: &[usize], out: &[usize]) -> Layout {
    let n: usize = shape.iter().product();
    let total: usize = out.iter().product();
    if n == total {
        return Layout::Same;
    }
    let trimmed: Vec<usize> = shape.iter().copied().skip_while(|&d| d == 1).collect();
    if out.ends_with(&trimmed) {
        return Layout::Tile(n);
    }
    Layout::General(broadcast_strides(shape, out))
}

fn for_each_offset(out: &[usize], strides: &[usize], mut f: impl FnMut(usize, usize)) {
    let total: usize = out.iter().product();
    let rank = out.len();
    let mut idx = vec![0usize; rank];
    let mut off = 0usize;
    for flat in 0..total {
        f(flat, off);
        for ax in (0..rank).rev() {
            idx[ax] += 1;
            off += strides[ax];
            if idx[ax] < out[ax] {
                break;
            }
            off -= strides[ax] * out[ax];
            idx[ax] = 0;
        }
    }
}

/// Gather an operand into the full broadcast output shape.
pub fn expand<T: Element>(x: &[T], shape: &[usize], out: &[usize]) -> Vec<T> {
    match layout(shape, out) {
        Layout::Same => x.to_vec(),
        Layout::Tile(n) => {
            let total: usize = out.iter().product();
            (0..total).map(|i| x[i % n]).collect()
        }
        Layout::General(strides) => {
            let mut res = vec![T::zero(); out.iter().product()];
            for_each_offset(out, &strides, |flat, off| res[flat] = x[off]);
            res
        }
    }
}

/// Sum a full-shape buffer down to `shape` (adjoint of [`expand`]).
pub fn reduce_to<T: Element>(g: &[T], out: &[usize], shape: &[usize]) -> Vec<T> {
    match layout(shape, out) {
        Layout::Same => g.to_vec(),
        Layout::Tile(n) => {
            let mut res = vec![T::zero(); n];
            for chunk in g.chunks(n) {
                for (r, &v) in res.iter_mut().zip(chunk) {
                    *r += v;
                }
            }
            res
        }
        Layout::General(strides) => {
            let mut res = vec![T::zero(); shape.iter().product()];
            for_each_offset(out, &strides, |flat, off| res[off] += g[flat]);
            res
        }
    }
}

/// Split a shape around `axis` into (outer, axis extent, inner).
pub fn split_axis(shape: &[usize], axis: usize) -> (usize, usize, usize) {
    let outer = shape[..axis].iter().product();
    let inner = shape[axis + 1..].iter().product();
    (outer, shape[axis], inner)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matmul_transposes() {
        // A = [[1,2],[3,4]], B = [[5,6],[7,8]]
        let a = [1.0f64, 2., 3., 4.];
        let b = [5.0f64, 6., 7., 8.];
        assert_eq!(matmul(&a, &b, 2, 2, 2, false, false), vec![19., 22., 43., 50.]);
        // A^T B
        assert_eq!(matmul(&a, &b, 2, 2, 2, true, false), vec![26., 30., 38., 44.]);
        // A B^T
        assert_eq!(matmul(&a, &b, 2, 2, 2, false, true), vec![17., 23., 39., 53.]);
    }

    #[test]
    fn broadcast_rules() {
        assert_eq!(broadcast_shape(&[4, 3], &[3]).unwrap(), vec![4, 3]);
        assert_eq!(broadcast_shape(&[4, 1], &[1, 5]).unwrap(), vec![4, 5]);
        assert!(broadcast_shape(&[4, 3], &[4]).is_err());
    }

    #[test]
    fn expand_and_reduce_are_adjoint() {
        let x = [1.0f64, 2.0];
        let e = expand(&x, &[2, 1], &[2, 3]);
        assert_eq!(e, vec![1., 1., 1., 2., 2., 2.]);
        let r = reduce_to(&[1.0f64; 6], &[2, 3], &[2, 1]);
        assert_eq!(r, vec![3., 3.]);
        let t = expand(&[1.0f64, 2., 3.], &[3], &[2, 3]);
        assert_eq!(t, vec![1., 2., 3., 1., 2., 3.]);
    }

    #[test]
    fn im2col_col2im_adjoint() {
        // <im2col(x), y> == <x, col2im(y)>
        let (c, h, w, k, s, p) = (2, 5, 4, 3, 2, 1);
        let oh = conv_out(h, k, s, p).unwrap();
        let ow = conv_out(w, k, s, p).unwrap();
        let x: Vec<f64> = (0..c * h * w).map(|i| (i as f64 * 0.37).sin()).collect();
        let y: Vec<f64> = (0..c * k * k * oh * ow).map(|i| (i as f64 * 0.11).cos()).collect();
        let lhs: f64 = im2col(&x, c, h, w, k, s, p, oh, ow).iter().zip(&y).map(|(a, b)| a * b).sum();
        let rhs: f64 = x.iter().zip(col2im(&y, c, h, w, k, s, p, oh, ow)).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() < 1e-12);
    }
}
