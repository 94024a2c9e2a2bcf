//! Selective (S6) scan: discretization and the first-order linear recurrence
//! `h_t = exp(delta_t A) h_{t-1} + delta_t B_t x_t`, `y_t = C_t h_t + D x_t`.
//!
//! Two evaluation strategies share one contract. [`ScanMode::Sequential`]
//! walks time step by step. [`ScanMode::Parallel`] composes the affine maps
//! `h -> a h + b` with a work-efficient up-sweep/down-sweep over time, which
//! relies only on the associativity of
//! `(a2, b2) . (a1, b1) = (a1 a2, a2 b1 + b2)`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::autograd::Var;
use crate::error::{dim_err, Error, Result};
use crate::tensor::{Element, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScanMode {
    #[default]
    Sequential,
    Parallel,
}

/// Below this many lane-updates per sweep level the parallel scan stays on
/// the calling thread. The combine order is fixed either way.
const PAR_GRAIN: usize = 1 << 15;

/// Zero-order-hold discretization with the simplified input matrix:
/// `A_bar[t,i,j] = exp(delta[t,i] A[i,j])`, `B_bar[t,i,j] = delta[t,i] B[t,j]`.
pub fn discretize<T: Element>(delta: &Tensor<T>, a: &Tensor<T>, b: &Tensor<T>) -> Result<(Tensor<T>, Tensor<T>)> {
    let [len, di] = delta.dims2()?;
    let [di2, ds] = a.dims2()?;
    let [len2, ds2] = b.dims2()?;
    if di != di2 || len != len2 || ds != ds2 {
        return Err(dim_err!(
            "discretize shapes disagree: delta {:?}, A {:?}, B {:?}",
            delta.shape(),
            a.shape(),
            b.shape()
        ));
    }
    check_positive(delta)?;
    let mut abar = Vec::with_capacity(len * di * ds);
    let mut bbar = Vec::with_capacity(len * di * ds);
    for t in 0..len {
        for i in 0..di {
            let dt = delta.data()[t * di + i];
            for j in 0..ds {
                abar.push((dt * a.data()[i * ds + j]).exp());
                bbar.push(dt * b.data()[t * ds + j]);
            }
        }
    }
    Ok((
        Tensor::new([len, di, ds], abar)?,
        Tensor::new([len, di, ds], bbar)?,
    ))
}

// Negated form also rejects NaN.
#[allow(clippy::neg_cmp_op_on_partial_ord)]
fn check_positive<T: Element>(delta: &Tensor<T>) -> Result<()> {
    match delta.data().iter().find(|&&v| !(v > T::zero())) {
        Some(v) => Err(Error::Domain(format!("scan step delta must be positive, got {v}"))),
        None => Ok(()),
    }
}

/// Inclusive linear recurrence `h_t = a_t h_{t-1} + b_t`, `h_{-1} = 0`, over
/// `len` rows of `lanes` independent channels, evaluated step by step.
pub fn linear_scan_sequential<T: Element>(a: &[T], b: &[T], len: usize, lanes: usize) -> Vec<T> {
    assert_eq!(a.len(), len * lanes);
    assert_eq!(b.len(), len * lanes);
    let mut h = vec![T::zero(); len * lanes];
    let mut prev = vec![T::zero(); lanes];
    for t in 0..len {
        let row = &mut h[t * lanes..(t + 1) * lanes];
        let (ar, br) = (&a[t * lanes..(t + 1) * lanes], &b[t * lanes..(t + 1) * lanes]);
        for p in 0..lanes {
            row[p] = ar[p] * prev[p] + br[p];
        }
        prev.copy_from_slice(row);
    }
    h
}

/// Same recurrence as [`linear_scan_sequential`], evaluated with a
/// Blelloch up-sweep/down-sweep over time. Each element is the affine map
/// `(a_t, b_t)`; rows are padded to a power of two with the identity `(1, 0)`.
pub fn linear_scan_parallel<T: Element>(a: &[T], b: &[T], len: usize, lanes: usize) -> Vec<T> {
    assert_eq!(a.len(), len * lanes);
    assert_eq!(b.len(), len * lanes);
    let size = len.next_power_of_two();
    let mut pa = vec![T::one(); size * lanes];
    let mut pb = vec![T::zero(); size * lanes];
    pa[..len * lanes].copy_from_slice(a);
    pb[..len * lanes].copy_from_slice(b);

    // Up-sweep: the last row of every block of 2d rows becomes the
    // composition of the whole block.
    let mut d = 1;
    while d < size {
        sweep_level(&mut pa, &mut pb, d, lanes, |la, lb, ra, rb| {
            *rb = *ra * *lb + *rb;
            *ra = *la * *ra;
        });
        d *= 2;
    }

    // Down-sweep to exclusive prefixes.
    let root = (size - 1) * lanes;
    pa[root..].fill(T::one());
    pb[root..].fill(T::zero());
    let mut d = size / 2;
    while d >= 1 {
        sweep_level(&mut pa, &mut pb, d, lanes, |la, lb, ra, rb| {
            // left subtree total (la, lb); block prefix (ra, rb)
            let (ta, tb) = (*la, *lb);
            *la = *ra;
            *lb = *rb;
            *rb = ta * *rb + tb;
            *ra *= ta;
        });
        d /= 2;
    }

    // Inclusive step: h_t = a_t * E_t(0) + b_t.
    let mut h = vec![T::zero(); len * lanes];
    for ((hv, &e), (&av, &bv)) in h.iter_mut().zip(&pb[..len * lanes]).zip(a.iter().zip(b)) {
        *hv = av * e + bv;
    }
    h
}

/// Apply `f(left_a, left_b, right_a, right_b)` lane-wise to rows `d-1` and
/// `2d-1` of every block of `2d` rows.
fn sweep_level<T, F>(pa: &mut [T], pb: &mut [T], d: usize, lanes: usize, f: F)
where
    T: Element,
    F: Fn(&mut T, &mut T, &mut T, &mut T) + Sync,
{
    let block = 2 * d * lanes;
    let apply = |ca: &mut [T], cb: &mut [T]| {
        let (la, ra) = ca.split_at_mut((2 * d - 1) * lanes);
        let (lb, rb) = cb.split_at_mut((2 * d - 1) * lanes);
        let la = &mut la[(d - 1) * lanes..d * lanes];
        let lb = &mut lb[(d - 1) * lanes..d * lanes];
        for p in 0..lanes {
            f(&mut la[p], &mut lb[p], &mut ra[p], &mut rb[p]);
        }
    };
    let blocks = pa.len() / block;
    if blocks > 1 && blocks * lanes >= PAR_GRAIN {
        pa.par_chunks_mut(block)
            .zip(pb.par_chunks_mut(block))
            .for_each(|(ca, cb)| apply(ca, cb));
    } else {
        for (ca, cb) in pa.chunks_mut(block).zip(pb.chunks_mut(block)) {
            apply(ca, cb);
        }
    }
}

fn linear_scan<T: Element>(mode: ScanMode, a: &[T], b: &[T], len: usize, lanes: usize) -> Vec<T> {
    match mode {
        ScanMode::Sequential => linear_scan_sequential(a, b, len, lanes),
        ScanMode::Parallel => linear_scan_parallel(a, b, len, lanes),
    }
}

struct ScanShapes {
    len: usize,
    di: usize,
    ds: usize,
}

fn scan_shapes<T: Element>(
    x: &Tensor<T>,
    delta: &Tensor<T>,
    a: &Tensor<T>,
    b: &Tensor<T>,
    c: &Tensor<T>,
    d: &Tensor<T>,
) -> Result<ScanShapes> {
    let [len, di] = x.dims2()?;
    let [_, ds] = a.dims2()?;
    let ok = delta.shape() == [len, di]
        && a.shape() == [di, ds]
        && b.shape() == [len, ds]
        && c.shape() == [len, ds]
        && d.shape() == [di];
    if !ok {
        return Err(dim_err!(
            "selective scan shapes disagree: x {:?} delta {:?} A {:?} B {:?} C {:?} D {:?}",
            x.shape(),
            delta.shape(),
            a.shape(),
            b.shape(),
            c.shape(),
            d.shape()
        ));
    }
    check_positive(delta)?;
    Ok(ScanShapes { len, di, ds })
}

/// Forward pass shared by the tape op and the raw evaluator. Returns
/// `(y, A_bar, h)`; the latter two are kept for the backward pass.
#[allow(clippy::too_many_arguments)]
fn scan_forward<T: Element>(
    mode: ScanMode,
    s: &ScanShapes,
    x: &[T],
    delta: &[T],
    a: &[T],
    b: &[T],
    c: &[T],
    d: &[T],
) -> (Vec<T>, Vec<T>, Vec<T>) {
    let ScanShapes { len, di, ds } = *s;
    let lanes = di * ds;
    let mut abar = vec![T::zero(); len * lanes];
    let mut bx = vec![T::zero(); len * lanes];
    for t in 0..len {
        for i in 0..di {
            let dt = delta[t * di + i];
            let dx = dt * x[t * di + i];
            let o = (t * di + i) * ds;
            for j in 0..ds {
                abar[o + j] = (dt * a[i * ds + j]).exp();
                bx[o + j] = dx * b[t * ds + j];
            }
        }
    }
    let h = linear_scan(mode, &abar, &bx, len, lanes);
    let mut y = vec![T::zero(); len * di];
    for t in 0..len {
        let ct = &c[t * ds..(t + 1) * ds];
        for i in 0..di {
            let hr = &h[(t * di + i) * ds..(t * di + i + 1) * ds];
            let acc: T = hr.iter().zip(ct).map(|(&hv, &cv)| hv * cv).sum();
            y[t * di + i] = acc + d[i] * x[t * di + i];
        }
    }
    (y, abar, h)
}

/// Evaluate the scan on plain tensors (no gradient tracking).
pub fn selective_scan_eval<T: Element>(
    mode: ScanMode,
    x: &Tensor<T>,
    delta: &Tensor<T>,
    a: &Tensor<T>,
    b: &Tensor<T>,
    c: &Tensor<T>,
    d: &Tensor<T>,
) -> Result<Tensor<T>> {
    let s = scan_shapes(x, delta, a, b, c, d)?;
    let (y, _, _) = scan_forward(mode, &s, x.data(), delta.data(), a.data(), b.data(), c.data(), d.data());
    Tensor::new([s.len, s.di], y)
}

/// Differentiable selective scan.
///
/// Shapes: `x, delta: [L, d_inner]`, `a: [d_inner, d_state]`,
/// `b, c: [L, d_state]`, `d: [d_inner]`; output `[L, d_inner]`.
pub fn selective_scan<'t, T: Element>(
    mode: ScanMode,
    x: Var<'t, T>,
    delta: Var<'t, T>,
    a: Var<'t, T>,
    b: Var<'t, T>,
    c: Var<'t, T>,
    d: Var<'t, T>,
) -> Result<Var<'t, T>> {
    let (xv, dv, av, bv, cv, dd) = (x.value(), delta.value(), a.value(), b.value(), c.value(), d.value());
    let s = scan_shapes(&xv, &dv, &av, &bv, &cv, &dd)?;
    let (y, abar, h) = scan_forward(mode, &s, xv.data(), dv.data(), av.data(), bv.data(), cv.data(), dd.data());
    let ScanShapes { len, di, ds } = s;
    let y = Tensor::new([len, di], y)?;
    let tape = x.tape();
    tape.push("selective_scan", y, &[x, delta, a, b, c, d], move |g, needs| {
        let lanes = di * ds;
        let dy = g.data();
        let (x, delta, a, b, c, d) = (xv.data(), dv.data(), av.data(), bv.data(), cv.data(), dd.data());

        // Reverse recurrence gh_t = dy_t C_t + A_bar_{t+1} gh_{t+1}, run as a
        // forward scan over reversed time.
        let mut ra = vec![T::zero(); len * lanes];
        let mut rb = vec![T::zero(); len * lanes];
        for s in 0..len {
            let t = len - 1 - s;
            for i in 0..di {
                let gy = dy[t * di + i];
                for j in 0..ds {
                    let p = i * ds + j;
                    rb[s * lanes + p] = gy * c[t * ds + j];
                    if t + 1 < len {
                        ra[s * lanes + p] = abar[(t + 1) * lanes + p];
                    }
                }
            }
        }
        let ghr = linear_scan(mode, &ra, &rb, len, lanes);
        let gh = |t: usize, p: usize| ghr[(len - 1 - t) * lanes + p];

        let mut gx = vec![T::zero(); len * di];
        let mut gdelta = vec![T::zero(); len * di];
        let mut ga = vec![T::zero(); di * ds];
        let mut gb = vec![T::zero(); len * ds];
        let mut gc = vec![T::zero(); len * ds];
        let mut gd = vec![T::zero(); di];
        for t in 0..len {
            for i in 0..di {
                let gy = dy[t * di + i];
                let xt = x[t * di + i];
                let dt = delta[t * di + i];
                gd[i] += gy * xt;
                let mut gxi = gy * d[i];
                let mut gdt = T::zero();
                for j in 0..ds {
                    let p = i * ds + j;
                    let hv = h[t * lanes + p];
                    let hprev = if t > 0 { h[(t - 1) * lanes + p] } else { T::zero() };
                    let ghv = gh(t, p);
                    gc[t * ds + j] += gy * hv;
                    // d/d(delta*A) of A_bar, times upstream
                    let q = ghv * hprev * abar[t * lanes + p];
                    gdt += q * a[p] + ghv * b[t * ds + j] * xt;
                    ga[p] += q * dt;
                    gb[t * ds + j] += ghv * dt * xt;
                    gxi += ghv * dt * b[t * ds + j];
                }
                gx[t * di + i] = gxi;
                gdelta[t * di + i] = gdt;
            }
        }
        let mk = |need: bool, shape: &[usize], v: Vec<T>| need.then(|| Tensor::from_parts(shape.to_vec(), v));
        vec![
            mk(needs[0], &[len, di], gx),
            mk(needs[1], &[len, di], gdelta),
            mk(needs[2], &[di, ds], ga),
            mk(needs[3], &[len, ds], gb),
            mk(needs[4], &[len, ds], gc),
            mk(needs[5], &[di], gd),
        ]
    })
}

/// Differentiable scan evaluated step by step.
pub fn selective_scan_seq<'t, T: Element>(
    x: Var<'t, T>,
    delta: Var<'t, T>,
    a: Var<'t, T>,
    b: Var<'t, T>,
    c: Var<'t, T>,
    d: Var<'t, T>,
) -> Result<Var<'t, T>> {
    selective_scan(ScanMode::Sequential, x, delta, a, b, c, d)
}

/// Differentiable scan evaluated with the associative up/down sweep.
pub fn selective_scan_parallel<'t, T: Element>(
    x: Var<'t, T>,
    delta: Var<'t, T>,
    a: Var<'t, T>,
    b: Var<'t, T>,
    c: Var<'t, T>,
    d: Var<'t, T>,
) -> Result<Var<'t, T>> {
    selective_scan(ScanMode::Parallel, x, delta, a, b, c, d)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autograd::Tape;
    use crate::rng::Rng;
    use rand::Rng as _;

    fn t(shape: &[usize], v: &[f64]) -> Tensor<f64> {
        Tensor::from_f64(shape.to_vec(), v).unwrap()
    }

    #[test]
    fn discretize_half_decay() {
        let delta = t(&[1, 1], &[std::f64::consts::LN_2]);
        let a = t(&[1, 1], &[-1.0]);
        let b = t(&[1, 1], &[3.0]);
        let (ab, bb) = discretize(&delta, &a, &b).unwrap();
        assert!((ab.item() - 0.5).abs() < 1e-15);
        assert!((bb.item() - 3.0 * std::f64::consts::LN_2).abs() < 1e-15);
    }

    #[test]
    fn discretize_small_step_limit() {
        let delta = t(&[1, 1], &[1e-12]);
        let (ab, bb) = discretize(&delta, &t(&[1, 1], &[-4.0]), &t(&[1, 1], &[2.0])).unwrap();
        assert!((ab.item() - 1.0).abs() < 1e-10);
        assert!(bb.item().abs() < 1e-10);
    }

    #[test]
    fn discretize_rejects_non_positive_delta() {
        let r = discretize(&t(&[1, 1], &[0.0]), &t(&[1, 1], &[-1.0]), &t(&[1, 1], &[1.0]));
        assert!(matches!(r, Err(Error::Domain(_))));
    }

    #[test]
    fn single_step() {
        // y_1 = C (B_bar x) + D x with h_0 = 0
        let (x, dt, a, b, c, d) = (0.7, 0.3, -2.0, 1.5, -0.4, 0.25);
        let y = selective_scan_eval(
            ScanMode::Sequential,
            &t(&[1, 1], &[x]),
            &t(&[1, 1], &[dt]),
            &t(&[1, 1], &[a]),
            &t(&[1, 1], &[b]),
            &t(&[1, 1], &[c]),
            &t(&[1], &[d]),
        )
        .unwrap();
        assert!((y.item() - (c * dt * b * x + d * x)).abs() < 1e-15);
    }

    #[test]
    fn degenerates_to_prefix_sum() {
        let eps = 1e-9;
        for mode in [ScanMode::Sequential, ScanMode::Parallel] {
            let y = selective_scan_eval(
                mode,
                &t(&[3, 1], &[1., 2., 3.]),
                &t(&[3, 1], &[1., 1., 1.]),
                &t(&[1, 1], &[-eps]),
                &t(&[3, 1], &[1., 1., 1.]),
                &t(&[3, 1], &[1., 1., 1.]),
                &t(&[1], &[0.]),
            )
            .unwrap();
            for (got, want) in y.data().iter().zip([1.0, 3.0, 6.0]) {
                assert!((got - want).abs() < 1e-7, "{mode:?}: {got} vs {want}");
            }
        }
    }

    #[test]
    fn parallel_matches_sequential_exactly_for_one_step_and_zero_decay() {
        let mut rng = Rng::new(3);
        let lanes = 7;
        let a: Vec<f64> = (0..lanes).map(|_| rng.random()).collect();
        let b: Vec<f64> = (0..lanes).map(|_| rng.random::<f64>() - 0.5).collect();
        assert_eq!(linear_scan_sequential(&a, &b, 1, lanes), linear_scan_parallel(&a, &b, 1, lanes));

        let len = 37;
        let zeros = vec![0.0; len * lanes];
        let b: Vec<f64> = (0..len * lanes).map(|_| rng.random::<f64>() - 0.5).collect();
        assert_eq!(
            linear_scan_sequential(&zeros, &b, len, lanes),
            linear_scan_parallel(&zeros, &b, len, lanes)
        );
    }

    #[test]
    fn parallel_scan_handles_non_power_of_two() {
        let mut rng = Rng::new(4);
        for len in [2, 3, 5, 17, 100] {
            let lanes = 3;
            let a: Vec<f64> = (0..len * lanes).map(|_| rng.random()).collect();
            let b: Vec<f64> = (0..len * lanes).map(|_| rng.random::<f64>() - 0.5).collect();
            let s = linear_scan_sequential(&a, &b, len, lanes);
            let p = linear_scan_parallel(&a, &b, len, lanes);
            for (x, y) in s.iter().zip(&p) {
                assert!((x - y).abs() < 1e-13);
            }
        }
    }

    #[test]
    fn scan_gradients_match_between_modes() {
        let mut rng = Rng::new(5);
        let (len, di, ds) = (9, 3, 2);
        let inputs = [
            Tensor::<f64>::randn([len, di], 1.0, &mut rng),
            Tensor::uniform([len, di], 0.05, 0.5, &mut rng),
            Tensor::uniform([di, ds], -2.0, -0.2, &mut rng),
            Tensor::randn([len, ds], 1.0, &mut rng),
            Tensor::randn([len, ds], 1.0, &mut rng),
            Tensor::randn([di], 1.0, &mut rng),
        ];
        let grads = |mode| {
            let tape = Tape::new();
            let v: Vec<_> = inputs.iter().map(|x| tape.var(x.clone())).collect();
            let y = selective_scan(mode, v[0], v[1], v[2], v[3], v[4], v[5]).unwrap();
            let w = tape.constant(Tensor::randn([len, di], 1.0, &mut Rng::new(9)));
            tape.backward(y.mul(w).unwrap().sum().unwrap()).unwrap();
            v.iter().map(|v| v.grad().unwrap()).collect::<Vec<_>>()
        };
        let gs = grads(ScanMode::Sequential);
        let gp = grads(ScanMode::Parallel);
        for (a, b) in gs.iter().zip(&gp) {
            assert!(a.max_abs_diff(b) < 1e-12);
        }
    }
}
