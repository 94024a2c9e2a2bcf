use rand::seq::index::sample;

use super::{Tape, Var};
use crate::error::Result;
use crate::rng::Rng;
use crate::tensor::Tensor;

/// Gradient norms below this are compared in absolute terms, since
/// central differences of an exactly zero gradient are pure roundoff.
pub const ABS_FLOOR: f64 = 1e-3;

/// Result of comparing tape gradients with central differences.
#[derive(Debug, Clone)]
pub struct GradCheckReport {
    /// Relative error per input,
    /// `|analytic - numeric| / max(|analytic|, |numeric|, ABS_FLOOR)` in the
    /// Euclidean norm over the checked coordinates.
    pub rel_err: Vec<f64>,
    pub max_rel_err: f64,
    pub tol: f64,
    pub checked: usize,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.max_rel_err <= self.tol
    }
}

/// Check the gradients of a scalar function of `inputs` (float64).
///
/// `max_coords` bounds how many coordinates per input are perturbed; a
/// seeded random subset is used for larger inputs.
pub fn grad_check<F>(f: F, inputs: &[Tensor<f64>], eps: f64, tol: f64, max_coords: Option<usize>) -> Result<GradCheckReport>
where
    F: for<'t> Fn(&'t Tape<f64>, &[Var<'t, f64>]) -> Result<Var<'t, f64>>,
{
    let analytic: Vec<Tensor<f64>> = {
        let tape = Tape::new();
        let vars: Vec<Var<'_, f64>> = inputs.iter().map(|x| tape.var(x.clone())).collect();
        let loss = f(&tape, &vars)?;
        tape.backward(loss)?;
        vars.iter()
            .zip(inputs)
            .map(|(v, x)| v.grad().unwrap_or_else(|| Tensor::zeros(x.shape().to_vec())))
            .collect()
    };
    let eval = |xs: &[Tensor<f64>]| -> Result<f64> {
        let tape = Tape::new();
        let vars: Vec<Var<'_, f64>> = xs.iter().map(|x| tape.constant(x.clone())).collect();
        Ok(f(&tape, &vars)?.value().item())
    };

    let mut rng = Rng::new(0x6772_6164);
    let mut rel_err = Vec::with_capacity(inputs.len());
    let mut checked = 0;
    for (i, x) in inputs.iter().enumerate() {
        let n = x.numel();
        let coords: Vec<usize> = match max_coords {
            Some(m) if m < n => {
                let mut c = sample(&mut rng, n, m).into_vec();
                c.sort_unstable();
                c
            }
            _ => (0..n).collect(),
        };
        let mut work: Vec<Tensor<f64>> = inputs.to_vec();
        let (mut diff2, mut a2, mut n2) = (0.0, 0.0, 0.0);
        for &c in &coords {
            let orig = x.data()[c];
            work[i].data_mut()[c] = orig + eps;
            let plus = eval(&work)?;
            work[i].data_mut()[c] = orig - eps;
            let minus = eval(&work)?;
            work[i].data_mut()[c] = orig;
            let numeric = (plus - minus) / (2.0 * eps);
            let a = analytic[i].data()[c];
            diff2 += (a - numeric).powi(2);
            a2 += a * a;
            n2 += numeric * numeric;
        }
        checked += coords.len();
        let scale = a2.sqrt().max(n2.sqrt());
        rel_err.push(diff2.sqrt() / scale.max(ABS_FLOOR));
    }
    let max_rel_err = rel_err.iter().copied().fold(0.0, f64::max);
    Ok(GradCheckReport {
        rel_err,
        max_rel_err,
        tol,
        checked,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Tensor;

    #[test]
    fn sum_is_exact() {
        let x = Tensor::randn([4, 3], 1.0, &mut Rng::new(1));
        let r = grad_check(|_, v| v[0].sum(), &[x], 1e-6, 1e-9, None).unwrap();
        assert!(r.max_rel_err < 1e-9, "{r:?}");
        assert!(r.passed());
    }

    #[test]
    fn corrupted_backward_is_reported() {
        let x = Tensor::randn([5], 1.0, &mut Rng::new(2));
        let r = grad_check(
            |tape, v| {
                // y = 3x but the declared derivative is 2
                let val = v[0].value().map(|a| 3.0 * a);
                let y = tape.custom(
                    "bad_scale",
                    &[v[0]],
                    val,
                    Box::new(|g, _| vec![Some(g.map(|a| 2.0 * a))]),
                )?;
                y.sum()
            },
            &[x],
            1e-6,
            1e-5,
            None,
        )
        .unwrap();
        assert!(!r.passed());
        assert!((r.max_rel_err - 1.0 / 3.0).abs() < 1e-6);
    }
}
