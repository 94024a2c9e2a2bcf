use promamba::autograd::grad_check;
use promamba::{Error, Rng, Tape, Tensor};
use proptest::prelude::*;

fn randn(shape: &[usize], seed: u64) -> Tensor<f64> {
    Tensor::randn(shape.to_vec(), 1.0, &mut Rng::new(seed))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn softmax_rows_sum_to_one_and_ignore_shifts(rows in 1usize..6, cols in 1usize..9, shift in -50.0f64..50.0, seed in any::<u64>()) {
        let x = randn(&[rows, cols], seed).map(|v| v * 5.0);
        let tape = Tape::new();
        let y = tape.constant(x.clone()).softmax(1).unwrap().value();
        let ys = tape.constant(x.map(|v| v + shift)).softmax(1).unwrap().value();
        for r in 0..rows {
            let s: f64 = (0..cols).map(|c| y.get(&[r, c])).sum();
            prop_assert!((s - 1.0).abs() <= 1e-6);
        }
        prop_assert!(y.max_abs_diff(&ys) <= 1e-6);
    }

    #[test]
    fn reuse_accumulates_per_use_gradients(n in 1usize..8, seed in any::<u64>()) {
        let x = randn(&[n], seed);
        let w = randn(&[n], seed ^ 1);
        // f(x) = sum(x * w) + sum(exp(x)), with x used twice
        let grad = |uses: [bool; 2]| {
            let tape = Tape::new();
            let xv = tape.var(x.clone());
            let a = xv.mul(tape.constant(w.clone())).unwrap().sum().unwrap();
            let b = xv.exp().unwrap().sum().unwrap();
            let loss = match uses {
                [true, true] => a.add(b).unwrap(),
                [true, false] => a,
                _ => b,
            };
            tape.backward(loss).unwrap();
            xv.grad().unwrap()
        };
        let both = grad([true, true]);
        let (ga, gb) = (grad([true, false]), grad([false, true]));
        for i in 0..n {
            prop_assert!((both.get(&[i]) - ga.get(&[i]) - gb.get(&[i])).abs() < 1e-12);
        }
    }

    #[test]
    fn finite_inputs_give_finite_outputs_or_errors(n in 1usize..6, scale in 1.0f64..400.0, seed in any::<u64>()) {
        let x = randn(&[n, n], seed).map(|v| v * scale);
        let tape = Tape::new();
        let v = tape.constant(x);
        let outs = [v.exp(), v.sigmoid(), v.softplus(), v.silu(), v.softmax(1), v.matmul(v), v.log()];
        for o in outs {
            match o {
                Ok(y) => prop_assert!(y.value().all_finite()),
                Err(e) => prop_assert!(matches!(e, Error::NonFinite { .. } | Error::Domain(_)), "{e}"),
            }
        }
    }
}

/// Primitive gradients at many seeds, each against central differences.
#[test]
fn primitive_gradients_over_twenty_seeds() {
    for seed in 0..20u64 {
        let a = randn(&[3, 4], seed);
        let b = randn(&[4, 2], seed + 100);
        let pos = Tensor::<f64>::uniform([3, 4], 0.5, 2.0, &mut Rng::new(seed + 200));
        let probe = randn(&[3, 4], seed + 300);
        let checks: Vec<(&str, promamba::autograd::GradCheckReport)> = vec![
            ("matmul", grad_check(|_, v| v[0].matmul(v[1])?.square()?.sum(), &[a.clone(), b.clone()], 1e-6, 1e-5, None).unwrap()),
            ("div", grad_check(|t, v| v[0].div(v[1])?.mul(t.constant(probe.clone()))?.sum(), &[a.clone(), pos.clone()], 1e-6, 1e-5, None).unwrap()),
            ("log", grad_check(|t, v| v[0].log()?.mul(t.constant(probe.clone()))?.sum(), std::slice::from_ref(&pos), 1e-6, 1e-5, None).unwrap()),
            ("softmax", grad_check(|t, v| v[0].softmax(1)?.mul(t.constant(probe.clone()))?.sum(), std::slice::from_ref(&a), 1e-6, 1e-5, None).unwrap()),
            ("silu", grad_check(|t, v| v[0].silu()?.mul(t.constant(probe.clone()))?.sum(), std::slice::from_ref(&a), 1e-6, 1e-5, None).unwrap()),
            ("softplus", grad_check(|t, v| v[0].softplus()?.mul(t.constant(probe.clone()))?.sum(), std::slice::from_ref(&a), 1e-6, 1e-5, None).unwrap()),
        ];
        for (name, r) in checks {
            assert!(r.passed(), "seed {seed} {name}: {r:?}");
        }
    }
}
