use promamba::autograd::grad_check;
use promamba::params::Registry;
use promamba::ssm::{discretize, linear_scan_parallel, linear_scan_sequential, selective_scan_eval, Direction, MambaBlock, ScanMode, SsmDims};
use promamba::{Rng, Tape, Tensor};
use proptest::prelude::*;

struct Inputs<T: promamba::Element> {
    x: Tensor<T>,
    delta: Tensor<T>,
    a: Tensor<T>,
    b: Tensor<T>,
    c: Tensor<T>,
    d: Tensor<T>,
}

fn inputs<T: promamba::Element>(len: usize, di: usize, ds: usize, seed: u64) -> Inputs<T> {
    let mut r = Rng::new(seed);
    Inputs {
        x: Tensor::randn([len, di], 1.0, &mut r),
        delta: Tensor::uniform([len, di], 1e-3, 0.2, &mut r),
        a: Tensor::uniform([di, ds], -8.0, -0.5, &mut r),
        b: Tensor::randn([len, ds], 1.0, &mut r),
        c: Tensor::randn([len, ds], 1.0, &mut r),
        d: Tensor::randn([di], 1.0, &mut r),
    }
}

fn run<T: promamba::Element>(mode: ScanMode, i: &Inputs<T>) -> Tensor<T> {
    selective_scan_eval(mode, &i.x, &i.delta, &i.a, &i.b, &i.c, &i.d).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn parallel_matches_sequential(len in 1usize..300, di in 1usize..9, ds in 1usize..9, seed in any::<u64>()) {
        let i = inputs::<f64>(len, di, ds, seed);
        let (s, p) = (run(ScanMode::Sequential, &i), run(ScanMode::Parallel, &i));
        let scale = s.data().iter().fold(1.0f64, |m, v| m.max(v.abs()));
        prop_assert!(s.max_abs_diff(&p) / scale <= 1e-12);
    }

    #[test]
    fn linear_scan_modes_agree(len in 1usize..200, lanes in 1usize..5, seed in any::<u64>()) {
        let mut r = Rng::new(seed);
        let a = Tensor::<f64>::uniform([len * lanes], 0.0, 1.0, &mut r);
        let b = Tensor::<f64>::randn([len * lanes], 1.0, &mut r);
        let s = linear_scan_sequential(a.data(), b.data(), len, lanes);
        let p = linear_scan_parallel(a.data(), b.data(), len, lanes);
        for (x, y) in s.iter().zip(&p) {
            prop_assert!((x - y).abs() <= 1e-12 * x.abs().max(1.0));
        }
    }

    #[test]
    fn discretized_decay_is_in_unit_interval(len in 1usize..20, di in 1usize..6, ds in 1usize..6, seed in any::<u64>()) {
        let i = inputs::<f64>(len, di, ds, seed);
        let (abar, _) = discretize(&i.delta, &i.a, &i.b).unwrap();
        prop_assert!(abar.data().iter().all(|&v| v > 0.0 && v < 1.0));
    }

    #[test]
    fn output_is_linear_in_x(len in 1usize..40, seed in any::<u64>()) {
        let i = inputs::<f64>(len, 3, 4, seed);
        let j = Inputs { x: Tensor::randn([len, 3], 1.0, &mut Rng::new(seed ^ 9)), ..inputs::<f64>(len, 3, 4, seed) };
        let mut sum = i.x.clone();
        sum.data_mut().iter_mut().zip(j.x.data()).for_each(|(a, b)| *a += b);
        let k = Inputs { x: sum, ..inputs::<f64>(len, 3, 4, seed) };
        let (yi, yj, yk) = (run(ScanMode::Parallel, &i), run(ScanMode::Parallel, &j), run(ScanMode::Parallel, &k));
        for t in 0..yk.numel() {
            prop_assert!((yk.data()[t] - yi.data()[t] - yj.data()[t]).abs() <= 1e-10);
        }
    }
}

#[test]
fn long_unit_scale_sequences_stay_finite() {
    let i = inputs::<f32>(4096, 8, 16, 3);
    for mode in [ScanMode::Sequential, ScanMode::Parallel] {
        let y = run(mode, &i);
        assert!(y.all_finite());
        // |h| is bounded by sum_t |B_bar x| <= L * max delta * max|B| * max|x|
        let bound = 4096.0 * 0.2 * 5.0 * 5.0 * 16.0 * 5.0;
        assert!(y.data().iter().all(|v| (v.abs() as f64) < bound));
    }
}

#[test]
fn parallel_scan_is_thread_count_independent() {
    let i = inputs::<f32>(4096, 16, 8, 5);
    let pool = |n| rayon::ThreadPoolBuilder::new().num_threads(n).build().unwrap();
    let one = pool(1).install(|| run(ScanMode::Parallel, &i));
    for n in [2, 4] {
        let y = pool(n).install(|| run(ScanMode::Parallel, &i));
        for (a, b) in one.data().iter().zip(y.data()) {
            assert!((a - b).abs() as f64 <= 1e-5 * (a.abs() as f64).max(1.0));
        }
    }
}

fn block(seed: u64) -> (MambaBlock, promamba::params::ParamStore<f64>) {
    let dims = SsmDims {
        d_model: 6,
        d_inner: 8,
        d_state: 4,
        dt_rank: 2,
        conv_width: 3,
    };
    let mut reg = Registry::new();
    let b = MambaBlock::new(&mut reg, "blk", dims, true);
    (b, promamba::params::ParamStore::init(&reg, &Rng::new(seed)))
}

#[test]
fn backward_direction_is_forward_on_the_reversed_sequence() {
    for seed in 0..5 {
        let (blk, ps) = block(seed);
        let tape = Tape::new();
        let p = ps.bind(&tape, false);
        let s = tape.constant(Tensor::<f64>::randn([11, 6], 1.0, &mut Rng::new(seed + 50)));
        let bwd = blk.mamba_block(&p, &blk.forward_core, s, Direction::Backward, ScanMode::Sequential).unwrap();
        let fwd = blk
            .mamba_block(&p, &blk.forward_core, s.flip(0).unwrap(), Direction::Forward, ScanMode::Sequential)
            .unwrap()
            .flip(0)
            .unwrap();
        assert!(bwd.value().max_abs_diff(&fwd.value()) < 1e-12);
    }
}

#[test]
fn block_gradients_match_finite_differences_in_both_modes() {
    let (blk, ps) = block(1);
    let x = Tensor::<f64>::randn([7, 6], 1.0, &mut Rng::new(2));
    for mode in [ScanMode::Sequential, ScanMode::Parallel] {
        let r = grad_check(
            |t, v| {
                let p = ps.bind(t, false);
                blk.bidirectional_mix(&p, v[0], mode)?.square()?.sum()
            },
            std::slice::from_ref(&x),
            1e-6,
            1e-4,
            None,
        )
        .unwrap();
        assert!(r.passed(), "{mode:?}: {r:?}");
    }
}
