//! Throughput comparison of the two scan strategies.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::rng::Rng;
use crate::ssm::{selective_scan_eval, ScanMode};
use crate::tensor::Tensor;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub len: usize,
    pub seq_ns_per_token: f64,
    pub par_ns_per_token: f64,
    pub speedup: f64,
    /// `max |par - seq| / (max |seq| + 1e-9)`.
    pub divergence: f64,
}

/// Time both scans at float32 on random inputs; the best of `repeats`
/// runs is reported.
pub fn benchmark_scan(lengths: &[usize], d_inner: usize, d_state: usize, repeats: usize, seed: u64) -> Vec<BenchRow> {
    lengths
        .iter()
        .map(|&len| {
            let mut rng = Rng::new(seed).split(len as u64);
            let x = Tensor::<f32>::randn([len, d_inner], 1.0, &mut rng);
            let dt = Tensor::<f32>::uniform([len, d_inner], 1e-3, 1e-1, &mut rng);
            let a = Tensor::<f32>::uniform([d_inner, d_state], -2.0, -0.1, &mut rng);
            let b = Tensor::<f32>::randn([len, d_state], 1.0, &mut rng);
            let c = Tensor::<f32>::randn([len, d_state], 1.0, &mut rng);
            let d = Tensor::<f32>::ones([d_inner]);
            let time = |mode| {
                let mut best = f64::INFINITY;
                let mut y = None;
                for _ in 0..repeats.max(1) {
                    let t = Instant::now();
                    let out = selective_scan_eval(mode, &x, &dt, &a, &b, &c, &d).expect("valid shapes");
                    best = best.min(t.elapsed().as_nanos() as f64);
                    y = Some(out);
                }
                (best / len as f64, y.expect("ran at least once"))
            };
            let (seq_ns, ys) = time(ScanMode::Sequential);
            let (par_ns, yp) = time(ScanMode::Parallel);
            let scale = ys.data().iter().fold(0f64, |m, v| m.max(v.abs() as f64));
            BenchRow {
                len,
                seq_ns_per_token: seq_ns,
                par_ns_per_token: par_ns,
                speedup: seq_ns / par_ns,
                divergence: yp.max_abs_diff(&ys) / (scale + 1e-9),
            }
        })
        .collect()
}
