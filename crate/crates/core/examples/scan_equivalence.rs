//! Sequential and parallel selective scans agree; time both.
//!
//! `cargo run --release --example scan_equivalence -- [len] [d_inner] [d_state]`

use promamba::ssm::{selective_scan_eval, ScanMode};
use promamba::train::benchmark_scan;
use promamba::{Rng, Tensor};

fn main() -> promamba::Result<()> {
    let args: Vec<usize> = std::env::args().skip(1).map(|a| a.parse().expect("integer")).collect();
    let len = args.first().copied().unwrap_or(1024);
    let di = args.get(1).copied().unwrap_or(32);
    let ds = args.get(2).copied().unwrap_or(16);

    let mut rng = Rng::new(0);
    let x = Tensor::<f64>::randn([len, di], 1.0, &mut rng);
    let delta = Tensor::<f64>::uniform([len, di], 1e-3, 0.1, &mut rng);
    let a = Tensor::<f64>::uniform([di, ds], -(ds as f64), -1.0, &mut rng);
    let b = Tensor::<f64>::randn([len, ds], 1.0, &mut rng);
    let c = Tensor::<f64>::randn([len, ds], 1.0, &mut rng);
    let d = Tensor::<f64>::randn([di], 1.0, &mut rng);

    let seq = selective_scan_eval(ScanMode::Sequential, &x, &delta, &a, &b, &c, &d)?;
    let par = selective_scan_eval(ScanMode::Parallel, &x, &delta, &a, &b, &c, &d)?;
    println!("L={len} d_inner={di} d_state={ds}: max |seq - par| = {:.3e}", seq.max_abs_diff(&par));

    println!("{:>6} {:>12} {:>12} {:>8} {:>10}", "L", "seq ns/tok", "par ns/tok", "speedup", "max diff");
    for r in benchmark_scan(&[256, len], di, ds, 3, 0) {
        println!(
            "{:>6} {:>12.1} {:>12.1} {:>7.2}x {:>10.2e}",
            r.len, r.seq_ns_per_token, r.par_ns_per_token, r.speedup, r.divergence
        );
    }
    Ok(())
}
