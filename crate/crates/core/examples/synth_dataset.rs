//! Write a synthetic dataset in the on-disk layout the loader expects.
//!
//! `cargo run --example synth_dataset -- <dir> [count] [size] [seed]`

use std::path::PathBuf;

use promamba::data::{generate_synthetic, load_dataset, save_sample};

fn main() -> promamba::Result<()> {
    let mut args = std::env::args().skip(1);
    let dir = PathBuf::from(args.next().unwrap_or_else(|| "synthetic".into()));
    let count: usize = args.next().map_or(8, |s| s.parse().expect("count"));
    let size: usize = args.next().map_or(64, |s| s.parse().expect("size"));
    let seed: u64 = args.next().map_or(0, |s| s.parse().expect("seed"));

    let samples = generate_synthetic(seed, count, size)?;
    for s in &samples {
        let fg = s.mask.data().iter().filter(|&&v| v > 0.5).count() as f64 / s.mask.numel() as f64;
        let (img, _) = save_sample(&dir, s, true)?;
        println!("{} foreground {:.1}% -> {}", s.id, fg * 100.0, img.display());
    }
    let back = load_dataset(&dir, size)?;
    assert_eq!(back.len(), samples.len());
    println!("reloaded {} samples from {}", back.len(), dir.display());
    Ok(())
}
