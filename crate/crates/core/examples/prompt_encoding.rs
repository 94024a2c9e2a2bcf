//! Boxes from masks, jitter, and the sinusoidal corner code.

use promamba::data::generate_synthetic;
use promamba::prompt::{box_code, box_from_mask, BoxPrompt};
use promamba::Rng;

fn main() -> promamba::Result<()> {
    let s = &generate_synthetic(3, 1, 64)?[0];
    let gt = box_from_mask(&s.mask)?;
    println!("ground-truth box {gt}");
    let mut rng = Rng::new(0);
    for _ in 0..3 {
        println!("jittered         {}", gt.jitter(&mut rng, 0.1, s.width(), s.height()));
    }

    let parsed: BoxPrompt = "0.25,0.25,0.75,0.5".parse()?;
    let code = box_code(&parsed, 16);
    println!("box {parsed} -> {} values, first corner {:.3?}", code.len(), &code[..16]);

    let other = BoxPrompt::new(0.25, 0.25, 0.75, 0.51)?;
    let dist: f64 = code.iter().zip(box_code(&other, 16)).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
    println!("moving one edge by 0.01 moves the code by {dist:.4}");
    Ok(())
}
