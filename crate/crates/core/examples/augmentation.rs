//! Random augmentation keeps image and mask aligned.

use promamba::data::{augment, generate_synthetic, AugmentConfig};
use promamba::prompt::box_from_mask;
use promamba::Rng;

fn main() -> promamba::Result<()> {
    let s = &generate_synthetic(5, 1, 64)?[0];
    let cfg = AugmentConfig::default();
    let fg = |m: &promamba::Tensor<f32>| m.data().iter().filter(|&&v| v > 0.5).count();
    println!("original   fg {:4} box {}", fg(&s.mask), box_from_mask(&s.mask)?);
    let mut rng = Rng::new(1);
    for i in 0..6 {
        let a = augment(s, &mut rng, &cfg);
        let binary = a.mask.data().iter().all(|&v| v == 0.0 || v == 1.0);
        let b = box_from_mask(&a.mask).map(|b| b.to_string()).unwrap_or_else(|_| "empty".into());
        println!("draw {i}     fg {:4} box {b} binary {binary}", fg(&a.mask));
    }
    Ok(())
}
