//! Prompted inference at an arbitrary image size, with one and two boxes.
//!
//! Trains briefly first so the masks are meaningful; pass a step count of 0
//! to see an untrained model.

use promamba::data::io::resize_bilinear;
use promamba::data::generate_synthetic;
use promamba::prompt::{box_from_mask, BoxPrompt};
use promamba::train::{infer, TrainConfig, Trainer};

fn main() -> promamba::Result<()> {
    let steps: u64 = std::env::args().nth(1).map_or(200, |s| s.parse().expect("steps"));
    let cfg = TrainConfig {
        batch_size: 4,
        epochs: usize::MAX,
        max_steps: Some(steps),
        eval_train: false,
        ..Default::default()
    };
    let data = generate_synthetic(0, 16, cfg.model.encoder.image_size)?;
    let mut t = Trainer::new(cfg)?;
    if steps > 0 {
        t.fit(&data, &[], None, |_| {})?;
    }

    // a non-square input; the box is in normalized coordinates
    let s = &data[0];
    let image = resize_bilinear(&s.image, 72, 96);
    let gt = box_from_mask(&s.mask)?;
    let wide = BoxPrompt::new(
        (gt.x0 - 0.05).max(0.0),
        (gt.y0 - 0.05).max(0.0),
        (gt.x1 + 0.05).min(1.0),
        (gt.y1 + 0.05).min(1.0),
    )?;
    let mut maps = Vec::new();
    for boxes in [vec![gt], vec![gt, wide]] {
        let prob = infer(&t.model, &t.params, &image, &boxes)?;
        let fg = prob.data().iter().filter(|&&p| p > 0.5).count();
        println!("{} box(es): output {:?}, {fg} pixels above 0.5", boxes.len(), prob.shape());
        maps.push(prob);
    }
    println!("max probability change from adding the second box: {:.4}", maps[0].max_abs_diff(&maps[1]));
    Ok(())
}
