//! Memorize a handful of synthetic samples with the desk model.
//!
//! `cargo run --example overfit -- [samples] [max_steps] [seed] [lr] [batch]`

use promamba::data::{generate_synthetic, AugmentConfig};
use promamba::train::{TrainConfig, Trainer};

fn main() -> promamba::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let arg = |i: usize, d: &str| args.get(i).cloned().unwrap_or_else(|| d.to_string());
    let n: usize = arg(0, "16").parse().unwrap();
    let steps: u64 = arg(1, "2000").parse().unwrap();
    let seed: u64 = arg(2, "0").parse().unwrap();
    let lr: f64 = arg(3, "1e-4").parse().unwrap();
    let batch: usize = arg(4, "4").parse().unwrap();
    let no_prompt = args.iter().any(|a| a == "--no-prompt");
    let no_inject = args.iter().any(|a| a == "--no-inject");

    let mut cfg = TrainConfig {
        seed,
        batch_size: batch,
        augment: AugmentConfig::none(),
        ..Default::default()
    };
    cfg.optimizer.lr = lr;
    cfg.model.prompt.jitter = 0.0;
    cfg.model.prompt.use_prompt = !no_prompt;
    cfg.model.encoder.input_mask = !no_inject;
    cfg.max_steps = Some(steps);
    cfg.epochs = usize::MAX;
    cfg.target_train_dice = Some(0.95);
    cfg.threads = Some(1);
    cfg.eval_every = 5;

    let data = generate_synthetic(seed, n, cfg.model.encoder.image_size)?;
    let mut t = Trainer::new(cfg)?;
    let out = t.fit(&data, &[], None, |r| {
        if r.split != "train" || r.step % 100 == 0 {
            println!("step {:5} epoch {:3} {:>10} loss {:.4} dice {:.4} t {:.1}s", r.step, r.epoch, r.split, r.loss, r.dice, r.wallclock);
        }
    })?;
    println!("steps {} train dice {:?}", out.steps, out.train_dice);
    Ok(())
}
