//! Train the desk model on synthetic data, then score a held-out split
//! grouped into two pseudo-datasets.
//!
//! `cargo run --release --example train_eval -- [steps] [seed]`

use promamba::data::{generate_synthetic, split, SplitSpec};
use promamba::train::{evaluate_samples, TrainConfig, Trainer};

fn main() -> promamba::Result<()> {
    let mut args = std::env::args().skip(1);
    let steps: u64 = args.next().map_or(300, |s| s.parse().expect("steps"));
    let seed: u64 = args.next().map_or(0, |s| s.parse().expect("seed"));

    let cfg = TrainConfig {
        seed,
        batch_size: 4,
        epochs: usize::MAX,
        max_steps: Some(steps),
        eval_every: 5,
        ..Default::default()
    };

    let data = generate_synthetic(seed, 48, cfg.model.encoder.image_size)?;
    let (train, val, test) = split(data, &SplitSpec::default())?;
    let mut t = Trainer::new(cfg)?;
    let out = t.fit(&train, &val, None, |r| {
        if r.split != "train" {
            println!("step {:4} {:>10} loss {:.4} dice {:.4}", r.step, r.split, r.loss, r.dice);
        }
    })?;
    println!("trained {} steps, best {:?}", out.steps, out.best);

    let (a, b) = test.split_at(test.len() / 2);
    let sets = [("set-a".to_string(), a), ("set-b".to_string(), b)];
    let r = evaluate_samples(&t.model, &t.params, &sets, &t.cfg.loss, 0.0, seed)?;
    print!("{}", r.report.table());
    Ok(())
}
