//! Save a checkpoint, reload it into a fresh model and compare predictions.

use promamba::data::generate_synthetic;
use promamba::model::ProMamba;
use promamba::prompt::box_from_mask;
use promamba::train::{checkpoint, TrainConfig, Trainer};
use promamba::Rng;

fn main() -> promamba::Result<()> {
    let cfg = TrainConfig {
        max_steps: Some(5),
        epochs: usize::MAX,
        eval_train: false,
        ..Default::default()
    };
    let data = generate_synthetic(1, 8, cfg.model.encoder.image_size)?;
    let mut t = Trainer::new(cfg)?;
    t.fit(&data, &[], None, |_| {})?;

    let dir = std::env::temp_dir().join("promamba-ckpt-example");
    let path = dir.join("model.ckpt");
    std::fs::create_dir_all(&dir).map_err(|e| promamba::Error::io(&dir, e))?;
    t.save(&path, 0, None)?;
    let bytes = std::fs::metadata(&path).map_err(|e| promamba::Error::io(&path, e))?.len();

    let ck = checkpoint::load::<f32>(&path)?;
    println!("{} tensors, {bytes} bytes, step {}", ck.tensors.len(), ck.header.meta["step"]);
    let model = ProMamba::new(&ck.header.model)?;
    let mut params = model.init_params::<f32>(&Rng::new(99));
    ck.restore(&mut params)?;

    let s = &data[0];
    let boxes = [box_from_mask(&s.mask)?];
    let a = t.model.predict(&t.params, &s.image, &boxes)?;
    let b = model.predict(&params, &s.image, &boxes)?;
    println!("max prediction difference after reload: {:e}", a.max_abs_diff(&b));
    Ok(())
}
