//! Dice, Focal and the combined objective on a hand-built prediction, plus
//! per-dataset metric aggregation.

use promamba::loss::{aggregate_metrics, combined_loss, dice_loss, focal_loss, iou_metric, dice_metric, ImageScore, LossConfig};
use promamba::{Tape, Tensor};

fn main() -> promamba::Result<()> {
    let target = Tensor::<f64>::from_f64([1, 2, 2], &[1.0, 1.0, 0.0, 0.0])?;
    let logits = Tensor::<f64>::from_f64([1, 2, 2], &[3.0, -1.0, 0.5, -4.0])?;
    let cfg = LossConfig::default();

    let tape = Tape::new();
    let z = tape.leaf(logits.clone().into(), true);
    let dice = dice_loss(z.sigmoid()?, &target, cfg.eps)?;
    let focal = focal_loss(z, &target, cfg.gamma, cfg.focal_alpha_t)?;
    let total = combined_loss(z, &target, &cfg)?;
    tape.backward(total)?;
    println!("dice loss     {:.6}", dice.value().item());
    println!("focal loss    {:.6}", focal.value().item());
    println!("combined      {:.6}", total.value().item());
    println!("d/dlogits     {:?}", z.take_grad().expect("gradient").data());
    println!("dice metric   {:.4}", dice_metric(&logits, &target, cfg.threshold)?);
    println!("iou metric    {:.4}", iou_metric(&logits, &target, cfg.threshold)?);

    let scores = [("A", 0.9), ("A", 0.8), ("B", 0.6)]
        .map(|(d, s)| ImageScore { dataset: d.into(), dice: s, iou: s / (2.0 - s) });
    print!("{}", aggregate_metrics(&scores)?.table());
    Ok(())
}
