//! Mask-free evaluation and prompted inference.

use rayon::prelude::*;

use crate::autograd::Tape;
use crate::data::io::resize_bilinear;
use crate::data::Sample;
use crate::error::{Error, Result};
use crate::loss::{aggregate_metrics, combined_loss, ImageScore, LossConfig, MetricReport, Overlap};
use crate::model::ProMamba;
use crate::params::ParamStore;
use crate::prompt::{box_from_mask, BoxPrompt};
use crate::rng::Rng;
use crate::tensor::Tensor;

#[derive(Clone, Debug, PartialEq)]
pub struct EvalResult {
    pub per_image: Vec<ImageScore>,
    pub report: MetricReport,
    /// Mean objective over all images.
    pub loss: f64,
}

/// Score every sample with its ground-truth box (optionally jittered by
/// `jitter` from a stream keyed by `seed`), without mask injection.
pub fn evaluate_samples(
    model: &ProMamba,
    params: &ParamStore<f32>,
    datasets: &[(String, &[Sample])],
    loss: &LossConfig,
    jitter: f64,
    seed: u64,
) -> Result<EvalResult> {
    let jobs: Vec<(usize, usize)> = datasets
        .iter()
        .enumerate()
        .flat_map(|(d, (_, s))| (0..s.len()).map(move |i| (d, i)))
        .collect();
    let base = Rng::new(seed);
    let scored: Vec<(ImageScore, f64)> = jobs
        .par_iter()
        .map(|&(d, i)| {
            let s = &datasets[d].1[i];
            let mut b = box_from_mask(&s.mask).unwrap_or_else(|_| BoxPrompt::full());
            if jitter > 0.0 {
                b = b.jitter(&mut base.split2(d as u64, i as u64), jitter, s.width(), s.height());
            }
            let tape = Tape::new();
            let p = params.bind(&tape, false);
            let x = tape.constant(s.image.clone());
            let logits = model.forward(&p, &tape, x, &[b], None, false)?;
            let l = combined_loss(logits, &s.mask, loss)?.value().item() as f64;
            let o = Overlap::of(&logits.value(), &s.mask, loss.threshold)?;
            Ok((
                ImageScore {
                    dataset: datasets[d].0.clone(),
                    dice: o.dice(),
                    iou: o.iou(),
                },
                l,
            ))
        })
        .collect::<Result<_>>()?;
    let loss_mean = scored.iter().map(|s| s.1).sum::<f64>() / scored.len().max(1) as f64;
    let per_image: Vec<ImageScore> = scored.into_iter().map(|s| s.0).collect();
    let report = aggregate_metrics(&per_image)?;
    Ok(EvalResult {
        per_image,
        report,
        loss: loss_mean,
    })
}

/// Probability map for an image of any size: resized to the model input,
/// decoded with the averaged boxes, resized back.
pub fn infer(model: &ProMamba, params: &ParamStore<f32>, image: &Tensor<f32>, boxes: &[BoxPrompt]) -> Result<Tensor<f32>> {
    if boxes.is_empty() {
        return Err(Error::EmptyPrompt(
            "the model is promptable and needs at least one box (x0,y0,x1,y1 in [0,1])".into(),
        ));
    }
    let shape = image.shape();
    if shape.len() != 3 || shape[0] != model.cfg.encoder.in_channels {
        return Err(Error::Dimension(format!("image {shape:?} is not [{}, H, W]", model.cfg.encoder.in_channels)));
    }
    let (h, w) = (shape[1], shape[2]);
    let s = model.cfg.encoder.image_size;
    let x = resize_bilinear(image, s, s);
    let logits = model.predict(params, &x, boxes)?;
    let prob = logits.map(crate::autograd::sigmoid);
    Ok(resize_bilinear(&prob, h, w))
}

/// Threshold a probability map into a binary mask.
pub fn binarize(prob: &Tensor<f32>, threshold: f32) -> Tensor<f32> {
    prob.map(|p| if p > threshold { 1.0 } else { 0.0 })
}

