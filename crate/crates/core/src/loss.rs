//! Dice + focal objective and the Dice / IoU metrics.

use serde::{Deserialize, Serialize};

use crate::autograd::{sigmoid, softplus, Var};
use crate::error::{dim_err, Error, Result};
use crate::tensor::{Element, Tensor};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LossConfig {
    /// Weight of the focal term.
    pub alpha: f64,
    pub gamma: f64,
    pub focal_alpha_t: f64,
    /// Dice smoothing.
    pub eps: f64,
    /// Probability threshold for the metrics.
    pub threshold: f64,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            alpha: 1.0,
            gamma: 2.0,
            focal_alpha_t: 0.25,
            eps: 1.0,
            threshold: 0.5,
        }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.alpha >= 0.0
            && self.gamma >= 0.0
            && (0.0..=1.0).contains(&self.focal_alpha_t)
            && self.eps > 0.0
            && self.threshold > 0.0
            && self.threshold < 1.0;
        if !ok {
            return Err(Error::Config(format!("invalid loss settings {self:?}")));
        }
        Ok(())
    }
}

fn same_shape<T: Element>(a: &[usize], t: &Tensor<T>) -> Result<()> {
    if a != t.shape() {
        return Err(dim_err!("prediction {a:?} and target {:?} differ", t.shape()));
    }
    Ok(())
}

/// `1 - (2 sum(p t) + eps) / (sum p + sum t + eps)` over probabilities.
pub fn dice_loss<'t, T: Element>(prob: Var<'t, T>, target: &Tensor<T>, eps: f64) -> Result<Var<'t, T>> {
    same_shape(&prob.shape(), target)?;
    let t = prob.tape().constant(target.clone());
    let inter = prob.mul(t)?.sum()?.mul_scalar(2.0)?.add_scalar(eps)?;
    let denom = prob.sum()?.add_scalar(target.sum().to_f64().unwrap_or(0.0) + eps)?;
    inter.div(denom)?.neg()?.add_scalar(1.0)
}

/// Mean focal loss from logits, `-a_t (1 - p_t)^gamma ln p_t`.
///
/// With `s = (2t - 1) z` this is `a_t exp(-gamma softplus(s)) softplus(-s)`
/// rearranged so that no term overflows for large `|z|`.
pub fn focal_loss<'t, T: Element>(logit: Var<'t, T>, target: &Tensor<T>, gamma: f64, alpha_t: f64) -> Result<Var<'t, T>> {
    same_shape(&logit.shape(), target)?;
    let z = logit.value();
    let n = z.numel();
    let g = T::from_f64(gamma);
    let inv_n = T::from_f64(1.0 / n as f64);
    let (a1, a0) = (T::from_f64(alpha_t), T::from_f64(1.0 - alpha_t));
    let mut total = T::zero();
    let mut grad = Vec::with_capacity(n);
    for (&zi, &ti) in z.data().iter().zip(target.data()) {
        let pos = ti > T::from_f64(0.5);
        let (sign, at) = if pos { (T::one(), a1) } else { (-T::one(), a0) };
        let s = sign * zi;
        // ln p_t = -softplus(-s), 1 - p_t = sigmoid(-s)
        let ce = softplus(-s);
        let w = (-g * softplus(s)).exp();
        total += at * w * ce;
        let ds = at * w * (-g * sigmoid(s) * ce - sigmoid(-s));
        grad.push(ds * sign * inv_n);
    }
    let value = Tensor::scalar(total * inv_n);
    let shape = z.shape().to_vec();
    logit.tape().custom(
        "focal_loss",
        &[logit],
        value,
        Box::new(move |g, _| {
            let gs = g.item();
            vec![Some(Tensor::new(shape.clone(), grad.iter().map(|&v| v * gs).collect()).expect("same shape"))]
        }),
    )
}

/// Dice on `sigmoid(logit)` plus `alpha` times focal on `logit`.
pub fn combined_loss<'t, T: Element>(logit: Var<'t, T>, target: &Tensor<T>, cfg: &LossConfig) -> Result<Var<'t, T>> {
    let dice = dice_loss(logit.sigmoid()?, target, cfg.eps)?;
    if cfg.alpha == 0.0 {
        return Ok(dice);
    }
    let focal = focal_loss(logit, target, cfg.gamma, cfg.focal_alpha_t)?;
    dice.add(focal.mul_scalar(cfg.alpha)?)
}

/// Overlap counts of a thresholded prediction against a binary target.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct Overlap {
    pub inter: usize,
    pub pred: usize,
    pub target: usize,
}

impl Overlap {
    pub fn of<T: Element>(logit: &Tensor<T>, target: &Tensor<T>, threshold: f64) -> Result<Self> {
        same_shape(logit.shape(), target)?;
        // sigmoid(z) > th  <=>  z > logit(th)
        let cut = T::from_f64((threshold / (1.0 - threshold)).ln());
        let half = T::from_f64(0.5);
        let mut o = Overlap::default();
        for (&z, &t) in logit.data().iter().zip(target.data()) {
            let (p, t) = (z > cut, t > half);
            o.pred += p as usize;
            o.target += t as usize;
            o.inter += (p && t) as usize;
        }
        Ok(o)
    }

    pub fn dice(&self) -> f64 {
        if self.pred + self.target == 0 {
            return 1.0;
        }
        2.0 * self.inter as f64 / (self.pred + self.target) as f64
    }

    pub fn iou(&self) -> f64 {
        let union = self.pred + self.target - self.inter;
        if union == 0 {
            return 1.0;
        }
        self.inter as f64 / union as f64
    }
}

pub fn dice_metric<T: Element>(logit: &Tensor<T>, target: &Tensor<T>, threshold: f64) -> Result<f64> {
    Ok(Overlap::of(logit, target, threshold)?.dice())
}

pub fn iou_metric<T: Element>(logit: &Tensor<T>, target: &Tensor<T>, threshold: f64) -> Result<f64> {
    Ok(Overlap::of(logit, target, threshold)?.iou())
}

/// Per-image scores tagged with their dataset.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImageScore {
    pub dataset: String,
    pub dice: f64,
    pub iou: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetRow {
    pub name: String,
    pub images: usize,
    pub dice: f64,
    pub iou: f64,
}

/// Per-dataset means and their unweighted mean.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub datasets: Vec<DatasetRow>,
    pub mean_dice: f64,
    pub mean_iou: f64,
}

/// Average within each dataset (in first-seen order), then across datasets.
pub fn aggregate_metrics(scores: &[ImageScore]) -> Result<MetricReport> {
    if scores.is_empty() {
        return Err(Error::Contract("no scores to aggregate".into()));
    }
    let mut rows: Vec<(String, Vec<f64>, Vec<f64>)> = Vec::new();
    for s in scores {
        match rows.iter_mut().find(|r| r.0 == s.dataset) {
            Some(r) => {
                r.1.push(s.dice);
                r.2.push(s.iou);
            }
            None => rows.push((s.dataset.clone(), vec![s.dice], vec![s.iou])),
        }
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let datasets: Vec<DatasetRow> = rows
        .iter()
        .map(|(name, d, i)| DatasetRow {
            name: name.clone(),
            images: d.len(),
            dice: mean(d),
            iou: mean(i),
        })
        .collect();
    let mean_dice = mean(&datasets.iter().map(|r| r.dice).collect::<Vec<_>>());
    let mean_iou = mean(&datasets.iter().map(|r| r.iou).collect::<Vec<_>>());
    Ok(MetricReport {
        datasets,
        mean_dice,
        mean_iou,
    })
}

impl MetricReport {
    /// Human-readable table: one row per dataset and a closing mean row.
    pub fn table(&self) -> String {
        let mut s = format!("{:<16} {:>6} {:>8} {:>8}\n", "dataset", "images", "Dice", "IoU");
        for r in &self.datasets {
            s += &format!("{:<16} {:>6} {:>8.4} {:>8.4}\n", r.name, r.images, r.dice, r.iou);
        }
        s += &format!("{:<16} {:>6} {:>8.4} {:>8.4}\n", "Mean", "", self.mean_dice, self.mean_iou);
        s
    }
}
