//! The training loop.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::adam::Adam;
use super::checkpoint;
use super::config::TrainConfig;
use super::eval::evaluate_samples;
use crate::autograd::Tape;
use crate::data::{augment, batches, Sample};
use crate::error::{Error, Result};
use crate::loss::{combined_loss, Overlap};
use crate::model::ProMamba;
use crate::params::ParamStore;
use crate::prompt::{box_from_mask, BoxPrompt};
use crate::rng::Rng;
use crate::tensor::Tensor;

const INIT_KEY: u64 = 1;
const EPOCH_KEY: u64 = 2;
const STEP_KEY: u64 = 3;
const EVAL_KEY: u64 = 4;

/// One line of `metrics.jsonl`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricRecord {
    pub step: u64,
    pub epoch: usize,
    pub split: String,
    pub loss: f64,
    pub dice: f64,
    pub iou: f64,
    pub lr: f64,
    pub wallclock: f64,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub records: Vec<MetricRecord>,
    pub steps: u64,
    pub epochs: usize,
    /// Best selection score and the step it was reached at.
    pub best: Option<(f64, u64)>,
    /// Last mask-free training-split Dice, when measured.
    pub train_dice: Option<f64>,
}

struct SampleResult {
    loss: f64,
    overlap: Overlap,
    grads: Vec<Option<Tensor<f32>>>,
}

pub struct Trainer {
    pub cfg: TrainConfig,
    pub model: ProMamba,
    pub params: ParamStore<f32>,
    opt: Adam<f32>,
    rng: Rng,
    step: u64,
    pool: Option<rayon::ThreadPool>,
}

impl Trainer {
    pub fn new(cfg: TrainConfig) -> Result<Self> {
        cfg.validate()?;
        let model = ProMamba::new(&cfg.model)?;
        let rng = Rng::new(cfg.seed);
        let params = model.init_params(&rng.split(INIT_KEY));
        let opt = Adam::new(cfg.optimizer, &params);
        let pool = match cfg.threads {
            Some(n) if n >= 1 => Some(
                rayon::ThreadPoolBuilder::new()
                    .num_threads(n)
                    .build()
                    .map_err(|e| Error::Config(format!("thread pool: {e}")))?,
            ),
            _ => None,
        };
        Ok(Self {
            cfg,
            model,
            params,
            opt,
            rng,
            step: 0,
            pool,
        })
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    fn sample_grad(&self, s: &Sample, rng: &mut Rng) -> Result<SampleResult> {
        let s = augment(s, rng, &self.cfg.augment);
        let pc = &self.cfg.model.prompt;
        let gt = box_from_mask(&s.mask).unwrap_or_else(|_| BoxPrompt::full());
        let boxes: Vec<BoxPrompt> = (0..pc.per_sample)
            .map(|_| gt.jitter(rng, pc.jitter, s.width(), s.height()))
            .collect();
        let inject = rng.random::<f64>() < self.cfg.inject_prob && self.cfg.model.encoder.input_mask;
        let tape = Tape::new();
        let p = self.params.bind(&tape, true);
        let x = tape.constant(s.image.clone());
        let mask = inject.then(|| tape.constant(s.mask.clone()));
        let logits = self.model.forward(&p, &tape, x, &boxes, mask, true)?;
        let loss = combined_loss(logits, &s.mask, &self.cfg.loss)?;
        tape.backward(loss)?;
        Ok(SampleResult {
            loss: loss.value().item() as f64,
            overlap: Overlap::of(&logits.value(), &s.mask, self.cfg.loss.threshold)?,
            grads: p.grads(),
        })
    }

    fn diverged(&self, tensor: String) -> Error {
        Error::Diverged {
            step: self.step + 1,
            lr: self.cfg.optimizer.lr,
            tensor,
        }
    }

    /// One optimizer step on `batch`; returns mean loss and batch overlap
    /// scores (mean Dice, mean IoU).
    pub fn train_step(&mut self, batch: &[&Sample]) -> Result<(f64, f64, f64)> {
        let step_rng = self.rng.split2(STEP_KEY, self.step);
        let run = |i: usize| self.sample_grad(batch[i], &mut step_rng.split(i as u64));
        let results: Vec<Result<SampleResult>> = match &self.pool {
            Some(pool) if pool.current_num_threads() == 1 => (0..batch.len()).map(run).collect(),
            Some(pool) => pool.install(|| (0..batch.len()).into_par_iter().map(run).collect()),
            None => (0..batch.len()).into_par_iter().map(run).collect(),
        };
        let mut results = results
            .into_iter()
            .collect::<Result<Vec<_>>>()
            .map_err(|e| match e {
                Error::NonFinite { op } => self.diverged(op),
                e => e,
            })?;
        let n = results.len() as f32;
        let mut grads = std::mem::take(&mut results[0].grads);
        for r in &mut results[1..] {
            for (acc, g) in grads.iter_mut().zip(r.grads.drain(..)) {
                match (acc.as_mut(), g) {
                    (Some(a), Some(g)) => a.data_mut().iter_mut().zip(g.data()).for_each(|(a, b)| *a += *b),
                    (None, Some(g)) => *acc = Some(g),
                    _ => {}
                }
            }
        }
        for g in grads.iter_mut().flatten() {
            g.data_mut().iter_mut().for_each(|v| *v /= n);
        }
        if let Some(i) = grads.iter().position(|g| g.as_ref().is_some_and(|g| !g.all_finite())) {
            return Err(self.diverged(format!("grad of {}", self.params.specs()[i].name)));
        }
        self.opt.step(&mut self.params, &grads)?;
        if let Some(i) = self.params.values().iter().position(|v| !v.all_finite()) {
            return Err(self.diverged(self.params.specs()[i].name.clone()));
        }
        self.step += 1;
        let k = results.len() as f64;
        let loss = results.iter().map(|r| r.loss).sum::<f64>() / k;
        if !loss.is_finite() {
            return Err(self.diverged("loss".into()));
        }
        let dice = results.iter().map(|r| r.overlap.dice()).sum::<f64>() / k;
        let iou = results.iter().map(|r| r.overlap.iou()).sum::<f64>() / k;
        Ok((loss, dice, iou))
    }

    fn eval_record(&self, split: &str, samples: &[Sample], epoch: usize, t0: &Instant) -> Result<MetricRecord> {
        let r = self.in_pool(|| {
            evaluate_samples(
                &self.model,
                &self.params,
                &[(split.to_string(), samples)],
                &self.cfg.loss,
                self.cfg.eval_jitter,
                self.rng.split(EVAL_KEY).seed(),
            )
        })?;
        Ok(MetricRecord {
            step: self.step,
            epoch,
            split: split.into(),
            loss: r.loss,
            dice: r.report.mean_dice,
            iou: r.report.mean_iou,
            lr: self.cfg.optimizer.lr,
            wallclock: t0.elapsed().as_secs_f64(),
        })
    }

    fn in_pool<R: Send>(&self, f: impl FnOnce() -> R + Send) -> R {
        match &self.pool {
            Some(p) => p.install(f),
            None => f(),
        }
    }

    fn meta(&self, epoch: usize, score: Option<f64>) -> serde_json::Value {
        serde_json::json!({
            "train": self.cfg,
            "step": self.step,
            "epoch": epoch,
            "score": score,
        })
    }

    pub fn save(&self, path: &Path, epoch: usize, score: Option<f64>) -> Result<()> {
        checkpoint::save(path, &self.cfg.model, &self.meta(epoch, score), &self.params)
    }

    /// Run epochs until the budget, the step cap or the Dice target is
    /// reached. With `out`, writes `metrics.jsonl`, `best.ckpt` and
    /// `last.ckpt` there. `on_record` sees every record as it is produced.
    pub fn fit(
        &mut self,
        train: &[Sample],
        val: &[Sample],
        out: Option<&Path>,
        mut on_record: impl FnMut(&MetricRecord),
    ) -> Result<TrainOutcome> {
        if train.is_empty() {
            return Err(Error::Config("training set is empty".into()));
        }
        let mut log = match out {
            Some(dir) => {
                fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
                let p = dir.join("metrics.jsonl");
                Some((BufWriter::new(File::create(&p).map_err(|e| Error::io(&p, e))?), p))
            }
            None => None,
        };
        let t0 = Instant::now();
        let mut records = Vec::new();
        let mut emit = |r: MetricRecord, log: &mut Option<(BufWriter<File>, PathBuf)>| -> Result<()> {
            if let Some((w, p)) = log {
                serde_json::to_writer(&mut *w, &r)?;
                w.write_all(b"\n").map_err(|e| Error::io(&*p, e))?;
            }
            on_record(&r);
            records.push(r);
            Ok(())
        };
        let mut best: Option<(f64, u64)> = None;
        let mut train_dice = None;
        let mut epochs = 0;
        for epoch in 0..self.cfg.epochs {
            epochs = epoch + 1;
            let order = batches(train.len(), self.cfg.batch_size, &mut self.rng.split2(EPOCH_KEY, epoch as u64));
            for idx in order {
                if self.cfg.max_steps.is_some_and(|m| self.step >= m) {
                    break;
                }
                let batch: Vec<&Sample> = idx.iter().map(|&i| &train[i]).collect();
                let (loss, dice, iou) = self.train_step(&batch)?;
                let r = MetricRecord {
                    step: self.step,
                    epoch,
                    split: "train".into(),
                    loss,
                    dice,
                    iou,
                    lr: self.cfg.optimizer.lr,
                    wallclock: t0.elapsed().as_secs_f64(),
                };
                emit(r, &mut log)?;
            }
            let capped = self.cfg.max_steps.is_some_and(|m| self.step >= m);
            let last = capped || epoch + 1 == self.cfg.epochs;
            if !last && (epoch + 1) % self.cfg.eval_every != 0 {
                continue;
            }
            let mut score = None;
            if self.cfg.eval_train {
                let r = self.eval_record("train_eval", train, epoch, &t0)?;
                train_dice = Some(r.dice);
                score = Some(r.dice);
                emit(r, &mut log)?;
            }
            if !val.is_empty() {
                let r = self.eval_record("val", val, epoch, &t0)?;
                score = Some(r.dice);
                emit(r, &mut log)?;
            }
            if let (Some(s), Some(dir)) = (score, out) {
                if best.is_none_or(|(b, _)| s > b) {
                    self.save(&dir.join("best.ckpt"), epoch, Some(s))?;
                }
            }
            if let Some(s) = score {
                if best.is_none_or(|(b, _)| s > b) {
                    best = Some((s, self.step));
                }
            }
            let reached = self.cfg.target_train_dice.is_some_and(|t| train_dice.is_some_and(|d| d >= t));
            if reached || last {
                break;
            }
        }
        if let Some(dir) = out {
            if let Some((w, p)) = log.as_mut() {
                w.flush().map_err(|e| Error::io(&*p, e))?;
            }
            self.save(&dir.join("last.ckpt"), epochs.saturating_sub(1), train_dice)?;
            if best.is_none() {
                self.save(&dir.join("best.ckpt"), epochs.saturating_sub(1), None)?;
            }
        }
        Ok(TrainOutcome {
            records,
            steps: self.step,
            epochs,
            best,
            train_dice,
        })
    }
}
