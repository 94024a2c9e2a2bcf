//! The assembled segmentation model.

use serde::{Deserialize, Serialize};

use crate::autograd::{Tape, Var};
use crate::decoder::{DecoderConfig, MaskDecoder};
use crate::encoder::{Encoder, EncoderConfig};
use crate::error::{Error, Result};
use crate::params::{Bound, ParamStore, Registry};
use crate::prompt::{BoxPrompt, PromptConfig, PromptEncoder};
use crate::rng::Rng;
use crate::tensor::{Element, Tensor};

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    pub encoder: EncoderConfig,
    pub prompt: PromptConfig,
    pub decoder: DecoderConfig,
}

impl ModelConfig {
    /// Desk-scale defaults: 64 px images, patch 8, width 64, depth 4.
    pub fn desk() -> Self {
        Self::default()
    }

    /// Full-size model with the given encoder width and depth.
    pub fn full_scale(d_model: usize, depth: usize) -> Self {
        Self {
            encoder: EncoderConfig::full_scale(d_model, depth),
            prompt: PromptConfig::default(),
            decoder: DecoderConfig::full_scale(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.encoder.validate()?;
        self.decoder.validate()?;
        if self.prompt.jitter < 0.0 || self.prompt.per_sample == 0 {
            return Err(Error::Config("prompt jitter must be >= 0 and per_sample >= 1".into()));
        }
        Ok(())
    }
}

/// Encoder, prompt encoder and decoder sharing one parameter registry.
#[derive(Clone, Debug)]
pub struct ProMamba {
    pub cfg: ModelConfig,
    pub registry: Registry,
    pub encoder: Encoder,
    pub prompt: PromptEncoder,
    pub decoder: MaskDecoder,
}

impl ProMamba {
    pub fn new(cfg: &ModelConfig) -> Result<Self> {
        cfg.validate()?;
        let mut registry = Registry::new();
        let encoder = Encoder::new(&mut registry, &cfg.encoder)?;
        let prompt = PromptEncoder::new(&mut registry, cfg.decoder.dim, cfg.prompt.use_prompt)?;
        let stages = cfg.encoder.patch_size.trailing_zeros() as usize;
        let decoder = MaskDecoder::new(&mut registry, &cfg.decoder, cfg.encoder.d_model, stages)?;
        Ok(Self {
            cfg: cfg.clone(),
            registry,
            encoder,
            prompt,
            decoder,
        })
    }

    pub fn count_params(&self) -> usize {
        self.registry.count()
    }

    pub fn init_params<T: Element>(&self, rng: &Rng) -> ParamStore<T> {
        ParamStore::init(&self.registry, rng)
    }

    /// Mask logits `[1, S, S]` for `image: [C, S, S]` prompted by the mean
    /// of `boxes`. `train_mask` is only legal when `training`.
    pub fn forward<'t, T: Element>(
        &self,
        p: &Bound<'t, T>,
        tape: &'t Tape<T>,
        image: Var<'t, T>,
        boxes: &[BoxPrompt],
        train_mask: Option<Var<'t, T>>,
        training: bool,
    ) -> Result<Var<'t, T>> {
        if boxes.is_empty() {
            return Err(Error::Contract("at least one box prompt is required".into()));
        }
        let emb = self.encoder.encode(p, image, train_mask, training)?;
        let prompt = self.prompt.encode_all(p, tape, boxes)?;
        self.decoder.decode(p, tape, &emb, prompt)
    }

    /// Mask-free inference without gradient tracking.
    pub fn predict<T: Element>(&self, params: &ParamStore<T>, image: &Tensor<T>, boxes: &[BoxPrompt]) -> Result<Tensor<T>> {
        let tape = Tape::new();
        let p = params.bind(&tape, false);
        let x = tape.constant(image.clone());
        let y = self.forward(&p, &tape, x, boxes, None, false)?;
        Ok((*y.value()).clone())
    }
}

/// Number of learnable scalars for `cfg`, without allocating them.
pub fn count_params(cfg: &ModelConfig) -> Result<usize> {
    Ok(ProMamba::new(cfg)?.count_params())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn desk_forward_shape() {
        let m = ProMamba::new(&ModelConfig::desk()).unwrap();
        let ps = m.init_params::<f32>(&Rng::new(1));
        let img = Tensor::uniform([3, 64, 64], 0.0, 1.0, &mut Rng::new(2));
        let y = m.predict(&ps, &img, &[BoxPrompt::full()]).unwrap();
        assert_eq!(y.shape(), &[1, 64, 64]);
    }

    #[test]
    fn full_scale_counts() {
        for (d, depth, target) in [(192, 24, 11e6), (384, 24, 30e6), (768, 12, 54e6), (768, 18, 78e6), (768, 24, 102e6)] {
            let n = count_params(&ModelConfig::full_scale(d, depth)).unwrap() as f64;
            eprintln!("d{d} depth{depth}: {n}");
            assert!((n / target - 1.0).abs() <= 0.2, "d{d} depth{depth}: {n}");
        }
    }
}
