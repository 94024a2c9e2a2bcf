//! Patch embedding, mask injection and the stack of bidirectional layers.

use serde::{Deserialize, Serialize};

use crate::autograd::Var;
use crate::error::{dim_err, Error, Result};
use crate::nn::{Conv2d, LayerNorm};
use crate::params::{Bound, Init, ParamId, Registry};
use crate::ssm::{MambaLayer, ScanMode, SsmDims};
use crate::tensor::Element;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EncoderConfig {
    pub image_size: usize,
    pub patch_size: usize,
    pub in_channels: usize,
    pub d_model: usize,
    pub depth: usize,
    pub d_state: usize,
    /// `d_inner / d_model`.
    pub expand: usize,
    /// Defaults to `ceil(d_model / 16)`.
    pub dt_rank: Option<usize>,
    pub conv_width: usize,
    pub bidirectional: bool,
    pub input_mask: bool,
    pub scan: ScanMode,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        Self {
            image_size: 64,
            patch_size: 8,
            in_channels: 3,
            d_model: 64,
            depth: 4,
            d_state: 8,
            expand: 2,
            dt_rank: None,
            conv_width: 4,
            bidirectional: true,
            input_mask: true,
            scan: ScanMode::Sequential,
        }
    }
}

impl EncoderConfig {
    /// Full-size encoder: 512 px input, patch 16.
    pub fn full_scale(d_model: usize, depth: usize) -> Self {
        Self {
            image_size: 512,
            patch_size: 16,
            d_model,
            depth,
            d_state: 16,
            ..Self::default()
        }
    }

    pub fn grid(&self) -> usize {
        self.image_size / self.patch_size
    }

    pub fn tokens(&self) -> usize {
        self.grid() * self.grid()
    }

    pub fn ssm_dims(&self) -> SsmDims {
        SsmDims {
            d_model: self.d_model,
            d_inner: self.expand * self.d_model,
            d_state: self.d_state,
            dt_rank: self.dt_rank.unwrap_or(self.d_model.div_ceil(16)),
            conv_width: self.conv_width,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.patch_size == 0 || !self.patch_size.is_power_of_two() {
            return Err(Error::Config(format!("patch_size {} must be a power of two", self.patch_size)));
        }
        if self.image_size == 0 || !self.image_size.is_multiple_of(self.patch_size) {
            return Err(Error::Config(format!(
                "image_size {} is not divisible by patch_size {}",
                self.image_size, self.patch_size
            )));
        }
        if self.in_channels == 0 || self.expand == 0 {
            return Err(Error::Config("in_channels and expand must be positive".into()));
        }
        self.ssm_dims().validate()
    }
}

/// Image tokens in raster order with their grid extent.
#[derive(Clone, Copy, Debug)]
pub struct ImageEmbedding<'t, T: Element> {
    pub tokens: Var<'t, T>,
    pub grid: (usize, usize),
}

#[derive(Clone, Debug)]
pub struct Encoder {
    pub cfg: EncoderConfig,
    pub patch: Conv2d,
    pub pos: ParamId,
    pub inject: Option<Vec<Conv2d>>,
    pub layers: Vec<MambaLayer>,
    pub norm: LayerNorm,
}

impl Encoder {
    pub fn new(reg: &mut Registry, cfg: &EncoderConfig) -> Result<Self> {
        cfg.validate()?;
        let (d, ps) = (cfg.d_model, cfg.patch_size);
        let patch = Conv2d::new(reg, "encoder.patch", cfg.in_channels, d, ps, ps, 0);
        let pos = reg.param("encoder.pos", &[cfg.tokens(), d], Init::Normal(0.02));
        let inject = cfg.input_mask.then(|| {
            let n = ps.trailing_zeros() as usize;
            let mut c_in = 1;
            (0..n)
                .map(|i| {
                    let c_out = (d >> (n - 1 - i)).max(1);
                    let conv = Conv2d::new(reg, &format!("encoder.inject.{i}"), c_in, c_out, 3, 2, 1);
                    c_in = c_out;
                    conv
                })
                .collect()
        });
        let dims = cfg.ssm_dims();
        let layers = (0..cfg.depth)
            .map(|i| MambaLayer::new(reg, &format!("encoder.layers.{i}"), dims, cfg.bidirectional))
            .collect();
        let norm = LayerNorm::new(reg, "encoder.norm", d);
        Ok(Self {
            cfg: cfg.clone(),
            patch,
            pos,
            inject,
            layers,
            norm,
        })
    }

    /// `image: [C, S, S]` to `[N, d_model]` tokens plus position embedding.
    pub fn patch_embed<'t, T: Element>(&self, p: &Bound<'t, T>, image: Var<'t, T>) -> Result<ImageEmbedding<'t, T>> {
        let s = self.cfg.image_size;
        if image.shape() != [self.cfg.in_channels, s, s] {
            return Err(dim_err!(
                "image {:?}, expected [{}, {s}, {s}]",
                image.shape(),
                self.cfg.in_channels
            ));
        }
        let g = self.cfg.grid();
        let x = self.patch.forward(p, image)?.reshape(&[self.cfg.d_model, g * g])?.t()?;
        Ok(ImageEmbedding {
            tokens: x.add(p[self.pos])?,
            grid: (g, g),
        })
    }

    /// Downsample a binary `[1, S, S]` mask to one vector per token.
    pub fn inject_mask<'t, T: Element>(&self, p: &Bound<'t, T>, mask: Var<'t, T>) -> Result<Var<'t, T>> {
        let convs = self
            .inject
            .as_ref()
            .ok_or_else(|| Error::Contract("mask injection is disabled in this configuration".into()))?;
        let s = self.cfg.image_size;
        if mask.shape() != [1, s, s] {
            return Err(dim_err!("mask {:?}, expected [1, {s}, {s}]", mask.shape()));
        }
        if mask.value().data().iter().any(|&v| v != T::zero() && v != T::one()) {
            return Err(Error::Domain("mask values must be 0 or 1".into()));
        }
        let mut x = mask;
        for (i, c) in convs.iter().enumerate() {
            if i > 0 {
                x = x.silu()?;
            }
            x = c.forward(p, x)?;
        }
        let g = self.cfg.grid();
        x.reshape(&[self.cfg.d_model, g * g])?.t()
    }

    /// Full encoder. `train_mask` is accepted only while training with
    /// mask injection enabled.
    pub fn encode<'t, T: Element>(
        &self,
        p: &Bound<'t, T>,
        image: Var<'t, T>,
        train_mask: Option<Var<'t, T>>,
        training: bool,
    ) -> Result<ImageEmbedding<'t, T>> {
        let mut emb = self.patch_embed(p, image)?;
        if let Some(m) = train_mask {
            if !training {
                return Err(Error::Contract("a mask cannot be supplied at inference".into()));
            }
            if self.inject.is_none() {
                return Err(Error::Contract("mask supplied but input_mask is off".into()));
            }
            emb.tokens = emb.tokens.add(self.inject_mask(p, m)?)?;
        }
        let mut x = emb.tokens;
        for layer in &self.layers {
            x = layer.forward(p, x, self.cfg.scan)?;
        }
        emb.tokens = self.norm.forward(p, x)?;
        Ok(emb)
    }
}
