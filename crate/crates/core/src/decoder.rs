//! Two-way attention mask decoder with transposed-convolution upscaling.

use serde::{Deserialize, Serialize};

use crate::autograd::{Tape, Var};
use crate::encoder::ImageEmbedding;
use crate::error::{Error, Result};
use crate::nn::{Attention, ConvTranspose2d, LayerNorm, Linear, Mlp};
use crate::params::{Bound, Init, ParamId, Registry};
use crate::prompt::encode_point;
use crate::tensor::{Element, Tensor};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DecoderConfig {
    /// Working width of the decoder; image tokens are projected to it.
    pub dim: usize,
    pub heads: usize,
    pub mlp_dim: usize,
    /// Channels of the full-resolution feature map.
    pub out_channels: usize,
    /// One cross-attention each way when true, both token-to-image otherwise.
    pub cross_attn_symmetric: bool,
}

impl Default for DecoderConfig {
    fn default() -> Self {
        Self {
            dim: 64,
            heads: 2,
            mlp_dim: 128,
            out_channels: 8,
            cross_attn_symmetric: true,
        }
    }
}

impl DecoderConfig {
    pub fn full_scale() -> Self {
        Self {
            dim: 256,
            heads: 8,
            mlp_dim: 2048,
            out_channels: 32,
            cross_attn_symmetric: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.heads == 0 || !self.dim.is_multiple_of(self.heads) {
            return Err(Error::Config(format!("decoder dim {} not divisible by {} heads", self.dim, self.heads)));
        }
        if !self.dim.is_multiple_of(4) || self.mlp_dim == 0 || self.out_channels == 0 {
            return Err(Error::Config("decoder dim must be a multiple of 4; widths positive".into()));
        }
        Ok(())
    }
}

/// Sinusoidal code of every grid cell centre, `[g_h * g_w, dim]`.
pub fn grid_encoding<T: Element>(grid: (usize, usize), dim: usize) -> Tensor<T> {
    let (gh, gw) = grid;
    let mut v = Vec::with_capacity(gh * gw * dim);
    for r in 0..gh {
        for c in 0..gw {
            let x = (c as f64 + 0.5) / gw as f64;
            let y = (r as f64 + 0.5) / gh as f64;
            v.extend(encode_point(x, y, dim).into_iter().map(T::from_f64));
        }
    }
    Tensor::from_parts(vec![gh * gw, dim], v)
}

#[derive(Clone, Debug)]
pub struct MaskDecoder {
    pub cfg: DecoderConfig,
    pub neck: Linear,
    pub neck_norm: LayerNorm,
    pub output_token: ParamId,
    pub self_attn: Attention,
    pub norm1: LayerNorm,
    pub cross1: Attention,
    pub norm2: LayerNorm,
    pub mlp: Mlp,
    pub norm3: LayerNorm,
    pub cross2: Attention,
    pub norm4: LayerNorm,
    pub upscale: Vec<ConvTranspose2d>,
    pub hyper: Mlp,
}

impl MaskDecoder {
    /// `d_model` is the encoder width; `stages` the number of 2x upsamplings.
    pub fn new(reg: &mut Registry, cfg: &DecoderConfig, d_model: usize, stages: usize) -> Result<Self> {
        cfg.validate()?;
        let d = cfg.dim;
        let neck = Linear::new(reg, "decoder.neck", d_model, d, true);
        let neck_norm = LayerNorm::new(reg, "decoder.neck_norm", d);
        let output_token = reg.param("decoder.output_token", &[1, d], Init::Normal(1.0));
        let self_attn = Attention::new(reg, "decoder.self_attn", d, cfg.heads)?;
        let norm1 = LayerNorm::new(reg, "decoder.norm1", d);
        let cross1 = Attention::new(reg, "decoder.cross1", d, cfg.heads)?;
        let norm2 = LayerNorm::new(reg, "decoder.norm2", d);
        let mlp = Mlp::new(reg, "decoder.mlp", d, cfg.mlp_dim, d);
        let norm3 = LayerNorm::new(reg, "decoder.norm3", d);
        let cross2 = Attention::new(reg, "decoder.cross2", d, cfg.heads)?;
        let norm4 = LayerNorm::new(reg, "decoder.norm4", d);
        let mut c_in = d;
        let upscale = (0..stages)
            .map(|i| {
                let c_out = if i + 1 == stages {
                    cfg.out_channels
                } else {
                    (d >> (i + 1)).max(cfg.out_channels)
                };
                let up = ConvTranspose2d::new(reg, &format!("decoder.upscale.{i}"), c_in, c_out, 2, 2);
                c_in = c_out;
                up
            })
            .collect();
        let hyper = Mlp::new(reg, "decoder.hyper", d, d, cfg.out_channels);
        Ok(Self {
            cfg: cfg.clone(),
            neck,
            neck_norm,
            output_token,
            self_attn,
            norm1,
            cross1,
            norm2,
            mlp,
            norm3,
            cross2,
            norm4,
            upscale,
            hyper,
        })
    }

    /// Decode `[1, H, W]` mask logits from image tokens and `[4, dim]`
    /// prompt tokens.
    pub fn decode<'t, T: Element>(
        &self,
        p: &Bound<'t, T>,
        tape: &'t Tape<T>,
        image: &ImageEmbedding<'t, T>,
        prompt: Var<'t, T>,
    ) -> Result<Var<'t, T>> {
        let d = self.cfg.dim;
        if prompt.shape() != [4, d] {
            return Err(Error::Config(format!("prompt tokens {:?}, decoder expects [4, {d}]", prompt.shape())));
        }
        let (gh, gw) = image.grid;
        let pe = tape.constant(grid_encoding(image.grid, d));

        let mut tok = Var::concat(&[prompt, p[self.output_token]], 0)?;
        let a = self.self_attn.forward(p, tok, tok, tok)?;
        tok = self.norm1.forward(p, tok.add(a)?)?;

        let mut img = self.neck.forward(p, image.tokens)?;
        img = self.neck_norm.forward(p, img)?;

        let a = self.cross1.forward(p, tok, img.add(pe)?, img)?;
        tok = self.norm2.forward(p, tok.add(a)?)?;
        tok = self.norm3.forward(p, tok.add(self.mlp.forward(p, tok)?)?)?;

        if self.cfg.cross_attn_symmetric {
            let a = self.cross2.forward(p, img.add(pe)?, tok, tok)?;
            img = self.norm4.forward(p, img.add(a)?)?;
        } else {
            let a = self.cross2.forward(p, tok, img.add(pe)?, img)?;
            tok = self.norm4.forward(p, tok.add(a)?)?;
        }

        let mut x = img.t()?.reshape(&[d, gh, gw])?;
        for (i, up) in self.upscale.iter().enumerate() {
            if i > 0 {
                x = x.silu()?;
            }
            x = up.forward(p, x)?;
        }
        let shape = x.shape();
        let (c, h, w) = (shape[0], shape[1], shape[2]);
        let out = tok.narrow(0, 4, 1)?;
        let hyper = self.hyper.forward(p, out)?;
        hyper.matmul(x.reshape(&[c, h * w])?)?.reshape(&[1, h, w])
    }
}
