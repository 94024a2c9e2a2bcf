//! Box prompts: derivation from masks, jitter, corner encoding, averaging.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::autograd::{Tape, Var};
use crate::error::{dim_err, Error, Result};
use crate::params::{Bound, Init, ParamId, Registry};
use crate::rng::Rng;
use crate::tensor::{Element, Tensor};

/// Axis-aligned box in normalized image coordinates.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoxPrompt {
    pub x0: f64,
    pub y0: f64,
    pub x1: f64,
    pub y1: f64,
}

impl BoxPrompt {
    pub fn new(x0: f64, y0: f64, x1: f64, y1: f64) -> Result<Self> {
        let b = Self { x0, y0, x1, y1 };
        if !(0.0 <= x0 && x0 < x1 && x1 <= 1.0 && 0.0 <= y0 && y0 < y1 && y1 <= 1.0) {
            return Err(Error::Domain(format!("invalid box {b}")));
        }
        Ok(b)
    }

    pub fn full() -> Self {
        Self {
            x0: 0.0,
            y0: 0.0,
            x1: 1.0,
            y1: 1.0,
        }
    }

    /// Corners in token order: top-left, top-right, bottom-left, bottom-right.
    pub fn corners(&self) -> [(f64, f64); 4] {
        [(self.x0, self.y0), (self.x1, self.y0), (self.x0, self.y1), (self.x1, self.y1)]
    }

    /// Rasterize onto an `h x w` grid using the half-open pixel convention.
    pub fn rasterize<T: Element>(&self, h: usize, w: usize) -> Tensor<T> {
        let mut m = Tensor::zeros([1, h, w]);
        let (c0, c1) = ((self.x0 * w as f64).round() as usize, (self.x1 * w as f64).round() as usize);
        let (r0, r1) = ((self.y0 * h as f64).round() as usize, (self.y1 * h as f64).round() as usize);
        for r in r0..r1.min(h) {
            for c in c0..c1.min(w) {
                m.set(&[0, r, c], T::one());
            }
        }
        m
    }

    /// Shift each side by uniform noise in `[-scale, scale]`, clamp to the
    /// unit square and keep at least one pixel of extent per axis.
    pub fn jitter(&self, rng: &mut Rng, scale: f64, width: usize, height: usize) -> Self {
        if scale <= 0.0 {
            return *self;
        }
        let mut side = |v: f64| (v + rng.random_range(-scale..=scale)).clamp(0.0, 1.0);
        let (a, b, c, d) = (side(self.x0), side(self.y0), side(self.x1), side(self.y1));
        let (x0, x1) = repair(a.min(c), a.max(c), 1.0 / width as f64);
        let (y0, y1) = repair(b.min(d), b.max(d), 1.0 / height as f64);
        Self { x0, y0, x1, y1 }
    }
}

fn repair(lo: f64, hi: f64, min_side: f64) -> (f64, f64) {
    if hi - lo >= min_side {
        return (lo, hi);
    }
    let mid = ((lo + hi) / 2.0).clamp(min_side / 2.0, 1.0 - min_side / 2.0);
    (mid - min_side / 2.0, mid + min_side / 2.0)
}

impl fmt::Display for BoxPrompt {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{},{},{},{}", self.x0, self.y0, self.x1, self.y1)
    }
}

impl FromStr for BoxPrompt {
    type Err = Error;

    /// Parses `x0,y0,x1,y1`.
    fn from_str(s: &str) -> Result<Self> {
        let v: Vec<f64> = s
            .split(',')
            .map(|t| t.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::Domain(format!("box `{s}`: {e}")))?;
        match v[..] {
            [x0, y0, x1, y1] => BoxPrompt::new(x0, y0, x1, y1),
            _ => Err(Error::Domain(format!("box `{s}` needs four comma-separated numbers"))),
        }
    }
}

/// Tight box around pixels above 0.5 in a `[1, h, w]` mask.
pub fn box_from_mask<T: Element>(mask: &Tensor<T>) -> Result<BoxPrompt> {
    let [c, h, w] = mask.dims3()?;
    if c != 1 {
        return Err(dim_err!("mask must have one channel, got {c}"));
    }
    let half = T::from_f64(0.5);
    let (mut r0, mut r1, mut c0, mut c1) = (usize::MAX, 0, usize::MAX, 0);
    for (i, &v) in mask.data().iter().enumerate() {
        if v > half {
            let (r, col) = (i / w, i % w);
            r0 = r0.min(r);
            r1 = r1.max(r);
            c0 = c0.min(col);
            c1 = c1.max(col);
        }
    }
    if r0 == usize::MAX {
        return Err(Error::EmptyPrompt("mask has no foreground pixels".into()));
    }
    Ok(BoxPrompt {
        x0: c0 as f64 / w as f64,
        y0: r0 as f64 / h as f64,
        x1: (c1 + 1) as f64 / w as f64,
        y1: (r1 + 1) as f64 / h as f64,
    })
}

/// Sinusoidal code of a point in `[0,1]^2` into `d` values: the first half
/// encodes `x`, the second `y`, each as interleaved `sin, cos` pairs over
/// frequencies `pi * 100^(k/n)`, `k < n = d/4`.
pub fn encode_point(x: f64, y: f64, d: usize) -> Vec<f64> {
    let n = d / 4;
    let mut out = Vec::with_capacity(d);
    for coord in [x, y] {
        for k in 0..n {
            let w = PI * 100f64.powf(k as f64 / n as f64);
            out.push((w * coord).sin());
            out.push((w * coord).cos());
        }
    }
    out
}

/// Deterministic part of the prompt embedding: `[4 * d]` corner codes.
pub fn box_code(b: &BoxPrompt, d: usize) -> Vec<f64> {
    b.corners().iter().flat_map(|&(x, y)| encode_point(x, y, d)).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PromptConfig {
    /// When off, the decoder receives zero prompt tokens.
    pub use_prompt: bool,
    pub jitter: f64,
    pub per_sample: usize,
}

impl Default for PromptConfig {
    fn default() -> Self {
        Self {
            use_prompt: true,
            jitter: 0.05,
            per_sample: 1,
        }
    }
}

#[derive(Clone, Debug)]
pub struct PromptEncoder {
    pub dim: usize,
    pub corner: Option<ParamId>,
}

impl PromptEncoder {
    pub fn new(reg: &mut Registry, dim: usize, enabled: bool) -> Result<Self> {
        if !dim.is_multiple_of(4) {
            return Err(Error::Config(format!("prompt width {dim} must be divisible by 4")));
        }
        Ok(Self {
            dim,
            corner: enabled.then(|| reg.param("prompt.corner", &[4, dim], Init::Normal(1.0))),
        })
    }

    /// `[4, dim]` tokens for one box; zeros when prompts are disabled.
    pub fn encode<'t, T: Element>(&self, p: &Bound<'t, T>, tape: &'t Tape<T>, b: &BoxPrompt) -> Result<Var<'t, T>> {
        match self.corner {
            Some(id) => {
                let code = Tensor::from_f64([4, self.dim], &box_code(b, self.dim))?;
                tape.constant(code).add(p[id])
            }
            None => Ok(tape.constant(Tensor::zeros([4, self.dim]))),
        }
    }

    /// Encode each box and average the embeddings.
    pub fn encode_all<'t, T: Element>(
        &self,
        p: &Bound<'t, T>,
        tape: &'t Tape<T>,
        boxes: &[BoxPrompt],
    ) -> Result<Var<'t, T>> {
        let e = boxes.iter().map(|b| self.encode(p, tape, b)).collect::<Result<Vec<_>>>()?;
        average_prompts(tape, &e)
    }
}

/// Elementwise mean of prompt embeddings.
pub fn average_prompts<'t, T: Element>(tape: &'t Tape<T>, embeddings: &[Var<'t, T>]) -> Result<Var<'t, T>> {
    if embeddings.len() == 1 {
        return Ok(embeddings[0]);
    }
    tape.mean_of(embeddings)
}
