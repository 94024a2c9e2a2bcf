//! Polyp-like synthetic images: lobulated blobs on a smooth mucosa texture.

use std::f64::consts::TAU;

use rand::Rng as _;

use super::Sample;
use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::tensor::Tensor;

/// Foreground fraction accepted for a generated mask.
pub const MIN_FOREGROUND: f64 = 0.005;
pub const MAX_FOREGROUND: f64 = 0.40;

struct Blob {
    cx: f64,
    cy: f64,
    rx: f64,
    ry: f64,
    cos: f64,
    sin: f64,
    lobes: [(f64, f64); 3],
    color: [f64; 3],
}

impl Blob {
    fn random(rng: &mut Rng) -> Self {
        let theta = rng.random_range(0.0..TAU);
        let mut lobes = [(0.0, 0.0); 3];
        for l in &mut lobes {
            *l = (rng.random_range(0.0..0.15), rng.random_range(0.0..TAU));
        }
        Self {
            cx: rng.random_range(0.2..0.8),
            cy: rng.random_range(0.2..0.8),
            rx: rng.random_range(0.06..0.22),
            ry: rng.random_range(0.06..0.22),
            cos: theta.cos(),
            sin: theta.sin(),
            lobes,
            color: [
                rng.random_range(0.80..0.95),
                rng.random_range(0.55..0.70),
                rng.random_range(0.35..0.50),
            ],
        }
    }

    /// Signed margin: positive inside, zero on the boundary.
    fn margin(&self, x: f64, y: f64) -> f64 {
        let (dx, dy) = (x - self.cx, y - self.cy);
        let u = (dx * self.cos + dy * self.sin) / self.rx;
        let v = (-dx * self.sin + dy * self.cos) / self.ry;
        let rho = (u * u + v * v).sqrt();
        let phi = v.atan2(u);
        let edge = 1.0
            + self
                .lobes
                .iter()
                .enumerate()
                .map(|(k, &(a, ph))| a * ((k as f64 + 2.0) * phi + ph).sin())
                .sum::<f64>();
        edge - rho
    }
}

struct Wave {
    fx: f64,
    fy: f64,
    phase: f64,
    amp: f64,
}

fn waves(rng: &mut Rng, n: usize) -> Vec<Wave> {
    (0..n)
        .map(|_| Wave {
            fx: rng.random_range(-3.0..3.0),
            fy: rng.random_range(-3.0..3.0),
            phase: rng.random_range(0.0..TAU),
            amp: rng.random_range(0.02..0.08),
        })
        .collect()
}

fn texture(w: &[Wave], x: f64, y: f64) -> f64 {
    w.iter().map(|w| w.amp * (TAU * (w.fx * x + w.fy * y) + w.phase).cos()).sum()
}

/// Sample `index` of the synthetic set for `seed`.
pub fn synthetic_sample(seed: u64, index: usize, size: usize) -> Sample {
    let mut rng = Rng::new(seed).split(index as u64);
    let base = [
        rng.random_range(0.55..0.75),
        rng.random_range(0.25..0.40),
        rng.random_range(0.20..0.35),
    ];
    let bg: Vec<Vec<Wave>> = (0..3).map(|_| waves(&mut rng, 4)).collect();
    let fg = waves(&mut rng, 3);
    let n = size * size;
    let coord = |i: usize| ((i % size) as f64 + 0.5) / size as f64;
    let row = |i: usize| ((i / size) as f64 + 0.5) / size as f64;

    let (blobs, inside) = loop {
        let count = rng.random_range(1..=3);
        let blobs: Vec<Blob> = (0..count).map(|_| Blob::random(&mut rng)).collect();
        let inside: Vec<bool> = (0..n)
            .map(|i| blobs.iter().any(|b| b.margin(coord(i), row(i)) >= 0.0))
            .collect();
        let frac = inside.iter().filter(|&&v| v).count() as f64 / n as f64;
        if (MIN_FOREGROUND..=MAX_FOREGROUND).contains(&frac) {
            break (blobs, inside);
        }
    };

    let mut image = vec![0f32; 3 * n];
    for i in 0..n {
        let (x, y) = (coord(i), row(i));
        // soft edge over roughly two pixels of the unit-radius frame
        let (alpha, color) = blobs
            .iter()
            .map(|b| {
                let m = b.margin(x, y) * 0.5 * size as f64 * b.rx.min(b.ry);
                ((m + 0.5).clamp(0.0, 1.0), b.color)
            })
            .fold((0.0, [0.0; 3]), |acc, c| if c.0 > acc.0 { c } else { acc });
        for ch in 0..3 {
            let back = base[ch] + texture(&bg[ch], x, y);
            let front = color[ch] + texture(&fg, x, y);
            let v = back * (1.0 - alpha) + front * alpha;
            image[ch * n + i] = v.clamp(0.0, 1.0) as f32;
        }
    }
    let mask = inside.iter().map(|&v| v as u8 as f32).collect();
    Sample {
        id: format!("synth_{seed}_{index:05}"),
        image: Tensor::from_parts(vec![3, size, size], image),
        mask: Tensor::from_parts(vec![1, size, size], mask),
    }
}

/// `n` samples of side `size`, each a pure function of `(seed, index)`.
pub fn generate_synthetic(seed: u64, n: usize, size: usize) -> Result<Vec<Sample>> {
    if n == 0 || size < 16 {
        return Err(Error::Config(format!("need n >= 1 and size >= 16, got n={n}, size={size}")));
    }
    Ok((0..n).map(|i| synthetic_sample(seed, i, size)).collect())
}
