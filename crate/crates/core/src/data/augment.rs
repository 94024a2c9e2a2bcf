//! Flips, small rotations and image-only cutout.

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::Sample;
use crate::rng::Rng;
use crate::tensor::Tensor;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AugmentConfig {
    pub hflip_p: f64,
    pub vflip_p: f64,
    pub rotate_p: f64,
    pub max_rotation_deg: f64,
    pub cutout_p: f64,
    pub cutout_max_rects: usize,
    /// Upper bound on each rectangle's share of the image area.
    pub cutout_max_area: f64,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        Self {
            hflip_p: 0.5,
            vflip_p: 0.5,
            rotate_p: 0.5,
            max_rotation_deg: 15.0,
            cutout_p: 0.5,
            cutout_max_rects: 3,
            cutout_max_area: 0.1,
        }
    }
}

impl AugmentConfig {
    pub fn none() -> Self {
        Self {
            hflip_p: 0.0,
            vflip_p: 0.0,
            rotate_p: 0.0,
            cutout_p: 0.0,
            ..Self::default()
        }
    }
}

fn map_planes(t: &Tensor<f32>, f: impl Fn(&[f32], usize, usize) -> Vec<f32>) -> Tensor<f32> {
    let s = t.shape().to_vec();
    let (h, w) = (s[1], s[2]);
    let data = t.data().chunks(h * w).flat_map(|p| f(p, h, w)).collect();
    Tensor::from_parts(s, data)
}

pub fn hflip(s: &Sample) -> Sample {
    let f = |p: &[f32], h: usize, w: usize| (0..h * w).map(|i| p[(i / w) * w + (w - 1 - i % w)]).collect();
    Sample {
        id: s.id.clone(),
        image: map_planes(&s.image, f),
        mask: map_planes(&s.mask, f),
    }
}

pub fn vflip(s: &Sample) -> Sample {
    let f = |p: &[f32], h: usize, w: usize| (0..h * w).map(|i| p[(h - 1 - i / w) * w + i % w]).collect();
    Sample {
        id: s.id.clone(),
        image: map_planes(&s.image, f),
        mask: map_planes(&s.mask, f),
    }
}

/// Reflect an out-of-range coordinate back into `[0, n - 1]`.
fn reflect(mut v: f64, n: usize) -> f64 {
    let m = (n - 1) as f64;
    if m == 0.0 {
        return 0.0;
    }
    let period = 2.0 * m;
    v = v.rem_euclid(period);
    if v > m {
        period - v
    } else {
        v
    }
}

fn rotate_plane(p: &[f32], h: usize, w: usize, deg: f64) -> Vec<f32> {
    let (sin, cos) = deg.to_radians().sin_cos();
    let (cy, cx) = ((h as f64 - 1.0) / 2.0, (w as f64 - 1.0) / 2.0);
    let mut out = Vec::with_capacity(h * w);
    for y in 0..h {
        for x in 0..w {
            let (dx, dy) = (x as f64 - cx, y as f64 - cy);
            let sx = reflect(cos * dx + sin * dy + cx, w);
            let sy = reflect(-sin * dx + cos * dy + cy, h);
            let (x0, y0) = (sx.floor() as usize, sy.floor() as usize);
            let (x1, y1) = ((x0 + 1).min(w - 1), (y0 + 1).min(h - 1));
            let (fx, fy) = ((sx - x0 as f64) as f32, (sy - y0 as f64) as f32);
            let top = p[y0 * w + x0] * (1.0 - fx) + p[y0 * w + x1] * fx;
            let bot = p[y1 * w + x0] * (1.0 - fx) + p[y1 * w + x1] * fx;
            out.push(top * (1.0 - fy) + bot * fy);
        }
    }
    out
}

/// Rotate about the centre with reflection padding; the mask is
/// re-binarized at 0.5.
pub fn rotate(s: &Sample, deg: f64) -> Sample {
    let image = map_planes(&s.image, |p, h, w| rotate_plane(p, h, w, deg));
    let mask = map_planes(&s.mask, |p, h, w| {
        rotate_plane(p, h, w, deg).into_iter().map(|v| if v >= 0.5 { 1.0 } else { 0.0 }).collect()
    });
    Sample {
        id: s.id.clone(),
        image,
        mask,
    }
}

/// Zero `rects` (`y, x, h, w`) in the image; the mask is untouched.
pub fn cutout(s: &Sample, rects: &[(usize, usize, usize, usize)]) -> Sample {
    let mut image = s.image.clone();
    let (h, w) = (s.height(), s.width());
    let d = image.data_mut();
    for &(y, x, rh, rw) in rects {
        for c in 0..3 {
            for r in y..(y + rh).min(h) {
                let row = (c * h + r) * w;
                d[row + x..row + (x + rw).min(w)].fill(0.0);
            }
        }
    }
    Sample {
        id: s.id.clone(),
        image,
        mask: s.mask.clone(),
    }
}

fn random_rects(rng: &mut Rng, h: usize, w: usize, cfg: &AugmentConfig) -> Vec<(usize, usize, usize, usize)> {
    let k = rng.random_range(0..=cfg.cutout_max_rects);
    let max_area = cfg.cutout_max_area * (h * w) as f64;
    (0..k)
        .map(|_| {
            let area = rng.random_range(0.0..=max_area);
            let aspect: f64 = rng.random_range(0.5..2.0);
            let rh = ((area * aspect).sqrt().round() as usize).clamp(1, h);
            let rw = ((area / rh as f64).floor() as usize).clamp(1, w);
            (rng.random_range(0..=h - rh), rng.random_range(0..=w - rw), rh, rw)
        })
        .collect()
}

/// Apply each enabled transform with its probability. Every draw is made
/// whether or not the transform fires, so the stream stays aligned.
pub fn augment(s: &Sample, rng: &mut Rng, cfg: &AugmentConfig) -> Sample {
    let coin = |rng: &mut Rng, p: f64| rng.random::<f64>() < p;
    let mut out = s.clone();
    if coin(rng, cfg.hflip_p) {
        out = hflip(&out);
    }
    if coin(rng, cfg.vflip_p) {
        out = vflip(&out);
    }
    let fire = coin(rng, cfg.rotate_p);
    let deg = rng.random_range(-1.0..=1.0) * cfg.max_rotation_deg;
    if fire && deg != 0.0 {
        out = rotate(&out, deg);
    }
    let fire = coin(rng, cfg.cutout_p);
    let rects = random_rects(rng, s.height(), s.width(), cfg);
    if fire && !rects.is_empty() {
        out = cutout(&out, &rects);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::generate_synthetic;

    #[test]
    fn identities() {
        let s = generate_synthetic(3, 1, 32).unwrap().remove(0);
        assert_eq!(hflip(&hflip(&s)), s);
        assert_eq!(vflip(&vflip(&s)), s);
        let r = rotate(&s, 0.0);
        assert!(r.image.max_abs_diff(&s.image) < 1e-6);
        assert_eq!(r.mask, s.mask);
        assert_eq!(augment(&s, &mut Rng::new(0), &AugmentConfig::none()), s);
    }

    #[test]
    fn cutout_leaves_mask() {
        let s = generate_synthetic(4, 1, 32).unwrap().remove(0);
        let c = cutout(&s, &[(0, 0, 8, 8)]);
        assert_eq!(c.mask, s.mask);
        assert_eq!(c.image.get(&[1, 3, 3]), 0.0);
    }
}
