//! Finite-difference gradient suite over every differentiable operation,
//! from primitives up to the full decoder, at float64.

use crate::autograd::{grad_check, GradCheckReport, Tape, Var};
use crate::decoder::{DecoderConfig, MaskDecoder};
use crate::encoder::{Encoder, EncoderConfig, ImageEmbedding};
use crate::error::Result;
use crate::loss::{combined_loss, dice_loss, focal_loss, LossConfig};
use crate::nn::Attention;
use crate::params::{Bound, ParamStore, Registry};
use crate::rng::Rng;
use crate::ssm::{selective_scan, Direction, MambaBlock, ScanMode, SsmDims};
use crate::tensor::Tensor;

/// Tolerance for single operations.
pub const PRIMITIVE_TOL: f64 = 1e-5;
/// Tolerance for composite modules and losses.
pub const MODULE_TOL: f64 = 1e-4;
const EPS: f64 = 1e-6;
/// Coordinates perturbed per tensor for the larger cases.
const COORDS: usize = 24;

#[derive(Debug, Clone)]
pub struct GradCase {
    pub name: &'static str,
    pub primitive: bool,
    pub report: GradCheckReport,
}

/// Project `y` onto a fixed random direction so that no gradient is
/// trivially symmetric.
fn probe<'t>(y: Var<'t, f64>, seed: u64) -> Result<Var<'t, f64>> {
    let w = Tensor::randn(y.shape(), 1.0, &mut Rng::new(seed));
    y.mul(y.tape().constant(w))?.sum()
}

fn params_of(reg: &Registry, seed: u64) -> (ParamStore<f64>, Vec<Tensor<f64>>) {
    let ps = ParamStore::init(reg, &Rng::new(seed));
    let perturbed: Vec<Tensor<f64>> = ps
        .values()
        .iter()
        .enumerate()
        .map(|(i, v)| {
            // Zero-initialized tensors would hide whole gradient paths.
            let mut t = Tensor::randn(v.shape().to_vec(), 0.2, &mut Rng::new(seed).split2(7, i as u64));
            t.data_mut().iter_mut().zip(v.data()).for_each(|(n, a)| *n += a);
            t
        })
        .collect();
    (ps, perturbed)
}

struct Suite {
    seed: u64,
    out: Vec<GradCase>,
}

impl Suite {
    fn case<F>(&mut self, name: &'static str, primitive: bool, inputs: &[Tensor<f64>], f: F) -> Result<()>
    where
        F: for<'t> Fn(&'t Tape<f64>, &[Var<'t, f64>]) -> Result<Var<'t, f64>>,
    {
        let tol = if primitive { PRIMITIVE_TOL } else { MODULE_TOL };
        let seed = self.seed ^ name.len() as u64;
        let report = grad_check(|t, v| probe(f(t, v)?, seed), inputs, EPS, tol, Some(COORDS))?;
        self.out.push(GradCase { name, primitive, report });
        Ok(())
    }

    fn randn(&mut self, shape: &[usize]) -> Tensor<f64> {
        self.seed = self.seed.wrapping_add(1);
        Tensor::randn(shape.to_vec(), 1.0, &mut Rng::new(self.seed))
    }

    fn positive(&mut self, shape: &[usize]) -> Tensor<f64> {
        self.seed = self.seed.wrapping_add(1);
        Tensor::uniform(shape.to_vec(), 0.5, 2.0, &mut Rng::new(self.seed))
    }
}

fn binary_target(shape: &[usize], seed: u64) -> Tensor<f64> {
    Tensor::uniform(shape.to_vec(), 0.0, 1.0, &mut Rng::new(seed)).map(|v| if v > 0.6 { 1.0 } else { 0.0 })
}

/// Run every case. Parameterized modules are checked with respect to
/// their inputs and all parameters together.
pub fn gradient_suite(seed: u64) -> Result<Vec<GradCase>> {
    let mut s = Suite { seed, out: Vec::new() };

    let (a, b) = (s.randn(&[4, 5]), s.randn(&[5, 3]));
    s.case("matmul", true, &[a, b], |_, v| v[0].matmul(v[1]))?;
    let (a, b) = (s.randn(&[3, 4]), s.positive(&[3, 4]));
    s.case("add", true, &[a.clone(), b.clone()], |_, v| v[0].add(v[1]))?;
    s.case("mul", true, &[a.clone(), b.clone()], |_, v| v[0].mul(v[1]))?;
    s.case("div", true, &[a.clone(), b.clone()], |_, v| v[0].div(v[1]))?;
    s.case("exp", true, std::slice::from_ref(&a), |_, v| v[0].exp())?;
    s.case("log", true, std::slice::from_ref(&b), |_, v| v[0].log())?;
    s.case("sigmoid", true, std::slice::from_ref(&a), |_, v| v[0].sigmoid())?;
    s.case("silu", true, std::slice::from_ref(&a), |_, v| v[0].silu())?;
    s.case("softplus", true, std::slice::from_ref(&a), |_, v| v[0].softplus())?;
    s.case("softmax", true, std::slice::from_ref(&a), |_, v| v[0].softmax(1))?;
    let (g, bias) = (s.randn(&[4]), s.randn(&[4]));
    s.case("layer_norm", true, &[a, g, bias], |_, v| v[0].layer_norm(v[1], v[2], 1e-5))?;

    let (x, k, bias) = (s.randn(&[2, 7, 7]), s.randn(&[3, 2, 3, 3]), s.randn(&[3]));
    s.case("conv2d", true, &[x, k, bias], |_, v| v[0].conv2d(v[1], Some(v[2]), 2, 1))?;
    let (x, k, bias) = (s.randn(&[3, 3, 4]), s.randn(&[3, 2, 2, 2]), s.randn(&[2]));
    s.case("transposed_conv2d", true, &[x, k, bias], |_, v| v[0].conv_transpose2d(v[1], Some(v[2]), 2, 0))?;
    let (x, k, bias) = (s.randn(&[6, 3]), s.randn(&[3, 4]), s.randn(&[3]));
    s.case("causal_conv1d", true, &[x, k, bias], |_, v| v[0].causal_conv1d(v[1], v[2]))?;

    let (len, di, ds) = (9, 3, 4);
    let scan_inputs = [
        s.randn(&[len, di]),
        s.positive(&[len, di]).map(|v| v * 0.3),
        s.positive(&[di, ds]).map(|v| -v),
        s.randn(&[len, ds]),
        s.randn(&[len, ds]),
        s.randn(&[di]),
    ];
    for (name, mode) in [("selective_scan_seq", ScanMode::Sequential), ("selective_scan_parallel", ScanMode::Parallel)] {
        s.case(name, true, &scan_inputs, move |_, v| selective_scan(mode, v[0], v[1], v[2], v[3], v[4], v[5]))?;
    }

    // attention
    let mut reg = Registry::new();
    let attn = Attention::new(&mut reg, "attn", 8, 2)?;
    let (ps, pv) = params_of(&reg, seed);
    let mut inputs = vec![s.randn(&[3, 8]), s.randn(&[5, 8])];
    inputs.extend(pv);
    s.case("attention", false, &inputs, |_, v| {
        let p = Bound::from_vars(&ps, &v[2..])?;
        attn.forward(&p, v[0], v[1], v[1])
    })?;

    // Mamba block and the bidirectional mix
    let dims = SsmDims {
        d_model: 6,
        d_inner: 8,
        d_state: 3,
        dt_rank: 2,
        conv_width: 3,
    };
    let mut reg = Registry::new();
    let block = MambaBlock::new(&mut reg, "blk", dims, true);
    let (ps, pv) = params_of(&reg, seed + 1);
    let mut inputs = vec![s.randn(&[5, 6])];
    inputs.extend(pv);
    s.case("mamba_block", false, &inputs, |_, v| {
        let p = Bound::from_vars(&ps, &v[1..])?;
        block.mamba_block(&p, &block.forward_core, v[0], Direction::Backward, ScanMode::Sequential)
    })?;
    s.case("bidirectional_mix", false, &inputs, |_, v| {
        let p = Bound::from_vars(&ps, &v[1..])?;
        block.bidirectional_mix(&p, v[0], ScanMode::Parallel)
    })?;

    // mask injection, with respect to the convolution weights
    let ecfg = EncoderConfig {
        image_size: 16,
        patch_size: 4,
        d_model: 8,
        depth: 1,
        d_state: 3,
        ..EncoderConfig::default()
    };
    let mut reg = Registry::new();
    let enc = Encoder::new(&mut reg, &ecfg)?;
    let (ps, pv) = params_of(&reg, seed + 2);
    let mask = binary_target(&[1, 16, 16], seed + 3);
    s.case("inject_mask", false, &pv, |t, v| {
        let p = Bound::from_vars(&ps, v)?;
        enc.inject_mask(&p, t.constant(mask.clone()))
    })?;

    // decoder, with respect to image tokens, prompt tokens and parameters
    let dcfg = DecoderConfig {
        dim: 8,
        heads: 2,
        mlp_dim: 12,
        out_channels: 2,
        cross_attn_symmetric: true,
    };
    let mut reg = Registry::new();
    let dec = MaskDecoder::new(&mut reg, &dcfg, 6, 2)?;
    let (ps, pv) = params_of(&reg, seed + 4);
    let mut inputs = vec![s.randn(&[4, 6]), s.randn(&[4, 8])];
    inputs.extend(pv);
    s.case("decode", false, &inputs, |t, v| {
        let p = Bound::from_vars(&ps, &v[2..])?;
        let img = ImageEmbedding {
            tokens: v[0],
            grid: (2, 2),
        };
        dec.decode(&p, t, &img, v[1])
    })?;

    // losses; the probe is skipped by differentiating the scalar directly
    let target = binary_target(&[1, 6, 6], seed + 5);
    let logits = s.randn(&[1, 6, 6]);
    let cfg = LossConfig::default();
    for (name, which) in [("dice_loss", 0), ("focal_loss", 1), ("combined_loss", 2)] {
        let report = grad_check(
            |_, v| match which {
                0 => dice_loss(v[0].sigmoid()?, &target, cfg.eps),
                1 => focal_loss(v[0], &target, cfg.gamma, cfg.focal_alpha_t),
                _ => combined_loss(v[0], &target, &cfg),
            },
            std::slice::from_ref(&logits),
            EPS,
            MODULE_TOL,
            None,
        )?;
        s.out.push(GradCase {
            name,
            primitive: false,
            report,
        });
    }
    Ok(s.out)
}
