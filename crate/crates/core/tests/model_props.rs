use promamba::data::generate_synthetic;
use promamba::decoder::DecoderConfig;
use promamba::encoder::{Encoder, EncoderConfig};
use promamba::model::{count_params, ModelConfig, ProMamba};
use promamba::nn::Attention;
use promamba::params::{ParamStore, Registry};
use promamba::prompt::BoxPrompt;
use promamba::{Error, Rng, Tape, Tensor};

fn small(image_size: usize, patch_size: usize) -> ModelConfig {
    let mut cfg = ModelConfig::desk();
    cfg.encoder.image_size = image_size;
    cfg.encoder.patch_size = patch_size;
    cfg.encoder.d_model = 16;
    cfg.encoder.depth = 1;
    cfg.decoder = DecoderConfig {
        dim: 16,
        heads: 2,
        mlp_dim: 32,
        out_channels: 4,
        cross_attn_symmetric: true,
    };
    cfg
}

#[test]
fn token_count_and_output_resolution() {
    for (size, patch) in [(16, 4), (32, 4), (32, 8), (64, 8), (64, 16), (48, 16)] {
        let cfg = small(size, patch);
        assert_eq!(cfg.encoder.tokens(), (size / patch) * (size / patch));
        let m = ProMamba::new(&cfg).unwrap();
        let ps = m.init_params::<f32>(&Rng::new(0));
        let img = Tensor::uniform([3, size, size], 0.0, 1.0, &mut Rng::new(1));
        let tape = Tape::new();
        let p = ps.bind(&tape, false);
        let emb = m.encoder.encode(&p, tape.constant(img.clone()), None, false).unwrap();
        assert_eq!(emb.tokens.shape(), [cfg.encoder.tokens(), cfg.encoder.d_model]);
        let y = m.predict(&ps, &img, &[BoxPrompt::full()]).unwrap();
        assert_eq!(y.shape(), [1, size, size], "{size}/{patch}");
    }
}

#[test]
fn encoding_depends_on_token_order() {
    let cfg = small(32, 8).encoder;
    let mut reg = Registry::new();
    let enc = Encoder::new(&mut reg, &cfg).unwrap();
    let ps = ParamStore::<f64>::init(&reg, &Rng::new(3));
    for seed in 0..3 {
        let img = Tensor::<f64>::uniform([3, 32, 32], 0.0, 1.0, &mut Rng::new(seed));
        let tape = Tape::new();
        let p = ps.bind(&tape, false);
        // swap the two halves of the image along x: patches move, content kept
        let x = tape.constant(img);
        let swapped = promamba::Var::concat(&[x.narrow(2, 16, 16).unwrap(), x.narrow(2, 0, 16).unwrap()], 2).unwrap();
        let a = enc.encode(&p, x, None, false).unwrap().tokens.value();
        let b = enc.encode(&p, swapped, None, false).unwrap().tokens.value();
        // permute a's tokens the same way: grid 4x4, columns (0,1)<->(2,3)
        let d = cfg.d_model;
        let mut permuted = a.data().to_vec();
        for r in 0..4 {
            for c in 0..4 {
                let src = r * 4 + (c + 2) % 4;
                permuted[(r * 4 + c) * d..][..d].copy_from_slice(&a.data()[src * d..][..d]);
            }
        }
        let permuted = Tensor::new(a.shape().to_vec(), permuted).unwrap();
        assert!(b.max_abs_diff(&permuted) > 1e-6, "encoder behaves order-invariantly");
    }
}

#[test]
fn different_training_masks_give_different_embeddings() {
    let cfg = small(32, 8).encoder;
    let mut reg = Registry::new();
    let enc = Encoder::new(&mut reg, &cfg).unwrap();
    let ps = ParamStore::<f64>::init(&reg, &Rng::new(0));
    let img = Tensor::<f64>::uniform([3, 32, 32], 0.0, 1.0, &mut Rng::new(1));
    let mut m1 = Tensor::<f64>::zeros([1, 32, 32]);
    let mut m2 = m1.clone();
    m1.data_mut()[..200].fill(1.0);
    m2.data_mut()[500..900].fill(1.0);
    let tape = Tape::new();
    let p = ps.bind(&tape, false);
    let x = tape.constant(img);
    let a = enc.encode(&p, x, Some(tape.constant(m1.clone())), true).unwrap().tokens.value();
    let b = enc.encode(&p, x, Some(tape.constant(m2)), true).unwrap().tokens.value();
    assert!(a.max_abs_diff(&b) > 1e-6);

    let e = enc.encode(&p, x, Some(tape.constant(m1.clone())), false).unwrap_err();
    assert!(matches!(e, Error::Contract(_)), "{e}");
    let mut off = cfg.clone();
    off.input_mask = false;
    let mut reg = Registry::new();
    let enc = Encoder::new(&mut reg, &off).unwrap();
    let ps = ParamStore::<f64>::init(&reg, &Rng::new(0));
    let p = ps.bind(&tape, false);
    assert!(matches!(enc.encode(&p, x, Some(tape.constant(m1)), true), Err(Error::Contract(_))));
}

#[test]
fn parameter_counts_grow_with_width_and_depth() {
    let c = |d, depth| count_params(&ModelConfig::full_scale(d, depth)).unwrap();
    for depth in [12, 18, 24] {
        assert!(c(192, depth) < c(384, depth) && c(384, depth) < c(768, depth));
    }
    for d in [192, 384, 768] {
        assert!(c(d, 12) < c(d, 18) && c(d, 18) < c(d, 24));
    }
}

#[test]
fn changing_the_box_changes_the_logits() {
    let cfg = small(32, 8);
    let m = ProMamba::new(&cfg).unwrap();
    for seed in 0..20 {
        let ps = m.init_params::<f32>(&Rng::new(seed));
        let img = Tensor::uniform([3, 32, 32], 0.0, 1.0, &mut Rng::new(seed + 1000));
        let a = m.predict(&ps, &img, &[BoxPrompt::new(0.1, 0.1, 0.5, 0.5).unwrap()]).unwrap();
        let b = m.predict(&ps, &img, &[BoxPrompt::new(0.4, 0.3, 0.9, 0.8).unwrap()]).unwrap();
        assert!(a.max_abs_diff(&b) > 0.0, "seed {seed}");
        let again = m.predict(&ps, &img, &[BoxPrompt::new(0.1, 0.1, 0.5, 0.5).unwrap()]).unwrap();
        assert_eq!(a, again);
    }
}

#[test]
fn attention_rows_sum_to_one() {
    let mut reg = Registry::new();
    let attn = Attention::new(&mut reg, "a", 16, 4).unwrap();
    let ps = ParamStore::<f64>::init(&reg, &Rng::new(0));
    let tape = Tape::new();
    let p = ps.bind(&tape, false);
    let q = tape.constant(Tensor::randn([5, 16], 3.0, &mut Rng::new(1)));
    let kv = tape.constant(Tensor::randn([9, 16], 3.0, &mut Rng::new(2)));
    let (_, weights) = attn.forward_with_weights(&p, q, kv, kv).unwrap();
    assert_eq!(weights.len(), 4);
    for w in weights {
        let w = w.value();
        for r in 0..5 {
            let s: f64 = (0..9).map(|c| w.get(&[r, c])).sum();
            assert!((s - 1.0).abs() < 1e-6);
        }
    }
}

#[test]
fn synthetic_samples_run_through_the_desk_model() {
    let m = ProMamba::new(&ModelConfig::desk()).unwrap();
    let ps = m.init_params::<f32>(&Rng::new(0));
    for s in generate_synthetic(0, 3, 64).unwrap() {
        let b = promamba::prompt::box_from_mask(&s.mask).unwrap();
        let y = m.predict(&ps, &s.image, &[b]).unwrap();
        assert!(y.all_finite());
    }
    assert!(matches!(m.predict(&ps, &Tensor::zeros([3, 64, 64]), &[]), Err(Error::Contract(_))));
    let bad = EncoderConfig { patch_size: 7, ..EncoderConfig::default() };
    assert!(matches!(bad.validate(), Err(Error::Config(_))));
}
