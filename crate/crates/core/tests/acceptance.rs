//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any gating criterion fails.
//!
//! `cargo test --release --test acceptance -- 6 7` runs a subset.

use std::collections::BTreeSet;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::{Command, ExitCode};
use std::time::Instant;

use rand::Rng as _;

use promamba::check::gradient_suite;
use promamba::data::io::{from_planar, read_image, resize_bilinear, write_image};
use promamba::data::{generate_synthetic, load_image, AugmentConfig, Sample};
use promamba::loss::{aggregate_metrics, dice_loss, dice_metric, focal_loss, iou_metric, ImageScore};
use promamba::model::{count_params, ModelConfig, ProMamba};
use promamba::prompt::BoxPrompt;
use promamba::ssm::{selective_scan_eval, ScanMode};
use promamba::train::checkpoint;
use promamba::train::{benchmark_scan, evaluate_samples, infer, MetricRecord, TrainConfig, Trainer};
use promamba::{Element, Rng, Tape, Tensor};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

type Criterion = (u32, &'static str, bool, fn() -> Outcome);

const CRITERIA: [Criterion; 10] = [
    (1, "scan equivalence", true, scan_equivalence),
    (2, "gradient suite", true, gradient_checks),
    (3, "loss oracles", true, loss_oracles),
    (4, "mean aggregation", true, reported_mean),
    (5, "model size grid", true, size_grid),
    (6, "overfit + prompt ablation", true, overfit),
    (7, "ablation plumbing", true, ablations),
    (8, "determinism + persistence", true, determinism),
    (9, "scan performance (soft)", false, scan_performance),
    (10, "cli end-to-end", true, cli),
];

fn main() -> ExitCode {
    let only: BTreeSet<u32> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut failed = false;
    for (n, name, gating, f) in CRITERIA {
        if !only.is_empty() && !only.contains(&n) {
            continue;
        }
        let t = Instant::now();
        let r = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            outcome(false, format!("panicked: {msg}"))
        });
        let status = match (r.pass, gating) {
            (true, _) => "PASS",
            (false, true) => "FAIL",
            (false, false) => "SOFT-FAIL",
        };
        failed |= !r.pass && gating;
        println!("criterion {n:2} {name:27} {status:9} {:7.1}s  {}", t.elapsed().as_secs_f64(), r.detail);
    }
    if failed {
        ExitCode::FAILURE
    } else {
        ExitCode::SUCCESS
    }
}

// 1 ---------------------------------------------------------------------

struct ScanCase<T> {
    x: Tensor<T>,
    dt: Tensor<T>,
    a: Tensor<T>,
    b: Tensor<T>,
    c: Tensor<T>,
    d: Tensor<T>,
}

fn scan_case<T: Element>(rng: &mut Rng, len: usize) -> ScanCase<T> {
    let di = rng.random_range(1..=6);
    let ds = rng.random_range(1..=6);
    let mut log_uniform = |shape: [usize; 2], lo: f64, hi: f64| {
        let v: Vec<f64> = (0..shape[0] * shape[1])
            .map(|_| rng.random_range(lo.ln()..hi.ln()).exp())
            .collect();
        Tensor::<T>::from_f64(shape, &v).unwrap()
    };
    let dt = log_uniform([len, di], 1e-3, 1.0);
    let a = log_uniform([di, ds], 0.05, 4.0).map(|v| -v);
    ScanCase {
        dt,
        a,
        x: Tensor::randn([len, di], 1.0, rng),
        b: Tensor::randn([len, ds], 1.0, rng),
        c: Tensor::randn([len, ds], 1.0, rng),
        d: Tensor::randn([di], 1.0, rng),
    }
}

fn run_scan<T: Element>(mode: ScanMode, c: &ScanCase<T>) -> Tensor<T> {
    selective_scan_eval(mode, &c.x, &c.dt, &c.a, &c.b, &c.c, &c.d).unwrap()
}

/// `max |a - b| / max |b|`.
fn rel_div<T: Element>(a: &Tensor<T>, b: &Tensor<T>) -> f64 {
    let scale = b.to_f64_vec().iter().fold(0f64, |m, v| m.max(v.abs()));
    a.max_abs_diff(b) / scale.max(f64::MIN_POSITIVE)
}

/// Direct triple loop over the recurrence, independent of the kernels.
fn scan_oracle(c: &ScanCase<f64>) -> Tensor<f64> {
    let [len, di] = [c.x.shape()[0], c.x.shape()[1]];
    let ds = c.a.shape()[1];
    let mut y = vec![0.0; len * di];
    for i in 0..di {
        let mut h = vec![0.0; ds];
        for t in 0..len {
            let dt = c.dt.get(&[t, i]);
            let mut acc = c.d.get(&[i]) * c.x.get(&[t, i]);
            for (j, hj) in h.iter_mut().enumerate() {
                *hj = (dt * c.a.get(&[i, j])).exp() * *hj + dt * c.b.get(&[t, j]) * c.x.get(&[t, i]);
                acc += c.c.get(&[t, j]) * *hj;
            }
            y[t * di + i] = acc;
        }
    }
    Tensor::new([len, di], y).unwrap()
}

fn scan_equivalence() -> Outcome {
    let t0 = Instant::now();
    let mut rng = Rng::new(2024);
    let cases = 200;
    let (mut w32, mut w64, mut woracle) = (0f64, 0f64, 0f64);
    for k in 0..cases {
        let len = if k % 25 == 0 { 1024 } else { rng.random_range(1..=1024) };
        let c64: ScanCase<f64> = scan_case(&mut rng, len);
        let s64 = run_scan(ScanMode::Sequential, &c64);
        w64 = w64.max(rel_div(&run_scan(ScanMode::Parallel, &c64), &s64));
        if k % 10 == 0 {
            woracle = woracle.max(rel_div(&s64, &scan_oracle(&c64)));
        }
        let c32 = ScanCase {
            x: c64.x.cast::<f32>(),
            dt: c64.dt.cast(),
            a: c64.a.cast(),
            b: c64.b.cast(),
            c: c64.c.cast(),
            d: c64.d.cast(),
        };
        let s32 = run_scan(ScanMode::Sequential, &c32);
        w32 = w32.max(rel_div(&run_scan(ScanMode::Parallel, &c32), &s32));
    }
    let secs = t0.elapsed().as_secs_f64();
    outcome(
        w32 < 1e-5 && w64 < 1e-12 && woracle < 1e-12 && secs < 30.0,
        format!("{cases} cases; f32 {w32:.2e} (<1e-5), f64 {w64:.2e} (<1e-12), f64 vs loop oracle {woracle:.2e}; {secs:.1}s (<30s)"),
    )
}

// 2 ---------------------------------------------------------------------

const REQUIRED_GRADS: [&str; 16] = [
    "matmul",
    "add",
    "mul",
    "softmax",
    "layer_norm",
    "conv2d",
    "transposed_conv2d",
    "attention",
    "mamba_block",
    "bidirectional_mix",
    "inject_mask",
    "decode",
    "dice_loss",
    "focal_loss",
    "combined_loss",
    "selective_scan_parallel",
];

fn gradient_checks() -> Outcome {
    let t0 = Instant::now();
    let cases = gradient_suite(7).unwrap();
    let missing: Vec<_> = REQUIRED_GRADS
        .iter()
        .filter(|n| !cases.iter().any(|c| c.name == **n))
        .collect();
    let failed: Vec<String> = cases
        .iter()
        .filter(|c| {
            let tol = if c.primitive { 1e-5 } else { 1e-4 };
            // NaN counts as a failure
            c.report.max_rel_err.is_nan() || c.report.max_rel_err > tol
        })
        .map(|c| format!("{} {:.1e}", c.name, c.report.max_rel_err))
        .collect();
    let worst_prim = cases.iter().filter(|c| c.primitive).map(|c| c.report.max_rel_err).fold(0.0, f64::max);
    let worst_mod = cases.iter().filter(|c| !c.primitive).map(|c| c.report.max_rel_err).fold(0.0, f64::max);
    let secs = t0.elapsed().as_secs_f64();
    outcome(
        missing.is_empty() && failed.is_empty() && secs < 300.0,
        format!(
            "{} ops; worst primitive {worst_prim:.1e} (<=1e-5), worst composite {worst_mod:.1e} (<=1e-4); failed {failed:?}; missing {missing:?}",
            cases.len()
        ),
    )
}

// 3 ---------------------------------------------------------------------

fn scalar_loss(f: impl for<'t> Fn(&'t Tape<f64>) -> promamba::Var<'t, f64>) -> f64 {
    let tape = Tape::new();
    f(&tape).value().item()
}

fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

fn loss_oracles() -> Outcome {
    let mut notes = Vec::new();
    let mut ok = true;

    let t = Tensor::<f64>::new([1, 2], vec![1.0, 0.0]).unwrap();
    let d = scalar_loss(|tape| dice_loss(tape.constant(Tensor::new([1, 2], vec![0.5, 0.5]).unwrap()), &t, 1.0).unwrap());
    ok &= (d - 1.0 / 3.0).abs() < 1e-12;
    notes.push(format!("dice hand {d:.12}"));
    let full = Tensor::<f64>::ones([1, 2, 2]);
    let d0 = scalar_loss(|tape| dice_loss(tape.constant(full.clone()), &full, 1.0).unwrap());
    ok &= d0.abs() < 1e-15;

    // gamma = 0, alpha_t = 0.5 against binary cross-entropy
    let mut rng = Rng::new(3);
    let z = Tensor::<f64>::randn([1, 8, 8], 3.0, &mut rng);
    let tgt = Tensor::<f64>::uniform([1, 8, 8], 0.0, 1.0, &mut rng).map(|v| (v > 0.5) as u8 as f64);
    let bce: f64 = z
        .data()
        .iter()
        .zip(tgt.data())
        .map(|(&z, &t)| -(t * sigmoid(z).ln() + (1.0 - t) * (1.0 - sigmoid(z)).ln()))
        .sum::<f64>()
        / 64.0;
    let f0 = scalar_loss(|tape| focal_loss(tape.constant(z.clone()), &tgt, 0.0, 0.5).unwrap());
    let e = (f0 - 0.5 * bce).abs();
    ok &= e < 1e-9;
    notes.push(format!("focal g0 vs BCE/2 {e:.1e}"));

    let logit = (0.9f64 / 0.1).ln();
    let one = Tensor::<f64>::ones([1, 1, 1]);
    let fp = scalar_loss(|tape| focal_loss(tape.constant(Tensor::full([1, 1, 1], logit)), &one, 2.0, 0.25).unwrap());
    ok &= (fp - 2.634e-4).abs() <= 1e-7;
    notes.push(format!("focal pixel {fp:.4e}"));

    let mut worst = 0f64;
    for k in 0..100 {
        let mut r = Rng::new(100 + k);
        let p = r.random_range(0.05..0.95);
        let q = r.random_range(0.05..0.95);
        let pred = Tensor::<f64>::uniform([1, 16, 16], 0.0, 1.0, &mut r).map(|v| if v < p { 4.0 } else { -4.0 });
        let target = Tensor::<f64>::uniform([1, 16, 16], 0.0, 1.0, &mut r).map(|v| (v < q) as u8 as f64);
        let dice = dice_metric(&pred, &target, 0.5).unwrap();
        let iou = iou_metric(&pred, &target, 0.5).unwrap();
        worst = worst.max((dice - 2.0 * iou / (1.0 + iou)).abs());
    }
    ok &= worst < 1e-12;
    notes.push(format!("dice/iou identity on 100 masks {worst:.1e}"));
    outcome(ok, notes.join("; "))
}

// 4 ---------------------------------------------------------------------

fn reported_mean() -> Outcome {
    let row = [
        ("ETIS", 0.8909),
        ("CVC-ClinicDB", 0.8879),
        ("CVC-ColonDB", 0.8202),
        ("CVC-300", 0.7713),
        ("Kvasir", 0.8863),
        ("BKAI", 0.8603),
    ];
    let scores: Vec<ImageScore> = row
        .iter()
        .map(|&(d, v)| ImageScore {
            dataset: d.into(),
            dice: v,
            iou: v,
        })
        .collect();
    let m = aggregate_metrics(&scores).unwrap().mean_dice;
    outcome((m - 0.8528).abs() <= 1e-4, format!("mean {m:.6} vs expected 0.8528"))
}

// 5 ---------------------------------------------------------------------

fn size_grid() -> Outcome {
    let t0 = Instant::now();
    let rows = [(192, 24, 11e6), (384, 24, 30e6), (768, 12, 54e6), (768, 18, 78e6), (768, 24, 102e6)];
    let mut ok = true;
    let mut prev = 0;
    let mut parts = Vec::new();
    for (d, depth, target) in rows {
        let n = count_params(&ModelConfig::full_scale(d, depth)).unwrap();
        let dev = n as f64 / target - 1.0;
        ok &= dev.abs() <= 0.20 && n > prev;
        prev = n;
        parts.push(format!("{:.1}M/{:.0}M ({:+.0}%)", n as f64 / 1e6, target / 1e6, dev * 100.0));
    }
    let secs = t0.elapsed().as_secs_f64();
    outcome(ok && secs < 1.0, format!("{}; monotone; {secs:.3}s", parts.join(", ")))
}

// 6, 7 -------------------------------------------------------------------

const OVERFIT_SAMPLES: usize = 16;
const OVERFIT_STEPS: u64 = 2000;

fn overfit_config(seed: u64, model: ModelConfig, target: Option<f64>, steps: u64) -> TrainConfig {
    let mut cfg = TrainConfig {
        model,
        seed,
        batch_size: 1,
        epochs: usize::MAX,
        max_steps: Some(steps),
        target_train_dice: target,
        threads: Some(1),
        eval_every: 2,
        augment: AugmentConfig::none(),
        ..TrainConfig::default()
    };
    cfg.optimizer.lr = 1e-4;
    cfg.model.prompt.jitter = 0.0;
    cfg
}

struct Run {
    dice: f64,
    steps: u64,
    train_losses: Vec<f64>,
}

fn fit(cfg: TrainConfig, data: &[Sample]) -> Run {
    let mut t = Trainer::new(cfg).unwrap();
    let out = t.fit(data, &[], None, |_| {}).unwrap();
    Run {
        dice: out.train_dice.unwrap(),
        steps: out.steps,
        train_losses: out.records.iter().filter(|r| r.split == "train").map(|r| r.loss).collect(),
    }
}

/// Count of increases between consecutive 20-step moving averages, plus
/// the first and last average.
fn moving_average_increases(losses: &[f64]) -> (usize, usize, f64, f64) {
    let ma: Vec<f64> = losses.windows(20).map(|w| w.iter().sum::<f64>() / 20.0).collect();
    let ups = ma.windows(2).filter(|w| w[1] > w[0]).count();
    let (first, last) = (ma.first().copied().unwrap_or(f64::NAN), ma.last().copied().unwrap_or(f64::NAN));
    (ups, ma.len().saturating_sub(1), first, last)
}

fn overfit() -> Outcome {
    let t0 = Instant::now();
    let mut lines = Vec::new();
    let (mut reached, mut lower) = (0, 0);
    let (mut ups, mut windows) = (0, 0);
    let mut ends = Vec::new();
    for seed in 0..5u64 {
        let data = generate_synthetic(seed, OVERFIT_SAMPLES, 64).unwrap();
        let prompted = fit(overfit_config(seed, ModelConfig::desk(), Some(0.95), OVERFIT_STEPS), &data);
        let mut blind = ModelConfig::desk();
        blind.prompt.use_prompt = false;
        let unprompted = fit(overfit_config(seed, blind, None, prompted.steps), &data);
        reached += (prompted.dice >= 0.95) as usize;
        lower += (unprompted.dice < prompted.dice) as usize;
        let (u, w, first, last) = moving_average_increases(&prompted.train_losses);
        ups += u;
        windows += w;
        ends.push(format!("{first:.3}->{last:.3}"));
        lines.push(format!("s{seed}: {:.3}@{} vs {:.3}", prompted.dice, prompted.steps, unprompted.dice));
    }
    let secs = t0.elapsed().as_secs_f64();
    println!(
        "    trainer: 20-step moving-average loss rose in {ups} of {windows} consecutive windows, first->last [{}] (informational)",
        ends.join(", ")
    );
    let data = generate_synthetic(0, OVERFIT_SAMPLES, 64).unwrap();
    let sweep: Vec<String> = [0.5, 2.0]
        .iter()
        .map(|&alpha| {
            let mut cfg = overfit_config(0, ModelConfig::desk(), Some(0.95), OVERFIT_STEPS);
            cfg.loss.alpha = alpha;
            let r = fit(cfg, &data);
            format!("alpha {alpha}: {:.3}@{}", r.dice, r.steps)
        })
        .collect();
    println!("    trainer: focal weight sweep on s0 [{}] (informational)", sweep.join(", "));
    outcome(
        reached == 5 && lower >= 4 && secs < 600.0,
        format!(
            "prompted >=0.95 on {reached}/5, no-prompt lower on {lower}/5 (need 4) [{}]; {secs:.0}s",
            lines.join(", ")
        ),
    )
}

fn manifest(cfg: &ModelConfig) -> BTreeSet<String> {
    let m = ProMamba::new(cfg).unwrap();
    m.init_params::<f32>(&Rng::new(0)).names().map(String::from).collect()
}

/// Tape length of one training forward pass with the mask supplied when
/// the configuration accepts it.
fn graph_size(cfg: &ModelConfig, s: &Sample) -> usize {
    let m = ProMamba::new(cfg).unwrap();
    let ps = m.init_params::<f32>(&Rng::new(0));
    let tape = Tape::new();
    let p = ps.bind(&tape, true);
    let x = tape.constant(s.image.clone());
    let mask = cfg.encoder.input_mask.then(|| tape.constant(s.mask.clone()));
    m.forward(&p, &tape, x, &[BoxPrompt::full()], mask, true).unwrap();
    tape.len()
}

fn ablations() -> Outcome {
    let variants = [("backbone", false, false), ("+backward_ssm", true, false), ("+input_mask", false, true), ("both", true, true)];
    let data = generate_synthetic(11, OVERFIT_SAMPLES, 64).unwrap();
    let mut manifests = Vec::new();
    let mut graphs = Vec::new();
    let mut ok = true;
    let mut parts = Vec::new();
    for (name, bi, mask) in variants {
        let mut cfg = ModelConfig::desk();
        cfg.encoder.bidirectional = bi;
        cfg.encoder.input_mask = mask;
        manifests.push(manifest(&cfg));
        graphs.push(graph_size(&cfg, &data[0]));
        let r = fit(overfit_config(11, cfg, Some(0.90), OVERFIT_STEPS), &data);
        ok &= r.dice >= 0.90;
        parts.push(format!("{name} {:.3}@{}", r.dice, r.steps));
    }
    let distinct_manifests = manifests.iter().collect::<BTreeSet<_>>().len();
    let distinct_graphs = graphs.iter().collect::<BTreeSet<_>>().len();
    let bwd_absent = !manifests[0].iter().any(|n| n.contains("bwd"));
    let inject_absent = !manifests[0].iter().any(|n| n.contains("inject"));
    ok &= distinct_manifests == 4 && distinct_graphs == 4 && bwd_absent && inject_absent;
    outcome(
        ok,
        format!(
            "{distinct_manifests}/4 distinct manifests, {distinct_graphs}/4 distinct graphs {graphs:?}; floor 0.90: {}",
            parts.join(", ")
        ),
    )
}

// 8 ---------------------------------------------------------------------

fn read_log(dir: &Path) -> Vec<MetricRecord> {
    std::fs::read_to_string(dir.join("metrics.jsonl"))
        .unwrap()
        .lines()
        .map(|l| {
            let mut r: MetricRecord = serde_json::from_str(l).unwrap();
            r.wallclock = 0.0;
            r
        })
        .collect()
}

fn determinism() -> Outcome {
    let tmp = tempfile::tempdir().unwrap();
    let data = generate_synthetic(5, 4, 64).unwrap();
    let cfg = |threads| TrainConfig {
        seed: 9,
        epochs: 1,
        batch_size: 2,
        threads: Some(threads),
        ..TrainConfig::default()
    };
    let mut logs = Vec::new();
    let mut last = None;
    for (i, threads) in [1, 1, 2].into_iter().enumerate() {
        let dir = tmp.path().join(format!("run{i}"));
        let mut t = Trainer::new(cfg(threads)).unwrap();
        t.fit(&data, &data[..1], Some(&dir), |_| {}).unwrap();
        logs.push(read_log(&dir));
        last = Some((t, dir));
    }
    let identical = logs[0] == logs[1] && !logs[0].is_empty();
    let threaded_rel = logs[0]
        .iter()
        .zip(&logs[2])
        .flat_map(|(a, b)| [(a.loss, b.loss), (a.dice, b.dice), (a.iou, b.iou)])
        .map(|(a, b)| (a - b).abs() / a.abs().max(1e-12))
        .fold(0.0, f64::max);

    let (t, dir) = last.unwrap();
    let sets = [("train".to_string(), &data[..])];
    let before = evaluate_samples(&t.model, &t.params, &sets, &t.cfg.loss, 0.0, 0).unwrap();
    let ck = checkpoint::load::<f32>(&dir.join("last.ckpt")).unwrap();
    let model = ProMamba::new(&ck.header.model).unwrap();
    let mut params = model.init_params(&Rng::new(123));
    ck.restore(&mut params).unwrap();
    let after = evaluate_samples(&model, &params, &sets, &t.cfg.loss, 0.0, 0).unwrap();
    let tensors_equal = params.values().iter().zip(t.params.values()).all(|(a, b)| a.data() == b.data());
    let eval_equal = before == after;
    outcome(
        identical && threaded_rel <= 1e-5 && tensors_equal && eval_equal,
        format!(
            "{} records bit-identical: {identical}; threaded max rel diff {threaded_rel:.1e} (<=1e-5); reload tensors identical: {tensors_equal}; evaluation identical: {eval_equal}",
            logs[0].len()
        ),
    )
}

// 9 ---------------------------------------------------------------------

fn scan_performance() -> Outcome {
    let cores = std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1);
    let row = &benchmark_scan(&[4096], 128, 16, 3, 0)[0];
    let detail = format!(
        "L=4096 d_inner=128: seq {:.0} ns/tok, par {:.0} ns/tok, speedup {:.2}x on {cores} core(s), divergence {:.1e}",
        row.seq_ns_per_token, row.par_ns_per_token, row.speedup, row.divergence
    );
    if cores < 4 {
        return outcome(false, format!("{detail}; needs a >=4-core host, not measurable here"));
    }
    outcome(row.speedup >= 2.0 && row.divergence < 1e-5, detail)
}

// 10 --------------------------------------------------------------------

fn promamba(args: &[&str], cwd: &Path) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_promamba")).args(args).current_dir(cwd).output().unwrap()
}

fn cli() -> Outcome {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    let mut steps = Vec::new();
    let mut ok = true;
    let mut run = |label: &str, args: &[&str]| {
        let out = promamba(args, dir);
        let good = out.status.success();
        if !good {
            eprintln!("{label} failed: {}", String::from_utf8_lossy(&out.stderr));
        }
        steps.push(format!("{label}:{}", if good { "ok" } else { "FAILED" }));
        ok &= good;
        out
    };
    run("synth", &["synth", "--seed", "4", "--count", "12", "--size", "64", "--out", "data"]);
    run(
        "train",
        &["train", "--data", "data", "--epochs", "2", "--batch-size", "2", "--threads", "1", "--seed", "1", "--out", "run", "-q"],
    );
    let ev = run("eval", &["eval", "--checkpoint", "run/best.ckpt", "--data", "data"]);
    let table_ok = String::from_utf8_lossy(&ev.stdout).contains("Mean");

    // a non-square input at a different resolution than the model
    let src = load_image(&dir.join("data/images/synth_4_00000.png")).unwrap();
    let big = resize_bilinear(&src, 72, 96);
    write_image(&dir.join("input.png"), &from_planar(&big)).unwrap();
    let boxes = ["0.10,0.20,0.70,0.80", "0.15,0.25,0.75,0.85"];
    run(
        "infer",
        &["infer", "--checkpoint", "run/best.ckpt", "--image", "input.png", "--box", boxes[0], "--box", boxes[1], "--out", "mask.pgm"],
    );
    run(
        "infer --prob",
        &["infer", "--checkpoint", "run/best.ckpt", "--image", "input.png", "--box", boxes[0], "--box", boxes[1], "--prob", "--out", "prob.png"],
    );

    let mask = read_image(&dir.join("mask.pgm")).unwrap();
    let dims_ok = (mask.width, mask.height) == (96, 72);
    let binary = mask.data.iter().all(|&v| v == 0 || v == 255);

    // the written probabilities must match the library with both boxes averaged
    let ck = checkpoint::load::<f32>(&dir.join("run/best.ckpt")).unwrap();
    let model = ProMamba::new(&ck.header.model).unwrap();
    let mut params = model.init_params(&Rng::new(0));
    ck.restore(&mut params).unwrap();
    let parsed: Vec<BoxPrompt> = boxes.iter().map(|b| b.parse().unwrap()).collect();
    let expect = from_planar(&infer(&model, &params, &load_image(&dir.join("input.png")).unwrap(), &parsed).unwrap());
    let single = from_planar(&infer(&model, &params, &load_image(&dir.join("input.png")).unwrap(), &parsed[..1]).unwrap());
    let prob = read_image(&dir.join("prob.png")).unwrap();
    let averaged = prob.data == expect.data && prob.data != single.data;

    let missing = promamba(&["infer", "--checkpoint", "run/best.ckpt", "--image", "input.png"], dir);
    let usage = missing.status.code() == Some(2) && String::from_utf8_lossy(&missing.stderr).contains("--box");

    outcome(
        ok && table_ok && dims_ok && binary && averaged && usage,
        format!(
            "{}; mask {}x{} matches input 96x72: {dims_ok}; binary: {binary}; prompts averaged: {averaged}; missing box is a usage error: {usage}",
            steps.join(" "),
            mask.width,
            mask.height
        ),
    )
}
