use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use promamba::check::gradient_suite;
use promamba::data::io::{from_planar, write_image};
use promamba::data::{generate_synthetic, load_datasets, load_image, save_sample, split, AugmentConfig, Sample};
use promamba::model::{count_params, ModelConfig, ProMamba};
use promamba::prompt::BoxPrompt;
use promamba::ssm::ScanMode;
use promamba::train::checkpoint::{self, Checkpoint};
use promamba::train::eval::binarize;
use promamba::train::{benchmark_scan, evaluate_samples, infer, DataSource, TrainConfig, Trainer};
use promamba::{Error, Result, Tensor};

#[derive(Parser)]
#[command(name = "promamba", version, about = "Box-prompted polyp segmentation with a bidirectional Mamba encoder")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Train a model; writes metrics.jsonl, best.ckpt and last.ckpt to --out.
    Train(TrainArgs),
    /// Score a checkpoint with ground-truth boxes, per dataset.
    Eval(EvalArgs),
    /// Segment one image given one or more boxes.
    Infer(InferArgs),
    /// Write a synthetic dataset (images/ and masks/).
    Synth(SynthArgs),
    /// Finite-difference check of every differentiable operation.
    Gradcheck {
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Compare sequential and parallel scan throughput.
    BenchmarkScan(BenchArgs),
    /// Count the parameters of a configuration.
    CountParams(CountArgs),
}

#[derive(Args)]
struct TrainArgs {
    /// JSON configuration; flags below override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value = "runs/promamba")]
    out: PathBuf,
    /// Dataset directory with images/ and masks/.
    #[arg(long, conflicts_with = "synthetic")]
    data: Option<PathBuf>,
    /// Train on N generated samples instead.
    #[arg(long)]
    synthetic: Option<usize>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    max_steps: Option<u64>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    threads: Option<usize>,
    #[arg(long)]
    image_size: Option<usize>,
    #[arg(long, value_enum)]
    scan: Option<ScanArg>,
    #[arg(long)]
    no_bidirectional: bool,
    #[arg(long)]
    no_input_mask: bool,
    #[arg(long)]
    no_prompt: bool,
    #[arg(long)]
    no_augment: bool,
    #[arg(long)]
    inject_prob: Option<f64>,
    #[arg(long)]
    eval_jitter: Option<f64>,
    #[arg(long)]
    eval_every: Option<usize>,
    /// Stop once the mask-free training Dice reaches this value.
    #[arg(long)]
    target_train_dice: Option<f64>,
    /// Only print the per-epoch evaluation lines.
    #[arg(long, short)]
    quiet: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum ScanArg {
    Sequential,
    Parallel,
}

#[derive(Clone, Copy, ValueEnum, PartialEq)]
enum SplitArg {
    Train,
    Val,
    Test,
    All,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    /// A dataset directory, or a directory of datasets.
    #[arg(long, conflicts_with = "synthetic")]
    data: Option<PathBuf>,
    #[arg(long)]
    synthetic: Option<usize>,
    /// Seed for --synthetic and evaluation jitter.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Without --data/--synthetic, which part of the training source to score.
    #[arg(long, value_enum, default_value = "test")]
    split: SplitArg,
    /// Build the model from this configuration instead of the checkpoint's.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value_t = 0.0)]
    eval_jitter: f64,
    /// Also write the report as JSON.
    #[arg(long)]
    json: Option<PathBuf>,
}

#[derive(Args)]
struct InferArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    image: PathBuf,
    /// Normalized box `x0,y0,x1,y1`; repeat to average several prompts.
    #[arg(long = "box", value_name = "X0,Y0,X1,Y1")]
    boxes: Vec<BoxPrompt>,
    /// Output image (.png, .pgm).
    #[arg(long, default_value = "mask.png")]
    out: PathBuf,
    /// Write the probability map instead of the thresholded mask.
    #[arg(long)]
    prob: bool,
    #[arg(long, default_value_t = 0.5)]
    threshold: f32,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 64)]
    count: usize,
    #[arg(long, default_value_t = 64)]
    size: usize,
    #[arg(long, default_value = "data/synth")]
    out: PathBuf,
    /// Write PPM/PGM instead of PNG.
    #[arg(long)]
    pnm: bool,
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long, value_delimiter = ',', default_value = "1,64,256,1024,4096")]
    lengths: Vec<usize>,
    #[arg(long, default_value_t = 128)]
    d_inner: usize,
    #[arg(long, default_value_t = 16)]
    d_state: usize,
    #[arg(long, default_value_t = 3)]
    repeats: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Worker threads for the parallel scan (default: all cores).
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Args)]
struct CountArgs {
    /// JSON training or model configuration.
    #[arg(long, conflicts_with_all = ["d_model", "table"])]
    config: Option<PathBuf>,
    /// Full-size configuration with this embedding width.
    #[arg(long, requires = "depth")]
    d_model: Option<usize>,
    #[arg(long)]
    depth: Option<usize>,
    /// Print the full-size grid.
    #[arg(long)]
    table: bool,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let r = match cli.cmd {
        Cmd::Train(a) => train(a),
        Cmd::Eval(a) => eval(a),
        Cmd::Infer(a) => run_infer(a),
        Cmd::Synth(a) => synth(a),
        Cmd::Gradcheck { seed } => gradcheck(seed),
        Cmd::BenchmarkScan(a) => bench(a),
        Cmd::CountParams(a) => count(a),
    };
    match r {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::EmptyPrompt(_) | Error::Config(_) => ExitCode::from(2),
                _ => ExitCode::FAILURE,
            }
        }
    }
}

fn train(a: TrainArgs) -> Result<ExitCode> {
    let mut cfg = match &a.config {
        Some(p) => TrainConfig::from_file(p)?,
        None => TrainConfig::default(),
    };
    if let Some(v) = a.seed {
        cfg.seed = v;
    }
    if let Some(root) = a.data {
        cfg.data = DataSource::Directory { root };
    }
    if let Some(count) = a.synthetic {
        cfg.data = DataSource::Synthetic { seed: cfg.seed, count };
    }
    macro_rules! set {
        ($($flag:ident => $($field:ident).+),* $(,)?) => {
            $(if let Some(v) = a.$flag { cfg.$($field).+ = v.into(); })*
        };
    }
    set!(
        epochs => epochs,
        batch_size => batch_size,
        lr => optimizer.lr,
        image_size => model.encoder.image_size,
        inject_prob => inject_prob,
        eval_jitter => eval_jitter,
        eval_every => eval_every,
    );
    cfg.max_steps = a.max_steps.or(cfg.max_steps);
    cfg.threads = a.threads.or(cfg.threads);
    cfg.target_train_dice = a.target_train_dice.or(cfg.target_train_dice);
    if let Some(s) = a.scan {
        cfg.model.encoder.scan = match s {
            ScanArg::Sequential => ScanMode::Sequential,
            ScanArg::Parallel => ScanMode::Parallel,
        };
    }
    cfg.model.encoder.bidirectional &= !a.no_bidirectional;
    cfg.model.encoder.input_mask &= !a.no_input_mask;
    cfg.model.prompt.use_prompt &= !a.no_prompt;
    if a.no_augment {
        cfg.augment = AugmentConfig::none();
    }
    cfg.validate()?;

    let samples = cfg.data.load(cfg.model.encoder.image_size)?;
    let (tr, val, test) = split(samples, &cfg.split)?;
    std::fs::create_dir_all(&a.out).map_err(|e| Error::io(&a.out, e))?;
    let cfg_path = a.out.join("config.json");
    std::fs::write(&cfg_path, serde_json::to_string_pretty(&cfg)?).map_err(|e| Error::io(&cfg_path, e))?;
    let mut trainer = Trainer::new(cfg)?;
    println!(
        "training {} parameters on {} samples ({} val, {} test held out)",
        trainer.model.count_params(),
        tr.len(),
        val.len(),
        test.len()
    );
    let quiet = a.quiet;
    let out = trainer.fit(&tr, &val, Some(&a.out), |r| {
        if r.split != "train" || !quiet {
            println!(
                "step {:6} epoch {:4} {:>10}  loss {:.4}  dice {:.4}  iou {:.4}",
                r.step, r.epoch, r.split, r.loss, r.dice, r.iou
            );
        }
    })?;
    println!("finished after {} steps; checkpoints in {}", out.steps, a.out.display());
    Ok(ExitCode::SUCCESS)
}

fn load_checkpoint(path: &Path, config: Option<&Path>) -> Result<(ProMamba, promamba::params::ParamStore<f32>, Checkpoint<f32>)> {
    let ck = checkpoint::load::<f32>(path)?;
    let model_cfg = match config {
        Some(p) => model_config_from(p)?,
        None => ck.header.model.clone(),
    };
    let model = ProMamba::new(&model_cfg)?;
    let mut params = model.init_params(&promamba::Rng::new(0));
    ck.clone().restore(&mut params)?;
    Ok((model, params, ck))
}

/// Accepts a full training configuration or a bare model configuration.
fn model_config_from(path: &Path) -> Result<ModelConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    match TrainConfig::from_json(&text) {
        Ok(c) => Ok(c.model),
        Err(first) => serde_json::from_str::<ModelConfig>(&text).map_err(|_| first),
    }
}

fn eval(a: EvalArgs) -> Result<ExitCode> {
    let (model, params, ck) = load_checkpoint(&a.checkpoint, a.config.as_deref())?;
    let train_cfg: Option<TrainConfig> = ck.header.meta.get("train").and_then(|t| serde_json::from_value(t.clone()).ok());
    let loss = train_cfg.as_ref().map(|c| c.loss.clone()).unwrap_or_default();
    let size = model.cfg.encoder.image_size;
    let datasets: Vec<(String, Vec<Sample>)> = if let Some(root) = &a.data {
        load_datasets(root, size)?
    } else if let Some(n) = a.synthetic {
        vec![("synthetic".into(), generate_synthetic(a.seed, n, size)?)]
    } else {
        let cfg = train_cfg.ok_or_else(|| Error::Config("checkpoint has no training configuration; pass --data or --synthetic".into()))?;
        let (tr, val, test) = split(cfg.data.load(size)?, &cfg.split)?;
        let part = match a.split {
            SplitArg::Train => vec![("train".to_string(), tr)],
            SplitArg::Val => vec![("val".to_string(), val)],
            SplitArg::Test => vec![("test".to_string(), test)],
            SplitArg::All => vec![("train".to_string(), tr), ("val".to_string(), val), ("test".to_string(), test)],
        };
        part.into_iter().filter(|(_, s)| !s.is_empty()).collect()
    };
    let refs: Vec<(String, &[Sample])> = datasets.iter().map(|(n, s)| (n.clone(), s.as_slice())).collect();
    let r = evaluate_samples(&model, &params, &refs, &loss, a.eval_jitter, a.seed)?;
    print!("{}", r.report.table());
    if let Some(p) = &a.json {
        let v = serde_json::json!({ "report": r.report, "per_image": r.per_image, "loss": r.loss });
        std::fs::write(p, serde_json::to_string_pretty(&v)?).map_err(|e| Error::io(p, e))?;
    }
    Ok(ExitCode::SUCCESS)
}

fn run_infer(a: InferArgs) -> Result<ExitCode> {
    if a.boxes.is_empty() {
        return Err(Error::EmptyPrompt(
            "at least one --box x0,y0,x1,y1 (normalized to [0,1]) is required; the model segments the region a box points at"
                .into(),
        ));
    }
    let (model, params, _) = load_checkpoint(&a.checkpoint, None)?;
    let image = load_image(&a.image)?;
    let prob = infer(&model, &params, &image, &a.boxes)?;
    let out: Tensor<f32> = if a.prob { prob } else { binarize(&prob, a.threshold) };
    write_image(&a.out, &from_planar(&out))?;
    let s = out.shape();
    println!("wrote {} ({}x{}, {} box prompt(s))", a.out.display(), s[2], s[1], a.boxes.len());
    Ok(ExitCode::SUCCESS)
}

fn synth(a: SynthArgs) -> Result<ExitCode> {
    let samples = generate_synthetic(a.seed, a.count, a.size)?;
    for s in &samples {
        save_sample(&a.out, s, !a.pnm)?;
    }
    println!("wrote {} samples of {}x{} to {}", samples.len(), a.size, a.size, a.out.display());
    Ok(ExitCode::SUCCESS)
}

fn gradcheck(seed: u64) -> Result<ExitCode> {
    let cases = gradient_suite(seed)?;
    let mut ok = true;
    for c in &cases {
        let pass = c.report.passed();
        ok &= pass;
        println!(
            "{:24} rel err {:9.2e}  tol {:.0e}  coords {:5}  {}",
            c.name,
            c.report.max_rel_err,
            c.report.tol,
            c.report.checked,
            if pass { "PASS" } else { "FAIL" }
        );
    }
    Ok(if ok { ExitCode::SUCCESS } else { ExitCode::FAILURE })
}

fn bench(a: BenchArgs) -> Result<ExitCode> {
    let run = || benchmark_scan(&a.lengths, a.d_inner, a.d_state, a.repeats, a.seed);
    let rows = match a.threads {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?
            .install(run),
        None => run(),
    };
    println!("threads: {}", a.threads.unwrap_or_else(rayon::current_num_threads));
    println!("{:>7} {:>14} {:>14} {:>8} {:>11}", "L", "seq ns/tok", "par ns/tok", "speedup", "divergence");
    for r in rows {
        println!(
            "{:>7} {:>14.1} {:>14.1} {:>8.2} {:>11.2e}",
            r.len, r.seq_ns_per_token, r.par_ns_per_token, r.speedup, r.divergence
        );
    }
    Ok(ExitCode::SUCCESS)
}

fn count(a: CountArgs) -> Result<ExitCode> {
    if a.table {
        for (d, depth) in [(192, 24), (384, 24), (768, 12), (768, 18), (768, 24)] {
            let n = count_params(&ModelConfig::full_scale(d, depth))?;
            println!("d_model {d:4} depth {depth:2}  {n:>12}  ({:.1}M)", n as f64 / 1e6);
        }
        return Ok(ExitCode::SUCCESS);
    }
    let cfg = match (&a.config, a.d_model, a.depth) {
        (Some(p), _, _) => model_config_from(p)?,
        (None, Some(d), Some(depth)) => ModelConfig::full_scale(d, depth),
        _ => ModelConfig::desk(),
    };
    println!("{}", count_params(&cfg)?);
    Ok(ExitCode::SUCCESS)
}
