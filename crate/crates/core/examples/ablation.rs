//! Parameter manifests of the encoder ablations: the backward scan and the
//! mask-injection convolutions appear only when enabled.

use promamba::model::{ModelConfig, ProMamba};

fn main() -> promamba::Result<()> {
    for bidirectional in [false, true] {
        for input_mask in [false, true] {
            let mut cfg = ModelConfig::desk();
            cfg.encoder.bidirectional = bidirectional;
            cfg.encoder.input_mask = input_mask;
            let m = ProMamba::new(&cfg)?;
            let names: Vec<&str> = m.registry.specs().iter().map(|s| s.name.as_str()).collect();
            let bwd = names.iter().filter(|n| n.contains(".bwd")).count();
            let inject = names.iter().filter(|n| n.contains("inject")).count();
            println!(
                "bidirectional {bidirectional:<5} input_mask {input_mask:<5} params {:>8} tensors {:>3} (bwd {bwd:>2}, inject {inject})",
                m.count_params(),
                names.len()
            );
        }
    }
    let mut cfg = ModelConfig::desk();
    cfg.prompt.use_prompt = false;
    println!("without prompt: {} params", ProMamba::new(&cfg)?.count_params());
    Ok(())
}
