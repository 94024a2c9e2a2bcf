//! Parameter counts across model sizes, computed without allocating.

use promamba::model::{count_params, ModelConfig};

fn main() -> promamba::Result<()> {
    println!("{:>6} {:>6} {:>14}", "width", "depth", "params");
    println!("{:>6} {:>6} {:>14}  (desk)", 64, 4, count_params(&ModelConfig::desk())?);
    for (d, depth) in [(192, 24), (384, 24), (768, 12), (768, 18), (768, 24)] {
        println!("{d:>6} {depth:>6} {:>14}", count_params(&ModelConfig::full_scale(d, depth))?);
    }
    Ok(())
}
