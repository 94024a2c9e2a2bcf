//! Finite-difference check of every differentiable operation.

use promamba::check::gradient_suite;

fn main() -> promamba::Result<()> {
    let seed = std::env::args().nth(1).map_or(0, |s| s.parse().expect("seed"));
    let cases = gradient_suite(seed)?;
    for c in &cases {
        let kind = if c.primitive { "op" } else { "module" };
        let status = if c.report.passed() { "ok" } else { "FAIL" };
        println!("{:<24} {:<6} max rel err {:.2e} {status}", c.name, kind, c.report.max_rel_err);
    }
    let failed = cases.iter().filter(|c| !c.report.passed()).count();
    println!("{} cases, {failed} failed", cases.len());
    Ok(())
}
