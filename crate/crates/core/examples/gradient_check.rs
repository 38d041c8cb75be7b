//! Reverse-mode gradients against central differences on random programs.
//!
//! cargo run --release --example gradient_check -- [n_seeds]

use medgcn::tensor::gradcheck::program_away_from_kinks;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let n: u64 = std::env::args().nth(1).map_or(Ok(100), |s| s.parse())?;
    let mut worst: f64 = 0.0;
    println!("seed\tentries\tmax_rel_err\tops");
    for seed in 0..n {
        let c = program_away_from_kinks(seed, 1e-3)?.check(1e-5)?;
        worst = worst.max(c.max_rel_err);
        println!("{seed}\t{}\t{:.2e}\t{}", c.n_entries, c.max_rel_err, c.ops.join(" > "));
    }
    println!("worst relative error over {n} programs: {worst:.2e}");
    Ok(())
}
