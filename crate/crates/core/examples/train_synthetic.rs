//! Trains on the default synthetic cohort and compares against the two
//! baselines on the test split.
//!
//! cargo run --release --example train_synthetic -- [seed]

use std::time::Instant;

use medgcn::data::{generate_synthetic, SyntheticSpec};
use medgcn::graph::{SplitRatios, Subset};
use medgcn::pipeline::{evaluate, prepare};
use medgcn::train::{train_prepared, TrainConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let seed: u64 = std::env::args().nth(1).map_or(Ok(0), |s| s.parse())?;
    let cohort = generate_synthetic(&SyntheticSpec::default())?;
    print!("{}", cohort.graph.graph_stats());

    let prep = prepare(&cohort.graph, SplitRatios::default(), seed)?;
    let config = TrainConfig {
        seed,
        ..Default::default()
    };
    let start = Instant::now();
    let (model, report) = train_prepared(&prep, config)?;
    println!(
        "trained {} epochs in {:.1?}; best epoch {} (val lrap {:.4}, untrained {:.4})",
        report.final_epoch(),
        start.elapsed(),
        report.best_epoch,
        report.best_val_metric,
        report.initial_val_metric
    );
    let eval = evaluate(&model, &prep, Subset::Test, 2)?;
    print!("{}", eval.report().to_text());
    Ok(())
}
