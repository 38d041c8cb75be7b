//! Popularity and column-mean baselines on the test split of the default
//! synthetic cohort, without training anything.
//!
//! cargo run --release --example evaluate_baselines -- [seed]

use medgcn::data::{generate_synthetic, SyntheticSpec};
use medgcn::graph::{SplitRatios, Subset};
use medgcn::metrics::{baseline_column_mean, baseline_popularity, masked_mse, ranking_metrics};
use medgcn::pipeline::prepare;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let seed: u64 = std::env::args().nth(1).map_or(Ok(0), |s| s.parse())?;
    let cohort = generate_synthetic(&SyntheticSpec::default())?;
    let prep = prepare(&cohort.graph, SplitRatios::default(), seed)?;

    let test = prep.rows(Subset::Test);
    let pop = baseline_popularity(&prep.view.a_em, &prep.rows(Subset::Train), &test);
    let r = ranking_metrics(&pop, &prep.full.a_em.select_rows(&test), 2)?;
    println!("popularity: lrap={:.4} map@2={:.4} over {} encounters", r.lrap, r.map_at_k, r.n_rows_scored);

    let mask = prep.edge_mask(Subset::Test);
    let col = baseline_column_mean(&prep.view.a_el, &prep.view.m_el);
    let mse = masked_mse(&col, &prep.full.a_el, &mask)?;
    println!("column mean: mse={mse:.5} over {} lab values", mask.count_nonzero());
    // what a model must beat by the benchmark thresholds
    println!("targets: mse <= {:.5}, lrap >= {:.4}", 0.8 * mse, r.lrap + 0.05);
    Ok(())
}
