//! Trains on a small cohort, then embeds an encounter that did not exist at
//! training time and ranks medications for it.
//!
//! cargo run --release --example inductive_recommend

use medgcn::data::{generate_synthetic, SyntheticSpec};
use medgcn::graph::{NodeType, SplitRatios};
use medgcn::metrics::ranking;
use medgcn::pipeline::prepare;
use medgcn::train::{train_prepared, TrainConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let spec = SyntheticSpec {
        n_patients: 120,
        n_encounters: 200,
        n_labs: 30,
        n_meds: 12,
        ..Default::default()
    };
    let cohort = generate_synthetic(&spec)?;
    let prep = prepare(&cohort.graph, SplitRatios::default(), 0)?;
    let config = TrainConfig {
        max_epochs: 300,
        ..Default::default()
    };
    let (model, report) = train_prepared(&prep, config)?;
    println!("trained {} epochs, best {}", report.final_epoch(), report.best_epoch);

    // a training encounter comes out the same either way
    let out = model.predict(&prep.view, &prep.features)?;
    let same = model.inductive_embed(&prep.view, &prep.features, 0)?;
    let gap = same
        .p
        .iter()
        .zip(out.p.row(0))
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    println!("encounter 0: largest difference to the full forward pass {gap:.2e}");

    // a new visit by the first patient, with two lab results copied from encounter 0
    let mut g = prep.view.clone();
    let patient = g.registry.id(NodeType::Patient, 0).unwrap_or("P001").to_string();
    let labs: Vec<(String, f64)> = g
        .observed_edges()
        .into_iter()
        .filter(|&(e, _)| e == 0)
        .take(2)
        .map(|(e, l)| (g.registry.id(NodeType::Lab, l).unwrap().to_string(), g.raw_el.get(e, l)))
        .collect();
    let e = g.add_encounter("NEW", &patient, &labs)?;
    let r = model.inductive_embed(&g, &prep.features, e)?;
    println!("NEW ({patient}, labs {labs:?})");
    for (rank, m) in ranking(&r.p).into_iter().take(5).enumerate() {
        println!("  {}. {} {:.4}", rank + 1, g.registry.id(NodeType::Medication, m).unwrap(), r.p[m]);
    }
    Ok(())
}
