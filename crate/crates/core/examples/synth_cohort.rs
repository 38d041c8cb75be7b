//! Writes a synthetic cohort and its ground truth as CSV.
//!
//! cargo run --release --example synth_cohort -- <out_dir> [spec_file]

use medgcn::data::{generate_synthetic, write_csv_bundle, write_truth_files, SyntheticSpec};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let out = args.next().ok_or("usage: synth_cohort <out_dir> [spec_file]")?;
    let spec = match args.next() {
        Some(p) => SyntheticSpec::parse(&std::fs::read_to_string(p)?)?,
        None => SyntheticSpec::default(),
    };
    let cohort = generate_synthetic(&spec)?;
    write_csv_bundle(&cohort.records, out.as_ref())?;
    write_truth_files(&cohort, out.as_ref())?;
    print!("{}", spec.to_text());
    print!("{}", cohort.graph.graph_stats());
    Ok(())
}
