//! Loads a CSV directory (the four-encounter toy graph by default) and
//! prints its matrices and statistics.
//!
//! cargo run --example build_and_stats -- [csv_dir]

use medgcn::data::load_csv_bundle;
use medgcn::graph::NodeType;
use medgcn::tensor::Matrix;

fn print_matrix(name: &str, m: &Matrix, rows: &[&str], cols: &[&str]) {
    println!("{name}\t{}", cols.join("\t"));
    for (i, r) in rows.iter().enumerate() {
        let cells: Vec<String> = m.row(i).iter().map(|v| format!("{v:.3}")).collect();
        println!("{r}\t{}", cells.join("\t"));
    }
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = std::env::args()
        .nth(1)
        .unwrap_or_else(|| concat!(env!("CARGO_MANIFEST_DIR"), "/tests/data/toy").into());
    let (g, counts) = load_csv_bundle(dir.as_ref())?;
    println!("{counts:?}");
    let ids = |t| g.registry.ids(t).collect::<Vec<_>>();
    let (e, p, l, m) = (
        ids(NodeType::Encounter),
        ids(NodeType::Patient),
        ids(NodeType::Lab),
        ids(NodeType::Medication),
    );
    if e.len() <= 20 {
        print_matrix("A_ExP", &g.a_ep, &e, &p);
        print_matrix("A_ExL", &g.a_el, &e, &l);
        print_matrix("M_ExL", &g.m_el, &e, &l);
        print_matrix("A_ExM", &g.a_em, &e, &m);
    }
    print!("{}", g.graph_stats());
    Ok(())
}
